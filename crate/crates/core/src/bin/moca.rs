use std::process::ExitCode;

fn main() -> ExitCode {
    moca::cli::main()
}
