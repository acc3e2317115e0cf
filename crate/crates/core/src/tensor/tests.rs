use super::*;
use crate::error::Error;
use crate::rng::Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn matmul_identity_and_hand_values() {
    let mut tape = Tape::new();
    let i2 = tape.constant(Tensor::identity(2).unwrap());
    let m = tape.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
    let p = tape.matmul(i2, m).unwrap();
    assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

    let a = tape.constant(Tensor::from_rows(&[[1.0, 2.0]]).unwrap());
    let b = tape.constant(Tensor::from_rows(&[[3.0], [4.0]]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).shape(), &[1, 1]);
    assert_eq!(tape.value(c).data(), &[11.0]);
}

#[test]
fn matmul_shape_mismatch() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]).unwrap());
    let b = tape.constant(Tensor::zeros(&[2, 3]).unwrap());
    assert!(matches!(tape.matmul(a, b), Err(Error::Shape(_))));
}

#[test]
fn matmul_sum_gradient_is_broadcast_column_sums() {
    let mut rng = Rng::new(1);
    let a0 = rng.gaussian_tensor(&[3, 4]).unwrap();
    let b0 = rng.gaussian_tensor(&[4, 5]).unwrap();
    let mut tape = Tape::new();
    let a = tape.leaf(a0.clone());
    let b = tape.constant(b0.clone());
    let p = tape.matmul(a, b).unwrap();
    let s = tape.sum(p);
    let g = tape.backward(s).unwrap().wrt(a);
    // d/dA_ik Σ_ij (AB)_ij = Σ_j B_kj
    for i in 0..3 {
        for k in 0..4 {
            let want: f64 = b0.row(k).iter().sum();
            assert!(close(g.row(i)[k], want, 1e-12));
        }
    }
    let b_const = b0.clone();
    let err = grad_check(
        move |t, x| {
            let b = t.constant(b_const.clone());
            let p = t.matmul(x, b)?;
            Ok(t.sum(p))
        },
        &a0,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn l2_normalize_examples() {
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::vector(vec![3.0, 4.0]).unwrap());
    let n = tape.l2_normalize(v).unwrap();
    assert!(close(tape.value(n).data()[0], 0.6, 1e-15));
    assert!(close(tape.value(n).data()[1], 0.8, 1e-15));

    let u = tape.constant(Tensor::vector(vec![1.0, 0.0, 0.0]).unwrap());
    let nu = tape.l2_normalize(u).unwrap();
    assert_eq!(tape.value(nu).data(), &[1.0, 0.0, 0.0]);

    let z = tape.constant(Tensor::vector(vec![0.0, 0.0]).unwrap());
    assert!(matches!(tape.l2_normalize(z), Err(Error::Degenerate(_))));
}

#[test]
fn l2_normalize_unit_and_idempotent() {
    let mut rng = Rng::new(9);
    let x = rng.gaussian_tensor(&[20, 7]).unwrap();
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let n1 = tape.l2_normalize(v).unwrap();
    let n2 = tape.l2_normalize(n1).unwrap();
    let t1 = tape.value(n1).clone();
    for i in 0..t1.rows() {
        let norm: f64 = t1.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(close(norm, 1.0, 1e-12));
    }
    assert!(t1.max_abs_diff(tape.value(n2)) < 1e-12);
}

#[test]
fn logsumexp_examples() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::from_rows(&[[0.0, 0.0]]).unwrap());
    let la = tape.logsumexp_rows(a).unwrap();
    assert!(close(tape.value(la).data()[0], 2f64.ln(), 1e-15));

    let b = tape.constant(Tensor::from_rows(&[[5.0]]).unwrap());
    let lb = tape.logsumexp_rows(b).unwrap();
    assert_eq!(tape.value(lb).data()[0], 5.0);

    let c = tape.constant(Tensor::from_rows(&[[1000.0, 1000.0]]).unwrap());
    let lc = tape.logsumexp_rows(c).unwrap();
    let v = tape.value(lc).data()[0];
    assert!(v.is_finite());
    assert!(close(v, 1000.0 + 2f64.ln(), 1e-12));
}

#[test]
fn backward_scalar_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0));
    let unused = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
    let y = tape.square(x);
    let g = tape.backward(y).unwrap();
    assert_eq!(g.wrt(x).item().unwrap(), 6.0);
    assert_eq!(g.wrt(unused).data(), &[0.0, 0.0]);
    assert!(!g.touched(unused));
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
    let y = tape.square(x);
    assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
}

#[test]
fn independent_subgraphs_concatenate() {
    let mut rng = Rng::new(4);
    let a0 = rng.gaussian_tensor(&[3, 2]).unwrap();
    let b0 = rng.gaussian_tensor(&[4]).unwrap();

    let grad_alone = |which: usize| {
        let mut tape = Tape::new();
        let a = tape.leaf(a0.clone());
        let b = tape.leaf(b0.clone());
        let fa = {
            let t = tape.tanh(a);
            tape.sum(t)
        };
        let fb = {
            let e = tape.exp(b);
            tape.mean(e)
        };
        let (loss, var) = match which {
            0 => (fa, a),
            1 => (fb, b),
            _ => unreachable!(),
        };
        tape.backward(loss).unwrap().wrt(var)
    };

    let mut tape = Tape::new();
    let a = tape.leaf(a0.clone());
    let b = tape.leaf(b0.clone());
    let t = tape.tanh(a);
    let fa = tape.sum(t);
    let e = tape.exp(b);
    let fb = tape.mean(e);
    let total = tape.add(fa, fb).unwrap();
    let g = tape.backward(total).unwrap();
    assert_eq!(g.wrt(a), grad_alone(0));
    assert_eq!(g.wrt(b), grad_alone(1));
}

#[test]
fn grad_check_exact_quadratic() {
    let p = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
    let err = grad_check(
        |t, x| {
            let s = t.square(x);
            Ok(t.sum(s))
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn grad_check_normalize_dot() {
    let u = Tensor::vector(vec![0.3, -1.2, 0.7, 2.0]).unwrap();
    let p = Tensor::vector(vec![1.5, 0.2, -0.4, 0.9]).unwrap();
    let err = grad_check(
        move |t, x| {
            let n = t.l2_normalize(x)?;
            let c = t.constant(u.clone());
            let d = t.mul(n, c)?;
            Ok(t.sum(d))
        },
        &p,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn grad_check_flags_wrong_gradient() {
    let p = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
    let value = |x: &Tensor| Ok(x.data().iter().map(|v| v * v).sum());
    // off by a factor of two
    let wrong = |x: &Tensor| Ok(x.map(|v| v));
    let err = grad_check_with(value, wrong, &p, 1e-5).unwrap();
    assert!(err > 1e-2, "{err}");
}

type Probe = Box<dyn Fn(&mut Tape, Var, &Tensor) -> crate::Result<Var>>;

/// Reduces `out` to a scalar with fixed random weights so every entry matters.
fn weighted(t: &mut Tape, out: Var, w: &Tensor) -> crate::Result<Var> {
    let shape = t.value(out).shape().to_vec();
    let wv = t.constant(w.reshaped(shape)?);
    let m = t.mul(out, wv)?;
    Ok(t.sum(m))
}

fn primitive_probes() -> Vec<(&'static str, Vec<usize>, Probe)> {
    // `aux` is a second random tensor of the same shape as the point.
    vec![
        ("add", vec![3, 4], Box::new(|t, x, aux| {
            let c = t.constant(aux.clone());
            t.add(x, c)
        })),
        ("sub", vec![3, 4], Box::new(|t, x, aux| {
            let c = t.constant(aux.clone());
            t.sub(c, x)
        })),
        ("mul", vec![3, 4], Box::new(|t, x, aux| {
            let c = t.constant(aux.clone());
            t.mul(x, c)
        })),
        ("mul_self", vec![3, 4], Box::new(|t, x, _| t.mul(x, x))),
        ("scale", vec![3, 4], Box::new(|t, x, _| Ok(t.scale(x, -2.5)))),
        ("add_scalar", vec![3, 4], Box::new(|t, x, _| Ok(t.add_scalar(x, 0.7)))),
        ("add_row_matrix", vec![3, 4], Box::new(|t, x, aux| {
            let r = t.constant(Tensor::vector(aux.row(0).to_vec())?);
            t.add_row(x, r)
        })),
        ("add_row_bias", vec![4], Box::new(|t, x, _| {
            let m = t.constant(Tensor::matrix(3, 4, (0..12).map(|i| i as f64 * 0.1).collect())?);
            t.add_row(m, x)
        })),
        ("matmul_lhs", vec![3, 4], Box::new(|t, x, aux| {
            let b = t.constant(aux.transpose()?);
            t.matmul(x, b)
        })),
        ("matmul_rhs", vec![3, 4], Box::new(|t, x, aux| {
            let a = t.constant(aux.transpose()?);
            t.matmul(a, x)
        })),
        ("transpose", vec![3, 4], Box::new(|t, x, _| t.transpose(x))),
        ("relu", vec![3, 4], Box::new(|t, x, _| Ok(t.relu(x)))),
        ("tanh", vec![3, 4], Box::new(|t, x, _| Ok(t.tanh(x)))),
        ("exp", vec![3, 4], Box::new(|t, x, _| Ok(t.exp(x)))),
        ("ln", vec![3, 4], Box::new(|t, x, _| {
            let s = t.square(x);
            let p = t.add_scalar(s, 0.5);
            Ok(t.ln(p))
        })),
        ("recip", vec![3, 4], Box::new(|t, x, _| {
            let s = t.square(x);
            let p = t.add_scalar(s, 0.5);
            Ok(t.recip(p))
        })),
        ("square", vec![3, 4], Box::new(|t, x, _| Ok(t.square(x)))),
        ("l2_normalize", vec![3, 4], Box::new(|t, x, _| t.l2_normalize(x))),
        ("logsumexp_rows", vec![3, 4], Box::new(|t, x, _| t.logsumexp_rows(x))),
        ("sum", vec![3, 4], Box::new(|t, x, _| Ok(t.sum(x)))),
        ("mean", vec![3, 4], Box::new(|t, x, _| Ok(t.mean(x)))),
        ("row_sum", vec![3, 4], Box::new(|t, x, _| t.row_sum(x))),
        ("concat_cols", vec![3, 4], Box::new(|t, x, aux| {
            let c = t.constant(aux.clone());
            let s = t.square(x);
            t.concat_cols(s, c)
        })),
        ("slice_cols", vec![3, 4], Box::new(|t, x, _| t.slice_cols(x, 1, 3))),
        ("reshape", vec![3, 4], Box::new(|t, x, _| t.reshape(x, vec![2, 6]))),
        ("sort_cols", vec![5, 3], Box::new(|t, x, _| t.sort_cols(x))),
        ("sq_dists_lhs", vec![3, 4], Box::new(|t, x, aux| {
            let y = t.constant(aux.clone());
            t.sq_dists(x, y)
        })),
        ("sq_dists_rhs", vec![3, 4], Box::new(|t, x, aux| {
            let y = t.constant(aux.clone());
            t.sq_dists(y, x)
        })),
        ("sq_dists_self", vec![3, 4], Box::new(|t, x, _| t.sq_dists(x, x))),
    ]
}

#[test]
fn every_primitive_passes_grad_check_over_ten_seeds() {
    for (name, shape, probe) in primitive_probes() {
        for seed in 0..10u64 {
            let mut rng = Rng::stream(seed, &[42]);
            let point = rng.gaussian_tensor(&shape).unwrap();
            let aux = rng.gaussian_tensor(&shape).unwrap();
            let mut probe_tape = Tape::new();
            let x = probe_tape.leaf(point.clone());
            let out = probe(&mut probe_tape, x, &aux).unwrap();
            let n_out = probe_tape.value(out).len();
            let w = rng.gaussian_tensor(&[n_out]).unwrap();
            let err = grad_check(
                |t, x| {
                    let out = probe(t, x, &aux)?;
                    weighted(t, out, &w)
                },
                &point,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{name} seed {seed}: rel err {err}");
        }
    }
}
