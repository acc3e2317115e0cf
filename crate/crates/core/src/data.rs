//! Datasets: the Gaussian synthetic set, IDX (MNIST) files, and seeded minibatching.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Tensor,
    pub labels: Option<Vec<u8>>,
    /// How raw values were mapped to `features`.
    pub normalization: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Tensor, labels: Option<Vec<u8>>) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::shape(format!(
                "dataset features must be a matrix, got {:?}",
                features.shape()
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("dataset features".into()));
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::contract(format!(
                    "{} labels for {} samples",
                    l.len(),
                    features.rows()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            normalization: "none".into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// The first `n` samples (all of them if `n ≥ len`).
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        Ok(Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(&idx)?,
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            normalization: self.normalization.clone(),
        })
    }
}

/// `n_samples × dim` i.i.d. standard Gaussian features.
pub fn synth_dataset(n_samples: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 || dim == 0 {
        return Err(Error::config("synthetic dataset needs positive sizes"));
    }
    let features = Rng::stream(seed, &[stream::SYNTH]).gaussian_tensor(&[n_samples, dim])?;
    let mut ds = Dataset::new("synth", features, None)?;
    ds.normalization = "standard-gaussian".into();
    Ok(ds)
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(offset as u64, "truncated IDX header"))
}

fn check_payload(bytes: &[u8], header: usize, expected: usize) -> Result<()> {
    let actual = bytes.len() - header;
    if actual < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated IDX payload: expected {expected} bytes, found {actual}"),
        ));
    }
    if actual > expected {
        return Err(Error::format(
            (header + expected) as u64,
            format!("{} unexpected trailing bytes", actual - expected),
        ));
    }
    Ok(())
}

/// Parses an unsigned-byte 3-d IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(0, format!("bad IDX image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    check_payload(bytes, 16, n * rows * cols)?;
    Ok((n, rows, cols, bytes[16..].to_vec()))
}

/// Parses an unsigned-byte 1-d IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(0, format!("bad IDX label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    check_payload(bytes, 8, n)?;
    Ok(bytes[8..].to_vec())
}

/// Loads images scaled to `[0, 1]`, flattened to `N × (rows·cols)`. Files may be gzip-compressed.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    let (n, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(path.as_ref())?)?;
    if n == 0 || rows * cols == 0 {
        return Err(Error::format(4, "IDX image file holds no pixels"));
    }
    Tensor::matrix(n, rows * cols, pixels.iter().map(|&p| p as f64 / 255.0).collect())
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let features = load_idx_images(images_path.as_ref())?;
    let labels = parse_idx_labels(&read_maybe_gz(labels_path.as_ref())?)?;
    if labels.len() != features.rows() {
        return Err(Error::format(
            4,
            format!(
                "{} images but {} labels",
                features.rows(),
                labels.len()
            ),
        ));
    }
    let name = images_path
        .as_ref()
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    let mut ds = Dataset::new(name, features, Some(labels))?;
    ds.normalization = "pixel/255".into();
    Ok(ds)
}

/// Loads `{train,test}-{images-idx3,labels-idx1}-ubyte[.gz]` from a directory.
pub fn load_mnist_dir(dir: impl AsRef<Path>, split: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    let pick = |stem: String| -> Result<std::path::PathBuf> {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            return Ok(gz);
        }
        let plain = dir.join(&stem);
        if plain.exists() {
            return Ok(plain);
        }
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", plain.display()),
        )))
    };
    let mut ds = load_idx(
        pick(format!("{split}-images-idx3-ubyte"))?,
        pick(format!("{split}-labels-idx1-ubyte"))?,
    )?;
    ds.name = format!("mnist-{split}");
    Ok(ds)
}

pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != n * rows * cols {
        return Err(Error::shape("pixel count does not match the IDX dimensions"));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Writes `bytes` to `path`, gzip-compressed when the path ends in `.gz`.
pub fn write_idx_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(fs::File::create(path)?, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

/// Index sets of the `⌊N/B⌋` full batches of one epoch, remainder dropped.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::config(format!(
            "batch size {batch_size} must be in 1..={n}"
        )));
    }
    let perm = Rng::stream(seed, &[stream::SHUFFLE, epoch]).permutation(n);
    Ok(perm
        .chunks_exact(batch_size)
        .map(|c| c.to_vec())
        .collect())
}

/// Iterator over the shuffled minibatches of one epoch.
pub struct Batches<'a> {
    features: &'a Tensor,
    order: std::vec::IntoIter<Vec<usize>>,
}

impl Iterator for Batches<'_> {
    type Item = Tensor;

    fn next(&mut self) -> Option<Tensor> {
        let idx = self.order.next()?;
        Some(self.features.select_rows(&idx).expect("indices in range"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.order.size_hint()
    }
}

impl ExactSizeIterator for Batches<'_> {}

pub fn batches(dataset: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Result<Batches<'_>> {
    let order = batch_indices(dataset.len(), batch_size, seed, epoch)?;
    Ok(Batches {
        features: &dataset.features,
        order: order.into_iter(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_shape_and_variance() {
        let ds = synth_dataset(1000, 100, 7).unwrap();
        assert_eq!(ds.features.shape(), &[1000, 100]);
        assert_eq!(ds, synth_dataset(1000, 100, 7).unwrap());
        let x = &ds.features;
        for j in 0..100 {
            let col: Vec<f64> = (0..1000).map(|i| x.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / 1000.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 999.0;
            assert!((0.8..=1.2).contains(&var), "column {j}: {var}");
        }
    }

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let img = encode_idx_images(2, 2, 2, &[0, 255, 51, 102, 1, 2, 3, 4]).unwrap();
        (img, encode_idx_labels(&[7, 3]))
    }

    #[test]
    fn idx_fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture();
        let ip = dir.path().join("i.gz");
        let lp = dir.path().join("l");
        write_idx_file(&ip, &img).unwrap();
        write_idx_file(&lp, &lab).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.features.shape(), &[2, 4]);
        assert_eq!(ds.features.row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.features.row(1)[3], 4.0 / 255.0);
        assert_eq!(ds.labels, Some(vec![7, 3]));
    }

    #[test]
    fn idx_errors() {
        let (mut img, lab) = fixture();
        img[3] = 0x02;
        assert!(matches!(parse_idx_images(&img), Err(Error::Format { offset: 0, .. })));

        let (img, _) = fixture();
        assert!(matches!(
            parse_idx_images(&img[..img.len() - 1]),
            Err(Error::Format { .. })
        ));
        let mut long = img.clone();
        long.push(0);
        assert!(parse_idx_images(&long).is_err());
        assert!(parse_idx_labels(&lab[..9]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        write_idx_file(&ip, &img).unwrap();
        write_idx_file(&lp, &encode_idx_labels(&[1, 2, 3])).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format { .. })));
    }

    #[test]
    fn batching_drops_remainder() {
        let order = batch_indices(10, 3, 5, 0).unwrap();
        assert_eq!(order.len(), 3);
        let perm = Rng::stream(5, &[stream::SHUFFLE, 0]).permutation(10);
        let flat: Vec<usize> = order.concat();
        assert_eq!(flat, perm[..9]);
        assert_eq!(order, batch_indices(10, 3, 5, 0).unwrap());
        assert_ne!(order, batch_indices(10, 3, 5, 1).unwrap());
        assert!(batch_indices(3, 4, 0, 0).is_err());
    }

    #[test]
    fn batches_select_rows() {
        let x = Tensor::matrix(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let ds = Dataset::new("t", x, None).unwrap();
        let order = batch_indices(5, 2, 1, 3).unwrap();
        let got: Vec<Tensor> = batches(&ds, 2, 1, 3).unwrap().collect();
        assert_eq!(got.len(), 2);
        for (b, idx) in got.iter().zip(&order) {
            let want: Vec<f64> = idx.iter().map(|&i| i as f64).collect();
            assert_eq!(b.data(), &want[..]);
        }
    }
}
