//! Datasets: MNIST IDX files and seeded synthetic generators.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{gaussian_matrix, matmul_nt, numerical_rank, Matrix, Rng, DEFAULT_RANK_TOL};

pub const DATA_DIR_ENV: &str = "IDINIT_DATA_DIR";
pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// `$IDINIT_DATA_DIR`, or `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

/// `input = raw_byte·scale − mean`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub mean: f64,
}

impl Normalization {
    pub fn apply(&self, raw: u8) -> f64 {
        raw as f64 * self.scale - self.mean
    }

    pub fn invert(&self, v: f64) -> f64 {
        (v + self.mean) / self.scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub labels: Option<Vec<usize>>,
    pub split: Split,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn regression(inputs: Matrix, targets: Matrix) -> Self {
        assert_eq!(inputs.rows(), targets.rows(), "inputs and targets must have equal row counts");
        Self {
            inputs,
            targets,
            labels: None,
            split: Split::Train,
            normalization: None,
        }
    }

    /// Classification data with one-hot targets.
    pub fn classification(inputs: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != inputs.rows() {
            return Err(shape_err(
                "Dataset::classification",
                format!("{} labels for {} inputs", labels.len(), inputs.rows()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self {
            targets: one_hot(&labels, classes),
            inputs,
            labels: Some(labels),
            split: Split::Train,
            normalization: None,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            inputs: self.inputs.slice_rows(0, n),
            targets: self.targets.slice_rows(0, n),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            split: self.split,
            normalization: self.normalization,
        }
    }

    /// Undoes the normalization, recovering the original bytes.
    pub fn raw_pixels(&self) -> Option<Vec<u8>> {
        let norm = self.normalization?;
        Some(
            self.inputs
                .data()
                .iter()
                .map(|&v| norm.invert(v).round().clamp(0.0, 255.0) as u8)
                .collect(),
        )
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (r, &l) in labels.iter().enumerate() {
        m[(r, l)] = 1.0;
    }
    m
}

/// Parsed IDX image file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<u32> {
    let raw = bytes.get(offset..offset + 4).ok_or_else(|| Error::Format {
        field,
        offset: offset as u64,
        detail: format!("file ends after {} bytes", bytes.len()),
    })?;
    Ok(u32::from_be_bytes(raw.try_into().expect("4-byte slice")))
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != want {
        return Err(Error::Format {
            field: "magic",
            offset: 0,
            detail: format!("wrong magic 0x{magic:08x}, expected 0x{want:08x}"),
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(Error::Format {
            field: "pixels",
            offset: 16,
            detail: format!("{count} images of {rows}x{cols} need {need} bytes, found {}", body.len()),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4, "label count")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format {
            field: "labels",
            offset: 8,
            detail: format!("{count} labels declared, found {} bytes", body.len()),
        });
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Global mean of `pixel/255` over a whole image file.
pub fn pixel_mean(images: &IdxImages) -> f64 {
    let total: u64 = images.pixels.iter().map(|&p| p as u64).sum();
    total as f64 / 255.0 / images.pixels.len().max(1) as f64
}

/// Builds a dataset from parsed IDX data. Pixels become `p/255 − mean`;
/// `mean = None` uses this file's own global mean.
pub fn mnist_dataset(images: &IdxImages, labels: &[u8], mean: Option<f64>) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::Format {
            field: "label count",
            offset: 4,
            detail: format!("{} images but {} labels", images.count, labels.len()),
        });
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::Format {
            field: "labels",
            offset: 8 + i as u64,
            detail: format!("label {l} is not a digit"),
        });
    }
    let norm = Normalization {
        scale: 1.0 / 255.0,
        mean: mean.unwrap_or_else(|| pixel_mean(images)),
    };
    let dim = images.rows * images.cols;
    let data = images.pixels.iter().map(|&p| norm.apply(p)).collect();
    let inputs = Matrix::new(images.count, dim, data)?;
    let mut ds = Dataset::classification(inputs, labels.iter().map(|&l| l as usize).collect(), 10)?;
    ds.normalization = Some(norm);
    Ok(ds)
}

/// Loads an image/label IDX pair, normalized with the file's own mean.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = parse_idx_images(&read_file(images_path)?)?;
    let labels = parse_idx_labels(&read_file(labels_path)?)?;
    mnist_dataset(&images, &labels, None)
}

/// Train and test splits from `dir`. Both are normalized with the mean of the
/// full training file; `train_limit` then keeps the first samples only.
pub fn load_mnist(dir: &Path, train_limit: Option<usize>) -> Result<(Dataset, Dataset)> {
    let train_images = parse_idx_images(&read_file(&dir.join(MNIST_TRAIN_IMAGES))?)?;
    let train_labels = parse_idx_labels(&read_file(&dir.join(MNIST_TRAIN_LABELS))?)?;
    let mean = pixel_mean(&train_images);
    let mut train = mnist_dataset(&train_images, &train_labels, Some(mean))?;
    if let Some(n) = train_limit {
        train = train.head(n);
    }
    let test_images = parse_idx_images(&read_file(&dir.join(MNIST_TEST_IMAGES))?)?;
    let test_labels = parse_idx_labels(&read_file(&dir.join(MNIST_TEST_LABELS))?)?;
    let test = mnist_dataset(&test_images, &test_labels, Some(mean))?.with_split(Split::Test);
    Ok((train, test))
}

/// `n` samples of `x ~ N(0, I_d)` with `y = map·x + ξ`, `ξ ~ N(0, noise_std²)`.
pub fn synth_linear_map(n: usize, map: &Matrix, noise_std: f64, seed: u64) -> Dataset {
    let mut rng = Rng::new(seed);
    let x = gaussian_matrix(&mut rng, n, map.cols(), 0.0, 1.0);
    let mut y = matmul_nt(&x, map).expect("map columns match sample dimension");
    if noise_std > 0.0 {
        let noise = gaussian_matrix(&mut rng, n, map.rows(), 0.0, noise_std);
        y.axpy(1.0, &noise).expect("same shape");
    }
    Dataset::regression(x, y)
}

/// `n` linearly independent Gaussian vectors of dimension `d`, one per row.
pub fn independent_batch(d: usize, n: usize, rng: &mut Rng) -> Result<Matrix> {
    independent_batch_with(d, n, rng, |_, m| m)
}

/// [`independent_batch`] with a hook that may alter each draw before the rank
/// check; `attempt` counts from 0. Used to exercise the re-draw path.
pub fn independent_batch_with(
    d: usize,
    n: usize,
    rng: &mut Rng,
    mut tamper: impl FnMut(usize, Matrix) -> Matrix,
) -> Result<Matrix> {
    if n == 0 || n > d {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= n <= d for independent samples, got n={n}, d={d}"
        )));
    }
    for attempt in 0..64 {
        let m = tamper(attempt, gaussian_matrix(rng, n, d, 0.0, 1.0));
        if numerical_rank(&m, DEFAULT_RANK_TOL) == n {
            return Ok(m);
        }
    }
    Err(Error::InvalidArgument("could not draw an independent batch in 64 attempts".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (IdxImages, Vec<u8>) {
        let mut pixels = vec![0u8; 2 * 3 * 2];
        pixels[0] = 255;
        pixels[7] = 17;
        (
            IdxImages {
                count: 2,
                rows: 3,
                cols: 2,
                pixels,
            },
            vec![4, 9],
        )
    }

    #[test]
    fn idx_roundtrip_and_scaling() {
        let (images, labels) = fixture();
        let bytes = encode_idx_images(&images);
        let parsed = parse_idx_images(&bytes).unwrap();
        assert_eq!(parsed, images);
        assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);

        let ds = mnist_dataset(&parsed, &labels, Some(0.0)).unwrap();
        assert_eq!(ds.inputs[(0, 0)], 1.0);
        assert_eq!(ds.targets[(1, 9)], 1.0);
        assert_eq!(ds.raw_pixels().unwrap(), images.pixels);

        let centred = mnist_dataset(&parsed, &labels, None).unwrap();
        assert!(centred.inputs.mean().abs() < 1e-15);
        assert_eq!(centred.raw_pixels().unwrap(), images.pixels);
    }

    #[test]
    fn idx_errors_name_field_and_offset() {
        let (images, labels) = fixture();
        let wrong = encode_idx_images(&images);
        match parse_idx_labels(&wrong) {
            Err(Error::Format { field: "magic", offset: 0, detail }) => assert!(detail.contains("0x00000803")),
            other => panic!("unexpected {other:?}"),
        }
        let bytes = encode_idx_images(&images);
        assert!(matches!(
            parse_idx_images(&bytes[..bytes.len() - 1]),
            Err(Error::Format { field: "pixels", offset: 16, .. })
        ));
        assert!(matches!(
            parse_idx_images(&bytes[..10]),
            Err(Error::Format { field: "row count", offset: 8, .. })
        ));
        assert!(matches!(
            mnist_dataset(&images, &labels[..1], None),
            Err(Error::Format { field: "label count", .. })
        ));
    }

    #[test]
    fn synthetic_map() {
        let d = 6;
        let x = synth_linear_map(50, &Matrix::identity(d), 0.0, 3);
        assert_eq!(x.inputs, x.targets);
        assert_eq!(synth_linear_map(50, &Matrix::identity(d), 0.1, 3), synth_linear_map(50, &Matrix::identity(d), 0.1, 3));
    }

    #[test]
    fn noise_variance_identity() {
        let (n, d, sd) = (4000, 10, 1e-2);
        let ds = synth_linear_map(n, &Matrix::identity(d).scale(-1.0), sd, 11);
        let resid = ds.targets.add(&ds.inputs).unwrap();
        let sq: Vec<f64> = resid.data().iter().map(|v| v * v).collect();
        let mean = sq.iter().sum::<f64>() / sq.len() as f64;
        // Var(ξ²) = 2σ⁴ for Gaussian ξ.
        let se = (2.0 * sd.powi(4) / sq.len() as f64).sqrt();
        assert!((mean - sd * sd).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn independent_batches() {
        let mut rng = Rng::new(0);
        let b = independent_batch(8, 8, &mut rng).unwrap();
        assert_eq!(numerical_rank(&b, DEFAULT_RANK_TOL), 8);
        let one = independent_batch(5, 1, &mut rng).unwrap();
        assert!(one.max_abs() > 0.0);
        assert!(independent_batch(3, 4, &mut rng).is_err());

        let mut attempts = Vec::new();
        let b = independent_batch_with(6, 4, &mut rng, |a, mut m| {
            attempts.push(a);
            if a == 0 {
                let first = m.row(0).to_vec();
                m.row_mut(1).copy_from_slice(&first);
            }
            m
        })
        .unwrap();
        assert_eq!(attempts, [0, 1]);
        assert_eq!(numerical_rank(&b, DEFAULT_RANK_TOL), 4);
    }
}
