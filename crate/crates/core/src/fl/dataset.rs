use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{FlError, Result};
use crate::numeric::stream_rng;

/// Labelled samples stored as a dense row-major feature matrix.
///
/// The same type serves as the source dataset and as a vehicle's local
/// dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<u8>,
    dim: usize,
    classes: usize,
    histogram: Vec<usize>,
}

pub type LocalDataset = Dataset;

impl Dataset {
    pub fn new(features: Vec<f32>, labels: Vec<u8>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(FlError::InvalidArgument(
                "feature dimension and class count must be positive".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(FlError::InvalidArgument(format!(
                "{} feature values do not fill {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        let mut histogram = vec![0; classes];
        for (i, &l) in labels.iter().enumerate() {
            let slot = histogram.get_mut(l as usize).ok_or_else(|| {
                FlError::InvalidArgument(format!("sample {i} has label {l} >= {classes}"))
            })?;
            *slot += 1;
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
            histogram,
        })
    }

    pub fn from_samples(samples: &[(Vec<f32>, u8)], classes: usize) -> Result<Self> {
        let dim = samples.first().map_or(1, |(x, _)| x.len());
        if samples.iter().any(|(x, _)| x.len() != dim) {
            return Err(FlError::InvalidArgument("ragged feature vectors".into()));
        }
        let features = samples.iter().flat_map(|(x, _)| x.iter().copied()).collect();
        let labels = samples.iter().map(|(_, y)| *y).collect();
        Self::new(features, labels, dim, classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_histogram(&self) -> &[usize] {
        &self.histogram
    }

    /// Copies the given rows, in the given order, into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(FlError::InvalidArgument(format!(
                    "sample index {i} out of range for {} samples",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dim, self.classes)
    }
}

/// Raw IDX image tensor `(count, rows, cols)` of bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    /// Pairs images with labels, scaling pixels to `[0, 1]`.
    pub fn into_dataset(self, labels: Vec<u8>, classes: usize, labels_path: &Path) -> Result<Dataset> {
        if labels.len() != self.count {
            return Err(FlError::Format {
                path: labels_path.to_path_buf(),
                offset: 4,
                reason: format!(
                    "{} labels cannot pair with {} images",
                    labels.len(),
                    self.count
                ),
            });
        }
        let features = self.pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Dataset::new(features, labels, self.rows * self.cols, classes)
    }
}

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| FlError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| FlError::Format {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            reason: "truncated header".into(),
        })
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    if bytes.len() < header + len {
        return Err(FlError::Format {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            reason: format!("expected {len} data bytes after header, found {}", bytes.len() - header),
        });
    }
    if bytes.len() > header + len {
        return Err(FlError::Format {
            path: path.to_path_buf(),
            offset: (header + len) as u64,
            reason: "trailing bytes after data".into(),
        });
    }
    Ok(&bytes[header..])
}

/// Reads a big-endian IDX3 unsigned-byte image file.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(FlError::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    if rows == 0 || cols == 0 {
        return Err(FlError::Format {
            path: path.to_path_buf(),
            offset: 8,
            reason: "zero image dimension".into(),
        });
    }
    let pixels = payload(&bytes, 16, count * rows * cols, path)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Reads a big-endian IDX1 unsigned-byte label file.
pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(FlError::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    Ok(payload(&bytes, 8, count, path)?.to_vec())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| FlError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    write_file(path.as_ref(), &out)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    write_file(path.as_ref(), &out)
}

/// Center spacing used by [`synthetic_blobs`], in units of the per-feature
/// noise standard deviation.
pub const DEFAULT_SEPARATION: f64 = 2.5;

/// Gaussian class clusters with fixed centers, so that train and test splits
/// can be drawn from the same distribution.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    classes: usize,
    dim: usize,
    centers: Vec<f32>,
}

impl SyntheticSource {
    /// Each class center is a random direction scaled to length `separation`.
    pub fn new(classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Self> {
        if classes == 0 || classes > 256 || dim == 0 || !(separation >= 0.0) {
            return Err(FlError::InvalidArgument(format!(
                "bad synthetic source: {classes} classes, dim {dim}, separation {separation}"
            )));
        }
        let mut rng = stream_rng(seed, &[0x6365_6e74]);
        let mut centers = Vec::with_capacity(classes * dim);
        for _ in 0..classes {
            let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            centers.extend(dir.iter().map(|v| (v / norm * separation) as f32));
        }
        Ok(Self {
            classes,
            dim,
            centers,
        })
    }

    /// `per_class` samples of every class, labels cycling `0, 1, .., classes-1`.
    pub fn sample(&self, per_class: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, &[0x7361_6d70]);
        let n = per_class * self.classes;
        let mut features = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % self.classes;
            let center = &self.centers[c * self.dim..(c + 1) * self.dim];
            features.extend(
                center
                    .iter()
                    .map(|&m| m + rng.sample::<f32, _>(StandardNormal)),
            );
            labels.push(c as u8);
        }
        Dataset::new(features, labels, self.dim, self.classes).expect("consistent construction")
    }
}

/// One Gaussian cluster per class, deterministic under `seed`.
pub fn synthetic_blobs(classes: usize, per_class: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(FlError::InvalidArgument("per_class must be positive".into()));
    }
    Ok(SyntheticSource::new(classes, dim, DEFAULT_SEPARATION, seed)?.sample(per_class, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let images = IdxImages {
            count: 4,
            rows: 28,
            cols: 28,
            pixels: (0..4 * 784).map(|i| (i % 256) as u8).collect(),
        };
        let ip = dir.join("images.idx");
        let lp = dir.join("labels.idx");
        write_idx_images(&ip, &images).unwrap();
        write_idx_labels(&lp, &[3, 1, 4, 1]).unwrap();
        (ip, lp)
    }

    #[test]
    fn reads_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        // header bytes are the documented big-endian layout
        let raw = fs::read(&ip).unwrap();
        assert_eq!(&raw[..8], &[0, 0, 8, 3, 0, 0, 0, 4]);
        let images = read_idx_images(&ip).unwrap();
        let labels = read_idx_labels(&lp).unwrap();
        let ds = images.into_dataset(labels, 10, &lp).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.dim(), 784);
        assert_eq!(ds.labels(), &[3, 1, 4, 1]);
        assert_eq!(ds.row(0)[255], 1.0);
        assert_eq!(ds.row(0)[0], 0.0);
        assert_eq!(ds.class_histogram()[1], 2);
    }

    #[test]
    fn empty_and_truncated_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty");
        fs::write(&empty, b"").unwrap();
        assert!(matches!(read_idx_images(&empty), Err(FlError::Format { offset: 0, .. })));
        assert!(matches!(read_idx_labels(&empty), Err(FlError::Format { .. })));

        let (ip, _) = fixture(dir.path());
        let mut raw = fs::read(&ip).unwrap();
        raw.truncate(100);
        let cut = dir.path().join("cut");
        fs::write(&cut, &raw).unwrap();
        match read_idx_images(&cut) {
            Err(FlError::Format { offset, .. }) => assert_eq!(offset, 100),
            other => panic!("{other:?}"),
        }
        raw[3] = 1;
        fs::write(&cut, &raw).unwrap();
        assert!(read_idx_images(&cut).unwrap_err().to_string().contains("bad magic"));
    }

    #[test]
    fn label_count_mismatch_fails_at_pairing() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, _) = fixture(dir.path());
        let lp = dir.path().join("three.idx");
        write_idx_labels(&lp, &[0, 1, 2]).unwrap();
        let images = read_idx_images(&ip).unwrap();
        let labels = read_idx_labels(&lp).unwrap();
        assert!(matches!(
            images.into_dataset(labels, 10, &lp),
            Err(FlError::Format { offset: 4, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error_naming_path() {
        let err = read_idx_labels("/definitely/not/here.idx").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.idx"));
    }

    #[test]
    fn synthetic_blobs_shape_and_determinism() {
        let a = synthetic_blobs(10, 20, 784, 7).unwrap();
        assert_eq!(a.len(), 200);
        assert!(a.class_histogram().iter().all(|&c| c == 20));
        let b = synthetic_blobs(10, 20, 784, 7).unwrap();
        let bits = |d: &Dataset| d.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = synthetic_blobs(10, 20, 784, 8).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![0.0; 4], vec![0, 1], 2, 2).is_ok());
        assert!(Dataset::new(vec![0.0; 4], vec![0, 2], 2, 2).is_err());
        assert!(Dataset::new(vec![0.0; 3], vec![0, 1], 2, 2).is_err());
        let ds = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![0, 1], 2, 2).unwrap();
        let sub = ds.subset(&[1, 1]).unwrap();
        assert_eq!(sub.features(), &[3.0, 4.0, 3.0, 4.0]);
        assert!(ds.subset(&[2]).is_err());
    }
}
