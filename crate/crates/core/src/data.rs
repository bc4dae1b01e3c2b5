//! Datasets: MNIST-style IDX files, one-hot labels, and synthetic Gaussian
//! clusters.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, IdxError, Result};
use crate::tensor::{Matrix, Rng};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Class count of MNIST label files.
pub const IDX_CLASSES: usize = 10;

/// Features plus one-hot labels, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::shape("dataset", x.shape(), y.shape()));
        }
        Ok(Dataset {
            x,
            y,
            class_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn features(&self) -> usize {
        self.x.cols()
    }

    pub fn classes(&self) -> usize {
        self.y.cols()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.y.argmax_rows()
    }

    /// Class names, falling back to the class indices.
    pub fn class_labels(&self) -> Vec<String> {
        self.class_names
            .clone()
            .unwrap_or_else(|| (0..self.classes()).map(|k| k.to_string()).collect())
    }

    /// The first `n` samples (all of them if `n` exceeds the size).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: self.y.select_rows(indices),
            class_names: self.class_names.clone(),
        }
    }

    /// Random disjoint split; the second part holds `round(len * fraction)`
    /// samples. Both parts keep their original relative order.
    pub fn split(&self, fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::contract(format!(
                "split fraction {fraction} outside [0, 1]"
            )));
        }
        let n = self.len();
        let held = ((n as f64) * fraction).round() as usize;
        let perm = rng.permutation(n);
        let mut second: Vec<usize> = perm[..held].to_vec();
        let mut first: Vec<usize> = perm[held..].to_vec();
        first.sort_unstable();
        second.sort_unstable();
        Ok((self.select(&first), self.select(&second)))
    }

    /// Writes `x0..x{D-1},label` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.features()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, label) in self.x.row_iter().zip(self.labels()) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// One-hot rows for integer labels.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::contract(format!(
                "label {l} at index {i} is out of range for {k} classes"
            )));
        }
        m.set(i, l, 1.0);
    }
    Ok(m)
}

struct IdxImages {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    count: usize,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    let chunk = bytes.get(at..at + 4).ok_or_else(|| IdxError::Truncated {
        path: path.to_owned(),
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(IdxError::BadMagic {
            path: path.to_owned(),
            expected,
            found,
        }
        .into());
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            path: path.to_owned(),
            expected,
            found: bytes.len(),
        }
        .into());
    }
    Ok(())
}

fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    check_magic(&bytes, IDX_IMAGES_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let size = count * rows * cols;
    check_len(&bytes, 16 + size, path)?;
    Ok(IdxImages {
        rows,
        cols,
        count,
        pixels: bytes[16..16 + size].to_vec(),
    })
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    check_magic(&bytes, IDX_LABELS_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    check_len(&bytes, 8 + count, path)?;
    Ok(bytes[8..8 + count].to_vec())
}

/// Loads an IDX image/label pair, scaling pixels to `[0, 1]` and one-hot
/// encoding labels over 10 classes.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        }
        .into());
    }
    let dim = images.rows * images.cols;
    let x = Matrix::from_vec(
        images.count,
        dim,
        images
            .pixels
            .iter()
            .map(|&p| f64::from(p) / 255.0)
            .collect(),
    )?;
    let mut y = Matrix::zeros(labels.len(), IDX_CLASSES);
    for (i, &l) in labels.iter().enumerate() {
        if usize::from(l) >= IDX_CLASSES {
            return Err(IdxError::LabelOutOfRange {
                path: labels_path.to_owned(),
                index: i,
                label: l,
                classes: IDX_CLASSES,
            }
            .into());
        }
        y.set(i, usize::from(l), 1.0);
    }
    Ok(Dataset {
        x,
        y,
        class_names: None,
    })
}

/// Writes a dataset as an IDX pair with `image_rows x image_cols` images.
///
/// Pixels are stored as `round(255 * x)`, so datasets loaded by [`load_idx`]
/// round-trip exactly.
pub fn write_idx(
    dataset: &Dataset,
    images_path: &Path,
    labels_path: &Path,
    image_rows: usize,
    image_cols: usize,
) -> Result<()> {
    if image_rows * image_cols != dataset.features() {
        return Err(Error::contract(format!(
            "{image_rows}x{image_cols} images do not hold {} features",
            dataset.features()
        )));
    }
    if dataset.classes() > 256 {
        return Err(Error::contract("IDX labels hold at most 256 classes"));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.len() * dataset.features());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(image_rows as u32).to_be_bytes());
    img.extend_from_slice(&(image_cols as u32).to_be_bytes());
    for &v in dataset.x.as_slice() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::contract(format!("pixel value {v} outside [0, 1]")));
        }
        img.push((v * 255.0).round() as u8);
    }
    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    lab.extend(dataset.labels().into_iter().map(|l| l as u8));

    write_bytes(images_path, &img)?;
    write_bytes(labels_path, &lab)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Parameters of [`synth_clusters`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthParams {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Standard deviation of every cluster, and the distance between the
    /// centers of each overlapping pair.
    pub spread: f64,
    #[serde(default)]
    pub overlap_pairs: Vec<(usize, usize)>,
}

/// Distance between distinct, non-overlapping cluster centers.
pub const CLUSTER_SEPARATION: f64 = 4.0;

// Key for center placement when dim < classes; fixed so centers depend only
// on the shape parameters.
const CENTER_SEED: u64 = 0x5EED_CE47;

/// Cluster centers before and after pulling overlap pairs together.
pub fn cluster_centers(params: &SynthParams) -> Result<Matrix> {
    let SynthParams {
        classes: k,
        dim,
        spread,
        ..
    } = *params;
    if k < 2 || dim == 0 {
        return Err(Error::contract(format!(
            "synthetic clusters need k >= 2 and dim >= 1, got k={k}, dim={dim}"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::contract(format!(
            "spread must be non-negative, got {spread}"
        )));
    }
    let mut centers = Matrix::zeros(k, dim);
    if dim >= k {
        // axis-aligned: every pair is CLUSTER_SEPARATION apart
        let scale = CLUSTER_SEPARATION / std::f64::consts::SQRT_2;
        for c in 0..k {
            centers.set(c, c, scale);
        }
    } else {
        let mut rng = Rng::new(CENTER_SEED);
        let half = CLUSTER_SEPARATION * (k as f64).sqrt();
        for v in centers.as_mut_slice() {
            *v = rng.uniform_range(-half, half);
        }
    }
    for &(a, b) in &params.overlap_pairs {
        if a >= k || b >= k || a == b {
            return Err(Error::contract(format!("invalid overlap pair ({a}, {b})")));
        }
        // b sits `spread` away from a along the first axis
        let anchor = centers.row(a).to_vec();
        let row = centers.row_mut(b);
        row.copy_from_slice(&anchor);
        row[0] += spread;
    }
    Ok(centers)
}

/// Isotropic Gaussian clusters, `per_class` samples each, grouped by class.
///
/// Every class is a Gaussian with standard deviation `spread` around its
/// center. For each `(a, b)` in `overlap_pairs`, class `b`'s center is
/// placed `spread` away from class `a`'s, so a classifier confuses that pair
/// far more than any other.
pub fn synth_clusters(params: &SynthParams, rng: &mut Rng) -> Result<Dataset> {
    let centers = cluster_centers(params)?;
    let SynthParams {
        classes: k,
        per_class,
        dim,
        spread,
        ..
    } = *params;
    let n = k * per_class;
    let mut x = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for s in 0..per_class {
            let row = x.row_mut(c * per_class + s);
            for (v, &mu) in row.iter_mut().zip(centers.row(c)) {
                *v = mu + spread * rng.normal();
            }
            labels.push(c);
        }
    }
    let y = one_hot(&labels, k)?;
    Ok(Dataset {
        x,
        y,
        class_names: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_basis() {
        assert_eq!(
            one_hot(&[0], 3).unwrap(),
            Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap()
        );
        assert_eq!(
            one_hot(&[2, 1], 3).unwrap(),
            Matrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn one_hot_out_of_range_names_index() {
        let err = one_hot(&[0, 3], 3).unwrap_err().to_string();
        assert!(err.contains("index 1"), "{err}");
    }

    #[test]
    fn synth_is_deterministic() {
        let p = SynthParams {
            classes: 3,
            per_class: 5,
            dim: 4,
            spread: 0.5,
            overlap_pairs: vec![(0, 1)],
        };
        let a = synth_clusters(&p, &mut Rng::new(9)).unwrap();
        let b = synth_clusters(&p, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
        assert_eq!(a.labels()[5], 1);
    }

    #[test]
    fn synth_overlap_pair_is_close() {
        let p = SynthParams {
            classes: 4,
            per_class: 1,
            dim: 2,
            spread: 0.3,
            overlap_pairs: vec![(2, 3)],
        };
        let c = cluster_centers(&p).unwrap();
        let d = |a: usize, b: usize| {
            c.row(a)
                .iter()
                .zip(c.row(b))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        assert!((d(2, 3) - 0.3).abs() < 1e-12);
        assert!(d(0, 1) > 1.0);
    }

    #[test]
    fn synth_rejects_bad_params() {
        let base = SynthParams {
            classes: 3,
            per_class: 2,
            dim: 2,
            spread: 0.1,
            overlap_pairs: vec![],
        };
        let mut rng = Rng::new(0);
        assert!(synth_clusters(
            &SynthParams {
                classes: 1,
                ..base.clone()
            },
            &mut rng
        )
        .is_err());
        assert!(synth_clusters(
            &SynthParams {
                dim: 0,
                ..base.clone()
            },
            &mut rng
        )
        .is_err());
        assert!(synth_clusters(
            &SynthParams {
                overlap_pairs: vec![(1, 1)],
                ..base
            },
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn split_partitions_without_overlap() {
        let x = Matrix::from_vec(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let y = one_hot(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap();
        let ds = Dataset::new(x, y).unwrap();
        let (a, b) = ds.split(0.3, &mut Rng::new(4)).unwrap();
        let (a2, b2) = ds.split(0.3, &mut Rng::new(4)).unwrap();
        assert_eq!((&a, &b), (&a2, &b2));
        assert_eq!((a.len(), b.len()), (7, 3));
        let mut all: Vec<f64> =
            a.x.as_slice()
                .iter()
                .chain(b.x.as_slice())
                .copied()
                .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
    }
}
