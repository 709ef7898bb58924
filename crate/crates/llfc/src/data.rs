//! Deterministic synthetic classification datasets and IDX file ingestion.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::CounterRng;

/// A classification dataset: inputs stacked column-wise plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// d_0 x n input matrix, one example per column.
    pub x: Matrix,
    /// labels, one per column of `x`, each in `[0, classes)`.
    pub y: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, classes: usize) -> Result<Self> {
        if x.cols() != y.len() {
            return Err(Error::Shape(format!(
                "{} columns vs {} labels",
                x.cols(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelRange {
                label: bad,
                classes,
            });
        }
        Ok(Dataset { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    /// Subset by example index.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.gather_cols(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
        }
    }
}

/// Gaussian clusters centered on a sphere of radius 4*spread.
///
/// Centers are drawn by rejection so that every pair is at least one radius
/// apart; class priors are exactly uniform.
pub fn gen_blobs(
    seed: u64,
    n_per_class: usize,
    classes: usize,
    dim: usize,
    spread: f64,
) -> Result<Dataset> {
    if classes < 2 || dim < 2 || spread <= 0.0 {
        return Err(Error::Domain(
            "gen_blobs requires classes >= 2, dim >= 2, spread > 0".into(),
        ));
    }
    let radius = 4.0 * spread;
    let mut rng = CounterRng::substream(seed, 0xb10b);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    // min pairwise separation starts at one radius and is relaxed if the
    // sphere gets too crowded for the requested class count
    let mut min_sep = radius;
    let mut attempts = 0usize;
    while centers.len() < classes {
        attempts += 1;
        if attempts % 200 == 0 {
            min_sep *= 0.5;
        }
        let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let n = crate::linalg::norm(&v);
        if n == 0.0 {
            continue;
        }
        let c: Vec<f64> = v.iter().map(|x| x * radius / n).collect();
        let ok = centers.iter().all(|prev| {
            let d2: f64 = prev.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= min_sep
        });
        if ok {
            centers.push(c);
        }
    }
    let n = n_per_class * classes;
    let mut x = Matrix::zeros(dim, n);
    let mut y = Vec::with_capacity(n);
    for k in 0..classes {
        for j in 0..n_per_class {
            let col = k * n_per_class + j;
            for d in 0..dim {
                x.set(d, col, centers[k][d] + spread * rng.next_gaussian());
            }
            y.push(k);
        }
    }
    Dataset::new(x, y, classes)
}

/// Interleaved 2-D spirals with angular offsets 2*pi/classes.
pub fn gen_spirals(seed: u64, n_per_class: usize, classes: usize, noise: f64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Domain("gen_spirals requires classes >= 2".into()));
    }
    let mut rng = CounterRng::substream(seed, 0x5b17a1);
    let n = n_per_class * classes;
    let mut x = Matrix::zeros(2, n);
    let mut y = Vec::with_capacity(n);
    let turns = 1.75 * std::f64::consts::TAU;
    for k in 0..classes {
        let offset = std::f64::consts::TAU * k as f64 / classes as f64;
        for j in 0..n_per_class {
            let col = k * n_per_class + j;
            // t in (0, 1], radius grows with t so classes stay interleaved
            let t = (j + 1) as f64 / n_per_class as f64;
            let r = t;
            let theta = turns * t + offset;
            x.set(0, col, r * theta.cos() + noise * rng.next_gaussian());
            x.set(1, col, r * theta.sin() + noise * rng.next_gaussian());
            y.push(k);
        }
    }
    Dataset::new(x, y, classes)
}

/// Deterministic shuffle-split into train/test fractions.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain("train_fraction must be in (0, 1)".into()));
    }
    let n = data.len();
    let perm = CounterRng::substream(seed, 0x5917).permutation(n);
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, n - 1);
    let train_idx = &perm[..n_train];
    let test_idx = &perm[n_train..];
    Ok((data.select(train_idx), data.select(test_idx)))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(buf: &[u8], offset: usize) -> Result<u32> {
    let bytes: [u8; 4] = buf
        .get(offset..offset + 4)
        .ok_or(Error::IdxFormat {
            offset: offset as u64,
            message: "truncated file".into(),
        })?
        .try_into()
        .unwrap();
    Ok(u32::from_be_bytes(bytes))
}

/// Load an IDX image/label pair (the MNIST distribution format).
///
/// Pixels are scaled to [0, 1] by division by 255 and flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let read_all = |p: &Path| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        std::fs::File::open(p)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::IdxFormat {
                offset: 0,
                message: format!("{}: {e}", p.display()),
            })?;
        Ok(buf)
    };
    let img = read_all(images_path)?;
    let lbl = read_all(labels_path)?;

    let img_magic = read_u32_be(&img, 0)?;
    if img_magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxFormat {
            offset: 0,
            message: format!("bad images magic {img_magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let lbl_magic = read_u32_be(&lbl, 0)?;
    if lbl_magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxFormat {
            offset: 0,
            message: format!("bad labels magic {lbl_magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let n = read_u32_be(&img, 4)? as usize;
    let rows = read_u32_be(&img, 8)? as usize;
    let cols = read_u32_be(&img, 12)? as usize;
    let n_lbl = read_u32_be(&lbl, 4)? as usize;
    if n != n_lbl {
        return Err(Error::IdxFormat {
            offset: 4,
            message: format!("image count {n} != label count {n_lbl}"),
        });
    }
    let d = rows * cols;
    let pixels = img.get(16..).filter(|p| p.len() == n * d).ok_or(Error::IdxFormat {
        offset: 16,
        message: format!("expected {} pixel bytes, found {}", n * d, img.len().saturating_sub(16)),
    })?;
    let labels_raw = lbl.get(8..).filter(|p| p.len() == n).ok_or(Error::IdxFormat {
        offset: 8,
        message: format!("expected {} label bytes, found {}", n, lbl.len().saturating_sub(8)),
    })?;

    // X is d x n: image i becomes column i, flattened row-major
    let mut x = Matrix::zeros(d, n);
    for i in 0..n {
        for j in 0..d {
            x.set(j, i, pixels[i * d + j] as f64 / 255.0);
        }
    }
    let y: Vec<usize> = labels_raw.iter().map(|&b| b as usize).collect();
    let classes = y.iter().max().map_or(1, |&m| m + 1).max(2);
    Dataset::new(x, y, classes)
}

/// Write a dataset as an IDX pair; inverse of [`load_idx`] for byte-valued data.
pub fn save_idx(data: &Dataset, rows: usize, cols: usize, images_path: &Path, labels_path: &Path) -> Result<()> {
    let d = rows * cols;
    if data.dim() != d {
        return Err(Error::Shape(format!("dim {} != {rows}x{cols}", data.dim())));
    }
    let n = data.len();
    let mut img = Vec::with_capacity(16 + n * d);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(n as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for i in 0..n {
        for j in 0..d {
            img.push((data.x.get(j, i) * 255.0).round() as u8);
        }
    }
    let mut lbl = Vec::with_capacity(8 + n);
    lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(n as u32).to_be_bytes());
    lbl.extend(data.y.iter().map(|&l| l as u8));
    std::fs::write(images_path, img).map_err(|e| Error::IdxFormat {
        offset: 0,
        message: e.to_string(),
    })?;
    std::fs::write(labels_path, lbl).map_err(|e| Error::IdxFormat {
        offset: 0,
        message: e.to_string(),
    })?;
    Ok(())
}
