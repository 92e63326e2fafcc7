//! Labelled datasets: IDX ingestion, normalisation and a synthetic Gaussian
//! fixture.
//!
//! Pixels are held as `f32` in memory (a 60k MNIST split is ~190 MB that
//! way) and converted to the training precision when batches are gathered.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{self, Rng};
use crate::tensor::{numel, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    /// Per-sample shape, e.g. `[1, 28, 28]` or `[D]`.
    pub sample_shape: Vec<usize>,
    pub inputs: Vec<f32>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        sample_shape: Vec<usize>,
        inputs: Vec<f32>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if inputs.len() != labels.len() * numel(&sample_shape) {
            return Err(Error::shape("dataset", &sample_shape, &[inputs.len(), labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Index {
                context: "dataset label",
                index: bad,
                bound: class_count,
            });
        }
        Ok(LabeledDataset {
            name: name.into(),
            sample_shape,
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        numel(&self.sample_shape)
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let w = self.sample_len();
        &self.inputs[i * w..(i + 1) * w]
    }

    /// Rows at `indices` as a `[n, sample_shape..]` tensor.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend(self.sample(i).iter().map(|v| T::lit(*v as f64)));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, data).expect("rows match sample shape")
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            inputs.extend_from_slice(self.sample(i));
        }
        LabeledDataset {
            name: self.name.clone(),
            sample_shape: self.sample_shape.clone(),
            inputs,
            labels: self.labels_at(indices),
            class_count: self.class_count,
        }
    }

    /// Indices of every sample, grouped by class in ascending index order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }
}

fn be_u32(bytes: &[u8], offset: usize, file: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::format(
                file,
                offset as u64,
                format!("header truncated: need {} bytes, file has {}", offset + 4, bytes.len()),
            )
        })
}

fn check_body(bytes: &[u8], header: usize, body: usize, file: &str) -> Result<()> {
    let expected = header + body;
    if bytes.len() != expected {
        let what = if bytes.len() < expected { "truncated" } else { "trailing data" };
        return Err(Error::format(
            file,
            bytes.len().min(expected) as u64,
            format!("{what}: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    Ok(())
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images<'a>(bytes: &'a [u8], file: &str) -> Result<(usize, usize, usize, &'a [u8])> {
    let magic = be_u32(bytes, 0, file)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(file, 0, format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4, file)? as usize;
    let rows = be_u32(bytes, 8, file)? as usize;
    let cols = be_u32(bytes, 12, file)? as usize;
    check_body(bytes, 16, n * rows * cols, file)?;
    Ok((n, rows, cols, &bytes[16..]))
}

pub fn parse_idx_labels<'a>(bytes: &'a [u8], file: &str) -> Result<&'a [u8]> {
    let magic = be_u32(bytes, 0, file)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(file, 0, format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4, file)? as usize;
    check_body(bytes, 8, n, file)?;
    Ok(&bytes[8..])
}

/// Builds a dataset from raw IDX bytes; pixels are scaled by 1/255.
pub fn dataset_from_idx(images: &[u8], labels: &[u8], name: &str) -> Result<LabeledDataset> {
    let (n, rows, cols, pixels) = parse_idx_images(images, &format!("{name} images"))?;
    let lab = parse_idx_labels(labels, &format!("{name} labels"))?;
    if lab.len() != n {
        return Err(Error::format(
            format!("{name} labels"),
            4,
            format!("label count {} does not match image count {n}", lab.len()),
        ));
    }
    let labels: Vec<usize> = lab.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let inputs = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    LabeledDataset::new(name, vec![1, rows, cols], inputs, labels, class_count)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let read = |p: &Path| {
        fs::read(p).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
    };
    let images = read(images_path)?;
    let labels = read(labels_path)?;
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dataset_from_idx(&images, &labels, &name)
}

/// Serialises a dataset with values in `[0, 1]` to IDX bytes, quantising to
/// `round(255·x)`. Datasets that came from IDX files round-trip exactly.
pub fn dataset_to_idx(ds: &LabeledDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = match ds.sample_shape.as_slice() {
        [1, r, c] | [r, c] => (*r, *c),
        [d] => (1, *d),
        s => return Err(Error::shape("IDX images need [1,H,W], [H,W] or [D] samples", s, &[])),
    };
    if ds.class_count > 256 {
        return Err(Error::Validation("IDX labels hold at most 256 classes".into()));
    }
    let mut img = Vec::with_capacity(16 + ds.inputs.len());
    for v in [IDX_IMAGES_MAGIC, ds.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for &x in &ds.inputs {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Validation(format!("pixel value {x} outside [0, 1]")));
        }
        img.push((x * 255.0).round() as u8);
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&y| y as u8));
    Ok((img, lab))
}

pub fn write_idx(ds: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (img, lab) = dataset_to_idx(ds)?;
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

/// Standard file names of the MNIST distribution inside a data directory.
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub fn in_dir(dir: &Path) -> Self {
        MnistFiles {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn missing(&self) -> Vec<&Path> {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels]
            .into_iter()
            .map(PathBuf::as_path)
            .filter(|p| !p.is_file())
            .collect()
    }
}

/// Loads the MNIST train and test splits from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let f = MnistFiles::in_dir(dir);
    if let Some(p) = f.missing().first() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("MNIST file not found: {}", p.display()),
        )));
    }
    let mut train = load_idx(&f.train_images, &f.train_labels)?;
    let mut test = load_idx(&f.test_images, &f.test_labels)?;
    train.name = "mnist-train".into();
    test.name = "mnist-test".into();
    Ok((train, test))
}

/// Range the raw Gaussian features are clipped to before scaling to `[0, 1]`:
/// `[-4, separation + 4]`, i.e. four noise standard deviations around the
/// extreme class centres.
pub fn synthetic_range(separation: f64) -> (f64, f64) {
    (-4.0, separation + 4.0)
}

/// `classes` isotropic unit-variance Gaussians in `dim` dimensions, class `c`
/// centred at `separation·e_c`. Features are clipped to
/// [`synthetic_range`] and min-max scaled to `[0, 1]`. Samples are stored
/// class by class.
pub fn synthetic_gaussians(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::Config(format!("synthetic_gaussians needs at least 2 classes, got {classes}")));
    }
    if dim < classes {
        return Err(Error::Config(format!("dim {dim} must be at least the class count {classes}")));
    }
    let mut r: Rng = Rng::seed_from_u64(rng::derive(seed, "data.synthetic"));
    let (lo, hi) = synthetic_range(separation);
    let mut inputs = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            for d in 0..dim {
                let centre = if d == c { separation } else { 0.0 };
                let z: f64 = StandardNormal.sample(&mut r);
                let v = (centre + z).clamp(lo, hi);
                inputs.push(((v - lo) / (hi - lo)) as f32);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(format!("gaussians-{classes}x{dim}"), vec![dim], inputs, labels, classes)
}

/// `(x − mean[c]) / std[c]` per channel, where the channel is the first
/// sample dimension. `mean` and `std` hold one value per channel, or a single
/// value applied to all.
pub fn normalize(ds: &LabeledDataset, mean: &[f64], std: &[f64]) -> Result<LabeledDataset> {
    let channels = if ds.sample_shape.len() >= 2 { ds.sample_shape[0] } else { 1 };
    let pick = |v: &[f64], name: &str| -> Result<Vec<f64>> {
        match v.len() {
            1 => Ok(vec![v[0]; channels]),
            n if n == channels => Ok(v.to_vec()),
            n => Err(Error::Config(format!("{name} has {n} entries for {channels} channels"))),
        }
    };
    let mean = pick(mean, "mean")?;
    let std = pick(std, "std")?;
    if let Some(s) = std.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Config(format!("std must be positive, got {s}")));
    }
    let per_channel = ds.sample_len() / channels.max(1);
    let mut out = ds.clone();
    if per_channel == 0 {
        return Ok(out);
    }
    for sample in out.inputs.chunks_mut(ds.sample_len()) {
        for (c, plane) in sample.chunks_mut(per_channel).enumerate() {
            for v in plane {
                *v = ((*v as f64 - mean[c]) / std[c]) as f32;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let inputs = (0..2 * 4).map(|i| i as f32 / 255.0).collect();
        LabeledDataset::new("t", vec![1, 2, 2], inputs, vec![0, 3], 4).unwrap()
    }

    #[test]
    fn idx_round_trip() {
        let ds = tiny();
        let (img, lab) = dataset_to_idx(&ds).unwrap();
        let back = dataset_from_idx(&img, &lab, "t").unwrap();
        assert_eq!(back.inputs, ds.inputs);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.sample_shape, vec![1, 2, 2]);
    }

    #[test]
    fn empty_idx_pair_is_valid() {
        let ds = LabeledDataset::new("e", vec![1, 28, 28], vec![], vec![], 0).unwrap();
        let (img, lab) = dataset_to_idx(&ds).unwrap();
        let back = dataset_from_idx(&img, &lab, "e").unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn truncation_reports_lengths() {
        let (img, lab) = dataset_to_idx(&tiny()).unwrap();
        let err = dataset_from_idx(&img[..img.len() - 3], &lab, "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 24 bytes, found 21"), "{msg}");
        assert!(matches!(err, Error::Format { offset: 21, .. }));
    }

    #[test]
    fn bad_magic_and_count_mismatch() {
        let (mut img, lab) = dataset_to_idx(&tiny()).unwrap();
        let mut lab_short = lab.clone();
        lab_short[7] = 1;
        lab_short.pop();
        assert!(dataset_from_idx(&img, &lab_short, "t").unwrap_err().to_string().contains("label count"));
        img[3] = 0x01;
        assert!(matches!(
            dataset_from_idx(&img, &lab, "t"),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(dataset_from_idx(&img[..2], &lab, "t").is_err());
    }

    #[test]
    fn normalize_rules() {
        let ds = tiny();
        assert_eq!(normalize(&ds, &[0.0], &[1.0]).unwrap(), ds);
        let c = LabeledDataset::new("c", vec![3], vec![0.5; 6], vec![0, 1], 2).unwrap();
        assert!(normalize(&c, &[0.5], &[0.3]).unwrap().inputs.iter().all(|v| *v == 0.0));
        let once = normalize(&ds, &[0.2], &[0.7]).unwrap();
        assert_eq!(normalize(&once, &[0.0], &[1.0]).unwrap(), once);
        assert!(normalize(&ds, &[0.0], &[0.0]).is_err());
        assert!(normalize(&ds, &[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let a = synthetic_gaussians(3, 5, 10, 4.0, 7).unwrap();
        let b = synthetic_gaussians(3, 5, 10, 4.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert!(a.inputs.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(synthetic_gaussians(3, 5, 0, 4.0, 7).unwrap().is_empty());
        assert!(synthetic_gaussians(1, 5, 1, 4.0, 7).is_err());
        assert_ne!(a, synthetic_gaussians(3, 5, 10, 4.0, 8).unwrap());
    }
}
