//! Dataset loading: MNIST IDX files, CIFAR-10 binary batches and a
//! synthetic Gaussian generator.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabeledDataset;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_LEN: usize = 3073;
const CIFAR_SIDE: usize = 32;
const CIFAR_CHANNELS: usize = 3;

/// Decoded images with their label bytes. `pixels` holds `count` images
/// back to back, each `channels * height * width` bytes in file order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImageSet {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawImageSet {
    /// Both supported formats carry ten classes.
    pub const NUM_CLASSES: usize = 10;

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Mnist,
    Cifar10,
    Synthetic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelScale {
    /// Intensities kept as 0..=255.
    #[default]
    Raw,
    /// Intensities divided by 255.
    Unit,
}

/// File locations. `dir` supplies the canonical file names; explicit
/// entries override it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub dir: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_batches: Vec<PathBuf>,
    pub test_batches: Vec<PathBuf>,
}

impl DataPaths {
    fn resolve(&self, explicit: &Option<PathBuf>, canonical: &str) -> Result<PathBuf> {
        explicit
            .clone()
            .or_else(|| self.dir.as_ref().map(|d| d.join(canonical)))
            .ok_or_else(|| Error::InvalidConfig(format!("no path given for {canonical}")))
    }

    fn batches(&self, explicit: &[PathBuf], canonical: &[&str]) -> Result<Vec<PathBuf>> {
        if !explicit.is_empty() {
            return Ok(explicit.to_vec());
        }
        let dir = self
            .dir
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no CIFAR-10 batch paths given".into()))?;
        Ok(canonical.iter().map(|name| dir.join(name)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub n_test_per_class: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            n_test_per_class: 100,
            dim: 2,
            num_classes: 2,
            separation: 3.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// Keep only classes `(a, b)`, relabeled `a → 0`, `b → 1`.
    pub class_filter: Option<(u8, u8)>,
    pub pixel_scale: PixelScale,
    pub paths: DataPaths,
    pub synthetic: Option<SyntheticSpec>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some((a, b)) = self.class_filter {
            if a == b || usize::from(a.max(b)) >= RawImageSet::NUM_CLASSES {
                return Err(Error::InvalidConfig(format!(
                    "class filter ({a}, {b}) must name two distinct classes in [0, 10)"
                )));
            }
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_payload(bytes: &[u8], header: usize, dims: &[u32]) -> Result<()> {
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|p| p.checked_add(header))
        .unwrap_or(usize::MAX);
    match bytes.len().cmp(&payload) {
        std::cmp::Ordering::Less => Err(Error::Truncated {
            expected: payload,
            found: bytes.len(),
        }),
        std::cmp::Ordering::Greater => Err(Error::TrailingBytes {
            extra: bytes.len() - payload,
        }),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX3 image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let dims = [be_u32(bytes, 4)?, be_u32(bytes, 8)?, be_u32(bytes, 12)?];
    check_payload(bytes, 16, &dims)?;
    Ok((
        dims[0] as usize,
        dims[1] as usize,
        dims[2] as usize,
        bytes[16..].to_vec(),
    ))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)?;
    check_payload(bytes, 8, &[n])?;
    Ok(bytes[8..].to_vec())
}

pub fn decode_idx(images: &[u8], labels: &[u8]) -> Result<RawImageSet> {
    let (count, height, width, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Ok(RawImageSet {
        count,
        channels: 1,
        height,
        width,
        pixels,
        labels,
    })
}

pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<RawImageSet> {
    let images = read_file(images_path.as_ref())?;
    let labels = read_file(labels_path.as_ref())?;
    decode_idx(&images, &labels)
}

/// Decodes concatenated CIFAR-10 records: one label byte then 3072 pixel
/// bytes (red plane, green plane, blue plane; each row-major 32×32).
pub fn parse_cifar10(bytes: &[u8]) -> Result<RawImageSet> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::RecordLength {
            len: bytes.len(),
            record: CIFAR_RECORD_LEN,
        });
    }
    let count = bytes.len() / CIFAR_RECORD_LEN;
    let mut labels = Vec::with_capacity(count);
    let mut pixels = Vec::with_capacity(count * (CIFAR_RECORD_LEN - 1));
    for (record, chunk) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let label = chunk[0];
        if usize::from(label) >= RawImageSet::NUM_CLASSES {
            return Err(Error::LabelOutOfRange {
                label,
                record,
                max: 9,
            });
        }
        labels.push(label);
        pixels.extend_from_slice(&chunk[1..]);
    }
    Ok(RawImageSet {
        count,
        channels: CIFAR_CHANNELS,
        height: CIFAR_SIDE,
        width: CIFAR_SIDE,
        pixels,
        labels,
    })
}

pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<RawImageSet> {
    let mut all = RawImageSet {
        count: 0,
        channels: CIFAR_CHANNELS,
        height: CIFAR_SIDE,
        width: CIFAR_SIDE,
        pixels: Vec::new(),
        labels: Vec::new(),
    };
    for path in batch_paths {
        let part = parse_cifar10(&read_file(path.as_ref())?)?;
        all.count += part.count;
        all.pixels.extend(part.pixels);
        all.labels.extend(part.labels);
    }
    Ok(all)
}

/// Flattens images, appends the bias coordinate and applies the class
/// filter. Sample order is preserved.
pub fn to_dataset(
    raw: &RawImageSet,
    class_filter: Option<(u8, u8)>,
    scale: PixelScale,
) -> Result<LabeledDataset> {
    let d = raw.image_len();
    let factor = match scale {
        PixelScale::Raw => 1.0,
        PixelScale::Unit => 1.0 / 255.0,
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..raw.count {
        let label = match class_filter {
            None => usize::from(raw.labels[i]),
            Some((a, _)) if raw.labels[i] == a => 0,
            Some((_, b)) if raw.labels[i] == b => 1,
            Some(_) => continue,
        };
        features.extend(raw.image(i).iter().map(|&p| f64::from(p) * factor));
        features.push(1.0);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(if class_filter.is_some() {
            Error::EmptyFilter
        } else {
            Error::EmptyDataset
        });
    }
    let num_classes = if class_filter.is_some() {
        2
    } else {
        RawImageSet::NUM_CLASSES
    };
    LabeledDataset::from_flat(features, d, labels, num_classes)
}

/// `n_per_class` points per class; class `c` is an isotropic unit Gaussian
/// centred at `separation · e_{c mod dim}`. Classes are interleaved.
pub fn synth_gaussian<R: Rng + ?Sized>(
    n_per_class: usize,
    dim: usize,
    num_classes: usize,
    separation: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if n_per_class == 0 || dim == 0 {
        return Err(Error::InvalidConfig(
            "n_per_class and dim must be positive".into(),
        ));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad separation {separation}")));
    }
    let mut features = Vec::with_capacity(n_per_class * num_classes * (dim + 1));
    let mut labels = Vec::with_capacity(n_per_class * num_classes);
    for _ in 0..n_per_class {
        for c in 0..num_classes {
            for j in 0..dim {
                let noise: f64 = rng.sample(StandardNormal);
                let centre = if j == c % dim { separation } else { 0.0 };
                features.push(centre + noise);
            }
            features.push(1.0);
            labels.push(c);
        }
    }
    LabeledDataset::from_flat(features, dim, labels, num_classes)
}

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];
const CIFAR_TRAIN: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const CIFAR_TEST: [&str; 1] = ["test_batch.bin"];

/// Loads the canonical train and test splits described by `spec`.
pub fn load_dataset(spec: &DatasetSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let p = &spec.paths;
    match spec.source {
        DataSource::Mnist => {
            let train = load_idx(
                p.resolve(&p.train_images, MNIST_FILES[0])?,
                p.resolve(&p.train_labels, MNIST_FILES[1])?,
            )?;
            let test = load_idx(
                p.resolve(&p.test_images, MNIST_FILES[2])?,
                p.resolve(&p.test_labels, MNIST_FILES[3])?,
            )?;
            Ok((
                to_dataset(&train, spec.class_filter, spec.pixel_scale)?,
                to_dataset(&test, spec.class_filter, spec.pixel_scale)?,
            ))
        }
        DataSource::Cifar10 => {
            let train = load_cifar10(&p.batches(&p.train_batches, &CIFAR_TRAIN)?)?;
            let test = load_cifar10(&p.batches(&p.test_batches, &CIFAR_TEST)?)?;
            Ok((
                to_dataset(&train, spec.class_filter, spec.pixel_scale)?,
                to_dataset(&test, spec.class_filter, spec.pixel_scale)?,
            ))
        }
        DataSource::Synthetic => {
            let s = spec.synthetic.clone().unwrap_or_default();
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let train =
                synth_gaussian(s.n_per_class, s.dim, s.num_classes, s.separation, &mut rng)?;
            let test = synth_gaussian(
                s.n_test_per_class,
                s.dim,
                s.num_classes,
                s.separation,
                &mut rng,
            )?;
            Ok((train, test))
        }
    }
}

/// Serialises images and labels as an IDX3/IDX1 pair.
pub fn encode_idx(raw: &RawImageSet) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + raw.pixels.len());
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [raw.count, raw.height, raw.width] {
        images.extend_from_slice(&(v as u32).to_be_bytes());
    }
    images.extend_from_slice(&raw.pixels);
    let mut labels = Vec::with_capacity(8 + raw.labels.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(raw.count as u32).to_be_bytes());
    labels.extend_from_slice(&raw.labels);
    (images, labels)
}
