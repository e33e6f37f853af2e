//! MNIST-format ingestion: IDX parsing, Gaussian smoothing, histogram
//! equalisation, and restriction to the most informative pixels, emitting
//! per-pixel Bernoulli observations.

use sprout_core::error::{Error, Result};
use sprout_core::tensor::Categorical;
use sprout_core::Observation;
use std::io::Read;
use std::path::Path;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

/// Preprocessing configuration.
#[derive(Debug, Clone)]
pub struct MnistConfig {
    /// Gaussian smoothing width (standard deviation, in pixels).
    pub sigma: f64,
    /// Kernel radius; 2 gives the default five-tap kernel.
    pub kernel_radius: usize,
    /// Number of most-informative pixels to keep.
    pub top_k: usize,
    /// Digit classes to ingest, in order.
    pub classes: Vec<u8>,
    /// Training exemplars per class.
    pub train_per_class: usize,
    /// Test exemplars per class.
    pub test_per_class: usize,
}

impl Default for MnistConfig {
    fn default() -> Self {
        MnistConfig {
            sigma: 1.0,
            kernel_radius: 2,
            top_k: 128,
            classes: vec![0, 1],
            train_per_class: 256,
            test_per_class: 100,
        }
    }
}

/// One preprocessed exemplar: per selected pixel, the probability of ink.
#[derive(Debug, Clone)]
pub struct Exemplar {
    pub pixels: Vec<f64>,
    pub label: usize,
}

impl Exemplar {
    /// Soft categorical observation, level 1 = ink.
    pub fn to_observation(&self) -> Observation {
        Observation(
            self.pixels
                .iter()
                .map(|&p| Categorical::new(vec![1.0 - p, p]).expect("pixel in [0,1]"))
                .collect(),
        )
    }
}

/// A preprocessed dataset with its fixed pixel subset.
#[derive(Debug, Clone)]
pub struct MnistData {
    /// Indices (into the 784-pixel image) of the selected pixels.
    pub selected: Vec<usize>,
    pub train: Vec<Exemplar>,
    pub test: Vec<Exemplar>,
    /// Class labels in ingestion order; exemplar labels index this list.
    pub classes: Vec<u8>,
}

impl MnistData {
    pub fn modality_spec(&self) -> Vec<(String, usize)> {
        self.selected.iter().map(|&p| (format!("px-{p}"), 2)).collect()
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    if offset + 4 > bytes.len() {
        return Err(Error::Parse { offset, message: "truncated IDX header".into() });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Parse an IDX image file (magic 2051, big-endian dimensions).
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse { offset: 0, message: format!("bad image magic {magic}") });
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("truncated image data: {} of {need} bytes", bytes.len()),
        });
    }
    Ok((0..count)
        .map(|i| bytes[16 + i * rows * cols..16 + (i + 1) * rows * cols].to_vec())
        .collect())
}

/// Parse an IDX label file (magic 2049).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse { offset: 0, message: format!("bad label magic {magic}") });
    }
    let count = read_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: "truncated label data".into(),
        });
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Encode images into IDX bytes.
pub fn write_idx_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

/// Encode labels into IDX bytes.
pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Separable Gaussian smoothing with a (2r+1)-tap kernel.
fn smooth(img: &[u8], side: usize, sigma: f64, radius: usize) -> Vec<f64> {
    let taps: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let d = k as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / norm).collect();

    let mut horizontal = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let cc = c as isize + k as isize - radius as isize;
                if (0..side as isize).contains(&cc) {
                    acc += t * img[r * side + cc as usize] as f64;
                }
            }
            horizontal[r * side + c] = acc;
        }
    }
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let rr = r as isize + k as isize - radius as isize;
                if (0..side as isize).contains(&rr) {
                    acc += t * horizontal[rr as usize * side + c];
                }
            }
            out[r * side + c] = acc;
        }
    }
    out
}

/// Per-image histogram equalisation: map every pixel to its empirical CDF
/// value, landing in [0, 1].
fn equalise(img: &[f64]) -> Vec<f64> {
    let n = img.len() as f64;
    let mut sorted: Vec<f64> = img.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    img.iter()
        .map(|&v| {
            let below = sorted.partition_point(|&x| x < v) as f64;
            let equal = sorted.partition_point(|&x| x <= v) as f64 - below;
            (below + 0.5 * equal) / n
        })
        .collect()
}

fn preprocess(img: &[u8], cfg: &MnistConfig) -> Vec<f64> {
    equalise(&smooth(img, IMAGE_SIDE, cfg.sigma, cfg.kernel_radius))
}

/// Load and preprocess a dataset from IDX bytes.
///
/// Selects `top_k` pixels by cross-image variance over the training subset
/// (the most informative pixels); the subset is fixed for both splits.
pub fn load_mnist_bytes(
    train_images: &[u8],
    train_labels: &[u8],
    test_images: &[u8],
    test_labels: &[u8],
    cfg: &MnistConfig,
) -> Result<MnistData> {
    let tr_imgs = parse_idx_images(train_images)?;
    let tr_labels = parse_idx_labels(train_labels)?;
    let te_imgs = parse_idx_images(test_images)?;
    let te_labels = parse_idx_labels(test_labels)?;
    if tr_imgs.len() != tr_labels.len() || te_imgs.len() != te_labels.len() {
        return Err(Error::Argument("image/label counts differ".into()));
    }

    let take = |imgs: &[Vec<u8>], labels: &[u8], per_class: usize| -> Vec<(Vec<f64>, usize)> {
        let mut out = Vec::new();
        for (ci, &class) in cfg.classes.iter().enumerate() {
            let mut n = 0;
            for (img, &lab) in imgs.iter().zip(labels) {
                if lab == class {
                    out.push((preprocess(img, cfg), ci));
                    n += 1;
                    if n >= per_class {
                        break;
                    }
                }
            }
        }
        out
    };
    let train_full = take(&tr_imgs, &tr_labels, cfg.train_per_class);
    let test_full = take(&te_imgs, &te_labels, cfg.test_per_class);
    if train_full.is_empty() {
        return Err(Error::Argument("no training exemplars matched the class list".into()));
    }

    // most informative pixels: highest variance across the training subset
    let n = train_full.len() as f64;
    let mut mean = vec![0.0; IMAGE_PIXELS];
    for (img, _) in &train_full {
        for (m, &v) in mean.iter_mut().zip(img) {
            *m += v / n;
        }
    }
    let mut variance = vec![0.0; IMAGE_PIXELS];
    for (img, _) in &train_full {
        for ((s, &v), &m) in variance.iter_mut().zip(img).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let mut order: Vec<usize> = (0..IMAGE_PIXELS).collect();
    order.sort_by(|&a, &b| {
        variance[b].partial_cmp(&variance[a]).unwrap().then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order.into_iter().take(cfg.top_k).collect();
    selected.sort_unstable();

    let restrict = |full: Vec<(Vec<f64>, usize)>, selected: &[usize]| -> Vec<Exemplar> {
        full.into_iter()
            .map(|(img, label)| Exemplar {
                pixels: selected.iter().map(|&p| img[p]).collect(),
                label,
            })
            .collect()
    };

    let train = restrict(train_full, &selected);
    let test = restrict(test_full, &selected);
    Ok(MnistData { selected, train, test, classes: cfg.classes.clone() })
}

/// Load a dataset from the four standard IDX files.
pub fn load_mnist(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
    cfg: &MnistConfig,
) -> Result<MnistData> {
    let read = |p: &Path| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        std::fs::File::open(p)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::Argument(format!("cannot read {}: {e}", p.display())))?;
        Ok(buf)
    };
    load_mnist_bytes(&read(train_images)?, &read(train_labels)?, &read(test_images)?, &read(test_labels)?, cfg)
}
