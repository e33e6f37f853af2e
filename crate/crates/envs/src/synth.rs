//! Deterministic synthetic digit corpus in IDX format, for running the
//! classification experiment where the real MNIST files are not available.
//! Two classes with a repertoire of hand-built stroke styles, style
//! frequencies roughly geometric, pixel noise and one-pixel jitter.

use crate::mnist::{write_idx_images, write_idx_labels, IMAGE_PIXELS, IMAGE_SIDE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Styles for the ring-like class: (horizontal radius, vertical radius,
/// stroke thickness).
const RING_STYLES: [(f64, f64, f64); 8] = [
    (6.0, 9.0, 1.6),
    (8.0, 9.0, 1.6),
    (6.0, 7.0, 1.6),
    (8.0, 7.0, 2.4),
    (5.0, 9.0, 2.4),
    (7.0, 8.0, 1.2),
    (9.0, 9.0, 1.6),
    (5.0, 6.0, 1.2),
];

/// Styles for the stroke-like class: (slant in pixels over the height,
/// stroke width, foot bar).
const STROKE_STYLES: [(f64, f64, bool); 8] = [
    (0.0, 1.6, false),
    (2.0, 1.6, false),
    (-2.0, 1.6, false),
    (0.0, 2.6, false),
    (4.0, 1.6, false),
    (0.0, 1.6, true),
    (2.0, 2.6, true),
    (-4.0, 1.6, false),
];

fn render_ring(rx: f64, ry: f64, thick: f64, dx: f64, dy: f64) -> Vec<u8> {
    let mut img = vec![0u8; IMAGE_PIXELS];
    let (cx, cy) = (13.5 + dx, 13.5 + dy);
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let x = (c as f64 - cx) / rx;
            let y = (r as f64 - cy) / ry;
            let d = (x * x + y * y).sqrt();
            let edge = (d - 1.0).abs() * rx.min(ry);
            if edge < thick {
                let v = 255.0 * (1.0 - edge / thick);
                img[r * IMAGE_SIDE + c] = v as u8;
            }
        }
    }
    img
}

fn render_stroke(slant: f64, width: f64, foot: bool, dx: f64, dy: f64) -> Vec<u8> {
    let mut img = vec![0u8; IMAGE_PIXELS];
    let top = 4.0 + dy;
    let bottom = 23.0 + dy;
    for r in 0..IMAGE_SIDE {
        let rf = r as f64;
        if rf < top || rf > bottom {
            continue;
        }
        let t = (rf - top) / (bottom - top);
        let centre = 13.5 + dx + slant * (t - 0.5);
        for c in 0..IMAGE_SIDE {
            let d = (c as f64 - centre).abs();
            if d < width {
                img[r * IMAGE_SIDE + c] = (255.0 * (1.0 - d / (width + 0.5))) as u8;
            }
        }
        if foot && rf > bottom - 2.0 {
            for c in 9..19 {
                img[r * IMAGE_SIDE + c] = img[r * IMAGE_SIDE + c].max(200);
            }
        }
    }
    img
}

/// Geometric-ish style draw: early styles common, late styles rare.
fn draw_style(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let weights: Vec<f64> = (0..n).map(|i| 0.55f64.powi(i as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        r -= w;
        if r <= 0.0 {
            return i;
        }
    }
    n - 1
}

fn sample(class: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let dx = rng.gen_range(-1i32..=1) as f64;
    let dy = rng.gen_range(-1i32..=1) as f64;
    let mut img = if class == 0 {
        let (rx, ry, t) = RING_STYLES[draw_style(rng, RING_STYLES.len())];
        render_ring(rx, ry, t, dx, dy)
    } else {
        let (s, w, f) = STROKE_STYLES[draw_style(rng, STROKE_STYLES.len())];
        render_stroke(s, w, f, dx, dy)
    };
    // salt-and-pepper pixel noise
    for px in img.iter_mut() {
        if rng.gen::<f64>() < 0.01 {
            *px = if rng.gen::<bool>() { 230 } else { 0 };
        }
    }
    img
}

/// A generated corpus in IDX byte format.
pub struct SyntheticCorpus {
    pub train_images: Vec<u8>,
    pub train_labels: Vec<u8>,
    pub test_images: Vec<u8>,
    pub test_labels: Vec<u8>,
}

/// Generate a deterministic two-class corpus.
pub fn generate_corpus(seed: u64, n_train: usize, n_test: usize) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |n: usize| -> (Vec<Vec<u8>>, Vec<u8>) {
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            images.push(sample(class, &mut rng));
            labels.push(class as u8);
        }
        (images, labels)
    };
    let (tri, trl) = make(n_train);
    let (tei, tel) = make(n_test);
    SyntheticCorpus {
        train_images: write_idx_images(&tri, IMAGE_SIDE, IMAGE_SIDE),
        train_labels: write_idx_labels(&trl),
        test_images: write_idx_images(&tei, IMAGE_SIDE, IMAGE_SIDE),
        test_labels: write_idx_labels(&tel),
    }
}
