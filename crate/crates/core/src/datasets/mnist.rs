//! Digit images and their confounded variants.

use std::path::{Path, PathBuf};

use lsx_autodiff::Tensor;
use rand::Rng;

use super::idx::load_idx;
use super::set::{stratified_indices, DatasetKind, LabeledSet, Meta};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

pub const DECOY_PATCH: usize = 4;

/// RGB tint per class for ColorMNIST.
pub const PALETTE: [[f64; 3]; 10] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.5, 0.0],
    [0.5, 0.0, 1.0],
    [0.0, 0.5, 1.0],
    [1.0, 0.0, 0.5],
];

const FILE_PAIRS: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("mnist10k-images-idx3-ubyte", "mnist10k-labels-idx1-ubyte"),
];

/// Directory holding the digit files: `$LSX_MNIST_DIR`, else the bundled copy.
pub fn default_dir() -> PathBuf {
    std::env::var_os("LSX_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

/// Loads the first image/label pair found in `dir`, plain or `.gz`.
pub fn load_dir(dir: &Path) -> Result<LabeledSet> {
    for (images, labels) in FILE_PAIRS {
        for ext in ["", ".gz"] {
            let ip = dir.join(format!("{images}{ext}"));
            let lp = dir.join(format!("{labels}{ext}"));
            if ip.exists() && lp.exists() {
                return load_idx(&ip, &lp);
            }
        }
    }
    Err(Error::format(dir, "no MNIST image/label pair found"))
}

/// Stratified split of a digit pool into a learner pool and a held-out test
/// set of about `test_size` samples. The split depends only on `seed`.
pub fn holdout(full: &LabeledSet, test_size: usize, seed: u64) -> (LabeledSet, LabeledSet) {
    let frac = test_size as f64 / full.len() as f64;
    let mut rng = seed::rng(seed, "mnist/holdout");
    let (test, pool) = stratified_indices(full.labels(), full.classes(), frac, &mut rng);
    (full.select(&pool), full.select(&test))
}

fn check_digits(base: &LabeledSet) -> Result<(usize, usize)> {
    match base.sample_shape() {
        [1, h, w] if *h >= DECOY_PATCH && *w >= DECOY_PATCH => Ok((*h, *w)),
        s => Err(Error::Shape(format!("expected [1,H,W] digits, got {s:?}"))),
    }
}

/// Training shade for class `y`.
pub fn decoy_shade(y: usize) -> f64 {
    (255.0 - 25.0 * y as f64) / 255.0
}

/// Writes a 4x4 box into a random corner of every image. In train mode the
/// shade encodes the label; in test mode it is uniform over the 256 levels.
pub fn make_decoy(base: &LabeledSet, mode: Mode, seed: u64) -> Result<LabeledSet> {
    let (h, w) = check_digits(base)?;
    let mut rng = seed::rng(seed, "decoy");
    let mut data = base.inputs().data().to_vec();
    let plane = h * w;
    for (i, &y) in base.labels().iter().enumerate() {
        let corner = rng.gen_range(0..4);
        let shade = match mode {
            Mode::Train => decoy_shade(y),
            Mode::Test => rng.gen_range(0..=255u32) as f64 / 255.0,
        };
        let top = if corner < 2 { 0 } else { h - DECOY_PATCH };
        let left = if corner % 2 == 0 { 0 } else { w - DECOY_PATCH };
        let img = &mut data[i * plane..(i + 1) * plane];
        for r in top..top + DECOY_PATCH {
            img[r * w + left..r * w + left + DECOY_PATCH].fill(shade);
        }
    }
    let meta = Meta {
        kind: DatasetKind::Decoy,
        classes: base.classes(),
        confounded: mode == Mode::Train,
    };
    LabeledSet::new(
        Tensor::new(base.inputs().shape().to_vec(), data)?,
        base.labels().to_vec(),
        base.ids().to_vec(),
        meta,
    )
}

/// Tints digit strokes into 3 channels. Train uses the label's palette
/// colour, test a uniformly drawn one; the background stays black.
pub fn make_color(base: &LabeledSet, mode: Mode, seed: u64) -> Result<LabeledSet> {
    let (h, w) = check_digits(base)?;
    if base.classes() > PALETTE.len() {
        return Err(Error::InvalidArgument(format!(
            "palette has {} colours for {} classes",
            PALETTE.len(),
            base.classes()
        )));
    }
    let mut rng = seed::rng(seed, "color");
    let plane = h * w;
    let n = base.len();
    let mut data = vec![0.0; n * 3 * plane];
    for (i, &y) in base.labels().iter().enumerate() {
        let c = match mode {
            Mode::Train => y,
            Mode::Test => rng.gen_range(0..base.classes()),
        };
        let src = base.sample(i);
        for (ch, &tint) in PALETTE[c].iter().enumerate() {
            let dst = &mut data[(i * 3 + ch) * plane..(i * 3 + ch + 1) * plane];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = v * tint;
            }
        }
    }
    let meta = Meta {
        kind: DatasetKind::Color,
        classes: base.classes(),
        confounded: mode == Mode::Train,
    };
    LabeledSet::new(
        Tensor::new(vec![n, 3, h, w], data)?,
        base.labels().to_vec(),
        base.ids().to_vec(),
        meta,
    )
}
