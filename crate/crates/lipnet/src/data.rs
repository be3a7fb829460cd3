//! Datasets: the CIFAR-10 binary format and a synthetic two-moons set.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use lipnet_core::nn::InMemoryDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE * CIFAR_CHANNELS;
/// One label byte followed by the R, G and B planes.
pub const CIFAR_RECORD_BYTES: usize = CIFAR_PIXELS + 1;
pub const CIFAR_CLASSES: usize = 10;
pub const CIFAR_TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";
/// Padding used by the random-crop augmentation.
pub const CROP_PADDING: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cifar10Record {
    pub label: u8,
    /// Plane order: 1024 red, 1024 green, 1024 blue bytes, each row-major.
    pub pixels: Vec<u8>,
}

/// Splits a batch file's contents into records.
pub fn parse_cifar_batch(bytes: &[u8]) -> Result<Vec<Cifar10Record>> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        return Err(Error::Dataset(format!(
            "{} bytes is not a multiple of the {CIFAR_RECORD_BYTES}-byte record size",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(CIFAR_RECORD_BYTES)
        .enumerate()
        .map(|(i, r)| {
            if usize::from(r[0]) >= CIFAR_CLASSES {
                return Err(Error::Dataset(format!("record {i} has label {}", r[0])));
            }
            Ok(Cifar10Record { label: r[0], pixels: r[1..].to_vec() })
        })
        .collect()
}

pub fn read_cifar_batch(path: &Path) -> Result<Vec<Cifar10Record>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar_batch(&bytes).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
}

/// Both CIFAR-10 splits, scaled to `[0, 1]` with the training-set channel
/// means subtracted.
#[derive(Debug, Clone)]
pub struct Cifar10 {
    pub train: InMemoryDataset,
    pub test: InMemoryDataset,
    /// Per-channel mean of the scaled training pixels.
    pub mean: [f64; CIFAR_CHANNELS],
}

/// Loads the five training batches and the test batch from `dir`, in file
/// order.
pub fn load_cifar10(dir: &Path) -> Result<Cifar10> {
    let mut train = Vec::new();
    for name in CIFAR_TRAIN_FILES {
        train.extend(read_cifar_batch(&dir.join(name))?);
    }
    let test = read_cifar_batch(&dir.join(CIFAR_TEST_FILE))?;
    cifar_from_records(&train, &test)
}

/// Normalizes already parsed records.
pub fn cifar_from_records(train: &[Cifar10Record], test: &[Cifar10Record]) -> Result<Cifar10> {
    if train.is_empty() {
        return Err(Error::Dataset("no training records".into()));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut mean = [0.0; CIFAR_CHANNELS];
    for r in train {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += r.pixels[c * plane..(c + 1) * plane].iter().map(|&p| f64::from(p)).sum::<f64>();
        }
    }
    for m in &mut mean {
        *m /= 255.0 * (train.len() * plane) as f64;
    }
    let to_dataset = |records: &[Cifar10Record]| -> Result<InMemoryDataset> {
        let mut inputs = Vec::with_capacity(records.len() * CIFAR_PIXELS);
        for r in records {
            inputs.extend(r.pixels.iter().enumerate().map(|(i, &p)| f64::from(p) / 255.0 - mean[i / plane]));
        }
        let labels = records.iter().map(|r| usize::from(r.label)).collect();
        Ok(InMemoryDataset::from_flat(CIFAR_PIXELS, inputs, labels, CIFAR_CLASSES)?)
    };
    Ok(Cifar10 { train: to_dataset(train)?, test: to_dataset(test)?, mean })
}

/// Random horizontal flip followed by a random crop of the image padded with
/// [`CROP_PADDING`] zeros on every side. `x` is one image in plane order.
pub fn augment_cifar<R: Rng + ?Sized>(x: &mut [f64], rng: &mut R) {
    debug_assert_eq!(x.len(), CIFAR_PIXELS);
    let flip = rng.random_bool(0.5);
    let pad = CROP_PADDING as i32;
    let dy = rng.random_range(-pad..=pad);
    let dx = rng.random_range(-pad..=pad);
    let side = CIFAR_SIDE as i32;
    let src = x.to_vec();
    for c in 0..CIFAR_CHANNELS {
        let plane = &src[c * CIFAR_SIDE * CIFAR_SIDE..(c + 1) * CIFAR_SIDE * CIFAR_SIDE];
        for row in 0..side {
            for col in 0..side {
                let (sr, sc) = (row + dy, col + dx);
                let sc = if flip { side - 1 - sc } else { sc };
                let v = if (0..side).contains(&sr) && (0..side).contains(&sc) {
                    plane[(sr * side + sc) as usize]
                } else {
                    0.0
                };
                x[c * CIFAR_SIDE * CIFAR_SIDE + (row * side + col) as usize] = v;
            }
        }
    }
}

/// Radius of the larger moon.
pub const MOONS_SCALE: f64 = 3.0;
/// Standard deviation of the Gaussian noise, relative to [`MOONS_SCALE`].
pub const MOONS_NOISE: f64 = 0.1;

/// `n` points of two interleaved half circles with labels alternating
/// between 0 and 1, scaled by [`MOONS_SCALE`].
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Result<InMemoryDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Usage(format!("moons noise: {e}")))?;
    let mut inputs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.random_range(0.0..PI);
        let label = i % 2;
        let (x, y) = if label == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        inputs.push(MOONS_SCALE * (x + normal.sample(&mut rng)));
        inputs.push(MOONS_SCALE * (y + normal.sample(&mut rng)));
        labels.push(label);
    }
    Ok(InMemoryDataset::from_flat(2, inputs, labels, 2)?)
}
