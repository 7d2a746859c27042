//! Procedural long-tailed dataset generator.
//!
//! Each class is a sinusoidal grating with its own spatial frequency,
//! orientation, phase, amplitude, and per-channel brightness offsets;
//! instances jitter the frequency, orientation, amplitude, and brightness,
//! shift the pattern, and add pixel noise. Class parameters and instance
//! noise live on separate RNG substreams, so a class's look depends only
//! on (seed, class) and an instance's noise only on (seed, salt, class,
//! index): regenerating with different counts or a different instance
//! salt never changes the class signatures.
//!
//! The jitters act on the class-defining parameters themselves, so each
//! class occupies a region of signature space rather than a point: a class
//! is easy to estimate from hundreds of instances and hard to pin down
//! from a handful, which is the regime a long-tailed benchmark has to
//! exercise.

use super::{ClassStats, Dataset, ImageDims, ImageSample, SemanticVectors};
use crate::dataset::long_tail_counts;
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use std::f64::consts::PI;

const SALT_CLASS: u64 = 0x00c1_a550;
const SALT_INSTANCE: u64 = 0x0125_7a9c;

/// A synthesized dataset with its statistics and the generator's class
/// parameter vectors as ground-truth semantics.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub stats: ClassStats,
    pub semantic: SemanticVectors,
}

#[derive(Debug, Clone)]
struct ClassSignature {
    freq: f64,
    theta: f64,
    phase: f64,
    amp: f64,
    offsets: Vec<f64>,
}

impl ClassSignature {
    fn draw(seed: u64, class: usize, channels: usize) -> Self {
        let mut rng = rng::substream(rng::mix_seed(seed, SALT_CLASS), class as u64);
        ClassSignature {
            freq: rng.random_range(1.5..5.0),
            theta: rng.random_range(0.0..PI),
            phase: rng.random_range(0.0..2.0 * PI),
            amp: rng.random_range(0.2..0.35),
            offsets: (0..channels).map(|_| rng.random_range(-0.15..0.15)).collect(),
        }
    }

    /// Class parameter vector; orientation is encoded at double angle
    /// because a grating is π-periodic in its direction.
    fn semantic_vector(&self) -> Vec<f64> {
        let mut v = vec![
            self.freq / 5.0,
            (2.0 * self.theta).cos(),
            (2.0 * self.theta).sin(),
            self.phase.cos(),
            self.phase.sin(),
            self.amp,
        ];
        v.extend_from_slice(&self.offsets);
        v
    }
}

/// Synthesizes a long-tailed dataset with the default instance salt 0.
pub fn synth_longtail(
    num_classes: usize,
    rho: f64,
    n_max: u32,
    dims: ImageDims,
    seed: u64,
) -> Result<SynthOutput> {
    synth_longtail_salted(num_classes, rho, n_max, dims, seed, 0)
}

/// Synthesizes a long-tailed dataset. `instance_salt` shifts only the
/// instance-noise streams: a salted regeneration shares every class
/// signature and semantic vector with the unsalted one but holds disjoint
/// instances, which is how matching train/test sets are made.
pub fn synth_longtail_salted(
    num_classes: usize,
    rho: f64,
    n_max: u32,
    dims: ImageDims,
    seed: u64,
    instance_salt: u64,
) -> Result<SynthOutput> {
    assert!(num_classes >= 2, "need at least two classes");
    assert!(rho >= 1.0, "imbalance ratio below 1");
    assert!(n_max >= 1, "empty head class");
    assert!(dims.c >= 1, "zero channels");
    if dims.h < 8 || dims.w < 8 {
        return Err(Error::contract(format!(
            "image sides must be at least 8, got {}x{}",
            dims.h, dims.w
        )));
    }

    let counts = long_tail_counts(num_classes, rho, n_max);
    let signatures: Vec<ClassSignature> = (0..num_classes)
        .map(|k| ClassSignature::draw(seed, k, dims.c))
        .collect();

    let instance_seed = rng::mix_seed(seed, SALT_INSTANCE.wrapping_add(instance_salt));
    let mut samples = Vec::with_capacity(counts.iter().map(|&n| n as usize).sum());
    for (k, &n) in counts.iter().enumerate() {
        for i in 0..n {
            let stream = ((k as u64) << 32) | i as u64;
            let mut inst_rng = rng::substream(instance_seed, stream);
            let pixels = render(&signatures[k], dims, &mut inst_rng);
            samples.push(ImageSample {
                pixels,
                class_id: k,
                instance_id: samples.len() as u64,
            });
        }
    }

    let stats = ClassStats::from_counts(&counts);
    let semantic =
        SemanticVectors::new(signatures.iter().map(|s| s.semantic_vector()).collect())?;
    let dataset = Dataset::new(dims, num_classes, samples)?;
    Ok(SynthOutput {
        dataset,
        stats,
        semantic,
    })
}

/// One instance: sine grating with the class parameters jittered per
/// instance, plus random translation, a brightness shift, and pixel noise,
/// clamped to [0,1] and quantized to f32 so in-memory pixels round-trip the
/// file format bit-exactly.
///
/// The jitters act on the class-defining parameters themselves (frequency,
/// orientation, brightness), so each class occupies a region rather than a
/// point and instances come in a spectrum from central to borderline. A
/// class region is easy to estimate from hundreds of instances and hard
/// from a handful, which is the regime a long-tailed benchmark has to
/// exercise; plain pixel noise cannot produce it because linear readouts
/// average it away.
fn render(sig: &ClassSignature, dims: ImageDims, rng: &mut rng::Prng) -> Vec<f32> {
    let amp = sig.amp * (1.0 + 0.5 * (rng.random::<f64>() - 0.5));
    let freq = sig.freq * (1.0 + 0.16 * (rng.random::<f64>() - 0.5));
    let theta = sig.theta + rng.random_range(-0.10..0.10);
    let shade = rng.random_range(-0.10..0.10);
    let dx = rng.random_range(-3.0..3.0);
    let dy = rng.random_range(-3.0..3.0);
    let scale = 2.0 * PI * freq / dims.h.max(dims.w) as f64;
    let (cos_t, sin_t) = (theta.cos(), theta.sin());

    let mut pixels = Vec::with_capacity(dims.numel());
    for ch in 0..dims.c {
        let base = 0.5 + sig.offsets[ch] + shade;
        for y in 0..dims.h {
            for x in 0..dims.w {
                let u = (x as f64 + dx) * cos_t + (y as f64 + dy) * sin_t;
                let wave = base + amp * (scale * u + sig.phase).sin();
                let noisy = wave + rng.random_range(-0.15..0.15);
                pixels.push(noisy.clamp(0.0, 1.0) as f32);
            }
        }
    }
    pixels
}
