//! Long-tailed datasets: synthesis, class statistics, priors, sampling
//! probabilities, many/medium/few splits, and (de)serialization.

pub(crate) mod io;
mod synth;

pub use io::{load_dataset, load_semantic_vectors, save_dataset, save_semantic_vectors};
pub use synth::{synth_longtail, synth_longtail_salted, SynthOutput};

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Channels × height × width of every image in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl ImageDims {
    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// One labeled image, pixels row-major per channel, values in [0,1].
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub pixels: Vec<f32>,
    pub class_id: usize,
    pub instance_id: u64,
}

/// Immutable labeled image collection with a per-class instance index.
#[derive(Debug, Clone)]
pub struct Dataset {
    dims: ImageDims,
    counts: Vec<u32>,
    samples: Vec<ImageSample>,
    class_index: Vec<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset from samples, counting classes from the labels.
    /// Every sample must have `class_id < num_classes` and a pixel buffer
    /// matching `dims`.
    pub fn new(dims: ImageDims, num_classes: usize, samples: Vec<ImageSample>) -> Result<Self> {
        let mut counts = vec![0u32; num_classes];
        let mut class_index = vec![Vec::new(); num_classes];
        for (i, s) in samples.iter().enumerate() {
            if s.class_id >= num_classes {
                return Err(Error::contract(format!(
                    "sample {i} has class {} outside [0,{num_classes})",
                    s.class_id
                )));
            }
            if s.pixels.len() != dims.numel() {
                return Err(Error::contract(format!(
                    "sample {i} has {} pixels, dims require {}",
                    s.pixels.len(),
                    dims.numel()
                )));
            }
            counts[s.class_id] += 1;
            class_index[s.class_id].push(i);
        }
        Ok(Dataset {
            dims,
            counts,
            samples,
            class_index,
        })
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &ImageSample {
        &self.samples[i]
    }

    /// Indices of every instance of class `k`.
    pub fn class_instances(&self, k: usize) -> &[usize] {
        &self.class_index[k]
    }

    /// Flattened f64 rows for the given sample indices, shape [n, c·h·w].
    pub fn to_matrix(&self, indices: &[usize]) -> Tensor {
        let d = self.dims.numel();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend(self.samples[i].pixels.iter().map(|&p| p as f64));
        }
        Tensor::new(vec![indices.len(), d], data)
    }
}

/// Per-class counts with derived priors and the compensation offsets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStats {
    pub counts: Vec<u32>,
    pub prior: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub imbalance_ratio: f64,
}

impl ClassStats {
    /// All counts must be positive (a zero count has no log-prior).
    pub fn from_counts(counts: &[u32]) -> Self {
        assert!(!counts.is_empty(), "class stats over zero classes");
        assert!(
            counts.iter().all(|&n| n > 0),
            "class stats require positive counts"
        );
        let total: u64 = counts.iter().map(|&n| n as u64).sum();
        let prior: Vec<f64> = counts.iter().map(|&n| n as f64 / total as f64).collect();
        let log_prior = prior.iter().map(|p| p.ln()).collect();
        let max = *counts.iter().max().unwrap() as f64;
        let min = *counts.iter().min().unwrap() as f64;
        ClassStats {
            counts: counts.to_vec(),
            prior,
            log_prior,
            imbalance_ratio: max / min,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }
}

/// Frequency regime of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Many,
    Medium,
    Few,
}

/// Per-class many/medium/few assignment with the thresholds that made it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub tags: Vec<SplitTag>,
    pub t_many: u32,
    pub t_few: u32,
}

impl SplitAssignment {
    /// Class indices carrying `tag`.
    pub fn classes_with(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.tags.len()).filter(|&k| self.tags[k] == tag).collect()
    }
}

/// The long-tail count profile n_k = round(n_max · ρ^(−k/(C−1))), floored
/// at 1 so every class stays populated.
pub fn long_tail_counts(num_classes: usize, rho: f64, n_max: u32) -> Vec<u32> {
    assert!(num_classes >= 2, "need at least two classes");
    assert!(rho >= 1.0, "imbalance ratio below 1");
    assert!(n_max >= 1, "empty head class");
    (0..num_classes)
        .map(|k| {
            let decay = rho.powf(-(k as f64) / (num_classes as f64 - 1.0));
            ((n_max as f64 * decay).round() as u32).max(1)
        })
        .collect()
}

/// Tags classes by count: many if n > t_many, few if n < t_few, medium
/// otherwise. Inequalities are strict, so boundary counts land in medium.
pub fn split_classes(counts: &[u32], t_many: u32, t_few: u32) -> SplitAssignment {
    assert!(t_many > t_few, "thresholds must satisfy t_many > t_few");
    let tags = counts
        .iter()
        .map(|&n| {
            if n > t_many {
                SplitTag::Many
            } else if n < t_few {
                SplitTag::Few
            } else {
                SplitTag::Medium
            }
        })
        .collect();
    SplitAssignment {
        tags,
        t_many,
        t_few,
    }
}

/// Imbalance-aware foreground class probabilities
/// q(k) = n_k^(−γ) / Σ_l n_l^(−γ). γ=0 is uniform; larger γ favors tails.
pub fn foreground_sampling_probs(counts: &[u32], gamma: f64) -> Vec<f64> {
    assert!(gamma >= 0.0, "negative gamma");
    assert!(
        counts.iter().all(|&n| n >= 1),
        "sampling probs require positive counts"
    );
    let weights: Vec<f64> = counts.iter().map(|&n| (n as f64).powf(-gamma)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Draws `batch_size` (foreground, background) index pairs.
///
/// Foregrounds pick a class by inverse CDF over `q`, then an instance
/// uniformly within it; backgrounds are uniform over all instances. A
/// foreground may coincide with its background (self-mix), which is left
/// in place and logged. Per pair the draw order is fixed: class, instance,
/// background.
pub fn sample_mix_indices(
    dataset: &Dataset,
    q: &[f64],
    batch_size: usize,
    rng: &mut Prng,
) -> Result<Vec<(usize, usize)>> {
    assert_eq!(q.len(), dataset.num_classes(), "q does not cover classes");
    let mut pairs = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut cls = dataset.num_classes() - 1;
        for (k, &qk) in q.iter().enumerate() {
            acc += qk;
            if u < acc {
                cls = k;
                break;
            }
        }
        let instances = dataset.class_instances(cls);
        if instances.is_empty() {
            return Err(Error::contract(format!("class {cls} has no instances")));
        }
        let fg = instances[rng.random_range(0..instances.len())];
        let bg = rng.random_range(0..dataset.len());
        if fg == bg {
            log::debug!("self-mix pair at index {fg}");
        }
        pairs.push((fg, bg));
    }
    Ok(pairs)
}

/// Per-class dense semantic vectors of one shared dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticVectors {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl SemanticVectors {
    /// One vector per class in class order; all must share a dimension and
    /// be nonzero.
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::contract("no semantic vectors"));
        }
        let dim = vectors[0].len();
        for (k, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::contract(format!(
                    "semantic vector for class {k} has dimension {} != {dim}",
                    v.len()
                )));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::contract(format!(
                    "semantic vector for class {k} is zero"
                )));
            }
        }
        Ok(SemanticVectors { dim, vectors })
    }

    pub fn num_classes(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn tiny_dataset(counts: &[u32]) -> Dataset {
        let dims = ImageDims { c: 1, h: 8, w: 8 };
        let mut samples = Vec::new();
        for (k, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                samples.push(ImageSample {
                    pixels: vec![0.5; dims.numel()],
                    class_id: k,
                    instance_id: samples.len() as u64,
                });
            }
        }
        Dataset::new(dims, counts.len(), samples).unwrap()
    }

    #[test]
    fn long_tail_profile_matches_hand_values() {
        assert_eq!(long_tail_counts(3, 100.0, 1000), vec![1000, 100, 10]);
        assert_eq!(
            long_tail_counts(10, 100.0, 500),
            vec![500, 300, 180, 108, 65, 39, 23, 14, 8, 5]
        );
    }

    #[test]
    fn unit_imbalance_gives_equal_counts() {
        assert_eq!(long_tail_counts(5, 1.0, 77), vec![77; 5]);
    }

    #[test]
    fn profile_is_nonincreasing_and_floored() {
        let counts = long_tail_counts(20, 10_000.0, 3);
        for w in counts.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(counts.iter().all(|&n| n >= 1));
    }

    #[test]
    fn stats_prior_sums_to_one_and_log_matches() {
        let stats = ClassStats::from_counts(&[1000, 100, 10]);
        let total: f64 = stats.prior.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for k in 0..3 {
            assert_eq!(stats.log_prior[k], stats.prior[k].ln());
        }
        assert_eq!(stats.imbalance_ratio, 100.0);
    }

    #[test]
    fn split_examples_and_boundary_rule() {
        let s = split_classes(&[1000, 50, 5], 100, 20);
        assert_eq!(s.tags, vec![SplitTag::Many, SplitTag::Medium, SplitTag::Few]);
        // Exactly at a threshold: strict inequalities put both in medium.
        let s = split_classes(&[100, 20], 100, 20);
        assert_eq!(s.tags, vec![SplitTag::Medium, SplitTag::Medium]);
    }

    #[test]
    fn sampling_probs_match_hand_values() {
        let q = foreground_sampling_probs(&[100, 10, 1], 1.0);
        assert!((q[0] - 0.009009).abs() < 1e-6);
        assert!((q[1] - 0.090090).abs() < 1e-6);
        assert!((q[2] - 0.900901).abs() < 1e-6);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_zero_is_uniform() {
        let q = foreground_sampling_probs(&[100, 10, 1], 0.0);
        for &p in &q {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_q_pins_the_foreground_class() {
        let ds = tiny_dataset(&[4, 3, 2]);
        let q = vec![0.0, 1.0, 0.0];
        let mut rng = rng::seeded(11);
        let pairs = sample_mix_indices(&ds, &q, 64, &mut rng).unwrap();
        for (fg, _) in pairs {
            assert_eq!(ds.sample(fg).class_id, 1);
        }
    }

    #[test]
    fn sampling_is_reproducible_per_seed() {
        let ds = tiny_dataset(&[5, 2]);
        let q = foreground_sampling_probs(ds.counts(), 1.0);
        let a = sample_mix_indices(&ds, &q, 32, &mut rng::seeded(3)).unwrap();
        let b = sample_mix_indices(&ds, &q, 32, &mut rng::seeded(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn semantic_vectors_reject_ragged_and_zero_rows() {
        assert!(SemanticVectors::new(vec![vec![1.0, 0.0], vec![1.0]]).is_err());
        assert!(SemanticVectors::new(vec![vec![0.0, 0.0]]).is_err());
        let sv = SemanticVectors::new(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(sv.dim(), 2);
        assert_eq!(sv.vector(1), &[0.0, 2.0]);
    }
}
