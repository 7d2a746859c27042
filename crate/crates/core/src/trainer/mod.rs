//! One-stage training: per step, draw foreground/background pairs, build
//! blended views, run both heads, and take one SGD step on the combined
//! classification + contrastive objective. Also evaluation and the
//! checkpoint round-trip.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::dataset::{
    foreground_sampling_probs, split_classes, ClassStats, Dataset, SplitAssignment, SplitTag,
};
use crate::error::{Error, Result};
use crate::mixer::{
    make_plain_view, make_training_view, sample_lambda, AugmentPolicy, MixOp, MixParams,
    MixRecord, Placement,
};
use crate::model::{ModelLayout, ModelParams};
use crate::pairloss::{balanced_ce, classify_pairs, smc_loss_variant, total_loss, WeightScheme};
use crate::rng::{self, RngState};
use crate::sgd::{sgd_step, SgdState};
use crate::tape::Tape;
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Keeps the training stream disjoint from dataset-synthesis streams
/// under a shared seed.
const SALT_TRAIN: u64 = 0x007e_a217;

/// Rows per forward chunk during evaluation; bounds tape memory.
const EVAL_CHUNK: usize = 256;

/// Full hyperparameter surface of one run. Missing JSON keys take the
/// reference defaults; unknown keys are rejected outright.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Contrastive loss weight η; 0 drops the contrastive branch.
    pub eta: f64,
    /// Contrastive temperature τ.
    pub tau: f64,
    /// Diagnostics temperature τ'.
    pub tau_prime: f64,
    /// Beta(α,α) shape for the combination ratio.
    pub alpha: f64,
    /// Sampling concentration γ (0 = uniform over classes).
    pub gamma: f64,
    pub full_lambda_range: bool,
    pub mix_op: MixOp,
    pub placement: Placement,
    pub weight_scheme: WeightScheme,
    pub seed: u64,
    pub encoder_widths: Vec<usize>,
    pub head_dim: usize,
    pub split_t_many: u32,
    pub split_t_few: u32,
    /// Two blended views per pair double the contrastive batch.
    pub two_views: bool,
    /// Both views of a pair reuse one λ draw.
    pub shared_lambda: bool,
    /// Off: plain per-sample views, uniform instance sampling (the CE
    /// baseline data path).
    pub mixing: bool,
    /// Adds log class priors to the logits inside the training loss.
    pub prior_compensation: bool,
    /// Also adds them at evaluation time (off = argmax of raw logits).
    pub eval_with_prior: bool,
    pub pad: usize,
    pub flip_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 64,
            lr: 0.1,
            lr_decay_epochs: vec![40, 50],
            lr_decay_factor: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            eta: 0.1,
            tau: 0.1,
            tau_prime: 10.0,
            alpha: 1.0,
            gamma: 1.0,
            full_lambda_range: false,
            mix_op: MixOp::Resize,
            placement: Placement::BeforeMix,
            weight_scheme: WeightScheme::Weighted,
            seed: 0,
            encoder_widths: vec![256, 128],
            head_dim: 128,
            split_t_many: 100,
            split_t_few: 20,
            two_views: true,
            shared_lambda: false,
            mixing: true,
            prior_compensation: true,
            eval_with_prior: false,
            pad: 4,
            flip_prob: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::contract(format!("config `{key}`: {why}")));
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("{} is not a nonnegative float", self.lr));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor", format!("{} outside (0,1]", self.lr_decay_factor));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", format!("{} outside [0,1)", self.momentum));
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay", format!("{} is negative", self.weight_decay));
        }
        if self.eta < 0.0 {
            return bad("eta", format!("{} is negative", self.eta));
        }
        if self.tau <= 0.0 {
            return bad("tau", format!("{} is not positive", self.tau));
        }
        if self.tau_prime <= 0.0 {
            return bad("tau_prime", format!("{} is not positive", self.tau_prime));
        }
        if self.alpha <= 0.0 {
            return bad("alpha", format!("{} is not positive", self.alpha));
        }
        if self.gamma < 0.0 {
            return bad("gamma", format!("{} is negative", self.gamma));
        }
        if self.encoder_widths.is_empty() {
            return bad("encoder_widths", "needs at least one layer".into());
        }
        if self.encoder_widths.iter().any(|&w| w == 0) {
            return bad("encoder_widths", "zero-width layer".into());
        }
        if self.head_dim == 0 {
            return bad("head_dim", "must be at least 1".into());
        }
        if self.split_t_many <= self.split_t_few {
            return bad(
                "split_t_many",
                format!("{} must exceed split_t_few {}", self.split_t_many, self.split_t_few),
            );
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("flip_prob", format!("{} outside [0,1]", self.flip_prob));
        }
        Ok(())
    }

    /// Stable serialization: field order is fixed by the struct, so the
    /// hash is independent of key order in whatever file the config came
    /// from.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Step schedule: the base lr multiplied by the decay factor once per
    /// passed decay epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.lr * self.lr_decay_factor.powi(decays as i32)
    }

    fn layout_for(&self, dataset: &Dataset) -> ModelLayout {
        ModelLayout {
            input_dim: dataset.dims().numel(),
            encoder_widths: self.encoder_widths.clone(),
            head_dim: self.head_dim,
            num_classes: dataset.num_classes(),
        }
    }
}

/// Mean per-class accuracy within each frequency split. A split with no
/// scorable class is absent rather than zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracies {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub many: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub medium: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub few: Option<f64>,
    pub all: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub bce: f64,
    pub smc: f64,
    pub total: f64,
    /// Accuracy on the training set (the loop never sees a test set).
    pub accuracy: SplitAccuracies,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// One JSON object per epoch per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.epochs {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<TrainLog> {
        let mut epochs = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            epochs.push(serde_json::from_str(line)?);
        }
        Ok(TrainLog { epochs })
    }
}

/// Everything needed to evaluate or continue a run: the resumed training
/// is bit-identical to the uninterrupted one because parameters,
/// momentum buffers, and the RNG position are all captured.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub optimizer: SgdState,
    pub stats: ClassStats,
    /// Epochs completed.
    pub epoch: usize,
    pub rng: RngState,
    pub log: TrainLog,
}

impl Checkpoint {
    /// The many/medium/few assignment implied by the training counts.
    pub fn split(&self) -> SplitAssignment {
        split_classes(&self.stats.counts, self.config.split_t_many, self.config.split_t_few)
    }
}

/// Per-class accuracies (absent for classes with no test samples) plus
/// split aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<Option<f64>>,
    pub splits: SplitAccuracies,
}

/// Runs the full schedule from a fresh initialization.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<Checkpoint> {
    train_until(config, dataset, config.epochs)
}

/// Runs from a fresh initialization up to `stop_epoch` (clamped to the
/// schedule); `resume` continues the rest.
pub fn train_until(
    config: &TrainConfig,
    dataset: &Dataset,
    stop_epoch: usize,
) -> Result<Checkpoint> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("training dataset is empty"));
    }
    let stats = ClassStats::from_counts(dataset.counts());
    let mut rng = rng::substream(rng::mix_seed(config.seed, SALT_TRAIN), 0);
    let params = ModelParams::init(config.layout_for(dataset), &mut rng);
    let optimizer = SgdState::new(&params.tensors);
    let ck = Checkpoint {
        config: config.clone(),
        params,
        optimizer,
        stats,
        epoch: 0,
        rng: RngState::capture(&rng),
        log: TrainLog::default(),
    };
    run_to(ck, dataset, stop_epoch.min(config.epochs))
}

/// Continues a checkpoint to the end of its schedule.
pub fn resume(ck: Checkpoint, dataset: &Dataset) -> Result<Checkpoint> {
    let target = ck.config.epochs;
    if dataset.counts() != ck.stats.counts {
        return Err(Error::contract(
            "resume dataset's class counts differ from the checkpoint's",
        ));
    }
    run_to(ck, dataset, target)
}

fn run_to(mut ck: Checkpoint, dataset: &Dataset, target_epoch: usize) -> Result<Checkpoint> {
    let config = ck.config.clone();
    let num_classes = dataset.num_classes();
    if ck.params.layout.num_classes != num_classes
        || ck.params.layout.input_dim != dataset.dims().numel()
    {
        return Err(Error::contract("checkpoint layout does not fit the dataset"));
    }
    let q = foreground_sampling_probs(dataset.counts(), config.gamma);
    let split = ck.split();
    let steps_per_epoch = dataset.len().div_ceil(config.batch_size);
    let zero_prior = vec![0.0; num_classes];
    let mut rng = ck.rng.restore();

    for epoch in ck.epoch..target_epoch {
        let lr = config.lr_at(epoch);
        let (mut bce_sum, mut smc_sum, mut total_sum) = (0.0, 0.0, 0.0);
        for step in 0..steps_per_epoch {
            let (views, records) = build_batch(&config, dataset, &q, &mut rng)?;
            let n = records.len();

            let mut tape = Tape::new();
            let model = ck.params.bind(&mut tape);
            let x = tape.leaf(&views);
            let feat = model.encode(&mut tape, x);
            let logits = model.classify(&mut tape, feat);
            let mut labels = Vec::with_capacity(n * num_classes);
            for r in &records {
                labels.extend_from_slice(&r.soft_label);
            }
            let labels = Tensor::matrix(n, num_classes, labels);
            let prior: &[f64] = if config.prior_compensation {
                &ck.stats.log_prior
            } else {
                &zero_prior
            };
            let l_bce = balanced_ce(&mut tape, logits, &labels, prior);

            let (root, smc_var) = if config.eta > 0.0 && n >= 2 {
                let z = model.project(&mut tape, feat);
                let sets = classify_pairs(&records);
                let l_smc =
                    smc_loss_variant(&mut tape, z, &sets, &records, config.tau, config.weight_scheme)?;
                (total_loss(&mut tape, l_bce, l_smc, config.eta), Some(l_smc))
            } else {
                (l_bce, None)
            };

            let (total, grads) = tape.eval_with_grad(root, model.params()).map_err(|e| match e {
                Error::NumericFault { op, detail } => Error::Diverged {
                    step: epoch * steps_per_epoch + step,
                    records: format!(
                        "{op}: {detail}; batch records: {}",
                        serde_json::to_string(&records).unwrap_or_default()
                    ),
                },
                other => other,
            })?;
            sgd_step(
                &mut ck.params.tensors,
                &grads,
                &mut ck.optimizer,
                lr,
                config.momentum,
                config.weight_decay,
            );

            bce_sum += tape.scalar(l_bce);
            smc_sum += smc_var.map_or(0.0, |v| tape.scalar(v));
            total_sum += total;
        }

        let report = evaluate_params(&ck.params, dataset, &split, eval_prior(&config, &ck.stats))?;
        let denominator = steps_per_epoch as f64;
        ck.log.epochs.push(EpochRecord {
            epoch,
            lr,
            bce: bce_sum / denominator,
            smc: smc_sum / denominator,
            total: total_sum / denominator,
            accuracy: report.splits,
        });
        ck.epoch = epoch + 1;
        ck.rng = RngState::capture(&rng);
    }
    Ok(ck)
}

/// One step's batch: the design matrix (one row per view) and the view
/// records in row order. Views of a pair are adjacent rows.
fn build_batch(
    config: &TrainConfig,
    dataset: &Dataset,
    q: &[f64],
    rng: &mut crate::rng::Prng,
) -> Result<(Tensor, Vec<MixRecord>)> {
    let dims = dataset.dims();
    let views_per = if config.two_views { 2 } else { 1 };
    let rows = config.batch_size * views_per;
    let mut pixels = Vec::with_capacity(rows * dims.numel());
    let mut records = Vec::with_capacity(rows);
    let policy = AugmentPolicy {
        pad: config.pad,
        flip_prob: config.flip_prob,
        placement: config.placement,
    };

    if config.mixing {
        let params = MixParams {
            num_classes: dataset.num_classes(),
            alpha: config.alpha,
            full_range: config.full_lambda_range,
            mix_op: config.mix_op,
            policy,
        };
        let pairs = crate::dataset::sample_mix_indices(dataset, q, config.batch_size, rng)?;
        for (fg, bg) in pairs {
            let shared = (config.shared_lambda && views_per > 1)
                .then(|| sample_lambda(config.alpha, config.full_lambda_range, rng));
            for _ in 0..views_per {
                let (px, record) = make_training_view(
                    dataset.sample(fg),
                    dataset.sample(bg),
                    dims,
                    &params,
                    shared,
                    rng,
                );
                pixels.extend(px.iter().map(|&p| p as f64));
                records.push(record);
            }
        }
    } else {
        for _ in 0..config.batch_size {
            let i = rng.random_range(0..dataset.len());
            for _ in 0..views_per {
                let (px, record) =
                    make_plain_view(dataset.sample(i), dims, dataset.num_classes(), &policy, rng);
                pixels.extend(px.iter().map(|&p| p as f64));
                records.push(record);
            }
        }
    }
    Ok((Tensor::matrix(rows, dims.numel(), pixels), records))
}

fn eval_prior<'a>(config: &TrainConfig, stats: &'a ClassStats) -> Option<&'a [f64]> {
    config.eval_with_prior.then_some(stats.log_prior.as_slice())
}

/// Evaluates a checkpoint on a dataset sharing its class vocabulary.
/// Predictions are the argmax of raw logits; the training-time prior
/// shift is applied only under `eval_with_prior`. Splits follow the
/// checkpoint's training counts, not the evaluation set's.
pub fn evaluate(ck: &Checkpoint, dataset: &Dataset) -> Result<EvalReport> {
    if dataset.num_classes() != ck.stats.num_classes() {
        return Err(Error::contract(format!(
            "evaluation dataset has {} classes, checkpoint has {}",
            dataset.num_classes(),
            ck.stats.num_classes()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::contract("evaluation dataset is empty"));
    }
    evaluate_params(&ck.params, dataset, &ck.split(), eval_prior(&ck.config, &ck.stats))
}

fn evaluate_params(
    params: &ModelParams,
    dataset: &Dataset,
    split: &SplitAssignment,
    prior: Option<&[f64]>,
) -> Result<EvalReport> {
    let num_classes = dataset.num_classes();
    let mut correct = vec![0u32; num_classes];
    let mut seen = vec![0u32; num_classes];
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let x = dataset.to_matrix(chunk);
        let mut tape = Tape::new();
        let model = params.bind(&mut tape);
        let xv = tape.leaf(&x);
        let feat = model.encode(&mut tape, xv);
        let logits = model.classify(&mut tape, feat);
        let values = tape.value(logits);
        for (row, &i) in chunk.iter().enumerate() {
            let scores = &values[row * num_classes..(row + 1) * num_classes];
            let shifted =
                |k: usize| scores[k] + prior.map_or(0.0, |m| m[k]);
            // Ties go to the lower index.
            let mut best = 0;
            for k in 1..num_classes {
                if shifted(k) > shifted(best) {
                    best = k;
                }
            }
            let truth = dataset.sample(i).class_id;
            seen[truth] += 1;
            if best == truth {
                correct[truth] += 1;
            }
        }
    }

    let per_class: Vec<Option<f64>> = correct
        .iter()
        .zip(&seen)
        .map(|(&c, &n)| (n > 0).then(|| c as f64 / n as f64))
        .collect();
    let mean_over = |classes: &[usize]| -> Option<f64> {
        let values: Vec<f64> = classes.iter().filter_map(|&k| per_class[k]).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    let all_classes: Vec<usize> = (0..num_classes).collect();
    let splits = SplitAccuracies {
        many: mean_over(&split.classes_with(SplitTag::Many)),
        medium: mean_over(&split.classes_with(SplitTag::Medium)),
        few: mean_over(&split.classes_with(SplitTag::Few)),
        all: mean_over(&all_classes).expect("nonempty dataset has scorable classes"),
    };
    Ok(EvalReport { per_class, splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_longtail, ImageDims};

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            lr: 0.05,
            lr_decay_epochs: vec![2],
            encoder_widths: vec![32, 16],
            head_dim: 16,
            split_t_many: 12,
            split_t_few: 6,
            pad: 1,
            ..TrainConfig::default()
        }
    }

    fn tiny_dataset(seed: u64) -> Dataset {
        synth_longtail(4, 8.0, 16, ImageDims { c: 1, h: 8, w: 8 }, seed)
            .unwrap()
            .dataset
    }

    #[test]
    fn config_defaults_and_hash_are_stable() {
        let config = TrainConfig::default();
        assert_eq!(config.eta, 0.1);
        assert_eq!(config.tau, 0.1);
        assert_eq!(config.alpha, 1.0);
        assert_eq!(config.gamma, 1.0);
        assert_eq!(config.head_dim, 128);
        assert_eq!(config.lr_decay_factor, 0.1);
        assert_eq!(config.config_hash(), TrainConfig::default().config_hash());
        let other = TrainConfig { eta: 0.2, ..TrainConfig::default() };
        assert_ne!(config.config_hash(), other.config_hash());
    }

    #[test]
    fn unknown_config_key_is_rejected_by_name() {
        let err = serde_json::from_str::<TrainConfig>("{\"etaa\": 0.1}").unwrap_err();
        assert!(err.to_string().contains("etaa"), "message was {err}");
    }

    #[test]
    fn lr_schedule_decays_at_the_named_epochs() {
        let config = TrainConfig::default();
        assert_eq!(config.lr_at(0), 0.1);
        assert_eq!(config.lr_at(39), 0.1);
        assert!((config.lr_at(40) - 0.01).abs() < 1e-15);
        assert!((config.lr_at(50) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn training_is_deterministic() {
        let dataset = tiny_dataset(5);
        let config = tiny_config();
        let a = train(&config, &dataset).unwrap();
        let b = train(&config, &dataset).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params.tensors, b.params.tensors);
        assert_eq!(a.rng, b.rng);
    }

    #[test]
    fn resume_matches_the_uninterrupted_run_bitwise() {
        let dataset = tiny_dataset(6);
        let config = tiny_config();
        let full = train(&config, &dataset).unwrap();
        let half = train_until(&config, &dataset, 1).unwrap();
        assert_eq!(half.epoch, 1);
        let resumed = resume(half, &dataset).unwrap();
        assert_eq!(resumed.epoch, full.epoch);
        assert_eq!(resumed.log, full.log);
        for (a, b) in resumed.params.tensors.iter().zip(&full.params.tensors) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(resumed.rng, full.rng);
    }

    #[test]
    fn degenerate_single_class_run_drives_the_loss_down() {
        // η=0, one class, no mixing: plain CE toward −ln 1 = 0.
        let source = synth_longtail(2, 1.0, 12, ImageDims { c: 1, h: 8, w: 8 }, 9)
            .unwrap()
            .dataset;
        let samples: Vec<_> = source
            .samples()
            .iter()
            .filter(|s| s.class_id == 0)
            .cloned()
            .collect();
        let dataset = Dataset::new(source.dims(), 1, samples).unwrap();
        let config = TrainConfig {
            epochs: 50,
            batch_size: 8,
            lr: 0.5,
            lr_decay_epochs: vec![],
            eta: 0.0,
            mixing: false,
            prior_compensation: false,
            two_views: false,
            encoder_widths: vec![16],
            head_dim: 8,
            pad: 0,
            flip_prob: 0.0,
            split_t_many: 2,
            split_t_few: 1,
            ..TrainConfig::default()
        };
        let ck = train(&config, &dataset).unwrap();
        assert_eq!(ck.log.epochs.len(), 50);
        let last = ck.log.epochs.last().unwrap();
        assert!(last.total < 0.01, "final loss {}", last.total);
        for pair in ck.log.epochs.windows(2) {
            assert!(pair[1].total <= pair[0].total, "loss rose");
        }
    }

    #[test]
    fn both_loss_components_are_logged_and_decrease() {
        let dataset = tiny_dataset(11);
        let config = TrainConfig {
            epochs: 6,
            lr: 0.05,
            lr_decay_epochs: vec![],
            ..tiny_config()
        };
        let ck = train(&config, &dataset).unwrap();
        assert!(ck.log.epochs.iter().all(|e| e.smc > 0.0));
        let head = &ck.log.epochs[0];
        let tail = ck.log.epochs.last().unwrap();
        assert!(tail.total < head.total, "{} !< {}", tail.total, head.total);
    }

    #[test]
    fn evaluate_reports_splits_from_training_counts() {
        let dataset = tiny_dataset(13);
        let config = tiny_config();
        let ck = train_until(&config, &dataset, 1).unwrap();
        let report = evaluate(&ck, &dataset).unwrap();
        assert_eq!(report.per_class.len(), 4);
        assert!(report.per_class.iter().all(|a| a.is_some()));
        // counts 16,16^(2/3)... thresholds 12/6 → class 0 many (16),
        // classes with counts in (6,12] medium, ≤6 few.
        assert!(report.splits.all >= 0.0 && report.splits.all <= 1.0);
        let split = ck.split();
        assert_eq!(split.classes_with(SplitTag::Many), vec![0]);
    }

    #[test]
    fn single_class_eval_set_reports_other_splits_absent() {
        let dataset = tiny_dataset(17);
        let config = tiny_config();
        let ck = train_until(&config, &dataset, 1).unwrap();
        // Keep only class 0 samples.
        let samples: Vec<_> = dataset
            .samples()
            .iter()
            .filter(|s| s.class_id == 0)
            .cloned()
            .collect();
        let solo = Dataset::new(dataset.dims(), 4, samples).unwrap();
        let report = evaluate(&ck, &solo).unwrap();
        assert!(report.per_class[0].is_some());
        assert!(report.per_class[1..].iter().all(|a| a.is_none()));
        assert!(report.splits.medium.is_none());
        assert!(report.splits.few.is_none());
        assert_eq!(Some(report.splits.all), report.per_class[0]);
    }

    #[test]
    fn log_jsonl_round_trips() {
        let dataset = tiny_dataset(19);
        let ck = train_until(&tiny_config(), &dataset, 2).unwrap();
        let text = ck.log.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        let back = TrainLog::from_jsonl(&text).unwrap();
        assert_eq!(back, ck.log);
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let dataset = tiny_dataset(23);
        let ck = train_until(&tiny_config(), &dataset, 1).unwrap();
        let other = synth_longtail(3, 4.0, 12, ImageDims { c: 1, h: 8, w: 8 }, 23)
            .unwrap()
            .dataset;
        assert!(matches!(evaluate(&ck, &other), Err(Error::Contract(_))));
    }
}
