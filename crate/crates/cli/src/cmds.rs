//! One function per subcommand. Every command merges file config with
//! flag overrides, runs, prints a short summary unless `--quiet`, and
//! writes its artifacts plus exactly one manifest.

use crate::manifest::{canonical, write_manifest, CliError};
use crate::{AnalyzeArgs, EvalArgs, PreviewArgs, SynthArgs, TrainArgs, VerifyArgs};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use smc_core::analysis::{accuracy_report, FeatureSource, IsMetric};
use smc_core::dataset::{
    foreground_sampling_probs, load_dataset, load_semantic_vectors, sample_mix_indices,
    save_dataset, save_semantic_vectors, synth_longtail_salted, Dataset, ImageDims, ImageSample,
};
use smc_core::mixer::{make_training_view, AugmentPolicy, MixOp, MixParams, Placement};
use smc_core::pairloss::majority_class;
use smc_core::rng;
use smc_core::trainer::{
    self, evaluate, load_checkpoint, resume, save_checkpoint, train_until, SplitAccuracies,
    TrainConfig,
};
use smc_core::verify::{all_passed, run_verify, VerifyOptions};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Distinguishes preview's λ stream from training's.
const SALT_PREVIEW: u64 = 0x00b1_e4d7;

/// Parses a kebab-case enum value by its serde name, so flags and config
/// files accept exactly the same spellings.
pub fn parse_kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unrecognized value `{s}`"))
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CliError::config(format!("config `config`: cannot read {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("config {}: {e}", p.display())))
        }
    }
}

/// Input files are preconditions; anything wrong with one is a config
/// error naming the flag that pointed at it.
fn load_input<T>(
    flag: &str,
    path: &Path,
    f: impl FnOnce(&Path) -> smc_core::Result<T>,
) -> Result<T, CliError> {
    f(path).map_err(|e| CliError::config(format!("input `{flag}` ({}): {e}", path.display())))
}

fn out_or(common: &crate::Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn semantic_sidecar(dataset_path: &Path) -> PathBuf {
    dataset_path.with_extension("semantic.tsv")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn fmt_splits(s: &SplitAccuracies) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.4}"));
    format!(
        "many {} medium {} few {} all {:.4}",
        cell(s.many),
        cell(s.medium),
        cell(s.few),
        s.all
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SynthConfig {
    classes: usize,
    rho: f64,
    n_max: u32,
    channels: usize,
    height: usize,
    width: usize,
    instance_salt: u64,
    seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 10,
            rho: 100.0,
            n_max: 500,
            channels: 1,
            height: 28,
            width: 28,
            instance_salt: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: String| Err(CliError::config(format!("config `{key}`: {why}")));
        if self.classes < 2 {
            return bad("classes", format!("{} is below the minimum of 2", self.classes));
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return bad("rho", format!("{} is not a finite ratio >= 1", self.rho));
        }
        if self.n_max == 0 {
            return bad("n_max", "head class would be empty".into());
        }
        if self.channels == 0 {
            return bad("channels", "must be at least 1".into());
        }
        if self.height < 8 || self.width < 8 {
            return bad("height", format!("sides must be at least 8, got {}x{}", self.height, self.width));
        }
        Ok(())
    }
}

pub fn synth(args: &SynthArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let mut cfg: SynthConfig = load_config(&args.common.config)?;
    if let Some(v) = args.classes {
        cfg.classes = v;
    }
    if let Some(v) = args.rho {
        cfg.rho = v;
    }
    if let Some(v) = args.n_max {
        cfg.n_max = v;
    }
    if let Some(v) = args.channels {
        cfg.channels = v;
    }
    if let Some(v) = args.height {
        cfg.height = v;
    }
    if let Some(v) = args.width {
        cfg.width = v;
    }
    if let Some(v) = args.instance_salt {
        cfg.instance_salt = v;
    }
    if let Some(v) = args.common.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let (json, hash) = canonical(&cfg);

    let out = out_or(&args.common, "dataset.smcd");
    let dims = ImageDims { c: cfg.channels, h: cfg.height, w: cfg.width };
    let synth = synth_longtail_salted(
        cfg.classes,
        cfg.rho,
        cfg.n_max,
        dims,
        cfg.seed,
        cfg.instance_salt,
    )?;
    save_dataset(&synth.dataset, &out)?;
    let sem = semantic_sidecar(&out);
    save_semantic_vectors(&synth.semantic, &sem)?;

    if !args.common.quiet {
        println!(
            "wrote {}: {} samples, {} classes, counts {:?}",
            out.display(),
            synth.dataset.len(),
            cfg.classes,
            synth.dataset.counts()
        );
    }
    write_manifest(&out, "synth", &json, &hash, &[out.clone(), sem], started, 0)?;
    Ok(0)
}

pub fn train(args: &TrainArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let out = out_or(&args.common, "checkpoint.smck");

    let ck = if let Some(resume_path) = &args.resume {
        // The checkpoint's embedded config applies; anything that would
        // change it mid-run has no coherent meaning.
        let conflicting = args.common.config.is_some()
            || args.common.seed.is_some()
            || args.epochs.is_some()
            || args.batch_size.is_some()
            || args.eta.is_some()
            || args.stop_after.is_some();
        if conflicting {
            return Err(CliError::config(
                "config `resume`: cannot combine with config or schedule overrides \
                 (the checkpoint's embedded config applies)",
            ));
        }
        let ck = load_input("resume", resume_path, |p| load_checkpoint(p))?;
        let dataset = load_input("data", &args.data, |p| load_dataset(p))?;
        resume(ck, &dataset)?
    } else {
        let mut cfg: TrainConfig = load_config(&args.common.config)?;
        if let Some(v) = args.common.seed {
            cfg.seed = v;
        }
        if let Some(v) = args.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = args.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = args.eta {
            cfg.eta = v;
        }
        cfg.validate()?;
        let dataset = load_input("data", &args.data, |p| load_dataset(p))?;
        match args.stop_after {
            Some(epoch) => train_until(&cfg, &dataset, epoch)?,
            None => trainer::train(&cfg, &dataset)?,
        }
    };

    save_checkpoint(&ck, &out)?;
    let log_path = out.with_extension("log.jsonl");
    fs::write(&log_path, ck.log.to_jsonl())?;

    if !args.common.quiet {
        match ck.log.epochs.last() {
            Some(rec) => println!(
                "epoch {}: total {:.4} (bce {:.4}, smc {:.4}), train {}",
                rec.epoch,
                rec.total,
                rec.bce,
                rec.smc,
                fmt_splits(&rec.accuracy)
            ),
            None => println!("no epochs run"),
        }
        println!("wrote {} and {}", out.display(), log_path.display());
    }
    let json = ck.config.canonical_json();
    let hash = ck.config.config_hash();
    write_manifest(&out, "train", &json, &hash, &[out.clone(), log_path], started, 0)?;
    Ok(0)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalConfig {
    with_prior: bool,
}

pub fn eval(args: &EvalArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let mut cfg: EvalConfig = load_config(&args.common.config)?;
    if args.with_prior {
        cfg.with_prior = true;
    }
    let (json, hash) = canonical(&cfg);

    let mut ck = load_input("checkpoint", &args.checkpoint, |p| load_checkpoint(p))?;
    let dataset = load_input("data", &args.data, |p| load_dataset(p))?;
    ck.config.eval_with_prior = cfg.with_prior;
    let report = evaluate(&ck, &dataset)?;

    let out = out_or(&args.common, "eval.json");
    write_json(&out, &report)?;
    if !args.common.quiet {
        println!("{}", fmt_splits(&report.splits));
        println!("wrote {}", out.display());
    }
    write_manifest(&out, "eval", &json, &hash, &[out.clone()], started, 0)?;
    Ok(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AnalyzeConfig {
    source: FeatureSource,
    is_metric: IsMetric,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig { source: FeatureSource::Encoder, is_metric: IsMetric::L2 }
    }
}

pub fn analyze(args: &AnalyzeArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let mut cfg: AnalyzeConfig = load_config(&args.common.config)?;
    if let Some(v) = args.source {
        cfg.source = v;
    }
    if let Some(v) = args.is_metric {
        cfg.is_metric = v;
    }
    let (json, hash) = canonical(&cfg);

    let ck = load_input("checkpoint", &args.checkpoint, |p| load_checkpoint(p))?;
    let dataset = load_input("data", &args.data, |p| load_dataset(p))?;
    let sem_path = args
        .semantic
        .clone()
        .unwrap_or_else(|| semantic_sidecar(&args.data));
    let semantic = load_input("semantic", &sem_path, |p| load_semantic_vectors(p))?;
    let report = accuracy_report(&ck, &dataset, &semantic, cfg.source, cfg.is_metric)?;

    let out = out_or(&args.common, "analysis.json");
    write_json(&out, &report)?;
    if !args.common.quiet {
        print!("{}", report.render_text());
        println!("wrote {}", out.display());
    }
    write_manifest(&out, "analyze", &json, &hash, &[out.clone()], started, 0)?;
    Ok(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PreviewConfig {
    count: usize,
    alpha: f64,
    full_range: bool,
    mix_op: MixOp,
    placement: Placement,
    gamma: f64,
    pad: usize,
    flip_prob: f64,
    seed: u64,
}

impl Default for PreviewConfig {
    fn default() -> Self {
        PreviewConfig {
            count: 64,
            alpha: 1.0,
            full_range: false,
            mix_op: MixOp::Resize,
            placement: Placement::BeforeMix,
            gamma: 1.0,
            pad: 4,
            flip_prob: 0.5,
            seed: 0,
        }
    }
}

impl PreviewConfig {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: String| Err(CliError::config(format!("config `{key}`: {why}")));
        if self.count == 0 {
            return bad("count", "must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", format!("{} is not a positive float", self.alpha));
        }
        if self.gamma < 0.0 {
            return bad("gamma", format!("{} is negative", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("flip_prob", format!("{} outside [0,1]", self.flip_prob));
        }
        Ok(())
    }
}

pub fn mix_preview(args: &PreviewArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let mut cfg: PreviewConfig = load_config(&args.common.config)?;
    if let Some(v) = args.count {
        cfg.count = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if args.full_range {
        cfg.full_range = true;
    }
    if let Some(v) = args.mix_op {
        cfg.mix_op = v;
    }
    if let Some(v) = args.placement {
        cfg.placement = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = args.common.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let (json, hash) = canonical(&cfg);

    let dataset = load_input("data", &args.data, |p| load_dataset(p))?;
    if let Some(k) = dataset.counts().iter().position(|&n| n == 0) {
        return Err(CliError::config(format!(
            "input `data` ({}): class {k} has no samples, cannot sample foregrounds",
            args.data.display()
        )));
    }

    let dims = dataset.dims();
    let params = MixParams {
        num_classes: dataset.num_classes(),
        alpha: cfg.alpha,
        full_range: cfg.full_range,
        mix_op: cfg.mix_op,
        policy: AugmentPolicy {
            pad: cfg.pad,
            flip_prob: cfg.flip_prob,
            placement: cfg.placement,
        },
    };
    let q = foreground_sampling_probs(dataset.counts(), cfg.gamma);
    let mut r = rng::substream(rng::mix_seed(cfg.seed, SALT_PREVIEW), 0);
    let pairs = sample_mix_indices(&dataset, &q, cfg.count, &mut r)?;

    let mut samples = Vec::with_capacity(cfg.count);
    let mut records = String::new();
    for (i, (fg, bg)) in pairs.into_iter().enumerate() {
        let (pixels, record) =
            make_training_view(dataset.sample(fg), dataset.sample(bg), dims, &params, None, &mut r);
        samples.push(ImageSample {
            pixels,
            class_id: majority_class(&record),
            instance_id: i as u64,
        });
        writeln!(records, "{}", serde_json::to_string(&record).expect("record serializes"))
            .expect("string write");
    }
    let preview = Dataset::new(dims, dataset.num_classes(), samples)?;

    let out = out_or(&args.common, "preview.smcd");
    save_dataset(&preview, &out)?;
    let records_path = out.with_extension("records.jsonl");
    fs::write(&records_path, records)?;

    if !args.common.quiet {
        println!(
            "wrote {} blended views to {} (records in {})",
            cfg.count,
            out.display(),
            records_path.display()
        );
    }
    write_manifest(&out, "mix-preview", &json, &hash, &[out.clone(), records_path], started, 0)?;
    Ok(0)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct VerifyConfig {
    quick: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    corrupt: Option<String>,
    seed: u64,
}

pub fn verify(args: &VerifyArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let mut cfg: VerifyConfig = load_config(&args.common.config)?;
    if args.quick {
        cfg.quick = true;
    }
    if let Some(c) = &args.corrupt {
        cfg.corrupt = Some(c.clone());
    }
    if let Some(v) = args.common.seed {
        cfg.seed = v;
    }
    let (json, hash) = canonical(&cfg);

    let results = run_verify(&VerifyOptions {
        quick: cfg.quick,
        corrupt: cfg.corrupt.clone(),
        seed: cfg.seed,
    });
    for r in &results {
        if r.passed {
            if !args.common.quiet {
                println!("ok   {:<28} {:>7.2}s  {}", r.name, r.seconds, r.detail);
            }
        } else {
            // Failed oracles are the contract; they print regardless.
            eprintln!("FAIL {:<28} {:>7.2}s  {}", r.name, r.seconds, r.detail);
        }
    }
    let passed = all_passed(&results);
    let failed = results.iter().filter(|r| !r.passed).count();
    if !args.common.quiet {
        match failed {
            0 => println!("all {} checks passed", results.len()),
            n => println!("{n} of {} checks FAILED", results.len()),
        }
    }

    #[derive(Serialize)]
    struct VerifyReport<'a> {
        all_passed: bool,
        checks: &'a [smc_core::verify::CheckResult],
    }
    let out = out_or(&args.common, "verify.json");
    write_json(&out, &VerifyReport { all_passed: passed, checks: &results })?;

    let exit = if passed { 0 } else { 3 };
    write_manifest(&out, "verify", &json, &hash, &[out.clone()], started, exit as i32)?;
    Ok(exit)
}
