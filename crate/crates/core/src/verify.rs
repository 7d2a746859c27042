//! Built-in self-verification: every check pits an implementation path
//! against an independent oracle (finite differences, brute-force set
//! construction, closed-form hand values, chi-square) and reports
//! pass/fail with the measured evidence.

use crate::analysis::{inter_class_score, semantic_similarity_score, ClassCenters, IsMetric};
use crate::dataset::{
    foreground_sampling_probs, sample_mix_indices, synth_longtail, ImageDims, SemanticVectors,
};
use crate::error::Result;
use crate::gradcheck::{finite_diff_compare, GradCheckReport, FD_STEP};
use crate::mixer::{
    make_mask, make_training_view, AugmentPolicy, MaskRect, MixOp, MixParams, MixRecord,
    Placement,
};
use crate::model::{ModelLayout, ModelParams};
use crate::pairloss::{
    balanced_ce, classify_pairs, loss_weights, smc_loss, total_loss, PairSets,
};
use crate::rng::{self, Prng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::time::Instant;

/// Relative-error gate for every gradient check.
const GRAD_TOL: f64 = 1e-4;

/// One oracle's verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Shrinks fuzz volumes for a fast smoke pass.
    pub quick: bool,
    /// Name of a gradient check whose analytic side is deliberately
    /// biased, to prove the checker catches a broken primitive.
    pub corrupt: Option<String>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            quick: false,
            corrupt: None,
            seed: 0,
        }
    }
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

/// Runs the whole suite; failures never abort the rest.
pub fn run_verify(options: &VerifyOptions) -> Vec<CheckResult> {
    let mut results = Vec::new();
    gradient_checks(options, &mut results);
    results.push(pair_taxonomy_fuzz(options));
    let (fg, bg) = sampler_chisquare(options);
    results.push(fg);
    results.push(bg);
    let (mask, label) = mask_lambda_sweep(options);
    results.push(mask);
    results.push(label);
    results.push(weight_normalization(options));
    results.push(bce_invariances());
    results.push(diagnostics_exactness());
    results
}

fn timed<F: FnOnce() -> (bool, String)>(name: &str, f: F) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name: name.into(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn grad_check_case<F>(
    name: &str,
    options: &VerifyOptions,
    params: Vec<Tensor>,
    build: F,
) -> CheckResult
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let corrupt = options.corrupt.as_deref() == Some(name);
    timed(name, || {
        let run = || -> Result<GradCheckReport> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t)).collect();
            let root = build(&mut tape, &vars);
            let (_, mut analytic) = tape.eval_with_grad(root, &vars)?;
            if corrupt {
                for g in &mut analytic {
                    for v in g.data_mut() {
                        *v += 0.25;
                    }
                }
            }
            finite_diff_compare(&params, &analytic, FD_STEP, &build)
        };
        match run() {
            Ok(report) => (
                report.max_rel_err < GRAD_TOL,
                format!("max rel err {:.3e}", report.max_rel_err),
            ),
            Err(e) => (false, format!("evaluation failed: {e}")),
        }
    })
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Prng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

/// Unit-row embeddings for contrastive inputs.
fn random_unit(rows: usize, cols: usize, rng: &mut Prng) -> Tensor {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        data.extend(row.into_iter().map(|v| v / norm));
    }
    Tensor::matrix(rows, cols, data)
}

fn random_records(n: usize, vocab: usize, rng: &mut Prng) -> Vec<MixRecord> {
    (0..n)
        .map(|_| {
            let fg = rng.random_range(0..vocab);
            let bg = rng.random_range(0..vocab);
            let lambda = rng.random_range(0.2..0.8);
            let mut soft_label = vec![0.0; vocab];
            soft_label[fg] += lambda;
            soft_label[bg] += 1.0 - lambda;
            MixRecord {
                fg_class: fg,
                bg_class: bg,
                lambda_sampled: lambda,
                lambda_effective: lambda,
                mask_rect: MaskRect { top: 0, left: 0, height: 8, width: 8 },
                soft_label,
            }
        })
        .collect()
}

fn gradient_checks(options: &VerifyOptions, results: &mut Vec<CheckResult>) {
    let mut r = rng::substream(rng::mix_seed(options.seed, 0x6e7a), 0);

    // Every primitive, each exercised in a scalar-rooted graph. Inputs
    // avoid relu/max kinks and log's pole by construction.
    let a = random_matrix(3, 4, -1.0, 1.0, &mut r);
    let b = random_matrix(3, 4, 0.2, 1.5, &mut r);
    let row = Tensor::vector((0..4).map(|_| r.random_range(-1.0..1.0)).collect());
    let col = Tensor::vector((0..3).map(|_| r.random_range(-1.0..1.0)).collect());
    let m34 = random_matrix(3, 4, -1.0, 1.0, &mut r);
    let m45 = random_matrix(4, 5, -1.0, 1.0, &mut r);
    let m54 = random_matrix(5, 4, -1.0, 1.0, &mut r);
    let kink_free = Tensor::matrix(
        3,
        4,
        a.data().iter().map(|&v| if v.abs() < 0.2 { v + 0.3 } else { v }).collect(),
    );
    let mask = random_matrix(3, 4, -1.0, 1.0, &mut r);
    // Distinct entries keep argmax stable under ±eps probes.
    let distinct = Tensor::matrix(2, 3, vec![0.1, 0.9, -0.4, 1.2, 0.3, -0.8]);

    struct Case<'a> {
        name: &'a str,
        params: Vec<Tensor>,
        build: Box<dyn Fn(&mut Tape, &[Var]) -> Var>,
    }
    let cases: Vec<Case> = vec![
        Case {
            name: "grad-add",
            params: vec![a.clone(), m34.clone()],
            build: Box::new(|t, v| {
                let s = t.add(v[0], v[1]);
                t.sum(s)
            }),
        },
        Case {
            name: "grad-add-row",
            params: vec![a.clone(), row.clone()],
            build: Box::new(|t, v| {
                let s = t.add_row(v[0], v[1]);
                let sq = t.mul(s, s);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-add-col",
            params: vec![a.clone(), col.clone()],
            build: Box::new(|t, v| {
                let s = t.add_col(v[0], v[1]);
                let sq = t.mul(s, s);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-mul",
            params: vec![a.clone(), m34.clone()],
            build: Box::new(|t, v| {
                let p = t.mul(v[0], v[1]);
                t.sum(p)
            }),
        },
        Case {
            name: "grad-matmul",
            params: vec![m34.clone(), m45.clone()],
            build: Box::new(|t, v| {
                let p = t.matmul(v[0], v[1], false);
                let sq = t.mul(p, p);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-matmul-transposed",
            params: vec![m34.clone(), m54.clone()],
            build: Box::new(|t, v| {
                let p = t.matmul(v[0], v[1], true);
                let sq = t.mul(p, p);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-exp",
            params: vec![a.clone()],
            build: Box::new(|t, v| {
                let e = t.exp(v[0]);
                t.sum(e)
            }),
        },
        Case {
            name: "grad-log",
            params: vec![b.clone()],
            build: Box::new(|t, v| {
                let l = t.log(v[0]);
                t.sum(l)
            }),
        },
        Case {
            name: "grad-relu",
            params: vec![kink_free.clone()],
            build: Box::new(|t, v| {
                let h = t.relu(v[0]);
                let sq = t.mul(h, h);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-scale",
            params: vec![a.clone()],
            build: Box::new(|t, v| {
                let s = t.scale(v[0], -2.5);
                t.sum(s)
            }),
        },
        Case {
            name: "grad-mask-apply",
            params: vec![a.clone()],
            build: Box::new({
                let mask = mask.clone();
                move |t, v| {
                    let m = t.mask_apply(v[0], &mask);
                    t.sum(m)
                }
            }),
        },
        Case {
            name: "grad-sum-axis",
            params: vec![a.clone()],
            build: Box::new(|t, v| {
                let rows = t.sum_axis(v[0], 1);
                let cols = t.sum_axis(v[0], 0);
                let sq = t.mul(rows, rows);
                let s1 = t.sum(sq);
                let s0 = t.sum(cols);
                t.add(s1, s0)
            }),
        },
        Case {
            name: "grad-mean",
            params: vec![a.clone()],
            build: Box::new(|t, v| {
                let sq = t.mul(v[0], v[0]);
                t.mean(sq)
            }),
        },
        Case {
            name: "grad-max",
            params: vec![distinct.clone()],
            build: Box::new(|t, v| {
                let m = t.max(v[0]);
                let sq = t.mul(m, m);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-max-rows",
            params: vec![distinct.clone()],
            build: Box::new(|t, v| {
                let m = t.max_rows(v[0]);
                let sq = t.mul(m, m);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-softmax",
            params: vec![a.clone()],
            build: Box::new({
                let mask = mask.clone();
                move |t, v| {
                    let p = t.softmax(v[0]);
                    let picked = t.mask_apply(p, &mask);
                    t.sum(picked)
                }
            }),
        },
        Case {
            name: "grad-l2-normalize",
            params: vec![b.clone()],
            build: Box::new({
                let mask = mask.clone();
                move |t, v| {
                    let z = t.l2_normalize(v[0]);
                    let picked = t.mask_apply(z, &mask);
                    t.sum(picked)
                }
            }),
        },
        Case {
            name: "grad-log-sum-exp",
            params: vec![a.clone()],
            build: Box::new(|t, v| {
                let lse = t.log_sum_exp_rows(v[0]);
                let sq = t.mul(lse, lse);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-concat",
            params: vec![a.clone(), m34.clone()],
            build: Box::new(|t, v| {
                let c = t.concat(&[v[0], v[1]]);
                let sq = t.mul(c, c);
                t.sum(sq)
            }),
        },
        Case {
            name: "grad-index-select",
            params: vec![a.clone()],
            build: Box::new(|t, v| {
                let g = t.index_select(v[0], &[0, 2, 0, 1]);
                let sq = t.mul(g, g);
                t.sum(sq)
            }),
        },
    ];
    for case in cases {
        results.push(grad_check_case(case.name, options, case.params, case.build));
    }

    // Composed losses on a random batch: n = 8 views, C = 5 classes.
    let n = 8;
    let vocab = 5;
    let records = random_records(n, vocab, &mut r);
    let sets = classify_pairs(&records);
    let embeddings = random_unit(n, 6, &mut r);
    results.push(grad_check_case("grad-smc-loss", options, vec![embeddings], {
        let records = records.clone();
        let sets = sets.clone();
        move |t, v| {
            let unit = t.l2_normalize(v[0]);
            smc_loss(t, unit, &sets, &records, 0.1).expect("valid batch")
        }
    }));

    let logits = random_matrix(n, vocab, -2.0, 2.0, &mut r);
    let labels = Tensor::matrix(
        n,
        vocab,
        records.iter().flat_map(|rec| rec.soft_label.clone()).collect(),
    );
    let prior: Vec<f64> = {
        let raw: Vec<f64> = (0..vocab).map(|_| r.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|p| (p / total).ln()).collect()
    };
    results.push(grad_check_case("grad-bce-loss", options, vec![logits], {
        let labels = labels.clone();
        let prior = prior.clone();
        move |t, v| balanced_ce(t, v[0], &labels, &prior)
    }));

    // Full objective through the model: pixels → encoder → both heads.
    let layout = ModelLayout {
        input_dim: 12,
        encoder_widths: vec![10, 6],
        head_dim: 7,
        num_classes: vocab,
    };
    let mut init_rng = rng::substream(rng::mix_seed(options.seed, 0x6e7b), 0);
    let model = ModelParams::init(layout.clone(), &mut init_rng);
    let x = random_matrix(n, 12, 0.0, 1.0, &mut r);
    results.push(grad_check_case(
        "grad-total-loss",
        options,
        model.tensors.clone(),
        {
            let records = records.clone();
            let sets = sets.clone();
            let labels = labels.clone();
            let prior = prior.clone();
            let layout = layout.clone();
            let x = x.clone();
            move |t, vars| {
                let bound = crate::model::BoundModel::from_vars(layout.clone(), vars.to_vec());
                let xv = t.leaf(&x);
                let feat = bound.encode(t, xv);
                let logits = bound.classify(t, feat);
                let z = bound.project(t, feat);
                let l_bce = balanced_ce(t, logits, &labels, &prior);
                let l_smc = smc_loss(t, z, &sets, &records, 0.1).expect("valid batch");
                total_loss(t, l_bce, l_smc, 0.1)
            }
        },
    ));
}

/// O(n²) reference taxonomy, structurally independent of the map-based
/// production path.
pub fn brute_force_pairs(records: &[MixRecord]) -> PairSets {
    let n = records.len();
    let mut sets = PairSets {
        foreground: vec![Vec::new(); n],
        background: vec![Vec::new(); n],
        cross: vec![Vec::new(); n],
        negatives: vec![Vec::new(); n],
    };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&records[i], &records[j]);
            let mut positive = false;
            if a.fg_class == b.fg_class {
                sets.foreground[i].push(j);
                positive = true;
            }
            if a.bg_class == b.bg_class {
                sets.background[i].push(j);
                positive = true;
            }
            if !positive && (a.fg_class == b.bg_class || a.bg_class == b.fg_class) {
                sets.cross[i].push(j);
                positive = true;
            }
            if !positive {
                sets.negatives[i].push(j);
            }
        }
    }
    sets
}

fn partition_holds(sets: &PairSets, n: usize) -> bool {
    (0..n).all(|i| {
        let mut all: Vec<usize> = sets.foreground[i]
            .iter()
            .chain(&sets.background[i])
            .chain(&sets.cross[i])
            .chain(&sets.negatives[i])
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        let expect: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let symmetric = sets.foreground[i].iter().all(|&j| sets.foreground[j].contains(&i))
            && sets.background[i].iter().all(|&j| sets.background[j].contains(&i))
            && sets.cross[i].iter().all(|&j| sets.cross[j].contains(&i));
        let disjoint = sets.cross[i].iter().all(|j| {
            !sets.foreground[i].contains(j) && !sets.background[i].contains(j)
        });
        all == expect && symmetric && disjoint && !all.contains(&i)
    })
}

fn pair_taxonomy_fuzz(options: &VerifyOptions) -> CheckResult {
    let batches = if options.quick { 100 } else { 1000 };
    let mut r = rng::substream(rng::mix_seed(options.seed, 0x9a17), 0);
    timed("pair-taxonomy-fuzz", || {
        for batch in 0..batches {
            let n = r.random_range(2..=64);
            let vocab = r.random_range(1..=10);
            let records = random_records(n, vocab, &mut r);
            let got = classify_pairs(&records);
            let want = brute_force_pairs(&records);
            if got != want {
                return (false, format!("batch {batch}: sets differ from brute force"));
            }
            if !partition_holds(&got, n) {
                return (false, format!("batch {batch}: partition/symmetry violated"));
            }
        }
        (true, format!("{batches} batches match the brute-force oracle"))
    })
}

fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e) * (o as f64 - e) / e)
        .sum();
    let df = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(df).expect("positive df").cdf(stat)
}

fn sampler_chisquare(options: &VerifyOptions) -> (CheckResult, CheckResult) {
    let draws = if options.quick { 20_000 } else { 100_000 };
    // counts [100, 10, 1]: C=3, ρ=100 on the profile formula.
    let out = synth_longtail(3, 100.0, 100, ImageDims { c: 1, h: 8, w: 8 }, options.seed)
        .expect("valid synth");
    let dataset = out.dataset;
    assert_eq!(dataset.counts(), &[100, 10, 1]);
    let q = foreground_sampling_probs(dataset.counts(), 1.0);
    let mut r = rng::substream(rng::mix_seed(options.seed, 0xc41), 0);

    let start = Instant::now();
    let mut fg_obs = vec![0u64; 3];
    let mut bg_obs = vec![0u64; dataset.len()];
    for (fg, bg) in sample_mix_indices(&dataset, &q, draws, &mut r).expect("sampling") {
        fg_obs[dataset.sample(fg).class_id] += 1;
        bg_obs[bg] += 1;
    }
    let seconds = start.elapsed().as_secs_f64();

    let fg_expected: Vec<f64> = q.iter().map(|p| p * draws as f64).collect();
    let fg_p = chi_square_p(&fg_obs, &fg_expected);
    let fg_result = CheckResult {
        name: "sampler-foreground-chisq".into(),
        passed: fg_p > 0.01,
        detail: format!("p = {fg_p:.4} over {draws} draws, observed {fg_obs:?}"),
        seconds,
    };

    let bg_expected = vec![draws as f64 / dataset.len() as f64; dataset.len()];
    let bg_p = chi_square_p(&bg_obs, &bg_expected);
    let bg_result = CheckResult {
        name: "sampler-background-chisq".into(),
        passed: bg_p > 0.01,
        detail: format!("p = {bg_p:.4} over {draws} instance-uniform draws"),
        seconds: 0.0,
    };
    (fg_result, bg_result)
}

fn mask_lambda_sweep(options: &VerifyOptions) -> (CheckResult, CheckResult) {
    let step = if options.quick { 0.01 } else { 0.001 };
    let (h, w) = (32usize, 32usize);
    let bound = (h + w + 1) as f64 / (h * w) as f64;
    let mut r = rng::substream(rng::mix_seed(options.seed, 0x3a5c), 0);

    let mask_check = timed("mask-lambda-sweep", || {
        let mut worst: f64 = 0.0;
        let mut lambda: f64 = 0.0;
        while lambda <= 1.0 + 1e-12 {
            let l = lambda.min(1.0);
            let (_, eff) = make_mask(h, w, l, &mut r);
            worst = worst.max((eff - l).abs());
            if (eff - l).abs() > bound {
                return (false, format!("λ={l}: |λ_eff−λ| = {} > {bound}", (eff - l).abs()));
            }
            lambda += step;
        }
        (true, format!("worst |λ_eff−λ| = {worst:.5} ≤ {bound:.5}"))
    });

    // Soft labels carry exactly the realized area ratio.
    let label_check = timed("soft-label-consistency", || {
        let dims = ImageDims { c: 1, h: 16, w: 16 };
        let out = synth_longtail(3, 4.0, 8, dims, options.seed ^ 1).expect("valid synth");
        let dataset = out.dataset;
        let params = MixParams {
            num_classes: 3,
            alpha: 1.0,
            full_range: false,
            mix_op: MixOp::Resize,
            policy: AugmentPolicy { pad: 2, flip_prob: 0.5, placement: Placement::BeforeMix },
        };
        for trial in 0..500 {
            let fg = dataset.sample(r.random_range(0..dataset.len()));
            let bg = dataset.sample(r.random_range(0..dataset.len()));
            let (_, record) = make_training_view(fg, bg, dims, &params, None, &mut r);
            let expect_fg = if record.fg_class == record.bg_class {
                1.0
            } else {
                record.lambda_effective
            };
            if record.soft_label[record.fg_class] != expect_fg {
                return (false, format!("trial {trial}: fg weight is not λ_eff exactly"));
            }
            let sum: f64 = record.soft_label.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return (false, format!("trial {trial}: label sums to {sum}"));
            }
        }
        (true, "500 views: fg weight == λ_eff, labels sum to 1".into())
    });
    (mask_check, label_check)
}

fn weight_normalization(options: &VerifyOptions) -> CheckResult {
    let mut r = rng::substream(rng::mix_seed(options.seed, 0x77), 0);
    timed("weight-normalization", || {
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let lambda: f64 = r.random_range(0.0..=1.0);
            let w = loss_weights(lambda);
            if w.w_f < 0.0 || w.w_b < 0.0 || w.w_c < 0.0 {
                return (false, format!("negative weight at λ={lambda}"));
            }
            worst = worst.max((w.w_f + w.w_b + w.w_c - 1.0).abs());
        }
        (worst < 1e-12, format!("worst |Σw − 1| = {worst:.2e}"))
    })
}

fn bce_invariances() -> CheckResult {
    timed("bce-invariances", || {
        // Scalar reference for plain soft-target cross entropy.
        let soft_ce = |logits: &Tensor, labels: &Tensor| -> f64 {
            let (n, c) = (logits.rows(), logits.cols());
            let mut total = 0.0;
            for i in 0..n {
                let row = logits.row(i);
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln();
                let picked: f64 = labels.row(i).iter().zip(row).map(|(&y, &z)| y * z).sum();
                total += lse - picked;
            }
            let _ = c;
            total / n as f64
        };
        let eval = |logits: &Tensor, labels: &Tensor, prior: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let z = tape.leaf(logits);
            let loss = balanced_ce(&mut tape, z, labels, prior);
            tape.scalar(loss)
        };

        let mut r = rng::seeded(414);
        let logits = random_matrix(6, 4, -2.0, 2.0, &mut r);
        let mut labels = vec![0.0; 24];
        for i in 0..6 {
            let lam: f64 = r.random_range(0.2..0.8);
            labels[i * 4 + i % 4] = lam;
            labels[i * 4 + (i + 1) % 4] = 1.0 - lam;
        }
        let labels = Tensor::matrix(6, 4, labels);

        let uniform = vec![(0.25f64).ln(); 4];
        let gap = (eval(&logits, &labels, &uniform) - soft_ce(&logits, &labels)).abs();
        if gap > 1e-9 {
            return (false, format!("uniform prior differs from plain CE by {gap:.2e}"));
        }
        let shifted: Vec<f64> = uniform.iter().map(|v| v + 3.7).collect();
        let shift_gap = (eval(&logits, &labels, &uniform) - eval(&logits, &labels, &shifted)).abs();
        if shift_gap > 1e-9 {
            return (false, format!("constant prior shift moved the loss by {shift_gap:.2e}"));
        }

        // Hand values to four decimals.
        let two = Tensor::matrix(1, 2, vec![0.0, 0.0]);
        let first = Tensor::matrix(1, 2, vec![1.0, 0.0]);
        let second = Tensor::matrix(1, 2, vec![0.0, 1.0]);
        let v1 = eval(&two, &first, &[0.5f64.ln(), 0.5f64.ln()]);
        let v2 = eval(&two, &second, &[0.9f64.ln(), 0.1f64.ln()]);
        if (v1 - 0.6931).abs() > 5e-5 || (v2 - 2.3026).abs() > 5e-5 {
            return (false, format!("hand values off: {v1:.6}, {v2:.6}"));
        }
        (true, format!("uniform gap {gap:.1e}, shift gap {shift_gap:.1e}, hand values ok"))
    })
}

fn diagnostics_exactness() -> CheckResult {
    timed("diagnostics-exactness", || {
        let identical = ClassCenters {
            centers: vec![vec![0.4, -0.1]; 3],
            counts: vec![1; 3],
        };
        let is = inter_class_score(&identical, 10.0, IsMetric::L2);
        if is.iter().any(|&v| v != 1.0) {
            return (false, format!("identical centers scored {is:?}"));
        }
        let apart = ClassCenters {
            centers: vec![vec![0.0, 0.0], vec![10.0, 0.0]],
            counts: vec![1; 2],
        };
        let is = inter_class_score(&apart, 10.0, IsMetric::L2);
        let expect = (-0.5f64).exp();
        if (is[0] - expect).abs() > 5e-7 {
            return (false, format!("two-class IS {:.7} vs {:.7}", is[0], expect));
        }

        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let semantic = SemanticVectors::new(rows.clone()).expect("valid vectors");
        let same = ClassCenters { centers: rows, counts: vec![1; 2] };
        let (ss_zero, _) = semantic_similarity_score(&same, &semantic).expect("valid");
        if ss_zero != 0.0 {
            return (false, format!("identical structures scored SS {ss_zero}"));
        }
        let at60 = ClassCenters {
            centers: vec![vec![1.0, 0.0], vec![0.5, 3.0f64.sqrt() / 2.0]],
            counts: vec![1; 2],
        };
        let (ss, _) = semantic_similarity_score(&at60, &semantic).expect("valid");
        if (ss - 0.25).abs() > 5e-7 {
            return (false, format!("hand SS {ss:.7} vs 0.25"));
        }
        (true, "IS and SS hand values reproduce to 6 decimals".into())
    })
}
