//! Pair taxonomy and the training losses over blended batches: the
//! weighted mixed-class contrastive loss, its weighting-scheme ablations,
//! the prior-compensated classification loss, and their combination.

use crate::error::{Error, Result};
use crate::mixer::MixRecord;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Added to diagonal similarity entries so the softmax denominator spans
/// the batch minus the anchor: exp(x + ANCHOR_EXCLUSION) underflows to
/// exactly 0 after the row-max shift while staying finite on the tape.
const ANCHOR_EXCLUSION: f64 = -1e30;

/// Per-anchor positive-type index sets over a batch of blended records.
///
/// For an anchor i, `foreground[i]` holds the batch indices sharing i's
/// foreground class, `background[i]` those sharing its background class
/// (the two may overlap), `cross[i]` those sharing at least one class in
/// crossed positions only, and `negatives[i]` the rest. Together with i
/// excluded they partition the batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSets {
    pub foreground: Vec<Vec<usize>>,
    pub background: Vec<Vec<usize>>,
    pub cross: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

impl PairSets {
    pub fn len(&self) -> usize {
        self.foreground.len()
    }

    pub fn is_empty(&self) -> bool {
        self.foreground.is_empty()
    }
}

/// Buckets every ordered pair of records by shared classes: j joins
/// anchor i's foreground set iff fg_i == fg_j, its background set iff
/// bg_i == bg_j, and its cross set iff the records share a class only in
/// crossed positions (fg↔bg). Set contents are ascending and duplicate
/// free.
pub fn classify_pairs(records: &[MixRecord]) -> PairSets {
    let n = records.len();
    assert!(n >= 2, "pair taxonomy needs at least two records");
    let vocab = records
        .iter()
        .map(|r| r.fg_class.max(r.bg_class))
        .max()
        .unwrap()
        + 1;
    // Records indexed by the classes they carry; `touching` de-dupes the
    // self-mix case fg == bg.
    let mut by_fg = vec![Vec::new(); vocab];
    let mut by_bg = vec![Vec::new(); vocab];
    let mut touching = vec![Vec::new(); vocab];
    for (i, r) in records.iter().enumerate() {
        by_fg[r.fg_class].push(i);
        by_bg[r.bg_class].push(i);
        touching[r.fg_class].push(i);
        if r.bg_class != r.fg_class {
            touching[r.bg_class].push(i);
        }
    }

    let mut sets = PairSets {
        foreground: Vec::with_capacity(n),
        background: Vec::with_capacity(n),
        cross: Vec::with_capacity(n),
        negatives: Vec::with_capacity(n),
    };
    let mut positive = vec![false; n];
    for (i, r) in records.iter().enumerate() {
        let f: Vec<usize> = by_fg[r.fg_class].iter().copied().filter(|&j| j != i).collect();
        let b: Vec<usize> = by_bg[r.bg_class].iter().copied().filter(|&j| j != i).collect();
        let mut c: Vec<usize> = touching[r.fg_class]
            .iter()
            .chain(if r.bg_class != r.fg_class {
                touching[r.bg_class].iter()
            } else {
                [].iter()
            })
            .copied()
            .filter(|&j| {
                j != i && records[j].fg_class != r.fg_class && records[j].bg_class != r.bg_class
            })
            .collect();
        c.sort_unstable();
        c.dedup();

        for &j in f.iter().chain(&b).chain(&c) {
            positive[j] = true;
        }
        let neg: Vec<usize> = (0..n).filter(|&j| j != i && !positive[j]).collect();
        for &j in f.iter().chain(&b).chain(&c) {
            positive[j] = false;
        }

        sets.foreground.push(f);
        sets.background.push(b);
        sets.cross.push(c);
        sets.negatives.push(neg);
    }
    sets
}

/// Normalized per-type loss weights for one anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_f: f64,
    pub w_b: f64,
    pub w_c: f64,
}

/// (λ_w/1.5, (1−λ_w)/1.5, 0.5/1.5): the foreground and background weights
/// follow the anchor's combination ratio, the cross weight is fixed, and
/// the 1.5 divisor makes them sum to exactly 1.
pub fn loss_weights(lambda_w: f64) -> LossWeights {
    assert!((0.0..=1.0).contains(&lambda_w), "lambda outside [0,1]");
    LossWeights {
        w_f: lambda_w / 1.5,
        w_b: (1.0 - lambda_w) / 1.5,
        w_c: 0.5 / 1.5,
    }
}

/// Weighting-scheme ablations of the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Ratio-dependent per-anchor weights (the default method).
    Weighted,
    /// Flat 1/3 per type regardless of the ratio.
    Averaging,
    /// Relabel each sample with its majority component (foreground on
    /// ties) and run a plain single-label supervised contrastive loss.
    AssignLarger,
}

/// Shared trunk of every contrastive variant:
/// Σ_i a_i·lse_i − Σ_ij W_ij·(z_i·z_j)/τ, where lse_i is the
/// log-sum-exp over the anchor-excluded row. Positive-pair structure and
/// all normalization live in the constant buffers `weights` and
/// `anchor_coeff`, so one graph serves every scheme.
fn contrastive_graph(
    tape: &mut Tape,
    embeddings: Var,
    weights: &Tensor,
    anchor_coeff: &Tensor,
    tau: f64,
) -> Var {
    let n = tape.shape(embeddings)[0];
    let s = tape.matmul(embeddings, embeddings, true);
    let s_scaled = tape.scale(s, 1.0 / tau);
    let mut diag = vec![0.0; n * n];
    for i in 0..n {
        diag[i * n + i] = ANCHOR_EXCLUSION;
    }
    let d = tape.leaf(&Tensor::new(vec![n, n], diag));
    let s_masked = tape.add(s_scaled, d);
    let lse = tape.log_sum_exp_rows(s_masked);
    let positives = tape.mask_apply(s_scaled, weights);
    let pos_sum = tape.sum(positives);
    let lse_weighted = tape.mask_apply(lse, anchor_coeff);
    let lse_sum = tape.sum(lse_weighted);
    tape.sub(lse_sum, pos_sum)
}

/// Adds one positive type: every anchor with a nonempty set contributes
/// its per-anchor weight, averaged over such anchors and over its set.
fn fill_type<F>(
    weights: &mut [f64],
    anchor_coeff: &mut [f64],
    n: usize,
    sets: &[Vec<usize>],
    weight_of: F,
) where
    F: Fn(usize) -> f64,
{
    let anchors: Vec<usize> = (0..n).filter(|&i| !sets[i].is_empty()).collect();
    if anchors.is_empty() {
        return;
    }
    let inv_anchors = 1.0 / anchors.len() as f64;
    for &i in &anchors {
        let w = weight_of(i) * inv_anchors;
        anchor_coeff[i] += w;
        let share = w / sets[i].len() as f64;
        for &j in &sets[i] {
            weights[i * n + j] += share;
        }
    }
}

fn check_embeddings(tape: &Tape, embeddings: Var, records_len: usize) -> Result<usize> {
    let shape = tape.shape(embeddings);
    if shape.len() != 2 || shape[0] < 2 {
        return Err(Error::contract(format!(
            "contrastive loss needs a [n>=2, d] embedding matrix, got {shape:?}"
        )));
    }
    if shape[0] != records_len {
        return Err(Error::contract(format!(
            "{} embeddings for {} records",
            shape[0], records_len
        )));
    }
    Ok(shape[0])
}

/// The mixed-class contrastive loss at temperature `tau`:
///
/// L = Σ_t (1/|A_t|)·Σ_{i∈A_t} w_t(λ_i)·( lse_i − (1/|set_t(i)|)·Σ_{p} s_ip )
///
/// over the types t ∈ {foreground, background, cross}, where A_t is the
/// set of anchors whose type-t set is nonempty, λ_i is the anchor's own
/// effective ratio, and the denominator behind lse_i spans the whole
/// batch minus the anchor. A type with no anchors contributes nothing; if
/// all three are empty the loss is exactly 0 with zero gradient.
pub fn smc_loss(
    tape: &mut Tape,
    embeddings: Var,
    sets: &PairSets,
    records: &[MixRecord],
    tau: f64,
) -> Result<Var> {
    smc_loss_variant(tape, embeddings, sets, records, tau, WeightScheme::Weighted)
}

/// [`smc_loss`] with a selectable weighting scheme.
pub fn smc_loss_variant(
    tape: &mut Tape,
    embeddings: Var,
    sets: &PairSets,
    records: &[MixRecord],
    tau: f64,
    scheme: WeightScheme,
) -> Result<Var> {
    assert!(tau > 0.0, "temperature must be positive");
    let n = check_embeddings(tape, embeddings, records.len())?;
    assert_eq!(sets.len(), n, "pair sets do not cover the batch");

    let mut weights = vec![0.0; n * n];
    let mut anchor_coeff = vec![0.0; n];
    match scheme {
        WeightScheme::Weighted => {
            let per_anchor: Vec<LossWeights> = records
                .iter()
                .map(|r| loss_weights(r.lambda_effective))
                .collect();
            fill_type(&mut weights, &mut anchor_coeff, n, &sets.foreground, |i| {
                per_anchor[i].w_f
            });
            fill_type(&mut weights, &mut anchor_coeff, n, &sets.background, |i| {
                per_anchor[i].w_b
            });
            fill_type(&mut weights, &mut anchor_coeff, n, &sets.cross, |i| {
                per_anchor[i].w_c
            });
        }
        WeightScheme::Averaging => {
            let third = 1.0 / 3.0;
            fill_type(&mut weights, &mut anchor_coeff, n, &sets.foreground, |_| third);
            fill_type(&mut weights, &mut anchor_coeff, n, &sets.background, |_| third);
            fill_type(&mut weights, &mut anchor_coeff, n, &sets.cross, |_| third);
        }
        WeightScheme::AssignLarger => {
            let labels: Vec<usize> = records.iter().map(majority_class).collect();
            let mates: Vec<Vec<usize>> = (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| j != i && labels[j] == labels[i])
                        .collect()
                })
                .collect();
            fill_type(&mut weights, &mut anchor_coeff, n, &mates, |_| 1.0);
        }
    }

    if anchor_coeff.iter().all(|&a| a == 0.0) {
        log::warn!("contrastive batch has no positive pairs; loss is 0");
    }
    let w = Tensor::new(vec![n, n], weights);
    let a = Tensor::vector(anchor_coeff);
    Ok(contrastive_graph(tape, embeddings, &w, &a, tau))
}

/// The component class holding the larger label share; foreground on ties.
pub fn majority_class(record: &MixRecord) -> usize {
    if record.lambda_effective >= 0.5 {
        record.fg_class
    } else {
        record.bg_class
    }
}

/// Prior-compensated soft-label cross entropy: the mean over the batch of
/// −Σ_k ỹ_k·log softmax(z + m)_k with m the log class prior. Because
/// label rows sum to 1, each row reduces to lse(z+m) − Σ_k ỹ_k·(z+m)_k,
/// which the graph computes without a broadcast subtraction.
pub fn balanced_ce(
    tape: &mut Tape,
    logits: Var,
    soft_labels: &Tensor,
    log_prior: &[f64],
) -> Var {
    let shape = tape.shape(logits).to_vec();
    assert_eq!(shape.len(), 2, "logits must be [n, C]");
    let (n, c) = (shape[0], shape[1]);
    assert_eq!(soft_labels.shape(), &[n, c], "label shape mismatch");
    assert_eq!(log_prior.len(), c, "prior does not cover classes");
    debug_assert!(soft_labels
        .data()
        .chunks_exact(c)
        .all(|row| (row.iter().sum::<f64>() - 1.0).abs() < 1e-9));

    let m = tape.leaf(&Tensor::vector(log_prior.to_vec()));
    let shifted = tape.add_row(logits, m);
    let lse = tape.log_sum_exp_rows(shifted);
    let lse_total = tape.sum(lse);
    let picked = tape.mask_apply(shifted, soft_labels);
    let picked_total = tape.sum(picked);
    let diff = tape.sub(lse_total, picked_total);
    tape.scale(diff, 1.0 / n as f64)
}

/// L_total = L_BCE + η·L_SMC.
pub fn total_loss(tape: &mut Tape, l_bce: Var, l_smc: Var, eta: f64) -> Var {
    assert!(eta >= 0.0, "negative loss weight");
    let weighted = tape.scale(l_smc, eta);
    tape.add(l_bce, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check;
    use crate::mixer::MaskRect;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn record(fg: usize, bg: usize, lambda: f64) -> MixRecord {
        let mut soft_label = vec![0.0; fg.max(bg) + 1];
        soft_label[fg] += lambda;
        soft_label[bg] += 1.0 - lambda;
        MixRecord {
            fg_class: fg,
            bg_class: bg,
            lambda_sampled: lambda,
            lambda_effective: lambda,
            mask_rect: MaskRect {
                top: 0,
                left: 0,
                height: 8,
                width: 8,
            },
            soft_label,
        }
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} !≈ {b} (tol {tol})");
    }

    fn eval_smc(
        embeddings: Tensor,
        records: &[MixRecord],
        tau: f64,
        scheme: WeightScheme,
    ) -> f64 {
        let sets = classify_pairs(records);
        let mut tape = Tape::new();
        let z = tape.leaf(&embeddings);
        let loss = smc_loss_variant(&mut tape, z, &sets, records, tau, scheme).unwrap();
        tape.scalar(loss)
    }

    #[test]
    fn taxonomy_hand_example() {
        // (A,B),(A,C),(D,B),(B,E),(C,D) with A..E as 0..4.
        let records = vec![
            record(0, 1, 0.5),
            record(0, 2, 0.5),
            record(3, 1, 0.5),
            record(1, 4, 0.5),
            record(2, 3, 0.5),
        ];
        let sets = classify_pairs(&records);
        assert_eq!(sets.foreground[0], vec![1]);
        assert_eq!(sets.background[0], vec![2]);
        assert_eq!(sets.cross[0], vec![3]);
        assert_eq!(sets.negatives[0], vec![4]);
    }

    #[test]
    fn identical_records_are_mutual_f_and_b() {
        let records = vec![record(0, 1, 0.5); 4];
        let sets = classify_pairs(&records);
        for i in 0..4 {
            let rest: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            assert_eq!(sets.foreground[i], rest);
            assert_eq!(sets.background[i], rest);
            assert!(sets.cross[i].is_empty());
            assert!(sets.negatives[i].is_empty());
        }
    }

    #[test]
    fn disjoint_classes_are_all_negatives() {
        let records = vec![record(0, 1, 0.5), record(2, 3, 0.5), record(4, 5, 0.5)];
        let sets = classify_pairs(&records);
        for i in 0..3 {
            assert!(sets.foreground[i].is_empty());
            assert!(sets.background[i].is_empty());
            assert!(sets.cross[i].is_empty());
            assert_eq!(sets.negatives[i].len(), 2);
        }
    }

    #[test]
    fn weights_hand_values_and_normalization() {
        let w = loss_weights(0.5);
        close(w.w_f, 1.0 / 3.0, 1e-15);
        close(w.w_b, 1.0 / 3.0, 1e-15);
        close(w.w_c, 1.0 / 3.0, 1e-15);
        let w = loss_weights(0.8);
        close(w.w_f, 0.5333333333, 1e-9);
        close(w.w_b, 0.1333333333, 1e-9);
        close(w.w_c, 0.3333333333, 1e-9);
    }

    #[test]
    fn smc_two_aligned_foreground_positives() {
        // Only anchors 0 and 1 pair (shared foreground), embeddings equal:
        // each term is ln(1+e^{-10}); the type mean and the λ=0.5 weight
        // give (1/3)·that.
        let z = Tensor::matrix(3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let records = vec![record(0, 1, 0.5), record(0, 2, 0.5), record(3, 4, 0.5)];
        let loss = eval_smc(z, &records, 0.1, WeightScheme::Weighted);
        let expect = (1.0f64 / 3.0) * (1.0 + (-10.0f64).exp()).ln();
        close(loss, expect, 1e-12);
        close(loss, 1.51e-5, 2e-7);
    }

    #[test]
    fn smc_orthogonal_positive_gives_third_of_ln2() {
        // Mutually orthogonal embeddings: both paired anchors see one
        // positive at similarity 0 against one negative at similarity 0.
        let z = Tensor::matrix(
            3,
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        );
        let records = vec![record(0, 1, 0.5), record(0, 2, 0.5), record(3, 4, 0.5)];
        let loss = eval_smc(z, &records, 0.1, WeightScheme::Weighted);
        close(loss, std::f64::consts::LN_2 / 3.0, 1e-12);
    }

    #[test]
    fn all_negative_batch_is_exactly_zero_with_zero_grads() {
        let z = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let records = vec![record(0, 1, 0.5), record(2, 3, 0.5)];
        let sets = classify_pairs(&records);
        let mut tape = Tape::new();
        let zv = tape.leaf(&z);
        let loss = smc_loss(&mut tape, zv, &sets, &records, 0.1).unwrap();
        let (value, grads) = tape.eval_with_grad(loss, &[zv]).unwrap();
        assert_eq!(value, 0.0);
        assert!(grads[0].data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let records = vec![record(0, 1, 0.5), record(0, 1, 0.5)];
        let sets = classify_pairs(&records);
        let mut tape = Tape::new();
        let z = tape.leaf(&Tensor::matrix(1, 2, vec![1.0, 0.0]));
        let err = smc_loss(&mut tape, z, &sets, &records[..1], 0.1).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    fn random_unit_embeddings(n: usize, d: usize, seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| r.random::<f64>() - 0.5).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            data.extend(row.into_iter().map(|v| v / norm));
        }
        Tensor::matrix(n, d, data)
    }

    fn random_records(n: usize, vocab: usize, seed: u64) -> Vec<MixRecord> {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|_| {
                record(
                    r.random_range(0..vocab),
                    r.random_range(0..vocab),
                    r.random_range(0.2..0.8),
                )
            })
            .collect()
    }

    #[test]
    fn smc_gradient_matches_finite_differences() {
        let records = random_records(6, 3, 40);
        let sets = classify_pairs(&records);
        let z = random_unit_embeddings(6, 4, 41);
        // The loss L2-normalizes inside the graph so perturbed points stay
        // on valid inputs.
        let report = finite_diff_check(&[z], |tape, vars| {
            let unit = tape.l2_normalize(vars[0]);
            smc_loss(tape, unit, &sets, &records, 0.1).unwrap()
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn smc_is_permutation_invariant() {
        let records = random_records(8, 4, 50);
        let z = random_unit_embeddings(8, 5, 51);
        let base = eval_smc(z.clone(), &records, 0.1, WeightScheme::Weighted);
        let perm = [3usize, 7, 0, 5, 1, 6, 2, 4];
        let mut pdata = Vec::new();
        for &i in &perm {
            pdata.extend_from_slice(z.row(i));
        }
        let precs: Vec<MixRecord> = perm.iter().map(|&i| records[i].clone()).collect();
        let shuffled = eval_smc(Tensor::matrix(8, 5, pdata), &precs, 0.1, WeightScheme::Weighted);
        close(base, shuffled, 1e-10);
    }

    #[test]
    fn smc_is_rotation_invariant() {
        let records = random_records(7, 3, 60);
        let z = random_unit_embeddings(7, 5, 61);
        let base = eval_smc(z.clone(), &records, 0.1, WeightScheme::Weighted);
        // Compose Givens rotations: inner products are preserved exactly
        // up to rounding.
        let mut rotated = z.clone();
        let mut r = rng::seeded(62);
        for _ in 0..10 {
            let p = r.random_range(0..5);
            let mut q = r.random_range(0..5);
            if q == p {
                q = (q + 1) % 5;
            }
            let theta: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let (c, s) = (theta.cos(), theta.sin());
            for i in 0..7 {
                let row = &mut rotated.data_mut()[i * 5..(i + 1) * 5];
                let (a, b) = (row[p], row[q]);
                row[p] = c * a - s * b;
                row[q] = s * a + c * b;
            }
        }
        let rot = eval_smc(rotated, &records, 0.1, WeightScheme::Weighted);
        close(base, rot, 1e-10);
    }

    #[test]
    fn averaging_equals_weighted_at_half() {
        let records = random_records(8, 3, 70);
        let half: Vec<MixRecord> = records
            .iter()
            .map(|r| record(r.fg_class, r.bg_class, 0.5))
            .collect();
        let z = random_unit_embeddings(8, 4, 71);
        let a = eval_smc(z.clone(), &half, 0.1, WeightScheme::Weighted);
        let b = eval_smc(z, &half, 0.1, WeightScheme::Averaging);
        assert_eq!(a, b, "0.5/1.5 and 1/3 are the same f64");
    }

    #[test]
    fn assign_larger_matches_a_supcon_oracle() {
        // All λ = 0.8 → majority labels are the foreground classes.
        let mut records = random_records(8, 3, 80);
        for r in &mut records {
            r.lambda_effective = 0.8;
        }
        let z = random_unit_embeddings(8, 4, 81);
        let got = eval_smc(z.clone(), &records, 0.1, WeightScheme::AssignLarger);

        // Independent scalar supervised-contrastive evaluation on fg labels.
        let labels: Vec<usize> = records.iter().map(|r| r.fg_class).collect();
        let n = 8;
        let sim = |i: usize, j: usize| -> f64 {
            z.row(i).iter().zip(z.row(j)).map(|(&a, &b)| a * b).sum::<f64>() / 0.1
        };
        let mut total = 0.0;
        let mut anchors = 0;
        for i in 0..n {
            let pos: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if pos.is_empty() {
                continue;
            }
            anchors += 1;
            let mx = (0..n)
                .filter(|&j| j != i)
                .map(|j| sim(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sim(i, j) - mx).exp())
                .sum();
            let lse = mx + denom.ln();
            let mean_pos: f64 = pos.iter().map(|&p| sim(i, p)).sum::<f64>() / pos.len() as f64;
            total += lse - mean_pos;
        }
        let expect = total / anchors as f64;
        close(got, expect, 1e-10);
    }

    #[test]
    fn assign_larger_without_matches_is_zero() {
        let records = vec![record(0, 1, 0.8), record(2, 0, 0.8), record(3, 0, 0.8)];
        let z = random_unit_embeddings(3, 4, 90);
        assert_eq!(eval_smc(z, &records, 0.1, WeightScheme::AssignLarger), 0.0);
    }

    #[test]
    fn bce_hand_values() {
        // Uniform prior, logits [0,0], label on class 0 → ln 2.
        let mut tape = Tape::new();
        let logits = tape.leaf(&Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let labels = Tensor::matrix(1, 2, vec![1.0, 0.0]);
        let uniform = [0.5f64.ln(), 0.5f64.ln()];
        let loss = balanced_ce(&mut tape, logits, &labels, &uniform);
        close(tape.scalar(loss), 0.6931, 1e-4);

        // Prior [0.9, 0.1], label on the rare class → −ln 0.1.
        let mut tape = Tape::new();
        let logits = tape.leaf(&Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let labels = Tensor::matrix(1, 2, vec![0.0, 1.0]);
        let prior = [0.9f64.ln(), 0.1f64.ln()];
        let loss = balanced_ce(&mut tape, logits, &labels, &prior);
        close(tape.scalar(loss), 2.3026, 1e-4);
    }

    #[test]
    fn bce_prior_shift_is_a_no_op() {
        let mut r = rng::seeded(100);
        let logits_data: Vec<f64> = (0..12).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut labels = vec![0.0; 12];
        for i in 0..4 {
            let lam: f64 = r.random_range(0.2..0.8);
            labels[i * 3] = lam;
            labels[i * 3 + 1] = 1.0 - lam;
        }
        let labels = Tensor::matrix(4, 3, labels);
        let eval = |prior: [f64; 3]| {
            let mut tape = Tape::new();
            let z = tape.leaf(&Tensor::matrix(4, 3, logits_data.clone()));
            let loss = balanced_ce(&mut tape, z, &labels, &prior);
            tape.scalar(loss)
        };
        let base = eval([0.0, 0.0, 0.0]);
        let shifted = eval([1.7, 1.7, 1.7]);
        let uniform = eval([(1.0f64 / 3.0).ln(); 3]);
        close(base, shifted, 1e-9);
        close(base, uniform, 1e-9);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut r = rng::seeded(110);
        let logits = Tensor::matrix(4, 3, (0..12).map(|_| r.random_range(-1.0..1.0)).collect());
        let mut labels = vec![0.0; 12];
        for i in 0..4 {
            labels[i * 3 + i % 3] = 1.0;
        }
        let labels = Tensor::matrix(4, 3, labels);
        let prior = [0.6f64.ln(), 0.3f64.ln(), 0.1f64.ln()];
        let report = finite_diff_check(&[logits], |tape, vars| {
            balanced_ce(tape, vars[0], &labels, &prior)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn total_loss_arithmetic() {
        let mut tape = Tape::new();
        let bce = tape.constant_scalar(1.0);
        let smc = tape.constant_scalar(2.0);
        let total = total_loss(&mut tape, bce, smc, 0.1);
        close(tape.scalar(total), 1.2, 1e-15);
        let zero_eta = total_loss(&mut tape, bce, smc, 0.0);
        assert_eq!(tape.scalar(zero_eta), tape.scalar(bce));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn taxonomy_partitions_and_is_symmetric(
            seed in 0u64..1000,
            n in 2usize..24,
            vocab in 1usize..8,
        ) {
            let records = random_records(n, vocab, seed);
            let sets = classify_pairs(&records);
            for i in 0..n {
                // No self membership.
                for list in [&sets.foreground[i], &sets.background[i], &sets.cross[i], &sets.negatives[i]] {
                    prop_assert!(!list.contains(&i));
                }
                // Cross excludes F and B; negatives exclude all three.
                for &j in &sets.cross[i] {
                    prop_assert!(!sets.foreground[i].contains(&j));
                    prop_assert!(!sets.background[i].contains(&j));
                }
                // Union covers the batch minus the anchor.
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
                prop_assert_eq!(all, expect);
                // Symmetry of each relation.
                for &j in &sets.foreground[i] {
                    prop_assert!(sets.foreground[j].contains(&i));
                }
                for &j in &sets.background[i] {
                    prop_assert!(sets.background[j].contains(&i));
                }
                for &j in &sets.cross[i] {
                    prop_assert!(sets.cross[j].contains(&i));
                }
            }
        }

        #[test]
        fn weights_always_sum_to_one(lambda in 0.0f64..=1.0) {
            let w = loss_weights(lambda);
            prop_assert!(w.w_f >= 0.0 && w.w_b >= 0.0 && w.w_c >= 0.0);
            prop_assert!((w.w_f + w.w_b + w.w_c - 1.0).abs() < 1e-12);
        }

        #[test]
        fn smc_loss_is_finite_on_unit_embeddings(
            seed in 0u64..500,
            n in 2usize..12,
            vocab in 1usize..6,
        ) {
            let records = random_records(n, vocab, seed);
            let sets = classify_pairs(&records);
            let z = random_unit_embeddings(n, 6, seed ^ 0xabc);
            let mut tape = Tape::new();
            let zv = tape.leaf(&z);
            let loss = smc_loss(&mut tape, zv, &sets, &records, 0.1).unwrap();
            let (value, grads) = tape.eval_with_grad(loss, &[zv]).unwrap();
            prop_assert!(value.is_finite());
            prop_assert!(grads[0].data().iter().all(|g| g.is_finite()));
        }
    }
}
