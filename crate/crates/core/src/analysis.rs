//! Feature-space diagnostics: per-class centers, the inter-class
//! separation score, the semantic similarity score, and the combined
//! report.

use crate::dataset::{Dataset, SemanticVectors, SplitAssignment, SplitTag};
use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::trainer::Checkpoint;
use serde::{Deserialize, Serialize};

/// Rows per forward chunk when embedding a dataset.
const CHUNK: usize = 256;

/// Per-class mean feature vectors and the sample counts behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters {
    pub centers: Vec<Vec<f64>>,
    pub counts: Vec<u32>,
}

/// Which representation the centers average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    /// Encoder features (the classifier's input); the default.
    Encoder,
    /// The contrastive head's normalized output.
    Projection,
}

/// Distance reading inside the inter-class score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsMetric {
    /// Euclidean norm of the center difference; the default (a signed
    /// reading cannot mean "centers are far apart").
    L2,
    /// Plain component sum of the difference vector, kept for comparison.
    RawSum,
}

/// Means of per-class values within each frequency split; `all` spans
/// every class. Splits with no classes are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub many: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub medium: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub few: Option<f64>,
    pub all: f64,
}

pub fn split_means(values: &[f64], split: &SplitAssignment) -> SplitScores {
    let mean_of = |classes: &[usize]| -> Option<f64> {
        (!classes.is_empty())
            .then(|| classes.iter().map(|&k| values[k]).sum::<f64>() / classes.len() as f64)
    };
    SplitScores {
        many: mean_of(&split.classes_with(SplitTag::Many)),
        medium: mean_of(&split.classes_with(SplitTag::Medium)),
        few: mean_of(&split.classes_with(SplitTag::Few)),
        all: values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Mean feature vector per class over already-extracted features.
pub fn centers_from_features(
    features: &Tensor,
    labels: &[usize],
    num_classes: usize,
) -> Result<ClassCenters> {
    let shape = features.shape();
    assert_eq!(shape.len(), 2, "features must be [n, d]");
    assert_eq!(shape[0], labels.len(), "one label per feature row");
    let d = shape[1];
    let mut centers = vec![vec![0.0; d]; num_classes];
    let mut counts = vec![0u32; num_classes];
    for (i, &k) in labels.iter().enumerate() {
        assert!(k < num_classes, "label outside vocabulary");
        counts[k] += 1;
        for (acc, &v) in centers[k].iter_mut().zip(features.row(i)) {
            *acc += v;
        }
    }
    if let Some(k) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass {
            class: k,
            detail: "no samples to center".into(),
        });
    }
    for (center, &n) in centers.iter_mut().zip(&counts) {
        for v in center.iter_mut() {
            *v /= n as f64;
        }
    }
    Ok(ClassCenters { centers, counts })
}

/// Embeds the dataset (un-mixed, un-augmented) through the checkpoint's
/// model and returns one feature row per sample, in dataset order.
pub fn embed_dataset(ck: &Checkpoint, dataset: &Dataset, source: FeatureSource) -> Tensor {
    let layout = &ck.params.layout;
    assert_eq!(layout.input_dim, dataset.dims().numel(), "image size mismatch");
    let d = match source {
        FeatureSource::Encoder => layout.feature_dim(),
        FeatureSource::Projection => layout.head_dim,
    };
    let mut rows = Vec::with_capacity(dataset.len() * d);
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let mut tape = Tape::new();
        let model = ck.params.bind(&mut tape);
        let x = tape.leaf(&dataset.to_matrix(chunk));
        let feat = model.encode(&mut tape, x);
        let out = match source {
            FeatureSource::Encoder => feat,
            FeatureSource::Projection => model.project(&mut tape, feat),
        };
        rows.extend_from_slice(tape.value(out));
    }
    Tensor::matrix(dataset.len(), d, rows)
}

/// Per-class centers of the model's features over a dataset covering
/// every class.
pub fn class_centers(
    ck: &Checkpoint,
    dataset: &Dataset,
    source: FeatureSource,
) -> Result<ClassCenters> {
    let features = embed_dataset(ck, dataset, source);
    let labels: Vec<usize> = dataset.samples().iter().map(|s| s.class_id).collect();
    centers_from_features(&features, &labels, dataset.num_classes())
}

/// IS_k = exp(−(1/C)·Σ_j dist(c_k, c_j)/τ'). Under the default metric,
/// dist is the Euclidean norm, so IS_k ∈ (0,1] and lower means the class
/// sits farther from the rest.
pub fn inter_class_score(centers: &ClassCenters, tau_prime: f64, metric: IsMetric) -> Vec<f64> {
    assert!(tau_prime > 0.0, "temperature must be positive");
    let c = centers.centers.len();
    (0..c)
        .map(|k| {
            let total: f64 = (0..c)
                .map(|j| {
                    let diff = centers.centers[k]
                        .iter()
                        .zip(&centers.centers[j])
                        .map(|(&a, &b)| a - b);
                    match metric {
                        IsMetric::L2 => diff.map(|v| v * v).sum::<f64>().sqrt(),
                        IsMetric::RawSum => diff.sum(),
                    }
                })
                .sum();
            (-total / (c as f64 * tau_prime)).exp()
        })
        .collect()
}

/// C×C cosine matrices of semantic vectors and centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrices {
    pub semantic: Tensor,
    pub centers: Tensor,
}

/// Cosine matrix of a set of vectors; symmetric by construction with a
/// unit diagonal. A zero-norm row is an error naming the class.
fn cosine_matrix(rows: &[Vec<f64>], what: &str) -> Result<Tensor> {
    let c = rows.len();
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(k) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::contract(format!("class {k} has a zero-norm {what}")));
    }
    let mut data = vec![0.0; c * c];
    for i in 0..c {
        for j in i..c {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(&a, &b)| a * b).sum();
            let cos = dot / (norms[i] * norms[j]);
            data[i * c + j] = cos;
            data[j * c + i] = cos;
        }
    }
    Ok(Tensor::matrix(c, c, data))
}

/// SS = (1/C²)·Σ_ij |S^s_ij − S^c_ij|: the mean absolute gap between the
/// semantic cosine structure and the learned one. Lower is better.
pub fn semantic_similarity_score(
    centers: &ClassCenters,
    semantic: &SemanticVectors,
) -> Result<(f64, SimilarityMatrices)> {
    let c = centers.centers.len();
    if semantic.num_classes() != c {
        return Err(Error::contract(format!(
            "{} semantic vectors for {} classes",
            semantic.num_classes(),
            c
        )));
    }
    let semantic_rows: Vec<Vec<f64>> = (0..c).map(|k| semantic.vector(k).to_vec()).collect();
    let matrices = SimilarityMatrices {
        semantic: cosine_matrix(&semantic_rows, "semantic vector")?,
        centers: cosine_matrix(&centers.centers, "center")?,
    };
    let ss = matrices
        .semantic
        .data()
        .iter()
        .zip(matrices.centers.data())
        .map(|(&a, &b)| (a - b).abs())
        .sum::<f64>()
        / (c * c) as f64;
    Ok((ss, matrices))
}

/// Split aggregation of SS: the row mean over anchor classes in the
/// split, against all classes as columns.
pub fn per_split_ss(matrices: &SimilarityMatrices, split: &SplitAssignment) -> SplitScores {
    let c = matrices.semantic.rows();
    let row_gap: Vec<f64> = (0..c)
        .map(|i| {
            matrices
                .semantic
                .row(i)
                .iter()
                .zip(matrices.centers.row(i))
                .map(|(&a, &b)| (a - b).abs())
                .sum::<f64>()
                / c as f64
        })
        .collect();
    split_means(&row_gap, split)
}

/// The combined diagnostics table: separation, semantic alignment, and
/// accuracy per frequency split, stamped with the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub inter_class: SplitScores,
    pub semantic_similarity: SplitScores,
    pub accuracy: SplitScores,
    #[serde(rename = "config-hash")]
    pub config_hash: String,
}

/// Runs evaluation plus both feature-space diagnostics on one dataset.
pub fn accuracy_report(
    ck: &Checkpoint,
    dataset: &Dataset,
    semantic: &SemanticVectors,
    source: FeatureSource,
    metric: IsMetric,
) -> Result<AnalysisReport> {
    let split = ck.split();
    let eval = crate::trainer::evaluate(ck, dataset)?;
    let centers = class_centers(ck, dataset, source)?;
    let is = inter_class_score(&centers, ck.config.tau_prime, metric);
    let (_, matrices) = semantic_similarity_score(&centers, semantic)?;
    Ok(AnalysisReport {
        inter_class: split_means(&is, &split),
        semantic_similarity: per_split_ss(&matrices, &split),
        accuracy: SplitScores {
            many: eval.splits.many,
            medium: eval.splits.medium,
            few: eval.splits.few,
            all: eval.splits.all,
        },
        config_hash: ck.config.config_hash(),
    })
}

impl AnalysisReport {
    /// Aligned text rendering; the JSON document stays the machine
    /// contract.
    pub fn render_text(&self) -> String {
        let cell = |v: Option<f64>| match v {
            Some(x) => format!("{x:>8.4}"),
            None => format!("{:>8}", "-"),
        };
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:>8} {:>8} {:>8} {:>8}\n",
            "metric", "many", "medium", "few", "all"
        ));
        for (name, s) in [
            ("inter_class", &self.inter_class),
            ("semantic_similarity", &self.semantic_similarity),
            ("accuracy", &self.accuracy),
        ] {
            out.push_str(&format!(
                "{:<20} {} {} {} {}\n",
                name,
                cell(s.many),
                cell(s.medium),
                cell(s.few),
                cell(Some(s.all)),
            ));
        }
        out.push_str(&format!("config-hash {}\n", self.config_hash));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split_classes;
    use crate::rng;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} !≈ {b} (tol {tol})");
    }

    fn centers_of(rows: Vec<Vec<f64>>) -> ClassCenters {
        let counts = vec![1; rows.len()];
        ClassCenters { centers: rows, counts }
    }

    #[test]
    fn single_sample_classes_center_on_themselves() {
        let features = Tensor::matrix(2, 2, vec![0.3, -1.0, 2.0, 0.5]);
        let centers = centers_from_features(&features, &[0, 1], 2).unwrap();
        assert_eq!(centers.centers[0], vec![0.3, -1.0]);
        assert_eq!(centers.centers[1], vec![2.0, 0.5]);
        assert_eq!(centers.counts, vec![1, 1]);
    }

    #[test]
    fn two_member_class_centers_on_the_mean() {
        let features = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let centers = centers_from_features(&features, &[0, 0], 1).unwrap();
        assert_eq!(centers.centers[0], vec![0.5, 0.5]);
    }

    #[test]
    fn duplicating_samples_leaves_centers_unchanged() {
        let mut r = rng::seeded(5);
        let base: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let labels = [0usize, 1, 0];
        let features = Tensor::matrix(3, 4, base.clone());
        let a = centers_from_features(&features, &labels, 2).unwrap();
        let mut doubled = base.clone();
        doubled.extend_from_slice(&base);
        let doubled = Tensor::matrix(6, 4, doubled);
        let b = centers_from_features(&doubled, &[0, 1, 0, 0, 1, 0], 2).unwrap();
        for (x, y) in a.centers.iter().flatten().zip(b.centers.iter().flatten()) {
            close(*x, *y, 1e-12);
        }
        assert_eq!(b.counts, vec![4, 2]);
    }

    #[test]
    fn missing_class_is_named() {
        let features = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        match centers_from_features(&features, &[0, 0], 2) {
            Err(Error::MissingClass { class, .. }) => assert_eq!(class, 1),
            other => panic!("expected missing class, got {other:?}"),
        }
    }

    #[test]
    fn identical_centers_score_one_exactly() {
        let centers = centers_of(vec![vec![0.7, -0.2]; 3]);
        let is = inter_class_score(&centers, 10.0, IsMetric::L2);
        assert_eq!(is, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_class_hand_value() {
        // Distance 10 at τ'=10: IS = exp(−(0+10)/(2·10)) = e^(−1/2).
        let centers = centers_of(vec![vec![0.0, 0.0], vec![10.0, 0.0]]);
        let is = inter_class_score(&centers, 10.0, IsMetric::L2);
        close(is[0], 0.606531, 5e-7);
        close(is[1], 0.606531, 5e-7);
    }

    #[test]
    fn scaling_centers_apart_strictly_lowers_the_score() {
        let mut r = rng::seeded(8);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let base = inter_class_score(&centers_of(rows.clone()), 10.0, IsMetric::L2);
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| row.iter().map(|v| v * 3.0).collect())
            .collect();
        let far = inter_class_score(&centers_of(scaled), 10.0, IsMetric::L2);
        for (a, b) in base.iter().zip(&far) {
            assert!(b < a, "{b} !< {a}");
            assert!(*a > 0.0 && *a <= 1.0);
        }
    }

    #[test]
    fn score_is_permutation_equivariant() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0]];
        let is = inter_class_score(&centers_of(rows.clone()), 10.0, IsMetric::L2);
        let perm = [2usize, 0, 1];
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let is_p = inter_class_score(&centers_of(shuffled), 10.0, IsMetric::L2);
        for (slot, &src) in perm.iter().enumerate() {
            close(is_p[slot], is[src], 1e-15);
        }
    }

    #[test]
    fn raw_sum_metric_differs_and_is_sign_sensitive() {
        let rows = vec![vec![0.0, 0.0], vec![10.0, 0.0]];
        let l2 = inter_class_score(&centers_of(rows.clone()), 10.0, IsMetric::L2);
        let raw = inter_class_score(&centers_of(rows), 10.0, IsMetric::RawSum);
        // Signed differences flip per anchor: class 0 sums −10, class 1
        // sums +10, so the two scores are reciprocal.
        close(raw[0], 0.5f64.exp(), 1e-12);
        close(raw[1], (-0.5f64).exp(), 1e-12);
        assert!(raw[0] > 1.0, "raw-sum reading can exceed 1, unlike {}", l2[0]);
    }

    #[test]
    fn identical_structures_have_zero_ss() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let centers = centers_of(rows.clone());
        let semantic = SemanticVectors::new(rows).unwrap();
        let (ss, matrices) = semantic_similarity_score(&centers, &semantic).unwrap();
        assert_eq!(ss, 0.0);
        for i in 0..3 {
            close(matrices.semantic.row(i)[i], 1.0, 1e-12);
        }
    }

    #[test]
    fn ss_hand_value() {
        // S^s = I (orthogonal vectors); centers at 60°: S^c off-diagonal
        // 0.5 → SS = (0 + 0.5 + 0.5 + 0)/4.
        let semantic = SemanticVectors::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let half = 3.0f64.sqrt() / 2.0;
        let centers = centers_of(vec![vec![1.0, 0.0], vec![0.5, half]]);
        let (ss, _) = semantic_similarity_score(&centers, &semantic).unwrap();
        close(ss, 0.25, 5e-7);
    }

    #[test]
    fn ss_is_rotation_and_scale_invariant() {
        let mut r = rng::seeded(12);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let semantic = SemanticVectors::new(
            (0..4)
                .map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap();
        let (base, _) = semantic_similarity_score(&centers_of(rows.clone()), &semantic).unwrap();

        // Givens rotations preserve pairwise cosines.
        let mut rotated = rows.clone();
        for _ in 0..8 {
            let p = r.random_range(0..3);
            let q = (p + 1 + r.random_range(0..2)) % 3;
            let theta: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let (c, s) = (theta.cos(), theta.sin());
            for row in &mut rotated {
                let (a, b) = (row[p], row[q]);
                row[p] = c * a - s * b;
                row[q] = s * a + c * b;
            }
        }
        let (rot, _) = semantic_similarity_score(&centers_of(rotated), &semantic).unwrap();
        close(base, rot, 1e-10);

        // Per-class positive scaling cancels in the cosine.
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(k, row)| row.iter().map(|v| v * (k + 1) as f64 * 0.7).collect())
            .collect();
        let (sc, _) = semantic_similarity_score(&centers_of(scaled), &semantic).unwrap();
        close(base, sc, 1e-12);
    }

    #[test]
    fn zero_norm_center_is_named() {
        let centers = centers_of(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        let semantic = SemanticVectors::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        match semantic_similarity_score(&centers, &semantic) {
            Err(Error::Contract(msg)) => assert!(msg.contains("class 1"), "msg {msg}"),
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn split_means_respect_the_assignment() {
        let values = [1.0, 0.5, 0.0, 0.25];
        // Strict thresholds: 100 > 60 is many, 5 < 10 is few, the
        // boundary count 10 lands in medium with 50.
        let split = split_classes(&[100, 50, 10, 5], 60, 10);
        let scores = split_means(&values, &split);
        close(scores.many.unwrap(), 1.0, 1e-15);
        close(scores.medium.unwrap(), 0.25, 1e-15);
        close(scores.few.unwrap(), 0.25, 1e-15);
        close(scores.all, (1.0 + 0.5 + 0.25) / 4.0, 1e-15);
    }

    #[test]
    fn report_serializes_with_the_published_keys() {
        let scores = SplitScores {
            many: Some(0.5),
            medium: None,
            few: Some(0.25),
            all: 0.4,
        };
        let report = AnalysisReport {
            inter_class: scores.clone(),
            semantic_similarity: scores.clone(),
            accuracy: scores,
            config_hash: "deadbeef".into(),
        };
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("inter_class").is_some());
        assert!(json.get("semantic_similarity").is_some());
        assert!(json.get("accuracy").is_some());
        assert_eq!(json.get("config-hash").unwrap(), "deadbeef");
        assert!(json["accuracy"].get("medium").is_none());
        let text = report.render_text();
        assert!(text.contains("inter_class"));
        assert!(text.contains("config-hash deadbeef"));
        let back: AnalysisReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
    }
}
