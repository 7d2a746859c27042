//! The trainable network: a ReLU MLP encoder shared by a two-layer
//! projection head (contrastive branch, L2-normalized output) and a
//! linear classifier (recognition branch).

use crate::rng::Prng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Architecture description. `encoder_widths` lists the hidden layer
/// sizes in order; the last entry is the feature dimension both heads
/// consume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub head_dim: usize,
    pub num_classes: usize,
}

impl ModelLayout {
    pub fn feature_dim(&self) -> usize {
        *self.encoder_widths.last().expect("encoder needs a layer")
    }

    /// Named parameter shapes in storage order: encoder layers, then the
    /// projection head pair, then the classifier. Checkpoints persist
    /// this table so a reload can validate it against the config.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        assert!(!self.encoder_widths.is_empty(), "encoder needs a layer");
        let mut shapes = Vec::new();
        let mut fan_in = self.input_dim;
        for (i, &width) in self.encoder_widths.iter().enumerate() {
            shapes.push((format!("enc{i}.w"), vec![fan_in, width]));
            shapes.push((format!("enc{i}.b"), vec![width]));
            fan_in = width;
        }
        let feat = self.feature_dim();
        shapes.push(("head0.w".into(), vec![feat, feat]));
        shapes.push(("head0.b".into(), vec![feat]));
        shapes.push(("head1.w".into(), vec![feat, self.head_dim]));
        shapes.push(("head1.b".into(), vec![self.head_dim]));
        shapes.push(("cls.w".into(), vec![feat, self.num_classes]));
        shapes.push(("cls.b".into(), vec![self.num_classes]));
        shapes
    }
}

/// Layout plus the flat parameter tensors, in `tensor_shapes` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layout: ModelLayout,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Xavier-uniform weights (bound ±√(6/(fan_in+fan_out))) and zero
    /// biases. Weights are drawn row-major in storage order, so the
    /// parameter stream depends only on the layout and the rng state.
    pub fn init(layout: ModelLayout, rng: &mut Prng) -> Self {
        let tensors = layout
            .tensor_shapes()
            .into_iter()
            .map(|(_, shape)| match shape.len() {
                2 => {
                    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    let data = (0..shape[0] * shape[1])
                        .map(|_| rng.random_range(-bound..bound))
                        .collect();
                    Tensor::new(shape, data)
                }
                1 => Tensor::zeros(shape),
                _ => unreachable!("model parameters are matrices and vectors"),
            })
            .collect();
        ModelParams { layout, tensors }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Registers every parameter as a tape leaf, in storage order.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let vars = self.tensors.iter().map(|t| tape.leaf(t)).collect();
        BoundModel {
            layout: self.layout.clone(),
            vars,
        }
    }
}

/// The parameters of one model registered on one tape.
pub struct BoundModel {
    layout: ModelLayout,
    vars: Vec<Var>,
}

impl BoundModel {
    /// Wraps vars already registered elsewhere (order must match
    /// `tensor_shapes`), for harnesses that own the leaves themselves.
    pub fn from_vars(layout: ModelLayout, vars: Vec<Var>) -> Self {
        assert_eq!(vars.len(), layout.tensor_shapes().len(), "var count mismatch");
        BoundModel { layout, vars }
    }

    pub fn params(&self) -> &[Var] {
        &self.vars
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    fn linear(&self, tape: &mut Tape, x: Var, pair: usize) -> Var {
        let wx = tape.matmul(x, self.vars[2 * pair], false);
        tape.add_row(wx, self.vars[2 * pair + 1])
    }

    /// [n, input_dim] → [n, feature_dim], ReLU after every layer.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        for layer in 0..self.layout.encoder_widths.len() {
            let z = self.linear(tape, h, layer);
            h = tape.relu(z);
        }
        h
    }

    /// Projection head on encoder features: fc → ReLU → fc → L2 row
    /// normalization, [n, feature_dim] → [n, head_dim] on the unit sphere.
    pub fn project(&self, tape: &mut Tape, features: Var) -> Var {
        let depth = self.layout.encoder_widths.len();
        let h = self.linear(tape, features, depth);
        let h = tape.relu(h);
        let z = self.linear(tape, h, depth + 1);
        tape.l2_normalize(z)
    }

    /// Linear classifier on encoder features: [n, feature_dim] → [n, C]
    /// unnormalized logits.
    pub fn classify(&self, tape: &mut Tape, features: Var) -> Var {
        let depth = self.layout.encoder_widths.len();
        self.linear(tape, features, depth + 2)
    }
}
