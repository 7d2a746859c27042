//! SGD with classical momentum and decoupled-from-nothing weight decay:
//! decay is added to the gradient before the momentum update, matching the
//! usual `velocity = momentum·velocity + grad + wd·param` formulation.

use crate::tensor::Tensor;

/// Velocity buffers, one per parameter tensor, in parameter order.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocities: Vec<Tensor>,
}

impl SgdState {
    /// Zero-initialized velocities shaped like `params`.
    pub fn new(params: &[Tensor]) -> Self {
        SgdState {
            velocities: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
        }
    }

    pub fn velocities(&self) -> &[Tensor] {
        &self.velocities
    }

    /// Rebuilds state from checkpointed buffers.
    pub fn from_velocities(velocities: Vec<Tensor>) -> Self {
        SgdState { velocities }
    }
}

/// One update step:
///
/// ```text
/// v ← momentum·v + grad + weight_decay·param
/// param ← param − lr·v
/// ```
///
/// With `lr = 0` parameters are unchanged but velocities still update.
pub fn sgd_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    assert_eq!(params.len(), grads.len(), "sgd_step: param/grad count");
    assert_eq!(params.len(), state.velocities.len(), "sgd_step: state count");
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocities) {
        assert_eq!(p.shape(), g.shape(), "sgd_step: param/grad shape");
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv + gv + weight_decay * *pv;
            *pv -= lr * *vv;
        }
    }
}
