//! Finite-difference validation of tape gradients.
//!
//! The checker rebuilds the graph from scratch for every probe, so it is
//! independent of the backward pass it validates: agreement means the
//! analytic gradient matches the function the forward pass actually
//! computes.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Central-difference step. Chosen for f64: truncation and rounding error
/// balance near cbrt(eps) ≈ 6e-6 for O(1) inputs.
pub const FD_STEP: f64 = 1e-5;

/// Worst element found by [`finite_diff_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over elements of |analytic − fd| / max(1, |fd|)
    pub max_rel_err: f64,
    /// which parameter tensor held the worst element
    pub param: usize,
    /// flat element index within that parameter
    pub index: usize,
    pub analytic: f64,
    pub fd: f64,
}

/// Compares the tape gradient of `build` against central differences with
/// the default step [`FD_STEP`].
pub fn finite_diff_check<F>(params: &[Tensor], build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    finite_diff_check_eps(params, FD_STEP, build)
}

/// Compares the tape gradient of `build` against central differences.
///
/// `build` must construct the same graph for the same inputs; it is called
/// once per probed element (twice for the ± evaluations) plus once for the
/// analytic pass. The relative-error denominator is floored at 1 so tiny
/// gradients are compared absolutely.
pub fn finite_diff_check_eps<F>(
    params: &[Tensor],
    eps: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t)).collect();
    let root = build(&mut tape, &vars);
    let (_, analytic) = tape.eval_with_grad(root, &vars)?;
    finite_diff_compare(params, &analytic, eps, build)
}

/// Probes central differences against externally supplied gradients.
/// Split out so a harness can tamper with the analytic side and prove
/// the checker notices.
pub fn finite_diff_compare<F>(
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t)).collect();
        let root = build(&mut tape, &vars);
        tape.eval_with_grad(root, &vars).map(|(value, _)| value)
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        param: 0,
        index: 0,
        analytic: 0.0,
        fd: 0.0,
    };
    let mut probe = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ei in 0..param.numel() {
            let orig = param.data()[ei];
            probe[pi].data_mut()[ei] = orig + eps;
            let up = eval(&probe)?;
            probe[pi].data_mut()[ei] = orig - eps;
            let down = eval(&probe)?;
            probe[pi].data_mut()[ei] = orig;

            let fd = (up - down) / (2.0 * eps);
            let ana = analytic[pi].data()[ei];
            let rel = (ana - fd).abs() / fd.abs().max(1.0);
            if rel > report.max_rel_err {
                report = GradCheckReport {
                    max_rel_err: rel,
                    param: pi,
                    index: ei,
                    analytic: ana,
                    fd,
                };
            }
        }
    }
    Ok(report)
}
