use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{deq_forward_with_target, DeqBatch, DeqGrads, DeqSample, DeqSolver, ToyDeqModel};
use crate::error::{Error, Result};
use crate::hypergrad::{hypergradient, HypergradMethod};
use crate::numkit::DenseMatrix;
use crate::qn::QNConfig;
use crate::Scalar;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeqDiagnostics {
    /// Mean sample loss at the equilibria.
    pub loss: f64,
    pub forward_iters: usize,
    pub backward_iters: usize,
    pub fallback_count: usize,
    /// Samples whose forward solve stopped above tolerance (still used).
    pub unconverged: Vec<usize>,
    /// Samples dropped because a solve produced non-finite values.
    pub failed: Vec<usize>,
}

struct SampleGrad<T> {
    core: Vec<T>,
    z: Vec<T>,
    err: Vec<T>,
    loss: T,
    forward_iters: usize,
    backward_iters: usize,
    fallback: bool,
    converged: bool,
}

/// Mean-loss gradients over `batch`: per-sample forward solve, a left vector from
/// `method`, then analytic accumulation into each parameter block.
///
/// Samples are processed in parallel and summed in index order.
pub fn deq_param_grad<T: Scalar>(
    model: &ToyDeqModel<T>,
    batch: &DeqBatch<T>,
    method: &HypergradMethod<T>,
    solver: DeqSolver,
    cfg: &QNConfig<T>,
) -> Result<(DeqGrads<T>, DeqDiagnostics)> {
    method.validate()?;
    let theta = model.flatten_core();
    let per_sample: Vec<Result<SampleGrad<T>>> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (&batch.inputs[i], &batch.targets[i]);
            let fwd = deq_forward_with_target(model, x, y, solver, cfg)?;
            let sample = DeqSample { model, x, y };
            let hg = hypergradient(&sample, &theta, &fwd, method, None)?;
            Ok(SampleGrad {
                err: model.prediction_error(&fwd.z_star, y),
                loss: model.sample_loss(&fwd.z_star, y),
                core: hg.grad,
                forward_iters: fwd.iterations,
                backward_iters: hg.inversion_iterations,
                fallback: hg.fallback_triggered,
                converged: fwd.converged,
                z: fwd.z_star,
            })
        })
        .collect();

    let (d, m, k) = (model.state_dim(), model.input_dim(), model.output_dim());
    let mut grads = DeqGrads::zeros_like(model);
    let mut diag = DeqDiagnostics::default();
    let mut loss = T::zero();
    let mut used = 0usize;
    for (i, res) in per_sample.into_iter().enumerate() {
        let s = match res {
            Ok(s) => s,
            Err(Error::NonFiniteIterate { .. }) => {
                diag.failed.push(i);
                continue;
            }
            Err(e) => return Err(e),
        };
        used += 1;
        let (gw, rest) = s.core.split_at(d * d);
        let (gu, gb) = rest.split_at(d * m);
        crate::numkit::axpy(T::one(), gw, grads.w.as_mut_slice());
        crate::numkit::axpy(T::one(), gu, grads.u.as_mut_slice());
        crate::numkit::axpy(T::one(), gb, &mut grads.b);
        let outer = DenseMatrix::from_columns(k, d, |e| {
            let zj = crate::numkit::dot(e, &s.z);
            s.err.iter().map(|r| *r * zj).collect()
        });
        crate::numkit::axpy(T::one(), outer.as_slice(), grads.readout.as_mut_slice());
        crate::numkit::axpy(T::one(), &s.err, &mut grads.readout_bias);
        loss = loss + s.loss;
        diag.forward_iters += s.forward_iters;
        diag.backward_iters += s.backward_iters;
        diag.fallback_count += usize::from(s.fallback);
        if !s.converged {
            diag.unconverged.push(i);
        }
    }
    if used == 0 {
        return Err(Error::NonFiniteIterate {
            iteration: 0,
            residual_norms: vec![],
        });
    }
    let inv = T::one() / T::from_usize_lossy(used);
    let mut scaled = DeqGrads::zeros_like(model);
    scaled.add_scaled(inv, &grads);
    diag.loss = (loss * inv).as_f64();
    Ok((scaled, diag))
}

/// Mean sample loss at the equilibria, the objective [`deq_param_grad`] differentiates.
pub fn deq_loss<T: Scalar>(model: &ToyDeqModel<T>, batch: &DeqBatch<T>, cfg: &QNConfig<T>) -> Result<T> {
    let mut total = T::zero();
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let fwd = deq_forward_with_target(model, x, y, DeqSolver::Broyden, cfg)?;
        total = total + model.sample_loss(&fwd.z_star, y);
    }
    Ok(total / T::from_usize_lossy(batch.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ToyDeqModel<f64>, DeqBatch<f64>, QNConfig<f64>) {
        let teacher = ToyDeqModel::random(5, 3, 2, 100);
        let batch = DeqBatch::from_teacher(&teacher, 4, 1, 1e-12).unwrap();
        let cfg = QNConfig::default().with_tol(1e-12).with_max_iter(300);
        (ToyDeqModel::random(5, 3, 2, 0), batch, cfg)
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let (model, batch, cfg) = setup();
        let method = HypergradMethod::exact().with_exact_limits(200, 1e-12);
        let (grads, diag) = deq_param_grad(&model, &batch, &method, DeqSolver::Broyden, &cfg).unwrap();
        assert!(diag.unconverged.is_empty() && diag.failed.is_empty());
        let flat = grads.flatten();
        let h = 1e-6;
        // one W entry, one b entry, one readout entry and the readout bias
        for idx in [0, model.core_param_count() - 1, model.core_param_count() + 1, model.param_count() - 1] {
            let mut plus = model.clone();
            *plus.param_mut(idx) += h;
            let mut minus = model.clone();
            *minus.param_mut(idx) -= h;
            let fd = (deq_loss(&plus, &batch, &cfg).unwrap() - deq_loss(&minus, &batch, &cfg).unwrap()) / (2.0 * h);
            assert!((fd - flat[idx]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {idx}: {fd} vs {}", flat[idx]);
        }
    }

    #[test]
    fn jacobian_free_needs_no_backward_iterations() {
        let (model, batch, cfg) = setup();
        let (_, diag) = deq_param_grad(&model, &batch, &HypergradMethod::jacobian_free(), DeqSolver::Broyden, &cfg).unwrap();
        assert_eq!(diag.backward_iters, 0);
        assert!(diag.loss.is_finite());
    }
}
