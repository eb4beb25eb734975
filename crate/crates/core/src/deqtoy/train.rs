use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{deq_param_grad, DeqBatch, DeqSolver, ToyDeqModel};
use crate::error::{Error, Result};
use crate::hypergrad::{HypergradKind, HypergradMethod};
use crate::numkit::cosine;
use crate::outer::{RowStatus, RunTrace, TraceRow};
use crate::qn::QNConfig;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeqTrainConfig<T> {
    pub lr: T,
    pub steps: usize,
    pub solver: DeqSolver,
    pub qn: QNConfig<T>,
    /// Compare against the exact gradient every this many steps; 0 disables probes.
    pub probe_every: usize,
    /// Loss above which training stops with a diverged row.
    pub divergence_threshold: f64,
}

impl<T: Scalar> DeqTrainConfig<T> {
    pub fn new(lr: T, steps: usize) -> Self {
        Self {
            lr,
            steps,
            solver: DeqSolver::Broyden,
            qn: QNConfig::default().with_tol(T::lit(1e-8)).with_max_iter(200),
            probe_every: 10,
            divergence_threshold: 1e6,
        }
    }
}

/// Plain gradient descent on the mean readout loss, cycling through `data`.
///
/// Rows carry the loss before each step, forward/backward iteration counts and,
/// on probe steps, the cosine between the method's gradient and the exact one.
/// A loss above the divergence threshold ends the run with a `diverged` row and
/// `metadata["diverged"] = "true"`.
pub fn deq_train<T: Scalar>(
    model: &mut ToyDeqModel<T>,
    data: &[DeqBatch<T>],
    method: &HypergradMethod<T>,
    cfg: &DeqTrainConfig<T>,
) -> Result<RunTrace> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.lr >= T::zero()) {
        return Err(Error::InvalidConfig(format!("learning rate must be non-negative, got {}", cfg.lr)));
    }
    let start = Instant::now();
    let exact = HypergradMethod::exact().with_exact_limits(200, T::lit(1e-10));
    let mut trace = RunTrace::default();
    trace.metadata.insert("method".into(), format!("{:?}", method.kind));
    trace.metadata.insert("lr".into(), cfg.lr.to_string());
    let mut fallbacks = 0;
    for step in 0..cfg.steps {
        let batch = &data[step % data.len()];
        let (grads, diag) = deq_param_grad(model, batch, method, cfg.solver, &cfg.qn)?;
        fallbacks += diag.fallback_count;
        let mut row = TraceRow::blank(step);
        row.train_loss = diag.loss;
        row.inner_iters = diag.forward_iters;
        row.backward_iters = diag.backward_iters;
        row.fallback_count = fallbacks;
        row.tol = cfg.qn.tol.as_f64();
        row.step_size = cfg.lr.as_f64();
        if cfg.probe_every > 0 && step % cfg.probe_every == 0 {
            row.cosine = if method.kind == HypergradKind::Exact && method.refine_steps == 0 {
                1.0
            } else {
                let (g_exact, _) = deq_param_grad(model, batch, &exact, cfg.solver, &cfg.qn)?;
                cosine(&grads.flatten(), &g_exact.flatten()).as_f64()
            };
        }
        let diverged = !diag.loss.is_finite() || diag.loss > cfg.divergence_threshold;
        row.status = if diverged { RowStatus::Diverged } else { RowStatus::Accepted };
        row.cumulative_seconds = start.elapsed().as_secs_f64();
        trace.rows.push(row);
        if diverged {
            trace.metadata.insert("diverged".into(), "true".into());
            break;
        }
        model.apply_step(&grads, cfg.lr);
    }
    Ok(trace)
}
