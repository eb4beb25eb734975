use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{solve_inner, RowStatus, RunTrace, TraceRow};
use crate::error::{Error, Result};
use crate::problems::BilevelProblem;
use crate::qn::{QNConfig, SolverKind, WolfeParams};
use crate::Scalar;

/// Inner tolerance used for every random-search sample.
pub const RANDOM_SEARCH_TOL: f64 = 1e-8;

/// Random search over regularization strengths drawn log-uniformly from `strength_range`.
///
/// Each coordinate of θ is `parametrization.from_strength(s)` for an independent
/// draw `s`. Rows report the running best θ by validation loss; `status` marks the
/// rows where the best improved.
pub fn random_search_run<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    n_samples: usize,
    strength_range: (f64, f64),
    seed: u64,
) -> Result<RunTrace> {
    let solver = if problem.inner_objective(&vec![T::one(); problem.theta_dim()], &vec![T::zero(); problem.dim()]).is_some() {
        SolverKind::Lbfgs
    } else {
        SolverKind::Broyden
    };
    let cfg = QNConfig::default().with_tol(T::lit(RANDOM_SEARCH_TOL)).with_max_iter(2000);
    random_search_run_with(problem, n_samples, strength_range, seed, solver, &cfg)
}

pub fn random_search_run_with<T: Scalar, P: BilevelProblem<T> + ?Sized>(
    problem: &P,
    n_samples: usize,
    strength_range: (f64, f64),
    seed: u64,
    solver: SolverKind,
    cfg: &QNConfig<T>,
) -> Result<RunTrace> {
    let (low, high) = strength_range;
    if n_samples == 0 {
        return Err(Error::InvalidConfig("random search needs at least one sample".into()));
    }
    if !(low > 0.0 && low < high && high.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad strength range ({low}, {high})")));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ll, lh) = (low.ln(), high.ln());
    let param = problem.parametrization();
    let wolfe = WolfeParams::default();
    let zeros = vec![T::zero(); problem.dim()];
    let mut trace = RunTrace::default();
    trace.metadata.insert("sampling".into(), format!("log-uniform strength in [{low}, {high}]"));
    trace.metadata.insert("seed".into(), seed.to_string());
    let mut best: Option<TraceRow> = None;
    for i in 0..n_samples {
        let theta: Vec<T> = (0..problem.theta_dim())
            .map(|_| param.from_strength(T::lit(rng.random_range(ll..=lh).exp())))
            .collect();
        let mut row = TraceRow::blank(i);
        row.tol = RANDOM_SEARCH_TOL;
        let status = match solve_inner(problem, &theta, &zeros, solver, cfg, &wolfe) {
            Ok(fwd) => {
                row.inner_iters = fwd.iterations;
                let val = problem.outer_loss(&fwd.z_star).as_f64();
                let better = val.is_finite() && best.as_ref().is_none_or(|b| val < b.val_loss);
                if better {
                    let mut b = TraceRow::blank(i);
                    b.theta = theta.iter().map(|t| t.as_f64()).collect();
                    b.val_loss = val;
                    b.train_loss = problem.train_loss(&fwd.z_star).map_or(f64::NAN, |v| v.as_f64());
                    b.test_loss = problem.test_loss(&fwd.z_star).map_or(f64::NAN, |v| v.as_f64());
                    best = Some(b);
                    RowStatus::Improved
                } else {
                    RowStatus::Sampled
                }
            }
            Err(_) => RowStatus::InnerFailed,
        };
        if let Some(b) = &best {
            row.theta = b.theta.clone();
            row.val_loss = b.val_loss;
            row.train_loss = b.train_loss;
            row.test_loss = b.test_loss;
        }
        row.status = status;
        row.cumulative_seconds = start.elapsed().as_secs_f64();
        trace.rows.push(row);
    }
    Ok(trace)
}
