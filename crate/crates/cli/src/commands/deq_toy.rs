use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use shine_core::deqtoy::{deq_train, DeqBatch, DeqSolver, DeqTrainConfig, ToyDeqModel};
use shine_core::hypergrad::HypergradMethod;
use shine_core::outer::{median, MethodDescriptor, RunTrace};

use super::with_pool;
use crate::args::DeqToyArgs;
use crate::error::{CliError, CliResult};
use crate::output::{median_timing, slug, write_json, write_trace};

/// Teacher models are drawn from a seed stream disjoint from the students'.
const TEACHER_SEED_BASE: u64 = 1 << 32;
const DATA_TOL: f64 = 1e-12;

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    file: Option<PathBuf>,
    final_loss: Option<f64>,
    diverged: bool,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Summary {
    schema: u32,
    command: &'static str,
    method: String,
    steps: usize,
    lr: f64,
    seeds: Vec<u64>,
    median_final_loss: f64,
    total_seconds: f64,
    runs: Vec<SeedSummary>,
}

/// Backward method and forward solver for a descriptor. `shine-opa` runs Adjoint
/// Broyden with an extra update after every regular one.
pub fn deq_setup(desc: MethodDescriptor, base: DeqTrainConfig<f64>) -> CliResult<(HypergradMethod<f64>, DeqTrainConfig<f64>)> {
    let mut cfg = base;
    let method = match desc {
        MethodDescriptor::RandomSearch => {
            return Err(CliError::Config("random-search has no gradient to train with".into()));
        }
        MethodDescriptor::ShineOpa => {
            cfg.solver = DeqSolver::AdjointBroyden;
            cfg.qn = cfg.qn.with_opa(Some(1));
            HypergradMethod::shine()
        }
        other => other.hypergrad_method(),
    };
    Ok((method, cfg))
}

fn run_seed(args: &DeqToyArgs, desc: MethodDescriptor, seed: u64) -> CliResult<RunTrace> {
    let (d, m, k) = (args.dim, args.input_dim, args.output_dim);
    let teacher = ToyDeqModel::<f64>::random(d, m, k, TEACHER_SEED_BASE + seed);
    let data = (0..args.batches as u64)
        .map(|b| DeqBatch::from_teacher(&teacher, args.batch, seed.wrapping_mul(1000).wrapping_add(b), DATA_TOL))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::run)?;
    let mut base = DeqTrainConfig::new(args.lr, args.steps);
    base.probe_every = args.probe_every;
    let (method, cfg) = deq_setup(desc, base)?;
    let mut runs = Vec::with_capacity(args.common.repeat);
    for _ in 0..args.common.repeat {
        let mut model = ToyDeqModel::<f64>::random(d, m, k, seed);
        runs.push(deq_train(&mut model, &data, &method, &cfg).map_err(CliError::run)?);
    }
    let mut trace = median_timing(runs).expect("at least one repeat");
    trace.metadata.insert("method".into(), desc.to_string());
    trace.metadata.insert("seed".into(), seed.to_string());
    Ok(trace)
}

/// Trains one student per seed and writes a trace per seed. Exits with a numerical
/// failure when any run diverged; traces are written first.
pub fn cmd_deq_toy(args: &DeqToyArgs) -> CliResult<()> {
    args.common.validate()?;
    let desc: MethodDescriptor = args.method.parse().map_err(CliError::run)?;
    let seeds = args.common.resolved_seeds()?;
    if args.dim == 0 || args.input_dim == 0 || args.output_dim == 0 || args.batch == 0 || args.batches == 0 {
        return Err(CliError::Config("dimensions and batch sizes must be at least 1".into()));
    }
    if !(args.lr >= 0.0 && args.lr.is_finite()) {
        return Err(CliError::Config(format!("--lr must be non-negative, got {}", args.lr)));
    }
    deq_setup(desc, DeqTrainConfig::new(args.lr, args.steps))?;

    let results: Vec<CliResult<RunTrace>> =
        with_pool(&args.common, || seeds.par_iter().map(|&s| run_seed(args, desc, s)).collect())?;

    let method_slug = slug(&desc.to_string());
    let mut runs = Vec::with_capacity(seeds.len());
    let mut errors = Vec::new();
    let mut diverged_seeds = Vec::new();
    let mut total = 0.0;
    for (&seed, res) in seeds.iter().zip(results) {
        match res {
            Ok(trace) => {
                let path = write_trace(&args.common.out, &format!("deq_{method_slug}_seed{seed}"), &trace, args.common.format)?;
                let diverged = trace.metadata.get("diverged").is_some_and(|v| v == "true");
                if diverged {
                    diverged_seeds.push(seed);
                }
                total += trace.total_seconds();
                runs.push(SeedSummary {
                    seed,
                    file: Some(path),
                    final_loss: trace.last().map(|r| r.train_loss).filter(|v| v.is_finite()),
                    diverged,
                    error: None,
                });
            }
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                runs.push(SeedSummary { seed, file: None, final_loss: None, diverged: false, error: Some(e.to_string()) });
                errors.push(e);
            }
        }
    }
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_loss).collect();
    let summary = Summary {
        schema: 1,
        command: "deq-toy",
        method: desc.to_string(),
        steps: args.steps,
        lr: args.lr,
        seeds: seeds.clone(),
        median_final_loss: median(&finals),
        total_seconds: total,
        runs,
    };
    write_json(&args.common.out.join(format!("deq_{method_slug}_summary.json")), &summary)?;
    println!("deq-toy {}: median final loss {:.6e}, {:.3}s", summary.method, summary.median_final_loss, total);
    if !diverged_seeds.is_empty() {
        return Err(CliError::Numerical(format!("training diverged for seed(s) {diverged_seeds:?}")));
    }
    match errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
