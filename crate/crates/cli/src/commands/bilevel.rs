use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use shine_core::dataio::split_dataset;
use shine_core::outer::{hoag_run, median, random_search_run, MethodDescriptor, RunTrace};
use shine_core::problems::{make_l2_logreg, make_nls, BilevelProblem, Parametrization};

use super::{all_failed, with_pool, DataPlan};
use crate::args::{BilevelArgs, ProblemKind};
use crate::error::{CliError, CliResult};
use crate::output::{median_timing, slug, write_json, write_trace};

pub const SPLIT: (f64, f64, f64) = (0.9, 0.05, 0.05);

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    file: Option<PathBuf>,
    final_test_loss: Option<f64>,
    final_theta: Option<Vec<f64>>,
    seconds: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Summary {
    schema: u32,
    command: &'static str,
    method: String,
    problem: String,
    data: String,
    seeds: Vec<u64>,
    median_final_test_loss: f64,
    total_seconds: f64,
    wall_seconds: f64,
    runs: Vec<SeedSummary>,
}

fn run_problem<P: BilevelProblem<f64>>(p: &P, desc: MethodDescriptor, args: &BilevelArgs, seed: u64) -> CliResult<RunTrace> {
    let mut trace = match desc {
        MethodDescriptor::RandomSearch => {
            random_search_run(p, args.max_iters, (args.strength_min, args.strength_max), seed)
        }
        _ => {
            let mut cfg = desc.outer_config(vec![args.theta0; p.theta_dim()]);
            cfg.max_outer_iters = args.max_iters;
            hoag_run(p, &cfg)
        }
    }
    .map_err(CliError::run)?;
    trace.metadata.insert("method".into(), desc.to_string());
    Ok(trace)
}

fn run_seed(plan: &DataPlan, desc: MethodDescriptor, args: &BilevelArgs, seed: u64) -> CliResult<RunTrace> {
    let ds = plan.dataset(seed);
    let split = split_dataset(&ds, SPLIT, seed).map_err(CliError::data)?;
    let mut runs = Vec::with_capacity(args.common.repeat);
    for _ in 0..args.common.repeat {
        let trace = match args.problem {
            ProblemKind::Logreg => {
                let p = make_l2_logreg::<f64>(&split, Parametrization::Log).map_err(CliError::data)?;
                run_problem(&p, desc, args, seed)?
            }
            ProblemKind::Nls => {
                let p = make_nls::<f64>(&split, Parametrization::Log).map_err(CliError::data)?;
                run_problem(&p, desc, args, seed)?
            }
        };
        runs.push(trace);
    }
    let mut trace = median_timing(runs).expect("at least one repeat");
    trace.metadata.insert("seed".into(), seed.to_string());
    trace.metadata.insert("data".into(), args.data.clone());
    trace.metadata.insert("problem".into(), format!("{:?}", args.problem).to_lowercase());
    Ok(trace)
}

/// Runs the outer loop per seed, writes one trace per seed and a summary.
pub fn cmd_bilevel(args: &BilevelArgs) -> CliResult<()> {
    args.common.validate()?;
    let desc: MethodDescriptor = args.method.parse().map_err(CliError::run)?;
    let seeds = args.common.resolved_seeds()?;
    if args.max_iters == 0 {
        return Err(CliError::Config("--max-iters must be at least 1".into()));
    }
    let plan = DataPlan::new(&args.data, args.noise)?;
    let started = Instant::now();
    let results: Vec<CliResult<RunTrace>> =
        with_pool(&args.common, || seeds.par_iter().map(|&s| run_seed(&plan, desc, args, s)).collect())?;

    let method_slug = slug(&desc.to_string());
    let mut runs = Vec::with_capacity(seeds.len());
    let mut errors = Vec::new();
    for (&seed, res) in seeds.iter().zip(results) {
        match res {
            Ok(trace) => {
                let path = write_trace(&args.common.out, &format!("bilevel_{method_slug}_seed{seed}"), &trace, args.common.format)?;
                let last = trace.last();
                runs.push(SeedSummary {
                    seed,
                    file: Some(path),
                    final_test_loss: last.map(|r| r.test_loss).filter(|v| v.is_finite()),
                    final_theta: last.map(|r| r.theta.clone()),
                    seconds: Some(trace.total_seconds()),
                    error: None,
                });
            }
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                runs.push(SeedSummary {
                    seed,
                    file: None,
                    final_test_loss: None,
                    final_theta: None,
                    seconds: None,
                    error: Some(e.to_string()),
                });
                errors.push(e);
            }
        }
    }
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_test_loss).collect();
    let summary = Summary {
        schema: 1,
        command: "bilevel",
        method: desc.to_string(),
        problem: format!("{:?}", args.problem).to_lowercase(),
        data: args.data.clone(),
        seeds: seeds.clone(),
        median_final_test_loss: median(&finals),
        total_seconds: runs.iter().filter_map(|r| r.seconds).fold(0.0, |a, b| a + b),
        wall_seconds: started.elapsed().as_secs_f64(),
        runs,
    };
    write_json(&args.common.out.join(format!("bilevel_{method_slug}_summary.json")), &summary)?;
    println!(
        "bilevel {}: median final test loss {:.6} over {} seed(s), {:.3}s",
        summary.method,
        summary.median_final_test_loss,
        finals.len(),
        summary.total_seconds
    );
    all_failed(errors, seeds.len())
}
