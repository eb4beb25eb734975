use rayon::prelude::*;
use serde::Serialize;
use shine_core::dataio::split_dataset;
use shine_core::outer::{median, opa_quality_config, opa_quality_trial, OpaDirection, OpaQualityRow, MAX_DENSE_ORACLE_DIM};
use shine_core::problems::{make_l2_logreg, Parametrization};

use super::bilevel::SPLIT;
use super::{all_failed, with_pool, DataPlan};
use crate::args::{Format, OpaQualityArgs};
use crate::error::{CliError, CliResult};
use crate::output::{create, num, write_csv_table, write_json};

#[derive(Debug, Serialize)]
struct DirectionSummary {
    direction: &'static str,
    median_cosine: f64,
    median_norm_ratio: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    schema: u32,
    command: &'static str,
    data: String,
    strength: f64,
    seeds: Vec<u64>,
    rows: usize,
    failed_seeds: Vec<u64>,
    directions: Vec<DirectionSummary>,
}

fn run_seed(plan: &DataPlan, args: &OpaQualityArgs, seed: u64) -> CliResult<Vec<OpaQualityRow>> {
    let ds = plan.dataset(seed);
    let split = split_dataset(&ds, SPLIT, seed).map_err(CliError::data)?;
    let p = make_l2_logreg::<f64>(&split, Parametrization::Log).map_err(CliError::data)?;
    let theta = [Parametrization::Log.from_strength(args.strength)];
    opa_quality_trial(&p, &theta, seed, &opa_quality_config()).map_err(CliError::run)
}

/// Per seed, compares the inverse estimate with the dense inverse along the
/// prescribed, Krylov and random directions.
pub fn cmd_opa_quality(args: &OpaQualityArgs) -> CliResult<()> {
    args.common.validate()?;
    let seeds = args.common.resolved_seeds()?;
    if !(args.strength > 0.0 && args.strength.is_finite()) {
        return Err(CliError::Config(format!("--strength must be positive, got {}", args.strength)));
    }
    let plan = DataPlan::new(&args.data, args.noise)?;
    if plan.n_features() > MAX_DENSE_ORACLE_DIM {
        return Err(CliError::Data(format!(
            "{} features exceed the dense oracle limit of {MAX_DENSE_ORACLE_DIM}",
            plan.n_features()
        )));
    }
    let results: Vec<CliResult<Vec<OpaQualityRow>>> =
        with_pool(&args.common, || seeds.par_iter().map(|&s| run_seed(&plan, args, s)).collect())?;

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut errors = Vec::new();
    for (&seed, res) in seeds.iter().zip(results) {
        match res {
            Ok(r) => rows.extend(r),
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                failed.push(seed);
                errors.push(e);
            }
        }
    }

    match args.common.format {
        Format::Csv => {
            let records: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![r.seed.to_string(), r.direction.as_str().into(), num(r.cosine), num(r.norm_ratio)])
                .collect();
            let out = create(&args.common.out.join("opa_quality.csv"))?;
            write_csv_table(out, &["seed", "direction", "cosine", "norm_ratio"], &records)?;
        }
        Format::Json => write_json(&args.common.out.join("opa_quality.json"), &rows)?,
    }

    let directions: Vec<DirectionSummary> = OpaDirection::ALL
        .iter()
        .map(|&d| {
            let of = |f: fn(&OpaQualityRow) -> f64| median(&rows.iter().filter(|r| r.direction == d).map(f).collect::<Vec<_>>());
            DirectionSummary {
                direction: d.as_str(),
                median_cosine: of(|r| r.cosine),
                median_norm_ratio: of(|r| r.norm_ratio),
            }
        })
        .collect();
    for d in &directions {
        println!(
            "{:<10} median cosine {:.4}, median norm ratio {:.4}",
            d.direction, d.median_cosine, d.median_norm_ratio
        );
    }
    let summary = Summary {
        schema: 1,
        command: "opa-quality",
        data: args.data.clone(),
        strength: args.strength,
        seeds: seeds.clone(),
        rows: rows.len(),
        failed_seeds: failed,
        directions,
    };
    write_json(&args.common.out.join("opa_quality_summary.json"), &summary)?;
    all_failed(errors, seeds.len())
}
