use serde::Serialize;
use shine_core::deqtoy::{deq_forward, nonlinear_power_method, spectral_norm, DeqBatch, DeqSolver, ToyDeqModel};
use shine_core::numkit::{add, sub, DenseMatrix};
use shine_core::qn::QNConfig;

use crate::args::{Format, SpectralArgs};
use crate::error::{CliError, CliResult};
use crate::output::{create, num, write_csv_table, write_json};

const EQUILIBRIUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
struct SpectralRow {
    seed: u64,
    mode: &'static str,
    radius: f64,
    w_spectral_norm: f64,
}

/// Start vector of the power iteration, independent of the seed.
fn start_vector(d: usize) -> Vec<f64> {
    (0..d).map(|i| 1.0 + (i as f64 + 1.0).recip()).collect()
}

fn probe(args: &SpectralArgs, seed: u64) -> CliResult<SpectralRow> {
    let d = args.dim;
    let u0 = start_vector(d);
    if let Some(c) = args.linear_probe {
        let radius = nonlinear_power_method(|u: &[f64]| u.iter().map(|v| c * v).collect(), &u0, args.iters)
            .map_err(CliError::run)?;
        return Ok(SpectralRow { seed, mode: "linear", radius, w_spectral_norm: c.abs() });
    }
    let mut model = ToyDeqModel::<f64>::random(d, args.input_dim, args.output_dim, seed);
    if args.zero_w {
        model.w = DenseMatrix::zeros(d, d);
    }
    let x = DeqBatch::from_teacher(&model, 1, seed, EQUILIBRIUM_TOL)
        .map_err(CliError::run)?
        .inputs
        .remove(0);
    let cfg = QNConfig::default().with_tol(EQUILIBRIUM_TOL).with_max_iter(500).with_memory(None);
    let z_star = deq_forward(&model, &x, DeqSolver::Broyden, &cfg).map_err(CliError::run)?.z_star;
    let f_star = model.map(&z_star, &x);
    let radius = nonlinear_power_method(|u: &[f64]| sub(&model.map(&add(&z_star, u), &x), &f_star), &u0, args.iters)
        .map_err(CliError::run)?;
    Ok(SpectralRow {
        seed,
        mode: if args.zero_w { "zero-w" } else { "layer" },
        radius,
        w_spectral_norm: spectral_norm(&model.w),
    })
}

/// Growth rate of `u ↦ f(z* + u) − f(z*)` around the equilibrium `z*` at a sampled input.
pub fn cmd_spectral(args: &SpectralArgs) -> CliResult<()> {
    args.common.validate()?;
    let seeds = args.common.resolved_seeds()?;
    if args.dim == 0 || args.input_dim == 0 || args.output_dim == 0 {
        return Err(CliError::Config("dimensions must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(seeds.len());
    let mut first_error = None;
    for &seed in &seeds {
        match probe(args, seed) {
            Ok(row) => {
                println!("seed {seed}: radius {:.10} (||W||_2 = {:.6})", row.radius, row.w_spectral_norm);
                rows.push(row);
            }
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    match args.common.format {
        Format::Csv => {
            let records: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![r.seed.to_string(), r.mode.into(), num(r.radius), num(r.w_spectral_norm)])
                .collect();
            write_csv_table(create(&args.common.out.join("spectral.csv"))?, &["seed", "mode", "radius", "w_spectral_norm"], &records)?;
        }
        Format::Json => write_json(&args.common.out.join("spectral.json"), &rows)?,
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
