mod bilevel;
mod deq_toy;
mod opa_quality;
mod spectral;

use std::sync::Arc;

pub use bilevel::cmd_bilevel;
pub use deq_toy::cmd_deq_toy;
pub use opa_quality::cmd_opa_quality;
pub use spectral::cmd_spectral;

use shine_core::dataio::{load_libsvm, synth_logreg_data, Dataset};

use crate::args::{Common, DataSource};
use crate::error::{CliError, CliResult};

/// A loaded file is shared by all seeds; synthetic data is drawn per seed.
pub(crate) enum DataPlan {
    Loaded(Arc<Dataset>),
    Synthetic { n: usize, d: usize, noise: f64 },
}

impl DataPlan {
    pub(crate) fn new(spec: &str, noise: f64) -> CliResult<Self> {
        match spec.parse::<DataSource>()? {
            DataSource::Synthetic { n, d } => Ok(Self::Synthetic { n, d, noise }),
            DataSource::File(path) => Ok(Self::Loaded(Arc::new(load_libsvm(&path).map_err(CliError::data)?))),
        }
    }

    pub(crate) fn n_features(&self) -> usize {
        match self {
            Self::Loaded(ds) => ds.n_features(),
            Self::Synthetic { d, .. } => *d,
        }
    }

    pub(crate) fn dataset(&self, seed: u64) -> Arc<Dataset> {
        match self {
            Self::Loaded(ds) => Arc::clone(ds),
            Self::Synthetic { n, d, noise } => Arc::new(synth_logreg_data(*n, *d, seed, *noise)),
        }
    }
}

/// Runs `f` on a pool sized by `--jobs`.
pub(crate) fn with_pool<R: Send>(common: &Common, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// The error of the first failed seed when every seed failed.
pub(crate) fn all_failed(errors: Vec<CliError>, n_seeds: usize) -> CliResult<()> {
    if n_seeds > 0 && errors.len() == n_seeds {
        return Err(errors.into_iter().next().expect("non-empty"));
    }
    Ok(())
}
