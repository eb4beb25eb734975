use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Per-row outcome recorded in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Initial,
    Accepted,
    /// No step length within the halving budget decreased the validation loss.
    Stalled,
    InnerFailed,
    Sampled,
    Improved,
    Diverged,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Initial => "initial",
            Self::Accepted => "accepted",
            Self::Stalled => "stalled",
            Self::InnerFailed => "inner_failed",
            Self::Sampled => "sampled",
            Self::Improved => "improved",
            Self::Diverged => "diverged",
        }
    }
}

/// One outer iteration. Losses that a problem does not define are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub theta: Vec<f64>,
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub inner_iters: usize,
    pub backward_iters: usize,
    /// Cumulative count of fallback selections.
    pub fallback_count: usize,
    pub cumulative_seconds: f64,
    pub tol: f64,
    pub adjoint_residual: f64,
    pub step_size: f64,
    /// Cosine between the method's gradient and a reference gradient, when probed.
    pub cosine: f64,
    pub status: RowStatus,
}

impl TraceRow {
    pub fn blank(outer_iter: usize) -> Self {
        Self {
            outer_iter,
            theta: Vec::new(),
            train_loss: f64::NAN,
            val_loss: f64::NAN,
            test_loss: f64::NAN,
            inner_iters: 0,
            backward_iters: 0,
            fallback_count: 0,
            cumulative_seconds: 0.0,
            tol: f64::NAN,
            adjoint_residual: f64::NAN,
            step_size: f64::NAN,
            cosine: f64::NAN,
            status: RowStatus::Accepted,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub metadata: BTreeMap<String, String>,
}

impl RunTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn total_inner_iters(&self) -> usize {
        self.rows.iter().map(|r| r.inner_iters).sum()
    }

    pub fn total_backward_iters(&self) -> usize {
        self.rows.iter().map(|r| r.backward_iters).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_seconds)
    }

    /// The θ sequence, the part of a trace that must be reproducible.
    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.theta.clone()).collect()
    }
}
