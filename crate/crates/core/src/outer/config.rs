use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergrad::{HypergradKind, HypergradMethod};
use crate::qn::{QNConfig, SolverKind, WolfeParams};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StepRule {
    Fixed,
    /// Halve until the validation loss does not increase, grow by 1.05 after a full step.
    #[default]
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig<T> {
    pub initial_theta: Vec<T>,
    pub initial_step: T,
    pub max_outer_iters: usize,
    /// Inner and adjoint tolerance at the first outer iteration.
    pub tol0: T,
    /// ρ in `ε_k = tol0·ρᵏ`.
    pub tol_decrease: T,
    pub method: HypergradMethod<T>,
    pub warm_restart: bool,
    pub step_rule: StepRule,
    pub solver: SolverKind,
    /// Inner solver settings; `tol` is overwritten by the schedule.
    pub inner: QNConfig<T>,
    pub wolfe: WolfeParams<T>,
}

impl<T: Scalar> OuterConfig<T> {
    pub fn new(initial_theta: Vec<T>, method: HypergradMethod<T>) -> Self {
        Self {
            initial_theta,
            initial_step: T::one(),
            max_outer_iters: 50,
            tol0: T::lit(0.1),
            tol_decrease: T::lit(0.78),
            method,
            warm_restart: true,
            step_rule: StepRule::Backtracking,
            solver: SolverKind::Lbfgs,
            inner: QNConfig::default(),
            wolfe: WolfeParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_decrease > T::zero() && self.tol_decrease <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "tol_decrease must lie in (0, 1], got {}",
                self.tol_decrease
            )));
        }
        if !(self.initial_step > T::zero()) {
            return Err(Error::InvalidConfig("initial_step must be positive".into()));
        }
        if !(self.tol0 > T::zero()) {
            return Err(Error::InvalidConfig("tol0 must be positive".into()));
        }
        if self.initial_theta.is_empty() {
            return Err(Error::InvalidConfig("initial_theta is empty".into()));
        }
        self.method.validate()?;
        self.inner.validate()?;
        self.wolfe.validate()
    }

    /// Schedule value `tol0·ρᵏ` at outer iteration `k`.
    pub fn tolerance_at(&self, k: usize) -> T {
        self.tol0 * self.tol_decrease.powi(k as i32)
    }
}

/// The "limited backward" baseline: the exact backend capped at `max_iters` inversion steps.
pub fn truncated_backward_config<T: Scalar>(base: &HypergradMethod<T>, max_iters: usize) -> Result<HypergradMethod<T>> {
    if base.kind != HypergradKind::Exact {
        return Err(Error::InvalidConfig("truncated backward requires the exact backend".into()));
    }
    if max_iters == 0 {
        return Err(Error::InvalidConfig("truncated backward needs at least one iteration".into()));
    }
    let mut m = base.clone();
    m.exact_max_iter = max_iters;
    Ok(m)
}

/// Named experiment methods, e.g. `shine-refine:5` or `hoag-limited:5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodDescriptor {
    Hoag,
    HoagLimited(usize),
    Shine,
    ShineOpa,
    ShineFallback,
    ShineRefine(usize),
    JacobianFree,
    JfRefine(usize),
    RandomSearch,
}

impl FromStr for MethodDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => {
                let k = a
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad step count in method `{s}`")))?;
                (h, Some(k))
            }
            None => (s, None),
        };
        let d = match (head, arg) {
            ("hoag" | "exact", None) => Self::Hoag,
            ("hoag-limited", Some(k)) if k > 0 => Self::HoagLimited(k),
            ("shine", None) => Self::Shine,
            ("shine-opa", None) => Self::ShineOpa,
            ("shine-fallback", None) => Self::ShineFallback,
            ("shine-refine", Some(k)) => Self::ShineRefine(k),
            ("jacobian-free" | "jf", None) => Self::JacobianFree,
            ("jf-refine", Some(k)) => Self::JfRefine(k),
            ("random-search", None) => Self::RandomSearch,
            _ => return Err(Error::InvalidConfig(format!("unknown method `{s}`"))),
        };
        Ok(d)
    }
}

impl fmt::Display for MethodDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Hoag => write!(f, "hoag"),
            Self::HoagLimited(k) => write!(f, "hoag-limited:{k}"),
            Self::Shine => write!(f, "shine"),
            Self::ShineOpa => write!(f, "shine-opa"),
            Self::ShineFallback => write!(f, "shine-fallback"),
            Self::ShineRefine(k) => write!(f, "shine-refine:{k}"),
            Self::JacobianFree => write!(f, "jacobian-free"),
            Self::JfRefine(k) => write!(f, "jf-refine:{k}"),
            Self::RandomSearch => write!(f, "random-search"),
        }
    }
}

impl MethodDescriptor {
    pub fn hypergrad_method<T: Scalar>(self) -> HypergradMethod<T> {
        match self {
            Self::Hoag | Self::RandomSearch => HypergradMethod::exact(),
            Self::HoagLimited(k) => HypergradMethod::exact().with_exact_limits(k, T::lit(1e-6)),
            Self::Shine | Self::ShineOpa => HypergradMethod::shine(),
            Self::ShineFallback => HypergradMethod::shine().with_fallback(Some(T::lit(crate::hypergrad::DEFAULT_FALLBACK_RATIO))),
            Self::ShineRefine(k) => HypergradMethod::shine().with_refine(k),
            Self::JacobianFree => HypergradMethod::jacobian_free(),
            Self::JfRefine(k) => HypergradMethod::jacobian_free().with_refine(k),
        }
    }

    /// Outer configuration with the reference presets: exact runs use memory 10 and
    /// ρ = 0.99, accelerated runs memory 30 and ρ = 0.78, OPA runs memory 60 with an
    /// extra update every 5 iterations.
    pub fn outer_config<T: Scalar>(self, initial_theta: Vec<T>) -> OuterConfig<T> {
        let mut cfg = OuterConfig::new(initial_theta, self.hypergrad_method());
        match self {
            Self::Hoag | Self::HoagLimited(_) | Self::RandomSearch => {
                cfg.inner = cfg.inner.with_memory(Some(10));
                cfg.tol_decrease = T::lit(0.99);
            }
            Self::ShineOpa => {
                cfg.inner = cfg.inner.with_memory(Some(60)).with_opa(Some(5));
            }
            _ => {
                cfg.inner = cfg.inner.with_memory(Some(30));
            }
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptors_round_trip() {
        for s in [
            "hoag",
            "hoag-limited:5",
            "shine",
            "shine-opa",
            "shine-fallback",
            "shine-refine:3",
            "jacobian-free",
            "jf-refine:2",
            "random-search",
        ] {
            let d: MethodDescriptor = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("hoag-limited:0".parse::<MethodDescriptor>().is_err());
        assert!("shine:3".parse::<MethodDescriptor>().is_err());
        assert!("bogus".parse::<MethodDescriptor>().is_err());
    }

    #[test]
    fn presets() {
        let c = MethodDescriptor::Hoag.outer_config::<f64>(vec![0.0]);
        assert_eq!((c.inner.memory, c.tol_decrease), (Some(10), 0.99));
        let c = MethodDescriptor::Shine.outer_config::<f64>(vec![0.0]);
        assert_eq!((c.inner.memory, c.tol_decrease), (Some(30), 0.78));
        let c = MethodDescriptor::ShineOpa.outer_config::<f64>(vec![0.0]);
        assert_eq!((c.inner.memory, c.inner.opa_frequency), (Some(60), Some(5)));
        let m = MethodDescriptor::HoagLimited(5).hypergrad_method::<f64>();
        assert_eq!(m.exact_max_iter, 5);
    }

    #[test]
    fn schedule_is_geometric() {
        let c = OuterConfig::new(vec![0.0f64], HypergradMethod::exact());
        assert_eq!(c.tolerance_at(0), 0.1);
        assert!((c.tolerance_at(3) - 0.1 * 0.78f64.powi(3)).abs() < 1e-18);
    }

    #[test]
    fn truncation_requires_exact() {
        assert!(truncated_backward_config(&HypergradMethod::<f64>::shine(), 5).is_err());
        let m = truncated_backward_config(&HypergradMethod::<f64>::exact(), 5).unwrap();
        assert_eq!(m.exact_max_iter, 5);
    }
}
