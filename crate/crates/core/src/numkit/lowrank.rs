//! Identity-plus-low-rank inverse estimate `H = I + Σ u_i w_iᵀ`.
//!
//! Corrections are grouped into updates: a Broyden push contributes one rank-one
//! term, a BFGS push contributes two. Capacity and eviction operate on whole
//! updates, oldest first. Before a push that would exceed capacity, the oldest
//! update is evicted and the new correction is computed against the reduced
//! operator, so the secant condition of the newest update always holds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::vector::{axpy, dot, norm, scale, sub};
use crate::numkit::DenseMatrix;
use crate::Scalar;

/// Relative threshold below which a rank-one denominator counts as singular.
pub const EPS_SING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOne<T> {
    pub u: Vec<T>,
    pub w: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Update<T> {
    pub terms: Vec<RankOne<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankInverse<T> {
    dim: usize,
    updates: VecDeque<Update<T>>,
    capacity: Option<usize>,
}

impl<T: Scalar> LowRankInverse<T> {
    /// `capacity = None` means unbounded.
    pub fn new(dim: usize, capacity: Option<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("operator dimension must be positive".into()));
        }
        if capacity == Some(0) {
            return Err(Error::InvalidConfig("operator capacity must be at least 1".into()));
        }
        Ok(Self {
            dim,
            updates: VecDeque::new(),
            capacity,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, None).expect("positive dimension")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Number of stored updates.
    pub fn len(&self) -> usize {
        self.updates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.updates.is_empty()
    }

    /// Number of rank-one terms across all updates.
    pub fn rank(&self) -> usize {
        self.updates.iter().map(|u| u.terms.len()).sum()
    }

    pub fn updates(&self) -> impl Iterator<Item = &Update<T>> {
        self.updates.iter()
    }

    pub fn clear(&mut self) {
        self.updates.clear();
    }

    pub fn with_capacity(mut self, capacity: Option<usize>) -> Result<Self> {
        if capacity == Some(0) {
            return Err(Error::InvalidConfig("operator capacity must be at least 1".into()));
        }
        self.capacity = capacity;
        while self.over_capacity(0) {
            self.updates.pop_front();
        }
        Ok(self)
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn over_capacity(&self, incoming: usize) -> bool {
        matches!(self.capacity, Some(c) if self.updates.len() + incoming > c)
    }

    /// Number of oldest updates a push of one more update would evict.
    fn pending_evictions(&self) -> usize {
        match self.capacity {
            Some(c) if self.updates.len() >= c => self.updates.len() + 1 - c,
            _ => 0,
        }
    }

    fn apply_skipping(&self, x: &[T], skip: usize, adjoint: bool) -> Vec<T> {
        let mut out = x.to_vec();
        for update in self.updates.iter().skip(skip) {
            for t in &update.terms {
                let (a, b) = if adjoint { (&t.w, &t.u) } else { (&t.u, &t.w) };
                let c = dot(b, x);
                if c != T::zero() {
                    axpy(c, a, &mut out);
                }
            }
        }
        out
    }

    /// `H x = x + Σ u_i (w_iᵀ x)`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        Ok(self.apply_skipping(x, 0, false))
    }

    /// `Hᵀ x = x + Σ w_i (u_iᵀ x)`, i.e. the row vector `xᵀ H` as a column.
    pub fn apply_adjoint(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        Ok(self.apply_skipping(x, 0, true))
    }

    /// The operator `Hᵀ`, obtained by swapping every correction's factors.
    pub fn transposed(&self) -> Self {
        let updates = self
            .updates
            .iter()
            .map(|up| Update {
                terms: up
                    .terms
                    .iter()
                    .map(|t| RankOne {
                        u: t.w.clone(),
                        w: t.u.clone(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            dim: self.dim,
            updates,
            capacity: self.capacity,
        }
    }

    fn commit(&mut self, terms: Vec<RankOne<T>>) {
        while self.over_capacity(1) {
            self.updates.pop_front();
        }
        self.updates.push_back(Update { terms });
    }

    /// Appends a raw correction `u wᵀ` as one update, evicting the oldest when full.
    pub fn push_raw(&mut self, u: Vec<T>, w: Vec<T>) -> Result<()> {
        self.check_dim(&u)?;
        self.check_dim(&w)?;
        self.commit(vec![RankOne { u, w }]);
        Ok(())
    }

    /// Good-Broyden update in inverse form.
    ///
    /// The forward update `B' = B + (y − B s) sᵀ / (sᵀ s)` becomes
    /// `H' = H + (s − H y) (sᵀ H) / (sᵀ H y)` after Sherman–Morrison, so `H' y = s`.
    pub fn push_sherman_morrison(&mut self, s: &[T], y: &[T]) -> Result<()> {
        self.check_dim(s)?;
        self.check_dim(y)?;
        let skip = self.pending_evictions();
        let hy = self.apply_skipping(y, skip, false);
        let denom = dot(s, &hy);
        let threshold = T::lit(EPS_SING) * norm(s) * norm(&hy);
        if !(denom.abs() > threshold) || !denom.is_finite() {
            return Err(Error::NearSingularUpdate {
                denominator: denom.as_f64(),
                threshold: threshold.as_f64(),
            });
        }
        let sh = self.apply_skipping(s, skip, true);
        let u = scale(T::one() / denom, &sub(s, &hy));
        self.commit(vec![RankOne { u, w: sh }]);
        Ok(())
    }

    /// Inverse BFGS rank-two update with `a = s − H y`, `r = sᵀ y`:
    /// `H' = H + (a sᵀ + s aᵀ)/r − (aᵀ y / r²) s sᵀ`.
    ///
    /// Rejected (operator unchanged) when `r ≤ EPS_SING·‖s‖·‖y‖`.
    pub fn push_bfgs(&mut self, s: &[T], y: &[T]) -> Result<()> {
        self.check_dim(s)?;
        self.check_dim(y)?;
        let r = dot(s, y);
        let threshold = T::lit(EPS_SING) * norm(s) * norm(y);
        if !(r > threshold) || !r.is_finite() {
            return Err(Error::NearSingularUpdate {
                denominator: r.as_f64(),
                threshold: threshold.as_f64(),
            });
        }
        let skip = self.pending_evictions();
        let hy = self.apply_skipping(y, skip, false);
        let a = sub(s, &hy);
        let c = dot(&a, y) / (r * r);
        let a_over_r = scale(T::one() / r, &a);
        let mut w2 = a_over_r.clone();
        axpy(-c, s, &mut w2);
        self.commit(vec![
            RankOne {
                u: a_over_r,
                w: s.to_vec(),
            },
            RankOne {
                u: s.to_vec(),
                w: w2,
            },
        ]);
        Ok(())
    }

    /// Adjoint-Broyden update in direction `v`, given `q = Jᵀ v` (a vector-Jacobian product).
    ///
    /// The forward update `B' = B + v (vᵀJ − vᵀB) / ‖v‖²` is pushed on the inverse side as
    /// `H' = H − (H v) (Hᵀ q − v)ᵀ / (qᵀ H v)`, which gives `vᵀ J H' = vᵀ`, i.e. `vᵀ B' = vᵀ J`.
    pub fn push_adjoint_broyden(&mut self, v: &[T], q: &[T]) -> Result<()> {
        self.check_dim(v)?;
        self.check_dim(q)?;
        let skip = self.pending_evictions();
        let hv = self.apply_skipping(v, skip, false);
        let denom = dot(q, &hv);
        let threshold = T::lit(EPS_SING) * norm(q) * norm(&hv);
        if !(denom.abs() > threshold) || !denom.is_finite() {
            return Err(Error::NearSingularUpdate {
                denominator: denom.as_f64(),
                threshold: threshold.as_f64(),
            });
        }
        let htq = self.apply_skipping(q, skip, true);
        let w = sub(&htq, v);
        let u = scale(-T::one() / denom, &hv);
        self.commit(vec![RankOne { u, w }]);
        Ok(())
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        DenseMatrix::from_columns(self.dim, self.dim, |e| self.apply_skipping(e, 0, false))
    }
}
