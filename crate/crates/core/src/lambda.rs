//! Functions of the log-generator `λ` of a modular group, sampled on a
//! uniform grid, with the trace weight `e^λ dλ`.
//!
//! Convention: `φ^{is}` acts as `e^{−isλ}`, so `λ = −log φ` on the support
//! and `(1∨φ)^{−μ}` is `1_{λ≤0} e^{λμ}`.
//!
//! Samples are stored two-sided (left and right limits) so that jumps at
//! grid nodes integrate exactly under the composite Simpson rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// `λ_j = (j − K) dλ`, `j = 0..=2K`, with `K` even so `λ = 0` is a Simpson
/// panel boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    half_width: f64,
    step: f64,
    k: usize,
}

impl LambdaGrid {
    pub fn new(half_width: f64, step: f64) -> Result<Self> {
        if !(half_width > 0.0 && step > 0.0 && half_width.is_finite() && step.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda grid needs L > 0 and dλ > 0, got L={half_width}, dλ={step}"
            )));
        }
        let mut k = (half_width / step + 1e-9).floor() as usize;
        k -= k % 2;
        if k == 0 {
            return Err(Error::InvalidInput("lambda grid too coarse".into()));
        }
        Ok(Self {
            half_width,
            step,
            k,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        2 * self.k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `λ = 0`.
    pub fn zero_index(&self) -> usize {
        self.k
    }

    pub fn point(&self, j: usize) -> f64 {
        (j as f64 - self.k as f64) * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self::new(60.0, 0.01).expect("valid defaults")
    }
}

/// Integrability class of a [`LambdaFunction`] against `e^λ dλ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrability {
    None,
    /// `∫|m| e^λ dλ < ∞`.
    TraceClass,
    /// `∫|m|² e^λ dλ < ∞`.
    HilbertSchmidt,
}

/// Samples of `m(λ)` with left limits `m(λ−0)` and right limits `m(λ+0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaFunction {
    grid: LambdaGrid,
    left: Vec<C64>,
    right: Vec<C64>,
}

/// Relative size of the truncated integrand at `±L` above which the grid
/// integral is rejected as not converged.
const EDGE_RATIO: f64 = 1e-10;

impl LambdaFunction {
    pub fn zero(grid: LambdaGrid) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            left: z.clone(),
            right: z,
        }
    }

    /// Continuous function.
    pub fn from_fn(grid: LambdaGrid, f: impl Fn(f64) -> C64 + Sync) -> Self {
        let v: Vec<C64> = (0..grid.len())
            .into_par_iter()
            .map(|j| f(grid.point(j)))
            .collect();
        Self {
            grid,
            left: v.clone(),
            right: v,
        }
    }

    /// Function equal to `neg` on `λ < 0` and `pos` on `λ > 0`, each
    /// continuous up to `λ = 0`.
    pub fn piecewise(
        grid: LambdaGrid,
        neg: impl Fn(f64) -> C64 + Sync,
        pos: impl Fn(f64) -> C64 + Sync,
    ) -> Self {
        let z = grid.zero_index();
        let sample = |j: usize, side_neg: bool| {
            let l = grid.point(j);
            if j < z || (j == z && side_neg) {
                neg(l)
            } else {
                pos(l)
            }
        };
        let left = (0..grid.len())
            .into_par_iter()
            .map(|j| sample(j, true))
            .collect();
        let right = (0..grid.len())
            .into_par_iter()
            .map(|j| sample(j, false))
            .collect();
        Self { grid, left, right }
    }

    pub fn from_samples(grid: LambdaGrid, left: Vec<C64>, right: Vec<C64>) -> Result<Self> {
        if left.len() != grid.len() || right.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, left, right })
    }

    pub fn grid(&self) -> &LambdaGrid {
        &self.grid
    }

    pub fn left(&self) -> &[C64] {
        &self.left
    }

    pub fn right(&self) -> &[C64] {
        &self.right
    }

    /// Value away from jumps (right limit).
    pub fn value(&self, j: usize) -> C64 {
        self.right[j]
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            grid: self.grid,
            left: self
                .left
                .iter()
                .zip(&other.left)
                .map(|(a, b)| f(*a, *b))
                .collect(),
            right: self
                .right
                .iter()
                .zip(&other.right)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid,
            left: self.left.iter().map(|v| f(*v)).collect(),
            right: self.right.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    /// `|m|²`.
    pub fn abs_sqr(&self) -> Self {
        self.map(|v| C64::new(v.norm_sqr(), 0.0))
    }

    /// Sup-distance over both one-sided limits.
    pub fn sup_diff(&self, other: &Self) -> Result<f64> {
        self.check(other)?;
        Ok(self
            .left
            .iter()
            .zip(&other.left)
            .chain(self.right.iter().zip(&other.right))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Largest relative deviation `|m − m'| / |m'|` over samples where
    /// `|m'|` exceeds `floor`.
    pub fn max_rel_diff(&self, other: &Self, floor: f64) -> Result<f64> {
        self.check(other)?;
        Ok(self
            .left
            .iter()
            .zip(&other.left)
            .chain(self.right.iter().zip(&other.right))
            .filter(|(_, b)| b.norm() > floor)
            .map(|(a, b)| (a - b).norm() / b.norm())
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.left
            .iter()
            .chain(&self.right)
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Composite Simpson rule for `∫ m(λ) w(λ) dλ` with a continuous weight.
    /// Each panel uses the one-sided limits facing into it.
    pub fn integrate_with(&self, w: impl Fn(f64) -> f64 + Sync) -> C64 {
        let h = self.grid.step;
        let panels = (self.grid.len() - 1) / 2;
        let s: C64 = (0..panels)
            .into_par_iter()
            .map(|p| {
                let (a, m, b) = (2 * p, 2 * p + 1, 2 * p + 2);
                self.right[a] * w(self.grid.point(a))
                    + self.right[m] * (4.0 * w(self.grid.point(m)))
                    + self.left[b] * w(self.grid.point(b))
            })
            .sum();
        s * (h / 3.0)
    }

    /// `∫ m(λ) dλ`.
    pub fn integrate(&self) -> C64 {
        self.integrate_with(|_| 1.0)
    }

    /// `∫ m(λ) e^λ dλ`, rejecting integrals whose integrand has not decayed
    /// at the grid ends.
    pub fn integrate_trace(&self) -> Result<C64> {
        let total = self.integrate_with(f64::exp);
        let n = self.grid.len();
        let lo = (self.right[0] * self.grid.point(0).exp()).norm();
        let hi = (self.left[n - 1] * self.grid.point(n - 1).exp()).norm();
        let scale = self
            .abs_sqr()
            .map(|v| C64::new(v.re.sqrt(), 0.0))
            .integrate_with(f64::exp)
            .re;
        if lo.max(hi) > EDGE_RATIO * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotIntegrable(format!(
                "integrand |m(λ)|e^λ is {:.3e} at λ=±L (integral {:.3e})",
                lo.max(hi),
                scale
            )));
        }
        Ok(total)
    }

    /// Checks the declared class on the grid.
    pub fn check_class(&self, class: Integrability) -> Result<()> {
        match class {
            Integrability::None => Ok(()),
            Integrability::TraceClass => self.integrate_trace().map(|_| ()),
            Integrability::HilbertSchmidt => self.abs_sqr().integrate_trace().map(|_| ()),
        }
    }
}
