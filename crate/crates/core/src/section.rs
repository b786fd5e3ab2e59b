//! Sections `x(t) ∈ M(it)` on a uniform time grid, trivialized by a faithful
//! reference state `ω` as `x(t) = a(t) ω^{it}`, with twisted convolution,
//! the involution, the dual scaling `θ_s` and Gaussian decay bookkeeping.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, Functional};
use crate::error::{Error, Result};
use crate::matrix::MatrixBlock;
use crate::C64;

/// Symmetric grid `t_k = (k − m) dt`, `k = 0..=2m`, with `m = ⌊T/dt⌋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    half_width: f64,
    dt: f64,
    m: usize,
}

impl TimeGrid {
    pub fn new(half_width: f64, dt: f64) -> Result<Self> {
        if !(half_width > 0.0 && dt > 0.0 && half_width.is_finite() && dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid needs T > 0 and dt > 0, got T={half_width}, dt={dt}"
            )));
        }
        let m = (half_width / dt + 1e-9).floor() as usize;
        if m == 0 {
            return Err(Error::InvalidInput("grid step exceeds half-width".into()));
        }
        Ok(Self { half_width, dt, m })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `m`, the number of points on each side of 0.
    pub fn half_count(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        2 * self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest grid point `m·dt`.
    pub fn t_max(&self) -> f64 {
        self.m as f64 * self.dt
    }

    pub fn point(&self, k: usize) -> f64 {
        (k as f64 - self.m as f64) * self.dt
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.len() {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Trapezoid rule for samples on this grid.
    pub fn integrate(&self, values: &[C64]) -> C64 {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.weight(k))
            .sum()
    }

    pub fn integrate_real(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.weight(k))
            .sum()
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.m == other.m && (self.dt - other.dt).abs() <= 1e-15 * self.dt
    }
}

impl Serialize for TimeGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridRepr {
            half_width: self.half_width,
            dt: self.dt,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TimeGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GridRepr::deserialize(d)?;
        TimeGrid::new(r.half_width, r.dt).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    #[serde(rename = "T")]
    half_width: f64,
    dt: f64,
}

/// `‖a(t)‖_op ≤ C e^{−δ t²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    #[serde(rename = "C")]
    pub c: f64,
    pub delta: f64,
}

impl DecayCertificate {
    pub fn bound(&self, t: f64) -> f64 {
        self.c * (-self.delta * t * t).exp()
    }

    /// Certificate of a convolution, from the Gaussian integral
    /// `∫ e^{−δ₁s²−δ₂(t−s)²} ds = √(π/(δ₁+δ₂)) e^{−δ₁δ₂t²/(δ₁+δ₂)}`.
    pub fn convolve(&self, other: &Self) -> Self {
        let s = self.delta + other.delta;
        Self {
            c: self.c * other.c * (std::f64::consts::PI / s).sqrt(),
            delta: self.delta * other.delta / s,
        }
    }
}

/// A section sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    grid: TimeGrid,
    reference: Functional,
    values: Vec<AlgebraElement>,
    decay: Option<DecayCertificate>,
}

/// `ρ_ω^{it}` at every grid point.
fn reference_unitaries(grid: &TimeGrid, reference: &Functional, sign: f64) -> Vec<AlgebraElement> {
    (0..grid.len())
        .into_par_iter()
        .map(|k| reference.unitary_power(sign * grid.point(k)))
        .collect()
}

impl GridSection {
    pub fn new(grid: TimeGrid, reference: Functional, values: Vec<AlgebraElement>) -> Result<Self> {
        reference.require_faithful()?;
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let alg = reference.algebra();
        for v in &values {
            if v.algebra() != alg {
                return Err(Error::AlgebraMismatch {
                    expected: alg.blocks().to_vec(),
                    found: v.dims(),
                });
            }
        }
        Ok(Self {
            grid,
            reference,
            values,
            decay: None,
        })
    }

    /// Samples `a(t)` from a closure in trivialized coordinates.
    pub fn from_fn(
        grid: TimeGrid,
        reference: Functional,
        a: impl Fn(f64) -> AlgebraElement + Sync,
    ) -> Result<Self> {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| a(grid.point(k)))
            .collect();
        Self::new(grid, reference, values)
    }

    /// Samples the concrete value `x(t) ∈ M(it)` (a matrix such as
    /// `x ρ^{it} y`) and stores `a(t) = x(t) ρ_ω^{−it}`.
    pub fn from_concrete_fn(
        grid: TimeGrid,
        reference: Functional,
        x: impl Fn(f64) -> AlgebraElement + Sync,
    ) -> Result<Self> {
        reference.require_faithful()?;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let t = grid.point(k);
                x(t).try_mul(&reference.unitary_power(-t))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, reference, values)
    }

    /// `a(t) = G(t)·1`.
    pub fn scalar(
        grid: TimeGrid,
        reference: Functional,
        g: impl Fn(f64) -> C64 + Sync,
    ) -> Result<Self> {
        let one = AlgebraElement::identity(&reference.algebra());
        Self::from_fn(grid, reference, |t| one.scale(g(t)))
    }

    pub fn with_decay(mut self, cert: DecayCertificate) -> Self {
        self.decay = Some(cert);
        self
    }

    pub fn decay(&self) -> Option<DecayCertificate> {
        self.decay
    }

    /// Largest ratio `‖a(t)‖ / (C e^{−δt²})` over the grid; at most 1 when
    /// the certificate holds.
    pub fn decay_ratio(&self) -> Option<f64> {
        let cert = self.decay?;
        Some(
            self.values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let b = cert.bound(self.grid.point(k));
                    let n = v.op_norm();
                    if b > 0.0 {
                        n / b
                    } else if n == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max),
        )
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn reference(&self) -> &Functional {
        &self.reference
    }

    pub fn values(&self) -> &[AlgebraElement] {
        &self.values
    }

    /// `x(t_k) = a(t_k) ω^{it_k}` as matrices.
    pub fn concrete_values(&self) -> Vec<AlgebraElement> {
        let u = reference_unitaries(&self.grid, &self.reference, 1.0);
        self.values
            .par_iter()
            .zip(u.par_iter())
            .map(|(a, u)| a * u)
            .collect()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        if self
            .reference
            .density()
            .max_abs_diff(other.reference.density())
            > 1e-14
        {
            return Err(Error::ReferenceMismatch);
        }
        Ok(())
    }

    fn with_values(&self, values: Vec<AlgebraElement>, decay: Option<DecayCertificate>) -> Self {
        Self {
            grid: self.grid,
            reference: self.reference.clone(),
            values,
            decay,
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        let decay = match (self.decay, other.decay) {
            (Some(a), Some(b)) => Some(DecayCertificate {
                c: a.c + b.c,
                delta: a.delta.min(b.delta),
            }),
            _ => None,
        };
        Ok(self.with_values(values, decay))
    }

    pub fn scale(&self, s: C64) -> Self {
        let decay = self.decay.map(|d| DecayCertificate {
            c: d.c * s.norm(),
            delta: d.delta,
        });
        self.with_values(self.values.iter().map(|a| a.scale(s)).collect(), decay)
    }

    /// `sup_t ‖x(t)‖`.
    pub fn norm_inf(&self) -> f64 {
        self.values.iter().map(|a| a.op_norm()).fold(0.0, f64::max)
    }

    /// `∫ ‖x(t)‖ dt` by the trapezoid rule.
    pub fn norm_1(&self) -> f64 {
        let n: Vec<f64> = self.values.par_iter().map(|a| a.op_norm()).collect();
        self.grid.integrate_real(&n)
    }

    /// `sup_t ‖a(t) − b(t)‖_op`.
    pub fn max_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).op_norm())
            .fold(0.0, f64::max))
    }

    /// `∫ ‖x(t) − y(t)‖ dt`.
    pub fn l1_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let n: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).op_norm())
            .collect();
        Ok(self.grid.integrate_real(&n))
    }

    /// `x*(t) = x(−t)†`, i.e. `a*(t) = σ_t(a(−t)†)`.
    pub fn star(&self) -> Self {
        let x = self.concrete_values();
        let n = self.grid.len();
        let u = reference_unitaries(&self.grid, &self.reference, -1.0);
        let values = (0..n)
            .into_par_iter()
            .map(|k| &x[n - 1 - k].adjoint() * &u[k])
            .collect();
        self.with_values(values, self.decay)
    }

    /// `(θ_s x)(t) = e^{−ist} x(t)`.
    pub fn scale_theta(&self, s: f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, a)| a.scale(C64::new(0.0, -s * self.grid.point(k)).exp()))
            .collect();
        self.with_values(values, self.decay)
    }

    /// Twisted convolution `(fg)(t) = ∫ x(s) y(t−s) ds` on the grid by the
    /// trapezoid rule over the overlap of supports.
    ///
    /// In concrete coordinates this is an ordinary matrix-valued convolution,
    /// computed with entrywise FFTs and an exact correction for the half
    /// weights at both ends of each overlap.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let f = self.concrete_values();
        let g = other.concrete_values();
        let c = convolve_concrete(&self.grid, &f, &g);
        let u = reference_unitaries(&self.grid, &self.reference, -1.0);
        let values = c.par_iter().zip(u.par_iter()).map(|(c, u)| c * u).collect();
        let decay = match (self.decay, other.decay) {
            (Some(a), Some(b)) => Some(a.convolve(&b)),
            _ => None,
        };
        Ok(self.with_values(values, decay))
    }

    /// Reference implementation of [`convolve`](Self::convolve): direct
    /// summation of `a(s) σ_s(b(t−s))` in trivialized coordinates.
    /// Quadratic in the grid size.
    pub fn convolve_direct(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let n = self.grid.len();
        let m = self.grid.half_count();
        let u = reference_unitaries(&self.grid, &self.reference, 1.0);
        let values = (0..n)
            .into_par_iter()
            .map(|out| {
                let mut acc = AlgebraElement::zero(&self.reference.algebra());
                let (lo, hi) = overlap(out, m, n);
                for i in lo..=hi {
                    let j = out + m - i;
                    let w = if i == lo || i == hi { 0.5 } else { 1.0 } * self.grid.dt;
                    let twisted = &(&u[i] * &other.values[j]) * &u[i].adjoint();
                    acc = &acc + &(&self.values[i] * &twisted).scale(C64::new(w, 0.0));
                }
                acc
            })
            .collect();
        let decay = match (self.decay, other.decay) {
            (Some(a), Some(b)) => Some(a.convolve(&b)),
            _ => None,
        };
        Ok(self.with_values(values, decay))
    }
}

/// Range of `i` with `i + j = out + m`, `0 ≤ i, j < n`.
fn overlap(out: usize, m: usize, n: usize) -> (usize, usize) {
    let target = out + m;
    (target.saturating_sub(n - 1), target.min(n - 1))
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl FftPair {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    fn spectrum(&self, samples: impl Iterator<Item = C64>) -> Vec<C64> {
        let mut buf: Vec<C64> = samples.collect();
        buf.resize(self.len, C64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        buf
    }
}

/// Matrix-valued trapezoid convolution `C(t_out) = Σ_i w_i F(t_i) G(t_out − t_i)`
/// of concrete samples on a common grid, truncated to the grid.
pub fn convolve_concrete(
    grid: &TimeGrid,
    f: &[AlgebraElement],
    g: &[AlgebraElement],
) -> Vec<AlgebraElement> {
    let n = grid.len();
    let m = grid.half_count();
    let dt = grid.dt();
    let fft = FftPair::new((2 * n - 1).next_power_of_two());
    let dims = f[0].dims();

    let mut out_blocks: Vec<Vec<MatrixBlock>> = vec![Vec::with_capacity(dims.len()); n];
    for (b, &d) in dims.iter().enumerate() {
        let channel = |s: &[AlgebraElement], i: usize, k: usize| {
            fft.spectrum(s.iter().map(move |x| x.blocks()[b][(i, k)]))
        };
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (0..d).map(move |k| (i, k))).collect();
        let fh: Vec<Vec<C64>> = pairs.par_iter().map(|&(i, k)| channel(f, i, k)).collect();
        let gh: Vec<Vec<C64>> = pairs.par_iter().map(|&(i, k)| channel(g, i, k)).collect();
        let scale = dt / fft.len as f64;
        let entries: Vec<Vec<C64>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let mut buf = vec![C64::new(0.0, 0.0); fft.len];
                for k in 0..d {
                    let (a, c) = (&fh[i * d + k], &gh[k * d + j]);
                    for (o, (x, y)) in buf.iter_mut().zip(a.iter().zip(c)) {
                        *o += x * y;
                    }
                }
                fft.inverse.process(&mut buf);
                buf[m..m + n].iter().map(|v| v * scale).collect()
            })
            .collect();
        for (out, blocks) in out_blocks.iter_mut().enumerate() {
            blocks.push(MatrixBlock::from_fn(d, d, |i, j| entries[i * d + j][out]));
        }
    }

    out_blocks
        .into_par_iter()
        .enumerate()
        .map(|(out, blocks)| {
            let full = AlgebraElement::from_blocks(blocks).expect("square blocks");
            let (lo, hi) = overlap(out, m, n);
            let half = C64::new(0.5 * dt, 0.0);
            let mut corr = (&f[lo] * &g[out + m - lo]).scale(half);
            if hi != lo {
                corr = &corr + &(&f[hi] * &g[out + m - hi]).scale(half);
            }
            &full - &corr
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SectionRepr {
    grid: TimeGrid,
    reference: Functional,
    values: Vec<AlgebraElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decay: Option<DecayCertificate>,
}

impl Serialize for GridSection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SectionRepr {
            grid: self.grid,
            reference: self.reference.clone(),
            values: self.values.clone(),
            decay: self.decay,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridSection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SectionRepr::deserialize(d)?;
        let s =
            GridSection::new(r.grid, r.reference, r.values).map_err(serde::de::Error::custom)?;
        Ok(match r.decay {
            Some(c) => s.with_decay(c),
            None => s,
        })
    }
}
