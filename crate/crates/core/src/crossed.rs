//! The Hilbert space `ℋ = ∮ M(it+1/2) dt` of the crossed product by the
//! modular flow, its trace `τ` realized through boundary vectors, the dual
//! action, and the `L²(ℝ, e^λ dλ)` model of the abelian part generated by
//! one state.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::algebra::{AlgebraElement, Functional, Weight};
use crate::error::{Error, Result};
use crate::interpolator::{Envelope, InterpolatorSpec, SpectralOperator};
use crate::lambda::{LambdaFunction, LambdaGrid};
use crate::section::{convolve_concrete, GridSection, TimeGrid};
use crate::tolerance::Tolerances;
use crate::C64;

/// Asymptotics of a vector beyond the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// Gaussian decay; truncation error below rounding.
    Negligible,
    /// `ξ(t) ≈ (it + c)^{−1} A(t)` for large `|t|`, the boundary vectors of
    /// rational envelopes.
    Rational { c: C64 },
}

/// A vector of `ℋ` sampled on a grid as concrete matrices `ξ(t) ∈ M(it+1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertVector {
    grid: TimeGrid,
    values: Vec<AlgebraElement>,
    tail: Tail,
}

/// `∫_T^∞ dt / ((p − it)(q + it))`, for `T` beyond `|Im p|`, `|Im q|`.
pub(crate) fn rational_tail(p: C64, q: C64, t: f64) -> C64 {
    let i = C64::i();
    (C64::new(PI, 0.0) - i * ((p - i * t).ln() - (q + i * t).ln())) / (p + q)
}

/// Relative spread tolerated between the tail coefficients at the last two
/// probe points before the rational closure is applied.
const TAIL_CONSISTENCY: f64 = 1e-8;
/// Distance in grid steps between the two probe points.
const TAIL_PROBE: usize = 5;

impl HilbertVector {
    pub fn new(grid: TimeGrid, values: Vec<AlgebraElement>, tail: Tail) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, values, tail })
    }

    pub fn zero(grid: TimeGrid, alg: &crate::algebra::FiniteAlgebra) -> Self {
        Self {
            grid,
            values: vec![AlgebraElement::zero(alg); grid.len()],
            tail: Tail::Negligible,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[AlgebraElement] {
        &self.values
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    fn check(&self, other: &Self) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn pointwise(&self, other: &Self) -> Result<Vec<C64>> {
        self.check(other)?;
        self.values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(a, b)| a.hs_inner(b))
            .collect()
    }

    /// `(ξ|η) = ∫ ⟨ξ(t)|η(t)⟩ dt` by the trapezoid rule, truncated to the grid.
    pub fn inner_product_raw(&self, other: &Self) -> Result<C64> {
        Ok(self.grid.integrate(&self.pointwise(other)?))
    }

    /// `(ξ|η)` with the grid truncation closed in form when both vectors
    /// have rational tails.
    ///
    /// Beyond `±T` the integrand is modelled as `K± R(t)`,
    /// `R(t) = 1/((c̄₁ − it)(c₂ + it))`, with `K±` read off at the last grid
    /// point. The closure is exact when `⟨A(t)|B(t)⟩` is constant, as for
    /// every boundary vector of one state against itself; it is skipped at
    /// an end where `K` is not constant over the last few points.
    pub fn inner_product(&self, other: &Self) -> Result<C64> {
        let vals = self.pointwise(other)?;
        let mut total = self.grid.integrate(&vals);
        if let (Tail::Rational { c: c1 }, Tail::Rational { c: c2 }) = (self.tail, other.tail) {
            let (p, q) = (c1.conj(), c2);
            let r = |t: f64| ((p - C64::i() * t) * (q + C64::i() * t)).inv();
            let n = self.grid.len();
            let t_max = self.grid.t_max();
            if n > 2 * TAIL_PROBE && (p + q).norm() > 0.0 {
                let coeff = |k: usize| vals[k] / r(self.grid.point(k));
                let consistent = |a: C64, b: C64| {
                    (a - b).norm() <= TAIL_CONSISTENCY * a.norm().max(f64::MIN_POSITIVE)
                };
                let (hi, hi_probe) = (coeff(n - 1), coeff(n - 1 - TAIL_PROBE));
                if consistent(hi, hi_probe) {
                    total += hi * rational_tail(p, q, t_max);
                }
                let (lo, lo_probe) = (coeff(0), coeff(TAIL_PROBE));
                if consistent(lo, lo_probe) {
                    total += lo * rational_tail(q, p, t_max);
                }
            }
        }
        Ok(total)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.inner_product(self).map(|v| v.re).unwrap_or(f64::NAN)
    }

    /// `ξ*(t) = ξ(−t)†`.
    pub fn star(&self) -> Self {
        let n = self.values.len();
        Self {
            grid: self.grid,
            values: (0..n).map(|k| self.values[n - 1 - k].adjoint()).collect(),
            tail: match self.tail {
                Tail::Rational { c } => Tail::Rational { c: c.conj() },
                t => t,
            },
        }
    }

    /// `(aξ)(t) = a ξ(t)` for `a ∈ M`.
    pub fn left_mul(&self, a: &AlgebraElement) -> Result<Self> {
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .par_iter()
                .map(|v| a.try_mul(v))
                .collect::<Result<_>>()?,
            tail: self.tail,
        })
    }

    /// `(ξa)(t) = ξ(t) a`.
    pub fn right_mul(&self, a: &AlgebraElement) -> Result<Self> {
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .par_iter()
                .map(|v| v.try_mul(a))
                .collect::<Result<_>>()?,
            tail: self.tail,
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v.scale(s)).collect(),
            tail: self.tail,
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let tail = match (self.tail, other.tail) {
            (Tail::Negligible, t) => t,
            (t, _) => t,
        };
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.try_add(b))
                .collect::<Result<_>>()?,
            tail,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// `sup_t ‖ξ(t) − η(t)‖_HS`.
    pub fn max_diff(&self, other: &Self) -> Result<f64> {
        self.check(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).hs_norm())
            .fold(0.0, f64::max))
    }

    /// Dual action `(W_s ξ)(t) = e^{−ist} ξ(t)`.
    pub fn dual_action(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v.scale(C64::new(0.0, -s * self.grid.point(k)).exp()))
                .collect(),
            tail: self.tail,
        }
    }

    /// `(ω^{iu} ξ)(t) = ω^{iu} ξ(t − u)`. The shift must be a whole number
    /// of grid steps; samples shifted in from beyond the grid are zero.
    pub fn translate(&self, omega: &Functional, u: f64) -> Result<Self> {
        let steps = u / self.grid.dt();
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "translation {u} is not a multiple of the grid step {}",
                self.grid.dt()
            )));
        }
        let shift = steps.round() as i64;
        let w = omega.unitary_power(u);
        let n = self.values.len() as i64;
        let alg = w.algebra();
        let values = (0..n)
            .map(|k| {
                let src = k - shift;
                if (0..n).contains(&src) {
                    &w * &self.values[src as usize]
                } else {
                    AlgebraElement::zero(&alg)
                }
            })
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
            tail: match self.tail {
                Tail::Rational { c } => Tail::Rational {
                    c: c - C64::new(0.0, u),
                },
                t => t,
            },
        })
    }
}

/// Left action of a section: `(fξ)(t) = ∫ f(s) ξ(t − s) ds`.
pub fn left_multiply_section(f: &GridSection, xi: &HilbertVector) -> Result<HilbertVector> {
    if !f.grid().same_as(xi.grid()) {
        return Err(Error::GridMismatch);
    }
    let values = convolve_concrete(f.grid(), &f.concrete_values(), xi.values());
    HilbertVector::new(*xi.grid(), values, Tail::Negligible)
}

/// Elementary operators of the crossed product.
#[derive(Debug, Clone, PartialEq)]
pub enum CrossedOperator {
    /// `a ∈ M`, fixed by the dual action.
    Algebra(AlgebraElement),
    /// `coeff · ω^{iu}`.
    ModularUnitary {
        state: Functional,
        u: f64,
        coeff: C64,
    },
}

impl CrossedOperator {
    pub fn apply(&self, xi: &HilbertVector) -> Result<HilbertVector> {
        match self {
            Self::Algebra(a) => xi.left_mul(a),
            Self::ModularUnitary { state, u, coeff } => Ok(xi.translate(state, *u)?.scale(*coeff)),
        }
    }

    /// `θ_s`, with `θ_s(ω^{iu}) = e^{−isu} ω^{iu}`.
    pub fn theta(&self, s: f64) -> Self {
        match self {
            Self::Algebra(a) => Self::Algebra(a.clone()),
            Self::ModularUnitary { state, u, coeff } => Self::ModularUnitary {
                state: state.clone(),
                u: *u,
                coeff: coeff * C64::new(0.0, -s * u).exp(),
            },
        }
    }
}

/// `τ(f*g) = (fτ^{1/2}|gτ^{1/2})` for Gaussian specs.
pub fn trace_of_product(
    f: &InterpolatorSpec,
    g: &InterpolatorSpec,
    grid: &TimeGrid,
) -> Result<C64> {
    if !f.is_gaussian() || !g.is_gaussian() {
        return Err(Error::NotInN);
    }
    f.boundary_vector(grid)?
        .inner_product(&g.boundary_vector(grid)?)
}

/// `τ(f*f)` by the convolution route `∫ tr(f*(s) f(−i−s)) ds`, i.e. the
/// trace of the level `−1` value of `f*f`.
pub fn formal_trace(f: &InterpolatorSpec, grid: &TimeGrid) -> Result<C64> {
    if !f.is_gaussian() {
        return Err(Error::NotInN);
    }
    let fs = f.star();
    let vals = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let s = grid.point(k);
            let a = fs.evaluate_entire(C64::new(s, 0.0))?;
            let b = f.evaluate_entire(C64::new(-s, -1.0))?;
            Ok(a.try_mul(&b)?.trace())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(grid.integrate(&vals))
}

/// `τ(x·m) = (φ(x)/2π) ∫ m(λ) e^λ dλ` for `x ∈ M` and `m` a function of the
/// log-generator of `φ`.
pub fn spectral_model(phi: &Functional, m: &LambdaFunction, x: &AlgebraElement) -> Result<C64> {
    let integral = m.integrate_trace()?;
    Ok(phi.evaluate(x)? * integral / (2.0 * PI))
}

/// `τ(x·Σ_k x_k m_k y_k) = Σ_k (φ(y_k x x_k)/2π) ∫ m_k e^λ dλ`.
pub fn spectral_trace(op: &SpectralOperator, x: &AlgebraElement) -> Result<C64> {
    let Some(phi) = &op.state else {
        return Ok(C64::new(0.0, 0.0));
    };
    let mut acc = C64::new(0.0, 0.0);
    for t in &op.terms {
        let a = t.right.try_mul(x)?.try_mul(&t.left)?;
        acc += spectral_model(phi, &t.m, &a)?;
    }
    Ok(acc)
}

/// Route used by [`haagerup_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceRoute {
    /// `(b_{μ̄/2}τ^{1/2} | x b_{μ/2}τ^{1/2})` with grid boundary vectors.
    Grid,
    /// `(ω(x)/2π) ∫ 1_{λ≤0} e^{λμ} e^λ dλ` on the λ-grid.
    Spectral,
}

/// `(1∨ω)^{−ν} τ^{1/2}`: the boundary vector of `(1/2π)(ν+iz)^{−1} ω^{iz}`,
/// with values `(1/2π)(it+ν+1/2)^{−1} ω^{it+1/2}`.
pub fn cutoff_half_vector(omega: &Functional, nu: C64, grid: &TimeGrid) -> Result<HilbertVector> {
    let c = nu + 0.5;
    if c.re <= 0.0 {
        return Err(Error::NotSquareIntegrable(format!(
            "(1∨ω)^(-ν) with Re ν = {} ≤ −1/2",
            nu.re
        )));
    }
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let t = grid.point(k);
            omega
                .power(C64::new(0.5, t))
                .scale((C64::new(0.0, t) + c).inv() / (2.0 * PI))
        })
        .collect();
    HilbertVector::new(*grid, values, Tail::Rational { c })
}

/// `τ(x(1∨ω)^{−μ})` for a finite weight `ω = Σ_j ω_j`. Cross terms vanish
/// because the summands have orthogonal supports.
pub fn haagerup_trace(
    x: &AlgebraElement,
    weight: &Weight,
    mu: C64,
    route: TraceRoute,
    grid: &TimeGrid,
    lambda: LambdaGrid,
) -> Result<C64> {
    if mu.re <= -1.0 {
        return Err(Error::DivergentTrace { mu });
    }
    let mut acc = C64::new(0.0, 0.0);
    for omega in weight.summands() {
        acc += match route {
            TraceRoute::Grid => {
                let left = cutoff_half_vector(omega, mu.conj() / 2.0, grid)?;
                let right = cutoff_half_vector(omega, mu / 2.0, grid)?.left_mul(x)?;
                left.inner_product(&right)?
            }
            TraceRoute::Spectral => {
                let m =
                    LambdaFunction::piecewise(lambda, |l| (mu * l).exp(), |_| C64::new(0.0, 0.0));
                spectral_model(omega, &m, x)?
            }
        };
    }
    Ok(acc)
}

/// Closed form `ω(x) / (2π(μ+1))`.
pub fn haagerup_closed_form(x: &AlgebraElement, weight: &Weight, mu: C64) -> Result<C64> {
    Ok(weight.evaluate(x)? / (2.0 * PI * (mu + 1.0)))
}

/// `τ(x(1∨ω)^{−μ})` for `−1/2 < Re μ < 0`, as `1/2π` times the boundary
/// operator plus the residue operator of `(μ+iz)^{−1}ω^{iz}`.
pub fn haagerup_trace_from_residue(
    x: &AlgebraElement,
    omega: &Functional,
    mu: C64,
    lambda: LambdaGrid,
    tol: &Tolerances,
) -> Result<C64> {
    if !(mu.re > -0.5 && mu.re < 0.0) {
        return Err(Error::InvalidInput(format!(
            "residue route needs −1/2 < Re μ < 0, got {mu}"
        )));
    }
    let spec = InterpolatorSpec::single(Envelope::rational(mu), omega.clone())?;
    let b = spec.boundary_operator(lambda)?;
    let r = spec.residue_operator(lambda, tol)?;
    // the two pieces cancel on λ ≥ 0 only after summation
    let m = b.spectral()?.try_add(r.spectral()?)?.scalar_function()?;
    Ok(spectral_model(omega, &m, x)? / (2.0 * PI))
}

/// Both sides of `τ((f+R_f)*(f+R_f)) = (fτ^{1/2}|fτ^{1/2})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceFormulaCheck {
    /// Spectral model of `f + R_f`.
    pub lhs: C64,
    /// Grid norm of the boundary vector.
    pub rhs: C64,
    pub rel_err: f64,
}

pub fn trace_formula_theorem_check(
    spec: &InterpolatorSpec,
    grid: &TimeGrid,
    lambda: LambdaGrid,
    tol: &Tolerances,
) -> Result<TraceFormulaCheck> {
    let b = spec.boundary_operator(lambda)?;
    let r = spec.residue_operator(lambda, tol)?;
    let total = b.spectral()?.try_add(r.spectral()?)?;
    let lhs = match &total.state {
        None => C64::new(0.0, 0.0),
        Some(phi) => {
            let m = total.scalar_function()?;
            spectral_model(phi, &m.abs_sqr(), &AlgebraElement::identity(&phi.algebra()))?
        }
    };
    let v = spec.boundary_vector(grid)?;
    let rhs = v.inner_product(&v)?;
    Ok(TraceFormulaCheck {
        lhs,
        rhs,
        rel_err: (lhs - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE),
    })
}

/// `Ĝ(λ) = ∫ G(t) e^{−itλ} dt` by direct trapezoid summation over the time
/// grid, with the phases advanced by recurrence.
pub fn fourier_on_grid(g: &[C64], grid: &TimeGrid, lambda: LambdaGrid) -> LambdaFunction {
    let t0 = grid.point(0);
    let dt = grid.dt();
    let weighted: Vec<C64> = g
        .iter()
        .enumerate()
        .map(|(k, v)| v * grid.weight(k))
        .collect();
    LambdaFunction::from_fn(lambda, |l| {
        let step = C64::new(0.0, -l * dt).exp();
        let mut phase = C64::new(0.0, -l * t0).exp();
        let mut acc = C64::new(0.0, 0.0);
        for (k, w) in weighted.iter().enumerate() {
            if k % 512 == 0 {
                // re-anchor to keep rounding drift of the recurrence bounded
                phase = C64::new(0.0, -l * grid.point(k)).exp();
            }
            acc += w * phase;
            phase *= step;
        }
        acc
    })
}

/// Largest `|λ|` used by [`spectral_unitarity`]. Rounding noise of the
/// direct transform (relative 1e-16) is amplified by `e^λ` and would
/// dominate the weighted integral near `λ = 60`; for Gaussian `G` the true
/// integrand is below `e^{−400}` beyond this point.
pub const UNITARITY_LAMBDA_CAP: f64 = 30.0;

/// Both sides of `‖gτ^{1/2}‖² = (φ(1)/2π) ∫ |Ĝ(λ)|² e^λ dλ` for a
/// single scalar Gaussian term `g(z) = G(z) φ^{iz}`, with `Ĝ` from the
/// level-0 samples. The λ-grid is clipped to [`UNITARITY_LAMBDA_CAP`].
pub fn spectral_unitarity(
    spec: &InterpolatorSpec,
    grid: &TimeGrid,
    lambda: LambdaGrid,
) -> Result<(f64, f64)> {
    let lambda = if lambda.half_width() > UNITARITY_LAMBDA_CAP {
        LambdaGrid::new(UNITARITY_LAMBDA_CAP, lambda.step())?
    } else {
        lambda
    };
    let [term] = spec.terms() else {
        return Err(Error::UnsupportedForm(
            "spectral unitarity needs a single term".into(),
        ));
    };
    if !term.envelope.is_gaussian() {
        return Err(Error::NotInN);
    }
    let one = AlgebraElement::identity(spec.algebra());
    let coeff = {
        let l = term.left.blocks()[0][(0, 0)];
        let r = term.right.blocks()[0][(0, 0)];
        if term.left.max_abs_diff(&one.scale(l)) > 1e-14
            || term.right.max_abs_diff(&one.scale(r)) > 1e-14
        {
            return Err(Error::UnsupportedForm(
                "coefficients must be scalars".into(),
            ));
        }
        l * r
    };
    let v = spec.boundary_vector(grid)?;
    let lhs = v.inner_product(&v)?.re;
    let samples = grid
        .points()
        .into_iter()
        .map(|t| Ok(term.envelope.eval(C64::new(t, 0.0))? * coeff))
        .collect::<Result<Vec<_>>>()?;
    let g_hat = fourier_on_grid(&samples, grid, lambda);
    let rhs = spectral_model(&term.state, &g_hat.abs_sqr(), &one)?.re;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{random_element, random_state, FiniteAlgebra};
    use crate::interpolator::random_gaussian_spec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rho34() -> Functional {
        Functional::diagonal(&[0.75, 0.25]).unwrap()
    }

    #[test]
    fn tail_integral_matches_quadrature() {
        let (p, q) = (c(0.7, 0.3), c(0.4, -0.2));
        let t0 = 5.0;
        let g = TimeGrid::new(1000.0, 0.001).unwrap();
        let vals: Vec<C64> = g
            .points()
            .into_iter()
            .map(|u| {
                let t = t0 + (u + 1000.0);
                ((p - C64::i() * t) * (q + C64::i() * t)).inv()
            })
            .collect();
        let num = g.integrate(&vals);
        let closed = rational_tail(p, q, t0) - rational_tail(p, q, t0 + 2000.0);
        assert!((num - closed).norm() < 1e-8, "{num} vs {closed}");
        // the remainder beyond t0 + 2000 is ≈ 1/2005
        assert!((rational_tail(p, q, t0 + 2000.0) - 1.0 / (t0 + 2000.0)).norm() < 1e-6);
    }

    #[test]
    fn gaussian_inner_product_example() {
        let phi = rho34();
        let f =
            InterpolatorSpec::single(Envelope::gaussian(1.0, c(0.0, 0.0)), phi.clone()).unwrap();
        let grid = TimeGrid::new(10.0, 0.01).unwrap();
        let v = f.boundary_vector(&grid).unwrap();
        let expect = 0.5f64.exp() * (PI / 2.0).sqrt() * phi.total_mass();
        assert!((v.norm_sqr() - expect).abs() < 1e-12);
    }

    #[test]
    fn rational_norm_uses_tail_closure() {
        let phi = rho34();
        let beta = -0.3;
        let f = InterpolatorSpec::single(Envelope::rational(c(beta, 0.0)), phi).unwrap();
        let grid = TimeGrid::new(20.0, 0.02).unwrap();
        let v = f.boundary_vector(&grid).unwrap();
        let expect = 2.0 * PI / (2.0 * beta + 1.0);
        let closed = v.inner_product(&v).unwrap().re;
        let raw = v.inner_product_raw(&v).unwrap().re;
        assert!((closed - expect).abs() / expect < 1e-7);
        assert!((raw - expect).abs() / expect > 1e-3);
    }

    #[test]
    fn haagerup_examples() {
        let grid = TimeGrid::new(40.0, 0.01).unwrap();
        let lg = LambdaGrid::default();
        let w: Weight = Functional::normalized_trace(2).into();
        let one = AlgebraElement::identity(&FiniteAlgebra::full(2));
        for (mu, expect) in [(0.0, 1.0 / (2.0 * PI)), (1.0, 1.0 / (4.0 * PI))] {
            for route in [TraceRoute::Grid, TraceRoute::Spectral] {
                let v = haagerup_trace(&one, &w, c(mu, 0.0), route, &grid, lg).unwrap();
                assert!((v - expect).norm() / expect < 1e-6, "{route:?} μ={mu}: {v}");
            }
        }
        let w: Weight = rho34().into();
        let alg = FiniteAlgebra::full(2);
        let x = &AlgebraElement::matrix_unit(&alg, 0, 0, 1)
            + &AlgebraElement::matrix_unit(&alg, 0, 1, 0);
        let v = haagerup_trace(&x, &w, c(0.5, 0.0), TraceRoute::Grid, &grid, lg).unwrap();
        assert!(v.norm() < 1e-12);
        let e11 = AlgebraElement::matrix_unit(&alg, 0, 0, 0);
        let v = haagerup_trace(&e11, &w, c(0.5, 0.0), TraceRoute::Grid, &grid, lg).unwrap();
        assert!((v.re - 0.75 / (3.0 * PI)).abs() < 1e-6);
        assert!(matches!(
            haagerup_trace(&one, &w, c(-1.5, 0.0), TraceRoute::Spectral, &grid, lg),
            Err(Error::DivergentTrace { .. })
        ));
    }

    #[test]
    fn weight_trace_equals_summed_density() {
        let tol = Tolerances::default();
        let grid = TimeGrid::new(40.0, 0.01).unwrap();
        let lg = LambdaGrid::default();
        let a = Functional::diagonal(&[0.3, 0.0]).unwrap();
        let b = Functional::diagonal(&[0.0, 0.7]).unwrap();
        let w = Weight::new(vec![a, b], &tol).unwrap();
        let summed: Weight = w.as_functional().unwrap().into();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_element(&FiniteAlgebra::full(2), &mut rng);
        let mu = c(0.8, 0.3);
        for route in [TraceRoute::Grid, TraceRoute::Spectral] {
            let l = haagerup_trace(&x, &w, mu, route, &grid, lg).unwrap();
            let r = haagerup_trace(&x, &summed, mu, route, &grid, lg).unwrap();
            assert!((l - r).norm() < 1e-6 * r.norm(), "{route:?}");
        }
    }

    #[test]
    fn spectral_model_examples() {
        let lg = LambdaGrid::default();
        let phi = rho34();
        let one = AlgebraElement::identity(&phi.algebra());
        let zero = |_| c(0.0, 0.0);
        let m0 = LambdaFunction::piecewise(lg, |_| c(1.0, 0.0), zero);
        assert!((spectral_model(&phi, &m0, &one).unwrap().re - 1.0 / (2.0 * PI)).abs() < 1e-9);
        let m1 = LambdaFunction::piecewise(lg, |l| c(l.exp(), 0.0), zero);
        assert!((spectral_model(&phi, &m1, &one).unwrap().re - 1.0 / (4.0 * PI)).abs() < 1e-9);
        assert_eq!(
            spectral_model(&phi, &LambdaFunction::zero(lg), &one).unwrap(),
            c(0.0, 0.0)
        );
    }

    #[test]
    fn trace_formula_examples() {
        let tol = Tolerances::default();
        let grid = TimeGrid::new(40.0, 0.01).unwrap();
        let lg = LambdaGrid::default();
        for (beta, mass) in [(-0.3, 1.0), (-0.25, 2.0)] {
            let phi = Functional::diagonal(&[0.75 * mass, 0.25 * mass]).unwrap();
            let f = InterpolatorSpec::single(Envelope::rational(c(beta, 0.0)), phi).unwrap();
            let chk = trace_formula_theorem_check(&f, &grid, lg, &tol).unwrap();
            let expect = 2.0 * PI * mass / (2.0 * beta + 1.0);
            assert!(
                (chk.lhs.re - expect).abs() / expect < 1e-6,
                "lhs {}",
                chk.lhs
            );
            assert!(
                (chk.rhs.re - expect).abs() / expect < 1e-6,
                "rhs {}",
                chk.rhs
            );
        }
        let g = InterpolatorSpec::single(Envelope::gaussian(1.0, c(0.2, 0.0)), rho34()).unwrap();
        let chk = trace_formula_theorem_check(&g, &grid, lg, &tol).unwrap();
        assert!(chk.rel_err < 1e-6);
    }

    #[test]
    fn trace_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let phi = random_state(&FiniteAlgebra::full(3), None, &mut rng);
        let f = random_gaussian_spec(&phi, 2, &mut rng);
        let grid = TimeGrid::new(12.0, 0.01).unwrap();
        let hs = trace_of_product(&f, &f, &grid).unwrap();
        let formal = formal_trace(&f, &grid).unwrap();
        assert!((hs - formal).norm() / hs.norm() < 1e-6);
        let rational = InterpolatorSpec::single(Envelope::rational(c(1.0, 0.0)), phi).unwrap();
        assert!(matches!(
            trace_of_product(&rational, &f, &grid),
            Err(Error::NotInN)
        ));
    }

    #[test]
    fn dual_action_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let alg = FiniteAlgebra::full(2);
        let omega = random_state(&alg, None, &mut rng);
        let f = random_gaussian_spec(&omega, 1, &mut rng);
        let grid = TimeGrid::new(10.0, 0.01).unwrap();
        let xi = f.boundary_vector(&grid).unwrap();
        assert_eq!(xi.dual_action(0.0), xi);
        let a = CrossedOperator::Algebra(random_element(&alg, &mut rng));
        let s = 1.0;
        let l = a.apply(&xi).unwrap().dual_action(s);
        let r = a.theta(s).apply(&xi.dual_action(s)).unwrap();
        assert!(l.max_diff(&r).unwrap() < 1e-12);
        let u = CrossedOperator::ModularUnitary {
            state: omega,
            u: 1.0,
            coeff: c(1.0, 0.0),
        };
        let l = u.apply(&xi).unwrap().dual_action(s);
        let r = u.theta(s).apply(&xi.dual_action(s)).unwrap();
        assert!(l.max_diff(&r).unwrap() < 1e-10);
    }

    #[test]
    fn left_multiplication_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let phi = random_state(&FiniteAlgebra::full(2), None, &mut rng);
        let grid = TimeGrid::new(10.0, 0.01).unwrap();
        let f = random_gaussian_spec(&phi, 1, &mut rng)
            .to_section(&grid, &phi)
            .unwrap();
        for _ in 0..5 {
            let g = random_gaussian_spec(&phi, 1, &mut rng)
                .boundary_vector(&grid)
                .unwrap();
            let fg = left_multiply_section(&f, &g).unwrap();
            assert!(fg.norm_sqr().sqrt() <= f.norm_1() * g.norm_sqr().sqrt() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn unitarity_of_spectral_model() {
        let grid = TimeGrid::new(40.0, 0.01).unwrap();
        let lg = LambdaGrid::default();
        let g = InterpolatorSpec::single(Envelope::gaussian(0.8, c(0.3, 0.5)), rho34()).unwrap();
        let (l, r) = spectral_unitarity(&g, &grid, lg).unwrap();
        assert!((l - r).abs() / l < 1e-6, "{l} vs {r}");
    }

    #[test]
    fn residue_route_for_negative_exponent() {
        let tol = Tolerances::default();
        let omega = rho34();
        let x = AlgebraElement::from_matrix(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[c(0.2, 0.0), c(1.0, 0.5), c(1.0, -0.5), c(-0.7, 0.0)],
        ))
        .unwrap();
        let w = Weight::from(omega.clone());
        for mu in [c(-0.3, 0.0), c(-0.25, 0.0)] {
            let got =
                haagerup_trace_from_residue(&x, &omega, mu, LambdaGrid::default(), &tol).unwrap();
            let want = haagerup_closed_form(&x, &w, mu).unwrap();
            assert!(
                (got - want).norm() / want.norm() < 1e-6,
                "{mu}: {got} vs {want}"
            );
        }
        assert!(
            haagerup_trace_from_residue(&x, &omega, c(0.5, 0.0), LambdaGrid::default(), &tol)
                .is_err()
        );
    }
}
