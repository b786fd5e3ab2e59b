//! Closed-form interpolators `f(z) = Σ env(z)·x·φ^{iz}·y` on horizontal
//! strips, with their boundary vectors at `Im z = −1/2`, boundary operators
//! at `Im z = 0` and residue operators.
//!
//! Envelopes come from a closed library: `p(z) e^{−αz²+βz}` with `α > 0`
//! and `1/(μ+iz)`.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{gaussian_matrix, random_element, AlgebraElement, FiniteAlgebra, Functional};
use crate::crossed::{HilbertVector, Tail};
use crate::error::{Error, Result};
use crate::json::JsonComplex;
use crate::lambda::{LambdaFunction, LambdaGrid};
use crate::section::{convolve_concrete, DecayCertificate, GridSection, TimeGrid};
use crate::tolerance::Tolerances;
use crate::C64;

/// Number of nodes of every circular contour.
pub const CONTOUR_POINTS: usize = 256;
/// Largest contour radius.
pub const CONTOUR_RADIUS: f64 = 0.05;

fn poly_eval(c: &[C64], z: C64) -> C64 {
    c.iter()
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

/// Coefficients of `p(z + w)`.
fn poly_shift(c: &[C64], w: C64) -> Vec<C64> {
    let mut a = c.to_vec();
    let n = a.len();
    for k in 0..n.saturating_sub(1) {
        for j in (k..n - 1).rev() {
            let next = a[j + 1];
            a[j] += w * next;
        }
    }
    a
}

/// A scalar envelope from the closed library.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    /// `p(z) e^{−αz²+βz}`, `p(z) = Σ_k poly[k] z^k`.
    GaussianPoly {
        alpha: f64,
        beta: C64,
        poly: Vec<C64>,
    },
    /// `1/(μ+iz)`, with a simple pole at `z = iμ`.
    RationalPole { mu: C64 },
}

impl Envelope {
    pub fn gaussian(alpha: f64, beta: C64) -> Self {
        Self::GaussianPoly {
            alpha,
            beta,
            poly: vec![C64::new(1.0, 0.0)],
        }
    }

    pub fn rational(mu: C64) -> Self {
        Self::RationalPole { mu }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::GaussianPoly { alpha, beta, poly } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "gaussian envelope needs alpha > 0, got {alpha}"
                    )));
                }
                if !(beta.re.is_finite() && beta.im.is_finite())
                    || poly.iter().any(|c| !c.re.is_finite() || !c.im.is_finite())
                {
                    return Err(Error::InvalidInput("non-finite envelope parameter".into()));
                }
                Ok(())
            }
            Self::RationalPole { mu } => {
                if !(mu.re.is_finite() && mu.im.is_finite()) {
                    return Err(Error::InvalidInput("non-finite pole parameter".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Self::GaussianPoly { .. })
    }

    /// Pole location, if any.
    pub fn pole(&self) -> Option<C64> {
        match self {
            Self::GaussianPoly { .. } => None,
            Self::RationalPole { mu } => Some(C64::i() * mu),
        }
    }

    /// Value at `z`; exact for both families.
    pub fn eval(&self, z: C64) -> Result<C64> {
        match self {
            Self::GaussianPoly { alpha, beta, poly } => {
                Ok(poly_eval(poly, z) * (-*alpha * z * z + beta * z).exp())
            }
            Self::RationalPole { mu } => {
                let d = mu + C64::i() * z;
                if d.norm() <= 1e-14 * (1.0 + mu.norm()) {
                    return Err(Error::PoleHit { z });
                }
                Ok(d.inv())
            }
        }
    }

    /// `z ↦ conj(env(−z̄))`.
    pub fn star(&self) -> Self {
        match self {
            Self::GaussianPoly { alpha, beta, poly } => Self::GaussianPoly {
                alpha: *alpha,
                beta: -beta.conj(),
                poly: poly
                    .iter()
                    .enumerate()
                    .map(|(k, c)| if k % 2 == 0 { c.conj() } else { -c.conj() })
                    .collect(),
            },
            Self::RationalPole { mu } => Self::RationalPole { mu: mu.conj() },
        }
    }

    /// `z ↦ env(z + w)`.
    pub fn shifted(&self, w: C64) -> Self {
        match self {
            Self::GaussianPoly { alpha, beta, poly } => {
                let factor = (-*alpha * w * w + beta * w).exp();
                Self::GaussianPoly {
                    alpha: *alpha,
                    beta: beta - 2.0 * alpha * w,
                    poly: poly_shift(poly, w)
                        .into_iter()
                        .map(|c| c * factor)
                        .collect(),
                }
            }
            Self::RationalPole { mu } => Self::RationalPole {
                mu: mu + C64::i() * w,
            },
        }
    }

    /// `z ↦ e^{−isz} env(z)`.
    pub fn theta(&self, s: f64) -> Result<Self> {
        match self {
            Self::GaussianPoly { alpha, beta, poly } => Ok(Self::GaussianPoly {
                alpha: *alpha,
                beta: beta - C64::new(0.0, s),
                poly: poly.clone(),
            }),
            Self::RationalPole { .. } => Err(Error::UnsupportedForm(
                "the dual action leaves the rational envelope family".into(),
            )),
        }
    }

    pub fn scaled(&self, c: C64) -> Result<Self> {
        match self {
            Self::GaussianPoly { alpha, beta, poly } => Ok(Self::GaussianPoly {
                alpha: *alpha,
                beta: *beta,
                poly: poly.iter().map(|p| p * c).collect(),
            }),
            Self::RationalPole { .. } => Err(Error::UnsupportedForm(
                "rational envelopes carry no coefficient".into(),
            )),
        }
    }

    /// `F̂(λ) = ∫ env(s − i0) e^{−isλ} ds` on the λ-grid.
    ///
    /// Gaussian envelopes use the closed-form moments
    /// `I_k = ∫ s^k e^{−αs²+γs} ds`, `γ = β − iλ`. Rational envelopes close
    /// the contour in the half-plane where `e^{−izλ}` decays, with the
    /// residue itself taken by contour quadrature.
    pub fn fourier(&self, grid: LambdaGrid) -> LambdaFunction {
        match self {
            Self::GaussianPoly { alpha, beta, poly } => {
                let (alpha, beta) = (*alpha, *beta);
                LambdaFunction::from_fn(grid, |l| {
                    let gamma = beta - C64::new(0.0, l);
                    let i0 = (PI / alpha).sqrt() * (gamma * gamma / (4.0 * alpha)).exp();
                    let mut prev = C64::new(0.0, 0.0);
                    let mut cur = i0;
                    let mut acc = C64::new(0.0, 0.0);
                    for (k, c) in poly.iter().enumerate() {
                        acc += c * cur;
                        let next = (gamma * cur + k as f64 * prev) / (2.0 * alpha);
                        prev = cur;
                        cur = next;
                    }
                    acc
                })
            }
            Self::RationalPole { mu } => {
                let p = C64::i() * mu;
                let contour = Contour::new(self, p, CONTOUR_RADIUS);
                let zero = |_| C64::new(0.0, 0.0);
                if mu.re >= 0.0 {
                    // pole on or above the line Im z = −0: close upward for λ < 0
                    LambdaFunction::piecewise(
                        grid,
                        |l| 2.0 * PI * C64::i() * contour.residue(l),
                        zero,
                    )
                } else {
                    LambdaFunction::piecewise(grid, zero, |l| {
                        -2.0 * PI * C64::i() * contour.residue(l)
                    })
                }
            }
        }
    }
}

/// Circle of `CONTOUR_POINTS` nodes around a pole, with the envelope
/// values cached.
struct Contour {
    nodes: Vec<C64>,
    weights: Vec<C64>,
}

impl Contour {
    fn new(env: &Envelope, center: C64, radius: f64) -> Self {
        let n = CONTOUR_POINTS;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for k in 0..n {
            let u = C64::new(0.0, 2.0 * PI * k as f64 / n as f64).exp();
            let z = center + radius * u;
            nodes.push(z);
            // (1/2πi)∮ g dz = (r/n) Σ g(z_k) e^{iθ_k}
            weights.push(env.eval(z).expect("contour avoids the pole") * u * (radius / n as f64));
        }
        Self { nodes, weights }
    }

    /// `Res env(z) e^{−izλ}` inside the circle.
    fn residue(&self, lambda: f64) -> C64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * (-C64::i() * z * lambda).exp())
            .sum()
    }
}

/// One summand `env(z)·x·φ^{iz}·y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub envelope: Envelope,
    pub left: AlgebraElement,
    pub state: Functional,
    pub right: AlgebraElement,
}

impl Term {
    pub fn new(
        envelope: Envelope,
        left: AlgebraElement,
        state: Functional,
        right: AlgebraElement,
    ) -> Result<Self> {
        envelope.validate()?;
        state.density().check_compatible(&left)?;
        state.density().check_compatible(&right)?;
        Ok(Self {
            envelope,
            left,
            state,
            right,
        })
    }

    /// `env(z)·φ^{iz}`.
    pub fn simple(envelope: Envelope, state: Functional) -> Result<Self> {
        let one = AlgebraElement::identity(&state.algebra());
        Self::new(envelope, one.clone(), state, one)
    }

    pub fn eval(&self, z: C64) -> Result<AlgebraElement> {
        let e = self.envelope.eval(z)?;
        let p = self.state.power(C64::i() * z);
        Ok((&(&self.left * &p) * &self.right).scale(e))
    }
}

/// A finite sum of [`Term`]s with its strip `ℝ − iI`, `I = [lo, hi] ⊆ [0, 1/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatorSpec {
    algebra: FiniteAlgebra,
    terms: Vec<Term>,
    strip: (f64, f64),
}

/// Boundary vector `fτ^{1/2}` sampled at `t − i/2`.
pub type BoundaryVector = HilbertVector;

fn same_state(a: &Functional, b: &Functional) -> bool {
    a.density().check_compatible(b.density()).is_ok()
        && a.density().max_abs_diff(b.density()) <= 1e-14
}

impl InterpolatorSpec {
    pub fn new(algebra: FiniteAlgebra, terms: Vec<Term>, strip: (f64, f64)) -> Result<Self> {
        let (lo, hi) = strip;
        if !(0.0 <= lo && lo <= hi && hi <= 0.5) {
            return Err(Error::InvalidInput(format!(
                "strip [{lo}, {hi}] is not inside [0, 1/2]"
            )));
        }
        for t in &terms {
            if t.state.algebra() != algebra {
                return Err(Error::AlgebraMismatch {
                    expected: algebra.blocks().to_vec(),
                    found: t.state.algebra().blocks().to_vec(),
                });
            }
        }
        Ok(Self {
            algebra,
            terms,
            strip,
        })
    }

    /// Spec on the full strip `[0, 1/2]`.
    pub fn from_terms(terms: Vec<Term>) -> Result<Self> {
        let alg = terms
            .first()
            .ok_or_else(|| {
                Error::InvalidInput("use InterpolatorSpec::zero for an empty spec".into())
            })?
            .state
            .algebra();
        Self::new(alg, terms, (0.0, 0.5))
    }

    pub fn single(envelope: Envelope, state: Functional) -> Result<Self> {
        Self::from_terms(vec![Term::simple(envelope, state)?])
    }

    pub fn zero(algebra: FiniteAlgebra) -> Self {
        Self {
            algebra,
            terms: vec![],
            strip: (0.0, 0.5),
        }
    }

    pub fn algebra(&self) -> &FiniteAlgebra {
        &self.algebra
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn strip(&self) -> (f64, f64) {
        self.strip
    }

    pub fn is_gaussian(&self) -> bool {
        self.terms.iter().all(|t| t.envelope.is_gaussian())
    }

    /// Poles of the envelopes, each simple.
    pub fn poles(&self) -> Vec<(C64, usize)> {
        self.terms
            .iter()
            .filter_map(|t| t.envelope.pole())
            .map(|p| (p, 1))
            .collect()
    }

    fn map_terms(&self, f: impl Fn(&Term) -> Result<Term>) -> Result<Self> {
        Ok(Self {
            algebra: self.algebra.clone(),
            terms: self.terms.iter().map(f).collect::<Result<_>>()?,
            strip: self.strip,
        })
    }

    /// `f(z)` for `−1 ≤ Im z ≤ 0`.
    pub fn evaluate(&self, z: C64) -> Result<AlgebraElement> {
        if !(-1.0 - 1e-12..=1e-12).contains(&z.im) {
            return Err(Error::OutOfStrip { im: z.im });
        }
        self.evaluate_entire(z)
    }

    /// `f(z)` without the strip check; every term is entire off its pole.
    pub fn evaluate_entire(&self, z: C64) -> Result<AlgebraElement> {
        let mut acc = AlgebraElement::zero(&self.algebra);
        for t in &self.terms {
            acc = &acc + &t.eval(z)?;
        }
        Ok(acc)
    }

    /// Largest `‖σ^φ_z(φ^{−iz} f_k(z)) − f_k(z)φ^{−iz}‖` over the terms.
    pub fn compatibility_residual(&self, z: C64) -> Result<f64> {
        let iz = C64::i() * z;
        let mut worst: f64 = 0.0;
        for t in &self.terms {
            let f = t.eval(z)?;
            let (p, q) = (t.state.power(iz), t.state.power(-iz));
            let right = &q * &f;
            let twisted = &(&p * &right) * &q;
            let left = &f * &q;
            worst = worst.max((&twisted - &left).op_norm());
        }
        Ok(worst)
    }

    /// `f*(z) = f(−z̄)†`.
    pub fn star(&self) -> Self {
        self.map_terms(|t| {
            Ok(Term {
                envelope: t.envelope.star(),
                left: t.right.adjoint(),
                state: t.state.clone(),
                right: t.left.adjoint(),
            })
        })
        .expect("star is total")
    }

    /// `z ↦ f(z + w)`.
    pub fn shifted(&self, w: C64) -> Self {
        self.map_terms(|t| {
            Ok(Term {
                envelope: t.envelope.shifted(w),
                left: &t.left * &t.state.power(C64::i() * w),
                state: t.state.clone(),
                right: t.right.clone(),
            })
        })
        .expect("shift is total")
    }

    /// `θ_s f = e^{−isz} f(z)`.
    pub fn theta(&self, s: f64) -> Result<Self> {
        self.map_terms(|t| {
            Ok(Term {
                envelope: t.envelope.theta(s)?,
                ..t.clone()
            })
        })
    }

    /// `ω^{iu} f(z − u)`.
    pub fn modular_translate(&self, omega: &Functional, u: f64) -> Result<Self> {
        let w = omega.unitary_power(u);
        self.shifted(C64::new(-u, 0.0)).left_mul(&w)
    }

    pub fn left_mul(&self, a: &AlgebraElement) -> Result<Self> {
        self.map_terms(|t| {
            Ok(Term {
                left: a.try_mul(&t.left)?,
                ..t.clone()
            })
        })
    }

    pub fn right_mul(&self, b: &AlgebraElement) -> Result<Self> {
        self.map_terms(|t| {
            Ok(Term {
                right: t.right.try_mul(b)?,
                ..t.clone()
            })
        })
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_terms(|t| {
            Ok(Term {
                left: t.left.scale(c),
                ..t.clone()
            })
        })
        .expect("scaling is total")
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.algebra != other.algebra {
            return Err(Error::AlgebraMismatch {
                expected: self.algebra.blocks().to_vec(),
                found: other.algebra.blocks().to_vec(),
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::new(self.algebra.clone(), terms, self.strip)
    }

    /// Samples of `f(t − i/2)`.
    pub fn boundary_vector(&self, grid: &TimeGrid) -> Result<BoundaryVector> {
        let mut tail = Tail::Negligible;
        for t in &self.terms {
            if let Envelope::RationalPole { mu } = t.envelope {
                if (mu.re + 0.5).abs() <= 1e-12 {
                    return Err(Error::NotSquareIntegrable(format!(
                        "pole of 1/(μ+iz) with μ = {mu} lies on the line Im z = −1/2"
                    )));
                }
                if tail == Tail::Negligible {
                    tail = Tail::Rational { c: mu + 0.5 };
                }
            }
        }
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| self.evaluate(C64::new(grid.point(k), -0.5)))
            .collect::<Result<Vec<_>>>()?;
        HilbertVector::new(*grid, values, tail)
    }

    /// The level-0 section `t ↦ f(t)` in the trivialization of `reference`.
    pub fn to_section(&self, grid: &TimeGrid, reference: &Functional) -> Result<GridSection> {
        for t in &self.terms {
            if let Some(p) = t.envelope.pole() {
                if p.im.abs() <= 1e-12 {
                    return Err(Error::PoleHit { z: p });
                }
            }
        }
        let s = GridSection::from_concrete_fn(*grid, reference.clone(), |t| {
            self.evaluate(C64::new(t, 0.0))
                .expect("no pole on the real line")
        })?;
        Ok(match self.decay_certificate() {
            Some(c) => s.with_decay(c),
            None => s,
        })
    }

    /// `‖f(t)‖ ≤ C e^{−δt²}` for Gaussian specs, with `δ = min_k α_k / 2`.
    pub fn decay_certificate(&self) -> Option<DecayCertificate> {
        if !self.is_gaussian() {
            return None;
        }
        let delta = self
            .terms
            .iter()
            .map(|t| match t.envelope {
                Envelope::GaussianPoly { alpha, .. } => alpha / 2.0,
                Envelope::RationalPole { .. } => unreachable!(),
            })
            .fold(f64::INFINITY, f64::min);
        if self.terms.is_empty() {
            return Some(DecayCertificate { c: 0.0, delta: 1.0 });
        }
        let mut c = 0.0;
        for t in &self.terms {
            let Envelope::GaussianPoly {
                alpha,
                beta,
                ref poly,
            } = t.envelope
            else {
                unreachable!()
            };
            let a = alpha - delta;
            let reach =
                (beta.re.abs() + 1.0) / a + 3.0 * ((poly.len() as f64 + 1.0) / a).sqrt() + 5.0;
            let steps = 200_000;
            let sup = (0..=steps)
                .map(|k| {
                    let s = -reach + 2.0 * reach * k as f64 / steps as f64;
                    poly_eval(poly, C64::new(s, 0.0)).norm() * (beta.re * s - a * s * s).exp()
                })
                .fold(0.0, f64::max);
            c += t.left.op_norm() * t.right.op_norm() * sup * (1.0 + 1e-6);
        }
        Some(DecayCertificate { c, delta })
    }

    fn common_state<'a>(
        &self,
        terms: impl Iterator<Item = &'a Term>,
    ) -> Result<Option<Functional>> {
        let mut state: Option<Functional> = None;
        for t in terms {
            match &state {
                None => state = Some(t.state.clone()),
                Some(s) if same_state(s, &t.state) => {}
                Some(_) => {
                    return Err(Error::UnsupportedForm(
                        "terms mix states; request the grid-kernel form".into(),
                    ))
                }
            }
        }
        Ok(state)
    }

    /// `∫ f(t − i0) dt` as a function of the log-generator of the common
    /// state.
    pub fn boundary_operator(&self, grid: LambdaGrid) -> Result<BoundaryOperator> {
        let state = self.common_state(self.terms.iter())?;
        let terms = self
            .terms
            .iter()
            .map(|t| SpectralTerm {
                left: t.left.clone(),
                m: t.envelope.fourier(grid),
                right: t.right.clone(),
            })
            .collect();
        Ok(BoundaryOperator::Spectral(SpectralOperator {
            grid,
            state,
            terms,
        }))
    }

    /// The boundary operator acting by level-0 convolution on sections.
    pub fn boundary_operator_grid(
        &self,
        grid: &TimeGrid,
        reference: &Functional,
    ) -> Result<BoundaryOperator> {
        Ok(BoundaryOperator::GridKernel(
            self.to_section(grid, reference)?,
        ))
    }

    /// `R_f = ∮_K f(z) dz` around the poles inside the open strip, i.e.
    /// `2πi Σ Res`, each residue by a circular contour of radius
    /// `min(0.05, half the distance to the strip boundary)`.
    pub fn residue_operator(&self, grid: LambdaGrid, tol: &Tolerances) -> Result<BoundaryOperator> {
        let (lo, hi) = self.strip;
        let mut inside = Vec::new();
        for t in &self.terms {
            let Some(p) = t.envelope.pole() else { continue };
            let depth = -p.im;
            if (depth - lo).abs() < tol.pole_margin || (depth - hi).abs() < tol.pole_margin {
                return Err(Error::PoleOnBoundary { pole: p });
            }
            if lo < depth && depth < hi {
                let radius = CONTOUR_RADIUS.min(0.5 * (depth - lo).min(hi - depth));
                let contour = Contour::new(&t.envelope, p, radius);
                let m = LambdaFunction::from_fn(grid, |l| 2.0 * PI * C64::i() * contour.residue(l));
                inside.push((t, m));
            }
        }
        let state = self.common_state(inside.iter().map(|(t, _)| *t))?;
        let terms = inside
            .into_iter()
            .map(|(t, m)| SpectralTerm {
                left: t.left.clone(),
                m,
                right: t.right.clone(),
            })
            .collect();
        Ok(BoundaryOperator::Spectral(SpectralOperator {
            grid,
            state,
            terms,
        }))
    }
}

/// `x · m(λ) · y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTerm {
    pub left: AlgebraElement,
    pub m: LambdaFunction,
    pub right: AlgebraElement,
}

/// `Σ_k x_k m_k(λ) y_k` for `λ` the log-generator of a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    pub grid: LambdaGrid,
    /// `None` for the zero operator.
    pub state: Option<Functional>,
    pub terms: Vec<SpectralTerm>,
}

impl SpectralOperator {
    /// `Σ_k m_k` when every `x_k`, `y_k` is a multiple of the identity,
    /// with the scalars folded in.
    pub fn scalar_function(&self) -> Result<LambdaFunction> {
        let mut acc = LambdaFunction::zero(self.grid);
        for t in &self.terms {
            let c = scalar_of(&t.left)? * scalar_of(&t.right)?;
            acc = acc.try_add(&t.m.scale(c))?;
        }
        Ok(acc)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        let state = match (&self.state, &other.state) {
            (Some(a), Some(b)) if !same_state(a, b) => {
                return Err(Error::UnsupportedForm(
                    "sum of operators of different states".into(),
                ))
            }
            (Some(a), _) => Some(a.clone()),
            (None, b) => b.clone(),
        };
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            grid: self.grid,
            state,
            terms,
        })
    }
}

fn scalar_of(a: &AlgebraElement) -> Result<C64> {
    let alg = a.algebra();
    let c = a.blocks()[0][(0, 0)];
    let expect = AlgebraElement::identity(&alg).scale(c);
    if a.max_abs_diff(&expect) > 1e-14 * (1.0 + c.norm()) {
        return Err(Error::UnsupportedForm("coefficient is not a scalar".into()));
    }
    Ok(c)
}

/// A boundary operator, either as a function of the log-generator or as
/// the convolution kernel of its level-0 section.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryOperator {
    Spectral(SpectralOperator),
    GridKernel(GridSection),
}

impl BoundaryOperator {
    pub fn spectral(&self) -> Result<&SpectralOperator> {
        match self {
            Self::Spectral(s) => Ok(s),
            Self::GridKernel(_) => Err(Error::UnsupportedForm(
                "operator is in grid-kernel form".into(),
            )),
        }
    }

    /// Applies a grid-kernel operator to a section by convolution.
    pub fn apply(&self, g: &GridSection) -> Result<GridSection> {
        match self {
            Self::GridKernel(f) => f.convolve(g),
            Self::Spectral(_) => Err(Error::UnsupportedForm(
                "operator is in spectral form".into(),
            )),
        }
    }
}

/// Contour-shift identity `Σ_s f(s) g(t−s−i/2) = Σ_s f(s−i/2) g(t−s)` on
/// the grid; returns `max_t ‖lhs − rhs‖ / max_t ‖lhs‖`.
pub fn cauchy_shift_residual(
    f: &InterpolatorSpec,
    g: &InterpolatorSpec,
    grid: &TimeGrid,
) -> Result<f64> {
    if !f.is_gaussian() || !g.is_gaussian() {
        return Err(Error::UnsupportedForm(
            "contour shifts need entire envelopes".into(),
        ));
    }
    let sample = |h: &InterpolatorSpec, im: f64| {
        (0..grid.len())
            .into_par_iter()
            .map(|k| h.evaluate(C64::new(grid.point(k), im)))
            .collect::<Result<Vec<_>>>()
    };
    let lhs = convolve_concrete(grid, &sample(f, 0.0)?, &sample(g, -0.5)?);
    let rhs = convolve_concrete(grid, &sample(f, -0.5)?, &sample(g, 0.0)?);
    let scale = lhs.iter().map(|a| a.op_norm()).fold(0.0, f64::max);
    let diff = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).op_norm())
        .fold(0.0, f64::max);
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Random Gaussian spec with `n_terms` terms in `state`: `α ∈ [0.5, 2)`,
/// `Re β ∈ [−0.5, 0.5)`, `Im β ∈ [−1, 1)`, polynomial degree ≤ 2 and unit-norm
/// Gaussian coefficients `x`, `y`.
pub fn random_gaussian_spec<R: Rng + ?Sized>(
    state: &Functional,
    n_terms: usize,
    rng: &mut R,
) -> InterpolatorSpec {
    let alg = state.algebra();
    let terms = (0..n_terms)
        .map(|_| {
            let alpha = rng.random_range(0.5..2.0);
            let beta = C64::new(rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0));
            let degree = rng.random_range(0..=2usize);
            let poly = gaussian_matrix(degree + 1, 1, rng)
                .iter()
                .copied()
                .collect();
            let left = random_element(&alg, rng);
            let right = random_element(&alg, rng);
            Term::new(
                Envelope::GaussianPoly { alpha, beta, poly },
                left,
                state.clone(),
                right,
            )
            .expect("consistent algebra")
        })
        .collect();
    InterpolatorSpec::new(alg, terms, (0.0, 0.5)).expect("valid spec")
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EnvelopeRepr {
    GaussianPoly {
        alpha: f64,
        #[serde(default = "zero_complex")]
        beta: JsonComplex,
        #[serde(default = "unit_poly")]
        poly: Vec<JsonComplex>,
    },
    RationalPole {
        mu: JsonComplex,
    },
}

fn zero_complex() -> JsonComplex {
    JsonComplex::Real(0.0)
}

fn unit_poly() -> Vec<JsonComplex> {
    vec![JsonComplex::Real(1.0)]
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    envelope: EnvelopeRepr,
    #[serde(default)]
    left: Option<AlgebraElement>,
    state: Functional,
    #[serde(default)]
    right: Option<AlgebraElement>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    #[serde(default)]
    blocks: Option<Vec<usize>>,
    terms: Vec<TermRepr>,
    #[serde(default = "full_strip")]
    strip: [f64; 2],
}

fn full_strip() -> [f64; 2] {
    [0.0, 0.5]
}

impl Serialize for InterpolatorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpecRepr {
            blocks: Some(self.algebra.blocks().to_vec()),
            terms: self
                .terms
                .iter()
                .map(|t| TermRepr {
                    envelope: match &t.envelope {
                        Envelope::GaussianPoly { alpha, beta, poly } => {
                            EnvelopeRepr::GaussianPoly {
                                alpha: *alpha,
                                beta: (*beta).into(),
                                poly: poly.iter().map(|&c| c.into()).collect(),
                            }
                        }
                        Envelope::RationalPole { mu } => {
                            EnvelopeRepr::RationalPole { mu: (*mu).into() }
                        }
                    },
                    left: Some(t.left.clone()),
                    state: t.state.clone(),
                    right: Some(t.right.clone()),
                })
                .collect(),
            strip: [self.strip.0, self.strip.1],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InterpolatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = SpecRepr::deserialize(d)?;
        let algebra = match (&r.blocks, r.terms.first()) {
            (Some(b), _) => FiniteAlgebra::new(b.clone()).map_err(D::Error::custom)?,
            (None, Some(t)) => t.state.algebra(),
            (None, None) => return Err(D::Error::custom("empty spec needs \"blocks\"")),
        };
        let terms = r
            .terms
            .into_iter()
            .map(|t| {
                let envelope = match t.envelope {
                    EnvelopeRepr::GaussianPoly { alpha, beta, poly } => Envelope::GaussianPoly {
                        alpha,
                        beta: beta.into(),
                        poly: poly.into_iter().map(Into::into).collect(),
                    },
                    EnvelopeRepr::RationalPole { mu } => Envelope::RationalPole { mu: mu.into() },
                };
                let one = AlgebraElement::identity(&t.state.algebra());
                Term::new(
                    envelope,
                    t.left.unwrap_or_else(|| one.clone()),
                    t.state,
                    t.right.unwrap_or(one),
                )
            })
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        InterpolatorSpec::new(algebra, terms, (r.strip[0], r.strip[1])).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::random_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rho34() -> Functional {
        Functional::diagonal(&[0.75, 0.25]).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn polynomial_shift() {
        let p = vec![c(1.0, 0.0), c(-2.0, 1.0), c(0.5, 0.0)];
        let w = c(0.3, -0.7);
        let q = poly_shift(&p, w);
        for z in [c(0.0, 0.0), c(1.0, 2.0), c(-0.4, 0.1)] {
            assert!((poly_eval(&q, z) - poly_eval(&p, z + w)).norm() < 1e-14);
        }
    }

    #[test]
    fn envelope_identities() {
        let g = Envelope::GaussianPoly {
            alpha: 0.8,
            beta: c(0.2, -0.4),
            poly: vec![c(1.0, 1.0), c(0.0, -0.5), c(0.3, 0.0)],
        };
        let r = Envelope::rational(c(-0.3, 0.2));
        for e in [&g, &r] {
            for z in [c(0.3, -0.2), c(-1.0, -0.5), c(2.0, 0.0)] {
                let star = e.star().eval(z).unwrap();
                assert!((star - e.eval(-z.conj()).unwrap().conj()).norm() < 1e-13);
                let w = c(0.4, 0.9);
                let sh = e.shifted(w).eval(z).unwrap();
                assert!((sh - e.eval(z + w).unwrap()).norm() < 1e-12 * (1.0 + sh.norm()));
            }
        }
        let th = g.theta(0.7).unwrap().eval(c(0.5, -0.3)).unwrap();
        let expect = (-C64::i() * 0.7 * c(0.5, -0.3)).exp() * g.eval(c(0.5, -0.3)).unwrap();
        assert!((th - expect).norm() < 1e-14);
        assert!(matches!(
            r.eval(r.pole().unwrap()),
            Err(Error::PoleHit { .. })
        ));
    }

    #[test]
    fn evaluation_examples() {
        let phi = rho34();
        let f =
            InterpolatorSpec::single(Envelope::gaussian(1.0, c(0.0, 0.0)), phi.clone()).unwrap();
        let v = f.evaluate(c(0.0, -0.5)).unwrap();
        let expect = phi.power(c(0.5, 0.0)).scale(c(0.25f64.exp(), 0.0));
        assert!(v.max_abs_diff(&expect) < 1e-14);

        let singular = Functional::diagonal(&[1.0, 0.0]).unwrap();
        let g = InterpolatorSpec::single(Envelope::gaussian(1.0, c(0.0, 0.0)), singular.clone())
            .unwrap();
        assert!(
            g.evaluate(c(0.0, 0.0))
                .unwrap()
                .max_abs_diff(&singular.support())
                < 1e-15
        );
        assert!(matches!(
            g.evaluate(c(0.0, 0.5)),
            Err(Error::OutOfStrip { .. })
        ));
    }

    #[test]
    fn example_family_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let alg = FiniteAlgebra::full(3);
        let phi = random_state(&alg, None, &mut rng);
        let (a, b) = (
            random_element(&alg, &mut rng),
            random_element(&alg, &mut rng),
        );
        let (alpha, beta) = (0.7, c(0.3, 0.0));
        let f = InterpolatorSpec::from_terms(vec![Term::new(
            Envelope::gaussian(alpha, beta),
            a.clone(),
            phi.clone(),
            b.clone(),
        )
        .unwrap()])
        .unwrap();
        let grid = TimeGrid::new(2.0, 0.5).unwrap();
        let v = f.boundary_vector(&grid).unwrap();
        for (k, t) in grid.points().into_iter().enumerate() {
            let z = c(t, -0.5);
            let env = (-alpha * z * z + beta * z).exp();
            let expect = (&(&a * &phi.power(c(0.5, t))) * &b).scale(env);
            assert!(v.values()[k].max_abs_diff(&expect) < 1e-13);
        }
    }

    #[test]
    fn rational_boundary_vector() {
        let phi = rho34();
        let f = InterpolatorSpec::single(Envelope::rational(c(1.0, 0.0)), phi.clone()).unwrap();
        let grid = TimeGrid::new(3.0, 0.5).unwrap();
        let v = f.boundary_vector(&grid).unwrap();
        for (k, t) in grid.points().into_iter().enumerate() {
            let expect = phi.power(c(0.5, t)).scale(c(1.5, t).inv());
            assert!(v.values()[k].max_abs_diff(&expect) < 1e-14);
        }
        let critical = InterpolatorSpec::single(Envelope::rational(c(-0.5, 0.3)), phi).unwrap();
        assert!(matches!(
            critical.boundary_vector(&grid),
            Err(Error::NotSquareIntegrable(_))
        ));
        let zero = InterpolatorSpec::zero(FiniteAlgebra::full(2));
        assert!(zero.boundary_vector(&grid).unwrap().norm_sqr() == 0.0);
    }

    #[test]
    fn star_matches_vector_star() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alg = FiniteAlgebra::new(vec![2, 1]).unwrap();
        let phi = random_state(&alg, None, &mut rng);
        let f = random_gaussian_spec(&phi, 2, &mut rng);
        let grid = TimeGrid::new(6.0, 0.05).unwrap();
        let a = f.star().boundary_vector(&grid).unwrap();
        let b = f.boundary_vector(&grid).unwrap().star();
        let d = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x.max_abs_diff(y))
            .fold(0.0, f64::max);
        assert!(d < 1e-10);
    }

    #[test]
    fn compatibility_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let phi = random_state(&FiniteAlgebra::full(3), None, &mut rng);
        let f = random_gaussian_spec(&phi, 2, &mut rng);
        for z in [c(0.4, -0.25), c(-1.0, -0.5), c(0.0, 0.0)] {
            assert!(f.compatibility_residual(z).unwrap() < 1e-10);
        }
    }

    #[test]
    fn boundary_operator_catalogue() {
        let grid = LambdaGrid::new(20.0, 0.01).unwrap();
        let phi = rho34();
        let zero = |_| c(0.0, 0.0);
        for mu in [c(1.0, 0.0), c(0.0, 0.0), c(0.4, -0.8)] {
            let f = InterpolatorSpec::single(Envelope::rational(mu), phi.clone()).unwrap();
            let got = f
                .boundary_operator(grid)
                .unwrap()
                .spectral()
                .unwrap()
                .scalar_function()
                .unwrap();
            let expect = LambdaFunction::piecewise(grid, |l| 2.0 * PI * (mu * l).exp(), zero);
            assert!(got.sup_diff(&expect).unwrap() < 1e-8, "mu={mu}");
        }
        let beta = c(-0.3, 0.0);
        let f = InterpolatorSpec::single(Envelope::rational(beta), phi.clone()).unwrap();
        let got = f
            .boundary_operator(grid)
            .unwrap()
            .spectral()
            .unwrap()
            .scalar_function()
            .unwrap();
        let expect = LambdaFunction::piecewise(grid, zero, |l| -2.0 * PI * (beta * l).exp());
        assert!(got.sup_diff(&expect).unwrap() < 1e-8);
    }

    #[test]
    fn gaussian_fourier_matches_quadrature() {
        let env = Envelope::GaussianPoly {
            alpha: 0.9,
            beta: c(0.2, 0.5),
            poly: vec![c(1.0, 0.0), c(0.5, -0.5), c(0.0, 0.25)],
        };
        let grid = LambdaGrid::new(4.0, 0.5).unwrap();
        let m = env.fourier(grid);
        let t = TimeGrid::new(15.0, 0.005).unwrap();
        for (j, l) in grid.points().into_iter().enumerate() {
            let vals: Vec<C64> = t
                .points()
                .into_iter()
                .map(|s| env.eval(c(s, 0.0)).unwrap() * (-C64::i() * s * l).exp())
                .collect();
            let q = t.integrate(&vals);
            assert!((q - m.value(j)).norm() < 1e-12, "λ={l}");
        }
    }

    #[test]
    fn residue_catalogue() {
        let tol = Tolerances::default();
        let grid = LambdaGrid::new(20.0, 0.01).unwrap();
        let phi = rho34();
        for beta in [-0.3, -0.25] {
            let f =
                InterpolatorSpec::single(Envelope::rational(c(beta, 0.0)), phi.clone()).unwrap();
            let r = f
                .residue_operator(grid, &tol)
                .unwrap()
                .spectral()
                .unwrap()
                .scalar_function()
                .unwrap();
            let expect = LambdaFunction::from_fn(grid, |l| c(2.0 * PI * (beta * l).exp(), 0.0));
            assert!(r.max_rel_diff(&expect, 0.0).unwrap() < 1e-8);
        }
        let g =
            InterpolatorSpec::single(Envelope::gaussian(1.0, c(0.0, 0.0)), phi.clone()).unwrap();
        let r = g.residue_operator(grid, &tol).unwrap();
        assert!(r.spectral().unwrap().terms.is_empty());
        let edge = InterpolatorSpec::single(Envelope::rational(c(-0.4999, 0.0)), phi).unwrap();
        assert!(matches!(
            edge.residue_operator(grid, &tol),
            Err(Error::PoleOnBoundary { .. })
        ));
    }

    #[test]
    fn mixed_states_have_no_spectral_form() {
        let a = InterpolatorSpec::single(Envelope::gaussian(1.0, c(0.0, 0.0)), rho34()).unwrap();
        let b = InterpolatorSpec::single(
            Envelope::gaussian(1.0, c(0.0, 0.0)),
            Functional::normalized_trace(2),
        )
        .unwrap();
        let s = a.try_add(&b).unwrap();
        assert!(matches!(
            s.boundary_operator(LambdaGrid::default()),
            Err(Error::UnsupportedForm(_))
        ));
        let grid = TimeGrid::new(5.0, 0.1).unwrap();
        assert!(s.boundary_operator_grid(&grid, &rho34()).is_ok());
    }

    #[test]
    fn cauchy_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let phi = random_state(&FiniteAlgebra::full(2), None, &mut rng);
        let f = random_gaussian_spec(&phi, 1, &mut rng);
        let g = random_gaussian_spec(&phi, 2, &mut rng);
        let grid = TimeGrid::new(12.0, 0.02).unwrap();
        assert!(cauchy_shift_residual(&f, &g, &grid).unwrap() < 1e-7);
    }

    #[test]
    fn decay_certificate_holds_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let phi = random_state(&FiniteAlgebra::full(2), None, &mut rng);
        let f = random_gaussian_spec(&phi, 2, &mut rng);
        let grid = TimeGrid::new(10.0, 0.01).unwrap();
        let s = f.to_section(&grid, &phi).unwrap();
        assert!(s.decay_ratio().unwrap() <= 1.0);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let phi = random_state(&FiniteAlgebra::full(2), None, &mut rng);
        let f = random_gaussian_spec(&phi, 2, &mut rng)
            .try_add(
                &InterpolatorSpec::single(Envelope::rational(c(0.5, -0.1)), phi.clone()).unwrap(),
            )
            .unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: InterpolatorSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let short = r#"{"terms":[{"envelope":{"kind":"rational_pole","mu":1},
            "state":{"blocks":[2],"density":[[[[0.75,0],[0,0]],[[0,0],[0.25,0]]]]}}]}"#;
        let f: InterpolatorSpec = serde_json::from_str(short).unwrap();
        assert_eq!(f.strip(), (0.0, 0.5));
        assert_eq!(f.terms()[0].envelope, Envelope::rational(c(1.0, 0.0)));
    }
}
