//! The correspondence `φ ↔ h_φ` between positive functionals and the
//! relatively invariant operators of degree −1 on the crossed product,
//! realized on closed-form analytic vectors.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::algebra::{AlgebraElement, Functional};
use crate::crossed::{rational_tail, HilbertVector};
use crate::error::{Error, Result};
use crate::interpolator::{Envelope, InterpolatorSpec};
use crate::lambda::{LambdaFunction, LambdaGrid};
use crate::section::TimeGrid;
use crate::tolerance::Tolerances;
use crate::C64;

/// The analytic generator `h_φ` of `t ↦ φ^{it}`, acting on boundary
/// vectors `ξ(t) = f(t − i/2)` by `(h_φ ξ)(t) = ρ_φ ξ(t + i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelInvariantOperator {
    state: Functional,
}

pub fn build_h(phi: &Functional) -> RelInvariantOperator {
    RelInvariantOperator { state: phi.clone() }
}

/// `(1/2π)(iz)^{−1} φ^{iz}`, whose boundary vector is
/// `eτ^{1/2}(t) = (1/2π)(it+1/2)^{−1} φ^{it+1/2}` with `e = [1∨h_φ]`.
pub fn support_spec(phi: &Functional) -> InterpolatorSpec {
    InterpolatorSpec::single(Envelope::rational(C64::new(0.0, 0.0)), phi.clone())
        .expect("valid envelope")
        .scale(C64::new(1.0 / (2.0 * PI), 0.0))
}

impl RelInvariantOperator {
    pub fn state(&self) -> &Functional {
        &self.state
    }

    /// The spec of `h_φ f`: `z ↦ ρ_φ f(z + i)`.
    pub fn apply_spec(&self, f: &InterpolatorSpec) -> Result<InterpolatorSpec> {
        f.shifted(C64::new(0.0, 1.0)).left_mul(self.state.density())
    }

    /// `h_φ ξ` for the boundary vector `ξ` of `f`.
    pub fn apply(&self, f: &InterpolatorSpec, grid: &TimeGrid) -> Result<HilbertVector> {
        self.apply_spec(f)?.boundary_vector(grid)
    }

    /// Spectral shadow `e^{−λ}` of `h_φ` on the λ-grid.
    pub fn lambda_shadow(&self, grid: LambdaGrid) -> LambdaFunction {
        LambdaFunction::from_fn(grid, |l| C64::new((-l).exp(), 0.0))
    }

    /// `2π τ(x e)` via `2π (eτ^{1/2} | x eτ^{1/2})`.
    pub fn recover_functional(&self, x: &AlgebraElement, grid: &TimeGrid) -> Result<C64> {
        let v = support_spec(&self.state).boundary_vector(grid)?;
        Ok(2.0 * PI * v.inner_product(&v.left_mul(x)?)?)
    }

    /// The density reconstructed from `φ(E_ij) = ρ_ji` on the matrix units.
    pub fn recover_density(&self, grid: &TimeGrid) -> Result<AlgebraElement> {
        let alg = self.state.algebra();
        let v = support_spec(&self.state).boundary_vector(grid)?;
        let mut rho = AlgebraElement::zero(&alg);
        for (b, &n) in alg.blocks().iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let e = AlgebraElement::matrix_unit(&alg, b, i, j);
                    let value = 2.0 * PI * v.inner_product(&v.left_mul(&e)?)?;
                    rho.blocks_mut()[b][(j, i)] = value;
                }
            }
        }
        Ok(rho)
    }
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `‖h_φ(h_φ ξ) − ρ_φ² ξ(· + 2i)‖ / ‖h_φ h_φ ξ‖`.
pub fn group_law_residual(
    h: &RelInvariantOperator,
    f: &InterpolatorSpec,
    grid: &TimeGrid,
) -> Result<f64> {
    let twice = h.apply_spec(&h.apply_spec(f)?)?.boundary_vector(grid)?;
    let rho2 = h.state.density().try_mul(h.state.density())?;
    let direct = f
        .shifted(C64::new(0.0, 2.0))
        .left_mul(&rho2)?
        .boundary_vector(grid)?;
    let d = twice.try_sub(&direct)?;
    Ok(relative(
        d.norm_sqr().max(0.0).sqrt(),
        twice.norm_sqr().sqrt(),
    ))
}

/// `‖W_s h W_s* ξ − e^{−s} h ξ‖ / ‖h ξ‖`, with `W_s* ξ = e^{−s/2}` times the
/// boundary vector of `θ_{−s} f`.
pub fn theta_covariance_residual(
    h: &RelInvariantOperator,
    f: &InterpolatorSpec,
    s: f64,
    grid: &TimeGrid,
) -> Result<f64> {
    let hx = h.apply(f, grid)?;
    let conj = h
        .apply(&f.theta(-s)?, grid)?
        .scale(C64::new((-s / 2.0).exp(), 0.0))
        .dual_action(s);
    let d = conj.try_sub(&hx.scale(C64::new((-s).exp(), 0.0)))?;
    Ok(relative(d.norm_sqr().max(0.0).sqrt(), hx.norm_sqr().sqrt()))
}

/// `(ξ | h_φ ξ)`; real and non-negative up to quadrature error.
pub fn quadratic_form(
    h: &RelInvariantOperator,
    f: &InterpolatorSpec,
    grid: &TimeGrid,
) -> Result<C64> {
    f.boundary_vector(grid)?.inner_product(&h.apply(f, grid)?)
}

/// Residuals of additivity and bimodule covariance on one test vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearityResiduals {
    /// `‖h_{φ+ψ}ξ − h_φξ − h_ψξ‖ / ‖ξ‖`.
    pub additivity: f64,
    /// `‖a h_φ a† ξ − h_{aφa†} ξ‖ / ‖ξ‖`.
    pub covariance: f64,
}

pub fn verify_linearity(
    phi: &Functional,
    psi: &Functional,
    a: &AlgebraElement,
    test_vectors: &[InterpolatorSpec],
    grid: &TimeGrid,
) -> Result<Vec<LinearityResiduals>> {
    let h_phi = build_h(phi);
    let h_psi = build_h(psi);
    let h_sum = build_h(&phi.try_add(psi)?);
    let h_conj = build_h(&phi.conjugate_by(a)?);
    test_vectors
        .par_iter()
        .map(|f| {
            let norm = f.boundary_vector(grid)?.norm_sqr().sqrt();
            let sum = h_sum.apply(f, grid)?;
            let parts = h_phi.apply(f, grid)?.try_add(&h_psi.apply(f, grid)?)?;
            let additivity = relative(sum.try_sub(&parts)?.norm_sqr().max(0.0).sqrt(), norm);
            let conj = h_phi
                .apply_spec(&f.left_mul(&a.adjoint())?)?
                .left_mul(a)?
                .boundary_vector(grid)?;
            let direct = h_conj.apply(f, grid)?;
            let covariance = relative(conj.try_sub(&direct)?.norm_sqr().max(0.0).sqrt(), norm);
            Ok(LinearityResiduals {
                additivity,
                covariance,
            })
        })
        .collect()
}

/// `(lhs, rhs, rel_err)` of one identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: C64,
    pub rhs: C64,
    pub rel_err: f64,
}

impl IdentityCheck {
    pub fn new(lhs: C64, rhs: C64) -> Self {
        let d = (lhs - rhs).norm();
        Self {
            lhs,
            rhs,
            rel_err: relative(d, rhs.norm()),
        }
    }
}

fn require_left_support(phi: &Functional, x: &AlgebraElement, tol: &Tolerances) -> Result<()> {
    let residual = phi.support().try_mul(x)?.try_sub(x)?.op_norm();
    if residual > tol.power * x.op_norm().max(1.0) {
        return Err(Error::NotCompressed { residual });
    }
    Ok(())
}

/// `τ(h x*(1∨ω)^{−μ} x) = φ(x*x)/(2πμ)`.
///
/// The left side follows the Plancherel reduction
/// `(1/2π) ∫ |g(t)|² ‖ω^{it} x eτ^{1/2}‖² dt` with `g(t) = 1/(it + μ/2)`.
/// The inner norms are truncated window sums of `‖x eτ^{1/2}(u)‖²` over
/// `u ∈ [−T−t, T−t]`, from prefix sums on a doubled grid plus closed-form
/// rational tails; the outer integral gets the same tail closure.
pub fn verify_averaging(
    phi: &Functional,
    omega: &Functional,
    x: &AlgebraElement,
    mu: f64,
    grid: &TimeGrid,
    tol: &Tolerances,
) -> Result<IdentityCheck> {
    omega.require_faithful()?;
    if !(mu > 0.0) {
        return Err(Error::InvalidInput(format!(
            "averaging needs μ > 0, got {mu}"
        )));
    }
    require_left_support(phi, x, tol)?;
    let m = grid.half_count();
    let dt = grid.dt();
    let wide = TimeGrid::new(2.0 * m as f64 * dt, dt)?;
    let xi = support_spec(phi).left_mul(x)?.boundary_vector(&wide)?;
    let q: Vec<f64> = xi.values().par_iter().map(|v| v.hs_norm_sqr()).collect();
    // trapezoid prefix sums: prefix[k] = ∫_{u_0}^{u_k} q
    let mut prefix = vec![0.0; q.len()];
    for k in 1..q.len() {
        prefix[k] = prefix[k - 1] + 0.5 * dt * (q[k - 1] + q[k]);
    }
    // q(u) = K / (1/4 + u²) outside the window, K read off at the window ends
    let half = C64::new(0.5, 0.0);
    let tail = |k: usize, u: f64| q[k] * (0.25 + u * u) * rational_tail(half, half, u.abs()).re;
    let norms: Vec<f64> = (0..grid.len())
        .map(|j| {
            // window u ∈ [−T − t, T − t] maps to wide indices [j, j + 2m]
            let (lo, hi) = (j, j + 2 * m);
            let inner = prefix[hi] - prefix[lo];
            inner + tail(hi, wide.point(hi)) + tail(lo, wide.point(lo))
        })
        .collect();
    let a = mu / 2.0;
    let g2: Vec<f64> = grid
        .points()
        .iter()
        .map(|t| 1.0 / (t * t + a * a))
        .collect();
    let integrand: Vec<f64> = g2.iter().zip(&norms).map(|(g, n)| g * n).collect();
    let t_max = grid.t_max();
    let outer_tail = (PI / 2.0 - (t_max / a).atan()) / a;
    let n = grid.len();
    let outer = grid.integrate_real(&integrand) + (norms[0] + norms[n - 1]) * outer_tail;
    let lhs = outer / (2.0 * PI);
    let rhs = phi.evaluate(&x.adjoint().try_mul(x)?)? / (2.0 * PI * mu);
    Ok(IdentityCheck::new(C64::new(lhs, 0.0), rhs))
}

/// `τ(e x* ω^{it} x) = φ(x* ω^{it} x φ^{−it}) / (2π(1 − it))`, the left side
/// as `(x eτ^{1/2} | ω^{it} x eτ^{1/2})` on the grid.
pub fn verify_inner_lemma(
    phi: &Functional,
    omega: &Functional,
    x: &AlgebraElement,
    t: f64,
    grid: &TimeGrid,
    tol: &Tolerances,
) -> Result<IdentityCheck> {
    require_left_support(phi, x, tol)?;
    let xe = support_spec(phi).left_mul(x)?;
    let left = xe.boundary_vector(grid)?;
    let right = xe.modular_translate(omega, t)?.boundary_vector(grid)?;
    let lhs = left.inner_product(&right)?;
    let a = x
        .adjoint()
        .try_mul(&omega.unitary_power(t))?
        .try_mul(x)?
        .try_mul(&phi.unitary_power(-t))?;
    let rhs = phi.evaluate(&a)? / (2.0 * PI * C64::new(1.0, -t));
    Ok(IdentityCheck::new(lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{random_element, random_state, random_unitary, FiniteAlgebra};
    use crate::crossed::{spectral_model, Tail};
    use crate::interpolator::random_gaussian_spec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rho34() -> Functional {
        Functional::diagonal(&[0.75, 0.25]).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(40.0, 0.01).unwrap()
    }

    #[test]
    fn scalar_density_acts_by_shift() {
        let tr = Functional::normalized_trace(2);
        let h = build_h(&tr);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_gaussian_spec(&tr, 1, &mut rng);
        let g = TimeGrid::new(8.0, 0.02).unwrap();
        let hv = h.apply(&f, &g).unwrap();
        let direct: Vec<AlgebraElement> = g
            .points()
            .into_iter()
            .map(|t| {
                f.evaluate_entire(C64::new(t, 0.5))
                    .unwrap()
                    .scale(C64::new(0.5, 0.0))
            })
            .collect();
        let direct = HilbertVector::new(g, direct, Tail::Negligible).unwrap();
        assert!(hv.max_diff(&direct).unwrap() < 1e-12);
    }

    #[test]
    fn group_law_and_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = random_state(&FiniteAlgebra::full(2), None, &mut rng);
        let h = build_h(&phi);
        let g = TimeGrid::new(10.0, 0.01).unwrap();
        for _ in 0..10 {
            let f = random_gaussian_spec(&phi, 1, &mut rng);
            assert!(group_law_residual(&h, &f, &g).unwrap() < 1e-8);
            assert!(theta_covariance_residual(&h, &f, 1.0, &g).unwrap() < 1e-8);
            assert!(quadratic_form(&h, &f, &g).unwrap().re >= -1e-5);
        }
    }

    #[test]
    fn recovery_examples() {
        let h = build_h(&rho34());
        let alg = FiniteAlgebra::full(2);
        let one = AlgebraElement::identity(&alg);
        assert!((h.recover_functional(&one, &grid()).unwrap().re - 1.0).abs() < 1e-6);
        let e11 = AlgebraElement::matrix_unit(&alg, 0, 0, 0);
        assert!((h.recover_functional(&e11, &grid()).unwrap().re - 0.75).abs() < 1e-6);
        let pure = build_h(&Functional::diagonal(&[1.0, 0.0]).unwrap());
        let e22 = AlgebraElement::matrix_unit(&alg, 0, 1, 1);
        assert!(pure.recover_functional(&e22, &grid()).unwrap().norm() < 1e-12);
        let rho = h.recover_density(&grid()).unwrap();
        assert!(rho.max_abs_diff(rho34().density()) < 4.0 * 1e-5);
    }

    #[test]
    fn support_trace_matches_lambda_model() {
        let phi = rho34();
        let h = build_h(&phi);
        let one = AlgebraElement::identity(&phi.algebra());
        let grid_route = h.recover_functional(&one, &grid()).unwrap() / (2.0 * PI);
        let e = LambdaFunction::piecewise(
            LambdaGrid::default(),
            |_| C64::new(1.0, 0.0),
            |_| C64::new(0.0, 0.0),
        );
        let spectral = spectral_model(&phi, &e, &one).unwrap();
        assert!((grid_route - spectral).norm() / spectral.norm() < 1e-6);
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let alg = FiniteAlgebra::full(3);
        let phi = random_state(&alg, None, &mut rng);
        let psi = random_state(&alg, None, &mut rng);
        let u = random_unitary(&alg, &mut rng);
        let g = TimeGrid::new(10.0, 0.02).unwrap();
        let vectors: Vec<_> = (0..4)
            .map(|_| random_gaussian_spec(&phi, 1, &mut rng))
            .collect();
        for r in verify_linearity(&phi, &psi, &u, &vectors, &g).unwrap() {
            assert!(r.additivity < 1e-8 && r.covariance < 1e-8, "{r:?}");
        }
        let zero = Functional::zero(&alg);
        for r in verify_linearity(&phi, &zero, &u, &vectors, &g).unwrap() {
            assert!(r.additivity == 0.0);
        }
    }

    #[test]
    fn averaging_examples() {
        let tol = Tolerances::default();
        let phi = rho34();
        let p = phi.support();
        let c = verify_averaging(&phi, &phi, &p, 1.0, &grid(), &tol).unwrap();
        assert!((c.rhs.re - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(c.rel_err < 1e-5, "{c:?}");
        let c2 = verify_averaging(&phi, &phi, &p, 2.0, &grid(), &tol).unwrap();
        assert!((c2.lhs.re * 2.0 - c.lhs.re).abs() < 1e-6 * c.lhs.re);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let alg = FiniteAlgebra::full(2);
        let omega = random_state(&alg, None, &mut rng);
        let x = random_element(&alg, &mut rng);
        let c = verify_averaging(&phi, &omega, &x, 0.5, &grid(), &tol).unwrap();
        assert!(c.rel_err < 1e-5, "{c:?}");
        assert!(matches!(
            verify_averaging(
                &phi,
                &Functional::diagonal(&[1.0, 0.0]).unwrap(),
                &x,
                1.0,
                &grid(),
                &tol
            ),
            Err(Error::NotFaithful)
        ));
    }

    #[test]
    fn inner_lemma_examples() {
        let tol = Tolerances::default();
        let phi = rho34();
        let p = phi.support();
        let c = verify_inner_lemma(&phi, &phi, &p, 1.0, &grid(), &tol).unwrap();
        assert!((c.rhs - C64::new(1.0, 0.0) / (2.0 * PI * C64::new(1.0, -1.0))).norm() < 1e-15);
        assert!(c.rel_err < 1e-5, "{c:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let alg = FiniteAlgebra::full(2);
        let omega = random_state(&alg, None, &mut rng);
        let x = random_element(&alg, &mut rng);
        for t in [-1.0, 0.0, 1.0] {
            let c = verify_inner_lemma(&phi, &omega, &x, t, &grid(), &tol).unwrap();
            assert!(c.rel_err < 1e-5, "t={t}: {c:?}");
        }
    }
}
