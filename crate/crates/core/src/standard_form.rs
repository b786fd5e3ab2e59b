//! `L²(M)` as Hilbert–Schmidt matrices: bimodule actions, the
//! *-operation, GNS vectors, relative modular flows and their analytic
//! continuation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, Functional};
use crate::error::{Error, Result};
use crate::tolerance::Tolerances;
use crate::C64;

/// A vector in `L²(M)`, stored blockwise like an algebra element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct L2Vector(pub AlgebraElement);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl L2Vector {
    pub fn new(e: AlgebraElement) -> Self {
        Self(e)
    }

    pub fn element(&self) -> &AlgebraElement {
        &self.0
    }

    /// `⟨ξ|η⟩ = Σ_k tr(ξ_k† η_k)`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.0.hs_inner(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.hs_norm()
    }

    /// Entrywise adjoint.
    pub fn star(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.0.try_sub(&other.0)?.hs_norm())
    }
}

/// `φ^{1/2} = ρ_φ^{1/2}`.
pub fn gns_vector(phi: &Functional) -> L2Vector {
    L2Vector(phi.power(C64::new(0.5, 0.0)))
}

pub fn act(a: &AlgebraElement, xi: &L2Vector, side: Side) -> Result<L2Vector> {
    Ok(L2Vector(match side {
        Side::Left => a.try_mul(&xi.0)?,
        Side::Right => xi.0.try_mul(a)?,
    }))
}

/// Gram matrix `G_{jk} = ⟨ξ_j|ξ_k⟩`.
pub fn gram_matrix(vectors: &[L2Vector]) -> Result<DMatrix<C64>> {
    let n = vectors.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            g[(j, k)] = vectors[j].inner(&vectors[k])?;
        }
    }
    Ok(g)
}

fn require_compressed(
    phi: &Functional,
    psi: &Functional,
    a: &AlgebraElement,
    tol: &Tolerances,
) -> Result<()> {
    let residual = phi.compression_residual(a, psi)?;
    if residual > tol.power * a.op_norm().max(1.0) {
        return Err(Error::NotCompressed { residual });
    }
    Ok(())
}

/// `ρ_φ^{iz} a ρ_ψ^{-iz}`; for real `z = t` this is `σ^{φ,ψ}_t(a)`.
pub fn relative_modular_flow(
    phi: &Functional,
    psi: &Functional,
    a: &AlgebraElement,
    z: C64,
    tol: &Tolerances,
) -> Result<AlgebraElement> {
    require_compressed(phi, psi, a, tol)?;
    let iz = C64::i() * z;
    phi.power(iz).try_mul(a)?.try_mul(&psi.power(-iz))
}

/// `ρ_φ^{iz} a ρ_ψ^{1-iz}` for `-1 ≤ Im z ≤ 0`, as an element of the
/// predual under the trace pairing.
pub fn modular_extension(
    phi: &Functional,
    psi: &Functional,
    a: &AlgebraElement,
    z: C64,
) -> Result<AlgebraElement> {
    if !(-1.0..=0.0).contains(&z.im) {
        return Err(Error::OutOfStrip { im: z.im });
    }
    let iz = C64::i() * z;
    phi.power(iz)
        .try_mul(a)?
        .try_mul(&psi.power(C64::new(1.0, 0.0) - iz))
}

/// Both sides of the modular-extension trace-norm bound at `z`, returned as
/// `(‖ρ_φ^{iz} a ρ_ψ^{1-iz}‖_tr, ‖ρ_φ a‖_tr^r ‖a ρ_ψ‖_tr^{1-r})` with
/// `r = -Im z`.
pub fn three_lines_bound(
    phi: &Functional,
    psi: &Functional,
    a: &AlgebraElement,
    z: C64,
) -> Result<(f64, f64)> {
    let value = modular_extension(phi, psi, a, z)?.trace_norm();
    let r = -z.im;
    let left = phi.density().try_mul(a)?.trace_norm();
    let right = a.try_mul(psi.density())?.trace_norm();
    Ok((value, left.powf(r) * right.powf(1.0 - r)))
}

/// `‖ρ_φ^{it+1/2} a ρ_ψ^{-it} − ρ_φ^{1/2} σ_t^{φ,ψ}(a)‖_{L²}`.
///
/// The left side is evaluated as a single complex power at `z = t − i/2`,
/// the right side as a product of the half power and the real-time flow.
pub fn kms_check(
    phi: &Functional,
    psi: &Functional,
    a: &AlgebraElement,
    t: f64,
    tol: &Tolerances,
) -> Result<f64> {
    require_compressed(phi, psi, a, tol)?;
    let z = C64::new(t, -0.5);
    let iz = C64::i() * z;
    let lhs = phi
        .power(iz)
        .try_mul(a)?
        .try_mul(&psi.power(C64::new(0.5, 0.0) - iz))?;
    let flow = relative_modular_flow(phi, psi, a, C64::new(t, 0.0), tol)?;
    let rhs = phi.power(C64::new(0.5, 0.0)).try_mul(&flow)?;
    Ok(lhs.try_sub(&rhs)?.hs_norm())
}

/// `Δ_φ^z ξ = ρ_φ^z ξ ρ_φ^{-z}` with negative powers taken on the support.
pub fn modular_operator_apply(phi: &Functional, xi: &L2Vector, z: C64) -> Result<L2Vector> {
    Ok(L2Vector(
        phi.power(z).try_mul(&xi.0)?.try_mul(&phi.power(-z))?,
    ))
}
