//! The finite-dimensional W*-algebra `M = ⊕_k M_{n_k}(ℂ)`, its positive
//! normal functionals and finite weights.
//!
//! In finite dimensions every element is finitely supported, so the
//! finitely supported subalgebra coincides with `M` and is not modelled
//! separately.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, MatrixBlock, SpectralDecomposition};
use crate::tolerance::Tolerances;
use crate::C64;

/// Block dimensions `n_k` of `⊕_k M_{n_k}(ℂ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FiniteAlgebra {
    blocks: Vec<usize>,
}

impl FiniteAlgebra {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput(
                "algebra needs at least one block".into(),
            ));
        }
        if blocks.contains(&0) {
            return Err(Error::InvalidInput(
                "block dimensions must be positive".into(),
            ));
        }
        Ok(Self { blocks })
    }

    /// A single full matrix algebra `M_n(ℂ)`.
    pub fn full(n: usize) -> Self {
        Self::new(vec![n]).expect("n must be positive")
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    /// Complex dimension `Σ n_k²`.
    pub fn dimension(&self) -> usize {
        self.blocks.iter().map(|n| n * n).sum()
    }
}

impl TryFrom<Vec<usize>> for FiniteAlgebra {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FiniteAlgebra> for Vec<usize> {
    fn from(a: FiniteAlgebra) -> Self {
        a.blocks
    }
}

/// An element of `M`: one square matrix per block.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    blocks: Vec<MatrixBlock>,
}

impl AlgebraElement {
    pub fn from_blocks(blocks: Vec<MatrixBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput(
                "element needs at least one block".into(),
            ));
        }
        for b in &blocks {
            if b.nrows() != b.ncols() || b.nrows() == 0 {
                return Err(Error::InvalidInput(format!(
                    "block is {}x{}, expected non-empty square",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self { blocks })
    }

    /// Single-block element.
    pub fn from_matrix(m: MatrixBlock) -> Result<Self> {
        Self::from_blocks(vec![m])
    }

    pub fn zero(alg: &FiniteAlgebra) -> Self {
        Self {
            blocks: alg.blocks.iter().map(|&n| matrix::zeros(n)).collect(),
        }
    }

    pub fn identity(alg: &FiniteAlgebra) -> Self {
        Self {
            blocks: alg.blocks.iter().map(|&n| matrix::identity(n)).collect(),
        }
    }

    /// `E_{ij}` inside block `block`.
    pub fn matrix_unit(alg: &FiniteAlgebra, block: usize, i: usize, j: usize) -> Self {
        let mut e = Self::zero(alg);
        e.blocks[block][(i, j)] = C64::new(1.0, 0.0);
        e
    }

    /// All matrix units, block by block.
    pub fn matrix_units(alg: &FiniteAlgebra) -> Vec<Self> {
        let mut out = Vec::with_capacity(alg.dimension());
        for (k, &n) in alg.blocks.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    out.push(Self::matrix_unit(alg, k, i, j));
                }
            }
        }
        out
    }

    pub fn algebra(&self) -> FiniteAlgebra {
        FiniteAlgebra {
            blocks: self.dims(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn blocks(&self) -> &[MatrixBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [MatrixBlock] {
        &mut self.blocks
    }

    pub fn into_blocks(self) -> Vec<MatrixBlock> {
        self.blocks
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.blocks.len() != other.blocks.len()
            || self
                .blocks
                .iter()
                .zip(&other.blocks)
                .any(|(a, b)| a.nrows() != b.nrows())
        {
            return Err(Error::AlgebraMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(&MatrixBlock) -> MatrixBlock) -> Self {
        Self {
            blocks: self.blocks.iter().map(f).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &Self,
        f: impl Fn(&MatrixBlock, &MatrixBlock) -> MatrixBlock,
    ) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn adjoint(&self) -> Self {
        self.map(|b| b.adjoint())
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|b| b * s)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `Σ_k tr(x_k)`.
    pub fn trace(&self) -> C64 {
        self.blocks.iter().map(matrix::trace).sum()
    }

    /// `Σ_k tr(x_k† y_k)`.
    pub fn hs_inner(&self, other: &Self) -> Result<C64> {
        self.check_compatible(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| matrix::hs_inner(a, b))
            .sum())
    }

    pub fn op_norm(&self) -> f64 {
        self.blocks.iter().map(matrix::op_norm).fold(0.0, f64::max)
    }

    pub fn hs_norm(&self) -> f64 {
        self.hs_norm_sqr().sqrt()
    }

    pub fn hs_norm_sqr(&self) -> f64 {
        self.blocks.iter().map(matrix::hs_norm_sqr).sum()
    }

    pub fn trace_norm(&self) -> f64 {
        self.blocks.iter().map(matrix::trace_norm).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| matrix::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.blocks
            .iter()
            .map(matrix::hermitian_deviation)
            .fold(0.0, f64::max)
    }

    /// Hermitian spectral decomposition of each block.
    pub fn eigh(&self, tol: &Tolerances) -> Result<Vec<SpectralDecomposition>> {
        self.blocks.iter().map(|b| matrix::eigh(b, tol)).collect()
    }
}

impl Add for &AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, rhs: Self) -> AlgebraElement {
        self.try_add(rhs).expect("algebra mismatch in +")
    }
}

impl Sub for &AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, rhs: Self) -> AlgebraElement {
        self.try_sub(rhs).expect("algebra mismatch in -")
    }
}

impl Mul for &AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, rhs: Self) -> AlgebraElement {
        self.try_mul(rhs).expect("algebra mismatch in *")
    }
}

impl Mul<&AlgebraElement> for AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, rhs: &AlgebraElement) -> AlgebraElement {
        &self * rhs
    }
}

impl Mul<C64> for &AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, rhs: C64) -> AlgebraElement {
        self.scale(rhs)
    }
}

/// A positive normal functional `φ(x) = Σ_k tr(ρ_k x_k)`, stored with the
/// spectral decomposition of its density so complex powers are cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    density: AlgebraElement,
    spectra: Vec<SpectralDecomposition>,
}

impl Functional {
    pub fn new(density: AlgebraElement, tol: &Tolerances) -> Result<Self> {
        let spectra = density.eigh(tol)?;
        for s in &spectra {
            s.check_psd(tol)?;
        }
        // Store the Hermitian part so evaluations are exactly real on
        // Hermitian arguments.
        let density = density.map(|b| (b + b.adjoint()) * C64::new(0.5, 0.0));
        Ok(Self { density, spectra })
    }

    /// State with diagonal density `diag(values)` on `M_n`.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(
            AlgebraElement::from_matrix(matrix::diag_real(values))?,
            &Tolerances::default(),
        )
    }

    /// Diagonal density on a direct sum, `values` listed block by block.
    pub fn diagonal_in(alg: &FiniteAlgebra, values: &[f64]) -> Result<Self> {
        let dims = alg.blocks();
        let total: usize = dims.iter().sum();
        if values.len() != total {
            return Err(Error::InvalidInput(format!(
                "{} diagonal entries for an algebra of dimension {total}",
                values.len()
            )));
        }
        let mut offset = 0;
        let blocks = dims
            .iter()
            .map(|&n| {
                let b = matrix::diag_real(&values[offset..offset + n]);
                offset += n;
                b
            })
            .collect();
        Self::new(AlgebraElement::from_blocks(blocks)?, &Tolerances::default())
    }

    /// Normalized trace `tr(·)/n` on `M_n`.
    pub fn normalized_trace(n: usize) -> Self {
        Self::diagonal(&vec![1.0 / n as f64; n]).expect("valid density")
    }

    pub fn zero(alg: &FiniteAlgebra) -> Self {
        Self::new(AlgebraElement::zero(alg), &Tolerances::default()).expect("zero is PSD")
    }

    pub fn density(&self) -> &AlgebraElement {
        &self.density
    }

    pub fn spectra(&self) -> &[SpectralDecomposition] {
        &self.spectra
    }

    pub fn algebra(&self) -> FiniteAlgebra {
        self.density.algebra()
    }

    /// `φ(1)`.
    pub fn total_mass(&self) -> f64 {
        self.density.trace().re
    }

    pub fn evaluate(&self, x: &AlgebraElement) -> Result<C64> {
        Ok(self.density.try_mul(x)?.trace())
    }

    /// `ρ^z` blockwise, on the support.
    pub fn power(&self, z: C64) -> AlgebraElement {
        AlgebraElement {
            blocks: self.spectra.iter().map(|s| s.power(z)).collect(),
        }
    }

    /// `ρ^{it}` for real `t`.
    pub fn unitary_power(&self, t: f64) -> AlgebraElement {
        self.power(C64::new(0.0, t))
    }

    /// The support projection `[φ]`.
    pub fn support(&self) -> AlgebraElement {
        AlgebraElement {
            blocks: self
                .spectra
                .iter()
                .map(|s| s.support_projection())
                .collect(),
        }
    }

    pub fn support_rank(&self) -> usize {
        self.spectra.iter().map(|s| s.support_rank).sum()
    }

    pub fn is_faithful(&self) -> bool {
        self.spectra.iter().all(|s| s.support_rank == s.dim())
    }

    pub fn require_faithful(&self) -> Result<()> {
        if self.is_faithful() {
            Ok(())
        } else {
            Err(Error::NotFaithful)
        }
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if s < 0.0 {
            return Err(Error::InvalidInput(
                "negative scaling of a positive functional".into(),
            ));
        }
        Self::new(self.density.scale(C64::new(s, 0.0)), &Tolerances::default())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        Self::new(
            self.density.try_add(&other.density)?,
            &Tolerances::default(),
        )
    }

    /// `aφa†`, i.e. `x ↦ φ(a† x a)`, with density `a ρ a†`.
    pub fn conjugate_by(&self, a: &AlgebraElement) -> Result<Self> {
        let d = a.try_mul(&self.density)?.try_mul(&a.adjoint())?;
        Self::new(d, &Tolerances::default())
    }

    /// `‖[φ] a [ψ] − a‖_op`.
    pub fn compression_residual(&self, a: &AlgebraElement, right: &Functional) -> Result<f64> {
        let c = self.support().try_mul(a)?.try_mul(&right.support())?;
        Ok(c.try_sub(a)?.op_norm())
    }
}

/// A finite orthogonal sum of functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    summands: Vec<Functional>,
}

impl Weight {
    pub fn new(summands: Vec<Functional>, tol: &Tolerances) -> Result<Self> {
        let Some(first) = summands.first() else {
            return Err(Error::InvalidInput(
                "weight needs at least one summand".into(),
            ));
        };
        let alg = first.algebra();
        let supports: Vec<AlgebraElement> = summands.iter().map(|s| s.support()).collect();
        for s in &summands {
            if s.algebra() != alg {
                return Err(Error::AlgebraMismatch {
                    expected: alg.blocks().to_vec(),
                    found: s.algebra().blocks().to_vec(),
                });
            }
        }
        for i in 0..supports.len() {
            for j in (i + 1)..supports.len() {
                let overlap = supports[i].try_mul(&supports[j])?.op_norm();
                if overlap > tol.power {
                    return Err(Error::InvalidInput(format!(
                        "summands {i} and {j} have overlapping supports ({overlap:.3e})"
                    )));
                }
            }
        }
        Ok(Self { summands })
    }

    pub fn summands(&self) -> &[Functional] {
        &self.summands
    }

    pub fn algebra(&self) -> FiniteAlgebra {
        self.summands[0].algebra()
    }

    /// `Σ_j [ω_j]`.
    pub fn support(&self) -> AlgebraElement {
        self.summands
            .iter()
            .map(|s| s.support())
            .reduce(|a, b| &a + &b)
            .expect("non-empty")
    }

    pub fn is_faithful(&self, tol: &Tolerances) -> bool {
        let one = AlgebraElement::identity(&self.algebra());
        self.support().max_abs_diff(&one) <= tol.power
    }

    pub fn total_mass(&self) -> f64 {
        self.summands.iter().map(|s| s.total_mass()).sum()
    }

    pub fn evaluate(&self, x: &AlgebraElement) -> Result<C64> {
        self.summands.iter().map(|s| s.evaluate(x)).sum()
    }

    /// The single functional with the summed density.
    pub fn as_functional(&self) -> Result<Functional> {
        let d = self
            .summands
            .iter()
            .map(|s| s.density().clone())
            .reduce(|a, b| &a + &b)
            .expect("non-empty");
        Functional::new(d, &Tolerances::default())
    }
}

impl From<Functional> for Weight {
    fn from(f: Functional) -> Self {
        Self { summands: vec![f] }
    }
}

/// Outcome of the majorization test `φ ≤ ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Majorization {
    /// `ψ − φ` is PSD.
    pub holds: bool,
    /// `c = ρ_φ^{1/2} ρ_ψ^{-1/2}` with `‖c‖ ≤ 1` and `φ^{1/2} = c ψ^{1/2}`,
    /// present when the test holds.
    pub witness: Option<AlgebraElement>,
}

/// The candidate intertwiner `c = ρ_φ^{1/2} ρ_ψ^{-1/2}` with its norm and
/// the reconstruction error `‖ρ_φ^{1/2} − c ρ_ψ^{1/2}‖_HS`.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorizationWitness {
    pub c: AlgebraElement,
    pub op_norm: f64,
    pub residual: f64,
}

impl MajorizationWitness {
    pub fn is_valid(&self, tol: &Tolerances) -> bool {
        self.op_norm <= 1.0 + tol.majorize && self.residual <= tol.majorize
    }
}

pub fn majorization_witness(phi: &Functional, psi: &Functional) -> Result<MajorizationWitness> {
    phi.density.check_compatible(&psi.density)?;
    let half = C64::new(0.5, 0.0);
    let phi_half = phi.power(half);
    let c = phi_half.try_mul(&psi.power(-half))?;
    let residual = phi_half.try_sub(&c.try_mul(&psi.power(half))?)?.hs_norm();
    Ok(MajorizationWitness {
        op_norm: c.op_norm(),
        c,
        residual,
    })
}

pub fn majorization_check(
    phi: &Functional,
    psi: &Functional,
    tol: &Tolerances,
) -> Result<Majorization> {
    let diff = psi.density.try_sub(&phi.density)?;
    let min_eig = diff
        .eigh(tol)?
        .iter()
        .map(|s| s.min_eigenvalue())
        .fold(f64::INFINITY, f64::min);
    let holds = min_eig >= -tol.majorize;
    let witness = if holds {
        Some(majorization_witness(phi, psi)?.c)
    } else {
        None
    };
    Ok(Majorization { holds, witness })
}

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `n x m` matrix of standard complex Gaussians.
pub fn gaussian_matrix<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> MatrixBlock {
    DMatrix::from_fn(n, m, |_, _| gaussian_c64(rng))
}

/// Random density matrix via `G G†` with `G` complex Gaussian of `rank`
/// columns per block, normalized to total mass 1.
///
/// Generator version 1; changing the sampling order is a breaking change
/// for seeded reports.
pub fn random_state<R: Rng + ?Sized>(
    alg: &FiniteAlgebra,
    rank: Option<usize>,
    rng: &mut R,
) -> Functional {
    let blocks: Vec<MatrixBlock> = alg
        .blocks
        .iter()
        .map(|&n| {
            let r = rank.unwrap_or(n).clamp(1, n);
            let g = gaussian_matrix(n, r, rng);
            &g * g.adjoint()
        })
        .collect();
    let total: f64 = blocks.iter().map(|b| matrix::trace(b).re).sum();
    let density = AlgebraElement {
        blocks: blocks
            .into_iter()
            .map(|b| b / C64::new(total, 0.0))
            .collect(),
    };
    Functional::new(density, &Tolerances::default()).expect("G G† is PSD")
}

/// Complex Gaussian element scaled to unit operator norm.
pub fn random_element<R: Rng + ?Sized>(alg: &FiniteAlgebra, rng: &mut R) -> AlgebraElement {
    let x = AlgebraElement {
        blocks: alg
            .blocks
            .iter()
            .map(|&n| gaussian_matrix(n, n, rng))
            .collect(),
    };
    let n = x.op_norm();
    x.scale(C64::new(1.0 / n, 0.0))
}

pub fn random_hermitian<R: Rng + ?Sized>(alg: &FiniteAlgebra, rng: &mut R) -> AlgebraElement {
    let x = random_element(alg, rng);
    (&x + &x.adjoint()).scale(C64::new(0.5, 0.0))
}

/// Haar-distributed unitary from the QR factorization of a Gaussian.
pub fn random_unitary<R: Rng + ?Sized>(alg: &FiniteAlgebra, rng: &mut R) -> AlgebraElement {
    AlgebraElement {
        blocks: alg
            .blocks
            .iter()
            .map(|&n| {
                let qr = gaussian_matrix(n, n, rng).qr();
                let (mut q, r) = (qr.q(), qr.r());
                for j in 0..n {
                    let d = r[(j, j)];
                    let phase = if d.norm() > 0.0 {
                        d / d.norm()
                    } else {
                        C64::new(1.0, 0.0)
                    };
                    for i in 0..n {
                        q[(i, j)] *= phase;
                    }
                }
                q
            })
            .collect(),
    }
}

type NestedBlocks = Vec<Vec<Vec<[f64; 2]>>>;

fn blocks_to_nested(blocks: &[MatrixBlock]) -> NestedBlocks {
    blocks
        .iter()
        .map(|b| {
            (0..b.nrows())
                .map(|i| {
                    (0..b.ncols())
                        .map(|j| [b[(i, j)].re, b[(i, j)].im])
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn nested_to_blocks(dims: &[usize], nested: &NestedBlocks) -> Result<Vec<MatrixBlock>> {
    if dims.len() != nested.len() {
        return Err(Error::Serialization(format!(
            "{} block dims but {} matrices",
            dims.len(),
            nested.len()
        )));
    }
    dims.iter()
        .zip(nested)
        .map(|(&n, rows)| {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Serialization(format!("block is not {n}x{n}")));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| {
                C64::new(rows[i][j][0], rows[i][j][1])
            }))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ElementRepr {
    blocks: Vec<usize>,
    values: NestedBlocks,
}

impl Serialize for AlgebraElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ElementRepr {
            blocks: self.dims(),
            values: blocks_to_nested(&self.blocks),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AlgebraElement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ElementRepr::deserialize(d)?;
        let blocks = nested_to_blocks(&r.blocks, &r.values).map_err(serde::de::Error::custom)?;
        AlgebraElement::from_blocks(blocks).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct FunctionalRepr {
    blocks: Vec<usize>,
    density: NestedBlocks,
}

impl Serialize for Functional {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FunctionalRepr {
            blocks: self.density.dims(),
            density: blocks_to_nested(&self.density.blocks),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Functional {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = FunctionalRepr::deserialize(d)?;
        let blocks = nested_to_blocks(&r.blocks, &r.density).map_err(serde::de::Error::custom)?;
        let density = AlgebraElement::from_blocks(blocks).map_err(serde::de::Error::custom)?;
        Functional::new(density, &Tolerances::default()).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state34() -> Functional {
        Functional::diagonal(&[0.75, 0.25]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let phi = state34();
        let alg = phi.algebra();
        let one = AlgebraElement::identity(&alg);
        assert!((phi.evaluate(&one).unwrap() - 1.0).norm() < 1e-15);
        let e11 = AlgebraElement::matrix_unit(&alg, 0, 0, 0);
        assert!((phi.evaluate(&e11).unwrap() - 0.75).norm() < 1e-15);
    }

    #[test]
    fn expectation_is_tracial() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alg = FiniteAlgebra::full(3);
        let phi = random_state(&alg, None, &mut rng);
        let a = random_element(&alg, &mut rng);
        // ⟨aφ⟩ = tr(a ρ), ⟨φa⟩ = tr(ρ a)
        let left = a.try_mul(phi.density()).unwrap().trace();
        let right = phi.density().try_mul(&a).unwrap().trace();
        assert!((left - right).norm() < 1e-12);
        assert!((phi.evaluate(&a).unwrap() - right).norm() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_mismatch() {
        let phi = state34();
        let x = AlgebraElement::identity(&FiniteAlgebra::full(3));
        assert!(matches!(
            phi.evaluate(&x),
            Err(Error::AlgebraMismatch { .. })
        ));
    }

    #[test]
    fn support_examples() {
        let alg = FiniteAlgebra::full(2);
        let s = Functional::normalized_trace(2).support();
        assert!(s.max_abs_diff(&AlgebraElement::identity(&alg)) < 1e-14);
        let s = Functional::diagonal(&[1.0, 0.0]).unwrap().support();
        assert!(s.max_abs_diff(&AlgebraElement::matrix_unit(&alg, 0, 0, 0)) < 1e-14);
    }

    #[test]
    fn rank_one_support_is_span_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alg = FiniteAlgebra::full(3);
        let phi = random_state(&alg, Some(1), &mut rng);
        let u = {
            let e = &phi.spectra()[0];
            e.eigenvectors.column(2).into_owned()
        };
        let proj = AlgebraElement::from_matrix(&u * u.adjoint()).unwrap();
        assert_eq!(phi.support_rank(), 1);
        assert!(phi.support().max_abs_diff(&proj) < 1e-12);
        let p = phi.support();
        let rr = p.try_mul(phi.density()).unwrap().try_mul(&p).unwrap();
        assert!(rr.max_abs_diff(phi.density()) < 1e-12);
    }

    #[test]
    fn support_is_minimal_carrier() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alg = FiniteAlgebra::new(vec![3, 2]).unwrap();
        let phi = random_state(&alg, Some(2), &mut rng);
        let p = phi.support();
        let q = &AlgebraElement::identity(&alg) - &p;
        for e in AlgebraElement::matrix_units(&alg) {
            let v = phi
                .evaluate(&q.try_mul(&e).unwrap().try_mul(&q).unwrap())
                .unwrap();
            assert!(v.norm() < 1e-12);
        }
        // dropping any support direction loses mass: φ(p) = φ(1)
        assert!((phi.evaluate(&p).unwrap().re - phi.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn majorization_examples() {
        let tol = Tolerances::default();
        let psi = state34();
        let m = majorization_check(&psi, &psi, &tol).unwrap();
        assert!(m.holds);
        assert!(m.witness.unwrap().max_abs_diff(&psi.support()) < 1e-12);

        let half = psi.scaled(0.5).unwrap();
        let m = majorization_check(&half, &psi, &tol).unwrap();
        assert!(m.holds);
        let c = m.witness.unwrap();
        assert!((c.op_norm() - 0.5f64.sqrt()).abs() < 1e-12);
        let expect = psi.support().scale(C64::new(0.5f64.sqrt(), 0.0));
        assert!(c.max_abs_diff(&expect) < 1e-12);

        let a = Functional::diagonal(&[1.0, 0.0]).unwrap();
        let b = Functional::diagonal(&[0.0, 1.0]).unwrap();
        let m = majorization_check(&a, &b, &tol).unwrap();
        assert!(!m.holds && m.witness.is_none());
    }

    #[test]
    fn weight_faithfulness() {
        let tol = Tolerances::default();
        let a = Functional::diagonal(&[0.3, 0.0]).unwrap();
        let b = Functional::diagonal(&[0.0, 0.7]).unwrap();
        let w = Weight::new(vec![a.clone(), b], &tol).unwrap();
        assert!(w.is_faithful(&tol));
        assert!((w.total_mass() - 1.0).abs() < 1e-15);
        let w1 = Weight::new(vec![a.clone()], &tol).unwrap();
        assert!(!w1.is_faithful(&tol));
        assert!(Weight::new(vec![a.clone(), a], &tol).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alg = FiniteAlgebra::new(vec![2, 3]).unwrap();
        let phi = random_state(&alg, None, &mut rng);
        let s = serde_json::to_string(&phi).unwrap();
        let back: Functional = serde_json::from_str(&s).unwrap();
        assert_eq!(back.density(), phi.density());
        let x = random_element(&alg, &mut rng);
        let back: AlgebraElement =
            serde_json::from_str(&serde_json::to_string(&x).unwrap()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn json_shape() {
        let v = serde_json::to_value(state34()).unwrap();
        assert_eq!(v["blocks"], serde_json::json!([2]));
        assert_eq!(v["density"][0][0][0], serde_json::json!([0.75, 0.0]));
        let bad = r#"{"blocks":[2],"density":[[[[1,0],[0,0]],[[0,0],[-1,0]]]]}"#;
        assert!(serde_json::from_str::<Functional>(bad).is_err());
    }
}
