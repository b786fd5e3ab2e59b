//! Dense complex matrices with Hermitian spectral calculus.
//!
//! Complex powers are taken on the support only: eigenvalues at or below
//! the support threshold map to zero, so `ρ^{it}` is a partial isometry
//! whose initial and final projections are the support of `ρ`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;
use crate::C64;

pub type MatrixBlock = DMatrix<C64>;

const EIGEN_MAX_ITER: usize = 10_000;

pub fn identity(n: usize) -> MatrixBlock {
    DMatrix::identity(n, n)
}

pub fn zeros(n: usize) -> MatrixBlock {
    DMatrix::zeros(n, n)
}

/// `E_{ij}` in an `n x n` block.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> MatrixBlock {
    let mut m = zeros(n);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

pub fn diag_real(values: &[f64]) -> MatrixBlock {
    let n = values.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(values[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub fn hermitian_deviation(m: &MatrixBlock) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn max_abs_diff(a: &MatrixBlock, b: &MatrixBlock) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn trace(m: &MatrixBlock) -> C64 {
    m.diagonal().iter().sum()
}

/// `tr(a† b)`.
pub fn hs_inner(a: &MatrixBlock, b: &MatrixBlock) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn hs_norm_sqr(a: &MatrixBlock) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Operator, Hilbert–Schmidt and trace norms of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub op: f64,
    pub hs: f64,
    pub trace: f64,
}

pub fn singular_values(m: &MatrixBlock) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn norms(m: &MatrixBlock) -> Norms {
    let sv = singular_values(m);
    Norms {
        op: sv.first().copied().unwrap_or(0.0),
        hs: sv.iter().map(|s| s * s).sum::<f64>().sqrt(),
        trace: sv.iter().sum(),
    }
}

pub fn op_norm(m: &MatrixBlock) -> f64 {
    norms(m).op
}

pub fn trace_norm(m: &MatrixBlock) -> f64 {
    norms(m).trace
}

/// Eigendecomposition `A = U diag(λ) U†` of a Hermitian block.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: MatrixBlock,
    pub support_rank: usize,
    /// Absolute threshold separating support from kernel.
    pub threshold: f64,
}

pub fn eigh(block: &MatrixBlock, tol: &Tolerances) -> Result<SpectralDecomposition> {
    let n = block.nrows();
    if block.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "block is {}x{}, expected square",
            n,
            block.ncols()
        )));
    }
    let deviation = hermitian_deviation(block);
    if deviation > tol.hermitian {
        return Err(Error::NotHermitian { deviation });
    }
    let sym = (block + block.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("Hermitian eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);

    let orth = &eigenvectors.adjoint() * &eigenvectors - identity(n);
    let orth_err = orth.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if orth_err > tol.reconstruct {
        return Err(Error::NumericalFailure(format!(
            "eigenvectors not orthonormal (error {orth_err:.3e})"
        )));
    }

    let max = eigenvalues.last().copied().unwrap_or(0.0);
    let threshold = if max > 0.0 {
        tol.support_cutoff * max
    } else {
        0.0
    };
    let support_rank = eigenvalues
        .iter()
        .filter(|&&l| l > threshold && max > 0.0)
        .count();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        support_rank,
        threshold,
    })
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn on_support(&self, k: usize) -> bool {
        self.eigenvalues[k] > self.threshold && self.support_rank > 0
    }

    /// `U diag(g(λ_k)) U†` where `g` is only consulted on the support.
    pub fn apply_on_support(&self, g: impl Fn(f64) -> C64) -> MatrixBlock {
        let n = self.dim();
        let d: Vec<C64> = (0..n)
            .map(|k| {
                if self.on_support(k) {
                    g(self.eigenvalues[k])
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        self.with_diagonal(&d)
    }

    /// `U diag(d) U†`.
    pub fn with_diagonal(&self, d: &[C64]) -> MatrixBlock {
        let u = &self.eigenvectors;
        let n = self.dim();
        let mut scaled = u.clone();
        for j in 0..n {
            for i in 0..n {
                scaled[(i, j)] *= d[j];
            }
        }
        scaled * u.adjoint()
    }

    /// Diagonal of `ρ^z` in the eigenbasis.
    pub fn power_diagonal(&self, z: C64) -> Vec<C64> {
        (0..self.dim())
            .map(|k| {
                if self.on_support(k) {
                    (z * self.eigenvalues[k].ln()).exp()
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    /// `ρ^z` on the support.
    pub fn power(&self, z: C64) -> MatrixBlock {
        self.with_diagonal(&self.power_diagonal(z))
    }

    pub fn support_projection(&self) -> MatrixBlock {
        self.apply_on_support(|_| C64::new(1.0, 0.0))
    }

    pub fn reconstruct(&self) -> MatrixBlock {
        let d: Vec<C64> = self.eigenvalues.iter().map(|&l| C64::new(l, 0.0)).collect();
        self.with_diagonal(&d)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Fails when an eigenvalue is significantly negative.
    pub fn check_psd(&self, tol: &Tolerances) -> Result<()> {
        let min = self.min_eigenvalue();
        let floor = -tol.support_cutoff * self.max_eigenvalue().abs().max(f64::MIN_POSITIVE);
        if min < floor {
            Err(Error::NotPsd {
                min_eigenvalue: min,
            })
        } else {
            Ok(())
        }
    }
}

/// `ρ^z` for a PSD block, on its support.
pub fn complex_power(rho: &MatrixBlock, z: C64, tol: &Tolerances) -> Result<MatrixBlock> {
    let spec = eigh(rho, tol)?;
    spec.check_psd(tol)?;
    Ok(spec.power(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigh_diagonal_and_zero() {
        let tol = Tolerances::default();
        let d = eigh(&diag_real(&[3.0, 1.0]), &tol).unwrap();
        assert_eq!(d.support_rank, 2);
        assert!((d.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((d.eigenvalues[1] - 3.0).abs() < 1e-14);

        let z = eigh(&zeros(2), &tol).unwrap();
        assert_eq!(z.eigenvalues, vec![0.0, 0.0]);
        assert_eq!(z.support_rank, 0);
    }

    #[test]
    fn eigh_matches_characteristic_polynomial() {
        // λ² − 4λ + 3 = 0
        let m =
            DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        let d = eigh(&m, &Tolerances::default()).unwrap();
        let roots = [2.0 - 1.0, 2.0 + 1.0];
        for (l, r) in d.eigenvalues.iter().zip(roots) {
            assert!((l - r).abs() < 1e-13);
        }
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m =
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(
            eigh(&m, &Tolerances::default()),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn complex_power_examples() {
        let tol = Tolerances::default();
        let p = complex_power(&identity(2), c(0.5, 2.0), &tol).unwrap();
        assert!(max_abs_diff(&p, &identity(2)) < 1e-14);

        let p = complex_power(&diag_real(&[4.0, 0.0]), c(0.5, 0.0), &tol).unwrap();
        assert!(max_abs_diff(&p, &diag_real(&[2.0, 0.0])) < 1e-14);

        let p = complex_power(&diag_real(&[0.75, 0.25]), c(0.0, 1.0), &tol).unwrap();
        let expect0 = (c(0.0, 1.0) * 0.75f64.ln()).exp();
        let expect1 = (c(0.0, 1.0) * 0.25f64.ln()).exp();
        assert!((p[(0, 0)] - expect0).norm() < 1e-14);
        assert!((p[(1, 1)] - expect1).norm() < 1e-14);
        assert!(p[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn complex_power_rejects_negative_spectrum() {
        let r = complex_power(
            &diag_real(&[1.0, -0.5]),
            c(0.5, 0.0),
            &Tolerances::default(),
        );
        assert!(matches!(r, Err(Error::NotPsd { .. })));
    }

    #[test]
    fn norms_examples() {
        let n = norms(&identity(2));
        assert!((n.op - 1.0).abs() < 1e-14);
        assert!((n.hs - 2f64.sqrt()).abs() < 1e-14);
        assert!((n.trace - 2.0).abs() < 1e-14);

        let n = norms(&diag_real(&[3.0, -4.0]));
        assert!((n.op - 4.0).abs() < 1e-13);
        assert!((n.hs - 5.0).abs() < 1e-13);
        assert!((n.trace - 7.0).abs() < 1e-13);

        let s = 0.5f64.sqrt();
        let u = DMatrix::from_column_slice(2, 1, &[c(s, 0.0), c(0.0, s)]);
        let n = norms(&(&u * u.adjoint()));
        assert!(
            (n.op - 1.0).abs() < 1e-13
                && (n.hs - 1.0).abs() < 1e-13
                && (n.trace - 1.0).abs() < 1e-13
        );
    }
}
