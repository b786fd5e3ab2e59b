//! Numerical tolerances shared across the engine.
//!
//! Defaults are tuned for unit-scale inputs (states of total mass ~1,
//! operators of norm ~1) on the default grids. Every field can be
//! overridden from an experiment configuration.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Eigenvalues below `support_cutoff * max eigenvalue` count as kernel.
    pub support_cutoff: f64,
    pub hermitian: f64,
    pub reconstruct: f64,
    pub power: f64,
    /// Looser: majorization compounds two spectral calculi.
    pub majorize: f64,
    pub kms: f64,
    /// Lemma-ME style three-lines bounds.
    pub bound: f64,
    pub conv: f64,
    pub axiom: f64,
    pub haagerup: f64,
    /// Quadrature-only routes on the λ-grid.
    pub spectral: f64,
    /// Sup-error of boundary objects against closed forms.
    pub catalogue: f64,
    pub corr: f64,
    /// Poles closer than this to Im z in {0, -1/2} are rejected.
    pub pole_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            support_cutoff: 1e-12,
            hermitian: 1e-10,
            reconstruct: 1e-10,
            power: 1e-10,
            majorize: 1e-8,
            kms: 1e-10,
            bound: 1e-10,
            conv: 1e-8,
            axiom: 1e-9,
            haagerup: 1e-5,
            spectral: 1e-6,
            catalogue: 1e-8,
            corr: 1e-5,
            pole_margin: 1e-3,
        }
    }
}

impl Tolerances {
    /// Associativity compounds two convolutions.
    pub fn assoc(&self) -> f64 {
        10.0 * self.conv
    }

    /// Multiply every comparison tolerance by `factor` (the support cutoff
    /// and pole margin are structural and stay fixed).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            support_cutoff: self.support_cutoff,
            pole_margin: self.pole_margin,
            hermitian: self.hermitian * factor,
            reconstruct: self.reconstruct * factor,
            power: self.power * factor,
            majorize: self.majorize * factor,
            kms: self.kms * factor,
            bound: self.bound * factor,
            conv: self.conv * factor,
            axiom: self.axiom * factor,
            haagerup: self.haagerup * factor,
            spectral: self.spectral * factor,
            catalogue: self.catalogue * factor,
            corr: self.corr * factor,
        }
    }
}
