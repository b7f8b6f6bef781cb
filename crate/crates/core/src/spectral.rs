//! Spectral truncation `Π_Λ` and the discrete norms used in the inequalities.

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::grid::ControlRegion;
use crate::operators::EigenBasis;

/// Frequency threshold Λ together with the number of modes it keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCutoff {
    pub lambda: f64,
    pub count: usize,
}

impl SpectralCutoff {
    /// Keeps every mode with `ν_k ≤ lambda`. Frequencies, not eigenvalues, are
    /// compared with Λ (the operator is `-Δ e = λ² e`).
    pub fn new(basis: &EigenBasis, lambda: f64) -> Self {
        Self {
            lambda,
            count: basis.count_up_to(lambda),
        }
    }

    /// Cutoff at the frequency of mode `k` (so `count ≥ k + 1`, more if
    /// `ν_k` is repeated).
    pub fn at_mode(basis: &EigenBasis, k: usize) -> Self {
        Self::new(basis, basis.frequencies()[k])
    }

    pub fn full(basis: &EigenBasis) -> Self {
        Self {
            lambda: basis.max_frequency(),
            count: basis.len(),
        }
    }
}

/// `Σ_{ν_k ≤ Λ} ⟨e_k, u⟩ e_k`.
pub fn project(basis: &EigenBasis, cutoff: &SpectralCutoff, u: &[f64]) -> Result<Vec<f64>> {
    let count = cutoff.count.min(basis.len());
    let coeffs = basis.coefficients(u)?;
    let kept = DVector::from_iterator(count, coeffs.iter().take(count).copied());
    if count == 0 {
        return Ok(vec![0.0; u.len()]);
    }
    Ok(basis.synthesize(&kept))
}

pub fn sup_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `Σ_{i ∈ ω} w_i |u_i|`.
pub fn l1_norm_on(u: &[f64], weights: &[f64], region: &ControlRegion) -> Result<f64> {
    if u.len() != weights.len() || region.n() != u.len() {
        return invalid(format!(
            "field ({}), weights ({}) and region ({}) sizes differ",
            u.len(),
            weights.len(),
            region.n()
        ));
    }
    Ok(u.iter()
        .zip(weights)
        .zip(region.mask())
        .filter(|(_, &m)| m)
        .map(|((v, w), _)| w * v.abs())
        .sum())
}

/// `(Σ w_i u_i²)^{1/2}`.
pub fn l2_norm(u: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), weights.len());
    u.iter()
        .zip(weights)
        .map(|(v, w)| w * v * v)
        .sum::<f64>()
        .sqrt()
}
