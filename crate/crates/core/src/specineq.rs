//! Discrete constants of the spectral inequalities
//!
//! ```text
//! ‖Π_Λ u‖_∞ ≤ C(Λ, ω) ‖1_ω Π_Λ u‖_{L¹}
//! ```
//!
//! On a grid the spectral subspace is finite dimensional, so the best constant
//! is the maximum over cells `i` of the linear program
//!
//! ```text
//! maximize (E c)_i   subject to   Σ_{j ∈ ω} w_j |(E c)_j| ≤ 1,
//! ```
//!
//! where the columns of `E` are the retained modes. The constant is infinite
//! exactly when the restriction of the subspace to ω loses rank.

use std::fmt;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::doubling::{DoubleDomain, ExtendedBasis};
use crate::error::{invalid, Error, Result};
use crate::grid::ControlRegion;
use crate::operators::EigenBasis;
use crate::spectral::SpectralCutoff;

/// Singular values of the ω-restricted mode matrix below this are zero.
pub const RANK_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMethod {
    #[serde(rename = "exact-lp")]
    ExactLp,
    #[serde(rename = "sigma-min-l2")]
    SigmaMinL2,
    #[serde(rename = "randomized-lower")]
    RandomizedLower,
}

impl fmt::Display for EstimateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ExactLp => "exact-lp",
            Self::SigmaMinL2 => "sigma-min-l2",
            Self::RandomizedLower => "randomized-lower",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConstantEstimate {
    pub lambda: f64,
    pub mode_count: usize,
    pub region_measure: f64,
    /// `f64::INFINITY` when the restriction to ω is rank deficient.
    pub constant: f64,
    pub method: EstimateMethod,
    /// Mode coefficients of an extremal (or best sampled) function.
    pub certificate: Option<Vec<f64>>,
}

impl SpectralConstantEstimate {
    pub fn is_finite(&self) -> bool {
        self.constant.is_finite()
    }
}

/// Rows of the leading `count` modes restricted to the region, scaled by
/// `sqrt(w_j)`.
fn restricted_scaled(modes: &DMatrix<f64>, weights: &[f64], cells: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(cells.len(), modes.ncols(), |r, k| {
        modes[(cells[r], k)] * weights[cells[r]].sqrt()
    })
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() < m.ncols() {
        return 0.0;
    }
    // Singular values of the triangular factor; squaring into a Gram matrix
    // would lose everything below √ε.
    let r = m.clone().qr().r();
    r.singular_values().min()
}

/// `‖E c‖_∞ / Σ_ω w |E c|` for explicit coefficients.
pub fn certificate_ratio(
    modes: &DMatrix<f64>,
    weights: &[f64],
    region: &ControlRegion,
    coeffs: &[f64],
) -> f64 {
    let field = modes * DVector::from_column_slice(coeffs);
    let sup = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l1: f64 = region
        .cells()
        .into_iter()
        .map(|j| weights[j] * field[j].abs())
        .sum();
    if l1 == 0.0 {
        f64::INFINITY
    } else {
        sup / l1
    }
}

fn leading_modes(basis: &EigenBasis, cutoff: &SpectralCutoff) -> Result<DMatrix<f64>> {
    let count = cutoff.count.min(basis.len());
    if count == 0 {
        return invalid(format!("cutoff Λ = {} keeps no modes", cutoff.lambda));
    }
    Ok(basis.vectors().columns(0, count).into_owned())
}

/// Exact discrete constant by one linear program per target cell.
pub fn estimate_constant_lp(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
) -> Result<SpectralConstantEstimate> {
    let modes = leading_modes(basis, cutoff)?;
    lp_constant(&modes, basis.weights(), region, cutoff.lambda)
}

fn lp_constant(
    modes: &DMatrix<f64>,
    weights: &[f64],
    region: &ControlRegion,
    lambda: f64,
) -> Result<SpectralConstantEstimate> {
    if region.n() != modes.nrows() {
        return invalid("region and basis live on different grids");
    }
    let k = modes.ncols();
    let cells = region.cells();
    let mut estimate = SpectralConstantEstimate {
        lambda,
        mode_count: k,
        region_measure: region.measure(),
        constant: f64::INFINITY,
        method: EstimateMethod::ExactLp,
        certificate: None,
    };
    let scaled = restricted_scaled(modes, weights, &cells);
    if smallest_singular_value(&scaled) < RANK_TOLERANCE {
        return Ok(estimate);
    }

    // Work with ω-weights normalized to sum 1; the constant is rescaled at the end.
    let total: f64 = cells.iter().map(|&j| weights[j]).sum();
    let wn: Vec<f64> = cells.iter().map(|&j| weights[j] / total).collect();
    let e_omega = DMatrix::from_fn(cells.len(), k, |r, c| modes[(cells[r], c)]);

    // Orthonormalize the restriction, Ŵ^{1/2} E_ω = Q R. In the variables
    // d = R c the budget reads Σ √ŵ |Q d| ≤ 1 and the target row becomes
    // m̃ = R⁻ᵀ m_i, so the LP sees well-conditioned equality rows and all the
    // ill-conditioning sits in one vector.
    let sq: Vec<f64> = wn.iter().map(|w| w.sqrt()).collect();
    let qr = DMatrix::from_fn(cells.len(), k, |r, c| sq[r] * e_omega[(r, c)]).qr();
    let q = qr.q();
    let rt = qr.r().transpose();
    let targets = rt
        .solve_lower_triangular(&modes.transpose())
        .ok_or_else(|| Error::Numerical("restriction has a zero pivot".into()))?; // K × cells
                                                                                  // Dual-feasible upper bound per target: u = Q m̃ scaled back by √ŵ gives
                                                                                  // (E c)_i ≤ ‖u‖_∞ whenever Σ ŵ |E_ω c| ≤ 1.
    let mut order: Vec<(usize, f64)> = (0..modes.nrows())
        .map(|i| {
            let u = &q * targets.column(i);
            let bound = u
                .iter()
                .zip(&sq)
                .map(|(v, s)| (v / s).abs())
                .fold(0.0, f64::max);
            (i, bound / total)
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut best = 0.0f64;
    let mut best_coeffs: Option<Vec<f64>> = None;
    let mut best_lp = 0.0f64;
    for (target, bound) in order {
        if bound <= best.max(best_lp) * (1.0 + 1e-12) {
            break;
        }
        let row: Vec<f64> = (0..k).map(|col| modes[(target, col)]).collect();
        let (value, z) = solve_target_lp(&q, &sq, targets.column(target).as_slice(), target)?;
        best_lp = best_lp.max(value / total);
        if let Some(candidate) = polish_vertex(&e_omega, &row, &z) {
            let ratio = certificate_ratio(modes, weights, region, &candidate);
            if ratio.is_finite() && ratio > best {
                best = ratio;
                best_coeffs = Some(candidate);
            }
        }
    }
    // The polished certificate is evaluated exactly; the simplex value carries
    // roundoff and only stands in when no matching vertex was recovered.
    if best < best_lp * (1.0 - 1e-6) {
        estimate.constant = best_lp;
    } else {
        estimate.constant = best;
    }
    estimate.certificate = best_coeffs;
    Ok(estimate)
}

/// Dual of the per-target program in orthonormal variables: maximize `s`
/// subject to `Σ_j √ŵ_j Q_jk z_j = s m̂_k` with `z ∈ [-1, 1]^ω` and
/// `m̂ = m̃ / ‖m̃‖`. The primal optimum is `‖m̃‖ / s`. Only `K` equality rows,
/// so the size barely depends on `|ω|`.
fn solve_target_lp(
    q: &DMatrix<f64>,
    sq: &[f64],
    target_row: &[f64],
    target: usize,
) -> Result<(f64, Vec<f64>)> {
    let scale = target_row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok((0.0, vec![0.0; sq.len()]));
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let s = lp.add_var(1.0, (0.0, f64::INFINITY));
    let z: Vec<_> = (0..sq.len())
        .map(|_| lp.add_var(0.0, (-1.0, 1.0)))
        .collect();
    for (col, &m) in target_row.iter().enumerate() {
        let mut eq: Vec<_> = z
            .iter()
            .enumerate()
            .map(|(r, &v)| (v, sq[r] * q[(r, col)]))
            .filter(|(_, a)| *a != 0.0)
            .collect();
        eq.push((s, -m / scale));
        lp.add_constraint(eq, ComparisonOp::Eq, 0.0);
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::Numerical(format!("LP for target cell {target} failed: {e:?}")))?
        .into_solution()
        .map_err(|_| Error::Numerical(format!("LP for target cell {target} was interrupted")))?;
    let sv = solution.var_value(s);
    if sv <= 0.0 {
        return Err(Error::Numerical(format!(
            "LP for target cell {target} is unbounded"
        )));
    }
    Ok((
        scale / sv,
        z.iter().map(|&v| solution.var_value(v)).collect(),
    ))
}

/// Recovers the primal extremal coefficients from the dual vertex: they vanish
/// on the cells where `z` is strictly inside the box.
fn polish_vertex(e_omega: &DMatrix<f64>, row: &[f64], z: &[f64]) -> Option<Vec<f64>> {
    let k = e_omega.ncols();
    let target = DVector::from_column_slice(row);
    let interior: Vec<usize> = (0..z.len()).filter(|&r| z[r].abs() < 1.0 - 1e-7).collect();
    let mut c = if k == 1 || interior.is_empty() {
        target.clone()
    } else {
        let ez = DMatrix::from_fn(interior.len(), k, |r, c| e_omega[(interior[r], c)]);
        let eig = SymmetricEigen::new(ez.tr_mul(&ez));
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let null: Vec<usize> = (0..k)
            .filter(|&i| eig.eigenvalues[i] <= 1e-12 * scale)
            .collect();
        if null.len() <= 1 {
            let (imin, _) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))?;
            eig.eigenvectors.column(imin).into_owned()
        } else {
            // Degenerate vertex: project the target row onto the null space.
            let mut v = DVector::zeros(k);
            for &i in &null {
                let q = eig.eigenvectors.column(i);
                v += q * q.dot(&target);
            }
            v
        }
    };
    if c.dot(&target) < 0.0 {
        c.neg_mut();
    }
    let norm = c.amax();
    if norm == 0.0 {
        return None;
    }
    Some((c / norm).as_slice().to_vec())
}

/// `1 / σ_min(W_ω^{1/2} E)`: the L² → L² analogue of the inequality.
pub fn estimate_constant_l2(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
) -> Result<SpectralConstantEstimate> {
    let modes = leading_modes(basis, cutoff)?;
    if region.n() != modes.nrows() {
        return invalid("region and basis live on different grids");
    }
    let scaled = restricted_scaled(&modes, basis.weights(), &region.cells());
    let smin = if scaled.nrows() < scaled.ncols() {
        0.0
    } else {
        scaled
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    Ok(SpectralConstantEstimate {
        lambda: cutoff.lambda,
        mode_count: modes.ncols(),
        region_measure: region.measure(),
        constant: if smin < RANK_TOLERANCE {
            f64::INFINITY
        } else {
            1.0 / smin
        },
        method: EstimateMethod::SigmaMinL2,
        certificate: None,
    })
}

/// Lower bound from random Gaussian coefficient vectors.
pub fn estimate_constant_random(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
    samples: usize,
    seed: u64,
) -> Result<SpectralConstantEstimate> {
    let modes = leading_modes(basis, cutoff)?;
    if region.n() != modes.nrows() {
        return invalid("region and basis live on different grids");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0;
    let mut cert = None;
    for _ in 0..samples {
        let c: Vec<f64> = (0..modes.ncols())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let r = certificate_ratio(&modes, basis.weights(), region, &c);
        if r > best {
            best = r;
            cert = Some(c);
        }
    }
    Ok(SpectralConstantEstimate {
        lambda: cutoff.lambda,
        mode_count: modes.ncols(),
        region_measure: region.measure(),
        constant: best,
        method: EstimateMethod::RandomizedLower,
        certificate: cert,
    })
}

/// Constant of the simultaneous inequality
///
/// ```text
/// max(‖Π^D u + Π^N v‖_∞, ‖Π^D u − Π^N v‖_∞) ≤ C ‖1_ω (Π^D u + Π^N v)‖_{L¹}
/// ```
///
/// computed as the exact LP constant on the doubled domain, over the odd and
/// even extensions of all base modes with frequency `≤ lambda`, observed on
/// `ω × {+1}`.
pub fn simultaneous_constant(
    dd: &DoubleDomain,
    extended: &ExtendedBasis,
    lambda: f64,
    region: &ControlRegion,
) -> Result<SpectralConstantEstimate> {
    let lifted = dd.lift_region(region)?;
    let cutoff = SpectralCutoff::new(extended.basis(), lambda);
    let mut est = estimate_constant_lp(extended.basis(), &cutoff, &lifted)?;
    est.region_measure = region.measure();
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    #[serde(rename = "logC")]
    pub log_c: f64,
    pub slope: f64,
    pub residual: f64,
}

/// Least-squares fit `log C ≈ log_c + slope · Λ`; `residual` is the RMS misfit.
pub fn fit_exponential(estimates: &[SpectralConstantEstimate]) -> Result<ExponentialFit> {
    if estimates.len() < 3 {
        return invalid(format!(
            "need at least 3 estimates, got {}",
            estimates.len()
        ));
    }
    if estimates
        .iter()
        .any(|e| !(e.constant.is_finite() && e.constant > 0.0))
    {
        return invalid("cannot fit infinite or non-positive constants");
    }
    let xs: Vec<f64> = estimates.iter().map(|e| e.lambda).collect();
    let ys: Vec<f64> = estimates.iter().map(|e| e.constant.ln()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return invalid("fit needs distinct Λ values");
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let log_c = ybar - slope * xbar;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - log_c - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(ExponentialFit {
        log_c,
        slope,
        residual,
    })
}
