//! Null-control synthesis in the eigenbasis.
//!
//! Every control produced here is piecewise constant in time and supported on
//! the cells of a [`ControlRegion`]. In mode coordinates the controlled heat
//! equation reads `ẏ_k = −ν_k² y_k + b_k(t)` with `b_k = ⟨e_k, 1_ω f⟩`, which is
//! integrated exactly over each step.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::ControlRegion;
use crate::operators::EigenBasis;
use crate::spectral::{l2_norm, SpectralCutoff};

/// Largest accepted condition number of a (diagonally scaled) Gramian.
pub const GRAMIAN_CONDITION_LIMIT: f64 = 1e14;

/// Time steps per low-mode control phase.
pub const DEFAULT_STEPS: usize = 64;

/// Relative regularization of the full-spectrum normal equations.
pub const FULL_REGULARIZATION: f64 = 1e-12;

/// Correction sweeps applied on top of each regularized solve.
const TIKHONOV_SWEEPS: usize = 3;

/// Piecewise-constant control: `values[m]` holds on `[times[m], times[m+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    region: ControlRegion,
    cells: Vec<usize>,
    cell_weights: Vec<f64>,
    l2_cost: f64,
}

impl ControlSignal {
    /// `weights` are the full-grid cell weights; only those of region cells are kept.
    pub fn new(
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        region: ControlRegion,
        weights: &[f64],
    ) -> Result<Self> {
        if times.len() < 2 {
            return invalid("a control signal needs at least one time step");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return invalid("control time grid must be finite and strictly increasing");
        }
        if values.len() != times.len() - 1 {
            return invalid(format!(
                "{} value rows for {} time steps",
                values.len(),
                times.len() - 1
            ));
        }
        if weights.len() != region.n() {
            return invalid("weights and region have different sizes");
        }
        let cells = region.cells();
        if values.iter().any(|row| row.len() != cells.len()) {
            return invalid(format!("every value row must have {} entries", cells.len()));
        }
        let cell_weights = cells.iter().map(|&j| weights[j]).collect();
        let mut signal = Self {
            times,
            values,
            region,
            cells,
            cell_weights,
            l2_cost: 0.0,
        };
        signal.l2_cost = signal.recompute_cost();
        Ok(signal)
    }

    pub fn zero(times: Vec<f64>, region: ControlRegion, weights: &[f64]) -> Result<Self> {
        let rows = vec![vec![0.0; region.cell_count()]; times.len().saturating_sub(1)];
        Self::new(times, rows, region, weights)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn region(&self) -> &ControlRegion {
        &self.region
    }

    /// Grid indices of the columns of [`values`](Self::values).
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_weights(&self) -> &[f64] {
        &self.cell_weights
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `(Σ_m Δt_m Σ_j w_j f_mj²)^{1/2}`, cached at construction.
    pub fn l2_cost(&self) -> f64 {
        self.l2_cost
    }

    pub fn recompute_cost(&self) -> f64 {
        self.values
            .iter()
            .zip(self.times.windows(2))
            .map(|(row, t)| {
                (t[1] - t[0])
                    * row
                        .iter()
                        .zip(&self.cell_weights)
                        .map(|(f, w)| w * f * f)
                        .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// The control during step `m` as a field on the whole grid.
    pub fn field(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.region.n()];
        for (&j, &f) in self.cells.iter().zip(&self.values[m]) {
            out[j] = f;
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().all(|&v| v == 0.0)
    }

    /// Same time grid, values multiplied by `factor` and moved to `region` on
    /// another grid; `cell_map[r]` is the new cell of column `r`.
    pub fn transfer(
        &self,
        region: ControlRegion,
        weights: &[f64],
        cell_map: impl Fn(usize) -> usize,
        factor: f64,
    ) -> Result<Self> {
        let target = region.cells();
        if target.len() != self.cells.len() {
            return invalid("target region has a different number of cells");
        }
        let mut perm = Vec::with_capacity(target.len());
        for &c in &self.cells {
            let to = cell_map(c);
            let pos = target
                .binary_search(&to)
                .map_err(|_| Error::InvalidArgument(format!("cell {c} maps outside the region")))?;
            perm.push(pos);
        }
        let values = self
            .values
            .iter()
            .map(|row| {
                let mut out = vec![0.0; row.len()];
                for (r, &v) in row.iter().enumerate() {
                    out[perm[r]] = factor * v;
                }
                out
            })
            .collect();
        Self::new(self.times.clone(), values, region, weights)
    }

    /// Joins signals on the same region whose time grids touch end to start.
    pub fn concat(parts: &[ControlSignal]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut times = vec![first.start()];
        let mut values = Vec::new();
        for p in parts {
            if p.region != first.region {
                return invalid("signals live on different regions");
            }
            let last = *times.last().unwrap();
            if (p.start() - last).abs() > 1e-12 * last.abs().max(1.0) {
                return invalid(format!("gap between {last} and {}", p.start()));
            }
            times.extend_from_slice(&p.times[1..]);
            values.extend(p.values.iter().cloned());
        }
        let mut out = Self {
            times,
            values,
            region: first.region.clone(),
            cells: first.cells.clone(),
            cell_weights: first.cell_weights.clone(),
            l2_cost: 0.0,
        };
        out.l2_cost = out.recompute_cost();
        Ok(out)
    }
}

/// `ν²`-dependent step factors: `(e^{−ν²Δ}, (1 − e^{−ν²Δ})/ν²)`, the second
/// tending to `Δ` at `ν = 0`.
pub fn step_factors(eigenvalue: f64, dt: f64) -> (f64, f64) {
    if eigenvalue == 0.0 {
        (1.0, dt)
    } else {
        let x = eigenvalue * dt;
        ((-x).exp(), -(-x).exp_m1() / eigenvalue)
    }
}

/// Mean of `s ↦ e^{−ν²(τ−s)}` over `[s0, s1] ⊆ [·, τ]`.
fn averaged_exponential(eigenvalue: f64, tau: f64, s0: f64, s1: f64) -> f64 {
    let dt = s1 - s0;
    let (_, integral) = step_factors(eigenvalue, dt);
    (-eigenvalue * (tau - s1)).exp() * integral / dt
}

pub fn uniform_times(start: f64, end: f64, steps: usize) -> Vec<f64> {
    let dt = (end - start) / steps as f64;
    (0..=steps)
        .map(|m| {
            if m == steps {
                end
            } else {
                start + m as f64 * dt
            }
        })
        .collect()
}

/// Time grid for steering modes up to eigenvalue `fastest` onto `end`.
///
/// The HUM control of mode `k` lives on the time scale `1/ν_k²` before `end`.
/// When uniform steps are too coarse for that, the distances of the nodes to
/// `end` are spaced geometrically from `end − start` down to `1/fastest`, so
/// every scale gets its own steps.
pub fn control_times(start: f64, end: f64, steps: usize, fastest: f64) -> Vec<f64> {
    let tau = end - start;
    let finest = 1.0 / fastest;
    if steps < 2 || !(finest < tau / steps as f64) {
        return uniform_times(start, end, steps);
    }
    let ratio = (finest / tau).powf(1.0 / (steps - 1) as f64);
    let mut times: Vec<f64> = (0..steps)
        .map(|m| {
            if m == 0 {
                start
            } else {
                end - tau * ratio.powi(m as i32)
            }
        })
        .collect();
    times.push(end);
    times
}

/// `⟨e_k, 1_ω u⟩` for every mode, given `u` on the region cells.
pub(crate) struct RegionProjector {
    /// modes × cells, entries `w_j e_k(j)`.
    weighted: DMatrix<f64>,
}

impl RegionProjector {
    pub(crate) fn new(basis: &EigenBasis, cells: &[usize]) -> Self {
        let v = basis.vectors();
        let w = basis.weights();
        let weighted = DMatrix::from_fn(basis.len(), cells.len(), |k, r| {
            w[cells[r]] * v[(cells[r], k)]
        });
        Self { weighted }
    }

    pub(crate) fn forcing(&self, values: &[f64]) -> DVector<f64> {
        &self.weighted * DVector::from_column_slice(values)
    }
}

/// Exact mode dynamics: advances `y` from `from` to `to`, applying the steps
/// of `signal` that intersect the interval. Returns the coefficients at every
/// signal node inside `(from, to]` as well as at `to`.
pub(crate) fn advance(
    basis: &EigenBasis,
    y: &mut DVector<f64>,
    signal: Option<&ControlSignal>,
    from: f64,
    to: f64,
    mut on_node: impl FnMut(f64, &DVector<f64>),
) -> Result<()> {
    if to < from {
        return invalid("cannot integrate backwards in time");
    }
    let lam = basis.eigenvalues();
    let free = |y: &mut DVector<f64>, dt: f64| {
        if dt > 0.0 {
            for (k, yk) in y.iter_mut().enumerate() {
                *yk *= step_factors(lam[k], dt).0;
            }
        }
    };
    let mut t = from;
    if let Some(sig) = signal {
        if sig.region.n() != basis.dim() {
            return invalid("control signal and basis live on different grids");
        }
        let proj = RegionProjector::new(basis, &sig.cells);
        for m in 0..sig.steps() {
            let (a, b) = (sig.times[m].max(from), sig.times[m + 1].min(to));
            if b <= a {
                continue;
            }
            free(y, a - t);
            let force = proj.forcing(&sig.values[m]);
            let dt = b - a;
            for k in 0..y.len() {
                let (decay, gain) = step_factors(lam[k], dt);
                y[k] = decay * y[k] + gain * force[k];
            }
            t = b;
            if t < to {
                on_node(t, y);
            }
        }
    }
    free(y, to - t);
    on_node(to, y);
    Ok(())
}

fn check_cutoff(basis: &EigenBasis, cutoff: &SpectralCutoff) -> Result<usize> {
    let k = cutoff.count.min(basis.len());
    if k == 0 {
        return invalid(format!("cutoff Λ = {} keeps no modes", cutoff.lambda));
    }
    Ok(k)
}

fn check_region(basis: &EigenBasis, region: &ControlRegion) -> Result<()> {
    if region.n() != basis.dim() {
        return invalid("region and basis live on different grids");
    }
    Ok(())
}

/// `E_ωᵀ W_ω E_ω` restricted to rows `0..rows` and columns `0..cols`.
fn mass_block(basis: &EigenBasis, rows: usize, cols: usize, cells: &[usize]) -> DMatrix<f64> {
    let v = basis.vectors();
    let w = basis.weights();
    let left = DMatrix::from_fn(cells.len(), rows, |r, k| w[cells[r]] * v[(cells[r], k)]);
    let right = DMatrix::from_fn(cells.len(), cols, |r, k| v[(cells[r], k)]);
    left.tr_mul(&right)
}

/// `M_kl = ⟨e_k, 1_ω e_l⟩` over the modes kept by `cutoff`.
pub fn mass_matrix_on_region(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
) -> Result<DMatrix<f64>> {
    let k = check_cutoff(basis, cutoff)?;
    check_region(basis, region)?;
    let m = mass_block(basis, k, k, &region.cells());
    Ok(0.5 * (&m + m.transpose()))
}

/// `G_kl = ∫₀^τ e^{−ν_k² s} M_kl e^{−ν_l² s} ds`.
pub fn gramian(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
    tau: f64,
) -> Result<DMatrix<f64>> {
    if !(tau > 0.0) {
        return invalid(format!("Gramian horizon must be positive, got {tau}"));
    }
    let mut g = mass_matrix_on_region(basis, cutoff, region)?;
    let lam = basis.eigenvalues();
    for l in 0..g.ncols() {
        for k in 0..g.nrows() {
            g[(k, l)] *= step_factors(lam[k] + lam[l], tau).1;
        }
    }
    Ok(g)
}

/// Gramian of the piecewise-constant control family used for synthesis:
/// `Σ_m Δ_m a_km a_lm · M_kl`, where `a_lm` averages `e^{−ν_l²(τ−s)}` over
/// step `m` and `τ` is the last node. It tends to [`gramian`] as the steps
/// shrink and steers the sampled signal exactly.
pub fn sampled_gramian(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    let k = check_cutoff(basis, cutoff)?;
    check_region(basis, region)?;
    check_times(times)?;
    let mass = mass_matrix_on_region(basis, cutoff, region)?;
    let avg = averaged_table(&basis.eigenvalues()[..k], times);
    Ok(sampled_from(&mass, &avg, times))
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("time grid must have at least one step and increase strictly");
    }
    Ok(())
}

/// modes × steps table of step averages.
fn averaged_table(eigenvalues: &[f64], times: &[f64]) -> DMatrix<f64> {
    let tau = times[times.len() - 1];
    DMatrix::from_fn(eigenvalues.len(), times.len() - 1, |k, m| {
        averaged_exponential(eigenvalues[k], tau, times[m], times[m + 1])
    })
}

fn sampled_from(mass: &DMatrix<f64>, avg: &DMatrix<f64>, times: &[f64]) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(avg.nrows(), avg.ncols(), |k, m| {
        avg[(k, m)] * (times[m + 1] - times[m])
    });
    let s = &scaled * avg.transpose();
    let g = mass.component_mul(&s);
    0.5 * (&g + g.transpose())
}

/// Diagnostics of one Gramian solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveInfo {
    /// Condition number after symmetric diagonal scaling.
    pub condition: f64,
    /// Eigen-directions discarded by a truncated solve (0 for strict solves).
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SolvePolicy {
    Strict,
    /// Pseudo-inverse ignoring scaled eigenvalues below `GRAMIAN_CONDITION_LIMIT⁻¹·max`.
    Truncated,
}

fn solve_gramian(
    g: &DMatrix<f64>,
    rhs: &DVector<f64>,
    policy: SolvePolicy,
    diag: (f64, f64, Option<usize>),
) -> Result<(DVector<f64>, SolveInfo)> {
    let n = g.nrows();
    let d: Vec<f64> = (0..n).map(|k| g[(k, k)]).collect();
    let singular = |cond: f64| Error::SingularGramian {
        lambda: diag.0,
        measure: diag.1,
        modes: n,
        cond,
        slice: diag.2,
    };
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(singular(f64::INFINITY));
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let gs = DMatrix::from_fn(n, n, |i, j| s[i] * g[(i, j)] * s[j]);
    let rs = DVector::from_fn(n, |i, _| s[i] * rhs[i]);
    let eig = SymmetricEigen::new(gs.clone());
    let emax = eig.eigenvalues.max();
    let emin = eig.eigenvalues.min();
    let condition = if emin > 0.0 {
        emax / emin
    } else {
        f64::INFINITY
    };

    let well_posed = condition <= GRAMIAN_CONDITION_LIMIT;
    let z = match policy {
        SolvePolicy::Strict if !well_posed => return Err(singular(condition)),
        SolvePolicy::Strict | SolvePolicy::Truncated if well_posed => {
            let chol = gs.clone().cholesky().ok_or_else(|| singular(condition))?;
            let mut z = chol.solve(&rs);
            for _ in 0..2 {
                let res = &rs - &gs * &z;
                z += chol.solve(&res);
            }
            (z, 0)
        }
        _ => {
            let floor = emax / GRAMIAN_CONDITION_LIMIT;
            let proj = eig.eigenvectors.tr_mul(&rs);
            let mut coef = DVector::zeros(n);
            let mut dropped = 0;
            for i in 0..n {
                if eig.eigenvalues[i] > floor {
                    coef[i] = proj[i] / eig.eigenvalues[i];
                } else {
                    dropped += 1;
                }
            }
            (&eig.eigenvectors * coef, dropped)
        }
    };
    let (z, dropped) = z;
    let q = DVector::from_fn(n, |i, _| s[i] * z[i]);
    Ok((q, SolveInfo { condition, dropped }))
}

/// Low-mode steering over `times`, with the state's coefficients `y0` given
/// at `times[0]`.
fn low_mode_signal(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
    y0: &[f64],
    times: &[f64],
    policy: SolvePolicy,
    slice: Option<usize>,
) -> Result<(ControlSignal, SolveInfo)> {
    let k = check_cutoff(basis, cutoff)?;
    check_region(basis, region)?;
    check_times(times)?;
    if y0.len() < k {
        return invalid(format!("need {k} initial coefficients, got {}", y0.len()));
    }
    let lam = &basis.eigenvalues()[..k];
    let cells = region.cells();
    if y0[..k].iter().all(|&c| c == 0.0) {
        let info = SolveInfo {
            condition: 1.0,
            dropped: 0,
        };
        return Ok((
            ControlSignal::zero(times.to_vec(), region.clone(), basis.weights())?,
            info,
        ));
    }
    // Local time so that the horizon is the last node.
    let local: Vec<f64> = times.iter().map(|t| t - times[0]).collect();
    let tau = local[local.len() - 1];
    let mass = mass_matrix_on_region(basis, cutoff, region)?;
    let avg = averaged_table(lam, &local);
    let g = sampled_from(&mass, &avg, &local);
    let rhs = DVector::from_fn(k, |i, _| -(-lam[i] * tau).exp() * y0[i]);
    let (q, info) = solve_gramian(&g, &rhs, policy, (cutoff.lambda, region.measure(), slice))?;

    let v = basis.vectors();
    let values = (0..times.len() - 1)
        .map(|m| {
            cells
                .iter()
                .map(|&j| (0..k).map(|l| q[l] * avg[(l, m)] * v[(j, l)]).sum())
                .collect()
        })
        .collect();
    Ok((
        ControlSignal::new(times.to_vec(), values, region.clone(), basis.weights())?,
        info,
    ))
}

/// HUM control of the modes kept by `cutoff` over `[0, tau]` on
/// [`DEFAULT_STEPS`] steps of [`control_times`]: steers the leading
/// coefficients `y0` to zero.
pub fn hum_low_mode_control(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
    y0: &[f64],
    tau: f64,
) -> Result<ControlSignal> {
    if !(tau > 0.0) {
        return invalid(format!("control horizon must be positive, got {tau}"));
    }
    let fastest = basis.eigenvalues()[check_cutoff(basis, cutoff)? - 1];
    let times = control_times(0.0, tau, DEFAULT_STEPS, fastest);
    hum_low_mode_control_on(basis, cutoff, region, y0, &times)
}

/// As [`hum_low_mode_control`] on an explicit time grid.
pub fn hum_low_mode_control_on(
    basis: &EigenBasis,
    cutoff: &SpectralCutoff,
    region: &ControlRegion,
    y0: &[f64],
    times: &[f64],
) -> Result<ControlSignal> {
    low_mode_signal(basis, cutoff, region, y0, times, SolvePolicy::Strict, None).map(|r| r.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrSlice {
    pub t_start: f64,
    pub t_mid: f64,
    pub t_end: f64,
    pub lambda: f64,
}

/// Dyadic time slices with doubling frequency cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrSchedule {
    pub horizon: f64,
    pub slices: Vec<LrSlice>,
}

impl LrSchedule {
    /// Index `J` of the last slice.
    pub fn terminal(&self) -> usize {
        self.slices.len() - 1
    }

    /// End of the last slice; the remainder up to the horizon is passive.
    pub fn active_end(&self) -> f64 {
        self.slices[self.terminal()].t_end
    }
}

pub fn make_lr_schedule(horizon: f64, lambda0: f64, basis: &EigenBasis) -> Result<LrSchedule> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return invalid(format!("lambda0 must be positive, got {lambda0}"));
    }
    let top = basis.max_frequency();
    let mut slices = Vec::new();
    let mut lambda = lambda0;
    let mut start = 0.0;
    let mut len = 0.5 * horizon;
    loop {
        slices.push(LrSlice {
            t_start: start,
            t_mid: start + 0.5 * len,
            t_end: start + len,
            lambda,
        });
        if lambda >= top {
            break;
        }
        if slices.len() > 1000 {
            return invalid("schedule does not terminate");
        }
        start += len;
        len *= 0.5;
        lambda *= 2.0;
    }
    Ok(LrSchedule { horizon, slices })
}

/// Per-slice record of a Lebeau–Robbiano run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceLedger {
    pub j: usize,
    pub lambda: f64,
    pub modes: usize,
    pub active_cost: f64,
    /// Weighted L² norm at the start of the slice.
    pub pre_norm: f64,
    /// Norm of the modes `≤ lambda` right after the active half.
    pub low_mode_residual: f64,
    /// Full norm after the active half.
    pub mid_norm: f64,
    /// Full norm at the end of the slice.
    pub post_norm: f64,
    pub condition: f64,
    pub dropped: usize,
}

#[derive(Debug, Clone)]
pub struct LrOutcome {
    pub signal: ControlSignal,
    pub ledger: Vec<SliceLedger>,
    /// Weighted L² norm of the state at the horizon.
    pub final_norm: f64,
    pub initial_norm: f64,
}

impl LrOutcome {
    pub fn converged(&self, rel_tol: f64) -> bool {
        self.final_norm <= rel_tol * self.initial_norm
    }
}

/// Lebeau–Robbiano iteration: on slice `j`, HUM control of the modes
/// `≤ Λ_j` during the first half, free decay during the second half. The
/// terminal slice covers the whole discrete spectrum. Gramians beyond the
/// conditioning limit are solved by truncated pseudo-inverse; the number of
/// discarded directions is recorded per slice.
pub fn lr_control(
    basis: &EigenBasis,
    schedule: &LrSchedule,
    region: &ControlRegion,
    state0: &[f64],
    steps: usize,
) -> Result<LrOutcome> {
    check_region(basis, region)?;
    if steps == 0 {
        return invalid("need at least one step per active phase");
    }
    let w = basis.weights();
    let mut y = basis.coefficients(state0)?;
    let initial_norm = l2_norm(state0, w);
    let norm = |y: &DVector<f64>| y.norm();
    let mut parts = Vec::new();
    let mut ledger = Vec::new();

    for (j, sl) in schedule.slices.iter().enumerate() {
        let cutoff = SpectralCutoff::new(basis, sl.lambda);
        let pre_norm = norm(&y);
        let fastest = basis.eigenvalues()[cutoff.count.max(1) - 1];
        let times = control_times(sl.t_start, sl.t_mid, steps, fastest);
        let (active, info) = if cutoff.count == 0 {
            let s = ControlSignal::zero(times, region.clone(), w)?;
            (
                s,
                SolveInfo {
                    condition: 1.0,
                    dropped: 0,
                },
            )
        } else {
            low_mode_signal(
                basis,
                &cutoff,
                region,
                y.as_slice(),
                &times,
                SolvePolicy::Truncated,
                Some(j),
            )?
        };
        advance(
            basis,
            &mut y,
            Some(&active),
            sl.t_start,
            sl.t_mid,
            |_, _| {},
        )?;
        let low = y.rows(0, cutoff.count).norm();
        let mid_norm = norm(&y);
        advance(basis, &mut y, None, sl.t_mid, sl.t_end, |_, _| {})?;
        ledger.push(SliceLedger {
            j,
            lambda: sl.lambda,
            modes: cutoff.count,
            active_cost: active.l2_cost(),
            pre_norm,
            low_mode_residual: low,
            mid_norm,
            post_norm: norm(&y),
            condition: info.condition,
            dropped: info.dropped,
        });
        parts.push(active);
        parts.push(ControlSignal::zero(
            vec![sl.t_mid, sl.t_end],
            region.clone(),
            w,
        )?);
    }
    let tail_start = schedule.active_end();
    if schedule.horizon > tail_start {
        advance(basis, &mut y, None, tail_start, schedule.horizon, |_, _| {})?;
        parts.push(ControlSignal::zero(
            vec![tail_start, schedule.horizon],
            region.clone(),
            w,
        )?);
    }
    Ok(LrOutcome {
        signal: ControlSignal::concat(&parts)?,
        ledger,
        final_norm: norm(&y),
        initial_norm,
    })
}

/// One level of the regularization continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuationStep {
    pub regularization: f64,
    pub cost: f64,
    pub final_norm: f64,
}

#[derive(Debug, Clone)]
pub struct FullOutcome {
    pub signal: ControlSignal,
    pub final_norm: f64,
    pub initial_norm: f64,
    /// Regularization from `1e-8` down to [`FULL_REGULARIZATION`]; the last
    /// entry describes `signal`.
    pub continuation: Vec<ContinuationStep>,
}

impl FullOutcome {
    /// Relative cost change over the last decade of regularization.
    pub fn cost_plateau(&self) -> f64 {
        match self.continuation.as_slice() {
            [.., a, b] if b.cost > 0.0 => (b.cost - a.cost).abs() / b.cost,
            _ => 0.0,
        }
    }
}

/// Minimum-norm piecewise-constant control over all modes on `steps` uniform
/// steps of `[0, horizon]`, from regularized normal equations of the
/// input-to-final-state map.
pub fn hum_full_control(
    basis: &EigenBasis,
    region: &ControlRegion,
    state0: &[f64],
    horizon: f64,
    steps: usize,
) -> Result<FullOutcome> {
    check_region(basis, region)?;
    if !(horizon > 0.0) {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    let modes = basis.len();
    let cells = region.cells();
    if steps * cells.len() < modes {
        return Err(Error::Infeasible(format!(
            "{steps} steps x {} region cells cannot reach {modes} modes",
            cells.len()
        )));
    }
    let w = basis.weights();
    let times = uniform_times(0.0, horizon, steps);
    let y0 = basis.coefficients(state0)?;
    let initial_norm = l2_norm(state0, w);
    if y0.iter().all(|&c| c == 0.0) {
        return Ok(FullOutcome {
            signal: ControlSignal::zero(times, region.clone(), w)?,
            final_norm: 0.0,
            initial_norm,
            continuation: Vec::new(),
        });
    }
    let lam = basis.eigenvalues();
    let avg = averaged_table(lam, &times);
    let mass = mass_block(basis, modes, modes, &cells);
    let mass = 0.5 * (&mass + mass.transpose());
    let g = sampled_from(&mass, &avg, &times);
    let rhs = DVector::from_fn(modes, |k, _| -(-lam[k] * horizon).exp() * y0[k]);
    let dmax = g.diagonal().max();
    let v = basis.vectors();

    let mut continuation = Vec::new();
    let mut last = None;
    for exp in 8..=12 {
        let eps = 10f64.powi(-exp);
        let mut reg = g.clone();
        for k in 0..modes {
            reg[(k, k)] += eps * dmax;
        }
        let chol = reg.clone().cholesky().ok_or_else(|| {
            Error::Infeasible(format!(
                "regularized normal equations are indefinite at {eps:e}"
            ))
        })?;
        // Iterated Tikhonov: residuals against the unregularized matrix,
        // so well-resolved directions converge while tiny ones stay damped.
        let mut p = chol.solve(&rhs);
        for _ in 0..TIKHONOV_SWEEPS {
            let res = &rhs - &g * &p;
            p += chol.solve(&res);
        }
        let values: Vec<Vec<f64>> = (0..steps)
            .into_par_iter()
            .map(|m| {
                cells
                    .iter()
                    .map(|&j| (0..modes).map(|l| p[l] * avg[(l, m)] * v[(j, l)]).sum())
                    .collect()
            })
            .collect();
        let signal = ControlSignal::new(times.clone(), values, region.clone(), w)?;
        let mut y = y0.clone();
        advance(basis, &mut y, Some(&signal), 0.0, horizon, |_, _| {})?;
        continuation.push(ContinuationStep {
            regularization: eps,
            cost: signal.l2_cost(),
            final_norm: y.norm(),
        });
        last = Some((signal, y.norm()));
    }
    let (signal, final_norm) = last.expect("continuation has levels");
    Ok(FullOutcome {
        signal,
        final_norm,
        initial_norm,
        continuation,
    })
}
