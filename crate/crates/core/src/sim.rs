//! Exact propagation, the simultaneous-control experiment and boundary checks.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::{
    advance, hum_full_control, lr_control, make_lr_schedule, uniform_times, ContinuationStep,
    ControlSignal, SliceLedger, DEFAULT_STEPS,
};
use crate::doubling::{build_double, DoubleDomain, ExtendedBasis};
use crate::error::{invalid, Result};
use crate::grid::{Coefficients, ControlRegion, Grid1D};
use crate::operators::{eigenbasis, BoundaryCondition, EigenBasis};
use crate::spectral::{l2_norm, sup_norm};

/// States of one heat flow at the nodes of its control signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub bc: BoundaryCondition,
    pub l2: Vec<f64>,
    pub sup: Vec<f64>,
    /// Values in the cells across the left and right walls when they are
    /// known from an enclosing field; otherwise the ghost rule of `bc` applies.
    pub across: Option<Vec<[f64; 2]>>,
}

impl Trajectory {
    fn from_states(
        times: Vec<f64>,
        states: Vec<Vec<f64>>,
        bc: BoundaryCondition,
        weights: &[f64],
    ) -> Self {
        let l2 = states.iter().map(|s| l2_norm(s, weights)).collect();
        let sup = states.iter().map(|s| sup_norm(s)).collect();
        Self {
            times,
            states,
            bc,
            l2,
            sup,
            across: None,
        }
    }

    pub fn final_state(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    pub fn final_l2(&self) -> f64 {
        self.l2[self.l2.len() - 1]
    }
}

/// Exact evolution of `state0` from `t = 0` to `t_end` under `signal`.
pub fn propagate(
    basis: &EigenBasis,
    state0: &[f64],
    signal: Option<&ControlSignal>,
    t_end: f64,
) -> Result<Trajectory> {
    if !(t_end >= 0.0) {
        return invalid(format!("end time must be nonnegative, got {t_end}"));
    }
    if let Some(s) = signal {
        if s.start() < 0.0 || s.end() > t_end * (1.0 + 1e-12) {
            return invalid(format!(
                "signal spans [{}, {}], outside [0, {t_end}]",
                s.start(),
                s.end()
            ));
        }
    }
    let mut y = basis.coefficients(state0)?;
    let mut times = vec![0.0];
    let mut coeffs: Vec<DVector<f64>> = vec![y.clone()];
    if t_end > 0.0 {
        advance(basis, &mut y, signal, 0.0, t_end, |t, y| {
            times.push(t);
            coeffs.push(y.clone());
        })?;
    }
    let states = coeffs.iter().map(|c| basis.synthesize(c)).collect();
    Ok(Trajectory::from_states(
        times,
        states,
        basis.bc(),
        basis.weights(),
    ))
}

/// Splits a doubled-domain trajectory into its Dirichlet and Neumann parts.
/// The parts remember the odd / even values across each wall.
pub fn split_trajectory(dd: &DoubleDomain, traj: &Trajectory) -> Result<(Trajectory, Trajectory)> {
    let n = dd.n();
    let mut us = Vec::with_capacity(traj.states.len());
    let mut vs = Vec::with_capacity(traj.states.len());
    let mut u_across = Vec::new();
    let mut v_across = Vec::new();
    for field in &traj.states {
        let (u, v) = dd.split(field)?;
        let mut ua = [0.0; 2];
        let mut va = [0.0; 2];
        for (side, cell) in [0, n - 1].into_iter().enumerate() {
            let inside = field[dd.embed_plus()[cell]];
            let across = field[dd.embed_minus()[cell]];
            ua[side] = 0.5 * (across - inside);
            va[side] = 0.5 * (across + inside);
        }
        us.push(u);
        vs.push(v);
        u_across.push(ua);
        v_across.push(va);
    }
    let w = dd.base().weights();
    let mut ut = Trajectory::from_states(traj.times.clone(), us, BoundaryCondition::Dirichlet, w);
    let mut vt = Trajectory::from_states(traj.times.clone(), vs, BoundaryCondition::Neumann, w);
    ut.across = Some(u_across);
    vt.across = Some(v_across);
    Ok((ut, vt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryResidual {
    /// Largest absolute residual over time.
    pub max_abs: f64,
    /// `max_abs` divided by the largest sup norm of the trajectory.
    pub relative: f64,
}

/// Dirichlet: wall value `(u_wall + u_across)/2`. Neumann: one-sided flux
/// `a·(u_wall − u_across)/h`. Periodic trajectories have no walls.
pub fn check_boundary_conditions(
    traj: &Trajectory,
    grid: &Grid1D,
    coeffs: &Coefficients,
) -> Result<BoundaryResidual> {
    let n = grid.n();
    if coeffs.n() != n || traj.states.iter().any(|s| s.len() != n) {
        return invalid("trajectory, grid and coefficients sizes differ");
    }
    let mut worst: f64 = 0.0;
    for (m, s) in traj.states.iter().enumerate() {
        for (side, (cell, face)) in [(0, 0), (n - 1, n)].into_iter().enumerate() {
            let inside = s[cell];
            let across = match (&traj.across, traj.bc) {
                (Some(a), _) => a[m][side],
                (None, BoundaryCondition::Dirichlet) => -inside,
                (None, BoundaryCondition::Neumann) => inside,
                (None, BoundaryCondition::Periodic) => {
                    return invalid("periodic fields have no walls")
                }
            };
            let r = match traj.bc {
                BoundaryCondition::Dirichlet => 0.5 * (inside + across),
                BoundaryCondition::Neumann => coeffs.a[face] * (inside - across) / grid.h(),
                BoundaryCondition::Periodic => return invalid("periodic fields have no walls"),
            };
            worst = worst.max(r.abs());
        }
    }
    let scale = traj.sup.iter().copied().fold(0.0, f64::max);
    Ok(BoundaryResidual {
        max_abs: worst,
        relative: if scale > 0.0 { worst / scale } else { worst },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hum,
    Lr,
}

impl Method {
    /// Required final norm relative to the initial norm.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Method::Hum => 1e-6,
            Method::Lr => 1e-4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Hum => "hum",
            Method::Lr => "lr",
        })
    }
}

/// Base grid, the doubled domain and the three eigenbases.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid1D,
    pub coeffs: Coefficients,
    pub double: DoubleDomain,
    pub dirichlet: EigenBasis,
    pub neumann: EigenBasis,
    pub extended: ExtendedBasis,
}

impl Setup {
    pub fn new(grid: Grid1D, coeffs: Coefficients) -> Result<Self> {
        let double = build_double(&grid, &coeffs)?;
        let dirichlet = eigenbasis(&grid, &coeffs, BoundaryCondition::Dirichlet)?;
        let neumann = eigenbasis(&grid, &coeffs, BoundaryCondition::Neumann)?;
        let extended = ExtendedBasis::new(&double, &dirichlet, &neumann)?;
        Ok(Self {
            grid,
            coeffs,
            double,
            dirichlet,
            neumann,
            extended,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Steps of the full-spectrum control, or per active phase for LR.
    pub steps: usize,
    /// First LR cutoff; defaults to `2π/L`.
    pub lambda0: Option<f64>,
    /// Overrides [`Method::default_tolerance`].
    pub tolerance: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            lambda0: None,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimultaneousReport {
    /// Final weighted L² norms relative to the initial ones (absolute when
    /// the initial datum vanishes).
    pub final_u_l2: f64,
    pub final_v_l2: f64,
    /// Cost of the shared base control.
    pub control_cost: f64,
    pub dirichlet_trace_residual: f64,
    pub neumann_flux_residual: f64,
    /// Largest gap between the split double run and the independent runs,
    /// relative to the largest sup norm.
    pub route_gap: f64,
    pub method: Method,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone)]
pub struct SimultaneousRun {
    pub report: SimultaneousReport,
    /// Control of the doubled problem, on `ω × {+1}`.
    pub double_signal: ControlSignal,
    /// The one control applied to both base systems.
    pub shared_signal: ControlSignal,
    pub dirichlet: Trajectory,
    pub neumann: Trajectory,
    pub double: Trajectory,
    pub lr_ledger: Option<Vec<SliceLedger>>,
    pub continuation: Option<Vec<ContinuationStep>>,
}

fn relative(final_norm: f64, initial: f64) -> f64 {
    if initial > 0.0 {
        final_norm / initial
    } else {
        final_norm
    }
}

fn max_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Controls the pair `(u0, v0)` to zero at `horizon` with one control on `ω`:
/// the doubled problem is controlled from `ũ0 = extend_pair(u0, v0)` on
/// `ω × {+1}`, and both base systems are then run independently with the
/// resulting shared control.
pub fn run_simultaneous(
    setup: &Setup,
    u0: &[f64],
    v0: &[f64],
    region: &ControlRegion,
    horizon: f64,
    method: Method,
    opts: &RunOptions,
) -> Result<SimultaneousRun> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    let dd = &setup.double;
    let basis = setup.extended.basis();
    let big0 = dd.extend_pair(u0, v0)?;
    let lifted = dd.lift_region(region)?;

    let (double_signal, lr_ledger, continuation) = match method {
        Method::Hum => {
            let out = hum_full_control(basis, &lifted, &big0, horizon, opts.steps)?;
            (out.signal, None, Some(out.continuation))
        }
        Method::Lr => {
            let lambda0 = opts
                .lambda0
                .unwrap_or(2.0 * std::f64::consts::PI / setup.grid.length());
            let schedule = make_lr_schedule(horizon, lambda0, basis)?;
            let out = lr_control(basis, &schedule, &lifted, &big0, opts.steps)?;
            (out.signal, Some(out.ledger), None)
        }
    };

    // On the double, the odd and even parts of a control supported on the
    // plus copy are both half of it there.
    let plus = dd.embed_plus();
    let shared = double_signal.transfer(
        region.clone(),
        setup.grid.weights(),
        |c| plus.iter().position(|&p| p == c).unwrap_or(usize::MAX),
        0.5,
    )?;

    let u_traj = propagate(&setup.dirichlet, u0, Some(&shared), horizon)?;
    let v_traj = propagate(&setup.neumann, v0, Some(&shared), horizon)?;
    let big_traj = propagate(basis, &big0, Some(&double_signal), horizon)?;
    let (u_split, v_split) = split_trajectory(dd, &big_traj)?;

    let scale = u_traj
        .sup
        .iter()
        .chain(&v_traj.sup)
        .copied()
        .fold(0.0, f64::max);
    let gap = max_gap(&u_traj, &u_split).max(max_gap(&v_traj, &v_split));
    let trace = check_boundary_conditions(&u_split, &setup.grid, &setup.coeffs)?;
    let flux = check_boundary_conditions(&v_split, &setup.grid, &setup.coeffs)?;

    let tolerance = opts.tolerance.unwrap_or(method.default_tolerance());
    let w = setup.grid.weights();
    let final_u_l2 = relative(u_traj.final_l2(), l2_norm(u0, w));
    let final_v_l2 = relative(v_traj.final_l2(), l2_norm(v0, w));
    let report = SimultaneousReport {
        final_u_l2,
        final_v_l2,
        control_cost: shared.l2_cost(),
        dirichlet_trace_residual: trace.relative,
        neumann_flux_residual: flux.relative,
        route_gap: if scale > 0.0 { gap / scale } else { gap },
        method,
        tolerance,
        within_tolerance: final_u_l2 <= tolerance && final_v_l2 <= tolerance,
    };
    Ok(SimultaneousRun {
        report,
        double_signal,
        shared_signal: shared,
        dirichlet: u_traj,
        neumann: v_traj,
        double: big_traj,
        lr_ledger,
        continuation,
    })
}

/// Uncontrolled evolution of a pair, sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeReport {
    pub final_u_l2: f64,
    pub final_v_l2: f64,
    /// Largest relative increase of any L² norm between samples.
    pub max_norm_increase: f64,
    pub dirichlet_trace_residual: f64,
    pub neumann_flux_residual: f64,
    pub route_gap: f64,
}

#[derive(Debug, Clone)]
pub struct FreeRun {
    pub report: FreeReport,
    pub dirichlet: Trajectory,
    pub neumann: Trajectory,
    pub double: Trajectory,
}

pub fn free_evolution(
    setup: &Setup,
    u0: &[f64],
    v0: &[f64],
    horizon: f64,
    samples: usize,
) -> Result<FreeRun> {
    if !(horizon > 0.0 && horizon.is_finite()) || samples == 0 {
        return invalid("free evolution needs a positive horizon and at least one sample");
    }
    let dd = &setup.double;
    let basis = setup.extended.basis();
    let times = uniform_times(0.0, horizon, samples);
    let base_clock = ControlSignal::zero(
        times.clone(),
        ControlRegion::full(&setup.grid),
        setup.grid.weights(),
    )?;
    let double_clock = ControlSignal::zero(
        times,
        ControlRegion::full(dd.doubled()),
        dd.doubled().weights(),
    )?;

    let big0 = dd.extend_pair(u0, v0)?;
    let u_traj = propagate(&setup.dirichlet, u0, Some(&base_clock), horizon)?;
    let v_traj = propagate(&setup.neumann, v0, Some(&base_clock), horizon)?;
    let big_traj = propagate(basis, &big0, Some(&double_clock), horizon)?;
    let (u_split, v_split) = split_trajectory(dd, &big_traj)?;

    let growth = |t: &Trajectory| {
        t.l2.windows(2)
            .map(|w| {
                if w[0] > 0.0 {
                    (w[1] - w[0]) / w[0]
                } else {
                    w[1]
                }
            })
            .fold(0.0, f64::max)
    };
    let scale = u_traj
        .sup
        .iter()
        .chain(&v_traj.sup)
        .copied()
        .fold(0.0, f64::max);
    let gap = max_gap(&u_traj, &u_split).max(max_gap(&v_traj, &v_split));
    let w = setup.grid.weights();
    let report = FreeReport {
        final_u_l2: relative(u_traj.final_l2(), l2_norm(u0, w)),
        final_v_l2: relative(v_traj.final_l2(), l2_norm(v0, w)),
        max_norm_increase: growth(&u_traj).max(growth(&v_traj)).max(growth(&big_traj)),
        dirichlet_trace_residual: check_boundary_conditions(&u_split, &setup.grid, &setup.coeffs)?
            .relative,
        neumann_flux_residual: check_boundary_conditions(&v_split, &setup.grid, &setup.coeffs)?
            .relative,
        route_gap: if scale > 0.0 { gap / scale } else { gap },
    };
    Ok(FreeRun {
        report,
        dirichlet: u_traj,
        neumann: v_traj,
        double: big_traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_uniform_grid, region_from_intervals};
    use crate::operators::{analytic_eigenbasis, assemble_laplacian};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn rand_vec(len: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn unit(v: Vec<f64>, w: &[f64]) -> Vec<f64> {
        let n = l2_norm(&v, w);
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn free_eigenmode_decays_exactly() {
        let g = Grid1D::uniform(16, 1.0).unwrap();
        let d = analytic_eigenbasis(&g, BoundaryCondition::Dirichlet).unwrap();
        let e3: Vec<f64> = d.vectors().column(3).iter().copied().collect();
        let tr = propagate(&d, &e3, None, 0.01).unwrap();
        let f = (-d.eigenvalues()[3] * 0.01).exp();
        assert!(tr
            .final_state()
            .iter()
            .zip(&e3)
            .all(|(a, b)| (a - f * b).abs() < 1e-13));

        let nb = analytic_eigenbasis(&g, BoundaryCondition::Neumann).unwrap();
        let c = vec![0.7; 16];
        let tr = propagate(&nb, &c, None, 3.0).unwrap();
        assert!(tr.final_state().iter().all(|v| (v - 0.7).abs() < 1e-13));
    }

    #[test]
    fn free_flow_dissipates() {
        let g = make_uniform_grid(16, 1.0, |x| 1.0 + x).unwrap();
        let co = Coefficients::sample(&g, |x| 2.0 - x).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let b = eigenbasis(&g, &co, bc).unwrap();
            let r = region_from_intervals(&g, &[(0.0, 1.0)]).unwrap();
            let times: Vec<f64> = (0..=10).map(|i| 0.01 * i as f64).collect();
            let sig = ControlSignal::zero(times, r, g.weights()).unwrap();
            let tr = propagate(&b, &rand_vec(16, &mut rng), Some(&sig), 0.2).unwrap();
            assert_eq!(tr.times.len(), 12);
            assert!(tr.l2.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
        }
    }

    /// Dense oracle: `u(t+Δ) = e^{−AΔ}u + (∫₀^Δ e^{−As} ds) f`, the integral by
    /// composite Gauss–Legendre on matrix exponentials.
    fn dense_oracle(a: &DMatrix<f64>, u0: &[f64], sig: &ControlSignal, t_end: f64) -> Vec<f64> {
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let n = a.nrows();
        let mut u = DVector::from_column_slice(u0);
        let mut t = 0.0;
        for m in 0..sig.steps() {
            let (t0, t1) = (sig.times()[m], sig.times()[m + 1]);
            u = (-a * (t0 - t)).exp() * u;
            let dt = t1 - t0;
            let mut integral = DMatrix::zeros(n, n);
            let pieces = 8;
            let hp = dt / pieces as f64;
            for p in 0..pieces {
                let mid = (p as f64 + 0.5) * hp;
                for (x, w) in nodes {
                    integral += (-a * (mid + 0.5 * hp * x)).exp() * (0.5 * hp * w);
                }
            }
            u = (-a * dt).exp() * u + integral * DVector::from_vec(sig.field(m));
            t = t1;
        }
        ((-a * (t_end - t)).exp() * u).as_slice().to_vec()
    }

    #[test]
    fn propagate_matches_dense_expm_oracle() {
        let g = make_uniform_grid(12, 1.0, |x| 1.0 + 0.5 * x).unwrap();
        let co = Coefficients::sample(&g, |x| 1.0 + x * x).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let r = region_from_intervals(&g, &[(0.1, 0.45)]).unwrap();
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let op = assemble_laplacian(&g, &co, bc).unwrap();
            let b = eigenbasis(&g, &co, bc).unwrap();
            let times = vec![0.01, 0.02, 0.035, 0.05, 0.08];
            let vals = (0..4).map(|_| rand_vec(r.cell_count(), &mut rng)).collect();
            let sig = ControlSignal::new(times, vals, r.clone(), g.weights()).unwrap();
            let u0 = rand_vec(12, &mut rng);
            let tr = propagate(&b, &u0, Some(&sig), 0.1).unwrap();
            let oracle = dense_oracle(&op.matrix(), &u0, &sig, 0.1);
            let err = tr
                .final_state()
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "{bc}: {err:e}");
            assert_eq!(tr.times, vec![0.0, 0.02, 0.035, 0.05, 0.08, 0.1]);
        }
    }

    #[test]
    fn propagate_rejects_bad_input() {
        let g = Grid1D::uniform(8, 1.0).unwrap();
        let d = analytic_eigenbasis(&g, BoundaryCondition::Dirichlet).unwrap();
        assert!(propagate(&d, &[0.0; 7], None, 1.0).is_err());
        let sig =
            ControlSignal::zero(vec![0.0, 2.0], ControlRegion::full(&g), g.weights()).unwrap();
        assert!(propagate(&d, &[0.0; 8], Some(&sig), 1.0).is_err());
    }

    #[test]
    fn boundary_checks_on_basis_fields() {
        let g = Grid1D::uniform(16, 1.0).unwrap();
        let co = Coefficients::constant(16);
        let d = analytic_eigenbasis(&g, BoundaryCondition::Dirichlet).unwrap();
        let tr = propagate(&d, d.vectors().column(2).as_slice(), None, 0.1).unwrap();
        assert!(check_boundary_conditions(&tr, &g, &co).unwrap().max_abs < 1e-12);
        let nb = analytic_eigenbasis(&g, BoundaryCondition::Neumann).unwrap();
        let tr = propagate(&nb, &[1.0; 16], None, 0.1).unwrap();
        assert!(check_boundary_conditions(&tr, &g, &co).unwrap().max_abs < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_control() {
        let setup = Setup::new(
            Grid1D::uniform(16, 1.0).unwrap(),
            Coefficients::constant(16),
        )
        .unwrap();
        let r = region_from_intervals(&setup.grid, &[(0.2, 0.5)]).unwrap();
        let z = vec![0.0; 16];
        for m in [Method::Hum, Method::Lr] {
            let run = run_simultaneous(&setup, &z, &z, &r, 1.0, m, &RunOptions::default()).unwrap();
            assert!(run.shared_signal.is_zero());
            assert_eq!(run.report.final_u_l2, 0.0);
            assert_eq!(run.report.control_cost, 0.0);
            assert!(run.report.within_tolerance);
        }
    }

    #[test]
    fn routes_agree_and_boundaries_hold() {
        let g = make_uniform_grid(32, 1.0, |x| 1.0 + 0.5 * x).unwrap();
        let co = Coefficients::sample(&g, |x| 1.0 + 0.3 * x).unwrap();
        let setup = Setup::new(g, co).unwrap();
        let r = region_from_intervals(&setup.grid, &[(0.2, 0.4)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let w = setup.grid.weights().to_vec();
        let u0 = unit(rand_vec(32, &mut rng), &w);
        let v0 = unit(rand_vec(32, &mut rng), &w);
        let run = run_simultaneous(
            &setup,
            &u0,
            &v0,
            &r,
            1.0,
            Method::Hum,
            &RunOptions::default(),
        )
        .unwrap();
        let rep = run.report;
        assert!(rep.route_gap <= 1e-10, "{rep:?}");
        assert!(rep.dirichlet_trace_residual <= 1e-10 && rep.neumann_flux_residual <= 1e-10);
        assert!(rep.within_tolerance, "{rep:?}");
        assert_eq!(run.shared_signal.times(), run.double_signal.times());
        assert!(
            (2.0 * run.shared_signal.values()[3][0] - run.double_signal.values()[3][0]).abs()
                == 0.0
        );
    }

    #[test]
    fn equal_data_pipeline() {
        let setup = Setup::new(
            Grid1D::uniform(24, 1.0).unwrap(),
            Coefficients::constant(24),
        )
        .unwrap();
        let r = region_from_intervals(&setup.grid, &[(0.6, 0.9)]).unwrap();
        let u0: Vec<f64> = setup.grid.centers().iter().map(|x| x * (1.0 - x)).collect();
        let big = setup.double.extend_pair(&u0, &u0).unwrap();
        assert!(setup.double.restrict_minus(&big).iter().all(|&v| v == 0.0));
        let run = run_simultaneous(
            &setup,
            &u0,
            &u0,
            &r,
            1.0,
            Method::Hum,
            &RunOptions::default(),
        )
        .unwrap();
        assert!(run.report.within_tolerance, "{:?}", run.report);
    }

    #[test]
    fn free_evolution_matches_split_and_decays() {
        let g = make_uniform_grid(12, 1.0, |x| 1.0 + 0.5 * x).unwrap();
        let co = Coefficients::sample(&g, |x| 1.5 - x).unwrap();
        let setup = Setup::new(g.clone(), co).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let u0 = rand_vec(12, &mut rng);
        let v0 = rand_vec(12, &mut rng);
        let run = free_evolution(&setup, &u0, &v0, 0.05, 20).unwrap();
        assert_eq!(run.dirichlet.times.len(), 21);
        let r = &run.report;
        assert!(r.max_norm_increase <= 1e-13);
        assert!(r.route_gap <= 1e-11);
        assert!(r.dirichlet_trace_residual <= 1e-10 && r.neumann_flux_residual <= 1e-10);
        assert!(r.final_u_l2 < 1.0 && r.final_v_l2 <= 1.0);
    }
}
