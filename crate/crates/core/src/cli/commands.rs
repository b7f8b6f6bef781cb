//! The experiment commands. Each writes its artifacts into the output
//! directory and returns the process exit code together with a short message.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::output::{control_csv, fmt_real, norms_csv, write_atomic, write_json};
use crate::doubling::spectrum_gap;
use crate::error::{Error, Result};
use crate::operators::{assemble_laplacian, eigendecompose, BoundaryCondition, EigenBasis};
use crate::sim::{free_evolution, run_simultaneous, Method, RunOptions};
use crate::specineq::{
    estimate_constant_l2, estimate_constant_lp, fit_exponential, EstimateMethod,
    SpectralConstantEstimate,
};
use crate::spectral::{project, SpectralCutoff};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::SingularGramian { .. } | Error::Infeasible(_) | Error::Numerical(_) => {
            EXIT_INFEASIBLE
        }
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckResult {
    pub pass: bool,
    pub max_residual: f64,
}

fn check(residual: f64, tol: f64) -> CheckResult {
    CheckResult {
        pass: residual <= tol,
        max_residual: residual,
    }
}

/// Spectrum union, extension eigenvectors, link identity and split∘extend.
pub fn double_check(cfg: &ExperimentConfig) -> Result<BTreeMap<&'static str, CheckResult>> {
    let setup = cfg.setup()?;
    let (g, co, dd) = (&setup.grid, &setup.coeffs, &setup.double);
    let n = g.n();

    // Independent dense solves for the spectra.
    let dense = |bc| eigendecompose(&assemble_laplacian(g, co, bc)?);
    let d = dense(BoundaryCondition::Dirichlet)?;
    let nb = dense(BoundaryCondition::Neumann)?;
    let periodic = eigendecompose(dd.operator())?;
    let mut union: Vec<f64> = d
        .eigenvalues()
        .iter()
        .chain(nb.eigenvalues())
        .copied()
        .collect();
    union.sort_by(f64::total_cmp);
    let spectrum = spectrum_gap(periodic.eigenvalues(), &union)?;

    let b = setup.extended.basis();
    let scale = b.eigenvalues().last().copied().unwrap_or(1.0).max(1.0);
    let mut extension: f64 = 0.0;
    for k in 0..b.len() {
        let col = b.vectors().column(k);
        let applied = dd.operator().apply(col.as_slice());
        let lam = b.eigenvalues()[k];
        let r = applied
            .iter()
            .zip(col.iter())
            .map(|(a, v)| (a - lam * v).abs())
            .fold(0.0, f64::max);
        extension = extension.max(r / scale);
    }
    let gram_dev = (b.gram() - nalgebra::DMatrix::identity(b.len(), b.len())).amax();
    extension = extension.max(gram_dev);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut link: f64 = 0.0;
    let mut split: f64 = 0.0;
    let top = setup
        .dirichlet
        .max_frequency()
        .max(setup.neumann.max_frequency());
    for _ in 0..100 {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lambda = rng.random_range(0.0..1.05 * top);
        let tilde = dd.extend_pair(&u, &v)?;
        let cut = |basis: &EigenBasis| SpectralCutoff::new(basis, lambda);
        let pt = project(b, &cut(b), &tilde)?;
        let pd = project(&setup.dirichlet, &cut(&setup.dirichlet), &u)?;
        let pn = project(&setup.neumann, &cut(&setup.neumann), &v)?;
        let (plus, minus) = (dd.restrict_plus(&pt), dd.restrict_minus(&pt));
        for i in 0..n {
            link = link
                .max((plus[i] - (pd[i] + pn[i])).abs())
                .max((minus[i] - (pn[i] - pd[i])).abs());
        }
        let (us, vs) = dd.split(&tilde)?;
        for i in 0..n {
            split = split.max((us[i] - u[i]).abs()).max((vs[i] - v[i]).abs());
        }
    }

    Ok(BTreeMap::from([
        ("spectrum_union", check(spectrum, cfg.tolerance("spectrum"))),
        (
            "extension_eigenvectors",
            check(extension, cfg.tolerance("extension")),
        ),
        ("link_identity", check(link, cfg.tolerance("link"))),
        ("split_extend", check(split, cfg.tolerance("split"))),
    ]))
}

pub fn cmd_double_check(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let checks = double_check(cfg)?;
    write_json(&out.join("double_check.json"), &checks)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, c)| !c.pass)
        .map(|(k, _)| *k)
        .collect();
    Ok(if failed.is_empty() {
        Outcome {
            code: EXIT_OK,
            message: format!("all {} checks pass", checks.len()),
        }
    } else {
        Outcome {
            code: EXIT_TOLERANCE,
            message: format!("failed: {}", failed.join(", ")),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dirichlet,
    Neumann,
    Simultaneous,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Dirichlet => "dirichlet",
            Family::Neumann => "neumann",
            Family::Simultaneous => "simultaneous",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpecRow {
    pub family: Family,
    pub estimate: SpectralConstantEstimate,
}

/// Exact-LP and σ-min estimates for every Λ of the sweep and every family.
pub fn spectral_sweep(cfg: &ExperimentConfig) -> Result<Vec<SpecRow>> {
    if cfg.lambda_sweep.is_empty() {
        return Err(Error::Config("lambda_sweep must not be empty".into()));
    }
    if cfg
        .lambda_sweep
        .iter()
        .any(|l| !(l.is_finite() && *l >= 0.0))
    {
        return Err(Error::Config(
            "lambda_sweep entries must be finite and nonnegative".into(),
        ));
    }
    let setup = cfg.setup()?;
    let region = cfg.region(&setup.grid)?;
    let lifted = setup.double.lift_region(&region)?;
    let mut jobs = Vec::new();
    for &lambda in &cfg.lambda_sweep {
        for family in [Family::Dirichlet, Family::Neumann, Family::Simultaneous] {
            for method in [EstimateMethod::ExactLp, EstimateMethod::SigmaMinL2] {
                jobs.push((lambda, family, method));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(lambda, family, method)| {
            let (basis, omega) = match family {
                Family::Dirichlet => (&setup.dirichlet, &region),
                Family::Neumann => (&setup.neumann, &region),
                Family::Simultaneous => (setup.extended.basis(), &lifted),
            };
            let cutoff = SpectralCutoff::new(basis, lambda);
            let mut estimate = if cutoff.count == 0 {
                // Nothing below Λ: the inequality holds with any constant.
                SpectralConstantEstimate {
                    lambda,
                    mode_count: 0,
                    region_measure: omega.measure(),
                    constant: 0.0,
                    method,
                    certificate: None,
                }
            } else if method == EstimateMethod::ExactLp {
                estimate_constant_lp(basis, &cutoff, omega)?
            } else {
                estimate_constant_l2(basis, &cutoff, omega)?
            };
            estimate.region_measure = region.measure();
            Ok(SpecRow { family, estimate })
        })
        .collect()
}

pub fn specineq_csv(rows: &[SpecRow]) -> String {
    let mut out = String::from("lambda,family,method,mode_count,region_measure,constant\n");
    for r in rows {
        let e = &r.estimate;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_real(e.lambda),
            r.family.name(),
            e.method,
            e.mode_count,
            fmt_real(e.region_measure),
            fmt_real(e.constant)
        ));
    }
    out
}

pub fn cmd_specineq(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let rows = spectral_sweep(cfg)?;
    write_atomic(&out.join("specineq.csv"), specineq_csv(&rows).as_bytes())?;
    let mut fits = serde_json::Map::new();
    for family in [Family::Dirichlet, Family::Neumann, Family::Simultaneous] {
        let finite: Vec<SpectralConstantEstimate> = rows
            .iter()
            .filter(|r| {
                r.family == family
                    && r.estimate.method == EstimateMethod::ExactLp
                    && r.estimate.constant.is_finite()
                    && r.estimate.constant > 0.0
            })
            .map(|r| r.estimate.clone())
            .collect();
        let fit = fit_exponential(&finite).ok();
        fits.insert(family.name().into(), serde_json::to_value(fit)?);
    }
    write_json(&out.join("fit.json"), &fits)?;
    let with_modes: Vec<&SpecRow> = rows.iter().filter(|r| r.estimate.mode_count > 0).collect();
    let infinite = with_modes
        .iter()
        .filter(|r| r.estimate.constant.is_infinite())
        .count();
    if !with_modes.is_empty() && infinite == with_modes.len() {
        return Ok(Outcome {
            code: EXIT_INFEASIBLE,
            message: "every estimate is infinite: region too small at this resolution".into(),
        });
    }
    Ok(Outcome {
        code: EXIT_OK,
        message: format!("{} estimates, {infinite} infinite", rows.len()),
    })
}

pub fn cmd_control(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let setup = cfg.setup()?;
    let region = cfg.region(&setup.grid)?;
    let pairs = cfg.initial_pairs(&setup.grid)?;
    let key = match cfg.method {
        Method::Hum => "hum",
        Method::Lr => "lr",
    };
    let opts = RunOptions {
        steps: cfg.steps,
        lambda0: cfg.lambda0,
        tolerance: Some(cfg.tolerance(key)),
    };
    let suffix = |k: usize| {
        if pairs.len() == 1 {
            String::new()
        } else {
            format!("_p{k}")
        }
    };
    let mut runs = Vec::new();
    let mut all_ok = true;
    for (k, (u0, v0)) in pairs.iter().enumerate() {
        let run = run_simultaneous(&setup, u0, v0, &region, cfg.horizon, cfg.method, &opts)?;
        let s = suffix(k);
        write_atomic(
            &out.join(format!("control{s}.csv")),
            control_csv(&run.double_signal).as_bytes(),
        )?;
        write_atomic(
            &out.join(format!("shared_control{s}.csv")),
            control_csv(&run.shared_signal).as_bytes(),
        )?;
        let norms = norms_csv(&[
            ("dirichlet", &run.dirichlet),
            ("neumann", &run.neumann),
            ("double", &run.double),
        ]);
        write_atomic(&out.join(format!("norms{s}.csv")), norms.as_bytes())?;
        if let Some(ledger) = &run.lr_ledger {
            write_json(&out.join(format!("ledger{s}.json")), ledger)?;
        }
        all_ok &= run.report.within_tolerance;
        runs.push(json!({
            "pair": k,
            "report": run.report,
            "continuation": run.continuation,
        }));
    }
    let summary = json!({
        "config": cfg,
        "region": {"cells": region.cell_count(), "measure": region.measure()},
        "runs": runs,
        "all_within_tolerance": all_ok,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(if all_ok {
        Outcome {
            code: EXIT_OK,
            message: format!("{} pair(s) controlled within tolerance", pairs.len()),
        }
    } else {
        Outcome {
            code: EXIT_TOLERANCE,
            message: "tolerance missed; see summary.json".into(),
        }
    })
}

/// Uncontrolled evolution of the initial pairs; a baseline for `control`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let setup = cfg.setup()?;
    let pairs = cfg.initial_pairs(&setup.grid)?;
    let mut runs = Vec::new();
    for (k, (u0, v0)) in pairs.iter().enumerate() {
        let run = free_evolution(&setup, u0, v0, cfg.horizon, cfg.steps)?;
        let s = if pairs.len() == 1 {
            String::new()
        } else {
            format!("_p{k}")
        };
        let norms = norms_csv(&[
            ("dirichlet", &run.dirichlet),
            ("neumann", &run.neumann),
            ("double", &run.double),
        ]);
        write_atomic(&out.join(format!("norms{s}.csv")), norms.as_bytes())?;
        runs.push(json!({"pair": k, "report": run.report}));
    }
    write_json(
        &out.join("summary.json"),
        &json!({"config": cfg, "runs": runs}),
    )?;
    Ok(Outcome {
        code: EXIT_OK,
        message: format!("{} pair(s) evolved freely", pairs.len()),
    })
}

pub fn cmd_fatcantor(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    if !cfg.region.trim().starts_with("fatcantor:") {
        return Err(Error::Config(
            "fatcantor needs a region of the form \"fatcantor:MEASURE:DEPTH\"".into(),
        ));
    }
    let (grid, _) = cfg.grid_and_coefficients()?;
    let region = cfg.region(&grid)?;
    write_atomic(&out.join("mask.txt"), region.to_mask_string().as_bytes())?;
    write_json(
        &out.join("fatcantor.json"),
        &json!({
            "config": cfg,
            "measure": region.measure(),
            "cells": region.cell_count(),
            "longest_run": region.longest_run(),
        }),
    )?;
    Ok(Outcome {
        code: EXIT_OK,
        message: format!("achieved measure {}", fmt_real(region.measure())),
    })
}
