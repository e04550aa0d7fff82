//! Refinement studies with fitted orders.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ConvergeConfig, ConvergencePreset};
use crate::error::{Error, Result};
use crate::geometry::{build_surface_mesh, Meshes};
use crate::integrator::{simulate, Discretization, RunOptions, RunStatus, Scheme, State, StepControl};
use crate::monitors::MonitorSpec;
use crate::operators::{assemble_bulk_laplacian, assemble_laplace_beltrami, solve_shifted, FluxInjection};
use crate::reaction_model::{builtin, ModelFile, ReactionSystem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Level {
    pub resolution: usize,
    /// Mesh spacing or time step, the abscissa of the fit.
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub preset: ConvergencePreset,
    pub levels: Vec<Level>,
    /// Least-squares slope of `log error` against `log h`.
    pub order: f64,
    /// Root-mean-square residual of the fit in `log` space.
    pub fit_residual: f64,
    /// Errors decrease strictly as `h` decreases.
    pub monotone: bool,
    pub expected_order: Option<f64>,
    pub order_tol: f64,
    pub order_passed: Option<bool>,
}

/// `(slope, rms residual)` of the least-squares line through `(x, y)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / n).sqrt())
}

pub fn converge(cfg: &ConvergeConfig) -> Result<ConvergenceReport> {
    if cfg.ladder.len() < 3 {
        return Err(Error::Precondition(format!(
            "a refinement ladder needs at least 3 levels, got {}",
            cfg.ladder.len()
        )));
    }
    let reference = if cfg.preset == ConvergencePreset::CoupledToy {
        let finest = *cfg.ladder.iter().max().expect("non-empty ladder");
        Some(coupled_toy_mass(2 * finest, cfg)?)
    } else {
        None
    };
    let levels = cfg
        .ladder
        .par_iter()
        .map(|&n| match cfg.preset {
            ConvergencePreset::SurfaceEigenmode => surface_eigenmode_spatial(n, cfg),
            ConvergencePreset::SurfaceEigenmodeTemporal => surface_eigenmode_temporal(n, cfg),
            ConvergencePreset::ManufacturedBulk => manufactured_bulk(n, cfg),
            ConvergencePreset::CoupledToy => {
                let s = coupled_toy_mass(n, cfg)?;
                Ok(Level { resolution: n, h: 1.0 / n as f64, error: (s - reference.unwrap()).abs() })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sorted = levels.clone();
    sorted.sort_by(|a, b| b.h.total_cmp(&a.h));
    if let Some(bad) = sorted.iter().find(|l| !(l.error > 0.0 && l.error.is_finite())) {
        return Err(Error::Precondition(format!(
            "error at resolution {} is {}; no order can be fitted",
            bad.resolution, bad.error
        )));
    }
    let monotone = sorted.windows(2).all(|w| w[1].error < w[0].error);
    let x: Vec<f64> = sorted.iter().map(|l| l.h.ln()).collect();
    let y: Vec<f64> = sorted.iter().map(|l| l.error.ln()).collect();
    let (order, fit_residual) = fit_line(&x, &y);
    let order_passed = cfg.expected_order.map(|p| (order - p).abs() <= cfg.order_tol);
    Ok(ConvergenceReport {
        preset: cfg.preset,
        levels,
        order,
        fit_residual,
        monotone,
        expected_order: cfg.expected_order,
        order_tol: cfg.order_tol,
        order_passed,
    })
}

const SURFACE_HEAT: &str = r#"{"name": "surface_heat", "bulk_species": ["u"], "surface_species": ["v"],
    "diffusivity": [1], "surface_diffusivity": [1], "H": ["0"], "F": ["0"], "G": ["0"],
    "quasi_positive": false}"#;

fn fixed_step_options(t_end: f64, dt: f64, scheme: Scheme) -> RunOptions {
    RunOptions {
        t_end,
        scheme,
        control: StepControl { dt: Some(dt), dt_min: dt.min(1e-8), dt_max: dt, ..StepControl::default() },
        monitors: MonitorSpec { ledger: false, conservation: false, nonnegativity: false, ..MonitorSpec::default() },
        snapshot_every: None,
        compatibility_tol: f64::INFINITY,
    }
}

fn run_surface_heat(n_theta: usize, t_end: f64, dt: f64, scheme: Scheme) -> Result<(Meshes<f64>, Vec<f64>)> {
    let (sys, _) = ModelFile::from_json(SURFACE_HEAT)?.compile()?;
    let meshes = Meshes::build(1.0f64, 2, n_theta)?;
    let v0 = meshes.surface.sample(|th: f64| th.cos());
    let u0 = vec![0.0; meshes.bulk.n_cells()];
    let disc = Discretization::new(&sys, meshes.clone())?;
    let out = simulate(&sys, State::new(0.0, vec![u0], vec![v0]), &disc, &fixed_step_options(t_end, dt, scheme))?;
    expect_completed(&out.status)?;
    Ok((meshes, out.final_state().v[0].clone()))
}

fn expect_completed(status: &RunStatus) -> Result<()> {
    match status {
        RunStatus::Completed => Ok(()),
        other => Err(Error::Precondition(format!("convergence run did not complete: {other:?}"))),
    }
}

/// CN at a fixed small step against `e^{−t} cos θ`.
fn surface_eigenmode_spatial(n_theta: usize, cfg: &ConvergeConfig) -> Result<Level> {
    let (meshes, v) = run_surface_heat(n_theta, cfg.t_end, cfg.dt, Scheme::ImexCn)?;
    let decay = (-cfg.t_end).exp();
    let error = meshes
        .surface
        .node_angles
        .iter()
        .zip(&v)
        .map(|(th, vi)| (vi - decay * th.cos()).abs())
        .fold(0.0, f64::max);
    Ok(Level { resolution: n_theta, h: meshes.surface.dtheta, error })
}

/// Backward Euler with `steps` steps against the semi-discrete solution
/// `e^{λ_h t} cos θ`, which removes the spatial error.
fn surface_eigenmode_temporal(steps: usize, cfg: &ConvergeConfig) -> Result<Level> {
    let n_theta = cfg.n_theta.unwrap_or(32);
    let dt = cfg.t_end / steps as f64;
    let (meshes, v) = run_surface_heat(n_theta, cfg.t_end, dt, Scheme::ImexBe)?;
    let op = assemble_laplace_beltrami(&meshes.surface, 1.0)?;
    let c = meshes.surface.sample(|th| th.cos());
    let kc = op.apply_vec(&c);
    let lambda = kc[0] / c[0];
    let decay = (lambda * cfg.t_end).exp();
    let error = c.iter().zip(&v).map(|(ci, vi)| (vi - decay * ci).abs()).fold(0.0, f64::max);
    Ok(Level { resolution: steps, h: dt, error })
}

/// `u = e^{−t}(1 − r² + r³cos θ)` solves `u_t = Δu + s` with
/// `s = e^{−t}(3 + r² − r³cos θ − 8r cos θ)` and `∂u/∂r = e^{−t}(3cos θ − 2)`
/// on the unit circle. Crank–Nicolson at a fixed small step; the error is
/// the maximum over cell centres at `t_end`.
fn manufactured_bulk(n_r: usize, cfg: &ConvergeConfig) -> Result<Level> {
    let n_theta = cfg.n_theta.unwrap_or(4 * n_r);
    let meshes = Meshes::build(1.0, n_r, n_theta)?;
    let mesh = &meshes.bulk;
    let op = assemble_bulk_laplacian(mesh, 1.0)?;
    let inj = FluxInjection::new(mesh);
    let exact = |r: f64, th: f64, t: f64| (-t).exp() * (1.0 - r * r + r.powi(3) * th.cos());
    let source = |r: f64, th: f64, t: f64| (-t).exp() * (3.0 + r * r - r.powi(3) * th.cos() - 8.0 * r * th.cos());
    let flux = |th: f64, t: f64| (-t).exp() * (3.0 * th.cos() - 2.0);
    let load = |t: f64| -> Vec<f64> {
        let mut b: Vec<f64> = mesh
            .cell_centers
            .iter()
            .zip(&mesh.cell_areas)
            .map(|(&(r, th), &a)| a * source(r, th, t))
            .collect();
        for ((&cell, &len), face) in inj.targets.iter().zip(&inj.lengths).zip(&mesh.boundary_faces) {
            b[cell] += len * flux(face.normal_angle, t);
        }
        b
    };
    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let dt = cfg.t_end / steps as f64;
    let mut u: Vec<f64> = mesh.cell_centers.iter().map(|&(r, th)| exact(r, th, 0.0)).collect();
    let mut next = u.clone();
    let mut load_old = load(0.0);
    for n in 0..steps {
        let t_new = (n + 1) as f64 * dt;
        let load_new = load(t_new);
        let ku = op.stiffness.apply_vec(&u);
        let rhs: Vec<f64> = (0..u.len())
            .map(|c| op.mass[c] * u[c] + 0.5 * dt * ku[c] + 0.5 * dt * (load_old[c] + load_new[c]))
            .collect();
        next.copy_from_slice(&u);
        solve_shifted(&op, 0.5 * dt, &rhs, &mut next, 1e-12, 20_000)?;
        std::mem::swap(&mut u, &mut next);
        load_old = load_new;
    }
    let error = mesh
        .cell_centers
        .iter()
        .zip(&u)
        .map(|(&(r, th), &ui)| (ui - exact(r, th, cfg.t_end)).abs())
        .fold(0.0, f64::max);
    Ok(Level { resolution: n_r, h: mesh.dr, error })
}

/// Final surface mass of `toy_conserving` with the built-in initial data.
fn coupled_toy_mass(n_r: usize, cfg: &ConvergeConfig) -> Result<f64> {
    let (sys, init): (ReactionSystem, _) = builtin("toy_conserving")?;
    let n_theta = cfg.n_theta.unwrap_or(4 * n_r);
    let meshes = Meshes::build(1.0, n_r, n_theta)?;
    let (u, v) = init.realize(&sys, &meshes.bulk, &meshes.surface)?;
    let disc = Discretization::new(&sys, meshes)?;
    let out = simulate(&sys, State::new(0.0, u, v), &disc, &fixed_step_options(cfg.t_end, cfg.dt, Scheme::ImexCn))?;
    expect_completed(&out.status)?;
    let surface = build_surface_mesh(1.0, n_theta)?;
    Ok(out.final_state().v[0].iter().zip(&surface.node_weights).map(|(a, w)| a * w).sum())
}
