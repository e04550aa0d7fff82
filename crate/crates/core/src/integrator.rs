//! IMEX time stepping of the coupled bulk-surface system.
//!
//! Diffusion is implicit per species; `H`, `F` and the boundary flux `G`
//! are evaluated explicitly at the old state, `F` and `G` at trace values.
//! Each species solve is independent and they run on the rayon pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Meshes;
use crate::monitors::{MonitorLog, MonitorSpec};
use crate::operators::{
    apply_flux, assemble_bulk_laplacian, assemble_laplace_beltrami, solve_shifted, DiffusionOperator,
    FluxInjection,
};
use crate::reaction_model::ReactionSystem;
use crate::scalar::{sup_norm, Real};

/// Concentrations at time `t`; `u[j][cell]`, `v[i][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub t: T,
    pub u: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> State<T> {
    pub fn new(t: T, u: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Self {
        State { t, u, v }
    }

    pub fn validate(&self, meshes: &Meshes<T>, sys: &ReactionSystem) -> Result<()> {
        if self.u.len() != sys.k() || self.v.len() != sys.m() {
            return Err(Error::Precondition(format!(
                "state has {} bulk and {} surface fields, model needs {} and {}",
                self.u.len(),
                self.v.len(),
                sys.k(),
                sys.m()
            )));
        }
        let n_cells = meshes.bulk.n_cells();
        let n_nodes = meshes.surface.n_theta;
        if self.u.iter().any(|f| f.len() != n_cells) || self.v.iter().any(|f| f.len() != n_nodes) {
            return Err(Error::Precondition("state shape does not match the meshes".into()));
        }
        if !self.is_finite() {
            return Err(Error::Precondition("state contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn fields(&self) -> impl Iterator<Item = &Vec<T>> {
        self.u.iter().chain(&self.v)
    }

    pub fn is_finite(&self) -> bool {
        self.fields().flatten().all(|x| x.is_finite())
    }

    pub fn sup_norm(&self) -> T {
        self.fields().map(|f| sup_norm(f)).fold(T::zero(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.fields().flatten().fold(T::infinity(), |m, &x| m.min(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImexBe,
    ImexCn,
}

impl Scheme {
    fn implicit_weight<T: Real>(self) -> T {
        match self {
            Scheme::ImexBe => T::one(),
            Scheme::ImexCn => T::lit(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepControl {
    /// Initial step; `None` uses `min(dt_max, 0.1·Δx²_min/d_max)`.
    pub dt: Option<f64>,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Factor applied to `dt` on rejection.
    pub safety: f64,
    /// `None` uses `10⁶·max(1, sup|data|)`.
    pub blowup_threshold: Option<f64>,
    pub max_solver_iterations: usize,
    pub solver_tol: f64,
    /// `None` uses `1e-10 × data scale`.
    pub negativity_tol: Option<f64>,
    pub max_relative_change: f64,
    pub grow_after: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt: None,
            dt_min: 1e-8,
            dt_max: 1e-2,
            safety: 0.5,
            blowup_threshold: None,
            max_solver_iterations: 5000,
            solver_tol: 1e-10,
            negativity_tol: None,
            max_relative_change: 0.25,
            grow_after: 10,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_max
            && self.dt.map_or(true, |dt| dt >= self.dt_min && dt <= self.dt_max)
            && self.safety > 0.0
            && self.safety < 1.0
            && self.blowup_threshold.map_or(true, |b| b > 0.0)
            && self.max_relative_change > 0.0
            && self.solver_tol > 0.0
            && self.max_solver_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step control: {self:?}")))
        }
    }
}

/// Assembled operators for one system on one mesh pair.
#[derive(Debug, Clone)]
pub struct Discretization<T> {
    pub meshes: Meshes<T>,
    pub bulk_ops: Vec<DiffusionOperator<T>>,
    pub surface_ops: Vec<DiffusionOperator<T>>,
    pub injection: FluxInjection<T>,
}

impl<T: Real> Discretization<T> {
    pub fn new(sys: &ReactionSystem, meshes: Meshes<T>) -> Result<Self> {
        let bulk_ops = sys
            .diffusivity
            .iter()
            .map(|&d| assemble_bulk_laplacian(&meshes.bulk, T::lit(d)))
            .collect::<Result<Vec<_>>>()?;
        let surface_ops = sys
            .surface_diffusivity
            .iter()
            .map(|&d| assemble_laplace_beltrami(&meshes.surface, T::lit(d)))
            .collect::<Result<Vec<_>>>()?;
        let injection = FluxInjection::new(&meshes.bulk);
        Ok(Discretization { meshes, bulk_ops, surface_ops, injection })
    }

    /// `min(dt_max, 0.1·Δx²_min/d_max)`.
    pub fn initial_dt(&self, sys: &ReactionSystem, dt_max: f64) -> f64 {
        let h = self.meshes.bulk.min_spacing().as_f64();
        let d_max = sys
            .diffusivity
            .iter()
            .chain(&sys.surface_diffusivity)
            .cloned()
            .fold(0.0, f64::max);
        let surface_h = (self.meshes.surface.radius * self.meshes.surface.dtheta).as_f64();
        dt_max.min(0.1 * h.min(surface_h).powi(2) / d_max)
    }
}

/// Explicit reaction terms at one state.
#[derive(Debug, Clone)]
pub struct Reactions<T> {
    /// `h[j][cell]`
    pub h: Vec<Vec<T>>,
    /// `f[i][node]`
    pub f: Vec<Vec<T>>,
    /// `g[j][face]`
    pub g: Vec<Vec<T>>,
}

impl<T: Real> Reactions<T> {
    pub fn evaluate(sys: &ReactionSystem, state: &State<T>, meshes: &Meshes<T>) -> Result<Self> {
        let (k, m) = (sys.k(), sys.m());
        let n_cells = meshes.bulk.n_cells();
        let n_faces = meshes.trace.n_faces();
        let mut h = vec![vec![T::zero(); n_cells]; k];
        let mut f = vec![vec![T::zero(); meshes.surface.n_theta]; m];
        let mut g = vec![vec![T::zero(); n_faces]; k];
        let mut uu = vec![T::zero(); k];
        let mut vv = vec![T::zero(); m];
        let mut hh = vec![T::zero(); k];
        let mut ff = vec![T::zero(); m];
        let mut gg = vec![T::zero(); k];
        for cell in 0..n_cells {
            for j in 0..k {
                uu[j] = state.u[j][cell];
            }
            sys.eval_bulk(&uu, &mut hh)?;
            for j in 0..k {
                h[j][cell] = hh[j];
            }
        }
        for (face, &(_, node)) in meshes.trace.pairs.iter().enumerate() {
            for j in 0..k {
                uu[j] = meshes.trace.trace_at(&state.u[j], face);
            }
            for i in 0..m {
                vv[i] = state.v[i][node];
            }
            sys.eval_boundary(&uu, &vv, &mut ff, &mut gg)?;
            for i in 0..m {
                f[i][node] = ff[i];
            }
            for j in 0..k {
                g[j][face] = gg[j];
            }
        }
        Ok(Reactions { h, f, g })
    }

    /// `(∫H_j + ∫_M G_j, ∫_M F_i)`.
    pub fn totals(&self, disc: &Discretization<T>) -> (Vec<f64>, Vec<f64>) {
        let areas = &disc.meshes.bulk.cell_areas;
        let bulk = self
            .h
            .iter()
            .zip(&self.g)
            .map(|(h, g)| (crate::scalar::dot(h, areas) + disc.injection.total(g)).as_f64())
            .collect();
        let surface = self
            .f
            .iter()
            .map(|f| crate::scalar::dot(f, &disc.meshes.surface.node_weights).as_f64())
            .collect();
        (bulk, surface)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    /// `max |D ∂u/∂η − G(u|_M, v)|` over faces and species.
    pub max_residual: f64,
    /// Per face, max over species.
    pub per_face: Vec<f64>,
    pub tol: f64,
    pub within_tol: bool,
}

/// Discrete compatibility of initial data with the flux condition.
pub fn check_compatibility<T: Real>(
    sys: &ReactionSystem,
    state: &State<T>,
    meshes: &Meshes<T>,
    tol: f64,
) -> Result<CompatibilityReport> {
    state.validate(meshes, sys)?;
    let (k, m) = (sys.k(), sys.m());
    let mut uu = vec![T::zero(); k];
    let mut vv = vec![T::zero(); m];
    let mut ff = vec![T::zero(); m];
    let mut gg = vec![T::zero(); k];
    let mut per_face = Vec::with_capacity(meshes.trace.n_faces());
    for (face, &(_, node)) in meshes.trace.pairs.iter().enumerate() {
        for j in 0..k {
            uu[j] = meshes.trace.trace_at(&state.u[j], face);
        }
        for i in 0..m {
            vv[i] = state.v[i][node];
        }
        sys.eval_boundary(&uu, &vv, &mut ff, &mut gg)?;
        let worst = (0..k)
            .map(|j| {
                let flux = T::lit(sys.diffusivity[j]) * meshes.trace.normal_derivative_at(&state.u[j], face);
                (flux - gg[j]).abs().as_f64()
            })
            .fold(0.0, f64::max);
        per_face.push(worst);
    }
    let max_residual = per_face.iter().cloned().fold(0.0, f64::max);
    Ok(CompatibilityReport { max_residual, per_face, tol, within_tol: max_residual <= tol })
}

/// One IMEX step of size `dt` from `state`, with reactions already
/// evaluated at `state`.
pub fn step_with<T: Real>(
    state: &State<T>,
    reactions: &Reactions<T>,
    disc: &Discretization<T>,
    dt: T,
    scheme: Scheme,
    control: &StepControl,
) -> Result<State<T>> {
    let theta: T = scheme.implicit_weight();
    let explicit = T::one() - theta;
    let shift = dt * theta;
    let (tol, max_iter) = (control.solver_tol, control.max_solver_iterations);
    let bulk_solve = |j: usize| -> Result<Vec<T>> {
        let op = &disc.bulk_ops[j];
        let u = &state.u[j];
        let mut src = reactions.h[j].clone();
        apply_flux(&disc.injection, &reactions.g[j], &mut src);
        let mut rhs: Vec<T> = (0..u.len()).map(|c| op.mass[c] * (u[c] + dt * src[c])).collect();
        if explicit > T::zero() {
            let ku = op.stiffness.apply_vec(u);
            for (r, k) in rhs.iter_mut().zip(ku) {
                *r += dt * explicit * k;
            }
        }
        let mut x = u.clone();
        solve_shifted(op, shift, &rhs, &mut x, tol, max_iter)?;
        Ok(x)
    };
    let surface_solve = |i: usize| -> Result<Vec<T>> {
        let op = &disc.surface_ops[i];
        let v = &state.v[i];
        let f = &reactions.f[i];
        let mut rhs: Vec<T> = (0..v.len()).map(|n| op.mass[n] * (v[n] + dt * f[n])).collect();
        if explicit > T::zero() {
            let kv = op.stiffness.apply_vec(v);
            for (r, k) in rhs.iter_mut().zip(kv) {
                *r += dt * explicit * k;
            }
        }
        let mut x = v.clone();
        solve_shifted(op, shift, &rhs, &mut x, tol, max_iter)?;
        Ok(x)
    };
    let k = state.u.len();
    let m = state.v.len();
    let solved: Vec<Result<Vec<T>>> = (0..k + m)
        .into_par_iter()
        .map(|s| if s < k { bulk_solve(s) } else { surface_solve(s - k) })
        .collect();
    let mut fields = solved.into_iter().collect::<Result<Vec<_>>>()?;
    let v = fields.split_off(k);
    Ok(State { t: state.t + dt, u: fields, v })
}

pub fn step<T: Real>(
    state: &State<T>,
    sys: &ReactionSystem,
    disc: &Discretization<T>,
    dt: T,
    scheme: Scheme,
    control: &StepControl,
) -> Result<State<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    let reactions = Reactions::evaluate(sys, state, &disc.meshes)?;
    step_with(state, &reactions, disc, dt, scheme, control)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowupDetected { t_est: f64 },
    StepFailure { t: f64, reason: String },
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub status: RunStatus,
    /// Initial state, states at snapshot times, final state.
    pub trajectory: Vec<State<T>>,
    pub monitor_log: MonitorLog,
    pub compatibility: CompatibilityReport,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub negativity_tol: f64,
    pub blowup_threshold: f64,
}

impl<T: Real> RunOutcome<T> {
    pub fn final_state(&self) -> &State<T> {
        self.trajectory.last().expect("trajectory holds the initial state")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    pub scheme: Scheme,
    pub control: StepControl,
    pub monitors: MonitorSpec,
    /// Store a snapshot whenever time crosses a multiple of this.
    pub snapshot_every: Option<f64>,
    pub compatibility_tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            t_end: 1.0,
            scheme: Scheme::ImexBe,
            control: StepControl::default(),
            monitors: MonitorSpec::default(),
            snapshot_every: None,
            compatibility_tol: 1e-6,
        }
    }
}

/// Adaptive run to `t_end` or until blow-up or failure.
pub fn simulate<T: Real>(
    sys: &ReactionSystem,
    initial: State<T>,
    disc: &Discretization<T>,
    opts: &RunOptions,
) -> Result<RunOutcome<T>> {
    let control = &opts.control;
    control.validate()?;
    initial.validate(&disc.meshes, sys)?;
    if !(opts.t_end > initial.t.as_f64()) {
        return Err(Error::Precondition(format!("t_end ({}) must exceed the initial time", opts.t_end)));
    }
    let data_scale = initial.sup_norm().as_f64().max(f64::MIN_POSITIVE);
    let neg_tol = control.negativity_tol.unwrap_or(1e-10 * data_scale);
    let blowup_threshold = control.blowup_threshold.unwrap_or(1e6 * data_scale.max(1.0));
    let change_floor = 1e-6 * data_scale;

    let mut log = MonitorLog::new(sys, &disc.meshes, opts.monitors.clone());
    let compatibility = check_compatibility(sys, &initial, &disc.meshes, opts.compatibility_tol)?;
    let t0 = initial.t.as_f64();
    if !compatibility.within_tol {
        log.event(
            t0,
            "compatibility_warning",
            format!("max |D du/dn - G| = {:.3e} exceeds {:.1e}", compatibility.max_residual, opts.compatibility_tol),
        );
    }

    let mut state = initial;
    let mut reactions = match Reactions::evaluate(sys, &state, &disc.meshes) {
        Ok(r) => r,
        Err(e) => return Err(e),
    };
    let (br, sr) = reactions.totals(disc);
    log.observe(&state, &disc.meshes, 0.0, br, sr)?;
    let mut trajectory = vec![state.clone()];
    let mut next_snapshot = opts.snapshot_every.map(|s| t0 + s);

    let mut dt = control.dt.unwrap_or_else(|| disc.initial_dt(sys, control.dt_max)).max(control.dt_min);
    let mut calm_steps = 0usize;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let end_tol = 1e-12 * opts.t_end.abs().max(1.0);
    let status = loop {
        let t = state.t.as_f64();
        if t >= opts.t_end - end_tol {
            break RunStatus::Completed;
        }
        let dt_try = dt.min(opts.t_end - t);
        let at_floor = dt_try <= control.dt_min * (1.0 + 1e-12);
        let candidate = step_with(&state, &reactions, disc, T::lit(dt_try), opts.scheme, control);
        let new = match candidate {
            Ok(s) => s,
            Err(e) if !at_floor => {
                log.event(t, "step_retry", e.to_string());
                dt = (dt_try * control.safety).max(control.dt_min);
                rejected += 1;
                calm_steps = 0;
                continue;
            }
            Err(e) => break RunStatus::StepFailure { t, reason: e.to_string() },
        };
        let finite = new.is_finite();
        let negative = sys.quasi_positive && finite && new.min_value().as_f64() < -neg_tol;
        let rel_change = if finite {
            state
                .fields()
                .zip(new.fields())
                .map(|(old, nw)| {
                    let diff = old
                        .iter()
                        .zip(nw)
                        .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
                        .as_f64();
                    diff / sup_norm(old).as_f64().max(change_floor)
                })
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        let triggered = negative || rel_change > control.max_relative_change;
        if triggered && !at_floor {
            dt = (dt_try * control.safety).max(control.dt_min);
            rejected += 1;
            calm_steps = 0;
            continue;
        }
        if !finite {
            break RunStatus::BlowupDetected { t_est: t };
        }
        let new_reactions = match Reactions::evaluate(sys, &new, &disc.meshes) {
            Ok(r) => r,
            Err(_) if at_floor && new.sup_norm().as_f64() > blowup_threshold => {
                break RunStatus::BlowupDetected { t_est: new.t.as_f64() };
            }
            Err(e) => break RunStatus::StepFailure { t: new.t.as_f64(), reason: e.to_string() },
        };
        state = new;
        reactions = new_reactions;
        accepted += 1;
        let (br, sr) = reactions.totals(disc);
        let t_new = state.t.as_f64();
        log.observe(&state, &disc.meshes, dt_try, br, sr)?;
        if negative {
            log.event(t_new, "negativity", format!("min = {:.3e} accepted at dt_min", state.min_value().as_f64()));
        }
        if let Some(ns) = next_snapshot.as_mut() {
            if t_new >= *ns - end_tol {
                trajectory.push(state.clone());
                let every = opts.snapshot_every.expect("set with next_snapshot");
                while *ns <= t_new + end_tol {
                    *ns += every;
                }
            }
        }
        if at_floor && state.sup_norm().as_f64() > blowup_threshold {
            break RunStatus::BlowupDetected { t_est: t_new };
        }
        if triggered {
            calm_steps = 0;
        } else {
            calm_steps += 1;
            if calm_steps >= control.grow_after {
                dt = (2.0 * dt).min(control.dt_max);
                calm_steps = 0;
            }
        }
    };
    if trajectory.last().map_or(true, |s| s.t != state.t) {
        trajectory.push(state);
    }
    log.rejected_steps = rejected;
    if let RunStatus::BlowupDetected { t_est } = &status {
        log.event(*t_est, "blowup_detected", format!("sup-norm above {blowup_threshold:.3e} at dt_min"));
    }
    Ok(RunOutcome {
        status,
        trajectory,
        monitor_log: log,
        compatibility,
        accepted_steps: accepted,
        rejected_steps: rejected,
        negativity_tol: neg_tol,
        blowup_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction_model::{builtin, ModelFile};

    fn setup(name: &str, n_r: usize, n_theta: usize) -> (ReactionSystem, Discretization<f64>) {
        let (sys, _) = builtin(name).unwrap();
        let meshes = Meshes::build(1.0, n_r, n_theta).unwrap();
        let disc = Discretization::new(&sys, meshes).unwrap();
        (sys, disc)
    }

    #[test]
    fn uniform_equilibrium_is_preserved() {
        let text = r#"{"name":"inert","bulk_species":["u"],"surface_species":["v"],
            "diffusivity":[1],"surface_diffusivity":[1],"H":["0"],"F":["0"],"G":["0"]}"#;
        let (sys, _) = ModelFile::from_json(text).unwrap().compile().unwrap();
        let disc = Discretization::new(&sys, Meshes::build(1.0, 8, 16).unwrap()).unwrap();
        let mut s = State::new(0.0f64, vec![vec![1.0; 128]], vec![vec![0.0; 16]]);
        for scheme in [Scheme::ImexBe, Scheme::ImexCn] {
            for _ in 0..20 {
                s = step(&s, &sys, &disc, 0.01, scheme, &StepControl::default()).unwrap();
            }
            assert!(s.u[0].iter().all(|&x| (x - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn toy_conserving_step_keeps_total_mass() {
        let (sys, disc) = setup("toy_conserving", 8, 16);
        let m = &disc.meshes;
        let u = m.bulk.sample(|r, th| 1.0 + 0.3 * r * r * th.cos());
        let v = m.surface.sample(|th| 1.0 + 0.3 * th.sin());
        let s = State::new(0.0, vec![u], vec![v]);
        let total = |s: &State<f64>| crate::monitors::mass(s, m, &[1.0], &[1.0]).unwrap();
        let m0 = total(&s);
        let s1 = step(&s, &sys, &disc, 1e-3, Scheme::ImexBe, &StepControl::default()).unwrap();
        assert!((total(&s1) - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn compatibility_examples() {
        let (sys, disc) = setup("toy_conserving", 8, 16);
        let m = &disc.meshes;
        let n = m.bulk.n_cells();
        let flat = State::new(0.0, vec![vec![1.0; n]], vec![vec![0.0; 16]]);
        assert_eq!(check_compatibility(&sys, &flat, m, 1e-12).unwrap().max_residual, 0.0);
        let bowl = State::new(0.0, vec![m.bulk.sample(|r, _| 1.0 - r * r)], vec![vec![1.0; 16]]);
        let rep = check_compatibility(&sys, &bowl, m, 1e-6).unwrap();
        // Two-cell difference and trace of 1 − r² by hand.
        let dr = 1.0f64 / 8.0;
        let (ro, ri) = (1.0 - 0.5 * dr, 1.0 - 1.5 * dr);
        let du = -(ro * ro - ri * ri) / dr;
        let trace = 1.5 * (1.0 - ro * ro) - 0.5 * (1.0 - ri * ri);
        let expect = (du - (-(trace * trace))).abs();
        assert!((rep.max_residual - expect).abs() < 1e-12);
        assert!(!rep.within_tol);
    }

    #[test]
    fn rejects_bad_control_and_shapes() {
        let (sys, disc) = setup("toy_open", 4, 8);
        let s = State::new(0.0, vec![vec![1.0; 31]], vec![vec![1.0; 8]]);
        assert!(simulate(&sys, s, &disc, &RunOptions::default()).is_err());
        let mut opts = RunOptions::default();
        opts.control.dt_min = 1.0;
        let s = State::new(0.0, vec![vec![1.0; 32]], vec![vec![1.0; 8]]);
        assert!(simulate(&sys, s.clone(), &disc, &opts).is_err());
        assert!(step(&s, &sys, &disc, 0.0, Scheme::ImexBe, &StepControl::default()).is_err());
    }

    #[test]
    fn toy_conserving_run_completes() {
        let (sys, disc) = setup("toy_conserving", 8, 16);
        let m = &disc.meshes;
        let u = m.bulk.sample(|r, th| 1.0 + 0.3 * r * r * th.cos());
        let v = m.surface.sample(|th| 1.0 + 0.3 * th.sin());
        let mut opts = RunOptions::default();
        opts.t_end = 0.2;
        let out = simulate(&sys, State::new(0.0, vec![u], vec![v]), &disc, &opts).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert!((out.final_state().t - 0.2).abs() < 1e-12);
        let summary = out.monitor_log.summarize(out.negativity_tol, true);
        assert!(summary.passed(), "{summary:?}");
    }
}
