//! Observables along a trajectory and the assertions built on them.
//!
//! A [`Sample`] is taken at every accepted state. Rates (`∫H + ∫_M G` per
//! bulk species, `∫_M F` per surface species) are evaluated at the same
//! state, so the step from sample `k−1` to `k` must satisfy
//! `M_k − M_{k−1} = dt_k · rate_{k−1}` for every species.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Meshes;
use crate::integrator::State;
use crate::reaction_model::{ConservedCombination, ReactionSystem};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Bulk,
    Surface,
}

/// Quadrature mass `Σ area·(cᵘ·u) + Σ weight·(cᵛ·v)`.
pub fn mass<T: Real>(state: &State<T>, meshes: &Meshes<T>, cu: &[f64], cv: &[f64]) -> Result<T> {
    if cu.len() != state.u.len() || cv.len() != state.v.len() {
        return Err(Error::Precondition(format!(
            "weights have dimensions ({}, {}), state has ({}, {})",
            cu.len(),
            cv.len(),
            state.u.len(),
            state.v.len()
        )));
    }
    let mut total = T::zero();
    for (field, &c) in state.u.iter().zip(cu) {
        if c != 0.0 {
            total += T::lit(c) * integral(field, &meshes.bulk.cell_areas);
        }
    }
    for (field, &c) in state.v.iter().zip(cv) {
        if c != 0.0 {
            total += T::lit(c) * integral(field, &meshes.surface.node_weights);
        }
    }
    Ok(total)
}

pub fn integral<T: Real>(field: &[T], weights: &[T]) -> T {
    field.iter().zip(weights).fold(T::zero(), |acc, (&f, &w)| acc + f * w)
}

/// Weighted `p`-norm; `p = ∞` gives the max abs entry.
pub fn weighted_lp<T: Real>(field: &[T], weights: &[T], p: f64) -> T {
    if p.is_infinite() {
        return field.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    }
    let pt = T::lit(p);
    let sum = field
        .iter()
        .zip(weights)
        .fold(T::zero(), |acc, (&f, &w)| acc + w * f.abs().powf(pt));
    sum.powf(T::one() / pt)
}

/// `(Σ πₖ |fₖ|^p)^{1/p}` with `π = weights / Σ weights`.
pub fn power_mean<T: Real>(field: &[T], weights: &[T], p: f64) -> T {
    if p.is_infinite() {
        return weighted_lp(field, weights, p);
    }
    let total = weights.iter().fold(T::zero(), |a, &w| a + w);
    weighted_lp(field, weights, p) / total.powf(T::one() / T::lit(p))
}

pub fn lp_norm<T: Real>(
    state: &State<T>,
    meshes: &Meshes<T>,
    p: f64,
    species: usize,
    domain: Domain,
) -> Result<T> {
    if !(p >= 1.0) {
        return Err(Error::Precondition(format!("p must be ≥ 1, got {p}")));
    }
    let (fields, weights) = match domain {
        Domain::Bulk => (&state.u, &meshes.bulk.cell_areas),
        Domain::Surface => (&state.v, &meshes.surface.node_weights),
    };
    let field = fields
        .get(species)
        .ok_or_else(|| Error::Precondition(format!("no {domain:?} species #{species}")))?;
    Ok(weighted_lp(field, weights, p))
}

/// Which observables to record and which assertions to run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorSpec {
    pub lp: Vec<f64>,
    /// 1-based `(i, j)` pairs whose mass `∫u_j + ∫_M v_i` is logged.
    pub pairs: Vec<(usize, usize)>,
    pub ledger: bool,
    pub ledger_tol: f64,
    pub conservation: bool,
    pub conservation_tol: f64,
    pub nonnegativity: bool,
    pub gronwall: Vec<GronwallSpec>,
    pub gronwall_tol: f64,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        MonitorSpec {
            lp: vec![1.0, 2.0, f64::INFINITY],
            pairs: Vec::new(),
            ledger: true,
            ledger_tol: 1e-9,
            conservation: true,
            conservation_tol: 1e-8,
            nonnegativity: true,
            gronwall: Vec::new(),
            gronwall_tol: 1e-8,
        }
    }
}

/// `(V_ij1)` parameters; species indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GronwallSpec {
    pub i: usize,
    pub j: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    /// Step that produced this sample (0 for the initial state).
    pub dt: f64,
    pub bulk_mass: Vec<f64>,
    pub surface_mass: Vec<f64>,
    /// `∫_M u_j` from trace values.
    pub trace_mass: Vec<f64>,
    pub bulk_rate: Vec<f64>,
    pub surface_rate: Vec<f64>,
    pub conserved: Vec<f64>,
    /// `lp[field][p_index]`, bulk fields first.
    pub lp: Vec<Vec<f64>>,
    pub sup: Vec<f64>,
    pub min: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorLog {
    pub bulk_names: Vec<String>,
    pub surface_names: Vec<String>,
    pub conserved: Vec<ConservedCombination>,
    pub spec: MonitorSpec,
    pub domain_area: f64,
    pub boundary_length: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub rejected_steps: usize,
}

impl MonitorLog {
    pub fn new<T: Real>(sys: &ReactionSystem, meshes: &Meshes<T>, spec: MonitorSpec) -> Self {
        MonitorLog {
            bulk_names: sys.bulk_species.clone(),
            surface_names: sys.surface_species.clone(),
            conserved: sys.conserved.clone(),
            spec,
            domain_area: meshes.bulk.total_area().as_f64(),
            boundary_length: meshes.surface.total_length().as_f64(),
            samples: Vec::new(),
            events: Vec::new(),
            rejected_steps: 0,
        }
    }

    pub fn field_names(&self) -> impl Iterator<Item = &String> {
        self.bulk_names.iter().chain(&self.surface_names)
    }

    /// Appends an observation of `state`; `bulk_rate` and `surface_rate`
    /// must be the reaction totals at the same state.
    pub fn observe<T: Real>(
        &mut self,
        state: &State<T>,
        meshes: &Meshes<T>,
        dt: f64,
        bulk_rate: Vec<f64>,
        surface_rate: Vec<f64>,
    ) -> Result<()> {
        let t = state.t.as_f64();
        if let Some(last) = self.samples.last() {
            if !(t > last.t) {
                return Err(Error::Precondition(format!(
                    "monitor timestamps must increase: {t} after {}",
                    last.t
                )));
            }
        }
        let areas = &meshes.bulk.cell_areas;
        let weights = &meshes.surface.node_weights;
        let bulk_mass: Vec<f64> = state.u.iter().map(|u| integral(u, areas).as_f64()).collect();
        let surface_mass: Vec<f64> = state.v.iter().map(|v| integral(v, weights).as_f64()).collect();
        let trace_mass = state
            .u
            .iter()
            .map(|u| {
                (0..meshes.trace.n_faces())
                    .fold(T::zero(), |acc, f| {
                        acc + meshes.trace.trace_at(u, f) * meshes.bulk.boundary_faces[f].length
                    })
                    .as_f64()
            })
            .collect();
        let conserved = self
            .conserved
            .iter()
            .map(|c| combine(&c.bulk, &bulk_mass) + combine(&c.surface, &surface_mass))
            .collect();
        let mut lp = Vec::new();
        let mut sup = Vec::new();
        let mut min = Vec::new();
        for (field, w) in state
            .u
            .iter()
            .map(|u| (u, areas))
            .chain(state.v.iter().map(|v| (v, weights)))
        {
            lp.push(self.spec.lp.iter().map(|&p| weighted_lp(field, w, p).as_f64()).collect());
            sup.push(weighted_lp(field, w, f64::INFINITY).as_f64());
            min.push(field.iter().fold(f64::INFINITY, |m, x| m.min(x.as_f64())));
        }
        self.samples.push(Sample {
            t,
            dt,
            bulk_mass,
            surface_mass,
            trace_mass,
            bulk_rate,
            surface_rate,
            conserved,
            lp,
            sup,
            min,
        });
        Ok(())
    }

    pub fn event(&mut self, t: f64, kind: &str, detail: impl Into<String>) {
        self.events.push(Event { t, kind: kind.into(), detail: detail.into() });
    }

    /// `∫_Ω u_j + ∫_M v_i` for 1-based `(i, j)`.
    pub fn pair_mass(&self, sample: &Sample, i: usize, j: usize) -> f64 {
        sample.bulk_mass[j - 1] + sample.surface_mass[i - 1]
    }

    /// Tidy CSV: `time,monitor,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "monitor", "value"])?;
        let names: Vec<&String> = self.field_names().collect();
        let p_label = |p: f64| if p.is_infinite() { "inf".to_string() } else { format!("{p}") };
        for s in &self.samples {
            let t = format!("{:.17e}", s.t);
            let mut row = |name: String, value: f64| w.write_record([t.as_str(), &name, &format!("{value:.17e}")]);
            row("dt".into(), s.dt)?;
            for (name, v) in self.bulk_names.iter().zip(&s.bulk_mass) {
                row(format!("mass:{name}"), *v)?;
            }
            for (name, v) in self.surface_names.iter().zip(&s.surface_mass) {
                row(format!("mass:{name}"), *v)?;
            }
            for &(i, j) in &self.spec.pairs {
                row(format!("pair_mass:i{i}_j{j}"), s.bulk_mass[j - 1] + s.surface_mass[i - 1])?;
            }
            for (c, v) in self.conserved.iter().zip(&s.conserved) {
                row(format!("conserved:{}", c.name), *v)?;
            }
            for (f, name) in names.iter().enumerate() {
                for (pi, &p) in self.spec.lp.iter().enumerate() {
                    row(format!("lp{}:{name}", p_label(p)), s.lp[f][pi])?;
                }
                row(format!("sup:{name}"), s.sup[f])?;
                row(format!("min:{name}"), s.min[f])?;
            }
        }
        w.flush().map_err(|e| Error::Io { path: "<monitors.csv>".into(), source: e })?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Runs the enabled assertions.
    pub fn summarize(&self, negativity_tol: f64, quasi_positive: bool) -> MonitorSummary {
        let spec = &self.spec;
        MonitorSummary {
            samples: self.samples.len(),
            rejected_steps: self.rejected_steps,
            ledger: spec.ledger.then(|| self.check_ledger(spec.ledger_tol)),
            conservation: (spec.conservation && !self.conserved.is_empty())
                .then(|| self.conserved_drift(spec.conservation_tol)),
            nonnegativity: (spec.nonnegativity && quasi_positive)
                .then(|| self.check_nonnegativity(10.0 * negativity_tol)),
            gronwall: spec
                .gronwall
                .iter()
                .map(|g| assert_gronwall(self, g, spec.gronwall_tol))
                .collect(),
        }
    }

    /// Per-step mass ledger `ΔM = dt·rate` for every species.
    pub fn check_ledger(&self, tol: f64) -> LedgerReport {
        let mut worst = 0.0f64;
        let mut first_violation = None;
        for pair in self.samples.windows(2) {
            let (old, new) = (&pair[0], &pair[1]);
            let iter = old
                .bulk_mass
                .iter()
                .zip(&new.bulk_mass)
                .zip(&old.bulk_rate)
                .chain(old.surface_mass.iter().zip(&new.surface_mass).zip(&old.surface_rate));
            for ((&m0, &m1), &rate) in iter {
                let scale = m0.abs() + m1.abs() + new.dt * rate.abs() + f64::MIN_POSITIVE;
                let rel = (m1 - m0 - new.dt * rate).abs() / scale;
                worst = worst.max(rel);
                if rel > tol && first_violation.is_none() {
                    first_violation = Some(new.t);
                }
            }
        }
        LedgerReport { tol, max_relative_defect: worst, first_violation, passed: first_violation.is_none() }
    }

    /// Max relative drift of each conserved combination.
    pub fn conserved_drift(&self, tol: f64) -> Vec<ConservationReport> {
        self.conserved
            .iter()
            .enumerate()
            .map(|(c, comb)| {
                let c0 = self.samples.first().map_or(0.0, |s| s.conserved[c]);
                let scale = c0.abs().max(f64::MIN_POSITIVE);
                let drift = self
                    .samples
                    .iter()
                    .map(|s| (s.conserved[c] - c0).abs() / scale)
                    .fold(0.0, f64::max);
                ConservationReport { name: comb.name.clone(), initial: c0, max_relative_drift: drift, tol, passed: drift <= tol }
            })
            .collect()
    }

    pub fn check_nonnegativity(&self, floor: f64) -> NonnegativityReport {
        let mut min = f64::INFINITY;
        let mut at = None;
        for s in &self.samples {
            for (f, &m) in s.min.iter().enumerate() {
                if m < min {
                    min = m;
                    at = Some((s.t, f));
                }
            }
        }
        let names: Vec<&String> = self.field_names().collect();
        NonnegativityReport {
            min_value: min,
            at_time: at.map(|a| a.0),
            field: at.map(|a| names[a.1].clone()),
            floor: -floor,
            passed: min >= -floor,
        }
    }
}

fn combine(c: &[f64], x: &[f64]) -> f64 {
    c.iter().zip(x).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerReport {
    pub tol: f64,
    pub max_relative_defect: f64,
    pub first_violation: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub name: String,
    pub initial: f64,
    pub max_relative_drift: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonnegativityReport {
    pub min_value: f64,
    pub at_time: Option<f64>,
    pub field: Option<String>,
    pub floor: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallViolation {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallReport {
    pub spec: GronwallSpec,
    pub steps_checked: usize,
    pub max_slack_ratio: f64,
    pub first_violation: Option<GronwallViolation>,
    /// Envelope `M(t) ≤ (M₀ + C₁t)·e^{C₂t}`.
    pub c1: f64,
    pub c2: f64,
    /// Observed `sup (∫_M u_j + ∫_M v_i) / M`.
    pub boundary_ratio: f64,
    pub envelope_violation: Option<GronwallViolation>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorSummary {
    pub samples: usize,
    pub rejected_steps: usize,
    pub ledger: Option<LedgerReport>,
    pub conservation: Option<Vec<ConservationReport>>,
    pub nonnegativity: Option<NonnegativityReport>,
    pub gronwall: Vec<GronwallReport>,
}

impl MonitorSummary {
    pub fn passed(&self) -> bool {
        self.ledger.as_ref().map_or(true, |r| r.passed)
            && self.conservation.as_ref().map_or(true, |v| v.iter().all(|r| r.passed))
            && self.nonnegativity.as_ref().map_or(true, |r| r.passed)
            && self.gronwall.iter().all(|r| r.passed)
    }
}

/// Checks `dM/dt ≤ β(∫u_j + |Ω|) + α(∫_M u_j + ∫_M v_i + |M|)` per step,
/// with `M = ∫u_j + σ∫_M v_i` and the backward difference over each
/// accepted step, then the integrated exponential envelope.
pub fn assert_gronwall(log: &MonitorLog, g: &GronwallSpec, tol: f64) -> GronwallReport {
    let (i, j) = (g.i - 1, g.j - 1);
    let weighted = |s: &Sample| s.bulk_mass[j] + g.sigma * s.surface_mass[i];
    let bound = |s: &Sample| {
        g.beta * (s.bulk_mass[j] + log.domain_area)
            + g.alpha * (s.trace_mass[j] + s.surface_mass[i] + log.boundary_length)
    };
    let mut first_violation = None;
    let mut max_slack_ratio = f64::NEG_INFINITY;
    for pair in log.samples.windows(2) {
        let (old, new) = (&pair[0], &pair[1]);
        let (m0, m1) = (weighted(old), weighted(new));
        let lhs = (m1 - m0) / new.dt;
        let rhs = bound(old);
        let roundoff = 8.0 * f64::EPSILON * (m0.abs() + m1.abs()) / new.dt;
        let scale = tol * (lhs.abs() + rhs.abs()) + roundoff;
        max_slack_ratio = max_slack_ratio.max((lhs - rhs) / (lhs.abs() + rhs.abs()).max(f64::MIN_POSITIVE));
        if lhs - rhs > scale && first_violation.is_none() {
            first_violation = Some(GronwallViolation { t: new.t, lhs, rhs });
        }
    }
    let boundary_ratio = log
        .samples
        .iter()
        .map(|s| (s.trace_mass[j] + s.surface_mass[i]) / weighted(s).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let c1 = g.beta * log.domain_area + g.alpha * log.boundary_length;
    let c2 = g.beta + g.alpha * boundary_ratio;
    let mut envelope_violation = None;
    if let Some(first) = log.samples.first() {
        let (m0, t0) = (weighted(first), first.t);
        for s in &log.samples {
            let tau = s.t - t0;
            let envelope = (m0 + c1 * tau) * (c2 * tau).exp();
            let m = weighted(s);
            if m - envelope > tol * (m.abs() + envelope.abs()) && envelope_violation.is_none() {
                envelope_violation = Some(GronwallViolation { t: s.t, lhs: m, rhs: envelope });
            }
        }
    }
    let passed = first_violation.is_none() && envelope_violation.is_none();
    GronwallReport {
        spec: *g,
        steps_checked: log.samples.len().saturating_sub(1),
        max_slack_ratio: if max_slack_ratio.is_finite() { max_slack_ratio } else { 0.0 },
        first_violation,
        c1,
        c2,
        boundary_ratio,
        envelope_violation,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction_model::builtin;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn meshes() -> Meshes<f64> {
        Meshes::build(1.0, 8, 16).unwrap()
    }

    fn state(m: &Meshes<f64>, u: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> State<f64> {
        let _ = m;
        State { t: 0.0, u, v }
    }

    #[test]
    fn mass_examples() {
        let m = meshes();
        let n = m.bulk.n_cells();
        let s = state(&m, vec![vec![1.0; n]], vec![vec![0.0; 16]]);
        assert!((mass(&s, &m, &[1.0], &[1.0]).unwrap() - PI).abs() < 1e-12);
        let s = state(&m, vec![vec![0.0; n]], vec![vec![2.0; 16]]);
        assert!((mass(&s, &m, &[1.0], &[1.0]).unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!(mass(&s, &m, &[1.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn min_system_mass_by_independent_summation() {
        let m = meshes();
        let n = m.bulk.n_cells();
        let u: Vec<Vec<f64>> = (0..3).map(|s| (0..n).map(|c| ((c * 7 + s * 3) % 11) as f64 * 0.1).collect()).collect();
        let v: Vec<Vec<f64>> = (0..2).map(|s| (0..16).map(|c| ((c * 5 + s) % 7) as f64 * 0.2).collect()).collect();
        let st = state(&m, u.clone(), v.clone());
        let got = mass(&st, &m, &[1.0, 1.0, 0.0], &[1.0, 1.0]).unwrap();
        let mut expect = 0.0;
        for c in 0..n {
            expect += (u[0][c] + u[1][c]) * m.bulk.cell_areas[c];
        }
        for k in 0..16 {
            expect += (v[0][k] + v[1][k]) * m.surface.node_weights[k];
        }
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn lp_examples() {
        let m = meshes();
        let n = m.bulk.n_cells();
        let s = state(&m, vec![vec![-3.0; n]], vec![m.surface.sample(f64::cos)]);
        assert!((lp_norm(&s, &m, 2.0, 0, Domain::Bulk).unwrap() - 3.0 * PI.sqrt()).abs() < 1e-12);
        assert!((lp_norm(&s, &m, 2.0, 0, Domain::Surface).unwrap() - PI.sqrt()).abs() < 1e-12);
        let vmax = s.v[0].iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert_eq!(lp_norm(&s, &m, f64::INFINITY, 0, Domain::Surface).unwrap(), vmax);
        assert!(lp_norm(&s, &m, 0.5, 0, Domain::Bulk).is_err());
        assert!(lp_norm(&s, &m, 2.0, 3, Domain::Bulk).is_err());
    }

    proptest! {
        #[test]
        fn power_means_increase_with_p(values in proptest::collection::vec(0.0f64..100.0, 16), seed in 0u64..1000) {
            let m = meshes();
            let weights = &m.surface.node_weights;
            let total: f64 = values.iter().zip(weights).map(|(a, b)| a * b).sum();
            prop_assume!(total > 1e-9);
            let f: Vec<f64> = values.iter().map(|x| x / total * (seed as f64 + 1.0)).collect();
            let ps = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0, f64::INFINITY];
            let means: Vec<f64> = ps.iter().map(|&p| power_mean(&f, weights, p)).collect();
            for w in means.windows(2) {
                prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
            }
        }
    }

    fn synthetic_log(jump_at: Option<usize>) -> MonitorLog {
        let (sys, _) = builtin("toy_conserving").unwrap();
        let m = meshes();
        let mut spec = MonitorSpec::default();
        spec.gronwall.push(GronwallSpec { i: 1, j: 1, sigma: 1.0, alpha: 1.0, beta: 1.0 });
        let mut log = MonitorLog::new(&sys, &m, spec);
        let n = m.bulk.n_cells();
        for k in 0..20 {
            let t = k as f64 * 0.01;
            // Mass moves from v to u at a fixed rate; total constant.
            let shift = 0.1 * t;
            let mut s = State { t, u: vec![vec![1.0 + shift / PI; n]], v: vec![vec![1.0 - shift / (2.0 * PI); 16]] };
            if Some(k) == jump_at {
                s.u[0].iter_mut().for_each(|x| *x += 5.0);
            }
            let dt = if k == 0 { 0.0 } else { 0.01 };
            log.observe(&s, &m, dt, vec![0.1], vec![-0.1]).unwrap();
        }
        log
    }

    #[test]
    fn gronwall_holds_on_conserving_log() {
        let log = synthetic_log(None);
        let rep = assert_gronwall(&log, &log.spec.gronwall[0], 1e-8);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_slack_ratio < 0.0);
        let summary = log.summarize(1e-10, true);
        assert!(summary.passed(), "{summary:?}");
    }

    #[test]
    fn injected_mass_jump_is_flagged() {
        let log = synthetic_log(Some(12));
        let rep = assert_gronwall(&log, &log.spec.gronwall[0], 1e-8);
        assert!(!rep.passed);
        assert!((rep.first_violation.unwrap().t - 0.12).abs() < 1e-12);
        let ledger = log.check_ledger(1e-9);
        assert_eq!(ledger.first_violation, Some(0.12));
    }

    #[test]
    fn nonnegativity_agrees_with_direct_scan() {
        let (sys, _) = builtin("toy_open").unwrap();
        let m = meshes();
        let mut log = MonitorLog::new(&sys, &m, MonitorSpec::default());
        let n = m.bulk.n_cells();
        let mut u = vec![1.0; n];
        u[5] = -2e-6;
        let s = State { t: 0.0, u: vec![u.clone()], v: vec![vec![0.5; 16]] };
        log.observe(&s, &m, 0.0, vec![0.0], vec![0.0]).unwrap();
        let rep = log.check_nonnegativity(1e-9);
        let direct = u.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(rep.min_value, direct);
        assert!(!rep.passed);
        assert_eq!(rep.field.as_deref(), Some("u"));
    }

    #[test]
    fn timestamps_must_increase() {
        let (sys, _) = builtin("toy_open").unwrap();
        let m = meshes();
        let mut log = MonitorLog::new(&sys, &m, MonitorSpec::default());
        let n = m.bulk.n_cells();
        let s = State { t: 0.0, u: vec![vec![1.0; n]], v: vec![vec![0.5; 16]] };
        log.observe(&s, &m, 0.0, vec![0.0], vec![0.0]).unwrap();
        assert!(log.observe(&s, &m, 0.0, vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn csv_is_tidy() {
        let log = synthetic_log(None);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time,monitor,value"));
        assert!(lines.all(|l| l.split(',').count() == 3));
        assert!(text.contains("conserved:total"));
        assert!(text.contains("lpinf:u"));
    }
}
