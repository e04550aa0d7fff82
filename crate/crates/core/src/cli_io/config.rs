//! Strict JSON run configuration.
//!
//! Every section has defaults, so `{"model": "toy_conserving"}` is a
//! complete config. Unknown keys are rejected with the closest known key as
//! a suggestion.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hypothesis_checker::{SearchBudget, VerdictStatus, DEFAULT_BOXES};
use crate::integrator::{RunOptions, Scheme, StepControl};
use crate::layer_potential::GammaProfile;
use crate::monitors::{GronwallSpec, MonitorSpec};
use crate::reaction_model::{FieldSpec, ReactionSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Simulate,
    Potential,
    Converge,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Potential => "potential",
            Command::Converge => "converge",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A norm exponent; `"inf"` in JSON for the sup norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) if p >= 1.0 => Ok(Exponent(p)),
            Raw::Num(p) => Err(de::Error::custom(format!("norm exponent must be >= 1, got {p}"))),
            Raw::Text(s) if s == "inf" || s == "infinity" => Ok(Exponent(f64::INFINITY)),
            Raw::Text(s) => Err(de::Error::custom(format!("expected a number or \"inf\", got \"{s}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub n_r: usize,
    pub n_theta: usize,
    /// Must equal `n_theta`; accepted so that configs can state it.
    pub surface_n_theta: Option<usize>,
    pub radius: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { n_r: 16, n_theta: 64, surface_n_theta: None, radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_end: f64,
    pub scheme: Scheme,
    pub dt: Option<f64>,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub max_relative_change: f64,
    pub grow_after: usize,
    pub blowup_threshold: Option<f64>,
    pub negativity_tol: Option<f64>,
    pub solver_tol: f64,
    pub max_solver_iterations: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        let c = StepControl::default();
        TimeConfig {
            t_end: 1.0,
            scheme: Scheme::ImexBe,
            dt: c.dt,
            dt_min: c.dt_min,
            dt_max: c.dt_max,
            safety: c.safety,
            max_relative_change: c.max_relative_change,
            grow_after: c.grow_after,
            blowup_threshold: c.blowup_threshold,
            negativity_tol: c.negativity_tol,
            solver_tol: c.solver_tol,
            max_solver_iterations: c.max_solver_iterations,
        }
    }
}

impl TimeConfig {
    pub fn step_control(&self) -> StepControl {
        StepControl {
            dt: self.dt,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
            safety: self.safety,
            blowup_threshold: self.blowup_threshold,
            max_solver_iterations: self.max_solver_iterations,
            solver_tol: self.solver_tol,
            negativity_tol: self.negativity_tol,
            max_relative_change: self.max_relative_change,
            grow_after: self.grow_after,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedStatus {
    Completed,
    BlowupDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GronwallEntry {
    pub i: usize,
    pub j: usize,
    #[serde(default = "one")]
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

/// `"declared"` takes the pairs the model declares; `"off"` disables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GronwallSelection {
    Named(GronwallKeyword),
    Explicit(Vec<GronwallEntry>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GronwallKeyword {
    Declared,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    pub lp: Vec<Exponent>,
    pub pairs: Vec<(usize, usize)>,
    pub ledger: bool,
    pub ledger_tol: f64,
    pub conservation: bool,
    pub conservation_tol: f64,
    pub nonnegativity: bool,
    pub gronwall: GronwallSelection,
    pub gronwall_tol: f64,
    pub compatibility_tol: f64,
    /// Asserts the run outcome. `None` accepts completion and detected blow-up.
    pub expect_status: Option<ExpectedStatus>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        let s = MonitorSpec::default();
        MonitorConfig {
            lp: s.lp.iter().map(|&p| Exponent(p)).collect(),
            pairs: s.pairs,
            ledger: s.ledger,
            ledger_tol: s.ledger_tol,
            conservation: s.conservation,
            conservation_tol: s.conservation_tol,
            nonnegativity: s.nonnegativity,
            gronwall: GronwallSelection::Named(GronwallKeyword::Declared),
            gronwall_tol: s.gronwall_tol,
            compatibility_tol: RunOptions::default().compatibility_tol,
            expect_status: None,
        }
    }
}

impl MonitorConfig {
    pub fn spec(&self, sys: &ReactionSystem) -> MonitorSpec {
        let gronwall = match &self.gronwall {
            GronwallSelection::Named(GronwallKeyword::Off) => Vec::new(),
            GronwallSelection::Named(GronwallKeyword::Declared) => sys
                .declared
                .iter()
                .map(|p| GronwallSpec { i: p.i, j: p.j, sigma: p.sigma, alpha: p.alpha, beta: p.beta })
                .collect(),
            GronwallSelection::Explicit(list) => list
                .iter()
                .map(|g| GronwallSpec { i: g.i, j: g.j, sigma: g.sigma, alpha: g.alpha, beta: g.beta })
                .collect(),
        };
        MonitorSpec {
            lp: self.lp.iter().map(|e| e.0).collect(),
            pairs: self.pairs.clone(),
            ledger: self.ledger,
            ledger_tol: self.ledger_tol,
            conservation: self.conservation,
            conservation_tol: self.conservation_tol,
            nonnegativity: self.nonnegativity,
            gronwall,
            gronwall_tol: self.gronwall_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckerConfig {
    pub boxes: Vec<f64>,
    pub samples: usize,
    pub sigmas: Vec<f64>,
    pub max_l: u32,
    /// Asserts the verdict; `None` reports without asserting.
    pub expect: Option<VerdictStatus>,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        let b = SearchBudget::default();
        CheckerConfig { boxes: DEFAULT_BOXES.to_vec(), samples: b.samples, sigmas: b.sigmas, max_l: b.max_l, expect: None }
    }
}

impl CheckerConfig {
    pub fn budget(&self, seed: u64) -> SearchBudget {
        SearchBudget {
            boxes: self.boxes.clone(),
            samples: self.samples,
            seed,
            sigmas: self.sigmas.clone(),
            max_l: self.max_l,
            ..SearchBudget::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub n_r: usize,
    pub n_theta: usize,
    pub dt: f64,
    /// Relative `L∞` discrepancy allowed at the probes.
    pub tolerance: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { n_r: 128, n_theta: 128, dt: 1e-4, tolerance: 0.03 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolderConfig {
    /// Space-time Lebesgue exponent of the data.
    pub p: f64,
    pub exponents: Vec<f64>,
    /// Probe-set sizes; each should double the previous one.
    pub levels: Vec<usize>,
    /// Angle of the boundary point approached by the probes.
    pub theta0: f64,
    /// First probe sits at `R(1 − start)`.
    pub start: f64,
    /// Relative change allowed between successive levels for admissible exponents.
    pub stability_tol: f64,
    /// Minimal growth from first to last level for inadmissible exponents.
    pub growth_factor: f64,
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig {
            p: 8.0,
            exponents: vec![0.5, 1.0],
            levels: vec![2, 4, 8],
            theta0: std::f64::consts::PI,
            start: 0.5,
            stability_tol: 0.1,
            growth_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialConfig {
    pub profile: GammaProfile,
    pub radius: f64,
    pub diffusivity: f64,
    pub n_theta: usize,
    pub steps: usize,
    pub t_end: f64,
    pub probe_radii: Vec<f64>,
    pub probe_angles: Vec<f64>,
    pub probe_times: Vec<f64>,
    pub reference: Option<ReferenceConfig>,
    pub holder: Option<HolderConfig>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig {
            profile: GammaProfile::CosTheta,
            radius: 1.0,
            diffusivity: 1.0,
            n_theta: 64,
            steps: 200,
            t_end: 0.5,
            probe_radii: vec![0.2, 0.4, 0.6, 0.8],
            probe_angles: vec![0.3, 1.5, 2.7, 3.9, 5.1],
            probe_times: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            reference: None,
            holder: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergencePreset {
    /// `v_t = Δ_M v`, `v₀ = cos θ`; ladder over `n_theta`.
    SurfaceEigenmode,
    /// Same problem; ladder over the number of time steps, measured against
    /// the semi-discrete solution.
    SurfaceEigenmodeTemporal,
    /// `u = e^{−t}(1 − r² + r³cos θ)` with a source; ladder over `n_r`.
    ManufacturedBulk,
    /// `toy_conserving` self-convergence of the final surface mass; ladder over `n_r`.
    CoupledToy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub preset: ConvergencePreset,
    /// Resolution per level; its meaning depends on the preset.
    pub ladder: Vec<usize>,
    pub t_end: f64,
    /// Fixed step for spatial ladders.
    pub dt: f64,
    /// Ladders over space without a given value use `n_theta = 4 n_r`.
    pub n_theta: Option<usize>,
    pub expected_order: Option<f64>,
    pub order_tol: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            preset: ConvergencePreset::SurfaceEigenmode,
            ladder: vec![16, 32, 64],
            t_end: 0.5,
            dt: 1e-3,
            n_theta: None,
            expected_order: None,
            order_tol: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    pub mesh: bool,
    pub operators: bool,
    pub snapshots: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig { mesh: true, operators: false, snapshots: true }
    }
}

/// Smooth seeded perturbation: each field is multiplied by
/// `1 + amplitude·Σ_{k ≤ modes} (a_k cos kθ + b_k sin kθ)/modes` with
/// `a_k, b_k` uniform in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude: f64,
    #[serde(default = "three")]
    pub modes: usize,
}

fn three() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    /// Built-in name, preset name, or path to a model JSON file (relative
    /// paths resolve against the config file's directory).
    #[serde(default = "default_model")]
    pub model: String,
    /// Rate constants by name, `D1..` and `Dt1..` for diffusivities.
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    /// Initial data per species name, replacing the model default.
    #[serde(default)]
    pub species: BTreeMap<String, FieldSpec>,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default)]
    pub checker: CheckerConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub export: ExportConfig,
    #[serde(default)]
    pub seed: u64,
    /// Snapshot cadence in model time; `None` stores initial and final states.
    #[serde(default)]
    pub snapshot_every: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_model() -> String {
    "toy_conserving".into()
}

/// Parsed configuration plus what the user wrote.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// The user's JSON, verbatim as a value.
    pub echo: Value,
    /// Dotted path → `"user"` or `"default"` for every resolved leaf.
    pub provenance: BTreeMap<String, &'static str>,
    /// Directory relative model paths resolve against.
    pub base_dir: PathBuf,
}

/// Parses and validates a config. `base_dir` anchors relative file paths.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig> {
    let echo: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.inner().to_string();
        Error::Config(format!("at `{path}`: {msg}{}", suggestion(&msg)))
    })?;
    config.validate(base_dir)?;
    let resolved = serde_json::to_value(&config)?;
    let mut provenance = BTreeMap::new();
    record_provenance(&resolved, Some(&echo), String::new(), &mut provenance);
    Ok(LoadedConfig { config, echo, provenance, base_dir: base_dir.to_path_buf() })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

/// For serde's "unknown field `x`, expected one of `a`, `b`" messages,
/// names the closest expected key.
fn suggestion(msg: &str) -> String {
    if !msg.starts_with("unknown field") && !msg.starts_with("unknown variant") {
        return String::new();
    }
    let names: Vec<&str> = msg.split('`').skip(1).step_by(2).collect();
    let Some((&unknown, expected)) = names.split_first() else {
        return String::new();
    };
    expected
        .iter()
        .map(|&cand| (strsim::levenshtein(unknown, cand), cand))
        .filter(|&(d, cand)| d <= (cand.len() / 2).max(2))
        .min()
        .map(|(_, cand)| format!("; did you mean `{cand}`?"))
        .unwrap_or_default()
}

fn record_provenance(resolved: &Value, user: Option<&Value>, prefix: String, out: &mut BTreeMap<String, &'static str>) {
    match resolved {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                let child = user.and_then(|u| u.get(k));
                record_provenance(v, child, key, out);
            }
        }
        _ => {
            out.insert(prefix, if user.is_some() { "user" } else { "default" });
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must be a positive finite number, got {x}")))
    }
}

impl RunConfig {
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        let m = &self.mesh;
        if let Some(s) = m.surface_n_theta {
            if s != m.n_theta {
                return Err(Error::Config(format!(
                    "`mesh.n_theta` ({}) and `mesh.surface_n_theta` ({s}) must agree: surface nodes pair with boundary faces",
                    m.n_theta
                )));
            }
        }
        if m.n_r < 2 || m.n_r > 4096 {
            return Err(Error::Config(format!("`mesh.n_r` must be in 2..=4096, got {}", m.n_r)));
        }
        if m.n_theta < 4 || m.n_theta > 65536 {
            return Err(Error::Config(format!("`mesh.n_theta` must be in 4..=65536, got {}", m.n_theta)));
        }
        positive("mesh.radius", m.radius)?;
        let t = &self.time;
        positive("time.t_end", t.t_end)?;
        t.step_control().validate()?;
        if let Some(s) = self.snapshot_every {
            positive("snapshot_every", s)?;
        }
        if let Some(p) = &self.perturbation {
            if !(0.0..1.0).contains(&p.amplitude) || p.modes == 0 {
                return Err(Error::Config(format!(
                    "`perturbation.amplitude` must be in [0, 1) and `modes` ≥ 1, got {} and {}",
                    p.amplitude, p.modes
                )));
            }
        }
        let c = &self.checker;
        if c.boxes.is_empty() || c.boxes.iter().any(|&b| !(b > 0.0)) || c.samples == 0 {
            return Err(Error::Config("`checker.boxes` must be positive and `checker.samples` ≥ 1".into()));
        }
        let p = &self.potential;
        positive("potential.radius", p.radius)?;
        positive("potential.diffusivity", p.diffusivity)?;
        positive("potential.t_end", p.t_end)?;
        if p.steps == 0 || p.n_theta < 16 {
            return Err(Error::Config("`potential.steps` must be ≥ 1 and `potential.n_theta` ≥ 16".into()));
        }
        if let Some(r) = &p.reference {
            positive("potential.reference.dt", r.dt)?;
            positive("potential.reference.tolerance", r.tolerance)?;
        }
        if let Some(h) = &p.holder {
            if !(h.p > 1.0) || h.levels.is_empty() || !(h.start > 0.0 && h.start < 1.0) {
                return Err(Error::Config("`potential.holder` needs p > 1, levels, and start in (0, 1)".into()));
            }
        }
        let cv = &self.converge;
        positive("converge.t_end", cv.t_end)?;
        positive("converge.dt", cv.dt)?;
        if self.model_path(base_dir).is_some_and(|path| !path.is_file()) {
            return Err(Error::Config(format!(
                "model file `{}` does not exist",
                self.model_path(base_dir).unwrap().display()
            )));
        }
        Ok(())
    }

    /// `Some(path)` when `model` names a file rather than a built-in.
    pub fn model_path(&self, base_dir: &Path) -> Option<PathBuf> {
        let looks_like_path = self.model.ends_with(".json") || self.model.contains('/');
        looks_like_path.then(|| {
            let p = PathBuf::from(&self.model);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        })
    }
}
