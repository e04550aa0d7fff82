//! Command dispatch, artifacts and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{load_config, Command, ExpectedStatus, LoadedConfig, Perturbation, RunConfig};
use super::converge::converge;
use crate::error::{Error, Result};
use crate::geometry::{build_surface_mesh, Meshes};
use crate::hypothesis_checker::{classify, witness_reproduces, Status, EVIDENCE_LABEL};
use crate::integrator::{simulate, Discretization, RunOptions, RunStatus, State};
use crate::layer_potential::{
    assemble_j, fv_neumann_reference, holder_probe, normal_ray_pairs, HeatKernelParams, TimeGrid,
};
use crate::reaction_model::{builtin, InitialData, ModelFile, ReactionSystem, BUILTIN_NAMES};

/// Uniform surface ODE `v' = v²` from `v₀ = 2`, which blows up at `t = 1/2`.
pub const SURFACE_BLOWUP: &str = r#"{
    "name": "surface_blowup",
    "bulk_species": ["u"],
    "surface_species": ["v"],
    "diffusivity": [1.0],
    "surface_diffusivity": [1.0],
    "H": ["0"],
    "F": ["v^2"],
    "G": ["0"],
    "initial": {"bulk": [[1.0]], "surface": [[2.0]]}
}"#;

pub const PRESET_NAMES: [&str; 1] = ["surface_blowup"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Assertion { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub command: Option<Command>,
    pub seed: u64,
    /// The config exactly as written.
    pub config: Value,
    /// The config with every default filled in.
    pub resolved_config: Value,
    pub provenance: BTreeMap<String, &'static str>,
    pub outcome: Value,
    pub assertions: Vec<Assertion>,
    pub outputs: Vec<OutputRecord>,
    /// SHA-256 over the names and hashes of all other outputs.
    pub numeric_hash: String,
    pub error: Option<ErrorRecord>,
    pub exit_code: i32,
}

/// Exit statuses: all assertions passed, some failed, or an error occurred.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Clone)]
pub struct RunResult {
    pub exit_code: i32,
    pub manifest: Manifest,
    pub out_dir: PathBuf,
    /// Human-readable summary for the terminal.
    pub summary: String,
}

/// Collects output files and their hashes.
struct Artifacts {
    root: PathBuf,
    records: Vec<OutputRecord>,
}

impl Artifacts {
    fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Artifacts { root: root.to_path_buf(), records: Vec::new() })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.records.push(OutputRecord { file: rel.to_string(), bytes: bytes.len(), sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    fn write_json<S: Serialize>(&mut self, rel: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn numeric_hash(&self) -> String {
        let mut sorted: Vec<&OutputRecord> = self.records.iter().collect();
        sorted.sort_by(|a, b| a.file.cmp(&b.file));
        let mut h = Sha256::new();
        for r in sorted {
            h.update(r.file.as_bytes());
            h.update([0u8]);
            h.update(r.sha256.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

/// Resolves a built-in, a preset or a model file, then applies overrides.
pub fn resolve_model(config: &RunConfig, base_dir: &Path) -> Result<(ReactionSystem, InitialData)> {
    let (sys, init) = if let Some(path) = config.model_path(base_dir) {
        ModelFile::load(&path)?.compile()?
    } else if PRESET_NAMES.contains(&config.model.as_str()) {
        ModelFile::from_json(SURFACE_BLOWUP)?.compile()?
    } else if BUILTIN_NAMES.contains(&config.model.as_str()) {
        builtin(&config.model)?
    } else {
        let known: Vec<&str> = BUILTIN_NAMES.iter().chain(&PRESET_NAMES).copied().collect();
        let hint = known
            .iter()
            .min_by_key(|k| strsim::levenshtein(k, &config.model))
            .map(|k| format!("; did you mean `{k}`?"))
            .unwrap_or_default();
        return Err(Error::Config(format!(
            "unknown model `{}` (built-ins: {}){hint}",
            config.model,
            known.join(", ")
        )));
    };
    let sys = sys.with_overrides(&config.overrides)?;
    let mut init = init;
    for (name, spec) in &config.species {
        if let Some(j) = sys.bulk_species.iter().position(|s| s == name) {
            init.bulk[j] = spec.clone();
        } else if let Some(i) = sys.surface_species.iter().position(|s| s == name) {
            init.surface[i] = spec.clone();
        } else {
            return Err(Error::Config(format!(
                "`species.{name}` is not a species of model `{}` (species: {})",
                sys.name,
                sys.bulk_species.iter().chain(&sys.surface_species).cloned().collect::<Vec<_>>().join(", ")
            )));
        }
    }
    Ok((sys, init))
}

fn perturb(fields: &mut [Vec<f64>], angles: impl Fn(usize) -> f64, p: &Perturbation, rng: &mut ChaCha8Rng) {
    for field in fields {
        let coeffs: Vec<(f64, f64)> = (0..p.modes).map(|_| (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect();
        for (idx, x) in field.iter_mut().enumerate() {
            let th = angles(idx);
            let s: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| a * ((k + 1) as f64 * th).cos() + b * ((k + 1) as f64 * th).sin())
                .sum();
            *x *= 1.0 + p.amplitude * s / p.modes as f64;
        }
    }
}

/// Loads the config file and runs. Errors never escape: they are recorded
/// in the manifest and mapped to [`EXIT_ERROR`].
pub fn run(command: Command, config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> RunResult {
    match load_config(config_path) {
        Ok(loaded) => run_loaded(command, &loaded, out, seed),
        Err(e) => {
            let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("bsrd-out"));
            error_result(command, &out_dir, Value::Null, e)
        }
    }
}

fn error_result(command: Command, out_dir: &Path, echo: Value, e: Error) -> RunResult {
    let record = ErrorRecord { kind: e.kind().into(), message: e.to_string() };
    let manifest = Manifest {
        tool: "bsrd",
        versions: versions(),
        command: Some(command),
        seed: 0,
        config: echo,
        resolved_config: Value::Null,
        provenance: BTreeMap::new(),
        outcome: Value::Null,
        assertions: Vec::new(),
        outputs: Vec::new(),
        numeric_hash: String::new(),
        error: Some(record),
        exit_code: EXIT_ERROR,
    };
    let summary = format!("error ({}): {}", e.kind(), e);
    if std::fs::create_dir_all(out_dir).is_ok() {
        if let Ok(text) = serde_json::to_string_pretty(&manifest) {
            let _ = std::fs::write(out_dir.join("manifest.json"), text + "\n");
        }
    }
    RunResult { exit_code: EXIT_ERROR, manifest, out_dir: out_dir.to_path_buf(), summary }
}

fn versions() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([("bsrd_core", env!("CARGO_PKG_VERSION"))])
}

struct Produced {
    outcome: Value,
    assertions: Vec<Assertion>,
    summary: String,
}

pub fn run_loaded(command: Command, loaded: &LoadedConfig, out: Option<&Path>, seed: Option<u64>) -> RunResult {
    let cfg = &loaded.config;
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.as_ref().map(|p| if p.is_absolute() { p.clone() } else { loaded.base_dir.join(p) }))
        .unwrap_or_else(|| PathBuf::from("bsrd-out"));
    if let Some(c) = cfg.command {
        if c != command {
            let e = Error::Config(format!("config declares command `{c}` but `{command}` was requested"));
            return error_result(command, &out_dir, loaded.echo.clone(), e);
        }
    }
    let seed_value = seed.unwrap_or(cfg.seed);
    let mut provenance = loaded.provenance.clone();
    if seed.is_some() {
        provenance.insert("seed".into(), "cli");
    }
    let mut resolved = serde_json::to_value(cfg).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut resolved {
        map.insert("seed".into(), json!(seed_value));
        map.remove("out");
    }
    let mut artifacts = match Artifacts::new(&out_dir) {
        Ok(a) => a,
        Err(e) => return error_result(command, &out_dir, loaded.echo.clone(), e),
    };
    let produced = match command {
        Command::Check => run_check(cfg, loaded, seed_value, &mut artifacts),
        Command::Simulate => run_simulate(cfg, loaded, seed_value, &mut artifacts),
        Command::Potential => run_potential(cfg, &mut artifacts),
        Command::Converge => run_converge(cfg, &mut artifacts),
    };
    let (outcome, assertions, summary, error) = match produced {
        Ok(p) => (p.outcome, p.assertions, p.summary, None),
        Err(e) => {
            let summary = format!("error ({}): {}", e.kind(), e);
            (Value::Null, Vec::new(), summary, Some(ErrorRecord { kind: e.kind().into(), message: e.to_string() }))
        }
    };
    let exit_code = if error.is_some() {
        EXIT_ERROR
    } else if assertions.iter().all(|a| a.passed) {
        EXIT_OK
    } else {
        EXIT_ASSERTION
    };
    let mut manifest = Manifest {
        tool: "bsrd",
        versions: versions(),
        command: Some(command),
        seed: seed_value,
        config: loaded.echo.clone(),
        resolved_config: resolved,
        provenance,
        outcome,
        assertions,
        outputs: artifacts.records.clone(),
        numeric_hash: artifacts.numeric_hash(),
        error,
        exit_code,
    };
    if let Err(e) = artifacts.write_json("manifest.json", &manifest) {
        manifest.error = Some(ErrorRecord { kind: e.kind().into(), message: e.to_string() });
        manifest.exit_code = EXIT_ERROR;
    }
    let mut text = summary;
    for a in &manifest.assertions {
        let _ = write!(text, "\n[{}] {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    RunResult { exit_code: manifest.exit_code, manifest, out_dir, summary: text }
}

fn run_check(cfg: &RunConfig, loaded: &LoadedConfig, seed: u64, art: &mut Artifacts) -> Result<Produced> {
    let (sys, _) = resolve_model(cfg, &loaded.base_dir)?;
    let budget = cfg.checker.budget(seed);
    let verdict = classify(&sys, &budget);
    let table = verdict.to_table(&sys.name);
    art.write_json("checker_report.json", &json!({"model": sys.name, "budget": budget, "verdict": verdict}))?;
    art.write("checker_table.txt", table.as_bytes())?;
    let mut assertions = Vec::new();
    let (mut reproduced, mut witnesses) = (true, 0usize);
    for r in verdict.reports.iter().filter(|r| r.status == Status::Violated) {
        witnesses += 1;
        reproduced &= witness_reproduces(&sys, r)?;
    }
    assertions.push(Assertion::new(
        "witnesses_reproduce",
        reproduced,
        format!("{witnesses} violation witness(es) re-evaluated"),
    ));
    if let Some(expect) = cfg.checker.expect {
        assertions.push(Assertion::new(
            "expected_verdict",
            verdict.status == expect,
            format!("expected {expect:?}, got {:?}", verdict.status),
        ));
    }
    Ok(Produced {
        outcome: json!({"verdict": verdict.status, "pattern": verdict.pattern, "uncontrolled": verdict.uncontrolled, "evidence": EVIDENCE_LABEL}),
        assertions,
        summary: table,
    })
}

fn run_simulate(cfg: &RunConfig, loaded: &LoadedConfig, seed: u64, art: &mut Artifacts) -> Result<Produced> {
    let (sys, init) = resolve_model(cfg, &loaded.base_dir)?;
    let meshes = Meshes::build(cfg.mesh.radius, cfg.mesh.n_r, cfg.mesh.n_theta)?;
    let (mut u, mut v) = init.realize(&sys, &meshes.bulk, &meshes.surface)?;
    if let Some(p) = &cfg.perturbation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = meshes.bulk.cell_centers.clone();
        perturb(&mut u, |c| centers[c].1, p, &mut rng);
        let angles = meshes.surface.node_angles.clone();
        perturb(&mut v, |n| angles[n], p, &mut rng);
    }
    if cfg.export.mesh {
        art.write_json("mesh.json", &meshes.bulk.summary(Some(&meshes.surface)))?;
    }
    let disc = Discretization::new(&sys, meshes)?;
    if cfg.export.operators {
        for (name, op) in sys.bulk_species.iter().zip(&disc.bulk_ops) {
            art.write(&format!("operators/bulk_{name}.coo"), op.to_operator().to_coo_string().as_bytes())?;
        }
        for (name, op) in sys.surface_species.iter().zip(&disc.surface_ops) {
            art.write(&format!("operators/surface_{name}.coo"), op.to_operator().to_coo_string().as_bytes())?;
        }
    }
    let opts = RunOptions {
        t_end: cfg.time.t_end,
        scheme: cfg.time.scheme,
        control: cfg.time.step_control(),
        monitors: cfg.monitors.spec(&sys),
        snapshot_every: cfg.snapshot_every,
        compatibility_tol: cfg.monitors.compatibility_tol,
    };
    let out = simulate(&sys, State::new(0.0, u, v), &disc, &opts)?;
    let mut buf = Vec::new();
    out.monitor_log.write_csv(&mut buf)?;
    art.write("monitors.csv", &buf)?;

    let mut snapshots = Vec::new();
    if cfg.export.snapshots {
        let m = &disc.meshes;
        for (idx, s) in out.trajectory.iter().enumerate() {
            for (name, field) in sys.bulk_species.iter().zip(&s.u) {
                let file = format!("snapshots/bulk_{name}_{idx:04}.csv");
                let rows = m.bulk.cell_centers.iter().zip(field).map(|(&(r, th), x)| vec![r.to_string(), th.to_string(), x.to_string()]);
                art.write(&file, &csv_bytes(&["r", "theta", "value"], rows)?)?;
                snapshots.push(json!({"file": file, "t": s.t, "field": name}));
            }
            for (name, field) in sys.surface_species.iter().zip(&s.v) {
                let file = format!("snapshots/surface_{name}_{idx:04}.csv");
                let rows = m.surface.node_angles.iter().zip(field).map(|(th, x)| vec![th.to_string(), x.to_string()]);
                art.write(&file, &csv_bytes(&["theta", "value"], rows)?)?;
                snapshots.push(json!({"file": file, "t": s.t, "field": name}));
            }
        }
    }

    let summary = out.monitor_log.summarize(out.negativity_tol, sys.quasi_positive);
    let mut assertions = Vec::new();
    let failed_run = matches!(out.status, RunStatus::StepFailure { .. });
    assertions.push(Assertion::new("run_did_not_fail", !failed_run, format!("{:?}", out.status)));
    if let Some(l) = &summary.ledger {
        assertions.push(Assertion::new("mass_ledger", l.passed, format!("max relative defect {:.3e} (tol {:.1e})", l.max_relative_defect, l.tol)));
    }
    for c in summary.conservation.iter().flatten() {
        assertions.push(Assertion::new(
            format!("conservation:{}", c.name),
            c.passed,
            format!("max relative drift {:.3e} (tol {:.1e})", c.max_relative_drift, c.tol),
        ));
    }
    if let Some(n) = &summary.nonnegativity {
        assertions.push(Assertion::new("nonnegativity", n.passed, format!("min {:.3e} (floor {:.1e})", n.min_value, n.floor)));
    }
    for g in &summary.gronwall {
        assertions.push(Assertion::new(
            format!("gronwall:i{}_j{}", g.spec.i, g.spec.j),
            g.passed,
            format!("{} steps, max slack ratio {:.3e}", g.steps_checked, g.max_slack_ratio),
        ));
    }
    if let Some(expect) = cfg.monitors.expect_status {
        let ok = matches!(
            (expect, &out.status),
            (ExpectedStatus::Completed, RunStatus::Completed)
                | (ExpectedStatus::BlowupDetected, RunStatus::BlowupDetected { .. })
        );
        assertions.push(Assertion::new("expected_status", ok, format!("expected {expect:?}, got {:?}", out.status)));
    }
    let text = format!(
        "{}: {:?} after {} accepted / {} rejected steps",
        sys.name, out.status, out.accepted_steps, out.rejected_steps
    );
    Ok(Produced {
        outcome: json!({
            "model": sys.name,
            "run": out.status,
            "final_time": out.final_state().t,
            "accepted_steps": out.accepted_steps,
            "rejected_steps": out.rejected_steps,
            "negativity_tol": out.negativity_tol,
            "blowup_threshold": out.blowup_threshold,
            "compatibility": {"max_residual": out.compatibility.max_residual, "tol": out.compatibility.tol, "within_tol": out.compatibility.within_tol},
            "monitors": summary,
            "events": out.monitor_log.events,
            "snapshots": snapshots,
        }),
        assertions,
        summary: text,
    })
}

fn run_potential(cfg: &RunConfig, art: &mut Artifacts) -> Result<Produced> {
    let p = &cfg.potential;
    let surface = build_surface_mesh(p.radius, p.n_theta)?;
    let time = TimeGrid::new(p.t_end, p.steps)?;
    let params = HeatKernelParams { dimension: 2, diffusivity: p.diffusivity };
    let gamma = p.profile.sample(&surface, time);
    let op = assemble_j(&surface, time, params)?;
    let sol = op.solve(&gamma)?;
    let dt = time.dt;
    let rows = sol.density.iter().enumerate().flat_map(|(a, row)| {
        let (lo, hi) = (a as f64 * dt, (a + 1) as f64 * dt);
        surface
            .node_angles
            .iter()
            .zip(row)
            .map(move |(th, g)| vec![lo.to_string(), hi.to_string(), th.to_string(), g.to_string()])
            .collect::<Vec<_>>()
    });
    art.write("density.csv", &csv_bytes(&["t_start", "t_end", "theta", "density"], rows)?)?;

    let mut probes = Vec::new();
    for &t in &p.probe_times {
        for &r in &p.probe_radii {
            for &a in &p.probe_angles {
                probes.push((r, a, t));
            }
        }
    }
    let points: Vec<((f64, f64), f64)> = probes.iter().map(|&(r, a, t)| ((r * a.cos(), r * a.sin()), t)).collect();
    let phi = sol.evaluate_many(&points)?;
    let mut assertions = Vec::new();
    let mut outcome = json!({
        "profile": p.profile.name(),
        "jump_constant": op.jump,
        "jump_constant_over_pi": op.jump / std::f64::consts::PI,
        "convention": "(c I + J) g = 2 gamma / d, outward normal",
        "probes": probes.len(),
    });
    let reference = match &p.reference {
        Some(rc) if !probes.is_empty() => {
            let mut times = p.probe_times.clone();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let (mesh, fields) = fv_neumann_reference(p.radius, rc.n_r, rc.n_theta, p.diffusivity, rc.dt, p.profile, &times)?;
            let values: Vec<f64> = probes
                .iter()
                .map(|&(r, a, t)| {
                    let k = times.iter().position(|&x| x == t).expect("probe time listed");
                    mesh.interpolate(&fields[k], r, a)
                })
                .collect();
            let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let diff = phi.iter().zip(&values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let rel = diff / scale.max(f64::MIN_POSITIVE);
            assertions.push(Assertion::new(
                "cross_solver_agreement",
                rel <= rc.tolerance,
                format!("relative L-inf discrepancy {rel:.3e} at {} probes (tol {:.1e})", probes.len(), rc.tolerance),
            ));
            outcome["cross_solver_discrepancy"] = json!(rel);
            Some(values)
        }
        _ => None,
    };
    let rows = probes.iter().enumerate().map(|(k, &(r, a, t))| {
        vec![
            r.to_string(),
            a.to_string(),
            t.to_string(),
            phi[k].to_string(),
            reference.as_ref().map_or(String::new(), |v| v[k].to_string()),
        ]
    });
    art.write("probes.csv", &csv_bytes(&["r", "theta", "t", "potential", "reference"], rows)?)?;

    if let Some(h) = &p.holder {
        let mut rows = Vec::new();
        let mut by_exponent: BTreeMap<String, Vec<(usize, f64, bool)>> = BTreeMap::new();
        for &level in &h.levels {
            let pairs = normal_ray_pairs(p.radius, h.theta0, p.t_end, h.start, level);
            for &a in &h.exponents {
                let est = holder_probe(&sol, h.p, &pairs, a)?;
                rows.push(vec![level.to_string(), a.to_string(), est.estimate.to_string(), est.admissible.to_string()]);
                by_exponent.entry(a.to_string()).or_default().push((level, est.estimate, est.admissible));
            }
        }
        art.write("holder.csv", &csv_bytes(&["pairs", "exponent", "estimate", "admissible"], rows)?)?;
        for (a, series) in &by_exponent {
            let admissible = series[0].2;
            let values: Vec<f64> = series.iter().map(|s| s.1).collect();
            if admissible {
                let worst = values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs() / w[0].abs().max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                assertions.push(Assertion::new(
                    format!("holder_stable:a={a}"),
                    worst <= h.stability_tol,
                    format!("estimates {values:?}, worst relative change {worst:.3e}"),
                ));
            } else {
                let growth = values.last().unwrap() / values[0].max(f64::MIN_POSITIVE);
                assertions.push(Assertion::new(
                    format!("holder_grows:a={a}"),
                    growth >= h.growth_factor,
                    format!("estimates {values:?}, growth {growth:.3}"),
                ));
            }
        }
        outcome["holder"] = json!(by_exponent);
    }
    let summary = format!("potential ({}): jump constant {:.12} = {:.9}·π", p.profile.name(), op.jump, op.jump / std::f64::consts::PI);
    Ok(Produced { outcome, assertions, summary })
}

fn run_converge(cfg: &RunConfig, art: &mut Artifacts) -> Result<Produced> {
    let report = converge(&cfg.converge)?;
    let rows = report
        .levels
        .iter()
        .map(|l| vec![l.resolution.to_string(), l.h.to_string(), l.error.to_string()]);
    art.write("orders.csv", &csv_bytes(&["resolution", "h", "error"], rows)?)?;
    art.write_json("convergence.json", &report)?;
    let mut assertions = vec![Assertion::new(
        "monotone_errors",
        report.monotone,
        format!("errors {:?}", report.levels.iter().map(|l| l.error).collect::<Vec<_>>()),
    )];
    if let (Some(expected), Some(ok)) = (report.expected_order, report.order_passed) {
        assertions.push(Assertion::new(
            "fitted_order",
            ok,
            format!("order {:.3} (expected {expected} ± {}), fit residual {:.2e}", report.order, report.order_tol, report.fit_residual),
        ));
    }
    let summary = format!("{:?}: fitted order {:.3}", report.preset, report.order);
    Ok(Produced { outcome: serde_json::to_value(&report)?, assertions, summary })
}
