//! End-to-end acceptance criteria. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use bsrd_core::cli_io::config::{ConvergeConfig, ConvergencePreset};
use bsrd_core::cli_io::{converge, parse_config, run_loaded, Command, SURFACE_BLOWUP};
use bsrd_core::geometry::{build_surface_mesh, Meshes};
use bsrd_core::hypothesis_checker::{classify, witness_reproduces, Condition, SearchBudget, Status, VerdictStatus};
use bsrd_core::integrator::{simulate, Discretization, RunOptions, RunOutcome, RunStatus, State};
use bsrd_core::layer_potential::{
    assemble_j, fv_neumann_reference, holder_probe, normal_ray_pairs, GammaProfile, HeatKernelParams, TimeGrid,
};
use bsrd_core::monitors::{assert_gronwall, GronwallSpec, MonitorSpec};
use bsrd_core::reaction_model::{builtin, ModelFile, ReactionSystem, BUILTIN_NAMES};

const MIN_SYSTEM_DRIFT: f64 = 1e-8;
const TOY_DRIFT: f64 = 1e-10;
const NEGATIVITY_SCALE: f64 = 1e-9;
const GRONWALL_TOL: f64 = 1e-8;
const BLOWUP_WINDOW: (f64, f64) = (0.45, 0.55);
const SPATIAL_ORDER: (f64, f64) = (2.0, 0.3);
const TEMPORAL_ORDER: (f64, f64) = (1.0, 0.2);
const CROSS_SOLVER_TOL: f64 = 0.03;
const HOLDER_STABILITY: f64 = 0.10;
const HOLDER_GROWTH: f64 = 2.0;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_builtin(name: &str, n_r: usize, n_theta: usize, opts: &RunOptions) -> (ReactionSystem, RunOutcome<f64>) {
    let (sys, init) = builtin(name).unwrap();
    run_system(sys, init, n_r, n_theta, opts)
}

fn run_system(
    sys: ReactionSystem,
    init: bsrd_core::reaction_model::InitialData,
    n_r: usize,
    n_theta: usize,
    opts: &RunOptions,
) -> (ReactionSystem, RunOutcome<f64>) {
    let meshes = Meshes::build(1.0, n_r, n_theta).unwrap();
    let (u, v) = init.realize(&sys, &meshes.bulk, &meshes.surface).unwrap();
    let disc = Discretization::new(&sys, meshes).unwrap();
    let out = simulate(&sys, State::new(0.0, u, v), &disc, opts).unwrap();
    (sys, out)
}

fn conservation() -> Outcome {
    let opts = RunOptions { t_end: 5.0, ..RunOptions::default() };
    let (_, min) = run_builtin("min_system", 32, 64, &opts);
    let (_, toy) = run_builtin("toy_conserving", 32, 64, &opts);
    let min_reports = min.monitor_log.conserved_drift(MIN_SYSTEM_DRIFT);
    let toy_reports = toy.monitor_log.conserved_drift(TOY_DRIFT);
    let describe = |rs: &[bsrd_core::monitors::ConservationReport]| {
        rs.iter().map(|r| format!("{} {:.2e}", r.name, r.max_relative_drift)).collect::<Vec<_>>().join(", ")
    };
    check(
        min.status == RunStatus::Completed
            && toy.status == RunStatus::Completed
            && min_reports.len() == 2
            && !toy_reports.is_empty()
            && min_reports.iter().chain(&toy_reports).all(|r| r.passed),
        format!("min_system [{}] (tol 1e-8); toy_conserving [{}] (tol 1e-10)", describe(&min_reports), describe(&toy_reports)),
    )
}

fn nonnegativity() -> Outcome {
    let opts = RunOptions { t_end: 5.0, ..RunOptions::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for name in BUILTIN_NAMES {
        let (sys, init) = builtin(name).unwrap();
        if !sys.quasi_positive {
            continue;
        }
        let (_, out) = run_system(sys, init, 16, 64, &opts);
        let first = &out.monitor_log.samples[0];
        let scale = first.sup.iter().fold(0.0f64, |m, x| m.max(*x)).max(1.0);
        let report = out.monitor_log.check_nonnegativity(-NEGATIVITY_SCALE * scale);
        ok &= report.passed && out.status == RunStatus::Completed;
        parts.push(format!("{name} min {:.2e}", report.min_value));
    }
    check(ok && !parts.is_empty(), parts.join(", "))
}

fn gronwall() -> Outcome {
    let (sys, init) = builtin("signaling").unwrap();
    let spec = GronwallSpec { i: 2, j: 1, sigma: 1.0, alpha: sys.rates["k3"], beta: 1.0 };
    let opts = RunOptions {
        t_end: 5.0,
        monitors: MonitorSpec { gronwall: vec![spec], gronwall_tol: GRONWALL_TOL, ..MonitorSpec::default() },
        ..RunOptions::default()
    };
    let (_, out) = run_system(sys, init, 16, 64, &opts);
    let clean = assert_gronwall(&out.monitor_log, &spec, GRONWALL_TOL);

    // A synthetic jump in the bulk mass halfway through the run.
    let mut faulty = out.monitor_log.clone();
    let mid = faulty.samples.len() / 2;
    let jump = 0.5 * faulty.samples[mid].bulk_mass[0].abs().max(1.0);
    for s in &mut faulty.samples[mid..] {
        s.bulk_mass[0] += jump;
    }
    let injected = assert_gronwall(&faulty, &spec, GRONWALL_TOL);
    check(
        clean.passed && clean.steps_checked == out.accepted_steps && !injected.passed,
        format!(
            "{} steps, max slack ratio {:.3e}; injected jump at t={:.3} flagged: {}",
            clean.steps_checked,
            clean.max_slack_ratio,
            faulty.samples[mid].t,
            !injected.passed
        ),
    )
}

fn blowup() -> Outcome {
    let (sys, init) = ModelFile::from_json(SURFACE_BLOWUP).unwrap().compile().unwrap();
    let (_, out) = run_system(sys, init, 8, 32, &RunOptions { t_end: 1.0, ..RunOptions::default() });
    let (_, toy) = run_builtin("toy_conserving", 16, 64, &RunOptions { t_end: 10.0, ..RunOptions::default() });
    let t_est = match out.status {
        RunStatus::BlowupDetected { t_est } => Some(t_est),
        _ => None,
    };
    check(
        t_est.is_some_and(|t| (BLOWUP_WINDOW.0..=BLOWUP_WINDOW.1).contains(&t)) && toy.status == RunStatus::Completed,
        format!("surface preset t_est = {t_est:?}; toy_conserving on [0, 10]: {:?}", toy.status),
    )
}

fn verdicts() -> Outcome {
    let budget = SearchBudget::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["toy_conserving", "min_system", "signaling"] {
        let (sys, _) = builtin(name).unwrap();
        let v = classify(&sys, &budget);
        ok &= v.status == VerdictStatus::HypothesesVerified;
        parts.push(format!("{name} {:?}", v.status));
    }
    let (sys, _) = builtin("toy_open").unwrap();
    let v = classify(&sys, &budget);
    let witness = v.reports.iter().find(|r| r.condition == Condition::V2 && r.status == Status::Violated);
    let confirmed = witness.is_some_and(|r| {
        let w = r.witness.as_ref().unwrap();
        let e = sys.eval_reactions(&w.u, &w.v).unwrap();
        let j = r.j.unwrap() - 1;
        let i = r.i.unwrap() - 1;
        let direct = e.g[j] > r.parameters.k_g.unwrap() * (w.u[j] + w.v[i] + 1.0);
        direct && witness_reproduces(&sys, r).unwrap()
    });
    ok &= v.status == VerdictStatus::NotVerified && confirmed;
    let at = witness.and_then(|r| r.witness.as_ref()).map(|w| format!("u={:?} v={:?}", w.u, w.v));
    parts.push(format!("toy_open {:?}, V2 witness {}", v.status, at.unwrap_or_else(|| "missing".into())));
    check(ok, parts.join("; "))
}

fn orders() -> Outcome {
    let study = |preset, ladder: Vec<usize>, dt: f64| {
        converge(&ConvergeConfig { preset, ladder, t_end: 0.5, dt, ..ConvergeConfig::default() }).unwrap()
    };
    let surface = study(ConvergencePreset::SurfaceEigenmode, vec![16, 32, 64], 1e-3);
    let bulk = study(ConvergencePreset::ManufacturedBulk, vec![8, 16, 32], 1e-3);
    let temporal = study(ConvergencePreset::SurfaceEigenmodeTemporal, vec![20, 40, 80], 1e-3);
    let within = |p: f64, (want, tol): (f64, f64)| (p - want).abs() <= tol;
    check(
        within(surface.order, SPATIAL_ORDER)
            && within(bulk.order, SPATIAL_ORDER)
            && within(temporal.order, TEMPORAL_ORDER)
            && surface.monotone
            && bulk.monotone
            && temporal.monotone,
        format!(
            "surface spatial {:.3}, bulk spatial {:.3}, imex_be temporal {:.3}",
            surface.order, bulk.order, temporal.order
        ),
    )
}

fn cross_solver() -> Outcome {
    let (t_end, times) = (0.5, [0.1, 0.2, 0.3, 0.4, 0.5]);
    let surface = build_surface_mesh(1.0f64, 64).unwrap();
    let time = TimeGrid::new(t_end, 200).unwrap();
    let gamma = GammaProfile::CosTheta.sample(&surface, time);
    let sol = assemble_j(&surface, time, HeatKernelParams::default()).unwrap().solve(&gamma).unwrap();
    let (mesh, fields) = fv_neumann_reference(1.0, 128, 128, 1.0, 1e-4, GammaProfile::CosTheta, &times).unwrap();
    // 4 radii × 5 angles.
    let probes: Vec<(f64, f64)> = [0.2, 0.4, 0.6, 0.8]
        .iter()
        .flat_map(|&r| [0.3, 1.5, 2.7, 3.9, 5.1].map(|a| (r, a)))
        .collect();
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for (k, &t) in times.iter().enumerate() {
        for &(r, a) in &probes {
            let lp = sol.evaluate((r * a.cos(), r * a.sin()), t).unwrap();
            let fv = mesh.interpolate(&fields[k], r, a);
            diff = diff.max((lp - fv).abs());
            scale = scale.max(fv.abs());
        }
    }
    let rel = diff / scale;
    check(
        rel <= CROSS_SOLVER_TOL,
        format!("relative L-inf {rel:.3e} over {} probes x {} times (tol 3e-2)", probes.len(), times.len()),
    )
}

fn holder() -> Outcome {
    let t_end = 0.2;
    let surface = build_surface_mesh(1.0f64, 256).unwrap();
    let time = TimeGrid::new(t_end, 400).unwrap();
    let gamma = GammaProfile::Singular.sample(&surface, time);
    let sol = assemble_j(&surface, time, HeatKernelParams::default()).unwrap().solve(&gamma).unwrap();
    let series = |a: f64| -> (Vec<f64>, bool) {
        let ests: Vec<_> = [2, 4, 8]
            .iter()
            .map(|&levels| holder_probe(&sol, 8.0, &normal_ray_pairs(1.0, PI, t_end, 0.5, levels), a).unwrap())
            .collect();
        (ests.iter().map(|e| e.estimate).collect(), ests[0].admissible)
    };
    let (good, good_ok) = series(0.5);
    let (bad, bad_ok) = series(1.0);
    let change = good.windows(2).map(|w| (w[1] - w[0]).abs() / w[0]).fold(0.0, f64::max);
    let growth = bad[2] / bad[0];
    check(
        good_ok && !bad_ok && change <= HOLDER_STABILITY && growth >= HOLDER_GROWTH,
        format!("a=0.5 {good:.5?} (max change {change:.2e}); a=1 {bad:.5?} (growth {growth:.3})"),
    )
}

fn determinism() -> Outcome {
    let configs = [
        (Command::Simulate, r#"{"model": "toy_conserving", "mesh": {"n_r": 8, "n_theta": 32}, "time": {"t_end": 0.5},
            "perturbation": {"amplitude": 0.1}, "seed": 11, "snapshot_every": 0.25}"#),
        (Command::Check, r#"{"model": "toy_open", "seed": 3}"#),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (command, text) in configs {
        let loaded = parse_config(text, std::path::Path::new(".")).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_loaded(command, &loaded, Some(a.path()), None);
        let rb = run_loaded(command, &loaded, Some(b.path()), None);
        let bytes = |d: &std::path::Path| std::fs::read(d.join("manifest.json")).unwrap();
        let same = ra.manifest.numeric_hash == rb.manifest.numeric_hash && bytes(a.path()) == bytes(b.path());
        ok &= same && ra.exit_code == 0;
        parts.push(format!("{command} {}", &ra.manifest.numeric_hash[..16]));
    }
    check(ok, parts.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 conservation", conservation),
        ("2 nonnegativity", nonnegativity),
        ("3 gronwall envelope", gronwall),
        ("4 blow-up alternative", blowup),
        ("5 checker verdicts", verdicts),
        ("6 discretization orders", orders),
        ("7 cross-solver oracle", cross_solver),
        ("8 holder probe", holder),
        ("9 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("[PASS] {name}: {d} ({secs:.1}s)"),
            Err(d) => {
                failed += 1;
                println!("[FAIL] {name}: {d} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
