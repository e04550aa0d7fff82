use bsrd_core::geometry::Meshes;
use bsrd_core::integrator::{simulate, Discretization, RunOptions, RunStatus, State};
use bsrd_core::reaction_model::{builtin, ModelFile};

const SURFACE_BLOWUP: &str = r#"{"name":"surface_blowup","bulk_species":["u"],"surface_species":["v"],
    "diffusivity":[1],"surface_diffusivity":[1],"H":["0"],"F":["v^2"],"G":["0"]}"#;

#[test]
fn uniform_surface_ode_blows_up_near_one_half() {
    let (sys, _) = ModelFile::from_json(SURFACE_BLOWUP).unwrap().compile().unwrap();
    let meshes = Meshes::build(1.0, 8, 32).unwrap();
    let disc = Discretization::new(&sys, meshes).unwrap();
    let s = State::new(0.0, vec![vec![1.0; 256]], vec![vec![2.0; 32]]);
    let opts = RunOptions { t_end: 2.0, ..RunOptions::default() };
    let out = simulate(&sys, s, &disc, &opts).unwrap();
    match out.status {
        RunStatus::BlowupDetected { t_est } => {
            println!("t_est = {t_est}");
            assert!((0.45..=0.55).contains(&t_est), "{t_est}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn min_system_conserves_both_totals() {
    let (sys, init) = builtin("min_system").unwrap();
    let meshes = Meshes::build(1.0, 12, 48).unwrap();
    let (u, v) = init.realize(&sys, &meshes.bulk, &meshes.surface).unwrap();
    let disc = Discretization::new(&sys, meshes).unwrap();
    let opts = RunOptions { t_end: 10.0, ..RunOptions::default() };
    let out = simulate(&sys, State::new(0.0, u, v), &disc, &opts).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
    let summary = out.monitor_log.summarize(out.negativity_tol, sys.quasi_positive);
    println!("{summary:#?} accepted {} rejected {}", out.accepted_steps, out.rejected_steps);
    assert!(summary.passed());
}
