use phe2::config::ExperimentConfig;
use phe2::field::PeriodicField;
use phe2::pipeline::{run_pipeline, run_with, Artifacts, PipelineError, RunReport, Stage};
use phe2::semiconj::SemiConjugacy;
use phe2::Vec2;

fn quick(json: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_json(json).unwrap();
    c.grid = 64;
    c.rotation_iterations = 400;
    c.livschitz_samples = 8;
    c.spectral_sweep = 50;
    c.periodic_max = 3;
    c
}

fn linear_config() -> ExperimentConfig {
    quick(r#"{"matrix": [[3,1],[1,2]], "seed": 11}"#)
}

fn unstable_config() -> ExperimentConfig {
    quick(
        r#"{"matrix": [[3,1],[1,2]], "seed": 5, "perturbation": {"epsilon": 0.05,
            "direction_mode": "unstable_aligned", "modes": [{"k": [1,0], "cos": 1.0}]}}"#,
    )
}

#[test]
fn linear_full_run_is_clean() {
    let (r, art) = run_pipeline(&linear_config(), &Stage::ALL).unwrap();
    assert!(r.alarms.is_empty(), "{:?}", r.alarms);
    let v = r.verdict.as_ref().unwrap();
    assert!(v.conjugate);
    assert!(art.h.as_ref().unwrap().p.sup_norm() < 1e-12);
    let cert = r.cert.as_ref().unwrap();
    assert!(cert.cone_ok && cert.area_ok && cert.specialness_defect < 1e-12);
    let rig = r.rigidity.as_ref().unwrap();
    assert!(rig.check.gate_passed);
    let l = rig.livschitz.as_ref().unwrap();
    assert!(l.psi_max < 1e-12 && (l.fn_last - 1.0).abs() < 1e-12);
    let periodic = r.periodic.as_ref().unwrap();
    assert!(periodic.counts.iter().all(|c| c.matches()));
    assert_eq!(r.stages, Stage::ALL.to_vec());
}

#[test]
fn report_round_trips_through_json() {
    let (r, _) = run_pipeline(&unstable_config(), &Stage::ALL).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.without_timings(), r.without_timings());
}

#[test]
fn same_seed_same_report() {
    let c = unstable_config();
    let (a, _) = run_pipeline(&c, &[Stage::Foliation, Stage::Rigidity]).unwrap();
    let (b, _) = run_pipeline(&c, &[Stage::Foliation, Stage::Rigidity]).unwrap();
    assert_eq!(
        serde_json::to_string(&a.without_timings()).unwrap(),
        serde_json::to_string(&b.without_timings()).unwrap()
    );
}

#[test]
fn unstable_family_passes_rigidity_gate() {
    let (r, _) = run_pipeline(&unstable_config(), &[Stage::Rigidity]).unwrap();
    assert!(r.alarms.is_empty(), "{:?}", r.alarms);
    let rig = r.rigidity.unwrap();
    assert!(rig.check.gate_passed);
    assert!(rig.check.max_center_deviation < 1e-4);
    let l = rig.livschitz.unwrap();
    assert!(l.holonomy_max_dev < 1e-3);
    assert!(r.foliation.is_none() && r.cohomology.is_none());
}

#[test]
fn center_family_skips_livschitz() {
    // the defect of this family stays above the default gate, so widen it
    let c = quick(
        r#"{"matrix": [[3,1],[1,2]], "tolerances": {"defect_max": 0.5}, "perturbation": {"epsilon": 0.05,
            "direction_mode": "center_aligned", "modes": [{"k": [1,0], "cos": 1.0}]}}"#,
    );
    let (r, _) = run_pipeline(&c, &[Stage::Rigidity]).unwrap();
    let rig = r.rigidity.unwrap();
    assert!(!rig.check.gate_passed);
    assert!(rig.livschitz.is_none());
    assert!(rig.livschitz_skipped.is_some());
}

#[test]
fn corrupted_semiconjugacy_is_rejected_downstream() {
    let c = unstable_config();
    let (_, art) = run_pipeline(&c, &[Stage::Periodic]).unwrap();
    let f = c.build_map().unwrap();
    let p = PeriodicField::from_fn(c.grid, |x: Vec2| Vec2::new(0.2 * (6.0 * x.x).sin(), 0.0));
    let injected = Artifacts { h: Some(SemiConjugacy::from_field(&f, p, 1e-10)), ..art };
    match run_with(&c, &[Stage::Rigidity], injected) {
        Err(PipelineError::StageFailed { stage, alarms, .. }) => {
            assert_eq!(stage, Stage::Rigidity);
            assert!(alarms.iter().any(|a| a.message.contains("defect")));
        }
        other => panic!("expected a stage failure, got {:?}", other.map(|r| r.0.alarms)),
    }
}

#[test]
fn rerun_from_stored_upstream_matches() {
    let c = unstable_config();
    let (full, art) = run_pipeline(&c, &[Stage::Rigidity]).unwrap();
    let (again, _) = run_with(&c, &[Stage::Rigidity], art).unwrap();
    assert_eq!(again.rigidity, full.rigidity);
    assert_eq!(again.stages, vec![Stage::Rigidity]);
}
