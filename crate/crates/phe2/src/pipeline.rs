//! Stage orchestration: certify -> semiconj -> foliation / periodic -> rigidity, plus the
//! cohomology and spectral checks, collected into one report.

use crate::bundles::{ConstantLine, DirectionField, LineField, PointwiseBundle, Sigma};
use crate::cohomology::{
    amplification, cohomological_solve, cohomological_solve_samples, diophantine_constant, diophantine_window,
    solution_residual, transverse_distance_function, CohomError, FourierSeries, TOL_MEAN,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::endo::TorusEndomorphism;
use crate::foliation::{
    global_product_intersection, integrate_leaf, integrate_leaf_both, leaf_invariance_error, linear_shadow_distance,
    periodic_scan, poincare_return, quasi_isometry_constants, return_map_monotone, rotation_number, FolError, Leaf,
    QuasiIsometry, RotationEstimate, TransverseCircle,
};
use crate::hyperbolic::{
    c2_criterion, certify_area_expanding, certify_cone_invariance, estimate_bundles, specialness_defect,
    BundleMethod, ConeField, HyperbolicityCert,
};
use crate::lattice::{wrap, wrap1, Vec2};
use crate::livschitz::{
    dprime_scaling, dynamical_density, fn_product, h_center_diagnostics, leaf_point, unstable_holonomy_ratio,
    LivError, LivschitzPotential,
};
use crate::periodic::{find_periodic_orbits, lifted_fixed_point, periodic_rigidity, PeriodicReport, RigidityCheck};
use crate::semiconj::{
    conjugacy_verdict, fiber_diameter, measure_defect, monotone_along, solve_semiconjugacy, SemiConjMeta,
    SemiConjugacy, Verdict, VerdictThresholds,
};
use crate::spectral::{random_sweep, spectral_condition, SpectralCondition, SweepReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Certify,
    Semiconj,
    Foliation,
    Periodic,
    Rigidity,
    Cohomology,
    Spectral,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Certify,
        Stage::Semiconj,
        Stage::Foliation,
        Stage::Periodic,
        Stage::Rigidity,
        Stage::Cohomology,
        Stage::Spectral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Certify => "certify",
            Stage::Semiconj => "semiconj",
            Stage::Foliation => "foliation",
            Stage::Periodic => "periodic",
            Stage::Rigidity => "rigidity",
            Stage::Cohomology => "cohomology",
            Stage::Spectral => "spectral",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Certify | Stage::Spectral => &[],
            Stage::Semiconj | Stage::Cohomology => &[Stage::Certify],
            Stage::Foliation | Stage::Periodic => &[Stage::Certify, Stage::Semiconj],
            Stage::Rigidity => &[Stage::Certify, Stage::Semiconj, Stage::Periodic],
        }
    }
}

/// Requested stages plus everything they depend on, in execution order.
pub fn with_dependencies(requested: &[Stage]) -> Vec<Stage> {
    let mut need: Vec<Stage> = Vec::new();
    fn add(s: Stage, need: &mut Vec<Stage>) {
        for &d in s.deps() {
            add(d, need);
        }
        if !need.contains(&s) {
            need.push(s);
        }
    }
    for &s in requested {
        add(s, &mut need);
    }
    need.sort();
    need
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage:?} failed: {message}")]
    StageFailed { stage: Stage, message: String, alarms: Vec<Alarm> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoliationReport {
    /// Shadow distance of one unstable leaf from the e_u line at lengths 10, 20, 40.
    pub shadow_distances: Vec<f64>,
    pub qi: QuasiIsometry,
    pub qi_doubled: QuasiIsometry,
    pub product_point: Option<Vec2>,
    pub product_error: Option<String>,
    /// |h(z) - linear intersection through h(x_u), h(x_c)|.
    pub product_h_error: Option<f64>,
    pub h_line_deviation_u: f64,
    pub h_line_deviation_c: f64,
    pub h_line_bound: f64,
    pub leaf_invariance_error: f64,
    pub rotation_f: RotationEstimate,
    pub rotation_a: RotationEstimate,
    pub rotation_agree: bool,
    pub return_monotone: bool,
    pub periodic_return: Option<(f64, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LivschitzReport {
    pub cocycle_max: f64,
    pub cocycle_points: usize,
    pub psi_max: f64,
    pub scaling_max_rel: f64,
    pub scaling_segments: usize,
    pub density_law_max: f64,
    pub density_self: f64,
    pub holonomy_max_dev: f64,
    pub derivative_fit_residual: f64,
    pub derivative_constant: f64,
    pub midpoint_max: f64,
    pub midpoint_bound: f64,
    pub fn_alpha: f64,
    pub fn_vs_density: f64,
    pub fn_last: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub defect: f64,
    pub check: RigidityCheck,
    pub counts_consistent: bool,
    pub livschitz: Option<LivschitzReport>,
    pub livschitz_skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohomologyReport {
    pub theta: f64,
    pub c_est: f64,
    pub c_tail: f64,
    pub k_max: usize,
    pub amplification: f64,
    pub amplification_bound: f64,
    pub manufactured_error: f64,
    pub obstruction_detected: bool,
    pub transverse_b_mean: Option<f64>,
    pub transverse_solved: Option<bool>,
    pub transverse_residual: Option<f64>,
    pub transverse_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub matrix: SpectralCondition,
    pub sweep: SweepReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub stages: Vec<Stage>,
    pub cert: Option<HyperbolicityCert>,
    pub semiconj: Option<SemiConjMeta>,
    pub verdict: Option<Verdict>,
    pub foliation: Option<FoliationReport>,
    pub periodic: Option<PeriodicReport>,
    pub rigidity: Option<RigidityReport>,
    pub cohomology: Option<CohomologyReport>,
    pub spectral: Option<SpectralReport>,
    pub alarms: Vec<Alarm>,
    /// Wall-clock seconds per stage; excluded from determinism comparisons.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    fn new(config: &ExperimentConfig) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            stages: Vec::new(),
            cert: None,
            semiconj: None,
            verdict: None,
            foliation: None,
            periodic: None,
            rigidity: None,
            cohomology: None,
            spectral: None,
            alarms: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn without_timings(&self) -> RunReport {
        RunReport { timings: BTreeMap::new(), ..self.clone() }
    }
}

/// Intermediate objects handed from stage to stage; any of them may be supplied from outside.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub cert: Option<HyperbolicityCert>,
    pub bundles: Option<(DirectionField, DirectionField)>,
    pub h: Option<SemiConjugacy>,
    pub verdict: Option<Verdict>,
    pub periodic: Option<PeriodicReport>,
    pub leaves: Vec<Leaf>,
    pub fourier: Option<FourierSeries>,
}

/// One generator per stage, so a stage re-run from stored inputs repeats its draws.
pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (stage as u64 + 1))
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec2> {
    (0..n).map(|_| Vec2::new(rng.random::<f64>(), rng.random::<f64>())).collect()
}

pub fn run_pipeline(config: &ExperimentConfig, stages: &[Stage]) -> Result<(RunReport, Artifacts), PipelineError> {
    run_with(config, stages, Artifacts::default())
}

fn failed(stage: Stage, e: impl ToString) -> PipelineError {
    PipelineError::StageFailed { stage, message: e.to_string(), alarms: Vec::new() }
}

/// Runs `stages` and their dependencies; dependencies already present in `upstream` are reused.
pub fn run_with(
    config: &ExperimentConfig,
    stages: &[Stage],
    upstream: Artifacts,
) -> Result<(RunReport, Artifacts), PipelineError> {
    config.validate()?;
    let f = config.build_map()?;
    let mut report = RunReport::new(config);
    let mut art = upstream;
    for stage in with_dependencies(stages) {
        let present = match stage {
            Stage::Certify => art.cert.is_some() && art.bundles.is_some(),
            Stage::Semiconj => art.h.is_some() && art.verdict.is_some(),
            Stage::Periodic => art.periodic.is_some(),
            _ => false,
        };
        if present && !stages.contains(&stage) {
            continue;
        }
        let t0 = Instant::now();
        match stage {
            Stage::Certify => certify_stage(config, &f, &mut art)?,
            Stage::Semiconj => semiconj_stage(config, &f, &mut art, &mut report)?,
            Stage::Foliation => report.foliation = Some(foliation_stage(config, &f, &mut art, &mut report)?),
            Stage::Periodic => periodic_stage(config, &f, &mut art, &mut report),
            Stage::Rigidity => report.rigidity = Some(rigidity_stage(config, &f, &art, &mut report)?),
            Stage::Cohomology => report.cohomology = Some(cohomology_stage(&f, &mut art)),
            Stage::Spectral => {
                report.spectral = Some(SpectralReport {
                    matrix: spectral_condition(&f.linear(), 64),
                    sweep: random_sweep(config.spectral_sweep, 9, 64, config.seed),
                });
                if let Some(s) = &report.spectral {
                    if !s.matrix.ok || !s.sweep.failures.is_empty() {
                        report.alarms.push(Alarm {
                            stage,
                            message: "an eigenvalue is an exact power of the other".into(),
                        });
                    }
                }
            }
        }
        report.stages.push(stage);
        report.timings.insert(stage.name().to_string(), t0.elapsed().as_secs_f64());
    }
    report.cert = art.cert.clone();
    report.semiconj = art.h.as_ref().map(|h| h.meta());
    report.verdict = art.verdict.clone();
    report.periodic = art.periodic.clone();
    Ok((report, art))
}

fn certify_stage(config: &ExperimentConfig, f: &TorusEndomorphism, art: &mut Artifacts) -> Result<(), PipelineError> {
    let n = config.grid;
    let mut rng = stage_rng(config.seed, Stage::Certify);
    let cone = certify_cone_invariance(f, &ConeField::default_for(f), n, 16);
    let (ec, eu) = estimate_bundles(f, config.bundle_depth, n, BundleMethod::Power, config.tolerances.angle)
        .map_err(|e| failed(Stage::Certify, e))?;
    let samples = random_points(&mut rng, 16);
    let special = specialness_defect(f, config.specialness_depth, &samples, &mut rng)
        .map_err(|e| failed(Stage::Certify, e))?;
    let area = certify_area_expanding(f, config.area_n_max, n);
    let pc = PointwiseBundle::new(f, Sigma::Center, config.bundle_depth);
    let pu = PointwiseBundle::new(f, Sigma::Unstable, config.bundle_depth);
    let identity_points = random_points(&mut rng, 100);
    let c2 = c2_criterion(f, &pc, &pu, n.min(64), &identity_points, 5);
    let ec_dev = ec.max_deviation_from(f.eigen().e_c);
    art.cert = Some(HyperbolicityCert::assemble(
        cone,
        area,
        c2,
        special,
        config.specialness_depth,
        ec_dev,
        config.tolerances.angle,
    ));
    art.bundles = Some((ec, eu));
    Ok(())
}

fn semiconj_stage(
    config: &ExperimentConfig,
    f: &TorusEndomorphism,
    art: &mut Artifacts,
    report: &mut RunReport,
) -> Result<(), PipelineError> {
    let mut rng = stage_rng(config.seed, Stage::Semiconj);
    let cert = art.cert.as_ref().expect("certify ran");
    let (ec, eu) = art.bundles.as_ref().expect("certify ran");
    let h = solve_semiconjugacy(f, config.grid, config.tolerances.contraction, config.max_iter)
        .map_err(|e| failed(Stage::Semiconj, e))?;
    let mut targets = Vec::new();
    if let Some(x0) = lifted_fixed_point(f) {
        targets.push(wrap(h.eval_h(x0)));
    }
    targets.extend(random_points(&mut rng, config.probes.saturating_sub(targets.len())));
    let mut fibers = Vec::new();
    for y in targets {
        fibers.push(fiber_diameter(&h, y, config.grid, ec).map_err(|e| failed(Stage::Semiconj, e))?);
    }
    let mut polylines = Vec::new();
    for x in random_points(&mut rng, 4) {
        let leaf = integrate_leaf(eu, Sigma::Unstable, x, 2.0, 0.01, 1).map_err(|e| failed(Stage::Semiconj, e))?;
        polylines.push(leaf.points);
    }
    let monotone = monotone_along(&h, f.eigen(), &polylines);
    let verdict = conjugacy_verdict(
        cert.area_ok,
        fibers,
        monotone,
        &VerdictThresholds { fiber_threshold: config.tolerances.fiber_threshold },
    );
    if let Some(a) = &verdict.alarm {
        report.alarms.push(Alarm { stage: Stage::Semiconj, message: a.clone() });
    }
    art.h = Some(h);
    art.verdict = Some(verdict);
    Ok(())
}

fn foliation_stage(
    config: &ExperimentConfig,
    f: &TorusEndomorphism,
    art: &mut Artifacts,
    report: &mut RunReport,
) -> Result<FoliationReport, PipelineError> {
    let fail = |e: FolError| failed(Stage::Foliation, e);
    let mut rng = stage_rng(config.seed, Stage::Foliation);
    let e = f.eigen().clone();
    let (ec, eu) = art.bundles.clone().expect("certify ran");
    let h = art.h.as_ref().expect("semiconj ran");
    let conjugate = art.verdict.as_ref().is_some_and(|v| v.conjugate);
    let starts = random_points(&mut rng, 3);

    let long = integrate_leaf(&eu, Sigma::Unstable, starts[0], 40.0, 0.02, 1).map_err(fail)?;
    let shadow_distances: Vec<f64> = [10.0, 20.0, 40.0]
        .iter()
        .map(|&len| {
            let k = long.arclengths.iter().position(|&s| s >= len - 1e-9).unwrap_or(long.points.len() - 1);
            let part = Leaf {
                points: long.points[..=k].to_vec(),
                arclengths: long.arclengths[..=k].to_vec(),
                sigma: Sigma::Unstable,
                orientation: 1,
            };
            linear_shadow_distance(&part, e.e_u)
        })
        .collect();
    let mut leaves = Vec::new();
    let mut doubled = Vec::new();
    for &x in &starts {
        leaves.push(integrate_leaf_both(&eu, Sigma::Unstable, x, 10.0, 0.02).map_err(fail)?);
        doubled.push(integrate_leaf_both(&eu, Sigma::Unstable, x, 20.0, 0.02).map_err(fail)?);
        leaves.push(integrate_leaf_both(&ec, Sigma::Center, x, 10.0, 0.02).map_err(fail)?);
    }
    let unstable_only = |ls: &[Leaf]| ls.iter().filter(|l| l.sigma == Sigma::Unstable).cloned().collect::<Vec<_>>();
    let qi = quasi_isometry_constants(&unstable_only(&leaves));
    let qi_doubled = quasi_isometry_constants(&doubled);

    // global product structure
    let xu = starts[1];
    let xc = starts[1] + Vec2::new(0.3, -0.2);
    let lu = integrate_leaf_both(&eu, Sigma::Unstable, xu, 4.0, 0.005).map_err(fail)?;
    let lc = integrate_leaf_both(&ec, Sigma::Center, xc, 4.0, 0.005).map_err(fail)?;
    let (product_point, product_error, product_h_error) = match global_product_intersection(&lu, &lc) {
        Ok(z) => {
            let (hu, hc) = (h.eval_h(xu), h.eval_h(xc));
            let m = crate::lattice::Mat2::from_columns(&[e.e_u, -e.e_c]);
            let st = m.try_inverse().expect("eigenbasis") * (hc - hu);
            let lin = hu + e.e_u * st.x;
            (Some(z), None, Some((h.eval_h(z) - lin).norm()))
        }
        Err(err) => {
            if matches!(err, FolError::MultipleIntersections { .. }) {
                report.alarms.push(Alarm { stage: Stage::Foliation, message: format!("global product structure: {err}") });
            }
            (None, Some(err.to_string()), None)
        }
    };

    // h sends leaves to lines
    let dev = |leaf: &Leaf, sigma: Sigma| {
        let h0 = h.eval_h(leaf.points[0]);
        leaf.points
            .iter()
            .map(|&x| {
                let (u, c) = e.eigen_coords(h.eval_h(x) - h0);
                if sigma == Sigma::Unstable {
                    c.abs()
                } else {
                    u.abs()
                }
            })
            .fold(0.0, f64::max)
    };
    let h_line_deviation_u = dev(&leaves[0], Sigma::Unstable);
    let h_line_deviation_c = dev(&leaves[1], Sigma::Center);
    let n = h.p.n() as f64;
    let h_line_bound = 2.0 * h.defect + 1.0 / (n * n);

    let pu = PointwiseBundle::new(f, Sigma::Unstable, config.bundle_depth);
    let short = integrate_leaf(&pu, Sigma::Unstable, starts[2], 1.0, 0.002, 1).map_err(fail)?;
    let leaf_invariance_error = leaf_invariance_error(f, &pu, &short, 0.002).map_err(fail)?;

    let circle = TransverseCircle::new(0.0, &e).map_err(fail)?;
    let rf = |t: f64| poincare_return(&eu, &circle, t, 0.02).map(|r| r.displacement).unwrap_or(f64::NAN);
    let rotation_f = rotation_number(rf, config.rotation_iterations, 10);
    let lin = ConstantLine(e.e_u);
    let ra = |t: f64| poincare_return(&lin, &circle, t, 0.02).map(|r| r.displacement).unwrap_or(f64::NAN);
    let rotation_a = rotation_number(ra, config.rotation_iterations, 10);
    let diff = {
        let d = rotation_f.theta_hat - rotation_a.theta_hat;
        (d - d.round()).abs()
    };
    let rotation_agree = diff <= rotation_f.error_bound + rotation_a.error_bound;
    let return_monotone = return_map_monotone(rf, 200);
    let periodic_return = periodic_scan(rf, 20, 64, 1e-9);
    if conjugate && !rotation_agree {
        report.alarms.push(Alarm {
            stage: Stage::Foliation,
            message: format!("rotation numbers of f and A differ by {diff:.3e} although h is a conjugacy"),
        });
    }
    if !return_monotone {
        report.alarms.push(Alarm { stage: Stage::Foliation, message: "unstable return map is not monotone".into() });
    }
    art.leaves = leaves;
    Ok(FoliationReport {
        shadow_distances,
        qi,
        qi_doubled,
        product_point,
        product_error,
        product_h_error,
        h_line_deviation_u,
        h_line_deviation_c,
        h_line_bound,
        leaf_invariance_error,
        rotation_f,
        rotation_a,
        rotation_agree,
        return_monotone,
        periodic_return,
    })
}

fn periodic_stage(config: &ExperimentConfig, f: &TorusEndomorphism, art: &mut Artifacts, report: &mut RunReport) {
    let pc = PointwiseBundle::new(f, Sigma::Center, config.bundle_depth);
    let rep = find_periodic_orbits(f, config.periodic_max, &pc);
    let conjugate = art.verdict.as_ref().is_some_and(|v| v.conjugate);
    for c in &rep.counts {
        if conjugate && !c.matches() {
            report.alarms.push(Alarm {
                stage: Stage::Periodic,
                message: format!(
                    "count cross-check: {} fixed points of f^{} against |det(A^n - I)| = {:?}",
                    c.found, c.n, c.expected
                ),
            });
        }
    }
    art.periodic = Some(rep);
}

fn rigidity_stage(
    config: &ExperimentConfig,
    f: &TorusEndomorphism,
    art: &Artifacts,
    report: &mut RunReport,
) -> Result<RigidityReport, PipelineError> {
    let tol = &config.tolerances;
    let h = art.h.as_ref().expect("semiconj ran");
    let defect = measure_defect(f, &h.p, 2 * h.p.n());
    if defect > tol.defect_max {
        let alarm = Alarm {
            stage: Stage::Rigidity,
            message: format!("semi-conjugacy defect {defect:.3e} exceeds {:.3e}", tol.defect_max),
        };
        report.alarms.push(alarm.clone());
        return Err(PipelineError::StageFailed {
            stage: Stage::Rigidity,
            message: alarm.message.clone(),
            alarms: report.alarms.clone(),
        });
    }
    let cert = art.cert.as_ref().expect("certify ran");
    let periodic = art.periodic.as_ref().expect("periodic ran");
    let check = periodic_rigidity(cert, &periodic.orbits, f.eigen().lambda_c.abs(), tol.specialness, tol.rigidity);
    if let Some(a) = &check.alarm {
        report.alarms.push(Alarm { stage: Stage::Rigidity, message: a.clone() });
    }
    let counts_consistent = periodic.counts.iter().all(|c| c.matches());
    let (livschitz, livschitz_skipped) = match livschitz_checks(config, f, h) {
        Ok(r) => (Some(r), None),
        Err(LivError::SeriesDiverging { reason }) => (None, Some(reason)),
        Err(e) => return Err(failed(Stage::Rigidity, e)),
    };
    if let (Some(l), true) = (&livschitz, check.gate_passed) {
        let mut bad = Vec::new();
        if l.cocycle_max >= 1e-8 {
            bad.push(format!("cocycle residual {:.3e}", l.cocycle_max));
        }
        if l.scaling_max_rel >= 1e-6 {
            bad.push(format!("d' scaling error {:.3e}", l.scaling_max_rel));
        }
        if l.density_law_max >= 1e-6 {
            bad.push(format!("density law residual {:.3e}", l.density_law_max));
        }
        if l.holonomy_max_dev >= tol.holonomy {
            bad.push(format!("holonomy ratio off by {:.3e}", l.holonomy_max_dev));
        }
        if l.midpoint_max >= l.midpoint_bound {
            bad.push(format!("midpoint deviation {:.3e} >= {:.3e}", l.midpoint_max, l.midpoint_bound));
        }
        for b in bad {
            report.alarms.push(Alarm { stage: Stage::Rigidity, message: b });
        }
    }
    Ok(RigidityReport { defect, check, counts_consistent, livschitz, livschitz_skipped })
}

fn livschitz_checks(
    config: &ExperimentConfig,
    f: &TorusEndomorphism,
    h: &SemiConjugacy,
) -> Result<LivschitzReport, LivError> {
    let mut rng = stage_rng(config.seed, Stage::Rigidity);
    let depth = config.bundle_depth;
    let pot = LivschitzPotential::new(f, Sigma::Center, depth)?;
    let n = config.livschitz_samples;
    let step = 0.01;

    let pts = random_points(&mut rng, 10 * n);
    let mut cocycle_max: f64 = 0.0;
    let mut psi_max: f64 = 0.0;
    for &x in &pts {
        cocycle_max = cocycle_max.max(pot.cocycle_residual(x)?);
        psi_max = psi_max.max(pot.psi(x)?.value.abs());
    }

    let mut scaling_max_rel: f64 = 0.0;
    for x in random_points(&mut rng, n) {
        scaling_max_rel = scaling_max_rel.max(dprime_scaling(&pot, x, 0.2, step)?.relative_error);
    }

    let center = pot.bundle();
    let mut density_law_max: f64 = 0.0;
    let mut density_self: f64 = 0.0;
    for x in random_points(&mut rng, 20) {
        let y = leaf_point(&center, x, 0.25, step)?;
        let r = dynamical_density(f, Sigma::Center, depth, x, y)?.value;
        let rf = dynamical_density(f, Sigma::Center, depth, f.apply_lift(x), f.apply_lift(y))?.value;
        let nx = (f.jacobian(x) * center.direction(x)).norm();
        let ny = (f.jacobian(y) * center.direction(y)).norm();
        density_law_max = density_law_max.max((rf - nx / ny * r).abs());
        density_self = density_self.max((dynamical_density(f, Sigma::Center, depth, x, x)?.value - 1.0).abs());
    }

    let pu = PointwiseBundle::new(f, Sigma::Unstable, depth);
    let mut holonomy_max_dev: f64 = 0.0;
    for (i, x) in random_points(&mut rng, 10).into_iter().enumerate() {
        let slide = if i % 2 == 0 { 0.4 } else { -0.4 };
        let hol = unstable_holonomy_ratio(&pot, &pu, x, 0.3, slide, 0.005)?;
        holonomy_max_dev = holonomy_max_dev.max((hol.ratio - 1.0).abs());
    }

    let probes = random_points(&mut rng, 10);
    let diag = h_center_diagnostics(h, &pot, &probes, 0.05, 0.3, step)?;
    let midpoint_max = diag.midpoint_deviations.iter().copied().fold(0.0, f64::max);

    let y = leaf_point(&center, pot.x0, 0.2, step)?;
    let fp = fn_product(&pot, y, 80)?;
    let rho = dynamical_density(f, Sigma::Center, depth, pot.x0, y)?.value;
    let fn_last = *fp.values.last().unwrap_or(&1.0);
    Ok(LivschitzReport {
        cocycle_max,
        cocycle_points: pts.len(),
        psi_max,
        scaling_max_rel,
        scaling_segments: n,
        density_law_max,
        density_self,
        holonomy_max_dev,
        derivative_fit_residual: diag.fit_residual,
        derivative_constant: diag.c,
        midpoint_max,
        midpoint_bound: 2.0 * h.defect + 1e-6,
        fn_alpha: fp.alpha,
        fn_vs_density: (fn_last - 1.0 / rho).abs(),
        fn_last,
    })
}

fn cohomology_stage(f: &TorusEndomorphism, art: &mut Artifacts) -> CohomologyReport {
    let e = f.eigen();
    let theta = wrap1(e.theta);
    let k_max = 32;
    let c_est = diophantine_constant(theta, 1000);
    let c_tail = diophantine_window(theta, 1000, 100_000);
    let amp = amplification(theta, k_max);
    let amplification_bound = PI * k_max as f64 / (2.0 * c_est);

    let b = |x: f64| (2.0 * PI * x).cos() - (2.0 * PI * (x + theta)).cos();
    let samples: Vec<f64> = (0..128).map(|i| b(i as f64 / 128.0)).collect();
    let manufactured_error = match cohomological_solve_samples(&samples, theta, TOL_MEAN) {
        Ok(sol) => (0..200)
            .map(|i| {
                let x = i as f64 / 200.0;
                let c0 = sol.phi.eval(0.0) - 1.0;
                (sol.phi.eval(x) - c0 - (2.0 * PI * x).cos()).abs()
            })
            .fold(0.0, f64::max),
        Err(_) => f64::MAX,
    };
    let shifted: Vec<f64> = samples.iter().map(|v| v + 0.5).collect();
    let obstruction_detected = matches!(
        cohomological_solve_samples(&shifted, theta, TOL_MEAN),
        Err(CohomError::ObstructedMean { .. })
    );

    let (ec, eu) = art.bundles.clone().expect("certify ran");
    let one = |_: Vec2| 1.0;
    let ts: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
    let x0 = lifted_fixed_point(f).unwrap_or_else(Vec2::zeros);
    let mut out = CohomologyReport {
        theta,
        c_est,
        c_tail,
        k_max,
        amplification: amp,
        amplification_bound,
        manufactured_error,
        obstruction_detected,
        transverse_b_mean: None,
        transverse_solved: None,
        transverse_residual: None,
        transverse_error: None,
    };
    let transverse = TransverseCircle::new(0.0, e)
        .map_err(CohomError::from)
        .and_then(|circle| transverse_distance_function(&eu, &ec, &one, &circle, x0, &ts, 3.0, 0.01));
    match transverse {
        Ok(t) => {
            let mean = t.b.iter().sum::<f64>() / t.b.len() as f64;
            out.transverse_b_mean = Some(mean);
            let centered: Vec<f64> = t.b.iter().map(|v| v - mean).collect();
            let series = FourierSeries::from_samples(&centered, 15).expect("power of two");
            match cohomological_solve(&series, theta, TOL_MEAN) {
                Ok(sol) => {
                    let resid = solution_residual(&sol.phi, |x| series.eval(x), theta, 64);
                    out.transverse_solved = Some(true);
                    out.transverse_residual = Some(resid);
                    art.fourier = Some(sol.phi);
                }
                Err(err) => {
                    out.transverse_solved = Some(false);
                    out.transverse_error = Some(err.to_string());
                }
            }
        }
        Err(err) => out.transverse_error = Some(err.to_string()),
    }
    out
}
