//! End-to-end acceptance checks. Each test writes one PASS/FAIL line to
//! stderr (uncaptured) before asserting.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use latent_align::data::{
    apply_scenario, generate_synthetic, load_cohort, make_subscale, preprocess, save_cohort, Cohort, Covariate,
    GeneratorConfig, ItemScale, PatientRecord, PreprocessConfig, PreprocessReport, ScenarioKind, ScenarioLog,
    ScenarioSpec, Series, SeriesRemoval, Stage, DEFAULT_SUBSCALE, LOGIT_MARGIN,
};
use latent_align::eval::{scatter_report, write_metrics_csv, ScatterSummary, DEFAULT_TIME_TOLERANCE};
use latent_align::model::{
    load_checkpoint, patient_loss, save_checkpoint, train, AblationArm, PatientNoise, PreparedPatient, Preset,
    TrainConfig, TrainState,
};
use latent_align::numerics::{compute_gradient, Mat};
use latent_align::ode::{
    combined_trajectory, solve_ivp, InitialCondition, Instrument, OdeParams, Propagator, SINGULAR_DET_THRESHOLD,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0;

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion:>2} {name}: {verdict} ({detail})\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} {name}: {detail}");
}

// ---------------------------------------------------------------------------
// Shared pipeline

struct Run {
    data: Vec<PreparedPatient>,
    report: PreprocessReport,
    log: ScenarioLog,
    /// Cohort after the scenario, before preprocessing.
    modified: Cohort,
    epoch1: ScatterSummary,
    last: ScatterSummary,
    seconds: f64,
}

fn subscale_cohort() -> &'static Cohort {
    static COHORT: OnceLock<Cohort> = OnceLock::new();
    COHORT.get_or_init(|| {
        let raw = generate_synthetic(&GeneratorConfig {
            seed: SEED,
            ..Default::default()
        })
        .unwrap();
        make_subscale(&raw, &DEFAULT_SUBSCALE).unwrap()
    })
}

fn run(kind: ScenarioKind, weights: AblationArm) -> Run {
    let start = Instant::now();
    let (modified, log) = apply_scenario(subscale_cohort(), &ScenarioSpec::new(kind, SEED)).unwrap();
    let (cohort, report) = preprocess(&modified, &PreprocessConfig::default()).unwrap();
    let mut config = TrainConfig::preset(Preset::Synthetic);
    config.seed = SEED;
    config.weights = weights.weights();
    let mut state = TrainState::new(&cohort, config).unwrap();
    let data = state.prepare(&cohort).unwrap();
    let mut epoch1 = None;
    train(&mut state, &data, |s, e| {
        if e.epoch == 1 {
            epoch1 = Some(scatter_report(&s.model, &s.params, &data, DEFAULT_TIME_TOLERANCE)?.1);
        }
        Ok(())
    })
    .unwrap();
    let (_, last) = scatter_report(&state.model, &state.params, &data, DEFAULT_TIME_TOLERANCE).unwrap();
    Run {
        data,
        report,
        log,
        modified,
        epoch1: epoch1.expect("at least one epoch"),
        last,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn baseline() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run(ScenarioKind::None, AblationArm::Both))
}

fn fmt(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ")
}

// ---------------------------------------------------------------------------
// 1. Gradients

fn toy_data() -> (TrainState, Vec<PreparedPatient>) {
    let raw = generate_synthetic(&GeneratorConfig {
        n_patients: 2,
        seed: 11,
        items: 4,
        min_visits: 4,
        max_visits: 5,
        ..Default::default()
    })
    .unwrap();
    let sub = make_subscale(&raw, &[1, 2]).unwrap();
    let (cohort, _) = preprocess(&sub, &PreprocessConfig::without_outlier_removal()).unwrap();
    assert_eq!(cohort.patients.len(), 2);
    let mut config = TrainConfig::preset(Preset::TwoInstrument);
    config.seed = 3;
    let state = TrainState::new(&cohort, config).unwrap();
    let data = state.prepare(&cohort).unwrap();
    (state, data)
}

#[test]
fn c01_loss_gradient_matches_finite_differences() {
    let start = Instant::now();
    let (state, data) = toy_data();
    let d = state.dims.d;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise: Vec<PatientNoise> = data.iter().map(|p| PatientNoise::sample(p, d, &mut rng)).collect();
    let weights: Vec<_> = data
        .iter()
        .map(|p| state.model.fit_patient(&state.params, p, None).unwrap().trajectory.weights)
        .collect();

    let (model, config) = (&state.model, &state.config);
    let loss_at = |params: &latent_align::numerics::ParamStore| -> f64 {
        data.iter()
            .zip(&noise)
            .zip(&weights)
            .map(|((p, n), w)| patient_loss(model, params, p, config, n, Some(w)).unwrap().0.total)
            .sum()
    };
    let (value, grads) = compute_gradient(&state.params, |p| {
        let mut total = None;
        for ((patient, n), w) in data.iter().zip(&noise).zip(&weights) {
            let t = patient_loss(model, p, patient, config, n, Some(w))?.0.total;
            total = Some(match total {
                None => t,
                Some(acc) => acc + t,
            });
        }
        Ok(total.expect("two patients"))
    })
    .unwrap();
    assert!((value - loss_at(&state.params)).abs() <= 1e-9 * value.abs().max(1.0));

    let h = 1e-5;
    let analytic: Vec<f64> = grads.iter_flat().copied().collect();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut probe = state.params.clone();
    for (i, &g) in analytic.iter().enumerate() {
        let original = *probe.iter_flat().nth(i).unwrap();
        *probe.iter_flat_mut().nth(i).unwrap() = original + h;
        let up = loss_at(&probe);
        *probe.iter_flat_mut().nth(i).unwrap() = original - h;
        let down = loss_at(&probe);
        *probe.iter_flat_mut().nth(i).unwrap() = original;
        let fd = (up - down) / (2.0 * h);
        let scale = g.abs().max(fd.abs());
        let rel = if scale < 1e-6 { (g - fd).abs() / 1e-4 } else { (g - fd).abs() / scale };
        worst = worst.max(rel);
        if rel >= 1e-4 {
            failures += 1;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    report(
        1,
        "loss gradient vs central differences",
        failures == 0 && seconds < 30.0,
        &format!(
            "{} parameters, worst relative error {worst:.2e}, {failures} above 1e-4, {seconds:.1} s",
            analytic.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. ODE solutions

fn rk4(a: &[f64; 4], c: &[f64; 2], z0: [f64; 2], t_end: f64, step: f64, record: &[f64]) -> Vec<[f64; 2]> {
    let f = |z: [f64; 2]| [a[0] * z[0] + a[1] * z[1] + c[0], a[2] * z[0] + a[3] * z[1] + c[1]];
    let axpy = |z: [f64; 2], k: [f64; 2], s: f64| [z[0] + s * k[0], z[1] + s * k[1]];
    let steps = (t_end / step).round() as usize;
    let mut z = z0;
    let mut out = Vec::new();
    let mut next = 0;
    for n in 0..=steps {
        let t = n as f64 * step;
        while next < record.len() && (record[next] - t).abs() < step / 2.0 {
            out.push(z);
            next += 1;
        }
        if n == steps {
            break;
        }
        let k1 = f(z);
        let k2 = f(axpy(z, k1, step / 2.0));
        let k3 = f(axpy(z, k2, step / 2.0));
        let k4 = f(axpy(z, k3, step));
        for j in 0..2 {
            z[j] += step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    out
}

#[test]
fn c02_ode_solutions_match_runge_kutta() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let record: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let c: [f64; 2] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let z0: [f64; 2] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let oracle = rk4(&a, &c, z0, 1.0, 1e-4, &record);
        let params = OdeParams::new(Mat::from_vec(2, 2, a.to_vec()), c.to_vec(), false).unwrap();
        let init = InitialCondition {
            time: 0.0,
            value: z0.to_vec(),
            source: Instrument::R,
        };
        for (&t, expected) in record.iter().zip(&oracle) {
            let got = solve_ivp(&params, &init, t).unwrap();
            for j in 0..2 {
                worst = worst.max((got[j] - expected[j]).abs());
            }
        }
    }

    // Just above the determinant threshold, both branches apply.
    let mut branch_gap: f64 = 0.0;
    for (delta, c) in [(6e-8, [0.3, -0.2]), (1e-7, [-0.5, 0.4]), (5e-7, [0.1, 0.7])] {
        let a = [0.2, 0.1, 0.4, 0.2 + delta];
        let m = Mat::from_vec(2, 2, a.to_vec());
        assert!(latent_align::numerics::linalg::determinant(&m).abs() > SINGULAR_DET_THRESHOLD);
        let params = OdeParams::new(m, c.to_vec(), false).unwrap();
        let oracle = rk4(&a, &c, [0.4, -0.3], 1.0, 1e-4, &record);
        for (&t, expected) in record.iter().zip(&oracle) {
            let direct = Propagator::new(&params).solve(&[0.4, -0.3], 0.0, t).unwrap();
            let singular = Propagator::singular_form(&params).solve(&[0.4, -0.3], 0.0, t).unwrap();
            for j in 0..2 {
                branch_gap = branch_gap.max((direct[j] - singular[j]).abs());
                worst = worst.max((singular[j] - expected[j]).abs());
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    report(
        2,
        "ODE solutions vs RK4",
        worst < 1e-6 && branch_gap < 1e-6 && seconds < 10.0,
        &format!("max error {worst:.2e}, branch gap {branch_gap:.2e}, {seconds:.2} s"),
    );
}

// ---------------------------------------------------------------------------
// 3. Pooled trajectory estimator

fn init(time: f64, value: &[f64]) -> InitialCondition<f64> {
    InitialCondition {
        time,
        value: value.to_vec(),
        source: Instrument::R,
    }
}

#[test]
fn c03_estimator_matches_hand_values() {
    let mut pass = true;
    let mut got = Vec::new();

    // dz/dt = 0, so every solution equals its initial value. At t = 10 the
    // start at 0 sees intermediates (0, 2), variance 2; the others fall back
    // to 1: (4 / 2 + 0 + 2) / 2.5 = 1.6.
    let zero1 = OdeParams::homogeneous(Mat::from_vec(1, 1, vec![0.0])).unwrap();
    let inits = [init(0.0, &[4.0]), init(1.0, &[0.0]), init(2.0, &[2.0])];
    let traj = combined_trajectory(&zero1, &inits, &[10.0]).unwrap();
    let oracle = hand_estimate(&inits, 10.0);
    pass &= (traj.values[0][0] - 1.6).abs() < 1e-12 && (oracle[0] - 1.6).abs() < 1e-12;
    got.push(format!("{}", traj.values[0][0]));

    // t = 3.5, four starts: 4 and 18/13.
    let zero2 = OdeParams::homogeneous(Mat::from_vec(2, 2, vec![0.0; 4])).unwrap();
    let inits = [
        init(0.0, &[0.0, 0.0]),
        init(1.0, &[2.0, 1.0]),
        init(2.0, &[4.0, 1.0]),
        init(3.0, &[6.0, 3.0]),
    ];
    let traj = combined_trajectory(&zero2, &inits, &[3.5]).unwrap();
    pass &= (traj.values[0][0] - 4.0).abs() < 1e-12 && (traj.values[0][1] - 18.0 / 13.0).abs() < 1e-12;
    got.push(fmt(&traj.values[0]));

    // A rotating, inhomogeneous system against the oracle at several times.
    let a = OdeParams::new(Mat::from_vec(2, 2, vec![-0.3, 0.1, 0.05, -0.2]), vec![0.2, -0.1], false).unwrap();
    let inits = [init(0.0, &[1.0, 0.5]), init(2.0, &[0.2, -0.4]), init(3.5, &[-0.6, 0.9])];
    let times = [-1.0, 1.0, 2.5, 6.0];
    let traj = combined_trajectory(&a, &inits, &times).unwrap();
    for (t, v) in times.iter().zip(&traj.values) {
        let want = oracle_with(&a, &inits, *t);
        pass &= v.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12);
    }

    // Single start: exactly that solution.
    let single = init(1.0, &[0.7, -0.4]);
    let traj = combined_trajectory(&a, std::slice::from_ref(&single), &[0.0, 1.0, 4.5]).unwrap();
    for (t, v) in traj.times.iter().zip(&traj.values) {
        pass &= *v == solve_ivp(&a, &single, *t).unwrap();
    }

    // No start has two intermediates: equal weights, arithmetic mean.
    let inits = [init(0.0, &[1.0, -1.0]), init(5.0, &[2.0, 0.0]), init(6.0, &[6.0, 4.0])];
    let traj = combined_trajectory(&zero2, &inits, &[5.5]).unwrap();
    pass &= traj.values[0] == vec![3.0, 1.0];
    got.push(fmt(&traj.values[0]));

    report(3, "pooled estimator hand cases", pass, &format!("values {}", got.join("; ")));
}

/// Pooled value for a constant system, where solutions are initial values.
fn hand_estimate(inits: &[InitialCondition<f64>], t: f64) -> Vec<f64> {
    let solutions: Vec<Vec<f64>> = inits.iter().map(|i| i.value.clone()).collect();
    pool(inits, &solutions, t)
}

fn oracle_with(params: &OdeParams<f64>, inits: &[InitialCondition<f64>], t: f64) -> Vec<f64> {
    let solutions: Vec<Vec<f64>> = inits.iter().map(|i| solve_ivp(params, i, t).unwrap()).collect();
    pool(inits, &solutions, t)
}

/// Weight of each start is the inverse sample variance of the solutions at
/// `t` of the starts strictly between it and `t` (1 with fewer than two).
fn pool(inits: &[InitialCondition<f64>], solutions: &[Vec<f64>], t: f64) -> Vec<f64> {
    let d = solutions[0].len();
    (0..d)
        .map(|j| {
            let inverse: Vec<f64> = inits
                .iter()
                .map(|k| {
                    let (lo, hi) = (k.time.min(t), k.time.max(t));
                    let between: Vec<f64> = inits
                        .iter()
                        .zip(solutions)
                        .filter(|(i, _)| lo < i.time && i.time < hi)
                        .map(|(_, s)| s[j])
                        .collect();
                    if between.len() < 2 {
                        return 1.0;
                    }
                    let n = between.len() as f64;
                    let mean = between.iter().sum::<f64>() / n;
                    let var = between.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    1.0 / var.max(1e-12)
                })
                .collect();
            let total: f64 = inverse.iter().sum();
            inverse.iter().zip(solutions).map(|(w, s)| w / total * s[j]).sum()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 4-7. Trained model

#[test]
fn c04_baseline_alignment() {
    let run = baseline();
    let fractions = &run.last.above_diagonal_fraction;
    report(
        4,
        "baseline above-diagonal fraction",
        fractions.iter().all(|&f| f >= 0.85) && run.seconds < 900.0,
        &format!(
            "fractions {} (need >= 0.85), {} patients included, {:.0} s",
            fmt(fractions),
            run.last.included,
            run.seconds
        ),
    );
}

#[test]
fn c05_misalignment_shrinks() {
    let run = baseline();
    let first = run.epoch1.median_delta_rs_pooled;
    let last = run.last.median_delta_rs_pooled;
    report(
        5,
        "median misalignment shrinkage",
        last <= 0.25 * first,
        &format!("median epoch 1 {first:.4}, epoch 30 {last:.4}, ratio {:.3} (need <= 0.25)", last / first),
    );
}

/// Patients whose instruments share no visit, reconstructed from the
/// scenario and preprocessing logs.
fn expected_exclusions(run: &Run) -> BTreeSet<String> {
    let mut deleted: HashMap<&str, Vec<f64>> = HashMap::new();
    for (id, t) in &run.log.deleted {
        deleted.entry(id).or_default().push(*t);
    }
    let mut outliers: HashMap<(&str, Instrument), Vec<f64>> = HashMap::new();
    for (id, inst, t) in &run.report.outliers {
        outliers.entry((id, *inst)).or_default().push(*t);
    }
    let removed: HashSet<(&str, Instrument)> =
        run.report.removed_series.iter().map(|(id, inst, _)| (id.as_str(), *inst)).collect();
    let raw = subscale_cohort();
    let surviving = |id: &str, inst: Instrument, dropped: &[f64]| -> Vec<f64> {
        if removed.contains(&(id, inst)) {
            return Vec::new();
        }
        let gone = outliers.get(&(id, inst)).map(Vec::as_slice).unwrap_or(&[]);
        let raw_patient = raw.patient(id).unwrap();
        raw_patient
            .series(inst)
            .times
            .iter()
            .copied()
            .filter(|t| !dropped.contains(t) && !gone.contains(t))
            .collect()
    };
    run.data
        .iter()
        .filter(|p| {
            let dropped = deleted.get(p.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            let r = surviving(&p.id, Instrument::R, &[]);
            let s = surviving(&p.id, Instrument::S, dropped);
            !r.iter().any(|t| s.iter().any(|u| (t - u).abs() <= DEFAULT_TIME_TOLERANCE))
        })
        .map(|p| p.id.clone())
        .collect()
}

#[test]
fn c06_scenario_robustness() {
    let kinds = [
        ScenarioKind::ShiftAll,
        ScenarioKind::ShiftSubgroup,
        ScenarioKind::DropoutUniform,
        ScenarioKind::DropoutLate,
        ScenarioKind::ScoreConditional,
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for kind in kinds {
        let run = run(kind, AblationArm::Both);
        let fractions = &run.last.above_diagonal_fraction;
        pass &= fractions.iter().all(|&f| f >= 0.70);
        let mut detail = format!("{} {}", kind.name(), fmt(fractions));
        if kind == ScenarioKind::ScoreConditional {
            let expected = expected_exclusions(&run);
            let got: BTreeSet<String> = run.last.excluded_ids.iter().cloned().collect();
            let emptied_kept: BTreeSet<String> = run
                .log
                .emptied_patients
                .iter()
                .filter(|id| run.data.iter().any(|p| &p.id == *id))
                .cloned()
                .collect();
            let matches = got == expected && emptied_kept.is_subset(&got) && run.modified.patients.len() == 500;
            pass &= matches;
            detail += &format!(
                " excluded {} (log reconstruction {}, emptied by scenario {})",
                got.len(),
                expected.len(),
                emptied_kept.len()
            );
        }
        details.push(detail);
    }
    report(
        6,
        "scenario above-diagonal fractions",
        pass,
        &format!("{} (need >= 0.70)", details.join("; ")),
    );
}

#[test]
fn c07_ablation_ordering() {
    let none = run(ScenarioKind::None, AblationArm::None);
    let ode = run(ScenarioKind::None, AblationArm::OdeOnly);
    let adv = run(ScenarioKind::None, AblationArm::AdversarialOnly);
    let both = baseline();
    let rs = |r: &Run| r.last.mean_delta_rs_pooled;
    let dyn_ = |r: &Run| r.last.mean_delta_ode_pooled;
    let slowest = [&none, &ode, &adv, both].iter().map(|r| r.seconds).fold(0.0, f64::max);
    let pass = rs(&adv) <= 0.8 * rs(&none) && rs(both) <= rs(&adv) && dyn_(&ode) <= dyn_(&none) && slowest < 900.0;
    report(
        7,
        "ablation ordering",
        pass,
        &format!(
            "mean dRS none {:.3}, adversarial-only {:.3} ({:.1}% lower), both {:.3}; mean dODE none {:.3}, ode-only {:.3}",
            rs(&none),
            rs(&adv),
            100.0 * (1.0 - rs(&adv) / rs(&none)),
            rs(both),
            dyn_(&none),
            dyn_(&ode)
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Preprocessing

fn fixture(r_sums: &[f64]) -> Cohort {
    let times: Vec<f64> = (0..r_sums.len()).map(|i| i as f64 * 3.0).collect();
    Cohort {
        baseline_columns: vec!["age".into()],
        categorical: Vec::new(),
        scale_r: ItemScale::uniform(1, 40.0),
        scale_s: None,
        stage: Stage::Raw,
        patients: vec![PatientRecord {
            id: "p1".into(),
            baseline: vec![Covariate::Numeric(4.0)],
            r: Series {
                times,
                items: r_sums.iter().map(|&v| vec![v]).collect(),
            },
            s: Series::default(),
        }],
        ground_truth: None,
    }
}

#[test]
fn c08_preprocessing_fixtures() {
    let mut failed = Vec::new();

    // |differences| (1, 19, 18): quartiles 9.5 and 18.5, threshold 2 * 9 = 18.
    let (out, rep) = preprocess(&fixture(&[10.0, 11.0, 30.0, 12.0]), &PreprocessConfig::default()).unwrap();
    if rep.outliers != vec![("p1".to_string(), Instrument::R, 6.0)] || out.patients[0].r.times != vec![0.0, 3.0, 9.0] {
        failed.push("iqr");
    }

    let (out, rep) = preprocess(&fixture(&[10.0]), &PreprocessConfig::default()).unwrap();
    if !out.patients.is_empty()
        || rep.removed_series != vec![("p1".to_string(), Instrument::R, SeriesRemoval::TooFewPoints)]
    {
        failed.push("min points");
    }

    let plain = PreprocessConfig::without_outlier_removal();
    let (low, rep) = preprocess(&fixture(&[0.0, 0.99]), &plain).unwrap();
    let (edge, _) = preprocess(&fixture(&[0.0, 1.0]), &plain).unwrap();
    if !low.patients.is_empty()
        || rep.removed_series != vec![("p1".to_string(), Instrument::R, SeriesRemoval::LowVariance)]
        || edge.patients.len() != 1
    {
        failed.push("variance");
    }

    let mut worst: f64 = 0.0;
    for i in 0..=10_000 {
        let u = LOGIT_MARGIN + (1.0 - 2.0 * LOGIT_MARGIN) * i as f64 / 10_000.0;
        let x = (u / (1.0 - u)).ln();
        let x_lib = latent_align::data::logit(u);
        worst = worst.max((1.0 / (1.0 + (-x_lib).exp()) - u).abs()).max((x_lib - x).abs());
    }
    if worst >= 1e-12 {
        failed.push("logit");
    }
    report(
        8,
        "preprocessing fixtures",
        failed.is_empty(),
        &format!("failed: {failed:?}, logit round-trip error {worst:.1e}"),
    );
}

// ---------------------------------------------------------------------------
// 9. Scenario statistics

/// Central 99% interval `[lo, hi]` of a sum of independent Bernoulli
/// variables, from the exact distribution.
fn interval_99(probs: &[f64]) -> (usize, usize) {
    let mut dist = vec![1.0];
    for &p in probs {
        let mut next = vec![0.0; dist.len() + 1];
        for (k, &m) in dist.iter().enumerate() {
            next[k] += m * (1.0 - p);
            next[k + 1] += m * p;
        }
        dist = next;
    }
    let mut cdf = 0.0;
    let (mut lo, mut hi) = (None, None);
    for (k, &m) in dist.iter().enumerate() {
        cdf += m;
        if lo.is_none() && cdf >= 0.005 {
            lo = Some(k);
        }
        if hi.is_none() && cdf >= 0.995 {
            hi = Some(k);
        }
    }
    (lo.unwrap(), hi.unwrap_or(probs.len()))
}

#[test]
fn c09_scenario_statistics() {
    let raw = generate_synthetic(&GeneratorConfig {
        n_patients: 2500,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let cohort = make_subscale(&raw, &DEFAULT_SUBSCALE).unwrap();
    let mut details = Vec::new();
    let mut pass = true;

    let (out, _) = apply_scenario(&cohort, &ScenarioSpec::new(ScenarioKind::DropoutUniform, SEED)).unwrap();
    let eligible: usize = cohort.patients.iter().map(|p| p.s.len()).sum();
    let kept: usize = out.patients.iter().map(|p| p.s.len()).sum();
    let (lo, hi) = interval_99(&vec![0.5; eligible]);
    pass &= eligible >= 10_000 && (lo..=hi).contains(&kept);
    details.push(format!("uniform kept {kept}/{eligible} in [{lo}, {hi}]"));

    // Retention of the k-th S visit (1-based) is 1 - k / (T + 4), T + 1 the
    // number of R visits of that patient.
    let (out, _) = apply_scenario(&cohort, &ScenarioSpec::new(ScenarioKind::DropoutLate, SEED)).unwrap();
    let max_k = cohort.patients.iter().map(|p| p.s.len()).max().unwrap();
    let mut late = Vec::new();
    for k in 1..=max_k {
        let mut probs = Vec::new();
        let mut retained = 0;
        for (before, after) in cohort.patients.iter().zip(&out.patients) {
            if before.s.len() < k {
                continue;
            }
            let t = (before.r.len() - 1) as f64;
            probs.push((1.0 - k as f64 / (t + 4.0)).max(0.0));
            retained += usize::from(after.s.times.contains(&before.s.times[k - 1]));
        }
        let (lo, hi) = interval_99(&probs);
        let inside = (lo..=hi).contains(&retained);
        pass &= inside;
        late.push(format!("k={k} {retained} in [{lo}, {hi}]{}", if inside { "" } else { " OUT" }));
    }
    details.push(format!("late {}", late.join(", ")));

    let (out, _) = apply_scenario(&cohort, &ScenarioSpec::new(ScenarioKind::ShiftAll, SEED)).unwrap();
    let exact = cohort.patients.iter().zip(&out.patients).all(|(a, b)| {
        a.r == b.r
            && a.s.times == b.s.times
            && a.s.items.iter().flatten().zip(b.s.items.iter().flatten()).all(|(x, y)| *y == *x + 2.0)
    }) && out.scale_s.as_ref().unwrap().maxima.iter().all(|&m| m == 6.0);
    pass &= exact;
    details.push(format!("shift exact {exact}"));

    report(9, "scenario generator statistics", pass, &details.join("; "));
}

// ---------------------------------------------------------------------------
// 10. Determinism

fn end_to_end(dir: &Path) -> Vec<u8> {
    let raw = generate_synthetic(&GeneratorConfig {
        n_patients: 80,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    let stage = |name: &str, cohort: &Cohort| -> Cohort {
        let path = dir.join(name);
        save_cohort(cohort, &path).unwrap();
        load_cohort(&path).unwrap()
    };
    let raw = stage("raw", &raw);
    let sub = stage("subscale", &make_subscale(&raw, &DEFAULT_SUBSCALE).unwrap());
    let (modified, _) = apply_scenario(&sub, &ScenarioSpec::new(ScenarioKind::DropoutUniform, 21)).unwrap();
    let modified = stage("scenario", &modified);
    let (pre, _) = preprocess(&modified, &PreprocessConfig::default()).unwrap();
    let pre = stage("preprocessed", &pre);

    let mut config = TrainConfig::preset(Preset::Synthetic);
    config.seed = 21;
    config.epochs = 3;
    let mut state = TrainState::new(&pre, config).unwrap();
    let data = state.prepare(&pre).unwrap();
    train(&mut state, &data, |_, _| Ok(())).unwrap();
    let ckpt = dir.join("final.ckpt");
    save_checkpoint(&state, &ckpt).unwrap();
    let restored = load_checkpoint(&ckpt).unwrap();
    let data = restored.prepare(&pre).unwrap();
    let (metrics, _) = scatter_report(&restored.model, &restored.params, &data, DEFAULT_TIME_TOLERANCE).unwrap();
    let out = dir.join("metrics.csv");
    write_metrics_csv(&metrics, &out).unwrap();
    std::fs::read(out).unwrap()
}

#[test]
fn c10_end_to_end_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = end_to_end(a.path());
    let second = end_to_end(b.path());
    let rows = first.iter().filter(|&&c| c == b'\n').count();
    report(
        10,
        "end-to-end determinism",
        first == second && rows > 1,
        &format!("metrics.csv {} bytes, {rows} lines, identical {}", first.len(), first == second),
    );
}
