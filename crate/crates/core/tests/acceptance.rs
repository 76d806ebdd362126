//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (no libtest harness) so the Monte Carlo runs can be shared across
//! criteria and every line is printed regardless of outcome.

use std::cell::Cell;
use std::f64::consts::PI;
use std::ops::ControlFlow;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use meinhardt_core::estimator::augmented_mle;
use meinhardt_core::experiments::{
    estimation_campaigns, front_history, jarque_bera, mean_std, polarised_initial_condition, repol_sweep,
    CampaignResults, MPolicy, McCampaign, RepolSetup, RepolStats, Scenario, FRONT_THRESHOLD,
};
use meinhardt_core::io::{estimate_from_dataset, export_dataset_csv, ingest_csv};
use meinhardt_core::measurement::MeasurementRecorder;
use meinhardt_core::solver::simulate_observed;
use meinhardt_core::{
    bump_kernel, default_initial_condition, default_params, FieldPair, Kernel, MeasurementLayout, Reaction, Scheme,
    SolverConfig, TorusGrid,
};
use proptest::test_runner::{Config as ProptestConfig, TestRunner};

// Quadrature oracle for the bump kernel, computed independently and frozen.
const NORM_K2: f64 = 7.887884926711692e-10;
const SIGMA: f64 = 0.1730561013602922;

const TAU_DETERMINISTIC: f64 = 50.82;
const TAU_SIGMA_01: f64 = 40.12;
const DISCARD_RATE: f64 = 0.026;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct Suite {
    results: Vec<(usize, &'static str, Verdict, Duration)>,
}

impl Suite {
    fn run(&mut self, id: usize, name: &'static str, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let verdict = f();
        let elapsed = start.elapsed();
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1}s]",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail,
            elapsed.as_secs_f64()
        );
        self.results.push((id, name, verdict, elapsed));
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

fn deterministic_tau() -> (Option<f64>, Duration) {
    let start = Instant::now();
    let stats = repol_sweep(&default_params(), &[0.0], 1, &RepolSetup::default(), 1, None).expect("sweep runs");
    (stats[0].tau_samples.first().copied(), start.elapsed())
}

fn criterion_1(tau: Option<f64>, elapsed: Duration) -> Verdict {
    match tau {
        Some(t) => Verdict::new(
            within(t, TAU_DETERMINISTIC, 0.10) && elapsed < Duration::from_secs(60),
            format!("tau = {t:.2} (target {TAU_DETERMINISTIC} +- 10%), runtime {:.1}s", elapsed.as_secs_f64()),
        ),
        None => Verdict::new(false, "no repolarisation within the horizon"),
    }
}

struct RepolRuns {
    /// Mean tau per sigma in {0, 0.02, ..., 0.10}.
    stats: Vec<RepolStats>,
    deterministic: f64,
    elapsed: Duration,
}

fn repol_runs(deterministic: f64) -> RepolRuns {
    let start = Instant::now();
    let setup = RepolSetup::default();
    let p = default_params();
    let mut stats = repol_sweep(&p, &[0.02, 0.04, 0.06, 0.08], 200, &setup, 2, None).expect("sweep runs");
    stats.extend(repol_sweep(&p, &[0.10], 500, &setup, 3, None).expect("sweep runs"));
    RepolRuns { stats, deterministic, elapsed: start.elapsed() }
}

fn criterion_2(runs: &RepolRuns) -> Verdict {
    let top = runs.stats.last().expect("sigma = 0.1 present");
    let Some(mean_top) = top.mean() else {
        return Verdict::new(false, "no kept replicate at sigma = 0.1");
    };
    let mut means = vec![(runs.deterministic, 0.0)];
    means.extend(runs.stats.iter().map(|s| (s.mean().unwrap_or(f64::NAN), s.std_error().unwrap_or(f64::NAN))));
    let mut inversions = 0;
    let mut inversions_within_error = true;
    for w in means.windows(2) {
        let ((a, sa), (b, sb)) = (w[0], w[1]);
        if b > a {
            inversions += 1;
            inversions_within_error &= b - a <= 2.0 * (sa * sa + sb * sb).sqrt();
        }
    }
    let monotone = inversions == 0 || (inversions == 1 && inversions_within_error);
    let pass = top.tau_samples.len() >= 200
        && mean_top < runs.deterministic
        && within(mean_top, TAU_SIGMA_01, 0.15)
        && monotone
        && runs.elapsed < Duration::from_secs(30 * 60);
    let trail: Vec<String> = means.iter().map(|(m, _)| format!("{m:.2}")).collect();
    Verdict::new(
        pass,
        format!(
            "mean tau at 0.1 = {mean_top:.2} over {} kept (target {TAU_SIGMA_01} +- 15%, below {:.2}); means by sigma [{}], {inversions} inversion(s)",
            top.tau_samples.len(),
            runs.deterministic,
            trail.join(", ")
        ),
    )
}

fn criterion_3(runs: &RepolRuns) -> Verdict {
    let top = runs.stats.last().expect("sigma = 0.1 present");
    let rate = top.discard_fraction();
    Verdict::new(
        top.replicates() >= 500 && (rate - DISCARD_RATE).abs() <= 0.02,
        format!(
            "discard rate {:.1}% ({} of {}) (target 2.6% +- 2 pts)",
            100.0 * rate,
            top.n_discarded_negative,
            top.replicates()
        ),
    )
}

fn criterion_4(kernel: &Kernel) -> Verdict {
    let grid = TorusGrid::new(20.0, 1000).unwrap();
    let params = default_params().deterministic();
    // the activator does not see the inhibitor when f_A = 0; a zero
    // inhibitor lets the step follow the activator's own limit
    let cosine = default_initial_condition(&grid, &params, 1.0);
    let init = FieldPair::new(cosine.activator, vec![0.0; grid.len()], 0.0).unwrap();
    let config = SolverConfig::new(30.0, 10_000, Scheme::ExplicitEulerMaruyama).reaction(Reaction::Linear);
    let layout = MeasurementLayout::regular(10, 0.05 * 20.0, 20.0).unwrap();
    let mut rec = MeasurementRecorder::new(layout, kernel, &grid).unwrap();
    simulate_observed(&params, &init, &config, &grid, |_, s| {
        rec.record(s.time, &s.activator).expect("recordable");
        ControlFlow::Continue(())
    })
    .unwrap();
    let ms = rec.finish().unwrap();
    let d_hat = augmented_mle(&ms).unwrap().d_hat;
    let err = d_hat / params.D_A - 1.0;
    Verdict::new(err.abs() < 0.01, format!("D_hat / D_A - 1 = {err:.2e} (m = 1000, N = 10^4, need < 1%)"))
}

fn mode_amplitude(values: &[f64], k: usize) -> f64 {
    let m = values.len();
    2.0 / m as f64
        * values.iter().enumerate().map(|(i, v)| v * (2.0 * PI * (k * i) as f64 / m as f64).cos()).sum::<f64>()
}

fn criterion_5() -> Verdict {
    let grid = TorusGrid::new(20.0, 256).unwrap();
    let params = default_params().deterministic();
    let worst = Cell::new(0.0f64);
    let mut runner = TestRunner::new(ProptestConfig { cases: 40, ..ProptestConfig::default() });
    let outcome =
        runner.run(&(1usize..=5, 0.1f64..1.0, 1.0f64..25.0, proptest::bool::ANY), |(k, amp, horizon, explicit)| {
            let activator = grid.sample(|x| 2.0 + amp * (2.0 * PI * k as f64 * x / 20.0).cos());
            let init = FieldPair::new(activator.clone(), activator, 0.0).unwrap();
            let scheme = if explicit { Scheme::ExplicitEulerMaruyama } else { Scheme::SemiImplicitDiffusion };
            let config = SolverConfig::with_max_dt(horizon, 0.005, scheme).reaction(Reaction::Linear);
            let mut last = None;
            simulate_observed(&params, &init, &config, &grid, |_, s| {
                last = Some(s.activator.clone());
                ControlFlow::Continue(())
            })
            .unwrap();
            let wave = 2.0 * PI * k as f64 / 20.0;
            let expected = amp * (-params.D_A * wave * wave * horizon).exp();
            let rel = (mode_amplitude(&last.unwrap(), k) / expected - 1.0).abs();
            worst.set(worst.get().max(rel));
            proptest::prop_assert!(rel < 0.02, "mode {} after t = {}: relative error {}", k, horizon, rel);
            Ok(())
        });
    match outcome {
        Ok(()) => Verdict::new(
            true,
            format!("40 random cases, worst relative amplitude error {:.2e} (need < 2%)", worst.get()),
        ),
        Err(e) => Verdict::new(false, format!("{e}")),
    }
}

fn linear_campaigns(kernel: &Kernel) -> Vec<CampaignResults> {
    let fixed = McCampaign::new(Scenario::LinearZeroInit, MPolicy::Fixed(5), 500, 11);
    let scaled = McCampaign::new(Scenario::LinearZeroInit, MPolicy::Scaled, 500, 11);
    estimation_campaigns(&[fixed, scaled], kernel, None).expect("campaign runs")
}

fn criterion_6(fixed: &CampaignResults, kernel: &Kernel) -> Verdict {
    let d = fixed.per_delta.iter().position(|s| (s.delta - 1.0).abs() < 1e-12).expect("delta = 0.05 L in the grid");
    let z = fixed.normalized_errors(d, kernel);
    let (mean, sd) = mean_std(&z);
    let se = sd / (z.len() as f64).sqrt();
    let (jb, p) = jarque_bera(&z).unwrap();
    Verdict::new(
        mean.abs() <= 2.0 * se && (sd - 1.0).abs() <= 0.15 && p > 0.01,
        format!(
            "n = {}, mean {mean:.3} (2 s.e. = {:.3}), std {sd:.3}, Jarque-Bera {jb:.2} (p = {p:.3})",
            z.len(),
            2.0 * se
        ),
    )
}

fn criterion_7(fixed: &CampaignResults, scaled: &CampaignResults) -> Verdict {
    let slope = |r: &CampaignResults| r.rmse_slope.unwrap_or(f64::NAN);
    let (sf, ss) = (slope(fixed), slope(scaled));
    let n = fixed.per_delta.iter().chain(&scaled.per_delta).map(|s| s.n).min().unwrap_or(0);
    Verdict::new(
        (sf - 1.0).abs() <= 0.2 && (ss - 1.5).abs() <= 0.2 && n >= 200,
        format!("slope fixed M = 5: {sf:.3} (target 1.0 +- 0.2), scaled: {ss:.3} (target 1.5 +- 0.2), {n} replicates per point"),
    )
}

fn coverage_line(r: &CampaignResults) -> (bool, String) {
    let mut ok = true;
    let parts: Vec<String> = r
        .per_delta
        .iter()
        .map(|s| {
            let c = s.coverage_plugin[0];
            ok &= (0.86..=0.94).contains(&c);
            format!("{:.3}L {:.3}", s.delta / 20.0, c)
        })
        .collect();
    (ok, format!("{}: {}", r.campaign.policy.label(), parts.join(", ")))
}

fn nonlinear_campaigns(kernel: &Kernel) -> Vec<CampaignResults> {
    let mut fixed = McCampaign::new(Scenario::FullMeinhardt, MPolicy::Fixed(5), 200, 12);
    let mut scaled = McCampaign::new(Scenario::FullMeinhardt, MPolicy::Scaled, 200, 12);
    fixed.delta_grid = vec![0.017 * 20.0];
    scaled.delta_grid = vec![0.017 * 20.0];
    estimation_campaigns(&[scaled, fixed], kernel, None).expect("campaign runs")
}

fn criterion_8(linear: &[CampaignResults], nonlinear: &[CampaignResults]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in linear {
        let (ok, line) = coverage_line(r);
        pass &= ok;
        parts.push(format!("linear I90 {line}"));
    }
    // judged on M = L / (2 delta); the fixed-M run is reported alongside
    for (i, r) in nonlinear.iter().enumerate() {
        let s = &r.per_delta[0];
        let (c90, c95) = (s.coverage_plugin[0], s.coverage_plugin[1]);
        if i == 0 {
            pass &= (c90 - 0.85).abs() <= 0.05 && (c95 - 0.92).abs() <= 0.05;
        }
        parts.push(format!(
            "nonlinear {} (M = {}, n = {}): I90 {c90:.3}, I95 {c95:.3}, mean D_hat {:.5}",
            r.campaign.policy.label(),
            s.channels,
            s.n,
            s.mean
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

fn criterion_9(linear: &[CampaignResults]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in linear {
        let s = r.per_delta.iter().find(|s| (s.delta - 0.017 * 20.0).abs() < 1e-12).expect("finest delta present");
        let p = &r.campaign.params;
        let kappa = s.channels as f64 * r.campaign.sim.horizon * p.sigma_A * p.sigma_A / p.D_A * NORM_K2 / SIGMA;
        let ratio = s.delta * s.delta * s.mean_fisher_info / kappa;
        pass &= (ratio - 1.0).abs() <= 0.10 && s.n >= 200;
        parts.push(format!("{} (M = {}): delta^2 I / kappa = {ratio:.4}", r.campaign.policy.label(), s.channels));
    }
    Verdict::new(pass, format!("{} (need within 10%)", parts.join(", ")))
}

fn criterion_10(kernel: &Kernel) -> Verdict {
    const REPLICATES: u64 = 50;
    const CHANNELS: usize = 100;
    let (length, horizon, frame_dt) = (20.0, 5.0, 0.0005);
    let grid = TorusGrid::new(length, 2000).unwrap();
    let params = default_params();
    let init = polarised_initial_condition(&grid, &params).unwrap();
    let n_steps = 10_000;
    let config = SolverConfig::new(horizon, n_steps, Scheme::ExplicitEulerMaruyama);
    assert!((config.dt() - frame_dt).abs() < 1e-15);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("export.csv");
    let mut d_hats = Vec::new();
    let mut noise_scales = Vec::new();
    for r in 0..REPLICATES {
        let layout = MeasurementLayout::regular(CHANNELS, length / (2.0 * CHANNELS as f64), length).unwrap();
        let mut rec = MeasurementRecorder::new(layout, kernel, &grid).unwrap();
        simulate_observed(&params, &init, &config.seed(21).stream(r), &grid, |_, s| {
            rec.record(s.time, &s.activator).expect("recordable");
            ControlFlow::Continue(())
        })
        .unwrap();
        let ms = rec.finish().unwrap();
        export_dataset_csv(&ms.a_loc, None, &path).unwrap();
        let mut ds = ingest_csv(&path).unwrap();
        assert_eq!(ds.values, ms.a_loc, "export and ingest must be lossless");
        ds.frame_dt = frame_dt;
        let report = estimate_from_dataset(&ds, 0.05).unwrap();
        d_hats.push(report.D_hat);
        noise_scales.push((report.martingale_free_qv_estimate / report.T).sqrt());
    }
    let (d_mean, _) = mean_std(&d_hats);
    let (s_mean, _) = mean_std(&noise_scales);
    let truth_scale = params.sigma_A * NORM_K2.sqrt();
    let d_err = d_mean / params.D_A - 1.0;
    let s_err = s_mean / truth_scale - 1.0;
    Verdict::new(
        d_err.abs() <= 0.15 && s_err.abs() <= 0.10,
        format!(
            "{REPLICATES} replicates, M = {CHANNELS}: mean D_hat {d_mean:.5} ({:+.1}%, need 15%), sigma_A ||K|| {s_mean:.4e} ({:+.1}%, need 10%)",
            100.0 * d_err,
            100.0 * s_err
        ),
    )
}

/// First sampled time after which the front count stays at `count` for
/// `persist` time units.
fn first_persistent(history: &[(f64, usize)], count: usize, persist: f64) -> Option<f64> {
    history.iter().enumerate().find_map(|(i, &(t, c))| {
        if c != count {
            return None;
        }
        let held = history[i..].iter().take_while(|(_, c2)| *c2 == count).last().map(|(t2, _)| t2 - t)?;
        let reaches_end = history[i..].iter().all(|(_, c2)| *c2 == count);
        (held >= persist || (reaches_end && held > 0.0)).then_some(t)
    })
}

fn criterion_11() -> Verdict {
    const PERSIST: f64 = 25.0;
    let grid = TorusGrid::new(20.0, 500).unwrap();
    let params = default_params().deterministic();
    let init = polarised_initial_condition(&grid, &params).unwrap();
    let horizon = 700.0 * 1.25;
    let config = SolverConfig::with_max_dt(horizon, 0.01, Scheme::SemiImplicitDiffusion);
    let history = front_history(&params, &init, &grid, &config, 1.0, FRONT_THRESHOLD).unwrap();
    let two = first_persistent(&history, 2, PERSIST);
    let three = first_persistent(&history, 3, PERSIST);

    let mut reduced = params;
    reduced.D_I *= 0.75;
    let reduced_history = front_history(&reduced, &init, &grid, &config, 1.0, FRONT_THRESHOLD).unwrap();
    let single = (2..10).all(|c| first_persistent(&reduced_history, c, PERSIST).is_none());

    let near = |t: Option<f64>, target: f64| t.is_some_and(|t| (t / target - 1.0).abs() <= 0.25);
    let fmt = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("t = {t:.0}"));
    let max_reduced = reduced_history.iter().map(|(_, c)| *c).max().unwrap_or(0);
    Verdict::new(
        near(two, 200.0) && near(three, 700.0) && single,
        format!(
            "2 fronts at {} (target 200 +- 25%), 3 fronts at {} (target 700 +- 25%); D_I x 0.75: single stable front {} (max transient count {max_reduced})",
            fmt(two),
            fmt(three),
            if single { "yes" } else { "no" }
        ),
    )
}

fn main() -> ExitCode {
    let kernel = bump_kernel();
    let mut suite = Suite { results: Vec::new() };
    let start = Instant::now();

    let (tau, tau_elapsed) = deterministic_tau();
    suite.run(1, "deterministic repolarisation", || criterion_1(tau, tau_elapsed));
    let runs = repol_runs(tau.unwrap_or(f64::INFINITY));
    suite.run(2, "noise accelerates repolarisation", || criterion_2(&runs));
    suite.run(3, "negative-path discard rate", || criterion_3(&runs));
    suite.run(4, "exact linear identity", || criterion_4(&kernel));
    suite.run(5, "heat-mode decay", criterion_5);

    let linear = linear_campaigns(&kernel);
    let (fixed, scaled) = (&linear[0], &linear[1]);
    suite.run(6, "central limit theorem", || criterion_6(fixed, &kernel));
    suite.run(7, "rate slopes", || criterion_7(fixed, scaled));
    let nonlinear = nonlinear_campaigns(&kernel);
    suite.run(8, "interval coverage", || criterion_8(&linear, &nonlinear));
    suite.run(9, "Fisher-information limit", || criterion_9(&linear));
    suite.run(10, "external-data round trip", || criterion_10(&kernel));
    suite.run(11, "front splitting", criterion_11);

    let failed: Vec<String> = suite.results.iter().filter(|r| !r.2.pass).map(|r| r.0.to_string()).collect();
    println!(
        "acceptance: {} of {} criteria pass in {:.0}s{}",
        suite.results.len() - failed.len(),
        suite.results.len(),
        start.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
