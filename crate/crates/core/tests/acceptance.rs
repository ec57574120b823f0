//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every verdict is printed, then exits
//! nonzero if any criterion failed.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use renewal_transport::experiments::{
    covariance_check, ks_normal, ks_uniform, run_rate_experiment, RateExperimentConfig, RateResult,
};
use renewal_transport::renewal_transport::{sample_at_times, DEFAULT_EVENT_CAP};
use renewal_transport::rng::{stream, StreamKey, StreamRole};
use renewal_transport::skorokhod_coupling::{
    grid_exit, sample_exit_time_exact, DEFAULT_STEP_BUDGET,
};
use renewal_transport::stats::{ks_two_sample, mean_var};
use renewal_transport::{
    build_coupled_realization, build_transport_path, sample_renewal_path, Engine, JumpLaw,
    RenewalPath, ScalingSchedule,
};

const SEED: u64 = 20240601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

fn criterion_1() -> Verdict {
    let mut worst = 0.0f64;
    for n in [10u64, 100] {
        let s = ScalingSchedule::new(&JumpLaw::Uniform01, 2.0, n).unwrap();
        let nf = n as f64;
        let g = 2f64.sqrt() / (3f64.sqrt() * nf);
        let h = 1.0 / (2.0 * nf * nf);
        worst = worst.max(rel_err(s.normalizer, g)).max(rel_err(s.mean_gap, h));
    }
    verdict(worst <= 1e-12, format!("max relative error {worst:.2e}"))
}

/// `x_n(t)` integrated straight from the renewal epochs and coins.
fn integrate_sign(path: &RenewalPath, g: f64, t: f64) -> f64 {
    let mut flips = path.eta0 as u64;
    let mut last = 0.0;
    let mut acc = 0.0;
    for e in &path.events {
        if e.time > t {
            break;
        }
        let sign = if flips % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * (e.time - last);
        last = e.time;
        flips += e.flip as u64;
    }
    let sign = if flips % 2 == 0 { 1.0 } else { -1.0 };
    acc += sign * (t - last);
    acc / g
}

fn criterion_2() -> Verdict {
    let laws = [
        JumpLaw::Uniform01,
        JumpLaw::Exponential { rate: 1.3 },
        JumpLaw::Deterministic { c: 0.8 },
        JumpLaw::TwoPoint { a: 0.0, b: 1.5, p: 0.3 },
    ];
    let mut rng = stream(SEED, StreamRole::Misc);
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let law = laws[(i % 4) as usize];
        let n = rng.random_range(2..=30u64);
        let sched = ScalingSchedule::new(&law, 2.0, n).unwrap();
        let mut prng = StreamKey::new(SEED, StreamRole::RenewalPath, n, i).rng();
        let path = sample_renewal_path(&law, &sched, 1.0, DEFAULT_EVENT_CAP, &mut prng).unwrap();
        let tp = build_transport_path(&path, &sched);
        for _ in 0..10 {
            let t: f64 = rng.random();
            let want = integrate_sign(&path, sched.normalizer, t);
            let got = tp.eval(t).unwrap();
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    verdict(worst <= 1e-12, format!("max relative error {worst:.2e} over 10^4 evaluations"))
}

/// Exact-engine realizations at n = 10 until 10^5 steps are collected.
/// Returns the step columns and the worst skeleton and slope errors.
fn exact_steps() -> (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64) {
    let law = JumpLaw::Uniform01;
    let sched = ScalingSchedule::new(&law, 2.0, 10).unwrap();
    let (mut gammas, mut sigmas, mut signs) = (Vec::new(), Vec::new(), Vec::new());
    let (mut skel, mut slope) = (0.0f64, 0.0f64);
    let mut rep = 0u64;
    while gammas.len() < 100_000 {
        let mut rng = StreamKey::new(SEED, StreamRole::Coupling, 10, rep).rng();
        let real =
            build_coupled_realization(&law, &sched, Engine::Exact, None, DEFAULT_STEP_BUDGET, &mut rng)
                .unwrap();
        let (s, l) = renewal_transport::experiments::check_realization(&real);
        skel = skel.max(s);
        slope = slope.max(l);
        for st in &real.steps {
            if gammas.len() == 100_000 {
                break;
            }
            gammas.push(st.gamma);
            sigmas.push(st.sigma);
            signs.push(st.sign);
        }
        rep += 1;
    }
    (gammas, sigmas, signs, skel, slope)
}

fn criterion_3(gammas: &[f64], sigmas: &[f64], signs: &[f64]) -> Verdict {
    let ks = ks_uniform(gammas, 1e-2).unwrap();
    let (ms, vs) = mean_var(sigmas);
    let se_s = (vs / sigmas.len() as f64).sqrt();
    let up = signs.iter().filter(|&&s| s > 0.0).count() as f64 / signs.len() as f64;
    let se_up = (0.25 / signs.len() as f64).sqrt();
    let ok1 = ks.p_value > 0.01;
    let ok2 = (ms - 0.005).abs() <= 4.0 * se_s;
    let ok3 = (up - 0.5).abs() <= 4.0 * se_up;
    verdict(
        ok1 && ok2 && ok3,
        format!(
            "(i) KS p={:.3} (ii) mean sigma={:.6} (4 SE={:.1e}) (iii) up fraction={:.4} (4 SE={:.4})",
            ks.p_value,
            ms,
            4.0 * se_s,
            up,
            4.0 * se_up
        ),
    )
}

fn criterion_4() -> Verdict {
    let n = 10_000;
    let mut rng = stream(SEED, StreamRole::ExitTime);
    let exact: Vec<f64> = (0..n)
        .map(|_| sample_exit_time_exact(1.0, &mut rng).unwrap().tau)
        .collect();
    let mut rng = stream(SEED + 1, StreamRole::ExitTime);
    let grid: Vec<f64> = (0..n)
        .map(|_| grid_exit(1.0, 1e-5, DEFAULT_STEP_BUDGET, &mut rng).unwrap().tau_hat)
        .collect();
    let ks = ks_two_sample(&exact, &grid).unwrap();
    let (m, v) = mean_var(&exact);
    let ok = ks.p_value > 0.01 && (m - 1.0).abs() <= 0.02 && (v - 2.0 / 3.0).abs() <= 0.05;
    verdict(
        ok,
        format!("two-sample KS p={:.3}, exact mean={m:.4}, variance={v:.4}", ks.p_value),
    )
}

fn rate_config() -> RateExperimentConfig {
    RateExperimentConfig::new(JumpLaw::Uniform01, 2.0, vec![4, 8, 16, 32, 64], 200, SEED)
}

fn rate_csv(res: &RateResult) -> Vec<u8> {
    let mut out = Vec::new();
    res.write_csv(&mut out, &["acceptance rate campaign".to_string()]).unwrap();
    out
}

fn criterion_5(res: &RateResult, exact_skel: f64, exact_slope: f64) -> Verdict {
    let mut skel = exact_skel;
    let mut slope = exact_slope;
    for s in res.rows.iter().flat_map(|r| &r.samples) {
        skel = skel.max(s.skeleton_err);
        slope = slope.max(s.slope_err);
    }
    verdict(
        skel <= 1e-12 && slope <= 1e-10,
        format!("max skeleton error {skel:.2e}, max slope error {slope:.2e}"),
    )
}

fn criterion_6(res: &RateResult) -> Vec<(String, Verdict)> {
    let med: Vec<f64> = res.rows.iter().map(|r| r.median_j).collect();
    let decreasing = med.windows(2).all(|w| w[1] < w[0]);
    let med_s: Vec<String> = med.iter().map(|m| format!("{m:.4}")).collect();
    let i = verdict(decreasing, format!("median J = [{}]", med_s.join(", ")));

    let ii = match res.fit {
        Some(f) => verdict(
            (0.75..=1.25).contains(&f.slope) && f.r_squared >= 0.9,
            format!(
                "slope={:.3}, r2={:.3} (exponent fit against log n: slope={:.3}, r2={:.3})",
                f.slope,
                f.r_squared,
                res.exponent_fit.map_or(f64::NAN, |e| e.slope),
                res.exponent_fit.map_or(f64::NAN, |e| e.r_squared),
            ),
        ),
        None => verdict(false, "fit unavailable".into()),
    };

    let exc: Vec<String> = res.rows.iter().map(|r| format!("{:.3}", r.exceedance)).collect();
    let mut ok = res.alpha_calibrated && (res.rows[0].exceedance - 0.5).abs() <= 0.05;
    for w in res.rows.windows(2) {
        let se = (w[0].exceedance_se().powi(2) + w[1].exceedance_se().powi(2)).sqrt();
        ok &= w[1].exceedance <= w[0].exceedance + 2.0 * se;
    }
    let iii = verdict(
        ok,
        format!("alpha={:.4}, exceedance = [{}]", res.alpha, exc.join(", ")),
    );
    vec![("6(i)".into(), i), ("6(ii)".into(), ii), ("6(iii)".into(), iii)]
}

fn criterion_7() -> Verdict {
    let law = JumpLaw::Uniform01;
    let sched = ScalingSchedule::new(&law, 2.0, 32).unwrap();
    let rows = sample_at_times(&law, &sched, &[0.5, 1.0], 5000, SEED, StreamRole::Terminal).unwrap();
    let x1: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let ks = ks_normal(&x1).unwrap();
    let (_, var1) = mean_var(&x1);
    let cov = covariance_check(&law, 2.0, 32, 0.5, 1.0, 5000, SEED).unwrap();
    let c = cov.estimate.unwrap();
    let ok = ks.p_value > 0.01 && (c - 0.5).abs() <= 0.08 && (var1 - 1.0).abs() <= 0.1;
    verdict(
        ok,
        format!("KS p={:.3}, cov(0.5,1)={c:.4}, var(1)={var1:.4}", ks.p_value),
    )
}

fn criterion_8(res: &RateResult) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    let mut ok = true;
    for s in res.rows.iter().flat_map(|r| &r.samples) {
        worst = worst.max(s.bound_excess - s.bound_tolerance);
        ok &= s.bound_excess <= s.bound_tolerance;
        count += 1;
    }
    verdict(
        ok,
        format!("{count} realizations, max (J - sum - tolerance) = {worst:.3e}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(String, Verdict)> = Vec::new();
    let mut report = |name: &str, v: Verdict, t: Instant| {
        println!(
            "criterion {name}: {} ({}; {:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
        results.push((name.to_string(), v));
    };

    let t = Instant::now();
    report("1", criterion_1(), t);
    let t = Instant::now();
    report("2", criterion_2(), t);
    let t = Instant::now();
    let (gammas, sigmas, signs, exact_skel, exact_slope) = exact_steps();
    report("3", criterion_3(&gammas, &sigmas, &signs), t);
    let t = Instant::now();
    report("4", criterion_4(), t);

    let t = Instant::now();
    let campaign = run_rate_experiment(&rate_config());
    let res = match campaign {
        Ok(r) if r.complete => r,
        other => {
            let why = match other {
                Ok(_) => "campaign stopped by budget".to_string(),
                Err(e) => e.to_string(),
            };
            for name in ["5", "6", "8", "9"] {
                report(name, verdict(false, why.clone()), t);
            }
            report("7", criterion_7(), Instant::now());
            return ExitCode::FAILURE;
        }
    };
    let campaign_secs = t.elapsed().as_secs_f64();
    println!("rate campaign finished in {campaign_secs:.1}s");
    let t = Instant::now();
    report("5", criterion_5(&res, exact_skel, exact_slope), t);
    for (name, v) in criterion_6(&res) {
        report(&name, v, t);
    }
    let t = Instant::now();
    report("7", criterion_7(), t);
    let t = Instant::now();
    report("8", criterion_8(&res), t);

    let t = Instant::now();
    let first = rate_csv(&res);
    let again = run_rate_experiment(&rate_config()).map(|r| rate_csv(&r));
    let v = match again {
        Ok(bytes) => verdict(
            bytes == first,
            format!("{} bytes, identical={}", first.len(), bytes == first),
        ),
        Err(e) => verdict(false, e.to_string()),
    };
    report("9", v, t);

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, v)| !v.pass)
        .map(|(n, _)| n.as_str())
        .collect();
    println!(
        "acceptance: {} of {} passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
