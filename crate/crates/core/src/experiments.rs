//! Monte Carlo campaigns on coupled realizations and direct simulations.
//!
//! The rate campaign measures, for each scale `n`, the sup-distance `J` of
//! many independent couplings, its four bounding terms, and how often `J`
//! exceeds `a_n = α·n^{-k/4}·(log n)^{3/2}`. A least-squares line through
//! `(log a_n/α, log median J)` summarizes the decay.
//!
//! Replications run in parallel. Replication `r` at scale `n` always uses
//! stream `(master_seed, role, n, r)` and results are gathered in index
//! order, so output does not depend on scheduling.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jump_distributions::JumpLaw;
use crate::renewal_transport::{sample_at_times, ScalingSchedule};
use crate::rng::{StreamKey, StreamRole};
use crate::skorokhod_coupling::{
    build_coupled_realization, CoupledRealization, Engine, DEFAULT_GRID_STEP_DIVISOR,
    DEFAULT_STEP_BUDGET,
};
use crate::stats::{ks_one_sample, mean_var, normal_cdf, quantile_sorted};

/// Default cap on grid steps for a whole campaign.
pub const DEFAULT_CAMPAIGN_BUDGET: f64 = 1e11;

/// Pieces of the transport path shorter than this fraction of `H(n)` are
/// skipped by the slope check: their slope is not resolvable in `f64`.
pub const SLOPE_CHECK_MIN_PIECE: f64 = 1e-3;

/// `n^{-k/4}·(log n)^{3/2}`, the rate sequence without its constant.
pub fn rate_sequence(n: u64, k: f64) -> f64 {
    let nf = n as f64;
    nf.powf(-k / 4.0) * nf.ln().powf(1.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateExperimentConfig {
    pub law: JumpLaw,
    pub k: f64,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    /// `None` calibrates α so that half the replications exceed `a_n` at
    /// the smallest `n`.
    pub alpha: Option<f64>,
    /// Grid step `h = H(n) / grid_step_divisor`.
    pub grid_step_divisor: u32,
    pub master_seed: u64,
    /// Total grid steps allowed over the campaign.
    pub step_budget: f64,
}

impl RateExperimentConfig {
    pub fn new(law: JumpLaw, k: f64, n_grid: Vec<u64>, reps: usize, master_seed: u64) -> Self {
        Self {
            law,
            k,
            n_grid,
            reps,
            alpha: None,
            grid_step_divisor: DEFAULT_GRID_STEP_DIVISOR,
            master_seed,
            step_budget: DEFAULT_CAMPAIGN_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Err(v) = self.law.validate() {
            let msg: Vec<String> = v.iter().map(|x| x.0.clone()).collect();
            return Err(Error::Parameter(msg.join("; ")));
        }
        if !(self.k > 1.0) {
            return Err(Error::RateCondition(self.k));
        }
        validate_n_grid(&self.n_grid)?;
        if self.n_grid[0] < 2 {
            return Err(Error::Input("rate experiments need n ≥ 2 (log n > 0)".into()));
        }
        if self.reps < 2 {
            return Err(Error::Input("reps must be at least 2".into()));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(Error::Input(format!("alpha must be positive, got {a}")));
            }
        }
        if self.grid_step_divisor == 0 {
            return Err(Error::Input("grid step divisor must be positive".into()));
        }
        Ok(())
    }
}

fn validate_n_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::Input("n grid is empty".into()));
    }
    if n_grid[0] == 0 {
        return Err(Error::Input("n must be positive".into()));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("n grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Measurements from one coupled realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationSummary {
    pub sup: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    /// `sup - (j1+j2+j3+j4)`; nonpositive when the bound holds exactly.
    pub bound_excess: f64,
    pub bound_tolerance: f64,
    /// Largest relative gap between `x_n(Γ_m)` and the skeleton value.
    pub skeleton_err: f64,
    /// Largest relative gap between a measured slope and `1/G`.
    pub slope_err: f64,
}

/// Skeleton identity and slope magnitude of one realization.
pub fn check_realization(real: &CoupledRealization) -> (f64, f64) {
    let tp = real.transport();
    let mut skeleton_err = 0.0f64;
    for (g, s) in real.gamma_sums.iter().zip(&real.skeleton) {
        let v = tp.eval_unchecked(*g);
        skeleton_err = skeleton_err.max((v - s).abs() / s.abs().max(1.0));
    }
    let slope = real.sched.slope();
    let min_len = SLOPE_CHECK_MIN_PIECE * real.sched.mean_gap;
    let mut slope_err = 0.0f64;
    for w in tp.knots.windows(2) {
        let len = w[1] - w[0];
        if len < min_len {
            continue;
        }
        let (t1, t2) = (w[0] + 0.25 * len, w[0] + 0.75 * len);
        let fd = (tp.eval_unchecked(t2) - tp.eval_unchecked(t1)) / (t2 - t1);
        slope_err = slope_err.max((fd.abs() - slope).abs() / slope);
    }
    (skeleton_err, slope_err)
}

/// Builds one grid-engine realization and measures it.
pub fn measure_realization(
    law: &JumpLaw,
    sched: &ScalingSchedule,
    grid_step_divisor: u32,
    key: StreamKey,
) -> Result<RealizationSummary> {
    let h = sched.mean_gap / grid_step_divisor as f64;
    let mut rng = key.rng();
    let real = build_coupled_realization(law, sched, Engine::Grid, Some(h), DEFAULT_STEP_BUDGET, &mut rng)?;
    let d = real.decompose_sup()?;
    let (skeleton_err, slope_err) = check_realization(&real);
    Ok(RealizationSummary {
        sup: d.sup,
        j1: d.j1,
        j2: d.j2,
        j3: d.j3,
        j4: d.j4,
        bound_excess: d.sup - d.total(),
        bound_tolerance: d.tolerance,
        skeleton_err,
        slope_err,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: u64,
    pub mean_j: f64,
    pub median_j: f64,
    pub q90_j: f64,
    pub exceedance: f64,
    pub mean_j1: f64,
    pub mean_j2: f64,
    pub mean_j3: f64,
    pub mean_j4: f64,
    /// Per-replication measurements, in replication order.
    pub samples: Vec<RealizationSummary>,
}

impl RateRow {
    /// Binomial standard error of the exceedance fraction.
    pub fn exceedance_se(&self) -> f64 {
        let p = self.exceedance;
        (p * (1.0 - p) / self.samples.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub rows: Vec<RateRow>,
    pub alpha: f64,
    pub alpha_calibrated: bool,
    /// `log median J` against `log(n^{-k/4}(log n)^{3/2})`.
    pub fit: Option<RateFit>,
    /// `log median J` against `log n`; the slope is the empirical exponent.
    pub exponent_fit: Option<RateFit>,
    /// False when the step budget stopped the campaign early.
    pub complete: bool,
}

/// Ordinary least squares on `(ln x, ln y)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::Input("need at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Input("log-log fit needs positive values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

fn summarize(n: u64, samples: Vec<RealizationSummary>) -> RateRow {
    let mut sups: Vec<f64> = samples.iter().map(|s| s.sup).collect();
    sups.sort_by(|a, b| a.total_cmp(b));
    let cnt = samples.len() as f64;
    let mean = |f: fn(&RealizationSummary) -> f64| samples.iter().map(f).sum::<f64>() / cnt;
    RateRow {
        n,
        mean_j: mean(|s| s.sup),
        median_j: quantile_sorted(&sups, 0.5),
        q90_j: quantile_sorted(&sups, 0.9),
        exceedance: 0.0,
        mean_j1: mean(|s| s.j1),
        mean_j2: mean(|s| s.j2),
        mean_j3: mean(|s| s.j3),
        mean_j4: mean(|s| s.j4),
        samples,
    }
}

/// Runs the rate campaign.
pub fn run_rate_experiment(cfg: &RateExperimentConfig) -> Result<RateResult> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    let mut spent = 0.0;
    let mut complete = true;
    for &n in &cfg.n_grid {
        let sched = ScalingSchedule::new(&cfg.law, cfg.k, n)?;
        let h = sched.mean_gap / cfg.grid_step_divisor as f64;
        let estimate = cfg.reps as f64 * 1.2 / h;
        if spent + estimate > cfg.step_budget {
            complete = false;
            break;
        }
        spent += estimate;
        let samples: Result<Vec<RealizationSummary>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let key = StreamKey::new(cfg.master_seed, StreamRole::Coupling, n, r as u64);
                measure_realization(&cfg.law, &sched, cfg.grid_step_divisor, key)
            })
            .collect();
        match samples {
            Ok(s) => rows.push(summarize(n, s)),
            Err(Error::Budget(_)) => {
                complete = false;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(Error::Budget(cfg.step_budget as u64));
    }

    let (alpha, alpha_calibrated) = match cfg.alpha {
        Some(a) => (a, false),
        None => (rows[0].median_j / rate_sequence(rows[0].n, cfg.k), true),
    };
    for row in &mut rows {
        let a_n = alpha * rate_sequence(row.n, cfg.k);
        let over = row.samples.iter().filter(|s| s.sup > a_n).count();
        row.exceedance = over as f64 / row.samples.len() as f64;
    }
    let fit = fit_rate(
        &rows
            .iter()
            .map(|r| (rate_sequence(r.n, cfg.k), r.median_j))
            .collect::<Vec<_>>(),
    )
    .ok();
    let exponent_fit = fit_rate(
        &rows
            .iter()
            .map(|r| (r.n as f64, r.median_j))
            .collect::<Vec<_>>(),
    )
    .ok();
    Ok(RateResult {
        rows,
        alpha,
        alpha_calibrated,
        fit,
        exponent_fit,
        complete,
    })
}

impl RateResult {
    /// `n,mean_J,median_J,q90_J,exceedance,J1,J2,J3,J4` rows between the
    /// given comment lines and a fit footer.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "n,mean_J,median_J,q90_J,exceedance,J1,J2,J3,J4")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.n, r.mean_j, r.median_j, r.q90_j, r.exceedance, r.mean_j1, r.mean_j2,
                r.mean_j3, r.mean_j4
            )?;
        }
        match self.fit {
            Some(f) => writeln!(
                w,
                "# fit slope={} intercept={} r_squared={}",
                f.slope, f.intercept, f.r_squared
            ),
            None => writeln!(w, "# fit unavailable"),
        }
    }

    /// Key-value summary, one `key = value` per line.
    pub fn write_summary<W: Write>(&self, mut w: W, meta: &[(String, String)]) -> std::io::Result<()> {
        for (k, v) in meta {
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w, "complete = {}", self.complete)?;
        writeln!(w, "alpha = {}", self.alpha)?;
        writeln!(w, "alpha_calibrated = {}", self.alpha_calibrated)?;
        if let Some(f) = self.fit {
            writeln!(w, "fit_slope = {}", f.slope)?;
            writeln!(w, "fit_intercept = {}", f.intercept)?;
            writeln!(w, "fit_r_squared = {}", f.r_squared)?;
        }
        if let Some(f) = self.exponent_fit {
            writeln!(w, "exponent_slope = {}", f.slope)?;
            writeln!(w, "exponent_r_squared = {}", f.r_squared)?;
        }
        for r in &self.rows {
            let worst = |f: fn(&RealizationSummary) -> f64| {
                r.samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
            };
            writeln!(w, "n{}.median_J = {}", r.n, r.median_j)?;
            writeln!(w, "n{}.exceedance = {}", r.n, r.exceedance)?;
            writeln!(w, "n{}.max_bound_excess = {}", r.n, worst(|s| s.bound_excess))?;
            writeln!(w, "n{}.max_skeleton_err = {}", r.n, worst(|s| s.skeleton_err))?;
            writeln!(w, "n{}.max_slope_err = {}", r.n, worst(|s| s.slope_err))?;
        }
        Ok(())
    }
}

/// What a goodness-of-fit check compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GofTarget {
    StandardNormal,
    Uniform { upper: f64 },
    /// Brownian covariance `min(s, t)`.
    Covariance { s: f64, t: f64 },
}

impl fmt::Display for GofTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GofTarget::StandardNormal => write!(f, "standard_normal"),
            GofTarget::Uniform { upper } => write!(f, "uniform(0,{upper})"),
            GofTarget::Covariance { s, t } => write!(f, "covariance_min({s},{t})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
    pub target: GofTarget,
    /// Point estimate, for checks that have one (covariance).
    pub estimate: Option<f64>,
}

pub const MIN_KS_SAMPLE: usize = 50;

/// One-sample KS test against the standard normal.
pub fn ks_normal(samples: &[f64]) -> Result<GofResult> {
    if samples.len() < MIN_KS_SAMPLE {
        return Err(Error::Input(format!(
            "KS needs at least {MIN_KS_SAMPLE} samples, got {}",
            samples.len()
        )));
    }
    let r = ks_one_sample(samples, normal_cdf)?;
    Ok(GofResult {
        statistic: r.statistic,
        p_value: r.p_value,
        sample_size: r.sample_size,
        target: GofTarget::StandardNormal,
        estimate: None,
    })
}

/// One-sample KS test against `U(0, upper)`.
pub fn ks_uniform(samples: &[f64], upper: f64) -> Result<GofResult> {
    if samples.len() < MIN_KS_SAMPLE {
        return Err(Error::Input(format!(
            "KS needs at least {MIN_KS_SAMPLE} samples, got {}",
            samples.len()
        )));
    }
    let r = ks_one_sample(samples, |x| (x / upper).clamp(0.0, 1.0))?;
    Ok(GofResult {
        statistic: r.statistic,
        p_value: r.p_value,
        sample_size: r.sample_size,
        target: GofTarget::Uniform { upper },
        estimate: None,
    })
}

/// Empirical `Cov(x_n(s), x_n(t))` from direct simulation, tested against
/// `min(s, t)` with a normal approximation. `statistic` is `|z|`.
pub fn covariance_check(
    law: &JumpLaw,
    k: f64,
    n: u64,
    s: f64,
    t: f64,
    reps: usize,
    master_seed: u64,
) -> Result<GofResult> {
    if !(0.0 <= s && s <= t && t <= 1.0) {
        return Err(Error::Input(format!("need 0 ≤ s ≤ t ≤ 1, got s={s}, t={t}")));
    }
    if reps < 100 {
        return Err(Error::Input(format!("covariance check needs reps ≥ 100, got {reps}")));
    }
    let sched = ScalingSchedule::new(law, k, n)?;
    let rows = sample_at_times(law, &sched, &[s, t], reps, master_seed, StreamRole::Covariance)?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (mx, _) = mean_var(&xs);
    let (my, _) = mean_var(&ys);
    let prods: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let nf = reps as f64;
    let (mp, vp) = mean_var(&prods);
    let estimate = mp * nf / (nf - 1.0);
    let target = s.min(t);
    let se = (vp / nf).sqrt();
    let (z, p) = if se == 0.0 {
        if estimate == target {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let z = ((estimate - target) / se).abs();
        (z, 2.0 * (1.0 - normal_cdf(z)))
    };
    Ok(GofResult {
        statistic: z,
        p_value: p,
        sample_size: reps,
        target: GofTarget::Covariance { s, t },
        estimate: Some(estimate),
    })
}

/// Sup-distances per replication across scales.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceResult {
    pub n_grid: Vec<u64>,
    /// `table[r][i]` is the sup-distance of replication `r` at `n_grid[i]`.
    pub table: Vec<Vec<f64>>,
    /// Fraction of replications whose trace never increases.
    pub monotone_fraction: f64,
    /// Fraction whose last value is below the first.
    pub final_below_first_fraction: f64,
}

/// For each replication, couples independently at every `n` and records
/// the grid-mode sup-distance.
pub fn as_trace(
    law: &JumpLaw,
    k: f64,
    n_grid: &[u64],
    reps: usize,
    grid_step_divisor: u32,
    master_seed: u64,
) -> Result<TraceResult> {
    if reps == 0 {
        return Err(Error::Input("reps must be at least 1".into()));
    }
    validate_n_grid(n_grid)?;
    let scheds: Vec<ScalingSchedule> = n_grid
        .iter()
        .map(|&n| ScalingSchedule::new(law, k, n))
        .collect::<Result<_>>()?;
    let table: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            scheds
                .iter()
                .map(|sched| {
                    let key = StreamKey::new(master_seed, StreamRole::Trace, sched.n, r as u64);
                    measure_realization(law, sched, grid_step_divisor, key).map(|m| m.sup)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let monotone = table
        .iter()
        .filter(|row| row.windows(2).all(|w| w[1] <= w[0]))
        .count();
    let below = table
        .iter()
        .filter(|row| row.len() > 1 && row[row.len() - 1] < row[0])
        .count();
    Ok(TraceResult {
        n_grid: n_grid.to_vec(),
        table,
        monotone_fraction: monotone as f64 / reps as f64,
        final_below_first_fraction: below as f64 / reps as f64,
    })
}

impl TraceResult {
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        write!(w, "rep")?;
        for n in &self.n_grid {
            write!(w, ",J_n{n}")?;
        }
        writeln!(w)?;
        for (r, row) in self.table.iter().enumerate() {
            write!(w, "{r}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        writeln!(
            w,
            "# monotone_fraction={} final_below_first_fraction={}",
            self.monotone_fraction, self.final_below_first_fraction
        )
    }
}
