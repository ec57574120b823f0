//! Coupling of the transport process with a Brownian path.
//!
//! For every scale `n` the jump increments are embedded one after another in
//! a single Brownian path `x`: step `m` draws `ξ_m = (β/G)·U_m`, runs `x`
//! until it has moved `ξ_m` away from the previous skeleton value, and sets
//!
//! ```text
//! Λ_m = Λ_{m-1} + σ_m          (Brownian clock, σ_m the exit time)
//! Γ_m = Γ_{m-1} + γ_m          (transport clock, γ_m = G·ξ_m)
//! x_n(Γ_m) = x(Λ_m)            (skeleton value)
//! ```
//!
//! with `x_n` linear in between, so its slope is `±1/G`. The sup-distance
//! between `x_n` and `x` on `[0, 1]` is the quantity whose decay is measured.
//!
//! Two engines are available. [`Engine::Exact`] samples `σ_m` from the
//! exact exit-time law and keeps only the skeleton. [`Engine::Grid`] runs a
//! Gaussian walk with step variance `h`, so the whole Brownian path is known
//! on the grid. The grid walk overshoots `±ξ_m` by `O(√h)`; the skeleton
//! value is snapped to exactly `±ξ_m` while the walk is kept as simulated,
//! and each exit is measured from the snapped value so the mismatch does not
//! accumulate.

mod exit_time;

pub use exit_time::{
    exit_time_cdf, exit_time_quantile, grid_exit, sample_exit_time_exact, ExitDraw, GridExit,
    DEFAULT_STEP_BUDGET, INVERSION_TOL, SERIES_TOL, SMALL_TIME,
};

use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::jump_distributions::JumpLaw;
use crate::renewal_transport::{ScalingSchedule, TransportPath};

/// Length of the time window on which the processes are compared.
pub const UNIT_HORIZON: f64 = 1.0;

/// Default ratio `H(n)/h` between the mean gap and the grid step.
pub const DEFAULT_GRID_STEP_DIVISOR: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Exact,
    Grid,
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Engine::Exact),
            "grid" => Ok(Engine::Grid),
            other => Err(Error::Parameter(format!("unknown engine `{other}`"))),
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Exact => "exact",
            Engine::Grid => "grid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupMode {
    Skeleton,
    Grid,
}

/// One embedded increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingStep {
    pub xi: f64,
    /// Exit side, `±1`.
    pub sign: f64,
    /// Brownian time spent, `σ_m`.
    pub sigma: f64,
    /// Transport time spent, `γ_m = G·ξ_m`.
    pub gamma: f64,
}

/// Brownian path sampled at `0, step, 2·step, …`; linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    pub step: f64,
    pub values: Vec<f64>,
}

impl BrownianGrid {
    pub fn end_time(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    /// Linear interpolation; times past the end read the last value.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let x = t / self.step;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let frac = x - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Writes `t,w` rows after the given comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "t,w")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", i as f64 * self.step, v)?;
        }
        Ok(())
    }
}

/// One coupled draw of `(x_n, x)`.
///
/// `gamma_sums`, `lambda_sums` and `skeleton` have one more entry than
/// `steps`; index 0 is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRealization {
    pub sched: ScalingSchedule,
    pub engine: Engine,
    pub steps: Vec<EmbeddingStep>,
    pub gamma_sums: Vec<f64>,
    pub lambda_sums: Vec<f64>,
    pub skeleton: Vec<f64>,
    /// First `m` with `Γ_m ≥ 1`.
    pub covering_steps: usize,
    pub grid: Option<BrownianGrid>,
}

/// One draw of `ξ = (β/G)·U`, so that `G·ξ` has the law of `β·U`.
#[inline]
pub fn sample_xi<R: Rng + ?Sized>(law: &JumpLaw, sched: &ScalingSchedule, rng: &mut R) -> f64 {
    sched.beta / sched.normalizer * law.sample(rng)
}

/// Builds one coupled realization.
///
/// Steps are drawn until `Γ_m ≥ 1` and at least `floor(1/H) + 1` steps
/// exist, so the decomposition terms are defined on their whole index range.
/// With the grid engine the Brownian path is extended past the last step
/// until it covers `max(Γ_M, Λ_M, (M-1)·H, 1)`.
pub fn build_coupled_realization<R: Rng + ?Sized>(
    law: &JumpLaw,
    sched: &ScalingSchedule,
    engine: Engine,
    grid_step: Option<f64>,
    step_budget: u64,
    rng: &mut R,
) -> Result<CoupledRealization> {
    let min_steps = sched.unit_segments();
    let cap = min_steps * 5 / 4 + 64;
    let mut steps = Vec::with_capacity(cap);
    let mut gamma_sums = Vec::with_capacity(cap + 1);
    let mut lambda_sums = Vec::with_capacity(cap + 1);
    let mut skeleton = Vec::with_capacity(cap + 1);
    gamma_sums.push(0.0);
    lambda_sums.push(0.0);
    skeleton.push(0.0);
    let mut covering_steps = 0;

    let (h, mut walk) = match engine {
        Engine::Exact => (0.0, Vec::new()),
        Engine::Grid => {
            let h = grid_step.ok_or_else(|| {
                Error::Parameter("grid engine requires a grid step".into())
            })?;
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::Parameter(format!("grid step must be positive, got {h}")));
            }
            let expected = 1.25 / h;
            if expected > step_budget as f64 {
                return Err(Error::Budget(step_budget));
            }
            let mut w = Vec::with_capacity(expected as usize + 1024);
            w.push(0.0);
            (h, w)
        }
    };
    let sd = h.sqrt();

    while covering_steps == 0 || steps.len() < min_steps {
        let xi = sample_xi(law, sched, rng);
        let center = *skeleton.last().unwrap();
        let (sigma, sign, lambda) = match engine {
            Engine::Exact => {
                if xi == 0.0 {
                    (0.0, 1.0, *lambda_sums.last().unwrap())
                } else {
                    let d = sample_exit_time_exact(xi, rng)?;
                    (d.tau, d.sign, lambda_sums.last().unwrap() + d.tau)
                }
            }
            Engine::Grid => {
                if xi == 0.0 {
                    (0.0, 1.0, *lambda_sums.last().unwrap())
                } else {
                    let used = (walk.len() - 1) as u64;
                    let remaining = step_budget.saturating_sub(used);
                    if remaining == 0 {
                        return Err(Error::Budget(used));
                    }
                    let n = exit_time::walk_until_exit(center, xi, sd, remaining, rng, &mut walk)
                        .map_err(|_| Error::Budget(step_budget))?;
                    let end = (walk.len() - 1) as f64;
                    let sign = if *walk.last().unwrap() > center { 1.0 } else { -1.0 };
                    (n as f64 * h, sign, end * h)
                }
            }
        };
        let gamma = sched.normalizer * xi;
        steps.push(EmbeddingStep {
            xi,
            sign,
            sigma,
            gamma,
        });
        gamma_sums.push(gamma_sums.last().unwrap() + gamma);
        lambda_sums.push(lambda);
        skeleton.push(center + sign * xi);
        if covering_steps == 0 && *gamma_sums.last().unwrap() >= UNIT_HORIZON {
            covering_steps = steps.len();
        }
    }

    let grid = if engine == Engine::Grid {
        let m = steps.len();
        let need = gamma_sums[m]
            .max(lambda_sums[m])
            .max((m - 1) as f64 * sched.mean_gap)
            .max(UNIT_HORIZON);
        let need_idx = (need / h).ceil() as usize + 1;
        if need_idx as u64 > step_budget {
            return Err(Error::Budget(step_budget));
        }
        let mut pos = *walk.last().unwrap();
        while walk.len() <= need_idx {
            let z: f64 = rng.sample(StandardNormal);
            pos += sd * z;
            walk.push(pos);
        }
        Some(BrownianGrid {
            step: h,
            values: walk,
        })
    } else {
        None
    };

    Ok(CoupledRealization {
        sched: *sched,
        engine,
        steps,
        gamma_sums,
        lambda_sums,
        skeleton,
        covering_steps,
        grid,
    })
}

/// Triangle-inequality terms bounding the sup-distance.
///
/// With `M` the number of steps and `m` ranging over `0..M`:
/// `j1 = max |x(Λ_m) - x(mH)|`, `j2 = max |x(Γ_m) - x(mH)|`,
/// `j3 = max_{r ≤ γ_{m+1}} |x(Γ_m) - x(Γ_m + r)|`, `j4 = max_{1≤m≤M} γ_m/G`.
/// `x(Λ_m)` is the snapped skeleton value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    /// Grid-mode sup-distance on `[0, 1]`.
    pub sup: f64,
    /// Allowed excess of `sup` over `j1 + j2 + j3 + j4`.
    pub tolerance: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.j1 + self.j2 + self.j3 + self.j4
    }

    pub fn holds(&self) -> bool {
        self.sup <= self.total() + self.tolerance
    }
}

impl CoupledRealization {
    /// Number of steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// End of the last transport segment, `Γ_M`.
    pub fn transport_horizon(&self) -> f64 {
        *self.gamma_sums.last().unwrap()
    }

    /// `x_n(t)` anchored at the preceding skeleton point.
    pub fn eval_xn(&self, t: f64) -> Result<f64> {
        let horizon = self.transport_horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::Domain { t, horizon });
        }
        let m = self.gamma_sums.partition_point(|&g| g <= t).saturating_sub(1);
        let m = m.min(self.steps.len() - 1);
        Ok(self.skeleton[m] + self.steps[m].sign * (t - self.gamma_sums[m]) / self.sched.normalizer)
    }

    /// `x_n` as a [`TransportPath`]: consecutive steps with the same exit side
    /// merge into one linear piece.
    pub fn transport(&self) -> TransportPath {
        let first = self.steps.first().map_or(1.0, |s| s.sign);
        let mut sign = first;
        let mut changes = Vec::new();
        for (m, s) in self.steps.iter().enumerate().skip(1) {
            if s.xi == 0.0 {
                continue;
            }
            if s.sign != sign {
                changes.push(self.gamma_sums[m]);
                sign = s.sign;
            }
        }
        TransportPath::from_sign_changes(
            self.sched.slope(),
            first,
            changes,
            self.transport_horizon(),
        )
    }

    fn require_grid(&self) -> Result<&BrownianGrid> {
        self.grid.as_ref().ok_or_else(|| {
            Error::UnsupportedMode(
                "realization has no Brownian grid path (exact engine)".into(),
            )
        })
    }

    /// Largest `|x_n(t) - x(t)|` on `[0, 1]`.
    ///
    /// `Skeleton` looks only at the points `Γ_m ≤ 1`. `Grid` looks at every
    /// grid time, every `Γ_m ≤ 1` and `t = 1`; both processes are linear
    /// between those points, so this is the exact supremum of the two
    /// piecewise-linear paths.
    pub fn sup_distance(&self, mode: SupMode) -> Result<f64> {
        let grid = self.require_grid()?;
        let g = self.sched.normalizer;
        let mut best = 0.0f64;
        for m in 0..self.gamma_sums.len() {
            let t = self.gamma_sums[m];
            if t > UNIT_HORIZON {
                break;
            }
            best = best.max((self.skeleton[m] - grid.eval(t)).abs());
        }
        if mode == SupMode::Skeleton {
            return Ok(best);
        }
        let h = grid.step;
        let last = (UNIT_HORIZON / h).floor() as usize;
        let mut seg = 0usize;
        for i in 0..=last {
            let t = i as f64 * h;
            while self.gamma_sums[seg + 1] < t {
                seg += 1;
            }
            let xn = self.skeleton[seg] + self.steps[seg].sign * (t - self.gamma_sums[seg]) / g;
            best = best.max((xn - grid.values[i]).abs());
        }
        let xn1 = self.eval_xn(UNIT_HORIZON)?;
        best = best.max((xn1 - grid.eval(UNIT_HORIZON)).abs());
        Ok(best)
    }

    /// Computes the four bounding terms and checks the bound.
    pub fn decompose_sup(&self) -> Result<Decomposition> {
        let grid = self.require_grid()?;
        let h = grid.step;
        let mean_gap = self.sched.mean_gap;
        let big_m = self.steps.len();
        let (mut j1, mut j2, mut j3) = (0.0f64, 0.0f64, 0.0f64);
        for m in 0..big_m {
            let x_mh = grid.eval(m as f64 * mean_gap);
            let start = self.gamma_sums[m];
            let end = self.gamma_sums[m + 1];
            let x_start = grid.eval(start);
            j1 = j1.max((self.skeleton[m] - x_mh).abs());
            j2 = j2.max((x_start - x_mh).abs());
            let first = (start / h).floor() as usize + 1;
            let mut i = first;
            while (i as f64) * h < end && i < grid.values.len() {
                j3 = j3.max((grid.values[i] - x_start).abs());
                i += 1;
            }
            j3 = j3.max((grid.eval(end) - x_start).abs());
        }
        let j4 = self
            .steps
            .iter()
            .map(|s| s.gamma)
            .fold(0.0, f64::max)
            / self.sched.normalizer;
        let d = Decomposition {
            j1,
            j2,
            j3,
            j4,
            sup: self.sup_distance(SupMode::Grid)?,
            tolerance: 2.0 * grid_modulus_bound(h),
        };
        if !d.holds() {
            return Err(Error::Numeric(format!(
                "sup-distance {} exceeds decomposition bound {} + {}",
                d.sup,
                d.total(),
                d.tolerance
            )));
        }
        Ok(d)
    }

    /// Writes `m,Gamma,Lambda,skeleton_value` rows after the comment lines.
    pub fn write_skeleton_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "m,Gamma,Lambda,skeleton_value")?;
        for m in 0..self.gamma_sums.len() {
            writeln!(
                w,
                "{},{},{},{}",
                m, self.gamma_sums[m], self.lambda_sums[m], self.skeleton[m]
            )?;
        }
        Ok(())
    }
}

/// Size of a single grid increment that is exceeded with negligible
/// probability: `4·√h`.
pub fn grid_modulus_bound(h: f64) -> f64 {
    4.0 * h.sqrt()
}

/// Empirical `E σ² / E ξ⁴` over the steps. For first exits from `[-ξ, ξ]`
/// the exact value is 5/3.
pub fn embedding_moment_ratio(steps: &[EmbeddingStep]) -> f64 {
    let s2: f64 = steps.iter().map(|s| s.sigma * s.sigma).sum();
    let x4: f64 = steps.iter().map(|s| s.xi.powi(4)).sum();
    s2 / x4
}
