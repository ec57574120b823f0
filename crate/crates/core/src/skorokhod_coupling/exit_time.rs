//! First exit of standard Brownian motion from a symmetric interval `[-a, a]`.
//!
//! The exit position is `±a` with equal probability and is independent of the
//! exit time, so this is the embedding of the symmetric two-point law `±a`.
//! The exit time scales as `τ_a = a²·τ_1`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Series terms below this size end the summation.
pub const SERIES_TOL: f64 = 1e-12;
/// Absolute tolerance, in probability, of the inverse-CDF bisection.
pub const INVERSION_TOL: f64 = 1e-10;
/// Below this time the image (Gaussian) series is used.
pub const SMALL_TIME: f64 = 0.05;
const MAX_TERMS: usize = 10_000;

/// Default cap on grid steps in one [`grid_exit`] call.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitDraw {
    pub tau: f64,
    /// `+1.0` for exit at `+a`, `-1.0` for `-a`.
    pub sign: f64,
}

#[inline]
fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `P(τ_1 ≤ t)` for the exit time of `[-1, 1]`.
///
/// Small `t` uses the reflection expansion `4 Σ (-1)^j Φ̄((2j+1)/√t)`;
/// otherwise the eigenfunction expansion
/// `1 - (4/π) Σ (-1)^j/(2j+1) exp(-(2j+1)² π² t / 8)`.
pub fn exit_time_cdf(t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    if t < SMALL_TIME {
        let rt = t.sqrt();
        let mut sum = 0.0;
        for j in 0..MAX_TERMS {
            let term = 4.0 * normal_sf((2 * j + 1) as f64 / rt);
            if j % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
            if term < SERIES_TOL {
                return Ok(sum.clamp(0.0, 1.0));
            }
        }
    } else {
        let c = PI * PI * t / 8.0;
        let mut sum = 0.0;
        for j in 0..MAX_TERMS {
            let odd = (2 * j + 1) as f64;
            let term = 4.0 / PI * (-odd * odd * c).exp() / odd;
            if j % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
            if term < SERIES_TOL {
                return Ok((1.0 - sum).clamp(0.0, 1.0));
            }
        }
    }
    Err(Error::Numeric(format!(
        "exit-time series did not converge at t={t}"
    )))
}

/// Inverts [`exit_time_cdf`] at `u` by bisection.
pub fn exit_time_quantile(u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Parameter(format!("quantile level {u} outside [0,1)")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while exit_time_cdf(hi)? < u {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Numeric(format!("no bracket for quantile {u}")));
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let f = exit_time_cdf(mid)?;
        if (f - u).abs() <= INVERSION_TOL || hi - lo <= 1e-15 * hi {
            return Ok(mid);
        }
        if f < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Exact draw of the exit time from `[-a, a]` and the exit side.
pub fn sample_exit_time_exact<R: Rng + ?Sized>(a: f64, rng: &mut R) -> Result<ExitDraw> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Parameter(format!("half-width must be positive, got {a}")));
    }
    let u: f64 = rng.random();
    let tau = a * a * exit_time_quantile(u)?;
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    Ok(ExitDraw { tau, sign })
}

/// Result of a discretized exit.
#[derive(Debug, Clone, PartialEq)]
pub struct GridExit {
    /// Time of the first grid point outside the open interval.
    pub tau_hat: f64,
    pub sign: f64,
    /// Walk values at times `0, h, 2h, …, tau_hat`.
    pub path: Vec<f64>,
}

/// Gaussian random walk with step variance `h`, run from 0 until it leaves
/// `(-a, a)`. `tau_hat` is biased upward by `O(√h)`.
pub fn grid_exit<R: Rng + ?Sized>(a: f64, h: f64, budget: u64, rng: &mut R) -> Result<GridExit> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Parameter(format!("half-width must be positive, got {a}")));
    }
    if !(h > 0.0) || h > a * a / 100.0 {
        return Err(Error::Parameter(format!(
            "grid step {h} must lie in (0, a²/100 = {}]",
            a * a / 100.0
        )));
    }
    let mut path = vec![0.0];
    let steps = walk_until_exit(0.0, a, h.sqrt(), budget, rng, &mut path)?;
    let last = *path.last().unwrap();
    Ok(GridExit {
        tau_hat: steps as f64 * h,
        sign: if last > 0.0 { 1.0 } else { -1.0 },
        path,
    })
}

/// Extends `path` with Gaussian steps of size `sd` until a new point lies at
/// distance `>= radius` from `center`. At least one step is always taken.
/// Returns the number of steps added.
pub(crate) fn walk_until_exit<R: Rng + ?Sized>(
    center: f64,
    radius: f64,
    sd: f64,
    budget: u64,
    rng: &mut R,
    path: &mut Vec<f64>,
) -> Result<u64> {
    let mut pos = *path.last().expect("walk needs a starting point");
    let mut steps = 0u64;
    loop {
        let z: f64 = rng.sample(StandardNormal);
        pos += sd * z;
        path.push(pos);
        steps += 1;
        if (pos - center).abs() >= radius {
            return Ok(steps);
        }
        if steps >= budget {
            return Err(Error::Budget(steps));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamRole};

    #[test]
    fn cdf_matches_reference_values() {
        // high-precision evaluations of the reflection series
        let reference = [
            (0.01, 3.0479412096642104e-23),
            (0.03, 1.552807307586135616e-8),
            (0.05, 1.5488432862088167e-5),
            (0.08, 8.1390403488991788e-4),
            (0.2, 0.05069463731552963844),
            (1.0, 0.6292225702004760946),
            (3.0, 0.9685556881396109061),
        ];
        for (t, want) in reference {
            let got = exit_time_cdf(t).unwrap();
            assert!((got - want).abs() < 1e-12, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn cdf_series_agree_near_switch() {
        for t in [0.03, 0.05, 0.08] {
            let rt: f64 = (t as f64).sqrt();
            let image: f64 = (0..50)
                .map(|j| {
                    let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                    4.0 * s * normal_sf((2 * j + 1) as f64 / rt)
                })
                .sum();
            let theta: f64 = 1.0
                - (0..200)
                    .map(|j| {
                        let o = (2 * j + 1) as f64;
                        let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                        s * 4.0 / PI * (-o * o * PI * PI * t / 8.0).exp() / o
                    })
                    .sum::<f64>();
            assert!((image - theta).abs() < 1e-12, "t={t}: {image} vs {theta}");
        }
    }

    #[test]
    fn cdf_is_monotone_distribution() {
        assert_eq!(exit_time_cdf(0.0).unwrap(), 0.0);
        let mut prev = 0.0;
        for i in 1..2000 {
            let f = exit_time_cdf(i as f64 * 0.01).unwrap();
            assert!(f >= prev);
            prev = f;
        }
        // tail ~ (4/π) exp(-π² t / 8)
        assert!(prev > 1.0 - 1e-9);
    }

    #[test]
    fn mean_by_quadrature_is_one() {
        // E τ = ∫ (1 - F) dt = a² = 1
        let dt = 1e-4;
        let mean: f64 = (0..200_000)
            .map(|i| (1.0 - exit_time_cdf((i as f64 + 0.5) * dt).unwrap()) * dt)
            .sum();
        assert!((mean - 1.0).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn quantile_inverts_cdf() {
        for u in [1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999] {
            let t = exit_time_quantile(u).unwrap();
            assert!((exit_time_cdf(t).unwrap() - u).abs() <= INVERSION_TOL);
        }
    }

    #[test]
    fn exact_sampler_moments() {
        let mut rng = stream(11, StreamRole::ExitTime);
        let n = 100_000;
        let draws: Vec<ExitDraw> = (0..n)
            .map(|_| sample_exit_time_exact(1.0, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().map(|d| d.tau).sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d.tau - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!((var - 2.0 / 3.0).abs() < 0.05, "{var}");
        let ups = draws.iter().filter(|d| d.sign > 0.0).count() as f64 / n as f64;
        assert!((ups - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn exact_sampler_rejects_bad_width() {
        let mut rng = stream(1, StreamRole::ExitTime);
        assert!(matches!(
            sample_exit_time_exact(0.0, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(sample_exit_time_exact(-1.0, &mut rng).is_err());
    }

    #[test]
    fn grid_exit_contract() {
        let mut rng = stream(12, StreamRole::ExitTime);
        let (a, h) = (1.0, 1e-4);
        let n = 10_000;
        let mut sum = 0.0;
        let mut ups = 0;
        for _ in 0..n {
            let g = grid_exit(a, h, DEFAULT_STEP_BUDGET, &mut rng).unwrap();
            sum += g.tau_hat;
            if g.sign > 0.0 {
                ups += 1;
            }
            let bound = a + 4.0 * h.sqrt();
            let (last, inner) = g.path.split_last().unwrap();
            assert!(inner.iter().all(|v| v.abs() < a));
            assert!(last.abs() >= a && last.abs() < bound + 2.0 * h.sqrt());
            assert_eq!(g.path.len() as f64 - 1.0, (g.tau_hat / h).round());
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        let freq = ups as f64 / n as f64;
        assert!((freq - 0.5).abs() < 3.0 / (2.0 * (n as f64).sqrt()), "{freq}");
    }

    #[test]
    fn grid_exit_preconditions() {
        let mut rng = stream(13, StreamRole::ExitTime);
        assert!(matches!(
            grid_exit(1.0, 0.02, DEFAULT_STEP_BUDGET, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            grid_exit(1.0, 1e-6, 10, &mut rng),
            Err(Error::Budget(10))
        ));
    }
}
