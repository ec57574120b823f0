//! Renewal-reward paths and the transport process built on them.
//!
//! A renewal path holds the scaled renewal epochs `β(n)·S_k` together with
//! their Bernoulli rewards. The transport process integrates the sign
//! `(-1)^{T_n(u)}` and divides by the normalizer `G(n)`, so it is piecewise
//! linear with slope `±1/G(n)` and changes direction only at epochs whose
//! reward is 1.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jump_distributions::{JumpLaw, Moments};
use crate::rng::{StreamKey, StreamRole};

/// Default cap on the expected number of renewal events in one path.
pub const DEFAULT_EVENT_CAP: f64 = 1e8;

/// Scale-dependent constants for `β(n) = n^{-k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSchedule {
    pub k: f64,
    pub n: u64,
    pub moments: Moments,
    /// `β(n) = n^{-k}`, the time compression of the renewal sequence.
    pub beta: f64,
    /// `G(n) = sqrt(β(n)·E U² / E U)`; the transport slope is `±1/G(n)`.
    pub normalizer: f64,
    /// `H(n) = β(n)·E U`, the mean gap between scaled renewals.
    pub mean_gap: f64,
}

impl ScalingSchedule {
    pub fn new(law: &JumpLaw, k: f64, n: u64) -> Result<Self> {
        if !(k > 1.0) || !k.is_finite() {
            return Err(Error::RateCondition(k));
        }
        if n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        let moments = law.moments()?;
        let beta = (n as f64).powf(-k);
        Ok(Self {
            k,
            n,
            moments,
            beta,
            normalizer: (beta * moments.m2 / moments.m1).sqrt(),
            mean_gap: beta * moments.m1,
        })
    }

    pub fn slope(&self) -> f64 {
        1.0 / self.normalizer
    }

    /// `floor(1/H) + 1`, the number of increments needed to reach the unit
    /// horizon on average.
    pub fn unit_segments(&self) -> usize {
        (1.0 / self.mean_gap).floor() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalEvent {
    /// Scaled epoch `β(n)·S_k`.
    pub time: f64,
    /// Reward `η_k`.
    pub flip: bool,
}

/// One realization of the scaled renewal-reward process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalPath {
    pub eta0: bool,
    pub events: Vec<RenewalEvent>,
    pub horizon: f64,
}

/// Value of the reward process at a time, with the renewal count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewardCount {
    /// `T_n(t) = η_0 + Σ η_k 1{β S_k ≤ t}`.
    pub reward: u64,
    /// `L(t/β)`: renewals in `[0, t]`.
    pub renewals: u64,
}

/// Samples renewal epochs up to `horizon`. Epochs beyond the horizon are not
/// stored.
pub fn sample_renewal_path<R: Rng + ?Sized>(
    law: &JumpLaw,
    sched: &ScalingSchedule,
    horizon: f64,
    event_cap: f64,
    rng: &mut R,
) -> Result<RenewalPath> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Parameter(format!("horizon must be nonnegative, got {horizon}")));
    }
    let expected = horizon / sched.mean_gap;
    if expected > event_cap {
        return Err(Error::Capacity {
            what: "renewal path",
            needed: expected,
            cap: event_cap,
        });
    }
    let eta0 = rng.random::<bool>();
    let mut events = Vec::with_capacity((expected * 1.1) as usize + 8);
    if horizon > 0.0 {
        let mut s = 0.0;
        loop {
            s += law.sample(rng);
            let time = sched.beta * s;
            if time > horizon {
                break;
            }
            events.push(RenewalEvent {
                time,
                flip: rng.random::<bool>(),
            });
        }
    }
    Ok(RenewalPath {
        eta0,
        events,
        horizon,
    })
}

impl RenewalPath {
    /// Reward and renewal count at `t`; an epoch exactly at `t` counts.
    pub fn reward_at(&self, t: f64) -> Result<RewardCount> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain {
                t,
                horizon: self.horizon,
            });
        }
        let upto = self.events.partition_point(|e| e.time <= t);
        let flips = self.events[..upto].iter().filter(|e| e.flip).count() as u64;
        Ok(RewardCount {
            reward: self.eta0 as u64 + flips,
            renewals: upto as u64,
        })
    }
}

/// Piecewise-linear path with slope `±slope` that reverses direction at
/// each interior knot.
///
/// `knots[0] = 0` and the last knot is the horizon; `values[i]` is the path
/// at `knots[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPath {
    pub slope: f64,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub initial_sign: f64,
}

impl TransportPath {
    /// Builds the path from sign-change times. `changes` must be strictly
    /// increasing and lie in `(0, horizon)`.
    pub fn from_sign_changes(
        slope: f64,
        initial_sign: f64,
        changes: impl IntoIterator<Item = f64>,
        horizon: f64,
    ) -> Self {
        let mut knots = vec![0.0];
        let mut values = vec![0.0];
        let mut sign = initial_sign;
        let push = |t: f64, sign: f64, knots: &mut Vec<f64>, values: &mut Vec<f64>| {
            let (t0, v0) = (*knots.last().unwrap(), *values.last().unwrap());
            knots.push(t);
            values.push(v0 + sign * slope * (t - t0));
        };
        for t in changes {
            push(t, sign, &mut knots, &mut values);
            sign = -sign;
        }
        if horizon > *knots.last().unwrap() || knots.len() == 1 {
            push(horizon, sign, &mut knots, &mut values);
        }
        Self {
            slope,
            knots,
            values,
            initial_sign,
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Number of direction reversals.
    pub fn sign_changes(&self) -> usize {
        self.knots.len().saturating_sub(2)
    }

    /// Sign of the slope on segment `i` (between `knots[i]` and `knots[i+1]`).
    #[inline]
    pub fn segment_sign(&self, i: usize) -> f64 {
        if i % 2 == 0 {
            self.initial_sign
        } else {
            -self.initial_sign
        }
    }

    /// Exact evaluation by binary search over the knots.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::Domain { t, horizon });
        }
        Ok(self.eval_unchecked(t))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k <= t).saturating_sub(1);
        let i = i.min(self.knots.len() - 2);
        self.values[i] + self.segment_sign(i) * self.slope * (t - self.knots[i])
    }

    /// Writes `t,value` rows at the knots after the given comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "t,value")?;
        for (t, v) in self.knots.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// The transport process of a renewal path: `x_n(t) = G^{-1} ∫_0^t (-1)^{T_n(u)} du`.
///
/// Epochs with zero reward leave the sign unchanged and are not knots.
/// Several epochs at the same time are merged by parity.
pub fn build_transport_path(path: &RenewalPath, sched: &ScalingSchedule) -> TransportPath {
    let mut parity = path.eta0;
    let mut changes = Vec::with_capacity(path.events.len() / 2 + 1);
    let mut initial_parity = parity;
    let mut i = 0;
    while i < path.events.len() {
        let t = path.events[i].time;
        let mut flip = false;
        while i < path.events.len() && path.events[i].time == t {
            flip ^= path.events[i].flip;
            i += 1;
        }
        if !flip {
            continue;
        }
        parity ^= true;
        if t == 0.0 {
            initial_parity = parity;
        } else if t < path.horizon {
            changes.push(t);
        }
    }
    let initial_sign = if initial_parity { -1.0 } else { 1.0 };
    TransportPath::from_sign_changes(sched.slope(), initial_sign, changes, path.horizon)
}

/// `reps` independent draws of `x_n(1)`, one stream per replication.
pub fn terminal_samples(
    law: &JumpLaw,
    sched: &ScalingSchedule,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    sample_at_times(law, sched, &[1.0], reps, master_seed, StreamRole::Terminal)
        .map(|rows| rows.into_iter().map(|r| r[0]).collect())
}

/// Simulates `reps` transport paths on `[0, max(times)]` and evaluates each
/// at `times`. Row `r` uses stream `(master_seed, role, n, r)`.
pub fn sample_at_times(
    law: &JumpLaw,
    sched: &ScalingSchedule,
    times: &[f64],
    reps: usize,
    master_seed: u64,
    role: StreamRole,
) -> Result<Vec<Vec<f64>>> {
    if reps == 0 {
        return Err(Error::Input("reps must be at least 1".into()));
    }
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamKey::new(master_seed, role, sched.n, r as u64).rng();
            let path = sample_renewal_path(law, sched, horizon, DEFAULT_EVENT_CAP, &mut rng)?;
            let tp = build_transport_path(&path, sched);
            times.iter().map(|&t| tp.eval(t)).collect()
        })
        .collect()
}
