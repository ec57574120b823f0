//! Jump-time laws for the renewal sequence.
//!
//! Only a closed set of parametric families is supported so that every
//! moment used for scaling is known in closed form.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

/// A nonnegative jump-time distribution.
///
/// `TwoPoint { a, b, p }` puts mass `p` on `a` and `1 - p` on `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpLaw {
    Uniform01,
    Exponential { rate: f64 },
    Deterministic { c: f64 },
    TwoPoint { a: f64, b: f64, p: f64 },
}

/// First, second and fourth raw moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub m1: f64,
    pub m2: f64,
    pub m4: f64,
}

/// One failed check reported by [`JumpLaw::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl JumpLaw {
    /// Returns every violated parameter constraint; never panics.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        match *self {
            JumpLaw::Uniform01 => {}
            JumpLaw::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    v.push(Violation("nonpositive rate".into()));
                }
            }
            JumpLaw::Deterministic { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    v.push(Violation("nonpositive constant".into()));
                }
            }
            JumpLaw::TwoPoint { a, b, p } => {
                if !(a >= 0.0 && a.is_finite()) {
                    v.push(Violation("negative support point a".into()));
                }
                if !(b > 0.0 && b.is_finite()) {
                    v.push(Violation("nonpositive support point b".into()));
                }
                if !(0.0..=1.0).contains(&p) {
                    v.push(Violation("probability p outside [0,1]".into()));
                }
                let mut zero_mass = 0.0;
                if a == 0.0 {
                    zero_mass += p;
                }
                if b == 0.0 {
                    zero_mass += 1.0 - p;
                }
                if zero_mass >= 1.0 {
                    v.push(Violation("P(U=0)=1".into()));
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    /// `E U^r` for integer `r >= 0`.
    pub fn raw_moment(&self, r: u32) -> Result<f64> {
        if let Err(v) = self.validate() {
            let msg: Vec<String> = v.iter().map(|x| x.0.clone()).collect();
            return Err(Error::Parameter(msg.join("; ")));
        }
        let ri = r as i32;
        Ok(match *self {
            JumpLaw::Uniform01 => 1.0 / (r as f64 + 1.0),
            JumpLaw::Exponential { rate } => {
                let fact: f64 = (1..=r).map(|i| i as f64).product();
                fact / rate.powi(ri)
            }
            JumpLaw::Deterministic { c } => c.powi(ri),
            JumpLaw::TwoPoint { a, b, p } => p * a.powi(ri) + (1.0 - p) * b.powi(ri),
        })
    }

    pub fn moments(&self) -> Result<Moments> {
        Ok(Moments {
            m1: self.raw_moment(1)?,
            m2: self.raw_moment(2)?,
            m4: self.raw_moment(4)?,
        })
    }

    /// True when the law has an atom at zero without being degenerate there.
    /// Such laws are admissible but exploratory.
    pub fn has_atom_at_zero(&self) -> bool {
        matches!(*self, JumpLaw::TwoPoint { a, p, .. } if a == 0.0 && p > 0.0 && p < 1.0)
    }

    /// One independent draw. Assumes a validated law.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Uniform01 => rng.random::<f64>(),
            JumpLaw::Exponential { rate } => Exp::new(rate)
                .expect("validated rate")
                .sample(rng),
            JumpLaw::Deterministic { c } => c,
            JumpLaw::TwoPoint { a, b, p } => {
                if rng.random::<f64>() < p {
                    a
                } else {
                    b
                }
            }
        }
    }
}

impl fmt::Display for JumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            JumpLaw::Uniform01 => write!(f, "uniform01"),
            JumpLaw::Exponential { rate } => write!(f, "exponential:{rate}"),
            JumpLaw::Deterministic { c } => write!(f, "deterministic:{c}"),
            JumpLaw::TwoPoint { a, b, p } => write!(f, "two_point:{a},{b},{p}"),
        }
    }
}

impl FromStr for JumpLaw {
    type Err = Error;

    /// Parses `uniform01`, `exponential:<rate>`, `deterministic:<c>` or
    /// `two_point:<a>,<b>,<p>`. Parameters are not validated here.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s, None),
        };
        let nums = |a: &str| -> Result<Vec<f64>> {
            a.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parameter(format!("bad number `{x}` in law `{s}`")))
                })
                .collect()
        };
        let law = match (name, args) {
            ("uniform01", None) => JumpLaw::Uniform01,
            ("exponential", Some(a)) => match nums(a)?.as_slice() {
                [rate] => JumpLaw::Exponential { rate: *rate },
                _ => return Err(Error::Parameter(format!("law `{s}` takes one parameter"))),
            },
            ("deterministic", Some(a)) => match nums(a)?.as_slice() {
                [c] => JumpLaw::Deterministic { c: *c },
                _ => return Err(Error::Parameter(format!("law `{s}` takes one parameter"))),
            },
            ("two_point", Some(a)) => match nums(a)?.as_slice() {
                [a, b, p] => JumpLaw::TwoPoint {
                    a: *a,
                    b: *b,
                    p: *p,
                },
                _ => {
                    return Err(Error::Parameter(format!(
                        "law `{s}` takes three parameters"
                    )))
                }
            },
            _ => return Err(Error::Parameter(format!("unknown law `{s}`"))),
        };
        Ok(law)
    }
}
