//! Kolmogorov–Smirnov tests and small summary helpers.

use std::f64::consts::PI;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(K > λ)` for the limiting Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // P(K ≤ λ) = √(2π)/λ Σ_{j≥1} exp(-(2j-1)² π² / (8 λ²))
        let c = PI * PI / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for j in 1..=100 {
            let o = (2 * j - 1) as f64;
            let term = (-o * o * c).exp();
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        (1.0 - (2.0 * PI).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        // P(K > λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²)
        let mut sum = 0.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            if j % 2 == 1 {
                sum += term;
            } else {
                sum -= term;
            }
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Input("sample contains NaN".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// One-sample KS statistic against a continuous distribution function, with
/// the asymptotic p-value at `√n·D`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsOutcome> {
    if samples.is_empty() {
        return Err(Error::Input("empty sample".into()));
    }
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsOutcome {
        statistic: d,
        p_value: kolmogorov_sf(n.sqrt() * d),
        sample_size: v.len(),
    })
}

/// Two-sample KS statistic with the asymptotic p-value at
/// `√(nm/(n+m))·D`. Ties are handled by stepping past equal values.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsOutcome> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Input("empty sample".into()));
    }
    let a = sorted(xs)?;
    let b = sorted(ys)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    Ok(KsOutcome {
        statistic: d,
        p_value: kolmogorov_sf(en * d),
        sample_size: a.len() + b.len(),
    })
}

/// Mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_branches_meet() {
        let a = kolmogorov_sf(1.18 - 1e-12);
        let b = kolmogorov_sf(1.18);
        assert!((a - b).abs() < 1e-10);
        // tabulated critical values
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn one_sample_against_uniform() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.0005).abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn constant_sample_against_normal() {
        let r = ks_one_sample(&[0.0; 100], normal_cdf).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-12);
        assert!(r.p_value < 1e-20);
    }

    #[test]
    fn two_sample_identical_and_disjoint() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&xs, &xs).unwrap();
        assert_eq!(r.statistic, 0.0);
        let ys: Vec<f64> = (200..300).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&xs, &ys).unwrap().statistic, 1.0);
        assert!(ks_two_sample(&[], &ys).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert!((quantile_sorted(&v, 0.9) - 3.7).abs() < 1e-12);
    }
}
