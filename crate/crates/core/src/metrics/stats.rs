//! Aggregation and significance testing.
//!
//! The paired two-tailed t-test evaluates Student's t tail probability with
//! the regularized incomplete beta function (continued fraction, Lentz's
//! method) so the crate carries no statistics dependency.

use super::{MetricsError, ScoreVector};
use serde::Serialize;

/// Arithmetic mean and sample standard deviation (n-1 divisor).
/// A singleton vector yields std = 0 by convention.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64), MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyVector);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    /// All differences identical and nonzero: t is unbounded and p is 0.
    pub degenerate_variance: bool,
}

/// Paired two-tailed t-test on two id-aligned score vectors.
pub fn paired_t_test(a: &ScoreVector, b: &ScoreVector) -> Result<TTestResult, MetricsError> {
    if a.ids != b.ids {
        if a.len() != b.len() {
            return Err(MetricsError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        return Err(MetricsError::MisalignedIds);
    }
    paired_t_test_values(&a.values, &b.values)
}

/// Paired t-test on raw value slices; alignment is the caller's problem.
pub fn paired_t_test_values(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricsError::TooFewPairs { n });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_std(&diffs)?;
    let df = n - 1;
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult { t: 0.0, df, p: 1.0, degenerate_variance: false }
        } else {
            TTestResult {
                t: f64::INFINITY.copysign(mean),
                df,
                p: 0.0,
                degenerate_variance: true,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let p = student_t_two_tailed_p(t, df);
    Ok(TTestResult { t, df, p, degenerate_variance: false })
}

/// Two-tailed tail probability of Student's t with `df` degrees of freedom:
/// p = I_x(df/2, 1/2) with x = df / (df + t^2).
pub fn student_t_two_tailed_p(t: f64, df: usize) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let df = df as f64;
    let x = df / (df + t * t);
    reg_inc_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// ln Gamma(z) for z > 0, Lanczos approximation.
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut sum = 1.000_000_000_190_015;
    for (i, c) in COEFFS.iter().enumerate() {
        sum += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.506_628_274_631_000_5 * sum / z).ln()
}

/// Regularized incomplete beta I_x(a, b) via the continued fraction,
/// using the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) for fast convergence.
fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// Continued fraction for the incomplete beta (Lentz's method).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-14;
    const TINY: f64 = 1e-30;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
