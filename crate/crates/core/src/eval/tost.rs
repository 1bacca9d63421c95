//! Paired two one-sided t-tests and the Student-t distribution they need.

use serde::Serialize;

use crate::error::{Error, Result};

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularised incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TostResult {
    pub equivalent: bool,
    /// p-value of H₀: mean(a − b) ≤ −bound.
    pub p_lower: f64,
    /// p-value of H₀: mean(a − b) ≥ +bound.
    pub p_upper: f64,
    pub t_lower: f64,
    pub t_upper: f64,
    pub mean_diff: f64,
    pub df: usize,
}

/// Paired TOST on `a − b`: equivalent when both one-sided nulls are
/// rejected at `alpha`, i.e. `max(p_lower, p_upper) < alpha`.
///
/// With zero variance of the differences the verdict is `|mean| < bound`
/// and each p-value is 0 or 1 accordingly.
pub fn paired_tost(a: &[f64], b: &[f64], bound: f64, alpha: f64) -> Result<TostResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidConfig(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidConfig("paired TOST needs at least two pairs".into()));
    }
    if bound.is_nan() || bound <= 0.0 || alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidConfig(format!("bound {bound} / alpha {alpha} out of range")));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    if var == 0.0 {
        let p_lower = if mean > -bound { 0.0 } else { 1.0 };
        let p_upper = if mean < bound { 0.0 } else { 1.0 };
        let inf = |p: f64, sign: f64| if p == 0.0 { sign * f64::INFINITY } else { -sign * f64::INFINITY };
        return Ok(TostResult {
            equivalent: mean.abs() < bound,
            p_lower,
            p_upper,
            t_lower: inf(p_lower, 1.0),
            t_upper: inf(p_upper, -1.0),
            mean_diff: mean,
            df,
        });
    }
    let se = (var / n).sqrt();
    let t_lower = (mean + bound) / se;
    let t_upper = (mean - bound) / se;
    let p_lower = 1.0 - student_t_cdf(t_lower, df as f64);
    let p_upper = student_t_cdf(t_upper, df as f64);
    Ok(TostResult { equivalent: p_lower.max(p_upper) < alpha, p_lower, p_upper, t_lower, t_upper, mean_diff: mean, df })
}
