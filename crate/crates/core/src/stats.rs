//! Statistical validation battery: MAE, Brown–Forsythe Levene, two-sample
//! Kolmogorov–Smirnov, Pearson with a t-test p-value, the inverse normal CDF
//! and Q-Q plot data. Special functions are implemented here so the crate has
//! no numerical dependency.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("probability {0} outside (0, 1)")]
    Domain(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub group_sizes: Vec<usize>,
}

impl TestResult {
    /// `name,statistic,p_value,n`
    pub fn line(&self, name: &str) -> String {
        format!("{name},{},{},{}", fmt_num(self.statistic), fmt_num(self.p_value), self.n)
    }
}

/// Shortest round-trip text, switching to exponent form outside
/// `[1e-4, 1e15)` so tiny p-values stay readable.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn mae(predictions: &[f64], actuals: &[f64]) -> Result<f64, StatsError> {
    check_paired(predictions, actuals)?;
    let total: f64 = predictions.iter().zip(actuals).map(|(p, a)| (p - a).abs()).sum();
    Ok(total / predictions.len() as f64)
}

fn check_paired(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn median(v: &[f64]) -> Result<f64, StatsError> {
    if v.is_empty() {
        return Err(StatsError::Empty);
    }
    let s = sorted(v);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median-centred Levene test (Brown–Forsythe) for two groups.
pub fn levene_median(group1: &[f64], group2: &[f64]) -> Result<TestResult, StatsError> {
    for g in [group1, group2] {
        if g.len() < 2 {
            return Err(StatsError::TooFew { needed: 2, got: g.len() });
        }
    }
    let devs: Vec<Vec<f64>> = [group1, group2]
        .iter()
        .map(|g| {
            let m = median(g).expect("non-empty");
            g.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    let n_total: usize = devs.iter().map(Vec::len).sum();
    let k = devs.len();
    let grand = devs.iter().flatten().sum::<f64>() / n_total as f64;
    let means: Vec<f64> = devs.iter().map(|d| mean(d)).collect();
    let between: f64 = devs.iter().zip(&means).map(|(d, m)| d.len() as f64 * (m - grand).powi(2)).sum();
    let within: f64 = devs
        .iter()
        .zip(&means)
        .map(|(d, m)| d.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let df1 = (k - 1) as f64;
    let df2 = (n_total - k) as f64;
    let (statistic, p_value) = if within == 0.0 {
        if between == 0.0 {
            return Err(StatsError::Degenerate("all absolute deviations are equal"));
        }
        (f64::INFINITY, 0.0)
    } else {
        let w = (between / df1) / (within / df2);
        (w, f_sf(w, df1, df2))
    };
    if !statistic.is_finite() {
        return Err(StatsError::Degenerate("zero within-group spread"));
    }
    Ok(TestResult {
        statistic,
        p_value,
        n: n_total,
        group_sizes: vec![group1.len(), group2.len()],
    })
}

/// Two-sample KS with the asymptotic Kolmogorov p-value.
pub fn ks_two_sample(group1: &[f64], group2: &[f64]) -> Result<TestResult, StatsError> {
    if group1.is_empty() || group2.is_empty() {
        return Err(StatsError::Empty);
    }
    let a = sorted(group1);
    let b = sorted(group2);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let ne = n1 * n2 / (n1 + n2);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        n: a.len() + b.len(),
        group_sizes: vec![a.len(), b.len()],
    })
}

/// `Q(λ) = 2 Σ (−1)^(j−1) exp(−2 j² λ²)`. Below λ = 0.2 the series has not
/// started to converge and the true value exceeds 1 − 1e-20, so 1 is returned.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    check_paired(x, y)?;
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFew { needed: 3, got: n });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate("constant vector has undefined correlation"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        t_two_sided(t, df)
    };
    Ok(TestResult {
        statistic: r,
        p_value,
        n,
        group_sizes: vec![n],
    })
}

/// Inverse standard normal CDF (Acklam's rational approximation with one
/// Halley refinement step).
pub fn norm_quantile(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Domain(p));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // One Halley step against an accurate normal CDF.
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Standard normal CDF via the regularized incomplete gamma function,
/// evaluated on the tail side to keep relative accuracy.
pub fn norm_cdf(x: f64) -> f64 {
    let half_tail = 0.5 * reg_upper_gamma(0.5, x * x / 2.0);
    if x < 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Standardized ordered residuals against normal quantiles at `(i − 0.5)/n`.
/// Standardization uses the sample standard deviation (n − 1).
pub fn qq_data(residuals: &[f64]) -> Result<Vec<(f64, f64)>, StatsError> {
    let n = residuals.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let m = mean(residuals);
    let var = residuals.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(StatsError::Degenerate("constant residuals"));
    }
    let sd = var.sqrt();
    sorted(residuals)
        .into_iter()
        .enumerate()
        .map(|(i, r)| Ok((norm_quantile((i as f64 + 0.5) / n as f64)?, (r - m) / sd)))
        .collect()
}

/// Fraction of values inside `[-half_width, half_width]`.
pub fn fraction_within(values: &[f64], half_width: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let inside = values.iter().filter(|v| v.abs() <= half_width).count();
    Ok(inside as f64 / values.len() as f64)
}

pub fn write_qq_csv(path: &Path, pairs: &[(f64, f64)]) -> Result<(), StatsError> {
    let io = |source| StatsError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "theoretical,observed").map_err(io)?;
    for (t, o) in pairs {
        writeln!(w, "{t},{o}").map_err(io)?;
    }
    w.flush().map_err(io)
}

// ---- special functions ----

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
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
        // Reflection.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

/// Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
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
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized upper incomplete gamma Q(a, x): series below a + 1,
/// continued fraction above.
pub fn reg_upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        1.0 - sum * ln_front.exp()
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
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
        ln_front.exp() * h
    }
}

/// Upper tail of the F(d1, d2) distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    reg_inc_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0).clamp(0.0, 1.0)
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    reg_inc_beta(df / (df + t * t), df / 2.0, 0.5).clamp(0.0, 1.0)
}
