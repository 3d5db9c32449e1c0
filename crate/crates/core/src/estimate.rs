//! Estimators built from a probed workload sample: the Z-estimator of the
//! exponent curve, moment estimators, the likelihood estimator of `psi(xi)`
//! for subordinator input, threshold estimators, and simple parametric
//! identifications.

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::simulate::{simulate_until_qualified, ProbedSample, SimulationConfig};

/// Grid points closer than this to `psi_n` are dropped from a curve.
pub const PSI_EXCLUSION_RADIUS: f64 = 1e-3;
/// Number of scan points of the likelihood before local refinement.
pub const MLE_GRID_POINTS: usize = 256;
/// Default `psi_bar` returned when the threshold root equation has no solution.
pub const DEFAULT_PSI_BAR: f64 = 1e6;
/// Upper end of the likelihood search when the jump rate is not known.
pub const DEFAULT_PSI_SPAN: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PsiMethod {
    Mle,
    ThresholdMoment,
    Oracle,
}

impl fmt::Display for PsiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsiMethod::Mle => "mle",
            PsiMethod::ThresholdMoment => "threshold",
            PsiMethod::Oracle => "oracle",
        })
    }
}

impl FromStr for PsiMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mle" => Ok(PsiMethod::Mle),
            "threshold" | "threshold_moment" | "threshold-moment" => Ok(PsiMethod::ThresholdMoment),
            "oracle" => Ok(PsiMethod::Oracle),
            other => Err(Error::Config(format!("unknown psi method {other:?}"))),
        }
    }
}

/// Closed search interval for `psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSpace {
    pub lo: f64,
    pub hi: f64,
}

impl PsiSpace {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!("invalid psi space [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[xi (1 + 1e-6), xi + lambda]` when the jump rate is known,
    /// `[xi (1 + 1e-6), xi + 100]` otherwise.
    pub fn for_likelihood(xi: f64, jump_rate: Option<f64>) -> Self {
        let hi = match jump_rate {
            Some(l) if l > 0.0 => xi + l,
            _ => xi + DEFAULT_PSI_SPAN,
        };
        Self {
            lo: xi * (1.0 + 1e-6),
            hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiEstimate {
    pub value: f64,
    pub method: PsiMethod,
    pub space: PsiSpace,
    pub at_boundary: bool,
    /// Asymptotic variance of `sqrt(n) (psi_n - psi)`; only for the likelihood route.
    pub variance: Option<f64>,
}

impl PsiEstimate {
    /// A known `psi`, e.g. from the true model.
    pub fn oracle(value: f64) -> Self {
        Self {
            value,
            method: PsiMethod::Oracle,
            space: PsiSpace {
                lo: value,
                hi: value,
            },
            at_boundary: false,
            variance: None,
        }
    }

    /// Standard error for a sample of size `n`, when a variance is known.
    pub fn std_error(&self, n: usize) -> Option<f64> {
        self.variance.map(|v| (v / n as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiCurveEstimate {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub psi_used: PsiEstimate,
    pub n: usize,
    pub xi: f64,
    /// Grid points removed for lying too close to `psi_n`.
    pub dropped: Vec<f64>,
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate {
    pub tau: f64,
    pub m: usize,
    /// Probes used to collect `m` qualifying pairs.
    pub total_observations: usize,
    pub theta_hat: f64,
    /// Standard error of `theta_hat` from the qualifying increments.
    pub std_error: f64,
    pub bias_bound: f64,
    pub psi_tilde: f64,
    pub fallback_used: bool,
}

fn require_nonempty(sample: &ProbedSample) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            found: 0,
        });
    }
    Ok(())
}

/// Z-estimator of `phi(alpha)` given an estimate `psi_n` of `psi(xi)`.
pub fn z_estimate_phi(sample: &ProbedSample, psi_n: f64, alpha: f64) -> Result<f64> {
    require_nonempty(sample)?;
    if !(psi_n > 0.0) || !(alpha > 0.0) {
        return Err(Error::Input(format!(
            "need alpha > 0 and psi > 0, got alpha = {alpha}, psi = {psi_n}"
        )));
    }
    let base = mean_exp(&sample.values[..sample.n()], psi_n);
    Ok(z_from_base(sample, psi_n, alpha, base))
}

fn mean_exp(v: &[f64], rate: f64) -> f64 {
    v.iter().map(|x| (-rate * x).exp()).sum::<f64>() / v.len() as f64
}

fn z_from_base(sample: &ProbedSample, psi_n: f64, alpha: f64, base: f64) -> f64 {
    let n = sample.n() as f64;
    let xi = sample.xi;
    let v = &sample.values;
    let edge = (psi_n / (alpha * n)) * ((-alpha * v[v.len() - 1]).exp() - (-alpha * v[0]).exp());
    let denom = mean_exp(&v[1..], alpha);
    (xi * alpha / psi_n) * (edge + base) / denom
}

/// Evaluates the Z-estimator on a grid, skipping points near `psi_n`.
pub fn estimate_phi_curve(
    sample: &ProbedSample,
    psi: &PsiEstimate,
    alphas: &[f64],
) -> Result<PhiCurveEstimate> {
    require_nonempty(sample)?;
    let psi_n = psi.value;
    if !(psi_n > 0.0) {
        return Err(Error::Input(format!("psi must be positive, got {psi_n}")));
    }
    let base = mean_exp(&sample.values[..sample.n()], psi_n);
    let mut kept = Vec::with_capacity(alphas.len());
    let mut values = Vec::with_capacity(alphas.len());
    let mut dropped = Vec::new();
    for &a in alphas {
        if !(a > 0.0) {
            return Err(Error::Input(format!("alpha must be positive, got {a}")));
        }
        if (a - psi_n).abs() < PSI_EXCLUSION_RADIUS {
            warn!("dropping alpha = {a}: within {PSI_EXCLUSION_RADIUS} of psi = {psi_n}");
            dropped.push(a);
            continue;
        }
        kept.push(a);
        values.push(z_from_base(sample, psi_n, a, base));
    }
    Ok(PhiCurveEstimate {
        alphas: kept,
        values,
        psi_used: psi.clone(),
        n: sample.n(),
        xi: sample.xi,
        dropped,
        covariance: None,
    })
}

/// Moment estimators `(theta_n, phi''(0) estimate)`; `theta_n` estimates `E X(1)`.
pub fn estimate_moments(sample: &ProbedSample, psi_n: f64) -> Result<(f64, f64)> {
    require_nonempty(sample)?;
    let xi = sample.xi;
    let n = sample.n() as f64;
    let theta = -(xi / psi_n) * mean_exp(&sample.values[..sample.n()], psi_n);
    let k = theta / xi;
    let second = xi
        * sample
            .pairs()
            .map(|(p, c)| c * c - p * p - 2.0 * k * (p + (-psi_n * p).exp() / psi_n + k))
            .sum::<f64>()
        / n;
    Ok((theta, second))
}

/// `(xi / psi) e^{-psi v}`, the conditional idle probability.
#[inline]
pub fn idle_probability(v: f64, xi: f64, psi: f64) -> f64 {
    (xi / psi) * (-psi * v).exp()
}

/// Integrand of the information constant `I_xi` at workload `v`.
pub fn information_integrand(v: f64, xi: f64, psi: f64) -> f64 {
    let p = idle_probability(v, xi, psi);
    let w = 1.0 / psi + v;
    p * w * w / (1.0 - p)
}

/// Log-likelihood of `psi` for a subordinator sample.
pub fn log_likelihood(sample: &ProbedSample, psi: f64) -> f64 {
    let xi = sample.xi;
    let lx = xi.ln();
    let lp = psi.ln();
    sample
        .pairs()
        .zip(&sample.idle)
        .map(|((prev, _), &y)| {
            if y {
                lx - lp - psi * prev
            } else {
                (-idle_probability(prev, xi, psi)).ln_1p()
            }
        })
        .sum()
}

/// Derivative of [`log_likelihood`] in `psi`.
pub fn score(sample: &ProbedSample, psi: f64) -> f64 {
    let xi = sample.xi;
    sample
        .pairs()
        .zip(&sample.idle)
        .map(|((prev, _), &y)| {
            let p = idle_probability(prev, xi, psi);
            let yv = if y { 1.0 } else { 0.0 };
            (1.0 / psi + prev) * (p - yv) / (1.0 - p)
        })
        .sum()
}

/// Maximum likelihood estimate of `psi(xi)` over `space`.
pub fn mle_psi(sample: &ProbedSample, space: PsiSpace) -> Result<PsiEstimate> {
    if !sample.subordinator_exact {
        return Err(Error::MethodInapplicable(
            "likelihood estimation needs exact zeros (subordinator input)".into(),
        ));
    }
    require_nonempty(sample)?;
    let xi = sample.xi;
    if !(space.lo > xi) || !(space.hi > space.lo) {
        return Err(Error::Config(format!(
            "psi space [{}, {}] must satisfy xi = {xi} < lo < hi",
            space.lo, space.hi
        )));
    }
    let idle = sample.idle.iter().filter(|&&y| y).count();
    let finish = |value: f64, at_boundary: bool| PsiEstimate {
        value,
        method: PsiMethod::Mle,
        space,
        at_boundary,
        variance: plugin_variance(sample, value),
    };
    if idle == sample.n() {
        return Ok(finish(space.lo, true));
    }
    if idle == 0 {
        return Ok(finish(space.hi, true));
    }

    let k = MLE_GRID_POINTS;
    let step = (space.hi - space.lo) / (k - 1) as f64;
    let grid: Vec<f64> = (0..k).map(|i| space.lo + step * i as f64).collect();
    let ll: Vec<f64> = grid.iter().map(|&p| log_likelihood(sample, p)).collect();
    let best = ll
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(Error::NoConvergence {
            lo: space.lo,
            hi: space.hi,
        })?;
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(k - 1)];
    let x = golden_max(|p| log_likelihood(sample, p), a, b, 1e-9);
    let value = polish_score(sample, x, a, b);

    let tol = 1e-8 * sample.n() as f64;
    let interior = value > space.lo && value < space.hi && score(sample, value).abs() <= tol;
    if interior {
        return Ok(finish(value, false));
    }
    // No stationary point: take the better endpoint.
    let (lo_ll, hi_ll) = (ll[0], ll[k - 1]);
    let x_ll = log_likelihood(sample, value);
    if x_ll >= lo_ll.max(hi_ll) {
        let at_boundary = value <= space.lo + 1e-9 || value >= space.hi - 1e-9;
        return Ok(finish(value, at_boundary));
    }
    Ok(finish(if lo_ll >= hi_ll { space.lo } else { space.hi }, true))
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Bisection on the score inside `[a, b]` when it changes sign there.
fn polish_score(sample: &ProbedSample, x: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (a, b);
    let (s_lo, s_hi) = (score(sample, lo), score(sample, hi));
    if !(s_lo > 0.0 && s_hi < 0.0) {
        return x;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if score(sample, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (fl, fh) = (score(sample, lo), score(sample, hi));
    if fl.abs() <= fh.abs() {
        lo
    } else {
        hi
    }
}

/// `1 / I_xi` with the information replaced by its sample mean at `psi`.
fn plugin_variance(sample: &ProbedSample, psi: f64) -> Option<f64> {
    let n = sample.n();
    let info = sample.values[..n]
        .iter()
        .map(|&v| information_integrand(v, sample.xi, psi))
        .sum::<f64>()
        / n as f64;
    (info.is_finite() && info > 0.0).then(|| 1.0 / info)
}

/// Threshold estimate of `E X(1)` from a stored sample.
pub fn threshold_theta(sample: &ProbedSample, m: usize, tau: f64) -> Result<ThresholdEstimate> {
    threshold_theta_with(sample, m, tau, DEFAULT_PSI_BAR)
}

pub fn threshold_theta_with(
    sample: &ProbedSample,
    m: usize,
    tau: f64,
    psi_bar: f64,
) -> Result<ThresholdEstimate> {
    if m == 0 || !(tau > 0.0) {
        return Err(Error::Config(format!("need m >= 1 and tau > 0, got m = {m}, tau = {tau}")));
    }
    let xi = sample.xi;
    let mut incs = Vec::with_capacity(m);
    let mut used = 0;
    for (i, (prev, cur)) in sample.pairs().enumerate() {
        if prev >= tau {
            incs.push(cur - prev);
            if incs.len() == m {
                used = i + 1;
                break;
            }
        }
    }
    if incs.len() < m {
        return Err(Error::InsufficientData {
            needed: m,
            found: incs.len(),
        });
    }
    let mean = incs.iter().sum::<f64>() / m as f64;
    let theta_hat = xi * mean;
    let std_error = if m > 1 {
        let var = incs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        xi * (var / m as f64).sqrt()
    } else {
        f64::NAN
    };

    let observed = sample.prefix(used);
    let (psi_tilde, fallback_used) = threshold_psi(&observed, theta_hat, psi_bar)?;
    let eps = 0.01 / psi_tilde;
    let near_zero: Vec<f64> = observed
        .pairs()
        .filter(|(p, _)| *p <= eps)
        .map(|(p, c)| c - p)
        .collect();
    let drift_from_zero = if near_zero.is_empty() {
        1.0 / psi_tilde + theta_hat / xi
    } else {
        near_zero.iter().sum::<f64>() / near_zero.len() as f64
    }
    .max(0.0);
    let bias_bound = xi * drift_from_zero * (-psi_tilde * tau).exp();
    Ok(ThresholdEstimate {
        tau,
        m,
        total_observations: used,
        theta_hat,
        std_error,
        bias_bound,
        psi_tilde,
        fallback_used,
    })
}

/// Simulates from `cfg` until `m` pairs start at or above `tau`, then
/// applies [`threshold_theta`] to everything observed.
pub fn threshold_theta_streaming(
    cfg: &SimulationConfig,
    m: usize,
    tau: f64,
) -> Result<(ThresholdEstimate, ProbedSample)> {
    if m == 0 || !(tau > 0.0) {
        return Err(Error::Config(format!("need m >= 1 and tau > 0, got m = {m}, tau = {tau}")));
    }
    let sample = simulate_until_qualified(cfg, m, tau)?;
    let est = threshold_theta(&sample, m, tau)?;
    Ok((est, sample))
}

/// Root of `V_n - V_0 - n theta / xi = sum_i e^{-psi V_{i-1}} / psi`.
/// Returns `(psi_bar, true)` when the left side is not positive.
pub fn threshold_psi(sample: &ProbedSample, theta_hat: f64, psi_bar: f64) -> Result<(f64, bool)> {
    require_nonempty(sample)?;
    let n = sample.n();
    let v = &sample.values;
    let lhs = v[n] - v[0] - n as f64 * theta_hat / sample.xi;
    if !(lhs > 0.0) {
        return Ok((psi_bar, true));
    }
    let prev = &v[..n];
    let f = |p: f64| prev.iter().map(|x| (-p * x).exp()).sum::<f64>() / p - lhs;
    let (mut lo, mut hi) = (1.0, 1.0);
    while f(lo) <= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::NoConvergence { lo, hi });
        }
    }
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoConvergence { lo, hi });
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok((0.5 * (lo + hi), false))
}

/// Threshold route to `psi`: `theta` from pairs above `tau`, then the root equation.
pub fn estimate_psi_threshold(
    sample: &ProbedSample,
    m: usize,
    tau: f64,
    psi_bar: f64,
) -> Result<(PsiEstimate, ThresholdEstimate)> {
    let th = threshold_theta_with(sample, m, tau, psi_bar)?;
    let (value, fallback) = threshold_psi(sample, th.theta_hat, psi_bar)?;
    let psi = PsiEstimate {
        value,
        method: PsiMethod::ThresholdMoment,
        space: PsiSpace { lo: 0.0, hi: psi_bar },
        at_boundary: fallback,
        variance: None,
    };
    Ok((psi, th))
}

/// Compound Poisson identification from an estimated curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CpIdentification {
    pub lambda_hat: f64,
    pub alphas: Vec<f64>,
    /// Raw jump-size transform estimates.
    pub g_star: Vec<f64>,
    /// Indices whose raw value fell outside `[0, 1]`.
    pub out_of_range: Vec<usize>,
}

impl CpIdentification {
    pub fn g_star_clamped(&self) -> Vec<f64> {
        self.g_star.iter().map(|g| g.clamp(0.0, 1.0)).collect()
    }
}

/// `lambda = alpha_plus - phi(alpha_plus)` and `G*(alpha) = 1 + (phi(alpha) - alpha) / lambda`.
/// `alpha_plus` must be a point of the curve's grid.
pub fn identify_cp(curve: &PhiCurveEstimate, alpha_plus: f64) -> Result<CpIdentification> {
    let pos = curve
        .alphas
        .iter()
        .position(|&a| (a - alpha_plus).abs() <= 1e-12 * alpha_plus.max(1.0))
        .ok_or_else(|| Error::Input(format!("alpha_plus = {alpha_plus} is not on the curve grid")))?;
    let lambda_hat = alpha_plus - curve.values[pos];
    if !(lambda_hat > 0.0) {
        return Err(Error::Identification(format!(
            "estimated jump rate {lambda_hat} is not positive"
        )));
    }
    let g_star: Vec<f64> = curve
        .alphas
        .iter()
        .zip(&curve.values)
        .map(|(a, p)| 1.0 + (p - a) / lambda_hat)
        .collect();
    let out_of_range: Vec<usize> = g_star
        .iter()
        .enumerate()
        .filter(|(_, g)| !(0.0..=1.0).contains(*g))
        .map(|(i, _)| i)
        .collect();
    if !out_of_range.is_empty() {
        warn!(
            "{} jump transform estimates fall outside [0, 1]",
            out_of_range.len()
        );
    }
    Ok(CpIdentification {
        lambda_hat,
        alphas: curve.alphas.clone(),
        g_star,
        out_of_range,
    })
}

/// Drift and variance of Brownian input: `(d_hat, sigma2_hat)`.
pub fn fit_brownian(sample: &ProbedSample, psi_n: f64) -> Result<(f64, f64)> {
    if sample.n() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: sample.n(),
        });
    }
    estimate_moments(sample, psi_n)
}
