//! Asymptotic variance constants of the exponent estimators, and the
//! stationary expectations they depend on.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimate::{idle_probability, information_integrand, PsiMethod};
use crate::exponent::{LevyExponentModel, Mm1Oracle};
use crate::simulate::{fmt_f64, stream_rng, ProbedSample};

/// Relative radius around `phi(alpha) = xi` inside which constants are refused.
pub const SINGULARITY_GUARD: f64 = 1e-3;
/// Absolute tolerance of the exact M/M/1 quadrature.
pub const QUAD_TOL: f64 = 1e-10;
pub const DEFAULT_RESAMPLES: usize = 500;

/// Empirical stationary law built from a probed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginBackend {
    pub values: Vec<f64>,
    pub resamples: usize,
    pub resample_size: usize,
    pub seed: u64,
}

impl PluginBackend {
    /// Defaults: 500 resamples of size `n / 2`.
    pub fn from_sample(sample: &ProbedSample, seed: u64) -> Self {
        Self::from_values(sample.values.clone(), seed)
    }

    pub fn from_values(values: Vec<f64>, seed: u64) -> Self {
        let resample_size = (values.len() / 2).max(1);
        Self {
            values,
            resamples: DEFAULT_RESAMPLES,
            resample_size,
            seed,
        }
    }

    /// Evaluates `stat` on each bootstrap resample, resample `b` drawing from
    /// stream `b`. Results come back in resample order.
    pub fn bootstrap<F>(&self, stat: F) -> Result<Bootstrap>
    where
        F: Fn(&Backend) -> Result<f64> + Sync,
    {
        if self.values.is_empty() {
            return Err(Error::InsufficientData {
                needed: 1,
                found: 0,
            });
        }
        let draws: Vec<f64> = (0..self.resamples as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(self.seed, b);
                let n = self.values.len();
                let values = (0..self.resample_size)
                    .map(|_| self.values[rng.random_range(0..n)])
                    .collect();
                stat(&Backend::Plugin(PluginBackend {
                    values,
                    resamples: 0,
                    resample_size: 0,
                    seed: 0,
                }))
            })
            .collect::<Result<_>>()?;
        let k = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / k;
        let sd = if draws.len() > 1 {
            (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            f64::NAN
        };
        Ok(Bootstrap { mean, sd, draws })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub mean: f64,
    pub sd: f64,
    pub draws: Vec<f64>,
}

/// Source of expectations under the stationary workload law.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    /// Exact M/M/1 law (atom at zero plus exponential density).
    ExactMm1(Mm1Oracle),
    /// Sample means over observed workloads.
    Plugin(PluginBackend),
    /// Only transforms available from the Pollaczek-Khintchine formula.
    GpkOnly(LevyExponentModel),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::ExactMm1(_) => "exact-mm1",
            Backend::Plugin(_) => "plugin",
            Backend::GpkOnly(_) => "gpk",
        }
    }

    /// Errors when the backend describes a different model.
    pub fn check_model(&self, model: &LevyExponentModel) -> Result<()> {
        match self {
            Backend::ExactMm1(o) if o.model() != *model => Err(Error::Backend(format!(
                "exact M/M/1 backend ({}, {}) does not match the model",
                o.arrival_rate, o.service_rate
            ))),
            Backend::GpkOnly(m) if m != model => {
                Err(Error::Backend("transform backend built for another model".into()))
            }
            _ => Ok(()),
        }
    }

    /// `E f(V)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        match self {
            Backend::ExactMm1(o) => {
                let rho = o.load();
                let w = o.decay_rate();
                let atom = (1.0 - rho) * f(0.0);
                let body = integrate(|v| f(v) * rho * w * (-w * v).exp(), 0.0, 40.0 / w, QUAD_TOL);
                Ok(atom + body)
            }
            Backend::Plugin(p) => {
                if p.values.is_empty() {
                    return Err(Error::InsufficientData {
                        needed: 1,
                        found: 0,
                    });
                }
                Ok(p.values.iter().map(|&v| f(v)).sum::<f64>() / p.values.len() as f64)
            }
            Backend::GpkOnly(_) => Err(Error::Backend(
                "general expectations need the exact-mm1 or plugin backend".into(),
            )),
        }
    }

    /// `E e^{-beta V}`.
    pub fn lst(&self, beta: f64) -> Result<f64> {
        match self {
            Backend::ExactMm1(o) => Ok(o.lst(beta)),
            Backend::GpkOnly(m) => m.stationary_lst(beta),
            Backend::Plugin(_) => self.expect(|v| (-beta * v).exp()),
        }
    }

    /// `E[V e^{-beta V}]`.
    pub fn lst_weighted(&self, beta: f64) -> Result<f64> {
        let gpk = |m: &LevyExponentModel| {
            if beta < 1e-12 {
                return Ok(-m.phi_second_zero() / (2.0 * m.mean_input()));
            }
            let c = m.phi_prime_zero();
            let p = m.phi(beta);
            Ok(c * (beta * m.phi_prime(beta) - p) / (p * p))
        };
        match self {
            Backend::ExactMm1(o) => gpk(&o.model()),
            Backend::GpkOnly(m) => {
                if !m.is_stable() {
                    return Err(Error::Unstable {
                        mean_input: m.mean_input(),
                    });
                }
                gpk(m)
            }
            Backend::Plugin(_) => self.expect(|v| v * (-beta * v).exp()),
        }
    }

    /// `(E[e^{-rate V} 1(V >= tau)], P(V >= tau))`.
    pub fn tail_expect(&self, rate: f64, tau: f64) -> Result<(f64, f64)> {
        match self {
            Backend::ExactMm1(o) => {
                if tau <= 0.0 {
                    return Ok((o.lst(rate), 1.0));
                }
                let rho = o.load();
                let w = o.decay_rate();
                Ok((
                    rho * w * (-(rate + w) * tau).exp() / (rate + w),
                    rho * (-w * tau).exp(),
                ))
            }
            Backend::Plugin(p) => {
                let mut num = 0.0;
                let mut count = 0usize;
                for &v in &p.values {
                    if v >= tau {
                        num += (-rate * v).exp();
                        count += 1;
                    }
                }
                if count == 0 {
                    return Err(Error::InsufficientTail { tau });
                }
                let n = p.values.len() as f64;
                Ok((num / n, count as f64 / n))
            }
            Backend::GpkOnly(_) => Err(Error::Backend(
                "indicator expectations need the exact-mm1 or plugin backend".into(),
            )),
        }
    }
}

// Gauss-Kronrod 7-15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(&f, a, b, tol, 40)
}

fn guard(model: &LevyExponentModel, xi: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Input(format!("alpha must be positive, got {alpha}")));
    }
    let phi = model.phi(alpha);
    if (phi - xi).abs() <= SINGULARITY_GUARD * xi {
        return Err(Error::Singular { alpha, phi, xi });
    }
    Ok(phi)
}

fn require_stable(model: &LevyExponentModel) -> Result<()> {
    if !model.is_stable() {
        return Err(Error::Unstable {
            mean_input: model.mean_input(),
        });
    }
    Ok(())
}

/// `(dJ_psi, dJ_phi)`: derivatives of the limiting estimating equation in
/// `psi` and in `phi` at the true values.
pub fn partial_j(model: &LevyExponentModel, xi: f64, alpha: f64) -> Result<(f64, f64)> {
    require_stable(model)?;
    let phi = guard(model, xi, alpha)?;
    let psi = model.psi(xi)?;
    let c = model.phi_prime_zero();
    let d_psi = -alpha * c * model.phi_prime(psi) / (xi * (xi - phi));
    let d_phi = -alpha * c / (phi * (xi - phi));
    Ok((d_psi, d_phi))
}

/// Limit of `n Var J_n` at the true `psi` and `phi(alpha)`.
pub fn sigma_alpha_sq(model: &LevyExponentModel, xi: f64, alpha: f64) -> Result<f64> {
    require_stable(model)?;
    let phi = guard(model, xi, alpha)?;
    let psi = model.psi(xi)?;
    let c = model.phi_prime_zero();
    let r = phi / xi;
    let bracket = (r * r - 2.0 * r) / model.phi(2.0 * alpha) - alpha / (psi * model.phi(2.0 * psi))
        + (alpha + psi) / (psi * model.phi(alpha + psi));
    Ok(2.0 * xi * xi * alpha * c / ((xi - phi) * (xi - phi)) * bracket)
}

/// Limit of `n Cov(J_n(alpha), J_n(beta))`.
pub fn sigma_j(model: &LevyExponentModel, xi: f64, alpha: f64, beta: f64) -> Result<f64> {
    require_stable(model)?;
    let pa = guard(model, xi, alpha)?;
    let pb = guard(model, xi, beta)?;
    let psi = model.psi(xi)?;
    let c = model.phi_prime_zero();
    let s = alpha + beta;
    let first = s * c / model.phi(s);
    let a = xi * xi * c / ((xi - pa) * (xi - pb));
    let bracket = s / model.phi(s) + 2.0 * alpha * beta / (psi * model.phi(2.0 * psi))
        - beta * (alpha + psi) / (psi * model.phi(alpha + psi))
        - alpha * (beta + psi) / (psi * model.phi(beta + psi));
    Ok(first - a * bracket)
}

/// Limit of `E e^{-alpha V_i - beta V_{i-1}}` along the probed chain.
pub fn joint_lst_limit(model: &LevyExponentModel, xi: f64, alpha: f64, beta: f64) -> Result<f64> {
    require_stable(model)?;
    let pa = guard(model, xi, alpha)?;
    let psi = model.psi(xi)?;
    let c = model.phi_prime_zero();
    let gpk = |x: f64| {
        if x < 1e-12 {
            1.0 / c
        } else {
            x / model.phi(x)
        }
    };
    Ok(xi * c / (xi - pa) * (gpk(alpha + beta) - alpha / psi * gpk(psi + beta)))
}

fn require_subordinator(model: &LevyExponentModel) -> Result<()> {
    if !model.is_subordinator() {
        return Err(Error::MethodInapplicable(
            "the likelihood constants need subordinator input with unit drain".into(),
        ));
    }
    Ok(())
}

/// Information constant `I_xi` of the likelihood estimator.
pub fn i_xi(backend: &Backend, model: &LevyExponentModel, xi: f64) -> Result<f64> {
    require_subordinator(model)?;
    require_stable(model)?;
    backend.check_model(model)?;
    let psi = model.psi(xi)?;
    backend.expect(|v| information_integrand(v, xi, psi))
}

/// Limit of `n Cov(J_n(alpha), psi_n)` for the likelihood estimator.
pub fn sigma_alpha_psi_sq(
    backend: &Backend,
    model: &LevyExponentModel,
    xi: f64,
    alpha: f64,
) -> Result<f64> {
    let info = i_xi(backend, model, xi)?;
    sigma_alpha_psi_with(backend, model, xi, alpha, info)
}

fn sigma_alpha_psi_with(
    backend: &Backend,
    model: &LevyExponentModel,
    xi: f64,
    alpha: f64,
    info: f64,
) -> Result<f64> {
    let phi = guard(model, xi, alpha)?;
    let psi = model.psi(xi)?;
    let gap = (xi - phi) / xi;
    let e = backend.expect(|v| {
        let p = idle_probability(v, xi, psi);
        let q = (-psi * v).exp();
        (1.0 / psi + v) * q / (1.0 - p) * ((-alpha * v).exp() - alpha / psi * q - gap)
    })?;
    Ok(xi * xi / (psi * (xi - phi) * info) * e)
}

/// Asymptotic variance of `sqrt(n) (phi_hat(alpha) - phi(alpha))` with the
/// likelihood estimate of `psi`.
pub fn sigma_alpha_xi_sq(
    backend: &Backend,
    model: &LevyExponentModel,
    xi: f64,
    alpha: f64,
) -> Result<f64> {
    let info = i_xi(backend, model, xi)?;
    let s = PerAlpha::compute(backend, model, xi, alpha, Some(info))?;
    Ok(s.sigma_alpha_xi_sq.expect("likelihood constants present"))
}

/// Constants at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PerAlpha {
    pub alpha: f64,
    pub phi_true: f64,
    pub sigma_alpha_sq: f64,
    pub dj_psi: f64,
    pub dj_phi: f64,
    pub sigma_alpha_psi_sq: Option<f64>,
    pub sigma_alpha_xi_sq: Option<f64>,
}

impl PerAlpha {
    /// `info = Some(I_xi)` includes the likelihood-estimator terms.
    fn compute(
        backend: &Backend,
        model: &LevyExponentModel,
        xi: f64,
        alpha: f64,
        info: Option<f64>,
    ) -> Result<Self> {
        let sa = sigma_alpha_sq(model, xi, alpha)?;
        let (dj_psi, dj_phi) = partial_j(model, xi, alpha)?;
        let (sap, sax) = match info {
            Some(info) => {
                let sap = sigma_alpha_psi_with(backend, model, xi, alpha, info)?;
                let sax = (sa + 2.0 * dj_psi * sap + dj_psi * dj_psi / info) / (dj_phi * dj_phi);
                (Some(sap), Some(sax))
            }
            None => (None, None),
        };
        Ok(Self {
            alpha,
            phi_true: model.phi(alpha),
            sigma_alpha_sq: sa,
            dj_psi,
            dj_phi,
            sigma_alpha_psi_sq: sap,
            sigma_alpha_xi_sq: sax,
        })
    }
}

/// Full set of constants on an `alpha` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub xi: f64,
    pub psi: f64,
    pub backend: &'static str,
    pub psi_method: PsiMethod,
    pub rows: Vec<PerAlpha>,
    /// `1 / I_xi` (likelihood route only).
    pub sigma_xi_sq: Option<f64>,
    /// Pairwise `n Cov(J_n(alpha_i), J_n(alpha_j))`.
    pub sigma_j: Vec<Vec<f64>>,
    /// Covariance of the estimated curve (likelihood route only).
    pub sigma: Option<Vec<Vec<f64>>>,
}

impl AsymptoticReport {
    /// For `PsiMethod::Mle` the likelihood terms are included; for the
    /// oracle route the curve covariance is the `J` covariance rescaled by
    /// `dJ_phi`; for the threshold route it is omitted.
    pub fn compute(
        backend: &Backend,
        model: &LevyExponentModel,
        xi: f64,
        alphas: &[f64],
        psi_method: PsiMethod,
    ) -> Result<Self> {
        require_stable(model)?;
        backend.check_model(model)?;
        let psi = model.psi(xi)?;
        let info = match psi_method {
            PsiMethod::Mle => Some(i_xi(backend, model, xi)?),
            _ => None,
        };
        let rows: Vec<PerAlpha> = alphas
            .iter()
            .map(|&a| PerAlpha::compute(backend, model, xi, a, info))
            .collect::<Result<_>>()?;
        let p = rows.len();
        let mut sj = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in i..p {
                let v = if i == j {
                    rows[i].sigma_alpha_sq
                } else {
                    sigma_j(model, xi, rows[i].alpha, rows[j].alpha)?
                };
                sj[i][j] = v;
                sj[j][i] = v;
            }
        }
        let sigma = match (psi_method, info) {
            (PsiMethod::Mle, Some(info)) => {
                let mut s = vec![vec![0.0; p]; p];
                for i in 0..p {
                    for j in i..p {
                        let (a, b) = (&rows[i], &rows[j]);
                        let v = if i == j {
                            a.sigma_alpha_xi_sq.unwrap()
                        } else {
                            (sj[i][j]
                                + b.dj_psi * a.sigma_alpha_psi_sq.unwrap()
                                + a.dj_psi * b.sigma_alpha_psi_sq.unwrap()
                                + a.dj_psi * b.dj_psi / info)
                                / (a.dj_phi * b.dj_phi)
                        };
                        s[i][j] = v;
                        s[j][i] = v;
                    }
                }
                Some(s)
            }
            (PsiMethod::Oracle, _) => Some(
                (0..p)
                    .map(|i| {
                        (0..p)
                            .map(|j| sj[i][j] / (rows[i].dj_phi * rows[j].dj_phi))
                            .collect()
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(Self {
            xi,
            psi,
            backend: backend.name(),
            psi_method,
            rows,
            sigma_xi_sq: info.map(|i| 1.0 / i),
            sigma_j: sj,
            sigma,
        })
    }

    /// `Sigma_ij / sqrt(Sigma_ii Sigma_jj)`.
    pub fn correlation(&self, i: usize, j: usize) -> Option<f64> {
        let s = self.sigma.as_ref()?;
        Some(s[i][j] / (s[i][i] * s[j][j]).sqrt())
    }

    /// Half-widths `z_{1 - delta/2} sqrt(Sigma_ii / n)` of pointwise intervals.
    pub fn ci_half_widths(&self, n: usize, delta: f64) -> Option<Vec<f64>> {
        let z = normal_quantile(1.0 - delta / 2.0);
        let s = self.sigma.as_ref()?;
        Some((0..s.len()).map(|i| z * (s[i][i] / n as f64).sqrt()).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "alpha,phi_true,sigma_alpha_sq,dJ_psi,dJ_phi,sigma_alpha_psi_sq,sigma_alpha_xi_sq"
        )?;
        for (i, r) in self.rows.iter().enumerate() {
            // Without the likelihood terms the diagonal of Sigma (if any) is reported.
            let sax = r
                .sigma_alpha_xi_sq
                .or_else(|| self.sigma.as_ref().map(|s| s[i][i]))
                .unwrap_or(f64::NAN);
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_f64(r.alpha),
                fmt_f64(r.phi_true),
                fmt_f64(r.sigma_alpha_sq),
                fmt_f64(r.dj_psi),
                fmt_f64(r.dj_phi),
                fmt_f64(r.sigma_alpha_psi_sq.unwrap_or(f64::NAN)),
                fmt_f64(sax),
            )?;
        }
        Ok(())
    }

    /// Square matrix CSV of `Sigma`, headed by the grid.
    pub fn write_sigma_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let Some(s) = &self.sigma else {
            return Err(Error::MethodInapplicable(format!(
                "no curve covariance for psi method {}",
                self.psi_method
            )));
        };
        let header: Vec<String> = self.rows.iter().map(|r| fmt_f64(r.alpha)).collect();
        writeln!(w, "alpha,{}", header.join(","))?;
        for (i, row) in s.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            writeln!(w, "{},{}", header[i], cells.join(","))?;
        }
        Ok(())
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `(theta(tau), b)`: the limit of the threshold estimator and its bias
/// `b = theta(tau) + phi'(0)`.
pub fn theta_tau_asymptotic(
    backend: &Backend,
    model: &LevyExponentModel,
    xi: f64,
    tau: f64,
) -> Result<(f64, f64)> {
    require_stable(model)?;
    backend.check_model(model)?;
    let psi = model.psi(xi)?;
    let (num, prob) = backend.tail_expect(psi, tau)?;
    if !(prob > 0.0) {
        return Err(Error::InsufficientTail { tau });
    }
    let b = xi * num / (psi * prob);
    Ok((b - model.phi_prime_zero(), b))
}

/// `m e^{omega tau}`, a rough guide to the probes needed for `m` qualifying pairs.
pub fn expected_sample_size(model: &LevyExponentModel, m: usize, tau: f64) -> Result<f64> {
    let omega = model.cramer_root().ok_or_else(|| {
        Error::MethodInapplicable("the Cramer root is undefined for this model".into())
    })?;
    Ok(m as f64 * (omega * tau).exp())
}
