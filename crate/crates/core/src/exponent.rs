//! Laplace exponents of spectrally-positive Lévy net-input processes.
//!
//! The parametric family is the sum of three independent components plus a
//! linear drift:
//!
//! ```text
//! phi(a) = lambda * ((mu / (mu + a))^eta - 1)      compound Poisson, Gamma(eta, mu) jumps
//!        - d * a + sigma2 * a^2 / 2                 Brownian motion with drift d
//!        + beta * ln(gamma / (gamma + a))           Gamma subordinator
//! ```
//!
//! `phi(a) = ln E exp(-a X(1))`, so `phi(0) = 0` and `phi'(0) = -E X(1)`. The
//! unit service rate of the queue is folded into `d`: a queue fed by a pure
//! jump input and drained at rate one has `d = -1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Derivative order accepted by [`LevyExponentModel::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

impl TryFrom<u8> for Order {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Order::Value),
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(Error::Input(format!("derivative order {v} not supported"))),
        }
    }
}

/// Seven-parameter exponent model. Immutable once validated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyExponentModel {
    /// Compound Poisson jump rate.
    pub cp_rate: f64,
    /// Shape of the Gamma jump-size law.
    pub cp_shape: f64,
    /// Rate of the Gamma jump-size law.
    pub cp_rate_param: f64,
    /// Net linear drift per unit time (includes the unit output rate).
    pub bm_drift: f64,
    /// Brownian variance per unit time.
    pub bm_var: f64,
    /// Shape rate of the Gamma subordinator.
    pub gamma_shape: f64,
    /// Rate of the Gamma subordinator.
    pub gamma_rate: f64,
}

impl LevyExponentModel {
    /// Builds and validates a model from `(lambda, eta, mu, d, sigma2, beta, gamma)`.
    pub fn new(
        cp_rate: f64,
        cp_shape: f64,
        cp_rate_param: f64,
        bm_drift: f64,
        bm_var: f64,
        gamma_shape: f64,
        gamma_rate: f64,
    ) -> Result<Self> {
        let m = Self {
            cp_rate,
            cp_shape,
            cp_rate_param,
            bm_drift,
            bm_var,
            gamma_shape,
            gamma_rate,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_array(p: [f64; 7]) -> Result<Self> {
        Self::new(p[0], p[1], p[2], p[3], p[4], p[5], p[6])
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.cp_rate,
            self.cp_shape,
            self.cp_rate_param,
            self.bm_drift,
            self.bm_var,
            self.gamma_shape,
            self.gamma_rate,
        ]
    }

    /// M/M/1 queue: Poisson(`arrival_rate`) arrivals with Exp(`service_rate`) work.
    pub fn mm1(arrival_rate: f64, service_rate: f64) -> Result<Self> {
        Self::new(arrival_rate, 1.0, service_rate, -1.0, 0.0, 0.0, 0.0)
    }

    /// Reflected Brownian motion with drift `d` and variance `sigma2`.
    pub fn brownian(d: f64, sigma2: f64) -> Result<Self> {
        Self::new(0.0, 0.0, 0.0, d, sigma2, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        if self.cp_rate < 0.0 {
            return Err(Error::InvalidModel("cp_rate must be >= 0".into()));
        }
        if self.cp_rate > 0.0 && (self.cp_shape <= 0.0 || self.cp_rate_param <= 0.0) {
            return Err(Error::InvalidModel(
                "cp_shape and cp_rate_param must be > 0 when cp_rate > 0".into(),
            ));
        }
        if self.bm_var < 0.0 {
            return Err(Error::InvalidModel("bm_var must be >= 0".into()));
        }
        if self.gamma_shape < 0.0 {
            return Err(Error::InvalidModel("gamma_shape must be >= 0".into()));
        }
        if self.gamma_shape > 0.0 && self.gamma_rate <= 0.0 {
            return Err(Error::InvalidModel(
                "gamma_rate must be > 0 when gamma_shape > 0".into(),
            ));
        }
        Ok(())
    }

    fn has_cp(&self) -> bool {
        self.cp_rate > 0.0
    }

    fn has_gamma(&self) -> bool {
        self.gamma_shape > 0.0
    }

    /// `E X(1)`.
    pub fn mean_input(&self) -> f64 {
        let mut m = self.bm_drift;
        if self.has_cp() {
            m += self.cp_rate * self.cp_shape / self.cp_rate_param;
        }
        if self.has_gamma() {
            m += self.gamma_shape / self.gamma_rate;
        }
        m
    }

    pub fn is_stable(&self) -> bool {
        self.mean_input() < 0.0
    }

    /// No Brownian part and a pure unit drain, so the workload has an atom at
    /// zero and the idle-probability identities apply.
    pub fn is_subordinator(&self) -> bool {
        self.bm_var == 0.0 && self.bm_drift == -1.0
    }

    /// Infimum of the analytic continuation domain of `phi` on the negative axis.
    pub fn continuation_bound(&self) -> f64 {
        let mut b = f64::INFINITY;
        if self.has_cp() {
            b = b.min(self.cp_rate_param);
        }
        if self.has_gamma() {
            b = b.min(self.gamma_rate);
        }
        -b
    }

    /// `phi(alpha)`, valid for `alpha > continuation_bound()`.
    pub fn phi(&self, alpha: f64) -> f64 {
        let mut v = -self.bm_drift * alpha + 0.5 * self.bm_var * alpha * alpha;
        if self.has_cp() {
            let l = (alpha / self.cp_rate_param).ln_1p();
            v += self.cp_rate * (-self.cp_shape * l).exp_m1();
        }
        if self.has_gamma() {
            v -= self.gamma_shape * (alpha / self.gamma_rate).ln_1p();
        }
        v
    }

    pub fn phi_prime(&self, alpha: f64) -> f64 {
        let mut v = -self.bm_drift + self.bm_var * alpha;
        if self.has_cp() {
            let (eta, mu) = (self.cp_shape, self.cp_rate_param);
            let ratio = (-eta * (alpha / mu).ln_1p()).exp();
            v -= self.cp_rate * eta * ratio / (mu + alpha);
        }
        if self.has_gamma() {
            v -= self.gamma_shape / (self.gamma_rate + alpha);
        }
        v
    }

    pub fn phi_second(&self, alpha: f64) -> f64 {
        let mut v = self.bm_var;
        if self.has_cp() {
            let (eta, mu) = (self.cp_shape, self.cp_rate_param);
            let ratio = (-eta * (alpha / mu).ln_1p()).exp();
            v += self.cp_rate * eta * (eta + 1.0) * ratio / ((mu + alpha) * (mu + alpha));
        }
        if self.has_gamma() {
            let g = self.gamma_rate + alpha;
            v += self.gamma_shape / (g * g);
        }
        v
    }

    /// Checked evaluation of `phi` or one of its first two derivatives on `[0, inf)`.
    pub fn evaluate(&self, alpha: f64, order: Order) -> Result<f64> {
        self.validate()?;
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::Input(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        Ok(match order {
            Order::Value => self.phi(alpha),
            Order::First => self.phi_prime(alpha),
            Order::Second => self.phi_second(alpha),
        })
    }

    /// `phi'(0) = -E X(1)`, the stationary idle probability for subordinator input.
    pub fn phi_prime_zero(&self) -> f64 {
        -self.mean_input()
    }

    /// `phi''(0) = sigma2 + lambda eta (eta + 1) / mu^2 + beta / gamma^2`.
    pub fn phi_second_zero(&self) -> f64 {
        let mut v = self.bm_var;
        if self.has_cp() {
            let mu = self.cp_rate_param;
            v += self.cp_rate * self.cp_shape * (self.cp_shape + 1.0) / (mu * mu);
        }
        if self.has_gamma() {
            v += self.gamma_shape / (self.gamma_rate * self.gamma_rate);
        }
        v
    }

    /// The unique positive root of `phi(psi) = xi`.
    pub fn psi(&self, xi: f64) -> Result<f64> {
        psi(self, xi)
    }

    /// `psi'(xi) = 1 / phi'(psi(xi))`.
    pub fn psi_prime(&self, xi: f64) -> Result<f64> {
        let p = self.psi(xi)?;
        Ok(1.0 / self.phi_prime(p))
    }

    pub fn stationary_lst(&self, beta: f64) -> Result<f64> {
        stationary_lst(self, beta)
    }

    pub fn cramer_root(&self) -> Option<f64> {
        cramer_root(self)
    }
}

const PSI_MAX_ITER: usize = 400;

/// Inverts `phi` at `xi > 0`.
///
/// `phi` is convex with `phi(0) = 0 < xi`, so it crosses the level `xi` exactly
/// once on `(0, inf)`. The root is bracketed on `[0, u]` with `u` doubled until
/// `phi(u) > xi`, then located by Newton steps that fall back to bisection
/// whenever they leave the bracket.
pub fn psi(model: &LevyExponentModel, xi: f64) -> Result<f64> {
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::Input(format!("xi must be positive, got {xi}")));
    }
    let tol = 1e-10 * xi.max(1.0);
    let f = |a: f64| model.phi(a) - xi;

    let mut lo = 0.0;
    let mut hi = xi.max(1.0);
    let mut doublings = 0;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(Error::NoConvergence { lo, hi });
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..PSI_MAX_ITER {
        let fx = f(x);
        if fx.abs() <= 0.01 * tol {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = model.phi_prime(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if f(x).abs() <= tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence { lo, hi })
    }
}

/// Generalized Pollaczek-Khintchine transform `E exp(-beta V) = beta phi'(0) / phi(beta)`.
pub fn stationary_lst(model: &LevyExponentModel, beta: f64) -> Result<f64> {
    if !model.is_stable() {
        return Err(Error::Unstable {
            mean_input: model.mean_input(),
        });
    }
    if !(beta >= 0.0) {
        return Err(Error::Input(format!("beta must be >= 0, got {beta}")));
    }
    if beta < 1e-12 {
        return Ok(1.0);
    }
    Ok(beta * model.phi_prime_zero() / model.phi(beta))
}

/// Positive root `omega` of `phi(-omega) = 0` (equivalently `E exp(omega X(1)) = 1`).
///
/// Returns `None` when `phi(-.)` stays negative over the whole continuation
/// domain, e.g. for a deterministic drain.
pub fn cramer_root(model: &LevyExponentModel) -> Option<f64> {
    if !model.is_stable() {
        return None;
    }
    let g = |w: f64| model.phi(-w);
    let bound = -model.continuation_bound();

    // g(0) = 0 and g'(0) = -phi'(0) < 0: find the first probe where g turns positive.
    let mut lo = 0.0;
    let mut hi = None;
    if bound.is_finite() {
        for k in 1..=80 {
            let w = bound * (1.0 - 0.5f64.powi(k));
            if w <= lo {
                break;
            }
            if g(w) > 0.0 {
                hi = Some(w);
                break;
            }
            lo = w;
        }
    } else {
        let mut w = 1e-3;
        while w < 1e12 {
            if g(w) > 0.0 {
                hi = Some(w);
                break;
            }
            lo = w;
            w *= 2.0;
        }
    }
    let mut hi = hi?;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= 1e-13 || hi - lo <= f64::EPSILON * hi {
            lo = mid;
            hi = mid;
            break;
        }
        if gm > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let w = 0.5 * (lo + hi);
    if g(w).abs() <= 1e-10 {
        Some(w)
    } else {
        None
    }
}

/// Closed forms for the M/M/1 queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mm1Oracle {
    pub arrival_rate: f64,
    pub service_rate: f64,
}

impl Mm1Oracle {
    pub fn new(arrival_rate: f64, service_rate: f64) -> Result<Self> {
        if !(arrival_rate > 0.0 && service_rate > 0.0 && arrival_rate < service_rate) {
            return Err(Error::InvalidModel(format!(
                "M/M/1 needs 0 < lambda < mu, got lambda={arrival_rate}, mu={service_rate}"
            )));
        }
        Ok(Self {
            arrival_rate,
            service_rate,
        })
    }

    /// Recognizes an M/M/1 parameterization of the general model.
    pub fn from_model(m: &LevyExponentModel) -> Option<Self> {
        let is_mm1 = m.cp_rate > 0.0
            && m.cp_shape == 1.0
            && m.bm_drift == -1.0
            && m.bm_var == 0.0
            && m.gamma_shape == 0.0;
        if is_mm1 {
            Self::new(m.cp_rate, m.cp_rate_param).ok()
        } else {
            None
        }
    }

    pub fn model(&self) -> LevyExponentModel {
        LevyExponentModel::mm1(self.arrival_rate, self.service_rate)
            .expect("validated M/M/1 parameters")
    }

    pub fn load(&self) -> f64 {
        self.arrival_rate / self.service_rate
    }

    pub fn phi(&self, alpha: f64) -> f64 {
        let (l, m) = (self.arrival_rate, self.service_rate);
        alpha * (m + alpha - l) / (m + alpha)
    }

    pub fn psi(&self, xi: f64) -> f64 {
        let (l, m) = (self.arrival_rate, self.service_rate);
        let b = xi + l - m;
        0.5 * (b + (b * b + 4.0 * xi * m).sqrt())
    }

    /// Decay rate of the busy part of the stationary workload, `mu - lambda`.
    pub fn decay_rate(&self) -> f64 {
        self.service_rate - self.arrival_rate
    }

    /// Stationary atom at zero, `1 - rho`.
    pub fn idle_probability(&self) -> f64 {
        1.0 - self.load()
    }

    /// Density of the stationary workload on `v > 0`.
    pub fn density(&self, v: f64) -> f64 {
        let r = self.decay_rate();
        self.load() * r * (-r * v).exp()
    }

    /// Transform of the stationary mixture law.
    pub fn lst(&self, beta: f64) -> f64 {
        let r = self.decay_rate();
        self.idle_probability() + self.load() * r / (r + beta)
    }

    /// `P(V >= tau)` for `tau > 0`.
    pub fn tail(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            1.0
        } else {
            self.load() * (-self.decay_rate() * tau).exp()
        }
    }

    pub fn cramer_root(&self) -> f64 {
        self.decay_rate()
    }
}
