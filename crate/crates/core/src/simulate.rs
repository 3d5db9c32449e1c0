//! Workload paths of the reflected net-input process, recorded at the epochs
//! of an independent Poisson probing process.
//!
//! Pure compound Poisson input with linear drift is simulated event by event,
//! so the workload hits zero exactly. Any Brownian or Gamma-process component
//! switches to a time grid of step `h`, on which increments are drawn exactly
//! and reflected by the Lindley recursion `V <- max(0, V + dX)`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson};

use crate::error::{Error, Result};
use crate::exponent::LevyExponentModel;

/// Burn-in used when a configuration does not specify one.
pub const DEFAULT_BURN_IN: usize = 1_000;

/// Workload observations at probe epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbedSample {
    /// Probe rate.
    pub xi: f64,
    /// `V_0, ..., V_n`.
    pub values: Vec<f64>,
    /// `T_0 = 0, T_1, ..., T_n` when recorded.
    pub times: Option<Vec<f64>>,
    /// `Y_1, ..., Y_n` with `Y_i = (V_i == 0)`.
    pub idle: Vec<bool>,
    /// Zeros are exact (event-driven path without a Brownian part).
    pub subordinator_exact: bool,
}

impl ProbedSample {
    /// Builds a sample from raw workload values; idle flags are derived.
    pub fn from_values(xi: f64, values: Vec<f64>, subordinator_exact: bool) -> Result<Self> {
        if !(xi > 0.0) {
            return Err(Error::Input(format!("probe rate must be positive, got {xi}")));
        }
        if values.is_empty() {
            return Err(Error::Input("a sample needs at least V_0".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Input("workload values must be finite and >= 0".into()));
        }
        let idle = values[1..].iter().map(|&v| v == 0.0).collect();
        Ok(Self {
            xi,
            values,
            times: None,
            idle,
            subordinator_exact,
        })
    }

    /// Number of transitions `n`.
    pub fn n(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.n() == 0
    }

    /// Consecutive pairs `(V_{i-1}, V_i)` for `i = 1..=n`.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.windows(2).map(|w| (w[0], w[1]))
    }

    /// The first `n` transitions, as used for common-random-number comparisons.
    pub fn prefix(&self, n: usize) -> Self {
        let k = n.min(self.n());
        Self {
            xi: self.xi,
            values: self.values[..=k].to_vec(),
            times: self.times.as_ref().map(|t| t[..=k].to_vec()),
            idle: self.idle[..k].to_vec(),
            subordinator_exact: self.subordinator_exact,
        }
    }

    /// Writes the `i,T_i,V_i,Y_i` dump.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,T_i,V_i,Y_i")?;
        for (i, v) in self.values.iter().enumerate() {
            let t = self.times.as_ref().map(|t| t[i]).unwrap_or(f64::NAN);
            let y = u8::from(*v == 0.0);
            writeln!(w, "{i},{},{},{y}", fmt_f64(t), fmt_f64(*v))?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`ProbedSample::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, xi: f64, subordinator_exact: bool) -> Result<Self> {
        let mut values = Vec::new();
        let mut times = Vec::new();
        let mut have_times = true;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                if line != "i,T_i,V_i,Y_i" {
                    return Err(Error::Input(format!("unexpected header {line:?}")));
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Input(format!("line {}: expected 4 fields", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))
            };
            let t = parse(fields[1])?;
            if t.is_nan() {
                have_times = false;
            }
            times.push(t);
            values.push(parse(fields[2])?);
        }
        let mut s = Self::from_values(xi, values, subordinator_exact)?;
        if have_times {
            s.times = Some(times);
        }
        Ok(s)
    }
}

/// Fixed-width float rendering with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub model: LevyExponentModel,
    /// Probe rate.
    pub xi: f64,
    /// Number of retained probe transitions.
    pub n_probes: usize,
    /// Initial workload.
    pub v0: f64,
    /// Probes discarded before recording starts.
    pub burn_in: usize,
    /// Grid step for Brownian / Gamma-process input.
    pub grid_step: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl SimulationConfig {
    pub fn new(model: LevyExponentModel, xi: f64, n_probes: usize) -> Self {
        Self {
            model,
            xi,
            n_probes,
            v0: 0.0,
            burn_in: DEFAULT_BURN_IN,
            grid_step: default_grid_step(xi),
            seed: 0,
            stream_id: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64, stream_id: u64) -> Self {
        self.seed = seed;
        self.stream_id = stream_id;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.xi > 0.0) || !self.xi.is_finite() {
            return Err(Error::Config(format!("xi must be positive, got {}", self.xi)));
        }
        if self.n_probes == 0 {
            return Err(Error::Config("n_probes must be >= 1".into()));
        }
        if !(self.grid_step > 0.0) || !self.grid_step.is_finite() {
            return Err(Error::Config(format!(
                "grid step must be positive, got {}",
                self.grid_step
            )));
        }
        if !(self.v0 >= 0.0) || !self.v0.is_finite() {
            return Err(Error::Config(format!("v0 must be >= 0, got {}", self.v0)));
        }
        Ok(())
    }

    /// Event-exact simulation applies (no Brownian or Gamma-process part).
    pub fn is_event_exact(&self) -> bool {
        self.model.bm_var == 0.0 && self.model.gamma_shape == 0.0
    }
}

/// `min(1 / (10 xi), 0.01)`.
pub fn default_grid_step(xi: f64) -> f64 {
    (0.1 / xi).min(0.01)
}

/// The RNG owned by replication `stream_id` of base seed `seed`.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

enum Scheme {
    Events {
        jump: Option<(Exp<f64>, Gamma<f64>)>,
        next_jump_in: f64,
    },
    Grid {
        normal: Option<Normal<f64>>,
    },
}

/// Incremental workload generator: each call to [`WorkloadProber::next_probe`]
/// advances the path by one exponential probe gap.
pub struct WorkloadProber {
    model: LevyExponentModel,
    h: f64,
    gap: Exp<f64>,
    scheme: Scheme,
    rng: ChaCha8Rng,
    reflect: bool,
    v: f64,
    t: f64,
}

impl WorkloadProber {
    pub fn new(cfg: &SimulationConfig) -> Result<Self> {
        Self::with_reflection(cfg, true)
    }

    pub(crate) fn with_reflection(cfg: &SimulationConfig, reflect: bool) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.model;
        let gap = Exp::new(cfg.xi).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = stream_rng(cfg.seed, cfg.stream_id);
        let scheme = if cfg.is_event_exact() {
            let jump = if m.cp_rate > 0.0 {
                let inter = Exp::new(m.cp_rate).map_err(|e| Error::Config(e.to_string()))?;
                let size = Gamma::new(m.cp_shape, 1.0 / m.cp_rate_param)
                    .map_err(|e| Error::Config(e.to_string()))?;
                Some((inter, size))
            } else {
                None
            };
            let next_jump_in = match &jump {
                Some((inter, _)) => inter.sample(&mut rng),
                None => f64::INFINITY,
            };
            Scheme::Events { jump, next_jump_in }
        } else {
            let normal = if m.bm_var > 0.0 {
                Some(Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?)
            } else {
                None
            };
            Scheme::Grid { normal }
        };
        Ok(Self {
            model: m,
            h: cfg.grid_step,
            gap,
            scheme,
            rng,
            reflect,
            v: cfg.v0,
            t: 0.0,
        })
    }

    pub fn workload(&self) -> f64 {
        self.v
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Advances to the next probe epoch and returns `(gap, V)`.
    pub fn next_probe(&mut self) -> (f64, f64) {
        let g = self.gap.sample(&mut self.rng);
        self.advance(g);
        self.t += g;
        (g, self.v)
    }

    fn advance(&mut self, duration: f64) {
        match self.scheme {
            Scheme::Events { .. } => self.advance_events(duration),
            Scheme::Grid { .. } => {
                let full = (duration / self.h).floor();
                let steps = full as u64;
                for _ in 0..steps {
                    self.grid_step(self.h);
                }
                let rest = duration - full * self.h;
                if rest > 0.0 {
                    self.grid_step(rest);
                }
            }
        }
    }

    fn advance_events(&mut self, duration: f64) {
        let Scheme::Events { jump, next_jump_in } = &mut self.scheme else {
            unreachable!()
        };
        let mut remaining = duration;
        let mut v = self.v;
        let d = self.model.bm_drift;
        let reflect = self.reflect;
        let drift = |v: f64, s: f64| {
            let x = v + d * s;
            if reflect {
                x.max(0.0)
            } else {
                x
            }
        };
        if let Some((inter, size)) = jump {
            while *next_jump_in <= remaining {
                v = drift(v, *next_jump_in);
                v += size.sample(&mut self.rng);
                remaining -= *next_jump_in;
                *next_jump_in = inter.sample(&mut self.rng);
            }
            *next_jump_in -= remaining;
        }
        self.v = drift(v, remaining);
    }

    fn grid_step(&mut self, s: f64) {
        let m = self.model;
        let mut dx = m.bm_drift * s;
        if let Scheme::Grid { normal: Some(n) } = &self.scheme {
            dx += (m.bm_var * s).sqrt() * n.sample(&mut self.rng);
        }
        if m.gamma_shape > 0.0 {
            let g = Gamma::new(m.gamma_shape * s, 1.0 / m.gamma_rate)
                .expect("validated gamma parameters");
            dx += g.sample(&mut self.rng);
        }
        if m.cp_rate > 0.0 {
            let k = Poisson::new(m.cp_rate * s)
                .expect("validated jump rate")
                .sample(&mut self.rng);
            if k > 0.0 {
                let g = Gamma::new(k * m.cp_shape, 1.0 / m.cp_rate_param)
                    .expect("validated jump parameters");
                dx += g.sample(&mut self.rng);
            }
        }
        let x = self.v + dx;
        self.v = if self.reflect { x.max(0.0) } else { x };
    }

    /// Draws a uniform variate from the prober's stream.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Simulates `burn_in + n_probes` probe gaps and keeps the last `n_probes + 1`
/// workload values, with times measured from the first retained probe.
pub fn simulate_probed_workload(cfg: &SimulationConfig) -> Result<ProbedSample> {
    simulate_with(cfg, true)
}

pub(crate) fn simulate_with(cfg: &SimulationConfig, reflect: bool) -> Result<ProbedSample> {
    let mut prober = WorkloadProber::with_reflection(cfg, reflect)?;
    for _ in 0..cfg.burn_in {
        prober.next_probe();
    }
    let mut values = Vec::with_capacity(cfg.n_probes + 1);
    let mut times = Vec::with_capacity(cfg.n_probes + 1);
    values.push(prober.workload());
    times.push(0.0);
    let mut t = 0.0;
    for _ in 0..cfg.n_probes {
        let (g, v) = prober.next_probe();
        t += g;
        values.push(v);
        times.push(t);
    }
    let idle = values[1..].iter().map(|&v| v == 0.0).collect();
    Ok(ProbedSample {
        xi: cfg.xi,
        values,
        times: Some(times),
        idle,
        subordinator_exact: cfg.is_event_exact(),
    })
}

/// Safety cap on probes simulated by [`simulate_until_qualified`].
pub const MAX_STREAMING_PROBES: usize = 200_000_000;

/// Probes (after burn-in) until `m` pairs start at or above `tau`.
pub fn simulate_until_qualified(cfg: &SimulationConfig, m: usize, tau: f64) -> Result<ProbedSample> {
    let mut prober = WorkloadProber::new(cfg)?;
    for _ in 0..cfg.burn_in {
        prober.next_probe();
    }
    let mut values = vec![prober.workload()];
    let mut found = 0;
    while found < m {
        if values.len() > MAX_STREAMING_PROBES {
            return Err(Error::InsufficientData { needed: m, found });
        }
        let prev = values[values.len() - 1];
        values.push(prober.next_probe().1);
        if prev >= tau {
            found += 1;
        }
    }
    ProbedSample::from_values(cfg.xi, values, cfg.is_event_exact())
}

/// Empirical means of the two conditional identities, with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    /// Mean of `V_i - V_{i-1} - exp(-psi V_{i-1}) / psi + phi'(0) / xi`.
    pub mean_first: Option<f64>,
    pub se_first: Option<f64>,
    /// Mean of `Y_i exp(psi V_{i-1})`; target `xi / psi`.
    pub mean_idle: Option<f64>,
    pub se_idle: Option<f64>,
    pub idle_target: Option<f64>,
    pub count: usize,
    /// The model is unstable or deterministic, so the identities are not checked.
    pub model_mismatch: bool,
}

impl ResidualStats {
    /// Mean idle residual `Y_i exp(psi V_{i-1}) - xi / psi`.
    pub fn idle_residual(&self) -> Option<f64> {
        Some(self.mean_idle? - self.idle_target?)
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn conditional_identity_residuals(
    sample: &ProbedSample,
    model: &LevyExponentModel,
) -> Result<ResidualStats> {
    let degenerate = model.cp_rate == 0.0 && model.gamma_shape == 0.0 && model.bm_var == 0.0;
    if !model.is_stable() || degenerate || sample.is_empty() {
        return Ok(ResidualStats {
            mean_first: None,
            se_first: None,
            mean_idle: None,
            se_idle: None,
            idle_target: None,
            count: sample.n(),
            model_mismatch: true,
        });
    }
    let xi = sample.xi;
    let psi = model.psi(xi)?;
    let c = model.phi_prime_zero();
    let first: Vec<f64> = sample
        .pairs()
        .map(|(prev, cur)| cur - prev - (-psi * prev).exp() / psi + c / xi)
        .collect();
    let (mean_first, se_first) = mean_and_se(&first);

    let (mean_idle, se_idle, idle_target) = if sample.subordinator_exact {
        let idle: Vec<f64> = sample
            .pairs()
            .zip(&sample.idle)
            .map(|((prev, _), &y)| if y { (psi * prev).exp() } else { 0.0 })
            .collect();
        let (m, se) = mean_and_se(&idle);
        (Some(m), Some(se), Some(xi / psi))
    } else {
        (None, None, None)
    };
    Ok(ResidualStats {
        mean_first: Some(mean_first),
        se_first: Some(se_first),
        mean_idle,
        se_idle,
        idle_target,
        count: sample.n(),
        model_mismatch: false,
    })
}
