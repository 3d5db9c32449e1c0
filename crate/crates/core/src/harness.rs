//! Replicated Monte Carlo experiments: built-in scenarios, config loading,
//! and CSV / manifest output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{normal_quantile, AsymptoticReport, Backend, PluginBackend};
use crate::error::{Error, Result};
use crate::estimate::{
    estimate_phi_curve, estimate_psi_threshold, mle_psi, PsiEstimate, PsiMethod, PsiSpace,
};
use crate::exponent::{LevyExponentModel, Mm1Oracle};
use crate::simulate::{
    fmt_f64, simulate_probed_workload, simulate_until_qualified, ProbedSample, SimulationConfig,
    DEFAULT_BURN_IN,
};

/// What a scenario produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Simulate, estimate, aggregate.
    Estimation,
    /// Asymptotic constants only.
    Asymptotics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default = "default_kind")]
    pub kind: Kind,
    /// `[lambda, eta, mu, d, sigma2, beta, gamma]`.
    pub model: [f64; 7],
    pub xi: Vec<f64>,
    /// Sample sizes (likelihood and oracle routes).
    #[serde(default)]
    pub n: Vec<usize>,
    /// Qualifying-pair counts (threshold route).
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub tau: Vec<f64>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_psi_method")]
    pub psi_method: String,
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Smaller sample sizes reuse prefixes of the largest one.
    #[serde(default)]
    pub common_random_numbers: bool,
    /// Upper end of the likelihood search is `xi + lambda` instead of `xi + 100`.
    #[serde(default = "default_true")]
    pub jump_rate_known: bool,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub v0: f64,
    /// Grid step for non-event-exact input; zero means the default.
    #[serde(default)]
    pub grid_step: f64,
    /// Interval level is `1 - delta`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_psi_bar")]
    pub psi_bar: f64,
    /// Length of the pilot run feeding the plug-in backend.
    #[serde(default = "default_pilot")]
    pub pilot_n: usize,
    #[serde(default)]
    pub out: String,
}

fn default_kind() -> Kind {
    Kind::Estimation
}
fn default_reps() -> usize {
    1
}
fn default_psi_method() -> String {
    "mle".into()
}
fn default_backend() -> String {
    "exact-mm1".into()
}
fn default_true() -> bool {
    true
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}
fn default_delta() -> f64 {
    0.05
}
fn default_psi_bar() -> f64 {
    crate::estimate::DEFAULT_PSI_BAR
}
fn default_pilot() -> usize {
    100_000
}

/// Backend selector as spelled in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    ExactMm1,
    Plugin,
    Gpk,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-mm1" | "exact_mm1" => Ok(BackendKind::ExactMm1),
            "plugin" => Ok(BackendKind::Plugin),
            "gpk" | "gpk-only" | "gpk_only" => Ok(BackendKind::Gpk),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let k = ((hi - lo) / step).round() as usize;
    (0..=k).map(|i| lo + step * i as f64).collect()
}

fn curve_grid() -> Vec<f64> {
    let mut g = vec![0.1];
    g.extend(grid(0.5, 10.0, 0.5));
    g
}

fn wide_grid() -> Vec<f64> {
    let mut g = vec![0.1];
    g.extend(grid(0.5, 50.0, 0.5));
    g
}

const MM1: [f64; 7] = [0.8, 1.0, 1.0, -1.0, 0.0, 0.0, 0.0];
const LEVY: [f64; 7] = [0.2, 1.2, 0.5, -1.0, 0.1, 1.0, 5.0];

fn base(scenario: &str, model: [f64; 7]) -> ExperimentConfig {
    ExperimentConfig {
        scenario: scenario.into(),
        kind: Kind::Estimation,
        model,
        xi: vec![1.0],
        n: vec![],
        m: vec![],
        tau: vec![],
        alphas: curve_grid(),
        reps: 1,
        seed: 0,
        psi_method: default_psi_method(),
        backend: default_backend(),
        common_random_numbers: false,
        jump_rate_known: true,
        burn_in: DEFAULT_BURN_IN,
        v0: 0.0,
        grid_step: 0.0,
        delta: 0.05,
        psi_bar: default_psi_bar(),
        pilot_n: default_pilot(),
        out: String::new(),
    }
}

/// Names and one-line descriptions of the built-in scenarios.
pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    vec![
        ("fig2", "M/M/1 (0.8, 1), xi = 1, n = 30: estimated curve with pointwise intervals"),
        ("fig3", "M/M/1 (0.8, 1), xi = 1, n in {30, 50, 100, 200} on common random numbers"),
        ("fig4", "M/M/1 (0.8, 1): asymptotic variance over alpha for xi in {0.1, 1, 5}"),
        ("fig5", "M/M/1 (0.8, 1), xi = 1: asymptotic correlation r(alpha, 1)"),
        ("fig6", "Levy input, threshold route, m = 200, tau = 2, xi in {0.5, 1, 5, 10}"),
        ("fig7", "Levy input, threshold route, m = 200, xi = 1, tau in {0.5, 1, 2, 5}"),
    ]
}

pub fn builtin(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        "fig2" => ExperimentConfig {
            n: vec![30],
            ..base(name, MM1)
        },
        "fig3" => ExperimentConfig {
            n: vec![30, 50, 100, 200],
            common_random_numbers: true,
            ..base(name, MM1)
        },
        "fig4" => ExperimentConfig {
            kind: Kind::Asymptotics,
            xi: vec![0.1, 1.0, 5.0],
            alphas: wide_grid(),
            ..base(name, MM1)
        },
        "fig5" => ExperimentConfig {
            kind: Kind::Asymptotics,
            alphas: wide_grid(),
            ..base(name, MM1)
        },
        "fig6" => ExperimentConfig {
            xi: vec![0.5, 1.0, 5.0, 10.0],
            m: vec![200],
            tau: vec![2.0],
            psi_method: "threshold".into(),
            backend: "gpk".into(),
            burn_in: 0,
            ..base(name, LEVY)
        },
        "fig7" => ExperimentConfig {
            m: vec![200],
            tau: vec![0.5, 1.0, 2.0, 5.0],
            psi_method: "threshold".into(),
            backend: "gpk".into(),
            burn_in: 0,
            ..base(name, LEVY)
        },
        _ => return None,
    };
    Some(cfg)
}

impl ExperimentConfig {
    /// Parses a TOML config. When `scenario` names a built-in scenario the
    /// file only needs the keys it overrides.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let merged = match table.get("scenario").and_then(|v| v.as_str()).and_then(builtin) {
            Some(b) => {
                let mut base = toml::Table::try_from(&b).map_err(|e| Error::Config(e.to_string()))?;
                for (k, v) in table {
                    base.insert(k, v);
                }
                base
            }
            None => table,
        };
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<LevyExponentModel> {
        LevyExponentModel::from_array(self.model).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn psi_method(&self) -> Result<PsiMethod> {
        self.psi_method.parse()
    }

    pub fn backend_kind(&self) -> Result<BackendKind> {
        self.backend.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        let method = self.psi_method()?;
        let backend = self.backend_kind()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.xi.is_empty() || self.xi.iter().any(|x| !(*x > 0.0)) {
            return bad("xi must be a non-empty list of positive rates".into());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0)) {
            return bad("alphas must be a non-empty list of positive values".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must be at most {}", i64::MAX));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if backend == BackendKind::ExactMm1 && Mm1Oracle::from_model(&model).is_none() {
            return bad("the exact-mm1 backend needs an M/M/1 model".into());
        }
        if method == PsiMethod::Mle && backend == BackendKind::Gpk {
            return bad("likelihood constants need the exact-mm1 or plugin backend".into());
        }
        if self.kind == Kind::Asymptotics {
            return Ok(());
        }
        if self.reps == 0 {
            return bad("reps must be >= 1".into());
        }
        match method {
            PsiMethod::ThresholdMoment => {
                if self.m.is_empty() || self.m.contains(&0) {
                    return bad("the threshold route needs a non-empty list m of counts >= 1".into());
                }
                if self.tau.is_empty() || self.tau.iter().any(|t| !(*t > 0.0)) {
                    return bad("the threshold route needs a non-empty list tau of positive values".into());
                }
            }
            _ => {
                if self.n.is_empty() || self.n.contains(&0) {
                    return bad("n must be a non-empty list of sample sizes >= 1".into());
                }
            }
        }
        if method == PsiMethod::Mle && !model.is_subordinator() {
            return bad("the likelihood route needs subordinator input with unit drain".into());
        }
        if !model.is_stable() {
            return bad(format!("the model is unstable: E X(1) = {}", model.mean_input()));
        }
        Ok(())
    }
}

/// One experimental arm: a probe rate, and for the threshold route a
/// `(m, tau)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub xi: f64,
    pub m: Option<usize>,
    pub tau: Option<f64>,
}

impl Arm {
    /// Subdirectory name used when a scenario has several arms.
    pub fn label(&self) -> String {
        let mut s = format!("xi={}", self.xi);
        if let Some(m) = self.m {
            s.push_str(&format!("_m={m}"));
        }
        if let Some(t) = self.tau {
            s.push_str(&format!("_tau={t}"));
        }
        s
    }
}

fn arms(cfg: &ExperimentConfig, method: PsiMethod) -> Vec<Arm> {
    let mut out = Vec::new();
    for &xi in &cfg.xi {
        if method == PsiMethod::ThresholdMoment && cfg.kind == Kind::Estimation {
            for &m in &cfg.m {
                for &tau in &cfg.tau {
                    out.push(Arm {
                        xi,
                        m: Some(m),
                        tau: Some(tau),
                    });
                }
            }
        } else {
            out.push(Arm {
                xi,
                m: None,
                tau: None,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub rep: usize,
    pub alpha: f64,
    pub phi_true: f64,
    pub phi_hat: f64,
    pub psi_hat: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub n: usize,
    pub alpha: f64,
    pub phi_true: f64,
    pub mean_phi_hat: f64,
    pub mean_error: f64,
    pub mean_abs_error: f64,
    pub median_abs_error: f64,
    pub mean_rel_error: f64,
    /// `n` times the empirical variance of `phi_hat`.
    pub scaled_variance: f64,
    /// Asymptotic variance at this `alpha`, when available.
    pub sigma_alpha_xi_sq: f64,
    /// Fraction of replications whose interval covers `phi_true`.
    pub coverage: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    pub rows: Vec<EstimateRow>,
    pub aggregate: Vec<AggregateRow>,
    pub report: Option<AsymptoticReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub arms: Vec<ArmResult>,
    pub wall_time_secs: f64,
}

fn stream_id(arm: usize, slot: usize, rep: usize) -> u64 {
    ((arm as u64) << 44) | ((slot as u64) << 32) | rep as u64
}

fn sim_config(cfg: &ExperimentConfig, model: LevyExponentModel, xi: f64, n: usize) -> SimulationConfig {
    let mut s = SimulationConfig::new(model, xi, n);
    s.burn_in = cfg.burn_in;
    s.v0 = cfg.v0;
    if cfg.grid_step > 0.0 {
        s.grid_step = cfg.grid_step;
    }
    s
}

fn psi_for(
    cfg: &ExperimentConfig,
    model: &LevyExponentModel,
    method: PsiMethod,
    sample: &ProbedSample,
) -> Result<PsiEstimate> {
    match method {
        PsiMethod::Oracle => Ok(PsiEstimate::oracle(model.psi(sample.xi)?)),
        PsiMethod::Mle => {
            let rate = cfg.jump_rate_known.then_some(model.cp_rate);
            mle_psi(sample, PsiSpace::for_likelihood(sample.xi, rate))
        }
        PsiMethod::ThresholdMoment => Err(Error::Config(
            "the threshold route is driven by (m, tau) arms".into(),
        )),
    }
}

fn curve_rows(
    model: &LevyExponentModel,
    sample: &ProbedSample,
    psi: &PsiEstimate,
    alphas: &[f64],
    rep: usize,
) -> Result<Vec<EstimateRow>> {
    let curve = estimate_phi_curve(sample, psi, alphas)?;
    Ok(curve
        .alphas
        .iter()
        .zip(&curve.values)
        .map(|(&a, &v)| EstimateRow {
            rep,
            alpha: a,
            phi_true: model.phi(a),
            phi_hat: v,
            psi_hat: psi.value,
            n: sample.n(),
        })
        .collect())
}

/// Simulation and estimation for one replication of one arm.
fn replicate(
    cfg: &ExperimentConfig,
    model: &LevyExponentModel,
    method: PsiMethod,
    arm_index: usize,
    arm: &Arm,
    rep: usize,
) -> Result<Vec<EstimateRow>> {
    if let (Some(m), Some(tau)) = (arm.m, arm.tau) {
        let sc = sim_config(cfg, *model, arm.xi, 1).with_seed(cfg.seed, stream_id(arm_index, 0, rep));
        let sample = simulate_until_qualified(&sc, m, tau)?;
        let (psi, _) = estimate_psi_threshold(&sample, m, tau, cfg.psi_bar)?;
        return curve_rows(model, &sample, &psi, &cfg.alphas, rep);
    }
    let mut rows = Vec::new();
    if cfg.common_random_numbers {
        let n_max = *cfg.n.iter().max().expect("validated");
        let sc = sim_config(cfg, *model, arm.xi, n_max).with_seed(cfg.seed, stream_id(arm_index, 0, rep));
        let full = simulate_probed_workload(&sc)?;
        for &n in &cfg.n {
            let s = full.prefix(n);
            let psi = psi_for(cfg, model, method, &s)?;
            rows.extend(curve_rows(model, &s, &psi, &cfg.alphas, rep)?);
        }
    } else {
        for (j, &n) in cfg.n.iter().enumerate() {
            let sc = sim_config(cfg, *model, arm.xi, n).with_seed(cfg.seed, stream_id(arm_index, j, rep));
            let s = simulate_probed_workload(&sc)?;
            let psi = psi_for(cfg, model, method, &s)?;
            rows.extend(curve_rows(model, &s, &psi, &cfg.alphas, rep)?);
        }
    }
    Ok(rows)
}

fn make_backend(
    cfg: &ExperimentConfig,
    model: &LevyExponentModel,
    xi: f64,
    arm_index: usize,
) -> Result<Backend> {
    Ok(match cfg.backend_kind()? {
        BackendKind::ExactMm1 => Backend::ExactMm1(
            Mm1Oracle::from_model(model).ok_or_else(|| Error::Config("not an M/M/1 model".into()))?,
        ),
        BackendKind::Gpk => Backend::GpkOnly(*model),
        BackendKind::Plugin => {
            let sc = sim_config(cfg, *model, xi, cfg.pilot_n)
                .with_seed(cfg.seed, stream_id(arm_index, 0xFFF, 0));
            let pilot = simulate_probed_workload(&sc)?;
            Backend::Plugin(PluginBackend::from_sample(&pilot, cfg.seed))
        }
    })
}

fn report_for(
    cfg: &ExperimentConfig,
    model: &LevyExponentModel,
    method: PsiMethod,
    xi: f64,
    arm_index: usize,
) -> Result<AsymptoticReport> {
    let backend = make_backend(cfg, model, xi, arm_index)?;
    let guard = crate::asymptotics::SINGULARITY_GUARD * xi;
    let alphas: Vec<f64> = cfg
        .alphas
        .iter()
        .copied()
        .filter(|&a| {
            let ok = (model.phi(a) - xi).abs() > guard;
            if !ok {
                warn!("skipping alpha = {a} in the asymptotic report: phi(alpha) is within the guard of xi = {xi}");
            }
            ok
        })
        .collect();
    AsymptoticReport::compute(&backend, model, xi, &alphas, method)
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Per `(n, alpha)` summaries in order of first appearance.
pub fn aggregate(rows: &[EstimateRow], report: Option<&AsymptoticReport>, delta: f64) -> Vec<AggregateRow> {
    let mut keys: Vec<(usize, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|k| k.0 == r.n && k.1 == r.alpha) {
            keys.push((r.n, r.alpha));
        }
    }
    let z = normal_quantile(1.0 - delta / 2.0);
    let sigma_at = |alpha: f64| -> f64 {
        report
            .and_then(|rep| {
                let i = rep.rows.iter().position(|r| r.alpha == alpha)?;
                rep.sigma.as_ref().map(|s| s[i][i])
            })
            .unwrap_or(f64::NAN)
    };
    keys.into_iter()
        .map(|(n, alpha)| {
            let sel: Vec<&EstimateRow> = rows.iter().filter(|r| r.n == n && r.alpha == alpha).collect();
            let k = sel.len() as f64;
            let phi_true = sel[0].phi_true;
            let mean_phi_hat = sel.iter().map(|r| r.phi_hat).sum::<f64>() / k;
            let errs: Vec<f64> = sel.iter().map(|r| r.phi_hat - r.phi_true).collect();
            let var = if sel.len() > 1 {
                sel.iter().map(|r| (r.phi_hat - mean_phi_hat).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                f64::NAN
            };
            let s2 = sigma_at(alpha);
            let half = z * (s2 / n as f64).sqrt();
            let coverage = if s2.is_nan() {
                f64::NAN
            } else {
                errs.iter().filter(|e| e.abs() <= half).count() as f64 / k
            };
            AggregateRow {
                n,
                alpha,
                phi_true,
                mean_phi_hat,
                mean_error: errs.iter().sum::<f64>() / k,
                mean_abs_error: errs.iter().map(|e| e.abs()).sum::<f64>() / k,
                median_abs_error: median(errs.iter().map(|e| e.abs()).collect()),
                mean_rel_error: errs.iter().map(|e| e / phi_true).sum::<f64>() / k,
                scaled_variance: n as f64 * var,
                sigma_alpha_xi_sq: s2,
                coverage,
                count: sel.len(),
            }
        })
        .collect()
}

/// Runs every arm of the scenario. Replications run on the current rayon
/// pool; results are collected in replication order.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let model = cfg.model()?;
    let method = cfg.psi_method()?;
    let mut out = Vec::new();
    for (ai, arm) in arms(cfg, method).into_iter().enumerate() {
        info!("scenario {}: arm {}", cfg.scenario, arm.label());
        let report = Some(report_for(cfg, &model, method, arm.xi, ai)?);
        let rows = if cfg.kind == Kind::Estimation {
            let per_rep: Vec<Vec<EstimateRow>> = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| replicate(cfg, &model, method, ai, &arm, rep))
                .collect::<Result<_>>()?;
            per_rep.into_iter().flatten().collect()
        } else {
            Vec::new()
        };
        let aggregate = aggregate(&rows, report.as_ref(), cfg.delta);
        out.push(ArmResult {
            arm,
            rows,
            aggregate,
            report,
        });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        arms: out,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

pub fn write_estimates<W: Write>(rows: &[EstimateRow], mut w: W) -> Result<()> {
    writeln!(w, "rep,alpha,phi_true,phi_hat,psi_hat,n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.rep,
            fmt_f64(r.alpha),
            fmt_f64(r.phi_true),
            fmt_f64(r.phi_hat),
            fmt_f64(r.psi_hat),
            r.n
        )?;
    }
    Ok(())
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], mut w: W) -> Result<()> {
    writeln!(
        w,
        "n,alpha,phi_true,mean_phi_hat,mean_error,mean_abs_error,median_abs_error,mean_rel_error,scaled_variance,sigma_alpha_xi_sq,coverage,reps"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            fmt_f64(r.alpha),
            fmt_f64(r.phi_true),
            fmt_f64(r.mean_phi_hat),
            fmt_f64(r.mean_error),
            fmt_f64(r.mean_abs_error),
            fmt_f64(r.median_abs_error),
            fmt_f64(r.mean_rel_error),
            fmt_f64(r.scaled_variance),
            fmt_f64(r.sigma_alpha_xi_sq),
            fmt_f64(r.coverage),
            r.count
        )?;
    }
    Ok(())
}

/// `alpha,r` rows of the correlation with the estimate at `alpha = 1`.
pub fn write_correlation<W: Write>(report: &AsymptoticReport, mut w: W) -> Result<bool> {
    let Some(k) = report.rows.iter().position(|r| r.alpha == 1.0) else {
        return Ok(false);
    };
    if report.sigma.is_none() {
        return Ok(false);
    }
    writeln!(w, "alpha,r")?;
    for (i, r) in report.rows.iter().enumerate() {
        let c = report.correlation(i, k).expect("sigma present");
        writeln!(w, "{},{}", fmt_f64(r.alpha), fmt_f64(c))?;
    }
    Ok(true)
}

impl ExperimentResult {
    /// Writes CSVs and the manifest under `dir`; arms get their own
    /// subdirectory when there is more than one.
    pub fn write(&self, dir: &Path, threads: Option<usize>) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        let multi = self.arms.len() > 1;
        for arm in &self.arms {
            let d = if multi { dir.join(arm.arm.label()) } else { dir.to_path_buf() };
            fs::create_dir_all(&d).map_err(|e| Error::Io(format!("{}: {e}", d.display())))?;
            if self.config.kind == Kind::Estimation {
                let p = d.join("estimates.csv");
                write_estimates(&arm.rows, create(&p)?)?;
                written.push(p);
                let p = d.join("aggregate.csv");
                write_aggregate(&arm.aggregate, create(&p)?)?;
                written.push(p);
            }
            if let Some(rep) = &arm.report {
                let p = d.join("asymptotics.csv");
                rep.write_csv(create(&p)?)?;
                written.push(p);
                if rep.sigma.is_some() {
                    let p = d.join("sigma.csv");
                    rep.write_sigma_csv(create(&p)?)?;
                    written.push(p);
                    let p = d.join("correlation.csv");
                    let mut buf = Vec::new();
                    if write_correlation(rep, &mut buf)? {
                        fs::write(&p, buf)?;
                        written.push(p);
                    }
                }
            }
        }
        let p = dir.join("manifest.txt");
        let mut w = create(&p)?;
        writeln!(w, "# levy-probe {} experiment manifest", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# wall_time_secs = {:.3}", self.wall_time_secs)?;
        if let Some(t) = threads {
            writeln!(w, "# threads = {t}")?;
        }
        w.write_all(self.config.to_toml()?.as_bytes())?;
        w.flush()?;
        written.push(p);
        Ok(written)
    }
}

/// Runs `cfg` on a pool of `threads` workers (or the global pool).
pub fn run_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| run_scenario(cfg)),
        None => run_scenario(cfg),
    }
}

/// Settings for the single-run tools (`simulate`, `estimate`, `asymptotics`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolConfig {
    pub model: [f64; 7],
    pub xi: f64,
    pub n: usize,
    pub burn_in: usize,
    pub v0: f64,
    /// Zero means the default grid step.
    pub grid_step: f64,
    pub seed: u64,
    pub stream: u64,
    pub alphas: Vec<f64>,
    pub psi_method: String,
    pub backend: String,
    /// Threshold route: qualifying pairs and threshold.
    pub m: usize,
    pub tau: f64,
    /// Upper end of the likelihood search; zero means `xi + 100`.
    pub jump_rate: f64,
    pub psi_bar: f64,
    pub delta: f64,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            model: MM1,
            xi: 1.0,
            n: 10_000,
            burn_in: DEFAULT_BURN_IN,
            v0: 0.0,
            grid_step: 0.0,
            seed: 0,
            stream: 0,
            alphas: curve_grid(),
            psi_method: default_psi_method(),
            backend: default_backend(),
            m: 200,
            tau: 2.0,
            jump_rate: 0.0,
            psi_bar: default_psi_bar(),
            delta: 0.05,
        }
    }
}

impl ToolConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn model(&self) -> Result<LevyExponentModel> {
        LevyExponentModel::from_array(self.model).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn simulation(&self) -> Result<SimulationConfig> {
        let mut s = SimulationConfig::new(self.model()?, self.xi, self.n).with_seed(self.seed, self.stream);
        s.burn_in = self.burn_in;
        s.v0 = self.v0;
        if self.grid_step > 0.0 {
            s.grid_step = self.grid_step;
        }
        s.validate()?;
        Ok(s)
    }

    /// Likelihood search interval.
    pub fn psi_space(&self) -> PsiSpace {
        let rate = (self.jump_rate > 0.0).then_some(self.jump_rate);
        PsiSpace::for_likelihood(self.xi, rate)
    }

    /// Backend over `model`; the plug-in variant uses `sample`.
    pub fn backend(&self, model: &LevyExponentModel, sample: Option<&ProbedSample>) -> Result<Backend> {
        Ok(match self.backend.parse::<BackendKind>()? {
            BackendKind::ExactMm1 => Backend::ExactMm1(Mm1Oracle::from_model(model).ok_or_else(|| {
                Error::Config("the exact-mm1 backend needs an M/M/1 model".into())
            })?),
            BackendKind::Gpk => Backend::GpkOnly(*model),
            BackendKind::Plugin => {
                let owned;
                let s = match sample {
                    Some(s) => s,
                    None => {
                        owned = simulate_probed_workload(&self.simulation()?)?;
                        &owned
                    }
                };
                Backend::Plugin(PluginBackend::from_sample(s, self.seed))
            }
        })
    }
}
