//! Rolling-window backtesting: quantile scoring, exception rates,
//! per-estimator reports, and the resampled-continuation experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{
    var_empirical, var_gaussian_plugin, var_gaussian_unbiased, AlphaLevel,
};
use crate::core::seed::derive_seed;
use crate::core::series::{make_windows, ReturnSeries, WindowPlan};
use crate::error::{Error, Result};
use crate::garch::{
    fit_qmle_warm, simulate_from_state, state_after, var_garch_normal_from_sigma,
    var_garch_t_from_sigma, var_true, GarchSpec, NoiseFamily,
};
use crate::lstm::{var_lstm, LstmParams};

/// Quantile (pinball) score S(x, y) = (1{x >= y} - alpha)(x - y), where
/// `q_forecast` is the alpha-quantile forecast and `y` the realized
/// value. Lower is better; the expected score is minimized by the true
/// quantile.
pub fn quantile_score(q_forecast: f64, y: f64, alpha: AlphaLevel) -> f64 {
    let indicator = if q_forecast >= y { 1.0 } else { 0.0 };
    (indicator - alpha.value()) * (q_forecast - y)
}

/// Mean quantile score of risk estimates `rho` against realized values
/// `y`; the quantile forecast for a risk estimate v is -v.
pub fn mean_quantile_score(rho: &[f64], y: &[f64], alpha: AlphaLevel) -> Result<f64> {
    if rho.is_empty() || rho.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty estimate/realization vectors, got {} and {}",
            rho.len(),
            y.len()
        )));
    }
    let total: f64 = rho
        .iter()
        .zip(y)
        .map(|(r, yi)| quantile_score(-r, *yi, alpha))
        .sum();
    Ok(total / rho.len() as f64)
}

/// Fraction of windows where the realized value breaches the estimate:
/// y + v < 0, strictly.
pub fn exception_rate(rho: &[f64], y: &[f64]) -> Result<f64> {
    if rho.is_empty() || rho.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty estimate/realization vectors, got {} and {}",
            rho.len(),
            y.len()
        )));
    }
    let exceeds = rho.iter().zip(y).filter(|(r, yi)| **yi + **r < 0.0).count();
    Ok(exceeds as f64 / rho.len() as f64)
}

/// Identifier of an estimation procedure, used in reports and on the
/// command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    TrueVar,
    Emp,
    Norm,
    U,
    GarchN,
    GarchT,
    Lstm,
}

impl EstimatorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TrueVar => "true_var",
            Self::Emp => "emp",
            Self::Norm => "norm",
            Self::U => "u",
            Self::GarchN => "garch_n",
            Self::GarchT => "garch_t",
            Self::Lstm => "lstm",
        }
    }
}

impl std::fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true_var" | "true" => Ok(Self::TrueVar),
            "emp" => Ok(Self::Emp),
            "norm" => Ok(Self::Norm),
            "u" | "unbiased" => Ok(Self::U),
            "garch_n" => Ok(Self::GarchN),
            "garch_t" => Ok(Self::GarchT),
            "lstm" => Ok(Self::Lstm),
            other => Err(Error::InvalidInput(format!(
                "unknown estimator '{other}' (expected one of true_var, emp, norm, u, \
                 garch_n, garch_t, lstm)"
            ))),
        }
    }
}

/// An estimation procedure plus the configuration it needs. The true
/// estimator additionally requires the conditional volatility path of
/// the series, passed separately to [`run_backtest`].
#[derive(Debug, Clone)]
pub enum Estimator {
    /// Oracle that knows the conditional volatility and noise law.
    TrueVar { noise: NoiseFamily, nu: Option<f64> },
    Empirical,
    GaussianPlugin,
    GaussianUnbiased,
    GarchNormal { p: usize, q: usize },
    GarchT { p: usize, q: usize },
    /// A trained network, frozen for the whole backtest.
    Lstm(Box<LstmParams>),
}

impl Estimator {
    pub fn id(&self) -> EstimatorId {
        match self {
            Self::TrueVar { .. } => EstimatorId::TrueVar,
            Self::Empirical => EstimatorId::Emp,
            Self::GaussianPlugin => EstimatorId::Norm,
            Self::GaussianUnbiased => EstimatorId::U,
            Self::GarchNormal { .. } => EstimatorId::GarchN,
            Self::GarchT { .. } => EstimatorId::GarchT,
            Self::Lstm(_) => EstimatorId::Lstm,
        }
    }

    /// Oracle configuration matching a simulation model.
    pub fn true_var_for(spec: &GarchSpec) -> Self {
        Self::TrueVar { noise: spec.noise(), nu: spec.nu() }
    }
}

/// Outcome of one rolling-window backtest. The secured position of
/// window i is target[i] + risk_series[i]; an exception is a strictly
/// negative secured position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestReport {
    pub estimator: EstimatorId,
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    pub exceed_count: usize,
    pub exception_rate: f64,
    pub mean_score: f64,
    /// Windows where the estimator failed and the previous estimate was
    /// carried forward.
    pub substitutions: usize,
    pub risk_series: Vec<f64>,
    pub secured_series: Vec<f64>,
}

/// Rolls the estimator across the series: each window's risk estimate
/// is computed from exactly the n in-window observations and evaluated
/// against the next observation.
///
/// `true_sigma` must align with the series (one volatility per
/// observation) and is required by the true-VaR estimator only. GARCH
/// estimators refit every window, reusing the previous window's
/// parameters as one extra optimizer start. A window where the
/// estimator fails reuses the previous window's estimate and is counted
/// in `substitutions`; failure on the first window is an error.
pub fn run_backtest(
    series: &ReturnSeries,
    plan: &WindowPlan,
    estimator: &Estimator,
    alpha: AlphaLevel,
    true_sigma: Option<&[f64]>,
) -> Result<BacktestReport> {
    let windows = make_windows(series, plan)?;
    if let Estimator::TrueVar { .. } = estimator {
        let sigma = true_sigma.ok_or_else(|| {
            Error::InvalidInput("the true estimator needs the volatility path".into())
        })?;
        if sigma.len() != series.len() {
            return Err(Error::InvalidInput(format!(
                "volatility path has {} entries for a series of {}",
                sigma.len(),
                series.len()
            )));
        }
    }

    let mut risks = Vec::with_capacity(plan.m);
    let mut targets = Vec::with_capacity(plan.m);
    let mut substitutions = 0usize;
    let mut warm: Option<GarchSpec> = None;

    for (i, (w, y)) in windows.iter().enumerate() {
        let attempt: Result<f64> = match estimator {
            Estimator::TrueVar { noise, nu } => {
                let sigma = true_sigma.expect("checked above");
                var_true(sigma[plan.offset + i + plan.n], alpha, *noise, *nu)
            }
            Estimator::Empirical => var_empirical(w, alpha),
            Estimator::GaussianPlugin => var_gaussian_plugin(w, alpha),
            Estimator::GaussianUnbiased => var_gaussian_unbiased(w, alpha),
            Estimator::GarchNormal { p, q } => {
                let fitted = fit_qmle_warm(w, *p, *q, NoiseFamily::Normal, warm.as_ref());
                fitted.and_then(|fit| {
                    let risk = var_garch_normal_from_sigma(fit.next_sigma, w.len(), alpha)?;
                    warm = Some(fit.spec);
                    Ok(risk)
                })
            }
            Estimator::GarchT { p, q } => {
                let fitted = fit_qmle_warm(w, *p, *q, NoiseFamily::StudentT, warm.as_ref());
                fitted.and_then(|fit| {
                    let nu = fit.spec.nu().expect("t fit always carries nu");
                    let risk = var_garch_t_from_sigma(fit.next_sigma, nu, alpha)?;
                    warm = Some(fit.spec);
                    Ok(risk)
                })
            }
            Estimator::Lstm(params) => var_lstm(w, params, alpha),
        };
        let risk = match attempt {
            Ok(r) if r.is_finite() => r,
            failed => {
                if risks.is_empty() {
                    return match failed {
                        Err(e) => Err(e),
                        Ok(bad) => Err(Error::InvalidState(format!(
                            "estimator produced a non-finite estimate {bad} on the first window"
                        ))),
                    };
                }
                substitutions += 1;
                *risks.last().expect("non-empty")
            }
        };
        risks.push(risk);
        targets.push(*y);
    }

    let secured: Vec<f64> = targets.iter().zip(&risks).map(|(y, r)| y + r).collect();
    let exceed_count = secured.iter().filter(|z| **z < 0.0).count();
    let mean_score = mean_quantile_score(&risks, &targets, alpha)?;
    Ok(BacktestReport {
        estimator: estimator.id(),
        alpha: alpha.value(),
        n: plan.n,
        m: plan.m,
        exceed_count,
        exception_rate: exceed_count as f64 / plan.m as f64,
        mean_score,
        substitutions,
        risk_series: risks,
        secured_series: secured,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Estimation window length.
    pub n: usize,
    pub alpha: AlphaLevel,
    /// Number of independent test-segment continuations.
    pub repetitions: usize,
    /// Length of each simulated continuation; every continuation yields
    /// test_length - n backtest windows.
    pub test_length: usize,
    /// Master seed; repetition r simulates with a child seed derived
    /// from it.
    pub seed: u64,
}

/// Mean and standard deviation of one estimator's statistics across the
/// repetitions. The standard deviation is the sample one and zero for a
/// single repetition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorId,
    pub er_mean: f64,
    pub er_sd: f64,
    pub score_mean: f64,
    pub score_sd: f64,
    pub substitutions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    pub repetitions: usize,
    pub test_length: usize,
    pub summaries: Vec<EstimatorSummary>,
    /// Share of repetitions where the network's exception rate was
    /// strictly closest to alpha among all estimators in the run;
    /// absent when the network is not in the comparison.
    pub lstm_best_er_share: Option<f64>,
    /// Share of repetitions where the network's mean score was strictly
    /// lowest among all estimators in the run; ties are not best.
    pub lstm_best_score_share: Option<f64>,
    /// reports[r][e]: repetition r, estimator e in input order.
    pub reports: Vec<Vec<BacktestReport>>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Resampled-continuation experiment: recovers the conditional variance
/// state of `spec` at the end of `history` (the train plus validation
/// span), simulates `repetitions` independent continuations from that
/// state, and backtests every estimator on each continuation.
/// Repetitions run in parallel; results are deterministic in the master
/// seed.
pub fn resample_experiment(
    spec: &GarchSpec,
    history: &ReturnSeries,
    estimators: &[Estimator],
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if estimators.is_empty() {
        return Err(Error::InvalidInput("no estimators requested".into()));
    }
    if config.repetitions == 0 {
        return Err(Error::InvalidInput("need at least one repetition".into()));
    }
    if config.test_length <= config.n {
        return Err(Error::InvalidInput(format!(
            "test length {} leaves no backtest windows for n = {}",
            config.test_length, config.n
        )));
    }
    let state = state_after(spec, history.values())?;
    let plan = WindowPlan::new(config.n, config.test_length - config.n, 0)?;

    let reports: Vec<Vec<BacktestReport>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(config.seed, r as u64);
            let (continuation, sigmas) =
                simulate_from_state(spec, &state, config.test_length, rep_seed)?;
            estimators
                .iter()
                .map(|est| run_backtest(&continuation, &plan, est, config.alpha, Some(&sigmas)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let summaries: Vec<EstimatorSummary> = estimators
        .iter()
        .enumerate()
        .map(|(e, est)| {
            let ers: Vec<f64> = reports.iter().map(|rep| rep[e].exception_rate).collect();
            let scores: Vec<f64> = reports.iter().map(|rep| rep[e].mean_score).collect();
            let (er_mean, er_sd) = mean_sd(&ers);
            let (score_mean, score_sd) = mean_sd(&scores);
            EstimatorSummary {
                estimator: est.id(),
                er_mean,
                er_sd,
                score_mean,
                score_sd,
                substitutions: reports.iter().map(|rep| rep[e].substitutions).sum(),
            }
        })
        .collect();

    // best-performance shares for the network, judged against every
    // other estimator in the run; strict comparisons, so ties are not
    // best
    let lstm_idx = estimators.iter().position(|e| e.id() == EstimatorId::Lstm);
    let rivals: Vec<usize> = estimators
        .iter()
        .enumerate()
        .filter(|(_, e)| e.id() != EstimatorId::Lstm)
        .map(|(i, _)| i)
        .collect();
    let (mut best_er, mut best_score) = (None, None);
    if let Some(l) = lstm_idx {
        if !rivals.is_empty() {
            let a = config.alpha.value();
            let er_wins = reports
                .iter()
                .filter(|rep| {
                    let d = (rep[l].exception_rate - a).abs();
                    rivals.iter().all(|&e| d < (rep[e].exception_rate - a).abs())
                })
                .count();
            let score_wins = reports
                .iter()
                .filter(|rep| rivals.iter().all(|&e| rep[l].mean_score < rep[e].mean_score))
                .count();
            best_er = Some(er_wins as f64 / config.repetitions as f64);
            best_score = Some(score_wins as f64 / config.repetitions as f64);
        }
    }

    Ok(ExperimentReport {
        alpha: config.alpha.value(),
        n: config.n,
        m: plan.m,
        repetitions: config.repetitions,
        test_length: config.test_length,
        summaries,
        lstm_best_er_share: best_er,
        lstm_best_score_share: best_score,
        reports,
    })
}
