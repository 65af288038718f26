//! GARCH(p, q) volatility dynamics: simulation, quasi-maximum-likelihood
//! fitting under Gaussian or standardized Student-t innovations, and the
//! conditional VaR estimators built on the one-step volatility forecast.
//!
//! The recursion is
//!
//! ```text
//! sigma²_t = omega + sum_i alpha_i x²_{t-i} + sum_j beta_j sigma²_{t-j}
//! x_t      = sigma_t eps_t
//! ```
//!
//! with i.i.d. unit-variance noise eps_t. Student-t noise is scaled by
//! sqrt((nu-2)/nu) so that sigma_t stays the conditional standard
//! deviation regardless of the noise family.

mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT as StudentTDist};
use serde::{Deserialize, Serialize};

use crate::classical::AlphaLevel;
use crate::core::dist::{ln_gamma, std_normal_quantile, student_t_quantile};
use crate::core::series::ReturnSeries;
use crate::core::stats::sample_variance;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837877066409345483560659472811;
/// Upper bound on the fitted coefficient mass, keeping fits strictly
/// stationary.
const COEF_MASS_MAX: f64 = 1.0 - 1e-6;
const NU_FLOOR: f64 = 2.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Normal,
    StudentT,
}

/// Parameter set for a GARCH(p, q) model. Instances are always valid:
/// construction enforces nonnegativity, both stationarity restrictions
/// (coefficient mass < 1, and omega + mass < 1), and a finite-variance
/// nu for Student-t noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchSpec {
    p: usize,
    q: usize,
    omega: f64,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    noise: NoiseFamily,
    nu: Option<f64>,
}

impl GarchSpec {
    pub fn new(
        omega: f64,
        alphas: Vec<f64>,
        betas: Vec<f64>,
        noise: NoiseFamily,
        nu: Option<f64>,
    ) -> Result<Self> {
        if alphas.is_empty() || betas.is_empty() {
            return Err(Error::InvalidSpec(
                "GARCH orders p and q must both be at least 1".into(),
            ));
        }
        if !omega.is_finite() || omega < 0.0 {
            return Err(Error::InvalidSpec(format!("omega must be >= 0, got {omega}")));
        }
        for (name, coefs) in [("alpha", &alphas), ("beta", &betas)] {
            if let Some(c) = coefs.iter().find(|c| !c.is_finite() || **c < 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "{name} coefficients must be >= 0, got {c}"
                )));
            }
        }
        let mass: f64 = alphas.iter().sum::<f64>() + betas.iter().sum::<f64>();
        if mass >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "alpha + beta mass must be < 1 for stationarity, got {mass}"
            )));
        }
        if omega + mass >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "omega + alpha + beta mass must be < 1, got {}",
                omega + mass
            )));
        }
        match (noise, nu) {
            (NoiseFamily::Normal, Some(_)) => {
                return Err(Error::InvalidSpec(
                    "nu is only meaningful for Student-t noise".into(),
                ));
            }
            (NoiseFamily::StudentT, None) => {
                return Err(Error::InvalidSpec("Student-t noise requires nu".into()));
            }
            (NoiseFamily::StudentT, Some(nu)) if !(nu > 2.0) || !nu.is_finite() => {
                return Err(Error::InvalidSpec(format!(
                    "nu must be finite and > 2 (finite variance), got {nu}"
                )));
            }
            _ => {}
        }
        Ok(Self { p: alphas.len(), q: betas.len(), omega, alphas, betas, noise, nu })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn noise(&self) -> NoiseFamily {
        self.noise
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    /// Long-run variance omega / (1 - sum(alpha) - sum(beta)).
    pub fn unconditional_variance(&self) -> f64 {
        let mass: f64 = self.alphas.iter().sum::<f64>() + self.betas.iter().sum::<f64>();
        self.omega / (1.0 - mass)
    }
}

/// The eight simulation presets used throughout: four ARCH orders, each
/// with Gaussian (`...n`) or Student-t, nu = 5 (`...t`) innovations and
/// omega = 4e-6.
pub fn preset(name: &str) -> Option<GarchSpec> {
    let (base, suffix) = name.split_at(name.len().checked_sub(1)?);
    let (alphas, betas): (Vec<f64>, Vec<f64>) = match base {
        "garch11" => (vec![0.17], vec![0.8]),
        "garch21" => (vec![0.12, 0.05], vec![0.8]),
        "garch31" => (vec![0.12, 0.10, 0.05], vec![0.7]),
        "garch41" => (vec![0.12, 0.05, 0.05, 0.05], vec![0.7]),
        _ => return None,
    };
    let (noise, nu) = match suffix {
        "n" => (NoiseFamily::Normal, None),
        "t" => (NoiseFamily::StudentT, Some(5.0)),
        _ => return None,
    };
    Some(GarchSpec::new(4e-6, alphas, betas, noise, nu).expect("preset parameters are valid"))
}

pub fn preset_names() -> &'static [&'static str] {
    &[
        "garch11n", "garch21n", "garch31n", "garch41n",
        "garch11t", "garch21t", "garch31t", "garch41t",
    ]
}

/// One step of the variance recursion. `xsq` and `s2` must return the
/// squared return and conditional variance for a (1-based) time index,
/// covering nonpositive pre-sample indices as well. Every caller routes
/// through here so that simulated paths, likelihood evaluations, and
/// path reconstructions agree to the last bit.
fn one_step<FX, FS>(omega: f64, alphas: &[f64], betas: &[f64], t: i64, xsq: FX, s2: FS) -> f64
where
    FX: Fn(i64) -> f64,
    FS: Fn(i64) -> f64,
{
    let mut v = omega;
    for (i, a) in alphas.iter().enumerate() {
        v += a * xsq(t - (i as i64 + 1));
    }
    for (j, b) in betas.iter().enumerate() {
        v += b * s2(t - (j as i64 + 1));
    }
    v
}

/// Conditional variances sigma²_1 .. sigma²_{n+1} implied by `x`. The
/// first `pinned` entries are fixed at `presample`; pre-sample squared
/// returns and variances (time index <= 0) also read `presample`.
pub fn variance_path(
    omega: f64,
    alphas: &[f64],
    betas: &[f64],
    x: &[f64],
    presample: f64,
    pinned: usize,
) -> Vec<f64> {
    let n = x.len();
    let mut path = Vec::with_capacity(n + 1);
    for t in 1..=(n as i64 + 1) {
        let s2 = if t <= pinned as i64 {
            presample
        } else {
            one_step(
                omega,
                alphas,
                betas,
                t,
                |k| if k >= 1 { x[(k - 1) as usize] * x[(k - 1) as usize] } else { presample },
                |k| if k >= 1 { path[(k - 1) as usize] } else { presample },
            )
        };
        path.push(s2);
    }
    path
}

enum NoiseSampler {
    Normal,
    StudentT { dist: StudentTDist<f64>, scale: f64 },
}

impl NoiseSampler {
    fn for_spec(spec: &GarchSpec) -> Result<Self> {
        match spec.noise {
            NoiseFamily::Normal => Ok(Self::Normal),
            NoiseFamily::StudentT => {
                let nu = spec.nu.expect("validated at construction");
                let dist = StudentTDist::new(nu).map_err(|e| {
                    Error::InvalidSpec(format!("cannot sample Student-t with nu={nu}: {e}"))
                })?;
                Ok(Self::StudentT { dist, scale: ((nu - 2.0) / nu).sqrt() })
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Normal => rng.sample::<f64, _>(StandardNormal),
            Self::StudentT { dist, scale } => dist.sample(rng) * scale,
        }
    }
}

fn generate(
    spec: &GarchSpec,
    x2_pre: &[f64],
    s2_pre: &[f64],
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sampler = NoiseSampler::for_spec(spec)?;
    let p = spec.p as i64;
    let q = spec.q as i64;
    let mut xs: Vec<f64> = Vec::with_capacity(steps);
    let mut s2s: Vec<f64> = Vec::with_capacity(steps);
    for t in 1..=steps as i64 {
        let s2 = one_step(
            spec.omega,
            &spec.alphas,
            &spec.betas,
            t,
            |k| {
                if k >= 1 {
                    xs[(k - 1) as usize] * xs[(k - 1) as usize]
                } else {
                    x2_pre[(p - 1 + k) as usize]
                }
            },
            |k| if k >= 1 { s2s[(k - 1) as usize] } else { s2_pre[(q - 1 + k) as usize] },
        );
        let eps = sampler.draw(rng);
        xs.push(s2.sqrt() * eps);
        s2s.push(s2);
    }
    Ok((xs, s2s))
}

/// Simulates `length` observations of the process (after discarding
/// `burn_in` initial steps), along with the aligned true conditional
/// standard deviations. The pre-history is seeded at the unconditional
/// variance, so the first burn-in step starts exactly at the long-run
/// level. Deterministic per seed.
pub fn simulate(
    spec: &GarchSpec,
    length: usize,
    burn_in: usize,
    seed: u64,
) -> Result<(ReturnSeries, Vec<f64>)> {
    if length == 0 {
        return Err(Error::InvalidInput("simulation length must be positive".into()));
    }
    let v = spec.unconditional_variance();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xs, s2s) = generate(
        spec,
        &vec![v; spec.p],
        &vec![v; spec.q],
        burn_in + length,
        &mut rng,
    )?;
    let returns = ReturnSeries::new(xs[burn_in..].to_vec())?;
    let sigmas = s2s[burn_in..].iter().map(|s2| s2.sqrt()).collect();
    Ok((returns, sigmas))
}

/// Lag state needed to continue the recursion: the most recent `p`
/// returns and `q` conditional variances, both oldest-first.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchState {
    pub x_tail: Vec<f64>,
    pub sigma2_tail: Vec<f64>,
}

/// Recovers the lag state after running the variance recursion over
/// `history` from an unconditional-variance start.
pub fn state_after(spec: &GarchSpec, history: &[f64]) -> Result<GarchState> {
    let n = history.len();
    if n < spec.p.max(spec.q) {
        return Err(Error::InsufficientSample(format!(
            "state recovery needs at least max(p, q) = {} observations, got {n}",
            spec.p.max(spec.q)
        )));
    }
    let path = variance_path(
        spec.omega,
        &spec.alphas,
        &spec.betas,
        history,
        spec.unconditional_variance(),
        0,
    );
    Ok(GarchState {
        x_tail: history[n - spec.p..].to_vec(),
        sigma2_tail: path[n - spec.q..n].to_vec(),
    })
}

/// Continues the process for `length` steps from an explicit lag state;
/// no burn-in is applied. Deterministic per seed.
pub fn simulate_from_state(
    spec: &GarchSpec,
    state: &GarchState,
    length: usize,
    seed: u64,
) -> Result<(ReturnSeries, Vec<f64>)> {
    if length == 0 {
        return Err(Error::InvalidInput("simulation length must be positive".into()));
    }
    if state.x_tail.len() != spec.p || state.sigma2_tail.len() != spec.q {
        return Err(Error::InvalidState(format!(
            "state must carry exactly p={} returns and q={} variances, got {} and {}",
            spec.p,
            spec.q,
            state.x_tail.len(),
            state.sigma2_tail.len()
        )));
    }
    let x2_pre: Vec<f64> = state.x_tail.iter().map(|x| x * x).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xs, s2s) = generate(spec, &x2_pre, &state.sigma2_tail, length, &mut rng)?;
    let returns = ReturnSeries::new(xs)?;
    let sigmas = s2s.iter().map(|s2| s2.sqrt()).collect();
    Ok((returns, sigmas))
}

/// Result of a QMLE fit: estimated parameters, the in-sample volatility
/// path, the one-step-ahead forecast, the achieved log-likelihood, and
/// whether the optimizer met its convergence criteria.
#[derive(Debug, Clone)]
pub struct GarchFit {
    pub spec: GarchSpec,
    pub sigma_path: Vec<f64>,
    pub next_sigma: f64,
    pub loglik: f64,
    pub converged: bool,
}

/// Maps between the constrained parameter space and the unconstrained
/// optimizer space: log for omega, a logistic simplex for the combined
/// (alpha, beta) mass, and a shifted log for nu.
struct ParamMap {
    p: usize,
    q: usize,
    fit_nu: bool,
}

impl ParamMap {
    fn dim(&self) -> usize {
        1 + self.p + self.q + usize::from(self.fit_nu)
    }

    fn unpack(&self, theta: &[f64]) -> (f64, Vec<f64>, Vec<f64>, Option<f64>) {
        let omega = theta[0].exp();
        let u = &theta[1..1 + self.p + self.q];
        let m = u.iter().fold(0.0_f64, |acc, v| acc.max(*v));
        let z: f64 = u.iter().map(|v| (v - m).exp()).sum();
        let denom = (-m).exp() + z;
        let coef = |v: f64| COEF_MASS_MAX * (v - m).exp() / denom;
        let alphas: Vec<f64> = u[..self.p].iter().map(|v| coef(*v)).collect();
        let betas: Vec<f64> = u[self.p..].iter().map(|v| coef(*v)).collect();
        let nu = self
            .fit_nu
            .then(|| NU_FLOOR + theta[self.dim() - 1].clamp(-30.0, 30.0).exp());
        (omega, alphas, betas, nu)
    }

    fn pack(&self, omega: f64, alphas: &[f64], betas: &[f64], nu: Option<f64>) -> Vec<f64> {
        let mut coefs: Vec<f64> = alphas
            .iter()
            .chain(betas)
            .map(|c| c.max(1e-8))
            .collect();
        let total: f64 = coefs.iter().sum();
        let cap = COEF_MASS_MAX * (1.0 - 1e-9);
        if total > cap {
            for c in &mut coefs {
                *c *= cap / total;
            }
        }
        let mass: f64 = coefs.iter().sum();
        let rest = 1.0 - mass / COEF_MASS_MAX;
        let mut theta = vec![omega.max(1e-300).ln()];
        theta.extend(coefs.iter().map(|c| (c / COEF_MASS_MAX).ln() - rest.ln()));
        if self.fit_nu {
            theta.push((nu.unwrap_or(8.0) - NU_FLOOR).max(1e-6).ln());
        }
        theta
    }
}

/// Negative log-likelihood, streamed over the recursion without storing
/// the full path. The first `q` conditional variances are pinned to
/// `seed_s2`, which also covers pre-sample lags.
fn neg_loglik(
    x: &[f64],
    omega: f64,
    alphas: &[f64],
    betas: &[f64],
    nu: Option<f64>,
    seed_s2: f64,
) -> f64 {
    let q = betas.len();
    // per-point constant of the standardized-t density
    let t_const = nu.map(|nu| {
        ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln()
    });
    let mut ring = vec![seed_s2; q];
    let mut ll = 0.0;
    for t in 1..=x.len() as i64 {
        let s2 = if t <= q as i64 {
            seed_s2
        } else {
            one_step(
                omega,
                alphas,
                betas,
                t,
                |k| if k >= 1 { x[(k - 1) as usize] * x[(k - 1) as usize] } else { seed_s2 },
                |k| if k >= 1 { ring[((k - 1) % q as i64) as usize] } else { seed_s2 },
            )
        };
        if !(s2 > 1e-300) || !s2.is_finite() {
            return f64::INFINITY;
        }
        let xt2 = x[(t - 1) as usize] * x[(t - 1) as usize];
        ll += match (nu, t_const) {
            (Some(nu), Some(c)) => {
                c - 0.5 * (nu + 1.0) * (xt2 / (s2 * (nu - 2.0))).ln_1p() - 0.5 * s2.ln()
            }
            _ => -0.5 * (LN_2PI + s2.ln() + xt2 / s2),
        };
        ring[((t - 1) % q as i64) as usize] = s2;
    }
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

/// Log-likelihood of `x` under `spec`, using the same pre-sample
/// convention as the fit (first q variances pinned to the sample
/// variance of `x`).
pub fn log_likelihood(x: &[f64], spec: &GarchSpec) -> Result<f64> {
    let seed_s2 = sample_variance(x)?;
    if !(seed_s2 > 0.0) {
        return Err(Error::DegenerateInput("series has zero variance".into()));
    }
    let ll = -neg_loglik(x, spec.omega, &spec.alphas, &spec.betas, spec.nu, seed_s2);
    if !ll.is_finite() {
        return Err(Error::NonFiniteLoss(
            "log-likelihood is not finite at these parameters".into(),
        ));
    }
    Ok(ll)
}

fn validate_fit_input(x: &[f64], p: usize, q: usize) -> Result<f64> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidInput("orders p and q must be at least 1".into()));
    }
    if x.len() < p + q + 2 {
        return Err(Error::InsufficientSample(format!(
            "fitting GARCH({p},{q}) needs at least {} observations, got {}",
            p + q + 2,
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let s2 = sample_variance(x)?;
    if !(s2 > 0.0) {
        return Err(Error::DegenerateInput("series has zero variance".into()));
    }
    Ok(s2)
}

/// Quasi-maximum-likelihood fit of a GARCH(p, q) model.
///
/// The optimizer runs from a variance-targeted start and three seeded
/// random starts; the best final likelihood wins. `converged = false`
/// reports optimizer failure while still returning the best parameters
/// found, leaving the decision to the caller.
pub fn fit_qmle(x: &[f64], p: usize, q: usize, noise: NoiseFamily) -> Result<GarchFit> {
    fit_qmle_warm(x, p, q, noise, None)
}

/// Same as [`fit_qmle`] but tries `warm` (for example the previous
/// rolling window's parameters) as one additional start.
pub fn fit_qmle_warm(
    x: &[f64],
    p: usize,
    q: usize,
    noise: NoiseFamily,
    warm: Option<&GarchSpec>,
) -> Result<GarchFit> {
    let s2 = validate_fit_input(x, p, q)?;
    let fit_nu = noise == NoiseFamily::StudentT;
    let map = ParamMap { p, q, fit_nu };

    let objective = |theta: &[f64]| {
        let (omega, alphas, betas, nu) = map.unpack(theta);
        neg_loglik(x, omega, &alphas, &betas, nu, s2)
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();

    // variance-targeted start: alpha1 = 0.1, beta1 = 0.8, omega matching
    // the sample variance; higher-order coefficients start small
    let mut a0 = vec![0.01; p];
    a0[0] = 0.1;
    let mut b0 = vec![0.01; q];
    b0[0] = 0.8;
    let mass0: f64 = a0.iter().sum::<f64>() + b0.iter().sum::<f64>();
    starts.push(map.pack(s2 * (1.0 - mass0), &a0, &b0, fit_nu.then_some(8.0)));

    // seeded random starts keep the fit deterministic; the persistence
    // range reaches low values so the pool always contains a candidate
    // away from the near-integrated boundary
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a5c_e17b);
    for _ in 0..3 {
        let mass: f64 = rng.random_range(0.05..0.95);
        let mut weights: Vec<f64> = (0..p + q).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w *= mass / total;
        }
        let nu = fit_nu.then(|| rng.random_range(4.0..12.0));
        starts.push(map.pack(s2 * (1.0 - mass), &weights[..p], &weights[p..], nu));
    }

    if let Some(w) = warm {
        if w.p == p && w.q == q {
            let nu = fit_nu.then(|| w.nu.unwrap_or(8.0));
            starts.push(map.pack(w.omega, &w.alphas, &w.betas, nu));
        }
    }

    let opts = optim::Options::default();
    let outcomes: Vec<optim::Outcome> =
        starts.iter().map(|start| optim::minimize(&objective, start, &opts)).collect();
    let best_value = outcomes.iter().map(|o| o.value).fold(f64::INFINITY, f64::min);
    if !best_value.is_finite() {
        return Err(Error::NonFiniteLoss(
            "likelihood is not finite at any starting point".into(),
        ));
    }
    // Restart outcomes within ~2 nats of the best are statistically
    // indistinguishable; for data with little ARCH structure the
    // likelihood is nearly flat along a ridge toward the integrated
    // boundary, and raw argmax lands there by chance. Break such ties
    // toward the solution whose implied long-run variance matches the
    // sample, mirroring how variance-targeted local optimizers behave.
    let best = outcomes
        .iter()
        .filter(|o| o.value <= best_value + 2.0)
        .min_by(|a, b| {
            let dist = |o: &optim::Outcome| {
                let (omega, alphas, betas, _) = map.unpack(&o.theta);
                let mass: f64 = alphas.iter().sum::<f64>() + betas.iter().sum::<f64>();
                (omega / (1.0 - mass) / s2).ln().abs()
            };
            dist(a).total_cmp(&dist(b))
        })
        .expect("at least one finite outcome");

    let (omega, alphas, betas, nu) = map.unpack(&best.theta);
    let spec = GarchSpec::new(omega, alphas, betas, noise, nu).map_err(|e| {
        Error::InvalidParams(format!(
            "fitted parameters violate model restrictions ({e}); \
             is the series in decimal (not percent) units?"
        ))
    })?;
    let path = variance_path(spec.omega, &spec.alphas, &spec.betas, x, s2, q);
    let sigma_path: Vec<f64> = path[..x.len()].iter().map(|s2| s2.sqrt()).collect();
    let next_sigma = path[x.len()].sqrt();
    Ok(GarchFit {
        spec,
        sigma_path,
        next_sigma,
        loglik: -best.value,
        converged: best.converged,
    })
}

/// Volatility forecast for the step after the last observation: runs the
/// recursion over all of `x` with sigma_1 = `sigma_init` (pre-sample lags
/// also read `sigma_init`).
pub fn next_sigma(params: &GarchSpec, x: &[f64], sigma_init: f64) -> Result<f64> {
    if !(sigma_init > 0.0) || !sigma_init.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma_init must be positive and finite, got {sigma_init}"
        )));
    }
    if x.len() < params.p.max(params.q) {
        return Err(Error::InsufficientSample(format!(
            "need at least max(p, q) = {} observations, got {}",
            params.p.max(params.q),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let path = variance_path(
        params.omega,
        &params.alphas,
        &params.betas,
        x,
        sigma_init * sigma_init,
        1,
    );
    Ok(path[x.len()].sqrt())
}

/// Gaussian GARCH VaR: -sigma_next * sqrt((n+1)/n) * t_{n-1} quantile.
/// The t quantile (rather than the normal one) is a deliberate
/// small-sample bias correction.
pub fn var_garch_normal_from_sigma(sigma_next: f64, n: usize, alpha: AlphaLevel) -> Result<f64> {
    if !(sigma_next > 0.0) || !sigma_next.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma must be positive and finite, got {sigma_next}"
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientSample("need n >= 2 for the t quantile".into()));
    }
    let t = student_t_quantile(alpha.value(), (n - 1) as f64)?;
    Ok(-sigma_next * ((n as f64 + 1.0) / n as f64).sqrt() * t)
}

/// Fits a Gaussian GARCH(p, q) and returns the Gaussian GARCH VaR for
/// the step after the window.
pub fn var_garch_normal(x: &[f64], alpha: AlphaLevel, p: usize, q: usize) -> Result<f64> {
    let fit = fit_qmle(x, p, q, NoiseFamily::Normal)?;
    var_garch_normal_from_sigma(fit.next_sigma, x.len(), alpha)
}

/// Student-t GARCH VaR: -sigma_next * sqrt((nu-2)/nu) * t_nu quantile.
pub fn var_garch_t_from_sigma(sigma_next: f64, nu: f64, alpha: AlphaLevel) -> Result<f64> {
    if !(sigma_next > 0.0) || !sigma_next.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma must be positive and finite, got {sigma_next}"
        )));
    }
    if !(nu > 2.0) {
        return Err(Error::InvalidInput(format!("nu must exceed 2, got {nu}")));
    }
    let t = student_t_quantile(alpha.value(), nu)?;
    Ok(-sigma_next * ((nu - 2.0) / nu).sqrt() * t)
}

/// Fits a Student-t GARCH(p, q) (nu estimated) and returns the t GARCH
/// VaR for the step after the window.
pub fn var_garch_t(x: &[f64], alpha: AlphaLevel, p: usize, q: usize) -> Result<f64> {
    let fit = fit_qmle(x, p, q, NoiseFamily::StudentT)?;
    let nu = fit.spec.nu.expect("t fit always carries nu");
    var_garch_t_from_sigma(fit.next_sigma, nu, alpha)
}

/// Oracle conditional VaR -sigma * F^{-1}(alpha) where F is the
/// standard normal or the unit-variance standardized t. Only available
/// when the true volatility is known (simulations).
pub fn var_true(
    sigma_next: f64,
    alpha: AlphaLevel,
    noise: NoiseFamily,
    nu: Option<f64>,
) -> Result<f64> {
    if !(sigma_next > 0.0) || !sigma_next.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma must be positive and finite, got {sigma_next}"
        )));
    }
    let quantile = match noise {
        NoiseFamily::Normal => std_normal_quantile(alpha.value())?,
        NoiseFamily::StudentT => {
            let nu = nu.ok_or_else(|| {
                Error::InvalidInput("Student-t noise requires nu".into())
            })?;
            if !(nu > 2.0) {
                return Err(Error::InvalidInput(format!("nu must exceed 2, got {nu}")));
            }
            ((nu - 2.0) / nu).sqrt() * student_t_quantile(alpha.value(), nu)?
        }
    };
    Ok(-sigma_next * quantile)
}
