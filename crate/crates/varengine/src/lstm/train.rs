//! Quantile-loss training: Adam on the pinball objective with
//! mini-batches, plateau-based learning-rate decay, early stopping on
//! the validation score, best-epoch checkpointing, and multi-run
//! calibration that keeps the run whose train and validation scores
//! agree best.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::{
    apply_bn_update, backward_batch, forward_batch, BnMode, LstmArch, LstmParams, ModelMeta,
};
use super::{transform_window, FeatureScaler, TransformedWindow, FEATURES};
use crate::backtest::quantile_score;
use crate::classical::AlphaLevel;
use crate::core::seed::derive_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub arch: LstmArch,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub lr_min: f64,
    pub early_stop_patience: usize,
    pub calibration_runs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: LstmArch::default(),
            epochs_max: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            lr_factor: 0.1,
            lr_patience: 10,
            lr_min: 1e-5,
            early_stop_patience: 20,
            calibration_runs: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.arch.input_dim != FEATURES {
            return Err(Error::InvalidSpec(format!(
                "window transform produces {FEATURES} features, architecture expects {}",
                self.arch.input_dim
            )));
        }
        if self.epochs_max == 0 || self.batch_size == 0 || self.calibration_runs == 0 {
            return Err(Error::InvalidSpec(
                "epochs, batch size and calibration runs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::InvalidSpec(
                "learning rate must be positive and decay factor in (0, 1)".into(),
            ));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.learning_rate) {
            return Err(Error::InvalidSpec(
                "learning-rate floor must be positive and at most the initial rate".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_score: f64,
    pub val_score: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub final_train_score: f64,
    pub final_val_score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub runs: Vec<RunRecord>,
    pub selected_run: usize,
}

/// Mean pinball loss of the batch under training-mode normalization.
/// The network output rho is a risk estimate, so the quantile forecast
/// scored against the realized value is -rho.
pub fn objective(
    params: &LstmParams,
    windows: &[TransformedWindow],
    targets: &[f64],
    alpha: AlphaLevel,
) -> Result<f64> {
    check_batch(windows, targets)?;
    let refs: Vec<&TransformedWindow> = windows.iter().collect();
    let (out, _) = forward_batch(params, &refs, BnMode::Train)?;
    let loss = mean_loss(&out, targets, alpha);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss("objective evaluated to a non-finite value".into()));
    }
    Ok(loss)
}

/// Gradient of [`objective`] with respect to the trainable parameters,
/// flattened per [`LstmParams::to_flat`]. At a kink of the pinball loss
/// the left-hand slope is used.
pub fn gradients(
    params: &LstmParams,
    windows: &[TransformedWindow],
    targets: &[f64],
    alpha: AlphaLevel,
) -> Result<Vec<f64>> {
    check_batch(windows, targets)?;
    let refs: Vec<&TransformedWindow> = windows.iter().collect();
    let (out, cache) = forward_batch(params, &refs, BnMode::Train)?;
    let d_out = loss_output_grad(&out, targets, alpha);
    let grad = backward_batch(params, &cache, &d_out)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss("gradient evaluated to a non-finite value".into()));
    }
    Ok(grad)
}

fn check_batch(windows: &[TransformedWindow], targets: &[f64]) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("need at least one window".into()));
    }
    if windows.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} windows but {} targets",
            windows.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("targets must be finite".into()));
    }
    Ok(())
}

fn mean_loss(out: &Array1<f64>, targets: &[f64], alpha: AlphaLevel) -> f64 {
    let total: f64 = out
        .iter()
        .zip(targets)
        .map(|(rho, y)| quantile_score(-rho, *y, alpha))
        .sum();
    total / targets.len() as f64
}

/// d(mean loss)/d(rho_i): with z = y + rho the pinball loss equals
/// (alpha - 1{z <= 0}) * z, so each sample contributes
/// (alpha - 1{z <= 0}) / batch.
fn loss_output_grad(out: &Array1<f64>, targets: &[f64], alpha: AlphaLevel) -> Array1<f64> {
    let b = targets.len() as f64;
    Array1::from_iter(out.iter().zip(targets).map(|(rho, y)| {
        let z = y + rho;
        let ind = if z <= 0.0 { 1.0 } else { 0.0 };
        (alpha.value() - ind) / b
    }))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Mean score over a whole split in inference mode, in bounded chunks.
fn evaluate(
    params: &LstmParams,
    windows: &[TransformedWindow],
    targets: &[f64],
    alpha: AlphaLevel,
) -> Result<f64> {
    let mut total = 0.0;
    for (cw, cy) in windows.chunks(256).zip(targets.chunks(256)) {
        let refs: Vec<&TransformedWindow> = cw.iter().collect();
        let (out, _) = forward_batch(params, &refs, BnMode::Infer)?;
        total += out
            .iter()
            .zip(cy)
            .map(|(rho, y)| quantile_score(-rho, *y, alpha))
            .sum::<f64>();
    }
    let mean = total / windows.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFiniteLoss("evaluation score is non-finite".into()));
    }
    Ok(mean)
}

fn prepare_split(
    set: &[(&[f64], f64)],
    name: &str,
) -> Result<(Vec<TransformedWindow>, Vec<f64>, usize)> {
    if set.is_empty() {
        return Err(Error::InvalidInput(format!("{name} split has no windows")));
    }
    let n = set[0].0.len();
    let mut windows = Vec::with_capacity(set.len());
    let mut targets = Vec::with_capacity(set.len());
    for (w, y) in set {
        if w.len() != n {
            return Err(Error::InvalidInput(format!(
                "{name} split mixes window lengths {} and {}",
                n,
                w.len()
            )));
        }
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("{name} split has a non-finite target")));
        }
        windows.push(transform_window(w)?);
        targets.push(*y);
    }
    Ok((windows, targets, n))
}

/// Trains the network on rolling windows. Features are scaled with
/// statistics fitted on the training split only; each calibration run
/// restarts from a fresh initialization, keeps its best-validation
/// checkpoint, and the run whose train and validation scores are most
/// consistent is returned with the scaler and metadata attached.
pub fn train(
    train_set: &[(&[f64], f64)],
    val_set: &[(&[f64], f64)],
    alpha: AlphaLevel,
    config: &TrainConfig,
) -> Result<(LstmParams, TrainReport)> {
    config.validate()?;
    let (raw_train, train_y, n) = prepare_split(train_set, "training")?;
    let (raw_val, val_y, n_val) = prepare_split(val_set, "validation")?;
    if n_val != n {
        return Err(Error::InvalidInput(format!(
            "training windows have {n} observations, validation windows {n_val}"
        )));
    }
    let scaler = FeatureScaler::fit(&raw_train)?;
    let train_w: Vec<TransformedWindow> =
        raw_train.iter().map(|t| scaler.apply(t)).collect::<Result<_>>()?;
    let val_w: Vec<TransformedWindow> =
        raw_val.iter().map(|t| scaler.apply(t)).collect::<Result<_>>()?;

    let mut runs = Vec::with_capacity(config.calibration_runs);
    let mut candidates = Vec::with_capacity(config.calibration_runs);
    for run in 0..config.calibration_runs {
        let init_seed = derive_seed(config.seed, 2 * run as u64);
        let shuffle_seed = derive_seed(config.seed, 2 * run as u64 + 1);
        let mut params = LstmParams::init_xavier(config.arch.clone(), init_seed)?;
        let mut adam = Adam::new(params.trainable_count());
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let mut lr = config.learning_rate;
        let mut best_val = f64::INFINITY;
        let mut best_params = params.clone();
        let mut lr_wait = 0usize;
        let mut stop_wait = 0usize;
        let mut epochs = Vec::new();
        let mut indices: Vec<usize> = (0..train_w.len()).collect();

        for epoch in 1..=config.epochs_max {
            indices.shuffle(&mut rng);
            for batch in indices.chunks(config.batch_size) {
                let refs: Vec<&TransformedWindow> = batch.iter().map(|&i| &train_w[i]).collect();
                let ys: Vec<f64> = batch.iter().map(|&i| train_y[i]).collect();
                let (out, cache) = forward_batch(&params, &refs, BnMode::Train)?;
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteLoss(format!(
                        "non-finite forward pass in epoch {epoch}"
                    )));
                }
                let d_out = loss_output_grad(&out, &ys, alpha);
                let grad = backward_batch(&params, &cache, &d_out)?;
                if grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss(format!(
                        "non-finite gradient in epoch {epoch}"
                    )));
                }
                let stats = cache.bn_stats().expect("training-mode forward").clone();
                let mut theta = params.to_flat();
                adam.step(&mut theta, &grad, lr);
                params.set_trainable(&theta)?;
                apply_bn_update(&mut params, &stats);
            }

            let train_score = evaluate(&params, &train_w, &train_y, alpha)?;
            let val_score = evaluate(&params, &val_w, &val_y, alpha)?;
            epochs.push(EpochRecord { epoch, train_score, val_score, learning_rate: lr });

            if val_score < best_val {
                best_val = val_score;
                best_params = params.clone();
                lr_wait = 0;
                stop_wait = 0;
            } else {
                lr_wait += 1;
                stop_wait += 1;
                if lr_wait >= config.lr_patience && lr > config.lr_min {
                    lr = (lr * config.lr_factor).max(config.lr_min);
                    lr_wait = 0;
                }
                if stop_wait >= config.early_stop_patience {
                    break;
                }
            }
        }

        let final_train_score = evaluate(&best_params, &train_w, &train_y, alpha)?;
        let final_val_score = evaluate(&best_params, &val_w, &val_y, alpha)?;
        runs.push(RunRecord { seed: init_seed, epochs, final_train_score, final_val_score });
        candidates.push(best_params);
    }

    // keep the run whose train and validation scores agree best
    let selected_run = runs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let gap = |r: &RunRecord| {
                (r.final_train_score - r.final_val_score).abs()
                    / r.final_train_score.max(1e-12)
            };
            gap(a).total_cmp(&gap(b))
        })
        .map(|(i, _)| i)
        .expect("at least one calibration run");

    let mut chosen = candidates.swap_remove(selected_run);
    chosen.scaler = Some(scaler);
    chosen.meta = Some(ModelMeta {
        alpha: alpha.value(),
        window_len: n,
        seed: config.seed,
        selected_run,
        train_score: runs[selected_run].final_train_score,
        val_score: runs[selected_run].final_val_score,
    });
    Ok((chosen, TrainReport { runs, selected_run }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::var_lstm;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn alpha(v: f64) -> AlphaLevel {
        AlphaLevel::new(v).unwrap()
    }

    fn random_windows(
        rng: &mut ChaCha8Rng,
        count: usize,
        len: usize,
        scale: f64,
    ) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..len).map(|_| rng.random_range(-scale..scale)).collect())
            .collect()
    }

    #[test]
    fn objective_matches_manual_scores() {
        let params = LstmParams::init_xavier(LstmArch::default(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = random_windows(&mut rng, 8, 6, 0.05);
        let windows: Vec<TransformedWindow> =
            raw.iter().map(|w| transform_window(w).unwrap()).collect();
        let targets: Vec<f64> = (0..8).map(|_| rng.random_range(-0.1..0.1)).collect();
        let a = alpha(0.1);
        let refs: Vec<&TransformedWindow> = windows.iter().collect();
        let (out, _) = forward_batch(&params, &refs, BnMode::Train).unwrap();
        let manual: f64 = out
            .iter()
            .zip(&targets)
            .map(|(rho, y)| {
                let x = -rho;
                let ind = if x >= *y { 1.0 } else { 0.0 };
                (ind - 0.1) * (x - y)
            })
            .sum::<f64>()
            / 8.0;
        assert_relative_eq!(objective(&params, &windows, &targets, a).unwrap(), manual);
    }

    #[test]
    fn objective_and_gradients_validate_input() {
        let params = LstmParams::zeros(LstmArch::default()).unwrap();
        let w = transform_window(&[0.1, 0.2]).unwrap();
        let a = alpha(0.05);
        assert!(objective(&params, &[], &[], a).is_err());
        assert!(objective(&params, std::slice::from_ref(&w), &[0.1, 0.2], a).is_err());
        assert!(objective(&params, std::slice::from_ref(&w), &[f64::NAN], a).is_err());
        assert!(gradients(&params, &[w], &[0.1, 0.2], a).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let arch = LstmArch { input_dim: 5, hidden_dims: vec![3], dense_dims: vec![4, 1] };
        let a = alpha(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        let mut draw = 0;
        while checked < 100 {
            draw += 1;
            assert!(draw < 300, "too many draws rejected near loss kinks");
            let params = LstmParams::init_xavier(arch.clone(), rng.random()).unwrap();
            let raw = random_windows(&mut rng, 4, 6, 1.0);
            let windows: Vec<TransformedWindow> =
                raw.iter().map(|w| transform_window(w).unwrap()).collect();
            // targets straddle the forecasts on both sides, away from
            // the kink so finite differences cannot flip an indicator
            let refs: Vec<&TransformedWindow> = windows.iter().collect();
            let (out, _) = forward_batch(&params, &refs, BnMode::Train).unwrap();
            let targets: Vec<f64> = out
                .iter()
                .enumerate()
                .map(|(i, rho)| {
                    let off = 0.05 + 0.1 * i as f64;
                    if i % 2 == 0 {
                        -rho + off
                    } else {
                        -rho - off
                    }
                })
                .collect();
            let z_min = out
                .iter()
                .zip(&targets)
                .map(|(rho, y)| (y + rho).abs())
                .fold(f64::INFINITY, f64::min);
            if z_min < 1e-3 {
                continue;
            }
            let analytic = gradients(&params, &windows, &targets, a).unwrap();
            let theta = params.to_flat();
            let h = 1e-6;
            for i in 0..theta.len() {
                let mut p_hi = params.clone();
                let mut t_hi = theta.clone();
                t_hi[i] += h;
                p_hi.set_trainable(&t_hi).unwrap();
                let f_hi = objective(&p_hi, &windows, &targets, a).unwrap();
                let mut p_lo = params.clone();
                let mut t_lo = theta.clone();
                t_lo[i] -= h;
                p_lo.set_trainable(&t_lo).unwrap();
                let f_lo = objective(&p_lo, &windows, &targets, a).unwrap();
                let fd = (f_hi - f_lo) / (2.0 * h);
                let diff = (fd - analytic[i]).abs();
                assert!(
                    diff <= 1e-4 * analytic[i].abs() + 1e-7,
                    "draw {draw} param {i}: analytic {} vs finite difference {fd}",
                    analytic[i]
                );
            }
            checked += 1;
        }
    }

    type ToySet = Vec<(Vec<f64>, f64)>;

    fn toy_sets(
        seed: u64,
        n_train: usize,
        n_val: usize,
        len: usize,
    ) -> (ToySet, ToySet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |count: usize| {
            (0..count)
                .map(|_| {
                    let w: Vec<f64> =
                        (0..len).map(|_| rng.random_range(-0.05..0.05)).collect();
                    let y = rng.random_range(-0.05..0.05);
                    (w, y)
                })
                .collect::<Vec<_>>()
        };
        (gen(n_train), gen(n_val))
    }

    fn as_refs(set: &[(Vec<f64>, f64)]) -> Vec<(&[f64], f64)> {
        set.iter().map(|(w, y)| (w.as_slice(), *y)).collect()
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let (tr, va) = toy_sets(7, 48, 16, 8);
        let config = TrainConfig {
            epochs_max: 3,
            batch_size: 16,
            calibration_runs: 2,
            seed: 123,
            ..TrainConfig::default()
        };
        let a = alpha(0.1);
        let (p1, r1) = train(&as_refs(&tr), &as_refs(&va), a, &config).unwrap();
        let (p2, r2) = train(&as_refs(&tr), &as_refs(&va), a, &config).unwrap();
        assert_eq!(p1.to_flat(), p2.to_flat());
        assert_eq!(p1.bn.running_mean, p2.bn.running_mean);
        assert_eq!(r1.selected_run, r2.selected_run);
        for (a_run, b_run) in r1.runs.iter().zip(&r2.runs) {
            assert_eq!(a_run.seed, b_run.seed);
            let sa: Vec<(f64, f64)> =
                a_run.epochs.iter().map(|e| (e.train_score, e.val_score)).collect();
            let sb: Vec<(f64, f64)> =
                b_run.epochs.iter().map(|e| (e.train_score, e.val_score)).collect();
            assert_eq!(sa, sb);
        }
        // report structure: 1-based contiguous epochs, non-increasing
        // learning rate, bounded run count
        assert_eq!(r1.runs.len(), 2);
        assert!(r1.selected_run < r1.runs.len());
        for run in &r1.runs {
            for (i, e) in run.epochs.iter().enumerate() {
                assert_eq!(e.epoch, i + 1);
                if i > 0 {
                    assert!(e.learning_rate <= run.epochs[i - 1].learning_rate);
                }
                assert!(e.learning_rate >= config.lr_min);
            }
        }
        // a different seed takes a different path
        let config2 = TrainConfig { seed: 124, ..config };
        let (p3, _) = train(&as_refs(&tr), &as_refs(&va), a, &config2).unwrap();
        assert_ne!(p1.to_flat(), p3.to_flat());
    }

    #[test]
    fn trained_model_drives_inference() {
        let (tr, va) = toy_sets(9, 32, 12, 8);
        let config = TrainConfig {
            epochs_max: 2,
            batch_size: 16,
            calibration_runs: 1,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = alpha(0.05);
        let (params, report) = train(&as_refs(&tr), &as_refs(&va), a, &config).unwrap();
        assert!(params.scaler.is_some());
        let meta = params.meta.as_ref().unwrap();
        assert_eq!(meta.window_len, 8);
        assert_eq!(meta.selected_run, report.selected_run);
        let w = vec![0.01; 8];
        assert!(var_lstm(&w, &params, a).unwrap().is_finite());
        assert!(var_lstm(&w[..5], &params, a).is_err());
        assert!(var_lstm(&w, &params, alpha(0.01)).is_err());
        let untrained = LstmParams::zeros(LstmArch::default()).unwrap();
        assert!(var_lstm(&w, &untrained, a).is_err());
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let (tr, va) = toy_sets(3, 8, 4, 6);
        let a = alpha(0.05);
        let config = TrainConfig { epochs_max: 1, calibration_runs: 1, ..TrainConfig::default() };
        assert!(train(&[], &as_refs(&va), a, &config).is_err());
        assert!(train(&as_refs(&tr), &[], a, &config).is_err());
        let mixed: Vec<(&[f64], f64)> =
            vec![(&tr[0].0[..6], 0.1), (&tr[1].0[..4], 0.1)];
        assert!(train(&mixed, &as_refs(&va), a, &config).is_err());
        let short_val: Vec<(&[f64], f64)> = vec![(&va[0].0[..4], 0.1)];
        assert!(train(&as_refs(&tr), &short_val, a, &config).is_err());
        let bad = TrainConfig { lr_factor: 1.5, ..TrainConfig::default() };
        assert!(train(&as_refs(&tr), &as_refs(&va), a, &bad).is_err());
    }

    #[test]
    fn learns_the_quantile_of_iid_noise() {
        // iid standard normal targets: the best forecast is the constant
        // alpha-quantile, so a trained network should come close to the
        // score of that oracle on validation data
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let len = 20;
        let mut gen = |count: usize| {
            (0..count)
                .map(|_| {
                    let w: Vec<f64> = (0..len)
                        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    let y: f64 = rng.sample(rand_distr::StandardNormal);
                    (w, y)
                })
                .collect::<Vec<_>>()
        };
        let tr = gen(400);
        let va = gen(150);
        let a = alpha(0.1);
        let config = TrainConfig {
            epochs_max: 60,
            calibration_runs: 1,
            seed: 31,
            ..TrainConfig::default()
        };
        let (params, report) = train(&as_refs(&tr), &as_refs(&va), a, &config).unwrap();

        let q_oracle = -1.2815515655446004; // standard normal 10% quantile
        let oracle: f64 = va
            .iter()
            .map(|(_, y)| quantile_score(q_oracle, *y, a))
            .sum::<f64>()
            / va.len() as f64;
        let trained: f64 = va
            .iter()
            .map(|(w, y)| quantile_score(-var_lstm(w, &params, a).unwrap(), *y, a))
            .sum::<f64>()
            / va.len() as f64;
        assert!(
            trained <= 1.15 * oracle,
            "trained score {trained} too far above oracle {oracle}"
        );
        // training reduced the loss relative to the first epoch
        let run = &report.runs[report.selected_run];
        assert!(run.final_val_score < run.epochs[0].val_score);
    }
}
