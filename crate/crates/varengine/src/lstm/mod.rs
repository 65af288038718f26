//! LSTM quantile regressor: feature transformation, the recurrent
//! network with its dense head, quantile-loss training, and inference.
//!
//! A rolling window is first expanded into five features per timestep
//! (the window mean plus the first four Chebyshev polynomials of the
//! demeaned value), min-max scaled with statistics fitted on the
//! training split, then run through the LSTM. The network emits the
//! risk estimate rho directly; the implied quantile forecast is -rho.

mod network;
mod persist;
mod train;

pub use network::{
    apply_bn_update, lstm_forward, lstm_forward_batch, BatchNorm, BnBatchStats, BnMode,
    DenseLayer, ForwardCache, GateParams, LstmArch, LstmLayer, LstmParams, ModelMeta, BN_EPS,
    BN_MOMENTUM,
};
pub use persist::{load_model, save_model};
pub use train::{
    gradients, objective, train, EpochRecord, RunRecord, TrainConfig, TrainReport,
};

use ndarray::Array2;

use crate::classical::AlphaLevel;
use crate::core::stats::sample_mean;
use crate::error::{Error, Result};

/// Number of features per timestep produced by [`transform_window`].
pub const FEATURES: usize = 5;

/// Chebyshev polynomial T_j evaluated at `x`, for j in 1..=4.
pub fn chebyshev(j: usize, x: f64) -> Result<f64> {
    match j {
        1 => Ok(x),
        2 => Ok(2.0 * x * x - 1.0),
        3 => Ok(4.0 * x * x * x - 3.0 * x),
        4 => Ok(8.0 * x * x * x * x - 8.0 * x * x + 1.0),
        _ => Err(Error::InvalidInput(format!(
            "chebyshev index must be in 1..=4, got {j}"
        ))),
    }
}

/// Per-timestep feature matrix for one window: row j holds the window
/// mean followed by the four Chebyshev features of the demeaned value.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedWindow {
    features: Array2<f64>,
}

impl TransformedWindow {
    /// Wraps a prebuilt feature matrix; entries must be finite.
    pub fn from_features(features: Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidInput("feature matrix must be non-empty".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature matrix has non-finite entries".into()));
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }
}

/// Expands a window into its feature matrix (n rows, 5 columns).
pub fn transform_window(w: &[f64]) -> Result<TransformedWindow> {
    if w.is_empty() {
        return Err(Error::InvalidInput("window must be non-empty".into()));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("window has non-finite values".into()));
    }
    let mean = sample_mean(w)?;
    let mut features = Array2::zeros((w.len(), FEATURES));
    for (j, x) in w.iter().enumerate() {
        let d = x - mean;
        features[(j, 0)] = mean;
        features[(j, 1)] = chebyshev(1, d)?;
        features[(j, 2)] = chebyshev(2, d)?;
        features[(j, 3)] = chebyshev(3, d)?;
        features[(j, 4)] = chebyshev(4, d)?;
    }
    Ok(TransformedWindow { features })
}

/// Per-feature min-max statistics fitted on the training split. Scaling
/// maps a feature's training range onto [0, 1]; out-of-range values
/// extend linearly (no clamping), and a degenerate feature (max = min)
/// maps to 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(windows: &[TransformedWindow]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot fit a scaler on no windows".into()))?;
        let d = first.features.ncols();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for w in windows {
            if w.features.ncols() != d {
                return Err(Error::InvalidInput(
                    "windows disagree on feature count".into(),
                ));
            }
            for row in w.features.rows() {
                for (k, v) in row.iter().enumerate() {
                    mins[k] = mins[k].min(*v);
                    maxs[k] = maxs[k].max(*v);
                }
            }
        }
        Ok(Self { mins, maxs })
    }

    pub fn apply(&self, t: &TransformedWindow) -> Result<TransformedWindow> {
        if t.features.ncols() != self.mins.len() {
            return Err(Error::InvalidInput(format!(
                "scaler was fitted on {} features, window has {}",
                self.mins.len(),
                t.features.ncols()
            )));
        }
        let mut out = t.features.clone();
        for (k, mut col) in out.columns_mut().into_iter().enumerate() {
            let range = self.maxs[k] - self.mins[k];
            if range > 0.0 {
                col.mapv_inplace(|v| (v - self.mins[k]) / range);
            } else {
                col.fill(0.5);
            }
        }
        TransformedWindow::from_features(out)
    }
}

/// Free-function form of [`FeatureScaler::apply`].
pub fn scale_features(t: &TransformedWindow, scaler: &FeatureScaler) -> Result<TransformedWindow> {
    scaler.apply(t)
}

/// Risk estimate for one window from a trained model: transform, scale
/// with the training scaler, forward in inference mode.
pub fn var_lstm(w: &[f64], trained: &LstmParams, alpha: AlphaLevel) -> Result<f64> {
    let scaler = trained.scaler.as_ref().ok_or_else(|| {
        Error::InvalidState("model has no fitted feature scaler; train it first".into())
    })?;
    if let Some(meta) = &trained.meta {
        if (meta.alpha - alpha.value()).abs() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "model was trained for alpha {}, asked for {}",
                meta.alpha,
                alpha.value()
            )));
        }
        if meta.window_len != w.len() {
            return Err(Error::InvalidState(format!(
                "model was trained on windows of {} observations, got {}",
                meta.window_len,
                w.len()
            )));
        }
    }
    let t = scaler.apply(&transform_window(w)?)?;
    lstm_forward(&t, trained, BnMode::Infer)
}
