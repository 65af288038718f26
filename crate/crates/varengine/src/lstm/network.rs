//! Network definition: stacked LSTM layers, ReLU dense head with batch
//! normalization before the final affine layer, Xavier initialization,
//! batched forward pass with cached activations, and full
//! backpropagation through time.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TransformedWindow;
use crate::error::{Error, Result};

/// Batch-norm epsilon and running-average momentum. `running` is
/// updated as `m * running + (1 - m) * batch`.
pub const BN_EPS: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Layer widths. `dense_dims` lists every dense layer including the
/// final scalar output, so it must end in 1; batch normalization sits
/// on the input of that final layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmArch {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dense_dims: Vec<usize>,
}

impl Default for LstmArch {
    fn default() -> Self {
        Self { input_dim: super::FEATURES, hidden_dims: vec![5], dense_dims: vec![16, 1] }
    }
}

impl LstmArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input dimension must be positive".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidSpec(
                "need at least one LSTM layer, all widths positive".into(),
            ));
        }
        if self.dense_dims.is_empty() || self.dense_dims.contains(&0) {
            return Err(Error::InvalidSpec(
                "need at least one dense layer, all widths positive".into(),
            ));
        }
        if *self.dense_dims.last().unwrap() != 1 {
            return Err(Error::InvalidSpec("final dense layer must have width 1".into()));
        }
        Ok(())
    }

    /// Width of the input to the final dense layer, which is where
    /// batch normalization is applied.
    pub fn bn_dim(&self) -> usize {
        if self.dense_dims.len() >= 2 {
            self.dense_dims[self.dense_dims.len() - 2]
        } else {
            *self.hidden_dims.last().unwrap()
        }
    }
}

/// One gate: weight rows are ordered hidden-state-first, then input,
/// matching the concatenation [h, x] used in the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Gates in the fixed order input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub gates: [GateParams; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

/// Provenance recorded on a trained model; inference validates calls
/// against it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub alpha: f64,
    pub window_len: usize,
    pub seed: u64,
    pub selected_run: usize,
    pub train_score: f64,
    pub val_score: f64,
}

/// Full parameter set. `scaler` and `meta` are attached by training.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub arch: LstmArch,
    pub layers: Vec<LstmLayer>,
    pub dense: Vec<DenseLayer>,
    pub bn: BatchNorm,
    pub scaler: Option<super::FeatureScaler>,
    pub meta: Option<ModelMeta>,
}

/// Whether batch normalization uses statistics of the current batch or
/// the stored running averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Batch statistics observed during a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnBatchStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

/// Folds a training batch's statistics into the running averages.
pub fn apply_bn_update(params: &mut LstmParams, stats: &BnBatchStats) {
    let m = BN_MOMENTUM;
    params.bn.running_mean =
        &params.bn.running_mean * m + &stats.mean * (1.0 - m);
    params.bn.running_var =
        &params.bn.running_var * m + &stats.var * (1.0 - m);
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    fn build(arch: LstmArch, mut weight: impl FnMut(usize, usize) -> Array2<f64>) -> Result<Self> {
        arch.validate()?;
        let mut layers = Vec::with_capacity(arch.hidden_dims.len());
        let mut d_prev = arch.input_dim;
        for &dh in &arch.hidden_dims {
            let gates = std::array::from_fn(|_| GateParams {
                w: weight(dh + d_prev, dh),
                b: Array1::zeros(dh),
            });
            layers.push(LstmLayer { gates });
            d_prev = dh;
        }
        let mut dense = Vec::with_capacity(arch.dense_dims.len());
        for &dout in &arch.dense_dims {
            dense.push(DenseLayer { w: weight(d_prev, dout), b: Array1::zeros(dout) });
            d_prev = dout;
        }
        let d = arch.bn_dim();
        let bn = BatchNorm {
            gamma: Array1::ones(d),
            beta: Array1::zeros(d),
            running_mean: Array1::zeros(d),
            running_var: Array1::ones(d),
        };
        Ok(Self { arch, layers, dense, bn, scaler: None, meta: None })
    }

    /// Xavier-uniform weights, zero biases, identity batch norm.
    pub fn init_xavier(arch: LstmArch, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(arch, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit))
        })
    }

    /// All-zero weights; used in tests as a known fixed point.
    pub fn zeros(arch: LstmArch) -> Result<Self> {
        Self::build(arch, |fan_in, fan_out| Array2::zeros((fan_in, fan_out)))
    }

    /// Number of trainable scalars (gates, dense layers, batch-norm
    /// scale and shift; running statistics are not trained).
    pub fn trainable_count(&self) -> usize {
        let mut n = 0;
        for layer in &self.layers {
            for g in &layer.gates {
                n += g.w.len() + g.b.len();
            }
        }
        for d in &self.dense {
            n += d.w.len() + d.b.len();
        }
        n + self.bn.gamma.len() + self.bn.beta.len()
    }

    /// Flattens the trainable parameters in a fixed order: LSTM layers
    /// (gates in, f, o, g; weights row-major, then bias), dense layers,
    /// then batch-norm gamma and beta.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_count());
        for layer in &self.layers {
            for g in &layer.gates {
                out.extend(g.w.iter());
                out.extend(g.b.iter());
            }
        }
        for d in &self.dense {
            out.extend(d.w.iter());
            out.extend(d.b.iter());
        }
        out.extend(self.bn.gamma.iter());
        out.extend(self.bn.beta.iter());
        out
    }

    /// Writes a flat vector back into the trainable parameters; the
    /// inverse of [`to_flat`](Self::to_flat).
    pub fn set_trainable(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.trainable_count() {
            return Err(Error::InvalidParams(format!(
                "expected {} parameters, got {}",
                self.trainable_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        let mut take = |dst: &mut f64| *dst = *it.next().unwrap();
        for layer in &mut self.layers {
            for g in &mut layer.gates {
                g.w.iter_mut().for_each(&mut take);
                g.b.iter_mut().for_each(&mut take);
            }
        }
        for d in &mut self.dense {
            d.w.iter_mut().for_each(&mut take);
            d.b.iter_mut().for_each(&mut take);
        }
        self.bn.gamma.iter_mut().for_each(&mut take);
        self.bn.beta.iter_mut().for_each(&mut take);
        Ok(())
    }
}

struct LayerCache {
    /// Concatenated [h_{j-1}, x_j] per timestep.
    zs: Vec<Array2<f64>>,
    /// Gate activations per timestep, order in, f, o, g.
    gates: Vec<[Array2<f64>; 4]>,
    /// Cell states c_1..c_n (c_0 is zero and not stored).
    cells: Vec<Array2<f64>>,
    tanh_cells: Vec<Array2<f64>>,
}

/// Activations recorded by a forward pass, sufficient to run the
/// backward pass without recomputation.
pub struct ForwardCache {
    mode: BnMode,
    layer_caches: Vec<LayerCache>,
    /// Input to each hidden dense layer.
    dense_inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden dense layer.
    dense_pre: Vec<Array2<f64>>,
    bn_xhat: Array2<f64>,
    bn_std_inv: Array1<f64>,
    bn_stats: Option<BnBatchStats>,
    /// Normalized input to the final dense layer.
    final_input: Array2<f64>,
}

impl ForwardCache {
    pub fn bn_stats(&self) -> Option<&BnBatchStats> {
        self.bn_stats.as_ref()
    }
}

/// Runs a batch of windows through the network. Returns one risk
/// estimate per window plus the activation cache.
pub(crate) fn forward_batch(
    params: &LstmParams,
    windows: &[&TransformedWindow],
    mode: BnMode,
) -> Result<(Array1<f64>, ForwardCache)> {
    let first = windows
        .first()
        .ok_or_else(|| Error::InvalidInput("forward pass needs at least one window".into()))?;
    let n = first.features().nrows();
    let b = windows.len();
    for w in windows {
        if w.features().nrows() != n {
            return Err(Error::InvalidInput("windows in a batch must share a length".into()));
        }
        if w.features().ncols() != params.arch.input_dim {
            return Err(Error::InvalidInput(format!(
                "window has {} features, network expects {}",
                w.features().ncols(),
                params.arch.input_dim
            )));
        }
    }

    // batch the inputs per timestep: seq[j] is (batch, width)
    let mut seq: Vec<Array2<f64>> = (0..n)
        .map(|j| {
            let mut x = Array2::zeros((b, params.arch.input_dim));
            for (i, w) in windows.iter().enumerate() {
                x.row_mut(i).assign(&w.features().row(j));
            }
            x
        })
        .collect();

    let mut layer_caches = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let dh = layer.gates[0].b.len();
        let mut h = Array2::zeros((b, dh));
        let mut c = Array2::<f64>::zeros((b, dh));
        let mut cache = LayerCache {
            zs: Vec::with_capacity(n),
            gates: Vec::with_capacity(n),
            cells: Vec::with_capacity(n),
            tanh_cells: Vec::with_capacity(n),
        };
        let mut out_seq = Vec::with_capacity(n);
        for x in &seq {
            let z = ndarray::concatenate(Axis(1), &[h.view(), x.view()])
                .expect("row counts match by construction");
            let act = |k: usize, f: fn(f64) -> f64| -> Array2<f64> {
                (z.dot(&layer.gates[k].w) + &layer.gates[k].b).mapv(f)
            };
            let ia = act(0, sigmoid);
            let fa = act(1, sigmoid);
            let oa = act(2, sigmoid);
            let ga = act(3, f64::tanh);
            c = &fa * &c + &ia * &ga;
            let tc = c.mapv(f64::tanh);
            h = &oa * &tc;
            cache.zs.push(z);
            cache.gates.push([ia, fa, oa, ga]);
            cache.cells.push(c.clone());
            cache.tanh_cells.push(tc);
            out_seq.push(h.clone());
        }
        seq = out_seq;
        layer_caches.push(cache);
    }

    // dense head on the last hidden state
    let mut x = seq.pop().expect("window length is at least one");
    let n_hidden = params.dense.len() - 1;
    let mut dense_inputs = Vec::with_capacity(n_hidden);
    let mut dense_pre = Vec::with_capacity(n_hidden);
    for d in &params.dense[..n_hidden] {
        let pre = x.dot(&d.w) + &d.b;
        dense_inputs.push(x);
        x = pre.mapv(|v| v.max(0.0));
        dense_pre.push(pre);
    }

    // batch normalization before the final layer
    let (mean, var, bn_stats) = match mode {
        BnMode::Train => {
            let mean = x.mean_axis(Axis(0)).expect("batch is non-empty");
            let centered = &x - &mean;
            let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("batch is non-empty");
            let stats = BnBatchStats { mean: mean.clone(), var: var.clone() };
            (mean, var, Some(stats))
        }
        BnMode::Infer => (params.bn.running_mean.clone(), params.bn.running_var.clone(), None),
    };
    let std_inv = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = (&x - &mean) * &std_inv;
    let bn_out = &xhat * &params.bn.gamma + &params.bn.beta;

    let last = params.dense.last().expect("validated to be non-empty");
    let out = bn_out.dot(&last.w) + &last.b;
    let outputs = out.column(0).to_owned();

    let cache = ForwardCache {
        mode,
        layer_caches,
        dense_inputs,
        dense_pre,
        bn_xhat: xhat,
        bn_std_inv: std_inv,
        bn_stats,
        final_input: bn_out,
    };
    Ok((outputs, cache))
}

/// Risk estimate for a single already-transformed window.
pub fn lstm_forward(t: &TransformedWindow, params: &LstmParams, mode: BnMode) -> Result<f64> {
    let (out, _) = forward_batch(params, &[t], mode)?;
    Ok(out[0])
}

/// Batched variant of [`lstm_forward`]: entry b is the risk estimate of
/// `windows[b]`. In training mode the batch is normalized jointly, so
/// results differ from per-window calls.
pub fn lstm_forward_batch(
    windows: &[&TransformedWindow],
    params: &LstmParams,
    mode: BnMode,
) -> Result<Vec<f64>> {
    let (out, _) = forward_batch(params, windows, mode)?;
    Ok(out.to_vec())
}

/// Gradient of the trainable parameters given the per-sample gradient
/// of the loss with respect to the network outputs. Returns the flat
/// layout of [`LstmParams::to_flat`]. The cache must come from a
/// training-mode forward pass.
pub(crate) fn backward_batch(
    params: &LstmParams,
    cache: &ForwardCache,
    d_out: &Array1<f64>,
) -> Result<Vec<f64>> {
    if cache.mode != BnMode::Train {
        return Err(Error::InvalidState(
            "backward pass requires a training-mode forward cache".into(),
        ));
    }
    let b = d_out.len();
    if cache.final_input.nrows() != b {
        return Err(Error::InvalidInput(format!(
            "output gradient has {} entries, batch has {}",
            b,
            cache.final_input.nrows()
        )));
    }
    let bf = b as f64;

    let mut grad_layers: Vec<[(Array2<f64>, Array1<f64>); 4]> = params
        .layers
        .iter()
        .map(|l| {
            std::array::from_fn(|k| {
                (Array2::zeros(l.gates[k].w.dim()), Array1::zeros(l.gates[k].b.len()))
            })
        })
        .collect();
    let mut grad_dense: Vec<(Array2<f64>, Array1<f64>)> = params
        .dense
        .iter()
        .map(|d| (Array2::zeros(d.w.dim()), Array1::zeros(d.b.len())))
        .collect();

    // final dense layer
    let dmat = d_out.view().insert_axis(Axis(1)).to_owned();
    let last_idx = params.dense.len() - 1;
    grad_dense[last_idx].0 = cache.final_input.t().dot(&dmat);
    grad_dense[last_idx].1 = dmat.sum_axis(Axis(0));
    let d_bn_out = dmat.dot(&params.dense[last_idx].w.t());

    // batch normalization
    let xhat = &cache.bn_xhat;
    let grad_gamma = (&d_bn_out * xhat).sum_axis(Axis(0));
    let grad_beta = d_bn_out.sum_axis(Axis(0));
    let dxhat = &d_bn_out * &params.bn.gamma;
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
    let mut dx = ((&dxhat * bf) - &sum_dxhat - xhat * &sum_dxhat_xhat) * &cache.bn_std_inv / bf;

    // hidden dense layers, top down
    for i in (0..last_idx).rev() {
        let mask = cache.dense_pre[i].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let d_pre = &dx * &mask;
        grad_dense[i].0 = cache.dense_inputs[i].t().dot(&d_pre);
        grad_dense[i].1 = d_pre.sum_axis(Axis(0));
        dx = d_pre.dot(&params.dense[i].w.t());
    }

    // backpropagation through time, top layer first; only the final
    // timestep of the top layer receives a gradient from the head
    let n = cache.layer_caches[0].zs.len();
    let top_dh = params.layers.last().unwrap().gates[0].b.len();
    let mut d_above: Vec<Array2<f64>> = (0..n).map(|_| Array2::zeros((b, top_dh))).collect();
    d_above[n - 1] = dx;

    for (li, layer) in params.layers.iter().enumerate().rev() {
        let lc = &cache.layer_caches[li];
        let dh = layer.gates[0].b.len();
        let d_prev = lc.zs[0].ncols() - dh;
        let mut d_below: Vec<Array2<f64>> = (0..n).map(|_| Array2::zeros((b, d_prev))).collect();
        let mut dh_carry = Array2::<f64>::zeros((b, dh));
        let mut dc = Array2::<f64>::zeros((b, dh));
        for j in (0..n).rev() {
            let dh_total = &d_above[j] + &dh_carry;
            let [ia, fa, oa, ga] = &lc.gates[j];
            let tc = &lc.tanh_cells[j];
            let d_o = &dh_total * tc;
            dc = dc + &dh_total * oa * tc.mapv(|v| 1.0 - v * v);
            let d_i = &dc * ga;
            let d_g = &dc * ia;
            let d_f = if j == 0 {
                Array2::zeros((b, dh)) // c_0 is zero
            } else {
                &dc * &lc.cells[j - 1]
            };
            let dc_carry = &dc * fa;
            let d_pre = [
                &d_i * &(ia * &ia.mapv(|v| 1.0 - v)),
                &d_f * &(fa * &fa.mapv(|v| 1.0 - v)),
                &d_o * &(oa * &oa.mapv(|v| 1.0 - v)),
                &d_g * &ga.mapv(|v| 1.0 - v * v),
            ];
            let mut dz = Array2::<f64>::zeros((b, dh + d_prev));
            for (k, dp) in d_pre.iter().enumerate() {
                grad_layers[li][k].0 += &lc.zs[j].t().dot(dp);
                grad_layers[li][k].1 += &dp.sum_axis(Axis(0));
                dz += &dp.dot(&layer.gates[k].w.t());
            }
            dh_carry = dz.slice(s![.., ..dh]).to_owned();
            d_below[j] = dz.slice(s![.., dh..]).to_owned();
            dc = dc_carry;
        }
        d_above = d_below;
    }

    // flatten in the canonical trainable order
    let mut flat = Vec::with_capacity(params.trainable_count());
    for gl in &grad_layers {
        for (gw, gb) in gl {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
    }
    for (gw, gb) in &grad_dense {
        flat.extend(gw.iter());
        flat.extend(gb.iter());
    }
    flat.extend(grad_gamma.iter());
    flat.extend(grad_beta.iter());
    Ok(flat)
}
