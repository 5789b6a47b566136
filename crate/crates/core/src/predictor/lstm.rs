//! Stacked LSTM regressor with a linear two-output head.
//!
//! All parameters live in one flat vector; [`LstmModel::tensors`] describes
//! how it is cut into per-layer weight matrices and biases. Gates are laid
//! out as `[input, forget, candidate, output]` blocks of `hidden` rows, and
//! each gate row sees `[x_t ; h_{t-1}]`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PredictorError;

pub const OUTPUTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    input_size: usize,
    hidden_size: usize,
    layers: usize,
    params: Vec<f64>,
}

/// Per-timestep activations of one layer, kept for the backward pass.
struct StepCache {
    z: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct ForwardCache {
    /// `steps[layer][t]`
    steps: Vec<Vec<StepCache>>,
    top_h: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    /// Fresh model with every parameter drawn from `U(-0.1, 0.1)`.
    pub fn new<R: Rng + ?Sized>(
        input_size: usize,
        hidden_size: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        assert!(input_size >= 1 && hidden_size >= 1 && layers >= 1);
        let mut model = Self {
            input_size,
            hidden_size,
            layers,
            params: Vec::new(),
        };
        let n = model
            .tensors()
            .last()
            .map(|t| t.offset + t.len())
            .unwrap_or(0);
        model.params = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
        model
    }

    pub fn from_parts(
        input_size: usize,
        hidden_size: usize,
        layers: usize,
        params: Vec<f64>,
    ) -> Result<Self, PredictorError> {
        let model = Self {
            input_size,
            hidden_size,
            layers,
            params: Vec::new(),
        };
        let expected = model
            .tensors()
            .last()
            .map(|t| t.offset + t.len())
            .unwrap_or(0);
        if params.len() != expected {
            return Err(PredictorError::Format(format!(
                "expected {expected} parameters, found {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(PredictorError::Format("non-finite parameter".into()));
        }
        Ok(Self { params, ..model })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensors(&self) -> Vec<TensorSpec> {
        Self::layout(self.input_size, self.hidden_size, self.layers)
    }

    /// Parameter tensors of a model with the given dimensions, in storage order.
    pub fn layout(input_size: usize, hidden_size: usize, layers: usize) -> Vec<TensorSpec> {
        let h = hidden_size;
        let mut out = Vec::with_capacity(2 * layers + 2);
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            out.push(TensorSpec {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        };
        for l in 0..layers {
            let inp = if l == 0 { input_size } else { h };
            push(format!("layer{l}.w"), 4 * h, inp + h);
            push(format!("layer{l}.b"), 4 * h, 1);
        }
        push("head.w".into(), OUTPUTS, h);
        push("head.b".into(), OUTPUTS, 1);
        out
    }

    fn layer_offsets(&self, layer: usize) -> (usize, usize, usize) {
        let h = self.hidden_size;
        let mut off = 0;
        for l in 0..layer {
            let inp = if l == 0 { self.input_size } else { h };
            off += 4 * h * (inp + h) + 4 * h;
        }
        let inp = if layer == 0 { self.input_size } else { h };
        (off, off + 4 * h * (inp + h), inp)
    }

    fn head_offset(&self) -> usize {
        self.layer_offsets(self.layers - 1).1 + 4 * self.hidden_size
    }

    /// Raw head output for a sequence of feature vectors.
    pub fn forward(&self, seq: &[Vec<f64>]) -> [f64; OUTPUTS] {
        self.forward_cached(seq).0
    }

    fn forward_cached(&self, seq: &[Vec<f64>]) -> ([f64; OUTPUTS], ForwardCache) {
        let h = self.hidden_size;
        let mut inputs: Vec<Vec<f64>> = seq.to_vec();
        let mut steps = Vec::with_capacity(self.layers);
        for layer in 0..self.layers {
            let (w_off, b_off, inp) = self.layer_offsets(layer);
            let w = &self.params[w_off..b_off];
            let b = &self.params[b_off..b_off + 4 * h];
            let cols = inp + h;
            let mut h_prev = vec![0.0; h];
            let mut c_prev = vec![0.0; h];
            let mut outputs = Vec::with_capacity(inputs.len());
            let mut caches = Vec::with_capacity(inputs.len());
            for x in &inputs {
                debug_assert_eq!(x.len(), inp);
                let mut z = Vec::with_capacity(cols);
                z.extend_from_slice(x);
                z.extend_from_slice(&h_prev);
                let mut a = b.to_vec();
                for (r, ar) in a.iter_mut().enumerate() {
                    let row = &w[r * cols..(r + 1) * cols];
                    *ar += row.iter().zip(&z).map(|(p, q)| p * q).sum::<f64>();
                }
                let i: Vec<f64> = a[..h].iter().map(|&v| sigmoid(v)).collect();
                let f: Vec<f64> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
                let g: Vec<f64> = a[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
                let o: Vec<f64> = a[3 * h..].iter().map(|&v| sigmoid(v)).collect();
                let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
                let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                let h_new: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
                caches.push(StepCache {
                    z,
                    i,
                    f,
                    g,
                    o,
                    c_prev: std::mem::replace(&mut c_prev, c),
                    tanh_c,
                });
                outputs.push(h_new.clone());
                h_prev = h_new;
            }
            steps.push(caches);
            inputs = outputs;
        }
        let top_h = inputs.last().cloned().unwrap_or_else(|| vec![0.0; h]);
        let head = self.head_offset();
        let mut y = [0.0; OUTPUTS];
        for (k, yk) in y.iter_mut().enumerate() {
            let row = &self.params[head + k * h..head + (k + 1) * h];
            *yk = self.params[head + OUTPUTS * h + k]
                + row.iter().zip(&top_h).map(|(p, q)| p * q).sum::<f64>();
        }
        (y, ForwardCache { steps, top_h })
    }

    /// Squared-error loss `mean_k (y_k - target_k)^2` for one sequence, and
    /// its gradient accumulated (scaled by `scale`) into `grad`.
    pub fn loss_and_grad(
        &self,
        seq: &[Vec<f64>],
        target: &[f64; OUTPUTS],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let h = self.hidden_size;
        let (y, cache) = self.forward_cached(seq);
        let loss = y
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / OUTPUTS as f64;
        let dy: Vec<f64> = y
            .iter()
            .zip(target)
            .map(|(a, b)| scale * 2.0 * (a - b) / OUTPUTS as f64)
            .collect();

        let head = self.head_offset();
        let mut dh_top = vec![0.0; h];
        for k in 0..OUTPUTS {
            for j in 0..h {
                grad[head + k * h + j] += dy[k] * cache.top_h[j];
                dh_top[j] += dy[k] * self.params[head + k * h + j];
            }
            grad[head + OUTPUTS * h + k] += dy[k];
        }

        let steps_len = seq.len();
        // Gradient w.r.t. each layer's outputs; only the last step of the top layer feeds the head.
        let mut dh_ext = vec![vec![0.0; h]; steps_len];
        if let Some(last) = dh_ext.last_mut() {
            *last = dh_top;
        }
        for layer in (0..self.layers).rev() {
            let (w_off, b_off, inp) = self.layer_offsets(layer);
            let cols = inp + h;
            let mut dx = vec![vec![0.0; inp]; steps_len];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for t in (0..steps_len).rev() {
                let s = &cache.steps[layer][t];
                let mut da = vec![0.0; 4 * h];
                for k in 0..h {
                    let dh = dh_ext[t][k] + dh_next[k];
                    let d_o = dh * s.tanh_c[k];
                    let dc = dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
                    let di = dc * s.g[k];
                    let dg = dc * s.i[k];
                    let df = dc * s.c_prev[k];
                    da[k] = di * s.i[k] * (1.0 - s.i[k]);
                    da[h + k] = df * s.f[k] * (1.0 - s.f[k]);
                    da[2 * h + k] = dg * (1.0 - s.g[k] * s.g[k]);
                    da[3 * h + k] = d_o * s.o[k] * (1.0 - s.o[k]);
                    dc_next[k] = dc * s.f[k];
                }
                let mut dz = vec![0.0; cols];
                for (r, &dar) in da.iter().enumerate() {
                    if dar == 0.0 {
                        continue;
                    }
                    let row = w_off + r * cols;
                    for c in 0..cols {
                        grad[row + c] += dar * s.z[c];
                        dz[c] += dar * self.params[row + c];
                    }
                    grad[b_off + r] += dar;
                }
                dx[t].copy_from_slice(&dz[..inp]);
                dh_next.copy_from_slice(&dz[inp..]);
            }
            dh_ext = dx;
        }
        loss
    }

    /// Mean loss over a set of sequences, without gradients.
    pub fn mean_loss(&self, data: &[(Vec<Vec<f64>>, [f64; OUTPUTS])]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        data.iter()
            .map(|(seq, target)| {
                let y = self.forward(seq);
                y.iter()
                    .zip(target)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / OUTPUTS as f64
            })
            .sum::<f64>()
            / data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Stop once the epoch loss improves by less than this for `patience` epochs.
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 5e-3,
            lr_decay: 0.995,
            batch_size: 32,
            clip_norm: 1.0,
            tolerance: 0.0,
            patience: usize::MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean training loss per completed epoch, measured after the epoch's updates.
    pub epoch_loss: Vec<f64>,
    pub initial_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch Adam with global gradient-norm clipping.
pub fn train<R: Rng + ?Sized>(
    model: &mut LstmModel,
    data: &[(Vec<Vec<f64>>, [f64; OUTPUTS])],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport, PredictorError> {
    if data.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    if cfg.epochs == 0 {
        return Err(PredictorError::NoEpochs);
    }
    let n = model.params.len();
    let mut adam = Adam::new(n);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; n];
    let mut lr = cfg.learning_rate;
    let initial_loss = model.mean_loss(data);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut best = initial_loss;
    let mut stale = 0;
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &k in chunk {
                let (seq, target) = &data[k];
                model.loss_and_grad(seq, target, scale, &mut grad);
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(PredictorError::Divergence { epoch });
            }
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            adam.step(&mut model.params, &grad, lr);
        }
        lr *= cfg.lr_decay;
        let loss = model.mean_loss(data);
        if !loss.is_finite() {
            return Err(PredictorError::Divergence { epoch });
        }
        epoch_loss.push(loss);
        if best - loss > cfg.tolerance {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainReport {
        epoch_loss,
        initial_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn toy_sequence(len: usize, width: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn loss_only(model: &LstmModel, seq: &[Vec<f64>], target: &[f64; OUTPUTS]) -> f64 {
        let y = model.forward(seq);
        y.iter()
            .zip(target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / OUTPUTS as f64
    }

    /// Central differences against the analytic gradient, per tensor.
    fn max_relative_error(layers: usize) -> Vec<(String, f64)> {
        let mut rng = stream(2024, 0);
        let mut model = LstmModel::new(3, 2, layers, &mut rng);
        // Larger weights so every gate operates away from its linear regime.
        for p in model.params_mut() {
            *p *= 5.0;
        }
        let seq = toy_sequence(6, 3, &mut rng);
        let target = [0.3, -0.7];
        let mut grad = vec![0.0; model.params().len()];
        model.loss_and_grad(&seq, &target, 1.0, &mut grad);

        let step = 1e-5;
        model
            .tensors()
            .into_iter()
            .map(|t| {
                let mut worst: f64 = 0.0;
                for k in t.range() {
                    let orig = model.params()[k];
                    model.params_mut()[k] = orig + step;
                    let up = loss_only(&model, &seq, &target);
                    model.params_mut()[k] = orig - step;
                    let down = loss_only(&model, &seq, &target);
                    model.params_mut()[k] = orig;
                    let numeric = (up - down) / (2.0 * step);
                    let denom = numeric.abs().max(grad[k].abs()).max(1e-6);
                    worst = worst.max((numeric - grad[k]).abs() / denom);
                }
                (t.name, worst)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for layers in [1, 2] {
            for (name, err) in max_relative_error(layers) {
                assert!(
                    err < 1e-4,
                    "{layers} layer(s), {name}: relative error {err}"
                );
            }
        }
    }

    #[test]
    fn gates_stay_bounded_on_long_rollouts() {
        let mut rng = stream(3, 0);
        let mut model = LstmModel::new(4, 5, 1, &mut rng);
        for p in model.params_mut() {
            *p *= 20.0;
        }
        let seq = toy_sequence(10_000, 4, &mut rng);
        let (y, cache) = model.forward_cached(&seq);
        assert!(y.iter().all(|v| v.is_finite()));
        for s in &cache.steps[0] {
            for k in 0..5 {
                for gate in [s.i[k], s.f[k], s.o[k]] {
                    assert!((0.0..=1.0).contains(&gate));
                }
                assert!((-1.0..=1.0).contains(&s.g[k]));
                assert!(s.c_prev[k].is_finite());
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = stream(4, 0);
        let model = LstmModel::new(3, 4, 2, &mut rng);
        let seq = toy_sequence(8, 3, &mut rng);
        assert_eq!(model.forward(&seq), model.forward(&seq));
    }

    #[test]
    fn learns_a_constant() {
        let mut rng = stream(5, 0);
        let mut model = LstmModel::new(2, 4, 1, &mut rng);
        let data: Vec<_> = (0..64)
            .map(|_| (toy_sequence(5, 2, &mut rng), [0.4, 0.1]))
            .collect();
        let cfg = TrainConfig {
            epochs: 150,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &cfg, &mut rng).unwrap();
        assert!(report.epoch_loss.last().unwrap() < &1e-4);
        let y = model.forward(&data[0].0);
        assert!(
            (y[0] - 0.4).abs() < 0.01 && (y[1] - 0.1).abs() < 0.01,
            "{y:?}"
        );
    }

    #[test]
    fn learns_a_periodic_pattern() {
        let mut rng = stream(6, 0);
        let mut model = LstmModel::new(1, 6, 1, &mut rng);
        // Two-level square wave of period 10; predict the next value.
        let wave = |t: usize| if t % 10 < 5 { 0.8 } else { 0.2 };
        let data: Vec<_> = (0..100)
            .map(|start| {
                let seq = (start..start + 12).map(|t| vec![wave(t)]).collect();
                let next = wave(start + 12);
                (seq, [next, 1.0 - next])
            })
            .collect();
        let before = model.mean_loss(&data);
        let cfg = TrainConfig {
            epochs: 100,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &cfg, &mut rng).unwrap();
        assert!(*report.epoch_loss.last().unwrap() < before / 10.0);
    }

    #[test]
    fn rejects_empty_training() {
        let mut rng = stream(7, 0);
        let mut model = LstmModel::new(1, 1, 1, &mut rng);
        assert!(matches!(
            train(&mut model, &[], &TrainConfig::default(), &mut rng),
            Err(PredictorError::EmptyDataset)
        ));
        let data = vec![(vec![vec![0.0]], [0.0, 0.0])];
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut model, &data, &cfg, &mut rng),
            Err(PredictorError::NoEpochs)
        ));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut rng = stream(8, 0);
        let mut model = LstmModel::new(1, 2, 1, &mut rng);
        let data = vec![(vec![vec![f64::NAN]], [0.0, 0.0])];
        let err = train(&mut model, &data, &TrainConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, PredictorError::Divergence { epoch: 0 }));
    }
}
