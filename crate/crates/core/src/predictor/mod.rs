//! Next-frame backlog prediction from channel-state observations.
//!
//! The base station only sees, per class, how many channels were selected
//! by exactly one device, by several, or by none. Predictors turn a window
//! of those triplets into per-class backlog estimates for the coming frame.

mod lstm;

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::ServiceClass;

pub use lstm::{train, LstmModel, TensorSpec, TrainConfig, TrainReport, OUTPUTS};

/// Collision-to-backlog multiplier of the moving-average estimator: a
/// collided channel holds about 2.39 devices under uniform selection at
/// the throughput optimum.
pub const COLLISION_WEIGHT: f64 = 2.39;

pub const MODEL_FORMAT: &str = "hybrid-ra-lstm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("empty history, a learned predictor needs at least one observation")]
    ColdStart,
    #[error("the oracle predictor needs the realized backlog")]
    NoOracleTruth,
    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),
    #[error("cannot compute an error over empty sequences")]
    Empty,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("at least one epoch is required")]
    NoEpochs,
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Success / collision / idle channel counts of one class in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Triplet {
    pub success: u32,
    pub collision: u32,
    pub idle: u32,
}

impl Triplet {
    pub fn channels(&self) -> u32 {
        self.success + self.collision + self.idle
    }

    /// Fractions of the class's channels in each state; zeros when the class had none.
    pub fn fractions(&self) -> [f64; 3] {
        let l = self.channels();
        if l == 0 {
            return [0.0; 3];
        }
        let l = f64::from(l);
        [
            f64::from(self.success) / l,
            f64::from(self.collision) / l,
            f64::from(self.idle) / l,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub frame_index: u64,
    pub urllc: Triplet,
    pub mmtc: Triplet,
}

impl Observation {
    pub fn class(&self, class: ServiceClass) -> &Triplet {
        match class {
            ServiceClass::Urllc => &self.urllc,
            ServiceClass::Mmtc => &self.mmtc,
        }
    }
}

/// The last `capacity` observations, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    window: VecDeque<Observation>,
    capacity: usize,
}

impl History {
    pub fn new(capacity: usize) -> Self {
        assert!(
            capacity >= 1,
            "history window must hold at least one observation"
        );
        Self {
            window: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, obs: Observation) {
        if let Some(last) = self.window.back() {
            debug_assert_eq!(
                obs.frame_index,
                last.frame_index + 1,
                "history must be contiguous"
            );
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(obs);
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &Observation> + ExactSizeIterator {
        self.window.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BacklogEstimate {
    pub k_hat_u: u32,
    pub k_hat_m: u32,
}

/// Population sizes used to normalize backlogs and clamp estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub k_u: u32,
    pub k_m: u32,
}

impl Population {
    pub fn normalize(&self, backlog: (u32, u32)) -> [f64; OUTPUTS] {
        [ratio(backlog.0, self.k_u), ratio(backlog.1, self.k_m)]
    }

    fn clamp_round(&self, raw: [f64; OUTPUTS]) -> BacklogEstimate {
        let fix = |v: f64, k: u32| {
            let v = if v.is_finite() { v } else { 0.0 };
            (v * f64::from(k)).round().clamp(0.0, f64::from(k)) as u32
        };
        BacklogEstimate {
            k_hat_u: fix(raw[0], self.k_u),
            k_hat_m: fix(raw[1], self.k_m),
        }
    }
}

fn ratio(n: u32, d: u32) -> f64 {
    if d == 0 {
        0.0
    } else {
        f64::from(n) / f64::from(d)
    }
}

/// Per-timestep input encoding: the six channel-state fractions followed by
/// the frame phase within the mMTC and URLLC periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub t_p: u32,
    pub t_u: u32,
}

impl FeatureSpec {
    pub const WIDTH: usize = 8;

    pub fn encode(&self, obs: &Observation) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::WIDTH);
        v.extend(obs.urllc.fractions());
        v.extend(obs.mmtc.fractions());
        v.push((obs.frame_index % u64::from(self.t_p)) as f64 / f64::from(self.t_p));
        v.push((obs.frame_index % u64::from(self.t_u)) as f64 / f64::from(self.t_u));
        v
    }

    pub fn encode_history(&self, history: &History) -> Vec<Vec<f64>> {
        history.iter().map(|o| self.encode(o)).collect()
    }
}

/// An LSTM together with the encoding and scaling it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmPredictor {
    pub model: LstmModel,
    pub features: FeatureSpec,
    pub population: Population,
    pub window: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    input_size: usize,
    hidden_size: usize,
    layers: usize,
    window: usize,
    features: FeatureSpec,
    population: Population,
    tensors: Vec<TensorFile>,
}

#[derive(Serialize, Deserialize)]
struct TensorFile {
    name: String,
    rows: usize,
    cols: usize,
    /// Row-major values.
    data: Vec<f64>,
}

impl LstmPredictor {
    pub fn predict(&self, history: &History) -> Result<BacklogEstimate, PredictorError> {
        if history.is_empty() {
            return Err(PredictorError::ColdStart);
        }
        let seq = self.features.encode_history(history);
        Ok(self.population.clamp_round(self.model.forward(&seq)))
    }

    /// Normalized (unrounded) prediction.
    pub fn predict_normalized(&self, history: &History) -> Result<[f64; OUTPUTS], PredictorError> {
        if history.is_empty() {
            return Err(PredictorError::ColdStart);
        }
        Ok(self.model.forward(&self.features.encode_history(history)))
    }

    pub fn to_json(&self) -> Result<String, PredictorError> {
        let params = self.model.params();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            input_size: self.model.input_size(),
            hidden_size: self.model.hidden_size(),
            layers: self.model.layers(),
            window: self.window,
            features: self.features,
            population: self.population,
            tensors: self
                .model
                .tensors()
                .into_iter()
                .map(|t| TensorFile {
                    data: params[t.range()].to_vec(),
                    name: t.name,
                    rows: t.rows,
                    cols: t.cols,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(PredictorError::Format(format!(
                "unknown format `{}`",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(PredictorError::Format(format!(
                "unsupported version {}",
                file.version
            )));
        }
        if file.input_size == 0 || file.hidden_size == 0 || file.layers == 0 {
            return Err(PredictorError::Format(
                "dimensions must be at least 1".into(),
            ));
        }
        let specs = LstmModel::layout(file.input_size, file.hidden_size, file.layers);
        if specs.len() != file.tensors.len() {
            return Err(PredictorError::Format(
                "tensor count does not match dimensions".into(),
            ));
        }
        let mut params = Vec::new();
        for (spec, t) in specs.iter().zip(&file.tensors) {
            if spec.name != t.name
                || spec.rows != t.rows
                || spec.cols != t.cols
                || t.data.len() != spec.len()
            {
                return Err(PredictorError::Format(format!(
                    "tensor `{}` has the wrong shape",
                    t.name
                )));
            }
            params.extend_from_slice(&t.data);
        }
        let model = LstmModel::from_parts(file.input_size, file.hidden_size, file.layers, params)?;
        if file.window == 0 {
            return Err(PredictorError::Format("window must be at least 1".into()));
        }
        Ok(Self {
            model,
            features: file.features,
            population: file.population,
            window: file.window,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Moving average of the per-frame backlog estimate `V_s + 2.39 V_c`.
pub fn moving_average(
    history: &History,
    window: usize,
    population: Population,
) -> Result<BacklogEstimate, PredictorError> {
    if history.is_empty() {
        return Err(PredictorError::ColdStart);
    }
    let recent: Vec<&Observation> = history.iter().rev().take(window.max(1)).collect();
    let n = recent.len() as f64;
    let est = |class: ServiceClass| {
        recent
            .iter()
            .map(|o| {
                let t = o.class(class);
                f64::from(t.success) + COLLISION_WEIGHT * f64::from(t.collision)
            })
            .sum::<f64>()
            / n
    };
    let raw = [
        est(ServiceClass::Urllc) / f64::from(population.k_u.max(1)),
        est(ServiceClass::Mmtc) / f64::from(population.k_m.max(1)),
    ];
    Ok(population.clamp_round(raw))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    /// Reads the realized backlog from the simulator.
    Oracle,
    MovingAverage {
        window: usize,
    },
    Lstm(Box<LstmPredictor>),
}

impl Predictor {
    /// `truth` is the realized backlog `(urllc, mmtc)`; only the oracle reads it.
    pub fn predict(
        &self,
        history: &History,
        truth: Option<(u32, u32)>,
        population: Population,
    ) -> Result<BacklogEstimate, PredictorError> {
        match self {
            Predictor::Oracle => {
                let (u, m) = truth.ok_or(PredictorError::NoOracleTruth)?;
                Ok(BacklogEstimate {
                    k_hat_u: u.min(population.k_u),
                    k_hat_m: m.min(population.k_m),
                })
            }
            Predictor::MovingAverage { window } => moving_average(history, *window, population),
            Predictor::Lstm(p) => p.predict(history),
        }
    }

    pub fn is_learned(&self) -> bool {
        !matches!(self, Predictor::Oracle)
    }
}

/// Mean squared difference of two equally long sequences.
pub fn mse(predictions: &[f64], truths: &[f64]) -> Result<f64, PredictorError> {
    if predictions.len() != truths.len() {
        return Err(PredictorError::LengthMismatch(
            predictions.len(),
            truths.len(),
        ));
    }
    if predictions.is_empty() {
        return Err(PredictorError::Empty);
    }
    Ok(predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / predictions.len() as f64)
}

/// One training pair per frame that has at least `min_context` observations
/// before it: the encoded window of up to `window` preceding observations and
/// the normalized backlog realized in that frame.
pub fn build_dataset(
    observations: &[Observation],
    backlogs: &[(u32, u32)],
    features: FeatureSpec,
    population: Population,
    window: usize,
    min_context: usize,
) -> Vec<(Vec<Vec<f64>>, [f64; OUTPUTS])> {
    assert_eq!(observations.len(), backlogs.len());
    let encoded: Vec<Vec<f64>> = observations.iter().map(|o| features.encode(o)).collect();
    (min_context.max(1)..observations.len())
        .map(|t| {
            let start = t.saturating_sub(window);
            (
                encoded[start..t].to_vec(),
                population.normalize(backlogs[t]),
            )
        })
        .collect()
}
