//! Scenario configuration: TOML files, named presets and `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acb::{AcbConfig, AcbMode};
use crate::error::{ensure, InvalidParam};
use crate::grid::{GridConfig, ServiceProfile};
use crate::predictor::TrainConfig;
use crate::predictor::{BacklogEstimate, Predictor};
use crate::protocol::{ChannelSource, ProtocolConfig};
use crate::slicer::{maxrect_pack, SlicerConfig, SlicerWeights, SlicingMode};
use crate::traffic::TrafficConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}:{col}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unknown preset `{0}` (available: {list})", list = PRESETS.join(", "))]
    UnknownPreset(String),
    #[error(transparent)]
    Invalid(#[from] InvalidParam),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// How channels are reserved each frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Reservation {
    /// Pack the grid from the predicted backlog every frame.
    Slicer,
    Fixed {
        l_u: u32,
        l_m: u32,
    },
    /// `l_u` looked up from `table` (rows `[k_m, l_u]`, linear interpolation,
    /// rounded) and `l_m = total - l_u`.
    Variable {
        total: u32,
        table: Vec<[u32; 2]>,
    },
}

impl Reservation {
    /// Channel counts for a population of `k_m` mMTC devices; `None` for slicer-driven.
    pub fn resolve(&self, k_m: u32) -> Option<(u32, u32)> {
        match self {
            Reservation::Slicer => None,
            Reservation::Fixed { l_u, l_m } => Some((*l_u, *l_m)),
            Reservation::Variable { total, table } => {
                let l_u = interpolate(table, k_m).min(*total);
                Some((l_u, total - l_u))
            }
        }
    }
}

/// Piecewise-linear lookup in rows sorted by the first column, clamped at the ends.
pub fn interpolate(table: &[[u32; 2]], x: u32) -> u32 {
    let Some(first) = table.first() else {
        return 0;
    };
    if x <= first[0] {
        return first[1];
    }
    for pair in table.windows(2) {
        let ([x0, y0], [x1, y1]) = (pair[0], pair[1]);
        if x <= x1 {
            let frac = f64::from(x - x0) / f64::from(x1 - x0);
            return (f64::from(y0) + frac * (f64::from(y1) - f64::from(y0))).round() as u32;
        }
    }
    table[table.len() - 1][1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Oracle,
    MovingAverage,
    Lstm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Observation frames kept for the learned predictors.
    pub window: usize,
    /// Frames averaged by the moving-average predictor.
    pub ma_window: usize,
    /// Model file for `lstm`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Oracle,
            window: 20,
            ma_window: 10,
            model: None,
        }
    }
}

/// Settings of `train-predictor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// Number of (history, backlog) pairs to synthesize.
    pub samples: usize,
    /// Share of samples held out for evaluation.
    pub holdout: f64,
    pub hidden: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Channels reserved while synthesizing training traffic.
    pub probe_l_u: u32,
    pub probe_l_m: u32,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            samples: 2000,
            holdout: 0.2,
            hidden: 16,
            layers: 1,
            learning_rate: t.learning_rate,
            lr_decay: t.lr_decay,
            batch_size: t.batch_size,
            clip_norm: t.clip_norm,
            probe_l_u: 5,
            probe_l_m: 49,
        }
    }
}

impl TrainingConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            batch_size: self.batch_size,
            clip_norm: self.clip_norm,
            ..TrainConfig::default()
        }
    }
}

/// Default sweep of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted key of a numeric scenario field.
    pub axis: String,
    pub values: Vec<f64>,
    /// When set and the axis is `traffic.k_m`, each point also sets `traffic.k_u = k_m / ku_divisor`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ku_divisor: Option<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: "traffic.k_m".into(),
            values: vec![1000.0, 2000.0, 4000.0],
            ku_divisor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write the per-frame event log of realization 0.
    pub event_log: bool,
    /// Write the long-format per-realization CSV.
    pub long_csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            event_log: false,
            long_csv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub frames: u64,
    pub realizations: usize,
    pub seed: u64,
    pub traffic: TrafficConfig,
    pub grid: GridConfig,
    pub urllc: ServiceProfile,
    pub mmtc: ServiceProfile,
    pub weights: SlicerWeights,
    pub slicer: SlicerConfig,
    pub acb: AcbConfig,
    pub reservation: Reservation,
    pub predictor: PredictorConfig,
    pub training: TrainingConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "table1-baseline".into(),
            frames: 1000,
            realizations: 100,
            seed: 1,
            traffic: TrafficConfig::default(),
            grid: GridConfig::default(),
            urllc: ServiceProfile::urllc_default(),
            mmtc: ServiceProfile::mmtc_default(),
            weights: SlicerWeights::default(),
            slicer: SlicerConfig::default(),
            acb: AcbConfig::default(),
            reservation: Reservation::Slicer,
            predictor: PredictorConfig::default(),
            training: TrainingConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

pub const PRESETS: [&str; 8] = [
    "table1-baseline",
    "loading-slicing",
    "loading-no-slicing",
    "fixed-split",
    "fixed-split-no-barring",
    "variable-split",
    "perfect-prediction",
    "perfect-prediction-40",
];

/// Grid wide enough to hold the 54-channel fixed reservations of the split presets.
const WIDE_GRID: GridConfig = GridConfig {
    f: 100,
    s: 10,
    nu: 14,
    xi: 5,
};

fn users_sweep(divisor: u32) -> SweepConfig {
    SweepConfig {
        axis: "traffic.k_m".into(),
        values: vec![
            1000.0, 2000.0, 4000.0, 8000.0, 10000.0, 16000.0, 20000.0, 30000.0,
        ],
        ku_divisor: Some(divisor),
    }
}

fn split(name: &str, reservation: Reservation, mode: AcbMode) -> Scenario {
    Scenario {
        name: name.into(),
        traffic: TrafficConfig {
            k_m: 4000,
            k_u: 100,
            ..TrafficConfig::default()
        },
        grid: WIDE_GRID,
        acb: AcbConfig {
            mode,
            ..AcbConfig::default()
        },
        reservation,
        sweep: users_sweep(40),
        ..Scenario::default()
    }
}

fn perfect(name: &str, divisor: u32) -> Scenario {
    Scenario {
        name: name.into(),
        traffic: TrafficConfig {
            k_m: 10_000,
            k_u: 10_000 / divisor,
            ..TrafficConfig::default()
        },
        sweep: users_sweep(divisor),
        ..Scenario::default()
    }
}

pub fn preset(name: &str) -> Result<Scenario, ConfigError> {
    let s = match name {
        "table1-baseline" => Scenario::default(),
        "loading-slicing" => Scenario {
            name: name.into(),
            ..Scenario::default()
        },
        "loading-no-slicing" => Scenario {
            name: name.into(),
            slicer: SlicerConfig {
                mode: SlicingMode::OffBaseline,
                ..SlicerConfig::default()
            },
            ..Scenario::default()
        },
        "fixed-split" => split(
            name,
            Reservation::Fixed { l_u: 8, l_m: 46 },
            AcbMode::Optimal,
        ),
        "fixed-split-no-barring" => split(
            name,
            Reservation::Fixed { l_u: 8, l_m: 46 },
            AcbMode::Fixed(1.0),
        ),
        "variable-split" => split(
            name,
            Reservation::Variable {
                total: 54,
                table: vec![[1000, 4], [30000, 34]],
            },
            AcbMode::Optimal,
        ),
        "perfect-prediction" => perfect(name, 400),
        "perfect-prediction-40" => perfect(name, 40),
        other => return Err(ConfigError::UnknownPreset(other.into())),
    };
    Ok(s)
}

/// 1-based line and column of byte `offset` in `text`.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn parse_error(source_name: &str, text: &str, err: &toml::de::Error) -> ConfigError {
    let (line, col) = err.span().map_or((1, 1), |s| line_col(text, s.start));
    ConfigError::Parse {
        source_name: source_name.into(),
        line,
        col,
        message: err.message().to_string(),
    }
}

impl Scenario {
    pub fn from_toml(text: &str, source_name: &str) -> Result<Scenario, ConfigError> {
        toml::from_str(text).map_err(|e| parse_error(source_name, text, &e))
    }

    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Lays the keys present in `text` over `self`.
    pub fn merge_toml(&self, text: &str, source_name: &str) -> Result<Scenario, ConfigError> {
        // Type-check the file on its own first so errors keep their position.
        Self::from_toml(text, source_name)?;
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| parse_error(source_name, text, &e))?;
        let mut base = self.to_table();
        deep_merge(&mut base, overlay);
        Scenario::deserialize(toml::Value::Table(base)).map_err(|e| ConfigError::Parse {
            source_name: source_name.into(),
            line: 1,
            col: 1,
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("scenario serializes")
    }

    /// Applies one `dotted.key=value` override. The value is read as a TOML
    /// value when it parses as one, otherwise as a bare string.
    pub fn with_override(&self, assignment: &str) -> Result<Scenario, ConfigError> {
        let source_name = format!("--set {assignment}");
        let bad = |col: usize, message: String| ConfigError::Parse {
            source_name: source_name.clone(),
            line: 1,
            col,
            message,
        };
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| bad(1, "expected key=value".into()))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(bad(1, format!("malformed key `{key}`")));
        }
        let value = parse_value(raw.trim());
        let mut table = self.to_table();
        set_path(&mut table, key, value).map_err(|m| bad(1, m))?;
        Scenario::deserialize(toml::Value::Table(table))
            .map_err(|e| bad(key.len() + 2, e.message().to_string()))
    }

    pub fn with_overrides<S: AsRef<str>>(
        &self,
        assignments: &[S],
    ) -> Result<Scenario, ConfigError> {
        assignments
            .iter()
            .try_fold(self.clone(), |s, a| s.with_override(a.as_ref()))
    }

    /// Numeric value at a dotted key, for sweeps.
    pub fn get_number(&self, key: &str) -> Option<f64> {
        let mut v = &toml::Value::Table(self.to_table());
        for part in key.split('.') {
            v = v.get(part)?;
        }
        v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
    }

    /// Scenario at one sweep point.
    pub fn at_sweep_point(&self, axis: &str, value: f64) -> Result<Scenario, ConfigError> {
        let text = if value.fract() == 0.0 && value.abs() < 9e15 {
            format!("{}", value as i64)
        } else {
            format!("{value}")
        };
        let mut s = self.with_override(&format!("{axis}={text}"))?;
        if axis == "traffic.k_m" {
            if let Some(d) = self.sweep.ku_divisor {
                s.traffic.k_u = s.traffic.k_m / d.max(1);
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), InvalidParam> {
        ensure(self.frames >= 1, "frames", "must be at least 1")?;
        ensure(self.realizations >= 1, "realizations", "must be at least 1")?;
        self.traffic.validate().map_err(|e| e.nested("traffic"))?;
        self.grid.validate().map_err(|e| e.nested("grid"))?;
        self.urllc.validate().map_err(|e| e.nested("urllc"))?;
        self.mmtc.validate().map_err(|e| e.nested("mmtc"))?;
        self.weights.validate().map_err(|e| e.nested("weights"))?;
        self.slicer.validate().map_err(|e| e.nested("slicer"))?;
        self.acb.validate().map_err(|e| e.nested("acb"))?;
        ensure(
            self.predictor.window >= 1,
            "predictor.window",
            "must be at least 1",
        )?;
        ensure(
            self.predictor.ma_window >= 1,
            "predictor.ma_window",
            "must be at least 1",
        )?;
        if self.predictor.kind == PredictorKind::Lstm {
            ensure(
                self.predictor.model.is_some(),
                "predictor.model",
                "required when kind is lstm",
            )?;
        }
        self.validate_reservation()?;
        let t = &self.training;
        ensure(t.epochs >= 1, "training.epochs", "must be at least 1")?;
        ensure(t.samples >= 2, "training.samples", "must be at least 2")?;
        ensure(
            t.holdout > 0.0 && t.holdout < 1.0,
            "training.holdout",
            "must lie in (0, 1)",
        )?;
        ensure(t.hidden >= 1, "training.hidden", "must be at least 1")?;
        ensure(t.layers >= 1, "training.layers", "must be at least 1")?;
        ensure(
            t.learning_rate > 0.0,
            "training.learning_rate",
            "must be positive",
        )?;
        ensure(
            t.batch_size >= 1,
            "training.batch_size",
            "must be at least 1",
        )?;
        ensure(
            t.probe_l_u + t.probe_l_m >= 1,
            "training.probe_l_u",
            "at least one probe channel is needed",
        )?;
        ensure(
            self.sweep.ku_divisor != Some(0),
            "sweep.ku_divisor",
            "must be at least 1",
        )?;
        Ok(())
    }

    fn validate_reservation(&self) -> Result<(), InvalidParam> {
        if let Reservation::Variable { total, table } = &self.reservation {
            ensure(
                !table.is_empty(),
                "reservation.table",
                "must have at least one row",
            )?;
            ensure(
                table.windows(2).all(|w| w[0][0] < w[1][0]),
                "reservation.table",
                "rows must be sorted by k_m",
            )?;
            ensure(
                table.iter().all(|r| r[1] <= *total),
                "reservation.table",
                "l_u must not exceed total",
            )?;
        }
        if let Some((l_u, l_m)) = self.reservation.resolve(self.traffic.k_m) {
            let sizes = crate::slicer::ChannelSizes::new(&self.grid, &self.urllc, &self.mmtc);
            let plan = maxrect_pack(0, l_u, l_m, &self.grid, sizes, &self.slicer);
            ensure(
                plan.urllc_channels.len() as u32 == l_u && plan.mmtc_channels.len() as u32 == l_m,
                "reservation",
                format!(
                    "{l_u} URLLC + {l_m} mMTC channels do not fit the {}x{} grid (packed {} + {})",
                    self.grid.f,
                    self.grid.s,
                    plan.urllc_channels.len(),
                    plan.mmtc_channels.len()
                ),
            )?;
        }
        Ok(())
    }

    /// Protocol settings; `predictor` replaces the configured one (needed for `lstm`).
    pub fn protocol_config(&self, predictor: Predictor) -> ProtocolConfig {
        let channels = match self.reservation.resolve(self.traffic.k_m) {
            None => ChannelSource::Slicer,
            Some((l_u, l_m)) => ChannelSource::Fixed { l_u, l_m },
        };
        ProtocolConfig {
            traffic: self.traffic.clone(),
            grid: self.grid,
            urllc: self.urllc,
            mmtc: self.mmtc,
            slicer: self.slicer,
            acb: self.acb,
            channels,
            predictor: Some(predictor),
            history_window: self.predictor.window,
            prior: ProtocolConfig::expected_arrivals(&self.traffic),
        }
    }

    /// The configured predictor when it needs no model file.
    pub fn simple_predictor(&self) -> Option<Predictor> {
        match self.predictor.kind {
            PredictorKind::Oracle => Some(Predictor::Oracle),
            PredictorKind::MovingAverage => Some(Predictor::MovingAverage {
                window: self.predictor.ma_window,
            }),
            PredictorKind::Lstm => None,
        }
    }

    pub fn prior(&self) -> BacklogEstimate {
        ProtocolConfig::expected_arrivals(&self.traffic)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut cur = table;
    for (i, part) in parts.iter().enumerate() {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("`{}` is not a table", parts[..=i].join(".")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn deep_merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
