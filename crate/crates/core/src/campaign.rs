//! Seeded experiment execution and result files: `run`, `sweep`,
//! `train-predictor` and `validate`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::error::InvalidParam;
use crate::metrics::{fmt, Metric, MetricsSeries, Summary};
use crate::predictor::{
    build_dataset, moving_average, train, FeatureSpec, History, LstmModel, LstmPredictor,
    Observation, Population, Predictor, PredictorError, TrainReport, OUTPUTS,
};
use crate::protocol::{run_realization, ChannelSource, ProtocolConfig, Simulator};
use crate::rng::stream;
use crate::scenario::{ConfigError, PredictorKind, Scenario};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("predictor: {0}")]
    Predictor(#[from] PredictorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl From<InvalidParam> for CampaignError {
    fn from(e: InvalidParam) -> Self {
        CampaignError::Config(ConfigError::Invalid(e))
    }
}

impl CampaignError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CampaignError::Config(ConfigError::Parse { .. } | ConfigError::UnknownPreset(_)) => 2,
            CampaignError::Config(ConfigError::Invalid(_)) => 3,
            CampaignError::Predictor(PredictorError::Divergence { .. }) => 5,
            CampaignError::Config(ConfigError::Io { .. })
            | CampaignError::Predictor(_)
            | CampaignError::Io { .. }
            | CampaignError::Csv { .. } => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CampaignError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Master seed offset for the training-data stream, far from realization indices.
const TRAINING_STREAM: u64 = 1 << 40;

/// The predictor a scenario asks for, loading the model file when needed.
pub fn load_predictor(scenario: &Scenario) -> Result<Predictor, CampaignError> {
    if let Some(p) = scenario.simple_predictor() {
        return Ok(p);
    }
    let path = scenario
        .predictor
        .model
        .as_ref()
        .ok_or_else(|| InvalidParam::new("predictor.model", "required when kind is lstm"))?;
    let model = LstmPredictor::load(path).map_err(|e| match e {
        PredictorError::Io(source) => CampaignError::Io {
            path: path.clone(),
            source,
        },
        other => CampaignError::Predictor(other),
    })?;
    Ok(Predictor::Lstm(Box::new(model)))
}

/// Runs every realization of `cfg` in parallel; realization `r` uses stream `r` of `seed`.
pub fn simulate(
    cfg: &ProtocolConfig,
    frames: u64,
    realizations: usize,
    seed: u64,
) -> MetricsSeries {
    let traces = (0..realizations)
        .into_par_iter()
        .map(|r| run_realization(cfg, frames, &mut stream(seed, r as u64)))
        .collect();
    MetricsSeries::new(traces)
}

/// Validates `scenario` and simulates it without writing anything.
pub fn simulate_scenario(scenario: &Scenario) -> Result<MetricsSeries, CampaignError> {
    scenario.validate()?;
    let cfg = scenario.protocol_config(load_predictor(scenario)?);
    Ok(simulate(
        &cfg,
        scenario.frames,
        scenario.realizations,
        scenario.seed,
    ))
}

#[derive(Debug, Clone, Serialize)]
struct SummaryFile<'a> {
    scenario: &'a str,
    seed: u64,
    #[serde(flatten)]
    summary: &'a Summary,
}

#[derive(Debug)]
pub struct RunReport {
    pub series: MetricsSeries,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Simulates `scenario` and writes its result files into `out_dir`.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunReport, CampaignError> {
    let series = simulate_scenario(scenario)?;
    let files = write_results(scenario, &series, out_dir)?;
    let summary = series.summary();
    Ok(RunReport {
        series,
        summary,
        files,
    })
}

fn write_results(
    scenario: &Scenario,
    series: &MetricsSeries,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CampaignError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = Vec::new();

    if scenario.output.long_csv {
        let path = out_dir.join("metrics.csv");
        series
            .write_long_csv(create(&path)?)
            .map_err(|source| CampaignError::Csv {
                path: path.clone(),
                source,
            })?;
        files.push(path);
    }

    let path = out_dir.join("aggregate.csv");
    series
        .write_aggregate_csv(create(&path)?)
        .map_err(|source| CampaignError::Csv {
            path: path.clone(),
            source,
        })?;
    files.push(path);

    let path = out_dir.join("summary.json");
    let summary = series.summary();
    let body = SummaryFile {
        scenario: &scenario.name,
        seed: scenario.seed,
        summary: &summary,
    };
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &body).map_err(|e| io_err(&path)(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    files.push(path);

    if scenario.output.event_log {
        let path = out_dir.join("events.log");
        let mut w = create(&path)?;
        for o in series.traces.first().into_iter().flatten() {
            writeln!(w, "{}", o.log_line()).map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        files.push(path);
    }

    let path = out_dir.join("manifest.txt");
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    fs::write(&path, manifest(scenario, &names)).map_err(io_err(&path))?;
    files.push(path);
    Ok(files)
}

/// Plain-text run manifest: tool version, seed, output files and the fully
/// resolved scenario, which can be fed back to `run` as a scenario file.
pub fn manifest(scenario: &Scenario, files: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# {} {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    ));
    out.push_str(&format!("# seed {}\n", scenario.seed));
    for f in files {
        out.push_str(&format!("# output {f}\n"));
    }
    out.push('\n');
    out.push_str(&scenario.to_toml());
    out
}

/// Headline numbers of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub k_u: u32,
    pub k_m: u32,
    pub eta_u: f64,
    pub eta_m: f64,
    pub eta_total: f64,
    pub served_u: f64,
    pub served_m: f64,
    pub cl_u: Option<f64>,
    pub cl_m: Option<f64>,
    pub dropped_u: f64,
    pub dropped_m: f64,
}

impl SweepPoint {
    fn from_summary(value: f64, scenario: &Scenario, s: &Summary) -> Self {
        let get = |m: Metric| s.metrics.get(m.name()).map(|st| st.mean);
        SweepPoint {
            value,
            k_u: scenario.traffic.k_u,
            k_m: scenario.traffic.k_m,
            eta_u: get(Metric::EtaU).unwrap_or(0.0),
            eta_m: get(Metric::EtaM).unwrap_or(0.0),
            eta_total: get(Metric::EtaTotal).unwrap_or(0.0),
            served_u: get(Metric::ServedU).unwrap_or(0.0),
            served_m: get(Metric::ServedM).unwrap_or(0.0),
            cl_u: get(Metric::ClU),
            cl_m: get(Metric::ClM),
            dropped_u: get(Metric::DroppedU).unwrap_or(0.0),
            dropped_m: get(Metric::DroppedM).unwrap_or(0.0),
        }
    }
}

/// Scenario at every sweep value, validated up front.
pub fn sweep_scenarios(
    scenario: &Scenario,
    axis: &str,
    values: &[f64],
) -> Result<Vec<Scenario>, CampaignError> {
    if scenario.get_number(axis).is_none() {
        return Err(InvalidParam::new(
            "sweep.axis",
            format!("`{axis}` is not a numeric scenario key"),
        )
        .into());
    }
    let points = values
        .iter()
        .map(|&v| scenario.at_sweep_point(axis, v))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &points {
        p.validate()?;
    }
    Ok(points)
}

/// Runs one scenario per value of `axis`; each point writes into its own
/// sub-directory and `summary.csv` collects the headline numbers.
pub fn sweep(
    scenario: &Scenario,
    axis: &str,
    values: &[f64],
    out_dir: &Path,
) -> Result<Vec<SweepPoint>, CampaignError> {
    let points = sweep_scenarios(scenario, axis, values)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let results = points
        .par_iter()
        .map(simulate_scenario)
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (i, ((p, series), &v)) in points.iter().zip(&results).zip(values).enumerate() {
        let dir = out_dir.join(format!("point-{i:02}_{axis}={}", fmt(v)));
        write_results(p, series, &dir)?;
        rows.push(SweepPoint::from_summary(v, p, &series.summary()));
    }

    let path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let csv_err = |source| CampaignError::Csv {
        path: path.clone(),
        source,
    };
    w.write_record([
        axis,
        "k_u",
        "k_m",
        "eta_u",
        "eta_m",
        "eta_total",
        "served_u",
        "served_m",
        "cl_u",
        "cl_m",
        "dropped_u",
        "dropped_m",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    for r in &rows {
        w.write_record([
            fmt(r.value),
            r.k_u.to_string(),
            r.k_m.to_string(),
            fmt(r.eta_u),
            fmt(r.eta_m),
            fmt(r.eta_total),
            fmt(r.served_u),
            fmt(r.served_m),
            opt(r.cl_u),
            opt(r.cl_m),
            fmt(r.dropped_u),
            fmt(r.dropped_m),
        ])
        .map_err(|source| CampaignError::Csv {
            path: path.clone(),
            source,
        })?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = out_dir.join("manifest.txt");
    let mut text = manifest(scenario, &["summary.csv".to_string()]);
    text.push_str(&format!("\n# sweep {axis} = {:?}\n", values));
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(rows)
}

/// Training pairs synthesized from a scenario's traffic.
#[derive(Debug)]
pub struct TrainingData {
    pub observations: Vec<Observation>,
    pub backlogs: Vec<(u32, u32)>,
    pub train: Vec<(Vec<Vec<f64>>, [f64; OUTPUTS])>,
    pub holdout: Vec<(Vec<Vec<f64>>, [f64; OUTPUTS])>,
    /// Index into `observations` of the first held-out target frame.
    pub holdout_start: usize,
}

/// Simulates the scenario's traffic under the probe reservation and turns
/// each frame into a (history, backlog) pair. The last `holdout` share of
/// frames is kept apart for evaluation.
pub fn synthesize_training_data(scenario: &Scenario) -> TrainingData {
    let t = &scenario.training;
    let window = scenario.predictor.window;
    let mut cfg = scenario.protocol_config(Predictor::Oracle);
    cfg.predictor = None;
    cfg.channels = ChannelSource::Fixed {
        l_u: t.probe_l_u,
        l_m: t.probe_l_m,
    };

    // Warm-up frames let the backlog settle before samples are taken.
    let warmup = window + 2 * scenario.traffic.t_p.max(scenario.traffic.t_u) as usize;
    let frames = warmup + t.samples;
    let mut sim = Simulator::new(cfg);
    let mut rng = stream(scenario.seed, TRAINING_STREAM);
    let mut observations = Vec::with_capacity(frames);
    let mut backlogs = Vec::with_capacity(frames);
    for f in 0..frames as u64 {
        let o = sim.run_frame(f, &mut rng);
        observations.push(o.observation());
        backlogs.push((o.urllc.backlog, o.mmtc.backlog));
    }
    let population = Population {
        k_u: scenario.traffic.k_u,
        k_m: scenario.traffic.k_m,
    };
    let features = FeatureSpec {
        t_p: scenario.traffic.t_p,
        t_u: scenario.traffic.t_u,
    };
    let pairs = build_dataset(
        &observations[warmup - window..],
        &backlogs[warmup - window..],
        features,
        population,
        window,
        window,
    );
    let n_train = ((1.0 - t.holdout) * pairs.len() as f64).round() as usize;
    let mut train = pairs;
    let holdout = train.split_off(n_train.min(train.len()));
    TrainingData {
        holdout_start: warmup + n_train,
        observations,
        backlogs,
        train,
        holdout,
    }
}

/// Held-out normalized MSE of several predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub trained: f64,
    pub untrained: f64,
    pub moving_average: f64,
    /// Trained model, per class `[urllc, mmtc]`.
    pub trained_per_class: [f64; OUTPUTS],
}

#[derive(Debug)]
pub struct TrainingOutcome {
    pub predictor: LstmPredictor,
    pub report: TrainReport,
    pub evaluation: Evaluation,
}

fn per_class_mse(model: &LstmModel, data: &[(Vec<Vec<f64>>, [f64; OUTPUTS])]) -> [f64; OUTPUTS] {
    let mut acc = [0.0; OUTPUTS];
    for (seq, target) in data {
        let y = model.forward(seq);
        for k in 0..OUTPUTS {
            acc[k] += (y[k] - target[k]).powi(2);
        }
    }
    acc.map(|a| a / data.len().max(1) as f64)
}

fn moving_average_mse(scenario: &Scenario, data: &TrainingData) -> Result<f64, PredictorError> {
    let window = scenario.predictor.window;
    let population = Population {
        k_u: scenario.traffic.k_u,
        k_m: scenario.traffic.k_m,
    };
    let mut acc = 0.0;
    let mut n = 0usize;
    for t in data.holdout_start..data.observations.len() {
        let mut h = History::new(window);
        for o in &data.observations[t - window..t] {
            h.push(*o);
        }
        let est = moving_average(&h, scenario.predictor.ma_window, population)?;
        let guess = population.normalize((est.k_hat_u, est.k_hat_m));
        let truth = population.normalize(data.backlogs[t]);
        acc += (0..OUTPUTS)
            .map(|k| (guess[k] - truth[k]).powi(2))
            .sum::<f64>()
            / OUTPUTS as f64;
        n += 1;
    }
    if n == 0 {
        return Err(PredictorError::EmptyDataset);
    }
    Ok(acc / n as f64)
}

/// Synthesizes data, trains the LSTM and evaluates it on the held-out frames.
pub fn train_scenario_predictor(scenario: &Scenario) -> Result<TrainingOutcome, CampaignError> {
    scenario.validate()?;
    if scenario.predictor.kind != PredictorKind::Lstm {
        return Err(
            InvalidParam::new("predictor.kind", "only the lstm predictor can be trained").into(),
        );
    }
    let data = synthesize_training_data(scenario);
    let t = &scenario.training;
    let mut rng = stream(scenario.seed, TRAINING_STREAM + 1);
    let mut model = LstmModel::new(FeatureSpec::WIDTH, t.hidden, t.layers, &mut rng);
    let untrained = model.clone();
    let report = train(&mut model, &data.train, &t.train_config(), &mut rng)?;

    let mean = |v: [f64; OUTPUTS]| v.iter().sum::<f64>() / OUTPUTS as f64;
    let trained_per_class = per_class_mse(&model, &data.holdout);
    let evaluation = Evaluation {
        trained: mean(trained_per_class),
        untrained: mean(per_class_mse(&untrained, &data.holdout)),
        moving_average: moving_average_mse(scenario, &data)?,
        trained_per_class,
    };
    let predictor = LstmPredictor {
        model,
        features: FeatureSpec {
            t_p: scenario.traffic.t_p,
            t_u: scenario.traffic.t_u,
        },
        population: Population {
            k_u: scenario.traffic.k_u,
            k_m: scenario.traffic.k_m,
        },
        window: scenario.predictor.window,
    };
    Ok(TrainingOutcome {
        predictor,
        report,
        evaluation,
    })
}

/// `train-predictor`: writes the model, `<model>.curve.csv` and `<model>.eval.json`.
pub fn train_predictor(
    scenario: &Scenario,
    model_path: &Path,
) -> Result<TrainingOutcome, CampaignError> {
    let outcome = train_scenario_predictor(scenario)?;
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let json = outcome.predictor.to_json()?;
    fs::write(model_path, json).map_err(io_err(model_path))?;

    let curve = sibling(model_path, "curve.csv");
    let mut w = csv::Writer::from_writer(create(&curve)?);
    let csv_err = |source| CampaignError::Csv {
        path: curve.clone(),
        source,
    };
    w.write_record(["epoch", "loss"]).map_err(csv_err)?;
    w.write_record(["0", &fmt(outcome.report.initial_loss)])
        .map_err(|source| CampaignError::Csv {
            path: curve.clone(),
            source,
        })?;
    for (i, loss) in outcome.report.epoch_loss.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt(*loss)])
            .map_err(|source| CampaignError::Csv {
                path: curve.clone(),
                source,
            })?;
    }
    w.flush().map_err(io_err(&curve))?;

    let eval = sibling(model_path, "eval.json");
    let text = serde_json::to_string_pretty(&outcome.evaluation).expect("evaluation serializes");
    fs::write(&eval, text + "\n").map_err(io_err(&eval))?;
    Ok(outcome)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    fn small(name: &str) -> Scenario {
        preset(name)
            .unwrap()
            .with_overrides(&["frames=60", "realizations=3"])
            .unwrap()
    }

    #[test]
    fn exit_codes() {
        let parse = CampaignError::Config(ConfigError::Parse {
            source_name: "f".into(),
            line: 1,
            col: 1,
            message: "x".into(),
        });
        assert_eq!(parse.exit_code(), 2);
        assert_eq!(
            CampaignError::from(InvalidParam::new("a", "b")).exit_code(),
            3
        );
        let io = CampaignError::Io {
            path: "x".into(),
            source: std::io::Error::other("x"),
        };
        assert_eq!(io.exit_code(), 4);
        assert_eq!(
            CampaignError::Predictor(PredictorError::Divergence { epoch: 3 }).exit_code(),
            5
        );
    }

    #[test]
    fn run_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = small("table1-baseline");
        s.output.event_log = true;
        let report = run(&s, dir.path()).unwrap();
        for f in [
            "metrics.csv",
            "aggregate.csv",
            "summary.json",
            "events.log",
            "manifest.txt",
        ] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        assert_eq!(report.series.realizations(), 3);
        let log = fs::read_to_string(dir.path().join("events.log")).unwrap();
        assert_eq!(log.lines().count(), 60);
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        let back = Scenario::from_toml(&manifest, "manifest").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let s = small("fixed-split");
        let cfg = s.protocol_config(Predictor::Oracle);
        let a = simulate(&cfg, 50, 2, 9);
        let b = simulate(&cfg, 50, 2, 9);
        assert_eq!(a, b);
        assert_ne!(a.traces[0], a.traces[1]);
    }

    #[test]
    fn zero_traffic_is_all_idle() {
        let s = small("fixed-split")
            .with_overrides(&["traffic.k_m=0", "traffic.k_u=0", "traffic.k_m_p=0"])
            .unwrap();
        let series = simulate_scenario(&s).unwrap();
        for trace in &series.traces {
            for o in trace {
                assert_eq!(o.urllc.msg1.idle, o.urllc.channels);
                assert_eq!(o.mmtc.msg1.idle, o.mmtc.channels);
                assert_eq!(Metric::ClM.value(o), Some(0.0));
                assert_eq!(Metric::EtaTotal.value(o), Some(0.0));
            }
        }
    }

    #[test]
    fn one_point_sweep_matches_a_run() {
        let dir = tempfile::tempdir().unwrap();
        let s = small("fixed-split");
        let rows = sweep(&s, "traffic.k_m", &[4000.0], dir.path()).unwrap();
        let direct = simulate_scenario(&s.at_sweep_point("traffic.k_m", 4000.0).unwrap()).unwrap();
        assert_eq!(
            rows[0],
            SweepPoint::from_summary(
                4000.0,
                &s.at_sweep_point("traffic.k_m", 4000.0).unwrap(),
                &direct.summary()
            )
        );
        let point_dir = dir.path().join("point-00_traffic.k_m=4000");
        let run_dir = tempfile::tempdir().unwrap();
        run(
            &s.at_sweep_point("traffic.k_m", 4000.0).unwrap(),
            run_dir.path(),
        )
        .unwrap();
        assert_eq!(
            fs::read(point_dir.join("metrics.csv")).unwrap(),
            fs::read(run_dir.path().join("metrics.csv")).unwrap()
        );
        assert!(dir.path().join("summary.csv").is_file());
    }

    #[test]
    fn sweep_rejects_non_numeric_axis() {
        let err = sweep_scenarios(&small("fixed-split"), "name", &[1.0]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn training_requires_lstm() {
        let err = train_scenario_predictor(&small("table1-baseline")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn smoke_training_writes_model() {
        let dir = tempfile::tempdir().unwrap();
        let model = dir.path().join("m.json");
        let s = small("table1-baseline")
            .with_overrides(&[
                "predictor.kind=lstm",
                &format!("predictor.model={:?}", model.display().to_string()),
                "training.epochs=1",
                "training.samples=10",
                "training.hidden=4",
            ])
            .unwrap();
        let out = train_predictor(&s, &model).unwrap();
        assert_eq!(out.report.epoch_loss.len(), 1);
        assert!(model.is_file());
        assert!(dir.path().join("m.curve.csv").is_file());
        assert!(dir.path().join("m.eval.json").is_file());
        let loaded = load_predictor(&s).unwrap();
        assert!(matches!(loaded, Predictor::Lstm(_)));
        let series =
            simulate_scenario(&s.with_overrides(&["frames=20", "realizations=1"]).unwrap())
                .unwrap();
        assert_eq!(series.frames(), 20);
    }
}
