use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybrid_ra::campaign::{self, CampaignError};
use hybrid_ra::metrics::Metric;
use hybrid_ra::scenario::{preset, Scenario, PRESETS};

#[derive(Parser)]
#[command(version, about = "Hybrid URLLC/mMTC random-access simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write metrics, summary and manifest.
    Run(Common),
    /// Run a scenario once per value of one numeric key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted scenario key to vary (defaults to the scenario's `sweep.axis`).
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values (defaults to `sweep.values`).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Synthesize traffic and train the LSTM backlog predictor.
    TrainPredictor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// Model file to write (defaults to `predictor.model`, then `<out-dir>/model.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario without running it.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Layered over `--preset` when both are given.
    scenario: Option<PathBuf>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override one key, e.g. `--set acb.mode=fixed:1.0` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario, CampaignError> {
        let mut s = match (&self.preset, &self.scenario) {
            (None, Some(path)) => Scenario::load(path)?,
            (Some(name), Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|source| CampaignError::Io {
                    path: path.clone(),
                    source,
                })?;
                preset(name)?.merge_toml(&text, &path.display().to_string())?
            }
            (name, None) => preset(name.as_deref().unwrap_or("table1-baseline"))?,
        };
        s = s.with_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(frames) = self.frames {
            s.frames = frames;
        }
        if let Some(r) = self.realizations {
            s.realizations = r;
        }
        Ok(s)
    }

    fn out_dir(&self, s: &Scenario) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("results").join(&s.name))
    }
}

fn headline(s: &hybrid_ra::metrics::Summary) -> String {
    let get = |m: Metric| s.metrics.get(m.name()).map_or(f64::NAN, |st| st.mean);
    format!(
        "eta_u {:.4}  eta_m {:.4}  eta_total {:.4}  served_u {:.3}  served_m {:.3}",
        get(Metric::EtaU),
        get(Metric::EtaM),
        get(Metric::EtaTotal),
        get(Metric::ServedU),
        get(Metric::ServedM)
    )
}

fn execute(cli: Cli) -> Result<(), CampaignError> {
    match cli.command {
        Command::Run(common) => {
            let s = common.scenario()?;
            let dir = common.out_dir(&s);
            let report = campaign::run(&s, &dir)?;
            println!(
                "{}: {} realizations x {} frames",
                s.name, s.realizations, s.frames
            );
            println!("{}", headline(&report.summary));
            println!("results in {}", dir.display());
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let s = common.scenario()?;
            let axis = axis.unwrap_or_else(|| s.sweep.axis.clone());
            let values = values.unwrap_or_else(|| s.sweep.values.clone());
            let dir = common.out_dir(&s);
            let rows = campaign::sweep(&s, &axis, &values, &dir)?;
            println!(
                "{:>12} {:>8} {:>8} {:>9} {:>9} {:>10}",
                axis, "eta_u", "eta_m", "served_u", "served_m", "dropped_m"
            );
            for r in rows {
                println!(
                    "{:>12} {:>8.4} {:>8.4} {:>9.3} {:>9.3} {:>10.3}",
                    r.value, r.eta_u, r.eta_m, r.served_u, r.served_m, r.dropped_m
                );
            }
            println!("results in {}", dir.display());
        }
        Command::TrainPredictor {
            common,
            epochs,
            samples,
            out,
        } => {
            let mut s = common.scenario()?;
            if let Some(e) = epochs {
                s.training.epochs = e;
            }
            if let Some(n) = samples {
                s.training.samples = n;
            }
            let path = out
                .or_else(|| s.predictor.model.clone())
                .unwrap_or_else(|| common.out_dir(&s).join("model.json"));
            s.predictor.model = Some(path.clone());
            let outcome = campaign::train_predictor(&s, &path)?;
            let e = outcome.evaluation;
            println!(
                "trained {} epochs: loss {:.3e} -> {:.3e}",
                outcome.report.epoch_loss.len(),
                outcome.report.initial_loss,
                outcome
                    .report
                    .epoch_loss
                    .last()
                    .copied()
                    .unwrap_or(f64::NAN)
            );
            println!(
                "held-out MSE: trained {:.3e}, untrained {:.3e}, moving average {:.3e}",
                e.trained, e.untrained, e.moving_average
            );
            println!("model written to {}", path.display());
        }
        Command::Validate(common) => {
            let s = common.scenario()?;
            s.validate()?;
            println!("{}: ok", s.name);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
