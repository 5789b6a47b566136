//! Builds a scenario from TOML text plus overrides, runs it and writes the
//! result files (long CSV, aggregate CSV, JSON summary, manifest).
//!
//! cargo run --release --example scenario_files -- [output dir]

use hybrid_ra::campaign::run;
use hybrid_ra::scenario::Scenario;

const SCENARIO: &str = r#"
name = "small-cell"
frames = 500
realizations = 8
seed = 3

[traffic]
k_m = 2000
k_u = 50

[acb]
mode = "optimal"
t_acb = 4

[predictor]
kind = "moving-average"
ma_window = 5

[output]
event_log = true
"#;

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "results/small-cell".into());
    let scenario = Scenario::from_toml(SCENARIO, "inline")
        .and_then(|s| s.with_overrides(&["slicer.mode=off-baseline"]))
        .expect("scenario parses");
    let report = run(&scenario, out.as_ref()).expect("run failed");
    for (name, st) in &report.summary.metrics {
        if name.starts_with("eta") || name.starts_with("served") || name.starts_with("cl_") {
            println!("{name:<10} mean {:.4}  std {:.4}", st.mean, st.std);
        }
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
}
