//! Trains the LSTM backlog predictor on synthesized baseline traffic
//! and compares it with the moving-average estimator on held-out frames.
//!
//! cargo run --release --example train_predictor -- [epochs]

use hybrid_ra::campaign::train_scenario_predictor;
use hybrid_ra::scenario::preset;

fn main() {
    let epochs = std::env::args().nth(1).unwrap_or_else(|| "100".into());
    let scenario = preset("table1-baseline")
        .unwrap()
        .with_overrides(&[
            "predictor.kind=lstm",
            "predictor.model=\"model.json\"",
            &format!("training.epochs={epochs}"),
        ])
        .unwrap();
    let out = train_scenario_predictor(&scenario).expect("training failed");
    let losses = &out.report.epoch_loss;
    println!("initial loss {:.4e}", out.report.initial_loss);
    for (i, l) in losses
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 10 == 0 || *i + 1 == losses.len())
    {
        println!("epoch {:>4}  loss {l:.4e}", i + 1);
    }
    let e = out.evaluation;
    println!();
    println!("held-out normalized MSE");
    println!(
        "  trained LSTM     {:.4e}  (URLLC {:.3e}, mMTC {:.3e})",
        e.trained, e.trained_per_class[0], e.trained_per_class[1]
    );
    println!("  untrained LSTM   {:.4e}", e.untrained);
    println!("  moving average   {:.4e}", e.moving_average);
}
