//! Fixed 8 + 46 channel reservation under growing mMTC load, with and
//! without access class barring.
//!
//! cargo run --release --example congestion_collapse

use hybrid_ra::campaign::simulate_scenario;
use hybrid_ra::metrics::Metric;
use hybrid_ra::scenario::preset;

fn main() {
    println!(
        "{:>6} {:>5} {:>14} {:>14}",
        "K_m", "K_u", "eta p=1", "eta optimal"
    );
    for k_m in [1000u32, 2000, 4000, 8000, 16000] {
        let k_u = k_m / 40;
        let eta = |mode: &str| {
            let s = preset("fixed-split")
                .unwrap()
                .with_overrides(&[
                    &format!("traffic.k_m={k_m}"),
                    &format!("traffic.k_u={k_u}"),
                    mode,
                    "realizations=10",
                ])
                .unwrap();
            let series = simulate_scenario(&s).unwrap();
            let frames = series.frames();
            series
                .across_realizations(Metric::EtaTotal, frames - 200..frames)
                .unwrap()
                .mean
        };
        println!(
            "{k_m:>6} {k_u:>5} {:>14.4} {:>14.4}",
            eta("acb.mode=fixed:1.0"),
            eta("acb.mode=optimal")
        );
    }
}
