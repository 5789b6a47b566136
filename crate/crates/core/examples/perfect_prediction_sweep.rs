//! Oracle prediction with slicing while both populations grow
//! (K_u = K_m / 400): URLLC keeps its throughput and mMTC loses channels.
//!
//! cargo run --release --example perfect_prediction_sweep

use hybrid_ra::campaign::simulate_scenario;
use hybrid_ra::metrics::Metric;
use hybrid_ra::scenario::preset;

fn main() {
    let base = preset("perfect-prediction")
        .unwrap()
        .with_override("realizations=10")
        .unwrap();
    println!(
        "{:>6} {:>4} {:>8} {:>8} {:>10} {:>10} {:>9}",
        "K_m", "K_u", "eta_u", "eta_m", "served_u", "served_m", "L_m"
    );
    for &k_m in &base.sweep.values {
        let s = base.at_sweep_point("traffic.k_m", k_m).unwrap();
        let series = simulate_scenario(&s).unwrap();
        let mean = |m: Metric| {
            series
                .across_realizations(m, 0..series.frames())
                .map_or(f64::NAN, |st| st.mean)
        };
        println!(
            "{:>6} {:>4} {:>8.4} {:>8.4} {:>10.3} {:>10.3} {:>9.2}",
            s.traffic.k_m,
            s.traffic.k_u,
            mean(Metric::EtaU),
            mean(Metric::EtaM),
            mean(Metric::ServedU),
            mean(Metric::ServedM),
            mean(Metric::ChannelsM)
        );
    }
}
