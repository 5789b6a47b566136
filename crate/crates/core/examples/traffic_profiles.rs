//! URLLC activation profile over one period and the empirical arrival rates
//! of both classes.
//!
//! cargo run --example traffic_profiles

use hybrid_ra::rng::stream;
use hybrid_ra::traffic::{gen_arrivals, TrafficConfig};

fn main() {
    let cfg = TrafficConfig::default();
    println!(
        "URLLC activation probability per device over one period (T_u = {}):",
        cfg.t_u
    );
    for t in 0..u64::from(cfg.t_u) {
        let q = cfg.urllc_activation_prob(t);
        println!(
            "  tau={t:>2}  q={q:.4}  {}",
            "#".repeat((q * 200.0).round() as usize)
        );
    }

    let frames = 20_000u64;
    let mut rng = stream(42, 0);
    let (mut mmtc, mut urllc) = (0u64, 0u64);
    let mut by_phase = vec![0u64; cfg.t_p as usize];
    for t in 0..frames {
        let a = gen_arrivals(&cfg, t, &mut rng);
        mmtc += u64::from(a.new_mmtc);
        urllc += u64::from(a.new_urllc);
        by_phase[(t % u64::from(cfg.t_p)) as usize] += u64::from(a.new_mmtc);
    }
    println!();
    println!("mean arrivals per frame over {frames} frames:");
    println!("  mMTC  {:.3}", mmtc as f64 / frames as f64);
    println!(
        "  URLLC {:.3} (analytic {:.3})",
        urllc as f64 / frames as f64,
        cfg.expected_urllc_per_period() / f64::from(cfg.t_u)
    );
    println!("mMTC arrivals by frame phase (periodic devices report at phase 0):");
    let periods = frames as f64 / f64::from(cfg.t_p);
    for (phase, n) in by_phase.iter().enumerate() {
        println!("  phase {phase}: {:.2}", *n as f64 / periods);
    }
}
