//! Transmission time per numerology and the channel sizes that follow from
//! the packet profiles.
//!
//! cargo run --example numerology

use hybrid_ra::grid::{
    packet_rbs, symbols_per_ms, tti, z_bound, GridConfig, ServiceProfile, MAX_NUMEROLOGY,
};

fn main() {
    let grid = GridConfig::default();
    println!("mu  symbols/ms  TTI of one RB (ms)");
    for mu in 0..=MAX_NUMEROLOGY {
        println!(
            "{mu:>2}  {:>10}  {:.3}",
            symbols_per_ms(mu, grid.nu).unwrap(),
            tti(mu, grid.nu, grid.nu).unwrap()
        );
    }
    if let Err(e) = tti(3, grid.nu, grid.nu) {
        println!(" 3  {e}");
    }

    let urllc = ServiceProfile::urllc_default();
    let mmtc_derived = ServiceProfile {
        iota_override: None,
        ..ServiceProfile::mmtc_default()
    };
    let mmtc = ServiceProfile::mmtc_default();
    println!();
    println!(
        "URLLC  {} B at {}-QAM: {} RBs",
        urllc.packet_bytes,
        urllc.mod_order,
        packet_rbs(&urllc, &grid)
    );
    println!(
        "mMTC   {} B at {}-QAM: {} RBs (pinned to {})",
        mmtc.packet_bytes,
        mmtc.mod_order,
        packet_rbs(&mmtc_derived, &grid),
        packet_rbs(&mmtc, &grid)
    );

    println!();
    println!("upper bound on channels for a {}x{} grid:", grid.f, grid.s);
    for k_u in [0, 1, 10, 25, 40, 50] {
        println!(
            "  K_u={k_u:>2}: {}",
            z_bound(
                &grid,
                packet_rbs(&urllc, &grid),
                k_u,
                packet_rbs(&mmtc, &grid)
            )
        );
    }
}
