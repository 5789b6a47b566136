//! Packs URLLC and mMTC channels into one frame and prints the occupancy map.
//!
//! cargo run --example maxrect_slicing -- [URLLC channels] [mMTC channels]

use hybrid_ra::grid::{GridConfig, ServiceClass, ServiceProfile};
use hybrid_ra::slicer::{maxrect_pack, validate_plan, ChannelSizes, SlicerConfig, SlicingMode};

fn main() {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<u32>().expect("channel counts are integers"));
    let k_u = args.next().unwrap_or(5);
    let k_m = args.next().unwrap_or(1000);

    let grid = GridConfig::default();
    let sizes = ChannelSizes::new(
        &grid,
        &ServiceProfile::urllc_default(),
        &ServiceProfile::mmtc_default(),
    );
    for mode in [SlicingMode::On, SlicingMode::OffBaseline] {
        let cfg = SlicerConfig {
            mode,
            ..SlicerConfig::default()
        };
        let plan = maxrect_pack(0, k_u, k_m, &grid, sizes, &cfg);
        assert!(validate_plan(&plan, &grid, sizes).is_empty());
        println!(
            "{mode:?}: {} URLLC + {} mMTC channels, {} of {} RBs used",
            plan.count(ServiceClass::Urllc),
            plan.count(ServiceClass::Mmtc),
            plan.occupied_rbs(),
            grid.area()
        );
        println!("{}", plan.occupancy_map(&grid));
    }

    println!("total channels as URLLC demand grows:");
    for l_u in [1, 5, 10, 20, 30, 40] {
        let plan = maxrect_pack(0, l_u, 1000, &grid, sizes, &SlicerConfig::default());
        println!(
            "  L_u={l_u:>2}: {} channels ({} mMTC)",
            plan.len(),
            plan.count(ServiceClass::Mmtc)
        );
    }
}
