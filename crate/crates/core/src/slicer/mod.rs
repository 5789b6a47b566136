//! Per-frame resource slicing.
//!
//! [`maxrect_pack`] turns predicted per-class backlogs into a [`ChannelPlan`]
//! by packing channel boxes bottom-left into the grid. URLLC channels are
//! placed first and always span one slot; mMTC channels are shaped to the
//! space left at each vertex. [`validate_plan`] re-checks a plan against the
//! slicing constraints and [`objective`] scores it.

mod maxrects;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ensure, InvalidParam};
use crate::grid::{
    packet_rbs, ChannelRect, GridConfig, ServiceClass, ServiceProfile, MAX_NUMEROLOGY,
};

pub use maxrects::{FreeRect, MaxRects};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlicingMode {
    /// Numerology-aware packing with class-specific channel shapes.
    On,
    /// Every channel is the same single-slot box at the highest numerology.
    OffBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicerConfig {
    pub mode: SlicingMode,
    /// Numerology of URLLC sub-channels; the channel width is rounded up to a multiple of `2^mu`.
    pub urllc_mu: u8,
    /// Width in RBs of the uniform single-slot channel used without slicing.
    pub baseline_rbs: u32,
}

impl Default for SlicerConfig {
    fn default() -> Self {
        Self {
            mode: SlicingMode::On,
            urllc_mu: 2,
            baseline_rbs: 16,
        }
    }
}

impl SlicerConfig {
    pub fn validate(&self) -> Result<(), InvalidParam> {
        ensure(
            self.urllc_mu <= MAX_NUMEROLOGY,
            "urllc_mu",
            "must be at most 2",
        )?;
        ensure(
            self.baseline_rbs >= 1 && self.baseline_rbs.is_multiple_of(1 << MAX_NUMEROLOGY),
            "baseline_rbs",
            "must be a positive multiple of 4",
        )?;
        Ok(())
    }
}

/// Priority weights of the slicing objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicerWeights {
    pub w_u: f64,
    pub w_m: f64,
    pub w_p: f64,
}

impl Default for SlicerWeights {
    fn default() -> Self {
        Self {
            w_u: 0.9,
            w_m: 0.05,
            w_p: 0.05,
        }
    }
}

impl SlicerWeights {
    pub fn validate(&self) -> Result<(), InvalidParam> {
        for (name, w) in [("w_u", self.w_u), ("w_m", self.w_m), ("w_p", self.w_p)] {
            ensure((0.0..=1.0).contains(&w), name, "must lie in [0, 1]")?;
        }
        ensure(
            (self.w_u + self.w_m + self.w_p - 1.0).abs() < 1e-9,
            "w_u",
            "weights must sum to 1",
        )?;
        ensure(self.w_u > self.w_m, "w_u", "must exceed w_m")?;
        ensure(self.w_m >= self.w_p, "w_m", "must be at least w_p")?;
        Ok(())
    }
}

/// Received power gain per channel, in plan order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GainVectors {
    pub rho_u: Vec<f64>,
    pub rho_m: Vec<f64>,
}

impl GainVectors {
    pub fn unit(plan: &ChannelPlan) -> Self {
        Self {
            rho_u: vec![1.0; plan.urllc_channels.len()],
            rho_m: vec![1.0; plan.mmtc_channels.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelPlan {
    pub frame_index: u64,
    pub urllc_channels: Vec<ChannelRect>,
    pub mmtc_channels: Vec<ChannelRect>,
    pub free_rects: Vec<FreeRect>,
}

impl ChannelPlan {
    pub fn empty(frame_index: u64) -> Self {
        Self {
            frame_index,
            urllc_channels: Vec::new(),
            mmtc_channels: Vec::new(),
            free_rects: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.urllc_channels.len() + self.mmtc_channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, class: ServiceClass) -> usize {
        match class {
            ServiceClass::Urllc => self.urllc_channels.len(),
            ServiceClass::Mmtc => self.mmtc_channels.len(),
        }
    }

    pub fn occupied_rbs(&self) -> u32 {
        self.channels().map(|(_, _, r)| r.area()).sum()
    }

    /// All channels in plan order (URLLC first) with their class and per-class index.
    pub fn channels(&self) -> impl Iterator<Item = (ServiceClass, usize, &ChannelRect)> {
        let u = self
            .urllc_channels
            .iter()
            .enumerate()
            .map(|(i, r)| (ServiceClass::Urllc, i, r));
        let m = self
            .mmtc_channels
            .iter()
            .enumerate()
            .map(|(i, r)| (ServiceClass::Mmtc, i, r));
        u.chain(m)
    }

    /// Grid occupancy as CSV, one row per time slot and one cell per
    /// frequency RB: `u<i>` / `m<i>` for channel ids, `.` for free RBs.
    pub fn occupancy_csv(&self, grid: &GridConfig) -> String {
        self.render(
            grid,
            ",",
            |class, idx| format!("{}{idx}", class.label()),
            ".",
        )
    }

    /// Compact map, one character per RB: `U`, `M` or `.`.
    pub fn occupancy_map(&self, grid: &GridConfig) -> String {
        self.render(
            grid,
            "",
            |class, _| match class {
                ServiceClass::Urllc => "U".into(),
                ServiceClass::Mmtc => "M".into(),
            },
            ".",
        )
    }

    fn render(
        &self,
        grid: &GridConfig,
        sep: &str,
        cell: impl Fn(ServiceClass, usize) -> String,
        free: &str,
    ) -> String {
        let mut out = String::new();
        for s in 0..grid.s {
            let row: Vec<String> = (0..grid.f)
                .map(|f| {
                    self.channels()
                        .find(|(_, _, r)| r.contains_rb(f, s))
                        .map(|(c, i, _)| cell(c, i))
                        .unwrap_or_else(|| free.to_string())
                })
                .collect();
            out.push_str(&row.join(sep));
            out.push('\n');
        }
        out
    }
}

/// Channel sizes in RBs for both classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSizes {
    pub iota_u: u32,
    pub iota_m: u32,
}

impl ChannelSizes {
    pub fn new(grid: &GridConfig, urllc: &ServiceProfile, mmtc: &ServiceProfile) -> Self {
        Self {
            iota_u: packet_rbs(urllc, grid),
            iota_m: packet_rbs(mmtc, grid),
        }
    }

    pub fn iota(&self, class: ServiceClass) -> u32 {
        match class {
            ServiceClass::Urllc => self.iota_u,
            ServiceClass::Mmtc => self.iota_m,
        }
    }
}

/// Packs up to `k_hat_u` URLLC and `k_hat_m` mMTC channels into the grid.
pub fn maxrect_pack(
    frame_index: u64,
    k_hat_u: u32,
    k_hat_m: u32,
    grid: &GridConfig,
    sizes: ChannelSizes,
    cfg: &SlicerConfig,
) -> ChannelPlan {
    let mut space = MaxRects::new(grid.f, grid.s);
    let mut plan = ChannelPlan::empty(frame_index);

    let (urllc_shape, mmtc_fixed) = match cfg.mode {
        SlicingMode::On => ((round_up(sizes.iota_u, cfg.urllc_mu), cfg.urllc_mu), None),
        SlicingMode::OffBaseline => {
            let shape = (cfg.baseline_rbs, MAX_NUMEROLOGY);
            (shape, Some(shape))
        }
    };

    // URLLC: one-slot boxes at the bottom-left-most vertex that holds them.
    while plan.urllc_channels.len() < k_hat_u as usize {
        let (f_ext, mu) = urllc_shape;
        let Some(rect) = first_fit(&space, |r| r.fits(f_ext, 1).then_some((f_ext, 1, mu))) else {
            break;
        };
        space.place(&rect);
        plan.urllc_channels.push(rect);
    }

    // mMTC: while demand remains and the largest free rect could still host a channel.
    let min_area = match mmtc_fixed {
        Some((f_ext, _)) => f_ext,
        None => sizes.iota_m,
    };
    while plan.mmtc_channels.len() < k_hat_m as usize && space.largest_area() >= min_area {
        let rect = match mmtc_fixed {
            Some((f_ext, mu)) => first_fit(&space, |r| r.fits(f_ext, 1).then_some((f_ext, 1, mu))),
            None => first_fit(&space, |r| {
                (0..=MAX_NUMEROLOGY)
                    .find_map(|mu| shape_mmtc(sizes.iota_m, mu, r).map(|(f, s)| (f, s, mu)))
            }),
        };
        let Some(rect) = rect else { break };
        space.place(&rect);
        plan.mmtc_channels.push(rect);
    }

    plan.free_rects = space.free().to_vec();
    plan
}

/// Walks vertices bottom-left first and returns the first box `shape` accepts.
fn first_fit(
    space: &MaxRects,
    shape: impl Fn(&FreeRect) -> Option<(u32, u32, u8)>,
) -> Option<ChannelRect> {
    for vertex in space.vertices() {
        for r in space.rects_at(vertex) {
            if let Some((f_ext, s_ext, mu)) = shape(&r) {
                return Some(ChannelRect {
                    f0: r.f0,
                    s0: r.s0,
                    f_ext,
                    s_ext,
                    mu,
                });
            }
        }
    }
    None
}

/// Narrowest mMTC box of numerology `mu` fitting in `r`: width `2^mu * k`
/// with the smallest `k` whose height `ceil(iota / width)` fits the rect.
fn shape_mmtc(iota: u32, mu: u8, r: &FreeRect) -> Option<(u32, u32)> {
    let step = 1u32 << mu;
    (1..)
        .map(|k| k * step)
        .take_while(|&w| w <= r.f_ext)
        .map(|w| (w, iota.div_ceil(w)))
        .find(|&(_, h)| h <= r.s_ext)
}

fn round_up(rbs: u32, mu: u8) -> u32 {
    rbs.div_ceil(1 << mu) << mu
}

/// A broken slicing constraint. Channel indices are global plan indices
/// (URLLC channels first, then mMTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Zero extent, i.e. a channel that is not a contiguous non-empty box.
    Contiguity {
        channel: usize,
    },
    OutOfBounds {
        channel: usize,
    },
    /// URLLC channel spanning more than one slot.
    UrllcTime {
        channel: usize,
    },
    /// Width not a multiple of `2^mu`, or `mu` above the supported range.
    Numerology {
        channel: usize,
    },
    Overlap {
        a: usize,
        b: usize,
    },
    PacketSize {
        channel: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Contiguity { channel } => write!(f, "contiguity at {channel}"),
            Violation::OutOfBounds { channel } => write!(f, "out-of-bounds at {channel}"),
            Violation::UrllcTime { channel } => write!(f, "urllc-time at {channel}"),
            Violation::Numerology { channel } => write!(f, "numerology at {channel}"),
            Violation::Overlap { a, b } => write!(f, "overlap at ({a},{b})"),
            Violation::PacketSize { channel } => write!(f, "packet-size at {channel}"),
        }
    }
}

pub fn validate_plan(plan: &ChannelPlan, grid: &GridConfig, sizes: ChannelSizes) -> Vec<Violation> {
    let mut out = Vec::new();
    let all: Vec<(ServiceClass, &ChannelRect)> = plan.channels().map(|(c, _, r)| (c, r)).collect();
    for (channel, &(class, r)) in all.iter().enumerate() {
        if r.f_ext == 0 || r.s_ext == 0 {
            out.push(Violation::Contiguity { channel });
        }
        if !r.within(grid) {
            out.push(Violation::OutOfBounds { channel });
        }
        if class == ServiceClass::Urllc && r.s_ext != 1 {
            out.push(Violation::UrllcTime { channel });
        }
        if r.mu > MAX_NUMEROLOGY || r.f_ext % (1 << r.mu.min(MAX_NUMEROLOGY)) != 0 {
            out.push(Violation::Numerology { channel });
        }
        if r.area() < sizes.iota(class) {
            out.push(Violation::PacketSize { channel });
        }
    }
    for a in 0..all.len() {
        for b in a + 1..all.len() {
            if all[a].1.overlaps(all[b].1) {
                out.push(Violation::Overlap { a, b });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SlicerError {
    #[error("gain vector for {class:?} has {got} entries, plan has {expected} channels")]
    GainLength {
        class: ServiceClass,
        expected: usize,
        got: usize,
    },
}

/// Weighted gain of a plan minus a penalty for the channel shortfall
/// `k_breve - min(L, z)`, floored at zero.
pub fn objective(
    plan: &ChannelPlan,
    gains: &GainVectors,
    weights: &SlicerWeights,
    k_breve: u32,
    z: u32,
) -> Result<f64, SlicerError> {
    for (class, got) in [
        (ServiceClass::Urllc, gains.rho_u.len()),
        (ServiceClass::Mmtc, gains.rho_m.len()),
    ] {
        let expected = plan.count(class);
        if got != expected {
            return Err(SlicerError::GainLength {
                class,
                expected,
                got,
            });
        }
    }
    let reward = weights.w_u * gains.rho_u.iter().sum::<f64>()
        + weights.w_m * gains.rho_m.iter().sum::<f64>();
    let served = (plan.len() as u32).min(z);
    let shortfall = k_breve.saturating_sub(served);
    Ok(reward - weights.w_p * f64::from(shortfall))
}
