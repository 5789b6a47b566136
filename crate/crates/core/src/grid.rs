//! Resource-block grid, NR numerology and packet sizing.
//!
//! A frame is `f` frequency RBs by `s` time slots. RB coordinates are
//! 0-based; `f` grows along frequency, `s` along time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ensure, InvalidParam};

/// Highest numerology index supported below millimetre-wave bands.
pub const MAX_NUMEROLOGY: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("numerology {0} is only defined for millimetre-wave bands (max {MAX_NUMEROLOGY})")]
    UnsupportedNumerology(u8),
    #[error("symbol count must be at least 1")]
    NoSymbols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceClass {
    Urllc,
    Mmtc,
}

impl ServiceClass {
    pub const ALL: [ServiceClass; 2] = [ServiceClass::Urllc, ServiceClass::Mmtc];

    pub fn label(self) -> &'static str {
        match self {
            ServiceClass::Urllc => "u",
            ServiceClass::Mmtc => "m",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Frequency RBs per frame.
    pub f: u32,
    /// Time slots per frame.
    pub s: u32,
    /// OFDM symbols per RB.
    pub nu: u32,
    /// Protocol overhead in symbols.
    pub xi: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            f: 50,
            s: 10,
            nu: 14,
            xi: 5,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), InvalidParam> {
        ensure(self.f >= 1, "f", "must be at least 1")?;
        ensure(self.s >= 1, "s", "must be at least 1")?;
        ensure(self.nu >= 1, "nu", "must be at least 1")?;
        Ok(())
    }

    pub fn area(&self) -> u32 {
        self.f * self.s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceProfile {
    pub packet_bytes: u32,
    /// Modulation order, a power of two in `2..=256`.
    pub mod_order: u32,
    /// Forces the channel size in RBs instead of deriving it from the packet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iota_override: Option<u32>,
}

impl ServiceProfile {
    pub fn urllc_default() -> Self {
        Self {
            packet_bytes: 32,
            mod_order: 4,
            iota_override: None,
        }
    }

    /// mMTC defaults; the channel size is pinned to 16 RBs.
    pub fn mmtc_default() -> Self {
        Self {
            packet_bytes: 200,
            mod_order: 256,
            iota_override: Some(16),
        }
    }

    pub fn validate(&self) -> Result<(), InvalidParam> {
        ensure(self.packet_bytes >= 1, "packet_bytes", "must be at least 1")?;
        ensure(
            self.mod_order.is_power_of_two() && (2..=256).contains(&self.mod_order),
            "mod_order",
            "must be a power of two in 2..=256",
        )?;
        if let Some(iota) = self.iota_override {
            ensure(iota >= 1, "iota_override", "must be at least 1")?;
        }
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.mod_order.trailing_zeros()
    }
}

/// A contiguous channel on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelRect {
    pub f0: u32,
    pub s0: u32,
    pub f_ext: u32,
    pub s_ext: u32,
    /// Numerology of the sub-channels making up the rect.
    pub mu: u8,
}

impl ChannelRect {
    pub fn area(&self) -> u32 {
        self.f_ext * self.s_ext
    }

    pub fn f_end(&self) -> u32 {
        self.f0 + self.f_ext
    }

    pub fn s_end(&self) -> u32 {
        self.s0 + self.s_ext
    }

    pub fn overlaps(&self, other: &ChannelRect) -> bool {
        self.f0 < other.f_end()
            && other.f0 < self.f_end()
            && self.s0 < other.s_end()
            && other.s0 < self.s_end()
    }

    pub fn within(&self, grid: &GridConfig) -> bool {
        self.f_end() <= grid.f && self.s_end() <= grid.s
    }

    /// Number of numerology-`mu` sub-channels stacked along frequency.
    pub fn sub_channels(&self) -> u32 {
        self.f_ext >> self.mu
    }

    pub fn contains_rb(&self, f: u32, s: u32) -> bool {
        (self.f0..self.f_end()).contains(&f) && (self.s0..self.s_end()).contains(&s)
    }
}

/// Transmission time interval in ms of `n_sym` symbols at numerology `mu`.
pub fn tti(mu: u8, n_sym: u32, nu: u32) -> Result<f64, GridError> {
    if mu > MAX_NUMEROLOGY {
        return Err(GridError::UnsupportedNumerology(mu));
    }
    if n_sym == 0 {
        return Err(GridError::NoSymbols);
    }
    Ok(f64::from(n_sym) / f64::from(symbols_per_ms(mu, nu)?))
}

/// Symbols carried per millisecond at numerology `mu`.
pub fn symbols_per_ms(mu: u8, nu: u32) -> Result<u32, GridError> {
    if mu > MAX_NUMEROLOGY {
        return Err(GridError::UnsupportedNumerology(mu));
    }
    Ok((1u32 << mu) * nu)
}

/// Channel size in base RBs needed to carry one packet, overhead included.
pub fn packet_rbs(profile: &ServiceProfile, grid: &GridConfig) -> u32 {
    if let Some(iota) = profile.iota_override {
        return iota;
    }
    // ceil((8P / b + xi) / nu) in integers: ceil((8P + xi*b) / (nu*b)).
    let b = u64::from(profile.bits_per_symbol());
    let num = 8 * u64::from(profile.packet_bytes) + u64::from(grid.xi) * b;
    let den = u64::from(grid.nu) * b;
    num.div_ceil(den) as u32
}

/// Upper bound on the total number of channels when every URLLC device gets
/// one channel and the remaining area is cut into mMTC channels.
pub fn z_bound(grid: &GridConfig, iota_u: u32, k_u: u32, iota_m: u32) -> u32 {
    assert!(iota_m >= 1, "iota_m must be at least 1");
    let area = i64::from(grid.area());
    let urllc = i64::from(iota_u) * i64::from(k_u);
    if urllc > area {
        return grid.area() / iota_u.max(1);
    }
    ((area - urllc) / i64::from(iota_m)) as u32 + k_u
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tti_values() {
        assert_eq!(tti(0, 14, 14).unwrap(), 1.0);
        assert_eq!(tti(2, 14, 14).unwrap(), 0.25);
        assert_eq!(symbols_per_ms(2, 14).unwrap(), 56);
        assert_eq!(tti(3, 14, 14), Err(GridError::UnsupportedNumerology(3)));
        assert_eq!(tti(0, 0, 14), Err(GridError::NoSymbols));
    }

    #[test]
    fn tti_of_one_ms_worth_of_symbols_is_one() {
        for mu in 0..=MAX_NUMEROLOGY {
            let n = symbols_per_ms(mu, 14).unwrap();
            assert_eq!(tti(mu, n, 14).unwrap(), 1.0);
        }
    }

    #[test]
    fn packet_sizes() {
        let grid = GridConfig::default();
        assert_eq!(packet_rbs(&ServiceProfile::urllc_default(), &grid), 10);
        let mmtc = ServiceProfile {
            iota_override: None,
            ..ServiceProfile::mmtc_default()
        };
        assert_eq!(packet_rbs(&mmtc, &grid), 15);
        assert_eq!(packet_rbs(&ServiceProfile::mmtc_default(), &grid), 16);
        // 7 bytes at 4 bits/symbol = 14 symbols, no overhead: exactly one RB.
        let one = ServiceProfile {
            packet_bytes: 7,
            mod_order: 16,
            iota_override: None,
        };
        assert_eq!(packet_rbs(&one, &GridConfig { xi: 0, ..grid }), 1);
    }

    #[test]
    fn z_bounds() {
        let grid = GridConfig::default();
        assert_eq!(z_bound(&grid, 10, 0, 16), 31);
        assert_eq!(z_bound(&grid, 10, 1, 16), 31);
        assert_eq!(z_bound(&GridConfig { f: 4, s: 4, ..grid }, 10, 0, 16), 1);
        assert_eq!(z_bound(&grid, 10, 60, 16), 50);
    }

    #[test]
    fn profile_validation() {
        let bad = ServiceProfile {
            mod_order: 6,
            ..ServiceProfile::urllc_default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "mod_order");
        let bad = ServiceProfile {
            mod_order: 512,
            ..ServiceProfile::urllc_default()
        };
        assert!(bad.validate().is_err());
        assert!(ServiceProfile::mmtc_default().validate().is_ok());
    }

    #[test]
    fn rect_overlap() {
        let a = ChannelRect {
            f0: 0,
            s0: 0,
            f_ext: 10,
            s_ext: 1,
            mu: 0,
        };
        let b = ChannelRect {
            f0: 9,
            s0: 0,
            f_ext: 4,
            s_ext: 2,
            mu: 2,
        };
        let c = ChannelRect {
            f0: 10,
            s0: 0,
            f_ext: 4,
            s_ext: 2,
            mu: 2,
        };
        assert!(a.overlaps(&b));
        assert!(!a.overlaps(&c));
        assert_eq!(b.sub_channels(), 1);
    }

    proptest! {
        #[test]
        fn packet_rbs_monotone(
            bytes in 1u32..2000, xi in 0u32..40, mod_exp in 1u32..8,
        ) {
            let grid = GridConfig { xi, ..GridConfig::default() };
            let p = ServiceProfile { packet_bytes: bytes, mod_order: 1 << mod_exp, iota_override: None };
            let base = packet_rbs(&p, &grid);
            let bigger = ServiceProfile { packet_bytes: bytes + 1, ..p };
            let more_overhead = GridConfig { xi: xi + 1, ..grid };
            let denser = ServiceProfile { mod_order: 1 << (mod_exp + 1), ..p };
            prop_assert!(packet_rbs(&bigger, &grid) >= base);
            prop_assert!(packet_rbs(&p, &more_overhead) >= base);
            prop_assert!(packet_rbs(&denser, &grid) <= base);
        }
    }
}
