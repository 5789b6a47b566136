//! Access class barring.
//!
//! Colliding devices draw `q ~ U[0,1)` and proceed only if `q <= p`.
//! Barred devices back off for `round((0.7 + 0.1 u) * t_acb)` frames.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, InvalidParam};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AcbMode {
    /// Broadcast a constant factor.
    Fixed(f64),
    /// Broadcast `min(1, 1/n)` where `n` is the true mean number of
    /// colliders per collided channel of the class.
    Optimal,
}

impl fmt::Display for AcbMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AcbMode::Fixed(p) => write!(f, "fixed:{p}"),
            AcbMode::Optimal => f.write_str("optimal"),
        }
    }
}

impl FromStr for AcbMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "optimal" => Ok(AcbMode::Optimal),
            other => {
                let p = other
                    .strip_prefix("fixed:")
                    .ok_or_else(|| format!("expected `optimal` or `fixed:<p>`, got `{other}`"))?;
                p.parse::<f64>()
                    .map(AcbMode::Fixed)
                    .map_err(|e| format!("bad barring factor `{p}`: {e}"))
            }
        }
    }
}

impl Serialize for AcbMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AcbMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcbConfig {
    pub mode: AcbMode,
    /// Barring time in frames.
    pub t_acb: u32,
    /// Maximum access attempts per packet.
    pub w: u32,
    /// Whether colliding URLLC devices run the barring check.
    pub urllc: bool,
    /// Whether colliding mMTC devices run the barring check.
    pub mmtc: bool,
}

impl Default for AcbConfig {
    fn default() -> Self {
        Self {
            mode: AcbMode::Optimal,
            t_acb: 0,
            w: 10,
            urllc: true,
            mmtc: true,
        }
    }
}

impl AcbConfig {
    pub fn validate(&self) -> Result<(), InvalidParam> {
        if let AcbMode::Fixed(p) = self.mode {
            ensure(
                (0.0..=1.0).contains(&p),
                "mode",
                "fixed barring factor must lie in [0, 1]",
            )?;
        }
        ensure(self.w >= 1, "w", "must be at least 1")?;
        Ok(())
    }

    /// Factor broadcast to colliders of a class whose collided channels hold
    /// `n_bar` devices on average.
    pub fn factor(&self, n_bar: f64) -> f64 {
        match self.mode {
            AcbMode::Fixed(p) => p,
            AcbMode::Optimal => optimal_acb(n_bar),
        }
    }
}

/// Expected number of singly-selected channels when `k_breve` devices pick
/// uniformly among `l` channels.
pub fn expected_success(k_breve: u32, l: u32) -> Option<f64> {
    if l == 0 {
        return None;
    }
    if k_breve == 0 {
        return Some(0.0);
    }
    let miss = 1.0 - 1.0 / f64::from(l);
    Some(f64::from(k_breve) * miss.powi(k_breve as i32 - 1))
}

pub fn optimal_acb(n_bar: f64) -> f64 {
    if n_bar <= 1.0 {
        1.0
    } else {
        1.0 / n_bar
    }
}

/// One barring check; `true` means the device may proceed.
pub fn acb_check<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    let q: f64 = rng.random();
    q <= p && p > 0.0
}

/// Back-off in frames for a barred device.
pub fn barring_delay<R: Rng + ?Sized>(t_acb: u32, rng: &mut R) -> u32 {
    if t_acb == 0 {
        return 0;
    }
    let u: f64 = rng.random();
    ((0.7 + 0.1 * u) * f64::from(t_acb)).round() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn expected_success_values() {
        assert_eq!(expected_success(1, 7), Some(1.0));
        assert_eq!(expected_success(0, 7), Some(0.0));
        assert_eq!(expected_success(3, 0), None);
        let v = expected_success(10, 54).unwrap();
        assert!((v - 10.0 * (53.0f64 / 54.0).powi(9)).abs() < 1e-12);
        assert!((v - 8.455).abs() < 5e-3);
    }

    #[test]
    fn expected_success_peaks_near_channel_count() {
        let l = 200;
        let best = (1..1000).max_by(|&a, &b| {
            expected_success(a, l)
                .unwrap()
                .total_cmp(&expected_success(b, l).unwrap())
        });
        assert!(best.unwrap().abs_diff(l) <= 1);
    }

    #[test]
    fn optimal_factor() {
        assert_eq!(optimal_acb(0.5), 1.0);
        assert_eq!(optimal_acb(2.0), 0.5);
        assert_eq!(optimal_acb(5.0), 0.2);
        assert_eq!(optimal_acb(0.0), 1.0);
    }

    #[test]
    fn check_boundaries() {
        let mut rng = stream(9, 0);
        assert!((0..10_000).all(|_| acb_check(1.0, &mut rng)));
        assert!((0..10_000).all(|_| !acb_check(0.0, &mut rng)));
    }

    #[test]
    fn check_pass_rate() {
        let mut rng = stream(10, 0);
        let n = 1_000_000;
        let pass = (0..n).filter(|_| acb_check(0.6, &mut rng)).count();
        let rate = pass as f64 / n as f64;
        assert!((0.599..=0.601).contains(&rate), "{rate}");
    }

    #[test]
    fn delay_range_and_mean() {
        let mut rng = stream(12, 0);
        assert_eq!(barring_delay(0, &mut rng), 0);
        for _ in 0..10_000 {
            let d = barring_delay(10, &mut rng);
            assert!(d == 7 || d == 8, "{d}");
        }
        let n = 100_000;
        let mean = (0..n)
            .map(|_| f64::from(barring_delay(100, &mut rng)))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 75.0).abs() <= 0.3, "{mean}");
    }

    #[test]
    fn mode_round_trips_through_text() {
        assert_eq!("optimal".parse::<AcbMode>().unwrap(), AcbMode::Optimal);
        assert_eq!("fixed:0.4".parse::<AcbMode>().unwrap(), AcbMode::Fixed(0.4));
        assert_eq!(
            AcbMode::Fixed(1.0).to_string().parse::<AcbMode>().unwrap(),
            AcbMode::Fixed(1.0)
        );
        assert!("sometimes".parse::<AcbMode>().is_err());
        let bad = AcbConfig {
            mode: AcbMode::Fixed(1.5),
            ..AcbConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "mode");
    }

    proptest! {
        #[test]
        fn optimal_factor_keeps_contenders_per_channel_at_most_one(n in 0.0f64..1e6) {
            let p = optimal_acb(n);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(n * p <= 1.0 + 1e-12);
        }
    }
}
