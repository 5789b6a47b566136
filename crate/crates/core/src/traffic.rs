//! Arrival processes for the two service classes.
//!
//! mMTC devices come in two flavours: aperiodic devices that wake up with a
//! fixed per-frame probability, and a fixed group of periodic devices that
//! all report every `t_p` frames. URLLC devices follow a Beta-shaped
//! activation profile repeating every `t_u` frames.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;

use crate::error::{ensure, InvalidParam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Number of mMTC devices, periodic ones included.
    pub k_m: u32,
    /// Number of URLLC devices.
    pub k_u: u32,
    /// Per-frame activation probability of an aperiodic mMTC device.
    pub p: f64,
    /// Number of periodic mMTC devices.
    pub k_m_p: u32,
    /// mMTC reporting period in frames.
    pub t_p: u32,
    pub alpha: f64,
    pub beta: f64,
    /// URLLC profile period in frames.
    pub t_u: u32,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            k_m: 1000,
            k_u: 25,
            p: 0.01,
            k_m_p: 10,
            t_p: 10,
            alpha: 3.0,
            beta: 4.0,
            t_u: 10,
        }
    }
}

/// Arrivals generated in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ArrivalBatch {
    pub frame_index: u64,
    pub new_mmtc: u32,
    pub new_urllc: u32,
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), InvalidParam> {
        ensure(self.k_m_p <= self.k_m, "k_m_p", "must not exceed k_m")?;
        ensure((0.0..=1.0).contains(&self.p), "p", "must lie in [0, 1]")?;
        ensure(self.t_p >= 1, "t_p", "must be at least 1")?;
        ensure(self.t_u >= 1, "t_u", "must be at least 1")?;
        ensure(
            self.alpha.is_finite() && self.alpha > 0.0,
            "alpha",
            "must be > 0",
        )?;
        ensure(
            self.beta.is_finite() && self.beta > 0.0,
            "beta",
            "must be > 0",
        )?;
        Ok(())
    }

    pub fn aperiodic_mmtc(&self) -> u32 {
        self.k_m - self.k_m_p
    }

    /// Whether the periodic mMTC group reports in frame `t`.
    pub fn is_periodic_frame(&self, t: u64) -> bool {
        t.is_multiple_of(u64::from(self.t_p))
    }

    /// Per-user URLLC activation probability in frame `t`, i.e. the Beta
    /// profile evaluated at the offset `t mod t_u` and clamped to `[0, 1]`.
    pub fn urllc_activation_prob(&self, t: u64) -> f64 {
        let period = f64::from(self.t_u);
        let tau = (t % u64::from(self.t_u)) as f64;
        let num = tau.powf(self.alpha - 1.0) * (period - tau).powf(self.beta - 1.0);
        let den = period.powf(self.alpha + self.beta - 1.0) * beta(self.alpha, self.beta);
        let q = num / den;
        if q.is_finite() {
            q.clamp(0.0, 1.0)
        } else {
            // 0^(negative) at the period edge when alpha or beta < 1.
            1.0
        }
    }

    /// Frame offset of the URLLC activation peak (only meaningful for alpha, beta > 1).
    pub fn urllc_peak_offset(&self) -> f64 {
        f64::from(self.t_u) * (self.alpha - 1.0) / (self.alpha + self.beta - 2.0)
    }

    /// Expected URLLC arrivals over one full period.
    pub fn expected_urllc_per_period(&self) -> f64 {
        let per_user: f64 = (0..u64::from(self.t_u))
            .map(|t| self.urllc_activation_prob(t))
            .sum();
        f64::from(self.k_u) * per_user
    }
}

/// Number of successes among `n` independent trials of probability `prob`.
pub fn bernoulli_count<R: Rng + ?Sized>(n: u32, prob: f64, rng: &mut R) -> u32 {
    if n == 0 || prob <= 0.0 {
        return 0;
    }
    if prob >= 1.0 {
        return n;
    }
    let draw = Binomial::new(u64::from(n), prob).expect("probability checked above");
    draw.sample(rng) as u32
}

/// mMTC arrivals in frame `t`: one Bernoulli(p) draw per aperiodic device
/// plus the whole periodic group on frames that are multiples of `t_p`.
pub fn gen_mmtc_arrivals<R: Rng + ?Sized>(cfg: &TrafficConfig, t: u64, rng: &mut R) -> u32 {
    let random = bernoulli_count(cfg.aperiodic_mmtc(), cfg.p, rng);
    let periodic = if cfg.is_periodic_frame(t) {
        cfg.k_m_p
    } else {
        0
    };
    random + periodic
}

/// URLLC arrivals in frame `t`.
pub fn gen_urllc_arrivals<R: Rng + ?Sized>(cfg: &TrafficConfig, t: u64, rng: &mut R) -> u32 {
    bernoulli_count(cfg.k_u, cfg.urllc_activation_prob(t), rng)
}

pub fn gen_arrivals<R: Rng + ?Sized>(cfg: &TrafficConfig, t: u64, rng: &mut R) -> ArrivalBatch {
    ArrivalBatch {
        frame_index: t,
        new_mmtc: gen_mmtc_arrivals(cfg, t, rng),
        new_urllc: gen_urllc_arrivals(cfg, t, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn cfg() -> TrafficConfig {
        TrafficConfig::default()
    }

    #[test]
    fn zero_probability_gives_no_mmtc() {
        let c = TrafficConfig {
            p: 0.0,
            k_m_p: 0,
            ..cfg()
        };
        let mut rng = stream(1, 0);
        for t in 0..50 {
            assert_eq!(gen_mmtc_arrivals(&c, t, &mut rng), 0);
        }
    }

    #[test]
    fn certain_activation_wakes_everyone() {
        let c = TrafficConfig {
            p: 1.0,
            k_m: 100,
            k_m_p: 0,
            ..cfg()
        };
        let mut rng = stream(1, 0);
        for t in 0..20 {
            assert_eq!(gen_mmtc_arrivals(&c, t, &mut rng), 100);
        }
    }

    #[test]
    fn mmtc_long_run_mean() {
        let c = TrafficConfig {
            k_m: 1000,
            p: 0.001,
            k_m_p: 10,
            t_p: 10,
            ..cfg()
        };
        let mut rng = stream(42, 0);
        let frames = 100_000u64;
        let total: u64 = (0..frames)
            .map(|t| u64::from(gen_mmtc_arrivals(&c, t, &mut rng)))
            .sum();
        let mean = total as f64 / frames as f64;
        // 990 aperiodic devices at p = 0.001 plus 10 devices every 10 frames.
        let expected = 990.0 * 0.001 + 1.0;
        assert!((mean - expected).abs() / expected < 0.05, "mean {mean}");
    }

    #[test]
    fn periodic_spike_sits_on_multiples_of_period() {
        let c = TrafficConfig {
            k_m: 1000,
            p: 0.002,
            k_m_p: 50,
            t_p: 10,
            ..cfg()
        };
        let mut rng = stream(3, 0);
        let mut on = 0u64;
        let mut off = 0u64;
        let periods = 20_000u64;
        for t in 0..periods * 10 {
            let n = u64::from(gen_mmtc_arrivals(&c, t, &mut rng));
            match t % 10 {
                0 => on += n,
                1 => off += n,
                _ => {}
            }
        }
        let diff = (on as f64 - off as f64) / periods as f64;
        assert!((diff - 50.0).abs() < 0.2, "spike {diff}");
    }

    #[test]
    fn urllc_zero_at_period_edge() {
        let c = cfg();
        assert_eq!(c.urllc_activation_prob(0), 0.0);
        assert_eq!(c.urllc_activation_prob(20), 0.0);
        let mut rng = stream(5, 0);
        assert_eq!(gen_urllc_arrivals(&c, 10, &mut rng), 0);
    }

    #[test]
    fn urllc_profile_value_at_mid_period() {
        // Beta(3, 4) = 1/60, so q(5) = 5^2 * 5^3 / (10^6 / 60).
        let c = TrafficConfig {
            alpha: 3.0,
            beta: 4.0,
            t_u: 10,
            ..cfg()
        };
        assert!((c.urllc_activation_prob(5) - 0.1875).abs() < 1e-12);
    }

    #[test]
    fn urllc_mean_per_period_matches_profile_sum() {
        let c = TrafficConfig {
            k_u: 25,
            alpha: 3.0,
            beta: 4.0,
            t_u: 10,
            ..cfg()
        };
        let expected: f64 = 25.0 * (0..10).map(|t| c.urllc_activation_prob(t)).sum::<f64>();
        let mut rng = stream(11, 0);
        let periods = 10_000u64;
        let total: u64 = (0..periods * 10)
            .map(|t| u64::from(gen_urllc_arrivals(&c, t, &mut rng)))
            .sum();
        let mean = total as f64 / periods as f64;
        assert!(
            (mean - expected).abs() / expected < 0.05,
            "mean {mean} vs {expected}"
        );
        assert!((c.expected_urllc_per_period() - expected).abs() < 1e-12);
    }

    #[test]
    fn profile_is_unimodal_around_peak() {
        let c = TrafficConfig {
            t_u: 40,
            alpha: 3.0,
            beta: 4.0,
            ..cfg()
        };
        let q: Vec<f64> = (0..40).map(|t| c.urllc_activation_prob(t)).collect();
        let argmax = (0..40).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap();
        assert!((argmax as f64 - c.urllc_peak_offset()).abs() <= 1.0);
        assert!(q[..=argmax].windows(2).all(|w| w[0] <= w[1]));
        assert!(q[argmax..].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert_eq!(
            TrafficConfig {
                k_m_p: 2000,
                ..cfg()
            }
            .validate()
            .unwrap_err()
            .field,
            "k_m_p"
        );
        assert_eq!(
            TrafficConfig { p: 1.5, ..cfg() }
                .validate()
                .unwrap_err()
                .field,
            "p"
        );
        assert_eq!(
            TrafficConfig { t_p: 0, ..cfg() }
                .validate()
                .unwrap_err()
                .field,
            "t_p"
        );
        assert_eq!(
            TrafficConfig {
                alpha: 0.0,
                ..cfg()
            }
            .validate()
            .unwrap_err()
            .field,
            "alpha"
        );
        assert!(cfg().validate().is_ok());
    }

    proptest! {
        #[test]
        fn arrivals_bounded_and_deterministic(
            k_m in 0u32..3000, k_u in 0u32..200, p in 0.0f64..=1.0,
            t in 0u64..10_000, seed in any::<u64>(),
        ) {
            let c = TrafficConfig { k_m, k_u, p, k_m_p: k_m / 10, ..cfg() };
            let a = gen_arrivals(&c, t, &mut stream(seed, 0));
            let b = gen_arrivals(&c, t, &mut stream(seed, 0));
            prop_assert_eq!(a, b);
            prop_assert!(a.new_mmtc <= k_m);
            prop_assert!(a.new_urllc <= k_u);
        }
    }
}
