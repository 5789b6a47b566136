//! Frame-level random-access state machine.
//!
//! Each frame runs four steps:
//!
//! 1. **SIB2**: the base station predicts the per-class backlog and
//!    broadcasts a channel plan (slicer-driven or fixed).
//! 2. **Msg1**: every pending, non-barred device picks one channel of its own
//!    class uniformly at random. This costs one access attempt.
//! 3. **Msg2**: channels are classified as success, collision or idle. The
//!    base station broadcasts a barring factor per class; every device on a
//!    collided channel runs the barring check and failures back off.
//! 4. **Msg3**: devices that selected a channel alone succeed. On a collided
//!    channel, a sole surviving device succeeds; two or more collide again.
//!
//! Devices that used up `w` attempts without success are dropped. A new
//! packet for a device that is still busy is discarded and counted.

use rand::Rng;
use serde::Serialize;

use crate::acb::{acb_check, barring_delay, AcbConfig};
use crate::grid::{GridConfig, ServiceClass, ServiceProfile};
use crate::predictor::{
    BacklogEstimate, History, Observation, Population, Predictor, PredictorError, Triplet,
};
use crate::slicer::{maxrect_pack, ChannelPlan, ChannelSizes, SlicerConfig};
use crate::traffic::{bernoulli_count, TrafficConfig};

/// Where the per-frame channel counts come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSource {
    /// Pack the grid every frame from the predicted backlog.
    Slicer,
    /// Constant reservation.
    Fixed { l_u: u32, l_m: u32 },
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub traffic: TrafficConfig,
    pub grid: GridConfig,
    pub urllc: ServiceProfile,
    pub mmtc: ServiceProfile,
    pub slicer: SlicerConfig,
    pub acb: AcbConfig,
    pub channels: ChannelSource,
    /// Required for [`ChannelSource::Slicer`]; optional otherwise (then only scored).
    pub predictor: Option<Predictor>,
    pub history_window: usize,
    /// Estimate used while a learned predictor has no history yet.
    pub prior: BacklogEstimate,
}

impl ProtocolConfig {
    pub fn population(&self) -> Population {
        Population {
            k_u: self.traffic.k_u,
            k_m: self.traffic.k_m,
        }
    }

    pub fn sizes(&self) -> ChannelSizes {
        ChannelSizes::new(&self.grid, &self.urllc, &self.mmtc)
    }

    /// Expected new arrivals per frame, rounded; the default cold-start prior.
    pub fn expected_arrivals(traffic: &TrafficConfig) -> BacklogEstimate {
        let u = traffic.expected_urllc_per_period() / f64::from(traffic.t_u);
        let m = f64::from(traffic.aperiodic_mmtc()) * traffic.p
            + f64::from(traffic.k_m_p) / f64::from(traffic.t_p);
        BacklogEstimate {
            k_hat_u: u.round() as u32,
            k_hat_m: m.round() as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Device {
    periodic: bool,
    attempts: u32,
    arrival_frame: u64,
}

#[derive(Debug, Clone, Copy)]
struct Barred {
    class: ServiceClass,
    device: Device,
    until: u64,
}

/// Per-class device bookkeeping.
#[derive(Debug, Clone, Default)]
struct ClassState {
    idle_aperiodic: u32,
    idle_periodic: u32,
    /// Pending devices allowed to contend this frame.
    contenders: Vec<Device>,
}

/// Everything that happened to one class in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ClassOutcome {
    /// Channels reserved for the class.
    pub channels: u32,
    /// Backlog the plan was built for.
    pub predicted: u32,
    /// New packets accepted by idle devices.
    pub arrivals: u32,
    /// New packets discarded because their device was still busy.
    pub blocked_arrivals: u32,
    /// Contenders carried over from the previous frame.
    pub carried: u32,
    /// Barred devices whose back-off ended this frame.
    pub rejoined: u32,
    /// Devices contending this frame: `arrivals + carried + rejoined`.
    pub backlog: u32,
    /// Channel states after Msg1.
    pub msg1: Triplet,
    /// Channel states after Msg3: successes, still-collided and otherwise unused channels.
    pub msg3: Triplet,
    pub served: u32,
    pub dropped: u32,
    /// Devices barred in this frame.
    pub barred: u32,
    /// Contenders carried into the next frame.
    pub backlog_out: u32,
    /// Factor broadcast in Msg2.
    pub p_acb: f64,
    /// Squared error of the population-normalized prediction, when a predictor ran.
    pub sq_error: Option<f64>,
    /// Sum over served devices of frames waited since packet arrival.
    pub latency_frames: u64,
}

impl ClassOutcome {
    /// `arrivals + carried + rejoined == served + dropped + barred + backlog_out`.
    pub fn is_conserved(&self) -> bool {
        self.arrivals + self.carried + self.rejoined
            == self.served + self.dropped + self.barred + self.backlog_out
            && self.backlog == self.arrivals + self.carried + self.rejoined
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FrameOutcome {
    pub frame: u64,
    pub urllc: ClassOutcome,
    pub mmtc: ClassOutcome,
}

impl FrameOutcome {
    pub fn class(&self, class: ServiceClass) -> &ClassOutcome {
        match class {
            ServiceClass::Urllc => &self.urllc,
            ServiceClass::Mmtc => &self.mmtc,
        }
    }

    pub fn observation(&self) -> Observation {
        Observation {
            frame_index: self.frame,
            urllc: self.urllc.msg1,
            mmtc: self.mmtc.msg1,
        }
    }

    /// One-line event log entry.
    pub fn log_line(&self) -> String {
        let t = |x: &Triplet| format!("{}/{}/{}", x.success, x.collision, x.idle);
        format!(
            "t={} L=({},{}) obs_u={} obs_m={} p_acb=({:.4},{:.4}) served=({},{}) dropped=({},{}) barred=({},{}) backlog=({},{})",
            self.frame,
            self.urllc.channels,
            self.mmtc.channels,
            t(&self.urllc.msg1),
            t(&self.mmtc.msg1),
            self.urllc.p_acb,
            self.mmtc.p_acb,
            self.urllc.served,
            self.mmtc.served,
            self.urllc.dropped,
            self.mmtc.dropped,
            self.urllc.barred,
            self.mmtc.barred,
            self.urllc.backlog_out,
            self.mmtc.backlog_out,
        )
    }
}

/// Live state of one realization.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ProtocolConfig,
    sizes: ChannelSizes,
    urllc: ClassState,
    mmtc: ClassState,
    barred: Vec<Barred>,
    history: History,
    last_plan: Option<ChannelPlan>,
}

impl Simulator {
    pub fn new(cfg: ProtocolConfig) -> Self {
        let sizes = cfg.sizes();
        let urllc = ClassState {
            idle_aperiodic: cfg.traffic.k_u,
            ..ClassState::default()
        };
        let mmtc = ClassState {
            idle_aperiodic: cfg.traffic.aperiodic_mmtc(),
            idle_periodic: cfg.traffic.k_m_p,
            ..ClassState::default()
        };
        let history = History::new(cfg.history_window.max(1));
        Self {
            cfg,
            sizes,
            urllc,
            mmtc,
            barred: Vec::new(),
            history,
            last_plan: None,
        }
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Channel plan of the most recent slicer-driven frame.
    pub fn last_plan(&self) -> Option<&ChannelPlan> {
        self.last_plan.as_ref()
    }

    /// Number of devices with a pending packet (contending or barred).
    pub fn pending(&self, class: ServiceClass) -> usize {
        self.state(class).contenders.len() + self.barred.iter().filter(|b| b.class == class).count()
    }

    fn state(&self, class: ServiceClass) -> &ClassState {
        match class {
            ServiceClass::Urllc => &self.urllc,
            ServiceClass::Mmtc => &self.mmtc,
        }
    }

    fn state_mut(&mut self, class: ServiceClass) -> &mut ClassState {
        match class {
            ServiceClass::Urllc => &mut self.urllc,
            ServiceClass::Mmtc => &mut self.mmtc,
        }
    }

    /// Puts `n` pending devices of `class` directly into the backlog, as if
    /// they had arrived before frame 0. Used to set up controlled scenarios.
    pub fn inject_backlog(&mut self, class: ServiceClass, n: u32) {
        let st = self.state_mut(class);
        let n = n.min(st.idle_aperiodic);
        st.idle_aperiodic -= n;
        st.contenders.extend((0..n).map(|_| Device {
            periodic: false,
            attempts: 0,
            arrival_frame: 0,
        }));
    }

    pub fn run_frame<R: Rng + ?Sized>(&mut self, t: u64, rng: &mut R) -> FrameOutcome {
        let mut out = FrameOutcome {
            frame: t,
            ..FrameOutcome::default()
        };

        // Back-offs ending now.
        let carried = [
            self.urllc.contenders.len() as u32,
            self.mmtc.contenders.len() as u32,
        ];
        let mut rejoined = [0u32; 2];
        let mut still = Vec::with_capacity(self.barred.len());
        for b in std::mem::take(&mut self.barred) {
            if b.until <= t {
                rejoined[b.class as usize] += 1;
                self.state_mut(b.class).contenders.push(b.device);
            } else {
                still.push(b);
            }
        }
        self.barred = still;

        // New packets.
        let arrivals = [
            self.arrive(ServiceClass::Urllc, t, rng),
            self.arrive(ServiceClass::Mmtc, t, rng),
        ];

        let backlog = (
            self.urllc.contenders.len() as u32,
            self.mmtc.contenders.len() as u32,
        );
        let estimate = self.predict(backlog);

        let (l_u, l_m) = match self.cfg.channels {
            ChannelSource::Fixed { l_u, l_m } => (l_u, l_m),
            ChannelSource::Slicer => {
                let (k_u, k_m) = estimate
                    .map(|(e, _)| (e.k_hat_u, e.k_hat_m))
                    .unwrap_or(backlog);
                let plan = maxrect_pack(t, k_u, k_m, &self.cfg.grid, self.sizes, &self.cfg.slicer);
                let counts = (
                    plan.urllc_channels.len() as u32,
                    plan.mmtc_channels.len() as u32,
                );
                self.last_plan = Some(plan);
                counts
            }
        };

        for (idx, class) in ServiceClass::ALL.into_iter().enumerate() {
            let channels = if class == ServiceClass::Urllc {
                l_u
            } else {
                l_m
            };
            let co = match class {
                ServiceClass::Urllc => &mut out.urllc,
                ServiceClass::Mmtc => &mut out.mmtc,
            };
            co.channels = channels;
            co.carried = carried[idx];
            co.rejoined = rejoined[idx];
            co.arrivals = arrivals[idx].0;
            co.blocked_arrivals = arrivals[idx].1;
            if let Some((est, err)) = estimate {
                co.predicted = if class == ServiceClass::Urllc {
                    est.k_hat_u
                } else {
                    est.k_hat_m
                };
                co.sq_error = err.map(|e| e[idx]);
            }
            self.contend(class, channels, t, rng, &mut out);
        }

        debug_assert!(out.urllc.is_conserved() && out.mmtc.is_conserved());
        self.history.push(out.observation());
        out
    }

    /// Draws the frame's packets for `class`; returns (accepted, blocked).
    fn arrive<R: Rng + ?Sized>(&mut self, class: ServiceClass, t: u64, rng: &mut R) -> (u32, u32) {
        let traffic = &self.cfg.traffic;
        match class {
            ServiceClass::Urllc => {
                let q = traffic.urllc_activation_prob(t);
                let busy = traffic.k_u - self.urllc.idle_aperiodic;
                let accepted = bernoulli_count(self.urllc.idle_aperiodic, q, rng);
                let blocked = bernoulli_count(busy, q, rng);
                self.urllc.idle_aperiodic -= accepted;
                self.urllc.contenders.extend((0..accepted).map(|_| Device {
                    periodic: false,
                    attempts: 0,
                    arrival_frame: t,
                }));
                (accepted, blocked)
            }
            ServiceClass::Mmtc => {
                let p = traffic.p;
                let busy = traffic.aperiodic_mmtc() - self.mmtc.idle_aperiodic;
                let accepted = bernoulli_count(self.mmtc.idle_aperiodic, p, rng);
                let mut blocked = bernoulli_count(busy, p, rng);
                let (mut periodic_accepted, mut periodic_blocked) = (0, 0);
                if traffic.is_periodic_frame(t) {
                    periodic_accepted = self.mmtc.idle_periodic;
                    periodic_blocked = traffic.k_m_p - self.mmtc.idle_periodic;
                }
                blocked += periodic_blocked;
                self.mmtc.idle_aperiodic -= accepted;
                self.mmtc.idle_periodic -= periodic_accepted;
                let fresh = |periodic| Device {
                    periodic,
                    attempts: 0,
                    arrival_frame: t,
                };
                self.mmtc
                    .contenders
                    .extend((0..accepted).map(|_| fresh(false)));
                self.mmtc
                    .contenders
                    .extend((0..periodic_accepted).map(|_| fresh(true)));
                (accepted + periodic_accepted, blocked)
            }
        }
    }

    /// Prediction for this frame and, when a predictor ran, the per-class
    /// squared normalized error.
    #[allow(clippy::type_complexity)]
    fn predict(&self, backlog: (u32, u32)) -> Option<(BacklogEstimate, Option<[f64; 2]>)> {
        let Some(predictor) = &self.cfg.predictor else {
            return None;
        };
        let pop = self.cfg.population();
        let mut est = match predictor.predict(&self.history, Some(backlog), pop) {
            Ok(e) => e,
            Err(PredictorError::ColdStart) => self.cfg.prior,
            Err(e) => panic!("predictor failed: {e}"),
        };
        if predictor.is_learned() {
            // A class without channels produces no observations and its
            // estimate could never recover, so keep one probe channel.
            est.k_hat_u = est.k_hat_u.max(pop.k_u.min(1));
            est.k_hat_m = est.k_hat_m.max(pop.k_m.min(1));
        }
        let truth = pop.normalize(backlog);
        let guess = pop.normalize((est.k_hat_u, est.k_hat_m));
        let err = [(guess[0] - truth[0]).powi(2), (guess[1] - truth[1]).powi(2)];
        Some((est, Some(err)))
    }

    fn contend<R: Rng + ?Sized>(
        &mut self,
        class: ServiceClass,
        channels: u32,
        t: u64,
        rng: &mut R,
        out: &mut FrameOutcome,
    ) {
        let acb = self.cfg.acb;
        let barring_enabled = match class {
            ServiceClass::Urllc => acb.urllc,
            ServiceClass::Mmtc => acb.mmtc,
        };
        let contenders = std::mem::take(&mut self.state_mut(class).contenders);
        let backlog = contenders.len() as u32;

        let co = match class {
            ServiceClass::Urllc => &mut out.urllc,
            ServiceClass::Mmtc => &mut out.mmtc,
        };
        co.backlog = backlog;

        if channels == 0 {
            co.p_acb = acb.factor(0.0);
            co.backlog_out = backlog;
            self.state_mut(class).contenders = contenders;
            return;
        }

        // Msg1: uniform channel choice.
        let mut devices = contenders;
        let mut choice = Vec::with_capacity(devices.len());
        let mut load = vec![0u32; channels as usize];
        for d in devices.iter_mut() {
            d.attempts += 1;
            let c = rng.random_range(0..channels) as usize;
            load[c] += 1;
            choice.push(c);
        }
        let success = load.iter().filter(|&&n| n == 1).count() as u32;
        let collision = load.iter().filter(|&&n| n >= 2).count() as u32;
        co.msg1 = Triplet {
            success,
            collision,
            idle: channels - success - collision,
        };

        // Msg2: barring factor from the true mean number of colliders per collided channel.
        let colliders: u32 = load.iter().filter(|&&n| n >= 2).sum();
        let n_bar = if collision > 0 {
            f64::from(colliders) / f64::from(collision)
        } else {
            0.0
        };
        let p = if barring_enabled {
            acb.factor(n_bar)
        } else {
            1.0
        };
        co.p_acb = p;

        #[derive(Clone, Copy, PartialEq)]
        enum Fate {
            Served,
            Proceed,
            Barred(u64),
        }
        let mut fate = Vec::with_capacity(devices.len());
        let mut survivors = vec![0u32; channels as usize];
        for &c in &choice {
            if load[c] == 1 {
                fate.push(Fate::Served);
            } else if acb_check(p, rng) {
                survivors[c] += 1;
                fate.push(Fate::Proceed);
            } else {
                let until = t + u64::from(barring_delay(acb.t_acb, rng).max(1));
                fate.push(Fate::Barred(until));
            }
        }

        // Msg3: a lone survivor on a collided channel gets through.
        let mut served_channels = success;
        let mut recollided = 0;
        for (c, &n) in survivors.iter().enumerate() {
            if load[c] >= 2 {
                match n {
                    1 => served_channels += 1,
                    0 => {}
                    _ => recollided += 1,
                }
            }
        }
        for (k, &c) in choice.iter().enumerate() {
            if fate[k] == Fate::Proceed && survivors[c] == 1 {
                fate[k] = Fate::Served;
            }
        }
        co.msg3 = Triplet {
            success: served_channels,
            collision: recollided,
            idle: channels - served_channels - recollided,
        };

        let w = acb.w;
        let mut keep = Vec::new();
        let mut back_to_idle = (0u32, 0u32);
        for (d, f) in devices.into_iter().zip(fate) {
            match f {
                Fate::Served => {
                    co.served += 1;
                    co.latency_frames += t - d.arrival_frame;
                    if d.periodic {
                        back_to_idle.1 += 1;
                    } else {
                        back_to_idle.0 += 1;
                    }
                }
                _ if d.attempts >= w => {
                    co.dropped += 1;
                    if d.periodic {
                        back_to_idle.1 += 1;
                    } else {
                        back_to_idle.0 += 1;
                    }
                }
                Fate::Barred(until) => {
                    co.barred += 1;
                    self.barred.push(Barred {
                        class,
                        device: d,
                        until,
                    });
                }
                Fate::Proceed => keep.push(d),
            }
        }
        co.backlog_out = keep.len() as u32;
        debug_assert_eq!(co.served, served_channels);
        let st = self.state_mut(class);
        st.idle_aperiodic += back_to_idle.0;
        st.idle_periodic += back_to_idle.1;
        st.contenders = keep;
    }
}

/// Runs `frames` frames of one realization.
pub fn run_realization<R: Rng + ?Sized>(
    cfg: &ProtocolConfig,
    frames: u64,
    rng: &mut R,
) -> Vec<FrameOutcome> {
    let mut sim = Simulator::new(cfg.clone());
    (0..frames).map(|t| sim.run_frame(t, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acb::AcbMode;
    use crate::rng::stream;

    fn quiet(k_u: u32, k_m: u32) -> TrafficConfig {
        TrafficConfig {
            k_m,
            k_u,
            p: 0.0,
            k_m_p: 0,
            ..TrafficConfig::default()
        }
    }

    fn config(traffic: TrafficConfig, channels: ChannelSource, mode: AcbMode) -> ProtocolConfig {
        ProtocolConfig {
            traffic,
            grid: GridConfig::default(),
            urllc: ServiceProfile::urllc_default(),
            mmtc: ServiceProfile::mmtc_default(),
            slicer: SlicerConfig::default(),
            acb: AcbConfig {
                mode,
                ..AcbConfig::default()
            },
            channels,
            predictor: None,
            history_window: 20,
            prior: BacklogEstimate::default(),
        }
    }

    /// Frame 10 has zero URLLC activation probability under the default profile.
    const QUIET_FRAME: u64 = 10;

    #[test]
    fn lone_device_is_served() {
        let cfg = config(
            quiet(0, 10),
            ChannelSource::Fixed { l_u: 0, l_m: 3 },
            AcbMode::Fixed(0.3),
        );
        let mut sim = Simulator::new(cfg);
        sim.inject_backlog(ServiceClass::Mmtc, 1);
        let out = sim.run_frame(QUIET_FRAME, &mut stream(1, 0));
        assert_eq!(out.mmtc.served, 1);
        assert_eq!(out.mmtc.backlog_out, 0);
        assert_eq!(
            out.mmtc.msg1,
            Triplet {
                success: 1,
                collision: 0,
                idle: 2
            }
        );
    }

    #[test]
    fn two_devices_one_channel_without_barring_recollide() {
        let cfg = config(
            quiet(0, 10),
            ChannelSource::Fixed { l_u: 0, l_m: 1 },
            AcbMode::Fixed(1.0),
        );
        let mut sim = Simulator::new(cfg);
        sim.inject_backlog(ServiceClass::Mmtc, 2);
        let out = sim.run_frame(QUIET_FRAME, &mut stream(1, 0));
        assert_eq!(out.mmtc.served, 0);
        assert_eq!(out.mmtc.backlog_out, 2);
        assert_eq!(out.mmtc.msg1.collision, 1);
        assert_eq!(out.mmtc.msg3.collision, 1);
        assert_eq!(sim.pending(ServiceClass::Mmtc), 2);
    }

    #[test]
    fn two_devices_half_barring_resolution_rate() {
        // Exactly one of two devices passes a p = 0.5 check with probability 2 * 0.5 * 0.5.
        let cfg = config(
            quiet(0, 10),
            ChannelSource::Fixed { l_u: 0, l_m: 1 },
            AcbMode::Fixed(0.5),
        );
        let mut rng = stream(77, 0);
        let trials = 100_000;
        let mut served = 0;
        for _ in 0..trials {
            let mut sim = Simulator::new(cfg.clone());
            sim.inject_backlog(ServiceClass::Mmtc, 2);
            served += sim.run_frame(QUIET_FRAME, &mut rng).mmtc.served;
        }
        let rate = f64::from(served) / f64::from(trials);
        assert!((0.495..=0.505).contains(&rate), "{rate}");
    }

    #[test]
    fn class_without_channels_keeps_its_backlog() {
        let cfg = config(
            quiet(10, 10),
            ChannelSource::Fixed { l_u: 0, l_m: 2 },
            AcbMode::Optimal,
        );
        let mut sim = Simulator::new(cfg);
        sim.inject_backlog(ServiceClass::Urllc, 4);
        let out = sim.run_frame(QUIET_FRAME, &mut stream(2, 0));
        assert_eq!(out.urllc.backlog, 4);
        assert_eq!(out.urllc.backlog_out, 4);
        assert_eq!(out.urllc.msg1.channels(), 0);
    }

    #[test]
    fn attempts_are_capped() {
        let mut cfg = config(
            quiet(0, 10),
            ChannelSource::Fixed { l_u: 0, l_m: 1 },
            AcbMode::Fixed(1.0),
        );
        cfg.acb.w = 3;
        let mut sim = Simulator::new(cfg);
        sim.inject_backlog(ServiceClass::Mmtc, 2);
        let mut rng = stream(3, 0);
        let outs: Vec<_> = (0..4)
            .map(|t| sim.run_frame(QUIET_FRAME + t, &mut rng))
            .collect();
        assert_eq!(outs[2].mmtc.dropped, 2);
        assert_eq!(outs[3].mmtc.backlog, 0);
        assert_eq!(sim.pending(ServiceClass::Mmtc), 0);
    }

    #[test]
    fn barred_devices_wait_out_their_delay() {
        let mut cfg = config(
            quiet(0, 10),
            ChannelSource::Fixed { l_u: 0, l_m: 1 },
            AcbMode::Fixed(0.0),
        );
        cfg.acb.t_acb = 10;
        let mut sim = Simulator::new(cfg);
        sim.inject_backlog(ServiceClass::Mmtc, 2);
        let mut rng = stream(4, 0);
        let first = sim.run_frame(0, &mut rng);
        assert_eq!(first.mmtc.barred, 2);
        // Delays are 7 or 8 frames.
        for t in 1..7 {
            assert_eq!(sim.run_frame(t, &mut rng).mmtc.backlog, 0);
        }
        let rejoined: u32 = (7..=8)
            .map(|t| sim.run_frame(t, &mut rng).mmtc.rejoined)
            .sum();
        assert_eq!(rejoined, 2);
    }

    #[test]
    fn busy_devices_discard_new_packets() {
        let traffic = TrafficConfig {
            k_m: 10,
            k_u: 0,
            p: 1.0,
            k_m_p: 0,
            ..TrafficConfig::default()
        };
        let cfg = config(
            traffic,
            ChannelSource::Fixed { l_u: 0, l_m: 1 },
            AcbMode::Fixed(1.0),
        );
        let mut sim = Simulator::new(cfg);
        let mut rng = stream(5, 0);
        let a = sim.run_frame(0, &mut rng);
        assert_eq!((a.mmtc.arrivals, a.mmtc.blocked_arrivals), (10, 0));
        let b = sim.run_frame(1, &mut rng);
        assert_eq!(b.mmtc.arrivals + b.mmtc.blocked_arrivals, 10);
        assert_eq!(b.mmtc.arrivals, a.mmtc.served + a.mmtc.dropped);
    }

    #[test]
    fn slicer_driven_oracle_matches_channels_to_backlog() {
        let traffic = TrafficConfig {
            k_m: 300,
            k_u: 20,
            p: 0.02,
            ..TrafficConfig::default()
        };
        let mut cfg = config(traffic, ChannelSource::Slicer, AcbMode::Optimal);
        cfg.predictor = Some(Predictor::Oracle);
        let outs = run_realization(&cfg, 200, &mut stream(6, 0));
        for o in &outs {
            for class in ServiceClass::ALL {
                let c = o.class(class);
                assert_eq!(c.predicted, c.backlog);
                assert!(c.channels <= c.backlog);
                assert_eq!(c.sq_error, Some(0.0));
            }
        }
        assert!(outs
            .iter()
            .any(|o| o.mmtc.channels > 0 && o.urllc.channels > 0));
    }

    #[test]
    fn learned_predictors_keep_a_probe_channel() {
        let traffic = TrafficConfig {
            k_m: 300,
            k_u: 20,
            ..TrafficConfig::default()
        };
        let mut cfg = config(traffic, ChannelSource::Slicer, AcbMode::Optimal);
        cfg.predictor = Some(Predictor::MovingAverage { window: 5 });
        let outs = run_realization(&cfg, 300, &mut stream(6, 1));
        assert!(outs
            .iter()
            .all(|o| o.urllc.channels >= 1 && o.mmtc.channels >= 1));
        let served: u32 = outs.iter().map(|o| o.urllc.served).sum();
        assert!(served > 0);
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = config(
            TrafficConfig::default(),
            ChannelSource::Fixed { l_u: 8, l_m: 46 },
            AcbMode::Optimal,
        );
        let a = run_realization(&cfg, 300, &mut stream(8, 3));
        let b = run_realization(&cfg, 300, &mut stream(8, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn log_line_mentions_frame_and_counts() {
        let cfg = config(
            quiet(0, 10),
            ChannelSource::Fixed { l_u: 0, l_m: 3 },
            AcbMode::Optimal,
        );
        let mut sim = Simulator::new(cfg);
        sim.inject_backlog(ServiceClass::Mmtc, 1);
        let line = sim.run_frame(QUIET_FRAME, &mut stream(1, 0)).log_line();
        assert!(
            line.starts_with("t=10 L=(0,3) obs_u=0/0/0 obs_m=1/0/2"),
            "{line}"
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn every_frame_conserves_devices(
            seed in 0u64..1000,
            k_u in 0u32..60,
            k_m in 0u32..800,
            p in 0.0f64..0.2,
            l_u in 0u32..10,
            l_m in 0u32..30,
            t_acb in 0u32..12,
            fixed in proptest::option::of(0.0f64..=1.0),
            slicer in proptest::bool::ANY,
        ) {
            let traffic = TrafficConfig { k_m, k_u, p, k_m_p: k_m.min(10), ..TrafficConfig::default() };
            let channels = if slicer { ChannelSource::Slicer } else { ChannelSource::Fixed { l_u, l_m } };
            let mode = fixed.map_or(AcbMode::Optimal, AcbMode::Fixed);
            let mut cfg = config(traffic, channels, mode);
            cfg.acb.t_acb = t_acb;
            cfg.predictor = Some(Predictor::Oracle);
            let mut sim = Simulator::new(cfg);
            let mut rng = stream(seed, 0);
            for t in 0..60 {
                let o = sim.run_frame(t, &mut rng);
                for class in ServiceClass::ALL {
                    let c = o.class(class);
                    proptest::prop_assert!(c.is_conserved());
                    proptest::prop_assert_eq!(c.msg1.channels(), c.channels);
                    proptest::prop_assert_eq!(c.msg3.channels(), c.channels);
                    proptest::prop_assert!(c.served <= c.channels);
                    proptest::prop_assert!((0.0..=1.0).contains(&c.p_acb));
                }
                proptest::prop_assert!(sim.pending(ServiceClass::Urllc) <= k_u as usize);
                proptest::prop_assert!(sim.pending(ServiceClass::Mmtc) <= k_m as usize);
            }
        }
    }
}
