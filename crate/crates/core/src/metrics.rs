//! Evaluation metrics over frame outcomes, their aggregation across
//! realizations, and the CSV/JSON emitters.

use std::io::Write;

use serde::Serialize;
use statrs::statistics::Statistics;

use crate::predictor::Triplet;
use crate::protocol::{ClassOutcome, FrameOutcome};

/// Backlog over channels; `None` when the class has no channels.
pub fn channel_loading(k_breve: u32, l: u32) -> Option<f64> {
    (l > 0).then(|| f64::from(k_breve) / f64::from(l))
}

/// Fraction of channels carrying exactly one transmission; zero for an empty class.
pub fn normalized_throughput(v_s: u32, v_c: u32, v_i: u32) -> f64 {
    let total = v_s + v_c + v_i;
    if total == 0 {
        0.0
    } else {
        f64::from(v_s) / f64::from(total)
    }
}

fn eta(t: &Triplet) -> f64 {
    normalized_throughput(t.success, t.collision, t.idle)
}

/// A per-frame scalar derived from a [`FrameOutcome`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    ClU,
    ClM,
    EtaU,
    EtaM,
    EtaTotal,
    ChannelsU,
    ChannelsM,
    PredictedU,
    PredictedM,
    ArrivalsU,
    ArrivalsM,
    BlockedU,
    BlockedM,
    BacklogU,
    BacklogM,
    ServedU,
    ServedM,
    CollidedU,
    CollidedM,
    RecollidedU,
    RecollidedM,
    DroppedU,
    DroppedM,
    BarredU,
    BarredM,
    BacklogOutU,
    BacklogOutM,
    PAcbU,
    PAcbM,
    MseU,
    MseM,
    LatencyM,
}

impl Metric {
    pub const ALL: [Metric; 32] = [
        Metric::ClU,
        Metric::ClM,
        Metric::EtaU,
        Metric::EtaM,
        Metric::EtaTotal,
        Metric::ChannelsU,
        Metric::ChannelsM,
        Metric::PredictedU,
        Metric::PredictedM,
        Metric::ArrivalsU,
        Metric::ArrivalsM,
        Metric::BlockedU,
        Metric::BlockedM,
        Metric::BacklogU,
        Metric::BacklogM,
        Metric::ServedU,
        Metric::ServedM,
        Metric::CollidedU,
        Metric::CollidedM,
        Metric::RecollidedU,
        Metric::RecollidedM,
        Metric::DroppedU,
        Metric::DroppedM,
        Metric::BarredU,
        Metric::BarredM,
        Metric::BacklogOutU,
        Metric::BacklogOutM,
        Metric::PAcbU,
        Metric::PAcbM,
        Metric::MseU,
        Metric::MseM,
        Metric::LatencyM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ClU => "cl_u",
            Metric::ClM => "cl_m",
            Metric::EtaU => "eta_u",
            Metric::EtaM => "eta_m",
            Metric::EtaTotal => "eta_total",
            Metric::ChannelsU => "channels_u",
            Metric::ChannelsM => "channels_m",
            Metric::PredictedU => "predicted_u",
            Metric::PredictedM => "predicted_m",
            Metric::ArrivalsU => "arrivals_u",
            Metric::ArrivalsM => "arrivals_m",
            Metric::BlockedU => "blocked_u",
            Metric::BlockedM => "blocked_m",
            Metric::BacklogU => "backlog_u",
            Metric::BacklogM => "backlog_m",
            Metric::ServedU => "served_u",
            Metric::ServedM => "served_m",
            Metric::CollidedU => "collided_u",
            Metric::CollidedM => "collided_m",
            Metric::RecollidedU => "recollided_u",
            Metric::RecollidedM => "recollided_m",
            Metric::DroppedU => "dropped_u",
            Metric::DroppedM => "dropped_m",
            Metric::BarredU => "barred_u",
            Metric::BarredM => "barred_m",
            Metric::BacklogOutU => "backlog_out_u",
            Metric::BacklogOutM => "backlog_out_m",
            Metric::PAcbU => "p_acb_u",
            Metric::PAcbM => "p_acb_m",
            Metric::MseU => "mse_u",
            Metric::MseM => "mse_m",
            Metric::LatencyM => "latency_m",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Value for one frame; `None` when undefined (CL without channels,
    /// MSE without a predictor, latency without served devices).
    pub fn value(self, o: &FrameOutcome) -> Option<f64> {
        let (u, m) = (&o.urllc, &o.mmtc);
        let n = |x: u32| Some(f64::from(x));
        match self {
            Metric::ClU => channel_loading(u.backlog, u.channels),
            Metric::ClM => channel_loading(m.backlog, m.channels),
            Metric::EtaU => Some(eta(&u.msg3)),
            Metric::EtaM => Some(eta(&m.msg3)),
            Metric::EtaTotal => Some(normalized_throughput(
                u.served + m.served,
                u.msg3.collision + m.msg3.collision,
                u.msg3.idle + m.msg3.idle,
            )),
            Metric::ChannelsU => n(u.channels),
            Metric::ChannelsM => n(m.channels),
            Metric::PredictedU => n(u.predicted),
            Metric::PredictedM => n(m.predicted),
            Metric::ArrivalsU => n(u.arrivals),
            Metric::ArrivalsM => n(m.arrivals),
            Metric::BlockedU => n(u.blocked_arrivals),
            Metric::BlockedM => n(m.blocked_arrivals),
            Metric::BacklogU => n(u.backlog),
            Metric::BacklogM => n(m.backlog),
            Metric::ServedU => n(u.served),
            Metric::ServedM => n(m.served),
            Metric::CollidedU => n(u.msg1.collision),
            Metric::CollidedM => n(m.msg1.collision),
            Metric::RecollidedU => n(u.msg3.collision),
            Metric::RecollidedM => n(m.msg3.collision),
            Metric::DroppedU => n(u.dropped),
            Metric::DroppedM => n(m.dropped),
            Metric::BarredU => n(u.barred),
            Metric::BarredM => n(m.barred),
            Metric::BacklogOutU => n(u.backlog_out),
            Metric::BacklogOutM => n(m.backlog_out),
            Metric::PAcbU => Some(u.p_acb),
            Metric::PAcbM => Some(m.p_acb),
            Metric::MseU => u.sq_error,
            Metric::MseM => m.sq_error,
            Metric::LatencyM => mean_latency(m),
        }
    }
}

fn mean_latency(c: &ClassOutcome) -> Option<f64> {
    (c.served > 0).then(|| c.latency_frames as f64 / f64::from(c.served))
}

/// Mean, sample standard deviation and standard error of the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub se: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// `None` when no values are given.
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> Option<Stats> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().mean();
        let std = if n > 1 { v.iter().std_dev() } else { 0.0 };
        let (min, max) = (Statistics::min(v.iter()), Statistics::max(v.iter()));
        Some(Stats {
            n,
            mean,
            std,
            se: std / (n as f64).sqrt(),
            min,
            max,
        })
    }
}

/// Per-frame metric values of several realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    /// `traces[r][t]` is frame `t` of realization `r`.
    pub traces: Vec<Vec<FrameOutcome>>,
}

impl MetricsSeries {
    pub fn new(traces: Vec<Vec<FrameOutcome>>) -> Self {
        Self { traces }
    }

    pub fn realizations(&self) -> usize {
        self.traces.len()
    }

    pub fn frames(&self) -> usize {
        self.traces.first().map_or(0, Vec::len)
    }

    /// Values of one realization; undefined frames are `None`.
    pub fn series(&self, realization: usize, metric: Metric) -> Vec<Option<f64>> {
        self.traces[realization]
            .iter()
            .map(|o| metric.value(o))
            .collect()
    }

    /// Mean over the defined values of frames `window` in one realization.
    pub fn window_mean(
        &self,
        realization: usize,
        metric: Metric,
        window: std::ops::Range<usize>,
    ) -> Option<f64> {
        let trace = &self.traces[realization];
        let end = window.end.min(trace.len());
        let start = window.start.min(end);
        Stats::of(trace[start..end].iter().filter_map(|o| metric.value(o))).map(|s| s.mean)
    }

    /// Statistics across realizations of each realization's window mean.
    pub fn across_realizations(
        &self,
        metric: Metric,
        window: std::ops::Range<usize>,
    ) -> Option<Stats> {
        Stats::of(
            (0..self.realizations()).filter_map(|r| self.window_mean(r, metric, window.clone())),
        )
    }

    /// Per-frame statistics across realizations.
    pub fn per_frame(&self, metric: Metric) -> Vec<Option<Stats>> {
        (0..self.frames())
            .map(|t| {
                Stats::of(
                    self.traces
                        .iter()
                        .filter_map(|tr| tr.get(t).and_then(|o| metric.value(o))),
                )
            })
            .collect()
    }

    /// Long-format rows `realization,frame,metric,value`; undefined values are omitted.
    pub fn write_long_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["realization", "frame", "metric", "value"])?;
        for (r, trace) in self.traces.iter().enumerate() {
            for o in trace {
                for metric in Metric::ALL {
                    if let Some(v) = metric.value(o) {
                        w.write_record([
                            r.to_string(),
                            o.frame.to_string(),
                            metric.name().to_string(),
                            fmt(v),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Rows `frame,metric,n,mean,std` across realizations.
    pub fn write_aggregate_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frame", "metric", "n", "mean", "std"])?;
        let per_metric: Vec<_> = Metric::ALL
            .iter()
            .map(|&m| (m, self.per_frame(m)))
            .collect();
        for t in 0..self.frames() {
            for (metric, stats) in &per_metric {
                if let Some(s) = stats[t] {
                    w.write_record([
                        t.to_string(),
                        metric.name().to_string(),
                        s.n.to_string(),
                        fmt(s.mean),
                        fmt(s.std),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Whole-run summary: for every metric, statistics of the per-realization means.
    pub fn summary(&self) -> Summary {
        let frames = self.frames();
        let metrics = Metric::ALL
            .iter()
            .filter_map(|&m| {
                self.across_realizations(m, 0..frames)
                    .map(|s| (m.name().to_string(), s))
            })
            .collect();
        Summary {
            realizations: self.realizations(),
            frames,
            metrics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub realizations: usize,
    pub frames: usize,
    pub metrics: std::collections::BTreeMap<String, Stats>,
}

/// Shortest decimal text that parses back to the same value.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loading_examples() {
        assert_eq!(channel_loading(7, 7), Some(1.0));
        assert_eq!(channel_loading(0, 5), Some(0.0));
        assert!((channel_loading(30, 54).unwrap() - 30.0 / 54.0).abs() < 1e-12);
        assert!((channel_loading(30, 54).unwrap() - 0.5556).abs() < 1e-4);
        assert_eq!(channel_loading(3, 0), None);
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(normalized_throughput(54, 0, 0), 1.0);
        assert_eq!(normalized_throughput(0, 20, 34), 0.0);
        assert_eq!(normalized_throughput(27, 13, 14), 0.5);
        assert_eq!(normalized_throughput(0, 0, 0), 0.0);
    }

    #[test]
    fn names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(Metric::from_name(m.name()), Some(m));
        }
        assert_eq!(Metric::from_name("nope"), None);
    }

    #[test]
    fn stats_of_small_sample() {
        let s = Stats::of([1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!((s.min, s.max), (1.0, 3.0));
        assert!(Stats::of(std::iter::empty()).is_none());
    }

    fn outcome(frame: u64, served: u32, channels: u32, backlog: u32) -> FrameOutcome {
        let msg3 = Triplet {
            success: served,
            collision: 0,
            idle: channels - served,
        };
        let mmtc = ClassOutcome {
            channels,
            backlog,
            served,
            msg3,
            msg1: msg3,
            ..ClassOutcome::default()
        };
        FrameOutcome {
            frame,
            mmtc,
            ..FrameOutcome::default()
        }
    }

    #[test]
    fn csv_skips_undefined_values() {
        let series = MetricsSeries::new(vec![vec![outcome(0, 1, 2, 3)]]);
        let mut buf = Vec::new();
        series.write_long_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("realization,frame,metric,value\n"));
        assert!(text.contains("0,0,cl_m,1.5\n"));
        assert!(text.contains("0,0,eta_m,0.5\n"));
        assert!(!text.contains("cl_u"));
        assert!(!text.contains("mse_m"));
    }

    proptest! {
        #[test]
        fn eta_is_served_over_channels(served in 0u32..50, extra in 0u32..50, backlog in 0u32..200) {
            let o = outcome(0, served, served + extra, backlog);
            let eta = Metric::EtaM.value(&o).unwrap();
            prop_assert!((0.0..=1.0).contains(&eta));
            if served + extra > 0 {
                prop_assert_eq!(eta, f64::from(served) / f64::from(served + extra));
            }
        }

        #[test]
        fn aggregate_mean_within_envelope(values in proptest::collection::vec((0u32..20, 1u32..20), 1..8)) {
            let traces = values.iter().map(|&(s, extra)| vec![outcome(0, s, s + extra, s)]).collect();
            let series = MetricsSeries::new(traces);
            let st = series.per_frame(Metric::EtaM)[0].unwrap();
            prop_assert!(st.min - 1e-12 <= st.mean && st.mean <= st.max + 1e-12);
        }
    }
}
