//! Frame-level Monte-Carlo simulator of a hybrid grant-based/grant-free
//! random-access protocol shared by URLLC and mMTC devices.
//!
//! Every frame the base station predicts the per-class backlog, slices the
//! time-frequency grid into per-class channels, and runs the four-step
//! access procedure with access class barring on collided channels. The
//! [`campaign`] module drives seeded multi-realization runs from a
//! [`scenario::Scenario`] and writes CSV/JSON results.
//!
//! ```
//! use hybrid_ra::campaign::simulate_scenario;
//! use hybrid_ra::metrics::Metric;
//! use hybrid_ra::scenario::preset;
//!
//! let s = preset("table1-baseline").unwrap().with_overrides(&["frames=50", "realizations=2"]).unwrap();
//! let series = simulate_scenario(&s).unwrap();
//! let eta = series.across_realizations(Metric::EtaTotal, 0..50).unwrap();
//! assert!((0.0..=1.0).contains(&eta.mean));
//! ```

pub mod acb;
pub mod campaign;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod predictor;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod slicer;
pub mod traffic;

pub use error::InvalidParam;
pub use protocol::{FrameOutcome, Simulator};
pub use scenario::Scenario;
