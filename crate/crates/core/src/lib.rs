//! Mixed-timescale simulation of cache-enabled multicell MIMO downlinks:
//! WMMSE-style sum-power precoding for coordinated MIMO and CoMP, an MDS
//! random cache with stochastic-subgradient cache control, playback and
//! backhaul accounting, and the orchestration that ties them together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the (m, k, n) subscripts of the model.
#![allow(clippy::needless_range_loop)]

pub mod cache;
pub mod channel;
pub mod config;
pub mod error;
pub mod export;
pub mod linalg;
pub mod precoder;
pub mod rng;
pub mod sim;
pub mod streaming;
pub mod validate;

pub use channel::{build_topology, draw_channel, path_gain, ChannelState, Topology};
pub use config::{PlacementMode, SystemConfig};
pub use error::{Error, Result};
pub use precoder::{algorithm_sp, Mode, PrecoderSet, RateConstraint, WmmseState};
