//! Short-timescale precoding: rates and powers, MMSE receivers, the weighted
//! MSE reformulation, the Lagrange dual inner solver and the alternating
//! WMMSE iteration for both transmission modes.
//!
//! Coordinated MIMO and CoMP share one code path. A [`LinkView`] presents the
//! channel as "link from the transmitter of stream n to user k": the physical
//! `H[m][k][n]` in coordinated mode, and the composite `[H[m][k][1] .. H[m][k][K]]`
//! for every n in CoMP mode.

mod dual;
mod init;
mod metrics;
mod sp;

pub use dual::{
    dual_inner_precoders, dual_subgradient, solve_dual, DualMethod, DualOptions, DualProblem, DualSolution,
};
pub use init::{comp_initial_point, feasible_init, project_streams, shared_subcarrier_init, spread_init};
pub use metrics::{
    interference_covariance, mmse_receiver, mse_matrix, per_bs_power, rate_nats, sum_power, user_rates, weight_matrix,
    wmmse_rate_nats, Receivers,
};
pub use sp::{algorithm_sp, kkt_residual, InitRule, KktResidual, SpOptions, WmmseState};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::linalg::{fro2, hstack, CMat};

/// Direct-link energy below this counts as an all-zero link.
pub const DIRECT_LINK_THRESHOLD: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// BS k serves only user k.
    Coordinated,
    /// All BSs jointly serve all users from cached payload.
    Comp,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Coordinated => "coordinated",
            Mode::Comp => "comp",
        }
    }
}

/// Precoders `V[m][k]`, N_T x d (coordinated) or K N_T x d~ (CoMP).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub mode: Mode,
    subcarriers: usize,
    users: usize,
    rows: usize,
    streams: usize,
    blocks: Vec<CMat>,
}

impl PrecoderSet {
    pub fn zeros(mode: Mode, subcarriers: usize, users: usize, rows: usize, streams: usize) -> Self {
        PrecoderSet {
            mode,
            subcarriers,
            users,
            rows,
            streams,
            blocks: vec![CMat::zeros(rows, streams); subcarriers * users],
        }
    }

    /// Zero precoders shaped for `h` in the given mode.
    pub fn zeros_for(h: &ChannelState, mode: Mode) -> Self {
        let (rows, streams) = shape_for(h, mode);
        Self::zeros(mode, h.subcarriers(), h.users(), rows, streams)
    }

    pub fn from_blocks(mode: Mode, subcarriers: usize, users: usize, blocks: Vec<CMat>) -> Result<Self> {
        if blocks.len() != subcarriers * users || blocks.is_empty() {
            return Err(Error::Dimension(format!(
                "expected {} precoder blocks, got {}",
                subcarriers * users,
                blocks.len()
            )));
        }
        let shape = blocks[0].shape();
        if blocks.iter().any(|b| b.shape() != shape) {
            return Err(Error::Dimension("precoder blocks must share one shape".into()));
        }
        if blocks
            .iter()
            .any(|b| b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(Error::Numerical("non-finite precoder entry".into()));
        }
        Ok(PrecoderSet {
            mode,
            subcarriers,
            users,
            rows: shape.0,
            streams: shape.1,
            blocks,
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }
    pub fn users(&self) -> usize {
        self.users
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn v(&self, m: usize, k: usize) -> &CMat {
        &self.blocks[m * self.users + k]
    }

    pub fn v_mut(&mut self, m: usize, k: usize) -> &mut CMat {
        &mut self.blocks[m * self.users + k]
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn power(&self) -> f64 {
        self.blocks.iter().map(fro2).sum()
    }

    pub(crate) fn check_against(&self, h: &ChannelState) -> Result<()> {
        let (rows, _) = shape_for(h, self.mode);
        if self.subcarriers != h.subcarriers() || self.users != h.users() || self.rows != rows {
            return Err(Error::Dimension(format!(
                "{} precoders ({} x {} blocks of {} rows) do not fit a channel with M = {}, K = {}, N_T = {}",
                self.mode.name(),
                self.subcarriers,
                self.users,
                self.rows,
                h.subcarriers(),
                h.users(),
                h.tx()
            )));
        }
        Ok(())
    }
}

/// `(rows, streams)` of one precoder block.
pub fn shape_for(h: &ChannelState, mode: Mode) -> (usize, usize) {
    match mode {
        Mode::Coordinated => (h.tx(), h.tx().min(h.rx())),
        Mode::Comp => (h.users() * h.tx(), (h.users() * h.tx()).min(h.rx())),
    }
}

/// Per-user rate targets. `nats[k]` is the per-subcarrier target
/// `mu_k ln 2 / B_W` that the subcarrier-averaged log-det rate must reach.
#[derive(Debug, Clone, PartialEq)]
pub struct RateConstraint {
    pub rate_bps: Vec<f64>,
    pub nats: Vec<f64>,
    pub bandwidth_hz: f64,
}

impl RateConstraint {
    pub fn new(rate_bps: Vec<f64>, bandwidth_hz: f64) -> Result<Self> {
        if !(bandwidth_hz > 0.0) {
            return Err(Error::Domain("bandwidth must be positive".into()));
        }
        if rate_bps.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Domain("rate targets must be finite and non-negative".into()));
        }
        let nats = rate_bps
            .iter()
            .map(|r| r * std::f64::consts::LN_2 / bandwidth_hz)
            .collect();
        Ok(RateConstraint {
            rate_bps,
            nats,
            bandwidth_hz,
        })
    }

    /// Targets given directly in nats per subcarrier use.
    pub fn from_nats(nats: Vec<f64>, bandwidth_hz: f64) -> Result<Self> {
        let rates = nats.iter().map(|n| n * bandwidth_hz / std::f64::consts::LN_2).collect();
        Self::new(rates, bandwidth_hz)
    }

    /// Targets for a request profile (0-based file indices).
    pub fn for_request(stream_rate_bps: &[f64], profile: &[usize], bandwidth_hz: f64) -> Result<Self> {
        let rates = profile
            .iter()
            .map(|&l| {
                stream_rate_bps
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::Dimension(format!("requested file {} does not exist", l + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rates, bandwidth_hz)
    }

    pub fn users(&self) -> usize {
        self.nats.len()
    }
}

/// The channel seen through one transmission mode.
#[derive(Debug, Clone)]
pub struct LinkView<'a> {
    pub mode: Mode,
    h: &'a ChannelState,
    composite: Vec<CMat>,
}

impl<'a> LinkView<'a> {
    pub fn new(h: &'a ChannelState, mode: Mode) -> Self {
        let composite = match mode {
            Mode::Coordinated => Vec::new(),
            Mode::Comp => {
                let mut out = Vec::with_capacity(h.subcarriers() * h.users());
                for m in 0..h.subcarriers() {
                    for k in 0..h.users() {
                        let row: Vec<&CMat> = (0..h.users()).map(|n| h.h(m, k, n)).collect();
                        out.push(hstack(&row));
                    }
                }
                out
            }
        };
        LinkView { mode, h, composite }
    }

    pub fn channel(&self) -> &ChannelState {
        self.h
    }

    pub fn subcarriers(&self) -> usize {
        self.h.subcarriers()
    }
    pub fn users(&self) -> usize {
        self.h.users()
    }
    pub fn rx(&self) -> usize {
        self.h.rx()
    }

    /// Rows of a precoder block.
    pub fn tx_dim(&self) -> usize {
        shape_for(self.h, self.mode).0
    }

    /// Columns of a precoder block (d or d~).
    pub fn streams(&self) -> usize {
        shape_for(self.h, self.mode).1
    }

    /// Channel carrying stream n to user k on subcarrier m.
    pub fn link(&self, m: usize, k: usize, n: usize) -> &CMat {
        match self.mode {
            Mode::Coordinated => self.h.h(m, k, n),
            Mode::Comp => &self.composite[m * self.h.users() + k],
        }
    }

    pub fn direct(&self, m: usize, k: usize) -> &CMat {
        self.link(m, k, k)
    }
}

/// Reject channels with an all-zero direct link.
pub fn require_feasible_csi(h: &ChannelState) -> Result<()> {
    for m in 0..h.subcarriers() {
        for k in 0..h.users() {
            if fro2(h.h(m, k, k)) <= DIRECT_LINK_THRESHOLD {
                return Err(Error::Infeasible(format!(
                    "direct link of user {} on subcarrier {} is zero",
                    k + 1,
                    m + 1
                )));
            }
        }
    }
    Ok(())
}
