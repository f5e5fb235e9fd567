//! Playback buffers at the users and backhaul accounting at the network.

use crate::cache::{q_min_of, used_bits, CacheControlVector};
use crate::error::{Error, Result};
use crate::sim::SlotMetrics;

/// Relative slack when checking whether a buffer holds a full slot's worth of
/// bits; absorbs rounding in rates that meet their targets.
const BUFFER_SLACK: f64 = 1e-9;

/// Playback of one user's current file.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPlayback {
    /// Playback rate μ_l in bit/s.
    pub rate_bps: f64,
    /// Segment size `T_S μ_l τ`.
    pub segment_bits: f64,
    /// Parity bits received but not yet read by the decoder.
    pub buffer_bits: f64,
    /// Bits of the current segment in the reassembling buffer.
    pub segment_progress_bits: f64,
    pub segments_decoded: u64,
    pub interruptions: u64,
}

impl UserPlayback {
    /// Start a file with `prebuffer_segments` segments already buffered.
    pub fn start(rate_bps: f64, frame_slots: usize, slot_s: f64, prebuffer_segments: f64) -> Self {
        let segment_bits = frame_slots as f64 * rate_bps * slot_s;
        UserPlayback {
            rate_bps,
            segment_bits,
            buffer_bits: prebuffer_segments * segment_bits,
            segment_progress_bits: 0.0,
            segments_decoded: 0,
            interruptions: 0,
        }
    }

    /// One slot: receive `delivered_bits`, then the decoder reads `μ τ` bits
    /// or, if the buffer runs dry, stalls and counts an interruption.
    pub fn step(&mut self, delivered_bits: f64, slot_s: f64) -> Result<()> {
        if !(delivered_bits >= 0.0) || !delivered_bits.is_finite() {
            return Err(Error::Domain("delivered bits must be finite and non-negative".into()));
        }
        self.buffer_bits += delivered_bits;
        let demand = self.rate_bps * slot_s;
        if demand == 0.0 {
            return Ok(());
        }
        if self.buffer_bits < demand * (1.0 - BUFFER_SLACK) {
            self.interruptions += 1;
            return Ok(());
        }
        let take = demand.min(self.buffer_bits);
        self.buffer_bits -= take;
        self.segment_progress_bits += take;
        if self.segment_progress_bits >= self.segment_bits * (1.0 - BUFFER_SLACK) {
            self.segments_decoded += 1;
            self.segment_progress_bits = (self.segment_progress_bits - self.segment_bits).max(0.0);
        }
        Ok(())
    }

    /// Bits handed to the media decoder so far.
    pub fn decoded_bits(&self) -> f64 {
        self.segments_decoded as f64 * self.segment_bits
    }
}

/// Playback state of every user.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaybackState {
    pub users: Vec<UserPlayback>,
    pub frame_slots: usize,
    pub slot_s: f64,
    pub prebuffer_segments: f64,
}

impl PlaybackState {
    pub fn new(rates_bps: &[f64], frame_slots: usize, slot_s: f64, prebuffer_segments: f64) -> Self {
        PlaybackState {
            users: rates_bps
                .iter()
                .map(|&r| UserPlayback::start(r, frame_slots, slot_s, prebuffer_segments))
                .collect(),
            frame_slots,
            slot_s,
            prebuffer_segments,
        }
    }

    /// User `k` switches to a new file streamed at `rate_bps`; its buffers
    /// restart with the pre-buffer but its interruption count is kept.
    pub fn restart(&mut self, k: usize, rate_bps: f64) {
        let kept = self.users[k].interruptions;
        self.users[k] = UserPlayback::start(rate_bps, self.frame_slots, self.slot_s, self.prebuffer_segments);
        self.users[k].interruptions = kept;
    }

    pub fn interruptions(&self) -> u64 {
        self.users.iter().map(|u| u.interruptions).sum()
    }
}

/// Advance every user by one slot.
pub fn step_playback(state: &mut PlaybackState, delivered_bits: &[f64]) -> Result<()> {
    if delivered_bits.len() != state.users.len() {
        return Err(Error::Dimension(format!(
            "{} deliveries for {} users",
            delivered_bits.len(),
            state.users.len()
        )));
    }
    let slot_s = state.slot_s;
    for (u, &d) in state.users.iter_mut().zip(delivered_bits) {
        u.step(d, slot_s)?;
    }
    Ok(())
}

/// Bits a user receives in a slot: the stream is source-limited to μ, so a
/// faster link does not deliver more than `μ τ`.
pub fn delivered_bits(rate_bps: f64, stream_rate_bps: f64, slot_s: f64) -> f64 {
    rate_bps.max(0.0).min(stream_rate_bps) * slot_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackhaulScheme {
    /// Cached slots fetch nothing; uncached slots fetch each user's stream
    /// once, and cache contents are refreshed every `T_C`.
    Proposed,
    /// Every slot fetches each user's stream once, for its serving BS.
    Coordinated,
    /// Every slot ships every user's stream to all K BSs.
    ConventionalComp,
}

impl BackhaulScheme {
    pub fn name(self) -> &'static str {
        match self {
            BackhaulScheme::Proposed => "proposed",
            BackhaulScheme::Coordinated => "coordinated",
            BackhaulScheme::ConventionalComp => "conventional_comp",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackhaulMeter {
    pub online_bits: f64,
    pub cache_update_bits: f64,
    pub elapsed_s: f64,
}

impl BackhaulMeter {
    pub fn total_bits(&self) -> f64 {
        self.online_bits + self.cache_update_bits
    }

    /// Average consumption in bit/s (0 before any slot).
    pub fn average_bps(&self) -> f64 {
        if self.elapsed_s > 0.0 {
            self.total_bits() / self.elapsed_s
        } else {
            0.0
        }
    }

    pub fn merge(&mut self, other: &BackhaulMeter) {
        self.online_bits += other.online_bits;
        self.cache_update_bits += other.cache_update_bits;
        self.elapsed_s += other.elapsed_s;
    }
}

/// Online bits one slot consumes under `scheme`.
pub fn online_bits(slot: &SlotMetrics, scheme: BackhaulScheme, slot_s: f64) -> f64 {
    let per_user: f64 = slot.stream_rate_bps.iter().sum::<f64>() * slot_s;
    match scheme {
        BackhaulScheme::Proposed if slot.cache_state => 0.0,
        BackhaulScheme::Proposed | BackhaulScheme::Coordinated => per_user,
        BackhaulScheme::ConventionalComp => slot.stream_rate_bps.len() as f64 * per_user,
    }
}

/// Add one slot to the meter. Cache refreshes (`K Σ q_l F_l` bits every
/// `T_C` seconds) are spread evenly over the slots of the proposed scheme.
pub fn account_backhaul(
    meter: &mut BackhaulMeter,
    slot: &SlotMetrics,
    scheme: BackhaulScheme,
    slot_s: f64,
    cache_update_interval_s: f64,
) -> Result<()> {
    if !(slot_s > 0.0) || !(cache_update_interval_s > 0.0) {
        return Err(Error::Domain(
            "slot length and cache update interval must be positive".into(),
        ));
    }
    meter.online_bits += online_bits(slot, scheme, slot_s);
    if scheme == BackhaulScheme::Proposed {
        let k = slot.stream_rate_bps.len() as f64;
        meter.cache_update_bits += k * slot.cache_fill_bits * slot_s / cache_update_interval_s;
    }
    meter.elapsed_s += slot_s;
    Ok(())
}

/// Average backhaul rate
/// `E[(1 - q_min) Σ_k μ_{π_k}] + K Σ_l q_l F_l / T_C` over sampled profiles;
/// with equal stream rates μ0 the first term is `E[K (1 - q_min) μ0]`.
pub fn backhaul_rate_formula(
    q: &CacheControlVector,
    profiles: &[Vec<usize>],
    stream_rate_bps: &[f64],
    file_bits: &[f64],
    cache_update_interval_s: f64,
    users: usize,
) -> Result<f64> {
    if !(cache_update_interval_s > 0.0) {
        return Err(Error::Domain("cache update interval must be positive".into()));
    }
    if profiles.is_empty() {
        return Err(Error::Contract("no request profiles to average over".into()));
    }
    let mut online = 0.0;
    for pi in profiles {
        if pi.len() != users {
            return Err(Error::Dimension(format!(
                "profile of {} users, expected {users}",
                pi.len()
            )));
        }
        let (qm, _) = q_min_of(q, pi)?;
        let demand: f64 = pi.iter().map(|&l| stream_rate_bps[l]).sum();
        online += (1.0 - qm) * demand;
    }
    online /= profiles.len() as f64;
    Ok(online + users as f64 * used_bits(&q.q, file_bits) / cache_update_interval_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(cache_state: bool, rates: Vec<f64>, fill: f64) -> SlotMetrics {
        SlotMetrics {
            cache_state,
            stream_rate_bps: rates,
            cache_fill_bits: fill,
            ..SlotMetrics::default()
        }
    }

    #[test]
    fn balanced_arrivals_never_stall() {
        let mut st = PlaybackState::new(&[2e6, 1e6], 10, 5e-3, 1.0);
        for _ in 0..10_000 {
            step_playback(&mut st, &[2e6 * 5e-3, 1e6 * 5e-3]).unwrap();
        }
        assert_eq!(st.interruptions(), 0);
        assert_eq!(st.users[0].segments_decoded, 1000);
    }

    #[test]
    fn starved_user_stalls_every_slot() {
        let mut st = PlaybackState::new(&[2e6], 10, 5e-3, 0.0);
        for _ in 0..50 {
            step_playback(&mut st, &[0.0]).unwrap();
        }
        assert_eq!(st.interruptions(), 50);
        assert_eq!(st.users[0].buffer_bits, 0.0);
    }

    #[test]
    fn decoded_bits_are_whole_segments() {
        let mut st = PlaybackState::new(&[1e6], 8, 5e-3, 1.0);
        let mut fed = 0.0;
        for t in 0..777 {
            let d = if t % 3 == 0 { 2e4 } else { 0.0 };
            fed += d;
            step_playback(&mut st, &[d]).unwrap();
        }
        let u = &st.users[0];
        let consumed = u.decoded_bits() + u.segment_progress_bits;
        assert!((consumed + u.buffer_bits - fed - u.segment_bits).abs() < 1e-6);
        assert_eq!(u.decoded_bits(), u.segments_decoded as f64 * 8.0 * 1e6 * 5e-3);
    }

    #[test]
    fn restart_keeps_the_count() {
        let mut st = PlaybackState::new(&[1e6], 8, 5e-3, 0.0);
        step_playback(&mut st, &[0.0]).unwrap();
        st.restart(0, 3e6);
        assert_eq!(st.users[0].interruptions, 1);
        assert_eq!(st.users[0].segment_bits, 8.0 * 3e6 * 5e-3);
    }

    #[test]
    fn table_three_accounting() {
        let tau = 5e-3;
        let rates = vec![2e6; 7];
        let mut coord = BackhaulMeter::default();
        let mut conv = BackhaulMeter::default();
        for t in 0..1000 {
            let s = slot(t % 2 == 0, rates.clone(), 0.0);
            account_backhaul(&mut coord, &s, BackhaulScheme::Coordinated, tau, 1.0).unwrap();
            account_backhaul(&mut conv, &s, BackhaulScheme::ConventionalComp, tau, 1.0).unwrap();
        }
        assert!((coord.average_bps() / 14e6 - 1.0).abs() < 1e-12);
        assert!((conv.average_bps() / 98e6 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fully_cached_streams_need_no_online_backhaul() {
        let mut m = BackhaulMeter::default();
        for _ in 0..100 {
            account_backhaul(
                &mut m,
                &slot(true, vec![2e6; 3], 0.0),
                BackhaulScheme::Proposed,
                5e-3,
                f64::MAX,
            )
            .unwrap();
        }
        assert_eq!(m.online_bits, 0.0);
        assert!(m.cache_update_bits < 1e-250);
    }

    #[test]
    fn formula_limits() {
        let f = vec![4.0e9; 3];
        let mu = vec![2e6; 3];
        let zero = CacheControlVector::zeros(3);
        let r = backhaul_rate_formula(&zero, &[vec![0, 1]], &mu, &f, 604_800.0, 2).unwrap();
        assert!((r - 4e6).abs() < 1e-6);
        let full = CacheControlVector { q: vec![1.0; 3] };
        let r = backhaul_rate_formula(&full, &[vec![2, 1]], &mu, &f, 604_800.0, 2).unwrap();
        assert!((r - 2.0 * 12.0e9 / 604_800.0).abs() < 1e-6);
    }

    #[test]
    fn delivery_is_source_limited() {
        assert_eq!(delivered_bits(5e6, 2e6, 1e-3), 2e3);
        assert_eq!(delivered_bits(1e6, 2e6, 1e-3), 1e3);
    }
}
