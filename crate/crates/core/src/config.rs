//! System configuration and its flat `key = value` text format.
//!
//! Keys mirror the system symbols (`K`, `L`, `M`, `N_T`, `N_R`, `B_W`, `tau`,
//! `T_S`, `T_C`, `B_C`, `F`, `mu`, `rho`, `urp_hold`, `rng_seed`) plus a few
//! simulator knobs. Per-file lists are comma separated; `F0` and `mu0` set
//! every file to the same value. Later assignments win, which is how command
//! line overrides are layered on top of a file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlacementMode {
    /// Users at least 80 m from their serving BS.
    #[default]
    Normal,
    /// Users at least 180 m from their serving BS.
    Edge,
}

impl PlacementMode {
    pub fn min_distance_m(self) -> f64 {
        match self {
            PlacementMode::Normal => 80.0,
            PlacementMode::Edge => 180.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlacementMode::Normal => "normal",
            PlacementMode::Edge => "edge",
        }
    }
}

/// Log-distance path loss `PL(d) = A + 10 gamma log10(d / d0)` in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub exponent: f64,
    pub reference_m: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            intercept_db: 128.1,
            exponent: 3.76,
            reference_m: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// K: BS-user pairs.
    pub users: usize,
    /// L: media files.
    pub files: usize,
    /// M: OFDM subcarriers.
    pub subcarriers: usize,
    /// N_T: antennas per BS.
    pub tx_antennas: usize,
    /// N_R: antennas per user.
    pub rx_antennas: usize,
    /// B_W in Hz.
    pub bandwidth_hz: f64,
    /// tau: slot duration in seconds.
    pub slot_s: f64,
    /// T_S: slots per frame (and per media segment).
    pub frame_slots: usize,
    /// T_C: cache update interval in seconds.
    pub cache_update_interval_s: f64,
    /// B_C: BS cache size in bits.
    pub cache_bits: f64,
    /// F_l: file sizes in bits.
    pub file_bits: Vec<f64>,
    /// mu_l: streaming rates in bits/s.
    pub stream_rate_bps: Vec<f64>,
    /// rho_l: request probabilities. Only the URP generator reads these.
    pub popularity: Vec<f64>,
    /// Slots per URP interval.
    pub urp_hold: usize,
    pub rng_seed: u64,

    pub placement: PlacementMode,
    pub inter_site_distance_m: f64,
    pub path_loss: PathLossModel,
    /// Receiver noise PSD; the channel variances are path gains divided by
    /// the noise power over `B_W`.
    pub noise_psd_dbm_hz: f64,
    /// AR(1) coefficient across subcarriers; 0 draws subcarriers independently.
    pub subcarrier_correlation: f64,
    /// Base cache-control step; the effective sigma_0 divides this by the
    /// largest entry of the first nonzero subgradient, so the first move
    /// shifts q by about this much.
    pub lc_step: f64,
    pub sp_tolerance: f64,
    pub sp_max_iter: usize,
    pub horizon_slots: usize,
}

pub const F0_DEFAULT_BITS: f64 = 600.0 * 8.0e6;

impl Default for SystemConfig {
    fn default() -> Self {
        let files = 6;
        SystemConfig {
            users: 3,
            files,
            subcarriers: 3,
            tx_antennas: 2,
            rx_antennas: 2,
            bandwidth_hz: 1.0e6,
            slot_s: 5.0e-3,
            frame_slots: 10,
            cache_update_interval_s: 7.0 * 24.0 * 3600.0,
            cache_bits: 2.0 * F0_DEFAULT_BITS,
            file_bits: vec![F0_DEFAULT_BITS; files],
            stream_rate_bps: vec![2.0e6; files],
            popularity: vec![0.6, 0.3, 0.08, 0.01, 0.005, 0.005],
            urp_hold: 200,
            rng_seed: 1,
            placement: PlacementMode::Normal,
            inter_site_distance_m: 500.0,
            path_loss: PathLossModel::default(),
            noise_psd_dbm_hz: -174.0,
            subcarrier_correlation: 0.0,
            lc_step: 1.0,
            sp_tolerance: 1e-6,
            sp_max_iter: 1000,
            horizon_slots: 2000,
        }
    }
}

#[derive(Debug, Clone)]
enum PerFile {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerFile {
    fn resolve(&self, key: &str, files: usize) -> Result<Vec<f64>> {
        match self {
            PerFile::Uniform(x) => Ok(vec![*x; files]),
            PerFile::List(v) if v.len() == files => Ok(v.clone()),
            PerFile::List(v) => Err(Error::Config(format!(
                "`{key}` has {} entries but L = {files}",
                v.len()
            ))),
        }
    }
}

/// Every key the parser accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "K",
    "L",
    "M",
    "N_T",
    "N_R",
    "B_W",
    "tau",
    "T_S",
    "T_C",
    "B_C",
    "F",
    "F0",
    "mu",
    "mu0",
    "rho",
    "urp_hold",
    "rng_seed",
    "placement",
    "isd",
    "pl_intercept_db",
    "pl_exponent",
    "pl_reference_m",
    "noise_psd_dbm_hz",
    "subcarrier_corr",
    "lc_step",
    "sp_tol",
    "sp_max_iter",
    "horizon",
];

/// Accumulates assignments in order, then resolves them into a validated
/// [`SystemConfig`].
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    assignments: Vec<(String, String, usize)>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse `key = value` lines. `#` starts a comment.
    pub fn parse_str(mut self, text: &str) -> Result<Self> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self = self.set_at(k.trim(), v.trim(), idx + 1)?;
        }
        Ok(self)
    }

    pub fn parse_file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.parse_str(&text)
    }

    pub fn set(self, key: &str, value: &str) -> Result<Self> {
        self.set_at(key, value, 0)
    }

    fn set_at(mut self, key: &str, value: &str, line: usize) -> Result<Self> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Parse {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line,
                message: format!("empty value for `{key}`"),
            });
        }
        self.assignments.push((key.to_string(), value.to_string(), line));
        Ok(self)
    }

    pub fn build(&self) -> Result<SystemConfig> {
        let mut cfg = SystemConfig::default();
        // The defaults are uniform, so they follow L when only L is set.
        let mut file_bits = PerFile::Uniform(cfg.file_bits[0]);
        let mut rates = PerFile::Uniform(cfg.stream_rate_bps[0]);
        let mut popularity: Option<Vec<f64>> = None;
        for (key, value, line) in &self.assignments {
            let line = *line;
            let bad = |what: &str| Error::Parse {
                line,
                message: format!("`{key}`: cannot parse `{value}` as {what}"),
            };
            let int = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
            let real = || value.parse::<f64>().map_err(|_| bad("a number"));
            let list = || -> Result<Vec<f64>> {
                value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| bad("a comma-separated list")))
                    .collect()
            };
            match key.as_str() {
                "K" => cfg.users = int()?,
                "L" => cfg.files = int()?,
                "M" => cfg.subcarriers = int()?,
                "N_T" => cfg.tx_antennas = int()?,
                "N_R" => cfg.rx_antennas = int()?,
                "B_W" => cfg.bandwidth_hz = real()?,
                "tau" => cfg.slot_s = real()?,
                "T_S" => cfg.frame_slots = int()?,
                "T_C" => cfg.cache_update_interval_s = real()?,
                "B_C" => cfg.cache_bits = real()?,
                "F" => file_bits = PerFile::List(list()?),
                "F0" => file_bits = PerFile::Uniform(real()?),
                "mu" => rates = PerFile::List(list()?),
                "mu0" => rates = PerFile::Uniform(real()?),
                "rho" => popularity = Some(list()?),
                "urp_hold" => cfg.urp_hold = int()?,
                "rng_seed" => cfg.rng_seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
                "placement" => {
                    cfg.placement = match value.as_str() {
                        "normal" => PlacementMode::Normal,
                        "edge" => PlacementMode::Edge,
                        _ => return Err(bad("`normal` or `edge`")),
                    }
                }
                "isd" => cfg.inter_site_distance_m = real()?,
                "pl_intercept_db" => cfg.path_loss.intercept_db = real()?,
                "pl_exponent" => cfg.path_loss.exponent = real()?,
                "pl_reference_m" => cfg.path_loss.reference_m = real()?,
                "noise_psd_dbm_hz" => cfg.noise_psd_dbm_hz = real()?,
                "subcarrier_corr" => cfg.subcarrier_correlation = real()?,
                "lc_step" => cfg.lc_step = real()?,
                "sp_tol" => cfg.sp_tolerance = real()?,
                "sp_max_iter" => cfg.sp_max_iter = int()?,
                "horizon" => cfg.horizon_slots = int()?,
                _ => unreachable!("key checked on insertion"),
            }
        }
        cfg.file_bits = file_bits.resolve("F", cfg.files)?;
        cfg.stream_rate_bps = rates.resolve("mu", cfg.files)?;
        match popularity {
            Some(p) => cfg.popularity = p,
            None if cfg.popularity.len() != cfg.files => cfg.popularity = vec![1.0 / cfg.files as f64; cfg.files],
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SystemConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        ConfigBuilder::new().parse_file(path)?.build()
    }

    pub fn from_str_kv(text: &str) -> Result<Self> {
        ConfigBuilder::new().parse_str(text)?.build()
    }

    /// d = min(N_T, N_R).
    pub fn coordinated_streams(&self) -> usize {
        self.tx_antennas.min(self.rx_antennas)
    }

    /// d~ = min(K N_T, N_R).
    pub fn comp_streams(&self) -> usize {
        (self.users * self.tx_antennas).min(self.rx_antennas)
    }

    /// Receiver noise power over the full band, in watts.
    pub fn noise_power_w(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10() - 30.0) / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.users == 0 || self.files == 0 || self.subcarriers == 0 || self.rx_antennas == 0 {
            return fail("K, L, M and N_R must be positive".into());
        }
        if self.tx_antennas < 2 {
            return fail(format!("N_T must be at least 2, got {}", self.tx_antennas));
        }
        if self.subcarriers < self.users {
            return fail(format!("M = {} must be at least K = {}", self.subcarriers, self.users));
        }
        if self.frame_slots == 0 {
            return fail("T_S must be positive".into());
        }
        if self.urp_hold == 0 || !self.urp_hold.is_multiple_of(self.frame_slots) {
            return fail(format!(
                "urp_hold = {} must be a positive multiple of T_S = {}",
                self.urp_hold, self.frame_slots
            ));
        }
        for (name, v) in [
            ("B_W", self.bandwidth_hz),
            ("tau", self.slot_s),
            ("T_C", self.cache_update_interval_s),
            ("isd", self.inter_site_distance_m),
            ("pl_reference_m", self.path_loss.reference_m),
            ("sp_tol", self.sp_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.cache_bits >= 0.0) {
            return fail(format!("B_C must be non-negative, got {}", self.cache_bits));
        }
        if !(0.0..1.0).contains(&self.subcarrier_correlation.abs()) {
            return fail("subcarrier_corr must lie in (-1, 1)".into());
        }
        for (l, (&f, &mu)) in self.file_bits.iter().zip(&self.stream_rate_bps).enumerate() {
            if !(f > 0.0) {
                return fail(format!("F[{}] must be positive", l + 1));
            }
            if !(mu > 0.0) {
                return fail(format!("mu[{}] must be positive", l + 1));
            }
        }
        if self.popularity.len() != self.files {
            return fail(format!(
                "`rho` has {} entries but L = {}",
                self.popularity.len(),
                self.files
            ));
        }
        if self.popularity.iter().any(|&p| !(p >= 0.0)) {
            return fail("rho entries must be non-negative".into());
        }
        let total: f64 = self.popularity.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return fail(format!("rho must sum to 1, sums to {total}"));
        }
        if self.sp_max_iter == 0 {
            return fail("sp_max_iter must be positive".into());
        }
        Ok(())
    }

    /// Serialize back to the key-value format. Floats use Rust's shortest
    /// round-trip representation, so parsing the output reproduces `self`.
    pub fn to_kv(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("K", self.users.to_string());
        put("L", self.files.to_string());
        put("M", self.subcarriers.to_string());
        put("N_T", self.tx_antennas.to_string());
        put("N_R", self.rx_antennas.to_string());
        put("B_W", format!("{:?}", self.bandwidth_hz));
        put("tau", format!("{:?}", self.slot_s));
        put("T_S", self.frame_slots.to_string());
        put("T_C", format!("{:?}", self.cache_update_interval_s));
        put("B_C", format!("{:?}", self.cache_bits));
        put("F", list(&self.file_bits));
        put("mu", list(&self.stream_rate_bps));
        put("rho", list(&self.popularity));
        put("urp_hold", self.urp_hold.to_string());
        put("rng_seed", self.rng_seed.to_string());
        put("placement", self.placement.name().to_string());
        put("isd", format!("{:?}", self.inter_site_distance_m));
        put("pl_intercept_db", format!("{:?}", self.path_loss.intercept_db));
        put("pl_exponent", format!("{:?}", self.path_loss.exponent));
        put("pl_reference_m", format!("{:?}", self.path_loss.reference_m));
        put("noise_psd_dbm_hz", format!("{:?}", self.noise_psd_dbm_hz));
        put("subcarrier_corr", format!("{:?}", self.subcarrier_correlation));
        put("lc_step", format!("{:?}", self.lc_step));
        put("sp_tol", format!("{:?}", self.sp_tolerance));
        put("sp_max_iter", self.sp_max_iter.to_string());
        put("horizon", self.horizon_slots.to_string());
        s
    }
}
