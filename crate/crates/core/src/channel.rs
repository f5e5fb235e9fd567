//! Network topology, path gains and per-slot Rayleigh channel draws.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{PathLossModel, PlacementMode, SystemConfig};
use crate::error::{Error, Result};
use crate::export::fmt_num;
use crate::linalg::{c, CMat};
use crate::rng::{self, SimRng};

const PLACEMENT_ATTEMPTS: usize = 10_000;

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub bs_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub inter_site_distance: f64,
    pub placement: PlacementMode,
    /// Row-major `g[k][n]`: variance of the channel from BS n to user k,
    /// normalized by the receiver noise power.
    gains: Vec<f64>,
}

impl Topology {
    /// A topology with explicit gains and no geometry; handy for synthetic
    /// instances.
    pub fn from_gains(users: usize, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != users * users {
            return Err(Error::Dimension(format!(
                "expected {} gains for K = {users}, got {}",
                users * users,
                gains.len()
            )));
        }
        if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::Domain("path gains must be finite and non-negative".into()));
        }
        Ok(Topology {
            bs_positions: vec![[0.0, 0.0]; users],
            user_positions: vec![[0.0, 0.0]; users],
            inter_site_distance: 0.0,
            placement: PlacementMode::Normal,
            gains,
        })
    }

    pub fn users(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn gain(&self, k: usize, n: usize) -> f64 {
        self.gains[k * self.users() + n]
    }

    pub fn gain_row(&self, k: usize) -> &[f64] {
        let kk = self.users();
        &self.gains[k * kk..(k + 1) * kk]
    }

    /// Write `kind,id,x,y,serving_bs,g_1..g_K`; BS rows leave the user-only
    /// columns empty. Ids are 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let kk = self.users();
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let mut header = vec![
            "kind".to_string(),
            "id".into(),
            "x".into(),
            "y".into(),
            "serving_bs".into(),
        ];
        header.extend((1..=kk).map(|n| format!("g_{n}")));
        w.write_record(&header)?;
        for (i, p) in self.bs_positions.iter().enumerate() {
            let mut row = vec![
                "bs".to_string(),
                (i + 1).to_string(),
                fmt_num(p[0]),
                fmt_num(p[1]),
                String::new(),
            ];
            row.extend(std::iter::repeat_n(String::new(), kk));
            w.write_record(&row)?;
        }
        for (k, p) in self.user_positions.iter().enumerate() {
            let mut row = vec![
                "user".to_string(),
                (k + 1).to_string(),
                fmt_num(p[0]),
                fmt_num(p[1]),
                (k + 1).to_string(),
            ];
            row.extend(self.gain_row(k).iter().map(|&g| fmt_num(g)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear gain `10^(-PL(d)/10)` of the log-distance model.
pub fn path_gain(distance_m: f64, model: &PathLossModel) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {distance_m}")));
    }
    let pl_db = model.intercept_db + 10.0 * model.exponent * (distance_m / model.reference_m).log10();
    Ok(10f64.powf(-pl_db / 10.0))
}

/// Hex-grid cell centres, ring by ring, nearest first.
fn hex_centres(count: usize, isd: f64) -> Vec<Point> {
    const DIRS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
    let to_xy = |q: i64, r: i64| [isd * (q as f64 + r as f64 / 2.0), isd * (r as f64 * 3f64.sqrt() / 2.0)];
    let mut out = vec![[0.0, 0.0]];
    let mut ring = 1i64;
    while out.len() < count {
        // start at the cell `ring` steps along direction 4, then walk the ring
        let (mut q, mut r) = (DIRS[4].0 * ring, DIRS[4].1 * ring);
        for dir in DIRS {
            for _ in 0..ring {
                out.push(to_xy(q, r));
                q += dir.0;
                r += dir.1;
            }
        }
        ring += 1;
    }
    out.truncate(count);
    out
}

fn inside_cell(offset: Point, isd: f64) -> bool {
    let half = isd / 2.0;
    [0.0f64, 60.0, 120.0].iter().all(|deg| {
        let (s, c) = deg.to_radians().sin_cos();
        (offset[0] * c + offset[1] * s).abs() <= half
    })
}

/// Place K BSs on the hex grid and drop one user uniformly in each cell,
/// rejecting positions closer to the serving BS than the placement minimum.
pub fn build_topology(cfg: &SystemConfig, mode: PlacementMode, rng: &mut SimRng) -> Result<Topology> {
    let kk = cfg.users;
    let isd = cfg.inter_site_distance_m;
    let bs_positions = hex_centres(kk, isd);
    let circumradius = isd / 3f64.sqrt();
    let min_d = mode.min_distance_m();
    let mut user_positions = Vec::with_capacity(kk);
    for (k, centre) in bs_positions.iter().enumerate() {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let off = [
                rng.random_range(-circumradius..circumradius),
                rng.random_range(-circumradius..circumradius),
            ];
            if inside_cell(off, isd) && off[0].hypot(off[1]) > min_d {
                placed = Some([centre[0] + off[0], centre[1] + off[1]]);
                break;
            }
        }
        let p = placed.ok_or_else(|| {
            Error::Config(format!(
                "could not place user {} more than {min_d} m from its BS inside a cell with ISD {isd} m",
                k + 1
            ))
        })?;
        user_positions.push(p);
    }
    let noise = cfg.noise_power_w();
    let mut gains = Vec::with_capacity(kk * kk);
    for u in &user_positions {
        for b in &bs_positions {
            gains.push(path_gain(dist(*u, *b), &cfg.path_loss)? / noise);
        }
    }
    Ok(Topology {
        bs_positions,
        user_positions,
        inter_site_distance: isd,
        placement: mode,
        gains,
    })
}

/// Per-slot channel: `H[m][k][n]` is the N_R x N_T matrix from BS n to user k
/// on subcarrier m.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub slot: u64,
    subcarriers: usize,
    users: usize,
    rx: usize,
    tx: usize,
    blocks: Vec<CMat>,
}

impl ChannelState {
    pub fn from_blocks(
        slot: u64,
        subcarriers: usize,
        users: usize,
        rx: usize,
        tx: usize,
        blocks: Vec<CMat>,
    ) -> Result<Self> {
        if blocks.len() != subcarriers * users * users {
            return Err(Error::Dimension(format!(
                "expected {} channel blocks, got {}",
                subcarriers * users * users,
                blocks.len()
            )));
        }
        if let Some(b) = blocks.iter().find(|b| b.shape() != (rx, tx)) {
            return Err(Error::Dimension(format!(
                "channel block is {:?}, expected ({rx}, {tx})",
                b.shape()
            )));
        }
        Ok(ChannelState {
            slot,
            subcarriers,
            users,
            rx,
            tx,
            blocks,
        })
    }

    /// Build from a closure `f(m, k, n)`.
    pub fn from_fn(
        subcarriers: usize,
        users: usize,
        rx: usize,
        tx: usize,
        mut f: impl FnMut(usize, usize, usize) -> CMat,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(subcarriers * users * users);
        for m in 0..subcarriers {
            for k in 0..users {
                for n in 0..users {
                    blocks.push(f(m, k, n));
                }
            }
        }
        Self::from_blocks(0, subcarriers, users, rx, tx, blocks)
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }
    pub fn users(&self) -> usize {
        self.users
    }
    pub fn rx(&self) -> usize {
        self.rx
    }
    pub fn tx(&self) -> usize {
        self.tx
    }

    pub fn h(&self, m: usize, k: usize, n: usize) -> &CMat {
        &self.blocks[(m * self.users + k) * self.users + n]
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    /// Membership in the feasible-CSI set: every direct link carries energy.
    pub fn is_feasible_csi(&self) -> bool {
        (0..self.subcarriers).all(|m| {
            (0..self.users).all(|k| crate::linalg::fro2(self.h(m, k, k)) > crate::precoder::DIRECT_LINK_THRESHOLD)
        })
    }
}

/// How entries are related across subcarriers within one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SubcarrierModel {
    /// Each (slot, subcarrier, link) has its own stream.
    #[default]
    Independent,
    /// First-order autoregression across subcarriers with the given
    /// coefficient; each (slot, link) has its own stream.
    Ar1(f64),
}

impl SubcarrierModel {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        if cfg.subcarrier_correlation == 0.0 {
            SubcarrierModel::Independent
        } else {
            SubcarrierModel::Ar1(cfg.subcarrier_correlation)
        }
    }
}

fn cn_matrix(rng: &mut SimRng, rows: usize, cols: usize, variance: f64) -> CMat {
    let s = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(s * re, s * im)
    })
}

/// Draw `H(t)` with i.i.d. CN(0, g[k][n]) entries.
pub fn draw_channel(topo: &Topology, cfg: &SystemConfig, master_seed: u64, slot: u64) -> Result<ChannelState> {
    draw_channel_with(topo, cfg, master_seed, slot, SubcarrierModel::from_config(cfg))
}

pub fn draw_channel_with(
    topo: &Topology,
    cfg: &SystemConfig,
    master_seed: u64,
    slot: u64,
    model: SubcarrierModel,
) -> Result<ChannelState> {
    let (mm, kk, rx, tx) = (cfg.subcarriers, cfg.users, cfg.rx_antennas, cfg.tx_antennas);
    if topo.users() != kk {
        return Err(Error::Dimension(format!(
            "topology has {} users, config K = {kk}",
            topo.users()
        )));
    }
    let mut blocks = vec![CMat::zeros(rx, tx); mm * kk * kk];
    let idx = |m: usize, k: usize, n: usize| (m * kk + k) * kk + n;
    match model {
        SubcarrierModel::Independent => {
            for m in 0..mm {
                for k in 0..kk {
                    for n in 0..kk {
                        let mut r = rng::stream(master_seed, rng::tag::CHANNEL, &[slot, m as u64, k as u64, n as u64]);
                        blocks[idx(m, k, n)] = cn_matrix(&mut r, rx, tx, topo.gain(k, n));
                    }
                }
            }
        }
        SubcarrierModel::Ar1(a) => {
            let innov = (1.0 - a * a).sqrt();
            for k in 0..kk {
                for n in 0..kk {
                    let mut r = rng::stream(master_seed, rng::tag::CHANNEL, &[slot, u64::MAX, k as u64, n as u64]);
                    let g = topo.gain(k, n);
                    let mut prev = cn_matrix(&mut r, rx, tx, g);
                    blocks[idx(0, k, n)] = prev.clone();
                    for m in 1..mm {
                        prev = prev * c(a, 0.0) + cn_matrix(&mut r, rx, tx, g) * c(innov, 0.0);
                        blocks[idx(m, k, n)] = prev.clone();
                    }
                }
            }
        }
    }
    ChannelState::from_blocks(slot, mm, kk, rx, tx, blocks)
}
