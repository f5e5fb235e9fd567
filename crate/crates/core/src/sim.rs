//! Mixed-timescale orchestration: request profiles, cache states, per-slot
//! precoding in the selected mode, interval-boundary cache control, and the
//! three baselines.
//!
//! Every scheme run from the same configuration sees the same topology,
//! channel draws, request profiles and schedule permutations, so results are
//! paired across schemes.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use crate::cache::{
    generate_cache_schedule, noisy_subgradient, project_cache, used_bits, CacheControlVector, CacheSchedule, LcState,
    LcTraceRow, StepRule,
};
use crate::channel::{build_topology, draw_channel, Topology};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::precoder::{algorithm_sp, comp_initial_point, Mode, RateConstraint, SpOptions};
use crate::rng::{self, tag};
use crate::streaming::{account_backhaul, delivered_bits, step_playback, BackhaulMeter, BackhaulScheme, PlaybackState};

/// Request profile of one URP interval `[interval_start, interval_end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestProfile {
    /// 0-based file index requested by each user.
    pub files: Vec<usize>,
    pub interval_start: u64,
    pub interval_end: u64,
}

/// K independent categorical draws from the popularity vector.
pub fn draw_urp<R: Rng>(popularity: &[f64], users: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(popularity).map_err(|e| Error::Domain(format!("popularity vector: {e}")))?;
    Ok((0..users).map(|_| dist.sample(rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Adaptive cache control, CoMP on cached slots.
    Proposed,
    /// No caching, coordinated MIMO every slot.
    Coordinated,
    /// CoMP every slot with all payload over the backhaul.
    ConventionalComp,
    /// Fixed equal cache fraction for every file, CoMP on cached slots.
    UniformCaching,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Proposed,
        Scheme::Coordinated,
        Scheme::ConventionalComp,
        Scheme::UniformCaching,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Coordinated => "coordinated",
            Scheme::ConventionalComp => "conventional_comp",
            Scheme::UniformCaching => "uniform_caching",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }

    fn backhaul(self) -> BackhaulScheme {
        match self {
            Scheme::Proposed | Scheme::UniformCaching => BackhaulScheme::Proposed,
            Scheme::Coordinated => BackhaulScheme::Coordinated,
            Scheme::ConventionalComp => BackhaulScheme::ConventionalComp,
        }
    }
}

/// Everything recorded for one slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotMetrics {
    pub slot: u64,
    /// S(t): true when the slot uses CoMP.
    pub cache_state: bool,
    /// Transmit power of the mode actually used.
    pub sum_power: f64,
    /// Coordinated-mode power P of this slot.
    pub coordinated_power: f64,
    /// CoMP power P~ when a CoMP solve ran.
    pub comp_power: Option<f64>,
    /// Achieved rates (bit/s) of the mode actually used.
    pub rates: Vec<f64>,
    /// Stream rate μ_{π_k} of each user's request.
    pub stream_rate_bps: Vec<f64>,
    /// Playback buffers after the slot.
    pub buffer_bits: Vec<f64>,
    /// Backhaul bits consumed (online plus amortized cache refresh).
    pub backhaul_bits: f64,
    /// `Σ_l q_l F_l` held at each BS during the slot.
    pub cache_fill_bits: f64,
    /// Precoder iterations, summed over the solves of this slot.
    pub sp_iterations: usize,
    pub sp_converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpStats {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub non_converged: usize,
}

impl SpStats {
    pub fn mean_iterations(&self) -> f64 {
        if self.solves == 0 {
            0.0
        } else {
            self.total_iterations as f64 / self.solves as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scheme: Scheme,
    pub config: SystemConfig,
    pub seed: u64,
    pub slots: Vec<SlotMetrics>,
    pub lc_trace: Vec<LcTraceRow>,
    pub profiles: Vec<RequestProfile>,
    pub avg_power: f64,
    pub avg_power_db: f64,
    pub backhaul: BackhaulMeter,
    pub avg_backhaul_bps: f64,
    pub interruptions: u64,
    pub sp_stats: SpStats,
    /// Cache control in force at the end of the run.
    pub final_q: Vec<f64>,
}

/// Knobs that are not part of the system configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub sp: SpOptions,
    /// Segments buffered before playback starts.
    pub prebuffer_segments: f64,
    /// Solve slots of an interval in parallel.
    pub parallel: bool,
    /// Keep per-slot metrics (otherwise only aggregates).
    pub keep_slots: bool,
}

impl SimOptions {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        SimOptions {
            sp: SpOptions {
                tol: cfg.sp_tolerance,
                max_iter: cfg.sp_max_iter,
                ..SpOptions::default()
            },
            prebuffer_segments: 1.0,
            parallel: true,
            keep_slots: true,
        }
    }
}

/// Per-slot solver output, before playback and backhaul bookkeeping.
struct SlotSolve {
    coordinated_power: f64,
    coordinated_rates: Vec<f64>,
    comp: Option<(f64, Vec<f64>)>,
    iterations: usize,
    solves: usize,
    max_iterations: usize,
    non_converged: usize,
}

fn solve_slot(
    topo: &Topology,
    cfg: &SystemConfig,
    seed: u64,
    t: u64,
    rc: &RateConstraint,
    with_comp: bool,
    opts: &SpOptions,
) -> Result<SlotSolve> {
    let h = draw_channel(topo, cfg, seed, t)?;
    let coord = algorithm_sp(&h, rc, Mode::Coordinated, None, opts)?;
    let mut out = SlotSolve {
        coordinated_power: coord.power(),
        coordinated_rates: coord.rates.clone(),
        comp: None,
        iterations: coord.iteration,
        solves: 1,
        max_iterations: coord.iteration,
        non_converged: usize::from(!coord.converged),
    };
    if with_comp {
        let start = comp_initial_point(&coord.v, &h)?;
        let comp = algorithm_sp(&h, rc, Mode::Comp, Some(&start), opts)?;
        out.iterations += comp.iteration;
        out.solves += 1;
        out.max_iterations = out.max_iterations.max(comp.iteration);
        out.non_converged += usize::from(!comp.converged);
        out.comp = Some((comp.power(), comp.rates));
    }
    Ok(out)
}

/// Fixed cache control of the uniform-caching baseline: the same fraction of
/// every file, as large as the cache allows.
pub fn uniform_cache(cfg: &SystemConfig) -> CacheControlVector {
    let total: f64 = cfg.file_bits.iter().sum();
    CacheControlVector {
        q: vec![(cfg.cache_bits / total).min(1.0); cfg.files],
    }
}

/// Run the proposed scheme.
pub fn run_mixed_timescale(cfg: &SystemConfig, horizon_slots: usize) -> Result<ExperimentResult> {
    run_scheme(cfg, Scheme::Proposed, horizon_slots, &SimOptions::from_config(cfg))
}

/// Run one of the baselines.
pub fn run_baseline(cfg: &SystemConfig, baseline: Scheme, horizon_slots: usize) -> Result<ExperimentResult> {
    if baseline == Scheme::Proposed {
        return Err(Error::Contract("the proposed scheme is not a baseline".into()));
    }
    run_scheme(cfg, baseline, horizon_slots, &SimOptions::from_config(cfg))
}

/// Simulate `horizon_slots` slots of `scheme`.
pub fn run_scheme(
    cfg: &SystemConfig,
    scheme: Scheme,
    horizon_slots: usize,
    opts: &SimOptions,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let seed = cfg.rng_seed;
    let kk = cfg.users;
    let topo = build_topology(cfg, cfg.placement, &mut rng::stream(seed, tag::TOPOLOGY, &[]))?;

    let mut lc = LcState::new(
        cfg.file_bits.clone(),
        cfg.cache_bits,
        StepRule::Harmonic { sigma0: 0.0 },
    )?;
    let mut step_scaled = false;
    let fixed_q = match scheme {
        Scheme::Proposed => None,
        Scheme::Coordinated => Some(CacheControlVector::zeros(cfg.files)),
        Scheme::ConventionalComp => Some(CacheControlVector {
            q: vec![1.0; cfg.files],
        }),
        Scheme::UniformCaching => Some(project_cache(&uniform_cache(cfg).q, &cfg.file_bits, cfg.cache_bits)?),
    };

    let mut slots = Vec::new();
    let mut profiles = Vec::new();
    let mut lc_trace = Vec::new();
    let mut meter = BackhaulMeter::default();
    let mut stats = SpStats::default();
    let mut power_sum = 0.0;
    let mut playback: Option<PlaybackState> = None;
    let mut prev_files: Vec<usize> = Vec::new();
    let mut last_coordinated = 0.0;

    let hold = cfg.urp_hold as u64;
    let horizon = horizon_slots as u64;
    let mut interval = 0u64;
    while interval * hold < horizon {
        let start = interval * hold;
        let end = (start + hold).min(horizon);
        let files = draw_urp(&cfg.popularity, kk, &mut rng::stream(seed, tag::URP, &[interval]))?;
        let rc = RateConstraint::for_request(&cfg.stream_rate_bps, &files, cfg.bandwidth_hz)?;
        let stream_rates = rc.rate_bps.clone();

        // cache control in force for this interval
        let q = match &fixed_q {
            Some(q) => q.clone(),
            None => lc.q.clone(),
        };
        let schedule = match scheme {
            Scheme::Coordinated => CacheSchedule::from_index_set(cfg.frame_slots, vec![], 0.0)?,
            Scheme::ConventionalComp => {
                CacheSchedule::from_index_set(cfg.frame_slots, (1..=cfg.frame_slots).collect(), 1.0)?
            }
            _ => generate_cache_schedule(
                &q,
                &files,
                cfg.frame_slots,
                &mut rng::stream(seed, tag::SCHEDULE, &[interval]),
            )?,
        };
        let cache_fill = match scheme {
            Scheme::Proposed | Scheme::UniformCaching => used_bits(&q.q, &cfg.file_bits),
            _ => 0.0,
        };

        let states: Vec<bool> = (start..end).map(|t| schedule.state(t)).collect();
        // the controller needs at least one CoMP sample per interval
        let force_comp_last = scheme == Scheme::Proposed && !states.iter().any(|&s| s);
        let tasks: Vec<(u64, bool)> = (start..end)
            .zip(&states)
            .map(|(t, &s)| (t, s || (force_comp_last && t + 1 == end)))
            .collect();
        let run = |&(t, with_comp): &(u64, bool)| {
            solve_slot(&topo, cfg, seed, t, &rc, with_comp, &opts.sp).map_err(|e| e.at_slot(t))
        };
        let solved: Vec<SlotSolve> = if opts.parallel {
            tasks.par_iter().map(run).collect::<Result<_>>()?
        } else {
            tasks.iter().map(run).collect::<Result<_>>()?
        };

        // playback restarts for users whose request changed
        match playback.as_mut() {
            None => {
                playback = Some(PlaybackState::new(
                    &stream_rates,
                    cfg.frame_slots,
                    cfg.slot_s,
                    opts.prebuffer_segments,
                ))
            }
            Some(pb) => {
                for k in 0..kk {
                    if prev_files[k] != files[k] {
                        pb.restart(k, stream_rates[k]);
                    }
                }
            }
        }
        let pb = playback.as_mut().expect("playback initialized above");

        let mut p_samples = Vec::new();
        let mut comp_samples = Vec::new();
        let mut interval_power = 0.0;
        for ((t, s), solve) in (start..end).zip(&states).zip(solved) {
            stats.solves += solve.solves;
            stats.total_iterations += solve.iterations;
            stats.max_iterations = stats.max_iterations.max(solve.max_iterations);
            stats.non_converged += solve.non_converged;
            if let Some((pc, _)) = &solve.comp {
                comp_samples.push(*pc);
            }
            if !s {
                p_samples.push(solve.coordinated_power);
            }
            let (power, rates) = match (&solve.comp, s) {
                (Some((pc, rates)), true) => (*pc, rates.clone()),
                _ => (solve.coordinated_power, solve.coordinated_rates.clone()),
            };
            let delivered: Vec<f64> = rates
                .iter()
                .zip(&stream_rates)
                .map(|(r, mu)| delivered_bits(*r, *mu, cfg.slot_s))
                .collect();
            step_playback(pb, &delivered)?;
            let mut m = SlotMetrics {
                slot: t,
                cache_state: *s,
                sum_power: power,
                coordinated_power: solve.coordinated_power,
                comp_power: solve.comp.as_ref().map(|c| c.0),
                rates,
                stream_rate_bps: stream_rates.clone(),
                buffer_bits: pb.users.iter().map(|u| u.buffer_bits).collect(),
                backhaul_bits: 0.0,
                cache_fill_bits: cache_fill,
                sp_iterations: solve.iterations,
                sp_converged: solve.non_converged == 0,
            };
            let before = meter.total_bits();
            account_backhaul(
                &mut meter,
                &m,
                scheme.backhaul(),
                cfg.slot_s,
                cfg.cache_update_interval_s,
            )?;
            m.backhaul_bits = meter.total_bits() - before;
            last_coordinated = solve.coordinated_power;
            interval_power += power;
            power_sum += power;
            if opts.keep_slots {
                slots.push(m);
            }
        }
        let n = (end - start) as f64;

        if scheme == Scheme::Proposed {
            if p_samples.is_empty() {
                // q_min = 1: every slot was cached; the coordinated solves still ran
                // as warm starts, so the last one stands in for the missing sample.
                p_samples.push(last_coordinated);
            }
            let g = if !p_samples.is_empty() && !comp_samples.is_empty() {
                Some(noisy_subgradient(&q, &files, &p_samples, &comp_samples)?)
            } else {
                None
            };
            if let (false, Some(g)) = (step_scaled, &g) {
                // The first informative subgradient sets the scale:
                // sigma_0 * max|g| = lc_step.
                let gmax = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                if gmax > 0.0 {
                    lc.step = StepRule::Harmonic {
                        sigma0: cfg.lc_step / gmax,
                    };
                    step_scaled = true;
                }
            }
            lc_trace.push(LcTraceRow {
                interval: lc.interval,
                q: q.q.clone(),
                psi_estimate: interval_power / n,
            });
            if let Some(g) = g {
                lc.update(&g)?;
            }
        }
        prev_files = files.clone();
        profiles.push(RequestProfile {
            files,
            interval_start: start,
            interval_end: end,
        });
        interval += 1;
    }

    let avg_power = if horizon > 0 { power_sum / horizon as f64 } else { 0.0 };
    let final_q = match &fixed_q {
        Some(q) => q.q.clone(),
        None => lc.q.q.clone(),
    };
    Ok(ExperimentResult {
        scheme,
        config: cfg.clone(),
        seed,
        slots,
        lc_trace,
        profiles,
        avg_power,
        avg_power_db: 10.0 * avg_power.log10(),
        avg_backhaul_bps: meter.average_bps(),
        backhaul: meter,
        interruptions: playback.map_or(0, |p| p.interruptions()),
        sp_stats: stats,
        final_q,
    })
}
