//! Invariant suite run by `cachemimo validate`: solver descent and
//! feasibility, CoMP warm-start dominance, convexity of the per-profile
//! average power in q, and cache-schedule counts, all on instances drawn from
//! a configuration.

use rand::Rng;

use crate::cache::{generate_cache_schedule, noisy_subgradient, profile_power, project_cache, CacheControlVector};
use crate::channel::{build_topology, draw_channel};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::precoder::{algorithm_sp, comp_initial_point, Mode, RateConstraint, SpOptions};
use crate::rng::{self, tag};
use crate::sim::draw_urp;

/// Relative slack on power comparisons.
const POWER_SLACK: f64 = 1e-8;
/// Relative slack on rate targets.
const RATE_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, violations: usize, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed: violations == 0,
        detail,
    }
}

/// Run every check on `instances` channel/profile draws.
pub fn run_checks(cfg: &SystemConfig, instances: usize) -> Result<Vec<CheckResult>> {
    cfg.validate()?;
    let seed = cfg.rng_seed;
    let topo = build_topology(cfg, cfg.placement, &mut rng::stream(seed, tag::TOPOLOGY, &[]))?;
    let mut r = rng::stream(seed, tag::VALIDATE, &[]);
    let opts = SpOptions {
        tol: cfg.sp_tolerance,
        max_iter: cfg.sp_max_iter,
        ..SpOptions::default()
    };

    let (mut rises, mut short, mut dominance) = (0, 0, 0);
    let mut pairs = Vec::with_capacity(instances);
    for i in 0..instances {
        let h = draw_channel(&topo, cfg, seed, i as u64)?;
        let profile = draw_urp(&cfg.popularity, cfg.users, &mut r)?;
        let rc = RateConstraint::for_request(&cfg.stream_rate_bps, &profile, cfg.bandwidth_hz)?;
        let coord = algorithm_sp(&h, &rc, Mode::Coordinated, None, &opts)?;
        let comp = algorithm_sp(&h, &rc, Mode::Comp, Some(&comp_initial_point(&coord.v, &h)?), &opts)?;
        for st in [&coord, &comp] {
            rises += st
                .objective_trace
                .windows(2)
                .filter(|w| w[1] > w[0] * (1.0 + POWER_SLACK))
                .count();
            short += st
                .rates
                .iter()
                .zip(&rc.rate_bps)
                .filter(|(got, mu)| **got < **mu * (1.0 - RATE_SLACK))
                .count();
        }
        if comp.power() > coord.power() * (1.0 + POWER_SLACK) {
            dominance += 1;
        }
        pairs.push((profile, coord.power(), comp.power()));
    }

    let mut checks = vec![
        result(
            "descent",
            rises,
            format!("{} solves, {rises} power increases", 2 * instances),
        ),
        result(
            "feasibility",
            short,
            format!("{short} rate targets missed by more than 0.1%"),
        ),
        result(
            "dominance",
            dominance,
            format!("{instances} paired solves, {dominance} with CoMP above coordinated"),
        ),
    ];

    // Convexity and the subgradient inequality of phi(q) = (1 - q_min) P + q_min P~.
    let (mut nonconvex, mut below) = (0, 0);
    let random_q = |r: &mut rng::SimRng| -> Result<CacheControlVector> {
        let raw: Vec<f64> = (0..cfg.files).map(|_| r.random_range(0.0..1.0)).collect();
        project_cache(&raw, &cfg.file_bits, cfg.cache_bits)
    };
    for (profile, a, b) in &pairs {
        for _ in 0..10 {
            let (q1, q2) = (random_q(&mut r)?, random_q(&mut r)?);
            let f1 = profile_power(&q1, profile, *a, *b)?;
            let f2 = profile_power(&q2, profile, *a, *b)?;
            for t in (1..10).map(|i| i as f64 / 10.0) {
                let mix = CacheControlVector {
                    q: q1.q.iter().zip(&q2.q).map(|(x, y)| t * x + (1.0 - t) * y).collect(),
                };
                let fm = profile_power(&mix, profile, *a, *b)?;
                if fm > (t * f1 + (1.0 - t) * f2) * (1.0 + POWER_SLACK) {
                    nonconvex += 1;
                }
            }
            let g = noisy_subgradient(&q1, profile, &[*a], &[*b])?;
            let lin: f64 = g
                .iter()
                .zip(q2.q.iter().zip(&q1.q))
                .map(|(g, (x, y))| g * (x - y))
                .sum();
            if f2 < (f1 + lin) - POWER_SLACK * f1.abs() {
                below += 1;
            }
        }
    }
    checks.push(result(
        "convexity",
        nonconvex + below,
        format!("{nonconvex} chord violations, {below} subgradient-inequality violations"),
    ));

    let mut bad = 0;
    for _ in 0..instances {
        let q = random_q(&mut r)?;
        let profile = draw_urp(&cfg.popularity, cfg.users, &mut r)?;
        let sched = generate_cache_schedule(&q, &profile, cfg.frame_slots, &mut r)?;
        let states: Vec<bool> = (0..10 * cfg.frame_slots as u64).map(|t| sched.state(t)).collect();
        bad += states
            .windows(cfg.frame_slots)
            .filter(|w| w.iter().filter(|&&s| s).count() != sched.comp_slots())
            .count();
    }
    checks.push(result(
        "schedule",
        bad,
        format!("{instances} schedules, {bad} windows with the wrong CoMP count"),
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_passes() {
        let cfg = SystemConfig {
            users: 2,
            subcarriers: 2,
            ..SystemConfig::default()
        };
        let checks = run_checks(&cfg, 4).unwrap();
        assert_eq!(checks.len(), 5);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }
}
