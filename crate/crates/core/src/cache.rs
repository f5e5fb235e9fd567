//! MDS-coded random cache: the cache-control feasible set, cache-state
//! schedules, CoMP probabilities, the noisy subgradient of the long-term
//! power and the projected stochastic subgradient controller.
//!
//! Request profiles are slices of 0-based file indices, one per user.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::export::fmt_num;

/// Bisection steps for the knapsack water level.
const PROJECTION_STEPS: usize = 200;

/// Cached fraction of every file.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheControlVector {
    pub q: Vec<f64>,
}

impl CacheControlVector {
    pub fn zeros(files: usize) -> Self {
        CacheControlVector { q: vec![0.0; files] }
    }

    /// Checked construction: entries in [0, 1] and `Σ F_l q_l ≤ B_C`.
    pub fn new(q: Vec<f64>, file_bits: &[f64], cache_bits: f64) -> Result<Self> {
        if q.len() != file_bits.len() {
            return Err(Error::Dimension(format!(
                "{} cache fractions for {} files",
                q.len(),
                file_bits.len()
            )));
        }
        if q.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Domain("cache fractions must lie in [0, 1]".into()));
        }
        let used = used_bits(&q, file_bits);
        if used > cache_bits * (1.0 + 1e-12) + 1e-9 {
            return Err(Error::Domain(format!(
                "cache content of {used} bits exceeds the {cache_bits}-bit cache"
            )));
        }
        Ok(CacheControlVector { q })
    }

    pub fn files(&self) -> usize {
        self.q.len()
    }
}

/// `Σ_l F_l q_l`.
pub fn used_bits(q: &[f64], file_bits: &[f64]) -> f64 {
    q.iter().zip(file_bits).map(|(q, f)| q * f).sum()
}

/// Euclidean projection onto `{q ∈ [0,1]^L : Σ F_l q_l ≤ B_C}`: clip to the
/// box, then lower a water level ν on the knapsack until the budget holds.
pub fn project_cache(q_raw: &[f64], file_bits: &[f64], cache_bits: f64) -> Result<CacheControlVector> {
    if q_raw.len() != file_bits.len() {
        return Err(Error::Dimension(format!(
            "{} entries for {} files",
            q_raw.len(),
            file_bits.len()
        )));
    }
    if file_bits.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(Error::Domain("file sizes must be positive".into()));
    }
    if !(cache_bits >= 0.0) {
        return Err(Error::Domain("cache size must be non-negative".into()));
    }
    if q_raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite cache update".into()));
    }
    let at = |nu: f64| -> Vec<f64> {
        q_raw
            .iter()
            .zip(file_bits)
            .map(|(q, f)| (q - nu * f).clamp(0.0, 1.0))
            .collect()
    };
    let clipped = at(0.0);
    if used_bits(&clipped, file_bits) <= cache_bits {
        return Ok(CacheControlVector { q: clipped });
    }
    let (mut lo, mut hi) = (0.0, 0.0f64);
    for (q, f) in q_raw.iter().zip(file_bits) {
        hi = hi.max(q / f);
    }
    for _ in 0..PROJECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if used_bits(&at(mid), file_bits) > cache_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CacheControlVector { q: at(hi) })
}

fn check_profile(q: &CacheControlVector, profile: &[usize]) -> Result<()> {
    if profile.is_empty() {
        return Err(Error::Dimension("empty request profile".into()));
    }
    if let Some(&l) = profile.iter().find(|&&l| l >= q.files()) {
        return Err(Error::Dimension(format!("requested file {} does not exist", l + 1)));
    }
    Ok(())
}

/// `min_k q_{π_k}` and the smallest user index attaining it.
pub fn q_min_of(q: &CacheControlVector, profile: &[usize]) -> Result<(f64, usize)> {
    check_profile(q, profile)?;
    let mut best = (f64::INFINITY, 0);
    for (k, &l) in profile.iter().enumerate() {
        if q.q[l] < best.0 {
            best = (q.q[l], k);
        }
    }
    Ok(best)
}

/// Number of CoMP slots per frame: `q_min T_S` rounded to nearest, ties
/// toward zero.
pub fn comp_slots_per_frame(q_min: f64, frame_slots: usize) -> usize {
    let x = q_min.clamp(0.0, 1.0) * frame_slots as f64;
    ((x - 0.5).ceil().max(0.0) as usize).min(frame_slots)
}

/// Per-frame cache-state pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheSchedule {
    pub frame_slots: usize,
    /// Sorted 1-based frame positions with S = 1.
    pub index_set: Vec<usize>,
    pub q_min: f64,
}

impl CacheSchedule {
    pub fn from_index_set(frame_slots: usize, mut index_set: Vec<usize>, q_min: f64) -> Result<Self> {
        if frame_slots == 0 {
            return Err(Error::Domain("frames need at least one slot".into()));
        }
        index_set.sort_unstable();
        index_set.dedup();
        if index_set.iter().any(|&i| i == 0 || i > frame_slots) {
            return Err(Error::Domain(format!("frame positions must lie in 1..={frame_slots}")));
        }
        Ok(CacheSchedule {
            frame_slots,
            index_set,
            q_min,
        })
    }

    /// Cache state of global slot `t` (0-based); frames start at multiples of
    /// `T_S`.
    pub fn state(&self, t: u64) -> bool {
        let pos = (t % self.frame_slots as u64) as usize + 1;
        self.index_set.binary_search(&pos).is_ok()
    }

    pub fn comp_slots(&self) -> usize {
        self.index_set.len()
    }

    /// One frame of states.
    pub fn pattern(&self) -> Vec<bool> {
        (0..self.frame_slots as u64).map(|t| self.state(t)).collect()
    }
}

/// Draw the index set uniformly among subsets of size
/// [`comp_slots_per_frame`]. The set is the prefix of a random permutation,
/// so runs sharing the generator state get nested sets for growing q_min.
pub fn generate_cache_schedule<R: Rng>(
    q: &CacheControlVector,
    profile: &[usize],
    frame_slots: usize,
    rng: &mut R,
) -> Result<CacheSchedule> {
    if frame_slots == 0 {
        return Err(Error::Domain("frames need at least one slot".into()));
    }
    let (q_min, _) = q_min_of(q, profile)?;
    let n = comp_slots_per_frame(q_min, frame_slots);
    let mut perm: Vec<usize> = (1..=frame_slots).collect();
    perm.shuffle(rng);
    perm.truncate(n);
    CacheSchedule::from_index_set(frame_slots, perm, q_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompScheme {
    /// MDS-coded random cache: S = 1 whenever every requested file has
    /// enough parity cached, probability `min_k q_{π_k}`.
    MdsRandom,
    /// Independent uncoded caching at every BS: all K users' bits must be
    /// present at all K BSs, probability `Π_k q_{π_k}^K`.
    BruteForce,
}

pub fn comp_probability(q: &CacheControlVector, profile: &[usize], scheme: CompScheme) -> Result<f64> {
    check_profile(q, profile)?;
    Ok(match scheme {
        CompScheme::MdsRandom => q_min_of(q, profile)?.0,
        CompScheme::BruteForce => {
            let k = profile.len() as i32;
            profile.iter().map(|&l| q.q[l].powi(k)).product()
        }
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `G(q, π) = 1(l = π_{k*}) (mean P~ - mean P)`.
pub fn noisy_subgradient(
    q: &CacheControlVector,
    profile: &[usize],
    p_samples: &[f64],
    comp_samples: &[f64],
) -> Result<Vec<f64>> {
    if p_samples.is_empty() || comp_samples.is_empty() {
        return Err(Error::Contract(
            "the subgradient needs power samples from both transmission modes".into(),
        ));
    }
    let (_, kstar) = q_min_of(q, profile)?;
    let mut g = vec![0.0; q.files()];
    g[profile[kstar]] = mean(comp_samples) - mean(p_samples);
    Ok(g)
}

/// Per-profile average power `(1 - q_min) a + q_min b`.
pub fn profile_power(q: &CacheControlVector, profile: &[usize], coordinated: f64, comp: f64) -> Result<f64> {
    let (qm, _) = q_min_of(q, profile)?;
    Ok((1.0 - qm) * coordinated + qm * comp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of `ψ(q) = E[(1 - q_min) E[P|π] + q_min E[P~|π]]`
/// over sampled profiles, with `oracle(π) = (E[P|π], E[P~|π])`.
pub fn expected_objective<F>(q: &CacheControlVector, oracle: F, profiles: &[Vec<usize>]) -> Result<Estimate>
where
    F: Fn(&[usize]) -> (f64, f64),
{
    if profiles.is_empty() {
        return Err(Error::Contract("no request profiles to average over".into()));
    }
    let vals = profiles
        .iter()
        .map(|pi| {
            let (a, b) = oracle(pi);
            profile_power(q, pi, a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = vals.len() as f64;
    let m = mean(&vals);
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(Estimate {
        mean: m,
        std_error: (var / n).sqrt(),
    })
}

/// Step size `σ^(i)` of the controller (intervals counted from 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `σ0 / i`.
    Harmonic { sigma0: f64 },
    /// `σ0 / i^a` for `a` in (1/2, 1].
    Power { sigma0: f64, exponent: f64 },
}

impl StepRule {
    pub fn step(&self, i: usize) -> f64 {
        let i = i.max(1) as f64;
        match *self {
            StepRule::Harmonic { sigma0 } => sigma0 / i,
            StepRule::Power { sigma0, exponent } => sigma0 / i.powf(exponent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Harmonic { sigma0 } if sigma0 >= 0.0 && sigma0.is_finite() => Ok(()),
            StepRule::Power { sigma0, exponent }
                if sigma0 >= 0.0 && sigma0.is_finite() && exponent > 0.5 && exponent <= 1.0 =>
            {
                Ok(())
            }
            _ => Err(Error::Domain(
                "steps must be non-negative and square-summable but not summable".into(),
            )),
        }
    }
}

/// Power samples gathered over one URP interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerSamples {
    pub coordinated: Vec<f64>,
    pub comp: Vec<f64>,
}

impl PowerSamples {
    pub fn push(&mut self, comp_mode: bool, power: f64) {
        if comp_mode {
            self.comp.push(power);
        } else {
            self.coordinated.push(power);
        }
    }

    pub fn clear(&mut self) {
        self.coordinated.clear();
        self.comp.clear();
    }
}

/// State of the cache controller.
#[derive(Debug, Clone, PartialEq)]
pub struct LcState {
    pub q: CacheControlVector,
    /// Index i of the interval being played (from 1).
    pub interval: usize,
    pub step: StepRule,
    pub file_bits: Vec<f64>,
    pub cache_bits: f64,
    pub samples: PowerSamples,
}

impl LcState {
    /// Starts from `q = 0`.
    pub fn new(file_bits: Vec<f64>, cache_bits: f64, step: StepRule) -> Result<Self> {
        step.validate()?;
        project_cache(&vec![0.0; file_bits.len()], &file_bits, cache_bits)?;
        Ok(LcState {
            q: CacheControlVector::zeros(file_bits.len()),
            interval: 1,
            step,
            file_bits,
            cache_bits,
            samples: PowerSamples::default(),
        })
    }

    /// `q ← Proj(q - σ^(i) g)`, then move to the next interval.
    pub fn update(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.q.files() {
            return Err(Error::Dimension(format!(
                "{} subgradient entries for {} files",
                g.len(),
                self.q.files()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite subgradient".into()));
        }
        let s = self.step.step(self.interval);
        let raw: Vec<f64> = self.q.q.iter().zip(g).map(|(q, g)| q - s * g).collect();
        self.q = project_cache(&raw, &self.file_bits, self.cache_bits)?;
        self.interval += 1;
        self.samples.clear();
        Ok(())
    }
}

/// Functional form of [`LcState::update`].
pub fn lc_update(state: &LcState, g: &[f64]) -> Result<LcState> {
    let mut next = state.clone();
    next.update(g)?;
    Ok(next)
}

/// One row of the controller trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LcTraceRow {
    pub interval: usize,
    pub q: Vec<f64>,
    /// Average sum power observed over the interval.
    pub psi_estimate: f64,
}

/// CSV with columns `interval,q_1..q_L,psi_estimate`.
pub fn write_lc_trace<W: Write>(rows: &[LcTraceRow], files: usize, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["interval".to_string()];
    header.extend((1..=files).map(|l| format!("q_{l}")));
    header.push("psi_estimate".into());
    wtr.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.interval.to_string()];
        rec.extend(row.q.iter().map(|&x| fmt_num(x)));
        rec.push(fmt_num(row.psi_estimate));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cv(q: &[f64]) -> CacheControlVector {
        CacheControlVector { q: q.to_vec() }
    }

    fn grid(l: usize, step: f64) -> Vec<Vec<f64>> {
        let n = (1.0 / step).round() as usize;
        let mut out = vec![vec![]];
        for _ in 0..l {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..=n).map(move |i| {
                        let mut p = p.clone();
                        p.push(i as f64 / n as f64);
                        p
                    })
                })
                .collect();
        }
        out
    }

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
    }

    #[test]
    fn feasible_points_are_fixed() {
        let q = project_cache(&[0.2, 0.3], &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(q.q, vec![0.2, 0.3]);
    }

    #[test]
    fn roomy_cache_only_clips() {
        let q = project_cache(&[-0.5, 1.7, 0.4], &[1.0, 1.0, 1.0], 3.0).unwrap();
        assert_eq!(q.q, vec![0.0, 1.0, 0.4]);
    }

    #[test]
    fn two_file_projection_matches_grid() {
        let q = project_cache(&[1.0, 1.0], &[1.0, 1.0], 1.0).unwrap();
        assert!((q.q[0] - 0.5).abs() < 1e-12 && (q.q[1] - 0.5).abs() < 1e-12);
        let best = grid(2, 0.01)
            .into_iter()
            .filter(|p| p[0] + p[1] <= 1.0 + 1e-12)
            .min_by(|a, b| dist2(a, &[1.0, 1.0]).total_cmp(&dist2(b, &[1.0, 1.0])))
            .unwrap();
        assert!((best[0] - 0.5).abs() < 1e-9 && (best[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn projection_beats_every_grid_point() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f = [1.0, 2.0, 0.5];
        let pts: Vec<Vec<f64>> = grid(3, 0.05).into_iter().filter(|p| used_bits(p, &f) <= 1.2).collect();
        for _ in 0..50 {
            let raw: Vec<f64> = (0..3).map(|_| r.random_range(-0.5..1.5)).collect();
            let proj = project_cache(&raw, &f, 1.2).unwrap();
            assert!(used_bits(&proj.q, &f) <= 1.2 * (1.0 + 1e-12));
            let d = dist2(&raw, &proj.q);
            assert!(pts.iter().all(|p| d <= dist2(&raw, p) + 1e-12));
        }
    }

    #[test]
    fn q_min_examples() {
        assert_eq!(q_min_of(&cv(&[0.5; 4]), &[0, 3, 2]).unwrap().0, 0.5);
        assert_eq!(q_min_of(&cv(&[0.0, 0.9]), &[1, 0]).unwrap().0, 0.0);
        assert_eq!(q_min_of(&cv(&[0.2, 0.8]), &[1, 0, 1]).unwrap(), (0.2, 1));
        assert_eq!(q_min_of(&cv(&[0.2, 0.2]), &[1, 0]).unwrap(), (0.2, 0));
        assert!(q_min_of(&cv(&[0.2]), &[1]).is_err());
    }

    #[test]
    fn figure_four_pattern() {
        let s = CacheSchedule::from_index_set(8, vec![1, 3, 6], 3.0 / 8.0).unwrap();
        let want = [true, false, true, false, false, true, false, false];
        assert_eq!(s.pattern(), want);
        assert!(s.state(8));
        assert!(s.state(13));
    }

    #[test]
    fn empty_and_full_schedules() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let s0 = generate_cache_schedule(&cv(&[0.0, 1.0]), &[0, 1], 10, &mut r).unwrap();
        assert!(s0.pattern().iter().all(|s| !s));
        let s1 = generate_cache_schedule(&cv(&[1.0, 1.0]), &[0, 1], 10, &mut r).unwrap();
        assert!(s1.pattern().iter().all(|s| *s));
    }

    #[test]
    fn rounding_ties_go_down() {
        assert_eq!(comp_slots_per_frame(0.25, 10), 2);
        assert_eq!(comp_slots_per_frame(0.26, 10), 3);
        assert_eq!(comp_slots_per_frame(0.35, 10), 3);
        assert_eq!(comp_slots_per_frame(3.0 / 8.0, 8), 3);
        assert_eq!(comp_slots_per_frame(0.04, 10), 0);
    }

    #[test]
    fn index_sets_are_uniform() {
        // each position is chosen with probability n / T_S
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut hits = [0usize; 8];
        let trials = 20_000;
        for _ in 0..trials {
            let s = generate_cache_schedule(&cv(&[3.0 / 8.0]), &[0], 8, &mut r).unwrap();
            for &i in &s.index_set {
                hits[i - 1] += 1;
            }
        }
        let p = 3.0 / 8.0;
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        for h in hits {
            assert!((h as f64 / trials as f64 - p).abs() < 5.0 * sd);
        }
    }

    #[test]
    fn comp_probability_examples() {
        let q = cv(&[0.5; 6]);
        let bf = comp_probability(&q, &[0, 1, 2, 3], CompScheme::BruteForce).unwrap();
        assert_eq!(bf, 0.5f64.powi(16));
        assert!(bf < 2e-5);
        assert_eq!(comp_probability(&q, &[0, 1, 2, 3], CompScheme::MdsRandom).unwrap(), 0.5);
        let z = cv(&[0.0, 0.9]);
        assert_eq!(comp_probability(&z, &[0, 1], CompScheme::BruteForce).unwrap(), 0.0);
        assert_eq!(comp_probability(&z, &[0, 1], CompScheme::MdsRandom).unwrap(), 0.0);
    }

    #[test]
    fn subgradient_structure() {
        let q = cv(&[0.9, 0.4, 0.7]);
        assert_eq!(
            noisy_subgradient(&q, &[1, 1], &[3.0, 5.0], &[4.0]).unwrap(),
            vec![0.0; 3]
        );
        assert_eq!(
            noisy_subgradient(&q, &[1, 1], &[6.0, 4.0], &[1.0, 2.0]).unwrap(),
            vec![0.0, -3.5, 0.0]
        );
        assert!(matches!(
            noisy_subgradient(&q, &[1], &[], &[1.0]),
            Err(Error::Contract(_))
        ));
    }

    /// Exact ψ over all profiles of K users drawn i.i.d. from ρ.
    fn exact_psi(q: &CacheControlVector, rho: &[f64], k: usize, a: &dyn Fn(&[usize]) -> (f64, f64)) -> f64 {
        let l = rho.len();
        let mut total = 0.0;
        for code in 0..l.pow(k as u32) {
            let pi: Vec<usize> = (0..k).map(|i| code / l.pow(i as u32) % l).collect();
            let prob: f64 = pi.iter().map(|&f| rho[f]).product();
            let (p, pt) = a(&pi);
            total += prob * profile_power(q, &pi, p, pt).unwrap();
        }
        total
    }

    #[test]
    fn subgradient_is_unbiased_at_differentiable_points() {
        let rho = [0.5, 0.3, 0.2];
        let oracle = |pi: &[usize]| (10.0 + pi.iter().sum::<usize>() as f64, 4.0 + 0.5 * pi[0] as f64);
        let q = cv(&[0.6, 0.35, 0.1]);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let mut acc = [0.0; 3];
        let mut acc2 = [0.0; 3];
        for _ in 0..n {
            let pi: Vec<usize> = (0..2)
                .map(|_| {
                    let u: f64 = r.random();
                    if u < 0.5 {
                        0
                    } else if u < 0.8 {
                        1
                    } else {
                        2
                    }
                })
                .collect();
            let (p, pt) = oracle(&pi);
            let g = noisy_subgradient(&q, &pi, &[p], &[pt]).unwrap();
            for l in 0..3 {
                acc[l] += g[l];
                acc2[l] += g[l] * g[l];
            }
        }
        for l in 0..3 {
            let h = 1e-6;
            let mut up = q.clone();
            up.q[l] += h;
            let mut dn = q.clone();
            dn.q[l] -= h;
            let fd = (exact_psi(&up, &rho, 2, &oracle) - exact_psi(&dn, &rho, 2, &oracle)) / (2.0 * h);
            let m = acc[l] / n as f64;
            let se = ((acc2[l] / n as f64 - m * m) / n as f64).sqrt();
            assert!((m - fd).abs() <= 3.0 * se + 1e-9, "file {l}: {m} vs {fd} (se {se})");
            assert!((m - fd).abs() <= 0.02 * fd.abs().max(1e-3) + 3.0 * se);
        }
    }

    #[test]
    fn controller_steps() {
        let mut st = LcState::new(vec![1.0, 1.0], 1.0, StepRule::Harmonic { sigma0: 0.5 }).unwrap();
        assert_eq!(st.q.q, vec![0.0, 0.0]);
        st.update(&[0.0, 0.0]).unwrap();
        assert_eq!(st.q.q, vec![0.0, 0.0]);
        assert_eq!(st.interval, 2);
        // σ^(2) = 0.25
        st.update(&[-2.0, 0.0]).unwrap();
        assert_eq!(st.q.q, vec![0.5, 0.0]);
        let frozen = LcState {
            step: StepRule::Harmonic { sigma0: 0.0 },
            ..st.clone()
        };
        assert_eq!(lc_update(&frozen, &[-5.0, -5.0]).unwrap().q, st.q);
        assert!(StepRule::Power {
            sigma0: 1.0,
            exponent: 0.5
        }
        .validate()
        .is_err());
    }

    #[test]
    fn expected_objective_examples() {
        let oracle = |_: &[usize]| (10.0, 4.0);
        let pis = vec![vec![0usize]];
        let e = expected_objective(&cv(&[0.25]), oracle, &pis).unwrap();
        assert_eq!(e.mean, 8.5);
        assert_eq!(expected_objective(&cv(&[0.0]), oracle, &pis).unwrap().mean, 10.0);
        assert_eq!(expected_objective(&cv(&[1.0]), oracle, &pis).unwrap().mean, 4.0);
    }

    #[test]
    fn lc_trace_csv() {
        let rows = vec![LcTraceRow {
            interval: 1,
            q: vec![0.0, 0.5],
            psi_estimate: 2.0,
        }];
        let mut buf = Vec::new();
        write_lc_trace(&rows, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "interval,q_1,q_2,psi_estimate");
        assert_eq!(text.lines().count(), 2);
    }

    proptest! {
        #[test]
        fn projection_lands_in_the_feasible_set(
            raw in prop::collection::vec(-2.0f64..3.0, 1..6),
            sizes in prop::collection::vec(0.1f64..5.0, 6),
            budget in 0.0f64..10.0,
        ) {
            let f = &sizes[..raw.len()];
            let p = project_cache(&raw, f, budget).unwrap();
            prop_assert!(p.q.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert!(used_bits(&p.q, f) <= budget * (1.0 + 1e-12) + 1e-12);
            // idempotent
            let again = project_cache(&p.q, f, budget).unwrap();
            for (a, b) in again.q.iter().zip(&p.q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn per_profile_power_is_convex_and_subgradient_bounds_it(
            q1 in prop::collection::vec(0.0f64..1.0, 3),
            q2 in prop::collection::vec(0.0f64..1.0, 3),
            pi in prop::collection::vec(0usize..3, 1..4),
            a in 1.0f64..10.0,
            frac in 0.0f64..1.0,
        ) {
            let b = a * frac;
            let (x, y) = (cv(&q1), cv(&q2));
            let px = profile_power(&x, &pi, a, b).unwrap();
            let py = profile_power(&y, &pi, a, b).unwrap();
            for t in 1..10 {
                let t = t as f64 / 10.0;
                let mid = cv(&q1.iter().zip(&q2).map(|(u, v)| t * u + (1.0 - t) * v).collect::<Vec<_>>());
                let pm = profile_power(&mid, &pi, a, b).unwrap();
                prop_assert!(pm <= t * px + (1.0 - t) * py + 1e-12);
            }
            let g = noisy_subgradient(&x, &pi, &[a], &[b]).unwrap();
            let lin: f64 = px + g.iter().zip(q1.iter().zip(&q2)).map(|(g, (u, v))| g * (v - u)).sum::<f64>();
            prop_assert!(py >= lin - 1e-12);
        }

        #[test]
        fn every_window_holds_the_frame_count(
            q in 0.0f64..1.0,
            ts in 1usize..24,
            seed in any::<u64>(),
        ) {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = generate_cache_schedule(&cv(&[q]), &[0], ts, &mut r).unwrap();
            let states: Vec<bool> = (0..(ts * 20) as u64).map(|t| s.state(t)).collect();
            let want = comp_slots_per_frame(q, ts);
            prop_assert_eq!(s.comp_slots(), want);
            for w in states.windows(ts) {
                prop_assert_eq!(w.iter().filter(|x| **x).count(), want);
            }
        }
    }
}
