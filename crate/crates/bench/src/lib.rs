//! Fixed instances shared by the benchmarks.

use cachemimo::linalg::CMat;
use cachemimo::{ChannelState, RateConstraint};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Unit-variance Rayleigh channel with rate targets drawn in [0.1, 1) nats.
pub fn instance(seed: u64, users: usize, subcarriers: usize, rx: usize, tx: usize) -> (ChannelState, RateConstraint) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let h = ChannelState::from_fn(subcarriers, users, rx, tx, |_, _, _| {
        CMat::from_fn(rx, tx, |_, _| {
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    })
    .expect("consistent block shapes");
    let nats = (0..users).map(|_| r.random_range(0.1..1.0)).collect();
    (h, RateConstraint::from_nats(nats, 1e6).expect("positive targets"))
}

/// Raw cache-control vector in [0, 1.5) for the projection benchmark.
pub fn raw_cache_control(seed: u64, files: usize) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..files).map(|_| r.random_range(0.0..1.5)).collect()
}
