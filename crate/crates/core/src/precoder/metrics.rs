use crate::error::{Error, Result};
use crate::linalg::{fro2, hermitize, hpd_logdet, hpd_solve, identity, inverse, trace_re, CMat};

use super::{LinkView, Mode, PrecoderSet};

fn check_mode(view: &LinkView, v: &PrecoderSet) -> Result<()> {
    if view.mode != v.mode {
        return Err(Error::Contract(format!(
            "{} precoders evaluated on a {} link view",
            v.mode.name(),
            view.mode.name()
        )));
    }
    v.check_against(view.channel())
}

/// Interference-plus-noise covariance `I + sum_{n != k} G V_n V_n^H G^H`.
pub fn interference_covariance(view: &LinkView, v: &PrecoderSet, m: usize, k: usize) -> CMat {
    let mut omega = identity(view.rx());
    for n in (0..view.users()).filter(|&n| n != k) {
        let gv = view.link(m, k, n) * v.v(m, n);
        omega += &gv * gv.adjoint();
    }
    hermitize(&mut omega);
    omega
}

/// MMSE receiver `(Omega + G V V^H G^H)^{-1} G V` for user k on subcarrier m.
pub fn mmse_receiver(view: &LinkView, v: &PrecoderSet, m: usize, k: usize) -> Result<CMat> {
    check_mode(view, v)?;
    Ok(mmse_unchecked(view, v, m, k))
}

fn mmse_unchecked(view: &LinkView, v: &PrecoderSet, m: usize, k: usize) -> CMat {
    let gv = view.direct(m, k) * v.v(m, k);
    let mut cov = interference_covariance(view, v, m, k) + &gv * gv.adjoint();
    hermitize(&mut cov);
    // cov >= I, so the Hermitian solve cannot fail
    hpd_solve(&cov, &gv).expect("covariance is positive definite")
}

/// `r_{m,k} = ln|I + G V V^H G^H Omega^{-1}|` in nats, computed as
/// `ln|Omega + G V V^H G^H| - ln|Omega|`.
pub fn rate_nats(view: &LinkView, v: &PrecoderSet, m: usize, k: usize) -> Result<f64> {
    check_mode(view, v)?;
    let omega = interference_covariance(view, v, m, k);
    let gv = view.direct(m, k) * v.v(m, k);
    let mut total = &omega + &gv * gv.adjoint();
    hermitize(&mut total);
    Ok(hpd_logdet(&total)? - hpd_logdet(&omega)?)
}

/// Per-user rates in bit/s: `B_W / (M ln 2) * sum_m r_{m,k}`.
pub fn user_rates(view: &LinkView, v: &PrecoderSet, bandwidth_hz: f64) -> Result<Vec<f64>> {
    check_mode(view, v)?;
    let mm = view.subcarriers();
    let scale = bandwidth_hz / (mm as f64 * std::f64::consts::LN_2);
    (0..view.users())
        .map(|k| {
            let mut acc = 0.0;
            for m in 0..mm {
                acc += rate_nats(view, v, m, k)?;
            }
            Ok(scale * acc)
        })
        .collect()
}

/// Sum transmit power `sum_{m,k} Tr(V V^H)`.
pub fn sum_power(v: &PrecoderSet) -> f64 {
    v.power()
}

/// Transmit power of each BS. In CoMP mode BS n radiates rows
/// `[n N_T, (n+1) N_T)` of every user's composite precoder.
pub fn per_bs_power(v: &PrecoderSet, tx_antennas: usize) -> Vec<f64> {
    let (mm, kk) = (v.subcarriers(), v.users());
    let mut out = vec![0.0; kk];
    match v.mode {
        Mode::Coordinated => {
            for m in 0..mm {
                for (k, p) in out.iter_mut().enumerate() {
                    *p += fro2(v.v(m, k));
                }
            }
        }
        Mode::Comp => {
            for m in 0..mm {
                for k in 0..kk {
                    let blk = v.v(m, k);
                    for (n, p) in out.iter_mut().enumerate() {
                        *p += blk
                            .rows(n * tx_antennas, tx_antennas)
                            .iter()
                            .map(|z| z.norm_sqr())
                            .sum::<f64>();
                    }
                }
            }
        }
    }
    out
}

/// MSE matrix `E = (I - U^H G V)(I - U^H G V)^H + U^H Omega U`.
pub fn mse_matrix(view: &LinkView, v: &PrecoderSet, u: &CMat, m: usize, k: usize) -> Result<CMat> {
    check_mode(view, v)?;
    let d = v.streams();
    if u.shape() != (view.rx(), d) {
        return Err(Error::Dimension(format!(
            "receiver is {:?}, expected ({}, {d})",
            u.shape(),
            view.rx()
        )));
    }
    let omega = interference_covariance(view, v, m, k);
    let resid = identity(d) - u.adjoint() * view.direct(m, k) * v.v(m, k);
    let mut e = &resid * resid.adjoint() + u.adjoint() * omega * u;
    hermitize(&mut e);
    Ok(e)
}

/// Weight update `W = (I - U^H G V)^{-1}`; equals `E^{-1}` when U is the MMSE
/// receiver.
pub fn weight_matrix(view: &LinkView, v: &PrecoderSet, u: &CMat, m: usize, k: usize) -> Result<CMat> {
    let d = v.streams();
    let a = identity(d) - u.adjoint() * view.direct(m, k) * v.v(m, k);
    let mut w = inverse(&a)?;
    hermitize(&mut w);
    Ok(w)
}

/// MMSE receivers and their weights for every (m, k), indexed `m * K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Receivers {
    pub u: Vec<CMat>,
    pub w: Vec<CMat>,
}

impl Receivers {
    /// Steps 1 and 2 of the alternating iteration.
    pub fn compute(view: &LinkView, v: &PrecoderSet) -> Result<Self> {
        check_mode(view, v)?;
        let (mm, kk) = (view.subcarriers(), view.users());
        let mut u = Vec::with_capacity(mm * kk);
        let mut w = Vec::with_capacity(mm * kk);
        for m in 0..mm {
            for k in 0..kk {
                let uk = mmse_unchecked(view, v, m, k);
                w.push(weight_matrix(view, v, &uk, m, k)?);
                u.push(uk);
            }
        }
        Ok(Receivers { u, w })
    }

    pub fn u(&self, users: usize, m: usize, k: usize) -> &CMat {
        &self.u[m * users + k]
    }

    pub fn w(&self, users: usize, m: usize, k: usize) -> &CMat {
        &self.w[m * users + k]
    }
}

/// Weighted-MSE rate `d - (1/M) sum_m (Tr(W E) - ln|W|)` of user k, in nats.
pub fn wmmse_rate_nats(view: &LinkView, v: &PrecoderSet, rx: &Receivers, k: usize) -> Result<f64> {
    let (mm, kk) = (view.subcarriers(), view.users());
    let d = v.streams() as f64;
    let mut acc = 0.0;
    for m in 0..mm {
        let e = mse_matrix(view, v, rx.u(kk, m, k), m, k)?;
        let w = rx.w(kk, m, k);
        acc += trace_re(&(w * e)) - hpd_logdet(w)?;
    }
    Ok(d - acc / mm as f64)
}
