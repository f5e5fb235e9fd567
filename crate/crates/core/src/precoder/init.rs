//! Starting points for the precoder iteration and the stream-count projection.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::linalg::{c, dominant_right_singular, eigh_desc, orth, CMat};

use super::{metrics, require_feasible_csi, shape_for, LinkView, Mode, PrecoderSet, RateConstraint};

fn check_users(h: &ChannelState, rc: &RateConstraint) -> Result<()> {
    if rc.users() != h.users() {
        return Err(Error::Dimension(format!(
            "{} rate targets for {} users",
            rc.users(),
            h.users()
        )));
    }
    Ok(())
}

/// Rank-one block carrying power `p` along the unit vector `e`, spread evenly
/// over `d` identical columns.
fn beam(e: &CMat, p: f64, d: usize) -> CMat {
    let s = c((p / d as f64).sqrt(), 0.0);
    CMat::from_fn(e.nrows(), d, |r, _| e[(r, 0)] * s)
}

/// Interference-free construction: user k transmits only on subcarrier k
/// along the dominant right singular direction of its direct link, with just
/// enough power to meet its rate target exactly.
pub fn feasible_init(h: &ChannelState, rc: &RateConstraint) -> Result<PrecoderSet> {
    require_feasible_csi(h)?;
    check_users(h, rc)?;
    let (mm, kk) = (h.subcarriers(), h.users());
    if kk > mm {
        return Err(Error::Unavailable(format!(
            "one subcarrier per user needs M >= K (M = {mm}, K = {kk})"
        )));
    }
    let mut v = PrecoderSet::zeros_for(h, Mode::Coordinated);
    let d = v.streams();
    for k in 0..kk {
        if rc.nats[k] == 0.0 {
            continue;
        }
        let (sigma, e) = dominant_right_singular(h.h(k, k, k));
        let p = (mm as f64 * rc.nats[k]).exp_m1() / (sigma * sigma);
        *v.v_mut(k, k) = beam(&e, p, d);
    }
    Ok(v)
}

/// Matched-filter power control: on every subcarrier the users in
/// `groups[m]` transmit along the dominant right singular direction of their
/// direct link, with powers solving `p_k s_k = Γ_k (1 + Σ_j p_j f_kj)`.
/// Returns `(power, beam)` per (m, k), zero for users left out.
fn power_control(h: &ChannelState, groups: &[Vec<usize>], gamma: &[f64]) -> Result<Vec<(f64, CMat)>> {
    let kk = h.users();
    let mut out = vec![(0.0, CMat::zeros(h.tx(), 1)); h.subcarriers() * kk];
    for (m, group) in groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let beams: Vec<(f64, CMat, CMat)> = group
            .iter()
            .map(|&k| {
                let g = h.h(m, k, k);
                let (sigma, e) = dominant_right_singular(g);
                let rxv = (g * &e) / c(sigma, 0.0);
                (sigma, e, rxv)
            })
            .collect();
        let n = group.len();
        let mut sys = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (a, &k) in group.iter().enumerate() {
            let sig2 = beams[a].0 * beams[a].0;
            rhs[a] = gamma[k] / sig2;
            for (b, &j) in group.iter().enumerate() {
                if a != b {
                    let f = (beams[a].2.adjoint() * h.h(m, k, j) * &beams[b].1)[(0, 0)].norm_sqr();
                    sys[(a, b)] -= gamma[k] / sig2 * f;
                }
            }
        }
        let p = sys.lu().solve(&rhs).ok_or_else(|| {
            Error::Infeasible(format!("co-channel SINR targets on subcarrier {} are singular", m + 1))
        })?;
        if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Infeasible(format!(
                "co-channel users on subcarrier {} cannot all meet their rate targets",
                m + 1
            )));
        }
        for (a, &k) in group.iter().enumerate() {
            out[m * kk + k] = (p[a], beams[a].1.clone());
        }
    }
    Ok(out)
}

/// Starting point for K > M: users share subcarriers round-robin
/// (user k on subcarrier k mod M) with matched-filter power control. Rates
/// achieved with the MMSE receiver are at least those of the matched filter,
/// so the result meets every target.
pub fn shared_subcarrier_init(h: &ChannelState, rc: &RateConstraint) -> Result<PrecoderSet> {
    require_feasible_csi(h)?;
    check_users(h, rc)?;
    let (mm, kk) = (h.subcarriers(), h.users());
    let groups: Vec<Vec<usize>> = (0..mm).map(|m| (0..kk).filter(|k| k % mm == m).collect()).collect();
    let gamma: Vec<f64> = rc.nats.iter().map(|n| (mm as f64 * n).exp_m1()).collect();
    let pc = power_control(h, &groups, &gamma)?;
    let mut v = PrecoderSet::zeros_for(h, Mode::Coordinated);
    let d = v.streams();
    for m in 0..mm {
        for k in 0..kk {
            let (p, e) = &pc[m * kk + k];
            if *p > 0.0 {
                *v.v_mut(m, k) = beam(e, *p, d);
            }
        }
    }
    Ok(v)
}

/// Full-support starting point: every user transmits on every subcarrier,
/// with matched-filter power control meeting a slightly inflated per-subcarrier
/// target, then a little power is moved into the remaining stream directions
/// so that no subcarrier or stream starts (and hence stays) switched off.
pub fn spread_init(h: &ChannelState, rc: &RateConstraint) -> Result<PrecoderSet> {
    const MARGIN: f64 = 1e-3;
    require_feasible_csi(h)?;
    check_users(h, rc)?;
    let (mm, kk) = (h.subcarriers(), h.users());
    let active: Vec<usize> = (0..kk).filter(|&k| rc.nats[k] > 0.0).collect();
    let groups = vec![active; mm];
    let gamma: Vec<f64> = rc.nats.iter().map(|n| (n * (1.0 + MARGIN)).exp_m1()).collect();
    let pc = power_control(h, &groups, &gamma)?;
    let view = LinkView::new(h, Mode::Coordinated);
    let mut base = PrecoderSet::zeros_for(h, Mode::Coordinated);
    let d = base.streams();
    for m in 0..mm {
        for k in 0..kk {
            let (p, e) = &pc[m * kk + k];
            if *p > 0.0 {
                let blk = base.v_mut(m, k);
                blk.view_mut((0, 0), (e.nrows(), 1)).copy_from(&(e * c(p.sqrt(), 0.0)));
            }
        }
    }
    if d == 1 {
        return Ok(base);
    }
    // Fill the other columns with the next right singular directions.
    let mut eta = MARGIN;
    for _ in 0..20 {
        let mut v = base.clone();
        for m in 0..mm {
            for k in 0..kk {
                let p = pc[m * kk + k].0;
                if p == 0.0 {
                    continue;
                }
                let g = h.h(m, k, k);
                let (_, vecs) = eigh_desc(&(g.adjoint() * g));
                let blk = v.v_mut(m, k);
                let s = c((eta * p / (d - 1) as f64).sqrt(), 0.0);
                for i in 1..d {
                    for r in 0..blk.nrows() {
                        blk[(r, i)] = vecs[(r, i)] * s;
                    }
                }
            }
        }
        if meets_targets(&view, &v, rc, 0.0)? {
            return Ok(v);
        }
        eta *= 0.25;
    }
    Ok(base)
}

/// CoMP starting point from a coordinated solution: user k's composite
/// precoder carries `V[m][k]` in the rows of BS k and zeros elsewhere, so
/// rates and power are unchanged.
pub fn comp_initial_point(v_coord: &PrecoderSet, h: &ChannelState) -> Result<PrecoderSet> {
    if v_coord.mode != Mode::Coordinated {
        return Err(Error::Contract("CoMP warm start needs coordinated precoders".into()));
    }
    v_coord.check_against(h)?;
    let (rows, streams) = shape_for(h, Mode::Comp);
    let (nt, d) = (v_coord.rows(), v_coord.streams());
    if d > streams {
        return Err(Error::Dimension(format!(
            "{d} coordinated streams exceed {streams} CoMP streams"
        )));
    }
    let mut out = PrecoderSet::zeros(Mode::Comp, h.subcarriers(), h.users(), rows, streams);
    for m in 0..h.subcarriers() {
        for k in 0..h.users() {
            out.v_mut(m, k)
                .view_mut((k * nt, 0), (nt, d))
                .copy_from(v_coord.v(m, k));
        }
    }
    Ok(out)
}

/// Project precoders with any column count onto the row space of each direct
/// link and refactor them into the mode's stream count. Only `V V^H` of the
/// projected matrix is kept, factored by descending eigenpairs.
pub fn project_streams(wide: &[CMat], view: &LinkView) -> Result<PrecoderSet> {
    let (mm, kk) = (view.subcarriers(), view.users());
    if wide.len() != mm * kk {
        return Err(Error::Dimension(format!(
            "expected {} blocks, got {}",
            mm * kk,
            wide.len()
        )));
    }
    let (rows, d) = (view.tx_dim(), view.streams());
    let mut out = PrecoderSet::zeros(view.mode, mm, kk, rows, d);
    for m in 0..mm {
        for k in 0..kk {
            let vp = &wide[m * kk + k];
            if vp.nrows() != rows {
                return Err(Error::Dimension(format!(
                    "block has {} rows, expected {rows}",
                    vp.nrows()
                )));
            }
            let q = orth(&view.direct(m, k).adjoint());
            let vbar = &q * (q.adjoint() * vp);
            let (vals, vecs) = eigh_desc(&(&vbar * vbar.adjoint()));
            let blk = out.v_mut(m, k);
            for i in 0..d.min(vals.len()) {
                let s = c(vals[i].max(0.0).sqrt(), 0.0);
                for r in 0..rows {
                    blk[(r, i)] = vecs[(r, i)] * s;
                }
            }
        }
    }
    Ok(out)
}

/// Rates of `v` meet `rc` up to relative slack `rel`.
pub(crate) fn meets_targets(view: &LinkView, v: &PrecoderSet, rc: &RateConstraint, rel: f64) -> Result<bool> {
    let rates = metrics::user_rates(view, v, rc.bandwidth_hz)?;
    Ok(rates.iter().zip(&rc.rate_bps).all(|(r, mu)| *r >= mu * (1.0 - rel)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro2, max_abs};
    use crate::precoder::metrics::{per_bs_power, user_rates};
    use crate::precoder::testutil::{random_channel, random_matrix, random_precoders};
    use rand::{Rng, SeedableRng};

    fn targets<R: Rng>(r: &mut R, k: usize, lo: f64, hi: f64) -> RateConstraint {
        RateConstraint::from_nats((0..k).map(|_| r.random_range(lo..hi)).collect(), 1e6).unwrap()
    }

    #[test]
    fn zero_targets_give_zero_precoders() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let h = random_channel(&mut r, 3, 3, 2, 2);
        let rc = RateConstraint::from_nats(vec![0.0; 3], 1e6).unwrap();
        assert_eq!(feasible_init(&h, &rc).unwrap().power(), 0.0);
        assert_eq!(spread_init(&h, &rc).unwrap().power(), 0.0);
    }

    #[test]
    fn scalar_power_inverts_the_rate() {
        let h = ChannelState::from_fn(1, 1, 1, 1, |_, _, _| CMat::from_element(1, 1, c(0.0, 2.0))).unwrap();
        let rc = RateConstraint::from_nats(vec![0.7], 1.0).unwrap();
        let v = feasible_init(&h, &rc).unwrap();
        assert!((v.power() - 0.7f64.exp_m1() / 4.0).abs() < 1e-14);
    }

    #[test]
    fn disjoint_construction_meets_targets_exactly() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let h = random_channel(&mut r, 3, 3, 2, 2);
            let rc = targets(&mut r, 3, 0.1, 1.0);
            let v = feasible_init(&h, &rc).unwrap();
            let rates = user_rates(&LinkView::new(&h, Mode::Coordinated), &v, rc.bandwidth_hz).unwrap();
            for (got, want) in rates.iter().zip(&rc.rate_bps) {
                assert!(*got >= want * (1.0 - 1e-9));
                assert!(*got <= want * (1.0 + 1e-9));
            }
            // user k only uses subcarrier k
            for m in 0..3 {
                for k in 0..3 {
                    assert_eq!(fro2(v.v(m, k)) == 0.0, m != k);
                }
            }
        }
    }

    #[test]
    fn disjoint_construction_needs_enough_subcarriers() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let h = random_channel(&mut r, 2, 3, 2, 2);
        let rc = targets(&mut r, 3, 0.1, 1.0);
        assert!(matches!(feasible_init(&h, &rc), Err(Error::Unavailable(_))));
        let v = shared_subcarrier_init(&h, &RateConstraint::from_nats(vec![0.05; 3], 1e6).unwrap()).unwrap();
        assert!(meets_targets(
            &LinkView::new(&h, Mode::Coordinated),
            &v,
            &RateConstraint::from_nats(vec![0.05; 3], 1e6).unwrap(),
            1e-9
        )
        .unwrap());
    }

    #[test]
    fn dead_direct_link_is_infeasible() {
        let h = ChannelState::from_fn(2, 2, 2, 2, |m, k, n| {
            if m == 1 && k == 0 && n == 0 {
                CMat::zeros(2, 2)
            } else {
                crate::linalg::identity(2)
            }
        })
        .unwrap();
        let rc = RateConstraint::from_nats(vec![0.5; 2], 1.0).unwrap();
        assert!(matches!(feasible_init(&h, &rc), Err(Error::Infeasible(_))));
        assert!(matches!(spread_init(&h, &rc), Err(Error::Infeasible(_))));
    }

    #[test]
    fn spread_start_is_feasible_with_full_support() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut built = 0;
        for _ in 0..30 {
            let h = random_channel(&mut r, 3, 3, 2, 2);
            let rc = targets(&mut r, 3, 0.1, 1.0);
            let Ok(v) = spread_init(&h, &rc) else { continue };
            built += 1;
            assert!(meets_targets(&LinkView::new(&h, Mode::Coordinated), &v, &rc, 0.0).unwrap());
            for b in v.blocks() {
                assert!(b.column_iter().all(|col| col.norm_squared() > 0.0));
            }
        }
        assert!(built > 20);
    }

    #[test]
    fn comp_embedding_places_blocks_and_keeps_rates() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = random_channel(&mut r, 2, 2, 2, 2);
        let v = random_precoders(&mut r, &h, Mode::Coordinated, 1.0);
        let vc = comp_initial_point(&v, &h).unwrap();
        assert_eq!((vc.rows(), vc.streams()), (4, 2));
        for m in 0..2 {
            assert_eq!(vc.v(m, 0).view((0, 0), (2, 2)), v.v(m, 0).view((0, 0), (2, 2)));
            assert_eq!(max_abs(&vc.v(m, 0).rows(2, 2).into_owned()), 0.0);
            assert_eq!(vc.v(m, 1).rows(2, 2), v.v(m, 1).rows(0, 2));
            assert_eq!(max_abs(&vc.v(m, 1).rows(0, 2).into_owned()), 0.0);
        }
        let rc = user_rates(&LinkView::new(&h, Mode::Coordinated), &v, 1.0).unwrap();
        let rp = user_rates(&LinkView::new(&h, Mode::Comp), &vc, 1.0).unwrap();
        for (a, b) in rc.iter().zip(&rp) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        assert!((vc.power() - v.power()).abs() <= 1e-12 * v.power());
        assert_eq!(per_bs_power(&vc, 2), per_bs_power(&v, 2));
    }

    #[test]
    fn projection_of_in_span_precoders_is_idempotent() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let h = random_channel(&mut r, 2, 2, 2, 3);
        let view = LinkView::new(&h, Mode::Coordinated);
        let once = project_streams(random_precoders(&mut r, &h, Mode::Coordinated, 1.0).blocks(), &view).unwrap();
        let twice = project_streams(once.blocks(), &view).unwrap();
        for (a, b) in once.blocks().iter().zip(twice.blocks()) {
            assert!(max_abs(&(a * a.adjoint() - b * b.adjoint())) < 1e-12);
        }
        let r1 = user_rates(&view, &once, 1.0).unwrap();
        let r2 = user_rates(&view, &twice, 1.0).unwrap();
        assert!(r1.iter().zip(&r2).all(|(a, b)| (a - b).abs() < 1e-12));
        let zero = project_streams(&vec![CMat::zeros(3, 4); 4], &view).unwrap();
        assert_eq!(zero.power(), 0.0);
    }

    #[test]
    fn projection_keeps_own_signal_and_never_adds_power() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            // N_T > N_R so the projection is not the identity
            let h = random_channel(&mut r, 1, 2, 1, 3);
            let view = LinkView::new(&h, Mode::Coordinated);
            let wide: Vec<CMat> = (0..2).map(|_| random_matrix(&mut r, 3, 2, 1.0)).collect();
            let out = project_streams(&wide, &view).unwrap();
            assert_eq!(out.streams(), 1);
            for k in 0..2 {
                let g = h.h(0, k, k);
                let before = g * &wide[k] * wide[k].adjoint() * g.adjoint();
                let after = g * out.v(0, k) * out.v(0, k).adjoint() * g.adjoint();
                assert!(max_abs(&(before - after)) < 1e-10);
                assert!(fro2(out.v(0, k)) <= fro2(&wide[k]) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn single_user_projection_does_not_lose_rate() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let h = random_channel(&mut r, 2, 1, 2, 4);
            let view = LinkView::new(&h, Mode::Coordinated);
            let wide: Vec<CMat> = (0..2).map(|_| random_matrix(&mut r, 4, 4, 1.0)).collect();
            let before = PrecoderSet::from_blocks(Mode::Coordinated, 2, 1, wide.clone()).unwrap();
            let out = project_streams(&wide, &view).unwrap();
            let r0 = user_rates(&view, &before, 1.0).unwrap()[0];
            let r1 = user_rates(&view, &out, 1.0).unwrap()[0];
            assert!(r1 >= r0 * (1.0 - 1e-12));
            assert!(out.power() <= before.power());
        }
    }

    #[test]
    fn projection_is_exact_when_links_have_full_row_space() {
        // N_T <= N_R: the direct link's row space is everything, so rates of
        // every user survive the refactoring unchanged.
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let h = random_channel(&mut r, 1, 3, 2, 2);
            let view = LinkView::new(&h, Mode::Coordinated);
            let wide: Vec<CMat> = (0..3).map(|_| random_matrix(&mut r, 2, 4, 1.0)).collect();
            let before = PrecoderSet::from_blocks(Mode::Coordinated, 1, 3, wide.clone()).unwrap();
            let out = project_streams(&wide, &view).unwrap();
            let r0 = user_rates(&view, &before, 1.0).unwrap();
            let r1 = user_rates(&view, &out, 1.0).unwrap();
            assert!(r0.iter().zip(&r1).all(|(a, b)| (a - b).abs() <= 1e-10 * a.max(1.0)));
            for (a, b) in per_bs_power(&before, 2).iter().zip(per_bs_power(&out, 2)) {
                assert!(b <= a * (1.0 + 1e-12));
            }
        }
    }
}
