//! Lagrange dual of the per-subcarrier weighted-MSE power problem with U and
//! W held fixed.
//!
//! For multipliers λ the Lagrangian separates over (m, j) and its minimizer is
//! `V_j = (I + sum_i (λ_i/M) B_{m,i,j})^{-1} (λ_j/M) b_{m,j}` with
//! `b_{m,k} = G_{m,k,k}^H U W` and `B_{m,i,j} = G_{m,i,j}^H U_i W_i U_i^H G_{m,i,j}`.
//! The dual function is concave and smooth, so besides the plain projected
//! subgradient ascent we provide a projected Newton method that reaches
//! complementary slackness to near machine precision.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{fro2, hermitize, hpd_logdet, hpd_solve, identity, re_inner, trace_re, CMat};

use super::{LinkView, Mode, PrecoderSet, RateConstraint, Receivers};

/// Multipliers above this mean the constraints cannot be met for the given
/// U and W.
const LAMBDA_CAP: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualMethod {
    /// Projected Newton ascent with backtracking.
    Newton,
    /// Projected subgradient ascent with step `step0 / (t + 1)`.
    Subgradient { step0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOptions {
    pub method: DualMethod,
    /// Tolerance on the projected-gradient residual (nats).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            method: DualMethod::Newton,
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    pub v: PrecoderSet,
    /// Dual function value `J(λ)`.
    pub value: f64,
    /// Constraint values `c_k(V*(λ))`, which are also the dual gradient.
    pub constraints: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The inner problem for one (U, W) pair.
#[derive(Debug, Clone)]
pub struct DualProblem {
    mode: Mode,
    subcarriers: usize,
    users: usize,
    tx_dim: usize,
    streams: usize,
    b: Vec<CMat>,
    big_b: Vec<CMat>,
    offset: Vec<f64>,
    active: Vec<bool>,
}

struct Eval {
    a: Vec<CMat>,
    v: Vec<CMat>,
    c: Vec<f64>,
    value: f64,
}

impl DualProblem {
    pub fn new(view: &LinkView, rx: &Receivers, rc: &RateConstraint) -> Result<Self> {
        let (mm, kk) = (view.subcarriers(), view.users());
        if rc.users() != kk {
            return Err(Error::Dimension(format!("{} rate targets for {kk} users", rc.users())));
        }
        if rx.u.len() != mm * kk || rx.w.len() != mm * kk {
            return Err(Error::Dimension("receiver set does not match the channel".into()));
        }
        let d = view.streams();
        let mut b = Vec::with_capacity(mm * kk);
        let mut big_b = Vec::with_capacity(mm * kk * kk);
        let mut acc = vec![0.0; kk];
        for m in 0..mm {
            for k in 0..kk {
                let u = rx.u(kk, m, k);
                let w = rx.w(kk, m, k);
                if u.shape() != (view.rx(), d) || w.shape() != (d, d) {
                    return Err(Error::Dimension("receiver or weight has the wrong shape".into()));
                }
                b.push(view.direct(m, k).adjoint() * u * w);
                let uwu = u * w * u.adjoint();
                for j in 0..kk {
                    let g = view.link(m, k, j);
                    let mut bij = g.adjoint() * &uwu * g;
                    hermitize(&mut bij);
                    big_b.push(bij);
                }
                acc[k] += trace_re(w) + trace_re(&(w * u.adjoint() * u)) - hpd_logdet(w)?;
            }
        }
        let offset = (0..kk).map(|k| acc[k] / mm as f64 - d as f64 + rc.nats[k]).collect();
        let active = rc.nats.iter().map(|&n| n > 0.0).collect();
        Ok(DualProblem {
            mode: view.mode,
            subcarriers: mm,
            users: kk,
            tx_dim: view.tx_dim(),
            streams: d,
            b,
            big_b,
            offset,
            active,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    fn bmat(&self, m: usize, i: usize, j: usize) -> &CMat {
        &self.big_b[(m * self.users + i) * self.users + j]
    }

    fn bvec(&self, m: usize, k: usize) -> &CMat {
        &self.b[m * self.users + k]
    }

    fn check(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.users {
            return Err(Error::Dimension(format!(
                "{} multipliers for {} users",
                lambda.len(),
                self.users
            )));
        }
        if lambda.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::Domain("multipliers must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// `c_k(V)`: the weighted-MSE constraint of every user for arbitrary V.
    pub fn constraints(&self, v: &PrecoderSet) -> Vec<f64> {
        self.constraints_of(v.blocks())
    }

    fn constraints_of(&self, v: &[CMat]) -> Vec<f64> {
        let (mm, kk) = (self.subcarriers, self.users);
        let mut out = self.offset.clone();
        for (k, ck) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for m in 0..mm {
                acc -= 2.0 * re_inner(self.bvec(m, k), &v[m * kk + k]);
                for j in 0..kk {
                    let vj = &v[m * kk + j];
                    acc += re_inner(vj, &(self.bmat(m, k, j) * vj));
                }
            }
            *ck += acc / mm as f64;
        }
        out
    }

    fn eval(&self, lambda: &[f64]) -> Eval {
        let (mm, kk) = (self.subcarriers, self.users);
        let mf = mm as f64;
        let mut a = Vec::with_capacity(mm * kk);
        let mut v = Vec::with_capacity(mm * kk);
        for m in 0..mm {
            for j in 0..kk {
                let mut aj = identity(self.tx_dim);
                for (i, &li) in lambda.iter().enumerate() {
                    if li > 0.0 {
                        aj += self.bmat(m, i, j) * crate::linalg::c(li / mf, 0.0);
                    }
                }
                hermitize(&mut aj);
                let vj = if lambda[j] > 0.0 {
                    let rhs = self.bvec(m, j) * crate::linalg::c(lambda[j] / mf, 0.0);
                    hpd_solve(&aj, &rhs).expect("I + PSD is positive definite")
                } else {
                    CMat::zeros(self.tx_dim, self.streams)
                };
                a.push(aj);
                v.push(vj);
            }
        }
        let c = self.constraints_of(&v);
        let power: f64 = v.iter().map(fro2).sum();
        let value = power + lambda.iter().zip(&c).map(|(l, ck)| l * ck).sum::<f64>();
        Eval { a, v, c, value }
    }

    /// Stationarity and slackness residuals of `(v, λ)` when this problem was
    /// built from the receivers at `v`: `max |A_j V_j - (λ_j/M) b_j|` and
    /// `max_k λ_k |c_k(V)|`, both unnormalized.
    pub(crate) fn kkt_parts(&self, v: &PrecoderSet, lambda: &[f64]) -> (f64, f64) {
        let (mm, kk) = (self.subcarriers, self.users);
        let mf = mm as f64;
        let mut stat: f64 = 0.0;
        for m in 0..mm {
            for j in 0..kk {
                let vj = v.v(m, j);
                let mut grad = vj.clone();
                for (i, &li) in lambda.iter().enumerate() {
                    if li > 0.0 {
                        grad += self.bmat(m, i, j) * vj * crate::linalg::c(li / mf, 0.0);
                    }
                }
                grad -= self.bvec(m, j) * crate::linalg::c(lambda[j] / mf, 0.0);
                stat = stat.max(crate::linalg::max_abs(&grad));
            }
        }
        let c = self.constraints(v);
        let slack = lambda.iter().zip(&c).map(|(l, c)| l * c.abs()).fold(0.0, f64::max);
        (stat, slack)
    }

    /// Closed-form Lagrangian minimizer `V*(λ)`.
    pub fn precoders(&self, lambda: &[f64]) -> Result<PrecoderSet> {
        self.check(lambda)?;
        let e = self.eval(lambda);
        PrecoderSet::from_blocks(self.mode, self.subcarriers, self.users, e.v)
    }

    /// Dual function `J(λ)`.
    pub fn value(&self, lambda: &[f64]) -> Result<f64> {
        self.check(lambda)?;
        Ok(self.eval(lambda).value)
    }

    /// Subgradient (in fact the gradient) of J at λ.
    pub fn subgradient(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.check(lambda)?;
        Ok(self.eval(lambda).c)
    }

    /// Hessian of J at λ (negative semidefinite).
    fn hessian(&self, e: &Eval) -> DMatrix<f64> {
        let (mm, kk) = (self.subcarriers, self.users);
        let mf = mm as f64;
        let mut hess = DMatrix::zeros(kk, kk);
        for m in 0..mm {
            // D[j][i] = dV_j / dλ_i
            let mut dv = vec![vec![CMat::zeros(0, 0); kk]; kk];
            for j in 0..kk {
                let vj = &e.v[m * kk + j];
                for (i, slot) in dv[j].iter_mut().enumerate() {
                    let mut rhs = -(self.bmat(m, i, j) * vj);
                    if i == j {
                        rhs += self.bvec(m, j);
                    }
                    rhs /= crate::linalg::c(mf, 0.0);
                    *slot = hpd_solve(&e.a[m * kk + j], &rhs).expect("I + PSD is positive definite");
                }
            }
            for k in 0..kk {
                for j in 0..kk {
                    let mut t = self.bmat(m, k, j) * &e.v[m * kk + j];
                    if j == k {
                        t -= self.bvec(m, k);
                    }
                    for i in 0..kk {
                        hess[(k, i)] += 2.0 / mf * re_inner(&dv[j][i], &t);
                    }
                }
            }
        }
        (&hess + hess.transpose()) * 0.5
    }

    fn residual(&self, lambda: &[f64], g: &[f64]) -> f64 {
        let mut r: f64 = 0.0;
        for k in 0..self.users {
            if !self.active[k] {
                continue;
            }
            r = r.max(if lambda[k] > 0.0 { g[k].abs() } else { g[k].max(0.0) });
        }
        r
    }

    fn finish(&self, lambda: Vec<f64>, e: Eval, iterations: usize, tol: f64) -> Result<DualSolution> {
        let residual = self.residual(&lambda, &e.c);
        let v = PrecoderSet::from_blocks(self.mode, self.subcarriers, self.users, e.v)?;
        Ok(DualSolution {
            converged: residual <= tol,
            lambda,
            v,
            value: e.value,
            constraints: e.c,
            residual,
            iterations,
        })
    }

    /// Maximize J over λ ≥ 0.
    pub fn solve(&self, opts: &DualOptions, warm: Option<&[f64]>) -> Result<DualSolution> {
        let mut lambda: Vec<f64> = match warm {
            Some(w) => {
                self.check(w)?;
                w.to_vec()
            }
            None => vec![0.0; self.users],
        };
        for (l, &a) in lambda.iter_mut().zip(&self.active) {
            if !a {
                *l = 0.0;
            }
        }
        match opts.method {
            DualMethod::Newton => self.solve_newton(lambda, opts),
            DualMethod::Subgradient { step0 } => self.solve_subgradient(lambda, step0, opts),
        }
    }

    fn solve_newton(&self, mut lambda: Vec<f64>, opts: &DualOptions) -> Result<DualSolution> {
        let kk = self.users;
        let mut e = self.eval(&lambda);
        for it in 0..opts.max_iter {
            let res = self.residual(&lambda, &e.c);
            if res <= opts.tol {
                return self.finish(lambda, e, it, opts.tol);
            }
            if lambda.iter().any(|&l| l > LAMBDA_CAP) {
                return Err(Error::Infeasible(
                    "rate targets unreachable for the current receivers (multipliers diverge)".into(),
                ));
            }
            let free: Vec<usize> = (0..kk)
                .filter(|&k| self.active[k] && (lambda[k] > 0.0 || e.c[k] > 0.0))
                .collect();
            let hess = self.hessian(&e);
            let dir = newton_direction(&hess, &e.c, &free);

            let mut accepted = None;
            if let Some(dir) = dir {
                let mut t = 1.0;
                for _ in 0..60 {
                    let trial: Vec<f64> = (0..kk).map(|k| (lambda[k] + t * dir[k]).max(0.0)).collect();
                    let et = self.eval(&trial);
                    let ascent: f64 = (0..kk).map(|k| e.c[k] * (trial[k] - lambda[k])).sum();
                    let gain = et.value - e.value;
                    let tol_j = 1e-12 * (1.0 + e.value.abs());
                    if (gain >= 1e-4 * ascent && gain >= -tol_j)
                        || (self.residual(&trial, &et.c) <= 0.5 * res && gain >= -tol_j)
                    {
                        accepted = Some((trial, et));
                        break;
                    }
                    t *= 0.5;
                }
            }
            let (trial, et) = match accepted {
                Some(x) => x,
                None => match self.gradient_step(&lambda, &e) {
                    Some(x) => x,
                    // No further progress is representable.
                    None => return self.finish(lambda, e, it, opts.tol),
                },
            };
            lambda = trial;
            e = et;
        }
        self.finish(lambda, e, opts.max_iter, opts.tol)
    }

    /// Projected gradient ascent step with backtracking.
    fn gradient_step(&self, lambda: &[f64], e: &Eval) -> Option<(Vec<f64>, Eval)> {
        let kk = self.users;
        let gnorm2: f64 = e.c.iter().map(|g| g * g).sum();
        let scale = lambda.iter().cloned().fold(1.0, f64::max);
        let mut t = scale / gnorm2.sqrt().max(1e-300);
        for _ in 0..80 {
            let trial: Vec<f64> = (0..kk)
                .map(|k| {
                    if self.active[k] {
                        (lambda[k] + t * e.c[k]).max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let et = self.eval(&trial);
            if et.value > e.value {
                return Some((trial, et));
            }
            t *= 0.5;
        }
        None
    }

    fn solve_subgradient(&self, mut lambda: Vec<f64>, step0: f64, opts: &DualOptions) -> Result<DualSolution> {
        let kk = self.users;
        let mut best = (lambda.clone(), self.eval(&lambda));
        for it in 0..opts.max_iter {
            let e = self.eval(&lambda);
            if e.value > best.1.value {
                best = (lambda.clone(), e);
            }
            let e = &best.1;
            if self.residual(&best.0, &e.c) <= opts.tol {
                let (l, e) = best;
                return self.finish(l, e, it, opts.tol);
            }
            let g = self.eval(&lambda).c;
            let step = step0 / (it as f64 + 1.0);
            for k in 0..kk {
                if self.active[k] {
                    lambda[k] = (lambda[k] + step * g[k]).max(0.0);
                }
            }
        }
        let (l, e) = best;
        self.finish(l, e, opts.max_iter, opts.tol)
    }
}

fn newton_direction(hess: &DMatrix<f64>, g: &[f64], free: &[usize]) -> Option<Vec<f64>> {
    let n = free.len();
    if n == 0 {
        return None;
    }
    let neg = DMatrix::from_fn(n, n, |a, b| -hess[(free[a], free[b])]);
    let diag_max = (0..n).map(|a| neg[(a, a)].abs()).fold(0.0, f64::max);
    let rhs = DVector::from_iterator(n, free.iter().map(|&k| g[k]));
    let mut ridge = 1e-14 * diag_max.max(1e-300);
    for _ in 0..40 {
        let mut reg = neg.clone();
        for a in 0..n {
            reg[(a, a)] += ridge;
        }
        if let Some(ch) = reg.cholesky() {
            let step = ch.solve(&rhs);
            if step.iter().all(|x| x.is_finite()) {
                let mut out = vec![0.0; g.len()];
                for (a, &k) in free.iter().enumerate() {
                    out[k] = step[a];
                }
                return Some(out);
            }
        }
        ridge *= 100.0;
    }
    None
}

/// `V*(λ)` for the receivers in `rx`.
pub fn dual_inner_precoders(
    view: &LinkView,
    rx: &Receivers,
    rc: &RateConstraint,
    lambda: &[f64],
) -> Result<PrecoderSet> {
    DualProblem::new(view, rx, rc)?.precoders(lambda)
}

/// Dual subgradient `c(V*(λ))`.
pub fn dual_subgradient(view: &LinkView, rx: &Receivers, rc: &RateConstraint, lambda: &[f64]) -> Result<Vec<f64>> {
    DualProblem::new(view, rx, rc)?.subgradient(lambda)
}

/// Solve the dual problem for fixed receivers, optionally warm-started.
pub fn solve_dual(
    view: &LinkView,
    rx: &Receivers,
    rc: &RateConstraint,
    opts: &DualOptions,
    warm: Option<&[f64]>,
) -> Result<DualSolution> {
    DualProblem::new(view, rx, rc)?.solve(opts, warm)
}
