//! Sum-power precoding under rate constraints by alternating MMSE receiver,
//! MSE weight and dual precoder updates.

use std::io::Write;

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::export::fmt_num;
use crate::linalg::{max_abs, CMat};

use super::dual::{DualOptions, DualProblem};
use super::init::{feasible_init, meets_targets, shared_subcarrier_init, spread_init};
use super::metrics::{user_rates, Receivers};
use super::{require_feasible_csi, LinkView, Mode, PrecoderSet, RateConstraint};

/// Slack allowed on the starting point's rates.
const INIT_RATE_SLACK: f64 = 1e-9;

/// How coordinated solves start when no initial point is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitRule {
    /// [`spread_init`], falling back to `Disjoint` when its power control is
    /// infeasible.
    #[default]
    Spread,
    /// [`feasible_init`] (one subcarrier per user), or
    /// [`shared_subcarrier_init`] when K > M.
    Disjoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpOptions {
    pub init: InitRule,
    /// Stop once the relative power change falls to this level.
    pub tol: f64,
    pub max_iter: usize,
    pub dual: DualOptions,
}

impl Default for SpOptions {
    fn default() -> Self {
        SpOptions {
            init: InitRule::default(),
            tol: 1e-9,
            max_iter: 1000,
            dual: DualOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub v: PrecoderSet,
    /// MMSE receivers and weights at `v`, indexed `m * K + k`.
    pub u: Vec<CMat>,
    pub w: Vec<CMat>,
    pub lambda: Vec<f64>,
    pub iteration: usize,
    /// Sum power of the starting point followed by every iterate.
    pub objective_trace: Vec<f64>,
    /// KKT residual after every iteration.
    pub kkt_trace: Vec<f64>,
    /// Achieved rates in bit/s.
    pub rates: Vec<f64>,
    pub converged: bool,
}

impl WmmseState {
    pub fn power(&self) -> f64 {
        self.v.power()
    }

    /// CSV with columns `iteration,objective,kkt_residual`; iteration 0 is the
    /// starting point and has no residual.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iteration", "objective", "kkt_residual"])?;
        for (i, p) in self.objective_trace.iter().enumerate() {
            let kkt = if i == 0 {
                String::new()
            } else {
                fmt_num(self.kkt_trace[i - 1])
            };
            wtr.write_record([i.to_string(), fmt_num(*p), kkt])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `max |V + Σ(λ_i/M) B V - (λ_k/M) b|` relative to the largest precoder entry.
    pub stationarity: f64,
    /// `max λ_k |μ̄_k - R̄_k|` relative to the sum power.
    pub slackness: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.slackness)
    }
}

/// KKT residual of `(v, λ)` with receivers and weights taken at `v`.
pub fn kkt_residual(view: &LinkView, v: &PrecoderSet, rc: &RateConstraint, lambda: &[f64]) -> Result<KktResidual> {
    let rx = Receivers::compute(view, v)?;
    let prob = DualProblem::new(view, &rx, rc)?;
    kkt_from(&prob, v, lambda)
}

fn kkt_from(prob: &DualProblem, v: &PrecoderSet, lambda: &[f64]) -> Result<KktResidual> {
    if lambda.len() != prob.users() {
        return Err(Error::Dimension(format!(
            "{} multipliers for {} users",
            lambda.len(),
            prob.users()
        )));
    }
    let (stat, slack) = prob.kkt_parts(v, lambda);
    let vmax = v.blocks().iter().map(max_abs).fold(0.0, f64::max);
    let power = v.power();
    Ok(KktResidual {
        stationarity: if vmax > 0.0 { stat / vmax } else { stat },
        slackness: if power > 0.0 { slack / power } else { slack },
    })
}

fn disjoint_init(h: &ChannelState, rc: &RateConstraint) -> Result<PrecoderSet> {
    if h.users() <= h.subcarriers() {
        feasible_init(h, rc)
    } else {
        shared_subcarrier_init(h, rc)
    }
}

/// Run the precoder iteration. Without `init`, coordinated mode starts according to
/// `opts.init`; CoMP mode must be given a starting point.
///
/// The iteration never revives a (subcarrier, user) pair or a stream
/// direction that is switched off in the starting point, which is why the
/// default start uses every subcarrier and stream.
pub fn algorithm_sp(
    h: &ChannelState,
    rc: &RateConstraint,
    mode: Mode,
    init: Option<&PrecoderSet>,
    opts: &SpOptions,
) -> Result<WmmseState> {
    require_feasible_csi(h)?;
    if rc.users() != h.users() {
        return Err(Error::Dimension(format!(
            "{} rate targets for {} users",
            rc.users(),
            h.users()
        )));
    }
    let mut v = match (init, mode) {
        (Some(v0), _) => {
            if v0.mode != mode {
                return Err(Error::Contract(format!(
                    "{} starting point for a {} solve",
                    v0.mode.name(),
                    mode.name()
                )));
            }
            v0.check_against(h)?;
            v0.clone()
        }
        (None, Mode::Coordinated) => match opts.init {
            InitRule::Spread => match spread_init(h, rc) {
                Ok(v0) => v0,
                Err(Error::Infeasible(_)) => disjoint_init(h, rc)?,
                Err(e) => return Err(e),
            },
            InitRule::Disjoint => disjoint_init(h, rc)?,
        },
        (None, Mode::Comp) => {
            return Err(Error::Contract(
                "CoMP solves need a warm start from the coordinated solution".into(),
            ))
        }
    };
    let view = LinkView::new(h, mode);
    if !meets_targets(&view, &v, rc, INIT_RATE_SLACK)? {
        return Err(Error::Infeasible(
            "starting point does not meet the rate targets".into(),
        ));
    }

    let mut trace = vec![v.power()];
    let mut kkt_trace = Vec::new();
    let mut lambda: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut iteration = 0;
    let mut rx = Receivers::compute(&view, &v)?;
    let mut prob = DualProblem::new(&view, &rx, rc)?;
    while iteration < opts.max_iter {
        iteration += 1;
        let sol = prob.solve(&opts.dual, lambda.as_deref())?;
        let prev = *trace.last().expect("trace starts non-empty");
        v = sol.v;
        let p = v.power();
        trace.push(p);
        rx = Receivers::compute(&view, &v)?;
        prob = DualProblem::new(&view, &rx, rc)?;
        kkt_trace.push(kkt_from(&prob, &v, &sol.lambda)?.max());
        lambda = Some(sol.lambda);
        if (prev - p).abs() <= opts.tol * prev.max(f64::MIN_POSITIVE) || p == 0.0 {
            converged = true;
            break;
        }
    }
    let rates = user_rates(&view, &v, rc.bandwidth_hz)?;
    Ok(WmmseState {
        lambda: lambda.unwrap_or_else(|| vec![0.0; h.users()]),
        v,
        u: rx.u,
        w: rx.w,
        iteration,
        objective_trace: trace,
        kkt_trace,
        rates,
        converged,
    })
}
