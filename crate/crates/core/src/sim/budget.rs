use serde::{Deserialize, Serialize};

use super::{aggregate_metrics, run_scheme, EpisodeConfig, EpisodeOutput, Scheme, TopologyCase};
use crate::allocator::AllocatorConfig;
use crate::error::{Error, Result};
use crate::params::SystemParams;

/// Accepted relative miss of the capacity target.
pub const BUDGET_REL_TOL: f64 = 0.01;
/// The search stops early once inside this fraction of the target.
const BUDGET_AIM: f64 = 0.5 * BUDGET_REL_TOL;
const EXPANSION_FACTOR_LN: f64 = 1.3862943611198906; // ln 4
const MAX_EXPANSIONS: usize = 30;
const MAX_REFINEMENTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetEvaluation {
    pub multiplier: f64,
    pub achieved_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCalibration {
    pub scheme: Scheme,
    pub target_bps: f64,
    pub multiplier: f64,
    pub achieved_bps: f64,
    pub evaluations: Vec<BudgetEvaluation>,
    /// Episodes of the accepted multiplier.
    #[serde(skip)]
    pub outputs: Vec<EpisodeOutput>,
}

struct Search<'a> {
    cases: &'a [TopologyCase],
    scheme: Scheme,
    params: &'a SystemParams,
    cfg: &'a EpisodeConfig,
    alloc_cfg: &'a AllocatorConfig,
    record_trace: bool,
    target: f64,
    evaluations: Vec<BudgetEvaluation>,
    best: Option<(f64, f64, Vec<EpisodeOutput>)>,
}

impl Search<'_> {
    /// Achieved minus target at `m = e^x`.
    fn eval(&mut self, x: f64) -> Result<f64> {
        let m = x.exp();
        let outputs = run_scheme(self.cases, self.scheme, self.params, self.cfg, self.alloc_cfg, m, self.record_trace)?;
        let runs: Vec<_> = outputs.iter().map(|o| o.metrics.clone()).collect();
        let achieved = aggregate_metrics(&runs)?.mean.avg_total_capacity_bps;
        log::debug!("{}: multiplier {m:e} -> {:.4} Mbps", self.scheme, achieved / 1e6);
        self.evaluations.push(BudgetEvaluation {
            multiplier: m,
            achieved_bps: achieved,
        });
        let miss = achieved - self.target;
        if self.best.as_ref().is_none_or(|(_, b, _)| miss.abs() < (b - self.target).abs()) {
            self.best = Some((m, achieved, outputs));
        }
        Ok(miss)
    }

    fn done(&self, miss: f64) -> bool {
        miss.abs() <= BUDGET_AIM * self.target
    }
}

/// Finds a common factor on all `γ_k` so the topology-averaged total
/// capacity matches `target_bps` within [`BUDGET_REL_TOL`].
///
/// Geometric bracketing from 1 in steps of 4, then Illinois regula falsi
/// on `ln(multiplier)`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_price_to_budget(
    cases: &[TopologyCase],
    scheme: Scheme,
    params: &SystemParams,
    cfg: &EpisodeConfig,
    alloc_cfg: &AllocatorConfig,
    target_bps: f64,
    record_trace: bool,
) -> Result<BudgetCalibration> {
    if !(target_bps > 0.0 && target_bps.is_finite()) {
        return Err(Error::config("episode.target_total_capacity_bps", "must be > 0"));
    }
    let mut s = Search {
        cases,
        scheme,
        params,
        cfg,
        alloc_cfg,
        record_trace,
        target: target_bps,
        evaluations: Vec::new(),
        best: None,
    };

    let mut x0 = 0.0;
    let mut f0 = s.eval(x0)?;
    if !s.done(f0) {
        // f decreases in x: too much capacity -> raise prices.
        let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
        let mut bracket = None;
        for _ in 0..MAX_EXPANSIONS {
            let x1 = x0 + dir * EXPANSION_FACTOR_LN;
            let f1 = s.eval(x1)?;
            if s.done(f1) || f1.signum() != f0.signum() {
                bracket = Some((x0, f0, x1, f1));
                break;
            }
            x0 = x1;
            f0 = f1;
        }
        let Some((xa, fa, xb, fb)) = bracket else {
            return Err(unreachable_target(&s));
        };
        if !s.done(fb) {
            refine(&mut s, xa, fa, xb, fb)?;
        }
    }

    let (multiplier, achieved_bps, outputs) = s.best.take().expect("evaluated at least once");
    if (achieved_bps - target_bps).abs() > BUDGET_REL_TOL * target_bps {
        return Err(unreachable_target(&s));
    }
    Ok(BudgetCalibration {
        scheme,
        target_bps,
        multiplier,
        achieved_bps,
        evaluations: s.evaluations,
        outputs,
    })
}

fn refine(s: &mut Search, xa: f64, fa: f64, xb: f64, fb: f64) -> Result<()> {
    let (mut lo, mut f_lo, mut hi, mut f_hi) = if xa < xb { (xa, fa, xb, fb) } else { (xb, fb, xa, fa) };
    let mut side = 0i8;
    for _ in 0..MAX_REFINEMENTS {
        let width = hi - lo;
        if width < 1e-9 {
            break;
        }
        let mut x = lo - f_lo * width / (f_hi - f_lo);
        if !(x > lo + 1e-3 * width && x < hi - 1e-3 * width) {
            x = 0.5 * (lo + hi);
        }
        let f = s.eval(x)?;
        if s.done(f) {
            break;
        }
        if f.signum() == f_lo.signum() {
            lo = x;
            f_lo = f;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            f_hi = f;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(())
}

fn unreachable_target(s: &Search) -> Error {
    let lo = s.evaluations.iter().map(|e| e.achieved_bps).fold(f64::INFINITY, f64::min);
    let hi = s.evaluations.iter().map(|e| e.achieved_bps).fold(f64::NEG_INFINITY, f64::max);
    Error::Budget(format!(
        "{}: target {:.3} Mbps not reached within 1%; achieved range [{:.3}, {:.3}] Mbps over {} evaluations",
        s.scheme,
        s.target / 1e6,
        lo / 1e6,
        hi / 1e6,
        s.evaluations.len()
    ))
}
