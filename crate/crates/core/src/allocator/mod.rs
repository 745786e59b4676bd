//! Per-slot fronthaul allocation.
//!
//! [`allocate_delay_aware`] runs the iterative best-response allocator with
//! weights from the approximate priority gradient; the two baselines reuse
//! the same iteration with QSI-blind unit weights
//! ([`allocate_throughput_optimal`]) or raw backlogs
//! ([`allocate_queue_weighted`]).

mod local;
mod probe;
pub mod reference;

use serde::{Deserialize, Serialize};

use crate::channel::CsiSample;
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::phy::{user_rates, FronthaulAlloc, DEFAULT_C_MAX};
use crate::priority::{v_tilde_gradient_with, PerFlowPriority};

pub use local::{kkt_residual, local_capacity_update, local_update_terms, marginal_price_pi, LocalUpdateTerms, StageView};
pub use probe::{convexity_probe, scale_cross_links, ConvexityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// Every `C_k^{(n+1)}` computed from `C^{(n)}`.
    Jacobi,
    /// Updates applied in place, flow by flow.
    GaussSeidel,
}

/// How a flow's capacity responds to the others within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestResponse {
    /// Closed-form maximizer with the prices `π_ik` frozen at the previous
    /// iterate. Can cycle between `c_max` and an interior point when a
    /// flow's prices exceed `γ_k` only at its old capacity.
    Linearized,
    /// Maximizer of the full objective along `C_k`, the prices moving with
    /// `C_k`. Same fixed points as `Linearized`.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocatorConfig {
    pub convergence_tol: f64,
    pub max_iters: usize,
    /// Stand-in for `C = 0` inside `1/(2^C − 1)` while iterating.
    pub c_floor: f64,
    pub c_max: f64,
    pub order: UpdateOrder,
    pub best_response: BestResponse,
    /// Leading sweeps that use the closed form whatever `best_response` is.
    pub linearized_sweeps: usize,
    pub trace: bool,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self {
            convergence_tol: 1e-4,
            max_iters: 200,
            c_floor: 1e-6,
            c_max: DEFAULT_C_MAX,
            order: UpdateOrder::Jacobi,
            best_response: BestResponse::Exact,
            linearized_sweeps: 1,
            trace: false,
        }
    }
}

impl AllocatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tol > 0.0) {
            return Err(Error::config("allocator.convergence_tol", "must be > 0"));
        }
        if !(self.c_floor > 0.0 && self.c_floor < self.c_max) {
            return Err(Error::config("allocator.c_floor", "need 0 < c_floor < c_max"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("allocator.max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

/// Result of one allocator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub alloc: FronthaulAlloc,
    pub weights: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    pub last_change: f64,
    /// Iterates `C^{(1)}, C^{(2)}, …` when tracing is enabled.
    pub iterates: Vec<Vec<f64>>,
    /// Per-flow KKT residuals at the returned allocation when tracing is
    /// enabled; `NaN` for clamped flows.
    pub kkt_residuals: Vec<f64>,
}

/// `Σ_k (w_k·R_k(H, C) − γ_k·C_k)`.
pub fn per_stage_objective(csi: &CsiSample, alloc: &FronthaulAlloc, weights: &[f64], gamma: &[f64], params: &SystemParams) -> f64 {
    user_rates(csi, alloc, params)
        .iter()
        .zip(weights)
        .zip(gamma.iter().zip(&alloc.capacities))
        .map(|((r, w), (g, c))| w * r - g * c)
        .sum()
}

/// Best-response iteration of the closed-form local update from
/// `C^{(0)} = c_floor`, for arbitrary nonnegative weights.
///
/// Stops when `max_k |C_k^{(n+1)} − C_k^{(n)}| < convergence_tol`. Without
/// convergence the iterate with the best per-stage objective is returned
/// and `converged` is false.
pub fn iterate_allocation(csi: &CsiSample, weights: &[f64], params: &SystemParams, cfg: &AllocatorConfig) -> AllocationOutcome {
    let k_total = csi.num_cells();
    let view = StageView::new(csi, params);
    let gamma = &params.gamma;
    let mut current = vec![cfg.c_floor; k_total];
    let mut iterates = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_change = f64::INFINITY;

    for sweep in 1..=cfg.max_iters {
        let rule = if sweep <= cfg.linearized_sweeps {
            BestResponse::Linearized
        } else {
            cfg.best_response
        };
        let next = match cfg.order {
            UpdateOrder::Jacobi => (0..k_total)
                .map(|k| local::best_response(&view, &current, weights, gamma[k], k, cfg, rule))
                .collect::<Vec<_>>(),
            UpdateOrder::GaussSeidel => {
                let mut c = current.clone();
                for k in 0..k_total {
                    c[k] = local::best_response(&view, &c, weights, gamma[k], k, cfg, rule);
                }
                c
            }
        };
        last_change = next.iter().zip(&current).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if cfg.trace {
            iterates.push(next.clone());
        }
        current = next;
        if last_change < cfg.convergence_tol {
            return finish(&view, current, weights, gamma, cfg, true, sweep, last_change, iterates);
        }
        let value = view.objective(&current, weights, gamma);
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, current.clone()));
        }
    }

    log::debug!(
        "allocator did not converge in {} sweeps (last change {last_change:e})",
        cfg.max_iters
    );
    let (_, capacities) = best.expect("at least one sweep");
    finish(&view, capacities, weights, gamma, cfg, false, cfg.max_iters, last_change, iterates)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    view: &StageView,
    capacities: Vec<f64>,
    weights: &[f64],
    gamma: &[f64],
    cfg: &AllocatorConfig,
    converged: bool,
    sweeps: usize,
    last_change: f64,
    iterates: Vec<Vec<f64>>,
) -> AllocationOutcome {
    let kkt_residuals = if cfg.trace {
        (0..capacities.len())
            .map(|k| {
                let c = capacities[k];
                if c > 0.0 && c < cfg.c_max {
                    view.kkt_residual(&capacities, weights, gamma[k], k, c, cfg.c_floor)
                } else {
                    f64::NAN
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    AllocationOutcome {
        alloc: FronthaulAlloc { capacities },
        weights: weights.to_vec(),
        converged,
        sweeps,
        last_change,
        iterates,
        kkt_residuals,
    }
}

/// Delay-aware allocation: weights are `∂Ṽ/∂Q_k` at the current backlog.
///
/// `q_norm` is the backlog in bit/Hz and `kappa` the coupling factors from
/// [`crate::priority::coupling_coefficients`].
pub fn allocate_delay_aware(
    csi: &CsiSample,
    q_norm: &[f64],
    priorities: &[PerFlowPriority],
    kappa: &[f64],
    params: &SystemParams,
    cfg: &AllocatorConfig,
) -> Result<AllocationOutcome> {
    let weights = v_tilde_gradient_with(priorities, kappa, q_norm)?;
    Ok(iterate_allocation(csi, &weights, params, cfg))
}

/// Baseline 1: unit weights, queue-blind.
pub fn allocate_throughput_optimal(csi: &CsiSample, params: &SystemParams, cfg: &AllocatorConfig) -> AllocationOutcome {
    iterate_allocation(csi, &vec![1.0; csi.num_cells()], params, cfg)
}

/// Baseline 2: weights equal to the backlogs in Mbit.
pub fn allocate_queue_weighted(csi: &CsiSample, q_bits: &[f64], params: &SystemParams, cfg: &AllocatorConfig) -> AllocationOutcome {
    let weights: Vec<f64> = q_bits.iter().map(|q| q / 1e6).collect();
    iterate_allocation(csi, &weights, params, cfg)
}
