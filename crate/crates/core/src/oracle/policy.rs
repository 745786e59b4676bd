use serde::{Deserialize, Serialize};

use super::mdp::{build_discrete_mdp, DiscreteMdp, OracleGrids};
use super::solve::{evaluate_policy_table, project_action, relative_value_iteration};
use crate::allocator::{iterate_allocation, AllocatorConfig};
use crate::channel::PathGains;
use crate::error::Result;
use crate::params::SystemParams;
use crate::priority::{calibrate_all, coupling_coefficients, v_tilde_gradient_with};
use crate::sim::Scheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeGap {
    pub scheme: Scheme,
    pub average_cost: f64,
    /// `(cost − θ*)/θ*`.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub num_flows: usize,
    pub cross_scale: f64,
    pub grids: OracleGrids,
    pub theta_star: f64,
    pub rvi_iterations: usize,
    pub bellman_residual: f64,
    pub tolerance: f64,
    pub schemes: Vec<SchemeGap>,
}

/// The action `scheme` picks in each `[state][channel]`: its allocation
/// for that backlog and CSI, projected to the nearest grid action.
pub fn scheme_policy_table(mdp: &DiscreteMdp, gains: &PathGains, scheme: Scheme, alloc_cfg: &AllocatorConfig) -> Result<Vec<Vec<usize>>> {
    let p = &mdp.params;
    let priorities = if scheme == Scheme::DelayAware {
        calibrate_all(p, gains)?
    } else {
        Vec::new()
    };
    let kappa = coupling_coefficients(gains, p.noise);
    (0..mdp.num_states())
        .map(|s| {
            let q = mdp.state_backlog_bits(s);
            let w = match scheme {
                Scheme::DelayAware => {
                    let q_norm: Vec<f64> = q.iter().map(|b| b / p.bandwidth_hz).collect();
                    v_tilde_gradient_with(&priorities, &kappa, &q_norm)?
                }
                Scheme::ThroughputOptimal => vec![1.0; q.len()],
                Scheme::QueueWeighted => q.iter().map(|b| b / 1e6).collect(),
            };
            Ok(mdp
                .channel_states
                .iter()
                .map(|ch| project_action(mdp, &iterate_allocation(&ch.csi, &w, p, alloc_cfg).alloc.capacities))
                .collect())
        })
        .collect()
}

/// Average cost of `scheme` on the grid.
pub fn scheme_policy_cost(mdp: &DiscreteMdp, gains: &PathGains, scheme: Scheme, alloc_cfg: &AllocatorConfig, tol: f64) -> Result<f64> {
    evaluate_policy_table(mdp, &scheme_policy_table(mdp, gains, scheme, alloc_cfg)?, tol)
}

/// Solves the MDP and reports each scheme's average cost against `θ*`.
pub fn oracle_gap(
    params: &SystemParams,
    gains: &PathGains,
    grids: &OracleGrids,
    schemes: &[Scheme],
    alloc_cfg: &AllocatorConfig,
    tol: f64,
) -> Result<OracleReport> {
    let mdp = build_discrete_mdp(params, gains, grids)?;
    let solution = relative_value_iteration(&mdp, tol)?;
    let theta = solution.theta_star;
    let schemes = schemes
        .iter()
        .map(|&scheme| {
            let average_cost = scheme_policy_cost(&mdp, gains, scheme, alloc_cfg, tol)?;
            Ok(SchemeGap {
                scheme,
                average_cost,
                relative_gap: (average_cost - theta) / theta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleReport {
        num_flows: gains.num_cells(),
        cross_scale: gains.cross_scale(),
        grids: grids.clone(),
        theta_star: theta,
        rvi_iterations: solution.iterations,
        bellman_residual: solution.bellman_residual,
        tolerance: tol,
        schemes,
    })
}
