//! Discretized average-cost MDP for one or two flows, solved by relative
//! value iteration, as ground truth for the closed-form policy.
//!
//! The state is the backlog vector on a grid; fading is i.i.d. across slots,
//! so the Bellman operator takes the expectation over quantized channel
//! states outside the minimization over the capacity grid:
//!
//! ```text
//! θ + V(Q) = E_H[ min_C { c(Q, C) + E[V(Q′) | Q, H, C] } ]
//! ```
//!
//! with `c(Q, C) = Σ_k (β_k Q_k/λ_k + γ_k C_k)`. After draining `R_k·W·τ`
//! bits, a backlog between two grid levels is split between them so that
//! its mean is preserved; arrivals are whole packets of
//! `arrival_packet_levels` grid steps and the top level absorbs overflow.

mod mdp;
mod policy;
mod solve;

pub use mdp::{build_discrete_mdp, quantize_exponential, ChannelState, DiscreteMdp, OracleGrids};
pub use policy::{oracle_gap, scheme_policy_cost, scheme_policy_table, OracleReport, SchemeGap};
pub use solve::{evaluate_policy, evaluate_policy_table, relative_value_iteration, OracleSolution, RVI_MAX_ITERS};

#[cfg(test)]
mod tests;
