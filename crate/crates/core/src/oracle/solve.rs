use serde::{Deserialize, Serialize};

use super::mdp::DiscreteMdp;
use crate::channel::CsiSample;
use crate::error::{Error, Result};

pub const RVI_MAX_ITERS: usize = 100_000;

/// Fixed-policy sweeps between two greedy sweeps.
const EVALUATION_SWEEPS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    /// Optimal average cost per slot, in cost-rate units.
    pub theta_star: f64,
    /// Relative values on the queue grid, `V*(0) = 0`.
    pub v_star: Vec<f64>,
    /// Greedy action index per `[state][channel]`.
    pub policy: Vec<Vec<usize>>,
    pub iterations: usize,
    pub bellman_residual: f64,
}

/// `E_A[V(Q″ + A)]` for every post-drain grid point `Q″`.
fn post_arrival(mdp: &DiscreteMdp, v: &[f64]) -> Vec<f64> {
    let n = mdp.grids.q_levels;
    let top = n - 1;
    let step = mdp.grids.arrival_packet_levels;
    let mut cur = v.to_vec();
    for k in 0..mdp.num_flows {
        let stride = n.pow((mdp.num_flows - 1 - k) as u32);
        let pmf = &mdp.arrival_pmf[k];
        let mut next = vec![0.0; cur.len()];
        for (s, out) in next.iter_mut().enumerate() {
            let level = (s / stride) % n;
            let base = s - level * stride;
            *out = pmf
                .iter()
                .enumerate()
                .map(|(a, p)| p * cur[base + (level + a * step).min(top) * stride])
                .sum();
        }
        cur = next;
    }
    cur
}

/// `E[V(Q′) | s, h, a]` given the post-arrival values `w`.
#[inline]
fn expected_next(mdp: &DiscreteMdp, w: &[f64], levels: &[usize], drain: &[f64]) -> f64 {
    let n = mdp.grids.q_levels;
    let (lo0, w0) = DiscreteMdp::split(levels[0], drain[0]);
    let corners0 = [(lo0, w0), ((lo0 + 1).min(n - 1), 1.0 - w0)];
    if mdp.num_flows == 1 {
        return corners0.iter().map(|&(l, p)| if p == 0.0 { 0.0 } else { p * w[l] }).sum();
    }
    let (lo1, w1) = DiscreteMdp::split(levels[1], drain[1]);
    let corners1 = [(lo1, w1), ((lo1 + 1).min(n - 1), 1.0 - w1)];
    let mut total = 0.0;
    for &(a, pa) in &corners0 {
        if pa == 0.0 {
            continue;
        }
        for &(b, pb) in &corners1 {
            if pb != 0.0 {
                total += pa * pb * w[a * n + b];
            }
        }
    }
    total
}

enum Rule<'a> {
    Optimal,
    Fixed(&'a [Vec<usize>]),
}

struct Sweep {
    tv: Vec<f64>,
    policy: Vec<Vec<usize>>,
}

fn bellman(mdp: &DiscreteMdp, v: &[f64], rule: &Rule, keep_policy: bool) -> Sweep {
    let w = post_arrival(mdp, v);
    let ns = mdp.num_states();
    let mut tv = vec![0.0; ns];
    let mut policy = if keep_policy {
        vec![vec![0; mdp.channel_states.len()]; ns]
    } else {
        Vec::new()
    };
    let mut levels = vec![0usize; mdp.num_flows];
    for s in 0..ns {
        levels.copy_from_slice(&mdp.state_levels(s));
        let mut total = 0.0;
        for (h, ch) in mdp.channel_states.iter().enumerate() {
            let drains = &mdp.drain_levels[h];
            let (best_a, best) = match rule {
                Rule::Optimal => {
                    let mut best = (0, f64::INFINITY);
                    for (a, drain) in drains.iter().enumerate() {
                        let q = mdp.action_cost[a] + expected_next(mdp, &w, &levels, drain);
                        if q < best.1 {
                            best = (a, q);
                        }
                    }
                    best
                }
                Rule::Fixed(table) => {
                    let a = table[s][h];
                    (a, mdp.action_cost[a] + expected_next(mdp, &w, &levels, &drains[a]))
                }
            };
            if keep_policy {
                policy[s][h] = best_a;
            }
            total += ch.probability * best;
        }
        tv[s] = mdp.queue_cost[s] + total;
    }
    Sweep { tv, policy }
}

fn run(mdp: &DiscreteMdp, tol: f64, rule: Rule) -> Result<OracleSolution> {
    let ns = mdp.num_states();
    let improving = matches!(rule, Rule::Optimal);
    let mut v = vec![0.0; ns];
    for it in 1..=RVI_MAX_ITERS {
        let Sweep { tv, policy } = bellman(mdp, &v, &rule, improving);
        let (lo, hi) = tv
            .iter()
            .zip(&v)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let anchor = tv[0];
        v = tv.iter().map(|x| x - anchor).collect();
        if hi - lo < tol {
            let Sweep { tv, policy } = bellman(mdp, &v, &rule, true);
            let theta_star = tv[0];
            let bellman_residual = tv.iter().zip(&v).map(|(a, b)| (a - b - theta_star).abs()).fold(0.0, f64::max);
            return Ok(OracleSolution {
                theta_star,
                v_star: v,
                policy,
                iterations: it,
                bellman_residual,
            });
        }
        if improving {
            // modified policy iteration: cheap sweeps under the current greedy policy
            let fixed = Rule::Fixed(&policy);
            for _ in 0..EVALUATION_SWEEPS {
                let tv = bellman(mdp, &v, &fixed, false).tv;
                let anchor = tv[0];
                v = tv.iter().map(|x| x - anchor).collect();
            }
        }
    }
    Err(Error::Convergence {
        what: "relative value iteration".into(),
        iterations: RVI_MAX_ITERS,
    })
}

/// Optimal average cost, relative values and greedy policy; stops when
/// the span of `TV − V` is below `tol`.
pub fn relative_value_iteration(mdp: &DiscreteMdp, tol: f64) -> Result<OracleSolution> {
    run(mdp, tol, Rule::Optimal)
}

/// Average cost of the stationary policy `table[state][channel]`.
pub fn evaluate_policy_table(mdp: &DiscreteMdp, table: &[Vec<usize>], tol: f64) -> Result<f64> {
    if table.len() != mdp.num_states() || table.iter().any(|r| r.len() != mdp.channel_states.len()) {
        return Err(Error::Domain("policy table shape does not match the MDP".into()));
    }
    if table.iter().flatten().any(|&a| a >= mdp.actions.len()) {
        return Err(Error::Domain("policy table references an unknown action".into()));
    }
    Ok(run(mdp, tol, Rule::Fixed(table))?.theta_star)
}

/// Nearest action on the capacity grid, per link.
pub(crate) fn project_action(mdp: &DiscreteMdp, c: &[f64]) -> usize {
    let levels = mdp.grids.capacity_levels();
    let nearest = |x: f64| {
        levels
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .expect("nonempty grid")
    };
    c.iter().fold(0, |acc, &x| acc * levels.len() + nearest(x))
}

/// Average cost of an external policy `(backlog bits, CSI) → capacities`,
/// projected onto the action grid.
pub fn evaluate_policy<F>(mdp: &DiscreteMdp, mut policy: F, tol: f64) -> Result<f64>
where
    F: FnMut(&[f64], &CsiSample) -> Result<Vec<f64>>,
{
    let mut table = Vec::with_capacity(mdp.num_states());
    for s in 0..mdp.num_states() {
        let q = mdp.state_backlog_bits(s);
        let row = mdp
            .channel_states
            .iter()
            .map(|ch| policy(&q, &ch.csi).map(|c| project_action(mdp, &c)))
            .collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    evaluate_policy_table(mdp, &table, tol)
}
