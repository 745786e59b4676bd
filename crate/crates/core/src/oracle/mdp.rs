use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CsiSample, PathGains};
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::params::SystemParams;
use crate::phy::{user_rates, FronthaulAlloc};

const MAX_QUEUE_LEVELS: usize = 200;
const MAX_CHANNEL_BINS: usize = 8;
const MAX_CAPACITY_LEVELS: usize = 32;

/// Discretization of queues, fading and actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleGrids {
    /// Levels `0, q_step, …, (q_levels−1)·q_step` per flow.
    pub q_levels: usize,
    pub q_step_bits: f64,
    /// Packet size in grid steps.
    pub arrival_packet_levels: usize,
    /// Poisson packet counts are truncated here and renormalized.
    pub max_arrival_packets: usize,
    /// Equal-probability bins of `|H̃_kk|²`.
    pub diag_bins: usize,
    /// Bins of `|H̃_kj|²`, `k ≠ j` (one state when the cross gain is 0).
    pub cross_bins: usize,
    /// Bins of the relative phase of `H_22` (K = 2 with coupling only).
    pub phase_bins: usize,
    /// Capacity grid `0, …, c_grid_max` per link.
    pub c_levels: usize,
    pub c_grid_max: f64,
}

impl OracleGrids {
    /// Default grids for one flow.
    pub fn single_flow() -> Self {
        Self {
            q_levels: 100,
            q_step_bits: 100_000.0,
            arrival_packet_levels: 1,
            max_arrival_packets: 30,
            diag_bins: 8,
            cross_bins: 1,
            phase_bins: 1,
            c_levels: 32,
            c_grid_max: 9.3,
        }
    }

    /// Default grids for two flows.
    pub fn two_flows() -> Self {
        Self {
            q_levels: 20,
            q_step_bits: 300_000.0,
            arrival_packet_levels: 1,
            max_arrival_packets: 12,
            diag_bins: 2,
            cross_bins: 2,
            phase_bins: 2,
            c_levels: 10,
            c_grid_max: 8.1,
        }
    }

    pub fn for_flows(k: usize) -> Self {
        if k == 1 {
            Self::single_flow()
        } else {
            Self::two_flows()
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        self.check(k, true)
    }

    fn check(&self, k: usize, bounded: bool) -> Result<()> {
        let check = |name: &str, v: usize, max: usize| {
            let max = if bounded { max } else { usize::MAX };
            if v == 0 || v > max {
                Err(Error::GridSize(format!("{name} = {v} outside [1, {max}]")))
            } else {
                Ok(())
            }
        };
        if k == 0 || k > 2 {
            return Err(Error::GridSize(format!("oracle supports 1 or 2 flows, got {k}")));
        }
        check("q_levels", self.q_levels, MAX_QUEUE_LEVELS)?;
        check("diag_bins", self.diag_bins, MAX_CHANNEL_BINS)?;
        check("cross_bins", self.cross_bins, MAX_CHANNEL_BINS)?;
        check("phase_bins", self.phase_bins, MAX_CHANNEL_BINS)?;
        check("c_levels", self.c_levels, MAX_CAPACITY_LEVELS)?;
        if self.arrival_packet_levels == 0 {
            return Err(Error::GridSize("arrival_packet_levels must be >= 1".into()));
        }
        if !(self.q_step_bits > 0.0) || !(self.c_grid_max >= 0.0) {
            return Err(Error::GridSize("q_step_bits must be > 0 and c_grid_max >= 0".into()));
        }
        Ok(())
    }

    pub fn capacity_levels(&self) -> Vec<f64> {
        if self.c_levels == 1 {
            return vec![0.0];
        }
        let step = self.c_grid_max / (self.c_levels - 1) as f64;
        (0..self.c_levels).map(|i| i as f64 * step).collect()
    }
}

/// Equal-probability bins of a unit-mean exponential, each represented by
/// its conditional mean.
pub fn quantize_exponential(bins: usize) -> Vec<f64> {
    let n = bins as f64;
    let edge = |i: usize| if i == bins { f64::INFINITY } else { -(1.0 - i as f64 / n).ln() };
    // E[X; a < X < b] = (a+1)e^{-a} − (b+1)e^{-b}
    let partial = |x: f64| if x.is_infinite() { 0.0 } else { (x + 1.0) * (-x).exp() };
    (0..bins).map(|i| n * (partial(edge(i)) - partial(edge(i + 1)))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub csi: CsiSample,
    pub probability: f64,
}

/// The discretized MDP with per-(channel, action) drains precomputed.
#[derive(Debug, Clone)]
pub struct DiscreteMdp {
    pub grids: OracleGrids,
    pub params: SystemParams,
    pub num_flows: usize,
    pub channel_states: Vec<ChannelState>,
    /// Joint capacity vectors, flow 0 slowest.
    pub actions: Vec<Vec<f64>>,
    /// Drain in grid steps, `[channel][action][flow]`.
    pub(crate) drain_levels: Vec<Vec<Vec<f64>>>,
    /// Arrival pmf over packet counts per flow.
    pub arrival_pmf: Vec<Vec<f64>>,
    pub(crate) queue_cost: Vec<f64>,
    pub(crate) action_cost: Vec<f64>,
}

impl DiscreteMdp {
    pub fn num_states(&self) -> usize {
        self.grids.q_levels.pow(self.num_flows as u32)
    }

    /// Grid indices of state `s`, flow 0 slowest.
    pub fn state_levels(&self, s: usize) -> Vec<usize> {
        let n = self.grids.q_levels;
        let mut out = vec![0; self.num_flows];
        let mut rest = s;
        for k in (0..self.num_flows).rev() {
            out[k] = rest % n;
            rest /= n;
        }
        out
    }

    pub fn state_index(&self, levels: &[usize]) -> usize {
        levels.iter().fold(0, |acc, &l| acc * self.grids.q_levels + l)
    }

    pub fn state_backlog_bits(&self, s: usize) -> Vec<f64> {
        self.state_levels(s).iter().map(|&l| l as f64 * self.grids.q_step_bits).collect()
    }

    /// `Σ_k (β_k Q_k/λ_k + γ_k C_k)`.
    pub fn stage_cost(&self, s: usize, a: usize) -> f64 {
        self.queue_cost[s] + self.action_cost[a]
    }

    /// Post-drain split of one flow: `(lower level, weight on lower)`.
    #[inline]
    pub(crate) fn split(level: usize, drain: f64) -> (usize, f64) {
        let x = (level as f64 - drain).max(0.0);
        let lo = x.floor();
        (lo as usize, 1.0 - (x - lo))
    }

    /// Full transition row `P(· | s, h, a)` as `(next state, probability)`.
    pub fn transition_row(&self, s: usize, h: usize, a: usize) -> Vec<(usize, f64)> {
        let levels = self.state_levels(s);
        let top = self.grids.q_levels - 1;
        let step = self.grids.arrival_packet_levels;
        let per_flow: Vec<Vec<(usize, f64)>> = (0..self.num_flows)
            .map(|k| {
                let (lo, w_lo) = Self::split(levels[k], self.drain_levels[h][a][k]);
                let mut dist = vec![0.0; self.grids.q_levels];
                for (base, w) in [(lo, w_lo), (lo + 1, 1.0 - w_lo)] {
                    if w == 0.0 {
                        continue;
                    }
                    for (n, p) in self.arrival_pmf[k].iter().enumerate() {
                        dist[(base + n * step).min(top)] += w * p;
                    }
                }
                dist.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect()
            })
            .collect();
        let mut row = vec![(0usize, 1.0f64)];
        for flow in &per_flow {
            row = row
                .iter()
                .flat_map(|&(idx, p)| flow.iter().map(move |&(l, q)| (idx * self.grids.q_levels + l, p * q)))
                .collect();
        }
        row
    }
}

fn poisson_pmf_truncated(mean: f64, max: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(max + 1);
    let mut p = (-mean).exp();
    for n in 0..=max {
        pmf.push(p);
        p *= mean / (n + 1) as f64;
    }
    let total: f64 = pmf.iter().sum();
    pmf.iter().map(|x| x / total).collect()
}

fn channel_states(gains: &PathGains, grids: &OracleGrids) -> Result<Vec<ChannelState>> {
    let k = gains.num_cells();
    let diag = quantize_exponential(grids.diag_bins);
    let pd = 1.0 / grids.diag_bins as f64;
    if k == 1 {
        return diag
            .iter()
            .map(|&g| {
                let h = ComplexMatrix::from_diagonal(&[Complex64::new((gains.gain(0, 0) * g).sqrt(), 0.0)]);
                Ok(ChannelState {
                    csi: CsiSample::from_channel(h, 0)?,
                    probability: pd,
                })
            })
            .collect();
    }

    let coupled = gains.gain(0, 1) > 0.0 || gains.gain(1, 0) > 0.0;
    let (cross, phases) = if coupled {
        let phase_bins = grids.phase_bins;
        // the rate depends on the phase only through cos φ, φ ~ U[0, π];
        // each bin is represented by the conditional mean of cos φ
        let phases: Vec<f64> = (0..phase_bins)
            .map(|i| {
                let (a, b) = (
                    std::f64::consts::PI * i as f64 / phase_bins as f64,
                    std::f64::consts::PI * (i + 1) as f64 / phase_bins as f64,
                );
                let mean_cos = (b.sin() - a.sin()) / (b - a);
                mean_cos.clamp(-1.0, 1.0).acos()
            })
            .collect();
        (quantize_exponential(grids.cross_bins), phases)
    } else {
        (vec![0.0], vec![0.0])
    };
    let pc = 1.0 / cross.len() as f64;
    let pp = 1.0 / phases.len() as f64;

    let mut states = Vec::new();
    for &g11 in &diag {
        for &g22 in &diag {
            for &g12 in &cross {
                for &g21 in &cross {
                    for &phi in &phases {
                        let m = |g: f64, i: usize, j: usize| (gains.gain(i, j) * g).sqrt();
                        let h = ComplexMatrix::from_rows(vec![
                            vec![Complex64::new(m(g11, 0, 0), 0.0), Complex64::new(m(g12, 0, 1), 0.0)],
                            vec![Complex64::new(m(g21, 1, 0), 0.0), Complex64::from_polar(m(g22, 1, 1), phi)],
                        ])?;
                        states.push(ChannelState {
                            csi: CsiSample::from_channel(h, 0)?,
                            probability: pd * pd * pc * pc * pp,
                        });
                    }
                }
            }
        }
    }
    Ok(states)
}

/// Builds the MDP for `params` (λ in bit/s/Hz) on the layout `gains`.
pub fn build_discrete_mdp(params: &SystemParams, gains: &PathGains, grids: &OracleGrids) -> Result<DiscreteMdp> {
    grids.validate(gains.num_cells())?;
    assemble(params, gains, grids)
}

/// [`build_discrete_mdp`] without the grid size limits.
pub(crate) fn assemble(params: &SystemParams, gains: &PathGains, grids: &OracleGrids) -> Result<DiscreteMdp> {
    let k = gains.num_cells();
    grids.check(k, false)?;
    params.validate()?;
    if params.num_flows() != k {
        return Err(Error::config(
            "params",
            format!("{} flows for a {k}-cell layout", params.num_flows()),
        ));
    }
    if let Some(j) = params.lambda.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::config(format!("lambda[{j}]"), "oracle needs positive arrival rates"));
    }
    let channel_states = channel_states(gains, grids)?;

    let levels = grids.capacity_levels();
    let actions: Vec<Vec<f64>> = if k == 1 {
        levels.iter().map(|&c| vec![c]).collect()
    } else {
        levels.iter().flat_map(|&c0| levels.iter().map(move |&c1| vec![c0, c1])).collect()
    };

    let bits_per_unit_rate = params.bandwidth_hz * params.slot_s / grids.q_step_bits;
    let drain_levels = channel_states
        .iter()
        .map(|cs| {
            actions
                .iter()
                .map(|c| {
                    let alloc = FronthaulAlloc { capacities: c.clone() };
                    user_rates(&cs.csi, &alloc, params).iter().map(|r| r * bits_per_unit_rate).collect()
                })
                .collect()
        })
        .collect();

    let packet_bits = grids.q_step_bits * grids.arrival_packet_levels as f64;
    let arrival_pmf = params
        .lambda
        .iter()
        .map(|&l| poisson_pmf_truncated(l * params.bandwidth_hz * params.slot_s / packet_bits, grids.max_arrival_packets))
        .collect();

    let lambda_bps: Vec<f64> = params.lambda.iter().map(|l| l * params.bandwidth_hz).collect();
    let mut mdp = DiscreteMdp {
        grids: grids.clone(),
        params: params.clone(),
        num_flows: k,
        channel_states,
        actions,
        drain_levels,
        arrival_pmf,
        queue_cost: Vec::new(),
        action_cost: Vec::new(),
    };
    mdp.queue_cost = (0..mdp.num_states())
        .map(|s| {
            mdp.state_backlog_bits(s)
                .iter()
                .enumerate()
                .map(|(k, q)| params.beta[k] * q / lambda_bps[k])
                .sum()
        })
        .collect();
    mdp.action_cost = mdp
        .actions
        .iter()
        .map(|c| c.iter().zip(&params.gamma).map(|(c, g)| g * c).sum())
        .collect();
    Ok(mdp)
}
