//! Bursty arrivals, queue evolution, multi-topology episodes and
//! price-to-budget calibration.
//!
//! Every random draw comes from a sub-stream keyed by the run seed and the
//! topology/slot index, so all schemes compared under one seed see the same
//! layouts, fading and arrivals.

mod budget;
mod episode;
mod metrics;
mod trace;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::channel::{compute_path_gains, generate_topology, PathGains, Topology};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::priority::coupling_coefficients;
use crate::rng::{derive_seed, substream, StreamKind};

pub use budget::{calibrate_price_to_budget, BudgetCalibration, BudgetEvaluation, BUDGET_REL_TOL};
pub(crate) use episode::calibrate_topology;
pub use episode::{run_episode, run_scheme, EpisodeOutput, SlotRecord};
pub use metrics::{aggregate_metrics, AggregateMetrics, RunMetrics};
pub use trace::{write_trace_csv, TRACE_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DelayAware,
    ThroughputOptimal,
    QueueWeighted,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::DelayAware, Scheme::ThroughputOptimal, Scheme::QueueWeighted];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::DelayAware => "delay_aware",
            Scheme::ThroughputOptimal => "throughput_optimal",
            Scheme::QueueWeighted => "queue_weighted",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delay_aware" => Ok(Scheme::DelayAware),
            "throughput_optimal" => Ok(Scheme::ThroughputOptimal),
            "queue_weighted" => Ok(Scheme::QueueWeighted),
            other => Err(Error::config(
                "scheme",
                format!("unknown scheme `{other}` (delay_aware, throughput_optimal, queue_weighted)"),
            )),
        }
    }
}

/// Backlog per flow in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub backlog_bits: Vec<f64>,
}

impl QueueState {
    pub fn empty(k: usize) -> Self {
        Self {
            backlog_bits: vec![0.0; k],
        }
    }

    pub fn new(backlog_bits: Vec<f64>) -> Result<Self> {
        if let Some(k) = backlog_bits.iter().position(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Domain(format!("backlog {k} must be finite and >= 0")));
        }
        Ok(Self { backlog_bits })
    }
}

/// `Q_k′ = max(Q_k − R_k·τ, 0) + A_k·τ`, with `arrivals_bits = A_k·τ`.
pub fn step_queues(q: &QueueState, rates_bps: &[f64], arrivals_bits: &[f64], tau_s: f64) -> QueueState {
    QueueState {
        backlog_bits: q
            .backlog_bits
            .iter()
            .zip(rates_bps)
            .zip(arrivals_bits)
            .map(|((&qk, &r), &a)| (qk - r * tau_s).max(0.0) + a)
            .collect(),
    }
}

/// Cell layout and coupling strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub num_cells: usize,
    pub cell_radius_m: f64,
    pub cross_scale: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            num_cells: 7,
            cell_radius_m: 500.0,
            cross_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub num_slots: usize,
    pub num_topologies: usize,
    /// `λ̄` in bit/s; per-flow means are drawn from `U[0, 2λ̄]`.
    pub mean_arrival_bps: f64,
    pub arrival_packet_bits: f64,
    pub seed: u64,
    pub target_total_capacity_bps: Option<f64>,
    /// Leading slots excluded from the averages.
    pub warmup_slots: usize,
    /// Draw fresh `λ_k` for every topology instead of one set for all.
    pub redraw_arrival_rates: bool,
    /// Largest `λ_k`, as a fraction of the flow's ergodic capacity, used to
    /// calibrate the priority function; heavier flows are calibrated there.
    pub calibration_load_cap: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            num_slots: 100,
            num_topologies: 20,
            mean_arrival_bps: 30e6,
            arrival_packet_bits: 5000.0,
            seed: 1,
            target_total_capacity_bps: None,
            warmup_slots: 0,
            redraw_arrival_rates: true,
            calibration_load_cap: 0.95,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_slots == 0 {
            return Err(Error::config("episode.num_slots", "must be >= 1"));
        }
        if self.num_topologies == 0 {
            return Err(Error::config("episode.num_topologies", "must be >= 1"));
        }
        if self.warmup_slots >= self.num_slots {
            return Err(Error::config("episode.warmup_slots", "must be < num_slots"));
        }
        if !(self.mean_arrival_bps >= 0.0 && self.mean_arrival_bps.is_finite()) {
            return Err(Error::config("episode.mean_arrival_bps", "must be finite and >= 0"));
        }
        if !(self.arrival_packet_bits > 0.0 && self.arrival_packet_bits.is_finite()) {
            return Err(Error::config("episode.arrival_packet_bits", "must be > 0"));
        }
        if !(self.calibration_load_cap > 0.0 && self.calibration_load_cap < 1.0) {
            return Err(Error::config("episode.calibration_load_cap", "must lie in (0, 1)"));
        }
        if let Some(t) = self.target_total_capacity_bps {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("episode.target_total_capacity_bps", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// One topology of a sweep with everything derived from it.
#[derive(Debug, Clone)]
pub struct TopologyCase {
    pub index: u64,
    pub topology: Topology,
    pub gains: PathGains,
    /// Coupling factors of the first-order priority correction.
    pub kappa: Vec<f64>,
    /// Mean arrival rate per flow in bit/s.
    pub lambda_bps: Vec<f64>,
}

/// `λ_k ~ U[0, 2λ̄]` for one topology.
pub fn draw_arrival_rates(mean_arrival_bps: f64, k: usize, seed: u64, topology_index: u64) -> Vec<f64> {
    if mean_arrival_bps == 0.0 {
        return vec![0.0; k];
    }
    let mut rng = substream(seed, StreamKind::ArrivalRates, topology_index, 0);
    let u = Uniform::new(0.0, 2.0 * mean_arrival_bps).expect("positive range");
    (0..k).map(|_| u.sample(&mut rng)).collect()
}

/// Builds the `num_topologies` cases of a run.
pub fn prepare_topologies(geometry: &Geometry, cfg: &EpisodeConfig, noise: f64) -> Result<Vec<TopologyCase>> {
    if geometry.num_cells == 0 {
        return Err(Error::config("geometry.num_cells", "must be >= 1"));
    }
    if !(geometry.cell_radius_m > 0.0) {
        return Err(Error::config("geometry.cell_radius_m", "must be > 0"));
    }
    (0..cfg.num_topologies as u64)
        .map(|index| {
            let topology = generate_topology(geometry.num_cells, geometry.cell_radius_m, derive_seed(cfg.seed, index));
            let gains = compute_path_gains(&topology, geometry.cross_scale)?;
            let kappa = coupling_coefficients(&gains, noise);
            let rate_index = if cfg.redraw_arrival_rates { index } else { 0 };
            let lambda_bps = draw_arrival_rates(cfg.mean_arrival_bps, geometry.num_cells, cfg.seed, rate_index);
            Ok(TopologyCase {
                index,
                topology,
                gains,
                kappa,
                lambda_bps,
            })
        })
        .collect()
}

/// Bits arriving during one slot: `packet_bits × Poisson(λ_k·τ/packet_bits)`.
pub fn sample_arrivals<R: Rng + ?Sized>(lambda_bps: &[f64], tau_s: f64, packet_bits: f64, rng: &mut R) -> Vec<f64> {
    lambda_bps
        .iter()
        .map(|&l| {
            let mean = l * tau_s / packet_bits;
            if mean > 0.0 {
                let n: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
                n * packet_bits
            } else {
                0.0
            }
        })
        .collect()
}

/// Arrivals of `(seed, topology, slot)` from their own sub-stream.
pub fn sample_arrivals_for_slot(
    lambda_bps: &[f64],
    params: &SystemParams,
    packet_bits: f64,
    seed: u64,
    topology_index: u64,
    slot: u64,
) -> Vec<f64> {
    let mut rng = substream(seed, StreamKind::Arrivals, topology_index, slot);
    sample_arrivals(lambda_bps, params.slot_s, packet_bits, &mut rng)
}
