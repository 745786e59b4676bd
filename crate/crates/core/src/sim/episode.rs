use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_arrivals_for_slot, step_queues, EpisodeConfig, QueueState, RunMetrics, Scheme, TopologyCase};
use crate::allocator::{allocate_delay_aware, allocate_queue_weighted, allocate_throughput_optimal, AllocationOutcome, AllocatorConfig};
use crate::channel::sample_csi_for_slot;
use crate::error::Result;
use crate::params::SystemParams;
use crate::phy::user_rates;
use crate::priority::{calibrate_per_flow, ergodic_capacity, PerFlowPriority};

/// Calibration raises `λ_k` to at least this fraction of the flow's ergodic capacity.
const CALIBRATION_LAMBDA_LOW: f64 = 1e-6;

/// One slot of a trace: state at the start of the slot, the allocation,
/// the resulting rates and the bits that arrived during it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub topology: u64,
    pub slot: u64,
    pub q_bits: Vec<f64>,
    /// bit/s/Hz
    pub capacities: Vec<f64>,
    /// bit/s/Hz
    pub rates: Vec<f64>,
    pub arrivals_bits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutput {
    pub topology: u64,
    pub metrics: RunMetrics,
    /// Time-averaged `C_k` in bit/s/Hz.
    pub mean_capacity: Vec<f64>,
    pub mean_queue_bits: Vec<f64>,
    pub max_queue_bits: f64,
    /// Wall-clock seconds spent choosing each slot's allocation.
    #[serde(skip)]
    pub alloc_seconds: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<SlotRecord>,
}

/// Parameters of one topology: per-flow `λ_k` in bit/s/Hz, γ scaled.
fn topology_params(base: &SystemParams, case: &TopologyCase, gamma_multiplier: f64) -> SystemParams {
    let mut p = base.with_gamma_multiplier(gamma_multiplier);
    p.lambda = case.lambda_bps.iter().map(|l| l / base.bandwidth_hz).collect();
    p
}

/// Priority constants for every flow of a topology. `λ_k` is clamped into
/// the base-system stability region, at most `load_cap` times the ergodic
/// capacity, for calibration only.
pub(crate) fn calibrate_topology(params: &SystemParams, case: &TopologyCase, load_cap: f64) -> Result<Vec<PerFlowPriority>> {
    let mut p = params.clone();
    for k in 0..p.num_flows() {
        let l_kk = case.gains.gain(k, k);
        let cap = ergodic_capacity(p.noise / (p.power * l_kk));
        let clamped = p.lambda[k].clamp(CALIBRATION_LAMBDA_LOW * cap, load_cap * cap);
        if clamped != p.lambda[k] {
            log::debug!(
                "topology {} flow {k}: lambda {} clamped to {clamped} for calibration (capacity {cap})",
                case.index,
                p.lambda[k]
            );
        }
        p.lambda[k] = clamped;
    }
    (0..p.num_flows())
        .map(|k| calibrate_per_flow(&p, case.gains.gain(k, k), k))
        .collect()
}

/// Runs one scheme over one topology for `cfg.num_slots` slots.
///
/// `params.gamma` holds the base prices, scaled by `gamma_multiplier`;
/// `params.lambda` is ignored in favour of the topology's draws.
pub fn run_episode(
    case: &TopologyCase,
    scheme: Scheme,
    params: &SystemParams,
    cfg: &EpisodeConfig,
    alloc_cfg: &AllocatorConfig,
    gamma_multiplier: f64,
    record_trace: bool,
) -> Result<EpisodeOutput> {
    let p = topology_params(params, case, gamma_multiplier);
    let k_total = p.num_flows();
    let w = p.bandwidth_hz;
    let priorities = match scheme {
        Scheme::DelayAware => calibrate_topology(&p, case, cfg.calibration_load_cap)?,
        _ => Vec::new(),
    };

    let mut q = QueueState::empty(k_total);
    let mut sum_q = vec![0.0; k_total];
    let mut sum_c = vec![0.0; k_total];
    let mut max_q: f64 = 0.0;
    let mut failures = 0;
    let mut alloc_seconds = Vec::with_capacity(cfg.num_slots);
    let mut trace = Vec::new();
    let averaged = (cfg.num_slots - cfg.warmup_slots) as f64;

    for slot in 0..cfg.num_slots as u64 {
        let csi = sample_csi_for_slot(&case.gains, cfg.seed, case.index, slot)?;
        let started = Instant::now();
        let outcome: AllocationOutcome = match scheme {
            Scheme::DelayAware => {
                let q_norm: Vec<f64> = q.backlog_bits.iter().map(|b| b / w).collect();
                allocate_delay_aware(&csi, &q_norm, &priorities, &case.kappa, &p, alloc_cfg)?
            }
            Scheme::ThroughputOptimal => allocate_throughput_optimal(&csi, &p, alloc_cfg),
            Scheme::QueueWeighted => allocate_queue_weighted(&csi, &q.backlog_bits, &p, alloc_cfg),
        };
        alloc_seconds.push(started.elapsed().as_secs_f64());
        if !outcome.converged {
            failures += 1;
        }

        let rates = user_rates(&csi, &outcome.alloc, &p);
        let rates_bps: Vec<f64> = rates.iter().map(|r| r * w).collect();
        let arrivals = sample_arrivals_for_slot(&case.lambda_bps, &p, cfg.arrival_packet_bits, cfg.seed, case.index, slot);
        let next = step_queues(&q, &rates_bps, &arrivals, p.slot_s);

        if record_trace {
            trace.push(SlotRecord {
                topology: case.index,
                slot,
                q_bits: q.backlog_bits.clone(),
                capacities: outcome.alloc.capacities.clone(),
                rates,
                arrivals_bits: arrivals,
            });
        }
        if slot as usize >= cfg.warmup_slots {
            for k in 0..k_total {
                sum_q[k] += next.backlog_bits[k];
                sum_c[k] += outcome.alloc.capacities[k];
            }
        }
        max_q = next.backlog_bits.iter().fold(max_q, |m, &b| m.max(b));
        q = next;
    }

    let mean_queue_bits: Vec<f64> = sum_q.iter().map(|s| s / averaged).collect();
    let mean_capacity: Vec<f64> = sum_c.iter().map(|s| s / averaged).collect();
    let per_flow_delay_s: Vec<f64> = mean_queue_bits
        .iter()
        .zip(&case.lambda_bps)
        .map(|(qb, &l)| if l > 0.0 { qb / l } else { 0.0 })
        .collect();
    let metrics = RunMetrics::from_components(per_flow_delay_s, &mean_capacity, &p.beta, &p.gamma, w, failures);
    Ok(EpisodeOutput {
        topology: case.index,
        metrics,
        mean_capacity,
        mean_queue_bits,
        max_queue_bits: max_q,
        alloc_seconds,
        trace,
    })
}

/// [`run_episode`] over every case, in parallel, results in case order.
pub fn run_scheme(
    cases: &[TopologyCase],
    scheme: Scheme,
    params: &SystemParams,
    cfg: &EpisodeConfig,
    alloc_cfg: &AllocatorConfig,
    gamma_multiplier: f64,
    record_trace: bool,
) -> Result<Vec<EpisodeOutput>> {
    cases
        .par_iter()
        .map(|case| run_episode(case, scheme, params, cfg, alloc_cfg, gamma_multiplier, record_trace))
        .collect()
}
