use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-averaged performance of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// `Σ_k β_k D̄_k / Σ_k β_k`.
    pub avg_delay_s: f64,
    pub avg_total_capacity_bps: f64,
    /// `D̄_k`: time-average of `Q_k/λ_k`.
    pub per_flow_delay_s: Vec<f64>,
    /// `Σ_k (β_k D̄_k + γ_k C̄_k)` with `C̄_k` in bit/s/Hz.
    pub objective_l: f64,
    pub convergence_failures: usize,
}

impl RunMetrics {
    pub fn from_components(
        per_flow_delay_s: Vec<f64>,
        mean_capacity: &[f64],
        beta: &[f64],
        gamma: &[f64],
        bandwidth_hz: f64,
        convergence_failures: usize,
    ) -> Self {
        let beta_sum: f64 = beta.iter().sum();
        let weighted: f64 = per_flow_delay_s.iter().zip(beta).map(|(d, b)| b * d).sum();
        let avg_delay_s = if beta_sum > 0.0 {
            weighted / beta_sum
        } else {
            per_flow_delay_s.iter().sum::<f64>() / per_flow_delay_s.len() as f64
        };
        let capacity_cost: f64 = mean_capacity.iter().zip(gamma).map(|(c, g)| g * c).sum();
        Self {
            avg_delay_s,
            avg_total_capacity_bps: mean_capacity.iter().sum::<f64>() * bandwidth_hz,
            per_flow_delay_s,
            objective_l: weighted + capacity_cost,
            convergence_failures,
        }
    }
}

/// Topology-averaged metrics with standard errors of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub runs: usize,
    pub mean: RunMetrics,
    pub avg_delay_s_se: f64,
    pub avg_total_capacity_bps_se: f64,
    pub objective_l_se: f64,
    pub per_flow_delay_s_se: Vec<f64>,
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate_metrics(runs: &[RunMetrics]) -> Result<AggregateMetrics> {
    let first = runs.first().ok_or(Error::Empty("runs"))?;
    let k = first.per_flow_delay_s.len();
    if runs.iter().any(|r| r.per_flow_delay_s.len() != k) {
        return Err(Error::Domain("runs disagree on the number of flows".into()));
    }
    let (avg_delay_s, avg_delay_s_se) = mean_and_se(runs.iter().map(|r| r.avg_delay_s));
    let (cap, cap_se) = mean_and_se(runs.iter().map(|r| r.avg_total_capacity_bps));
    let (l, l_se) = mean_and_se(runs.iter().map(|r| r.objective_l));
    let per_flow: Vec<(f64, f64)> = (0..k)
        .map(|j| mean_and_se(runs.iter().map(move |r| r.per_flow_delay_s[j])))
        .collect();
    Ok(AggregateMetrics {
        runs: runs.len(),
        mean: RunMetrics {
            avg_delay_s,
            avg_total_capacity_bps: cap,
            per_flow_delay_s: per_flow.iter().map(|p| p.0).collect(),
            objective_l: l,
            convergence_failures: runs.iter().map(|r| r.convergence_failures).sum(),
        },
        avg_delay_s_se,
        avg_total_capacity_bps_se: cap_se,
        objective_l_se: l_se,
        per_flow_delay_s_se: per_flow.iter().map(|p| p.1).collect(),
    })
}
