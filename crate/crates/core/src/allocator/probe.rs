use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StageView;
use crate::channel::CsiSample;
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::rng::{substream, StreamKind};

/// Upper end of the sampled capacity range `(0, C_PROBE_MAX]`.
pub const C_PROBE_MAX: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub cross_scale: f64,
    pub samples: usize,
    pub violations: usize,
    pub fraction: f64,
}

/// Copy of `csi` with every off-diagonal `H_kj` multiplied by `sqrt(scale)`,
/// so cross-link gains scale by `scale`.
pub fn scale_cross_links(csi: &CsiSample, scale: f64) -> Result<CsiSample> {
    if !(0.0..=1.0).contains(&scale) {
        return Err(Error::Domain(format!("cross scale {scale} outside [0, 1]")));
    }
    let mut h = csi.h.clone();
    let amp = scale.sqrt();
    for i in 0..h.dim() {
        for j in 0..h.dim() {
            if i != j {
                h[(i, j)] *= amp;
            }
        }
    }
    CsiSample::from_channel(h, csi.slot_index)
}

/// Midpoint-concavity check of the per-stage objective.
///
/// For each scale, `samples` pairs `C¹, C²` are drawn uniformly from
/// `(0, 20]^K` (the same pairs for every scale) and a violation is counted
/// when `f((C¹+C²)/2) < (f(C¹)+f(C²))/2` beyond rounding.
pub fn convexity_probe(
    csi: &CsiSample,
    weights: &[f64],
    params: &SystemParams,
    cross_scales: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<ConvexityReport>> {
    let k = csi.num_cells();
    let mut rng = substream(seed, StreamKind::Probe, csi.slot_index, 0);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|_| {
            let mut draw = || (0..k).map(|_| C_PROBE_MAX * (1.0 - rng.random::<f64>())).collect::<Vec<_>>();
            (draw(), draw())
        })
        .collect();

    cross_scales
        .iter()
        .map(|&scale| {
            let scaled = scale_cross_links(csi, scale)?;
            let view = StageView::new(&scaled, params);
            let violations = pairs
                .iter()
                .filter(|(c1, c2)| {
                    let mid: Vec<f64> = c1.iter().zip(c2).map(|(a, b)| 0.5 * (a + b)).collect();
                    let f1 = view.objective(c1, weights, &params.gamma);
                    let f2 = view.objective(c2, weights, &params.gamma);
                    let fm = view.objective(&mid, weights, &params.gamma);
                    fm < 0.5 * (f1 + f2) - 1e-10 * (1.0 + f1.abs() + f2.abs())
                })
                .count();
            Ok(ConvexityReport {
                cross_scale: scale,
                samples,
                violations,
                fraction: if samples == 0 { 0.0 } else { violations as f64 / samples as f64 },
            })
        })
        .collect()
}
