//! Fronthaul quantization noise and zero-forcing uplink rates.
//!
//! Rates and capacities are spectral efficiencies in bit/s/Hz.

use serde::{Deserialize, Serialize};

use crate::channel::CsiSample;
use crate::error::{Error, Result};
use crate::numerics::pow2_minus_one;
use crate::params::SystemParams;

pub const DEFAULT_C_MAX: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FronthaulAlloc {
    pub capacities: Vec<f64>,
}

impl FronthaulAlloc {
    pub fn new(capacities: Vec<f64>) -> Result<Self> {
        Self::with_cap(capacities, DEFAULT_C_MAX)
    }

    pub fn with_cap(capacities: Vec<f64>, c_max: f64) -> Result<Self> {
        for (k, &c) in capacities.iter().enumerate() {
            if !(c >= 0.0 && c <= c_max) {
                return Err(Error::Domain(format!("capacity {k} = {c} outside [0, {c_max}]")));
            }
        }
        Ok(Self { capacities })
    }

    pub fn zeros(k: usize) -> Self {
        Self { capacities: vec![0.0; k] }
    }

    pub fn len(&self) -> usize {
        self.capacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacities.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.capacities.iter().sum()
    }
}

/// Quantization noise powers; `f64::INFINITY` marks a link with `C_k = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantNoise {
    pub powers: Vec<f64>,
}

/// `N_k = (P·Σ_j |H_kj|² + N0) / (2^{C_k} − 1)`.
pub fn quantization_noise(csi: &CsiSample, alloc: &FronthaulAlloc, params: &SystemParams) -> QuantNoise {
    let powers = alloc
        .capacities
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if c <= 0.0 {
                f64::INFINITY
            } else {
                csi.received_power(k, params.power, params.noise) / pow2_minus_one(c)
            }
        })
        .collect();
    QuantNoise { powers }
}

/// ZF post-processing noise seen by flow `k`: `Σ_j |S_kj|²(N0 + N_j)`.
fn post_zf_noise(csi: &CsiSample, noise: &QuantNoise, n0: f64, k: usize) -> f64 {
    csi.s
        .row(k)
        .iter()
        .zip(&noise.powers)
        .map(|(s, &nj)| {
            let w = s.norm_sqr();
            if w == 0.0 {
                0.0
            } else {
                w * (n0 + nj)
            }
        })
        .sum()
}

fn rate_from_noise(power: f64, z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        (power / z).ln_1p() / std::f64::consts::LN_2
    }
}

/// `R_k = log2(1 + P / Σ_j |S_kj|²(N0 + N_j))`.
pub fn user_rate(csi: &CsiSample, alloc: &FronthaulAlloc, params: &SystemParams, k: usize) -> f64 {
    let noise = quantization_noise(csi, alloc, params);
    rate_from_noise(params.power, post_zf_noise(csi, &noise, params.noise, k))
}

/// All `K` rates in one pass.
pub fn user_rates(csi: &CsiSample, alloc: &FronthaulAlloc, params: &SystemParams) -> Vec<f64> {
    let noise = quantization_noise(csi, alloc, params);
    (0..csi.num_cells())
        .map(|k| rate_from_noise(params.power, post_zf_noise(csi, &noise, params.noise, k)))
        .collect()
}

/// Interference-free rate of the decoupled system:
/// `log2(1 + P·|H_kk|² / (N0 + N_k))` with `N_k = (P·|H_kk|² + N0)/(2^{C_k} − 1)`.
pub fn base_rate(h_kk_sq: f64, c_k: f64, params: &SystemParams) -> f64 {
    if c_k <= 0.0 {
        return 0.0;
    }
    let signal = params.power * h_kk_sq;
    let nq = (signal + params.noise) / pow2_minus_one(c_k);
    (signal / (params.noise + nq)).ln_1p() / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ComplexMatrix;
    use num_complex::Complex64;

    fn unit_params(k: usize) -> SystemParams {
        SystemParams {
            power: 1.0,
            noise: 1.0,
            bandwidth_hz: 1.0,
            slot_s: 1.0,
            beta: vec![1.0; k],
            gamma: vec![1.0; k],
            lambda: vec![0.1; k],
        }
    }

    fn scalar_csi(h: f64) -> CsiSample {
        CsiSample::from_channel(ComplexMatrix::from_diagonal(&[Complex64::new(h, 0.0)]), 0).unwrap()
    }

    #[test]
    fn quantization_noise_arithmetic() {
        // P·|H|² + N0 = 2, C = 1 -> N = 2
        let n = quantization_noise(&scalar_csi(1.0), &FronthaulAlloc::new(vec![1.0]).unwrap(), &unit_params(1));
        assert!((n.powers[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quantization_noise_limits() {
        let p = unit_params(1);
        let csi = scalar_csi(1.0);
        let n = quantization_noise(&csi, &FronthaulAlloc::with_cap(vec![40.0], 50.0).unwrap(), &p);
        assert!(n.powers[0] < 1e-11 * 2.0);
        let n0 = quantization_noise(&csi, &FronthaulAlloc::zeros(1), &p);
        assert!(n0.powers[0].is_infinite());
    }

    #[test]
    fn identity_channel_without_quantization() {
        let p = unit_params(2);
        let csi = CsiSample::from_channel(ComplexMatrix::identity(2), 0).unwrap();
        // C huge makes N_k vanish
        let r = user_rate(&csi, &FronthaulAlloc::new(vec![30.0, 30.0]).unwrap(), &p, 0);
        assert!((r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn single_user_hand_value() {
        let r = user_rate(&scalar_csi(1.0), &FronthaulAlloc::new(vec![1.0]).unwrap(), &unit_params(1), 0);
        assert!((r - (4.0f64 / 3.0).log2()).abs() < 1e-12);
        assert!((r - 0.4150).abs() < 1e-4);
        assert!((base_rate(1.0, 1.0, &unit_params(1)) - r).abs() < 1e-14);
    }

    #[test]
    fn zero_capacity_kills_coupled_flows() {
        let p = unit_params(2);
        let h = ComplexMatrix::from_rows(vec![
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.2, 0.1)],
            vec![Complex64::new(0.1, -0.3), Complex64::new(1.0, 0.0)],
        ])
        .unwrap();
        let csi = CsiSample::from_channel(h, 0).unwrap();
        let rates = user_rates(&csi, &FronthaulAlloc::new(vec![0.0, 5.0]).unwrap(), &p);
        assert_eq!(rates, vec![0.0, 0.0]);
    }

    #[test]
    fn base_rate_limits() {
        let p = unit_params(1);
        assert_eq!(base_rate(1.0, 0.0, &p), 0.0);
        assert!((base_rate(3.0, 40.0, &p) - 2.0).abs() < 1e-9);
    }
}
