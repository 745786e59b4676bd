//! Closed-form approximate priority function.
//!
//! Each flow gets a per-flow priority `J_k(Q_k)` from the decoupled base
//! system, given parametrically in the marginal priority `ν = J_k'(Q_k)`:
//!
//! ```text
//! Q_k(ν) = (λ/β)·( ν·r(ν) − λν − κ(ν) + c∞ )
//! r(ν)   = e^a E1(aν/(ν−γ)) / ln2          expected base-system rate
//! κ(ν)   = (γ/ln2) E1(aγ/(ν−γ))            expected capacity cost
//! ```
//!
//! `dQ_k/dν = (λ/β)(r(ν) − λ)`, so `Q_k` has its minimum, zero, at the point
//! `d_k` where `r(d_k) = λ`; the marginal priority at an empty queue is
//! therefore `ν₀ = d_k`. Cross-link coupling enters through a first-order
//! quadratic correction weighted by `Φ_k`.
//!
//! Backlogs passed to this module are in bit/Hz (bits divided by the system
//! bandwidth) so that `dQ/dt = λ − R` holds with rates in bit/s/Hz.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::PathGains;
use crate::error::{Error, Result};
use crate::numerics::{e1_unchecked, expand_upper, find_root_bracketed, scaled_exp_integral_e1, Bracket};
use crate::params::SystemParams;

const PHI_DENOMINATOR_FLOOR: f64 = 1e-12;
const NU_LOWER_MARGIN: f64 = 1e-9;

/// Calibrated constants for one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFlowPriority {
    pub flow: usize,
    pub a: f64,
    pub c_inf: f64,
    pub d: f64,
    pub b: f64,
    pub nu0: f64,
    pub phi: f64,
    pub gamma: f64,
    pub beta: f64,
    pub lambda: f64,
}

/// Ergodic base-system capacity `e^a E1(a) / ln2` for `a = N0/(P·L_kk)`.
pub fn ergodic_capacity(a: f64) -> f64 {
    scaled_exp_integral_e1(a).expect("a > 0") / LN_2
}

/// `e^a E1(aν/(ν−γ))`, evaluated as `e^{−aγ/(ν−γ)}·[e^z E1(z)]`.
fn exp_a_e1_rate_arg(a: f64, gamma: f64, nu: f64) -> f64 {
    let w = nu - gamma;
    let z = a * nu / w;
    let shift = a * gamma / w;
    if shift > 745.0 {
        return 0.0;
    }
    (-shift).exp() * scaled_exp_integral_e1(z).expect("z > 0")
}

impl PerFlowPriority {
    /// Expected base-system rate when the marginal priority is `ν`.
    pub fn expected_rate(&self, nu: f64) -> f64 {
        exp_a_e1_rate_arg(self.a, self.gamma, nu) / LN_2
    }

    /// Expected capacity cost `E[γ C*]` when the marginal priority is `ν`.
    pub fn expected_capacity_cost(&self, nu: f64) -> f64 {
        self.gamma / LN_2 * e1_unchecked(self.a * self.gamma / (nu - self.gamma))
    }

    /// Parametric backlog `Q_k(ν)`.
    pub fn queue_at(&self, nu: f64) -> f64 {
        (self.lambda / self.beta) * (nu * self.expected_rate(nu) - self.lambda * nu - self.expected_capacity_cost(nu) + self.c_inf)
    }

    /// Parametric priority `J_k(ν)`, including the calibrated constant `b_k`.
    pub fn value_at(&self, nu: f64) -> f64 {
        self.value_at_unshifted(nu, self.gamma * self.gamma * (self.a - 1.0)) + self.b
    }

    /// `J_k(ν)` without `b_k`, with the coefficient of `E1(aγ/(ν−γ))` as a
    /// parameter: `γ²(a−1)` integrates `ν·dQ_k/dν` exactly.
    fn value_at_unshifted(&self, nu: f64, e1_coefficient: f64) -> f64 {
        let (a, g, l) = (self.a, self.gamma, self.lambda);
        let w = nu - g;
        let damp = (-a * g / w).exp();
        let bracket =
            g * (g - nu) * damp + nu * nu * exp_a_e1_rate_arg(a, g, nu) + e1_coefficient * e1_unchecked(a * g / w) - l * nu * nu * LN_2;
        l / (2.0 * self.beta * LN_2) * bracket
    }

    fn nu_floor(&self) -> f64 {
        self.gamma * (1.0 + NU_LOWER_MARGIN)
    }
}

/// `Φ_k = (β/λ)(1 − a·e^a E1(a)/N0) / (e^a E1(a) − λ ln2)`.
pub fn phi_coefficient(a: f64, beta: f64, lambda: f64, noise: f64) -> Result<f64> {
    if !(a > 0.0) || !(lambda > 0.0) || !(noise > 0.0) {
        return Err(Error::Domain(format!(
            "phi needs a > 0, lambda > 0, noise > 0 (a={a}, lambda={lambda}, noise={noise})"
        )));
    }
    let ee1 = scaled_exp_integral_e1(a)?;
    let denominator = ee1 - lambda * LN_2;
    if denominator.abs() <= PHI_DENOMINATOR_FLOOR {
        return Err(Error::DegeneratePerturbation { flow: 0, denominator });
    }
    Ok(beta / lambda * (1.0 - a * ee1 / noise) / denominator)
}

/// Calibrates flow `k` with home-link gain `l_kk`.
pub fn calibrate_per_flow(params: &SystemParams, l_kk: f64, k: usize) -> Result<PerFlowPriority> {
    let fail = |reason: String| Error::Calibration { flow: k, reason };
    let (beta, gamma, lambda) = (params.beta[k], params.gamma[k], params.lambda[k]);
    if !(beta > 0.0) {
        return Err(fail(format!("beta must be > 0, got {beta}")));
    }
    if !(l_kk > 0.0) {
        return Err(fail(format!("home gain must be > 0, got {l_kk}")));
    }
    let a = params.noise / (params.power * l_kk);
    let capacity = ergodic_capacity(a);
    if !(lambda > 0.0 && lambda < capacity) {
        return Err(fail(format!(
            "arrival rate {lambda} outside the base-system stability region (0, {capacity})"
        )));
    }

    let mut pf = PerFlowPriority {
        flow: k,
        a,
        c_inf: 0.0,
        d: 0.0,
        b: 0.0,
        nu0: 0.0,
        phi: 0.0,
        gamma,
        beta,
        lambda,
    };

    // d_k: expected rate equals λ. r(ν) rises from 0 at ν=γ⁺ to the ergodic capacity.
    let lo = pf.nu_floor();
    let gap = |nu: f64| pf.expected_rate(nu) - lambda;
    let (blo, bhi) = expand_upper(gap, lo, 2.0 * gamma, 2.0, 2000).map_err(|_| fail("no sign change while bracketing d_k".into()))?;
    let tol = 1e-15 * bhi;
    let bracket = Bracket::new(blo, bhi, tol)?.with_max_iters(400);
    let d = find_root_bracketed(gap, bracket).map_err(|e| fail(format!("solving for d_k: {e}")))?;
    pf.d = d;
    pf.c_inf = pf.expected_capacity_cost(d);
    pf.nu0 = d;
    pf.b = -pf.value_at_unshifted(d, gamma * gamma * (a - 1.0));
    pf.phi = phi_coefficient(a, beta, lambda, params.noise).map_err(|e| match e {
        Error::DegeneratePerturbation { denominator, .. } => Error::DegeneratePerturbation { flow: k, denominator },
        other => other,
    })?;

    verify_monotone(&pf).map_err(fail)?;
    Ok(pf)
}

/// Checks that `ν ↦ Q_k(ν)` increases on a geometric grid above `ν₀`.
fn verify_monotone(pf: &PerFlowPriority) -> std::result::Result<(), String> {
    let mut prev = pf.queue_at(pf.nu0);
    let mut step = pf.nu0 * 1e-3;
    for _ in 0..40 {
        let nu = pf.nu0 + step;
        let q = pf.queue_at(nu);
        if !q.is_finite() || q < prev {
            return Err(format!("Q(ν) not increasing near ν = {nu}"));
        }
        prev = q;
        step *= 2.0;
    }
    Ok(())
}

pub fn calibrate_all(params: &SystemParams, gains: &PathGains) -> Result<Vec<PerFlowPriority>> {
    (0..params.num_flows())
        .map(|k| calibrate_per_flow(params, gains.gain(k, k), k))
        .collect()
}

/// `J_k'(Q_k) = ν(Q_k)`, the inverse of the parametric backlog map.
pub fn priority_derivative(pf: &PerFlowPriority, q_k: f64) -> Result<f64> {
    if !q_k.is_finite() || q_k < 0.0 {
        return Err(Error::Domain(format!("backlog must be finite and >= 0, got {q_k}")));
    }
    if q_k == 0.0 {
        return Ok(pf.nu0);
    }
    let f = |nu: f64| pf.queue_at(nu) - q_k;
    let (lo, hi) = expand_upper(f, pf.nu0, 2.0 * pf.nu0, 2.0, 2000)?;
    let tol = (1e-13 * hi).min(1e-10 * q_k.max(1.0));
    find_root_bracketed(f, Bracket::new(lo, hi, tol)?.with_max_iters(400))
}

/// `J_k(Q_k)`; zero at an empty queue.
pub fn priority_value(pf: &PerFlowPriority, q_k: f64) -> Result<f64> {
    if q_k == 0.0 {
        return Ok(0.0);
    }
    let nu = priority_derivative(pf, q_k)?;
    Ok(pf.value_at(nu))
}

/// `J_k(Q_k)` with the `(a_k − λ_k)·E1(a_kγ_k/(ν−γ_k))` term taken literally
/// from the published closed form. Its derivative in `Q` differs from
/// [`priority_derivative`]; kept for sensitivity comparisons.
pub fn priority_value_as_printed(pf: &PerFlowPriority, q_k: f64) -> Result<f64> {
    let coefficient = pf.a - pf.lambda;
    let b = -pf.value_at_unshifted(pf.nu0, coefficient);
    if q_k == 0.0 {
        return Ok(0.0);
    }
    let nu = priority_derivative(pf, q_k)?;
    Ok(pf.value_at_unshifted(nu, coefficient) + b)
}

/// Per-flow factor `κ_k` of the first-order gradient correction:
/// `Σ_{j≠k} L_kj · Σ_{l≠k} N0/L_ll + Σ_{i≠k} Σ_{j≠i,k} L_ij · N0/L_jj`.
pub fn coupling_coefficients(gains: &PathGains, noise: f64) -> Vec<f64> {
    let k_total = gains.num_cells();
    let inv_home: Vec<f64> = (0..k_total).map(|l| noise / gains.gain(l, l)).collect();
    let inv_home_sum: f64 = inv_home.iter().sum();
    (0..k_total)
        .map(|k| {
            let own_cross: f64 = (0..k_total).filter(|&j| j != k).map(|j| gains.gain(k, j)).sum();
            let first = own_cross * (inv_home_sum - inv_home[k]);
            let second: f64 = (0..k_total)
                .filter(|&i| i != k)
                .map(|i| {
                    (0..k_total)
                        .filter(|&j| j != i && j != k)
                        .map(|j| gains.gain(i, j) * inv_home[j])
                        .sum::<f64>()
                })
                .sum();
            first + second
        })
        .collect()
}

/// Gradient of the approximate priority function:
/// `∂Ṽ/∂Q_k = J_k'(Q_k) + 2Φ_k κ_k Q_k`.
pub fn v_tilde_gradient(priorities: &[PerFlowPriority], gains: &PathGains, noise: f64, q: &[f64]) -> Result<Vec<f64>> {
    let kappa = coupling_coefficients(gains, noise);
    v_tilde_gradient_with(priorities, &kappa, q)
}

/// [`v_tilde_gradient`] with precomputed coupling factors.
pub fn v_tilde_gradient_with(priorities: &[PerFlowPriority], kappa: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    priorities
        .iter()
        .zip(kappa)
        .zip(q)
        .map(|((pf, &kap), &qk)| Ok(priority_derivative(pf, qk)? + 2.0 * pf.phi * kap * qk))
        .collect()
}

/// Approximate priority function `Ṽ(Q)`: the base sum `Σ J_k(Q_k)` plus the
/// first-order quadratic coupling terms.
pub fn v_tilde_value(priorities: &[PerFlowPriority], gains: &PathGains, noise: f64, q: &[f64]) -> Result<f64> {
    let k_total = priorities.len();
    let mut base = 0.0;
    for (pf, &qk) in priorities.iter().zip(q) {
        base += priority_value(pf, qk)?;
    }
    let inv_home: Vec<f64> = (0..k_total).map(|l| noise / gains.gain(l, l)).collect();
    let phi_q2: Vec<f64> = priorities.iter().zip(q).map(|(pf, &qk)| pf.phi * qk * qk).collect();
    let mut perturbation = 0.0;
    for k in 0..k_total {
        let others_inv: f64 = (0..k_total).filter(|&l| l != k).map(|l| inv_home[l]).sum();
        for j in (0..k_total).filter(|&j| j != k) {
            let rest: f64 = (0..k_total).filter(|&i| i != k && i != j).map(|i| phi_q2[i]).sum();
            perturbation += gains.gain(k, j) * (phi_q2[k] * others_inv + inv_home[j] * rest);
        }
    }
    Ok(base + perturbation)
}

/// One row of the calibration report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub flow: usize,
    pub a: f64,
    pub d: f64,
    pub c_inf: f64,
    pub b: f64,
    pub nu0: f64,
    pub phi: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub ergodic_capacity: f64,
}

impl From<&PerFlowPriority> for CalibrationRecord {
    fn from(pf: &PerFlowPriority) -> Self {
        Self {
            flow: pf.flow,
            a: pf.a,
            d: pf.d,
            c_inf: pf.c_inf,
            b: pf.b,
            nu0: pf.nu0,
            phi: pf.phi,
            gamma: pf.gamma,
            lambda: pf.lambda,
            ergodic_capacity: ergodic_capacity(pf.a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::exp_integral_e1;

    fn params(snr_db: f64, gamma: f64, lambda: f64, beta: f64) -> (SystemParams, f64) {
        let p = SystemParams {
            power: 10f64.powf(snr_db / 10.0),
            noise: 1.0,
            bandwidth_hz: 1e7,
            slot_s: 0.01,
            beta: vec![beta],
            gamma: vec![gamma],
            lambda: vec![lambda],
        };
        (p, 1.0)
    }

    #[test]
    fn phi_hand_value() {
        let phi = phi_coefficient(1.0, 1.0, 0.5, 1.0).unwrap();
        let e = std::f64::consts::E * exp_integral_e1(1.0).unwrap();
        let expected = 2.0 * (1.0 - e) / (e - 0.5 * LN_2);
        assert!((phi - expected).abs() < 1e-12);
        assert!((phi - 3.232).abs() < 1e-3);
    }

    #[test]
    fn phi_zero_beta_and_negative_sign() {
        assert_eq!(phi_coefficient(1.0, 0.0, 0.5, 1.0).unwrap(), 0.0);
        // λ ln2 > e^a E1(a): negative denominator, numerator positive for N0 = 1
        let phi = phi_coefficient(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(phi < 0.0);
    }

    #[test]
    fn phi_degenerate_denominator() {
        let lam = std::f64::consts::E * exp_integral_e1(1.0).unwrap() / LN_2;
        assert!(matches!(
            phi_coefficient(1.0, 1.0, lam, 1.0),
            Err(Error::DegeneratePerturbation { .. })
        ));
    }

    #[test]
    fn calibration_residuals() {
        let (p, l) = params(15.0, 0.05, 2.0, 1.0);
        let pf = calibrate_per_flow(&p, l, 0).unwrap();
        let g = pf.expected_rate(pf.d) - 2.0;
        assert!(g.abs() < 1e-9, "d residual {g}");
        assert!(pf.queue_at(pf.nu0).abs() < 1e-12);
        assert_eq!(priority_value(&pf, 0.0).unwrap(), 0.0);
        assert!(pf.value_at(pf.nu0).abs() < 1e-9);
        assert!(pf.d > pf.gamma);
    }

    #[test]
    fn unstable_flow_is_named() {
        let (p, l) = params(0.0, 0.05, 5.0, 1.0);
        match calibrate_per_flow(&p, l, 0).unwrap_err() {
            Error::Calibration { flow, .. } => assert_eq!(flow, 0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn derivative_round_trip_and_monotone() {
        let (p, l) = params(12.0, 0.1, 1.5, 1.0);
        let pf = calibrate_per_flow(&p, l, 0).unwrap();
        assert_eq!(priority_derivative(&pf, 0.0).unwrap(), pf.nu0);
        for i in 1..20 {
            let nu = pf.nu0 * (1.0 + 9.0 * i as f64 / 20.0);
            let q = pf.queue_at(nu);
            let back = priority_derivative(&pf, q).unwrap();
            assert!((back - nu).abs() < 1e-8, "nu={nu} back={back}");
        }
        let a = priority_derivative(&pf, 10.0).unwrap();
        let b = priority_derivative(&pf, 20.0).unwrap();
        assert!(b > a);
        assert!(priority_derivative(&pf, f64::NAN).is_err());
        assert!(priority_derivative(&pf, -1.0).is_err());
    }

    #[test]
    fn printed_value_form_disagrees_with_derivative() {
        let (p, l) = params(10.0, 0.2, 1.0, 1.0);
        let pf = calibrate_per_flow(&p, l, 0).unwrap();
        let q = 1.0;
        let h = 1e-4;
        let fd = |f: &dyn Fn(f64) -> f64| (f(q + h) - f(q - h)) / (2.0 * h);
        let nu = priority_derivative(&pf, q).unwrap();
        let ours = fd(&|x| priority_value(&pf, x).unwrap());
        let printed = fd(&|x| priority_value_as_printed(&pf, x).unwrap());
        assert!(((ours - nu) / nu).abs() < 1e-5);
        assert!(((printed - nu) / nu).abs() > 1e-3);
        assert_eq!(priority_value_as_printed(&pf, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn small_arrival_rate_moves_nu0_toward_gamma() {
        let mut prev = f64::INFINITY;
        for lam in [1.0, 0.1, 1e-3, 1e-6] {
            let (p, l) = params(15.0, 0.05, lam, 1.0);
            let pf = calibrate_per_flow(&p, l, 0).unwrap();
            assert!(pf.nu0 < prev);
            assert!(pf.nu0 > pf.gamma);
            prev = pf.nu0;
        }
        let (p, l) = params(15.0, 0.05, 1e-6, 1.0);
        let pf = calibrate_per_flow(&p, l, 0).unwrap();
        assert!(pf.c_inf < 1e-3);
        assert!((pf.nu0 - pf.gamma) / pf.gamma < 0.2);
    }

    #[test]
    fn coupling_zero_without_cross_gain() {
        let g = PathGains::from_matrix(vec![vec![1.0, 0.0], vec![0.0, 2.0]], 0.0).unwrap();
        assert_eq!(coupling_coefficients(&g, 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn coupling_hand_value_two_cells() {
        // K=2: κ_0 = L_01 · N0/L_11, the double sum is empty.
        let g = PathGains::from_matrix(vec![vec![1.0, 0.1], vec![0.2, 2.0]], 1.0).unwrap();
        let kappa = coupling_coefficients(&g, 1.0);
        assert!((kappa[0] - 0.1 / 2.0).abs() < 1e-15);
        assert!((kappa[1] - 0.2 / 1.0).abs() < 1e-15);
    }
}
