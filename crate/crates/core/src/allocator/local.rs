use serde::{Deserialize, Serialize};

use super::{AllocatorConfig, BestResponse};
use crate::channel::CsiSample;
use crate::numerics::{find_root_bracketed, pow2_minus_one, Bracket};
use crate::params::SystemParams;

/// `|S_ij|²`, `Y_k`, `P` and `N0` of one slot, precomputed for the
/// allocator's inner loop.
#[derive(Debug, Clone)]
pub struct StageView {
    k: usize,
    s2: Vec<f64>,
    y: Vec<f64>,
    power: f64,
    noise: f64,
}

/// `1/(2^c − 1)` and `2^c/(2^c − 1)²` at `max(c, floor)`.
#[inline]
fn inv_q(c: f64, floor: f64) -> (f64, f64) {
    let u = 1.0 / pow2_minus_one(c.max(floor));
    (u, u + u * u)
}

impl StageView {
    pub fn new(csi: &CsiSample, params: &SystemParams) -> Self {
        let k = csi.num_cells();
        let mut s2 = Vec::with_capacity(k * k);
        for i in 0..k {
            s2.extend(csi.s.row(i).iter().map(|z| z.norm_sqr()));
        }
        let y = (0..k).map(|j| csi.received_power(j, params.power, params.noise)).collect();
        Self {
            k,
            s2,
            y,
            power: params.power,
            noise: params.noise,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.k
    }

    #[inline]
    fn s2(&self, i: usize, j: usize) -> f64 {
        self.s2[i * self.k + j]
    }

    pub fn received_power(&self, k: usize) -> f64 {
        self.y[k]
    }

    /// `Σ_j |S_ij|²(N0 + Y_j/(2^{C_j} − 1))` with `C` floored.
    fn post_zf_noise(&self, c: &[f64], i: usize, floor: f64) -> f64 {
        (0..self.k)
            .map(|j| {
                let w = self.s2(i, j);
                if w == 0.0 {
                    0.0
                } else {
                    w * (self.noise + self.y[j] * inv_q(c[j], floor).0)
                }
            })
            .sum()
    }

    /// `∂(w_i·R_i)/∂C_k` at `C`: the price flow `k` charges for flow `i`.
    pub fn pi(&self, c: &[f64], weights: &[f64], i: usize, k: usize, floor: f64) -> f64 {
        let s2 = self.s2(i, k);
        if s2 == 0.0 || weights[i] == 0.0 {
            return 0.0;
        }
        let z = self.post_zf_noise(c, i, floor);
        weights[i] * self.power * s2 * self.y[k] * inv_q(c[k], floor).1 / ((self.power + z) * z)
    }

    /// See [`kkt_residual`].
    pub fn kkt_residual(&self, c: &[f64], weights: &[f64], gamma_k: f64, k: usize, c_k_new: f64, floor: f64) -> f64 {
        let price_sum: f64 = (0..self.k).filter(|&i| i != k).map(|i| self.pi(c, weights, i, k, floor)).sum();
        let mut moved = c.to_vec();
        moved[k] = c_k_new;
        self.pi(&moved, weights, k, k, floor) + price_sum - gamma_k
    }

    /// Per-stage objective with exact `C_k = 0` semantics.
    pub fn objective(&self, c: &[f64], weights: &[f64], gamma: &[f64]) -> f64 {
        (0..self.k)
            .map(|i| {
                let dead = (0..self.k).any(|j| self.s2(i, j) != 0.0 && c[j] <= 0.0);
                let rate = if dead {
                    0.0
                } else {
                    let z = self.post_zf_noise(c, i, 0.0);
                    (self.power / z).ln_1p() / std::f64::consts::LN_2
                };
                weights[i] * rate - gamma[i] * c[i]
            })
            .sum()
    }
}

/// Intermediate quantities of one local update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalUpdateTerms {
    /// `I_kk + |S_kk|²·N0`.
    pub a: f64,
    pub s_kk_sq: f64,
    pub y_k: f64,
    /// `Σ_{i≠k} π_ik`.
    pub price_sum: f64,
    /// `γ_k − Σ_{i≠k} π_ik`.
    pub effective_price: f64,
    pub eta: f64,
    pub zeta: f64,
    pub discriminant: f64,
    /// Clamped to `[0, c_max]`.
    pub capacity: f64,
}

pub(crate) fn terms_with_view(
    view: &StageView,
    c: &[f64],
    weights: &[f64],
    gamma_k: f64,
    k: usize,
    cfg: &AllocatorConfig,
) -> LocalUpdateTerms {
    let floor = cfg.c_floor;
    let p = view.power;
    let s = view.s2(k, k);
    let y = view.y[k];
    let interference: f64 = (0..view.k)
        .filter(|&j| j != k)
        .map(|j| {
            let w = view.s2(k, j);
            if w == 0.0 {
                0.0
            } else {
                w * (view.noise + view.y[j] * inv_q(c[j], floor).0)
            }
        })
        .sum();
    let a = interference + s * view.noise;
    let price_sum: f64 = (0..view.k).filter(|&i| i != k).map(|i| view.pi(c, weights, i, k, floor)).sum();
    let effective_price = gamma_k - price_sum;
    let w = weights[k];
    let psy = p * s * y;
    let zeta = 2.0 * a * (p + a) - s * y * (2.0 * a + p);

    let mut terms = LocalUpdateTerms {
        a,
        s_kk_sq: s,
        y_k: y,
        price_sum,
        effective_price,
        eta: f64::NAN,
        zeta,
        discriminant: f64::NAN,
        capacity: 0.0,
    };

    if w <= 0.0 || s == 0.0 {
        terms.capacity = if effective_price < 0.0 { cfg.c_max } else { 0.0 };
        return terms;
    }
    if effective_price <= 0.0 {
        terms.capacity = cfg.c_max;
        return terms;
    }

    let eta = w * psy / effective_price;
    let disc = eta * eta + 2.0 * eta * zeta + psy * psy;
    terms.eta = eta;
    terms.discriminant = disc;
    if !(disc >= 0.0) {
        return terms;
    }
    let root = disc.sqrt();
    let sum = eta + zeta;
    let numerator = if sum >= 0.0 {
        sum + root
    } else {
        (psy - zeta) * (psy + zeta) / (root - sum)
    };
    let x = numerator / (2.0 * (p + a) * a);
    terms.capacity = if x > 1.0 { x.log2().min(cfg.c_max) } else { 0.0 };
    terms
}

/// `w_k·∂R_k/∂C_k + Σ_{i≠k} ∂(w_i R_i)/∂C_k − γ_k` with `C_k = x`.
fn full_marginal(view: &StageView, c: &mut [f64], weights: &[f64], gamma_k: f64, k: usize, x: f64, floor: f64) -> f64 {
    let saved = c[k];
    c[k] = x;
    let total: f64 = (0..view.k).map(|i| view.pi(c, weights, i, k, floor)).sum();
    c[k] = saved;
    total - gamma_k
}

/// Exact coordinate best response: the root in `[0, c_max]` of the full
/// marginal with the prices moving along with `C_k`. The closed-form
/// linearized update only narrows the bracket.
pub(crate) fn exact_update_with_view(view: &StageView, c: &[f64], weights: &[f64], gamma_k: f64, k: usize, cfg: &AllocatorConfig) -> f64 {
    let mut work = c.to_vec();
    let floor = cfg.c_floor;
    let mut h = |x: f64| full_marginal(view, &mut work, weights, gamma_k, k, x, floor);
    if h(floor) <= 0.0 {
        return 0.0;
    }
    if h(cfg.c_max) >= 0.0 {
        return cfg.c_max;
    }
    let seed = update_with_view(view, c, weights, gamma_k, k, cfg).clamp(floor, cfg.c_max);
    let (lo, hi) = match h(seed) {
        0.0 => return seed,
        v if v > 0.0 => (seed, cfg.c_max),
        _ => (floor, seed),
    };
    Bracket::new(lo, hi, 1e-12 * hi.max(1.0))
        .and_then(|b| find_root_bracketed(&mut h, b.with_max_iters(400)))
        .unwrap_or(0.5 * (lo + hi))
}

/// One flow's update under the configured best-response rule.
#[inline]
pub(crate) fn best_response(
    view: &StageView,
    c: &[f64],
    weights: &[f64],
    gamma_k: f64,
    k: usize,
    cfg: &AllocatorConfig,
    rule: BestResponse,
) -> f64 {
    match rule {
        BestResponse::Exact => exact_update_with_view(view, c, weights, gamma_k, k, cfg),
        BestResponse::Linearized => update_with_view(view, c, weights, gamma_k, k, cfg),
    }
}

#[inline]
pub(crate) fn update_with_view(view: &StageView, c: &[f64], weights: &[f64], gamma_k: f64, k: usize, cfg: &AllocatorConfig) -> f64 {
    terms_with_view(view, c, weights, gamma_k, k, cfg).capacity
}

/// Closed-form maximizer of flow `k`'s linearized local objective with the
/// other capacities held at `c`.
pub fn local_capacity_update(csi: &CsiSample, params: &SystemParams, c: &[f64], weights: &[f64], k: usize, cfg: &AllocatorConfig) -> f64 {
    update_with_view(&StageView::new(csi, params), c, weights, params.gamma[k], k, cfg)
}

/// As [`local_capacity_update`], also returning the intermediate terms.
pub fn local_update_terms(
    csi: &CsiSample,
    params: &SystemParams,
    c: &[f64],
    weights: &[f64],
    k: usize,
    cfg: &AllocatorConfig,
) -> LocalUpdateTerms {
    terms_with_view(&StageView::new(csi, params), c, weights, params.gamma[k], k, cfg)
}

/// `π_ik = w_i·P·|S_ik|²·Y_k·2^{C_k} / ((2^{C_k} − 1)²·Z_i·(P + Z_i))`.
pub fn marginal_price_pi(csi: &CsiSample, params: &SystemParams, c: &[f64], weights: &[f64], i: usize, k: usize, c_floor: f64) -> f64 {
    StageView::new(csi, params).pi(c, weights, i, k, c_floor)
}

/// Stationarity residual of flow `k`'s local problem at `c_k_new`:
/// `w_k·∂R_k/∂C_k + Σ_{i≠k} π_ik(c) − γ_k`, the own term evaluated with
/// `C_k = c_k_new` and the prices frozen at `c`.
pub fn kkt_residual(csi: &CsiSample, params: &SystemParams, c: &[f64], weights: &[f64], k: usize, c_k_new: f64, c_floor: f64) -> f64 {
    StageView::new(csi, params).kkt_residual(c, weights, params.gamma[k], k, c_k_new, c_floor)
}
