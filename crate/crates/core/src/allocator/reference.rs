//! Brute-force reference maximizer of the per-stage objective.
//!
//! Projected gradient ascent over `[lower, c_max]^K` with finite-difference
//! gradients of [`per_stage_objective`], Barzilai–Borwein steps and an
//! Armijo safeguard, restarted from several uniform starting points. It
//! shares nothing with the closed-form update beyond the rate formula and
//! exists to cross-check it.

use serde::{Deserialize, Serialize};

use super::per_stage_objective;
use crate::channel::CsiSample;
use crate::params::SystemParams;
use crate::phy::{FronthaulAlloc, DEFAULT_C_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub starts: Vec<f64>,
    pub lower: f64,
    pub c_max: f64,
    pub max_iters: usize,
    /// Stop once the projected-gradient step is below this (sup norm).
    pub tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            starts: vec![0.5, 2.0, 6.0, 12.0],
            lower: 1e-6,
            c_max: DEFAULT_C_MAX,
            max_iters: 5000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub capacities: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Problem<'a> {
    csi: &'a CsiSample,
    weights: &'a [f64],
    params: &'a SystemParams,
    lower: f64,
    upper: f64,
}

impl Problem<'_> {
    fn value(&self, c: &[f64]) -> f64 {
        let alloc = FronthaulAlloc { capacities: c.to_vec() };
        per_stage_objective(self.csi, &alloc, self.weights, &self.params.gamma, self.params)
    }

    fn gradient(&self, c: &[f64]) -> Vec<f64> {
        let mut x = c.to_vec();
        (0..c.len())
            .map(|k| {
                let h = 1e-6 * c[k].max(1e-3);
                let lo = (c[k] - h).max(self.lower);
                let hi = (c[k] + h).min(self.upper);
                x[k] = hi;
                let f_hi = self.value(&x);
                x[k] = lo;
                let f_lo = self.value(&x);
                x[k] = c[k];
                (f_hi - f_lo) / (hi - lo)
            })
            .collect()
    }

    fn project(&self, c: &mut [f64]) {
        for v in c {
            *v = v.clamp(self.lower, self.upper);
        }
    }
}

fn ascend(p: &Problem, start: Vec<f64>, max_iters: usize, tol: f64) -> (Vec<f64>, f64, usize) {
    let mut x = start;
    p.project(&mut x);
    let mut f = p.value(&x);
    let mut g = p.gradient(&x);
    let mut step = 1.0;
    for it in 0..max_iters {
        let mut pg = x.clone();
        for (v, gi) in pg.iter_mut().zip(&g) {
            *v += gi;
        }
        p.project(&mut pg);
        let pg_norm = pg.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if pg_norm < tol {
            return (x, f, it);
        }

        let mut t = step;
        let (x_new, f_new) = loop {
            let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + t * gi).collect();
            p.project(&mut trial);
            let ascent: f64 = trial.iter().zip(&x).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
            let f_trial = p.value(&trial);
            if f_trial >= f + 1e-4 * ascent || t < 1e-14 {
                break (trial, f_trial);
            }
            t *= 0.5;
        };
        let g_new = p.gradient(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(g_new.iter().zip(&g)).map(|(si, (a, b))| si * (a - b)).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        step = if sy < 0.0 {
            (ss / -sy).clamp(1e-8, 1e4)
        } else {
            (t * 2.0).min(1e4)
        };
        if ss == 0.0 && f_new <= f {
            return (x, f, it);
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
    (x, f, max_iters)
}

/// Best local maximum over the configured starts.
pub fn reference_maximize(csi: &CsiSample, weights: &[f64], params: &SystemParams, cfg: &ReferenceConfig) -> ReferenceSolution {
    let p = Problem {
        csi,
        weights,
        params,
        lower: cfg.lower,
        upper: cfg.c_max,
    };
    let k = csi.num_cells();
    let mut best: Option<ReferenceSolution> = None;
    for &s in &cfg.starts {
        let (x, f, iterations) = ascend(&p, vec![s; k], cfg.max_iters, cfg.tol);
        if best.as_ref().is_none_or(|b| f > b.objective) {
            best = Some(ReferenceSolution {
                capacities: x,
                objective: f,
                iterations,
            });
        }
    }
    best.expect("at least one start")
}
