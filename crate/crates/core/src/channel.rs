//! Cell layout, large-scale path gains and per-slot Rayleigh fading.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{invert_complex_matrix, ComplexMatrix};
use crate::rng::{substream, StreamKind};

/// Closest a UE is placed to its own RU, in meters.
pub const MIN_UE_DISTANCE_M: f64 = 35.0;
/// Distances below this are clamped before evaluating the path-loss law.
pub const MIN_PATH_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub num_cells: usize,
    pub cell_radius_m: f64,
    pub ru_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub seed: u64,
}

impl Topology {
    pub fn distance(&self, ru: usize, ue: usize) -> f64 {
        let [ax, ay] = self.ru_positions[ru];
        let [bx, by] = self.ue_positions[ue];
        (ax - bx).hypot(ay - by)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }
}

/// RU sites on a hexagonal lattice with inter-site distance `2·radius`,
/// center first, then ring by ring counter-clockwise from the +x axis.
pub fn hex_sites(num_cells: usize, radius: f64) -> Vec<[f64; 2]> {
    let isd = 2.0 * radius;
    let mut sites: Vec<(i64, f64, [f64; 2])> = Vec::new();
    let mut ring = 0i64;
    while sites.len() < num_cells {
        for q in -ring..=ring {
            for r in -ring..=ring {
                let s = -q - r;
                if q.abs().max(r.abs()).max(s.abs()) != ring {
                    continue;
                }
                let x = isd * (q as f64 + r as f64 / 2.0);
                let y = isd * (r as f64 * 3f64.sqrt() / 2.0);
                let mut angle = y.atan2(x);
                if angle < -1e-12 {
                    angle += 2.0 * std::f64::consts::PI;
                }
                sites.push((ring, angle.max(0.0), [x, y]));
            }
        }
        ring += 1;
    }
    sites.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    sites.truncate(num_cells);
    sites.into_iter().map(|(_, _, p)| p).collect()
}

pub fn generate_topology(num_cells: usize, cell_radius_m: f64, seed: u64) -> Topology {
    assert!(num_cells >= 1, "need at least one cell");
    assert!(cell_radius_m > 0.0, "cell radius must be positive");
    let ru_positions = hex_sites(num_cells, cell_radius_m);
    let mut rng = substream(seed, StreamKind::Topology, num_cells as u64, cell_radius_m.to_bits());
    let r_min = MIN_UE_DISTANCE_M.min(0.5 * cell_radius_m);
    let ue_positions = ru_positions
        .iter()
        .map(|&[x, y]| {
            // uniform on the annulus [r_min, radius]
            let u: f64 = rng.random();
            let r = (r_min * r_min + u * (cell_radius_m * cell_radius_m - r_min * r_min)).sqrt();
            let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            [x + r * theta.cos(), y + r * theta.sin()]
        })
        .collect();
    Topology {
        num_cells,
        cell_radius_m,
        ru_positions,
        ue_positions,
        seed,
    }
}

/// Path loss in dB at distance `d_m` meters: `15.3 + 37.6·log10(d)`.
pub fn path_loss_db(d_m: f64) -> f64 {
    15.3 + 37.6 * d_m.log10()
}

/// Linear power gain `10^{−PL_dB/10}`.
pub fn path_gain_linear(d_m: f64) -> f64 {
    10f64.powf(-path_loss_db(d_m.max(MIN_PATH_DISTANCE_M)) / 10.0)
}

/// Large-scale gains; `gains[k][j]` is the gain from UE `j` to RU `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGains {
    gains: Vec<Vec<f64>>,
    cross_scale: f64,
}

impl PathGains {
    pub fn from_matrix(gains: Vec<Vec<f64>>, cross_scale: f64) -> Result<Self> {
        let k = gains.len();
        if k == 0 || gains.iter().any(|r| r.len() != k) {
            return Err(Error::Domain("path gain matrix must be square and non-empty".into()));
        }
        for (i, row) in gains.iter().enumerate() {
            if !(row[i] > 0.0 && row[i].is_finite()) {
                return Err(Error::Domain(format!("diagonal gain {i} must be > 0")));
            }
            if row.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                return Err(Error::Domain("gains must be finite and >= 0".into()));
            }
        }
        Ok(Self { gains, cross_scale })
    }

    pub fn num_cells(&self) -> usize {
        self.gains.len()
    }

    pub fn gain(&self, k: usize, j: usize) -> f64 {
        self.gains[k][j]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.gains
    }

    pub fn cross_scale(&self) -> f64 {
        self.cross_scale
    }

    /// Worst-case cross gain `δ = max_{k≠j} L_kj` (0 for a single cell).
    pub fn delta(&self) -> f64 {
        let k = self.gains.len();
        (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.gains[i][j])
            .fold(0.0, f64::max)
    }

    /// Copy with every off-diagonal gain multiplied by `factor`.
    pub fn scale_cross(&self, factor: f64) -> Self {
        let mut g = self.gains.clone();
        for (i, row) in g.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    *v *= factor;
                }
            }
        }
        Self {
            gains: g,
            cross_scale: self.cross_scale * factor,
        }
    }
}

pub fn compute_path_gains(topo: &Topology, cross_scale: f64) -> Result<PathGains> {
    if !(0.0..=1.0).contains(&cross_scale) {
        return Err(Error::Domain(format!("cross_scale must lie in [0, 1], got {cross_scale}")));
    }
    let k = topo.num_cells;
    let mut gains = vec![vec![0.0; k]; k];
    for (ru, row) in gains.iter_mut().enumerate() {
        for (ue, g) in row.iter_mut().enumerate() {
            let d = topo.distance(ru, ue);
            if !(d > 1e-9) {
                return Err(Error::DegenerateGeometry(format!("UE {ue} coincides with RU {ru}")));
            }
            *g = path_gain_linear(d);
            if ru != ue {
                *g *= cross_scale;
            }
        }
    }
    Ok(PathGains { gains, cross_scale })
}

/// One slot's channel `H` and its zero-forcing matrix `S = H⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiSample {
    pub h: ComplexMatrix,
    pub s: ComplexMatrix,
    pub slot_index: u64,
}

impl CsiSample {
    pub fn from_channel(h: ComplexMatrix, slot_index: u64) -> Result<Self> {
        let s = invert_complex_matrix(&h)?;
        Ok(Self { h, s, slot_index })
    }

    pub fn num_cells(&self) -> usize {
        self.h.dim()
    }

    /// `Y_k = P·Σ_j |H_kj|² + N0`, the received power at RU `k`.
    pub fn received_power(&self, k: usize, power: f64, noise: f64) -> f64 {
        power * self.h.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise
    }
}

fn standard_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws `H_kj = sqrt(L_kj)·H̃_kj` with `H̃_kj ~ CN(0, 1)`; one resample on
/// a singular draw.
pub fn sample_csi<R: Rng + ?Sized>(gains: &PathGains, slot_index: u64, rng: &mut R) -> Result<CsiSample> {
    let k = gains.num_cells();
    let mut last_err = None;
    for _ in 0..2 {
        let mut h = ComplexMatrix::zeros(k);
        for i in 0..k {
            for j in 0..k {
                let g = gains.gain(i, j);
                let fade = standard_complex_gaussian(rng);
                h[(i, j)] = if g > 0.0 { fade * g.sqrt() } else { Complex64::new(0.0, 0.0) };
            }
        }
        match CsiSample::from_channel(h, slot_index) {
            Ok(c) => return Ok(c),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("loop ran"))
}

/// CSI for `(seed, topology, slot)` from its own sub-stream.
pub fn sample_csi_for_slot(gains: &PathGains, seed: u64, topology_index: u64, slot_index: u64) -> Result<CsiSample> {
    let mut rng = substream(seed, StreamKind::Csi, topology_index, slot_index);
    sample_csi(gains, slot_index, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_at_origin() {
        let t = generate_topology(1, 500.0, 7);
        assert_eq!(t.ru_positions, vec![[0.0, 0.0]]);
        let d = t.distance(0, 0);
        assert!((MIN_UE_DISTANCE_M..=500.0).contains(&d));
    }

    #[test]
    fn seven_cell_hex_layout() {
        let t = generate_topology(7, 500.0, 1);
        assert_eq!(t.ru_positions[0], [0.0, 0.0]);
        for p in &t.ru_positions[1..] {
            assert!((p[0].hypot(p[1]) - 1000.0).abs() < 1e-9);
        }
        // first neighbor on +x axis, then every 60 degrees
        for (i, p) in t.ru_positions[1..].iter().enumerate() {
            let expected = (i as f64) * std::f64::consts::PI / 3.0;
            let mut a = p[1].atan2(p[0]);
            if a < -1e-9 {
                a += 2.0 * std::f64::consts::PI;
            }
            assert!((a - expected).abs() < 1e-9);
        }
        for k in 0..7 {
            assert!(t.distance(k, k) <= 500.0 + 1e-9);
        }
    }

    #[test]
    fn second_ring_spacing() {
        let sites = hex_sites(19, 500.0);
        assert_eq!(sites.len(), 19);
        for (i, a) in sites.iter().enumerate() {
            for b in &sites[i + 1..] {
                assert!((a[0] - b[0]).hypot(a[1] - b[1]) > 1000.0 - 1e-6);
            }
        }
    }

    #[test]
    fn topology_is_deterministic() {
        assert_eq!(generate_topology(7, 500.0, 3), generate_topology(7, 500.0, 3));
        assert_ne!(generate_topology(7, 500.0, 3), generate_topology(7, 500.0, 4));
    }

    #[test]
    fn path_gain_at_one_meter() {
        assert!((path_gain_linear(1.0) - 10f64.powf(-1.53)).abs() < 1e-15);
        assert!((path_gain_linear(1.0) - 0.0295).abs() < 1e-4);
    }

    #[test]
    fn zero_cross_scale_is_base_system() {
        let t = generate_topology(7, 500.0, 1);
        let g = compute_path_gains(&t, 0.0).unwrap();
        assert_eq!(g.delta(), 0.0);
        for k in 0..7 {
            assert!(g.gain(k, k) > 0.0);
        }
    }

    #[test]
    fn cross_scale_is_linear_off_diagonal() {
        let t = generate_topology(7, 500.0, 9);
        let full = compute_path_gains(&t, 1.0).unwrap();
        let part = compute_path_gains(&t, 0.3).unwrap();
        for k in 0..7 {
            for j in 0..7 {
                if k == j {
                    assert_eq!(full.gain(k, j), part.gain(k, j));
                } else {
                    assert!((part.gain(k, j) - 0.3 * full.gain(k, j)).abs() <= 1e-15 * full.gain(k, j));
                }
            }
        }
    }

    #[test]
    fn home_closer_than_cross_means_delta_below_diagonal() {
        let t = Topology {
            num_cells: 2,
            cell_radius_m: 500.0,
            ru_positions: vec![[0.0, 0.0], [1000.0, 0.0]],
            ue_positions: vec![[-100.0, 0.0], [1100.0, 0.0]],
            seed: 0,
        };
        let g = compute_path_gains(&t, 1.0).unwrap();
        assert!(g.delta() < g.gain(0, 0).min(g.gain(1, 1)));
    }

    #[test]
    fn coincident_positions_rejected() {
        let t = Topology {
            num_cells: 1,
            cell_radius_m: 500.0,
            ru_positions: vec![[0.0, 0.0]],
            ue_positions: vec![[0.0, 0.0]],
            seed: 0,
        };
        assert!(matches!(compute_path_gains(&t, 1.0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn base_system_csi_is_diagonal() {
        let t = generate_topology(2, 500.0, 5);
        let g = compute_path_gains(&t, 0.0).unwrap();
        let csi = sample_csi_for_slot(&g, 11, 0, 0).unwrap();
        assert_eq!(csi.s[(0, 1)].norm(), 0.0);
        assert_eq!(csi.s[(1, 0)].norm(), 0.0);
        for k in 0..2 {
            assert!((csi.s[(k, k)] - csi.h[(k, k)].inv()).norm() < 1e-12 * csi.s[(k, k)].norm());
        }
    }

    #[test]
    fn slots_differ() {
        let t = generate_topology(3, 500.0, 5);
        let g = compute_path_gains(&t, 1.0).unwrap();
        let a = sample_csi_for_slot(&g, 1, 0, 0).unwrap();
        let b = sample_csi_for_slot(&g, 1, 0, 1).unwrap();
        assert_ne!(a.h, b.h);
        assert!(a.s.identity_residual(&a.h) < 1e-8);
    }

    #[test]
    fn topology_json_round_trip() {
        let t = generate_topology(7, 500.0, 2);
        let back: Topology = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }
}
