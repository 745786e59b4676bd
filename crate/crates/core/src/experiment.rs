//! Sweep orchestration and result files.
//!
//! Output files, all in the output directory:
//!
//! | file | written by | content |
//! |---|---|---|
//! | `summary.csv` | run, sweeps | one row per (point, scheme), see [`SUMMARY_COLUMNS`] |
//! | `timing.csv` | run, sweeps | per-slot allocation wall time, see [`TIMING_COLUMNS`] |
//! | `summary.json` | run, sweeps | config, provenance, per-topology metrics, budget searches, skipped points |
//! | `trace_<scheme>.csv` | run with `output.trace` | per-slot records |
//! | `oracle.csv`, `oracle.json` | oracle-gap | see [`ORACLE_COLUMNS`] |
//! | `calibration.csv`, `calibration.json` | calibration report | see [`CALIBRATION_COLUMNS`] |
//! | `config.toml` | every mode | the resolved configuration |
//!
//! `summary.csv`, `oracle.csv` and `calibration.csv` depend only on the
//! configuration; wall-clock numbers live in `timing.csv` alone.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::PathGains;
use crate::config::{ExperimentConfig, NoiseScale};
use crate::error::{Error, Result};
use crate::oracle::{oracle_gap, OracleReport};
use crate::params::{dbm_to_watts, SystemParams};
use crate::priority::ergodic_capacity;
use crate::sim::{
    aggregate_metrics, calibrate_price_to_budget, calibrate_topology, prepare_topologies, run_scheme, write_trace_csv, AggregateMetrics,
    BudgetEvaluation, EpisodeConfig, EpisodeOutput, RunMetrics, Scheme, TopologyCase,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SingleRun,
    SweepArrival,
    SweepCapacity,
    OracleGap,
    UnitReport,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SingleRun => "single_run",
            Mode::SweepArrival => "sweep_arrival",
            Mode::SweepCapacity => "sweep_capacity",
            Mode::OracleGap => "oracle_gap",
            Mode::UnitReport => "unit_report",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Mode::SingleRun,
            Mode::SweepArrival,
            Mode::SweepCapacity,
            Mode::OracleGap,
            Mode::UnitReport,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| Error::config("mode", format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub config: ExperimentConfig,
}

/// One `(λ̄, budget)` operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mean_arrival_bps: f64,
    /// `None` runs at the configured prices without calibration.
    pub budget_bps: Option<f64>,
}

impl SweepPoint {
    /// Abscissa of the point in Mbit/s for `mode`.
    pub fn axis_mbps(&self, mode: Mode) -> f64 {
        match (mode, self.budget_bps) {
            (Mode::SweepCapacity, Some(b)) => b / 1e6,
            _ => self.mean_arrival_bps / 1e6,
        }
    }
}

impl ExperimentSpec {
    pub fn new(mode: Mode, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { mode, config })
    }

    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let (ep, sw) = (&self.config.episode, &self.config.sweep);
        match self.mode {
            Mode::SweepArrival => sw
                .arrival_mbps
                .iter()
                .map(|&a| SweepPoint {
                    mean_arrival_bps: a * 1e6,
                    budget_bps: Some(sw.budget_mbps * 1e6),
                })
                .collect(),
            Mode::SweepCapacity => sw
                .capacity_mbps
                .iter()
                .map(|&c| SweepPoint {
                    mean_arrival_bps: sw.fixed_arrival_mbps * 1e6,
                    budget_bps: Some(c * 1e6),
                })
                .collect(),
            _ => vec![SweepPoint {
                mean_arrival_bps: ep.mean_arrival_bps,
                budget_bps: ep.target_total_capacity_bps,
            }],
        }
    }
}

/// Unit audit: the physical values behind the normalized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub tx_power_dbm: f64,
    pub tx_power_w: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub noise_dbm: f64,
    pub noise_w: f64,
    pub bandwidth_hz: f64,
    /// `λ_k` in bit/s is divided by this to enter the priority formulas.
    pub lambda_normalization_hz: f64,
    pub noise_scale: NoiseScale,
    /// `P` and `N0` as the model sees them.
    pub model_power: f64,
    pub model_noise: f64,
    pub crate_version: String,
}

impl Provenance {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let s = &cfg.system;
        let p = s.system_params()?;
        Ok(Self {
            seed: cfg.episode.seed,
            tx_power_dbm: s.tx_power.0,
            tx_power_w: dbm_to_watts(s.tx_power.0),
            noise_psd_dbm_per_hz: s.noise_psd.0,
            noise_dbm: s.noise_dbm(),
            noise_w: s.noise_w(),
            bandwidth_hz: s.bandwidth_hz,
            lambda_normalization_hz: p.bandwidth_hz,
            noise_scale: s.noise_scale,
            model_power: p.power,
            model_noise: p.noise,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }
}

/// Per-slot allocation wall time of one scheme at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median_s: f64,
    pub mean_s: f64,
    pub max_s: f64,
    pub slots: usize,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median_s = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            median_s,
            mean_s: v.iter().sum::<f64>() / n as f64,
            max_s: v[n - 1],
            slots: n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub metrics: AggregateMetrics,
    pub per_topology: Vec<RunMetrics>,
    pub gamma_multiplier: f64,
    /// Budget search, when the point has a budget.
    pub budget_evaluations: Vec<BudgetEvaluation>,
    /// Largest per-topology ratio of the peak backlog to the mean backlog.
    pub max_to_mean_queue: f64,
    #[serde(skip)]
    pub timing: Option<TimingStats>,
    #[serde(skip)]
    pub outputs: Vec<EpisodeOutput>,
}

impl SchemeOutcome {
    fn new(scheme: Scheme, gamma_multiplier: f64, budget_evaluations: Vec<BudgetEvaluation>, outputs: Vec<EpisodeOutput>) -> Result<Self> {
        let per_topology: Vec<RunMetrics> = outputs.iter().map(|o| o.metrics.clone()).collect();
        let metrics = aggregate_metrics(&per_topology)?;
        let max_to_mean_queue = outputs
            .iter()
            .map(|o| {
                let mean = o.mean_queue_bits.iter().sum::<f64>() / o.mean_queue_bits.len() as f64;
                if mean > 0.0 {
                    o.max_queue_bits / mean
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        let samples: Vec<f64> = outputs.iter().flat_map(|o| o.alloc_seconds.iter().copied()).collect();
        Ok(Self {
            scheme,
            metrics,
            per_topology,
            gamma_multiplier,
            budget_evaluations,
            max_to_mean_queue,
            timing: TimingStats::from_samples(&samples),
            outputs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub point: SweepPoint,
    pub schemes: Vec<SchemeOutcome>,
}

impl PointOutcome {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeOutcome> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub point: SweepPoint,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub points: Vec<PointOutcome>,
    pub skipped: Vec<SkippedPoint>,
}

fn episode_at(cfg: &EpisodeConfig, point: &SweepPoint) -> EpisodeConfig {
    EpisodeConfig {
        mean_arrival_bps: point.mean_arrival_bps,
        target_total_capacity_bps: point.budget_bps,
        ..cfg.clone()
    }
}

fn run_point(spec: &ExperimentSpec, cases: &[TopologyCase], params: &SystemParams, point: &SweepPoint) -> Result<PointOutcome> {
    let cfg = &spec.config;
    let episode = episode_at(&cfg.episode, point);
    let trace = spec.mode == Mode::SingleRun && cfg.output.trace;
    let schemes = cfg
        .sweep
        .schemes
        .iter()
        .map(|&scheme| match point.budget_bps {
            Some(target) => {
                let cal = calibrate_price_to_budget(cases, scheme, params, &episode, &cfg.allocator, target, trace)?;
                log::info!(
                    "{} {:.1} Mbps: {scheme} multiplier {:e}, {:.2} Mbps after {} runs",
                    spec.mode,
                    point.axis_mbps(spec.mode),
                    cal.multiplier,
                    cal.achieved_bps / 1e6,
                    cal.evaluations.len()
                );
                SchemeOutcome::new(scheme, cal.multiplier, cal.evaluations, cal.outputs)
            }
            None => SchemeOutcome::new(
                scheme,
                1.0,
                Vec::new(),
                run_scheme(cases, scheme, params, &episode, &cfg.allocator, 1.0, trace)?,
            ),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointOutcome { point: *point, schemes })
}

/// Runs every point of a `single_run`, `sweep_arrival` or `sweep_capacity`
/// spec. All schemes at a point share topologies, fading and arrivals;
/// a point whose budget or priorities cannot be calibrated is skipped.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutcome> {
    if !matches!(spec.mode, Mode::SingleRun | Mode::SweepArrival | Mode::SweepCapacity) {
        return Err(Error::config("mode", format!("`{}` is not a sweep", spec.mode)));
    }
    let cfg = &spec.config;
    cfg.validate()?;
    let params = cfg.system.system_params()?;
    let geometry = cfg.system.geometry();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let mut cached: Option<(f64, Vec<TopologyCase>)> = None;
    for point in spec.sweep_points() {
        if cached.as_ref().is_none_or(|(l, _)| *l != point.mean_arrival_bps) {
            let cases = prepare_topologies(&geometry, &episode_at(&cfg.episode, &point), params.noise)?;
            cached = Some((point.mean_arrival_bps, cases));
        }
        let cases = &cached.as_ref().expect("prepared").1;
        match run_point(spec, cases, &params, &point) {
            Ok(p) => points.push(p),
            Err(e @ (Error::Budget(_) | Error::Calibration { .. } | Error::DegeneratePerturbation { .. })) => {
                log::warn!("{} point {:.1} Mbps skipped: {e}", spec.mode, point.axis_mbps(spec.mode));
                skipped.push(SkippedPoint {
                    point,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SweepOutcome {
        mode: spec.mode,
        config: cfg.clone(),
        provenance: Provenance::from_config(cfg)?,
        points,
        skipped,
    })
}

/// Parameters and gains of the oracle setting with `k` flows.
pub fn oracle_setting(cfg: &ExperimentConfig, k: usize, cross_scale: f64) -> Result<(SystemParams, PathGains)> {
    let o = &cfg.oracle;
    let snr = 10f64.powf(o.snr_db / 10.0);
    let lambda = o.load * ergodic_capacity(1.0 / snr);
    let params = SystemParams {
        power: snr,
        noise: 1.0,
        bandwidth_hz: cfg.system.bandwidth_hz,
        slot_s: cfg.system.slot_s,
        beta: vec![o.beta; k],
        gamma: vec![o.gamma; k],
        lambda: vec![lambda; k],
    };
    params.validate()?;
    let cross = o.cross_ratio * cross_scale;
    let matrix = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { cross }).collect()).collect();
    Ok((params, PathGains::from_matrix(matrix, cross_scale)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    /// One flow without coupling first, then two flows per cross scale.
    pub reports: Vec<OracleReport>,
}

pub fn run_oracle(cfg: &ExperimentConfig) -> Result<OracleOutcome> {
    cfg.validate()?;
    let o = &cfg.oracle;
    let mut settings = vec![(1, 0.0, &o.single_flow_grids)];
    settings.extend(o.cross_scales.iter().map(|&c| (2, c, &o.two_flow_grids)));
    let reports = settings
        .into_iter()
        .map(|(k, cross, grids)| {
            let (params, gains) = oracle_setting(cfg, k, cross)?;
            let report = oracle_gap(&params, &gains, grids, &cfg.sweep.schemes, &cfg.allocator, o.tolerance)?;
            log::info!("oracle K={k} cross {cross}: theta* {:.6}", report.theta_star);
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleOutcome {
        config: cfg.clone(),
        provenance: Provenance::from_config(cfg)?,
        reports,
    })
}

/// Priority constants of one flow of one topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCalibration {
    pub topology: u64,
    pub flow: usize,
    pub lambda_bps: f64,
    /// `λ_k` in bit/s/Hz before and after clamping into the stable region.
    pub lambda: f64,
    pub calibration_lambda: f64,
    pub l_kk: f64,
    pub snr_db: f64,
    pub ergodic_capacity: f64,
    pub a: f64,
    pub d: f64,
    pub c_inf: f64,
    pub b: f64,
    pub nu0: f64,
    pub phi: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub flows: Vec<FlowCalibration>,
}

/// Priority calibration of every flow at `episode.mean_arrival_bps`, with
/// the physical-to-model unit conversions.
pub fn unit_report(cfg: &ExperimentConfig) -> Result<UnitReport> {
    cfg.validate()?;
    let base = cfg.system.system_params()?;
    let cases = prepare_topologies(&cfg.system.geometry(), &cfg.episode, base.noise)?;
    let mut flows = Vec::new();
    for case in &cases {
        let mut p = base.clone();
        p.lambda = case.lambda_bps.iter().map(|l| l / p.bandwidth_hz).collect();
        let priorities = calibrate_topology(&p, case, cfg.episode.calibration_load_cap)?;
        for (k, pf) in priorities.iter().enumerate() {
            let l_kk = case.gains.gain(k, k);
            flows.push(FlowCalibration {
                topology: case.index,
                flow: k,
                lambda_bps: case.lambda_bps[k],
                lambda: p.lambda[k],
                calibration_lambda: pf.lambda,
                l_kk,
                snr_db: 10.0 * p.snr(l_kk).log10(),
                ergodic_capacity: ergodic_capacity(pf.a),
                a: pf.a,
                d: pf.d,
                c_inf: pf.c_inf,
                b: pf.b,
                nu0: pf.nu0,
                phi: pf.phi,
                kappa: case.kappa[k],
            });
        }
    }
    Ok(UnitReport {
        config: cfg.clone(),
        provenance: Provenance::from_config(cfg)?,
        flows,
    })
}

pub enum Outcome {
    Sweep(SweepOutcome),
    Oracle(OracleOutcome),
    Units(UnitReport),
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    match spec.mode {
        Mode::OracleGap => run_oracle(&spec.config).map(Outcome::Oracle),
        Mode::UnitReport => unit_report(&spec.config).map(Outcome::Units),
        _ => run_sweep(spec).map(Outcome::Sweep),
    }
}

pub const SUMMARY_COLUMNS: [&str; 16] = [
    "mode",
    "point_mbps",
    "mean_arrival_mbps",
    "budget_mbps",
    "scheme",
    "avg_delay_s",
    "avg_delay_se_s",
    "achieved_capacity_mbps",
    "achieved_capacity_se_mbps",
    "objective_l",
    "gamma_multiplier",
    "max_to_mean_queue",
    "convergence_failures",
    "topologies",
    "slots",
    "seed",
];

pub const TIMING_COLUMNS: [&str; 7] = [
    "mode",
    "point_mbps",
    "scheme",
    "median_alloc_ms",
    "mean_alloc_ms",
    "max_alloc_ms",
    "slots_timed",
];

pub const ORACLE_COLUMNS: [&str; 9] = [
    "num_flows",
    "cross_scale",
    "scheme",
    "average_cost",
    "theta_star",
    "relative_gap",
    "rvi_iterations",
    "bellman_residual",
    "tolerance",
];

pub const CALIBRATION_COLUMNS: [&str; 15] = [
    "topology",
    "flow",
    "lambda_bps",
    "lambda",
    "calibration_lambda",
    "l_kk",
    "snr_db",
    "ergodic_capacity",
    "a",
    "d",
    "c_inf",
    "b",
    "nu0",
    "phi",
    "kappa",
];

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn num(v: f64) -> String {
    v.to_string()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_sweep(out: &SweepOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    let ep = &out.config.episode;
    let summary_path = dir.join("summary.csv");
    let timing_path = dir.join("timing.csv");
    let mut summary = csv_writer(&summary_path, &SUMMARY_COLUMNS)?;
    let mut timing = csv_writer(&timing_path, &TIMING_COLUMNS)?;
    let mut files = vec![summary_path, timing_path];
    for p in &out.points {
        let axis = num(p.point.axis_mbps(out.mode));
        for s in &p.schemes {
            let m = &s.metrics;
            summary.write_record([
                out.mode.as_str().to_string(),
                axis.clone(),
                num(p.point.mean_arrival_bps / 1e6),
                p.point.budget_bps.map(|b| num(b / 1e6)).unwrap_or_default(),
                s.scheme.to_string(),
                num(m.mean.avg_delay_s),
                num(m.avg_delay_s_se),
                num(m.mean.avg_total_capacity_bps / 1e6),
                num(m.avg_total_capacity_bps_se / 1e6),
                num(m.mean.objective_l),
                num(s.gamma_multiplier),
                num(s.max_to_mean_queue),
                m.mean.convergence_failures.to_string(),
                m.runs.to_string(),
                ep.num_slots.to_string(),
                ep.seed.to_string(),
            ])?;
            if let Some(t) = s.timing {
                timing.write_record([
                    out.mode.as_str().to_string(),
                    axis.clone(),
                    s.scheme.to_string(),
                    num(t.median_s * 1e3),
                    num(t.mean_s * 1e3),
                    num(t.max_s * 1e3),
                    t.slots.to_string(),
                ])?;
            }
            let traces: Vec<_> = s.outputs.iter().flat_map(|o| o.trace.iter().cloned()).collect();
            if !traces.is_empty() {
                let path = dir.join(format!("trace_{}.csv", s.scheme));
                write_trace_csv(&traces, fs::File::create(&path)?)?;
                files.push(path);
            }
        }
    }
    summary.flush()?;
    timing.flush()?;
    let json = dir.join("summary.json");
    write_json(&json, out)?;
    files.push(json);
    Ok(files)
}

fn write_oracle(out: &OracleOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("oracle.csv");
    let mut w = csv_writer(&path, &ORACLE_COLUMNS)?;
    for r in &out.reports {
        for g in &r.schemes {
            w.write_record([
                r.num_flows.to_string(),
                num(r.cross_scale),
                g.scheme.to_string(),
                num(g.average_cost),
                num(r.theta_star),
                num(g.relative_gap),
                r.rvi_iterations.to_string(),
                num(r.bellman_residual),
                num(r.tolerance),
            ])?;
        }
    }
    w.flush()?;
    let json = dir.join("oracle.json");
    write_json(&json, out)?;
    Ok(vec![path, json])
}

fn write_units(out: &UnitReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("calibration.csv");
    let mut w = csv_writer(&path, &CALIBRATION_COLUMNS)?;
    for f in &out.flows {
        w.write_record([
            f.topology.to_string(),
            f.flow.to_string(),
            num(f.lambda_bps),
            num(f.lambda),
            num(f.calibration_lambda),
            num(f.l_kk),
            num(f.snr_db),
            num(f.ergodic_capacity),
            num(f.a),
            num(f.d),
            num(f.c_inf),
            num(f.b),
            num(f.nu0),
            num(f.phi),
            num(f.kappa),
        ])?;
    }
    w.flush()?;
    let json = dir.join("calibration.json");
    write_json(&json, out)?;
    Ok(vec![path, json])
}

/// Writes the files of `outcome` into `dir`, creating it if needed, and
/// returns their paths.
pub fn emit_results(outcome: &Outcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let (mut files, config) = match outcome {
        Outcome::Sweep(o) => {
            if o.points.is_empty() && o.skipped.is_empty() {
                return Err(Error::Empty("sweep points"));
            }
            (write_sweep(o, dir)?, &o.config)
        }
        Outcome::Oracle(o) => (write_oracle(o, dir)?, &o.config),
        Outcome::Units(o) => (write_units(o, dir)?, &o.config),
    };
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, config.to_toml_string())?;
    files.push(cfg_path);
    Ok(files)
}
