//! Acceptance criteria at full scale, one `PASS`/`FAIL` line each.
//!
//! Run with `cargo test --release -p fronthaul-core --test acceptance -- --nocapture`.
//! Every criterion runs in one test so that the wall-clock limits are not
//! shared with other tests. Criteria listed in [`KNOWN_FAILURES`] are still
//! evaluated and reported; the test fails on any other failing criterion, and
//! also when a known failure starts passing so that the list stays current.

use std::f64::consts::LN_2;
use std::fs;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fronthaul::allocator::reference::{reference_maximize, ReferenceConfig};
use fronthaul::allocator::{convexity_probe, iterate_allocation, kkt_residual, local_update_terms, per_stage_objective, AllocatorConfig};
use fronthaul::channel::{compute_path_gains, generate_topology, sample_csi_for_slot, CsiSample};
use fronthaul::config::ExperimentConfig;
use fronthaul::experiment::{emit_results, run_experiment, run_oracle, run_sweep, ExperimentSpec, Mode, Outcome, SweepOutcome};
use fronthaul::numerics::{exp_integral_e1, invert_complex_matrix, ComplexMatrix};
use fronthaul::priority::{calibrate_per_flow, ergodic_capacity, priority_derivative, priority_value};
use fronthaul::sim::Scheme;
use fronthaul::SystemParams;

const KNOWN_FAILURES: &[&str] = &["oracle_gap_two_flow_trend", "arrival_sweep_ordering", "capacity_sweep_trend"];

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn timed(name: &'static str, limit: Option<Duration>, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (ok, mut detail) = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    if !in_time {
        detail.push_str(&format!("; over the {:?} limit", limit.unwrap()));
    }
    Verdict {
        name,
        pass: ok && in_time,
        detail,
        elapsed,
    }
}

/// `E1(z) = ∫₀^∞ exp(−z·eˣ) dx` by composite Simpson.
fn e1_quadrature(z: f64) -> f64 {
    let upper = (745.0 / z).ln();
    let n = 40_000;
    let h = upper / n as f64;
    let f = |x: f64| (-z * x.exp()).exp();
    let mut sum = f(0.0) + f(upper);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    sum * h / 3.0
}

fn special_function() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let z = 1e-3 * (5e4f64).powf(i as f64 / 199.0);
        let err = (exp_integral_e1(z).unwrap() - e1_quadrature(z)).abs();
        worst = worst.max(err);
    }
    (worst < 1e-10, format!("max |E1 - quadrature| = {worst:.2e}"))
}

fn zero_forcing() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rows = (0..7)
            .map(|_| {
                (0..7)
                    .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect()
            })
            .collect();
        let h = ComplexMatrix::from_rows(rows).unwrap();
        let s = invert_complex_matrix(&h).unwrap();
        worst = worst.max(s.identity_residual(&h));
    }
    (worst < 1e-9, format!("max ||SH - I||_inf = {worst:.2e}"))
}

fn per_flow_ode() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_ode: f64 = 0.0;
    let mut worst_origin: f64 = 0.0;
    for _ in 0..10 {
        let snr_db = rng.random_range(0.0..20.0);
        let power = 10f64.powf(snr_db / 10.0);
        let a = 1.0 / power;
        let lambda = rng.random_range(0.2..0.9) * ergodic_capacity(a);
        let (beta, gamma) = (rng.random_range(0.5..2.0), rng.random_range(0.005..0.1));
        let params = SystemParams {
            power,
            noise: 1.0,
            bandwidth_hz: 1e7,
            slot_s: 0.01,
            beta: vec![beta],
            gamma: vec![gamma],
            lambda: vec![lambda],
        };
        let pf = calibrate_per_flow(&params, 1.0, 0).unwrap();
        for i in 0..50 {
            let q = 1e-3 * (1e6f64).powf(i as f64 / 49.0);
            let nu = priority_derivative(&pf, q).unwrap();
            let residual = beta * q / lambda + gamma / LN_2 * exp_integral_e1(a * gamma / (nu - gamma)).unwrap() + nu * lambda
                - nu * a.exp() / LN_2 * exp_integral_e1(a * nu / (nu - gamma)).unwrap()
                - pf.c_inf;
            worst_ode = worst_ode.max(residual.abs());
        }
        worst_origin = worst_origin
            .max(priority_value(&pf, 0.0).unwrap().abs())
            .max(pf.value_at(pf.nu0).abs());
    }
    (
        worst_ode < 1e-6 && worst_origin < 1e-9,
        format!("max ODE residual {worst_ode:.2e}, max |J(0)| {worst_origin:.2e}"),
    )
}

fn system_params(k: usize) -> SystemParams {
    let mut cfg = ExperimentConfig::default();
    cfg.system.num_cells = k;
    cfg.system.system_params().unwrap()
}

fn hex_slot(seed: u64, cross: f64, slot: u64) -> CsiSample {
    let topo = generate_topology(7, 500.0, seed);
    let gains = compute_path_gains(&topo, cross).unwrap();
    sample_csi_for_slot(&gains, seed, 0, slot).unwrap()
}

fn kkt() -> (bool, String) {
    let p = system_params(7);
    let cfg = AllocatorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut instances, mut draws, mut worst) = (0, 0, 0.0f64);
    while instances < 1000 && draws < 100_000 {
        draws += 1;
        let csi = hex_slot(draws, rng.random_range(0.01..1.0), draws);
        let w: Vec<f64> = (0..7).map(|_| rng.random_range(0.1..5.0)).collect();
        let c: Vec<f64> = (0..7).map(|_| rng.random_range(0.1..15.0)).collect();
        let k = rng.random_range(0..7);
        let t = local_update_terms(&csi, &p, &c, &w, k, &cfg);
        if t.capacity > 0.0 && t.capacity < cfg.c_max {
            instances += 1;
            worst = worst.max(kkt_residual(&csi, &p, &c, &w, k, t.capacity, cfg.c_floor).abs());
        }
    }
    (
        instances == 1000 && worst < 1e-8,
        format!("{instances} interior instances from {draws} draws, max residual {worst:.2e}"),
    )
}

fn reference_equivalence() -> (bool, String) {
    let p = system_params(7);
    let cfg = AllocatorConfig {
        max_iters: 100,
        ..AllocatorConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (mut converged, mut within, mut worst) = (0, 0, 0.0f64);
    for slot in 0..100u64 {
        let cross = [0.1, 0.03][slot as usize % 2];
        let csi = hex_slot(1000 + slot, cross, slot);
        let w: Vec<f64> = (0..7).map(|_| rng.random_range(0.2..5.0)).collect();
        let out = iterate_allocation(&csi, &w, &p, &cfg);
        if out.converged {
            converged += 1;
        }
        let ours = per_stage_objective(&csi, &out.alloc, &w, &p.gamma, &p);
        let reference = reference_maximize(&csi, &w, &p, &ReferenceConfig::default()).objective;
        let rel = (ours - reference).abs() / reference.abs().max(1e-12);
        worst = worst.max(rel);
        if rel <= 0.01 {
            within += 1;
        }
    }
    (
        within == 100 && converged >= 99,
        format!(
            "{within}/100 within 1% (worst {:.3}%), {converged}/100 converged within 100 sweeps",
            100.0 * worst
        ),
    )
}

fn convexity() -> (bool, String) {
    let p = system_params(7);
    let csi = hex_slot(21, 1.0, 3);
    let w = vec![1.0; 7];
    let reports = convexity_probe(&csi, &w, &p, &[1.0, 0.3, 0.1, 0.03, 0.0], 10_000, 15).unwrap();
    let fractions: Vec<f64> = reports.iter().map(|r| r.fraction).collect();
    let nonincreasing = fractions[..4].windows(2).all(|f| f[1] <= f[0]);
    (
        nonincreasing && fractions[4] == 0.0,
        format!("violation fractions at cross 1/0.3/0.1/0.03/0: {fractions:?}"),
    )
}

fn gap_of(report: &fronthaul::oracle::OracleReport, scheme: Scheme) -> &fronthaul::oracle::SchemeGap {
    report.schemes.iter().find(|s| s.scheme == scheme).unwrap()
}

fn oracle(verdicts: &mut Vec<Verdict>) {
    let start = Instant::now();
    let outcome = run_oracle(&ExperimentConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let in_time = elapsed < Duration::from_secs(600);
    let single = &outcome.reports[0];
    let da = gap_of(single, Scheme::DelayAware);
    let baselines_ok = [Scheme::ThroughputOptimal, Scheme::QueueWeighted]
        .iter()
        .all(|&s| gap_of(single, s).average_cost >= da.average_cost - single.tolerance);
    verdicts.push(Verdict {
        name: "oracle_gap_single_flow",
        pass: in_time && da.relative_gap.abs() <= 0.10 && baselines_ok,
        detail: format!(
            "theta* {:.5}, gaps {}",
            single.theta_star,
            single
                .schemes
                .iter()
                .map(|s| format!("{} {:.2}%", s.scheme, 100.0 * s.relative_gap))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        elapsed,
    });
    let gaps: Vec<(f64, f64)> = outcome.reports[1..]
        .iter()
        .map(|r| (r.cross_scale, gap_of(r, Scheme::DelayAware).relative_gap))
        .collect();
    verdicts.push(Verdict {
        name: "oracle_gap_two_flow_trend",
        pass: in_time && gaps.windows(2).all(|g| g[1].1 < g[0].1),
        detail: format!(
            "delay-aware gap by cross scale: {}",
            gaps.iter()
                .map(|(c, g)| format!("{c} -> {:.2}%", 100.0 * g))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        elapsed,
    });
}

fn delay(outcome: &SweepOutcome, point: usize, scheme: Scheme) -> f64 {
    outcome.points[point].scheme(scheme).unwrap().metrics.mean.avg_delay_s
}

fn delay_table(outcome: &SweepOutcome) -> String {
    Scheme::ALL
        .iter()
        .map(|&s| {
            let d: Vec<String> = (0..outcome.points.len()).map(|i| format!("{:.4}", delay(outcome, i, s))).collect();
            format!("{s} [{}]", d.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn sweep(mode: Mode) -> (SweepOutcome, Duration) {
    let start = Instant::now();
    let outcome = run_sweep(&ExperimentSpec::new(mode, ExperimentConfig::default()).unwrap()).unwrap();
    (outcome, start.elapsed())
}

fn arrival_sweep(verdicts: &mut Vec<Verdict>) -> SweepOutcome {
    let (outcome, elapsed) = sweep(Mode::SweepArrival);
    let complete = outcome.skipped.is_empty() && outcome.points.len() == 4;
    let in_time = elapsed < Duration::from_secs(900);
    let n = outcome.points.len();
    let ordered = (0..n).all(|i| {
        let da = delay(&outcome, i, Scheme::DelayAware);
        da <= delay(&outcome, i, Scheme::ThroughputOptimal) && da <= delay(&outcome, i, Scheme::QueueWeighted)
    });
    let monotone = Scheme::ALL
        .iter()
        .all(|&s| (1..n).all(|i| delay(&outcome, i, s) >= delay(&outcome, i - 1, s)));
    let table = format!("delay (s) at 20/25/30/35 Mbps: {}", delay_table(&outcome));
    verdicts.push(Verdict {
        name: "arrival_sweep_ordering",
        pass: complete && in_time && ordered,
        detail: table.clone(),
        elapsed,
    });
    verdicts.push(Verdict {
        name: "arrival_sweep_monotone",
        pass: complete && in_time && monotone,
        detail: table,
        elapsed,
    });
    outcome
}

fn capacity_sweep() -> (bool, String) {
    let (outcome, _) = sweep(Mode::SweepCapacity);
    let complete = outcome.skipped.is_empty() && outcome.points.len() == 5;
    let n = outcome.points.len();
    let ok = complete
        && Scheme::ALL.iter().all(|&s| {
            let d: Vec<f64> = (0..n).map(|i| delay(&outcome, i, s)).collect();
            let drops: Vec<f64> = d.windows(2).map(|w| w[0] - w[1]).collect();
            drops.iter().all(|&x| x >= 0.0) && drops[1..].iter().all(|&x| x <= drops[0])
        });
    (ok, format!("delay (s) at 250..450 Mbps: {}", delay_table(&outcome)))
}

fn timing(outcome: &SweepOutcome) -> (bool, String) {
    let mut ok = !outcome.points.is_empty();
    let mut parts = Vec::new();
    for point in &outcome.points {
        let median = |s: Scheme| point.scheme(s).and_then(|o| o.timing).map(|t| t.median_s).unwrap_or(f64::NAN);
        let da = median(Scheme::DelayAware);
        let b1 = median(Scheme::ThroughputOptimal);
        let b2 = median(Scheme::QueueWeighted);
        ok &= da < 0.05 && da <= 20.0 * b1 && da <= 20.0 * b2;
        parts.push(format!(
            "{:.0} Mbps: {:.2}/{:.2}/{:.2} ms",
            point.point.mean_arrival_bps / 1e6,
            1e3 * da,
            1e3 * b1,
            1e3 * b2
        ));
    }
    (
        ok,
        format!("median per-slot ms (delay-aware/throughput/queue): {}", parts.join(", ")),
    )
}

fn determinism() -> (bool, String) {
    let mut cfg = ExperimentConfig::default();
    cfg.episode.num_topologies = 4;
    cfg.episode.num_slots = 30;
    let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let mut files = Vec::new();
            for mode in [Mode::SweepArrival, Mode::UnitReport] {
                let outcome: Outcome = run_experiment(&ExperimentSpec::new(mode, cfg.clone()).unwrap()).unwrap();
                for path in emit_results(&outcome, dir.path()).unwrap() {
                    if path.extension().is_some_and(|e| e == "csv") && !path.ends_with("timing.csv") {
                        let name = path.file_name().unwrap().to_string_lossy().into_owned();
                        files.push((name, fs::read(&path).unwrap()));
                    }
                }
            }
            files
        })
        .collect();
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    (!runs[0].is_empty() && runs[0] == runs[1], format!("compared {}", names.join(", ")))
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let mut verdicts = vec![
        timed("special_function_e1", Some(secs(1)), special_function),
        timed("zero_forcing", Some(secs(1)), zero_forcing),
        timed("per_flow_ode", Some(secs(5)), per_flow_ode),
        timed("kkt_closed_form", Some(secs(5)), kkt),
        timed("reference_equivalence", Some(secs(120)), reference_equivalence),
        timed("convexity_trend", Some(secs(60)), convexity),
    ];
    oracle(&mut verdicts);
    let arrival = arrival_sweep(&mut verdicts);
    verdicts.push(timed("capacity_sweep_trend", Some(secs(900)), capacity_sweep));
    verdicts.push(timed("timing", None, || timing(&arrival)));
    verdicts.push(timed("determinism", None, determinism));

    let mut unexpected = Vec::new();
    for v in &verdicts {
        let known = KNOWN_FAILURES.contains(&v.name);
        let tag = match (v.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (listed as known failure)",
        };
        println!("{tag:<12} {:<28} {:>8.2}s  {}", v.name, v.elapsed.as_secs_f64(), v.detail);
        if v.pass == known {
            unexpected.push(v.name);
        }
    }
    assert!(unexpected.is_empty(), "criteria not matching the expected outcome: {unexpected:?}");
}
