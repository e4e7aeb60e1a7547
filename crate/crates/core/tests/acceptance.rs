//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! Runs without the libtest harness so the report is always printed:
//! `cargo test -p robust-phase --test acceptance`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_phase::analysis::{
    added_noise_cov, check_orderings, effective_noise_power, effective_quantum_efficiency, mse_uncertain,
    sigma_kalman_closed, sigma_robust_closed,
};
use robust_phase::design::{design_kalman, design_robust, design_sql, epsilon_opt, scalar_gc_problem, FilterKind};
use robust_phase::linsolve::{scalar, solve_care, solve_gc_filter_riccati};
use robust_phase::model::{lambda_u, PlantParams, Uncertainty};
use robust_phase::simulate::{linearization_bias_probe, run_closed_loop, SimConfig, SimResult};
use robust_phase::sweep::{linspace, sweep, Axis, Metric, SweepSpec, DEFAULT_POINTS};
use robust_phase::two_time::{default_tau_grid, match_residual_scan, matched_curve_set};

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// lambda, kappa, |alpha|^2 log-uniform on [1e2, 1e8]; mu uniform on [0, mu_max).
fn draws(n: usize, mu_max: f64, seed: u64) -> Vec<(PlantParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logu = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(2.0..8.0));
    (0..n)
        .map(|_| {
            let p = PlantParams::new(logu(&mut rng), logu(&mut rng), logu(&mut rng));
            (p, rng.gen_range(0.0..mu_max))
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, (p, mu)) in draws(1000, 0.99, 1).into_iter().enumerate() {
        let delta = [-1.0, 0.0, 1.0][i % 3];
        let u = Uncertainty::new(mu, delta);
        let amp = p.amplitude();
        let care = |rate: f64, noise_sd: f64| {
            solve_care(&scalar(-rate), &scalar(1.0), &scalar(p.kappa.sqrt()), &scalar(noise_sd)).map(|m| m[(0, 0)])
        };
        let k = design_kalman(&p);
        let kr = care(p.lambda, 0.5 / amp).map_err(|e| format!("Kalman draw {i}: {e}"))?;
        let r = design_robust(&p, mu);
        let gp = scalar_gc_problem(&p, mu, epsilon_opt(&p, mu));
        let rr = solve_gc_filter_riccati(&gp).map_err(|e| format!("robust draw {i}: {e}"))?[(0, 0)];
        let s = design_sql(&p, u);
        let sr = care(lambda_u(&p, u), 1.0 / (2f64.sqrt() * amp)).map_err(|e| format!("SQL draw {i}: {e}"))?;
        for (name, a, b) in [
            ("Kalman", k.error_value, kr),
            ("robust", r.error_value, rr),
            ("SQL", s.error_value, sr),
        ] {
            let d = rel(a, b);
            worst = worst.max(d);
            ensure(d <= 1e-10, || {
                format!("{name} draw {i} {p:?} mu={mu}: {a} vs {b} (rel {d:.2e})")
            })?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("runtime {secs:.2} s"))?;
    Ok(format!("3000 comparisons, worst rel {worst:.1e}, {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let mut cases = vec![PlantParams::default()];
    cases.extend(draws(200, 0.5, 2).into_iter().map(|d| d.0));
    let mut worst: f64 = 0.0;
    for p in cases {
        let (k, r) = (design_kalman(&p), design_robust(&p, 0.0));
        for (a, b) in [
            (k.gain, r.gain),
            (k.pole, r.pole),
            (k.corner, r.corner),
            (k.error_value, r.error_value),
            (k.tf.gain, r.tf.gain),
            (k.tf.pole, r.tf.pole),
        ] {
            worst = worst.max(rel(a, b));
        }
    }
    ensure(worst <= 1e-12, || format!("worst field rel {worst:.2e}"))?;
    Ok(format!("201 parameter sets, worst field rel {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let mut set = draws(1000, 0.99, 1);
    set.extend(draws(20, 0.99, 3).into_iter().map(|(p, _)| (p, 0.0)));
    let mut mins = [f64::INFINITY; 3];
    for (i, (p, mu)) in set.iter().enumerate() {
        let r = check_orderings(p, *mu);
        for (j, o) in [r.robust_vs_kalman, r.robust_vs_sql, r.sql_inequality]
            .iter()
            .enumerate()
        {
            mins[j] = mins[j].min(o.relative);
            ensure(o.relative >= -1e-12, || {
                format!("draw {i} {p:?} mu={mu}: inequality {} margin {:.3e}", j + 1, o.relative)
            })?;
        }
    }
    Ok(format!(
        "{} draws, min relative margins {:.1e} / {:.1e} / {:.1e}",
        set.len(),
        mins[0],
        mins[1],
        mins[2]
    ))
}

fn fig_spec(
    mu: f64,
    delta: f64,
    axis: Axis,
    grid: Vec<f64>,
    filters: Vec<FilterKind>,
    metrics: Vec<Metric>,
) -> SweepSpec {
    SweepSpec {
        base: PlantParams::default(),
        uncertainty: Uncertainty::new(mu, delta),
        axis,
        grid,
        filters,
        metrics,
    }
}

fn criterion_4() -> Outcome {
    use FilterKind::*;
    let spec = fig_spec(
        0.5,
        0.0,
        Axis::Delta,
        linspace(-1.0, 1.0, DEFAULT_POINTS),
        vec![Kalman, Robust, OptimalLimit, Sql],
        vec![Metric::Sigma2],
    );
    let t = sweep(&spec).map_err(|e| e.to_string())?;
    let k = t.column("sigma2_kalman").unwrap();
    let r = t.column("sigma2_robust").unwrap();
    let q = t.column("q_plus").unwrap()[0];
    let mid = DEFAULT_POINTS / 2;
    ensure(t.rows[mid].values[0] == 0.0, || "grid misses delta = 0".into())?;
    ensure(k[mid] < r[mid], || {
        format!("at delta=0 Kalman {} !< robust {}", k[mid], r[mid])
    })?;
    ensure(r[0] < k[0], || {
        format!("at delta=-1 robust {} !< Kalman {}", r[0], k[0])
    })?;
    ensure(rel(r[0], q) <= 1e-10, || format!("robust(-1) {} vs Q+ {q}", r[0]))?;
    for c in ["sigma2_kalman", "sigma2_robust", "sigma2_opt", "p_sql"] {
        let v = t.column(c).unwrap();
        ensure(v.windows(2).all(|w| w[1] < w[0]), || {
            format!("{c} not decreasing in delta")
        })?;
    }
    let p = PlantParams::default();
    let u = Uncertainty::worst(0.5);
    let sk = sigma_kalman_closed(&p, u);
    let lk = mse_uncertain(&p, u, &design_kalman(&p)).map_err(|e| e.to_string())?.1;
    let lr = mse_uncertain(&p, u, &design_robust(&p, 0.5))
        .map_err(|e| e.to_string())?
        .1;
    ensure(rel(sk, lk) <= 1e-10 && rel(k[0], lk) <= 1e-10, || {
        format!("Kalman {sk} vs Lyapunov {lk}")
    })?;
    ensure(
        rel(q, lr) <= 1e-10 && rel(sigma_robust_closed(&p, u), lr) <= 1e-10,
        || format!("Q+ {q} vs Lyapunov {lr}"),
    )?;
    ensure((sk - 6.531e-2).abs() < 5e-6, || format!("sigma_K^2(-1) = {sk}"))?;
    ensure((q - 6.194e-2).abs() < 5e-6, || format!("Q+ = {q}"))?;
    Ok(format!(
        "sigma_K^2(-1) = {sk:.5e}, Q+ = {q:.5e}, 201-point curves monotone"
    ))
}

fn criterion_5() -> Outcome {
    use FilterKind::*;
    let spec = fig_spec(
        0.0,
        -1.0,
        Axis::Mu,
        linspace(0.0, 0.95, 96),
        vec![Kalman, Robust, Sql],
        vec![Metric::Sigma2],
    );
    let t = sweep(&spec).map_err(|e| e.to_string())?;
    let mu = t.column("mu").unwrap();
    let k = t.column("sigma2_kalman").unwrap();
    let r = t.column("sigma2_robust").unwrap();
    let s = t.column("p_sql").unwrap();
    if let Some(i) = (0..mu.len()).find(|&i| !(r[i] < s[i])) {
        return Err(format!("robust {} !< SQL {} at mu={}", r[i], s[i], mu[i]));
    }
    let cross = (0..mu.len()).find(|&i| k[i] > s[i]).ok_or("Kalman never exceeds SQL")?;
    Ok(format!(
        "robust < SQL on all {} mu; Kalman > SQL from mu = {:.2}",
        mu.len(),
        mu[cross]
    ))
}

fn criterion_6() -> Outcome {
    let p = PlantParams::default();
    let mu = 0.8;
    let u0 = Uncertainty::new(mu, 0.0);
    let ek = effective_quantum_efficiency(&p, u0, mse_uncertain(&p, u0, &design_kalman(&p)).unwrap().1)
        .map_err(|e| e.to_string())?;
    let uw = Uncertainty::worst(mu);
    let er = effective_quantum_efficiency(&p, uw, mse_uncertain(&p, uw, &design_robust(&p, mu)).unwrap().1)
        .map_err(|e| e.to_string())?;
    ensure((ek - 1.0).abs() <= 1e-9, || format!("eta(Kalman, 0) = {ek}"))?;
    ensure((er - 1.0).abs() <= 1e-9, || format!("eta(robust, -1) = {er}"))?;
    let spec = fig_spec(
        mu,
        0.0,
        Axis::Delta,
        linspace(-1.0, 1.0, DEFAULT_POINTS),
        vec![FilterKind::Kalman, FilterKind::Robust],
        vec![Metric::EtaEff],
    );
    let t = sweep(&spec).map_err(|e| e.to_string())?;
    let mut valid = 0;
    for row in &t.rows {
        for &v in &row.values[1..] {
            if v.is_nan() {
                continue;
            }
            valid += 1;
            ensure(v > 0.0 && v <= 1.0, || {
                format!("eta = {v} at delta = {}", row.values[0])
            })?;
        }
    }
    Ok(format!(
        "endpoints |1 - eta| {:.1e} / {:.1e}; {valid} sweep values in (0, 1]",
        (ek - 1.0).abs(),
        (er - 1.0).abs()
    ))
}

fn criterion_7() -> Outcome {
    let p = PlantParams::default();
    let mu = 0.5;
    let uw = Uncertainty::worst(mu);
    let u0 = Uncertainty::new(mu, 0.0);
    let r = effective_noise_power(&p, uw, mse_uncertain(&p, uw, &design_robust(&p, mu)).unwrap().1)
        .map_err(|e| e.to_string())?;
    let k = effective_noise_power(&p, u0, mse_uncertain(&p, u0, &design_kalman(&p)).unwrap().1)
        .map_err(|e| e.to_string())?;
    ensure(rel(r.kappa_eff, p.kappa) <= 1e-9, || {
        format!("kappa_eff(robust, -1) = {}", r.kappa_eff)
    })?;
    ensure(rel(k.kappa_eff, p.kappa) <= 1e-9, || {
        format!("kappa_eff(Kalman, 0) = {}", k.kappa_eff)
    })?;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for delta in linspace(-1.0, 1.0, DEFAULT_POINTS) {
        let u = Uncertainty::new(mu, delta);
        for f in [design_kalman(&p), design_robust(&p, mu)] {
            let e = mse_uncertain(&p, u, &f).unwrap().1;
            let Ok(np) = effective_noise_power(&p, u, e) else {
                continue;
            };
            let d = rel(added_noise_cov(&p, u, np.kappa_n).p1, e);
            worst = worst.max(d);
            n += 1;
            ensure(d <= 1e-10, || {
                format!("round trip rel {d:.2e} at delta = {delta}, {}", f.kind)
            })?;
        }
    }
    Ok(format!(
        "endpoints exact to {:.1e}; {n} round trips, worst rel {worst:.1e}",
        rel(r.kappa_eff, p.kappa).max(rel(k.kappa_eff, p.kappa))
    ))
}

fn criterion_8() -> Outcome {
    let p = PlantParams::default();
    let u = Uncertainty::new(0.5, 1.0);
    let grid = default_tau_grid(design_kalman(&p).corner, 60);
    let set = matched_curve_set(&p, u, &grid).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for pair in set.chunks(2) {
        let (sub, eff) = (&pair[0], &pair[1]);
        let d0 = rel(sub.values[0], eff.values[0]);
        ensure(d0 <= 1e-10, || format!("{:?}: tau=0 rel {d0:.2e}", sub.kind))?;
        let dmax = sub
            .values
            .iter()
            .zip(&eff.values)
            .skip(1)
            .map(|(a, b)| rel(*a, *b))
            .fold(0.0, f64::max);
        ensure(dmax > 0.01, || format!("{:?}: max separation {dmax:.2e}", sub.kind))?;
        summary.push(format!("{}: max sep {:.1}%", sub.kind.name(), 100.0 * dmax));
    }
    for f in [design_kalman(&p), design_robust(&p, 0.5)] {
        let scan = match_residual_scan(&p, u, &f, 10.0 * p.kappa, 10_000).map_err(|e| e.to_string())?;
        ensure(scan.min_max_residual > 1e-3, || {
            format!("{}: min-max residual {:.2e}", f.kind, scan.min_max_residual)
        })?;
        summary.push(format!("{} min-max residual {:.2e}", f.kind, scan.min_max_residual));
    }
    Ok(summary.join("; "))
}

const MC_MUS: [f64; 3] = [0.0, 0.5, 0.8];
const MC_DELTAS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

fn mc_config(cell: u64) -> SimConfig {
    SimConfig {
        dt: 5e-9,
        n_steps: 12_500_000,
        n_traj: 8,
        seed: 1000 + cell,
        ..SimConfig::default()
    }
}

fn mc_grid(threads: usize) -> Result<Vec<(PlantParams, Uncertainty, FilterKind, f64, SimResult)>, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    let p = PlantParams::default();
    let mut out = Vec::new();
    let mut cell = 0;
    for mu in MC_MUS {
        for delta in MC_DELTAS {
            let u = Uncertainty::new(mu, delta);
            for f in [design_kalman(&p), design_robust(&p, mu)] {
                let exact = mse_uncertain(&p, u, &f).map_err(|e| e.to_string())?.1;
                let r = pool
                    .install(|| run_closed_loop(&p, u, &f, &mc_config(cell)))
                    .map_err(|e| e.to_string())?;
                out.push((p, u, f.kind, exact, r));
                cell += 1;
            }
        }
    }
    Ok(out)
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .clamp(2, 8);
    let runs = mc_grid(threads)?;
    let mut worst_z: f64 = 0.0;
    let mut worst_se: f64 = 0.0;
    for (_, u, kind, exact, r) in &runs {
        let z = (r.mse - exact) / r.std_error;
        let se = r.std_error / r.mse;
        worst_z = worst_z.max(z.abs());
        worst_se = worst_se.max(se);
        println!(
            "    mu={:.1} delta={:+.1} {:<6} exact {exact:.5e} sim {:.5e} +- {:.1e} (z {z:+.2})",
            u.mu,
            u.delta,
            kind.name(),
            r.mse,
            r.std_error
        );
        ensure(z.abs() <= 3.0, || {
            format!("mu={} delta={} {kind}: z = {z:.2}", u.mu, u.delta)
        })?;
        ensure(se <= 0.01, || {
            format!("mu={} delta={} {kind}: se/mse = {se:.3}", u.mu, u.delta)
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    let again = mc_grid(1)?;
    let identical = runs.iter().zip(&again).all(|(a, b)| a.4 == b.4);
    ensure(identical, || "results differ between thread counts".into())?;
    ensure(secs < 600.0, || format!("runtime {secs:.0} s"))?;
    Ok(format!(
        "30 cells, max |z| {worst_z:.2}, max se/mse {:.2}%, {secs:.0} s on {threads} threads, bit-identical on 1 thread",
        100.0 * worst_se
    ))
}

fn criterion_10() -> Outcome {
    let p = PlantParams::default();
    let cfg = SimConfig {
        dt: 5e-9,
        n_steps: 12_500_000,
        n_traj: 4,
        seed: 10,
        ..SimConfig::default()
    };
    let mut parts = Vec::new();
    for (u, f) in [
        (Uncertainty::NONE, design_kalman(&p)),
        (Uncertainty::worst(0.5), design_robust(&p, 0.5)),
    ] {
        let probe = linearization_bias_probe(&p, u, &f, &cfg).map_err(|e| e.to_string())?;
        ensure(probe.relative_gap.abs() < 0.05, || {
            format!("{}: gap {:.2}%", f.kind, 100.0 * probe.relative_gap)
        })?;
        parts.push(format!("{} gap {:+.2}%", f.kind, 100.0 * probe.relative_gap));
    }
    Ok(parts.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("closed forms vs generic Riccati", criterion_1),
        ("robust reduces to Kalman at mu = 0", criterion_2),
        ("worst-case orderings", criterion_3),
        ("delta sweep at mu = 0.5", criterion_4),
        ("worst case against SQL over mu", criterion_5),
        ("effective quantum efficiency", criterion_6),
        ("effective noise power", criterion_7),
        ("two-time no-match", criterion_8),
        ("Monte Carlo agreement", criterion_9),
        ("sine-mode linearization gap", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
