//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use coalscale::analysis::{
    density_points, fit_exponent, km_expected_slope, km_slope_check, log_spaced,
    predicted_alpha, vandermonde_profile_check, ExponentFit,
};
use coalscale::estimators::{
    check_lemma2, default_box_width, tally_replicas, two_particle_survival, BoxFamily,
    DensityEstimate, Probe, Tally,
};
use coalscale::hciz::{
    hciz_integral_mc_streams, hciz_integrand, implied_integral, permutation_extrema,
    sample_haar_unitary, CLAIM_TOLERANCE,
};
use coalscale::kernels::{check_scaling, log_sandwich_constant, log_superfactorial};
use coalscale::par::Execution;
use coalscale::rng::{stream, Purpose};
use coalscale::simulator::{
    check_clearance, run_replicas_with, InitialCondition, SimulationConfig,
};
use coalscale::{OrderedPoints, TimeValue};
use coalscale_cli::config::BoundsRun;
use coalscale_cli::experiments::sandwich_trials;
use rand::Rng;

const SEED: u64 = 1;

struct Verdict {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn criterion(
    id: &'static str,
    title: &'static str,
    budget: Duration,
    check: impl FnOnce() -> (bool, String),
) -> Verdict {
    let start = Instant::now();
    let (ok, mut detail) = check();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    if !in_time {
        detail.push_str(&format!("; exceeded {budget:?} budget"));
    }
    let v = Verdict {
        id,
        title,
        pass: ok && in_time,
        detail,
        elapsed,
    };
    println!(
        "{} {:>3}  {:<34} {}  [{:.1?}]",
        if v.pass { "PASS" } else { "FAIL" },
        v.id,
        v.title,
        v.detail,
        v.elapsed
    );
    v
}

fn pts(v: &[f64]) -> OrderedPoints {
    OrderedPoints::new(v.to_vec()).unwrap()
}

fn integers(n: usize) -> OrderedPoints {
    pts(&(0..n).map(|i| i as f64).collect::<Vec<_>>())
}

fn sandwich() -> (bool, String) {
    let mut evaluations = 0;
    let mut violations = 0;
    for n in 2..=6 {
        let rows = sandwich_trials(&BoundsRun {
            n,
            t: vec![0.25, 1.0, 4.0],
            trials: 1000,
            range: 3.0,
            seed: SEED,
        })
        .unwrap();
        evaluations += rows.len();
        violations += rows.iter().filter(|r| !r.within).count();
    }
    (
        violations == 0,
        format!("{violations} violations in {evaluations} evaluations, n = 2..6"),
    )
}

fn constant_resolution() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2usize, 3] {
        let x = integers(n);
        let est = hciz_integral_mc_streams(&x, &x, 100_000, SEED, 1000, Execution::Parallel).unwrap();
        let corrected = est.z_score(implied_integral(&x, &x, log_sandwich_constant(n)).unwrap());
        ok &= corrected.abs() <= 3.0;
        parts.push(format!("n={n}: z={corrected:.2}"));
        if n == 2 {
            let printed = est.z_score(implied_integral(&x, &x, -log_superfactorial(n)).unwrap());
            ok &= printed.abs() >= 10.0;
            parts.push(format!("printed constant z={printed:.0}"));
        }
    }
    (ok, parts.join(", "))
}

fn claim_containment() -> (bool, String) {
    let xs = [-1.3, 0.2, 0.9, 2.4];
    let ys = [-0.7, 0.1, 1.5, 1.6];
    let mut outside = 0;
    for n in 2..=4 {
        let (x, y) = (pts(&xs[..n]), pts(&ys[..n]));
        let (lo, hi) = permutation_extrema(&x, &y).unwrap();
        let mut rng = stream(SEED, Purpose::Haar, n as u64);
        for _ in 0..10_000 {
            let u = sample_haar_unitary(n, &mut rng).unwrap();
            let f = hciz_integrand(&u, &x, &y).unwrap();
            if f < lo - CLAIM_TOLERANCE || f > hi + CLAIM_TOLERANCE {
                outside += 1;
            }
        }
    }
    (outside == 0, format!("{outside} of 30000 samples outside the extrema"))
}

fn scaling_identity() -> (bool, String) {
    let mut rng = stream(SEED, Purpose::Trials, 4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=5);
        let mut draw = || {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let (x, y) = (draw(), draw());
        let t = rng.random_range(0.1..10.0);
        worst = worst.max(check_scaling(&pts(&x), &pts(&y), TimeValue::new(t).unwrap()).unwrap());
    }
    (worst <= 1e-10, format!("largest deviation {worst:.2e}"))
}

fn km_slopes() -> (bool, String) {
    let grid = log_spaced(1e2, 1e6, 9);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 1..=5 {
        let x = integers(n);
        let fit = km_slope_check(&x, &x, &grid).unwrap();
        let expected = km_expected_slope(n);
        ok &= (fit.slope - expected).abs() <= 0.02 * expected.abs();
        parts.push(format!("{:.4}/{}", fit.slope, expected));
    }
    (ok, format!("slopes {}", parts.join(" ")))
}

/// Density estimates gathered for the product-bound audit.
#[derive(Default)]
struct Audit {
    estimates: Vec<DensityEstimate>,
}

fn one_point_density(audit: &mut Audit) -> (bool, String) {
    let t = 25.0;
    let cond = InitialCondition::Lattice {
        spacing: 1.0,
        extent: 200.0,
    };
    let cfg = SimulationConfig::new(0.05, vec![t], SEED, 10_000);
    let boxes = BoxFamily::centered(&[0.0], default_box_width(1, t)).unwrap();
    check_clearance(&cond, boxes.reach(), t).unwrap();
    let probes = [Probe {
        time_index: 0,
        boxes: boxes.clone(),
    }];
    let tally = tally_replicas(&cond, &cfg, Execution::Parallel, &probes).unwrap();
    let est = tally[0].density(t, &boxes).unwrap();
    let scaled = est.density * (PI * t).sqrt();
    audit.estimates.push(est);
    ((scaled - 1.0).abs() <= 0.05, format!("rho*sqrt(pi t) = {scaled:.4}"))
}

fn survival() -> (bool, String) {
    let t = 1.0;
    let gap = 1.0;
    let cond = InitialCondition::Explicit {
        positions: vec![0.0, gap],
    };
    let cfg = SimulationConfig::new(0.01, vec![t], SEED, 100_000);
    let alive = run_replicas_with(&cond, &cfg, Execution::Parallel, |_, s| s[0].len() == 2).unwrap();
    let n = alive.len() as f64;
    let p = alive.iter().filter(|&&a| a).count() as f64 / n;
    let exact = two_particle_survival(gap, TimeValue::new(t).unwrap()).unwrap();
    let se = (exact * (1.0 - exact) / n).sqrt();
    let bound = (PI * t).powf(-0.5) * gap;
    let ok = (p - exact).abs() <= 3.0 * se && p <= bound && exact <= bound;
    (
        ok,
        format!("survival {p:.4} vs {exact:.4} (3 se = {:.4}), bound {bound:.4}", 3.0 * se),
    )
}

struct Shared {
    times: Vec<f64>,
    probes: Vec<Probe>,
    tallies: Vec<Tally>,
}

const ONE_POINT: usize = 0;
const FIXED_PAIR: usize = 1;
const SCALED_PAIR: usize = 2;
const PER_TIME: usize = 3;

fn shared_run() -> Shared {
    let times = vec![16.0, 32.0, 64.0, 128.0];
    let cond = InitialCondition::Lattice {
        spacing: 1.0,
        extent: 45.0,
    };
    let cfg = SimulationConfig::new(0.1, times.clone(), SEED, 1_000_000);
    let mut probes = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let root = t.sqrt();
        for boxes in [
            BoxFamily::centered(&[0.0], 0.5),
            BoxFamily::centered(&[-1.0, 1.0], 1.0),
            BoxFamily::centered(&[-0.5 * root, 0.5 * root], default_box_width(2, t)),
        ] {
            probes.push(Probe {
                time_index: i,
                boxes: boxes.unwrap(),
            });
        }
    }
    let profile_time = 2;
    for (c, s) in [(0.0, 2.0), (0.0, 3.0), (0.0, 4.0), (-8.0, 3.0), (8.0, 3.0)] {
        probes.push(Probe {
            time_index: profile_time,
            boxes: BoxFamily::centered(&[c - s / 2.0, c + s / 2.0], 1.0).unwrap(),
        });
    }
    for p in &probes {
        check_clearance(&cond, p.boxes.reach(), times[p.time_index]).unwrap();
    }
    let tallies = tally_replicas(&cond, &cfg, Execution::Parallel, &probes).unwrap();
    Shared {
        times,
        probes,
        tallies,
    }
}

impl Shared {
    fn estimate(&self, k: usize) -> DensityEstimate {
        let p = &self.probes[k];
        self.tallies[k].density(self.times[p.time_index], &p.boxes).unwrap()
    }

    fn series(&self, slot: usize) -> Vec<usize> {
        (0..self.times.len()).map(|i| i * PER_TIME + slot).collect()
    }
}

fn describe_fit(f: &ExponentFit, expected: f64) -> String {
    format!("slope {:.4} ± {:.4} (expected {expected})", f.slope, f.slope_stderr)
}

fn one_point_exponent(shared: &Shared, audit: &mut Audit) -> (bool, String) {
    let est: Vec<_> = shared.series(ONE_POINT).into_iter().map(|k| shared.estimate(k)).collect();
    let fit = fit_exponent(&density_points(&est)).unwrap();
    audit.estimates.extend(est);
    let alpha = predicted_alpha(1).unwrap();
    let expected = -(*alpha.numer() as f64) / *alpha.denom() as f64;
    ((fit.slope - expected).abs() <= 0.05, describe_fit(&fit, expected))
}

fn two_point_exponent(shared: &Shared, audit: &mut Audit) -> (bool, String) {
    let est: Vec<_> = shared.series(FIXED_PAIR).into_iter().map(|k| shared.estimate(k)).collect();
    let fit = fit_exponent(&density_points(&est)).unwrap();
    audit.estimates.extend(est);
    let alpha = predicted_alpha(2).unwrap();
    let expected = -(*alpha.numer() as f64) / *alpha.denom() as f64;
    ((fit.slope - expected).abs() <= 0.15, describe_fit(&fit, expected))
}

fn scaled_box_exponent(shared: &Shared, audit: &mut Audit) -> (bool, String) {
    let idx = shared.series(SCALED_PAIR);
    let points: Vec<_> = idx
        .iter()
        .map(|&k| {
            let fm = shared.tallies[k].factorial_moment();
            (shared.times[shared.probes[k].time_index], fm.mean, fm.stderr)
        })
        .collect();
    audit.estimates.extend(idx.iter().map(|&k| shared.estimate(k)));
    let fit = fit_exponent(&points).unwrap();
    let n = 2.0;
    let expected = -n * (n - 1.0) / 4.0;
    ((fit.slope - expected).abs() <= 0.1, describe_fit(&fit, expected))
}

fn product_bound(audit: &Audit) -> (bool, String) {
    let failed: Vec<String> = audit
        .estimates
        .iter()
        .filter(|e| !check_lemma2(e).pass)
        .map(|e| format!("n={} t={} boxes={:?}", e.n, e.t, e.boxes.lefts()))
        .collect();
    let tightest = audit
        .estimates
        .iter()
        .map(|e| check_lemma2(e).margin / check_lemma2(e).bound)
        .fold(f64::INFINITY, f64::min);
    (
        failed.is_empty(),
        format!(
            "{} of {} estimates exceed the bound; smallest relative margin {tightest:.3}{}",
            failed.len(),
            audit.estimates.len(),
            if failed.is_empty() { String::new() } else { format!(": {}", failed.join("; ")) }
        ),
    )
}

fn vandermonde_profile(shared: &Shared) -> (bool, String) {
    let est: Vec<_> = (shared.times.len() * PER_TIME..shared.probes.len())
        .map(|k| shared.estimate(k))
        .collect();
    let pc = vandermonde_profile_check(&est, 2.0).unwrap();
    (
        pc.dispersion <= 0.2,
        format!(
            "dispersion {:.3} over {} configurations at t = 64",
            pc.dispersion,
            pc.ratios.len()
        ),
    )
}

fn run_cli(args: &[&str], threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_coalscale"))
        .args(args)
        .env("COALSCALE_THREADS", threads)
        .output()
        .expect("run coalscale");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn reproducibility(dir: &Path) -> (bool, String) {
    let config = dir.join("density.json");
    std::fs::write(
        &config,
        r#"{"version": 1, "n": 2, "t": [4, 8], "dt": 0.05, "replicas": 3000, "seed": 11,
            "initial": {"kind": "poisson", "intensity": 1.5, "extent": 30},
            "boxes": [{"centers": [-1, 1], "width": 0.5},
                      {"centers": [-0.5, 0.5], "width": 0.1, "scale_with_t": true}]}"#,
    )
    .unwrap();
    let config = config.to_str().unwrap();
    let runs: [&[&str]; 4] = [
        &["density", "--config", config],
        &["simulate", "--replicas", "200", "--t", "1,2", "--seed", "5"],
        &["hciz", "--n", "3", "--samples", "20000", "--seed", "5"],
        &["bounds", "--n", "4", "--trials", "300", "--seed", "5"],
    ];
    let mut identical = 0;
    for args in runs {
        let a = run_cli(args, "1");
        let b = run_cli(args, "1");
        let c = run_cli(args, "4");
        if !a.is_empty() && a == b && a == c {
            identical += 1;
        }
    }
    (
        identical == runs.len(),
        format!("{identical} of {} commands byte-identical across runs and 1/4 threads", runs.len()),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let mut verdicts = vec![
        criterion("1", "sandwich bounds", secs(10), sandwich),
        criterion("2", "constant resolution", secs(120), constant_resolution),
        criterion("3", "unitary-orbit containment", secs(60), claim_containment),
        criterion("4", "scaling identity", secs(1), scaling_identity),
        criterion("5", "deterministic kernel slopes", secs(10), km_slopes),
    ];
    let mut audit = Audit::default();
    verdicts.push(criterion("6", "one-point density", secs(600), || {
        one_point_density(&mut audit)
    }));
    verdicts.push(criterion("7", "two-particle survival", secs(60), survival));

    let start = Instant::now();
    let shared = shared_run();
    println!("      shared ensemble of 1e6 replicas in {:.1?}", start.elapsed());
    let budget = secs(1800).saturating_sub(start.elapsed());
    verdicts.push(criterion("8", "one-point exponent", budget, || {
        one_point_exponent(&shared, &mut audit)
    }));
    verdicts.push(criterion("9a", "two-point exponent, fixed boxes", budget, || {
        two_point_exponent(&shared, &mut audit)
    }));
    verdicts.push(criterion("9b", "factorial exponent, scaled boxes", budget, || {
        scaled_box_exponent(&shared, &mut audit)
    }));
    verdicts.push(criterion("10", "product bound audit", secs(1), || product_bound(&audit)));
    verdicts.push(criterion("11", "vandermonde profile", budget, || vandermonde_profile(&shared)));

    let dir = tempfile::tempdir().unwrap();
    verdicts.push(criterion("12", "reproducibility", secs(600), || reproducibility(dir.path())));

    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "{} of {} criteria passed{}",
        verdicts.len() - failed.len(),
        verdicts.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
