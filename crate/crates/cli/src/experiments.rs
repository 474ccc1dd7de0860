//! One function per experiment kind. Each computes its results in memory
//! and returns the artifacts to write along with any failed audits.

use std::path::{Path, PathBuf};

use coalscale::analysis::{
    self, density_points, fit_exponent, km_expected_slope, km_slope_check, predicted_alpha,
    vandermonde_profile_check, FitReport, Verdict,
};
use coalscale::estimators::{
    check_lemma2, tally_replicas, write_estimate_table, BoxFamily, DensityEstimate, EstimateRow,
    FactorialMomentEstimate,
};
use coalscale::hciz::{self, permutation_extrema};
use coalscale::kernels::{km_bounds, km_density, log_sandwich_constant};
use coalscale::par::{self, Execution};
use coalscale::rng::{self, Purpose};
use coalscale::simulator::run_replicas;
use coalscale::{OrderedPoints, TimeValue};
use rand::Rng;
use serde::Serialize;

use crate::config::{BoundsRun, DensityRun, FitKind, FitRun, HcizRun, Resolved, SimulateRun};
use crate::output::{csv_artifact, json_artifact, read_artifact, Parsed};
use crate::{report, Artifact, Failure, Outcome};

/// Relative slack on the sandwich bounds.
pub const SANDWICH_SLACK: f64 = 1e-9;

/// Haar samples per independent stream.
pub const HAAR_CHUNK: u64 = 1000;

pub fn run(resolved: &Resolved, out: Option<PathBuf>) -> Result<Outcome, Failure> {
    match resolved {
        Resolved::Bounds(r) => bounds(resolved, r, out),
        Resolved::Hciz(r) => hciz_run(resolved, r, out),
        Resolved::Simulate(r) => simulate(resolved, r, out),
        Resolved::Density(r) => density(resolved, r, out),
        Resolved::Fit(r) => fit(resolved, r, out),
        Resolved::Report(r) => report::consolidate(&r.inputs, out),
    }
}

fn csv_error(e: csv::Error) -> Failure {
    Failure::Config(format!("csv: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichRow {
    pub trial: u64,
    pub t: f64,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub log_lower: f64,
    pub log_value: f64,
    pub log_upper: f64,
    pub within: bool,
}

/// `n` sorted distinct uniforms on `[-range, range]`.
fn random_points<R: Rng>(n: usize, range: f64, rng: &mut R) -> OrderedPoints {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-range..=range)).collect();
        v.sort_by(f64::total_cmp);
        if let Ok(p) = OrderedPoints::new(v) {
            return p;
        }
    }
}

/// Random ordered `(x, y)` per trial, each checked against the sandwich
/// bounds at every time.
pub fn sandwich_trials(run: &BoundsRun) -> Result<Vec<SandwichRow>, Failure> {
    let rows = par::map_indexed(run.trials, Execution::Parallel, |trial| {
        let mut rng = rng::stream(run.seed, Purpose::Trials, trial);
        let x = random_points(run.n, run.range, &mut rng);
        let y = random_points(run.n, run.range, &mut rng);
        run.t
            .iter()
            .map(|&t| {
                let tv = TimeValue::new(t)?;
                let value = km_density(&x, &y, tv)?;
                let b = km_bounds(&x, &y, tv)?;
                Ok(SandwichRow {
                    trial,
                    t,
                    lower: b.lower.to_f64(),
                    value: value.to_f64(),
                    upper: b.upper.to_f64(),
                    log_lower: b.lower.log_abs,
                    log_value: value.log_abs,
                    log_upper: b.upper.log_abs,
                    within: value.sign == coalscale::Sign::Positive
                        && b.contains(value, SANDWICH_SLACK),
                })
            })
            .collect::<coalscale::Result<Vec<_>>>()
    });
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

fn bounds(resolved: &Resolved, run: &BoundsRun, out: Option<PathBuf>) -> Result<Outcome, Failure> {
    let rows = sandwich_trials(run)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let body = w.into_inner().map_err(|e| Failure::Config(e.to_string()))?;
    let violations: Vec<String> = rows
        .iter()
        .filter(|r| !r.within)
        .map(|r| format!("sandwich violated: trial {} at t = {}", r.trial, r.t))
        .collect();
    Ok(Outcome {
        artifacts: vec![Artifact {
            path: out,
            bytes: csv_artifact(resolved, body),
        }],
        notes: vec![format!(
            "{} evaluations, {} outside the bounds",
            rows.len(),
            violations.len()
        )],
        audit_failures: violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HcizResult {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
    pub extrema_min: f64,
    pub extrema_max: f64,
    pub log_determinant: f64,
    pub sandwich_constant: f64,
    /// `det[e^{x_i y_j}] / (c_n Δ(x) Δ(y))`.
    pub implied: f64,
    pub z_score: f64,
    pub consistent: bool,
}

pub fn hciz_result(run: &HcizRun) -> Result<HcizResult, Failure> {
    let x = OrderedPoints::new(run.x.clone()).map_err(Failure::config)?;
    let y = OrderedPoints::new(run.y.clone()).map_err(Failure::config)?;
    let (lo, hi) = permutation_extrema(&x, &y)?;
    let est = hciz::hciz_integral_mc_streams(&x, &y, run.samples, run.seed, HAAR_CHUNK, Execution::Parallel)?;
    let log_c = log_sandwich_constant(run.n);
    let implied = hciz::implied_integral(&x, &y, log_c)?;
    let z = est.z_score(implied);
    Ok(HcizResult {
        mean: est.mean,
        stderr: est.stderr,
        samples: est.n_samples,
        extrema_min: lo,
        extrema_max: hi,
        log_determinant: hciz::exp_kernel_determinant(&x, &y).log_abs,
        sandwich_constant: log_c.exp(),
        implied,
        z_score: z,
        consistent: z.abs() <= 3.0,
    })
}

fn hciz_run(resolved: &Resolved, run: &HcizRun, out: Option<PathBuf>) -> Result<Outcome, Failure> {
    let r = hciz_result(run)?;
    Ok(Outcome {
        artifacts: vec![Artifact {
            path: out,
            bytes: json_artifact(resolved, &r),
        }],
        notes: vec![format!(
            "mean {} ± {}, determinant identity gives {} (z = {:.2})",
            r.mean, r.stderr, r.implied, r.z_score
        )],
        audit_failures: vec![],
    })
}

fn simulate(resolved: &Resolved, run: &SimulateRun, out: Option<PathBuf>) -> Result<Outcome, Failure> {
    let ensemble = run_replicas(&run.initial, &run.simulation_config())?;
    let mut body = Vec::new();
    ensemble.write_csv(&mut body)?;
    Ok(Outcome {
        artifacts: vec![Artifact {
            path: out,
            bytes: csv_artifact(resolved, body),
        }],
        notes: vec![format!("{} replicas simulated", ensemble.len())],
        audit_failures: vec![],
    })
}

/// One estimate-table row per (time, box family), times outermost.
pub fn density_rows(run: &DensityRun) -> Result<Vec<EstimateRow>, Failure> {
    let probes = run.probes()?;
    let tallies = tally_replicas(
        &run.sim.initial,
        &run.sim.simulation_config(),
        Execution::Parallel,
        &probes,
    )?;
    probes
        .iter()
        .zip(&tallies)
        .map(|(p, tally)| Ok(EstimateRow::from_tally(tally, run.sim.t[p.time_index], &p.boxes)?))
        .collect()
}

fn describe(e: &DensityEstimate) -> String {
    format!("n = {}, t = {}, boxes = {:?} (width {})", e.n, e.t, e.boxes.lefts(), e.boxes.width())
}

pub fn lemma2_failures(rows: &[EstimateRow]) -> Vec<String> {
    rows.iter()
        .filter(|r| !check_lemma2(&r.density).pass)
        .map(|r| format!("product bound exceeded: {}", describe(&r.density)))
        .collect()
}

fn density(resolved: &Resolved, run: &DensityRun, out: Option<PathBuf>) -> Result<Outcome, Failure> {
    let rows = density_rows(run)?;
    let mut body = Vec::new();
    write_estimate_table(&rows, &mut body)?;
    let empty = rows.iter().filter(|r| r.density.p_hat == 0.0).count();
    let mut notes = vec![format!("{} estimates", rows.len())];
    if empty > 0 {
        notes.push(format!("{empty} estimates saw no occupied replicas"));
    }
    Ok(Outcome {
        artifacts: vec![Artifact {
            path: out,
            bytes: csv_artifact(resolved, body),
        }],
        notes,
        audit_failures: lemma2_failures(&rows),
    })
}

/// An estimate table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    pub run: serde_json::Value,
    pub rows: Vec<EstimateRow>,
    /// Index of the box specification each row came from.
    pub spec: Vec<usize>,
    pub scaled: Vec<bool>,
}

pub fn read_estimate_table(path: &Path) -> Result<EstimateTable, Failure> {
    let parsed = read_artifact(path)?;
    let (config, body) = match parsed {
        Parsed::Csv { config, body } if config["kind"] == "density" => (config, body),
        _ => {
            return Err(Failure::Config(format!(
                "{}: not an estimate table",
                path.display()
            )))
        }
    };
    let bad = |what: &str| Failure::Config(format!("{}: {what}", path.display()));
    let specs = config["boxes"].as_array().ok_or_else(|| bad("config lacks boxes"))?;
    let replicas = config["replicas"].as_u64().ok_or_else(|| bad("config lacks replicas"))?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let num = |i: usize| -> Result<f64, Failure> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| bad(&format!("bad number in column {}", i + 1)))
        };
        let n = num(0)? as usize;
        let (t, delta) = (num(1)?, num(2)?);
        let lefts = (0..n).map(|i| num(3 + i)).collect::<Result<Vec<_>, _>>()?;
        let boxes = BoxFamily::new(lefts, delta).map_err(Failure::config)?;
        let k = 3 + n;
        rows.push(EstimateRow {
            density: DensityEstimate {
                n,
                t,
                boxes,
                p_hat: num(k)?,
                stderr: num(k + 1)?,
                replicas,
                density: num(k + 2)?,
            },
            factorial: FactorialMomentEstimate {
                mean: num(k + 3)?,
                stderr: num(k + 4)?,
                replicas,
            },
        });
    }
    if rows.is_empty() || rows.len() % specs.len() != 0 {
        return Err(bad("row count does not match the box specifications"));
    }
    let spec: Vec<usize> = (0..rows.len()).map(|i| i % specs.len()).collect();
    let scaled = spec
        .iter()
        .map(|&s| specs[s]["scale_with_t"].as_bool().unwrap_or(false))
        .collect();
    Ok(EstimateTable {
        run: config,
        rows,
        spec,
        scaled,
    })
}

/// Exponent fits for every box specification in a table. Fixed boxes fit
/// the density against `−α(n)`; boxes scaled with `√t` fit the factorial
/// moment against `−n(n−1)/4`.
pub fn table_fits(table: &EstimateTable) -> Result<Vec<FitReport>, Failure> {
    let specs = table.spec.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = Vec::new();
    for s in 0..specs {
        let idx: Vec<usize> = (0..table.rows.len()).filter(|&i| table.spec[i] == s).collect();
        let n = table.rows[idx[0]].density.n;
        let report = if table.scaled[idx[0]] {
            let points: Vec<_> = idx
                .iter()
                .map(|&i| {
                    let r = &table.rows[i];
                    (r.density.t, r.factorial.mean, r.factorial.stderr)
                })
                .collect();
            let fit = fit_exponent(&points)?;
            FitReport::judge(n, analysis::scaled_box_exponent(n), &fit, analysis::SCALED_BOX_TOLERANCE)
        } else {
            let est: Vec<DensityEstimate> = idx.iter().map(|&i| table.rows[i].density.clone()).collect();
            let fit = fit_exponent(&density_points(&est))?;
            let alpha = predicted_alpha(n as u64)?;
            let expected = -(*alpha.numer() as f64) / (*alpha.denom() as f64);
            FitReport::judge(n, expected, &fit, analysis::MC_RELATIVE_TOLERANCE * expected.abs())
        };
        out.push(report);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileResult {
    pub t: f64,
    pub ratios: Vec<f64>,
    pub ratio_stderrs: Vec<f64>,
    pub dispersion: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Profile checks at every time with at least three fixed box families.
pub fn table_profiles(table: &EstimateTable, reach: f64) -> Result<Vec<ProfileResult>, Failure> {
    let mut times: Vec<f64> = table.rows.iter().map(|r| r.density.t).collect();
    times.dedup();
    let mut out = Vec::new();
    for t in times {
        let est: Vec<DensityEstimate> = table
            .rows
            .iter()
            .zip(&table.scaled)
            .filter(|(r, &s)| r.density.t == t && !s)
            .map(|(r, _)| r.density.clone())
            .collect();
        if est.len() < 3 {
            continue;
        }
        let pc = vandermonde_profile_check(&est, reach)?;
        let tolerance = analysis::PROFILE_DISPERSION_TOLERANCE;
        out.push(ProfileResult {
            t,
            verdict: Verdict::from_bool(pc.dispersion <= tolerance),
            ratios: pc.ratios,
            ratio_stderrs: pc.ratio_stderrs,
            dispersion: pc.dispersion,
            tolerance,
        });
    }
    Ok(out)
}

fn fit(resolved: &Resolved, run: &FitRun, out: Option<PathBuf>) -> Result<Outcome, Failure> {
    let (bytes, failures, notes) = match run.fit {
        FitKind::KmSlope => {
            let n = run.n.expect("resolved");
            let x = OrderedPoints::new(run.x.clone().expect("resolved")).map_err(Failure::config)?;
            let y = OrderedPoints::new(run.y.clone().expect("resolved")).map_err(Failure::config)?;
            let t = run.t.as_deref().expect("resolved");
            let f = km_slope_check(&x, &y, t)?;
            let expected = km_expected_slope(n);
            let r = FitReport::judge(n, expected, &f, analysis::KM_RELATIVE_TOLERANCE * expected.abs());
            let fails = fit_failures(std::slice::from_ref(&r));
            (json_artifact(resolved, &vec![r]), fails, vec![format!("slope {}", f.slope)])
        }
        FitKind::Density => {
            let mut reports = Vec::new();
            for p in &run.inputs {
                reports.extend(table_fits(&read_estimate_table(p)?)?);
            }
            let fails = fit_failures(&reports);
            let notes = reports
                .iter()
                .map(|r| format!("n = {}: slope {} (expected {})", r.n, r.fitted_slope, r.expected_slope))
                .collect();
            (json_artifact(resolved, &reports), fails, notes)
        }
        FitKind::Profile => {
            let reach = run.reach.expect("resolved");
            let mut results = Vec::new();
            for p in &run.inputs {
                results.extend(table_profiles(&read_estimate_table(p)?, reach)?);
            }
            if results.is_empty() {
                return Err(Failure::Config(
                    "no time has three or more fixed box families".into(),
                ));
            }
            let fails = results
                .iter()
                .filter(|r| r.verdict == Verdict::Fail)
                .map(|r| format!("profile dispersion {} at t = {}", r.dispersion, r.t))
                .collect();
            let notes = results
                .iter()
                .map(|r| format!("t = {}: dispersion {}", r.t, r.dispersion))
                .collect();
            (json_artifact(resolved, &results), fails, notes)
        }
    };
    Ok(Outcome {
        artifacts: vec![Artifact { path: out, bytes }],
        notes,
        audit_failures: failures,
    })
}

fn fit_failures(reports: &[FitReport]) -> Vec<String> {
    reports
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| {
            format!(
                "n = {}: fitted slope {} outside tolerance of {}",
                r.n, r.fitted_slope, r.expected_slope
            )
        })
        .collect()
}
