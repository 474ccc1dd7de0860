//! Consolidates result files into one pass/fail table.

use std::path::{Path, PathBuf};

use coalscale::analysis::Verdict;
use coalscale::estimators::check_lemma2;
use serde::Serialize;
use serde_json::Value;

use crate::config::{ReportRun, Resolved};
use crate::experiments::read_estimate_table;
use crate::output::{json_artifact, read_artifact, Parsed};
use crate::{Artifact, Failure, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub check: String,
    pub file: PathBuf,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub rows: Vec<Row>,
    pub pass: bool,
}

fn row(check: &str, file: &Path, ok: bool, detail: String) -> Row {
    Row {
        check: check.into(),
        file: file.to_path_buf(),
        verdict: Verdict::from_bool(ok),
        detail,
    }
}

fn bounds_rows(file: &Path, body: &str) -> Result<Vec<Row>, Failure> {
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Failure::Config(format!("{}: {e}", file.display())))?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "within")
        .ok_or_else(|| Failure::Config(format!("{}: no within column", file.display())))?;
    let (mut total, mut bad) = (0usize, 0usize);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Failure::Config(format!("{}: {e}", file.display())))?;
        total += 1;
        if rec.get(col) != Some("true") {
            bad += 1;
        }
    }
    Ok(vec![row(
        "sandwich bounds",
        file,
        bad == 0,
        format!("{bad} of {total} evaluations outside the bounds"),
    )])
}

fn hciz_rows(file: &Path, result: &Value) -> Vec<Row> {
    let z = result["z_score"].as_f64().unwrap_or(f64::NAN);
    vec![
        row(
            "unitary-orbit extrema",
            file,
            true,
            format!("{} samples inside the permutation extrema", result["samples"]),
        ),
        row(
            "determinant identity",
            file,
            result["consistent"].as_bool() == Some(true),
            format!("z = {z:.3}"),
        ),
    ]
}

fn density_rows(file: &Path) -> Result<Vec<Row>, Failure> {
    let table = read_estimate_table(file)?;
    Ok(table
        .rows
        .iter()
        .map(|r| {
            let d = &r.density;
            let audit = check_lemma2(d);
            row(
                "product bound",
                file,
                audit.pass,
                format!(
                    "n = {}, t = {}, boxes = {:?} (width {}): margin {:.3e}",
                    d.n,
                    d.t,
                    d.boxes.lefts(),
                    d.boxes.width(),
                    audit.margin
                ),
            )
        })
        .collect())
}

fn fit_rows(file: &Path, result: &Value) -> Vec<Row> {
    let items = result.as_array().cloned().unwrap_or_default();
    items
        .iter()
        .map(|it| {
            let ok = it["verdict"] == "PASS";
            if it.get("dispersion").is_some() {
                row(
                    "vandermonde profile",
                    file,
                    ok,
                    format!("t = {}: dispersion {}", it["t"], it["dispersion"]),
                )
            } else {
                row(
                    "exponent fit",
                    file,
                    ok,
                    format!(
                        "n = {}: slope {} vs {}",
                        it["n"], it["fitted_slope"], it["expected_slope"]
                    ),
                )
            }
        })
        .collect()
}

pub fn summarize(inputs: &[PathBuf]) -> Result<Summary, Failure> {
    if inputs.is_empty() {
        return Err(Failure::Config("report needs at least one input file".into()));
    }
    let mut rows = Vec::new();
    for file in inputs {
        let parsed = read_artifact(file)?;
        match (parsed.kind(), &parsed) {
            ("bounds", Parsed::Csv { body, .. }) => rows.extend(bounds_rows(file, body)?),
            ("hciz", Parsed::Json { result, .. }) => rows.extend(hciz_rows(file, result)),
            ("density", Parsed::Csv { .. }) => rows.extend(density_rows(file)?),
            ("fit", Parsed::Json { result, .. }) => rows.extend(fit_rows(file, result)),
            ("simulate", _) => {}
            (kind, _) => {
                return Err(Failure::Config(format!(
                    "{}: unexpected result kind {kind:?}",
                    file.display()
                )))
            }
        }
    }
    let pass = rows.iter().all(|r| r.verdict == Verdict::Pass);
    Ok(Summary { rows, pass })
}

pub fn render(summary: &Summary) -> String {
    let mut s = String::new();
    for r in &summary.rows {
        let v = match r.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        s.push_str(&format!(
            "{v}  {:<22} {}  {}\n",
            r.check,
            r.file.display(),
            r.detail
        ));
    }
    s
}

pub fn consolidate(inputs: &[PathBuf], out: Option<PathBuf>) -> Result<Outcome, Failure> {
    let summary = summarize(inputs)?;
    let mut artifacts = vec![Artifact {
        path: None,
        bytes: render(&summary).into_bytes(),
    }];
    if let Some(path) = out {
        let resolved = Resolved::Report(ReportRun {
            inputs: inputs.to_vec(),
        });
        artifacts.push(Artifact {
            path: Some(path),
            bytes: json_artifact(&resolved, &summary),
        });
    }
    let audit_failures = summary
        .rows
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| format!("{} failed in {}: {}", r.check, r.file.display(), r.detail))
        .collect();
    Ok(Outcome {
        artifacts,
        notes: vec![],
        audit_failures,
    })
}
