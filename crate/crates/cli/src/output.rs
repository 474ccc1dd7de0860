//! Output framing. CSV files open with `#` lines carrying the schema
//! version and the resolved configuration; JSON files wrap their result in
//! an envelope with the same information.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::{Resolved, SCHEMA_VERSION};
use crate::Failure;

const CSV_SCHEMA_PREFIX: &str = "# coalscale schema ";
const CSV_CONFIG_PREFIX: &str = "# config: ";

pub fn csv_preamble(resolved: &Resolved) -> Vec<u8> {
    let config = serde_json::to_string(resolved).expect("config serializes");
    format!("{CSV_SCHEMA_PREFIX}{SCHEMA_VERSION}\n{CSV_CONFIG_PREFIX}{config}\n").into_bytes()
}

pub fn csv_artifact(resolved: &Resolved, body: Vec<u8>) -> Vec<u8> {
    let mut out = csv_preamble(resolved);
    out.extend(body);
    out
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema: u32,
    config: &'a Resolved,
    result: &'a T,
}

pub fn json_artifact<T: Serialize>(resolved: &Resolved, result: &T) -> Vec<u8> {
    let env = Envelope {
        schema: SCHEMA_VERSION,
        config: resolved,
        result,
    };
    let mut out = serde_json::to_vec_pretty(&env).expect("result serializes");
    out.push(b'\n');
    out
}

/// A result file read back for consolidation.
#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Csv { config: Value, body: String },
    Json { config: Value, result: Value },
}

impl Parsed {
    pub fn config(&self) -> &Value {
        match self {
            Parsed::Csv { config, .. } | Parsed::Json { config, .. } => config,
        }
    }

    pub fn kind(&self) -> &str {
        self.config()["kind"].as_str().unwrap_or("")
    }
}

fn mismatch(path: &Path, what: &str) -> Failure {
    Failure::Config(format!("{}: {what}", path.display()))
}

pub fn read_artifact(path: &Path) -> Result<Parsed, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("reading {}: {e}", path.display())))?;
    parse_artifact(path, &text)
}

pub fn parse_artifact(path: &Path, text: &str) -> Result<Parsed, Failure> {
    if let Some(rest) = text.strip_prefix(CSV_SCHEMA_PREFIX) {
        let (version, rest) = rest
            .split_once('\n')
            .ok_or_else(|| mismatch(path, "truncated header"))?;
        if version.trim() != SCHEMA_VERSION.to_string() {
            return Err(mismatch(
                path,
                &format!("schema version {} does not match {SCHEMA_VERSION}", version.trim()),
            ));
        }
        let (line, body) = rest
            .split_once('\n')
            .ok_or_else(|| mismatch(path, "truncated header"))?;
        let config = line
            .strip_prefix(CSV_CONFIG_PREFIX)
            .and_then(|c| serde_json::from_str(c).ok())
            .ok_or_else(|| mismatch(path, "missing config header"))?;
        return Ok(Parsed::Csv {
            config,
            body: body.to_string(),
        });
    }
    let v: Value = serde_json::from_str(text)
        .map_err(|_| mismatch(path, "not a coalscale CSV or JSON result"))?;
    match v.get("schema").and_then(Value::as_u64) {
        Some(s) if s == u64::from(SCHEMA_VERSION) => Ok(Parsed::Json {
            config: v["config"].clone(),
            result: v["result"].clone(),
        }),
        Some(s) => Err(mismatch(
            path,
            &format!("schema version {s} does not match {SCHEMA_VERSION}"),
        )),
        None => Err(mismatch(path, "missing schema version")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ReportRun;

    fn resolved() -> Resolved {
        Resolved::Report(ReportRun {
            inputs: vec!["a.csv".into()],
        })
    }

    #[test]
    fn csv_round_trip() {
        let bytes = csv_artifact(&resolved(), b"a,b\n1,2\n".to_vec());
        let text = String::from_utf8(bytes).unwrap();
        let p = parse_artifact(Path::new("x.csv"), &text).unwrap();
        assert_eq!(p.kind(), "report");
        match p {
            Parsed::Csv { body, .. } => assert_eq!(body, "a,b\n1,2\n"),
            _ => panic!("expected csv"),
        }
    }

    #[test]
    fn json_round_trip() {
        let bytes = json_artifact(&resolved(), &vec![1.5, 2.0]);
        let p = parse_artifact(Path::new("x.json"), std::str::from_utf8(&bytes).unwrap()).unwrap();
        match p {
            Parsed::Json { result, .. } => assert_eq!(result, serde_json::json!([1.5, 2.0])),
            _ => panic!("expected json"),
        }
    }

    #[test]
    fn foreign_schema_names_the_file() {
        let err = parse_artifact(Path::new("old.csv"), "# coalscale schema 0\n# config: {}\n").unwrap_err();
        assert!(matches!(&err, Failure::Config(m) if m.contains("old.csv")));
        let err = parse_artifact(Path::new("old.json"), r#"{"schema": 7}"#).unwrap_err();
        assert!(matches!(&err, Failure::Config(m) if m.contains("old.json")));
        assert!(parse_artifact(Path::new("junk.txt"), "hello").is_err());
    }
}
