//! Run configuration: a flat JSON document, command-line overrides, and
//! the per-experiment resolved form that is echoed into every output.

use std::path::{Path, PathBuf};

use coalscale::analysis::log_spaced;
use coalscale::estimators::{default_box_width, BoxFamily};
use coalscale::simulator::{check_clearance, InitialCondition};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Version of the configuration and output schemas.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Bounds,
    Hciz,
    Simulate,
    Density,
    Fit,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// Slope of the deterministic kernel against time.
    KmSlope,
    /// Slope of density estimates read from estimate tables.
    Density,
    /// Vandermonde profile of density estimates at one time.
    Profile,
}

/// Boxes given by their centres and width, optionally in units of `√t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub centers: Vec<f64>,
    pub width: f64,
    #[serde(default)]
    pub scale_with_t: bool,
}

impl BoxSpec {
    pub fn at(&self, t: f64) -> Result<BoxFamily, Failure> {
        let s = if self.scale_with_t { t.sqrt() } else { 1.0 };
        let centers: Vec<f64> = self.centers.iter().map(|c| c * s).collect();
        BoxFamily::centered(&centers, self.width * s).map_err(Failure::config)
    }
}

/// The configuration file. Every field is optional so that a file may
/// hold only what differs from the defaults; the resolved form is what
/// gets recorded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: Option<u32>,
    pub kind: Option<Experiment>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub t: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub replicas: Option<u64>,
    pub trials: Option<u64>,
    pub samples: Option<u64>,
    pub range: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub initial: Option<InitialCondition>,
    pub bridge: Option<bool>,
    pub boxes: Option<Vec<BoxSpec>>,
    pub fit: Option<FitKind>,
    pub reach: Option<f64>,
    pub inputs: Option<Vec<PathBuf>>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("reading {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::Config(format!("parsing {}: {e}", path.display())))?;
        match cfg.version {
            Some(SCHEMA_VERSION) => Ok(cfg),
            Some(v) => Err(Failure::Config(format!(
                "{}: config version {v} is not supported (expected {SCHEMA_VERSION})",
                path.display()
            ))),
            None => Err(Failure::Config(format!("{}: missing \"version\"", path.display()))),
        }
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            version, kind, seed, n, t, dt, replicas, trials, samples, range, x, y, initial,
            bridge, boxes, fit, reach, inputs, out
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsRun {
    pub n: usize,
    pub t: Vec<f64>,
    pub trials: u64,
    pub range: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HcizRun {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateRun {
    pub initial: InitialCondition,
    pub dt: f64,
    pub t: Vec<f64>,
    pub replicas: u64,
    pub seed: u64,
    pub bridge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRun {
    pub n: usize,
    #[serde(flatten)]
    pub sim: SimulateRun,
    pub boxes: Vec<BoxSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRun {
    pub fit: FitKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reach: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRun {
    pub inputs: Vec<PathBuf>,
}

/// A fully resolved run; this is what outputs echo.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resolved {
    Bounds(BoundsRun),
    Hciz(HcizRun),
    Simulate(SimulateRun),
    Density(DensityRun),
    Fit(FitRun),
    Report(ReportRun),
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Config(format!("missing required parameter {what}")))
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Config(format!("{name} must be positive, got {v}")))
    }
}

fn dimension(n: usize) -> Result<usize, Failure> {
    if n == 0 {
        Err(Failure::Config("n must be at least 1".into()))
    } else {
        Ok(n)
    }
}

fn times(t: Vec<f64>) -> Result<Vec<f64>, Failure> {
    if t.is_empty() {
        return Err(Failure::Config("the time list is empty".into()));
    }
    for &v in &t {
        positive("time", v)?;
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::Config("times must be strictly increasing".into()));
    }
    Ok(t)
}

fn points(v: &[f64], n: usize, name: &str) -> Result<Vec<f64>, Failure> {
    if v.len() != n {
        return Err(Failure::Config(format!("{name} has {} entries, expected n = {n}", v.len())));
    }
    coalscale::OrderedPoints::new(v.to_vec()).map_err(Failure::config)?;
    Ok(v.to_vec())
}

fn integer_points(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

fn simulate_run(c: &RunConfig, default_t: &[f64]) -> Result<SimulateRun, Failure> {
    let run = SimulateRun {
        initial: c.initial.clone().unwrap_or(InitialCondition::Lattice {
            spacing: 1.0,
            extent: 40.0,
        }),
        dt: positive("dt", c.dt.unwrap_or(0.1))?,
        t: times(c.t.clone().unwrap_or_else(|| default_t.to_vec()))?,
        replicas: c.replicas.unwrap_or(1000),
        seed: c.seed.unwrap_or(0),
        bridge: c.bridge.unwrap_or(true),
    };
    run.initial.validate().map_err(Failure::config)?;
    if run.replicas == 0 {
        return Err(Failure::Config("replicas must be at least 1".into()));
    }
    let cfg = run.simulation_config();
    cfg.step_schedule().map_err(Failure::config)?;
    Ok(run)
}

impl SimulateRun {
    pub fn simulation_config(&self) -> coalscale::simulator::SimulationConfig {
        let mut cfg = coalscale::simulator::SimulationConfig::new(
            self.dt,
            self.t.clone(),
            self.seed,
            self.replicas,
        );
        cfg.bridge = self.bridge;
        cfg
    }
}

impl DensityRun {
    /// Every box family paired with its observation index.
    pub fn probes(&self) -> Result<Vec<coalscale::estimators::Probe>, Failure> {
        let mut out = Vec::new();
        for (i, &t) in self.sim.t.iter().enumerate() {
            for spec in &self.boxes {
                out.push(coalscale::estimators::Probe {
                    time_index: i,
                    boxes: spec.at(t)?,
                });
            }
        }
        Ok(out)
    }
}

/// Default boxes: `n` boxes of width `0.2√t/n`, centres `√t/n` apart
/// around the origin.
pub fn default_boxes(n: usize) -> BoxSpec {
    let centers = (0..n)
        .map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) / n as f64)
        .collect();
    BoxSpec {
        centers,
        width: default_box_width(n, 1.0),
        scale_with_t: true,
    }
}

pub fn resolve(kind: Experiment, c: &RunConfig) -> Result<Resolved, Failure> {
    if let Some(k) = c.kind {
        if k != kind {
            return Err(Failure::Config(format!(
                "config is for {k:?} but the {kind:?} subcommand was run"
            )));
        }
    }
    Ok(match kind {
        Experiment::Bounds => {
            let n = dimension(c.n.unwrap_or(2))?;
            Resolved::Bounds(BoundsRun {
                n,
                t: times(c.t.clone().unwrap_or_else(|| vec![0.25, 1.0, 4.0]))?,
                trials: c.trials.unwrap_or(1000),
                range: positive("range", c.range.unwrap_or(3.0))?,
                seed: c.seed.unwrap_or(0),
            })
        }
        Experiment::Hciz => {
            let n = dimension(c.n.unwrap_or(2))?;
            let samples = c.samples.unwrap_or(100_000);
            if samples < 2 {
                return Err(Failure::Config("samples must be at least 2".into()));
            }
            Resolved::Hciz(HcizRun {
                n,
                x: points(c.x.as_deref().unwrap_or(&integer_points(n)), n, "x")?,
                y: points(c.y.as_deref().unwrap_or(&integer_points(n)), n, "y")?,
                samples,
                seed: c.seed.unwrap_or(0),
            })
        }
        Experiment::Simulate => Resolved::Simulate(simulate_run(c, &[1.0])?),
        Experiment::Density => {
            let n = dimension(c.n.unwrap_or(1))?;
            let sim = simulate_run(c, &[16.0, 32.0, 64.0, 128.0])?;
            let boxes = c.boxes.clone().unwrap_or_else(|| vec![default_boxes(n)]);
            if let Some(b) = boxes.iter().find(|b| b.centers.len() != n) {
                return Err(Failure::Config(format!(
                    "box family {:?} has {} boxes, expected n = {n}",
                    b.centers,
                    b.centers.len()
                )));
            }
            let run = DensityRun { n, sim, boxes };
            for p in run.probes()? {
                let t = run.sim.t[p.time_index];
                check_clearance(&run.sim.initial, p.boxes.reach(), t).map_err(Failure::config)?;
            }
            Resolved::Density(run)
        }
        Experiment::Fit => {
            let fit = need(c.fit, "fit kind (--kind)")?;
            match fit {
                FitKind::KmSlope => {
                    let n = dimension(c.n.unwrap_or(2))?;
                    Resolved::Fit(FitRun {
                        fit,
                        n: Some(n),
                        x: Some(points(c.x.as_deref().unwrap_or(&integer_points(n)), n, "x")?),
                        y: Some(points(c.y.as_deref().unwrap_or(&integer_points(n)), n, "y")?),
                        t: Some(times(c.t.clone().unwrap_or_else(|| log_spaced(1e2, 1e6, 9)))?),
                        reach: None,
                        inputs: vec![],
                    })
                }
                FitKind::Density | FitKind::Profile => {
                    let inputs = c.inputs.clone().unwrap_or_default();
                    if inputs.is_empty() {
                        return Err(Failure::Config("no estimate tables given (--input)".into()));
                    }
                    let reach = match fit {
                        FitKind::Profile => Some(positive("reach", c.reach.unwrap_or(2.0))?),
                        _ => None,
                    };
                    Resolved::Fit(FitRun {
                        fit,
                        n: None,
                        x: None,
                        y: None,
                        t: None,
                        reach,
                        inputs,
                    })
                }
            }
        }
        Experiment::Report => {
            let inputs = c.inputs.clone().unwrap_or_default();
            if inputs.is_empty() {
                return Err(Failure::Config("report needs at least one input file".into()));
            }
            Resolved::Report(ReportRun { inputs })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_overrides() {
        let base = RunConfig {
            n: Some(3),
            seed: Some(1),
            ..Default::default()
        };
        let over = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        let c = base.overlay(over);
        assert_eq!((c.n, c.seed), (Some(3), Some(9)));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"version":1,"nn":3}"#).is_err());
    }

    #[test]
    fn kind_mismatch_is_a_config_error() {
        let c = RunConfig {
            kind: Some(Experiment::Hciz),
            ..Default::default()
        };
        assert!(matches!(resolve(Experiment::Bounds, &c), Err(Failure::Config(_))));
    }

    #[test]
    fn density_requires_clearance() {
        let c = RunConfig {
            initial: Some(InitialCondition::Lattice {
                spacing: 1.0,
                extent: 10.0,
            }),
            t: Some(vec![64.0]),
            ..Default::default()
        };
        assert!(resolve(Experiment::Density, &c).is_err());
    }

    #[test]
    fn default_boxes_are_disjoint() {
        for n in 1..6 {
            let spec = default_boxes(n);
            let b = spec.at(16.0).unwrap();
            assert_eq!(b.n(), n);
            assert!((b.width() - default_box_width(n, 16.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn off_grid_times_fail_resolution() {
        let c = RunConfig {
            dt: Some(0.3),
            t: Some(vec![1.0]),
            ..Default::default()
        };
        assert!(resolve(Experiment::Simulate, &c).is_err());
    }
}
