//! Occupancy probabilities, n-point density estimates and factorial
//! moments from ensembles of snapshots, plus the product-bound audit
//! `ρ_n ≤ (πt)^{-n/2}`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::TimeValue;
use crate::par::Execution;
use crate::simulator::{fold_replicas, InitialCondition, ParticleSnapshot, SimulationConfig};
use crate::stats::{normal_cdf, Moments};

/// `n` disjoint half-open boxes `[y_i, y_i + δ)` of common width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBoxes")]
pub struct BoxFamily {
    lefts: Vec<f64>,
    width: f64,
}

#[derive(Deserialize)]
struct RawBoxes {
    lefts: Vec<f64>,
    width: f64,
}

impl TryFrom<RawBoxes> for BoxFamily {
    type Error = Error;

    fn try_from(r: RawBoxes) -> Result<Self> {
        BoxFamily::new(r.lefts, r.width)
    }
}

impl BoxFamily {
    pub fn new(lefts: Vec<f64>, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Contract(format!("box width must be positive, got {width}")));
        }
        if lefts.is_empty() {
            return Err(Error::Contract("a box family needs at least one box".into()));
        }
        if lefts.iter().any(|y| !y.is_finite()) {
            return Err(Error::Contract("box positions must be finite".into()));
        }
        if let Some(w) = lefts.windows(2).find(|w| w[1] < w[0] + width) {
            return Err(Error::Contract(format!(
                "boxes at {} and {} overlap or are out of order (width {width})",
                w[0], w[1]
            )));
        }
        Ok(BoxFamily { lefts, width })
    }

    /// Boxes of width `width` centred on `centers`.
    pub fn centered(centers: &[f64], width: f64) -> Result<Self> {
        BoxFamily::new(centers.iter().map(|c| c - 0.5 * width).collect(), width)
    }

    pub fn n(&self) -> usize {
        self.lefts.len()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn lefts(&self) -> &[f64] {
        &self.lefts
    }

    pub fn centers(&self) -> Vec<f64> {
        self.lefts.iter().map(|y| y + 0.5 * self.width).collect()
    }

    /// Largest `|y|` reached by any box.
    pub fn reach(&self) -> f64 {
        self.lefts
            .iter()
            .map(|y| y.abs().max((y + self.width).abs()))
            .fold(0.0, f64::max)
    }

    /// Number of particles in each box.
    pub fn counts(&self, snapshot: &ParticleSnapshot) -> Vec<usize> {
        let p = snapshot.positions();
        self.lefts
            .iter()
            .map(|&a| {
                let lo = p.partition_point(|&x| x < a);
                let hi = p.partition_point(|&x| x < a + self.width);
                hi - lo
            })
            .collect()
    }
}

/// Default box width `0.2·√t / n`.
pub fn default_box_width(n: usize, t: f64) -> f64 {
    0.2 * t.sqrt() / n.max(1) as f64
}

/// Whether every box holds at least one particle.
pub fn occupancy_indicator(snapshot: &ParticleSnapshot, boxes: &BoxFamily) -> bool {
    let p = snapshot.positions();
    boxes.lefts.iter().all(|&a| {
        let i = p.partition_point(|&x| x < a);
        i < p.len() && p[i] < a + boxes.width
    })
}

/// `Π_j N(box_j)`: ordered tuples of distinct particles, one per box.
pub fn factorial_count(snapshot: &ParticleSnapshot, boxes: &BoxFamily) -> u64 {
    boxes.counts(snapshot).into_iter().map(|c| c as u64).product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub n: usize,
    pub t: f64,
    pub boxes: BoxFamily,
    pub p_hat: f64,
    pub stderr: f64,
    pub replicas: u64,
    pub density: f64,
}

impl DensityEstimate {
    fn from_hits(t: f64, boxes: BoxFamily, hits: u64, replicas: u64) -> Self {
        let p_hat = hits as f64 / replicas as f64;
        let stderr = (p_hat * (1.0 - p_hat) / replicas as f64).sqrt();
        let density = p_hat / boxes.width.powi(boxes.n() as i32);
        DensityEstimate {
            n: boxes.n(),
            t,
            boxes,
            p_hat,
            stderr,
            replicas,
            density,
        }
    }

    /// Standard error of `density`.
    pub fn density_stderr(&self) -> f64 {
        self.stderr / self.boxes.width.powi(self.n as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorialMomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: u64,
}

/// Streaming per-box-family statistics; observe snapshots one at a time
/// and merge partial tallies.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tally {
    pub replicas: u64,
    /// Replicas with every box occupied.
    pub hits: u64,
    /// Occupied replicas where some box holds two or more particles.
    pub multi: u64,
    pub factorial: Moments,
}

impl Tally {
    pub fn observe(&mut self, snapshot: &ParticleSnapshot, boxes: &BoxFamily) {
        let counts = boxes.counts(snapshot);
        self.replicas += 1;
        if counts.iter().all(|&c| c > 0) {
            self.hits += 1;
            if counts.iter().any(|&c| c > 1) {
                self.multi += 1;
            }
        }
        self.factorial
            .push(counts.iter().map(|&c| c as f64).product::<f64>());
    }

    pub fn merge(&self, other: &Tally) -> Tally {
        Tally {
            replicas: self.replicas + other.replicas,
            hits: self.hits + other.hits,
            multi: self.multi + other.multi,
            factorial: self.factorial.merge(&other.factorial),
        }
    }

    pub fn density(&self, t: f64, boxes: &BoxFamily) -> Result<DensityEstimate> {
        if self.replicas == 0 {
            return Err(Error::Contract("no replicas observed".into()));
        }
        Ok(DensityEstimate::from_hits(t, boxes.clone(), self.hits, self.replicas))
    }

    pub fn factorial_moment(&self) -> FactorialMomentEstimate {
        FactorialMomentEstimate {
            mean: self.factorial.mean,
            stderr: self.factorial.stderr(),
            replicas: self.factorial.count,
        }
    }

    /// Fraction of occupied replicas with a multiply occupied box.
    pub fn double_occupancy(&self) -> f64 {
        if self.hits == 0 {
            0.0
        } else {
            self.multi as f64 / self.hits as f64
        }
    }
}

/// A box family read at one observation time of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub time_index: usize,
    pub boxes: BoxFamily,
}

/// One [`Tally`] per probe over every replica of a run.
pub fn tally_replicas(
    cond: &InitialCondition,
    config: &SimulationConfig,
    mode: Execution,
    probes: &[Probe],
) -> Result<Vec<Tally>> {
    let times = config.observation_times.len();
    if let Some(p) = probes.iter().find(|p| p.time_index >= times) {
        return Err(Error::Contract(format!(
            "probe time index {} but only {times} observation times",
            p.time_index
        )));
    }
    let chunks = fold_replicas(
        cond,
        config,
        mode,
        || vec![Tally::default(); probes.len()],
        |acc, snaps| {
            for (tally, p) in acc.iter_mut().zip(probes) {
                tally.observe(&snaps[p.time_index], &p.boxes);
            }
        },
    )?;
    Ok(chunks.iter().fold(vec![Tally::default(); probes.len()], |acc, c| {
        acc.iter().zip(c).map(|(a, b)| a.merge(b)).collect()
    }))
}

fn common_time<'a, I>(snapshots: I) -> Result<(f64, Vec<&'a ParticleSnapshot>)>
where
    I: IntoIterator<Item = &'a ParticleSnapshot>,
{
    let all: Vec<&ParticleSnapshot> = snapshots.into_iter().collect();
    let first = all
        .first()
        .ok_or_else(|| Error::Contract("empty ensemble".into()))?
        .time;
    if let Some(s) = all.iter().find(|s| s.time != first) {
        return Err(Error::Contract(format!(
            "mixed observation times {first} and {}",
            s.time
        )));
    }
    Ok((first, all))
}

/// Fraction of snapshots with every box occupied, as a density estimate.
pub fn estimate_pn<'a, I>(snapshots: I, boxes: &BoxFamily) -> Result<DensityEstimate>
where
    I: IntoIterator<Item = &'a ParticleSnapshot>,
{
    let (t, all) = common_time(snapshots)?;
    let hits = all.iter().filter(|s| occupancy_indicator(s, boxes)).count() as u64;
    Ok(DensityEstimate::from_hits(t, boxes.clone(), hits, all.len() as u64))
}

pub fn estimate_factorial_moment<'a, I>(snapshots: I, boxes: &BoxFamily) -> Result<FactorialMomentEstimate>
where
    I: IntoIterator<Item = &'a ParticleSnapshot>,
{
    let (_, all) = common_time(snapshots)?;
    let m: Moments = all
        .iter()
        .map(|s| factorial_count(s, boxes) as f64)
        .collect();
    Ok(FactorialMomentEstimate {
        mean: m.mean,
        stderr: m.stderr(),
        replicas: m.count,
    })
}

/// `(πt)^{-n/2}`.
pub fn lemma2_bound(n: usize, t: f64) -> f64 {
    (PI * t).powf(-0.5 * n as f64)
}

/// The tighter factorial-measure bound `(2πt)^{-n/2}`, reported alongside.
pub fn factorial_measure_bound(n: usize, t: f64) -> f64 {
    (2.0 * PI * t).powf(-0.5 * n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma2Audit {
    pub bound: f64,
    /// `bound + 3·se − density`; negative means a violation.
    pub margin: f64,
    pub pass: bool,
    pub factorial_bound: f64,
    pub factorial_margin: f64,
}

pub fn check_lemma2(est: &DensityEstimate) -> Lemma2Audit {
    let slack = 3.0 * est.density_stderr();
    let bound = lemma2_bound(est.n, est.t);
    let factorial_bound = factorial_measure_bound(est.n, est.t);
    let margin = bound + slack - est.density;
    Lemma2Audit {
        bound,
        margin,
        pass: margin >= 0.0,
        factorial_bound,
        factorial_margin: factorial_bound + slack - est.density,
    }
}

/// Probability that two particles started `d` apart have not met by time
/// `t`: `2Φ(d/√(2t)) − 1`.
pub fn two_particle_survival(d: f64, t: TimeValue) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("gap must be positive, got {d}")));
    }
    let t = t.get();
    let p = if d.is_infinite() {
        1.0
    } else {
        2.0 * normal_cdf(d / (2.0 * t).sqrt()) - 1.0
    };
    debug_assert!(p <= (PI * t).powf(-0.5) * d + 1e-15);
    Ok(p)
}

/// One row of the estimate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub density: DensityEstimate,
    pub factorial: FactorialMomentEstimate,
}

impl EstimateRow {
    pub fn from_tally(tally: &Tally, t: f64, boxes: &BoxFamily) -> Result<Self> {
        Ok(EstimateRow {
            density: tally.density(t, boxes)?,
            factorial: tally.factorial_moment(),
        })
    }
}

pub fn estimate_table_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = vec!["n".into(), "t".into(), "delta".into()];
    h.extend((1..=n).map(|i| format!("y_{i}")));
    h.extend(
        [
            "p_hat",
            "stderr",
            "density",
            "factorial_mean",
            "factorial_stderr",
            "lemma2_bound",
            "lemma2_pass",
        ]
        .map(String::from),
    );
    h
}

/// CSV with columns `n, t, delta, y_1..y_n, p_hat, stderr, density,
/// factorial_mean, factorial_stderr, lemma2_bound, lemma2_pass`. All rows
/// must share `n`.
pub fn write_estimate_table<W: Write>(rows: &[EstimateRow], out: W) -> Result<()> {
    let n = rows
        .first()
        .map(|r| r.density.n)
        .ok_or_else(|| Error::Contract("empty estimate table".into()))?;
    if rows.iter().any(|r| r.density.n != n) {
        return Err(Error::Contract("estimate table rows differ in n".into()));
    }
    let io = |e: csv::Error| Error::Config(format!("writing estimate table: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(estimate_table_header(n)).map_err(io)?;
    for r in rows {
        let d = &r.density;
        let audit = check_lemma2(d);
        let mut rec = vec![n.to_string(), d.t.to_string(), d.boxes.width.to_string()];
        rec.extend(d.boxes.lefts.iter().map(|y| y.to_string()));
        rec.extend([
            d.p_hat.to_string(),
            d.stderr.to_string(),
            d.density.to_string(),
            r.factorial.mean.to_string(),
            r.factorial.stderr.to_string(),
            audit.bound.to_string(),
            audit.pass.to_string(),
        ]);
        w.write_record(rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Config(format!("writing estimate table: {e}")))?;
    Ok(())
}
