//! Coalescing Brownian motions on the line.
//!
//! Particles take independent Gaussian steps of variance `dt`. Neighbors
//! are then scanned left to right: a pair whose order inverted has met and
//! coalesces; a pair that kept its order may still have met inside the
//! step, which happens with the Brownian-bridge probability
//! `exp(-a·b/dt)` for gaps `a` before and `b` after the step (the gap
//! process has variance rate 2). A coalesced pair continues as one
//! particle on the left particle's path, and a particle takes part in at
//! most one bridge coalescence per step.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng::{self, Purpose, StreamRng};

/// Bridge exponents above this are treated as "no meeting"; the skipped
/// probability is below 2.4e-16.
const BRIDGE_CUTOFF: f64 = 36.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Sites `k·spacing` with `|k·spacing| ≤ extent`.
    Lattice { spacing: f64, extent: f64 },
    /// Homogeneous Poisson points on `[-extent, extent]`.
    Poisson { intensity: f64, extent: f64 },
    Explicit { positions: Vec<f64> },
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            InitialCondition::Lattice { spacing, extent } => {
                positive("lattice spacing", *spacing)?;
                positive("extent", *extent)
            }
            InitialCondition::Poisson { intensity, extent } => {
                positive("poisson intensity", *intensity)?;
                positive("extent", *extent)
            }
            InitialCondition::Explicit { positions } => {
                ParticleSnapshot::new(0.0, positions.clone()).map(|_| ())
            }
        }
    }

    /// Half-width of the region initially filled, for infinite-system
    /// approximations. Explicit configurations are genuinely finite.
    pub fn extent(&self) -> Option<f64> {
        match self {
            InitialCondition::Lattice { extent, .. } | InitialCondition::Poisson { extent, .. } => {
                Some(*extent)
            }
            InitialCondition::Explicit { .. } => None,
        }
    }
}

/// Requires `max_abs_y + 3√t_max ≤ R` so that observation windows do not
/// see the depletion that spreads in from the ends of a finite start.
pub fn check_clearance(cond: &InitialCondition, max_abs_y: f64, t_max: f64) -> Result<()> {
    if let Some(r) = cond.extent() {
        let need = max_abs_y + 3.0 * t_max.sqrt();
        if need > r {
            return Err(Error::Config(format!(
                "observation window reaches {need:.3} but the initial extent is {r}"
            )));
        }
    }
    Ok(())
}

/// Sorted particle positions at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleSnapshot {
    pub time: f64,
    positions: Vec<f64>,
}

impl ParticleSnapshot {
    pub fn new(time: f64, positions: Vec<f64>) -> Result<Self> {
        if let Some(p) = positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::Contract(format!("non-finite position {p}")));
        }
        if let Some(w) = positions.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Contract(format!(
                "positions not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(ParticleSnapshot { time, positions })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub observation_times: Vec<f64>,
    pub seed: u64,
    pub replicas: u64,
    /// Bridge-corrected meeting detection; sign changes alone when false.
    #[serde(default = "default_bridge")]
    pub bridge: bool,
}

fn default_bridge() -> bool {
    true
}

impl SimulationConfig {
    pub fn new(dt: f64, observation_times: Vec<f64>, seed: u64, replicas: u64) -> Self {
        SimulationConfig {
            dt,
            observation_times,
            seed,
            replicas,
            bridge: true,
        }
    }

    /// Validates the config and returns the step index of every
    /// observation time.
    pub fn step_schedule(&self) -> Result<Vec<u64>> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.observation_times.is_empty() {
            return Err(Error::Config("no observation times".into()));
        }
        let mut steps = Vec::with_capacity(self.observation_times.len());
        let mut prev = 0.0;
        for &t in &self.observation_times {
            if !(t > prev) || !t.is_finite() {
                return Err(Error::Config(format!(
                    "observation times must be positive and increasing, got {t} after {prev}"
                )));
            }
            let k = (t / self.dt).round();
            if (k * self.dt - t).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::Config(format!(
                    "observation time {t} is not on the dt = {} grid",
                    self.dt
                )));
            }
            steps.push(k as u64);
            prev = t;
        }
        Ok(steps)
    }
}

pub fn init_particles<R: Rng + ?Sized>(
    cond: &InitialCondition,
    rng: &mut R,
) -> Result<ParticleSnapshot> {
    cond.validate()?;
    let positions = match cond {
        InitialCondition::Lattice { spacing, extent } => {
            let kmax = (extent / spacing * (1.0 + 1e-12)).floor() as i64;
            (-kmax..=kmax).map(|k| k as f64 * spacing).collect()
        }
        InitialCondition::Poisson { intensity, extent } => {
            let count = Poisson::new(2.0 * intensity * extent)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(rng) as usize;
            let mut p: Vec<f64> = (0..count)
                .map(|_| rng.random_range(-extent..=*extent))
                .collect();
            p.sort_by(f64::total_cmp);
            p.dedup();
            p
        }
        InitialCondition::Explicit { positions } => positions.clone(),
    };
    ParticleSnapshot::new(0.0, positions)
}

/// Reusable buffers for stepping one replica in place.
#[derive(Debug, Default)]
pub struct Stepper {
    old: Vec<f64>,
    moved: Vec<f64>,
}

impl Stepper {
    /// Advances `positions` by one step of length `dt`.
    pub fn step<R: Rng + ?Sized>(&mut self, positions: &mut Vec<f64>, dt: f64, bridge: bool, rng: &mut R) {
        let sd = dt.sqrt();
        self.old.clear();
        self.old.extend_from_slice(positions);
        self.moved.clear();
        self.moved.extend(self.old.iter().map(|x| {
            let z: f64 = rng.sample(StandardNormal);
            x + sd * z
        }));

        positions.clear();
        let mut last_old = f64::NAN;
        let mut last_merged = false;
        for (&old, &new) in self.old.iter().zip(&self.moved) {
            let Some(&last_new) = positions.last() else {
                positions.push(new);
                last_old = old;
                last_merged = false;
                continue;
            };
            let after = new - last_new;
            if after <= 0.0 {
                last_merged = true;
                continue;
            }
            if bridge && !last_merged {
                let exponent = (old - last_old) * after / dt;
                if exponent < BRIDGE_CUTOFF && rng.random::<f64>() < (-exponent).exp() {
                    last_merged = true;
                    continue;
                }
            }
            positions.push(new);
            last_old = old;
            last_merged = false;
        }
    }
}

/// One step of length `dt` from `state`.
pub fn advance<R: Rng + ?Sized>(
    state: &ParticleSnapshot,
    dt: f64,
    rng: &mut R,
) -> Result<ParticleSnapshot> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let mut positions = state.positions.clone();
    Stepper::default().step(&mut positions, dt, true, rng);
    ParticleSnapshot::new(state.time + dt, positions)
}

/// The bridge meeting probability for gaps `a`, `b` over a step `dt`.
pub fn bridge_meeting_probability(a: f64, b: f64, dt: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        1.0
    } else {
        (-a * b / dt).exp()
    }
}

fn replica_rng(config: &SimulationConfig, replica: u64) -> StreamRng {
    rng::stream(config.seed, Purpose::Simulation, replica)
}

fn simulate_with_schedule(
    cond: &InitialCondition,
    config: &SimulationConfig,
    steps: &[u64],
    replica: u64,
) -> Result<Vec<ParticleSnapshot>> {
    let mut rng = replica_rng(config, replica);
    let mut positions = init_particles(cond, &mut rng)?.positions;
    let mut stepper = Stepper::default();
    let mut done = 0u64;
    let mut out = Vec::with_capacity(steps.len());
    for (&target, &t) in steps.iter().zip(&config.observation_times) {
        while done < target {
            stepper.step(&mut positions, config.dt, config.bridge, &mut rng);
            done += 1;
        }
        out.push(ParticleSnapshot {
            time: t,
            positions: positions.clone(),
        });
    }
    Ok(out)
}

/// Snapshots of replica `replica` at every observation time.
pub fn simulate_replica(
    cond: &InitialCondition,
    config: &SimulationConfig,
    replica: u64,
) -> Result<Vec<ParticleSnapshot>> {
    cond.validate()?;
    let steps = config.step_schedule()?;
    simulate_with_schedule(cond, config, &steps, replica)
}

/// Snapshots of replica 0 at every observation time.
pub fn simulate_to(cond: &InitialCondition, config: &SimulationConfig) -> Result<Vec<ParticleSnapshot>> {
    simulate_replica(cond, config, 0)
}

/// Runs every replica and maps its snapshots through `reduce`. Results are
/// in replica order and independent of the execution mode.
pub fn run_replicas_with<T, F>(
    cond: &InitialCondition,
    config: &SimulationConfig,
    mode: Execution,
    reduce: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, Vec<ParticleSnapshot>) -> T + Sync + Send,
{
    cond.validate()?;
    let steps = config.step_schedule()?;
    par::map_indexed(config.replicas, mode, |r| {
        simulate_with_schedule(cond, config, &steps, r).map(|s| reduce(r, s))
    })
    .into_iter()
    .collect()
}

/// Replicas per accumulation chunk in [`fold_replicas`].
pub const FOLD_CHUNK: u64 = 1024;

/// Streams replicas into per-chunk accumulators without keeping snapshots.
/// Chunks are fixed blocks of [`FOLD_CHUNK`] replica indices, each folded
/// in index order, and the accumulators come back in chunk order.
pub fn fold_replicas<A, I, O>(
    cond: &InitialCondition,
    config: &SimulationConfig,
    mode: Execution,
    init: I,
    observe: O,
) -> Result<Vec<A>>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    O: Fn(&mut A, &[ParticleSnapshot]) + Sync + Send,
{
    cond.validate()?;
    let steps = config.step_schedule()?;
    let chunks = config.replicas.div_ceil(FOLD_CHUNK);
    par::map_indexed(chunks, mode, |c| {
        let mut acc = init();
        let end = ((c + 1) * FOLD_CHUNK).min(config.replicas);
        for r in c * FOLD_CHUNK..end {
            let snaps = simulate_with_schedule(cond, config, &steps, r)?;
            observe(&mut acc, &snaps);
        }
        Ok(acc)
    })
    .into_iter()
    .collect()
}

/// Snapshots for every replica, indexed `[replica][observation]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub replicas: Vec<Vec<ParticleSnapshot>>,
}

impl Ensemble {
    /// Snapshots of all replicas at observation `index`.
    pub fn at(&self, index: usize) -> impl Iterator<Item = &ParticleSnapshot> + '_ {
        self.replicas.iter().map(move |r| &r[index])
    }

    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    /// CSV with columns `replica,time,position`, one row per particle.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(format!("writing snapshots: {e}"));
        w.write_record(["replica", "time", "position"]).map_err(io)?;
        for (r, snaps) in self.replicas.iter().enumerate() {
            for s in snaps {
                for p in s.positions() {
                    w.write_record([r.to_string(), s.time.to_string(), p.to_string()])
                        .map_err(io)?;
                }
            }
        }
        w.flush().map_err(|e| Error::Config(format!("writing snapshots: {e}")))?;
        Ok(())
    }
}

pub fn run_replicas(cond: &InitialCondition, config: &SimulationConfig) -> Result<Ensemble> {
    run_replicas_mode(cond, config, Execution::default())
}

pub fn run_replicas_mode(
    cond: &InitialCondition,
    config: &SimulationConfig,
    mode: Execution,
) -> Result<Ensemble> {
    let replicas = run_replicas_with(cond, config, mode, |_, s| s)?;
    Ok(Ensemble {
        times: config.observation_times.clone(),
        replicas,
    })
}
