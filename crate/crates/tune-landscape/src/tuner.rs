//! Reference tuners (random search, randomized first-improvement local
//! search) over pluggable objective backends, with trajectory recording
//! and an optional confidence-interval early-termination sampling
//! policy.

use std::io::{BufRead, BufReader, Write as IoWrite};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DeviceDataset, DuplicatePolicy, Status, TuningRecord};
use crate::landscape::NeighborhoodPolicy;
use crate::space::{Configuration, ParameterSpace, SpaceError, SpaceRef};

#[derive(Debug, Error)]
pub enum TunerError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("synthetic landscape too large: {0} configurations (limit {1})")]
    TooLarge(u64, u64),
    #[error("no valid starting configuration")]
    NoValidStart,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Outcome of one measurement request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub objective: Option<f64>,
    pub status: Status,
}

impl Measurement {
    pub fn ok(objective: f64) -> Self {
        Measurement {
            objective: Some(objective),
            status: Status::Ok,
        }
    }

    pub fn failed(status: Status) -> Self {
        Measurement {
            objective: None,
            status,
        }
    }
}

/// An objective source. `samples` is the number of repetitions the
/// backend should aggregate into the returned objective; backends that
/// measure deterministically may ignore it.
pub trait Backend {
    fn measure(&mut self, config: &Configuration, samples: u32) -> Result<Measurement, TunerError>;
}

/// Looks measurements up in a dataset; unmeasured configurations are
/// invalid.
pub struct TableBackend {
    dataset: DeviceDataset,
}

impl TableBackend {
    pub fn new(dataset: DeviceDataset) -> Self {
        TableBackend { dataset }
    }

    pub fn dataset(&self) -> &DeviceDataset {
        &self.dataset
    }
}

impl Backend for TableBackend {
    fn measure(&mut self, config: &Configuration, _samples: u32) -> Result<Measurement, TunerError> {
        let index = self.dataset.space().encode(config)?;
        match self.dataset.record(index) {
            Some(r) => Ok(Measurement {
                objective: r.objective,
                status: r.status,
            }),
            None => Ok(Measurement::failed(Status::InvalidConfig)),
        }
    }
}

/// Built-in closed-form objectives used to exercise tuners and the
/// landscape analyses without hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticFunction {
    Sphere,
    RastriginDiscrete,
    TwoCluster,
    HotspotLike,
}

impl SyntheticFunction {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sphere" => Some(SyntheticFunction::Sphere),
            "rastrigin-discrete" => Some(SyntheticFunction::RastriginDiscrete),
            "two-cluster" => Some(SyntheticFunction::TwoCluster),
            "hotspot-like" => Some(SyntheticFunction::HotspotLike),
            _ => None,
        }
    }
}

/// splitmix64; used to derive per-config deterministic noise.
fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Uniform in [-1, 1), deterministic per (seed, index).
fn unit_noise(seed: u64, index: u64) -> f64 {
    let bits = mix64(seed ^ mix64(index));
    (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn ordinal_fractions(space: &ParameterSpace, ordinals: &[usize]) -> Vec<f64> {
    space
        .dims()
        .iter()
        .zip(ordinals)
        .map(|(&n, &o)| {
            if n <= 1 {
                0.0
            } else {
                o as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Noise-free objective value of a synthetic function at a point given
/// by per-parameter ordinal fractions in [0, 1].
fn synthetic_value(function: SyntheticFunction, fractions: &[f64]) -> f64 {
    match function {
        SyntheticFunction::Sphere => {
            // unique minimum at the center ordinal
            1.0 + fractions.iter().map(|&t| (t - 0.5) * (t - 0.5)).sum::<f64>() * 8.0
        }
        SyntheticFunction::RastriginDiscrete => {
            let a = 10.0;
            let k = fractions.len() as f64;
            let sum: f64 = fractions
                .iter()
                .map(|&t| {
                    let x = (t - 0.5) * 10.24; // [-5.12, 5.12]
                    x * x - a * (std::f64::consts::TAU * x).cos()
                })
                .sum();
            1.0 + a * k + sum
        }
        SyntheticFunction::TwoCluster => {
            // Two basins: a global one near the low corner region and a
            // shallower one near the high corner.
            let d1: f64 = fractions
                .iter()
                .map(|&t| (t - 0.2) * (t - 0.2))
                .sum();
            let d2: f64 = fractions
                .iter()
                .map(|&t| (t - 0.8) * (t - 0.8))
                .sum();
            1.0 + (6.0 * d1).min(0.4 + 6.0 * d2)
        }
        SyntheticFunction::HotspotLike => {
            // Mass around ~10 with a contiguous cluster of configs in
            // the low corner running more than 10x faster than the
            // median.
            let in_cluster = fractions.iter().all(|&t| t <= 0.12);
            if in_cluster {
                0.75 + fractions.iter().sum::<f64>() * 0.2
            } else {
                10.0 + fractions.iter().map(|&t| (t - 0.6) * (t - 0.6)).sum::<f64>()
            }
        }
    }
}

/// Deterministic synthetic objective backend. `noise` adds a
/// measurement-to-measurement uniform perturbation so the adaptive
/// sampling policy has variance to work with; the noise stream is
/// seeded, so the backend as a whole is deterministic.
pub struct SyntheticBackend {
    space: SpaceRef,
    function: SyntheticFunction,
    noise: f64,
    rng: ChaCha12Rng,
}

impl SyntheticBackend {
    pub fn new(space: SpaceRef, function: SyntheticFunction, noise: f64, seed: u64) -> Self {
        SyntheticBackend {
            space,
            function,
            noise,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Noise-free objective at a configuration.
    pub fn true_value(&self, config: &Configuration) -> Result<f64, TunerError> {
        let index = self.space.encode(config)?;
        let ordinals = self.space.ordinals(index);
        let fractions = ordinal_fractions(&self.space, &ordinals);
        Ok(synthetic_value(self.function, &fractions))
    }
}

impl Backend for SyntheticBackend {
    fn measure(&mut self, config: &Configuration, samples: u32) -> Result<Measurement, TunerError> {
        let base = self.true_value(config)?;
        if self.noise == 0.0 {
            return Ok(Measurement::ok(base));
        }
        let n = samples.max(1);
        let mut total = 0.0;
        for _ in 0..n {
            total += base + self.noise * (self.rng.gen::<f64>() * 2.0 - 1.0);
        }
        Ok(Measurement::ok((total / n as f64).max(1e-9)))
    }
}

/// Spawns an external executable per evaluation. Protocol: the request
/// `{"parameters": {name: value, ...}, "samples": n}` goes to standard
/// input; the response `{"objective_ms": float, "status": "ok"|...}`
/// is read from standard output. The measured objective is whatever the
/// process reports; no timing happens on this side.
pub struct CommandBackend {
    program: String,
    args: Vec<String>,
    space: SpaceRef,
    timeout: Duration,
}

impl CommandBackend {
    pub fn new(program: impl Into<String>, args: Vec<String>, space: SpaceRef) -> Self {
        CommandBackend {
            program: program.into(),
            args,
            space,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

#[derive(Serialize)]
struct CommandRequest<'a> {
    parameters: serde_json::Map<String, serde_json::Value>,
    samples: u32,
    #[serde(skip)]
    _marker: std::marker::PhantomData<&'a ()>,
}

#[derive(Deserialize)]
struct CommandResponse {
    objective_ms: Option<f64>,
    status: String,
}

impl Backend for CommandBackend {
    fn measure(&mut self, config: &Configuration, samples: u32) -> Result<Measurement, TunerError> {
        let mut parameters = serde_json::Map::new();
        for (p, &v) in self.space.parameters().iter().zip(&config.values) {
            parameters.insert(p.name.clone(), serde_json::Value::from(v));
        }
        let request = CommandRequest {
            parameters,
            samples,
            _marker: std::marker::PhantomData,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| TunerError::BackendFailure(format!("spawn {}: {e}", self.program)))?;
        {
            let stdin = child.stdin.as_mut().expect("piped stdin");
            serde_json::to_writer(&mut *stdin, &request)
                .map_err(|e| TunerError::BackendFailure(format!("write request: {e}")))?;
            stdin.write_all(b"\n")?;
        }
        drop(child.stdin.take());
        let deadline = Instant::now() + self.timeout;
        loop {
            match child.try_wait()? {
                Some(status) => {
                    if !status.success() {
                        return Err(TunerError::BackendFailure(format!(
                            "process exited with {status}"
                        )));
                    }
                    break;
                }
                None => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(TunerError::BackendFailure("timeout".to_string()));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
            }
        }
        let stdout = child.stdout.take().expect("piped stdout");
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line)?;
        let response: CommandResponse = serde_json::from_str(line.trim())
            .map_err(|e| TunerError::BackendFailure(format!("parse response: {e}")))?;
        let status = Status::parse(&response.status)
            .ok_or_else(|| TunerError::BackendFailure(format!("unknown status `{}`", response.status)))?;
        Ok(Measurement {
            objective: response.objective_ms,
            status,
        })
    }
}

/// How many measurements to take per configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SamplePolicy {
    Fixed {
        samples: u32,
    },
    /// Sample one at a time; after `min_samples`, stop as soon as the
    /// normal-approximation confidence interval around the running
    /// mean lies entirely above the incumbent (the configuration
    /// cannot win) or entirely below it (it wins with confidence).
    Adaptive {
        min_samples: u32,
        max_samples: u32,
        confidence: f64,
    },
}

impl Default for SamplePolicy {
    fn default() -> Self {
        SamplePolicy::Fixed { samples: 1 }
    }
}

/// Acklam's rational approximation to the standard normal inverse CDF.
fn normal_quantile(p: f64) -> f64 {
    assert!((0.0..1.0).contains(&p) && p > 0.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: Option<f64>,
    pub status: Status,
    pub samples_used: u32,
}

/// Evaluates one configuration under a sampling policy. `incumbent` is
/// the best objective seen so far, used by the adaptive policy for
/// early termination.
pub fn evaluate(
    backend: &mut dyn Backend,
    config: &Configuration,
    policy: &SamplePolicy,
    incumbent: Option<f64>,
) -> Result<Evaluation, TunerError> {
    match *policy {
        SamplePolicy::Fixed { samples } => {
            let m = backend.measure(config, samples.max(1))?;
            Ok(Evaluation {
                objective: m.objective,
                status: m.status,
                samples_used: samples.max(1),
            })
        }
        SamplePolicy::Adaptive {
            min_samples,
            max_samples,
            confidence,
        } => {
            let min_samples = min_samples.max(1);
            let max_samples = max_samples.max(min_samples);
            let alpha = 1.0 - confidence;
            let z = normal_quantile(1.0 - alpha / 2.0);
            let mut values: Vec<f64> = Vec::with_capacity(min_samples as usize);
            loop {
                let m = backend.measure(config, 1)?;
                let Some(v) = m.objective else {
                    return Ok(Evaluation {
                        objective: None,
                        status: m.status,
                        samples_used: values.len() as u32 + 1,
                    });
                };
                values.push(v);
                let n = values.len() as u32;
                if n >= max_samples {
                    break;
                }
                if n >= min_samples {
                    let nf = n as f64;
                    let mean = values.iter().sum::<f64>() / nf;
                    let var = values
                        .iter()
                        .map(|x| (x - mean) * (x - mean))
                        .sum::<f64>()
                        / (nf - 1.0).max(1.0);
                    let half_width = z * (var / nf).sqrt();
                    match incumbent {
                        Some(best) => {
                            // Entirely above: cannot win. Entirely
                            // below: wins with confidence.
                            if mean - half_width > best || mean + half_width < best {
                                break;
                            }
                        }
                        None => {
                            if half_width == 0.0 {
                                break;
                            }
                        }
                    }
                }
            }
            let n = values.len() as u32;
            let mean = values.iter().sum::<f64>() / n as f64;
            Ok(Evaluation {
                objective: Some(mean),
                status: Status::Ok,
                samples_used: n,
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub config_index: u64,
    pub objective: Option<f64>,
    pub status: Status,
    pub samples_used: u32,
    pub best_so_far: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub algorithm: String,
    pub seed: u64,
    pub budget: u64,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn best(&self) -> Option<(u64, f64)> {
        let mut best: Option<(u64, f64)> = None;
        for s in &self.steps {
            if let Some(obj) = s.objective {
                if best.map_or(true, |(_, b)| obj < b) {
                    best = Some((s.config_index, obj));
                }
            }
        }
        best
    }

    pub fn final_config_index(&self) -> Option<u64> {
        self.steps.last().map(|s| s.config_index)
    }

    /// CSV export: `step,index,objective,best`.
    pub fn export_csv<W: IoWrite>(&self, mut writer: W) -> Result<(), TunerError> {
        writeln!(writer, "step,index,objective,best")?;
        for s in &self.steps {
            writeln!(
                writer,
                "{},{},{},{}",
                s.step,
                s.config_index,
                s.objective.map(crate::dataset::format_sig9).unwrap_or_default(),
                s.best_so_far.map(crate::dataset::format_sig9).unwrap_or_default(),
            )?;
        }
        Ok(())
    }

    fn push(&mut self, config_index: u64, eval: &Evaluation, best: &mut Option<f64>) {
        if let Some(obj) = eval.objective {
            if best.map_or(true, |b| obj < b) {
                *best = Some(obj);
            }
        }
        self.steps.push(TrajectoryStep {
            step: self.steps.len() + 1,
            config_index,
            objective: eval.objective,
            status: eval.status,
            samples_used: eval.samples_used,
            best_so_far: *best,
        });
    }
}

/// Whether evaluations that come back invalid consume optimizer budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BudgetSemantics {
    #[default]
    InvalidCountsAgainstBudget,
    InvalidIsFree,
}

/// Uniform random search without replacement over the valid
/// configurations of the space. Backend failures are recorded per step
/// rather than aborting the run.
pub fn random_search(
    backend: &mut dyn Backend,
    space: &ParameterSpace,
    budget: u64,
    seed: u64,
    policy: &SamplePolicy,
    semantics: BudgetSemantics,
) -> Result<Trajectory, TunerError> {
    let constrained = space.constrained_cardinality()?;
    let draw = budget.min(constrained);
    let candidates = space.sample_valid(draw, seed)?;
    let mut trajectory = Trajectory {
        algorithm: "random".to_string(),
        seed,
        budget,
        steps: Vec::new(),
    };
    let mut best: Option<f64> = None;
    let mut spent = 0u64;
    for config in &candidates {
        if spent >= budget {
            break;
        }
        let eval = match evaluate(backend, config, policy, best) {
            Ok(e) => e,
            Err(TunerError::BackendFailure(_)) => Evaluation {
                objective: None,
                status: Status::RuntimeError,
                samples_used: 0,
            },
            Err(e) => return Err(e),
        };
        let index = space.encode(config)?;
        let invalid = eval.objective.is_none();
        trajectory.push(index, &eval, &mut best);
        if !invalid || semantics == BudgetSemantics::InvalidCountsAgainstBudget {
            spent += 1;
        }
    }
    Ok(trajectory)
}

/// Randomized first-improvement local search: shuffle the neighbors of
/// the current configuration each step and move to the first strictly
/// better valid one; terminate when none improves. The terminal
/// configuration is a sink of the fitness flow graph built with the
/// same neighborhood.
pub fn local_search(
    backend: &mut dyn Backend,
    space: &ParameterSpace,
    start: Option<Configuration>,
    neighborhood: NeighborhoodPolicy,
    seed: u64,
    policy: &SamplePolicy,
) -> Result<Trajectory, TunerError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let current = match start {
        Some(c) => {
            space.encode(&c)?; // domain check
            c
        }
        None => space
            .sample_valid(1, seed)?
            .pop()
            .ok_or(TunerError::NoValidStart)?,
    };
    let mut trajectory = Trajectory {
        algorithm: "localsearch".to_string(),
        seed,
        budget: 0,
        steps: Vec::new(),
    };
    let mut best: Option<f64> = None;

    let mut current = current;
    let first = evaluate(backend, &current, policy, best)?;
    let current_index = space.encode(&current)?;
    trajectory.push(current_index, &first, &mut best);
    let Some(mut current_obj) = first.objective else {
        return Ok(trajectory); // invalid start: nowhere to descend from
    };

    let dims = space.dims();
    loop {
        let ordinals = space.ordinals(space.encode(&current)?);
        let mut neighbors: Vec<Vec<usize>> = Vec::new();
        for (p, &ord) in ordinals.iter().enumerate() {
            match neighborhood {
                NeighborhoodPolicy::Adjacent1 => {
                    if ord > 0 {
                        let mut n = ordinals.clone();
                        n[p] = ord - 1;
                        neighbors.push(n);
                    }
                    if ord + 1 < dims[p] {
                        let mut n = ordinals.clone();
                        n[p] = ord + 1;
                        neighbors.push(n);
                    }
                }
                NeighborhoodPolicy::Hamming1 => {
                    for alt in 0..dims[p] {
                        if alt != ord {
                            let mut n = ordinals.clone();
                            n[p] = alt;
                            neighbors.push(n);
                        }
                    }
                }
            }
        }
        neighbors.shuffle(&mut rng);
        let mut moved = false;
        for n in neighbors {
            let index = space.index_from_ordinals(&n);
            let config = space.decode(index)?;
            if !space.satisfies_constraints(&config)? {
                continue;
            }
            let eval = match evaluate(backend, &config, policy, best) {
                Ok(e) => e,
                Err(TunerError::BackendFailure(_)) => Evaluation {
                    objective: None,
                    status: Status::RuntimeError,
                    samples_used: 0,
                },
                Err(e) => return Err(e),
            };
            trajectory.push(index, &eval, &mut best);
            if let Some(obj) = eval.objective {
                if obj < current_obj {
                    current = config;
                    current_obj = obj;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            // Record the terminal configuration as the final step so
            // trajectories end where the search ended.
            let terminal_index = space.encode(&current)?;
            if trajectory.final_config_index() != Some(terminal_index) {
                let eval = Evaluation {
                    objective: Some(current_obj),
                    status: Status::Ok,
                    samples_used: 0,
                };
                trajectory.push(terminal_index, &eval, &mut best);
            }
            break;
        }
    }
    trajectory.budget = trajectory.steps.len() as u64;
    Ok(trajectory)
}

/// Specification of a synthetic exhaustive dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Domain sizes; parameter i gets values 0..dims[i].
    pub dims: Vec<usize>,
    pub function: SyntheticFunction,
    /// Uniform noise amplitude applied per configuration
    /// (deterministic given the seed).
    pub noise: f64,
    pub seed: u64,
}

const SYNTHETIC_LIMIT: u64 = 1_000_000;

/// Exhaustive, deterministic, all-valid dataset over a fresh space with
/// the given dimensions. Per-config noise is frozen at generation time.
pub fn synthetic_landscape(spec: &SyntheticSpec) -> Result<DeviceDataset, TunerError> {
    let parameters = spec
        .dims
        .iter()
        .enumerate()
        .map(|(i, &n)| crate::space::Parameter {
            name: format!("p{i}"),
            values: (0..n as i64).collect(),
        })
        .collect();
    let space = Arc::new(ParameterSpace::new("synthetic", parameters, &[])?);
    let cardinality = space.cardinality();
    if cardinality > SYNTHETIC_LIMIT {
        return Err(TunerError::TooLarge(cardinality, SYNTHETIC_LIMIT));
    }
    let mut ds = DeviceDataset::new("synthetic", space.clone());
    for index in 0..cardinality {
        let ordinals = space.ordinals(index);
        let fractions = ordinal_fractions(&space, &ordinals);
        let base = synthetic_value(spec.function, &fractions);
        let objective = (base + spec.noise * unit_noise(spec.seed, index)).max(1e-6);
        ds.insert_by_index(index, TuningRecord::ok(objective), DuplicatePolicy::KeepFirst);
    }
    Ok(ds)
}
