//! Benchmark characteristics as pure functions from datasets to
//! serializable results: distribution, convergence, speedup,
//! portability, and search-space size accounting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, DeviceDataset, StudyDataset};
use crate::space::{Configuration, ParameterSpace, SpaceError};
use crate::surrogate::{self, ImportanceMap};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("objective must be positive and at least the optimum")]
    NonPositiveObjective,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("need at least 2 devices for portability, got {0}")]
    TooFewDevices(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// optimum / objective, in (0, 1]. Runtime minimization.
pub fn relative_performance(objective: f64, optimum: f64) -> Result<f64, AnalysisError> {
    if optimum <= 0.0 || objective < optimum {
        return Err(AnalysisError::NonPositiveObjective);
    }
    Ok(optimum / objective)
}

/// median objective / best objective; always >= 1.
pub fn speedup_over_median(ds: &DeviceDataset) -> Result<f64, AnalysisError> {
    let median = ds.median_objective()?;
    let (_, best) = ds.best_entry()?;
    Ok(median / best)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    /// Median (across repetitions) of best-so-far relative performance
    /// at budget i+1.
    pub values: Vec<f64>,
    pub repetitions: u64,
    pub seed: u64,
    /// Smallest budget reaching 90% / 95% / 99% of the optimum.
    pub budget_to_90: Option<usize>,
    pub budget_to_95: Option<usize>,
    pub budget_to_99: Option<usize>,
}

/// Random-search convergence: per repetition, a seeded uniform
/// permutation of the valid configs; the curve is the per-budget median
/// over repetitions of relative_performance(best-so-far).
/// Repetition r uses seed + r.
pub fn convergence(
    ds: &DeviceDataset,
    repetitions: u64,
    seed: u64,
    budget_cap: Option<usize>,
) -> Result<ConvergenceCurve, AnalysisError> {
    if repetitions == 0 {
        return Err(AnalysisError::InvalidArgument(
            "repetitions must be >= 1".to_string(),
        ));
    }
    let objectives: Vec<f64> = ds.valid_entries().iter().map(|&(_, o)| o).collect();
    if objectives.is_empty() {
        return Err(AnalysisError::Dataset(DatasetError::EmptyDataset));
    }
    let optimum = objectives.iter().copied().fold(f64::INFINITY, f64::min);
    let budget = budget_cap
        .unwrap_or(objectives.len())
        .min(objectives.len());
    // per_budget[b] collects each repetition's best-so-far at budget b+1
    let mut per_budget = vec![Vec::with_capacity(repetitions as usize); budget];
    let mut order: Vec<usize> = (0..objectives.len()).collect();
    for r in 0..repetitions {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(r));
        order.shuffle(&mut rng);
        let mut best = f64::INFINITY;
        for (b, &i) in order.iter().take(budget).enumerate() {
            best = best.min(objectives[i]);
            per_budget[b].push(optimum / best);
        }
    }
    let values: Vec<f64> = per_budget
        .iter_mut()
        .map(|v| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            }
        })
        .collect();
    let budget_to = |level: f64| values.iter().position(|&v| v >= level).map(|i| i + 1);
    Ok(ConvergenceCurve {
        budget_to_90: budget_to(0.90),
        budget_to_95: budget_to(0.95),
        budget_to_99: budget_to(0.99),
        values,
        repetitions,
        seed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionSummary {
    /// Per-config speedup over the median objective, in config index
    /// order.
    pub speedups: Vec<f64>,
    pub histogram: Vec<u64>,
    pub bin_min: f64,
    pub bin_max: f64,
    /// (percent, value) for {1, 5, 25, 50, 75, 95, 99}. The 50% entry
    /// is 1.0 by construction.
    pub quantiles: Vec<(u8, f64)>,
}

const QUANTILE_LEVELS: [u8; 7] = [1, 5, 25, 50, 75, 95, 99];

/// Linear-interpolation quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-config speedup over the median configuration, histogram, and
/// quantiles. Speedup quantiles come from objective quantiles mapped
/// through median/x, so the 50% quantile is exactly 1.0.
pub fn distribution(ds: &DeviceDataset, bins: usize) -> Result<DistributionSummary, AnalysisError> {
    if bins == 0 {
        return Err(AnalysisError::InvalidArgument("bins must be >= 1".to_string()));
    }
    let entries = ds.valid_entries();
    if entries.is_empty() {
        return Err(AnalysisError::Dataset(DatasetError::EmptyDataset));
    }
    let median = ds.median_objective()?;
    let speedups: Vec<f64> = entries.iter().map(|&(_, o)| median / o).collect();
    let min = speedups.iter().copied().fold(f64::INFINITY, f64::min);
    let max = speedups.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut histogram = vec![0u64; bins];
    let width = (max - min) / bins as f64;
    for &s in &speedups {
        let bin = if width == 0.0 {
            0
        } else {
            (((s - min) / width) as usize).min(bins - 1)
        };
        histogram[bin] += 1;
    }
    let mut sorted_obj: Vec<f64> = entries.iter().map(|&(_, o)| o).collect();
    sorted_obj.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantiles = QUANTILE_LEVELS
        .iter()
        .map(|&pct| {
            // Speedup decreases in objective, so the q-quantile of
            // speedups is median / (1-q)-quantile of objectives.
            let objective_q = quantile_sorted(&sorted_obj, 1.0 - pct as f64 / 100.0);
            (pct, median / objective_q)
        })
        .collect();
    Ok(DistributionSummary {
        speedups,
        histogram,
        bin_min: min,
        bin_max: max,
        quantiles,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortabilityMatrix {
    pub devices: Vec<String>,
    /// cells[row][col]: relative performance on device `col` of the
    /// optimal configuration found on device `row`. `None` when that
    /// configuration was not measured (or failed) on `col`.
    pub cells: Vec<Vec<Option<f64>>>,
}

/// Transfers each device's optimal configuration to every other device
/// and reports the relative performance retained.
pub fn portability(study: &StudyDataset) -> Result<PortabilityMatrix, AnalysisError> {
    let devices = study.devices();
    if devices.len() < 2 {
        return Err(AnalysisError::TooFewDevices(devices.len()));
    }
    let bests: Vec<(u64, f64)> = devices
        .iter()
        .map(|d| d.best_entry().map_err(AnalysisError::Dataset))
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::with_capacity(devices.len());
    for (row, _) in devices.iter().enumerate() {
        let (best_idx, _) = bests[row];
        let mut row_cells = Vec::with_capacity(devices.len());
        for (col, target) in devices.iter().enumerate() {
            let (_, target_opt) = bests[col];
            let cell = target.record(best_idx).and_then(|r| r.objective).map(
                |objective| target_opt / objective,
            );
            row_cells.push(cell);
        }
        cells.push(row_cells);
    }
    Ok(PortabilityMatrix {
        devices: devices.iter().map(|d| d.device().to_string()).collect(),
        cells,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccountingRow {
    pub benchmark: String,
    pub cardinality: u64,
    pub constrained: u64,
    pub valid_min: Option<u64>,
    pub valid_max: Option<u64>,
    pub reduced: u64,
    pub reduce_constrained: u64,
}

/// The five-column size accounting for one benchmark: cardinality,
/// constrained count, valid range across devices, and the
/// importance-reduced variants.
pub fn space_accounting(
    space: &ParameterSpace,
    datasets: &[DeviceDataset],
    importances: &[&ImportanceMap],
    threshold: f64,
) -> Result<AccountingRow, AnalysisError> {
    let cardinality = space.cardinality();
    let constrained = space.constrained_cardinality()?;
    let valid_counts: Vec<u64> = datasets
        .iter()
        .map(|d| d.valid_entries().len() as u64)
        .collect();
    let anchors: Vec<Configuration> = datasets
        .iter()
        .filter_map(|d| d.best().ok().map(|(c, _)| c))
        .collect();
    let anchor_refs: Vec<&Configuration> = anchors.iter().collect();
    let reduced_space = surrogate::reduce_space(space, importances, threshold, &anchor_refs)?;
    Ok(AccountingRow {
        benchmark: space.name().to_string(),
        cardinality,
        constrained,
        valid_min: valid_counts.iter().min().copied(),
        valid_max: valid_counts.iter().max().copied(),
        reduced: reduced_space.cardinality(),
        reduce_constrained: reduced_space.constrained_cardinality()?,
    })
}
