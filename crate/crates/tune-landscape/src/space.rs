//! Parameter spaces: cardinality accounting, mixed-radix indexing,
//! enumeration, uniform sampling, and the built-in benchmark spaces.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{self, EvalError, Expr, ParseError};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("parameter `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("parameter `{0}` domain is not strictly ascending")]
    UnsortedDomain(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("constraint `{expression}`: {error}")]
    ConstraintParse { expression: String, error: ParseError },
    #[error("constraint `{expression}` references unknown parameter `{name}`")]
    UnknownParameter { expression: String, name: String },
    #[error("constraint evaluation failed: {0}")]
    ConstraintEval(#[from] EvalError),
    #[error("value {value} not in domain of parameter `{parameter}`")]
    InvalidConfiguration { parameter: String, value: i64 },
    #[error("configuration has {got} values, space has {expected} parameters")]
    ArityMismatch { got: usize, expected: usize },
    #[error("index {index} out of range for cardinality {cardinality}")]
    IndexOutOfRange { index: u64, cardinality: u64 },
    #[error("cardinality overflows u64")]
    CardinalityOverflow,
    #[error("requested {requested} configurations but only {available} are valid")]
    NotEnoughValidConfigs { requested: u64, available: u64 },
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("invalid space definition: {0}")]
    Definition(String),
}

/// One tunable parameter: a name and a finite, strictly ascending
/// integer domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub values: Vec<i64>,
}

/// A parsed constraint together with the source string it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub source: String,
    pub expr: Expr,
}

/// The search universe: an ordered list of parameters plus constraint
/// expressions over their names. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    name: String,
    parameters: Vec<Parameter>,
    constraints: Vec<Constraint>,
    /// radix[i] = product of domain sizes of parameters i+1.., so
    /// index = sum(ordinal_i * radix_i).
    radix: Vec<u64>,
    cardinality: u64,
}

/// One value per parameter, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub values: Vec<i64>,
}

/// On-disk space definition.
#[derive(Debug, Serialize, Deserialize)]
pub struct SpaceFile {
    pub name: String,
    pub parameters: Vec<Parameter>,
    #[serde(default)]
    pub constraints: Vec<String>,
}

impl ParameterSpace {
    pub fn new(
        name: impl Into<String>,
        parameters: Vec<Parameter>,
        constraint_sources: &[String],
    ) -> Result<Self, SpaceError> {
        let mut seen = HashSet::new();
        for p in &parameters {
            if p.values.is_empty() {
                return Err(SpaceError::EmptyDomain(p.name.clone()));
            }
            if !p.values.windows(2).all(|w| w[0] < w[1]) {
                return Err(SpaceError::UnsortedDomain(p.name.clone()));
            }
            if !seen.insert(p.name.clone()) {
                return Err(SpaceError::DuplicateParameter(p.name.clone()));
            }
        }
        let mut cardinality: u64 = 1;
        let mut radix = vec![0u64; parameters.len()];
        for (i, p) in parameters.iter().enumerate().rev() {
            radix[i] = cardinality;
            cardinality = cardinality
                .checked_mul(p.values.len() as u64)
                .ok_or(SpaceError::CardinalityOverflow)?;
        }
        let mut constraints = Vec::with_capacity(constraint_sources.len());
        for src in constraint_sources {
            let expr = constraint::parse(src).map_err(|error| SpaceError::ConstraintParse {
                expression: src.clone(),
                error,
            })?;
            for ident in expr.identifiers() {
                if !seen.contains(ident) {
                    return Err(SpaceError::UnknownParameter {
                        expression: src.clone(),
                        name: ident.to_string(),
                    });
                }
            }
            constraints.push(Constraint {
                source: src.clone(),
                expr,
            });
        }
        Ok(ParameterSpace {
            name: name.into(),
            parameters,
            constraints,
            radix,
            cardinality,
        })
    }

    pub fn from_file_def(def: SpaceFile) -> Result<Self, SpaceError> {
        ParameterSpace::new(def.name.clone(), def.parameters, &def.constraints)
    }

    pub fn from_json(json: &str) -> Result<Self, SpaceError> {
        let def: SpaceFile =
            serde_json::from_str(json).map_err(|e| SpaceError::Definition(e.to_string()))?;
        ParameterSpace::from_file_def(def)
    }

    pub fn to_file_def(&self) -> SpaceFile {
        SpaceFile {
            name: self.name.clone(),
            parameters: self.parameters.clone(),
            constraints: self.constraints.iter().map(|c| c.source.clone()).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    /// Unconstrained cardinality: the product of the domain sizes.
    pub fn cardinality(&self) -> u64 {
        self.cardinality
    }

    /// Number of configurations satisfying every constraint, by
    /// filtered enumeration. With no constraints this is the plain
    /// cardinality and costs nothing.
    pub fn constrained_cardinality(&self) -> Result<u64, SpaceError> {
        if self.constraints.is_empty() {
            return Ok(self.cardinality);
        }
        let mut count = 0u64;
        for config in self.iter_all() {
            if self.satisfies_constraints(&config)? {
                count += 1;
            }
        }
        Ok(count)
    }

    /// Mixed-radix index of a configuration: row-major over declaration
    /// order, ordinal position within each ascending domain.
    pub fn encode(&self, config: &Configuration) -> Result<u64, SpaceError> {
        if config.values.len() != self.parameters.len() {
            return Err(SpaceError::ArityMismatch {
                got: config.values.len(),
                expected: self.parameters.len(),
            });
        }
        let mut index = 0u64;
        for (i, (p, &v)) in self.parameters.iter().zip(&config.values).enumerate() {
            let ordinal = p.values.binary_search(&v).map_err(|_| {
                SpaceError::InvalidConfiguration {
                    parameter: p.name.clone(),
                    value: v,
                }
            })?;
            index += ordinal as u64 * self.radix[i];
        }
        Ok(index)
    }

    pub fn decode(&self, index: u64) -> Result<Configuration, SpaceError> {
        if index >= self.cardinality {
            return Err(SpaceError::IndexOutOfRange {
                index,
                cardinality: self.cardinality,
            });
        }
        let mut values = Vec::with_capacity(self.parameters.len());
        let mut rest = index;
        for (p, &radix) in self.parameters.iter().zip(&self.radix) {
            let ordinal = (rest / radix) as usize;
            rest %= radix;
            values.push(p.values[ordinal]);
        }
        Ok(Configuration { values })
    }

    /// Ordinal positions (one per parameter) for an index. Unchecked
    /// variant of [`decode`] used by neighborhood computations.
    pub fn ordinals(&self, index: u64) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.parameters.len());
        let mut rest = index;
        for &radix in &self.radix {
            out.push((rest / radix) as usize);
            rest %= radix;
        }
        out
    }

    pub fn index_from_ordinals(&self, ordinals: &[usize]) -> u64 {
        ordinals
            .iter()
            .zip(&self.radix)
            .map(|(&o, &r)| o as u64 * r)
            .sum()
    }

    /// Domain sizes in declaration order.
    pub fn dims(&self) -> Vec<usize> {
        self.parameters.iter().map(|p| p.values.len()).collect()
    }

    pub fn satisfies_constraints(&self, config: &Configuration) -> Result<bool, SpaceError> {
        let lookup = |name: &str| {
            self.parameter_index(name)
                .map(|i| config.values[i])
        };
        for c in &self.constraints {
            if !constraint::evaluate(&c.expr, &lookup)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Iterates every configuration (valid or not) in ascending index
    /// order.
    pub fn iter_all(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.cardinality).map(move |i| self.decode(i).expect("index in range"))
    }

    /// Yields every constraint-satisfying configuration exactly once,
    /// in ascending index order. Constraint evaluation errors surface
    /// as `Err` items.
    pub fn enumerate_valid(
        &self,
    ) -> impl Iterator<Item = Result<Configuration, SpaceError>> + '_ {
        self.iter_all().filter_map(move |config| {
            match self.satisfies_constraints(&config) {
                Ok(true) => Some(Ok(config)),
                Ok(false) => None,
                Err(e) => Some(Err(e)),
            }
        })
    }

    /// Draws `n` configurations uniformly without replacement from the
    /// valid set. Deterministic given `seed`.
    ///
    /// Small or heavily constrained spaces are enumerated and shuffled;
    /// large, mostly-valid spaces use index rejection sampling so memory
    /// stays bounded.
    pub fn sample_valid(&self, n: u64, seed: u64) -> Result<Vec<Configuration>, SpaceError> {
        const ENUMERATE_LIMIT: u64 = 1_000_000;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        if self.cardinality <= ENUMERATE_LIMIT {
            return self.sample_by_enumeration(n, &mut rng);
        }
        // Rejection sampling; probe the acceptance rate first so a
        // heavily constrained space falls back to enumeration instead
        // of spinning.
        if !self.constraints.is_empty() {
            let probe = 10_000;
            let mut accepted = 0u64;
            let mut probe_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            for _ in 0..probe {
                let idx = probe_rng.gen_range(0..self.cardinality);
                if self.satisfies_constraints(&self.decode(idx)?)? {
                    accepted += 1;
                }
            }
            if accepted * 100 < probe {
                return self.sample_by_enumeration(n, &mut rng);
            }
        }
        let mut chosen = HashSet::new();
        let mut out = Vec::with_capacity(n as usize);
        // With acceptance >= 1% and n << cardinality this terminates
        // quickly; the hard cap guards degenerate inputs.
        let max_attempts = n
            .saturating_mul(10_000)
            .max(1_000_000);
        let mut attempts = 0u64;
        while (out.len() as u64) < n {
            if attempts >= max_attempts {
                return self.sample_by_enumeration(n, &mut rng);
            }
            attempts += 1;
            let idx = rng.gen_range(0..self.cardinality);
            if chosen.contains(&idx) {
                continue;
            }
            let config = self.decode(idx)?;
            if self.satisfies_constraints(&config)? {
                chosen.insert(idx);
                out.push(config);
            }
        }
        Ok(out)
    }

    fn sample_by_enumeration(
        &self,
        n: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<Configuration>, SpaceError> {
        let mut valid: Vec<Configuration> = Vec::new();
        for config in self.enumerate_valid() {
            valid.push(config?);
        }
        if n > valid.len() as u64 {
            return Err(SpaceError::NotEnoughValidConfigs {
                requested: n,
                available: valid.len() as u64,
            });
        }
        valid.shuffle(rng);
        valid.truncate(n as usize);
        Ok(valid)
    }
}

/// Shared handle used wherever datasets and analyses reference the
/// space they were measured on.
pub type SpaceRef = Arc<ParameterSpace>;

const BUILTIN_IDS: [&str; 7] = [
    "gemm",
    "nbody",
    "hotspot",
    "pnpoly",
    "convolution",
    "expdist",
    "dedisp",
];

/// Returns one of the seven embedded benchmark space definitions.
/// Built-ins ship with empty constraint lists.
pub fn builtin_space(name: &str) -> Result<ParameterSpace, SpaceError> {
    let json = match name {
        "gemm" => include_str!("../spaces/gemm.json"),
        "nbody" => include_str!("../spaces/nbody.json"),
        "hotspot" => include_str!("../spaces/hotspot.json"),
        "pnpoly" => include_str!("../spaces/pnpoly.json"),
        "convolution" => include_str!("../spaces/convolution.json"),
        "expdist" => include_str!("../spaces/expdist.json"),
        "dedisp" => include_str!("../spaces/dedisp.json"),
        other => return Err(SpaceError::UnknownBenchmark(other.to_string())),
    };
    ParameterSpace::from_json(json)
}

pub fn builtin_ids() -> &'static [&'static str] {
    &BUILTIN_IDS
}
