//! Measured tuning results per device: ingestion from CSV / JSON-lines,
//! validation against a parameter space, and the basic statistics the
//! analyses build on.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Configuration, SpaceError, SpaceRef};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Value { row: usize, message: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("dataset has no valid records")]
    EmptyDataset,
    #[error("device `{device}` uses a different parameter space than the study")]
    SpaceMismatch { device: String },
    #[error("duplicate device `{0}` in study")]
    DuplicateDevice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CompileError,
    RuntimeError,
    InvalidConfig,
    Timeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::CompileError => "compile_error",
            Status::RuntimeError => "runtime_error",
            Status::InvalidConfig => "invalid_config",
            Status::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        match s {
            "ok" => Some(Status::Ok),
            "compile_error" => Some(Status::CompileError),
            "runtime_error" => Some(Status::RuntimeError),
            "invalid_config" => Some(Status::InvalidConfig),
            "timeout" => Some(Status::Timeout),
            _ => None,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One measurement: a configuration, its objective (runtime in
/// milliseconds) when the run succeeded, and a status.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningRecord {
    pub objective: Option<f64>,
    pub status: Status,
}

impl TuningRecord {
    pub fn ok(objective: f64) -> Self {
        TuningRecord {
            objective: Some(objective),
            status: Status::Ok,
        }
    }

    pub fn failed(status: Status) -> Self {
        TuningRecord {
            objective: None,
            status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    /// First occurrence wins; later duplicates only bump the counter.
    #[default]
    KeepFirst,
    /// Keep the record with the lowest objective (failed records lose
    /// to successful ones).
    KeepMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Jsonl,
}

/// Immutable store of measurements for one device, keyed by config
/// index within a shared parameter space.
#[derive(Debug, Clone)]
pub struct DeviceDataset {
    device: String,
    space: SpaceRef,
    records: BTreeMap<u64, TuningRecord>,
    duplicate_count: u64,
}

impl DeviceDataset {
    pub fn new(device: impl Into<String>, space: SpaceRef) -> Self {
        DeviceDataset {
            device: device.into(),
            space,
            records: BTreeMap::new(),
            duplicate_count: 0,
        }
    }

    pub fn device(&self) -> &str {
        &self.device
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn duplicate_count(&self) -> u64 {
        self.duplicate_count
    }

    pub fn record(&self, index: u64) -> Option<&TuningRecord> {
        self.records.get(&index)
    }

    pub fn records(&self) -> impl Iterator<Item = (u64, &TuningRecord)> {
        self.records.iter().map(|(&i, r)| (i, r))
    }

    pub fn insert(
        &mut self,
        config: &Configuration,
        record: TuningRecord,
        policy: DuplicatePolicy,
    ) -> Result<(), DatasetError> {
        let index = self.space.encode(config)?;
        self.insert_by_index(index, record, policy);
        Ok(())
    }

    pub fn insert_by_index(&mut self, index: u64, record: TuningRecord, policy: DuplicatePolicy) {
        use std::collections::btree_map::Entry;
        match self.records.entry(index) {
            Entry::Vacant(e) => {
                e.insert(record);
            }
            Entry::Occupied(mut e) => {
                self.duplicate_count += 1;
                if policy == DuplicatePolicy::KeepMin {
                    let better = match (record.objective, e.get().objective) {
                        (Some(new), Some(old)) => new < old,
                        (Some(_), None) => true,
                        _ => false,
                    };
                    if better {
                        e.insert(record);
                    }
                }
            }
        }
    }

    /// Successful records only, in ascending index order.
    pub fn valid_entries(&self) -> Vec<(u64, f64)> {
        self.records
            .iter()
            .filter_map(|(&i, r)| match (r.status, r.objective) {
                (Status::Ok, Some(obj)) => Some((i, obj)),
                _ => None,
            })
            .collect()
    }

    /// Successful records as (configuration, objective) pairs, in
    /// ascending index order.
    pub fn valid_subset(&self) -> Vec<(Configuration, f64)> {
        self.valid_entries()
            .into_iter()
            .map(|(i, obj)| (self.space.decode(i).expect("stored index valid"), obj))
            .collect()
    }

    /// Strict minimum objective; ties break to the lowest config index.
    pub fn best(&self) -> Result<(Configuration, f64), DatasetError> {
        let (idx, obj) = self.best_entry()?;
        Ok((self.space.decode(idx)?, obj))
    }

    pub fn best_entry(&self) -> Result<(u64, f64), DatasetError> {
        // BTreeMap iterates in ascending index order, so `<` keeps the
        // lowest index on ties.
        let mut best: Option<(u64, f64)> = None;
        for (i, obj) in self.valid_entries() {
            if best.map_or(true, |(_, b)| obj < b) {
                best = Some((i, obj));
            }
        }
        best.ok_or(DatasetError::EmptyDataset)
    }

    /// Median over valid objectives; even counts average the two
    /// central values.
    pub fn median_objective(&self) -> Result<f64, DatasetError> {
        let mut objectives: Vec<f64> = self.valid_entries().iter().map(|&(_, o)| o).collect();
        if objectives.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        objectives.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(median_of_sorted(&objectives))
    }

    pub fn export<W: Write>(&self, writer: W, format: FileFormat) -> Result<(), DatasetError> {
        match format {
            FileFormat::Csv => self.export_csv(writer),
            FileFormat::Jsonl => self.export_jsonl(writer),
        }
    }

    fn export_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self
            .space
            .parameters()
            .iter()
            .map(|p| p.name.as_str())
            .collect();
        header.push("objective_ms");
        header.push("status");
        w.write_record(&header)?;
        for (&index, record) in &self.records {
            let config = self.space.decode(index)?;
            let mut row: Vec<String> = config.values.iter().map(|v| v.to_string()).collect();
            row.push(match record.objective {
                Some(obj) => format_sig9(obj),
                None => String::new(),
            });
            row.push(record.status.as_str().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn export_jsonl<W: Write>(&self, mut writer: W) -> Result<(), DatasetError> {
        for (&index, record) in &self.records {
            let config = self.space.decode(index)?;
            let mut obj = serde_json::Map::new();
            for (p, &v) in self.space.parameters().iter().zip(&config.values) {
                obj.insert(p.name.clone(), serde_json::Value::from(v));
            }
            obj.insert(
                "objective_ms".to_string(),
                match record.objective {
                    // Round-trips through the printed 9-significant-digit
                    // form so CSV and JSONL exports agree.
                    Some(o) => serde_json::Value::from(
                        format_sig9(o).parse::<f64>().expect("printed float"),
                    ),
                    None => serde_json::Value::Null,
                },
            );
            obj.insert(
                "status".to_string(),
                serde_json::Value::from(record.status.as_str()),
            );
            serde_json::to_writer(&mut writer, &serde_json::Value::Object(obj))
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Prints with 9 significant digits, fixed notation.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn ingest_path(
    path: &Path,
    format: FileFormat,
    space: SpaceRef,
    device: &str,
    policy: DuplicatePolicy,
) -> Result<DeviceDataset, DatasetError> {
    let file = std::fs::File::open(path)?;
    ingest(file, format, space, device, policy)
}

pub fn ingest<R: Read>(
    reader: R,
    format: FileFormat,
    space: SpaceRef,
    device: &str,
    policy: DuplicatePolicy,
) -> Result<DeviceDataset, DatasetError> {
    match format {
        FileFormat::Csv => ingest_csv(reader, space, device, policy),
        FileFormat::Jsonl => ingest_jsonl(reader, space, device, policy),
    }
}

fn check_record(
    row: usize,
    objective: Option<f64>,
    status: Status,
) -> Result<TuningRecord, DatasetError> {
    match (status, objective) {
        (Status::Ok, Some(obj)) if obj > 0.0 => Ok(TuningRecord::ok(obj)),
        (Status::Ok, _) => Err(DatasetError::Value {
            row,
            message: "status `ok` requires a positive objective_ms".to_string(),
        }),
        (status, _) => Ok(TuningRecord::failed(status)),
    }
}

fn parse_value(row: usize, name: &str, raw: &str) -> Result<i64, DatasetError> {
    raw.trim().parse::<i64>().map_err(|_| DatasetError::Value {
        row,
        message: format!("parameter `{name}`: `{raw}` is not an integer"),
    })
}

fn domain_check(
    row: usize,
    space: &SpaceRef,
    config: &Configuration,
) -> Result<u64, DatasetError> {
    space.encode(config).map_err(|e| match e {
        SpaceError::InvalidConfiguration { parameter, value } => DatasetError::Value {
            row,
            message: format!("value {value} outside domain of parameter `{parameter}`"),
        },
        other => DatasetError::Space(other),
    })
}

fn ingest_csv<R: Read>(
    reader: R,
    space: SpaceRef,
    device: &str,
    policy: DuplicatePolicy,
) -> Result<DeviceDataset, DatasetError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let column = |name: &str| -> Result<usize, DatasetError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::Schema(name.to_string()))
    };
    let param_cols: Vec<usize> = space
        .parameters()
        .iter()
        .map(|p| column(&p.name))
        .collect::<Result<_, _>>()?;
    let obj_col = column("objective_ms")?;
    let status_col = column("status")?;

    let mut ds = DeviceDataset::new(device, space.clone());
    for (i, result) in csv_reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header line
        let record = result?;
        let mut values = Vec::with_capacity(param_cols.len());
        for (p, &col) in space.parameters().iter().zip(&param_cols) {
            let raw = record.get(col).ok_or_else(|| DatasetError::Value {
                row,
                message: format!("missing field for `{}`", p.name),
            })?;
            values.push(parse_value(row, &p.name, raw)?);
        }
        let config = Configuration { values };
        let index = domain_check(row, &space, &config)?;
        let obj_raw = record.get(obj_col).unwrap_or("").trim();
        let objective = if obj_raw.is_empty() {
            None
        } else {
            Some(obj_raw.parse::<f64>().map_err(|_| DatasetError::Value {
                row,
                message: format!("objective_ms `{obj_raw}` is not a number"),
            })?)
        };
        let status_raw = record.get(status_col).unwrap_or("").trim();
        let status = Status::parse(status_raw).ok_or_else(|| DatasetError::Value {
            row,
            message: format!("unknown status `{status_raw}`"),
        })?;
        ds.insert_by_index(index, check_record(row, objective, status)?, policy);
    }
    Ok(ds)
}

fn ingest_jsonl<R: Read>(
    reader: R,
    space: SpaceRef,
    device: &str,
    policy: DuplicatePolicy,
) -> Result<DeviceDataset, DatasetError> {
    let mut ds = DeviceDataset::new(device, space.clone());
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let row = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| DatasetError::Value {
                row,
                message: format!("invalid JSON: {e}"),
            })?;
        let obj = value.as_object().ok_or_else(|| DatasetError::Value {
            row,
            message: "expected a JSON object".to_string(),
        })?;
        let mut values = Vec::with_capacity(space.parameters().len());
        for p in space.parameters() {
            let v = obj
                .get(&p.name)
                .ok_or_else(|| DatasetError::Schema(p.name.clone()))?;
            let v = v.as_i64().ok_or_else(|| DatasetError::Value {
                row,
                message: format!("parameter `{}`: expected an integer", p.name),
            })?;
            values.push(v);
        }
        let config = Configuration { values };
        let index = domain_check(row, &space, &config)?;
        let objective = match obj.get("objective_ms") {
            None => return Err(DatasetError::Schema("objective_ms".to_string())),
            Some(serde_json::Value::Null) => None,
            Some(v) => Some(v.as_f64().ok_or_else(|| DatasetError::Value {
                row,
                message: "objective_ms must be a number or null".to_string(),
            })?),
        };
        let status_raw = obj
            .get("status")
            .and_then(|v| v.as_str())
            .ok_or_else(|| DatasetError::Schema("status".to_string()))?;
        let status = Status::parse(status_raw).ok_or_else(|| DatasetError::Value {
            row,
            message: format!("unknown status `{status_raw}`"),
        })?;
        ds.insert_by_index(index, check_record(row, objective, status)?, policy);
    }
    Ok(ds)
}

/// Datasets for one benchmark across several devices sharing the same
/// space definition.
#[derive(Debug, Clone)]
pub struct StudyDataset {
    benchmark: String,
    space: SpaceRef,
    devices: Vec<DeviceDataset>,
}

impl StudyDataset {
    pub fn new(benchmark: impl Into<String>, space: SpaceRef) -> Self {
        StudyDataset {
            benchmark: benchmark.into(),
            space,
            devices: Vec::new(),
        }
    }

    pub fn benchmark(&self) -> &str {
        &self.benchmark
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn devices(&self) -> &[DeviceDataset] {
        &self.devices
    }

    pub fn add_device(&mut self, ds: DeviceDataset) -> Result<(), DatasetError> {
        if *ds.space() != self.space {
            return Err(DatasetError::SpaceMismatch {
                device: ds.device().to_string(),
            });
        }
        if self.devices.iter().any(|d| d.device() == ds.device()) {
            return Err(DatasetError::DuplicateDevice(ds.device().to_string()));
        }
        self.devices.push(ds);
        Ok(())
    }
}
