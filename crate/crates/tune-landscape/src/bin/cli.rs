use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use tune_landscape::analysis;
use tune_landscape::dataset::{self, DeviceDataset, DuplicatePolicy, FileFormat, StudyDataset};
use tune_landscape::landscape::{self, NeighborhoodPolicy, ProportionDenominator};
use tune_landscape::report::{AnalysisReport, RunManifest};
use tune_landscape::space::{builtin_ids, builtin_space, ParameterSpace, SpaceRef};
use tune_landscape::surrogate::{self, FitParams, ImportanceMap};
use tune_landscape::tuner::{
    self, Backend, BudgetSemantics, CommandBackend, SamplePolicy, SyntheticBackend,
    SyntheticFunction, TableBackend,
};

#[derive(Parser)]
#[command(name = "tune-landscape", version, about = "Autotuning search-space and fitness-landscape analysis")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Inspect, enumerate, or sample parameter spaces.
    Space {
        #[command(subcommand)]
        cmd: SpaceCmd,
    },
    /// Run analyses over tuning datasets and write reports.
    Analyze {
        #[command(subcommand)]
        cmd: AnalyzeCmd,
    },
    /// Run reference tuners against a backend.
    Tune {
        #[command(subcommand)]
        cmd: TuneCmd,
    },
}

#[derive(Args)]
struct SpaceArgs {
    /// Built-in benchmark space id.
    #[arg(long, conflicts_with = "space")]
    builtin: Option<String>,
    /// Space definition JSON file.
    #[arg(long)]
    space: Option<PathBuf>,
}

impl SpaceArgs {
    fn load(&self) -> Result<(SpaceRef, Option<PathBuf>), CliError> {
        match (&self.builtin, &self.space) {
            (Some(id), None) => Ok((Arc::new(builtin_space(id).map_err(data)?), None)),
            (None, Some(path)) => {
                let json = fs::read_to_string(path)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                Ok((
                    Arc::new(ParameterSpace::from_json(&json).map_err(data)?),
                    Some(path.clone()),
                ))
            }
            _ => Err(CliError::Usage(format!(
                "exactly one of --builtin or --space is required (built-ins: {})",
                builtin_ids().join(", ")
            ))),
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file (CSV or JSONL, by extension). Repeatable.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Device name for each --data file, in order. Defaults to the
    /// file stem.
    #[arg(long)]
    device: Vec<String>,
}

impl DataArgs {
    fn load(&self, space: &SpaceRef) -> Result<Vec<DeviceDataset>, CliError> {
        if !self.device.is_empty() && self.device.len() != self.data.len() {
            return Err(CliError::Usage(format!(
                "{} --device flags for {} --data files",
                self.device.len(),
                self.data.len()
            )));
        }
        let mut out = Vec::with_capacity(self.data.len());
        for (i, path) in self.data.iter().enumerate() {
            let device = match self.device.get(i) {
                Some(d) => d.clone(),
                None => path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("device{i}")),
            };
            let format = infer_format(path);
            let ds = dataset::ingest_path(
                path,
                format,
                space.clone(),
                &device,
                DuplicatePolicy::KeepFirst,
            )
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            out.push(ds);
        }
        Ok(out)
    }
}

#[derive(Args)]
struct SeedArg {
    /// RNG seed; falls back to TUNE_LANDSCAPE_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> Result<u64, CliError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var("TUNE_LANDSCAPE_SEED") {
            Ok(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("TUNE_LANDSCAPE_SEED=`{v}` is not a u64"))),
            Err(_) => Ok(0),
        }
    }
}

#[derive(Args)]
struct OutArg {
    /// Output directory (default ./reports/<benchmark>/<analysis>/).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn resolve(&self, benchmark: &str, analysis: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("reports").join(benchmark).join(analysis))
    }
}

#[derive(Subcommand)]
enum SpaceCmd {
    /// Print cardinality and constrained cardinality.
    Info {
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// Stream every valid configuration as CSV.
    Enumerate {
        #[command(flatten)]
        space: SpaceArgs,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stream n uniform valid configurations (without replacement) as CSV.
    Sample {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(short = 'n', long = "count")]
        n: u64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnalyzeCommon {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArg,
    /// Worker threads for independent devices/repetitions (analysis
    /// results are identical for any value).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Speedup-over-median distribution: histogram and quantiles.
    Distribution {
        #[command(flatten)]
        common: AnalyzeCommon,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
    /// Random-search convergence curve (median best-so-far relative performance).
    Convergence {
        #[command(flatten)]
        common: AnalyzeCommon,
        #[arg(long, default_value_t = 100)]
        repetitions: u64,
        /// Cap the budget axis (defaults to the dataset size).
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Fitness flow graph, PageRank, and proportion of centrality.
    Centrality {
        #[command(flatten)]
        common: AnalyzeCommon,
        #[arg(long, default_value = "adjacent1")]
        neighborhood: String,
        /// Tolerance p: minima with fitness within (1+p) of the optimum count as good.
        #[arg(long, default_value_t = 0.05)]
        p: f64,
        /// Denominator: all-minima or all-nodes.
        #[arg(long, default_value = "all-minima")]
        denominator: String,
    },
    /// Speedup of the best configuration over the median.
    Speedup {
        #[command(flatten)]
        common: AnalyzeCommon,
    },
    /// Performance-portability matrix across devices.
    Portability {
        #[command(flatten)]
        common: AnalyzeCommon,
    },
    /// Surrogate fit plus permutation feature importance per device.
    Importance {
        #[command(flatten)]
        common: AnalyzeCommon,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 200)]
        trees: usize,
        #[arg(long, default_value_t = 6)]
        depth: usize,
    },
    /// Importance-guided space reduction; writes the reduced space definition.
    Reduce {
        #[command(flatten)]
        common: AnalyzeCommon,
        /// Importance threshold for keeping a parameter's full domain.
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 200)]
        trees: usize,
        #[arg(long, default_value_t = 6)]
        depth: usize,
    },
    /// Search-space size accounting (cardinality, constrained, valid, reduced).
    Accounting {
        #[command(flatten)]
        common: AnalyzeCommon,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 200)]
        trees: usize,
        #[arg(long, default_value_t = 6)]
        depth: usize,
    },
}

#[derive(Args)]
struct BackendArgs {
    /// Table backend: dataset file of measurements.
    #[arg(long, conflicts_with_all = ["synthetic", "command"])]
    table: Option<PathBuf>,
    /// Synthetic backend: sphere | rastrigin-discrete | two-cluster | hotspot-like.
    #[arg(long, conflicts_with = "command")]
    synthetic: Option<String>,
    /// Command backend: executable following the JSON line protocol.
    #[arg(long)]
    command: Option<String>,
    /// Extra arguments for the command backend.
    #[arg(long = "command-arg")]
    command_args: Vec<String>,
    /// Command backend timeout in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    /// Synthetic backend noise amplitude.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

impl BackendArgs {
    fn build(&self, space: &SpaceRef, seed: u64) -> Result<Box<dyn Backend>, CliError> {
        match (&self.table, &self.synthetic, &self.command) {
            (Some(path), None, None) => {
                let ds = dataset::ingest_path(
                    path,
                    infer_format(path),
                    space.clone(),
                    "table",
                    DuplicatePolicy::KeepFirst,
                )
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                Ok(Box::new(TableBackend::new(ds)))
            }
            (None, Some(id), None) => {
                let function = SyntheticFunction::parse(id).ok_or_else(|| {
                    CliError::Usage(format!("unknown synthetic function `{id}`"))
                })?;
                Ok(Box::new(SyntheticBackend::new(
                    space.clone(),
                    function,
                    self.noise,
                    seed,
                )))
            }
            (None, None, Some(program)) => Ok(Box::new(
                CommandBackend::new(program.clone(), self.command_args.clone(), space.clone())
                    .with_timeout(Duration::from_secs(self.timeout)),
            )),
            _ => Err(CliError::Usage(
                "exactly one of --table, --synthetic, or --command is required".to_string(),
            )),
        }
    }

    fn describe(&self) -> String {
        if let Some(p) = &self.table {
            format!("table:{}", p.display())
        } else if let Some(s) = &self.synthetic {
            format!("synthetic:{s}")
        } else if let Some(c) = &self.command {
            format!("command:{c}")
        } else {
            String::new()
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Measurements per configuration (fixed policy).
    #[arg(long, default_value_t = 1)]
    samples: u32,
    /// Use the adaptive confidence-interval sampling policy.
    #[arg(long)]
    adaptive: bool,
    #[arg(long, default_value_t = 3)]
    min_samples: u32,
    #[arg(long, default_value_t = 50)]
    max_samples: u32,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

impl SampleArgs {
    fn policy(&self) -> SamplePolicy {
        if self.adaptive {
            SamplePolicy::Adaptive {
                min_samples: self.min_samples,
                max_samples: self.max_samples,
                confidence: self.confidence,
            }
        } else {
            SamplePolicy::Fixed {
                samples: self.samples,
            }
        }
    }
}

#[derive(Subcommand)]
enum TuneCmd {
    /// Uniform random search without replacement.
    Random {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        budget: u64,
        /// Invalid configurations do not consume budget.
        #[arg(long)]
        free_invalid: bool,
        #[command(flatten)]
        samples: SampleArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Randomized first-improvement local search to a local minimum.
    Localsearch {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Start configuration as comma-separated values (random valid
        /// start when omitted).
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value = "adjacent1")]
        neighborhood: String,
        #[command(flatten)]
        samples: SampleArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        out: OutArg,
    },
}

enum CliError {
    Usage(String),
    Data(String),
}

fn data(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

fn infer_format(path: &Path) -> FileFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") | Some("json") => FileFormat::Jsonl,
        _ => FileFormat::Csv,
    }
}

fn parse_neighborhood(s: &str) -> Result<NeighborhoodPolicy, CliError> {
    NeighborhoodPolicy::parse(s)
        .ok_or_else(|| CliError::Usage(format!("unknown neighborhood `{s}` (adjacent1|hamming1)")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Commands::Space { cmd } => run_space(cmd),
        Commands::Analyze { cmd } => run_analyze(cmd),
        Commands::Tune { cmd } => run_tune(cmd),
    }
}

fn config_csv<W: IoWrite>(
    mut w: W,
    space: &ParameterSpace,
    configs: impl Iterator<Item = tune_landscape::Configuration>,
) -> Result<(), CliError> {
    let header: Vec<&str> = space.parameters().iter().map(|p| p.name.as_str()).collect();
    writeln!(w, "{}", header.join(",")).map_err(data)?;
    for c in configs {
        let row: Vec<String> = c.values.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(",")).map_err(data)?;
    }
    Ok(())
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn IoWrite>, CliError> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent).map_err(data)?;
                }
            }
            Ok(Box::new(fs::File::create(p).map_err(data)?))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn run_space(cmd: SpaceCmd) -> Result<(), CliError> {
    match cmd {
        SpaceCmd::Info { space } => {
            let (space, _) = space.load()?;
            println!("name: {}", space.name());
            println!("parameters: {}", space.parameters().len());
            println!("cardinality: {}", space.cardinality());
            println!(
                "constrained_cardinality: {}",
                space.constrained_cardinality().map_err(data)?
            );
            Ok(())
        }
        SpaceCmd::Enumerate { space, out } => {
            let (space, _) = space.load()?;
            let mut w = open_out(&out)?;
            let configs: Result<Vec<_>, _> = space.enumerate_valid().collect();
            config_csv(&mut w, &space, configs.map_err(data)?.into_iter())
        }
        SpaceCmd::Sample { space, n, seed, out } => {
            let (space, _) = space.load()?;
            let seed = seed.resolve()?;
            let configs = space.sample_valid(n, seed).map_err(data)?;
            let mut w = open_out(&out)?;
            config_csv(&mut w, &space, configs.into_iter())
        }
    }
}

struct AnalyzeContext {
    space: SpaceRef,
    space_path: Option<PathBuf>,
    datasets: Vec<DeviceDataset>,
    seed: u64,
    out_dir: PathBuf,
    argv: Vec<String>,
}

impl AnalyzeContext {
    fn prepare(common: &AnalyzeCommon, analysis: &str) -> Result<Self, CliError> {
        let (space, space_path) = common.space.load()?;
        let datasets = common.data.load(&space)?;
        let seed = common.seed.resolve()?;
        let out_dir = common.out.resolve(space.name(), analysis);
        fs::create_dir_all(&out_dir).map_err(data)?;
        Ok(AnalyzeContext {
            space,
            space_path,
            datasets,
            seed,
            out_dir,
            argv: std::env::args().collect(),
        })
    }

    fn manifest(
        &self,
        common: &AnalyzeCommon,
        extra_flags: &[(&str, String)],
    ) -> Result<RunManifest, CliError> {
        let mut m = RunManifest::new(self.argv.clone(), self.seed);
        if let Some(b) = &common.space.builtin {
            m.flag("builtin", b);
        }
        if let Some(p) = &self.space_path {
            m.flag("space", p.display());
            m.input(p).map_err(data)?;
        }
        for path in &common.data.data {
            m.input(path).map_err(data)?;
        }
        m.flag("jobs", common.jobs);
        for (name, value) in extra_flags {
            m.flag(name, value);
        }
        Ok(m)
    }

    fn devices(&self) -> Vec<String> {
        self.datasets
            .iter()
            .map(|d| d.device().to_string())
            .collect()
    }

    fn single(&self) -> Result<&DeviceDataset, CliError> {
        match self.datasets.len() {
            1 => Ok(&self.datasets[0]),
            n => Err(CliError::Usage(format!(
                "this analysis takes exactly one --data file, got {n}"
            ))),
        }
    }

    fn study(&self) -> Result<StudyDataset, CliError> {
        let mut study = StudyDataset::new(self.space.name(), self.space.clone());
        for d in &self.datasets {
            study.add_device(d.clone()).map_err(data)?;
        }
        Ok(study)
    }

    fn write_csv(&self, name: &str, contents: String) -> Result<(), CliError> {
        fs::write(self.out_dir.join(name), contents).map_err(data)
    }

    fn finish(
        &self,
        manifest: RunManifest,
        report: AnalysisReport,
    ) -> Result<(), CliError> {
        manifest.write(&self.out_dir).map_err(data)?;
        let path = report.write(&self.out_dir).map_err(data)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

/// Fits a surrogate per device (80/20 split) and returns the
/// importance map and hold-out R² for each.
fn fit_importances(
    ctx: &AnalyzeContext,
    repeats: usize,
    trees: usize,
    depth: usize,
) -> Result<Vec<ImportanceMap>, CliError> {
    let mut out = Vec::with_capacity(ctx.datasets.len());
    for ds in &ctx.datasets {
        let rows = ds.valid_subset();
        let (train, holdout) = surrogate::train_holdout_split(&rows, ctx.seed);
        let (train_x, train_y) = surrogate::to_rows(&train);
        let (hold_x, hold_y) = surrogate::to_rows(&holdout);
        let params = FitParams {
            trees,
            depth,
            seed: ctx.seed,
            ..FitParams::default()
        };
        let model = surrogate::fit(&train_x, &train_y, &params)
            .map_err(|e| CliError::Data(format!("device {}: {e}", ds.device())))?;
        let map = surrogate::permutation_importance(&model, &hold_x, &hold_y, repeats, ctx.seed)
            .map_err(|e| CliError::Data(format!("device {}: {e}", ds.device())))?;
        out.push(map);
    }
    Ok(out)
}

fn importance_csv(ctx: &AnalyzeContext, maps: &[ImportanceMap]) -> String {
    let mut csv = String::from("device,parameter,importance,r2_baseline\n");
    for (ds, map) in ctx.datasets.iter().zip(maps) {
        for (p, &imp) in ctx.space.parameters().iter().zip(&map.importances) {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                ds.device(),
                p.name,
                dataset::format_sig9(imp),
                dataset::format_sig9(map.r2_baseline)
            ));
        }
    }
    csv
}

fn run_analyze(cmd: AnalyzeCmd) -> Result<(), CliError> {
    match cmd {
        AnalyzeCmd::Distribution { common, bins } => {
            let ctx = AnalyzeContext::prepare(&common, "distribution")?;
            let ds = ctx.single()?;
            let summary = analysis::distribution(ds, bins).map_err(data)?;
            let mut csv = String::from("quantile_percent,speedup\n");
            for &(q, v) in &summary.quantiles {
                csv.push_str(&format!("{q},{}\n", dataset::format_sig9(v)));
            }
            ctx.write_csv("quantiles.csv", csv)?;
            let width = (summary.bin_max - summary.bin_min) / summary.histogram.len() as f64;
            let mut hist = String::from("bin_lo,bin_hi,count\n");
            for (i, &count) in summary.histogram.iter().enumerate() {
                hist.push_str(&format!(
                    "{},{},{count}\n",
                    dataset::format_sig9(summary.bin_min + width * i as f64),
                    dataset::format_sig9(summary.bin_min + width * (i + 1) as f64)
                ));
            }
            ctx.write_csv("histogram.csv", hist)?;
            let manifest = ctx.manifest(&common, &[("bins", bins.to_string())])?;
            let mut report = AnalysisReport::new(
                ctx.space.name(),
                ctx.devices(),
                "distribution",
                ctx.seed,
                serde_json::json!({
                    "quantiles": summary.quantiles,
                    "histogram": summary.histogram,
                    "bin_min": summary.bin_min,
                    "bin_max": summary.bin_max,
                }),
            );
            report.param("bins", bins);
            ctx.finish(manifest, report)
        }
        AnalyzeCmd::Convergence {
            common,
            repetitions,
            budget,
        } => {
            let ctx = AnalyzeContext::prepare(&common, "convergence")?;
            let ds = ctx.single()?;
            let curve =
                analysis::convergence(ds, repetitions, ctx.seed, budget).map_err(data)?;
            let mut csv = String::from("budget,relative_performance\n");
            for (i, &v) in curve.values.iter().enumerate() {
                csv.push_str(&format!("{},{}\n", i + 1, dataset::format_sig9(v)));
            }
            ctx.write_csv("curve.csv", csv)?;
            let manifest =
                ctx.manifest(&common, &[("repetitions", repetitions.to_string())])?;
            let mut report = AnalysisReport::new(
                ctx.space.name(),
                ctx.devices(),
                "convergence",
                ctx.seed,
                serde_json::to_value(&curve).map_err(data)?,
            );
            report.param("repetitions", repetitions);
            if let Some(b) = budget {
                report.param("budget", b);
            }
            ctx.finish(manifest, report)
        }
        AnalyzeCmd::Centrality {
            common,
            neighborhood,
            p,
            denominator,
        } => {
            let ctx = AnalyzeContext::prepare(&common, "centrality")?;
            let ds = ctx.single()?;
            let policy = parse_neighborhood(&neighborhood)?;
            let denom = match denominator.as_str() {
                "all-minima" => ProportionDenominator::AllMinima,
                "all-nodes" => ProportionDenominator::AllNodes,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown denominator `{other}` (all-minima|all-nodes)"
                    )))
                }
            };
            let g = landscape::build_ffg(ds, policy).map_err(data)?;
            let pr = landscape::pagerank(
                g.out_edges(),
                landscape::DEFAULT_DAMPING,
                landscape::DEFAULT_TOL,
                landscape::DEFAULT_MAX_ITER,
            );
            let result = landscape::proportion_of_centrality(&g, &pr, p, denom);
            let summary = landscape::minima_summary(&g, &pr);
            let mut csv = String::from("config_index,fitness,pagerank\n");
            for m in &summary.minima {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    m.config_index,
                    dataset::format_sig9(m.fitness),
                    dataset::format_sig9(m.pagerank)
                ));
            }
            ctx.write_csv("minima.csv", csv)?;
            let mut edges = Vec::new();
            g.export_edges(&mut edges).map_err(data)?;
            ctx.write_csv("edges.csv", String::from_utf8(edges).map_err(data)?)?;
            let manifest = ctx.manifest(
                &common,
                &[
                    ("neighborhood", policy.as_str().to_string()),
                    ("p", p.to_string()),
                    ("denominator", denominator.clone()),
                ],
            )?;
            let mut report = AnalysisReport::new(
                ctx.space.name(),
                ctx.devices(),
                "centrality",
                ctx.seed,
                serde_json::json!({
                    "proportion": result.proportion,
                    "node_count": summary.node_count,
                    "edge_count": summary.edge_count,
                    "minima": summary.minima,
                }),
            );
            report
                .param("neighborhood", policy.as_str())
                .param("p", p)
                .param("denominator", denominator);
            ctx.finish(manifest, report)
        }
        AnalyzeCmd::Speedup { common } => {
            let ctx = AnalyzeContext::prepare(&common, "speedup")?;
            let ds = ctx.single()?;
            let speedup = analysis::speedup_over_median(ds).map_err(data)?;
            let (best_idx, best) = ds.best_entry().map_err(data)?;
            let median = ds.median_objective().map_err(data)?;
            ctx.write_csv(
                "speedup.csv",
                format!(
                    "speedup,best_index,best_objective,median_objective\n{},{best_idx},{},{}\n",
                    dataset::format_sig9(speedup),
                    dataset::format_sig9(best),
                    dataset::format_sig9(median)
                ),
            )?;
            let manifest = ctx.manifest(&common, &[])?;
            let report = AnalysisReport::new(
                ctx.space.name(),
                ctx.devices(),
                "speedup",
                ctx.seed,
                serde_json::json!({
                    "speedup_over_median": speedup,
                    "best_index": best_idx,
                    "best_objective": best,
                    "median_objective": median,
                }),
            );
            ctx.finish(manifest, report)
        }
        AnalyzeCmd::Portability { common } => {
            let ctx = AnalyzeContext::prepare(&common, "portability")?;
            let study = ctx.study()?;
            let matrix = analysis::portability(&study).map_err(data)?;
            let mut csv = String::from("from_device");
            for d in &matrix.devices {
                csv.push_str(&format!(",{d}"));
            }
            csv.push('\n');
            for (row, cells) in matrix.devices.iter().zip(&matrix.cells) {
                csv.push_str(row);
                for cell in cells {
                    match cell {
                        Some(v) => csv.push_str(&format!(",{}", dataset::format_sig9(*v))),
                        None => csv.push(','),
                    }
                }
                csv.push('\n');
            }
            ctx.write_csv("matrix.csv", csv)?;
            let manifest = ctx.manifest(&common, &[])?;
            let report = AnalysisReport::new(
                ctx.space.name(),
                ctx.devices(),
                "portability",
                ctx.seed,
                serde_json::to_value(&matrix).map_err(data)?,
            );
            ctx.finish(manifest, report)
        }
        AnalyzeCmd::Importance {
            common,
            repeats,
            trees,
            depth,
        } => {
            let ctx = AnalyzeContext::prepare(&common, "importance")?;
            let maps = fit_importances(&ctx, repeats, trees, depth)?;
            ctx.write_csv("importance.csv", importance_csv(&ctx, &maps))?;
            let manifest = ctx.manifest(
                &common,
                &[
                    ("repeats", repeats.to_string()),
                    ("trees", trees.to_string()),
                    ("depth", depth.to_string()),
                ],
            )?;
            let per_device: Vec<serde_json::Value> = ctx
                .datasets
                .iter()
                .zip(&maps)
                .map(|(ds, m)| {
                    serde_json::json!({
                        "device": ds.device(),
                        "r2_baseline": m.r2_baseline,
                        "importances": ctx
                            .space
                            .parameters()
                            .iter()
                            .zip(&m.importances)
                            .map(|(p, &v)| (p.name.clone(), v))
                            .collect::<BTreeMap<_, _>>(),
                    })
                })
                .collect();
            let mut report = AnalysisReport::new(
                ctx.space.name(),
                ctx.devices(),
                "importance",
                ctx.seed,
                serde_json::Value::Array(per_device),
            );
            report
                .param("repeats", repeats)
                .param("trees", trees)
                .param("depth", depth);
            ctx.finish(manifest, report)
        }
        AnalyzeCmd::Reduce {
            common,
            threshold,
            repeats,
            trees,
            depth,
        } => {
            let ctx = AnalyzeContext::prepare(&common, "reduce")?;
            let maps = fit_importances(&ctx, repeats, trees, depth)?;
            let map_refs: Vec<&ImportanceMap> = maps.iter().collect();
            let anchors: Result<Vec<_>, _> =
                ctx.datasets.iter().map(|d| d.best().map(|(c, _)| c)).collect();
            let anchors = anchors.map_err(data)?;
            let anchor_refs: Vec<_> = anchors.iter().collect();
            let reduced =
                surrogate::reduce_space(&ctx.space, &map_refs, threshold, &anchor_refs)
                    .map_err(data)?;
            let def = reduced.to_file_def();
            tune_landscape::report::write_json_pretty(&ctx.out_dir.join("space.json"), &def)
                .map_err(data)?;
            ctx.write_csv("importance.csv", importance_csv(&ctx, &maps))?;
            let manifest = ctx.manifest(
                &common,
                &[
                    ("threshold", threshold.to_string()),
                    ("repeats", repeats.to_string()),
                    ("trees", trees.to_string()),
                    ("depth", depth.to_string()),
                ],
            )?;
            let mut report = AnalysisReport::new(
                ctx.space.name(),
                ctx.devices(),
                "reduce",
                ctx.seed,
                serde_json::json!({
                    "original_cardinality": ctx.space.cardinality(),
                    "reduced_cardinality": reduced.cardinality(),
                    "reduced_constrained": reduced.constrained_cardinality().map_err(data)?,
                    "kept_parameters": ctx
                        .space
                        .parameters()
                        .iter()
                        .zip(reduced.parameters())
                        .filter(|(orig, red)| orig.values == red.values)
                        .map(|(orig, _)| orig.name.clone())
                        .collect::<Vec<_>>(),
                }),
            );
            report.param("threshold", threshold);
            ctx.finish(manifest, report)
        }
        AnalyzeCmd::Accounting {
            common,
            threshold,
            repeats,
            trees,
            depth,
        } => {
            let ctx = AnalyzeContext::prepare(&common, "accounting")?;
            let maps = fit_importances(&ctx, repeats, trees, depth)?;
            let map_refs: Vec<&ImportanceMap> = maps.iter().collect();
            let row =
                analysis::space_accounting(&ctx.space, &ctx.datasets, &map_refs, threshold)
                    .map_err(data)?;
            ctx.write_csv(
                "accounting.csv",
                format!(
                    "benchmark,cardinality,constrained,valid_min,valid_max,reduced,reduce_constrained\n{},{},{},{},{},{},{}\n",
                    row.benchmark,
                    row.cardinality,
                    row.constrained,
                    row.valid_min.map(|v| v.to_string()).unwrap_or_default(),
                    row.valid_max.map(|v| v.to_string()).unwrap_or_default(),
                    row.reduced,
                    row.reduce_constrained
                ),
            )?;
            let manifest = ctx.manifest(&common, &[("threshold", threshold.to_string())])?;
            let mut report = AnalysisReport::new(
                ctx.space.name(),
                ctx.devices(),
                "accounting",
                ctx.seed,
                serde_json::to_value(&row).map_err(data)?,
            );
            report.param("threshold", threshold);
            ctx.finish(manifest, report)
        }
    }
}

fn parse_start(
    space: &ParameterSpace,
    s: &str,
) -> Result<tune_landscape::Configuration, CliError> {
    let values: Result<Vec<i64>, _> = s.split(',').map(|v| v.trim().parse()).collect();
    let values = values
        .map_err(|e| CliError::Usage(format!("--start `{s}`: {e}")))?;
    let config = tune_landscape::Configuration { values };
    space.encode(&config).map_err(data)?;
    Ok(config)
}

fn write_trajectory(
    out_dir: &Path,
    manifest: RunManifest,
    trajectory: &tuner::Trajectory,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(data)?;
    manifest.write(out_dir).map_err(data)?;
    let mut csv = Vec::new();
    trajectory.export_csv(&mut csv).map_err(data)?;
    fs::write(out_dir.join("trajectory.csv"), csv).map_err(data)?;
    tune_landscape::report::write_json_pretty(&out_dir.join("trajectory.json"), trajectory)
        .map_err(data)?;
    match trajectory.best() {
        Some((idx, obj)) => println!(
            "best: index {idx} objective {}",
            dataset::format_sig9(obj)
        ),
        None => println!("no valid configuration found"),
    }
    println!("wrote {}", out_dir.join("trajectory.csv").display());
    Ok(())
}

fn run_tune(cmd: TuneCmd) -> Result<(), CliError> {
    match cmd {
        TuneCmd::Random {
            space,
            backend,
            budget,
            free_invalid,
            samples,
            seed,
            out,
        } => {
            let (space_ref, space_path) = space.load()?;
            let seed = seed.resolve()?;
            let mut b = backend.build(&space_ref, seed)?;
            let semantics = if free_invalid {
                BudgetSemantics::InvalidIsFree
            } else {
                BudgetSemantics::InvalidCountsAgainstBudget
            };
            let trajectory = tuner::random_search(
                b.as_mut(),
                &space_ref,
                budget,
                seed,
                &samples.policy(),
                semantics,
            )
            .map_err(data)?;
            if trajectory.steps.iter().all(|s| s.objective.is_none()) {
                return Err(CliError::Data(
                    "backend produced no valid measurement".to_string(),
                ));
            }
            let out_dir = out.resolve(space_ref.name(), "tune-random");
            let mut manifest = RunManifest::new(std::env::args().collect(), seed);
            manifest
                .flag("budget", budget)
                .flag("backend", backend.describe())
                .flag("free_invalid", free_invalid);
            if let Some(p) = &space_path {
                manifest.input(p).map_err(data)?;
            }
            if let Some(p) = &backend.table {
                manifest.input(p).map_err(data)?;
            }
            write_trajectory(&out_dir, manifest, &trajectory)
        }
        TuneCmd::Localsearch {
            space,
            backend,
            start,
            neighborhood,
            samples,
            seed,
            out,
        } => {
            let (space_ref, space_path) = space.load()?;
            let seed = seed.resolve()?;
            let policy = parse_neighborhood(&neighborhood)?;
            let start_config = start
                .as_deref()
                .map(|s| parse_start(&space_ref, s))
                .transpose()?;
            let mut b = backend.build(&space_ref, seed)?;
            let trajectory = tuner::local_search(
                b.as_mut(),
                &space_ref,
                start_config,
                policy,
                seed,
                &samples.policy(),
            )
            .map_err(data)?;
            if trajectory.steps.first().map_or(true, |s| s.objective.is_none()) {
                return Err(CliError::Data(
                    "backend failed on the starting configuration".to_string(),
                ));
            }
            let out_dir = out.resolve(space_ref.name(), "tune-localsearch");
            let mut manifest = RunManifest::new(std::env::args().collect(), seed);
            manifest
                .flag("neighborhood", policy.as_str())
                .flag("backend", backend.describe());
            if let Some(s) = &start {
                manifest.flag("start", s);
            }
            if let Some(p) = &space_path {
                manifest.input(p).map_err(data)?;
            }
            if let Some(p) = &backend.table {
                manifest.input(p).map_err(data)?;
            }
            write_trajectory(&out_dir, manifest, &trajectory)
        }
    }
}
