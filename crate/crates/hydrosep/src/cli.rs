//! `hydrosep` subcommands.
//!
//! A data directory holds `events.csv`, one matrix file per device
//! (`<device>.csv`) and `aggregate.csv`. `synth` and `ingest` write that
//! layout; the other commands read it.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hydrosep_core::data::{aggregate, events_to_matrix, DEFAULT_INTERVALS};
use hydrosep_core::discriminative::build_aggregate;
use hydrosep_core::pipeline::{
    complement, cross_validate, disagg_config, fold_assignment, mean_std, train_compound,
    train_devices, InitStrategy, PipelineConfig, DEFAULT_RANDOM_ATOMS,
};
use hydrosep_core::predictor::disaggregate;
use hydrosep_core::shapes::{discover, infer_span, PlacementMode, ShapeOptions, DEFAULT_MAX_SPAN};
use hydrosep_core::syngen::{
    build_event_dictionary, generate_days, EventDictionary, FrequencyModel,
};
use hydrosep_core::{
    AggregateMatrix, ConsumptionMatrix, Device, DeviceModel, EvalReport, GibbsConfig, HUpdateMode,
    Matrix,
};

use crate::config::{resolve, ConfigFile};
use crate::error::{Error, Result};
use crate::formats::{
    read_aggregate, read_consumption, read_events, write_events, write_matrix, write_rows,
    AGGREGATE_LABEL,
};
use crate::logging::record;
use crate::model_file::ModelFile;

pub const EVENTS_FILE: &str = "events.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const FREQUENCY_FILE: &str = "frequency.csv";
pub const MODEL_FILE: &str = "model.hsmodel.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const EVAL_FOLDS_FILE: &str = "eval_folds.csv";
pub const ESTIMATES_DIR: &str = "estimates";
pub const SHAPES_DIR: &str = "shapes";
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_SYNTH_DAYS: usize = 50;

#[derive(Debug, Parser)]
#[command(
    name = "hydrosep",
    version,
    about = "Disaggregate 15-minute water-meter data into per-device use"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic events and matrices.
    Synth(SynthArgs),
    /// Convert an events CSV into per-device and aggregate matrices.
    Ingest(IngestArgs),
    /// Dump discovered spans, shape patterns and smoothed bases.
    Shapes(ShapesArgs),
    /// Train one model per device.
    Train(TrainArgs),
    /// Train the compound model on aggregate data.
    TrainAgg(TrainAggArgs),
    /// Estimate per-device consumption from aggregate data.
    Disagg(DisaggArgs),
    /// Score estimates, or run k-fold cross-validation with `--folds`.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HUpdateArg {
    Aggregated,
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Observed,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    /// Shape features discovered in the training data.
    Shape,
    /// Dense random atoms.
    Random,
    /// Random atoms sized like the shape-feature dictionary.
    RandomMatched,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Gibbs sweeps per chain (T).
    #[arg(long)]
    pub gibbs_samples: Option<usize>,
    /// Discarded leading sweeps (s).
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub em_iters: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Use the symmetric Laplace prior instead of the nonnegative one.
    #[arg(long)]
    pub allow_negative_coeffs: bool,
    #[arg(long, value_enum)]
    pub h_update: Option<HUpdateArg>,
    #[arg(long, value_enum)]
    pub placement: Option<PlacementArg>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub intervals: Option<usize>,
    /// Fit rates, start times and templates from these events instead of the defaults.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub events: PathBuf,
    /// Number of days; defaults to one past the last event day.
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub intervals: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory with `<device>.csv` and `aggregate.csv`; defaults to the output directory.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Devices to use, in order.
    #[arg(long, value_delimiter = ',')]
    pub devices: Option<Vec<String>>,
    /// Restrict to fold `f` of `--folds`: training commands use the other
    /// folds, `disagg` and `eval` use this one.
    #[arg(long)]
    pub fold: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ShapesArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub max_span: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file to write; defaults to `<out-dir>/model.hsmodel.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long)]
    pub max_span: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainAggArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file with per-device models; rewritten with the compound section.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Write the result here instead of overwriting `--model`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DisaggArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory of `<device>.csv` estimates written by `disagg`.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long)]
    pub max_span: Option<usize>,
}

/// Resolved run settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: Option<ConfigFile>,
    pub out_dir: PathBuf,
    pub folds: Option<usize>,
    pub pipeline: PipelineConfig,
}

fn resolve_enum<T: ValueEnum>(
    cli: Option<T>,
    file: Option<&ConfigFile>,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = cli {
        return Ok(v);
    }
    match file.map(|f| f.get::<String>(key)).transpose()?.flatten() {
        Some(s) => T::from_str(&s, true)
            .map_err(|_| Error::Usage(format!("invalid `{key}` in config: `{s}`"))),
        None => Ok(default),
    }
}

impl Common {
    pub fn settings(&self) -> Result<Settings> {
        let config = self.config.as_deref().map(ConfigFile::load).transpose()?;
        let file = config.as_ref();
        let defaults = GibbsConfig::default();
        let allow_negative =
            self.allow_negative_coeffs || resolve(None, file, "allow-negative-coeffs", false)?;
        let h_update = match resolve_enum(self.h_update, file, "h-update", HUpdateArg::Aggregated)?
        {
            HUpdateArg::Aggregated => HUpdateMode::Aggregated,
            HUpdateArg::PerSample => HUpdateMode::PerSample,
        };
        let placement =
            match resolve_enum(self.placement, file, "placement", PlacementArg::Observed)? {
                PlacementArg::Observed => PlacementMode::Observed,
                PlacementArg::All => PlacementMode::All,
            };
        let gibbs = GibbsConfig {
            samples: resolve(self.gibbs_samples, file, "gibbs-samples", defaults.samples)?,
            burn_in: resolve(self.burn_in, file, "burn-in", defaults.burn_in)?,
            seed: resolve(self.seed, file, "seed", 0)?,
            nonneg: !allow_negative,
            em_iters: resolve(self.em_iters, file, "em-iters", defaults.em_iters)?,
            em_tol: resolve(None, file, "em-tol", defaults.em_tol)?,
            h_update,
        };
        gibbs.validate()?;
        let folds: Option<usize> = match self.folds {
            Some(k) => Some(k),
            None => file.map(|f| f.get("folds")).transpose()?.flatten(),
        };
        if folds.is_some_and(|k| k < 2) {
            return Err(Error::Usage("--folds must be at least 2".into()));
        }
        let out_dir = resolve(self.out_dir.clone(), file, "out-dir", PathBuf::from("."))?;
        Ok(Settings {
            config,
            out_dir,
            folds,
            pipeline: PipelineConfig {
                gibbs,
                shapes: ShapeOptions {
                    placement,
                    ..ShapeOptions::default()
                },
                ..PipelineConfig::default()
            },
        })
    }
}

impl Settings {
    fn file(&self) -> Option<&ConfigFile> {
        self.config.as_ref()
    }

    fn with_max_span(mut self, cli: Option<usize>) -> Result<Self> {
        let max_span = resolve(cli, self.file(), "max-span", DEFAULT_MAX_SPAN)?;
        if max_span == 0 {
            return Err(Error::Usage("--max-span must be at least 1".into()));
        }
        self.pipeline.shapes.max_span = max_span;
        Ok(self)
    }

    fn with_init(mut self, cli: Option<InitArg>) -> Result<Self> {
        self.pipeline.init = match resolve_enum(cli, self.file(), "init", InitArg::Shape)? {
            InitArg::Shape => InitStrategy::ShapeFeatures,
            InitArg::Random => InitStrategy::Random {
                atoms: DEFAULT_RANDOM_ATOMS,
            },
            InitArg::RandomMatched => InitStrategy::RandomMatched,
        };
        Ok(self)
    }

    fn intervals(&self, cli: Option<usize>) -> Result<usize> {
        let n = resolve(cli, self.file(), "intervals", DEFAULT_INTERVALS)?;
        if n == 0 {
            return Err(Error::Usage("--intervals must be at least 1".into()));
        }
        Ok(n)
    }
}

/// Day selection for one command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Train,
    Test,
}

impl DataArgs {
    fn dir(&self, s: &Settings) -> Result<PathBuf> {
        resolve(
            self.data_dir.clone(),
            s.file(),
            "data-dir",
            s.out_dir.clone(),
        )
    }

    fn devices(&self, s: &Settings) -> Result<Vec<Device>> {
        let labels: Vec<String> = match &self.devices {
            Some(v) => v.clone(),
            None => match s
                .file()
                .map(|f| f.get::<String>("devices"))
                .transpose()?
                .flatten()
            {
                Some(list) => list.split(',').map(|d| d.trim().to_string()).collect(),
                None => return Ok(Device::ALL.to_vec()),
            },
        };
        let mut out = Vec::new();
        for l in labels {
            let d: Device = l
                .parse()
                .map_err(|_| Error::Usage(format!("unknown device `{l}`")))?;
            if out.contains(&d) {
                return Err(Error::Usage(format!("device `{l}` listed twice")));
            }
            out.push(d);
        }
        if out.is_empty() {
            return Err(Error::Usage("no devices selected".into()));
        }
        Ok(out)
    }

    /// Days of `part`, or every day when no fold is selected.
    fn days(&self, s: &Settings, total: usize, part: Part) -> Result<Vec<usize>> {
        let Some(f) = self.fold else {
            return Ok((0..total).collect());
        };
        let k = s.folds.unwrap_or(DEFAULT_FOLDS);
        if f >= k {
            return Err(Error::Usage(format!(
                "--fold {f} is out of range for {k} folds"
            )));
        }
        let groups = fold_assignment(total, k, s.pipeline.gibbs.seed)?;
        Ok(match part {
            Part::Test => groups[f].clone(),
            Part::Train => complement(total, &groups[f]),
        })
    }
}

fn matrix_path(dir: &Path, device: Device) -> PathBuf {
    dir.join(format!("{}.csv", device.label()))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Missing(format!(
            "{what}: {} not found",
            path.display()
        )))
    }
}

fn load_device_matrices(dir: &Path, devices: &[Device]) -> Result<Vec<ConsumptionMatrix>> {
    devices
        .iter()
        .map(|&d| {
            let path = matrix_path(dir, d);
            require(&path, &format!("no data for device {d}"))?;
            let m = read_consumption(&path)?;
            if m.device != d {
                return Err(Error::schema(
                    &path,
                    format!("holds device {} instead of {d}", m.device),
                ));
            }
            Ok(m)
        })
        .collect()
}

fn load_aggregate(dir: &Path) -> Result<AggregateMatrix> {
    let path = dir.join(AGGREGATE_FILE);
    require(&path, "no aggregate data")?;
    read_aggregate(&path)
}

fn check_days(path: &Path, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::schema(
            path,
            format!("expected {expected} days, found {found}"),
        ))
    }
}

fn write_data_dir(
    dir: &Path,
    matrices: &[ConsumptionMatrix],
    y_bar: &AggregateMatrix,
) -> Result<()> {
    for m in matrices {
        write_matrix(&matrix_path(dir, m.device), m.device.label(), &m.values)?;
    }
    write_matrix(&dir.join(AGGREGATE_FILE), AGGREGATE_LABEL, &y_bar.values)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Ingest(a) => ingest(&a),
        Command::Shapes(a) => shapes(&a),
        Command::Train(a) => train(&a),
        Command::TrainAgg(a) => train_agg(&a),
        Command::Disagg(a) => disagg(&a),
        Command::Eval(a) => eval(&a),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let s = a.common.settings()?;
    let days = resolve(a.days, s.file(), "days", DEFAULT_SYNTH_DAYS)?;
    if days == 0 {
        return Err(Error::Usage("--days must be at least 1".into()));
    }
    let n = s.intervals(a.intervals)?;
    let (freq, dict) = match &a.events {
        Some(path) => {
            let events = read_events(path)?;
            if events.is_empty() {
                return Err(Error::Missing(format!("{}: no events", path.display())));
            }
            let span = events.iter().map(|e| e.day).max().unwrap_or(0) + 1;
            let freq = FrequencyModel::fit(&events, &Device::ALL, span, n)?;
            (freq, build_event_dictionary(&events))
        }
        None => (FrequencyModel::defaults(n)?, EventDictionary::builtin()),
    };
    let data = generate_days(days, &freq, &dict, s.pipeline.gibbs.seed)?;
    std::fs::create_dir_all(&s.out_dir).map_err(|e| Error::io(&s.out_dir, e))?;
    write_events(&s.out_dir.join(EVENTS_FILE), &data.events)?;
    write_data_dir(&s.out_dir, &data.matrices, &data.aggregate)?;
    let mut header = String::from("device,lambda");
    for i in 0..n {
        header.push_str(&format!(",cdf_{i}"));
    }
    let rows = freq.devices.iter().map(|f| {
        let mut row = format!("{},{}", f.device, f.lambda);
        for c in &f.start_cdf {
            row.push_str(&format!(",{c}"));
        }
        row
    });
    write_rows(&s.out_dir.join(FREQUENCY_FILE), &header, rows)?;
    println!("device\tlambda");
    for f in &freq.devices {
        println!("{}\t{:.4}", f.device, f.lambda);
    }
    record(
        "synth",
        &[
            ("days", &days),
            ("events", &data.events.len()),
            ("template_volume", &data.template_volume),
            ("clipped_volume", &data.clipped_volume),
        ],
    );
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let s = a.common.settings()?;
    let n = s.intervals(a.intervals)?;
    let mut events = read_events(&a.events)?;
    if events.is_empty() {
        return Err(Error::Missing(format!("{}: no events", a.events.display())));
    }
    let last = events.iter().map(|e| e.day).max().unwrap_or(0);
    let days = resolve(a.days, s.file(), "days", last + 1)?;
    if days == 0 {
        return Err(Error::Usage("--days must be at least 1".into()));
    }
    if last >= days {
        return Err(Error::Usage(format!(
            "events reach day {last} but --days is {days}"
        )));
    }
    let (mut clipped, mut clipped_volume) = (0usize, 0.0);
    for ev in &mut events {
        if let Some(v) = ev.clip_to_day(n) {
            clipped += 1;
            clipped_volume += v;
        }
    }
    let matrices = Device::ALL
        .iter()
        .map(|&d| events_to_matrix(&events, d, days, n))
        .collect::<hydrosep_core::Result<Vec<_>>>()?;
    let y_bar = aggregate(&matrices)?;
    write_data_dir(&s.out_dir, &matrices, &y_bar)?;
    record(
        "ingest",
        &[
            ("events", &events.len()),
            ("days", &days),
            ("clipped_events", &clipped),
            ("clipped_volume", &clipped_volume),
        ],
    );
    Ok(())
}

fn shapes(a: &ShapesArgs) -> Result<()> {
    let s = a.common.settings()?.with_max_span(a.max_span)?;
    let dir = a.data.dir(&s)?;
    let devices = a.data.devices(&s)?;
    let out = s.out_dir.join(SHAPES_DIR);
    let mut spans = Vec::new();
    for m in load_device_matrices(&dir, &devices)? {
        let days = a.data.days(&s, m.days(), Part::Train)?;
        let y = m.select_days(&days);
        let summary = discover(&y, &s.pipeline.shapes)?;
        let label = m.device.label();
        write_rows(
            &out.join(format!("{label}_patterns.csv")),
            "pattern_bits,count",
            summary
                .patterns
                .iter()
                .map(|(p, c)| format!("{},{c}", p.bits_string())),
        )?;
        let basis_rows = summary.smoothed.iter().enumerate().flat_map(|(k, h)| {
            h.support
                .iter()
                .map(move |&i| format!("{k},{i},{}", h.values[i]))
                .collect::<Vec<_>>()
        });
        write_rows(
            &out.join(format!("{label}_bases.csv")),
            "basis,interval,value",
            basis_rows,
        )?;
        let span: Vec<String> = summary.span.iter().map(|r| r.to_string()).collect();
        spans.push(format!("{label},{}", span.join(";")));
        record(
            "shapes",
            &[
                ("device", &label),
                ("span", &span.join(";")),
                ("patterns", &summary.patterns.len()),
                ("bases", &summary.smoothed.len()),
                ("atoms", &summary.dictionary.cols()),
            ],
        );
    }
    write_rows(&out.join("spans.csv"), "device,span", spans)
}

fn train(a: &TrainArgs) -> Result<()> {
    let s = a
        .common
        .settings()?
        .with_max_span(a.max_span)?
        .with_init(a.init)?;
    let dir = a.data.dir(&s)?;
    let devices = a.data.devices(&s)?;
    let all = load_device_matrices(&dir, &devices)?;
    let total = all[0].days();
    for m in &all {
        check_days(&matrix_path(&dir, m.device), total, m.days())?;
    }
    let days = a.data.days(&s, total, Part::Train)?;
    let matrices: Vec<ConsumptionMatrix> = all.iter().map(|m| m.select_days(&days)).collect();
    let trained = train_devices(&matrices, &s.pipeline)?;
    let mut entries = Vec::with_capacity(trained.len());
    for ((model, trace), y) in trained.into_iter().zip(&matrices) {
        for (k, it) in trace.iterations.iter().enumerate() {
            record(
                "em",
                &[
                    ("device", &model.device),
                    ("iter", &(k + 1)),
                    ("q", &it.q),
                    ("reconstruction_error", &it.reconstruction_error),
                    ("b", &it.b),
                    ("alpha0", &it.alpha0),
                    ("beta0", &it.beta0),
                ],
            );
        }
        record(
            "train",
            &[
                ("device", &model.device),
                ("atoms", &model.dictionary.cols()),
                ("converged", &trace.converged),
            ],
        );
        entries.push((model, infer_span(y, s.pipeline.shapes.max_span).ok()));
    }
    let path = a
        .model
        .clone()
        .unwrap_or_else(|| s.out_dir.join(MODEL_FILE));
    ModelFile::new(&entries).save(&path)
}

fn load_model(path: &Path) -> Result<(ModelFile, Vec<DeviceModel>)> {
    require(path, "no model file")?;
    let file = ModelFile::load(path)?;
    let models = file.device_models(path)?;
    if models.is_empty() {
        return Err(Error::Missing(format!(
            "{}: no per-device models",
            path.display()
        )));
    }
    Ok((file, models))
}

fn train_agg(a: &TrainAggArgs) -> Result<()> {
    let s = a.common.settings()?;
    let dir = a.data.dir(&s)?;
    let path = a
        .model
        .clone()
        .unwrap_or_else(|| s.out_dir.join(MODEL_FILE));
    let (mut file, models) = load_model(&path)?;
    let agg_path = dir.join(AGGREGATE_FILE);
    let y_all = load_aggregate(&dir)?;
    let days = a.data.days(&s, y_all.days(), Part::Train)?;
    let y_bar = y_all.select_days(&days);
    let (compound, trace) = train_compound(&models, &y_bar, &s.pipeline.gibbs)?;
    for (k, it) in trace.iterations.iter().enumerate() {
        record(
            "em_agg",
            &[
                ("iter", &(k + 1)),
                ("q", &it.q),
                ("reconstruction_error", &it.reconstruction_error),
                ("alpha0", &it.alpha0),
                ("beta0", &it.beta0),
            ],
        );
    }
    let devices: Vec<Device> = models.iter().map(|m| m.device).collect();
    if devices.iter().all(|&d| matrix_path(&dir, d).is_file()) {
        let truth: Vec<Matrix> = load_device_matrices(&dir, &devices)?
            .iter()
            .map(|m| {
                check_days(&agg_path, m.days(), y_all.days())?;
                Ok(m.values.select_columns(&days))
            })
            .collect::<Result<_>>()?;
        let cfg = disagg_config(&s.pipeline.gibbs);
        let before = disaggregate(&y_bar, &build_aggregate(&models)?, &cfg)?;
        let after = disaggregate(&y_bar, &compound, &cfg)?;
        let nde = |est: &[Matrix]| hydrosep_core::metrics::nde(&truth, est).map(|n| n.value);
        record(
            "train_agg",
            &[
                ("nde_before", &nde(&before.estimates)?),
                ("nde_after", &nde(&after.estimates)?),
            ],
        );
    }
    file.set_compound(&compound);
    file.save(a.output.as_deref().unwrap_or(&path))
}

fn disagg(a: &DisaggArgs) -> Result<()> {
    let s = a.common.settings()?;
    let dir = a.data.dir(&s)?;
    let path = a
        .model
        .clone()
        .unwrap_or_else(|| s.out_dir.join(MODEL_FILE));
    let (file, _) = load_model(&path)?;
    let Some(compound) = file.compound_model(&path)? else {
        return Err(Error::Missing(format!(
            "{}: no compound model; run train-agg first",
            path.display()
        )));
    };
    let y_all = load_aggregate(&dir)?;
    if y_all.intervals() != compound.intervals() {
        return Err(Error::schema(
            dir.join(AGGREGATE_FILE),
            format!(
                "data has N={} but the model has N={}",
                y_all.intervals(),
                compound.intervals()
            ),
        ));
    }
    let days = a.data.days(&s, y_all.days(), Part::Test)?;
    let result = disaggregate(
        &y_all.select_days(&days),
        &compound,
        &disagg_config(&s.pipeline.gibbs),
    )?;
    let est_dir = s.out_dir.join(ESTIMATES_DIR);
    for (d, m) in result.devices.iter().zip(&result.estimates) {
        write_matrix(&matrix_path(&est_dir, *d), d.label(), m)?;
    }
    let rows = days
        .iter()
        .zip(&result.log_predictive_density)
        .map(|(p, l)| format!("{p},{l}"));
    write_rows(&s.out_dir.join(SCORES_FILE), "day,log_pred_density", rows)?;
    record(
        "disagg",
        &[
            ("days", &days.len()),
            ("samples_used", &result.samples_used),
        ],
    );
    Ok(())
}

fn report_rows(report: &EvalReport) -> Vec<(String, String, f64)> {
    let mut rows = vec![
        ("accuracy".to_string(), "all".to_string(), report.accuracy),
        ("nde".to_string(), "all".to_string(), report.nde),
        ("avg_f".to_string(), "all".to_string(), report.avg_f),
        (
            "nde_skipped".to_string(),
            "all".to_string(),
            report.nde_skipped as f64,
        ),
    ];
    for (d, sc) in &report.per_device {
        rows.push(("precision".into(), d.label().into(), sc.precision));
        rows.push(("recall".into(), d.label().into(), sc.recall));
        rows.push(("f_measure".into(), d.label().into(), sc.f_measure));
        rows.push(("zero_cases".into(), d.label().into(), sc.zero_cases as f64));
    }
    rows
}

fn eval(a: &EvalArgs) -> Result<()> {
    let s = a
        .common
        .settings()?
        .with_max_span(a.max_span)?
        .with_init(a.init)?;
    let dir = a.data.dir(&s)?;
    let devices = a.data.devices(&s)?;
    let y_all = load_aggregate(&dir)?;
    let out = s.out_dir.join(EVAL_FILE);
    match (&a.estimates, s.folds) {
        (Some(est_dir), _) => {
            let days = a.data.days(&s, y_all.days(), Part::Test)?;
            let present: Vec<Device> = devices
                .into_iter()
                .filter(|&d| matrix_path(est_dir, d).is_file())
                .collect();
            if present.is_empty() {
                return Err(Error::Missing(format!(
                    "{}: no estimates",
                    est_dir.display()
                )));
            }
            let truth: Vec<Matrix> = load_device_matrices(&dir, &present)?
                .iter()
                .map(|m| m.values.select_columns(&days))
                .collect();
            let est: Vec<Matrix> = load_device_matrices(est_dir, &present)?
                .into_iter()
                .map(|m| m.values)
                .collect();
            let report =
                EvalReport::evaluate(&present, &truth, &est, &y_all.values.select_columns(&days))?;
            let rows = report_rows(&report);
            write_rows(
                &out,
                "metric,device,value",
                rows.iter().map(|(m, d, v)| format!("{m},{d},{v}")),
            )?;
            record(
                "eval",
                &[
                    ("accuracy", &report.accuracy),
                    ("nde", &report.nde),
                    ("avg_f", &report.avg_f),
                ],
            );
        }
        (None, Some(k)) => {
            if a.data.fold.is_some() {
                return Err(Error::Usage(
                    "--fold needs --estimates; cross-validation runs every fold".into(),
                ));
            }
            let matrices = load_device_matrices(&dir, &devices)?;
            for m in &matrices {
                check_days(&matrix_path(&dir, m.device), y_all.days(), m.days())?;
            }
            let reports = cross_validate(&matrices, &y_all, k, &s.pipeline)?;
            let per_fold: Vec<Vec<(String, String, f64)>> =
                reports.iter().map(report_rows).collect();
            let mut fold_rows = Vec::new();
            for (f, rows) in per_fold.iter().enumerate() {
                for (m, d, v) in rows {
                    fold_rows.push(format!("{f},{m},{d},{v}"));
                }
                record(
                    "fold",
                    &[
                        ("fold", &f),
                        ("accuracy", &reports[f].accuracy),
                        ("nde", &reports[f].nde),
                        ("avg_f", &reports[f].avg_f),
                    ],
                );
            }
            let mut rows = Vec::new();
            for (r, (m, d, _)) in per_fold[0].iter().enumerate() {
                let xs: Vec<f64> = per_fold.iter().map(|rows| rows[r].2).collect();
                let (mean, std) = mean_std(&xs);
                rows.push(format!("{m}_mean,{d},{mean}"));
                rows.push(format!("{m}_std,{d},{std}"));
            }
            write_rows(&out, "metric,device,value", rows)?;
            write_rows(
                &s.out_dir.join(EVAL_FOLDS_FILE),
                "fold,metric,device,value",
                fold_rows,
            )?;
        }
        (None, None) => {
            return Err(Error::Usage("eval needs --estimates or --folds".into()));
        }
    }
    Ok(())
}
