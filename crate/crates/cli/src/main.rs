//! `naswd`: command-line front end for the hyperspectral woody-breast pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use naswd_core::baselines::{mlp_baseline, PlsrPipeline};
use naswd_core::config::{task_table, Manifest, ModelKind, PipelineConfig};
use naswd_core::eval::{run_cv, tune_naswd};
use naswd_core::hsi::{calibrate_reflectance, read_cube, write_cube, DataType};
use naswd_core::maps::{class_percentages, encode_class_map, encode_hardness_map};
use naswd_core::nas::{SearchConfig, DEFAULT_BUDGET, DEFAULT_N_INIT};
use naswd_core::png_io::{self, PixelFormat};
use naswd_core::preproc::{extract_regions, fillet_mask, CranialEnd, Interval, Region, ThresholdRules};
use naswd_core::synth::{write_dataset, SyntheticSpec};
use naswd_core::widedeep::CubePrediction;
use naswd_core::{Activation, Error, Normalization, SpectraTable, Task, WideDeepModel};

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(name = "naswd", version, about = "Hyperspectral woody-breast assessment pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset (raw cubes, references, labels).
    Synth(SynthArgs),
    /// Dark/white reflectance calibration of one raw cube.
    Calibrate(CalibrateArgs),
    /// Fillet mask of a reflectance cube as a 0/255 PNG.
    Mask(MaskArgs),
    /// Calibrate a dataset and write its region mean spectra as CSV.
    Extract(ExtractArgs),
    /// Train one model on the whole table and save it.
    Train(TrainArgs),
    /// Bayesian-optimization search over wide-deep architectures.
    Tune(TuneArgs),
    /// k-fold cross-validation report for one model family.
    Evaluate(EvaluateArgs),
    /// Per-pixel class or hardness map of one cube.
    #[command(alias = "predict-map")]
    Map(MapArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Classify,
    Regress,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classify => Task::Classify3,
            TaskArg::Regress => Task::Regress1,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Naswd,
    Mlp,
    Plsr,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    None,
    Snv,
    Zscore,
}

#[derive(Clone, Copy, ValueEnum)]
enum EndArg {
    Low,
    High,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActArg {
    Relu,
    Sigmoid,
}

/// Flags shared by the stages that read a dataset or spectra table.
#[derive(Args, Clone)]
struct Common {
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory written by `synth` (cubes/, dark.hdr, white.hdr, labels.csv).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Spectra CSV written by `extract`; used instead of `--data`.
    #[arg(long)]
    spectra: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    normalization: Option<NormArg>,
    #[arg(long, value_enum)]
    cranial_end: Option<EndArg>,
    /// Regression rows with force above this (N) are dropped.
    #[arg(long)]
    outlier_ceiling: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct ArchFlags {
    /// JSON file holding an architecture spec (e.g. `best_spec.json` from `tune`).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    activation: Option<ActArg>,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per class as `normal,mild,severe`.
    #[arg(long, value_parser = parse_triple)]
    n_per_class: Option<[usize; 3]>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    coupling: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    region_noise_sd: Option<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    dark: PathBuf,
    #[arg(long)]
    white: PathBuf,
    /// Output header path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThresholdFlags {
    /// L* interval as `lo,hi`.
    #[arg(long, value_parser = parse_interval)]
    l_range: Option<Interval>,
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    a_range: Option<Interval>,
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    b_range: Option<Interval>,
}

impl ThresholdFlags {
    fn apply(&self, rules: &mut ThresholdRules) {
        if let Some(v) = self.l_range {
            rules.l = v;
        }
        if let Some(v) = self.a_range {
            rules.a = v;
        }
        if let Some(v) = self.b_range {
            rules.b = v;
        }
    }
}

#[derive(Args)]
struct MaskArgs {
    /// Reflectance cube header.
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdFlags,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    thresholds: ThresholdFlags,
    /// Regions to keep, comma separated (default: all four).
    #[arg(long, value_delimiter = ',')]
    regions: Option<Vec<String>>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum, default_value = "naswd")]
    model: ModelArg,
    #[command(flatten)]
    arch: ArchFlags,
    #[arg(long)]
    pls_components: Option<usize>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = DEFAULT_N_INIT)]
    n_init: usize,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum, default_value = "naswd")]
    model: ModelArg,
    #[command(flatten)]
    arch: ArchFlags,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    pls_components: Option<usize>,
}

#[derive(Args)]
struct MapArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Reflectance cube header.
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdFlags,
}

fn parse_list<T: std::str::FromStr, const N: usize>(s: &str) -> std::result::Result<[T; N], String> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("`{p}` is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    parts.try_into().map_err(|_| format!("expected {N} comma-separated values"))
}

fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    parse_list(s)
}

fn parse_interval(s: &str) -> std::result::Result<Interval, String> {
    let [lo, hi] = parse_list::<f64, 2>(s)?;
    Ok(Interval::new(lo, hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// `NASWD_THREADS` caps the data-parallel pool.
fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("NASWD_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Invalid(format!("NASWD_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(e.to_string()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Mask(a) => mask(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Tune(a) => tune(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Map(a) => map(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_text(dir: &Path, name: &str, text: &str, manifest: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    manifest.artifact(name);
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, manifest: &mut Manifest) -> Result<()> {
    write_text(dir, name, &(serde_json::to_string_pretty(value)? + "\n"), manifest)
}

fn base_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    path.map_or_else(|| Ok(PipelineConfig::default()), PipelineConfig::load)
}

fn resolve(common: &Common) -> Result<PipelineConfig> {
    let mut c = base_config(common.config.as_ref())?;
    if let Some(dir) = &common.data {
        c = c.with_dataset_dir(dir);
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(n) = common.normalization {
        c.normalization = match n {
            NormArg::None => Normalization::None,
            NormArg::Snv => Normalization::Snv,
            NormArg::Zscore => Normalization::Zscore,
        };
    }
    if let Some(e) = common.cranial_end {
        c.extract.cranial_end = match e {
            EndArg::Low => CranialEnd::Low,
            EndArg::High => CranialEnd::High,
        };
    }
    if let Some(v) = common.outlier_ceiling {
        c.outlier_ceiling_n = v;
    }
    if let Some(v) = common.max_epochs {
        c.train.max_epochs = v;
        c.train.patience = c.train.patience.min(v);
    }
    if let Some(v) = common.patience {
        c.train.patience = v;
    }
    Ok(c)
}

fn apply_arch(c: &mut PipelineConfig, flags: &ArchFlags) -> Result<()> {
    let mut arch = match &flags.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            serde_json::from_str(&text)?
        }
        None => c.arch(),
    };
    if let Some(a) = flags.activation {
        arch.activation = match a {
            ActArg::Relu => Activation::Relu,
            ActArg::Sigmoid => Activation::Sigmoid,
        };
    }
    if let Some(v) = flags.units {
        arch.units = v;
    }
    if let Some(v) = flags.layers {
        arch.n_layers = v;
    }
    if let Some(v) = flags.dropout {
        arch.dropout_rate = v;
    }
    if let Some(v) = flags.learning_rate {
        arch.learning_rate = v;
    }
    arch.validate()?;
    c.arch = Some(arch);
    Ok(())
}

fn model_kind(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::Naswd => ModelKind::Naswd,
        ModelArg::Mlp => ModelKind::Mlp,
        ModelArg::Plsr => ModelKind::Plsr,
    }
}

/// Spectra table from `--spectra`, or extracted from the dataset paths.
fn load_table(common: &Common, c: &PipelineConfig) -> Result<SpectraTable> {
    match &common.spectra {
        Some(p) => SpectraTable::read_csv(fs::File::open(p).map_err(|e| io_error(p, e))?),
        None => c.extract_table(),
    }
}

/// Rows for `task`, with the outlier-filter count reported on stderr.
fn rows_for(table: &SpectraTable, task: Task, c: &PipelineConfig) -> Result<SpectraTable> {
    let (t, removed) = task_table(table, task, c.outlier_ceiling_n)?;
    if removed > 0 {
        eprintln!("outlier filter removed {removed} rows above {} N", c.outlier_ceiling_n);
    }
    Ok(t)
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec {
        seed: a.seed,
        ..SyntheticSpec::default()
    };
    if let Some(n) = a.n_per_class {
        spec.n_per_class = n;
    }
    if let Some(v) = a.bands {
        spec.bands = v;
    }
    if let Some(v) = a.coupling {
        spec.coupling = v;
    }
    if let Some(v) = a.noise_sd {
        spec.noise_sd = v;
    }
    if let Some(v) = a.region_noise_sd {
        spec.region_noise_sd = v;
    }
    create_dir(&a.out)?;
    let files = write_dataset(&spec, &a.out)?;
    let mut m = Manifest::new("synth").seed("seed", spec.seed).with_config(&spec)?;
    for p in [&files.dark, &files.white, &files.labels, &files.spec].into_iter().chain(&files.cubes) {
        m.artifact(p.clone());
    }
    m.write(&a.out)?;
    println!("wrote {} samples to {}", spec.total(), a.out.display());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let raw = read_cube(&a.raw)?;
    let cal = calibrate_reflectance(&raw, &read_cube(&a.dark)?, &read_cube(&a.white)?)?;
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(dir)?;
    write_cube(&cal.cube.clone().with_storage(DataType::F32), &a.out)?;
    let mut m = Manifest::new("calibrate");
    m.artifact(a.out.file_name().map(PathBuf::from).unwrap_or_default());
    m.write(dir)?;
    if cal.dead_pixels > 0 {
        eprintln!("{} dead reference elements set to 0", cal.dead_pixels);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn mask(a: MaskArgs) -> Result<()> {
    let mut c = base_config(a.config.as_ref())?;
    a.thresholds.apply(&mut c.extract.rules);
    let cube = read_cube(&a.cube)?;
    let mask = fillet_mask(&cube, &c.extract)?;
    create_dir(&a.out)?;
    let path = a.out.join("mask.png");
    png_io::write(&path, mask.samples, mask.lines, PixelFormat::Gray8, &mask.to_gray8())?;
    let mut m = Manifest::new("mask").with_config(&c.extract)?;
    m.artifact("mask.png");
    m.write(&a.out)?;
    println!("{} of {} pixels in mask", mask.count(), mask.bits.len());
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let mut c = resolve(&a.common)?;
    a.thresholds.apply(&mut c.extract.rules);
    let mut table = c.extract_table()?;
    if let Some(names) = &a.regions {
        let keep: Vec<Region> = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
        table = SpectraTable::new(table.into_rows().into_iter().filter(|r| keep.contains(&r.region)).collect())?;
    }
    create_dir(&a.common.out)?;
    let path = a.common.out.join("spectra.csv");
    table.write_csv(fs::File::create(&path).map_err(|e| io_error(&path, e))?)?;
    let mut m = Manifest::new("extract").with_config(&c)?;
    m.artifact("spectra.csv");
    m.write(&a.common.out)?;
    println!("wrote {} spectra", table.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut c = resolve(&a.common)?;
    c.task = a.task.into();
    c.model = model_kind(a.model);
    if let Some(k) = a.pls_components {
        c.pls_components = k;
    }
    apply_arch(&mut c, &a.arch)?;
    c.validate()?;
    let table = rows_for(&load_table(&a.common, &c)?, c.task, &c)?;
    let out = &a.common.out;
    create_dir(out)?;
    let mut m = Manifest::new("train").seed("seed", c.seed).with_config(&c)?;
    let train = naswd_core::TrainConfig {
        seed: c.seed,
        loss: c.task.loss(),
        ..c.train
    };
    let arch = c.arch();
    match c.model {
        ModelKind::Plsr => {
            if c.task != Task::Regress1 {
                return Err(Error::Invalid("PLSR is a regression baseline; use --task regress".into()));
            }
            let p = PlsrPipeline::fit(&table, c.normalization, c.pls_components)?;
            write_json(out, "plsr.json", &p, &mut m)?;
        }
        ModelKind::Naswd | ModelKind::Mlp => {
            let (model, history) = if c.model == ModelKind::Mlp {
                mlp_baseline(&arch, &table, c.task, c.normalization, &train)?
            } else {
                let mut model = WideDeepModel::build(&arch, table.bands(), c.task, c.seed)?.with_normalization(c.normalization);
                let h = model.train_joint(&table, &arch.train_config(&train))?;
                (model, h)
            };
            model.save(out.join("model.json"), Some(&arch.train_config(&train)))?;
            m.artifact("model.json");
            write_json(out, "history.json", &history, &mut m)?;
            println!(
                "trained {} epochs, best validation loss {:.6} at epoch {}",
                history.epochs_run(),
                history.best_val_loss,
                history.best_epoch
            );
        }
    }
    m.write(out)?;
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let search = SearchConfig {
        budget: a.budget,
        n_init: a.n_init,
        seed: a.common.seed.unwrap_or(0),
    };
    search.validate()?;
    let mut c = resolve(&a.common)?;
    c.task = a.task.into();
    c.budget = a.budget;
    c.n_init = a.n_init;
    if let Some(k) = a.k {
        c.k = k;
    }
    c.validate()?;
    let table = rows_for(&load_table(&a.common, &c)?, c.task, &c)?;
    let result = tune_naswd(c.task, &table, &c.cv(), &c.search())?;
    let out = &a.common.out;
    create_dir(out)?;
    let mut m = Manifest::new("tune").seed("seed", c.seed).with_config(&c)?;
    write_text(out, "trials.jsonl", &result.trial_log()?, &mut m)?;
    write_text(out, "timings.csv", &result.timings(), &mut m)?;
    write_json(out, "best_spec.json", &result.best.spec, &mut m)?;
    m.write(out)?;
    println!("best objective {:.6} at trial {}", result.best.score(), result.best.trial);
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut c = resolve(&a.common)?;
    c.task = a.task.into();
    c.model = model_kind(a.model);
    if let Some(k) = a.k {
        c.k = k;
    }
    if let Some(k) = a.pls_components {
        c.pls_components = k;
    }
    apply_arch(&mut c, &a.arch)?;
    c.validate()?;
    let table = rows_for(&load_table(&a.common, &c)?, c.task, &c)?;
    let report = run_cv(&c.family(c.arch()), c.task, &table, &c.cv())?;
    let out = &a.common.out;
    create_dir(out)?;
    let mut m = Manifest::new("evaluate").seed("seed", c.seed).with_config(&c)?;
    write_text(out, "eval_report.json", &(report.to_json()? + "\n"), &mut m)?;
    m.write(out)?;
    if let Some(cls) = &report.classification {
        let x = &cls.metrics;
        println!("accuracy {:.4} (95% CI {:.4}-{:.4}), F1 {:.4}", x.mean_fold_accuracy, x.ci_low, x.ci_high, x.f1);
    }
    if let Some(r) = &report.regression {
        println!("r {:.4}, R2 {:.4}, RMSE {:.4} N", r.pooled.r, r.pooled.r2, r.pooled.rmse);
    }
    Ok(())
}

fn map(a: MapArgs) -> Result<()> {
    let mut c = base_config(a.config.as_ref())?;
    a.thresholds.apply(&mut c.extract.rules);
    let model = WideDeepModel::load(&a.model)?;
    let cube = read_cube(&a.cube)?;
    let ex = extract_regions(&cube, &c.extract)?;
    create_dir(&a.out)?;
    let mut m = Manifest::new("map").with_config(&c.extract)?;
    let pie = match model.predict_cube(&cube, &ex.mask)? {
        CubePrediction::Classes(map) => {
            write_bytes(&a.out, "class_map.png", &encode_class_map(&map)?, &mut m)?;
            class_percentages(&map)?
        }
        CubePrediction::Forces(map) => {
            let (bytes, pie) = encode_hardness_map(&map)?;
            write_bytes(&a.out, "hardness_map.png", &bytes, &mut m)?;
            pie
        }
    };
    write_json(&a.out, "percentages.json", &pie, &mut m)?;
    m.write(&a.out)?;
    for (name, pct) in pie.categories.iter().zip(&pie.percent) {
        println!("{name}: {pct:.1}%");
    }
    Ok(())
}

fn write_bytes(dir: &Path, name: &str, bytes: &[u8], manifest: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
    manifest.artifact(name);
    Ok(())
}
