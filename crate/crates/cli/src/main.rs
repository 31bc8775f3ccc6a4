use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use degran::dataset::{
    gen_synthetic, load_csv, normalize_zscore, Dataset, NormalizationParams, SyntheticSpec,
};
use degran::error::{Error, ErrorClass, Result};
use degran::experiment::{
    aggregate, append_cells, existing_keys, plan_experiment, plot_error_bars,
    plot_fuzzifier_trace, plot_membership_grid, plot_pso_history, pso_seed, read_cells,
    run_planned, CellTask, DatasetRef, ExperimentConfig, ReportFormat,
};
use degran::fcm::FcmConfig;
use degran::pipeline::{
    baseline_fit, baseline_score, evaluate_refined, train_refined, BaselineModel, RefinedModel,
};
use degran::pso::PsoConfig;

#[derive(Parser)]
#[command(
    name = "degran",
    version,
    about = "Granulation/degranulation with FCM and a swarm-tuned fuzzification factor vector"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the stock synthetic blob dataset as CSV
    GenSynthetic(GenSyntheticArgs),
    /// Fit the scalar-fuzzifier baseline and save a model
    FitFcm(FitFcmArgs),
    /// Fit the vector-fuzzifier pipeline and save a model
    Refine(RefineArgs),
    /// Print the reconstruction error of a saved model on a dataset
    Evaluate(EvaluateArgs),
    /// Run the cross-validated sweep, appending cells to an NDJSON file
    Sweep(SweepArgs),
    /// Aggregate an NDJSON results file into a report
    Report(ReportArgs),
    /// Emit plot-ready TSV data from models or results
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV file
    #[arg(long)]
    data: PathBuf,
    /// Treat the first line as a header of feature names
    #[arg(long)]
    has_header: bool,
    /// Discard the trailing (label) column
    #[arg(long)]
    drop_last_column: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_csv(&self.data, self.has_header, self.drop_last_column)
    }
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long, env = "DEGRAN_SEED", default_value_t = 0)]
    seed: u64,
    /// Blob standard deviation
    #[arg(long, default_value_t = 0.25)]
    std: f64,
    #[arg(long, default_value_t = 50)]
    points_per_blob: usize,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitFcmArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of clusters
    #[arg(long)]
    clusters: usize,
    /// Fuzzification factor
    #[arg(long, default_value_t = 2.0)]
    m0: f64,
    #[arg(long, env = "DEGRAN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    /// Skip z-score normalization
    #[arg(long)]
    no_normalize: bool,
    /// Model output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    #[command(flatten)]
    fit: FitFcmArgs,
    #[arg(long, default_value_t = 75)]
    pso_particles: usize,
    /// Swarm iterations; 0 keeps the uniform vector
    #[arg(long, default_value_t = 500)]
    pso_iters: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model file written by fit-fcm or refine
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    has_header: bool,
    #[arg(long)]
    drop_last_column: bool,
    /// Sweep the stock synthetic dataset
    #[arg(long)]
    synthetic: bool,
    /// Comma-separated cluster counts, e.g. 2,3,4
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Master seed (DEGRAN_SEED applies when neither flag nor config sets one)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pso_particles: Option<usize>,
    #[arg(long)]
    pso_iters: Option<usize>,
    /// Worker threads; 1 runs inline, 0 uses every core
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// NDJSON results file; existing cells are kept and skipped
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// NDJSON results file
    #[arg(long = "in")]
    input: PathBuf,
    /// csv, json, or markdown
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotDataArgs {
    /// pso-history, fuzzifier-trace, membership-grid, or error-bars
    #[arg(long)]
    kind: String,
    /// Refined model file (pso-history, fuzzifier-trace, membership-grid)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset for membership-grid
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    has_header: bool,
    #[arg(long)]
    drop_last_column: bool,
    #[arg(long, default_value_t = 50)]
    resolution: usize,
    /// NDJSON results file (error-bars)
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Saved model: the fitted artifacts plus the normalization applied to the
/// training data, so evaluation can transform new data identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelFile {
    Baseline {
        normalization: Option<NormalizationParams>,
        model: BaselineModel,
    },
    Refined {
        normalization: Option<NormalizationParams>,
        model: RefinedModel,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
        Command::FitFcm(args) => cmd_fit_fcm(args),
        Command::Refine(args) => cmd_refine(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
        Command::PlotData(args) => cmd_plot_data(args),
    }
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    std::fs::write(&tmp, content).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn dataset_to_csv(data: &Dataset) -> String {
    let mut s = String::new();
    for row in data.rows().rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

fn model_json(file: &ModelFile) -> Result<String> {
    let mut s = serde_json::to_string_pretty(file).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn load_model(path: &Path) -> Result<ModelFile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn prepared_input(
    raw: Dataset,
    no_normalize: bool,
) -> Result<(Dataset, Option<NormalizationParams>)> {
    if no_normalize {
        Ok((raw, None))
    } else {
        let (data, params) = normalize_zscore(&raw)?;
        Ok((data, Some(params)))
    }
}

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        std: args.std,
        points_per_blob: args.points_per_blob,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let data = gen_synthetic(&spec)?;
    emit(&args.out, &dataset_to_csv(&data))
}

fn cmd_fit_fcm(args: FitFcmArgs) -> Result<()> {
    let raw = args.data.load()?;
    let (data, normalization) = prepared_input(raw, args.no_normalize)?;
    let cfg = FcmConfig {
        c: args.clusters,
        m: args.m0,
        tol: args.tol,
        max_iter: args.max_iter,
        seed: args.seed,
    };
    let model = baseline_fit(&data, &cfg)?;
    eprintln!(
        "fit {} rows into {} clusters (m0 = {}): train R_e = {}",
        data.n_rows(),
        cfg.c,
        cfg.m,
        model.train_error
    );
    emit(&args.out, &model_json(&ModelFile::Baseline { normalization, model })?)
}

fn cmd_refine(args: RefineArgs) -> Result<()> {
    let raw = args.fit.data.load()?;
    let (data, normalization) = prepared_input(raw, args.fit.no_normalize)?;
    let fcm_cfg = FcmConfig {
        c: args.fit.clusters,
        m: args.fit.m0,
        tol: args.fit.tol,
        max_iter: args.fit.max_iter,
        seed: args.fit.seed,
    };
    let mut pso_cfg = PsoConfig::for_dim(args.fit.clusters);
    pso_cfg.particles = args.pso_particles;
    pso_cfg.max_iter = args.pso_iters;
    pso_cfg.seed = pso_seed(args.fit.seed, data.source_id(), args.fit.clusters, 0, 0, 0);
    let model = train_refined(&data, &fcm_cfg, &pso_cfg)?;
    eprintln!(
        "refined {} clusters over {} swarm iterations: train R_e = {}, m* = {:?}",
        fcm_cfg.c,
        model.pso.iterations_run,
        model.train_error,
        model.fuzzifiers.values()
    );
    emit(&args.fit.out, &model_json(&ModelFile::Refined { normalization, model })?)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = load_model(&args.model)?;
    let raw = args.data.load()?;
    let error = match &file {
        ModelFile::Baseline {
            normalization,
            model,
        } => {
            let data = apply_normalization(normalization, raw)?;
            baseline_score(model, &data)?
        }
        ModelFile::Refined {
            normalization,
            model,
        } => {
            let data = apply_normalization(normalization, raw)?;
            evaluate_refined(model, &data)?
        }
    };
    println!("{error}");
    Ok(())
}

fn apply_normalization(params: &Option<NormalizationParams>, raw: Dataset) -> Result<Dataset> {
    match params {
        Some(p) => p.apply(&raw),
        None => Ok(raw),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        }
        None => {
            let dataset = sweep_dataset_from_flags(&args)?.ok_or_else(|| {
                Error::InvalidParam(
                    "sweep needs --config, --data, or --synthetic".into(),
                )
            })?;
            ExperimentConfig::new(dataset)
        }
    };
    if args.config.is_some() {
        if let Some(dataset) = sweep_dataset_from_flags(&args)? {
            cfg.dataset = dataset;
        }
    }
    if let Some(clusters) = &args.clusters {
        cfg.c_values = parse_cluster_list(clusters)?;
    }
    if let Some(folds) = args.folds {
        cfg.folds = folds;
    }
    if let Some(repeats) = args.repeats {
        cfg.repeats = repeats;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    } else if let Ok(env_seed) = std::env::var("DEGRAN_SEED") {
        cfg.master_seed = env_seed
            .parse()
            .map_err(|_| Error::InvalidParam(format!("DEGRAN_SEED = {env_seed:?}")))?;
    }
    if let Some(p) = args.pso_particles {
        cfg.pso.particles = p;
    }
    if let Some(i) = args.pso_iters {
        cfg.pso.max_iter = i;
    }

    let plan = plan_experiment(&cfg)?;
    let existing = if args.out.exists() {
        read_cells(&args.out)?
    } else {
        Vec::new()
    };
    let keys = existing_keys(&existing);
    let todo: Vec<CellTask> = plan
        .tasks
        .iter()
        .filter(|t| !keys.contains(&plan.key_for(&cfg, t)))
        .copied()
        .collect();
    eprintln!(
        "sweep over {}: {} cells planned, {} already recorded, running {}",
        plan.dataset_id,
        plan.tasks.len(),
        plan.tasks.len() - todo.len(),
        todo.len()
    );
    let cells = run_planned(&cfg, &plan, &todo, args.jobs)?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    append_cells(&args.out, &cells)?;
    eprintln!(
        "appended {} cells to {} ({} failed)",
        cells.len(),
        args.out.display(),
        failed
    );
    Ok(())
}

fn sweep_dataset_from_flags(args: &SweepArgs) -> Result<Option<DatasetRef>> {
    if args.synthetic && args.data.is_some() {
        return Err(Error::InvalidParam(
            "--synthetic and --data are mutually exclusive".into(),
        ));
    }
    if args.synthetic {
        return Ok(Some(DatasetRef::Synthetic {
            spec: SyntheticSpec::default(),
        }));
    }
    if let Some(path) = &args.data {
        return Ok(Some(DatasetRef::Csv {
            path: path.display().to_string(),
            has_header: args.has_header,
            drop_last_column: args.drop_last_column,
        }));
    }
    Ok(None)
}

fn parse_cluster_list(s: &str) -> Result<Vec<usize>> {
    let values: std::result::Result<Vec<usize>, _> =
        s.split(',').map(|p| p.trim().parse::<usize>()).collect();
    let values = values.map_err(|_| Error::InvalidParam(format!("cluster list {s:?}")))?;
    if values.is_empty() {
        return Err(Error::InvalidParam("empty cluster list".into()));
    }
    Ok(values)
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let cells = read_cells(&args.input)?;
    let table = aggregate(&cells)?;
    let format: ReportFormat = args.format.parse()?;
    let rendered = degran::experiment::emit_report(&table, format)?;
    emit(&args.out, &rendered)
}

fn cmd_plot_data(args: PlotDataArgs) -> Result<()> {
    let content = match args.kind.as_str() {
        "pso-history" => plot_pso_history(&require_refined(&args)?),
        "fuzzifier-trace" => plot_fuzzifier_trace(&require_refined(&args)?),
        "membership-grid" => {
            let path = args.model.as_ref().ok_or_else(|| {
                Error::InvalidParam("membership-grid needs --model".into())
            })?;
            let file = load_model(path)?;
            let (normalization, model) = match file {
                ModelFile::Refined {
                    normalization,
                    model,
                } => (normalization, model),
                ModelFile::Baseline { .. } => {
                    return Err(Error::InvalidParam(
                        "membership-grid needs a refined model".into(),
                    ))
                }
            };
            let data_path = args.data.as_ref().ok_or_else(|| {
                Error::InvalidParam("membership-grid needs --data".into())
            })?;
            let raw = load_csv(data_path, args.has_header, args.drop_last_column)?;
            let data = apply_normalization(&normalization, raw)?;
            plot_membership_grid(&model, &data, args.resolution)?
        }
        "error-bars" => {
            let input = args.input.as_ref().ok_or_else(|| {
                Error::InvalidParam("error-bars needs --in <results.ndjson>".into())
            })?;
            let cells = read_cells(input)?;
            plot_error_bars(&aggregate(&cells)?)
        }
        other => {
            return Err(Error::InvalidParam(format!(
                "unknown plot kind {other:?} (expected pso-history, fuzzifier-trace, membership-grid, or error-bars)"
            )))
        }
    };
    emit(&args.out, &content)
}

fn require_refined(args: &PlotDataArgs) -> Result<RefinedModel> {
    let path = args
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidParam(format!("{} needs --model", args.kind)))?;
    match load_model(path)? {
        ModelFile::Refined { model, .. } => Ok(model),
        ModelFile::Baseline { .. } => Err(Error::InvalidParam(format!(
            "{} needs a refined model",
            args.kind
        ))),
    }
}
