use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use oer_core::dataio::{write_dataset, LabelMap};
use oer_core::featselect::{rank_features, write_feature_report, BinStrategy};
use oer_core::model::BinModel;
use oer_core::oer::{log_spaced, sweep_lambda, write_threshold_table, Init};
use oer_core::pipeline::{self, write_atomic, Method, PipelineConfig, SolverMethod};
use oer_core::synth::{gen_example1, gen_example2};

#[derive(Parser)]
#[command(name = "oer", version, about = "Per-bin decision thresholds for score-based binary classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Fit the per-bin score model and write it as JSON.
    Fit(FitArgs),
    /// Score auxiliary features and write the selection report.
    Select(SelectArgs),
    /// Cross-validated ROC comparison of OER against the baselines.
    Roc(RocArgs),
    /// Write the threshold table of a lambda sweep.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    Example1,
    Example2,
}

#[derive(Args)]
struct SynthArgs {
    example: Example,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    EqualWidth,
    Quantile,
}

impl From<Strategy> for BinStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::EqualWidth => BinStrategy::EqualWidth,
            Strategy::Quantile => BinStrategy::Quantile,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Zero,
    ClosedForm,
    Grid,
}

/// Input file and column mapping.
#[derive(Args)]
struct InputArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    score_column: Option<String>,
    /// Auxiliary columns (repeatable); all other columns when omitted.
    #[arg(long = "aux-column")]
    aux_columns: Vec<String>,
    #[arg(long)]
    delimiter: Option<char>,
    /// Raw label values meaning +1 (repeatable).
    #[arg(long = "positive-label")]
    positive_labels: Vec<String>,
    /// Raw label values meaning -1 (repeatable).
    #[arg(long = "negative-label")]
    negative_labels: Vec<String>,
}

#[derive(Args)]
struct PartitionArgs {
    /// Feature to bin on (repeatable); the first auxiliary column by default.
    #[arg(long = "feature")]
    features: Vec<String>,
    /// Interior bins per feature (repeatable, or one value for all).
    #[arg(long = "bins")]
    bins: Vec<usize>,
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
    /// Fixed equal-width range per feature, as `lo,hi` (repeatable).
    #[arg(long = "range", value_parser = parse_range, allow_hyphen_values = true)]
    ranges: Vec<[f64; 2]>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    sigma_floor: Option<f64>,
    /// Pool each bin's two deviations (enables the closed form).
    #[arg(long)]
    equal_variance: bool,
}

#[derive(Args)]
struct SolverArgs {
    /// Always use gradient ascent, even for equal-variance models.
    #[arg(long)]
    gradient: bool,
    /// Fixed learning rate instead of the adaptive per-bin rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    stop_threshold: Option<f64>,
    #[arg(long)]
    clamp: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    lambda_points: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    partition: PartitionArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file to write.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    nbins: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
    #[arg(long)]
    sd_threshold: Option<f64>,
    #[arg(long)]
    prior_threshold: Option<f64>,
    /// Use `sqrt(sigma+ sigma-)` as the separation-difficulty denominator.
    #[arg(long)]
    geometric_sd: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "features.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct RocArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    partition: PartitionArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for curve tables and the summary; created when absent.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    partition: PartitionArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Previously fitted model; fitted from the input when omitted.
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Explicit lambda range; derived from the input scores when omitted.
    #[arg(long, requires = "lambda_max")]
    lambda_min: Option<f64>,
    #[arg(long, requires = "lambda_min")]
    lambda_max: Option<f64>,
    #[arg(long, default_value = "thresholds.csv")]
    out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok([lo, hi])
}

fn load_config(input: &InputArgs) -> Result<PipelineConfig> {
    let mut cfg = match &input.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            PipelineConfig::from_toml(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(p) = &input.input {
        cfg.input = Some(p.clone());
    }
    let schema = &mut cfg.schema;
    if let Some(c) = &input.label_column {
        schema.label_column = c.clone();
    }
    if let Some(c) = &input.score_column {
        schema.score_column = c.clone();
    }
    if !input.aux_columns.is_empty() {
        schema.aux_columns = input.aux_columns.clone();
    }
    if let Some(d) = input.delimiter {
        schema.delimiter = d;
    }
    if !input.positive_labels.is_empty() || !input.negative_labels.is_empty() {
        let pos: Vec<&str> = input.positive_labels.iter().map(String::as_str).collect();
        let neg: Vec<&str> = input.negative_labels.iter().map(String::as_str).collect();
        if pos.is_empty() || neg.is_empty() {
            bail!("--positive-label and --negative-label must be given together");
        }
        schema.labels = LabelMap::new(&pos, &neg);
    }
    Ok(cfg)
}

fn apply_partition(cfg: &mut PipelineConfig, p: &PartitionArgs) {
    if !p.features.is_empty() {
        cfg.partition.features = p.features.clone();
    }
    if !p.bins.is_empty() {
        cfg.partition.bins = p.bins.clone();
    }
    if let Some(s) = p.strategy {
        cfg.partition.strategy = s.into();
    }
    if !p.ranges.is_empty() {
        cfg.partition.ranges = Some(p.ranges.clone());
    }
}

fn apply_model(cfg: &mut PipelineConfig, m: &ModelArgs) {
    if let Some(c) = m.min_count {
        cfg.model.min_count = c;
    }
    if m.sigma_floor.is_some() {
        cfg.model.sigma_floor = m.sigma_floor;
    }
    if m.equal_variance {
        cfg.model.equal_variance = true;
    }
}

fn apply_solver(cfg: &mut PipelineConfig, s: &SolverArgs) {
    let solver = &mut cfg.solver;
    if s.gradient {
        solver.method = SolverMethod::Gradient;
    }
    if s.learning_rate.is_some() {
        solver.learning_rate = s.learning_rate;
    }
    if s.stop_threshold.is_some() {
        solver.stop_threshold = s.stop_threshold;
    }
    if s.clamp.is_some() {
        solver.clamp = s.clamp;
    }
    if let Some(m) = s.max_iterations {
        solver.max_iterations = m;
    }
    if let Some(i) = s.init {
        solver.init = match i {
            InitArg::Zero => Init::Zero,
            InitArg::ClosedForm => Init::ClosedForm,
            InitArg::Grid => Init::Grid,
        };
    }
    if let Some(n) = s.lambda_points {
        solver.lambda_points = n;
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let data = match args.example {
        Example::Example1 => gen_example1(args.n, args.seed)?,
        Example::Example2 => gen_example2(args.n, args.seed)?,
    };
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data)?;
    match &args.out {
        Some(path) => write_text(path, std::str::from_utf8(&buf)?)?,
        None => std::io::Write::write_all(&mut std::io::stdout().lock(), &buf)?,
    }
    log::info!("wrote {} samples", data.len());
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let mut cfg = load_config(&args.input)?;
    apply_partition(&mut cfg, &args.partition);
    apply_model(&mut cfg, &args.model);
    cfg.validate()?;
    let data = cfg.load_input()?;
    let model = pipeline::fit(&data, &cfg)?;
    write_text(&args.out, &model.to_json()?)?;
    println!("bin\trange\tn_pos\tn_neg\tp_pos\tp_neg\tmu_pos\tsigma_pos\tmu_neg\tsigma_neg");
    for (i, s) in model.stats.iter().enumerate() {
        println!(
            "{i}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            model.partition.describe_bin(i),
            s.n_pos,
            s.n_neg,
            s.p_pos,
            s.p_neg,
            s.mu_pos,
            s.sigma_pos,
            s.mu_neg,
            s.sigma_neg
        );
    }
    Ok(())
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let mut cfg = load_config(&args.input)?;
    apply_model(&mut cfg, &args.model);
    let sel = &mut cfg.selection;
    if let Some(n) = args.nbins {
        sel.nbins = n;
    }
    if let Some(s) = args.strategy {
        sel.strategy = s.into();
    }
    if let Some(t) = args.sd_threshold {
        sel.sd_threshold = t;
    }
    if let Some(t) = args.prior_threshold {
        sel.prior_threshold = t;
    }
    if args.geometric_sd {
        sel.sd_variant = oer_core::featselect::SdVariant::GeometricMean;
    }
    if cfg.selection.nbins < 2 {
        bail!("--nbins must be at least 2");
    }
    cfg.validate()?;
    let data = cfg.load_input()?;
    let reports = rank_features(&data, cfg.selection.nbins, cfg.selection.thresholds(), &cfg.selection.score_options(cfg.model))?;
    let mut buf = Vec::new();
    write_feature_report(&mut buf, &reports)?;
    write_text(&args.out, std::str::from_utf8(&buf)?)?;
    println!("feature\tsd_variance\tprior_variance\tstatus");
    for r in &reports {
        let status = if r.accepted { "accepted" } else { "rejected" };
        println!("{}\t{:.6}\t{:.6}\t{status}", r.name, r.sd_variance, r.prior_variance);
    }
    Ok(())
}

fn cmd_roc(args: &RocArgs) -> Result<()> {
    let mut cfg = load_config(&args.input)?;
    apply_partition(&mut cfg, &args.partition);
    apply_model(&mut cfg, &args.model);
    apply_solver(&mut cfg, &args.solver);
    if let Some(f) = args.folds {
        cfg.evaluation.folds = f;
    }
    if let Some(s) = args.seed {
        cfg.evaluation.seed = s;
    }
    if let Some(d) = &args.out_dir {
        cfg.output_dir = d.clone();
    }
    cfg.validate()?;
    let data = cfg.load_input()?;
    let report = pipeline::run_roc(&data, &cfg)?;
    pipeline::write_roc_outputs(&cfg.output_dir, &report)?;
    let s = &report.summary;
    println!("method\tauc_mean\tauc_std");
    for m in Method::ALL {
        let ms = s.method(m).expect("every method is summarized");
        println!("{}\t{:.5}\t{:.5}", m.name(), ms.auc_mean, ms.auc_std);
    }
    println!("auc_delta\t{:.5}", s.auc_delta);
    println!("relative_error_reduction\t{:.4}", s.relative_error_reduction);
    println!("sign_test\t{}/{} folds, p = {:.4}", s.sign_test_wins, s.folds, s.sign_test_p_value);
    if s.unconverged_curves > 0 {
        log::warn!("{} threshold curves did not fully converge", s.unconverged_curves);
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = load_config(&args.input)?;
    apply_partition(&mut cfg, &args.partition);
    apply_model(&mut cfg, &args.model);
    apply_solver(&mut cfg, &args.solver);
    cfg.validate()?;
    let data = if cfg.input.is_some() { Some(cfg.load_input()?) } else { None };
    let model = match (&args.model_file, &data) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
            BinModel::from_json(&text)?
        }
        (None, Some(d)) => pipeline::fit(d, &cfg)?,
        (None, None) => bail!("sweep needs --input or --model-file"),
    };
    let curves = match (args.lambda_min, args.lambda_max, &data) {
        (Some(lo), Some(hi), _) => {
            let grid = log_spaced(lo, hi, cfg.solver.lambda_points)?;
            let m = match cfg.solver.method {
                SolverMethod::Gradient => BinModel { equal_variance: false, ..model.clone() },
                SolverMethod::Auto => model.clone(),
            };
            sweep_lambda(&m, &grid, &cfg.solver.solver_config())?
        }
        (_, _, Some(d)) => {
            let scores: Vec<f64> = d.samples().iter().map(|s| s.score).collect();
            pipeline::sweep(&model, &scores, &cfg.solver)?
        }
        _ => bail!("sweep needs --input or --lambda-min/--lambda-max to choose the lambda grid"),
    };
    let mut buf = Vec::new();
    write_threshold_table(&mut buf, &model, &curves)?;
    write_text(&args.out, std::str::from_utf8(&buf)?)?;
    let unconverged = curves.iter().filter(|c| !c.all_converged()).count();
    println!("{} lambda values x {} bins written, {unconverged} curves not fully converged", curves.len(), model.num_bins());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Roc(a) => cmd_roc(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
