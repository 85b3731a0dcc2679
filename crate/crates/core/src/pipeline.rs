//! Configuration and orchestration of fit, sweep, selection and
//! cross-validated ROC evaluation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{make_equal_width_partition, make_equal_width_partition_with_ranges, make_quantile_partition, BinPartition};
use crate::dataio::{parse_dataset, split_dataset, Schema, ScoredDataset};
use crate::error::{OerError, Result};
use crate::featselect::{BinStrategy, ScoreOptions, SdVariant, SelectionThresholds};
use crate::model::{fit_bin_model, BinModel, FitOptions};
use crate::oer::{default_lambda_grid, sweep_lambda, Init, LearningRate, SolverConfig, ThresholdCurve};
use crate::roc::{auc, empirical_points, fixed_threshold_curve, offset_baseline_curve, rocch, upper_envelope};
use crate::roc::{write_curve, BaselineMode, OperatingPoint, RocCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub strategy: BinStrategy,
    /// Auxiliary features to bin on; empty means the first one.
    pub features: Vec<String>,
    /// Interior bins per feature; a single value applies to every feature.
    pub bins: Vec<usize>,
    /// Fixed `[lo, hi]` per feature for equal-width bins instead of the
    /// observed range.
    pub ranges: Option<Vec<[f64; 2]>>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { strategy: BinStrategy::EqualWidth, features: Vec::new(), bins: vec![8], ranges: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Closed form for equal-variance models, gradient ascent otherwise.
    #[default]
    Auto,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub method: SolverMethod,
    /// Fixed learning rate; `None` selects the adaptive per-bin rate.
    pub learning_rate: Option<f64>,
    pub stop_threshold: Option<f64>,
    pub clamp: Option<f64>,
    pub max_iterations: usize,
    pub init: Init,
    pub lambda_points: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let base = SolverConfig::default();
        Self {
            method: SolverMethod::Auto,
            learning_rate: None,
            stop_threshold: base.stop_threshold,
            clamp: base.clamp,
            max_iterations: base.max_iterations,
            init: base.init,
            lambda_points: 200,
        }
    }
}

impl SolverSettings {
    pub fn solver_config(&self) -> SolverConfig {
        let learning_rate = match self.learning_rate {
            Some(rate) => LearningRate::Fixed(rate),
            None => SolverConfig::default().learning_rate,
        };
        SolverConfig {
            learning_rate,
            stop_threshold: self.stop_threshold,
            max_iterations: self.max_iterations,
            clamp: self.clamp,
            init: self.init,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub nbins: usize,
    pub strategy: BinStrategy,
    pub sd_variant: SdVariant,
    pub sd_threshold: f64,
    pub prior_threshold: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        let t = SelectionThresholds::default();
        Self {
            nbins: 10,
            strategy: BinStrategy::Quantile,
            sd_variant: SdVariant::Product,
            sd_threshold: t.sd_variance,
            prior_threshold: t.prior_variance,
        }
    }
}

impl SelectionConfig {
    pub fn thresholds(&self) -> SelectionThresholds {
        SelectionThresholds { sd_variance: self.sd_threshold, prior_variance: self.prior_threshold }
    }

    pub fn score_options(&self, fit: FitOptions) -> ScoreOptions {
        ScoreOptions { strategy: self.strategy, sd_variant: self.sd_variant, fit }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub folds: usize,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { folds: 10, seed: 0 }
    }
}

/// Everything a command needs; read from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub schema: Schema,
    pub partition: PartitionConfig,
    pub model: FitOptions,
    pub solver: SolverSettings,
    pub selection: SelectionConfig,
    pub evaluation: EvaluationConfig,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: Schema::default(),
            partition: PartitionConfig::default(),
            model: FitOptions::default(),
            solver: SolverSettings::default(),
            selection: SelectionConfig::default(),
            evaluation: EvaluationConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OerError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.partition;
        if p.bins.is_empty() || p.bins.contains(&0) {
            return Err(OerError::Config("partition.bins must hold positive counts".into()));
        }
        if let Some(r) = &p.ranges {
            if r.iter().any(|[lo, hi]| !(lo < hi)) {
                return Err(OerError::Config("every partition range needs lo < hi".into()));
            }
            if p.strategy != BinStrategy::EqualWidth {
                return Err(OerError::Config("explicit ranges need the equal_width strategy".into()));
            }
        }
        if self.solver.lambda_points < 2 {
            return Err(OerError::Config("solver.lambda_points must be at least 2".into()));
        }
        if self.selection.nbins < 2 {
            return Err(OerError::Config("selection.nbins must be at least 2".into()));
        }
        self.solver.solver_config().validate()
    }

    /// Reads the configured input file.
    pub fn load_input(&self) -> Result<ScoredDataset> {
        let path = self.input.as_ref().ok_or_else(|| OerError::Config("no input file given".into()))?;
        let file = fs::File::open(path)?;
        parse_dataset(std::io::BufReader::new(file), &self.schema)
    }
}

/// Builds the configured partition from (training) data.
pub fn build_partition(data: &ScoredDataset, config: &PartitionConfig) -> Result<BinPartition> {
    let features: Vec<usize> = if config.features.is_empty() {
        vec![0]
    } else {
        config
            .features
            .iter()
            .map(|name| {
                data.feature_index(name)
                    .ok_or_else(|| OerError::Config(format!("unknown partition feature {name:?}")))
            })
            .collect::<Result<_>>()?
    };
    let bins: Vec<usize> = match config.bins.as_slice() {
        [b] => vec![*b; features.len()],
        many if many.len() == features.len() => many.to_vec(),
        _ => return Err(OerError::Config("partition.bins needs one entry or one per feature".into())),
    };
    match (config.strategy, &config.ranges) {
        (BinStrategy::EqualWidth, Some(ranges)) => {
            if ranges.len() != features.len() {
                return Err(OerError::Config("partition.ranges needs one entry per feature".into()));
            }
            let ranges: Vec<(f64, f64)> = ranges.iter().map(|r| (r[0], r[1])).collect();
            make_equal_width_partition_with_ranges(data.aux_names(), &features, &ranges, &bins)
        }
        (BinStrategy::EqualWidth, None) => make_equal_width_partition(data, &features, &bins),
        (BinStrategy::Quantile, _) => Ok(make_quantile_partition(data, &features, &bins)?.0),
    }
}

/// Fits the configured partition and model.
pub fn fit(data: &ScoredDataset, config: &PipelineConfig) -> Result<BinModel> {
    let partition = build_partition(data, &config.partition)?;
    fit_bin_model(data, &partition, &config.model)
}

/// Threshold curves over the default `lambda` grid of `model`.
pub fn sweep(model: &BinModel, scores: &[f64], settings: &SolverSettings) -> Result<Vec<ThresholdCurve>> {
    let grid = default_lambda_grid(model, scores, settings.lambda_points)?;
    let config = settings.solver_config();
    match settings.method {
        SolverMethod::Auto => sweep_lambda(model, &grid, &config),
        SolverMethod::Gradient => sweep_lambda(&BinModel { equal_variance: false, ..model.clone() }, &grid, &config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oer,
    Fixed,
    ConstantFpr,
    ConstantTpr,
    Rocch,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Oer, Method::Fixed, Method::ConstantFpr, Method::ConstantTpr, Method::Rocch];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oer => "oer",
            Method::Fixed => "fixed",
            Method::ConstantFpr => "constant_fpr",
            Method::ConstantTpr => "constant_tpr",
            Method::Rocch => "rocch",
        }
    }
}

/// Held-out curves of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Raw OER points, one per `lambda`.
    pub oer_points: Vec<OperatingPoint>,
    /// `(method, curve, auc)`; the OER entry is the monotone envelope.
    pub curves: Vec<(Method, RocCurve, f64)>,
    pub unconverged_curves: usize,
}

impl FoldResult {
    pub fn auc(&self, method: Method) -> f64 {
        self.curves.iter().find(|c| c.0 == method).map(|c| c.2).unwrap_or(f64::NAN)
    }
}

/// Fits on `train` and evaluates every method on `test`.
pub fn evaluate_fold(train: &ScoredDataset, test: &ScoredDataset, config: &PipelineConfig, fold: usize) -> Result<FoldResult> {
    let model = fit(train, config)?;
    let scores: Vec<f64> = train.samples().iter().map(|s| s.score).collect();
    let thresholds = sweep(&model, &scores, &config.solver)?;
    let unconverged_curves = thresholds.iter().filter(|c| !c.all_converged()).count();
    let oer_points = empirical_points(test, &model.partition, &thresholds)?;
    let oer = upper_envelope(&oer_points);
    let fixed = fixed_threshold_curve(test)?;
    let cfpr = offset_baseline_curve(test, &model, BaselineMode::ConstantFpr)?;
    let ctpr = offset_baseline_curve(test, &model, BaselineMode::ConstantTpr)?;
    let hull = rocch(&[cfpr.clone(), ctpr.clone()])?;
    let curves = [(Method::Oer, oer), (Method::Fixed, fixed), (Method::ConstantFpr, cfpr), (Method::ConstantTpr, ctpr), (Method::Rocch, hull)]
        .into_iter()
        .map(|(m, c)| {
            let a = auc(&c)?;
            Ok((m, c, a))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldResult { fold, oer_points, curves, unconverged_curves })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub auc_mean: f64,
    pub auc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub folds: usize,
    pub methods: Vec<MethodSummary>,
    /// Mean OER AUC minus mean fixed-threshold AUC.
    pub auc_delta: f64,
    /// `(delta of 1 - AUC) / (1 - fixed AUC)`, using fold means.
    pub relative_error_reduction: f64,
    /// Folds with OER AUC >= fixed AUC.
    pub sign_test_wins: usize,
    /// One-sided sign-test p-value over folds that are not tied.
    pub sign_test_p_value: f64,
    pub unconverged_curves: usize,
}

impl RocSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub folds: Vec<FoldResult>,
    pub summary: RocSummary,
}

fn ln_choose(n: usize, k: usize) -> f64 {
    statrs::function::factorial::ln_binomial(n as u64, k as u64)
}

/// `P(X >= wins)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p_value(wins: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    (wins..=n).map(|k| (ln_choose(n, k) + ln_half_n).exp()).sum::<f64>().min(1.0)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

pub fn summarize(folds: &[FoldResult]) -> RocSummary {
    let methods: Vec<MethodSummary> = Method::ALL
        .iter()
        .map(|&m| {
            let aucs: Vec<f64> = folds.iter().map(|f| f.auc(m)).collect();
            let (auc_mean, auc_std) = mean_std(&aucs);
            MethodSummary { method: m, auc_mean, auc_std }
        })
        .collect();
    let oer = methods[0].auc_mean;
    let fixed = methods[1].auc_mean;
    let wins = folds.iter().filter(|f| f.auc(Method::Oer) >= f.auc(Method::Fixed)).count();
    let strict = folds.iter().filter(|f| f.auc(Method::Oer) > f.auc(Method::Fixed)).count();
    let untied = folds.iter().filter(|f| f.auc(Method::Oer) != f.auc(Method::Fixed)).count();
    RocSummary {
        folds: folds.len(),
        auc_delta: oer - fixed,
        relative_error_reduction: if fixed < 1.0 { (oer - fixed) / (1.0 - fixed) } else { 0.0 },
        sign_test_wins: wins,
        sign_test_p_value: sign_test_p_value(strict, untied),
        unconverged_curves: folds.iter().map(|f| f.unconverged_curves).sum(),
        methods,
    }
}

/// Cross-validated comparison of OER with the fixed threshold, both offset
/// baselines and their convex hull. Folds run in parallel; results are
/// independent of scheduling.
pub fn run_roc(data: &ScoredDataset, config: &PipelineConfig) -> Result<RocReport> {
    config.validate()?;
    if config.evaluation.folds < 2 {
        return Err(OerError::Config("evaluation requires held-out data: folds must be at least 2".into()));
    }
    let splits = split_dataset(data, config.evaluation.folds, config.evaluation.seed)?;
    let folds = splits
        .par_iter()
        .enumerate()
        .map(|(i, (train, test))| evaluate_fold(train, test, config, i))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&folds);
    Ok(RocReport { folds, summary })
}

/// Writes `path` through a temporary file in the same directory and renames
/// it into place.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| OerError::Io(e.error))?;
    Ok(())
}

/// Writes per-fold curve tables plus `summary.csv` and `summary.json` into
/// `dir`, creating it if needed.
pub fn write_roc_outputs(dir: &Path, report: &RocReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    for fold in &report.folds {
        for (method, curve, _) in &fold.curves {
            let path = dir.join(format!("fold{}_{}.csv", fold.fold, method.name()));
            write_atomic(&path, |w| write_curve(w, curve))?;
        }
        let raw = RocCurve { points: fold.oer_points.clone(), anchored: false };
        write_atomic(&dir.join(format!("fold{}_oer_raw.csv", fold.fold)), |w| write_curve(w, &raw))?;
    }
    write_atomic(&dir.join("summary.csv"), |w| write_summary_table(w, &report.summary))?;
    write_atomic(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report.summary)?;
        Ok(())
    })
}

/// Summary as `key,value` rows.
pub fn write_summary_table(sink: &mut dyn Write, s: &RocSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["key", "value"])?;
    w.write_record(["folds".to_string(), s.folds.to_string()])?;
    for m in &s.methods {
        w.write_record([format!("{}_auc_mean", m.method.name()), m.auc_mean.to_string()])?;
        w.write_record([format!("{}_auc_std", m.method.name()), m.auc_std.to_string()])?;
    }
    w.write_record(["auc_delta".to_string(), s.auc_delta.to_string()])?;
    w.write_record(["relative_error_reduction".to_string(), s.relative_error_reduction.to_string()])?;
    w.write_record(["sign_test_wins".to_string(), s.sign_test_wins.to_string()])?;
    w.write_record(["sign_test_p_value".to_string(), s.sign_test_p_value.to_string()])?;
    w.write_record(["unconverged_curves".to_string(), s.unconverged_curves.to_string()])?;
    w.flush()?;
    Ok(())
}
