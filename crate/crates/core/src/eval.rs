//! Cross-validation and the reported metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{PlsrPipeline, DEFAULT_PLS_COMPONENTS};
use crate::nas::{bo_search, Evaluation, SearchConfig, SearchResult};
use crate::nn::TrainConfig;
use crate::preproc::{Normalization, SpectraTable};
use crate::rng;
use crate::special::{f_sf, student_t_quantile};
use crate::widedeep::{ArchSpec, Prediction, Task, WideDeepModel};
use crate::{Error, Result};

pub const N_CLASSES: usize = 3;
pub const DEFAULT_FOLDS: usize = 5;

/// Fold assignment of `n` samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldSplit {
    /// `(train, test)` indices of fold `f`, ascending.
    pub fn fold(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &a) in self.assignments.iter().enumerate() {
            if a == f {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Seeded shuffle, then contiguous chunks; the first `n % k` folds get one extra sample.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldSplit> {
    use rand::seq::SliceRandom;
    if k < 2 {
        return Err(Error::OutOfRange(format!("k = {k} folds, need at least 2")));
    }
    if n < k {
        return Err(Error::OutOfRange(format!("{n} samples cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "kfold"));
    let (base, extra) = (n / k, n % k);
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &order[pos..pos + size] {
            assignments[i] = f;
        }
        pos += size;
    }
    Ok(FoldSplit { k, assignments })
}

/// Rows are true classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(preds: &[usize], labels: &[usize]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
        }
        let mut counts = [[0; N_CLASSES]; N_CLASSES];
        for (&p, &l) in preds.iter().zip(labels) {
            if p >= N_CLASSES || l >= N_CLASSES {
                return Err(Error::OutOfRange(format!("class index {} outside 0..3", p.max(l))));
            }
            counts[l][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_fold_accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Classes missing from the labels; their precision is taken as 0.
    pub absent_classes: Vec<usize>,
}

/// Two-sided 95% t-interval of a mean over `values`, clipped to `[0, 1]`.
pub fn t_interval(values: &[f64]) -> (f64, f64, f64) {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, mean, mean);
    }
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
    let half = student_t_quantile(0.975, (k - 1) as f64) * sd / (k as f64).sqrt();
    (mean, (mean - half).clamp(0.0, 1.0), (mean + half).clamp(0.0, 1.0))
}

/// Pooled confusion counts, class-size-weighted precision/recall/F1 and a
/// t-interval over `fold_accuracies` (the pooled accuracy stands in when empty).
pub fn classification_metrics(
    preds: &[usize],
    labels: &[usize],
    fold_accuracies: &[f64],
) -> Result<(ClassifMetrics, ConfusionMatrix)> {
    if preds.is_empty() {
        return Err(Error::Invalid("no predictions to score".into()));
    }
    let cm = ConfusionMatrix::from_pairs(preds, labels)?;
    let total = cm.total() as f64;
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    let mut absent_classes = Vec::new();
    for c in 0..N_CLASSES {
        let support: usize = cm.counts[c].iter().sum();
        let predicted: usize = (0..N_CLASSES).map(|r| cm.counts[r][c]).sum();
        if support == 0 {
            absent_classes.push(c);
            continue;
        }
        let tp = cm.counts[c][c] as f64;
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = tp / support as f64;
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let w = support as f64 / total;
        precision += w * p;
        recall += w * r;
        f1 += w * f;
    }
    let accuracy = cm.trace() as f64 / total;
    let folds = if fold_accuracies.is_empty() { vec![accuracy] } else { fold_accuracies.to_vec() };
    let (mean_fold_accuracy, ci_low, ci_high) = t_interval(&folds);
    Ok((
        ClassifMetrics {
            accuracy,
            precision,
            recall,
            f1,
            mean_fold_accuracy,
            ci_low,
            ci_high,
            absent_classes,
        },
        cm,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegrMetrics {
    pub r: f64,
    pub r2: f64,
    pub rmse: f64,
    /// RMSE divided by the population standard deviation of the targets.
    pub rmse_standardized: f64,
    /// Set when predictions are constant and `r` is reported as 0.
    pub degenerate: bool,
}

pub fn regression_metrics(preds: &[f64], targets: &[f64]) -> Result<RegrMetrics> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", preds.len(), targets.len())));
    }
    let n = targets.len();
    if n < 2 {
        return Err(Error::Invalid("regression metrics need at least two samples".into()));
    }
    if preds.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression predictions or targets".into()));
    }
    let nf = n as f64;
    let my = targets.iter().sum::<f64>() / nf;
    let mp = preds.iter().sum::<f64>() / nf;
    let ss_tot: f64 = targets.iter().map(|t| (t - my).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::ZeroVariance("targets are constant".into()));
    }
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    let spp: f64 = preds.iter().map(|p| (p - mp).powi(2)).sum();
    let spt: f64 = preds.iter().zip(targets).map(|(p, t)| (p - mp) * (t - my)).sum();
    let degenerate = !(spp > 0.0);
    let r = if degenerate { 0.0 } else { (spt / (spp * ss_tot).sqrt()).clamp(-1.0, 1.0) };
    let rmse = (ss_res / nf).sqrt();
    Ok(RegrMetrics {
        r,
        r2: 1.0 - ss_res / ss_tot,
        rmse,
        rmse_standardized: rmse / (ss_tot / nf).sqrt(),
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
}

/// Classic one-way ANOVA; `p` is the upper tail of the F distribution.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::Invalid("ANOVA needs at least two groups".into()));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::Invalid("every ANOVA group needs at least two values".into()));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ANOVA values".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    if !(ss_within > 0.0) {
        return Err(Error::ZeroVariance("within-group variance is zero".into()));
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let f_stat = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value: f_sf(f_stat, df_between as f64, df_within as f64).clamp(0.0, 1.0),
    })
}

/// Model family evaluated by [`run_cv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum ModelFamily {
    Naswd { spec: ArchSpec },
    Mlp { spec: ArchSpec },
    Plsr { n_components: usize },
}

impl ModelFamily {
    pub fn plsr() -> Self {
        ModelFamily::Plsr {
            n_components: DEFAULT_PLS_COMPONENTS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Naswd { .. } => "naswd",
            ModelFamily::Mlp { .. } => "mlp",
            ModelFamily::Plsr { .. } => "plsr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub normalization: Normalization,
    /// Learning rate and dropout are taken from the spec under evaluation.
    pub train: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_FOLDS,
            seed: 0,
            normalization: Normalization::Snv,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Reason the fold was not evaluated.
    pub skipped: Option<String>,
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
    pub r: Option<f64>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub metrics: ClassifMetrics,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    /// Metrics on pooled out-of-fold predictions, in newtons.
    pub pooled: RegrMetrics,
    pub mean_fold_r: Option<f64>,
    pub mean_fold_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub model: ModelFamily,
    pub k: usize,
    pub seed: u64,
    pub normalization: Normalization,
    pub n_samples: usize,
    pub folds: Vec<FoldReport>,
    pub classification: Option<ClassificationReport>,
    pub regression: Option<RegressionReport>,
    /// Mean fold accuracy, or negative mean fold MSE for regression.
    pub objective: f64,
}

impl EvalReport {
    pub fn fold_scores(&self) -> Vec<f64> {
        self.folds
            .iter()
            .filter_map(|f| match self.task {
                Task::Classify3 => f.accuracy,
                Task::Regress1 => f.mse.map(|m| -m),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

enum FoldOutcome {
    Skipped(String),
    Classes { test: Vec<usize>, preds: Vec<usize>, epochs: Option<usize> },
    Forces { test: Vec<usize>, preds: Vec<f64>, epochs: Option<usize> },
}

fn fit_predict(
    family: &ModelFamily,
    task: Task,
    train: &SpectraTable,
    test: &SpectraTable,
    config: &CvConfig,
    fold_seed: u64,
) -> Result<(Vec<Prediction>, Option<usize>)> {
    let network = |spec: &ArchSpec, wide: bool| -> Result<(Vec<Prediction>, Option<usize>)> {
        let mut m = if wide {
            WideDeepModel::build(spec, train.bands(), task, fold_seed)?
        } else {
            WideDeepModel::build_deep_only(spec, train.bands(), task, fold_seed)?
        }
        .with_normalization(config.normalization);
        let cfg = TrainConfig {
            seed: fold_seed,
            ..spec.train_config(&config.train)
        };
        let h = m.train_joint(train, &cfg)?;
        Ok((m.predict_table(test)?, Some(h.epochs_run())))
    };
    match family {
        ModelFamily::Naswd { spec } => network(spec, true),
        ModelFamily::Mlp { spec } => network(spec, false),
        ModelFamily::Plsr { n_components } => {
            if task != Task::Regress1 {
                return Err(Error::Invalid("PLSR is a regression baseline".into()));
            }
            let p = PlsrPipeline::fit(train, config.normalization, *n_components)?;
            Ok((p.predict_table(test)?.into_iter().map(Prediction::Force).collect(), None))
        }
    }
}

fn run_fold(family: &ModelFamily, task: Task, table: &SpectraTable, split: &FoldSplit, f: usize, config: &CvConfig) -> Result<FoldOutcome> {
    let (train_idx, test_idx) = split.fold(f);
    let train = table.subset(&train_idx);
    let test = table.subset(&test_idx);
    if task == Task::Classify3 {
        let mut seen = [false; N_CLASSES];
        for l in train.labels() {
            seen[l] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Ok(FoldOutcome::Skipped(format!("training part lacks class {c}")));
        }
    }
    let fold_seed = rng::derive_indexed(config.seed, "fold", f as u64);
    let (preds, epochs) = fit_predict(family, task, &train, &test, config, fold_seed)?;
    Ok(match task {
        Task::Classify3 => FoldOutcome::Classes {
            test: test_idx,
            preds: preds
                .into_iter()
                .map(|p| match p {
                    Prediction::Class(c) => c.index(),
                    Prediction::Force(_) => unreachable!("classification model"),
                })
                .collect(),
            epochs,
        },
        Task::Regress1 => FoldOutcome::Forces {
            test: test_idx,
            preds: preds
                .into_iter()
                .map(|p| match p {
                    Prediction::Force(v) => v,
                    Prediction::Class(_) => unreachable!("regression model"),
                })
                .collect(),
            epochs,
        },
    })
}

fn targets(table: &SpectraTable) -> Result<Vec<f64>> {
    table
        .rows()
        .iter()
        .map(|r| r.force_n.ok_or_else(|| Error::Invalid(format!("row `{}` has no compression force", r.sample_id))))
        .collect()
}

/// k-fold cross-validation of one model family. Folds train in parallel and
/// are merged by fold index, so the report does not depend on scheduling.
pub fn run_cv(family: &ModelFamily, task: Task, table: &SpectraTable, config: &CvConfig) -> Result<EvalReport> {
    if table.is_empty() {
        return Err(Error::Invalid("empty table".into()));
    }
    let y = match task {
        Task::Regress1 => Some(targets(table)?),
        Task::Classify3 => None,
    };
    let split = kfold_split(table.len(), config.k, config.seed)?;
    let outcomes: Vec<FoldOutcome> = (0..config.k)
        .into_par_iter()
        .map(|f| run_fold(family, task, table, &split, f, config))
        .collect::<Result<_>>()?;

    let sizes = split.fold_sizes();
    let mut folds = Vec::with_capacity(config.k);
    let labels = table.labels();
    let (mut pooled_pred_c, mut pooled_true_c) = (Vec::new(), Vec::new());
    let (mut pooled_pred_f, mut pooled_true_f) = (Vec::new(), Vec::new());
    for (f, outcome) in outcomes.into_iter().enumerate() {
        let mut report = FoldReport {
            fold: f,
            n_train: table.len() - sizes[f],
            n_test: sizes[f],
            skipped: None,
            accuracy: None,
            mse: None,
            r: None,
            epochs: None,
        };
        match outcome {
            FoldOutcome::Skipped(why) => report.skipped = Some(why),
            FoldOutcome::Classes { test, preds, epochs } => {
                let correct = test.iter().zip(&preds).filter(|(&i, &p)| labels[i] == p).count();
                report.accuracy = Some(correct as f64 / test.len() as f64);
                report.epochs = epochs;
                pooled_true_c.extend(test.iter().map(|&i| labels[i]));
                pooled_pred_c.extend(preds);
            }
            FoldOutcome::Forces { test, preds, epochs } => {
                let y = y.as_ref().expect("regression targets");
                let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
                report.mse = Some(truth.iter().zip(&preds).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / truth.len() as f64);
                report.r = regression_metrics(&preds, &truth).ok().filter(|m| !m.degenerate).map(|m| m.r);
                report.epochs = epochs;
                pooled_true_f.extend(truth);
                pooled_pred_f.extend(preds);
            }
        }
        folds.push(report);
    }
    let evaluated: Vec<&FoldReport> = folds.iter().filter(|f| f.skipped.is_none()).collect();
    if evaluated.is_empty() {
        return Err(Error::Degenerate("every fold was skipped".into()));
    }
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let (classification, regression, objective) = match task {
        Task::Classify3 => {
            let accs: Vec<f64> = evaluated.iter().filter_map(|f| f.accuracy).collect();
            let (metrics, confusion) = classification_metrics(&pooled_pred_c, &pooled_true_c, &accs)?;
            let objective = metrics.mean_fold_accuracy;
            (Some(ClassificationReport { metrics, confusion }), None, objective)
        }
        Task::Regress1 => {
            let pooled = regression_metrics(&pooled_pred_f, &pooled_true_f)?;
            let rs: Vec<f64> = evaluated.iter().filter_map(|f| f.r).collect();
            let mses: Vec<f64> = evaluated.iter().filter_map(|f| f.mse).collect();
            let objective = -mean(mses.clone());
            let report = RegressionReport {
                pooled,
                mean_fold_r: (!rs.is_empty()).then(|| mean(rs)),
                mean_fold_rmse: mean(mses.iter().map(|m| m.sqrt()).collect()),
            };
            (None, Some(report), objective)
        }
    };
    Ok(EvalReport {
        task,
        model: family.clone(),
        k: config.k,
        seed: config.seed,
        normalization: config.normalization,
        n_samples: table.len(),
        folds,
        classification,
        regression,
        objective,
    })
}

/// Bayesian-optimization search for the wide-deep architecture that
/// maximizes the cross-validated objective of [`run_cv`].
pub fn tune_naswd(task: Task, table: &SpectraTable, cv: &CvConfig, search: &SearchConfig) -> Result<SearchResult> {
    bo_search(
        |spec| {
            let report = run_cv(&ModelFamily::Naswd { spec: *spec }, task, table, cv)?;
            Ok(Evaluation {
                objective: report.objective,
                fold_scores: report.fold_scores(),
            })
        },
        search,
    )
}
