//! Wide-and-deep model: a single affine "wide" map and a dense "deep" stack
//! over the same normalized spectrum, combined as `a_w * wide + a_d * deep`
//! with trainable scalars and trained jointly under one loss and one Adam.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hsi::{CubeKind, HyperCube};
use crate::maps::{ClassMap, HardnessMap};
use crate::nn::{
    batch_loss_and_grad, softmax, train_loop, Activation, Dataset, DenseLayer, DenseStack, History, LossKind, Mode,
    Targets, TrainConfig, Trainable,
};
use crate::preproc::{normalize_spectrum, Mask, Normalization, Severity, SpectraTable, Spectrum, ZScoreStats};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Per-pixel regression outputs are clamped into this range before binning.
pub const PIXEL_FORCE_RANGE_N: (f64, f64) = (0.0, 40.0);
/// Share of a training table held out for early stopping.
pub const HOLDOUT_FRACTION: f64 = 0.2;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Architecture hyperparameters searched by the tuner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub activation: Activation,
    pub units: usize,
    pub n_layers: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
}

pub const UNITS_RANGE: (usize, usize) = (32, 512);
pub const LAYERS_RANGE: (usize, usize) = (1, 3);
pub const DROPOUT_RANGE: (f64, f64) = (0.0, 0.5);
pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-4, 1e-2);

impl ArchSpec {
    pub fn new(activation: Activation, units: usize, n_layers: usize, dropout_rate: f64, learning_rate: f64) -> Result<Self> {
        let s = Self {
            activation,
            units,
            n_layers,
            dropout_rate,
            learning_rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.activation, Activation::Relu | Activation::Sigmoid) {
            return Err(Error::OutOfRange("activation must be relu or sigmoid".into()));
        }
        if !(UNITS_RANGE.0..=UNITS_RANGE.1).contains(&self.units) {
            return Err(Error::OutOfRange(format!("units {} outside [32, 512]", self.units)));
        }
        if !(LAYERS_RANGE.0..=LAYERS_RANGE.1).contains(&self.n_layers) {
            return Err(Error::OutOfRange(format!("layers {} outside [1, 3]", self.n_layers)));
        }
        if !(DROPOUT_RANGE.0..=DROPOUT_RANGE.1).contains(&self.dropout_rate) {
            return Err(Error::OutOfRange(format!("dropout {} outside [0, 0.5]", self.dropout_rate)));
        }
        if !(LEARNING_RATE_RANGE.0..=LEARNING_RATE_RANGE.1).contains(&self.learning_rate) {
            return Err(Error::OutOfRange(format!("learning rate {} outside [1e-4, 1e-2]", self.learning_rate)));
        }
        Ok(())
    }

    /// Training configuration carrying this spec's learning and dropout rates.
    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            dropout_rate: self.dropout_rate,
            ..*base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[serde(alias = "classify")]
    Classify3,
    #[serde(alias = "regress")]
    Regress1,
}

impl Task {
    pub fn outputs(self) -> usize {
        match self {
            Task::Classify3 => 3,
            Task::Regress1 => 1,
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            Task::Classify3 => LossKind::SparseCce,
            Task::Regress1 => LossKind::Mse,
        }
    }
}

/// Mean and standard deviation used to standardize regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct WidePart {
    layer: DenseLayer,
    /// `[a_w, a_d]`
    combiner: [f64; 2],
}

/// The wide-deep model, or its deep-only variant when the wide branch is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct WideDeepModel {
    task: Task,
    arch: ArchSpec,
    normalization: Normalization,
    zscore: Option<ZScoreStats>,
    target_scale: Option<TargetScale>,
    wide: Option<WidePart>,
    deep: DenseStack,
}

/// Prediction for one spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Class(Severity),
    Force(f64),
}

/// Per-pixel predictions over a cube.
#[derive(Debug, Clone, PartialEq)]
pub enum CubePrediction {
    Classes(ClassMap),
    Forces(HardnessMap),
}

fn deep_stack(arch: &ArchSpec, input_dim: usize, outputs: usize, rng: &mut Rng) -> Result<DenseStack> {
    let mut dims = vec![input_dim];
    dims.extend(std::iter::repeat_n(arch.units, arch.n_layers));
    dims.push(outputs);
    let mut acts = vec![arch.activation; arch.n_layers];
    acts.push(Activation::Identity);
    DenseStack::glorot(&dims, &acts, rng)
}

impl WideDeepModel {
    /// Wide-deep model with Glorot-initialized branches and `a_w = a_d = 1`.
    pub fn build(arch: &ArchSpec, input_dim: usize, task: Task, seed: u64) -> Result<Self> {
        arch.validate()?;
        if input_dim == 0 {
            return Err(Error::Invalid("input dimension must be positive".into()));
        }
        let mut rng = rng::stream(seed, "init");
        let k = task.outputs();
        let wide = DenseLayer::glorot(input_dim, k, Activation::Identity, &mut rng);
        let deep = deep_stack(arch, input_dim, k, &mut rng)?;
        Ok(Self {
            task,
            arch: *arch,
            normalization: Normalization::Snv,
            zscore: None,
            target_scale: None,
            wide: Some(WidePart {
                layer: wide,
                combiner: [1.0, 1.0],
            }),
            deep,
        })
    }

    /// Deep branch only: no wide layer and no combiner.
    pub fn build_deep_only(arch: &ArchSpec, input_dim: usize, task: Task, seed: u64) -> Result<Self> {
        let mut m = Self::build(arch, input_dim, task, seed)?;
        m.wide = None;
        Ok(m)
    }

    /// Assemble from explicit parts; `wide` is `(layer, a_w, a_d)`.
    pub fn from_parts(
        task: Task,
        arch: ArchSpec,
        wide: Option<(DenseLayer, f64, f64)>,
        deep: DenseStack,
    ) -> Result<Self> {
        let k = task.outputs();
        if deep.outputs() != k {
            return Err(Error::Shape(format!("deep branch emits {}, task needs {k}", deep.outputs())));
        }
        if let Some((layer, _, _)) = &wide {
            if layer.outputs() != k || layer.inputs() != deep.inputs() {
                return Err(Error::Shape("wide and deep branches disagree on dimensions".into()));
            }
        }
        Ok(Self {
            task,
            arch,
            normalization: Normalization::Snv,
            zscore: None,
            target_scale: None,
            wide: wide.map(|(layer, a_wide, a_deep)| WidePart {
                layer,
                combiner: [a_wide, a_deep],
            }),
            deep,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn task(&self) -> Task {
        self.task
    }
    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }
    pub fn normalization(&self) -> Normalization {
        self.normalization
    }
    pub fn input_dim(&self) -> usize {
        self.deep.inputs()
    }
    pub fn deep(&self) -> &DenseStack {
        &self.deep
    }
    pub fn deep_mut(&mut self) -> &mut DenseStack {
        &mut self.deep
    }
    pub fn wide_layer(&self) -> Option<&DenseLayer> {
        self.wide.as_ref().map(|w| &w.layer)
    }
    pub fn has_wide(&self) -> bool {
        self.wide.is_some()
    }
    /// `(a_w, a_d)`, or `None` for the deep-only variant.
    pub fn combiner(&self) -> Option<(f64, f64)> {
        self.wide.as_ref().map(|w| (w.combiner[0], w.combiner[1]))
    }
    pub fn set_combiner(&mut self, a_wide: f64, a_deep: f64) {
        if let Some(w) = &mut self.wide {
            w.combiner = [a_wide, a_deep];
        }
    }
    pub fn target_scale(&self) -> Option<TargetScale> {
        self.target_scale
    }

    pub fn param_count(&self) -> usize {
        self.deep.param_count() + self.wide.as_ref().map_or(0, |w| w.layer.param_count() + 2)
    }

    /// Combined outputs and, when present, the wide and deep branch outputs.
    fn forward_parts(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<(Array2<f64>, Option<Array2<f64>>, Array2<f64>, crate::nn::ForwardCache)> {
        let (deep_out, cache) = self.deep.forward(x, mode, dropout_rate, rng)?;
        match &self.wide {
            None => Ok((deep_out.clone(), None, deep_out, cache)),
            Some(w) => {
                let wide_out = w.layer.affine(x);
                let combined = &wide_out * w.combiner[0] + &deep_out * w.combiner[1];
                Ok((combined, Some(wide_out), deep_out, cache))
            }
        }
    }

    /// Raw combined outputs (logits, or standardized force) for a batch of
    /// already-normalized inputs.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("inputs have {} features, model expects {}", x.ncols(), self.input_dim())));
        }
        let deep_out = self.deep.infer(x)?;
        Ok(match &self.wide {
            None => deep_out,
            Some(w) => w.layer.affine(x) * w.combiner[0] + deep_out * w.combiner[1],
        })
    }

    /// Combined output vector for one spectrum normalized per the model's tag.
    pub fn predict_logits(&self, x: &Spectrum) -> Result<Vec<f64>> {
        if x.normalization != self.normalization {
            return Err(Error::Invalid(format!(
                "spectrum is {:?}-normalized, model expects {:?}",
                x.normalization, self.normalization
            )));
        }
        let view = ArrayView2::from_shape((1, x.len()), &x.values).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict_batch(view)?.row(0).to_vec())
    }

    /// Class probabilities (classification models only).
    pub fn predict_proba(&self, x: &Spectrum) -> Result<Vec<f64>> {
        if self.task != Task::Classify3 {
            return Err(Error::Invalid("probabilities need a classification model".into()));
        }
        Ok(softmax(&self.predict_logits(x)?))
    }

    /// Normalize a raw spectrum the way this model expects.
    pub fn normalize(&self, raw: &Spectrum) -> Result<Spectrum> {
        if raw.normalization == self.normalization {
            return Ok(raw.clone());
        }
        if raw.normalization != Normalization::None {
            return Err(Error::Invalid("spectrum already carries a different normalization".into()));
        }
        normalize_spectrum(raw, self.normalization, self.zscore.as_ref())
    }

    fn input_matrix<'a>(&self, spectra: impl ExactSizeIterator<Item = &'a Spectrum>) -> Result<Array2<f64>> {
        let n = spectra.len();
        let d = self.input_dim();
        let mut x = Array2::zeros((n, d));
        for (i, s) in spectra.enumerate() {
            if s.len() != d {
                return Err(Error::Shape(format!("spectrum has {} bands, model expects {d}", s.len())));
            }
            let v = self.normalize(s)?;
            x.row_mut(i).assign(&Array1::from(v.values));
        }
        Ok(x)
    }

    fn decode_outputs(&self, out: ArrayView2<f64>) -> Vec<Prediction> {
        match self.task {
            Task::Classify3 => out
                .rows()
                .into_iter()
                .map(|r| {
                    let mut best = 0;
                    for k in 1..r.len() {
                        if r[k] > r[best] {
                            best = k;
                        }
                    }
                    Prediction::Class(Severity::ALL[best])
                })
                .collect(),
            Task::Regress1 => {
                let s = self.target_scale.unwrap_or(TargetScale { mean: 0.0, sd: 1.0 });
                out.column(0).iter().map(|&z| Prediction::Force(z * s.sd + s.mean)).collect()
            }
        }
    }

    /// Predictions for raw (un-normalized) spectra.
    pub fn predict_spectra(&self, spectra: &[Spectrum]) -> Result<Vec<Prediction>> {
        if spectra.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.input_matrix(spectra.iter())?;
        Ok(self.decode_outputs(self.predict_batch(x.view())?.view()))
    }

    pub fn predict_table(&self, table: &SpectraTable) -> Result<Vec<Prediction>> {
        let spectra: Vec<Spectrum> = table.rows().iter().map(|r| r.spectrum.clone()).collect();
        self.predict_spectra(&spectra)
    }

    fn targets_for(&self, table: &SpectraTable) -> Result<Targets> {
        match self.task {
            Task::Classify3 => Ok(Targets::Classes(table.labels())),
            Task::Regress1 => {
                let scale = self.target_scale.ok_or_else(|| Error::Invalid("target scale not fitted".into()))?;
                let mut y = Array2::zeros((table.len(), 1));
                for (i, r) in table.rows().iter().enumerate() {
                    let f = r
                        .force_n
                        .ok_or_else(|| Error::Invalid(format!("row `{}` has no compression force", r.sample_id)))?;
                    y[[i, 0]] = (f - scale.mean) / scale.sd;
                }
                Ok(Targets::Values(y))
            }
        }
    }

    /// Fit normalization and target statistics on a training table.
    fn fit_statistics(&mut self, table: &SpectraTable) -> Result<()> {
        if self.normalization == Normalization::Zscore {
            self.zscore = Some(ZScoreStats::fit(table.rows().iter().map(|r| r.spectrum.values.as_slice()))?);
        }
        match self.task {
            Task::Classify3 => {
                let mut seen = [false; 3];
                for l in table.labels() {
                    seen[l] = true;
                }
                if seen.iter().filter(|&&s| s).count() < 2 {
                    return Err(Error::Degenerate("classification needs at least two classes".into()));
                }
            }
            Task::Regress1 => {
                let forces = table
                    .rows()
                    .iter()
                    .map(|r| r.force_n.filter(|f| f.is_finite()).ok_or_else(|| Error::Invalid(format!("row `{}` lacks a finite force", r.sample_id))))
                    .collect::<Result<Vec<f64>>>()?;
                let n = forces.len() as f64;
                let mean = forces.iter().sum::<f64>() / n;
                let sd = (forces.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n).sqrt();
                if !(sd > 1e-12) {
                    return Err(Error::Degenerate("compression forces have zero variance".into()));
                }
                self.target_scale = Some(TargetScale { mean, sd });
            }
        }
        Ok(())
    }

    /// Train on `train`, early-stopping on `val`. Statistics are fitted on `train` only.
    pub fn train_with_validation(&mut self, train: &SpectraTable, val: &SpectraTable, config: &TrainConfig) -> Result<History> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::Invalid("training and validation tables must be non-empty".into()));
        }
        self.fit_statistics(train)?;
        let config = TrainConfig {
            loss: self.task.loss(),
            ..*config
        };
        let train_set = Dataset::new(self.input_matrix(train.rows().iter().map(|r| &r.spectrum))?, self.targets_for(train)?)?;
        let val_set = Dataset::new(self.input_matrix(val.rows().iter().map(|r| &r.spectrum))?, self.targets_for(val)?)?;
        train_loop(self, &train_set, &val_set, &config)
    }

    /// Joint training on a table; a seeded (class-stratified for
    /// classification) share of [`HOLDOUT_FRACTION`] drives early stopping.
    pub fn train_joint(&mut self, table: &SpectraTable, config: &TrainConfig) -> Result<History> {
        let (train_idx, val_idx) = holdout_split(table, self.task, config.seed)?;
        self.train_with_validation(&table.subset(&train_idx), &table.subset(&val_idx), config)
    }

    /// Predict every masked pixel of a reflectance cube.
    pub fn predict_cube(&self, cube: &HyperCube, mask: &Mask) -> Result<CubePrediction> {
        if cube.kind() != CubeKind::Reflectance {
            return Err(Error::Invalid(format!("prediction needs reflectance, got {}", cube.kind())));
        }
        if cube.bands() != self.input_dim() {
            return Err(Error::Shape(format!("cube has {} bands, model expects {}", cube.bands(), self.input_dim())));
        }
        if mask.lines != cube.lines() || mask.samples != cube.samples() {
            return Err(Error::Shape("mask and cube frames differ".into()));
        }
        let pixels = mask.indices();
        const CHUNK: usize = 1024;
        let preds: Vec<Prediction> = pixels
            .par_chunks(CHUNK)
            .map(|chunk| {
                let spectra: Vec<Spectrum> = chunk.iter().map(|&p| Spectrum::raw(cube.pixel(p).to_vec())).collect();
                self.predict_spectra(&spectra)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let n = cube.pixels();
        match self.task {
            Task::Classify3 => {
                let mut cells = vec![None; n];
                for (&p, pred) in pixels.iter().zip(preds) {
                    if let Prediction::Class(c) = pred {
                        cells[p] = Some(c);
                    }
                }
                Ok(CubePrediction::Classes(ClassMap::new(cube.lines(), cube.samples(), cells)?))
            }
            Task::Regress1 => {
                let mut cells = vec![None; n];
                for (&p, pred) in pixels.iter().zip(preds) {
                    if let Prediction::Force(f) = pred {
                        cells[p] = Some(f.clamp(PIXEL_FORCE_RANGE_N.0, PIXEL_FORCE_RANGE_N.1));
                    }
                }
                Ok(CubePrediction::Forces(HardnessMap::new(cube.lines(), cube.samples(), cells)?))
            }
        }
    }

    pub fn to_checkpoint(&self, config: Option<&TrainConfig>) -> Checkpoint {
        let record = |l: &DenseLayer| LayerRecord {
            inputs: l.inputs(),
            outputs: l.outputs(),
            activation: l.activation,
            weights: l.weights.iter().copied().collect(),
            bias: l.bias.to_vec(),
        };
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            task: self.task,
            arch: self.arch,
            normalization: self.normalization,
            zscore: self.zscore.clone(),
            target_scale: self.target_scale,
            wide: self.wide.as_ref().map(|w| record(&w.layer)),
            combiner: self.wide.as_ref().map(|w| w.combiner),
            deep: self.deep.layers().iter().map(record).collect(),
            config: config.copied(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", c.format_version)));
        }
        let layer = |r: &LayerRecord| -> Result<DenseLayer> {
            let w = Array2::from_shape_vec((r.outputs, r.inputs), r.weights.clone()).map_err(|e| Error::Format(e.to_string()))?;
            if r.bias.len() != r.outputs {
                return Err(Error::Format("bias length disagrees with layer shape".into()));
            }
            DenseLayer::new(w, Array1::from(r.bias.clone()), r.activation)
        };
        let deep = DenseStack::new(c.deep.iter().map(layer).collect::<Result<Vec<_>>>()?)?;
        let wide = match (&c.wide, c.combiner) {
            (Some(w), Some([a, b])) => Some((layer(w)?, a, b)),
            (None, None) => None,
            _ => return Err(Error::Format("wide layer and combiner must appear together".into())),
        };
        let mut m = Self::from_parts(c.task, c.arch, wide, deep)?;
        m.normalization = c.normalization;
        m.zscore = c.zscore.clone();
        m.target_scale = c.target_scale;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>, config: Option<&TrainConfig>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_checkpoint(config))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

/// Flattened dense layer in a checkpoint; weights are row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub task: Task,
    pub arch: ArchSpec,
    pub normalization: Normalization,
    pub zscore: Option<ZScoreStats>,
    pub target_scale: Option<TargetScale>,
    pub wide: Option<LayerRecord>,
    pub combiner: Option<[f64; 2]>,
    pub deep: Vec<LayerRecord>,
    pub config: Option<TrainConfig>,
}

/// Seeded split of row indices into (train, validation) for early stopping.
pub fn holdout_split(table: &SpectraTable, task: Task, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    let n = table.len();
    if n < 2 {
        return Err(Error::Invalid(format!("{n} rows cannot be split for early stopping")));
    }
    let mut rng = rng::stream(seed, "holdout");
    let groups: Vec<Vec<usize>> = match task {
        Task::Classify3 => {
            let labels = table.labels();
            (0..3).map(|c| (0..n).filter(|&i| labels[i] == c).collect()).collect()
        }
        Task::Regress1 => vec![(0..n).collect()],
    };
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(&mut rng);
        let take = if g.len() >= 2 { ((g.len() as f64 * HOLDOUT_FRACTION).round() as usize).max(1) } else { 0 };
        val.extend_from_slice(&g[..take]);
        train.extend_from_slice(&g[take..]);
    }
    if val.is_empty() {
        val.push(train.pop().expect("n >= 2"));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

impl Trainable for WideDeepModel {
    fn param_lens(&self) -> Vec<usize> {
        let mut lens = Vec::new();
        if let Some(w) = &self.wide {
            lens.push(w.layer.weights.len());
            lens.push(w.layer.bias.len());
        }
        lens.extend(self.deep.param_lens());
        if self.wide.is_some() {
            lens.push(2);
        }
        lens
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match &mut self.wide {
            None => self.deep.param_slices_mut(),
            Some(w) => {
                let mut out: Vec<&mut [f64]> = vec![
                    w.layer.weights.as_slice_mut().expect("standard layout"),
                    w.layer.bias.as_slice_mut().expect("contiguous"),
                ];
                out.extend(self.deep.param_slices_mut());
                out.push(&mut w.combiner[..]);
                out
            }
        }
    }

    fn loss_and_grads(
        &self,
        x: ArrayView2<f64>,
        y: &Targets,
        loss: LossKind,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let (combined, wide_out, deep_out, cache) = self.forward_parts(x, Mode::Train, dropout_rate, rng)?;
        let (l, g) = batch_loss_and_grad(combined.view(), y, loss)?;
        let mut grads = Vec::new();
        match (&self.wide, wide_out) {
            (Some(w), Some(wide_out)) => {
                let g_wide = &g * w.combiner[0];
                grads.push(g_wide.t().dot(&x).into_raw_vec_and_offset().0);
                grads.push(g_wide.sum_axis(Axis(0)).to_vec());
                let g_deep = &g * w.combiner[1];
                let (dg, _) = self.deep.backward(&cache, g_deep.view())?;
                for lg in dg {
                    grads.push(lg.weights.into_raw_vec_and_offset().0);
                    grads.push(lg.bias.to_vec());
                }
                grads.push(vec![(&g * &wide_out).sum(), (&g * &deep_out).sum()]);
            }
            _ => {
                let (dg, _) = self.deep.backward(&cache, g.view())?;
                for lg in dg {
                    grads.push(lg.weights.into_raw_vec_and_offset().0);
                    grads.push(lg.bias.to_vec());
                }
            }
        }
        Ok((l, grads))
    }

    fn eval_loss(&self, x: ArrayView2<f64>, y: &Targets, loss: LossKind) -> Result<f64> {
        let out = self.predict_batch(x)?;
        Ok(batch_loss_and_grad(out.view(), y, loss)?.0)
    }
}
