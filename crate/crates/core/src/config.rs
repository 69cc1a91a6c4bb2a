//! Pipeline configuration (a JSON file plus command-line overrides) and the
//! run manifest written next to every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::DEFAULT_PLS_COMPONENTS;
use crate::eval::{CvConfig, ModelFamily, DEFAULT_FOLDS};
use crate::nas::{SearchConfig, DEFAULT_BUDGET, DEFAULT_N_INIT};
use crate::nn::{Activation, TrainConfig};
use crate::hsi::{calibrate_reflectance, read_cube};
use crate::preproc::{extract_regions, ExtractConfig, Normalization, Region, SpectraTable};
use crate::synth::{apply_outlier_filter, read_labels, sample_rows, DEFAULT_OUTLIER_CEILING_N};
use crate::widedeep::{ArchSpec, Task};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Naswd,
    Mlp,
    Plsr,
}

/// Architecture used when none is given and no search is run.
pub fn default_arch() -> ArchSpec {
    ArchSpec {
        activation: Activation::Relu,
        units: 64,
        n_layers: 2,
        dropout_rate: 0.1,
        learning_rate: 1e-3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of raw cube headers.
    pub cubes: Option<PathBuf>,
    pub dark: Option<PathBuf>,
    pub white: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub task: Task,
    pub model: ModelKind,
    pub arch: Option<ArchSpec>,
    pub budget: usize,
    pub n_init: usize,
    pub k: usize,
    pub seed: u64,
    pub extract: ExtractConfig,
    pub normalization: Normalization,
    pub outlier_ceiling_n: f64,
    pub pls_components: usize,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cubes: None,
            dark: None,
            white: None,
            labels: None,
            task: Task::Classify3,
            model: ModelKind::Naswd,
            arch: None,
            budget: DEFAULT_BUDGET,
            n_init: DEFAULT_N_INIT,
            k: DEFAULT_FOLDS,
            seed: 0,
            extract: ExtractConfig::default(),
            normalization: Normalization::Snv,
            outlier_ceiling_n: DEFAULT_OUTLIER_CEILING_N,
            pls_components: DEFAULT_PLS_COMPONENTS,
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::OutOfRange(format!("k = {} must be at least 2", self.k)));
        }
        if !(self.outlier_ceiling_n > 0.0) {
            return Err(Error::OutOfRange(format!("outlier ceiling {} must be positive", self.outlier_ceiling_n)));
        }
        if self.pls_components == 0 {
            return Err(Error::OutOfRange("PLS needs at least one component".into()));
        }
        if let Some(a) = &self.arch {
            a.validate()?;
        }
        self.search().validate()?;
        self.train.validate()
    }

    /// Error unless every configured input path exists.
    pub fn check_paths(&self) -> Result<()> {
        for p in [&self.cubes, &self.dark, &self.white, &self.labels].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }

    /// Point the four input paths at a directory written by
    /// [`crate::synth::write_dataset`].
    pub fn with_dataset_dir(mut self, dir: &Path) -> Self {
        self.cubes = Some(dir.join("cubes"));
        self.dark = Some(dir.join("dark.hdr"));
        self.white = Some(dir.join("white.hdr"));
        self.labels = Some(dir.join("labels.csv"));
        self
    }

    /// Calibrate every labelled cube (`<cubes>/<sample_id>.hdr`) and extract
    /// its four region spectra. Samples are processed in parallel.
    pub fn extract_table(&self) -> Result<SpectraTable> {
        let need = |p: &Option<PathBuf>, what: &str| p.clone().ok_or_else(|| Error::Invalid(format!("no {what} path configured")));
        let (cubes, dark, white, labels) = (need(&self.cubes, "cubes")?, need(&self.dark, "dark")?, need(&self.white, "white")?, need(&self.labels, "labels")?);
        self.check_paths()?;
        let dark = read_cube(&dark)?;
        let white = read_cube(&white)?;
        let records = read_labels(&labels)?;
        let rows: Vec<Vec<_>> = records
            .par_iter()
            .map(|rec| {
                let raw = read_cube(cubes.join(format!("{}.hdr", rec.sample_id)))?;
                let refl = calibrate_reflectance(&raw, &dark, &white)?.cube;
                let ex = extract_regions(&refl, &self.extract)?;
                Ok(sample_rows(&rec.sample_id, rec.severity()?, |r| rec.force(r), &ex))
            })
            .collect::<Result<_>>()?;
        SpectraTable::new(rows.into_iter().flatten().collect())
    }

    pub fn arch(&self) -> ArchSpec {
        self.arch.unwrap_or_else(default_arch)
    }

    pub fn family(&self, spec: ArchSpec) -> ModelFamily {
        match self.model {
            ModelKind::Naswd => ModelFamily::Naswd { spec },
            ModelKind::Mlp => ModelFamily::Mlp { spec },
            ModelKind::Plsr => ModelFamily::Plsr {
                n_components: self.pls_components,
            },
        }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            k: self.k,
            seed: self.seed,
            normalization: self.normalization,
            train: TrainConfig {
                seed: self.seed,
                loss: self.task.loss(),
                ..self.train
            },
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            budget: self.budget,
            n_init: self.n_init,
            seed: self.seed,
        }
    }
}

/// Rows a task is trained on: whole-fillet spectra for classification,
/// cranial spectra with force outliers removed for regression. Returns the
/// number of rows the outlier filter removed.
pub fn task_table(table: &SpectraTable, task: Task, ceiling_n: f64) -> Result<(SpectraTable, usize)> {
    match task {
        Task::Classify3 => Ok((table.filter_region(Region::Whole), 0)),
        Task::Regress1 => apply_outlier_filter(&table.filter_region(Region::Cranial), ceiling_n),
    }
}

/// Record of one command: what it wrote and which seeds it used.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seeds: BTreeMap<String, u64>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<PathBuf>,
    pub config: Option<serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Self::default()
        }
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn artifact(&mut self, rel: impl Into<PathBuf>) {
        self.artifacts.push(rel.into());
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Result<Self> {
        self.config = Some(serde_json::to_value(config)?);
        Ok(self)
    }

    /// Write `manifest.json` into `out`.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
