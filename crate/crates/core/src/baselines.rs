//! Comparison models: PLS1 regression fitted by NIPALS, and the deep-only MLP.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::solve;
use crate::nn::{History, TrainConfig};
use crate::preproc::{Normalization, SpectraTable};
use crate::widedeep::{ArchSpec, Task, WideDeepModel};
use crate::{Error, Result};

pub const DEFAULT_PLS_COMPONENTS: usize = 10;
const NIPALS_TOLERANCE: f64 = 1e-12;
const NIPALS_MAX_ITER: usize = 500;
/// Residual norms below this count as exhausted signal.
const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsrModel {
    pub n_components: usize,
    pub x_mean: Array1<f64>,
    pub y_mean: f64,
    /// `features x components`
    pub weights: Array2<f64>,
    /// `features x components`
    pub loadings: Array2<f64>,
    /// `samples x components`, from the fit.
    pub scores: Array2<f64>,
    pub y_loadings: Array1<f64>,
    /// Maps centered `x` to centered `y`.
    pub coefficients: Array1<f64>,
}

/// Largest usable component count for an `n x p` design.
pub fn max_components(n_samples: usize, n_features: usize) -> usize {
    n_samples.saturating_sub(1).min(n_features)
}

/// NIPALS fit of `n_components` latent variables. Extraction stops early once
/// the deflated `y` (or `X^T y`) vanishes, leaving fewer components.
pub fn plsr_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, n_components: usize) -> Result<PlsrModel> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n_components == 0 || n_components > max_components(n, p) {
        return Err(Error::OutOfRange(format!(
            "{n_components} components outside [1, {}]",
            max_components(n, p)
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PLSR data".into()));
    }
    let x_mean = x.mean_axis(Axis(0)).expect("n > 0");
    let y_mean = y.mean().expect("n > 0");
    let mut e = &x - &x_mean;
    if e.iter().all(|v| v.abs() <= RESIDUAL_FLOOR) {
        return Err(Error::ZeroVariance("X is constant after centering".into()));
    }
    let mut f = y.mapv(|v| v - y_mean);

    let mut ws = Vec::new();
    let mut ps = Vec::new();
    let mut ts = Vec::new();
    let mut qs = Vec::new();
    for _ in 0..n_components {
        if f.dot(&f).sqrt() <= RESIDUAL_FLOOR {
            break;
        }
        let mut u = f.clone();
        let mut w = Array1::zeros(p);
        let mut t = Array1::zeros(n);
        for _ in 0..NIPALS_MAX_ITER {
            let mut w_new = e.t().dot(&u);
            let norm = w_new.dot(&w_new).sqrt();
            if norm <= RESIDUAL_FLOOR {
                break;
            }
            w_new /= norm;
            t = e.dot(&w_new);
            let tt = t.dot(&t);
            let q = f.dot(&t) / tt;
            u = &f / q;
            let change = (&w_new - &w).mapv(|v| v * v).sum().sqrt();
            w = w_new;
            if change < NIPALS_TOLERANCE {
                break;
            }
        }
        let tt = t.dot(&t);
        if !(tt > RESIDUAL_FLOOR) {
            break;
        }
        let pl = e.t().dot(&t) / tt;
        let q = f.dot(&t) / tt;
        e -= &outer(&t, &pl);
        f.scaled_add(-q, &t);
        ws.push(w);
        ps.push(pl);
        ts.push(t);
        qs.push(q);
    }

    let k = ws.len();
    let stack = |cols: &[Array1<f64>], rows: usize| {
        let mut m = Array2::zeros((rows, cols.len()));
        for (j, c) in cols.iter().enumerate() {
            m.column_mut(j).assign(c);
        }
        m
    };
    let weights = stack(&ws, p);
    let loadings = stack(&ps, p);
    let scores = stack(&ts, n);
    let y_loadings = Array1::from(qs);
    let coefficients = if k == 0 {
        Array1::zeros(p)
    } else {
        let ptw = loadings.t().dot(&weights);
        let a: Vec<f64> = ptw.iter().copied().collect();
        let r = solve(&a, k, y_loadings.as_slice().expect("contiguous"))
            .ok_or_else(|| Error::Degenerate("singular P^T W in PLSR".into()))?;
        weights.dot(&Array1::from(r))
    };
    Ok(PlsrModel {
        n_components: k,
        x_mean,
        y_mean,
        weights,
        loadings,
        scores,
        y_loadings,
        coefficients,
    })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

impl PlsrModel {
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.x_mean.len() {
            return Err(Error::Shape(format!("{} features, model expects {}", x.len(), self.x_mean.len())));
        }
        Ok((&x - &self.x_mean).dot(&self.coefficients) + self.y_mean)
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.x_mean.len() {
            return Err(Error::Shape(format!("{} features, model expects {}", x.ncols(), self.x_mean.len())));
        }
        Ok((&x - &self.x_mean).dot(&self.coefficients) + self.y_mean)
    }
}

/// Design matrix of a table's spectra, normalized per `normalization`
/// (z-score statistics fitted on the table itself).
pub fn design_matrix(table: &SpectraTable, normalization: Normalization) -> Result<Array2<f64>> {
    use crate::preproc::{normalize_spectrum, ZScoreStats};
    let stats = match normalization {
        Normalization::Zscore => Some(ZScoreStats::fit(table.rows().iter().map(|r| r.spectrum.values.as_slice()))?),
        _ => None,
    };
    let mut x = Array2::zeros((table.len(), table.bands()));
    for (i, r) in table.rows().iter().enumerate() {
        let s = normalize_spectrum(&r.spectrum, normalization, stats.as_ref())?;
        x.row_mut(i).assign(&Array1::from(s.values));
    }
    Ok(x)
}

/// PLSR on a table's regression targets, with inputs normalized the way the
/// networks see them. The component count is capped by the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsrPipeline {
    pub normalization: Normalization,
    pub zscore: Option<crate::preproc::ZScoreStats>,
    pub model: PlsrModel,
}

impl PlsrPipeline {
    pub fn fit(table: &SpectraTable, normalization: Normalization, n_components: usize) -> Result<Self> {
        use crate::preproc::ZScoreStats;
        let zscore = match normalization {
            Normalization::Zscore => Some(ZScoreStats::fit(table.rows().iter().map(|r| r.spectrum.values.as_slice()))?),
            _ => None,
        };
        let x = design_matrix(table, normalization)?;
        let y = table
            .rows()
            .iter()
            .map(|r| r.force_n.ok_or_else(|| Error::Invalid(format!("row `{}` has no compression force", r.sample_id))))
            .collect::<Result<Vec<f64>>>()?;
        let k = n_components.min(max_components(x.nrows(), x.ncols())).max(1);
        let model = plsr_fit(x.view(), Array1::from(y).view(), k)?;
        Ok(Self {
            normalization,
            zscore,
            model,
        })
    }

    pub fn predict_table(&self, table: &SpectraTable) -> Result<Vec<f64>> {
        use crate::preproc::normalize_spectrum;
        table
            .rows()
            .iter()
            .map(|r| {
                let s = normalize_spectrum(&r.spectrum, self.normalization, self.zscore.as_ref())?;
                self.model.predict(Array1::from(s.values).view())
            })
            .collect()
    }
}

/// The MLP baseline: the wide-deep model with the wide branch and combiner
/// removed, trained by the same loop.
pub fn mlp_baseline(
    spec: &ArchSpec,
    table: &SpectraTable,
    task: Task,
    normalization: Normalization,
    config: &TrainConfig,
) -> Result<(WideDeepModel, History)> {
    let mut m = WideDeepModel::build_deep_only(spec, table.bands(), task, config.seed)?.with_normalization(normalization);
    let h = m.train_joint(table, &spec.train_config(config))?;
    Ok((m, h))
}
