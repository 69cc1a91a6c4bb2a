//! Architecture search by Bayesian optimization.
//!
//! Specs are encoded into the 6-D unit cube (one-hot activation, then units,
//! layers, dropout and log learning rate), a Matérn 5/2 Gaussian process is
//! fitted to the observed objectives and the next spec maximizes expected
//! improvement over a seeded candidate sample.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{backward_substitute_transposed, cholesky_in_place, forward_substitute};
use crate::nn::Activation;
use crate::rng::{self, Rng};
use crate::special::{normal_cdf, normal_pdf};
use crate::widedeep::{ArchSpec, DROPOUT_RANGE, LAYERS_RANGE, LEARNING_RATE_RANGE, UNITS_RANGE};
use crate::{Error, Result};

pub const ENCODED_DIM: usize = 6;
pub const N_CANDIDATES: usize = 2048;
pub const GP_RESTARTS: usize = 16;
pub const DEFAULT_BUDGET: usize = 40;
pub const DEFAULT_N_INIT: usize = 8;

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;
const DUPLICATE_TOLERANCE: f64 = 1e-9;
/// Log-space bounds of the kernel hyperparameters.
const LENGTH_SCALE_BOUNDS: (f64, f64) = (0.01, 10.0);
const SIGNAL_VAR_BOUNDS: (f64, f64) = (0.05, 20.0);
const NOISE_VAR_BOUNDS: (f64, f64) = (1e-10, 1.0);
const MAX_EVALS_PER_RESTART: usize = 200;

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn log_lr_bounds() -> (f64, f64) {
    (LEARNING_RATE_RANGE.0.ln(), LEARNING_RATE_RANGE.1.ln())
}

/// Unit-cube encoding of a spec.
pub fn encode(spec: &ArchSpec) -> [f64; ENCODED_DIM] {
    let (lo, hi) = log_lr_bounds();
    let (u0, u1) = (UNITS_RANGE.0 as f64, UNITS_RANGE.1 as f64);
    let (l0, l1) = (LAYERS_RANGE.0 as f64, LAYERS_RANGE.1 as f64);
    let one_hot = match spec.activation {
        Activation::Sigmoid => [0.0, 1.0],
        _ => [1.0, 0.0],
    };
    [
        one_hot[0],
        one_hot[1],
        (spec.units as f64 - u0) / (u1 - u0),
        (spec.n_layers as f64 - l0) / (l1 - l0),
        spec.dropout_rate / DROPOUT_RANGE.1,
        (spec.learning_rate.ln() - lo) / (hi - lo),
    ]
}

/// Nearest valid spec for a point of the unit cube (coordinates are clamped).
/// The activation is the larger one-hot entry, relu on ties; integers round half up.
pub fn decode(v: &[f64]) -> Result<ArchSpec> {
    if v.len() != ENCODED_DIM {
        return Err(Error::Shape(format!("encoded spec needs {ENCODED_DIM} coordinates, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("encoded spec".into()));
    }
    let c: Vec<f64> = v.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    let (lo, hi) = log_lr_bounds();
    let (u0, u1) = (UNITS_RANGE.0 as f64, UNITS_RANGE.1 as f64);
    let (l0, l1) = (LAYERS_RANGE.0 as f64, LAYERS_RANGE.1 as f64);
    let activation = if c[1] > c[0] { Activation::Sigmoid } else { Activation::Relu };
    let learning_rate = (lo + c[5] * (hi - lo)).exp().clamp(LEARNING_RATE_RANGE.0, LEARNING_RATE_RANGE.1);
    ArchSpec::new(
        activation,
        round_half_up(u0 + c[2] * (u1 - u0)) as usize,
        round_half_up(l0 + c[3] * (l1 - l0)) as usize,
        (c[4] * DROPOUT_RANGE.1).clamp(DROPOUT_RANGE.0, DROPOUT_RANGE.1),
        learning_rate,
    )
}

/// Snap a unit-cube point onto the encodings of valid specs.
pub fn snap(v: &[f64]) -> Result<[f64; ENCODED_DIM]> {
    Ok(encode(&decode(v)?))
}

/// Matérn 5/2 ARD kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpHyper {
    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            length_scales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_var: theta[d].exp(),
            noise_var: theta[d + 1].exp(),
        }
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        let s = (5.0 * r2).sqrt();
        self.signal_var * (1.0 + s + 5.0 * r2 / 3.0) * (-s).exp()
    }
}

/// Fitted GP surrogate on standardized targets.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_sd: f64,
    hyper: GpHyper,
    jitter: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    log_marginal_likelihood: f64,
}

struct Factor {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    lml: f64,
}

fn factorize(x: &[Vec<f64>], z: &[f64], hyper: &GpHyper) -> Result<Factor> {
    let n = x.len();
    let mut base = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = hyper.kernel(&x[i], &x[j]);
            base[i * n + j] = k;
            base[j * n + i] = k;
        }
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += hyper.noise_var + jitter;
        }
        if cholesky_in_place(&mut a, n) {
            let v = forward_substitute(&a, n, z);
            let alpha = backward_substitute_transposed(&a, n, &v);
            let log_det: f64 = (0..n).map(|i| a[i * n + i].ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * v.iter().map(|t| t * t).sum::<f64>() - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Ok(Factor {
                chol: a,
                alpha,
                jitter,
                lml,
            });
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization { max_jitter: JITTER_MAX })
}

/// Merge rows closer than the duplicate tolerance, averaging their targets.
fn merge_duplicates(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (row, &t) in x.iter().zip(y) {
        let hit = xs.iter().position(|u| {
            u.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < DUPLICATE_TOLERANCE
        });
        match hit {
            Some(i) => {
                sums[i].0 += t;
                sums[i].1 += 1;
            }
            None => {
                xs.push(row.clone());
                sums.push((t, 1));
            }
        }
    }
    (xs, sums.into_iter().map(|(s, c)| s / c as f64).collect())
}

fn validate_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Invalid("a GP fit needs at least two points".into()));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("GP inputs must share one positive dimension".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GP training data".into()));
    }
    Ok(d)
}

impl GpModel {
    /// Fit with fixed kernel hyperparameters.
    pub fn fit_with(x: &[Vec<f64>], y: &[f64], hyper: GpHyper) -> Result<Self> {
        let d = validate_inputs(x, y)?;
        if hyper.length_scales.len() != d {
            return Err(Error::Shape("one length scale per input dimension".into()));
        }
        if hyper.length_scales.iter().chain([&hyper.signal_var]).any(|v| !(*v > 0.0)) || !(hyper.noise_var >= 0.0) {
            return Err(Error::OutOfRange("kernel hyperparameters must be positive".into()));
        }
        let (x, y) = merge_duplicates(x, y);
        let (y_mean, y_sd, z) = standardize(&y);
        let f = factorize(&x, &z, &hyper)?;
        Ok(Self {
            x,
            y_mean,
            y_sd,
            hyper,
            jitter: f.jitter,
            chol: f.chol,
            alpha: f.alpha,
            log_marginal_likelihood: f.lml,
        })
    }

    /// Fit with hyperparameters maximizing the log marginal likelihood.
    pub fn fit(x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Self> {
        let d = validate_inputs(x, y)?;
        let (xm, ym) = merge_duplicates(x, y);
        let (_, _, z) = standardize(&ym);
        let bounds: Vec<(f64, f64)> = std::iter::repeat_n(LENGTH_SCALE_BOUNDS, d)
            .chain([SIGNAL_VAR_BOUNDS, NOISE_VAR_BOUNDS])
            .map(|(lo, hi)| (lo.ln(), hi.ln()))
            .collect();
        let objective = |theta: &[f64]| -> f64 {
            factorize(&xm, &z, &GpHyper::from_log(theta)).map_or(f64::NEG_INFINITY, |f| f.lml)
        };
        let mut rng = rng::stream(seed, "gp-fit");
        let mut best: Option<(f64, Vec<f64>)> = None;
        for restart in 0..GP_RESTARTS {
            let start: Vec<f64> = if restart == 0 {
                let mut s = vec![0.5f64.ln(); d];
                s.extend([1.0f64.ln(), 1e-3f64.ln()]);
                s
            } else {
                bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
            };
            let (value, theta) = coordinate_search(&objective, start, &bounds);
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, theta));
            }
        }
        let (value, theta) = best.expect("at least one restart");
        if !value.is_finite() {
            return Err(Error::Factorization { max_jitter: JITTER_MAX });
        }
        Self::fit_with(x, y, GpHyper::from_log(&theta))
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    pub fn n_points(&self) -> usize {
        self.x.len()
    }

    /// Prior variance of the latent function in target units.
    pub fn prior_variance(&self) -> f64 {
        self.hyper.signal_var * self.y_sd * self.y_sd
    }

    /// Predictive mean and latent variance (clamped at 0) in target units.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let k: Vec<f64> = self.x.iter().map(|xi| self.hyper.kernel(xi, x)).collect();
        let mean_z: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward_substitute(&self.chol, n, &k);
        let var_z = (self.hyper.signal_var - v.iter().map(|t| t * t).sum::<f64>()).max(0.0);
        (self.y_mean + self.y_sd * mean_z, var_z * self.y_sd * self.y_sd)
    }
}

fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 1e-12 { sd } else { 1.0 };
    (mean, sd, y.iter().map(|v| (v - mean) / sd).collect())
}

/// Bounded coordinate ascent: try `±step` along each axis, halve the step when
/// no axis improves.
fn coordinate_search(f: &impl Fn(&[f64]) -> f64, mut theta: Vec<f64>, bounds: &[(f64, f64)]) -> (f64, Vec<f64>) {
    let mut value = f(&theta);
    let mut evals = 1;
    let mut step = 1.0;
    while step > 1e-3 && evals < MAX_EVALS_PER_RESTART {
        let mut improved = false;
        for i in 0..theta.len() {
            for dir in [1.0, -1.0] {
                let mut trial = theta.clone();
                trial[i] = (trial[i] + dir * step).clamp(bounds[i].0, bounds[i].1);
                if trial[i] == theta[i] {
                    continue;
                }
                let v = f(&trial);
                evals += 1;
                if v > value {
                    value = v;
                    theta = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (value, theta)
}

/// Expected improvement over `best` for a maximized objective.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    let gain = mean - best;
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Next spec to evaluate: the EI maximizer over [`N_CANDIDATES`] snapped
/// uniform candidates, or a uniform random spec without a surrogate.
pub fn propose_next(gp: Option<&GpModel>, best: f64, rng: &mut Rng) -> Result<ArchSpec> {
    let Some(gp) = gp else {
        let u: Vec<f64> = (0..ENCODED_DIM).map(|_| rng.random::<f64>()).collect();
        return decode(&u);
    };
    // strict comparison keeps the lowest index among ties
    let mut best_ei = f64::NEG_INFINITY;
    let mut best_point = [0.0; ENCODED_DIM];
    for _ in 0..N_CANDIDATES {
        let u: Vec<f64> = (0..ENCODED_DIM).map(|_| rng.random::<f64>()).collect();
        let s = snap(&u)?;
        let (m, v) = gp.posterior(&s);
        let ei = expected_improvement(m, v, best);
        if ei > best_ei {
            best_ei = ei;
            best_point = s;
        }
    }
    decode(&best_point)
}

/// Seeded Latin hypercube of `n` points in `[0, 1]^dim`.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            points[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

/// Result of evaluating one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub fold_scores: Vec<f64>,
}

impl From<f64> for Evaluation {
    fn from(objective: f64) -> Self {
        Self {
            objective,
            fold_scores: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub spec: ArchSpec,
    /// `None` marks a failed trial (non-finite objective), scored as `-inf`.
    pub objective: Option<f64>,
    pub fold_scores: Vec<f64>,
    /// Wall time; kept out of the serialized log so logs are reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl TrialRecord {
    pub fn score(&self) -> f64 {
        self.objective.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: TrialRecord,
    pub trials: Vec<TrialRecord>,
}

impl SearchResult {
    /// One JSON record per line, in trial order.
    pub fn trial_log(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// `trial,seconds` lines.
    pub fn timings(&self) -> String {
        let mut out = String::from("trial,seconds\n");
        for t in &self.trials {
            out.push_str(&format!("{},{:.6}\n", t.trial, t.seconds));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub budget: usize,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            n_init: DEFAULT_N_INIT,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init < 2 {
            return Err(Error::OutOfRange(format!("n_init {} must be at least 2", self.n_init)));
        }
        if self.budget < self.n_init {
            return Err(Error::OutOfRange(format!(
                "budget {} is smaller than n_init {}",
                self.budget, self.n_init
            )));
        }
        Ok(())
    }
}

fn run_trial<F>(objective: &mut F, trial: usize, spec: ArchSpec) -> Result<TrialRecord>
where
    F: FnMut(&ArchSpec) -> Result<Evaluation>,
{
    let started = Instant::now();
    let eval = objective(&spec)?;
    Ok(TrialRecord {
        trial,
        spec,
        objective: eval.objective.is_finite().then_some(eval.objective),
        fold_scores: eval.fold_scores,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn finish(trials: Vec<TrialRecord>) -> Result<SearchResult> {
    let mut best: Option<&TrialRecord> = None;
    for t in &trials {
        if t.objective.is_some() && best.is_none_or(|b| t.score() > b.score()) {
            best = Some(t);
        }
    }
    let best = best
        .ok_or_else(|| Error::Degenerate("every trial failed".into()))?
        .clone();
    Ok(SearchResult { best, trials })
}

/// Bayesian-optimization search: `n_init` Latin-hypercube trials, then
/// fit-propose-evaluate until the budget is spent.
pub fn bo_search<F>(mut objective: F, config: &SearchConfig) -> Result<SearchResult>
where
    F: FnMut(&ArchSpec) -> Result<Evaluation>,
{
    config.validate()?;
    let mut init_rng = rng::stream(config.seed, "bo-init");
    let mut trials = Vec::with_capacity(config.budget);
    for u in latin_hypercube(config.n_init, ENCODED_DIM, &mut init_rng) {
        let spec = decode(&u)?;
        trials.push(run_trial(&mut objective, trials.len(), spec)?);
    }
    while trials.len() < config.budget {
        let idx = trials.len() as u64;
        let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.objective.is_some()).collect();
        let mut rng = rng::stream_indexed(config.seed, "bo-propose", idx);
        let spec = if ok.len() >= 2 {
            let x: Vec<Vec<f64>> = ok.iter().map(|t| encode(&t.spec).to_vec()).collect();
            let y: Vec<f64> = ok.iter().map(|t| t.score()).collect();
            let best = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let gp = GpModel::fit(&x, &y, rng::derive_indexed(config.seed, "gp", idx))?;
            propose_next(Some(&gp), best, &mut rng)?
        } else {
            propose_next(None, f64::NEG_INFINITY, &mut rng)?
        };
        trials.push(run_trial(&mut objective, trials.len(), spec)?);
    }
    finish(trials)
}

/// Uniform random search over the same space.
pub fn random_search<F>(mut objective: F, budget: usize, seed: u64) -> Result<SearchResult>
where
    F: FnMut(&ArchSpec) -> Result<Evaluation>,
{
    if budget == 0 {
        return Err(Error::OutOfRange("budget must be positive".into()));
    }
    let mut rng = rng::stream(seed, "random-search");
    let mut trials = Vec::with_capacity(budget);
    for i in 0..budget {
        let spec = propose_next(None, f64::NEG_INFINITY, &mut rng)?;
        trials.push(run_trial(&mut objective, i, spec)?);
    }
    finish(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(a: Activation, u: usize, l: usize, d: f64, lr: f64) -> ArchSpec {
        ArchSpec::new(a, u, l, d, lr).unwrap()
    }

    #[test]
    fn encoding_examples() {
        let lo = encode(&spec(Activation::Relu, 32, 1, 0.0, 1e-4));
        assert_eq!(lo, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let hi = encode(&spec(Activation::Sigmoid, 512, 3, 0.5, 1e-2));
        for (a, b) in hi.iter().zip([0.0, 1.0, 1.0, 1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let mid = encode(&spec(Activation::Relu, 32, 1, 0.0, 1e-3));
        assert!((mid[5] - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            sig in any::<bool>(),
            units in 32usize..=512,
            layers in 1usize..=3,
            dropout in 0.0f64..=0.5,
            log_lr in -4.0f64..=-2.0,
        ) {
            let a = if sig { Activation::Sigmoid } else { Activation::Relu };
            let s = spec(a, units, layers, dropout, 10f64.powf(log_lr));
            let back = decode(&encode(&s)).unwrap();
            prop_assert_eq!(back.activation, s.activation);
            prop_assert_eq!(back.units, s.units);
            prop_assert_eq!(back.n_layers, s.n_layers);
            prop_assert!((back.dropout_rate - s.dropout_rate).abs() < 1e-12);
            prop_assert!(((back.learning_rate - s.learning_rate) / s.learning_rate).abs() < 1e-12);
        }

        #[test]
        fn ei_is_non_negative_and_monotone_in_sigma(mu in -3.0f64..0.0, s1 in 0.0f64..3.0, ds in 0.0f64..3.0) {
            let a = expected_improvement(mu, s1 * s1, 0.0);
            let b = expected_improvement(mu, (s1 + ds).powi(2), 0.0);
            prop_assert!(a >= 0.0);
            prop_assert!(b >= a - 1e-15);
        }
    }

    #[test]
    fn integer_snapping_rounds_half_up() {
        // units: 32 + 0.5/480 * 480 = 32.5 -> 33
        let s = decode(&[1.0, 0.0, 0.5 / 480.0, 0.25, 0.0, 0.0]).unwrap();
        assert_eq!((s.units, s.n_layers), (33, 2));
        assert_eq!(decode(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap().activation, Activation::Relu);
        assert!(decode(&[0.0; 5]).is_err());
    }

    #[test]
    fn ei_reference_values() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 1.0);
        assert!((expected_improvement(1.0, 1.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    fn fixed_hyper(noise: f64) -> GpHyper {
        GpHyper {
            length_scales: vec![0.3; 2],
            signal_var: 1.0,
            noise_var: noise,
        }
    }

    #[test]
    fn noiseless_gp_interpolates() {
        let x = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.3], vec![0.3, 0.6]];
        let y = vec![1.0, -2.0, 0.5, 3.0];
        let gp = GpModel::fit_with(&x, &y, fixed_hyper(0.0)).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, v) = gp.posterior(xi);
            assert!((m - yi).abs() < 1e-6, "{m} vs {yi}");
            assert!(v < 1e-6);
        }
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let x = vec![vec![0.0, 0.0], vec![0.1, 0.0]];
        let y = vec![1.0, 3.0];
        let gp = GpModel::fit_with(&x, &y, GpHyper { length_scales: vec![0.05; 2], ..fixed_hyper(1e-6) }).unwrap();
        let (m, v) = gp.posterior(&[50.0, 50.0]);
        assert!((m - 2.0).abs() < 1e-9);
        assert!((v - gp.prior_variance()).abs() < 0.01 * gp.prior_variance());
    }

    #[test]
    fn fitted_gp_on_two_distant_points_interpolates() {
        let x = vec![vec![0.0; 6], vec![1.0; 6]];
        let y = vec![0.2, 0.9];
        let gp = GpModel::fit(&x, &y, 3).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((gp.posterior(xi).0 - yi).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_targets_and_duplicates() {
        let x = vec![vec![0.1, 0.1], vec![0.9, 0.4], vec![0.1, 0.1]];
        let y = vec![0.7, 0.7, 0.7];
        let gp = GpModel::fit(&x, &y, 0).unwrap();
        assert_eq!(gp.n_points(), 2);
        let mut r = rng::stream(0, "probe");
        for _ in 0..10_000 {
            let p = [r.random::<f64>(), r.random::<f64>()];
            let (m, v) = gp.posterior(&p);
            assert!((m - 0.7).abs() < 1e-9);
            assert!(v >= 0.0 && v <= gp.prior_variance() + 1e-12);
        }
    }

    #[test]
    fn proposal_lands_in_the_high_basin() {
        let target = encode(&spec(Activation::Sigmoid, 400, 3, 0.4, 5e-3));
        let mut r = rng::stream(1, "data");
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..30 {
            let p = snap(&(0..6).map(|_| r.random::<f64>()).collect::<Vec<_>>()).unwrap();
            y.push(-p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
            x.push(p.to_vec());
        }
        x.push(target.to_vec());
        y.push(0.0);
        let gp = GpModel::fit(&x, &y, 2).unwrap();
        let best = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p = propose_next(Some(&gp), best, &mut rng::stream(5, "prop")).unwrap();
        let e = encode(&p);
        let dist = e.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dist < 0.6, "proposal {p:?} at distance {dist}");
        let again = propose_next(Some(&gp), best, &mut rng::stream(5, "prop")).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn latin_hypercube_covers_each_stratum_once() {
        let pts = latin_hypercube(8, 6, &mut rng::stream(0, "lhs"));
        for j in 0..6 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[j] * 8.0) as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
    }

    fn distance_objective(target: [f64; 6]) -> impl FnMut(&ArchSpec) -> Result<Evaluation> {
        move |s: &ArchSpec| {
            let e = encode(s);
            Ok((-e.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).into())
        }
    }

    #[test]
    fn search_contracts() {
        let target = [1.0, 0.0, 0.4, 0.5, 0.3, 0.6];
        let cfg = SearchConfig {
            budget: 4,
            n_init: 4,
            seed: 1,
        };
        let r = bo_search(distance_objective(target), &cfg).unwrap();
        assert_eq!(r.trials.len(), 4);
        assert!(bo_search(distance_objective(target), &SearchConfig { budget: 1, n_init: 2, seed: 0 }).is_err());

        let cfg = SearchConfig {
            budget: 12,
            n_init: 4,
            seed: 9,
        };
        let a = bo_search(distance_objective(target), &cfg).unwrap();
        let b = bo_search(distance_objective(target), &cfg).unwrap();
        assert_eq!(a.trial_log().unwrap(), b.trial_log().unwrap());
        assert!(a.trials.iter().enumerate().all(|(i, t)| t.trial == i));
    }

    #[test]
    fn failed_trials_are_logged_and_skipped() {
        let mut calls = 0;
        let objective = |s: &ArchSpec| -> Result<Evaluation> {
            calls += 1;
            Ok(if calls % 3 == 0 { f64::NAN } else { -(s.units as f64) }.into())
        };
        let r = bo_search(objective, &SearchConfig { budget: 9, n_init: 3, seed: 4 }).unwrap();
        assert_eq!(r.trials.iter().filter(|t| t.objective.is_none()).count(), 3);
        assert!(r.best.objective.is_some());
        assert!(r.trial_log().unwrap().contains("\"objective\":null"));
    }
}
