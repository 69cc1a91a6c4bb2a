//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p naswd-core --test acceptance -- 3 5`.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution};

use naswd_core::baselines::plsr_fit;
use naswd_core::config::{default_arch, task_table};
use naswd_core::eval::{
    classification_metrics, one_way_anova, regression_metrics, run_cv, tune_naswd, CvConfig, EvalReport, ModelFamily,
};
use naswd_core::hsi::{calibrate_reflectance, read_cube, reflectance_ratio};
use naswd_core::maps::{bin_hardness, encode_class_map, encode_hardness_map};
use naswd_core::nas::{bo_search, encode, expected_improvement, random_search, snap, Evaluation, GpHyper, GpModel, SearchConfig};
use naswd_core::nn::{DenseLayer, DenseStack, Targets, Trainable};
use naswd_core::preproc::{extract_regions, ExtractConfig};
use naswd_core::special::f_cdf;
use naswd_core::synth::{read_labels, sample_rows, synth_table, write_dataset, SyntheticSpec};
use naswd_core::widedeep::CubePrediction;
use naswd_core::{
    rng, Activation, ArchSpec, BandAxis, CubeKind, HyperCube, LossKind, Region, Severity, SpectraTable, Task, TrainConfig,
    WideDeepModel,
};

// Tolerances and thresholds.
const GRAD_MODELS: usize = 50;
const GRAD_MAX_REL_ERR: f64 = 1e-4;
/// Step of the five-point central-difference stencil.
const GRAD_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
const GRAD_REL_FLOOR: f64 = 1e-6;
const GRAD_SECONDS: f64 = 60.0;
const WIDE_INPUTS: usize = 1000;
const WIDE_TOL: f64 = 1e-12;
const CALIB_TOL: f64 = 1e-12;
const BO_SEEDS: u64 = 20;
const BO_BUDGET: usize = 30;
const BO_INIT: usize = 8;
const BO_RANDOM_REPEATS: u64 = 11;
const BO_MIN_WINS: usize = 16;
const GP_INTERP_TOL: f64 = 1e-6;
const EI_AT_ZERO: f64 = 0.39894;
const EI_TOL: f64 = 1e-4;
const E2E_MIN_ACCURACY: f64 = 0.90;
const E2E_MIN_R: f64 = 0.70;
const E2E_BUDGET: usize = 16;
const E2E_INIT: usize = 6;
const E2E_MAX_EPOCHS: usize = 300;
const E2E_PATIENCE: usize = 30;
const E2E_TUNE_SEED: u64 = 1;
const E2E_EVAL_SEED: u64 = 2;
const E2E_SECONDS: f64 = 1800.0;
const PLS_OLS_TOL: f64 = 1e-10;
const PLS_R2_TOL: f64 = 1e-8;
const ANOVA_TOL: f64 = 1e-10;
const F_CDF_TOL: f64 = 0.01;
const F_CDF_DRAWS: usize = 100_000;
const METRIC_TOL: f64 = 1e-12;
const FORCE_DRAWS: usize = 10_000;
const FORCE_MEAN_TOL: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut rng::Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn random_model(rng: &mut rng::Rng) -> (WideDeepModel, Task) {
    let d = rng.random_range(1..=32);
    let units = rng.random_range(1..=16);
    let layers = rng.random_range(1..=3);
    let activation = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Sigmoid };
    let task = if rng.random_bool(0.5) { Task::Classify3 } else { Task::Regress1 };
    let k = task.outputs();
    let mut dims = vec![d];
    dims.extend(std::iter::repeat_n(units, layers));
    dims.push(k);
    let mut acts = vec![activation; layers];
    acts.push(Activation::Identity);
    let mut deep = DenseStack::glorot(&dims, &acts, rng).unwrap();
    for layer in deep.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let mut wide = DenseLayer::glorot(d, k, Activation::Identity, rng);
    wide.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    let arch = ArchSpec {
        activation,
        units,
        n_layers: layers,
        dropout_rate: 0.0,
        learning_rate: 1e-3,
    };
    let (a_w, a_d) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5));
    (WideDeepModel::from_parts(task, arch, Some((wide, a_w, a_d)), deep).unwrap(), task)
}

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = rng::stream(1, "acceptance-grad");
    let mut worst: f64 = 0.0;
    for _ in 0..GRAD_MODELS {
        let (m, task) = random_model(&mut rng);
        let n = 6;
        let x = random_matrix(n, m.input_dim(), &mut rng);
        let (y, loss) = match task {
            Task::Classify3 => (Targets::Classes((0..n).map(|i| i % 3).collect()), LossKind::SparseCce),
            Task::Regress1 => (Targets::Values(random_matrix(n, 1, &mut rng)), LossKind::Mse),
        };
        let mut unused = rng::stream(0, "unused");
        let (_, grads) = m.loss_and_grads(x.view(), &y, loss, 0.0, &mut unused).unwrap();
        for (slot, len) in m.param_lens().into_iter().enumerate() {
            for i in 0..len {
                let at = |delta: f64| {
                    let mut p = m.clone();
                    p.params_mut()[slot][i] += delta;
                    p.eval_loss(x.view(), &y, loss).unwrap()
                };
                let h = GRAD_STEP;
                let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                let g = grads[slot][i];
                worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(GRAD_REL_FLOOR));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < GRAD_MAX_REL_ERR && secs < GRAD_SECONDS,
        format!("max relative error {worst:.2e} over {GRAD_MODELS} models in {secs:.1} s"),
    )
}

fn c2_wide_reduction() -> Outcome {
    let mut rng = rng::stream(2, "acceptance-wide");
    let d = 20;
    let arch = ArchSpec::new(Activation::Relu, 32, 2, 0.0, 1e-3).unwrap();
    let mut worst: f64 = 0.0;
    for task in [Task::Classify3, Task::Regress1] {
        let mut m = WideDeepModel::build(&arch, d, task, 5).unwrap();
        m.set_combiner(1.3, 0.7);
        for layer in m.deep_mut().layers_mut() {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        let x = random_matrix(WIDE_INPUTS, d, &mut rng);
        let got = m.predict_batch(x.view()).unwrap();
        let w = m.wide_layer().unwrap();
        let (a_w, _) = m.combiner().unwrap();
        for i in 0..WIDE_INPUTS {
            for o in 0..task.outputs() {
                let lin: f64 = w.bias[o] + (0..d).map(|j| w.weights[[o, j]] * x[[i, j]]).sum::<f64>();
                worst = worst.max((got[[i, o]] - a_w * lin).abs());
            }
        }
    }
    outcome(worst <= WIDE_TOL, format!("max deviation {worst:.2e} on {WIDE_INPUTS} inputs per task"))
}

fn c3_calibration() -> Outcome {
    let mut rng = rng::stream(3, "acceptance-calib");
    let (lines, samples, bands) = (5, 7, 11);
    let axis = BandAxis::linspace(400.0, 1000.0, bands).unwrap();
    let n = lines * samples * bands;
    let dark: Vec<f64> = (0..n).map(|_| rng.random_range(90.0..200.0)).collect();
    let white: Vec<f64> = dark.iter().map(|d| d + rng.random_range(500.0..3500.0)).collect();
    let cube = |data: Vec<f64>, kind| HyperCube::new(lines, samples, axis.clone(), data, kind).unwrap();
    let (dc, wc) = (cube(dark.clone(), CubeKind::Dark), cube(white.clone(), CubeKind::White));
    let ones = calibrate_reflectance(&cube(white.clone(), CubeKind::Raw), &dc, &wc).unwrap().cube;
    let zeros = calibrate_reflectance(&cube(dark.clone(), CubeKind::Raw), &dc, &wc).unwrap().cube;
    let ones_dev = ones.data().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let zeros_dev = zeros.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut affine_dev: f64 = 0.0;
    for i in 0..n {
        let (d, w) = (dark[i], white[i]);
        let (t1, t2, a) = (rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), rng.random_range(-2.0..2.0));
        let (r1, r2) = (d + t1 * (w - d), d + t2 * (w - d));
        let f = |raw: f64| reflectance_ratio(raw, d, w).unwrap();
        affine_dev = affine_dev.max((f(r1) - t1).abs());
        // affine in raw: f(a r1 + (1 - a) r2) = a f(r1) + (1 - a) f(r2)
        affine_dev = affine_dev.max((f(a * r1 + (1.0 - a) * r2) - (a * f(r1) + (1.0 - a) * f(r2))).abs());
    }
    outcome(
        ones_dev <= CALIB_TOL && zeros_dev <= CALIB_TOL && affine_dev <= CALIB_TOL,
        format!("white->1 dev {ones_dev:.1e}, dark->0 dev {zeros_dev:.1e}, affine dev {affine_dev:.1e}"),
    )
}

fn distance_objective(target: [f64; 6]) -> impl FnMut(&ArchSpec) -> naswd_core::Result<Evaluation> {
    move |s| Ok((-encode(s).iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).into())
}

fn c4_bo_vs_random() -> Outcome {
    let mut wins = 0;
    let mut margins = Vec::new();
    for seed in 0..BO_SEEDS {
        let mut r = rng::stream(seed, "acceptance-target");
        let u: Vec<f64> = (0..6).map(|_| r.random::<f64>()).collect();
        let target = snap(&u).unwrap();
        let cfg = SearchConfig {
            budget: BO_BUDGET,
            n_init: BO_INIT,
            seed,
        };
        let bo = bo_search(distance_objective(target), &cfg).unwrap().best.score();
        let mut rand_best: Vec<f64> = (0..BO_RANDOM_REPEATS)
            .map(|j| {
                random_search(distance_objective(target), BO_BUDGET, rng::derive_indexed(seed, "random", j))
                    .unwrap()
                    .best
                    .score()
            })
            .collect();
        rand_best.sort_by(f64::total_cmp);
        let median = rand_best[rand_best.len() / 2];
        wins += usize::from(bo >= median);
        margins.push(bo - median);
    }
    let mean_margin = margins.iter().sum::<f64>() / margins.len() as f64;
    outcome(
        wins >= BO_MIN_WINS,
        format!("BO >= random median in {wins}/{BO_SEEDS} seeds (mean margin {mean_margin:+.4})"),
    )
}

fn c5_gp() -> Outcome {
    let x = vec![vec![0.1, 0.2, 0.7], vec![0.5, 0.9, 0.1], vec![0.8, 0.3, 0.4], vec![0.3, 0.6, 0.9], vec![0.95, 0.05, 0.5]];
    let y = vec![1.0, -2.0, 0.5, 3.0, -0.7];
    let hyper = GpHyper {
        length_scales: vec![0.4; 3],
        signal_var: 1.0,
        noise_var: 0.0,
    };
    let gp = GpModel::fit_with(&x, &y, hyper).unwrap();
    let interp = x.iter().zip(&y).map(|(xi, yi)| (gp.posterior(xi).0 - yi).abs()).fold(0.0, f64::max);
    let ei0 = expected_improvement(0.7, 0.0, 0.7);
    let ei1 = expected_improvement(0.7, 1.0, 0.7);
    outcome(
        interp <= GP_INTERP_TOL && ei0 == 0.0 && (ei1 - EI_AT_ZERO).abs() <= EI_TOL,
        format!("interpolation error {interp:.1e}, EI(sd=0) = {ei0}, EI(sd=1) = {ei1:.6}"),
    )
}

fn e2e_cv(task: Task, seed: u64) -> CvConfig {
    CvConfig {
        seed,
        train: TrainConfig {
            max_epochs: E2E_MAX_EPOCHS,
            patience: E2E_PATIENCE,
            loss: task.loss(),
            ..TrainConfig::default()
        },
        ..CvConfig::default()
    }
}

fn c6_end_to_end() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec::default();
    let table = synth_table(&spec, &ExtractConfig::default()).unwrap();
    let search = SearchConfig {
        budget: E2E_BUDGET,
        n_init: E2E_INIT,
        seed: E2E_TUNE_SEED,
    };

    let (cls, _) = task_table(&table, Task::Classify3, spec_ceiling()).unwrap();
    let tuned = tune_naswd(Task::Classify3, &cls, &e2e_cv(Task::Classify3, E2E_TUNE_SEED), &search).unwrap();
    let eval = e2e_cv(Task::Classify3, E2E_EVAL_SEED);
    let arch = tuned.best.spec;
    let acc_wd = run_cv(&ModelFamily::Naswd { spec: arch }, Task::Classify3, &cls, &eval).unwrap().objective;
    // the baseline is an MLP without architecture search; the same-spec
    // deep-only ablation is reported alongside
    let acc_mlp = run_cv(&ModelFamily::Mlp { spec: default_arch() }, Task::Classify3, &cls, &eval).unwrap().objective;
    let acc_ablation = run_cv(&ModelFamily::Mlp { spec: arch }, Task::Classify3, &cls, &eval).unwrap().objective;

    let (reg, removed) = task_table(&table, Task::Regress1, spec_ceiling()).unwrap();
    let tuned = tune_naswd(Task::Regress1, &reg, &e2e_cv(Task::Regress1, E2E_TUNE_SEED), &search).unwrap();
    let eval = e2e_cv(Task::Regress1, E2E_EVAL_SEED);
    let pooled_r = |r: EvalReport| r.regression.unwrap().pooled.r;
    let r_wd = pooled_r(run_cv(&ModelFamily::Naswd { spec: tuned.best.spec }, Task::Regress1, &reg, &eval).unwrap());
    let r_pls = pooled_r(run_cv(&ModelFamily::plsr(), Task::Regress1, &reg, &eval).unwrap());

    let secs = start.elapsed().as_secs_f64();
    let pass = acc_wd >= acc_mlp && acc_wd >= E2E_MIN_ACCURACY && r_wd >= r_pls && r_wd >= E2E_MIN_R && secs < E2E_SECONDS;
    outcome(
        pass,
        format!(
            "accuracy NAS-WD {acc_wd:.3} vs MLP {acc_mlp:.3} (deep-only with tuned spec {acc_ablation:.3}); r NAS-WD {r_wd:.3} vs PLSR {r_pls:.3} \
             ({} regression rows, {removed} outliers removed); {E2E_BUDGET} trials per task; {secs:.0} s",
            reg.len()
        ),
    )
}

fn spec_ceiling() -> f64 {
    naswd_core::synth::DEFAULT_OUTLIER_CEILING_N
}

fn c7_plsr() -> Outcome {
    let mut rng = rng::stream(7, "acceptance-pls");
    let n = 40;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.7 * v - 0.4 + rng.random_range(-0.5..0.5)).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n as f64, y.iter().sum::<f64>() / n as f64);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    let model = plsr_fit(Array2::from_shape_vec((n, 1), x.clone()).unwrap().view(), Array1::from(y.clone()).view(), 1).unwrap();
    let ols_dev = x
        .iter()
        .map(|&v| (model.predict(Array1::from(vec![v]).view()).unwrap() - (my + slope * (v - mx))).abs())
        .fold(0.0, f64::max);

    let (n, p) = (30, 6);
    let xm = random_matrix(n, p, &mut rng);
    let beta = Array1::from_shape_fn(p, |_| rng.random_range(-2.0..2.0));
    let ym = xm.dot(&beta) + 0.3;
    let model = plsr_fit(xm.view(), ym.view(), p).unwrap();
    let pred = model.predict_batch(xm.view()).unwrap();
    let r2 = regression_metrics(pred.as_slice().unwrap(), ym.as_slice().unwrap()).unwrap().r2;
    outcome(
        ols_dev <= PLS_OLS_TOL && (r2 - 1.0).abs() <= PLS_R2_TOL,
        format!("1-component vs OLS dev {ols_dev:.1e}; full-rank training R2 - 1 = {:.1e}", r2 - 1.0),
    )
}

fn c8_anova() -> Outcome {
    let a = vec![4.1, 5.3, 6.0, 4.8, 5.9, 6.4];
    let b = vec![7.2, 6.8, 8.1, 7.7, 6.5];
    let res = one_way_anova(&[a.clone(), b.clone()]).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp2 = (ss(&a) + ss(&b)) / (na + nb - 2.0);
    let t = (mean(&a) - mean(&b)) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    let ft_dev = (res.f_stat - t * t).abs();

    let g = vec![1.0, 2.0, 4.0, 7.0];
    let same = one_way_anova(&[g.clone(), g.clone(), g]).unwrap();

    let mut rng = rng::stream(8, "acceptance-fcdf");
    let (c1, c2) = (ChiSquared::new(2.0).unwrap(), ChiSquared::new(27.0).unwrap());
    let mut draws: Vec<f64> = (0..F_CDF_DRAWS)
        .map(|_| (c1.sample(&mut rng) / 2.0) / (c2.sample(&mut rng) / 27.0))
        .collect();
    draws.sort_by(f64::total_cmp);
    let mut cdf_dev: f64 = 0.0;
    for probe in [0.25, 0.8, 1.5, 3.35, 5.5] {
        let empirical = draws.partition_point(|&v| v <= probe) as f64 / F_CDF_DRAWS as f64;
        let analytic = f_cdf(probe, 2.0, 27.0);
        cdf_dev = cdf_dev.max((empirical - analytic).abs());
    }
    outcome(
        ft_dev <= ANOVA_TOL && same.f_stat == 0.0 && same.p_value == 1.0 && cdf_dev <= F_CDF_TOL,
        format!(
            "|F - t^2| = {ft_dev:.1e}; identical groups F = {}, p = {}; F(2,27) CDF vs Monte Carlo max dev {cdf_dev:.4}",
            same.f_stat, same.p_value
        ),
    )
}

fn c9_metrics() -> Outcome {
    // labels/preds chosen so every count below is easy to check by hand
    let labels = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2];
    let preds = [0, 0, 1, 2, 1, 1, 0, 2, 2, 1];
    let (m, cm) = classification_metrics(&preds, &labels, &[]).unwrap();
    let cm_ok = cm.counts == [[2, 1, 1], [1, 2, 0], [0, 1, 2]];
    // per class (p, r): c0 (2/3, 2/4), c1 (2/4, 2/3), c2 (2/3, 2/3); supports 4, 3, 3
    let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
    let wp = 0.4 * (2.0 / 3.0) + 0.3 * 0.5 + 0.3 * (2.0 / 3.0);
    let wr = 0.4 * 0.5 + 0.3 * (2.0 / 3.0) + 0.3 * (2.0 / 3.0);
    let wf = 0.4 * f(2.0 / 3.0, 0.5) + 0.3 * f(0.5, 2.0 / 3.0) + 0.3 * f(2.0 / 3.0, 2.0 / 3.0);
    let mut dev = [(m.accuracy, 0.6), (m.precision, wp), (m.recall, wr), (m.f1, wf)]
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let t = [1.0, 2.0, 3.0, 4.0];
    let p = [1.5, 1.5, 3.5, 3.5];
    let rm = regression_metrics(&p, &t).unwrap();
    // mean 2.5; ss_tot 5; ss_res 1; cov sum 4; ss_pred 4
    for (got, want) in [(rm.r, 4.0 / (4.0f64 * 5.0).sqrt()), (rm.r2, 0.8), (rm.rmse, 0.5)] {
        dev = dev.max((got - want).abs());
    }
    let bins = [(3.5, 0), (3.51, 1), (7.1, 1), (10.8, 2), (10.81, 3), (0.0, 0)];
    let bins_ok = bins.iter().all(|&(v, b)| bin_hardness(v).unwrap() == b);
    outcome(
        cm_ok && dev <= METRIC_TOL && bins_ok,
        format!("confusion matrix {}; max metric dev {dev:.1e}; hardness bins {}", ok(cm_ok), ok(bins_ok)),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "match"
    } else {
        "MISMATCH"
    }
}

/// Artifacts of one full pipeline run from files.
#[derive(PartialEq)]
struct RunArtifacts {
    trial_log: String,
    eval_report: String,
    maps: Vec<Vec<u8>>,
}

fn full_run(dir: &Path) -> RunArtifacts {
    let spec = SyntheticSpec {
        n_per_class: [8, 8, 8],
        bands: 64,
        seed: 10,
        ..SyntheticSpec::default()
    };
    let manifest = write_dataset(&spec, dir).unwrap();
    let dark = read_cube(dir.join(&manifest.dark)).unwrap();
    let white = read_cube(dir.join(&manifest.white)).unwrap();
    let labels = read_labels(&dir.join(&manifest.labels)).unwrap();
    let extract = ExtractConfig::default();
    let mut rows = Vec::new();
    let mut cubes = Vec::new();
    for (rel, rec) in manifest.cubes.iter().zip(&labels) {
        let raw = read_cube(dir.join(rel)).unwrap();
        let refl = calibrate_reflectance(&raw, &dark, &white).unwrap().cube;
        let ex = extract_regions(&refl, &extract).unwrap();
        rows.extend(sample_rows(&rec.sample_id, rec.severity().unwrap(), |r| rec.force(r), &ex));
        cubes.push((refl, ex.mask));
    }
    let table = SpectraTable::new(rows).unwrap();
    let small_cv = |task: Task| CvConfig {
        k: 3,
        seed: 4,
        train: TrainConfig {
            max_epochs: 40,
            patience: 10,
            loss: task.loss(),
            ..TrainConfig::default()
        },
        ..CvConfig::default()
    };
    let (cls, _) = task_table(&table, Task::Classify3, spec_ceiling()).unwrap();
    let search = SearchConfig {
        budget: 4,
        n_init: 3,
        seed: 4,
    };
    let tuned = tune_naswd(Task::Classify3, &cls, &small_cv(Task::Classify3), &search).unwrap();
    let report = run_cv(&ModelFamily::Naswd { spec: tuned.best.spec }, Task::Classify3, &cls, &small_cv(Task::Classify3)).unwrap();

    let mut maps = Vec::new();
    let cv = small_cv(Task::Classify3);
    let mut clf = WideDeepModel::build(&tuned.best.spec, table.bands(), Task::Classify3, 4).unwrap();
    clf.train_joint(&cls, &tuned.best.spec.train_config(&cv.train)).unwrap();
    let (reg, _) = task_table(&table.filter_region(Region::Cranial), Task::Regress1, 40.0).unwrap();
    let arch = default_arch();
    let mut regr = WideDeepModel::build(&arch, table.bands(), Task::Regress1, 4).unwrap();
    regr.train_joint(&reg, &arch.train_config(&small_cv(Task::Regress1).train)).unwrap();
    for (refl, mask) in cubes.iter().take(3) {
        if let CubePrediction::Classes(m) = clf.predict_cube(refl, mask).unwrap() {
            maps.push(encode_class_map(&m).unwrap());
        }
        if let CubePrediction::Forces(m) = regr.predict_cube(refl, mask).unwrap() {
            maps.push(encode_hardness_map(&m).unwrap().0);
        }
    }
    RunArtifacts {
        trial_log: tuned.trial_log().unwrap(),
        eval_report: report.to_json().unwrap(),
        maps,
    }
}

fn c10_determinism() -> Outcome {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (a, b) = (full_run(d1.path()), full_run(d2.path()));
    let files_equal = walk(d1.path()).into_iter().all(|rel| fs::read(d1.path().join(&rel)).ok() == fs::read(d2.path().join(&rel)).ok());
    outcome(
        a.trial_log == b.trial_log && a.eval_report == b.eval_report && a.maps == b.maps && a.maps.len() == 6 && files_equal,
        format!(
            "trial logs {}, eval reports {}, {} map PNGs {}, dataset files {}",
            ok(a.trial_log == b.trial_log),
            ok(a.eval_report == b.eval_report),
            a.maps.len(),
            ok(a.maps == b.maps),
            ok(files_equal)
        ),
    )
}

fn walk(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn c11_generator() -> Outcome {
    let spec = SyntheticSpec {
        n_per_class: [FORCE_DRAWS; 3],
        seed: 11,
        ..SyntheticSpec::default()
    };
    let targets = [(Severity::Normal, 7.02), (Severity::Mild, 8.23), (Severity::Severe, 21.03)];
    let mut parts = Vec::new();
    let mut pass = true;
    for (c, (class, want)) in targets.iter().enumerate() {
        let mean = (c * FORCE_DRAWS..(c + 1) * FORCE_DRAWS)
            .map(|i| spec.forces(i).get(Region::Cranial))
            .sum::<f64>()
            / FORCE_DRAWS as f64;
        pass &= (mean - want).abs() <= FORCE_MEAN_TOL;
        parts.push(format!("{class} {mean:.3} (target {want})"));
    }
    outcome(pass, format!("cranial means over {FORCE_DRAWS} draws: {}", parts.join(", ")))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 11] = [
    (1, "gradient oracle", c1_gradients),
    (2, "wide reduction", c2_wide_reduction),
    (3, "calibration", c3_calibration),
    (4, "BO vs random search", c4_bo_vs_random),
    (5, "GP and EI sanity", c5_gp),
    (6, "synthetic end-to-end ordering", c6_end_to_end),
    (7, "PLSR oracle", c7_plsr),
    (8, "ANOVA oracle", c8_anova),
    (9, "metrics arithmetic", c9_metrics),
    (10, "determinism", c10_determinism),
    (11, "generator fidelity", c11_generator),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let o = run();
        failed += usize::from(!o.pass);
        println!("{} criterion {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
