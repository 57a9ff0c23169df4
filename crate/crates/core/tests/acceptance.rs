use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use hetsim::causal::{
    mcm_modified_problem, rl_modified_problem, transform_mcm, transform_mom_dr, transform_mom_ipw, transform_rlearn,
};
use hetsim::dgp::{
    build_population, compute_ite, Assignment, ItesSpec, Noise, PopulationOptions, PopulationSource,
    SyntheticPopConfig,
};
use hetsim::harness::{obtain_population, run_study, write_reports, StudyConfig};
use hetsim::metrics::{jarque_bera, per_unit_measures, read_report_csv, summarize, Level, PerformanceRow, PredictionTensor};
use hetsim::ml::forest::Node;
use hetsim::ml::{fit_lasso, fit_regression_forest, Family, ForestParams, LassoParams, Penalty};
use hetsim::rng::stream;

fn report(criterion: usize, checks: &[(String, bool)]) {
    let ok = checks.iter().all(|(_, pass)| *pass);
    let mut out = std::io::stdout();
    for (what, pass) in checks {
        writeln!(out, "  [{}] {what}", if *pass { "ok" } else { "FAILED" }).unwrap();
    }
    writeln!(out, "criterion {criterion}: {}", if ok { "PASS" } else { "FAIL" }).unwrap();
    assert!(ok, "criterion {criterion} failed");
}

fn check(what: impl Into<String>, pass: bool) -> (String, bool) {
    (what.into(), pass)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Weighted least squares of `y` on `x` through the normal equations.
fn wls(x: &Array2<f64>, y: &[f64], w: &[f64]) -> Vec<f64> {
    let (n, p) = x.dim();
    let a = DMatrix::from_fn(n, p, |i, j| x[[i, j]]);
    let aw = DMatrix::from_fn(n, p, |i, j| x[[i, j]] * w[i]);
    let xtx = aw.transpose() * &a;
    let xty = aw.transpose() * DVector::from_column_slice(y);
    xtx.lu().solve(&xty).expect("full rank").iter().copied().collect()
}

fn with_intercept(x: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), x.ncols() + 1), |(i, j)| if j == 0 { 1.0 } else { x[[i, j - 1]] })
}

fn exact_params(fit_intercept: bool) -> LassoParams {
    LassoParams { penalty: Penalty::Fixed(0.0), tol: 1e-24, fit_intercept, ..LassoParams::default() }
}

fn lasso_beta(x: &Array2<f64>, y: &[f64], w: &[f64], params: &LassoParams) -> Vec<f64> {
    let m = fit_lasso(x.view(), y, w, params, Family::Gaussian).unwrap();
    if params.fit_intercept {
        std::iter::once(m.intercept).chain(m.coefficients).collect()
    } else {
        m.coefficients
    }
}

/// Cell-level expectation of a pseudo-outcome over an enumerated population.
fn conditional_means(cells: &[usize], prob: &[f64], values: &[f64], n_cells: usize) -> Vec<f64> {
    let mut num = vec![0.0; n_cells];
    let mut den = vec![0.0; n_cells];
    for ((&c, &pr), &v) in cells.iter().zip(prob).zip(values) {
        num[c] += pr * v;
        den[c] += pr;
    }
    num.iter().zip(&den).map(|(a, b)| a / b).collect()
}

#[test]
fn criterion_1_transform_identities() {
    let start = Instant::now();
    // eight cells from three binary covariates
    let n_cells = 8;
    let weight = |c: usize| 1.0 + c as f64;
    let p = |c: usize| 0.15 + 0.09 * c as f64;
    let mu0 = |c: usize| 3.0 + 1.5 * (c & 1) as f64 - 2.0 * ((c >> 2) & 1) as f64;
    let tau = |c: usize| -1.0 + 0.75 * c as f64 - 0.1 * (c * c) as f64;
    let spread = 1.3;

    // atoms (cell, d, y) with their probabilities
    let (mut cells, mut prob, mut d, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let total: f64 = (0..n_cells).map(weight).sum();
    for c in 0..n_cells {
        for arm in [0.0, 1.0] {
            let pd = if arm == 1.0 { p(c) } else { 1.0 - p(c) };
            let mean = mu0(c) + arm * tau(c);
            for shock in [-spread, spread] {
                cells.push(c);
                prob.push(weight(c) / total * pd * 0.5);
                d.push(arm);
                y.push(mean + shock);
            }
        }
    }
    let at = |f: &dyn Fn(usize) -> f64| cells.iter().map(|&c| f(c)).collect::<Vec<f64>>();
    let truth: Vec<f64> = (0..n_cells).map(tau).collect();
    let (p_true, mu0_true) = (at(&p), at(&mu0));
    let mu1_true: Vec<f64> = cells.iter().map(|&c| mu0(c) + tau(c)).collect();
    let p_wrong = at(&|c| 0.5 + 0.3 * ((c as f64).sin()));
    let mu1_wrong: Vec<f64> = mu1_true.iter().zip(&cells).map(|(m, &c)| m + 2.0 * (c as f64).cos()).collect();
    let mu0_wrong: Vec<f64> = mu0_true.iter().zip(&cells).map(|(m, &c)| m - 0.4 * c as f64).collect();

    let ipw = transform_mom_ipw(&y, &d, &p_true).unwrap();
    let e_ipw = max_abs_diff(&conditional_means(&cells, &prob, &ipw.pseudo_outcome, n_cells), &truth);
    let dr_err = |pp: &[f64], m1: &[f64], m0: &[f64]| {
        let t = transform_mom_dr(&y, &d, pp, m1, m0).unwrap();
        max_abs_diff(&conditional_means(&cells, &prob, &t.pseudo_outcome, n_cells), &truth)
    };
    let e_dr = dr_err(&p_true, &mu1_true, &mu0_true);
    let e_p = dr_err(&p_wrong, &mu1_true, &mu0_true);
    let e_mu1 = dr_err(&p_true, &mu1_wrong, &mu0_true);
    let e_mu0 = dr_err(&p_true, &mu1_true, &mu0_wrong);
    let e_both = dr_err(&p_wrong, &mu1_wrong, &mu0_true);
    let secs = start.elapsed().as_secs_f64();

    report(
        1,
        &[
            check(format!("E[Y*_IPW | x] = tau(x): max error {e_ipw:.2e} <= 1e-10"), e_ipw <= 1e-10),
            check(format!("E[Y*_DR | x] = tau(x): max error {e_dr:.2e} <= 1e-10"), e_dr <= 1e-10),
            check(format!("DR with wrong p: max error {e_p:.2e} <= 1e-10"), e_p <= 1e-10),
            check(format!("DR with wrong mu1: max error {e_mu1:.2e} <= 1e-10"), e_mu1 <= 1e-10),
            check(format!("DR with wrong mu0: max error {e_mu0:.2e} <= 1e-10"), e_mu0 <= 1e-10),
            check(format!("DR with wrong p and mu1 is biased: error {e_both:.2e} > 1e-3"), e_both > 1e-3),
            check(format!("runtime {secs:.3} s < 1 s"), secs < 1.0),
        ],
    );
}

#[test]
fn criterion_2_formulation_equivalences() {
    let start = Instant::now();
    let (n, k) = (400, 3);
    let mut r = stream(2024);
    let x: Array2<f64> = Array2::from_shape_fn((n, k), |_| StandardNormal.sample(&mut r));
    let p: Vec<f64> = x.outer_iter().map(|row| 1.0 / (1.0 + (-(0.3 + 0.8 * row[0] - 0.5 * row[2])).exp())).collect();
    let d: Vec<f64> = p.iter().map(|&pi| if r.random::<f64>() < pi { 1.0 } else { 0.0 }).collect();
    let mu: Vec<f64> = x.outer_iter().map(|row| 2.0 + row[1] - 0.5 * row[0] * row[0]).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut r);
            mu[i] + d[i] * (1.0 + 0.7 * x[[i, 0]] - 0.4 * x[[i, 2]]) + e
        })
        .collect();
    let x1 = with_intercept(&x);

    // MCM: weighted problem vs modified covariates
    let weighted = transform_mcm(&y, &d, &p, None).unwrap();
    let b_weighted = lasso_beta(&x, &weighted.pseudo_outcome, &weighted.weights, &exact_params(true));
    let b_oracle = wls(&x1, &weighted.pseudo_outcome, &weighted.weights);
    let (design, modified) = mcm_modified_problem(x.view(), &y, &d, &p, None).unwrap();
    let b_modified = lasso_beta(&design, &modified.pseudo_outcome, &modified.weights, &exact_params(false));
    let e_mcm = max_abs_diff(&b_weighted, &b_modified);
    let e_mcm_oracle = max_abs_diff(&b_weighted, &b_oracle);

    // the same with efficiency augmentation
    let weighted = transform_mcm(&y, &d, &p, Some(&mu)).unwrap();
    let b_weighted_ea = lasso_beta(&x, &weighted.pseudo_outcome, &weighted.weights, &exact_params(true));
    let (design, modified) = mcm_modified_problem(x.view(), &y, &d, &p, Some(&mu)).unwrap();
    let b_modified_ea = lasso_beta(&design, &modified.pseudo_outcome, &modified.weights, &exact_params(false));
    let e_mcm_ea = max_abs_diff(&b_weighted_ea, &b_modified_ea);

    // R-learning: weighted problem vs modified covariates
    let weighted = transform_rlearn(&y, &d, &p, &mu).unwrap();
    let b_rl = lasso_beta(&x, &weighted.pseudo_outcome, &weighted.weights, &exact_params(true));
    let b_rl_oracle = wls(&x1, &weighted.pseudo_outcome, &weighted.weights);
    let (design, modified) = rl_modified_problem(x.view(), &y, &d, &p, &mu).unwrap();
    let b_rl_mod = lasso_beta(&design, &modified.pseudo_outcome, &modified.weights, &exact_params(false));
    let e_rl = max_abs_diff(&b_rl, &b_rl_mod);
    let e_rl_oracle = max_abs_diff(&b_rl, &b_rl_oracle);

    // R-learning and MCM-EA under 50:50 randomisation
    let half = vec![0.5; n];
    let rl = transform_rlearn(&y, &d, &half, &mu).unwrap();
    let ea = transform_mcm(&y, &d, &half, Some(&mu)).unwrap();
    let e_pseudo = max_abs_diff(&rl.pseudo_outcome, &ea.pseudo_outcome);
    let mut e_half: f64 = 0.0;
    for params in [exact_params(true), LassoParams { penalty: Penalty::Fixed(0.05), tol: 1e-24, ..LassoParams::default() }] {
        let a = lasso_beta(&x, &rl.pseudo_outcome, &rl.weights, &params);
        let b = lasso_beta(&x, &ea.pseudo_outcome, &ea.weights, &params);
        e_half = e_half.max(max_abs_diff(&a, &b));
    }
    let secs = start.elapsed().as_secs_f64();

    report(
        2,
        &[
            check(format!("MCM weighted vs modified covariates: {e_mcm:.2e} <= 1e-8"), e_mcm <= 1e-8),
            check(format!("MCM weighted vs normal equations: {e_mcm_oracle:.2e} <= 1e-8"), e_mcm_oracle <= 1e-8),
            check(format!("MCM-EA weighted vs modified covariates: {e_mcm_ea:.2e} <= 1e-8"), e_mcm_ea <= 1e-8),
            check(format!("R-learning weighted vs modified covariates: {e_rl:.2e} <= 1e-8"), e_rl <= 1e-8),
            check(format!("R-learning weighted vs normal equations: {e_rl_oracle:.2e} <= 1e-8"), e_rl_oracle <= 1e-8),
            check(format!("p = 0.5: R-learning and MCM-EA pseudo-outcomes agree: {e_pseudo:.2e}"), e_pseudo <= 1e-12),
            check(format!("p = 0.5: R-learning and MCM-EA coefficients agree: {e_half:.2e} <= 1e-8"), e_half <= 1e-8),
            check(format!("runtime {secs:.3} s < 5 s"), secs < 5.0),
        ],
    );
}

#[test]
fn criterion_3_base_learner_oracles() {
    let mut r = stream(77);
    let n = 50;
    let x: Array2<f64> = Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(&mut r));
    let y: Vec<f64> = x.outer_iter().map(|row| 1.0 + 2.0 * row[0] - row[1] + r.random::<f64>()).collect();
    let unit = vec![1.0; n];
    let random_w: Vec<f64> = (0..n).map(|_| 0.5 + r.random::<f64>()).collect();
    let params = LassoParams { tol: 1e-14, ..LassoParams::fixed(0.0) };
    let mut e_ols: f64 = 0.0;
    for w in [&unit, &random_w] {
        let b = lasso_beta(&x, &y, w, &params);
        e_ols = e_ols.max(max_abs_diff(&b, &wls(&with_intercept(&x), &y, w)));
    }

    // columns with (1/n) X'X = I
    let m = 64;
    let xo = Array2::from_shape_fn((m, 3), |(i, j)| {
        let period = [2usize, 4, 8][j];
        if (i / (m / period)) % 2 == 0 { 1.0 } else { -1.0 }
    });
    let yo: Vec<f64> = (0..m).map(|i| 0.8 * xo[[i, 0]] - 0.3 * xo[[i, 1]] + 0.05 * xo[[i, 2]] + r.random::<f64>() - 0.5).collect();
    let lam = 0.1;
    let ortho = LassoParams {
        penalty: Penalty::Fixed(lam),
        standardize: false,
        fit_intercept: false,
        tol: 1e-12,
        ..LassoParams::default()
    };
    let fit = fit_lasso(xo.view(), &yo, &vec![1.0; m], &ortho, Family::Gaussian).unwrap();
    let soft: Vec<f64> = (0..3)
        .map(|j| {
            let z = (0..m).map(|i| xo[[i, j]] * yo[i]).sum::<f64>() / m as f64;
            z.signum() * (z.abs() - lam).max(0.0)
        })
        .collect();
    let e_soft = max_abs_diff(&fit.coefficients, &soft);

    let nf = 400;
    let xf = Array2::from_shape_fn((nf, 4), |_| r.random::<f64>() * 2.0 - 1.0);
    let yf: Vec<f64> = xf.outer_iter().map(|row| (3.0 * row[0]).sin() + row[1] * row[2] + 0.3 * r.random::<f64>()).collect();
    let forest = fit_regression_forest(xf.view(), &yf, &ForestParams { n_trees: 200, seed: 5, ..ForestParams::default() }).unwrap();
    let queries = Array2::from_shape_fn((100, 4), |_| r.random::<f64>() * 2.0 - 1.0);
    let (mut min_w, mut sum_err, mut dot_err) = (f64::INFINITY, 0.0f64, 0.0f64);
    for q in queries.outer_iter() {
        let w = forest.weights(q).unwrap();
        min_w = min_w.min(w.iter().cloned().fold(f64::INFINITY, f64::min));
        sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
        let dot: f64 = w.iter().zip(&yf).map(|(a, b)| a * b).sum();
        dot_err = dot_err.max((dot - forest.predict_row(q).unwrap()).abs());
    }

    let single = ForestParams { n_trees: 1, min_leaf: nf, seed: 9, ..ForestParams::default() };
    let stump = fit_regression_forest(xf.view(), &yf, &single).unwrap();
    let nodes = stump.trees()[0].nodes();
    let (one_leaf, leaf_exact) = match nodes {
        [Node::Leaf { units, .. }] => {
            let mean = units.iter().map(|&u| yf[u as usize]).sum::<f64>() / units.len() as f64;
            let preds = stump.predict(queries.view()).unwrap();
            (true, !units.is_empty() && preds.iter().all(|&v| v == mean))
        }
        _ => (false, false),
    };

    report(
        3,
        &[
            check(format!("Lasso at lambda = 0 vs normal equations: {e_ols:.2e} <= 1e-6"), e_ols <= 1e-6),
            check(format!("orthonormal design vs soft thresholding: {e_soft:.2e} <= 1e-8"), e_soft <= 1e-8),
            check(format!("forest weights nonnegative on 100 queries (min {min_w:.2e})"), min_w >= 0.0),
            check(format!("forest weights sum to 1 on 100 queries (max error {sum_err:.2e})"), sum_err <= 1e-12),
            check(format!("forest prediction equals weighted outcome sum (max error {dot_err:.2e})"), dot_err <= 1e-10),
            check("min_leaf = n grows a single leaf", one_leaf),
            check("single-leaf forest returns the estimation-sample mean exactly", leaf_exact),
        ],
    );
}

#[test]
fn criterion_4_dgp_contracts() {
    let opts = PopulationOptions { n_validation: 10_000, ..PopulationOptions::default() };
    let source = |n| PopulationSource::Synthetic(SyntheticPopConfig { n_population: n, ..SyntheticPopConfig::default() });

    let zero = ItesSpec { alpha: 0.0, noise: Noise::None, ..ItesSpec::default() };
    let pop0 = build_population(&source(30_000), &zero, &opts, 11).unwrap();
    let all_zero = pop0.ite.iter().all(|&v| v == 0.0);

    let pop = build_population(&source(100_000), &ItesSpec::default(), &opts, 12).unwrap();
    let strong = build_population(&source(100_000), &ItesSpec { alpha: 8.0, ..ItesSpec::default() }, &opts, 13).unwrap();
    let mut in_bounds = true;
    let mut at_bounds = 0;
    for p in [&pop, &strong] {
        for (y0, t) in p.y0.iter().zip(&p.ite) {
            let y1 = y0 + t;
            in_bounds &= (0.0..=33.0).contains(&y1);
            at_bounds += usize::from(y1 == 0.0 || y1 == 33.0);
        }
    }
    let n_units = pop.n() + strong.n();

    let n = 100_000;
    let spec = ItesSpec { alpha: 0.0, censoring: false, ..ItesSpec::default() };
    let eps = compute_ite(&vec![0.5; n], &vec![0.0; n], &spec, 14).unwrap();
    let mean = eps.iter().sum::<f64>() / n as f64;
    let var = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
    let integer = eps.iter().all(|e| e.fract() == 0.0 && *e <= 1.0);

    let mean_p = pop.p_full.iter().sum::<f64>() / pop.n() as f64;
    let (lo, hi) = pop.p_full.iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));

    report(
        4,
        &[
            check("alpha = 0 without noise gives zero effects everywhere", all_zero),
            check(format!("0 <= y0 + effect <= 33 on {n_units} units ({at_bounds} at a bound)"), in_bounds && at_bounds > 0),
            check(format!("1 - Poisson(1) noise: mean {mean:.4} within 0.05 of 0"), mean.abs() <= 0.05),
            check(format!("1 - Poisson(1) noise: variance {var:.4} within 0.05 of 1"), (var - 1.0).abs() <= 0.05),
            check("noise is integer valued and at most 1", integer),
            check(format!("mean propensity after the shift {mean_p:.9} within 1e-6 of 0.5"), (mean_p - 0.5).abs() <= 1e-6),
            check(format!("propensities after trimming lie in [{lo:.4}, {hi:.4}] within [0.05, 0.95]"), lo >= 0.05 && hi <= 0.95),
            check(format!("{} units trimmed", pop.n_trimmed), pop.n() + pop.n_trimmed == 100_000),
        ],
    );
}

#[test]
fn criterion_5_metric_identities() {
    let (reps, units) = (60, 250);
    let mut r = stream(5);
    let truth: Vec<f64> = (0..units).map(|v| (v as f64 * 0.37).sin() * 3.0).collect();
    let values = Array2::from_shape_fn((reps, units), |(_, v)| {
        let e: f64 = StandardNormal.sample(&mut r);
        truth[v] + 0.3 + (1.0 + v as f64 / 100.0) * e
    });
    let tensor = PredictionTensor::new(values.clone(), truth.clone()).unwrap();
    let m = per_unit_measures(&tensor).unwrap();
    let decomposition = (0..units)
        .map(|v| (m.mse[v] - (m.bias[v].powi(2) + m.sd[v].powi(2))).abs())
        .fold(0.0, f64::max);

    let row = summarize("x", &tensor, Level::Iate, 0).unwrap();
    let by_units = m.mse.iter().sum::<f64>() / units as f64;
    let by_reps = (0..reps)
        .map(|i| (0..units).map(|v| (values[[i, v]] - truth[v]).powi(2)).sum::<f64>() / units as f64)
        .sum::<f64>()
        / reps as f64;
    let e_order = (row.mean_mse - by_reps).abs().max((by_units - by_reps).abs());

    let trials = 1000;
    let draws = 10_000;
    let mut rejected = 0;
    let mut rng = stream(55);
    for _ in 0..trials {
        let x: Vec<f64> = (0..draws).map(|_| StandardNormal.sample(&mut rng)).collect();
        let jb = jarque_bera(&x).unwrap().expect("non-degenerate");
        rejected += usize::from(jb.p_value < 0.05);
    }
    let size = rejected as f64 / trials as f64;

    report(
        5,
        &[
            check(format!("MSE_v = Bias_v^2 + SD_v^2: max error {decomposition:.2e} <= 1e-9"), decomposition <= 1e-9),
            check(format!("mean MSE over units equals mean over replications: {e_order:.2e} <= 1e-10"), e_order <= 1e-10),
            check(format!("Jarque-Bera size on normal samples {size:.3} in [0.03, 0.07]"), (0.03..=0.07).contains(&size)),
        ],
    );
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn desk_config(name: &str) -> StudyConfig {
    StudyConfig {
        n_population: 20_000,
        n_s: 1000,
        n_replications: 100,
        n_trees: 250,
        master_seed: 2020,
        output_dir: fresh_dir(name),
        parallelism: workers(),
        ..StudyConfig::default()
    }
}

fn rows(dir: &Path, level: Level) -> Vec<PerformanceRow> {
    read_report_csv(dir.join(format!("{}.csv", level.as_str())), level).unwrap()
}

fn row<'a>(rows: &'a [PerformanceRow], id: &str) -> &'a PerformanceRow {
    rows.iter().find(|r| r.estimator == id).unwrap_or_else(|| panic!("no row for {id}"))
}

#[test]
fn criterion_6_desk_scale_reproduction() {
    let mut out = std::io::stdout();
    let mut checks = Vec::new();

    // (i) random assignment: ATE bias of every estimator
    let random = StudyConfig { assignment: Assignment::RandomHalf, ..desk_config("acceptance_random") };
    let pop = obtain_population(&random).unwrap();
    let y0: Vec<f64> = pop.validation_rows.iter().map(|&i| pop.y0[i]).collect();
    let mean = y0.iter().sum::<f64>() / y0.len() as f64;
    let sd_y0 = (y0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y0.len() as f64).sqrt();
    let start = Instant::now();
    let res = run_study(&random).unwrap();
    write_reports(&res, &random.output_dir).unwrap();
    let secs_random = start.elapsed().as_secs_f64();
    writeln!(out, "random-assignment study: {secs_random:.0} s with {} worker(s)", random.parallelism).unwrap();
    writeln!(out, "{}", std::fs::read_to_string(random.output_dir.join("report.txt")).unwrap()).unwrap();
    for r in rows(&random.output_dir, Level::Ate) {
        let limit = 0.1 * sd_y0;
        checks.push(check(
            format!("(i) {}: |ATE bias| {:.3} < 0.1 SD(y0) = {limit:.3}", r.estimator, r.mean_bias.abs()),
            r.mean_bias.abs() < limit && r.n_replications > 0,
        ));
    }

    // (ii)-(iv) selection without effects
    let selection = StudyConfig {
        alpha: 0.0,
        noise: Noise::None,
        estimators: ["mom_ipw_forest", "mom_dr_forest", "mcm_lasso", "mcm_ea_lasso", "cf_forest", "cf_lc_forest"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ..desk_config("acceptance_selection")
    };
    let start = Instant::now();
    let res = run_study(&selection).unwrap();
    write_reports(&res, &selection.output_dir).unwrap();
    let secs_selection = start.elapsed().as_secs_f64();
    writeln!(out, "selection study: {secs_selection:.0} s with {} worker(s)", selection.parallelism).unwrap();
    writeln!(out, "{}", std::fs::read_to_string(selection.output_dir.join("report.txt")).unwrap()).unwrap();
    let iate = rows(&selection.output_dir, Level::Iate);
    let (ipw, dr) = (row(&iate, "mom_ipw_forest"), row(&iate, "mom_dr_forest"));
    checks.push(check(
        format!("(ii) MOM-IPW forest mean MSE {:.3} > MOM-DR forest {:.3}", ipw.mean_mse, dr.mean_mse),
        ipw.mean_mse > dr.mean_mse,
    ));
    let (mcm, ea) = (row(&iate, "mcm_lasso"), row(&iate, "mcm_ea_lasso"));
    checks.push(check(
        format!("(iii) MCM-EA mean SD {:.3} < 0.7 x MCM mean SD {:.3}", ea.mean_sd, mcm.mean_sd),
        ea.mean_sd < 0.7 * mcm.mean_sd,
    ));
    let (cf, lc) = (row(&iate, "cf_forest"), row(&iate, "cf_lc_forest"));
    checks.push(check(
        format!("(iv) CF-LC mean |bias| {:.3} <= CF mean |bias| {:.3}", lc.mean_abs_bias, cf.mean_abs_bias),
        lc.mean_abs_bias <= cf.mean_abs_bias,
    ));
    let core_seconds = (secs_random + secs_selection) * random.parallelism as f64;
    checks.push(check(
        format!("runtime {:.0} core-seconds, {:.0} s projected on 8 cores < 2 h", core_seconds, core_seconds / 8.0),
        core_seconds / 8.0 < 7200.0,
    ));
    report(6, &checks);
}

fn output_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["", "tensors"] {
        let mut entries: Vec<PathBuf> =
            std::fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
        entries.sort();
        for p in entries {
            let name = p.strip_prefix(dir).unwrap().display().to_string();
            if name.ends_with(".csv") || name.ends_with(".txt") {
                files.push((name, std::fs::read(&p).unwrap()));
            }
        }
    }
    files
}

#[test]
fn criterion_7_reproducibility() {
    let base = StudyConfig {
        n_population: 4000,
        n_validation: 1000,
        n_s: 400,
        n_replications: 4,
        n_trees: 40,
        lasso_n_lambda: 30,
        master_seed: 7,
        ..StudyConfig::default()
    };
    let mut outputs = Vec::new();
    for (name, parallelism) in [("repro_a", 1), ("repro_b", 4)] {
        let cfg = StudyConfig { output_dir: fresh_dir(name), parallelism, ..base.clone() };
        let res = run_study(&cfg).unwrap();
        write_reports(&res, &cfg.output_dir).unwrap();
        outputs.push(output_bytes(&cfg.output_dir));
    }
    let n_files = outputs[0].len();
    let manifest = |name: &str| -> serde_json::Value {
        let text = std::fs::read_to_string(Path::new(env!("CARGO_TARGET_TMPDIR")).join(name).join("manifest.json")).unwrap();
        serde_json::from_str(&text).unwrap()
    };
    let seeds_equal = manifest("repro_a")["replication_seeds"] == manifest("repro_b")["replication_seeds"];
    report(
        7,
        &[
            check(format!("{n_files} tensor and report files written"), n_files == 3 + 1 + 3 * (13 + 1)),
            check("one worker and four workers are byte-identical", outputs[0] == outputs[1]),
            check("manifests record the same replication seeds", seeds_equal),
        ],
    );
}
