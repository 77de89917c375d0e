//! Acceptance suite: one PASS/FAIL line per criterion, each with its own
//! tolerance and wall-clock budget. Reference values are computed here by
//! routes independent of the library internals.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use bayes_sard::bench::{
    beats_polynomial_extrapolation, convergence_run, fit_slope, mc_summary, toy_integrand,
    BenchMethod, ConvergenceConfig, IntegrandSpec, LengthSetting, PointSetKind, ZcbModel,
};
use bayes_sard::cubature::{bc, bsc, bsc_square, CubatureContext};
use bayes_sard::gp::{condition, Dataset, PriorSpec};
use bayes_sard::hyper::{eb_lengthscale, studentize, EbConfig};
use bayes_sard::kernels::{kernel_eval, kernel_matrix, kernel_vector, KernelFamily, KernelSpec, MaternOrder, Structure};
use bayes_sard::measures::{kernel_mean_vector, initial_error, MeasureSpec};
use bayes_sard::polyspace::total_degree_space;
use bayes_sard::quadrature::gauss_hermite;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn lib<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Reference computations

/// Composite Simpson rule for `∫ f φ` over `[−12, 12]`; the Gaussian tail
/// beyond is below 1e-30 for integrands of polynomial growth.
fn gaussian_expectation_1d(f: impl Fn(f64) -> f64) -> f64 {
    let (a, b, m) = (-12.0f64, 12.0f64, 200_000usize);
    let h = (b - a) / m as f64;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(a) * phi(a) + f(b) * phi(b);
    for i in 1..m {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x) * phi(x);
    }
    s * h / 3.0
}

fn toy_reference() -> f64 {
    gaussian_expectation_1d(toy_integrand)
}

/// `E[(μ + s Z)^k]` by the binomial expansion over standard normal moments.
fn gaussian_monomial_moment(k: u32, mu: f64, var: f64) -> f64 {
    let s = var.sqrt();
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom *= (k - j + 1) as f64 / j as f64;
        }
        let z_moment = if j % 2 == 1 { 0.0 } else { (1..j).step_by(2).map(|i| i as f64).product() };
        total += binom * mu.powi((k - j) as i32) * s.powi(j as i32) * z_moment;
    }
    total
}

fn uniform_monomial_moment(k: u32, a: f64, b: f64) -> f64 {
    (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / ((k + 1) as f64 * (b - a))
}

/// Bond price from the explicit affine map `r = a + B x`.
fn zcb_reference(model: &ZcbModel) -> f64 {
    let steps = model.steps;
    let dt = model.maturity / steps as f64;
    let vol = model.sigma * dt.sqrt();
    let mut a = vec![model.r0; steps];
    let mut b = DMatrix::<f64>::zeros(steps, steps - 1);
    for i in 1..steps {
        a[i] = a[i - 1] + model.kappa * (model.theta - a[i - 1]) * dt;
        for j in 0..steps - 1 {
            b[(i, j)] = (1.0 - model.kappa * dt) * b[(i - 1, j)];
        }
        b[(i, i - 1)] += vol;
    }
    let mean = -dt * a.iter().sum::<f64>();
    let coeff = b.row_sum() * (-dt);
    (mean + 0.5 * coeff.norm_squared()).exp()
}

fn grid_1d(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]).collect()
}

fn symmetric_grid(n: usize) -> Vec<Vec<f64>> {
    let r = (n as f64).sqrt();
    grid_1d(-r, r, n)
}

fn min_separation(nodes: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[..i] {
            best = best.min(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
        }
    }
    best
}

/// Multi-indices of total degree at most `m` in `d` variables.
fn multi_indices(m: u32, d: usize) -> Vec<Vec<u32>> {
    if d == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..=m {
        for mut rest in multi_indices(m - first, d - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Criteria

fn toy_accuracy() -> Outcome {
    let truth = toy_reference();
    ensure!((truth - 2.0693).abs() < 5e-5, "toy reference {truth} disagrees with 2.0693");
    let measure = MeasureSpec::standard_gaussian(1);
    let space = total_degree_space(3, 1);
    let mut errs = Vec::new();
    let mut ells = Vec::new();
    for n in [10, 15, 20, 25, 30] {
        let data = lib(Dataset::from_fn(symmetric_grid(n), |x| toy_integrand(x[0])))?;
        let eb = lib(eb_lengthscale(&KernelSpec::gaussian(1.0), &data, &EbConfig::new(0.1, 10.0)))?;
        let r = lib(bsc(&KernelSpec::gaussian(eb.ell_hat), &measure, &space, &data, None))?;
        errs.push((r.mean - truth).abs() / truth);
        ells.push(eb.ell_hat);
        if n == 30 {
            let rel = (r.mean - 2.0693).abs() / 2.0693;
            ensure!(rel <= 1e-2, "n = 30 relative error vs 2.0693 is {rel:e}");
        }
    }
    ensure!(errs.windows(2).all(|w| w[1] < w[0]), "errors not monotone: {errs:?} (ell_hat {ells:?})");
    Ok(format!("rel errors {:?}", errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>()))
}

fn small_lengthscale() -> Outcome {
    let truth = toy_reference();
    let measure = MeasureSpec::standard_gaussian(1);
    let data = lib(Dataset::from_fn(symmetric_grid(20), |x| toy_integrand(x[0])))?;
    let k = KernelSpec::gaussian(0.3);
    let e_bsc = (lib(bsc(&k, &measure, &total_degree_space(3, 1), &data, None))?.mean - truth).abs() / truth;
    let e_bc = (lib(bc(&k, &measure, &data))?.mean - truth).abs() / truth;
    ensure!(e_bsc < e_bc, "ell = 0.3: BSC {e_bsc:e} not below BC {e_bc:e}");
    let tiny = lib(bsc(&KernelSpec::gaussian(1e-3), &measure, &total_degree_space(0, 1), &data, None))?;
    let dev = tiny.weights_k.iter().map(|w| (w - 1.0 / 20.0).abs()).fold(0.0, f64::max);
    ensure!(dev <= 0.05, "ell = 1e-3 weights deviate from 1/n by {dev}");
    Ok(format!("BSC {e_bsc:.2e} < BC {e_bc:.2e}; max |w - 1/n| = {dev:.1e}"))
}

fn zcb_robustness() -> Outcome {
    let model = ZcbModel::benchmark_dim(10);
    let truth = zcb_reference(&model);
    ensure!((truth - model.truth()).abs() < 1e-12 * truth, "library truth {} vs reference {truth}", model.truth());
    let config = ConvergenceConfig {
        integrand: IntegrandSpec::Zcb(model),
        methods: vec![BenchMethod::Bc, BenchMethod::Bsc { m: 1 }],
        kernel: KernelFamily::Matern(MaternOrder::FiveHalves),
        structure: Structure::Product,
        lengthscales: vec![LengthSetting::Fixed(0.2)],
        ns: vec![128, 256, 512],
        points: PointSetKind::random_unit(1),
        seeds: vec![1, 2, 3, 4, 5],
    };
    let report = lib(convergence_run(&config))?;
    ensure!(report.failures().count() == 0, "{} failed rows", report.failures().count());
    let series = |m: &str| report.series(m, 0).ok_or_else(|| format!("no {m} rows"));
    let (b, s) = (series("bc")?, series("bsc-m1")?);
    let (eb, es) = (*b.median_rel.last().unwrap(), *s.median_rel.last().unwrap());
    ensure!(es <= 0.1 * eb, "n = 512: BSC median {es:e} vs BC median {eb:e}");
    Ok(format!("n = 512 median rel error BSC {es:.2e}, BC {eb:.2e} (ratio {:.1e})", es / eb))
}

fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = 1 + case % 5;
        let m = (case / 5 % 4) as u32;
        let gaussian_measure = case % 2 == 0;
        let gaussian_kernel = case / 2 % 2 == 0;
        let measure = if gaussian_measure {
            MeasureSpec::DiagonalGaussian {
                mean: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                variance: (0..d).map(|_| rng.random_range(0.5..2.0)).collect(),
            }
        } else {
            let lower: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..0.0)).collect();
            let upper = lower.iter().map(|a| a + rng.random_range(0.5..2.0)).collect();
            MeasureSpec::uniform_box(lower, upper)
        };
        let indices = multi_indices(m, d);
        let coeffs: Vec<f64> = indices.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = |x: &[f64]| -> f64 {
            indices
                .iter()
                .zip(&coeffs)
                .map(|(a, c)| c * a.iter().zip(x).map(|(&k, xi)| xi.powi(k as i32)).product::<f64>())
                .sum()
        };
        let exact: f64 = indices
            .iter()
            .zip(&coeffs)
            .map(|(a, c)| {
                c * a
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| match &measure {
                        MeasureSpec::DiagonalGaussian { mean, variance } => gaussian_monomial_moment(k, mean[j], variance[j]),
                        MeasureSpec::UniformBox { lower, upper } => uniform_monomial_moment(k, lower[j], upper[j]),
                        MeasureSpec::StandardGaussian { .. } => unreachable!(),
                    })
                    .product::<f64>()
            })
            .sum();
        let n = indices.len() + 5;
        let nodes: Vec<Vec<f64>> = (0..n).map(|_| measure.sample(&mut rng)).collect();
        // ℓ at most twice the closest-pair distance
        let ell = rng.random_range(0.3..1.0f64).min(2.0 * min_separation(&nodes));
        let kernel = if gaussian_kernel {
            KernelSpec::gaussian(ell)
        } else {
            KernelSpec::product_matern(MaternOrder::FiveHalves, ell)
        };
        let data = lib(Dataset::from_fn(nodes, p))?;
        let r = bsc(&kernel, &measure, &total_degree_space(m, d), &data, None)
            .map_err(|e| format!("case {case} (d = {d}, m = {m}): {e}"))?;
        let err = (r.mean - exact).abs() / (1.0 + exact.abs());
        ensure!(err <= 1e-8, "case {case} (d = {d}, m = {m}): scaled error {err:e}");
        worst = worst.max(err);
    }
    Ok(format!("100 polynomials, worst scaled error {worst:.1e}"))
}

fn square_regime() -> Outcome {
    let measure = MeasureSpec::standard_gaussian(1);
    let gauss = KernelSpec::gaussian(1.0);
    let matern = KernelSpec::matern(MaternOrder::FiveHalves, 1.0);
    let mut worst_w: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    for n in 2..=6usize {
        let (x, w_gw) = lib(gauss_hermite(n))?;
        let nodes: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        // moment system Σ_i w_i x_i^k = E[Z^k], k < n
        let v = DMatrix::from_fn(n, n, |k, i| x[i].powi(k as i32));
        let moments = DVector::from_fn(n, |k, _| gaussian_monomial_moment(k as u32, 0.0, 1.0));
        let w_ref = v.lu().solve(&moments).ok_or("singular moment system")?;
        let data = lib(Dataset::from_fn(nodes.clone(), |t| t[0].sin() + t[0].powi(2)))?;
        let space = total_degree_space(n as u32 - 1, 1);
        let wg = DVector::from_vec(lib(bsc_square(&gauss, &measure, &space, &data))?.weights_k);
        let wm = DVector::from_vec(lib(bsc_square(&matern, &measure, &space, &data))?.weights_k);
        let w_gw = DVector::from_vec(w_gw);
        let gap = (&wg - &w_ref).amax().max((&wg - &w_gw).amax());
        worst_w = worst_w.max(gap);
        ensure!(gap <= 1e-8, "n = {n}: weights differ from the moment system or Golub–Welsch rule by {gap:e}");
        ensure!((&wg - &wm).amax() <= 1e-10, "n = {n}: kernel dependence {:e}", (&wg - &wm).amax());

        // σ from the general saddle formula against an explicit Gaussian-kernel wce
        let r = lib(bsc(&gauss, &measure, &space, &data, None))?;
        let w = DVector::from_vec(r.weights_k.clone());
        let kmean = DVector::from_fn(n, |i, _| (-x[i] * x[i] / 4.0).exp() / 2f64.sqrt());
        let kmat = DMatrix::from_fn(n, n, |i, j| (-0.5 * (x[i] - x[j]).powi(2)).exp());
        let wce2 = 1.0 / 3f64.sqrt() - 2.0 * kmean.dot(&w) + w.dot(&(&kmat * &w));
        let rel = (r.sd() - wce2.sqrt()).abs() / wce2.sqrt();
        worst_sigma = worst_sigma.max(rel);
        ensure!(rel <= 1e-8, "n = {n}: sigma {} vs wce {} (rel {rel:e})", r.sd(), wce2.sqrt());
    }
    Ok(format!("max weight error {worst_w:.1e}, max sigma/wce mismatch {worst_sigma:.1e}"))
}

fn bc_optimality() -> Outcome {
    let measure = MeasureSpec::standard_gaussian(1);
    let kernel = KernelSpec::matern(MaternOrder::ThreeHalves, 0.7);
    let nodes = symmetric_grid(10);
    let data = lib(Dataset::from_fn(nodes.clone(), |x| toy_integrand(x[0])))?;
    let w = DVector::from_vec(lib(bc(&kernel, &measure, &data))?.weights_k);
    let kmat = lib(kernel_matrix(&kernel, &nodes, &nodes))?;
    let kmean = lib(kernel_mean_vector(&kernel, &measure, &nodes))?;
    let knn = lib(initial_error(&kernel, &measure))?;
    let wce2 = |v: &DVector<f64>| knn - 2.0 * kmean.dot(v) + v.dot(&(&kmat * v));
    let base = wce2(&w);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut strict = 0;
    for _ in 0..100 {
        let dir = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let delta = dir * 10f64.powf(rng.random_range(-6.0..0.0));
        let perturbed = wce2(&(&w + &delta));
        ensure!(perturbed >= base - 1e-15, "perturbation of norm {:e} lowered wce²: {perturbed} < {base}", delta.norm());
        if delta.norm() >= 1e-3 {
            ensure!(perturbed > base, "perturbation of norm {:e} did not increase wce²", delta.norm());
            strict += 1;
        }
    }
    Ok(format!("wce(w_BC) = {:.4e}; 100 perturbations, {strict} strict", base.max(0.0).sqrt()))
}

fn flat_limit() -> Outcome {
    let kernel = KernelSpec::gaussian(0.8);
    let space = total_degree_space(3, 1);
    let data = lib(Dataset::from_fn(grid_1d(-2.0, 2.0, 7), |x| toy_integrand(x[0])))?;
    let flat = lib(condition(&PriorSpec::flat(space.clone()), &kernel, &data))?;
    let fmax = data.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let eval: Vec<f64> = (0..201).map(|i| -3.0 + 6.0 * i as f64 / 200.0).collect();
    let mut devs = Vec::new();
    for s2 in [1e2, 1e4, 1e6] {
        let fin = lib(condition(&PriorSpec::isotropic(space.clone(), s2), &kernel, &data))?;
        let mut dev: f64 = 0.0;
        for &x in &eval {
            dev = dev.max((lib(fin.mean(&[x]))? - lib(flat.mean(&[x]))?).abs());
        }
        devs.push(dev);
    }
    ensure!(devs.windows(2).all(|w| w[1] < w[0]), "deviations not decreasing: {devs:?}");
    ensure!(devs[2] <= 1e-5 * fmax, "deviation at 1e6 is {:e} > {:e}", devs[2], 1e-5 * fmax);

    // finite prior against plain GP regression under k + p(x)ᵀ Σ p(y)
    let sigma2 = 2.5;
    let fin = lib(condition(&PriorSpec::isotropic(space.clone(), sigma2), &kernel, &data))?;
    let nodes = data.nodes();
    let pvec = |x: f64| DVector::from_fn(4, |k, _| x.powi(k as i32));
    let keq = |x: f64, y: f64| -> Result<f64, String> { Ok(lib(kernel_eval(&kernel, &[x], &[y]))? + sigma2 * pvec(x).dot(&pvec(y))) };
    let n = nodes.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = keq(nodes[i][0], nodes[j][0])?;
        }
    }
    let chol = c.clone().cholesky().ok_or("equivalent Gram matrix not SPD")?;
    let alpha = chol.solve(&data.values_vector());
    let mut worst: f64 = 0.0;
    for &(x, y) in &[(-2.7, 0.3), (-1.1, -1.1), (0.45, 1.9), (2.5, 2.5)] {
        let kx = DVector::from_fn(n, |i, _| keq(nodes[i][0], x).unwrap());
        let ky = DVector::from_fn(n, |i, _| keq(nodes[i][0], y).unwrap());
        let mean_ref = kx.dot(&alpha);
        let cov_ref = keq(x, y)? - kx.dot(&chol.solve(&ky));
        let scale = 1.0 + mean_ref.abs();
        worst = worst.max((lib(fin.mean(&[x]))? - mean_ref).abs() / scale);
        worst = worst.max((lib(fin.cov(&[x], &[y]))? - cov_ref).abs() / (1.0 + keq(x, x)?.abs()));
    }
    ensure!(worst <= 1e-8, "equivalent-kernel mismatch {worst:e}");
    Ok(format!(
        "sup deviations {:?}; equivalent-kernel mismatch {worst:.1e}",
        devs.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>()
    ))
}

fn lagrange_cardinality() -> Outcome {
    let kernel = KernelSpec::gaussian(0.9);
    let space = total_degree_space(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let nodes: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let data = lib(Dataset::from_fn(nodes.clone(), |x| (x[0] + 0.5 * x[1]).cos()))?;
    let mut worst: f64 = 0.0;
    for prior in [PriorSpec::flat(space.clone()), PriorSpec::isotropic(space.clone(), 3.0)] {
        let post = lib(condition(&prior, &kernel, &data))?;
        for (j, xj) in nodes.iter().enumerate() {
            let (u, v) = lib(post.lagrange(xj))?;
            let mut e = DVector::zeros(nodes.len());
            e[j] = 1.0;
            worst = worst.max((u - e).amax()).max(v.amax());
        }
    }
    ensure!(worst <= 1e-8, "cardinality violated by {worst:e}");
    Ok(format!("max deviation {worst:.1e} over both modes"))
}

fn convergence_rates() -> Outcome {
    let ns: Vec<usize> = (4..=9).map(|k| 1usize << k).collect();
    let matern = ConvergenceConfig {
        integrand: IntegrandSpec::Expcos { dim: 1 },
        methods: vec![BenchMethod::Bsc { m: 1 }],
        kernel: KernelFamily::Matern(MaternOrder::FiveHalves),
        structure: Structure::Isotropic,
        lengthscales: vec![LengthSetting::Fixed(0.2)],
        ns: ns.clone(),
        points: PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 },
        seeds: vec![0],
    };
    let report = lib(convergence_run(&matern))?;
    let series = report.series("bsc-m1", 0).ok_or("no BSC rows")?;
    let fit = series.slope().ok_or("no decreasing range to fit")?;
    ensure!(fit.slope <= -2.5, "Matérn slope {:.2} over n = {}..{}", fit.slope, fit.n_min, fit.n_max);

    let mc = ConvergenceConfig {
        integrand: IntegrandSpec::Toy,
        methods: vec![BenchMethod::Mc],
        kernel: KernelFamily::Gaussian,
        structure: Structure::Isotropic,
        lengthscales: vec![],
        ns: vec![100, 1000, 10_000],
        points: PointSetKind::ScaledSymmetricGrid,
        seeds: (0..50).collect(),
    };
    let report = lib(convergence_run(&mc))?;
    let s = report.series("mc", 0).ok_or("no MC rows")?;
    let mc_fit = fit_slope(&s.ns, &s.rmse).ok_or("MC RMSE not decreasing")?;
    ensure!((mc_fit.slope + 0.5).abs() <= 0.15, "MC slope {:.3}", mc_fit.slope);

    let gauss = ConvergenceConfig {
        integrand: IntegrandSpec::Expcos { dim: 1 },
        methods: vec![BenchMethod::Bsc { m: 1 }],
        kernel: KernelFamily::Gaussian,
        structure: Structure::Isotropic,
        lengthscales: vec![LengthSetting::Fixed(0.1)],
        ns: vec![10, 12, 14, 16, 18, 20, 40],
        points: PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 },
        seeds: vec![0],
    };
    let report = lib(convergence_run(&gauss))?;
    let g = report.series("bsc-m1", 0).ok_or("no Gaussian rows")?;
    ensure!(g.ns.len() == 7, "Gaussian run lost rows: {:?}", g.ns);
    let (err40, head) = (g.rmse[6], &g.rmse[..6]);
    ensure!(
        beats_polynomial_extrapolation(&g.ns[..6], head, 40, err40, 6),
        "Gaussian error {err40:e} at n = 40 does not beat polynomial extrapolation from {head:?}"
    );
    Ok(format!(
        "Matérn slope {:.2} (n {}..{}), MC slope {:.3}, Gaussian err(40) = {err40:.1e}",
        fit.slope, fit.n_min, fit.n_max, mc_fit.slope
    ))
}

fn zcb_oracle() -> Outcome {
    let mut parts = Vec::new();
    for d in [3usize, 10] {
        let model = ZcbModel::benchmark_dim(d);
        let truth = zcb_reference(&model);
        // x drawn directly from N(0, I)
        let mc = lib(mc_summary(|x| model.discount(x), &MeasureSpec::standard_gaussian(d), 1_000_000, 2024 + d as u64))?;
        let z = (mc.mean - truth).abs() / mc.std_error;
        ensure!(z <= 3.0, "d = {d}: MGF {truth} vs MC {} ± {:e} ({z:.2} SE)", mc.mean, mc.std_error);
        let via_cube = lib(mc_summary(
            |u| bayes_sard::bench::zcb_integrand(u, &model).unwrap_or(f64::NAN),
            &MeasureSpec::unit_cube(d),
            200_000,
            7,
        ))?;
        let zc = (via_cube.mean - truth).abs() / via_cube.std_error;
        ensure!(zc <= 3.0, "d = {d}: cube-transformed MC off by {zc:.2} SE");
        parts.push(format!("d = {d}: {z:.2} SE"));
    }
    Ok(parts.join(", "))
}

fn student_t_contract() -> Outcome {
    let measure = MeasureSpec::standard_gaussian(1);
    let kernel = KernelSpec::gaussian(0.9).with_amplitude(1.7);
    let nodes = symmetric_grid(12);
    let data = lib(Dataset::from_fn(nodes.clone(), |x| toy_integrand(x[0])))?;
    let ctx = lib(CubatureContext::new(&kernel, &measure, &nodes))?;
    let r = lib(ctx.bsc(&total_degree_space(2, 1), &data.values_vector(), None))?;
    let t = lib(studentize(&r, &data, &kernel))?;
    ensure!(t.dof == 12, "dof {} ≠ n", t.dof);
    // independent assembly of f_Xᵀ K⁻¹ f_X by column-wise kernel vectors and a fresh Cholesky
    let n = nodes.len();
    let mut k = DMatrix::zeros(n, n);
    for (j, xj) in nodes.iter().enumerate() {
        k.set_column(j, &lib(kernel_vector(&kernel, &nodes, xj))?);
    }
    let f = data.values_vector();
    let chol = k.cholesky().ok_or("Gram matrix not SPD")?;
    let quad = f.dot(&chol.solve(&f));
    let expect = quad / n as f64 * r.variance;
    let rel = (t.scale2 - expect).abs() / expect;
    ensure!(rel <= 1e-10, "scale² {} vs {expect} (rel {rel:e})", t.scale2);
    ensure!(t.location == r.mean, "location differs from the posterior mean");
    Ok(format!("dof = {}, scale² relative mismatch {rel:.1e}", t.dof))
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { name: "toy integral accuracy", budget: Duration::from_secs(5), run: toy_accuracy },
    Criterion { name: "small length-scale robustness", budget: Duration::from_secs(5), run: small_lengthscale },
    Criterion { name: "ZCB robustness", budget: Duration::from_secs(120), run: zcb_robustness },
    Criterion { name: "exactness suite", budget: Duration::from_secs(30), run: exactness },
    Criterion { name: "Q = n regime", budget: Duration::from_secs(5), run: square_regime },
    Criterion { name: "BC optimality", budget: Duration::from_secs(5), run: bc_optimality },
    Criterion { name: "flat-limit convergence", budget: Duration::from_secs(5), run: flat_limit },
    Criterion { name: "Lagrange cardinality", budget: Duration::from_secs(5), run: lagrange_cardinality },
    Criterion { name: "convergence rates", budget: Duration::from_secs(120), run: convergence_rates },
    Criterion { name: "ZCB oracle cross-check", budget: Duration::from_secs(60), run: zcb_oracle },
    Criterion { name: "Student-t contract", budget: Duration::from_secs(1), run: student_t_contract },
];

fn main() {
    let mut failed = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "{} {} [{:.2}s / {}s]: {detail}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
