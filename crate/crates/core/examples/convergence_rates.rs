//! Empirical convergence rates.
//!
//! Matérn 5/2 gives an algebraic rate near `n^{-3}` in one dimension, the
//! Gaussian kernel decays faster than any fitted power, and Monte Carlo
//! shows its `n^{-1/2}` root-mean-square rate.
//!
//! ```bash
//! cargo run --release --example convergence_rates
//! ```

use bayes_sard::bench::{
    beats_polynomial_extrapolation, convergence_run, BenchMethod, ConvergenceConfig, IntegrandSpec, LengthSetting,
    PointSetKind,
};
use bayes_sard::kernels::{KernelFamily, MaternOrder, Structure};

fn main() -> bayes_sard::Result<()> {
    let grid = PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 };
    let matern = ConvergenceConfig {
        integrand: IntegrandSpec::Expcos { dim: 1 },
        methods: vec![BenchMethod::Bc, BenchMethod::Bsc { m: 1 }],
        kernel: KernelFamily::Matern(MaternOrder::FiveHalves),
        structure: Structure::Isotropic,
        lengthscales: vec![LengthSetting::Fixed(0.2)],
        ns: (4..=9).map(|k| 1 << k).collect(),
        points: grid.clone(),
        seeds: vec![0],
    };
    let report = convergence_run(&matern)?;
    for s in report.all_series() {
        let fit = s.slope().expect("errors decrease");
        println!("matern5/2 {:<7} slope {:+.2} over n = {}..{}", s.method, fit.slope, fit.n_min, fit.n_max);
    }

    let gauss = ConvergenceConfig {
        kernel: KernelFamily::Gaussian,
        methods: vec![BenchMethod::Bsc { m: 1 }],
        lengthscales: vec![LengthSetting::Fixed(0.1)],
        ns: vec![10, 12, 14, 16, 18, 20, 40],
        ..matern.clone()
    };
    let g = convergence_run(&gauss)?.series("bsc-m1", 0).expect("rows present");
    let superpoly = beats_polynomial_extrapolation(&g.ns[..6], &g.rmse[..6], 40, g.rmse[6], 6);
    println!("gaussian  error at n = 40: {:.2e}; below every n^-p extrapolation (p <= 6): {superpoly}", g.rmse[6]);

    let mc = ConvergenceConfig {
        methods: vec![BenchMethod::Mc],
        lengthscales: vec![],
        ns: vec![100, 1000, 10_000],
        seeds: (0..50).collect(),
        ..matern
    };
    let m = convergence_run(&mc)?.series("mc", 0).expect("rows present");
    println!("monte carlo rmse {:?}, slope {:+.3}", m.rmse, m.slope().expect("errors decrease").slope);
    Ok(())
}
