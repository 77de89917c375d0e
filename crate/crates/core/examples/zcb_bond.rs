//! Zero-coupon bond price under a discretised Vasicek model.
//!
//! Ten-dimensional integral on the unit cube with random nodes and a
//! deliberately short length-scale. BSC with linear polynomials stays accurate
//! where plain Bayesian cubature collapses towards zero.
//!
//! ```bash
//! cargo run --release --example zcb_bond
//! ```

use bayes_sard::bench::{
    convergence_run, BenchMethod, ConvergenceConfig, IntegrandSpec, LengthSetting, PointSetKind, ZcbModel,
};
use bayes_sard::kernels::{KernelFamily, MaternOrder, Structure};

fn main() -> bayes_sard::Result<()> {
    let model = ZcbModel::benchmark_dim(10);
    let config = ConvergenceConfig {
        integrand: IntegrandSpec::Zcb(model),
        methods: vec![BenchMethod::Bc, BenchMethod::Bsc { m: 1 }, BenchMethod::Mc],
        kernel: KernelFamily::Matern(MaternOrder::FiveHalves),
        structure: Structure::Product,
        lengthscales: vec![LengthSetting::Fixed(0.2)],
        ns: vec![32, 64, 128, 256, 512],
        points: PointSetKind::random_unit(0),
        seeds: vec![1, 2, 3, 4, 5],
    };
    let report = convergence_run(&config)?;
    println!("bond price {:.10} (moment-generating function)", report.truth);
    println!("median relative error over {} seeds", config.seeds.len());
    print!("{:>8}", "n");
    for n in &config.ns {
        print!("{n:>11}");
    }
    println!();
    for series in report.all_series() {
        print!("{:>8}", series.method);
        for e in &series.median_rel {
            print!("{e:>11.2e}");
        }
        println!();
    }
    Ok(())
}
