//! One-dimensional toy integral against the standard Gaussian.
//!
//! Nodes sit on `[−√n, √n]`, the length-scale is chosen by empirical Bayes and
//! the three kernel estimators are compared with a Student-t interval for BSC.
//!
//! ```bash
//! cargo run --example toy_integral
//! ```

use bayes_sard::bench::{point_set, toy_integrand, toy_truth, PointSetKind};
use bayes_sard::cubature::CubatureContext;
use bayes_sard::gp::Dataset;
use bayes_sard::hyper::{eb_lengthscale, studentize, EbConfig};
use bayes_sard::kernels::KernelSpec;
use bayes_sard::measures::MeasureSpec;
use bayes_sard::polyspace::total_degree_space;

fn main() -> bayes_sard::Result<()> {
    let measure = MeasureSpec::standard_gaussian(1);
    let space = total_degree_space(3, 1);
    let truth = toy_truth();
    println!("truth {truth:.10}");
    println!("{:>3} {:>7} {:>12} {:>12} {:>12} {:>24}", "n", "ell", "bc", "bsc", "nbc", "bsc 95% t-interval");

    for n in [10, 15, 20, 25, 30] {
        let nodes = point_set(&PointSetKind::ScaledSymmetricGrid, n, 1)?;
        let data = Dataset::from_fn(nodes, |x| toy_integrand(x[0]))?;
        let eb = eb_lengthscale(&KernelSpec::gaussian(1.0), &data, &EbConfig::new(0.1, 10.0))?;
        let kernel = KernelSpec::gaussian(eb.ell_hat);

        let ctx = CubatureContext::new(&kernel, &measure, data.nodes())?;
        let f = data.values_vector();
        let bc = ctx.bc(&f)?;
        let bsc = ctx.bsc(&space, &f, None)?;
        let nbc = ctx.normalized_bc(&f)?;
        let (lo, hi) = studentize(&bsc, &data, &kernel)?.interval(0.95)?;

        let rel = |m: f64| (m - truth).abs() / truth;
        println!(
            "{n:>3} {:>7.4} {:>12.3e} {:>12.3e} {:>12.3e}   [{lo:.6}, {hi:.6}]",
            eb.ell_hat,
            rel(bc.mean),
            rel(bsc.mean),
            rel(nbc.mean)
        );
    }
    Ok(())
}
