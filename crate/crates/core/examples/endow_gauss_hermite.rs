//! Attach a posterior variance to an existing rule.
//!
//! Gauss–Hermite nodes with `n = Q` reproduce the Gauss–Hermite weights
//! whichever kernel is used; the kernel only changes the reported variance.
//!
//! ```bash
//! cargo run --example endow_gauss_hermite
//! ```

use bayes_sard::bench::{toy_integrand, toy_truth};
use bayes_sard::cubature::{bsc_square, endow_rule};
use bayes_sard::gp::Dataset;
use bayes_sard::kernels::{KernelSpec, MaternOrder};
use bayes_sard::measures::MeasureSpec;
use bayes_sard::polyspace::total_degree_space;
use bayes_sard::quadrature::gauss_hermite;
use nalgebra::DVector;

fn main() -> bayes_sard::Result<()> {
    let measure = MeasureSpec::standard_gaussian(1);
    let kernels = [
        ("gaussian ell=1", KernelSpec::gaussian(1.0)),
        ("matern5/2 ell=1", KernelSpec::matern(MaternOrder::FiveHalves, 1.0)),
    ];
    let truth = toy_truth();

    for n in 2..=8 {
        let (x, w) = gauss_hermite(n)?;
        let data = Dataset::from_fn(x.iter().map(|&t| vec![t]).collect(), |t| toy_integrand(t[0]))?;
        let space = total_degree_space(n as u32 - 1, 1);
        let gh = DVector::from_vec(w);
        println!("n = {n}: GH estimate {:.8}, error {:.2e}", gh.dot(&data.values_vector()), gh.dot(&data.values_vector()) - truth);
        for (name, kernel) in &kernels {
            let square = bsc_square(kernel, &measure, &space, &data)?;
            let endowed = endow_rule(kernel, &measure, &data, &gh)?;
            let gap = (square.weights() - &gh).amax();
            println!("    {name:<16} max |w - w_GH| = {gap:.1e}, sd = {:.3e}", endowed.sd());
        }
    }
    Ok(())
}
