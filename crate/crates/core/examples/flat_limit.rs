//! A Gaussian prior on the polynomial coefficients approaches the flat prior
//! as its variance grows.
//!
//! ```bash
//! cargo run --example flat_limit
//! ```

use bayes_sard::bench::toy_integrand;
use bayes_sard::gp::{condition, Dataset, PriorSpec};
use bayes_sard::kernels::KernelSpec;
use bayes_sard::polyspace::total_degree_space;

fn main() -> bayes_sard::Result<()> {
    let kernel = KernelSpec::gaussian(0.8);
    let space = total_degree_space(3, 1);
    let nodes = (0..7).map(|i| vec![-2.0 + i as f64 * 4.0 / 6.0]).collect();
    let data = Dataset::from_fn(nodes, |x| toy_integrand(x[0]))?;
    let flat = condition(&PriorSpec::flat(space.clone()), &kernel, &data)?;
    let grid: Vec<f64> = (0..=200).map(|i| -3.0 + 6.0 * i as f64 / 200.0).collect();

    println!("{:>8} {:>14} {:>14}", "sigma2", "sup |dmean|", "sup |dvar|");
    for sigma2 in [1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6] {
        let finite = condition(&PriorSpec::isotropic(space.clone(), sigma2), &kernel, &data)?;
        let (mut dm, mut dv) = (0.0f64, 0.0f64);
        for &x in &grid {
            dm = dm.max((finite.mean(&[x])? - flat.mean(&[x])?).abs());
            dv = dv.max((finite.variance(&[x])? - flat.variance(&[x])?).abs());
        }
        println!("{sigma2:>8.0e} {dm:>14.3e} {dv:>14.3e}");
    }
    Ok(())
}
