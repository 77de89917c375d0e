//! Posterior mean and 95% band of the integrand itself.
//!
//! Four nodes, a Gaussian kernel with `ℓ = 0.8` and a flat prior on cubic
//! polynomials. Prints `x,mean,stddev` rows suitable for plotting; the band
//! closes at each node.
//!
//! ```bash
//! cargo run --example posterior_band > band.csv
//! ```

use bayes_sard::bench::toy_integrand;
use bayes_sard::gp::{condition, Dataset, PriorSpec};
use bayes_sard::kernels::KernelSpec;
use bayes_sard::polyspace::total_degree_space;

fn main() -> bayes_sard::Result<()> {
    let nodes = vec![vec![-2.0], vec![-0.5], vec![0.7], vec![2.1]];
    let data = Dataset::from_fn(nodes, |x| toy_integrand(x[0]))?;
    let prior = PriorSpec::flat(total_degree_space(3, 1));
    let post = condition(&prior, &KernelSpec::gaussian(0.8), &data)?;

    println!("x,mean,stddev");
    for i in 0..=120 {
        let x = -3.0 + 6.0 * i as f64 / 120.0;
        let sd = post.variance(&[x])?.max(0.0).sqrt();
        println!("{x:e},{:e},{sd:e}", post.mean(&[x])?);
    }
    for x in data.nodes() {
        eprintln!("node {:+.2}: sd {:.1e}", x[0], post.variance(x)?.max(0.0).sqrt());
    }
    Ok(())
}
