//! Relative error of BC, BSC and normalised BC as the length-scale varies.
//!
//! Fixed `n = 20` grid on the toy problem. Short length-scales push BC
//! towards zero, while the polynomial part keeps BSC in range.
//!
//! ```bash
//! cargo run --example lengthscale_sweep
//! ```

use bayes_sard::bench::{lengthscale_sweep, BenchMethod, IntegrandSpec, PointSetKind};
use bayes_sard::kernels::{KernelFamily, Structure};

fn main() -> bayes_sard::Result<()> {
    let ells: Vec<f64> = (0..=16).map(|i| 10f64.powf(-1.0 + i as f64 / 8.0)).collect();
    let methods = [BenchMethod::Bc, BenchMethod::Bsc { m: 3 }, BenchMethod::Nbc];
    let report = lengthscale_sweep(
        &IntegrandSpec::Toy,
        KernelFamily::Gaussian,
        Structure::Isotropic,
        &methods,
        &ells,
        20,
        &PointSetKind::ScaledSymmetricGrid,
        0,
    )?;
    println!("{:>9} {:>11} {:>11} {:>11}", "ell", "bc", "bsc-m3", "nbc");
    for (i, ell) in ells.iter().enumerate() {
        print!("{ell:>9.4}");
        for m in &methods {
            let row = report.rows.iter().find(|r| r.method == m.label() && r.setting == i).expect("row present");
            match (row.rel_error, &row.flag) {
                (Some(e), _) => print!(" {e:>11.2e}"),
                (None, Some(flag)) => print!(" {flag:>11}"),
                (None, None) => print!(" {:>11}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
