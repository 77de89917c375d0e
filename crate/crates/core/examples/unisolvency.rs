//! What happens when the nodes cannot determine the polynomial part.
//!
//! With fewer nodes than polynomial basis functions, or nodes on a line in
//! two dimensions, BSC reports `NotUnisolvent` instead of returning weights.
//! Plain BC still works on the same nodes.
//!
//! ```bash
//! cargo run --example unisolvency
//! ```

use bayes_sard::cubature::{bc, bsc};
use bayes_sard::gp::Dataset;
use bayes_sard::kernels::{KernelSpec, MaternOrder};
use bayes_sard::measures::MeasureSpec;
use bayes_sard::polyspace::{is_unisolvent, total_degree_space};

fn main() -> bayes_sard::Result<()> {
    let cases: Vec<(&str, Vec<Vec<f64>>, u32)> = vec![
        ("2 nodes, cubic space", vec![vec![-1.0], vec![1.0]], 3),
        ("4 nodes, cubic space", vec![vec![-1.5], vec![-0.5], vec![0.5], vec![1.5]], 3),
        ("5 collinear nodes in 2-d, linear space", (0..5).map(|i| vec![i as f64 * 0.2, i as f64 * 0.2]).collect(), 1),
        ("5 spread nodes in 2-d, linear space", vec![vec![0.1, 0.2], vec![0.8, 0.1], vec![0.5, 0.9], vec![0.3, 0.6], vec![0.9, 0.7]], 1),
    ];
    for (label, nodes, m) in cases {
        let d = nodes[0].len();
        let (measure, kernel) = if d == 1 {
            (MeasureSpec::standard_gaussian(1), KernelSpec::gaussian(1.0))
        } else {
            (MeasureSpec::unit_cube(d), KernelSpec::product_matern(MaternOrder::ThreeHalves, 0.5))
        };
        let space = total_degree_space(m, d);
        let data = Dataset::from_fn(nodes.clone(), |x| x.iter().map(|t| t.exp()).sum())?;
        println!("{label}: unisolvent = {}", is_unisolvent(&space, &nodes));
        match bsc(&kernel, &measure, &space, &data, None) {
            Ok(r) => println!("    bsc mean {:.6}, sd {:.2e}", r.mean, r.sd()),
            Err(e) => println!("    bsc error [{}]: {e}", e.kind()),
        }
        println!("    bc  mean {:.6}", bc(&kernel, &measure, &data)?.mean);
    }
    Ok(())
}
