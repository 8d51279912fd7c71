//! Evaluates both sides of the reciprocally convex bound on random splits of
//! a delay interval. The left side never drops below the right one while
//! `[R G; G' R]` is positive semidefinite.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrhoc::linalg::{Mat, Vector};
use rrhoc::lmi::reciprocal_bound_check;

fn main() -> rrhoc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let g = &r * 0.4;
    let mut worst = f64::INFINITY;
    for trial in 0..5 {
        let p = 1 + trial % 3;
        let gaps: Vec<f64> = (0..=p).map(|_| rng.random_range(0.01..1.0)).collect();
        let delta: Vec<Vector> = (0..=p)
            .map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let (lhs, rhs) = reciprocal_bound_check(&r, &g, &gaps, &delta)?;
        println!("p = {p}: lhs {lhs:.5} >= rhs {rhs:.5}");
        worst = worst.min(lhs - rhs);
    }
    println!("smallest gap lhs - rhs = {worst:.3e}");
    Ok(())
}
