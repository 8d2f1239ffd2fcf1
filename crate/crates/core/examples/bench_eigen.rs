use gapbound::spectra::{eigendecompose_with, HermitianOperator, Vectors};
use nalgebra::DMatrix;
use std::time::Instant;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1024);
    let m = DMatrix::from_fn(n, n, |i, j| (((i * 31 + j * 17) ^ (i + j)) % 97) as f64 / 97.0);
    let m = (&m + m.transpose()) * 0.5;
    let h = HermitianOperator::real(m).unwrap();
    let t = Instant::now();
    let s = eigendecompose_with(&h, Vectors::Ground).unwrap();
    println!("n={n} ground path {:?} min={} res={}", t.elapsed(), s.eigenvalues[0], s.residual_max());
}
