#![allow(dead_code)]

use miolab_core::numerics::relative_error;
use miolab_core::{Mat64, Rng};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Mat64 {
    let mut rng = Rng::new(seed, 0x7465_7374);
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Mat64::new(rows, cols, data).unwrap()
}

/// Central differences of `f` over every entry of `z`.
pub fn numeric_gradient(z: &Mat64, step: f64, f: impl Fn(&Mat64) -> f64) -> Mat64 {
    let mut out = Mat64::zeros(z.rows(), z.cols());
    let mut probe = z.clone();
    for r in 0..z.rows() {
        for c in 0..z.cols() {
            let base = z.get(r, c);
            probe.set(r, c, base + step);
            let plus = f(&probe);
            probe.set(r, c, base - step);
            let minus = f(&probe);
            probe.set(r, c, base);
            out.set(r, c, (plus - minus) / (2.0 * step));
        }
    }
    out
}

pub fn max_relative_error(a: &Mat64, b: &Mat64) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| relative_error(*x, *y))
        .fold(0.0, f64::max)
}
