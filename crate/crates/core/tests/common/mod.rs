//! Helpers shared by the integration tests.
#![allow(dead_code)]

use mvgp::MultiViewDataset;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Two class-conditional Gaussian views. Each view's class means sit at
/// `±sep/2` along the diagonal of its `d` features, with unit noise. In
/// `flip` of the rows the second view is generated from the opposite label.
pub fn gaussian_two_view(seed: u64, n: usize, dims: [usize; 2], sep: [f64; 2], flip: f64) -> MultiViewDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let n_flip = (flip * n as f64).round() as usize;
    let mut y2 = labels.clone();
    for i in sample(&mut rng, n, n_flip) {
        y2[i] = -y2[i];
    }
    let mut view = |d: usize, sep: f64, y: &DVector<f64>| {
        let shift = 0.5 * sep / (d as f64).sqrt();
        DMatrix::from_fn(n, d, |i, _| y[i] * shift + rng.sample::<f64, _>(StandardNormal))
    };
    let x1 = view(dims[0], sep[0], &labels);
    let x2 = view(dims[1], sep[1], &y2);
    MultiViewDataset::from_views(vec![x1, x2], labels).unwrap()
}

/// Squared-exponential Gram matrix written out entry by entry.
pub fn se_gram(x: &DMatrix<f64>, sf: f64, l: f64) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let mut d2 = 0.0;
        for c in 0..x.ncols() {
            d2 += (x[(i, c)] - x[(j, c)]).powi(2);
        }
        sf * sf * (-d2 / (2.0 * l * l)).exp()
    })
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    match n {
        0 => 1.0,
        1 => m[(0, 0)],
        _ => (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[(0, j)] * cofactor_det(&minor(m, 0, j))
            })
            .sum(),
    }
}

fn minor(m: &DMatrix<f64>, row: usize, col: usize) -> DMatrix<f64> {
    m.clone().remove_row(row).remove_column(col)
}

/// Inverse as adjugate over determinant.
pub fn cofactor_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let det = cofactor_det(m);
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0 / det);
    }
    DMatrix::from_fn(n, n, |i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * cofactor_det(&minor(m, j, i)) / det
    })
}

/// Five-point central differences at `h` and `h/2` combined by one
/// Richardson step: `(16·D(h/2) − D(h)) / 15`.
pub fn richardson_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h);
    (16.0 * d(0.5 * h) - d(h)) / 15.0
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 { 0.0 } else { d / a.abs().max(b.abs()).max(floor) }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
