#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdre_core::riccati::{ackermann_gain, default_poles};
use sdre_core::Matrix;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    let data: Vec<f64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
    Matrix::new(m.nrows(), m.ncols(), data).unwrap()
}

/// Largest real part of the eigenvalues.
pub fn spectral_abscissa(m: &Matrix) -> f64 {
    to_na(m).complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    let s = to_na(m);
    let s = (&s + s.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub struct RandomSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub k0: Matrix,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half_width: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-half_width..half_width)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Controllable single-input system with PD `Q`, scalar `R` and a pole-placement seed gain.
pub fn random_system(seed: u64, n: usize) -> RandomSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = uniform_matrix(&mut rng, n, n, 1.5);
        let b = uniform_matrix(&mut rng, n, 1, 1.0);
        let Ok(k0) = ackermann_gain(&a, &b, &default_poles(n)) else { continue };
        if k0.norm_inf() > 20.0 {
            continue;
        }
        let l = uniform_matrix(&mut rng, n, n, 1.0);
        let q = &(&l * &l.transpose()).scale(0.5) + &Matrix::identity(n).scale(0.1);
        let r = Matrix::identity(1).scale(rng.random_range(0.5..2.0));
        return RandomSystem { a, b, q, r, k0 };
    }
}
