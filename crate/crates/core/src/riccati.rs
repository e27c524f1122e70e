//! Model-based continuous-time Riccati machinery.
//!
//! [`kleinman_solve_are`] is Newton's method on the algebraic Riccati
//! equation `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`. Each sweep evaluates the current
//! gain through a Lyapunov solve and improves it with `K = R⁻¹BᵀP`, which is
//! the same fixed point the learning loop in [`crate::irl`] reaches without
//! knowing `A`.

use crate::error::{Error, Result};
use crate::linalg::{
    char_poly, is_hurwitz, lyapunov_residual, poly_eval_matrix, solve_lyapunov, LuFactorization, Matrix,
    SymmetricMatrix,
};

/// A desired closed-loop eigenvalue (or conjugate pair).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pole {
    Real(f64),
    /// The pair `re ± i·im`.
    ConjugatePair {
        re: f64,
        im: f64,
    },
}

impl Pole {
    fn order(&self) -> usize {
        match self {
            Pole::Real(_) => 1,
            Pole::ConjugatePair { .. } => 2,
        }
    }
}

/// `{−1, −2, …, −n}`: the default placement used to seed the Riccati solvers.
pub fn default_poles(n: usize) -> Vec<Pole> {
    (1..=n).map(|k| Pole::Real(-(k as f64))).collect()
}

/// Monic polynomial with the given roots, descending coefficients.
pub fn poly_from_poles(poles: &[Pole]) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    for pole in poles {
        let factor: Vec<f64> = match *pole {
            Pole::Real(r) => vec![1.0, -r],
            Pole::ConjugatePair { re, im } => vec![1.0, -2.0 * re, re * re + im * im],
        };
        let mut next = vec![0.0; coeffs.len() + factor.len() - 1];
        for (i, a) in coeffs.iter().enumerate() {
            for (j, b) in factor.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        coeffs = next;
    }
    coeffs
}

/// `[B, AB, …, Aⁿ⁻¹B]` for single-input `B`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows();
    let mut c = Matrix::zeros(n, n * b.cols());
    let mut block = b.clone();
    for k in 0..n {
        for i in 0..n {
            for j in 0..b.cols() {
                c[(i, k * b.cols() + j)] = block[(i, j)];
            }
        }
        block = a * &block;
    }
    c
}

/// Single-input pole placement by Ackermann's formula
/// `K = eₙᵀ C⁻¹ φ(A)`, with `C` the controllability matrix and `φ` the
/// desired characteristic polynomial.
pub fn ackermann_gain(a: &Matrix, b: &Matrix, poles: &[Pole]) -> Result<Matrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if b.cols() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "pole placement supports a single input, B has {} columns",
            b.cols()
        )));
    }
    let order: usize = poles.iter().map(Pole::order).sum();
    if order != n {
        return Err(Error::DimensionMismatch(format!("{order} poles requested for a {n}-state system")));
    }

    let c = controllability_matrix(a, b);
    let lu = LuFactorization::new(&c).map_err(|_| Error::NotControllable { determinant: 0.0 })?;
    let det = lu.determinant();
    if det.abs() < 1e-10 * c.norm_inf().powi(n as i32) {
        return Err(Error::NotControllable { determinant: det });
    }
    // q = eₙᵀ C⁻¹  ⇔  Cᵀ qᵀ = eₙ
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    let q = LuFactorization::new(&c.transpose()).map_err(|_| Error::NotControllable { determinant: det })?.solve(&e_n);
    let phi_a = poly_eval_matrix(&poly_from_poles(poles), a);
    Ok(&Matrix::row(&q) * &phi_a)
}

/// `R⁻¹BᵀP`.
pub fn gain_from_p(b: &Matrix, r: &Matrix, p: &SymmetricMatrix) -> Result<Matrix> {
    let bt_p = &b.transpose() * &p.to_matrix();
    Ok(LuFactorization::new(r)?.solve_matrix(&bt_p))
}

/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖∞`.
pub fn are_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &SymmetricMatrix) -> Result<f64> {
    let pm = p.to_matrix();
    let k = gain_from_p(b, r, p)?;
    let pb_k = &(&pm * b) * &k;
    let res = &(&(&(&a.transpose() * &pm) + &(&pm * a)) - &pb_k) + q;
    Ok(res.norm_inf())
}

/// Stopping rule for [`kleinman_solve_are`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KleinmanOptions {
    /// Stop once `‖K_{i+1} − K_i‖∞` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest ARE residual accepted as a solution.
    pub residual_tol: f64,
}

impl Default for KleinmanOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 60, residual_tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiSolution {
    pub p: SymmetricMatrix,
    /// `R⁻¹BᵀP` of the returned `P`.
    pub gain: Matrix,
    pub residual: f64,
    pub iterations: usize,
}

/// One Newton-Kleinman iterate, handed to observers.
#[derive(Clone, Debug)]
pub struct KleinmanIterate<'a> {
    pub index: usize,
    /// Gain that was evaluated.
    pub gain: &'a Matrix,
    /// Its cost matrix, `(A − BK)ᵀP + P(A − BK) + Q + KᵀRK = 0`.
    pub p: &'a SymmetricMatrix,
}

/// Solves the ARE from a stabilizing initial gain `k0`.
pub fn kleinman_solve_are(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    k0: &Matrix,
    options: &KleinmanOptions,
) -> Result<RiccatiSolution> {
    kleinman_solve_are_observed(a, b, q, r, k0, options, |_| {})
}

/// [`kleinman_solve_are`] with a callback receiving every `(K_i, P_i)` pair.
pub fn kleinman_solve_are_observed<F>(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    k0: &Matrix,
    options: &KleinmanOptions,
    mut observe: F,
) -> Result<RiccatiSolution>
where
    F: FnMut(KleinmanIterate<'_>),
{
    let n = a.rows();
    let m = b.cols();
    if !a.is_square()
        || b.rows() != n
        || q.rows() != n
        || !q.is_square()
        || r.rows() != m
        || !r.is_square()
        || k0.rows() != m
        || k0.cols() != n
    {
        return Err(Error::DimensionMismatch(format!(
            "A {}x{}, B {}x{}, Q {}x{}, R {}x{}, K0 {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            q.rows(),
            q.cols(),
            r.rows(),
            r.cols(),
            k0.rows(),
            k0.cols()
        )));
    }
    if !is_hurwitz(&(a - &(b * k0))) {
        return Err(Error::NotStabilizing);
    }

    let r_lu = LuFactorization::new(r)?;
    let bt = b.transpose();
    let mut gain = k0.clone();
    let mut last_p = None;

    for index in 0..options.max_iter {
        let a_cl = a - &(b * &gain);
        if !is_hurwitz(&a_cl) {
            return Err(Error::NotStabilizing);
        }
        let weight = SymmetricMatrix::symmetrize(&(q + &(&(&gain.transpose() * r) * &gain)));
        let p = solve_lyapunov(&a_cl, &weight).map_err(|_| Error::NotStabilizing)?;
        debug_assert!(lyapunov_residual(&a_cl, &weight, &p).is_finite());
        observe(KleinmanIterate { index, gain: &gain, p: &p });

        let next = r_lu.solve_matrix(&(&bt * &p.to_matrix()));
        let step = (&next - &gain).norm_inf();
        gain = next;
        last_p = Some(p);
        if step < options.tol {
            let p = last_p.take().expect("at least one iterate");
            let residual = are_residual(a, b, q, r, &p)?;
            if residual >= options.residual_tol || !p.is_positive_definite() {
                return Err(Error::NoConvergence { iterations: index + 1, residual });
            }
            let gain = gain_from_p(b, r, &p)?;
            return Ok(RiccatiSolution { p, gain, residual, iterations: index + 1 });
        }
    }

    let p = last_p.ok_or(Error::NoConvergence { iterations: 0, residual: f64::INFINITY })?;
    let residual = are_residual(a, b, q, r, &p)?;
    if residual < options.residual_tol && p.is_positive_definite() {
        let gain = gain_from_p(b, r, &p)?;
        Ok(RiccatiSolution { p, gain, residual, iterations: options.max_iter })
    } else {
        Err(Error::NoConvergence { iterations: options.max_iter, residual })
    }
}

/// Closed-loop characteristic polynomial `det(sI − (A − BK))`.
pub fn closed_loop_poly(a: &Matrix, b: &Matrix, k: &Matrix) -> Vec<f64> {
    char_poly(&(a - &(b * k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a0() -> Matrix {
        Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0]])
    }

    fn b0() -> Matrix {
        Matrix::column(&[1.0, 1.0])
    }

    #[test]
    fn ackermann_benchmark_origin() {
        let k = ackermann_gain(&a0(), &b0(), &default_poles(2)).unwrap();
        assert!((k[(0, 0)] - 2.0).abs() < 1e-12 && (k[(0, 1)] - 1.0).abs() < 1e-12);
        let a_cl = &a0() - &(&b0() * &k);
        let expected = Matrix::from_rows(&[[-1.0, 0.0], [-1.0, -2.0]]);
        assert!((&a_cl - &expected).max_abs() < 1e-12);
        let poly = char_poly(&a_cl);
        for (c, e) in poly.iter().zip([1.0, 3.0, 2.0]) {
            assert!((c - e).abs() < 1e-10);
        }
    }

    #[test]
    fn ackermann_already_placed_and_scalar() {
        let a = Matrix::diagonal(&[-1.0, -2.0]);
        let k = ackermann_gain(&a, &b0(), &default_poles(2)).unwrap();
        assert!(k.max_abs() < 1e-12);

        let k =
            ackermann_gain(&Matrix::from_rows(&[[1.0]]), &Matrix::from_rows(&[[1.0]]), &[Pole::Real(-1.0)]).unwrap();
        assert!((k[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ackermann_conjugate_pair() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        let b = Matrix::column(&[0.0, 1.0]);
        let k = ackermann_gain(&a, &b, &[Pole::ConjugatePair { re: -1.0, im: 2.0 }]).unwrap();
        // s² + 2s + 5
        assert!((k[(0, 0)] - 5.0).abs() < 1e-12 && (k[(0, 1)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ackermann_rejects_uncontrollable() {
        let a = Matrix::diagonal(&[1.0, 1.0]);
        assert!(matches!(ackermann_gain(&a, &b0(), &default_poles(2)), Err(Error::NotControllable { .. })));
        assert!(matches!(
            ackermann_gain(&a, &Matrix::identity(2), &default_poles(2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn kleinman_scalar_root() {
        let one = Matrix::from_rows(&[[1.0]]);
        let sol = kleinman_solve_are(
            &Matrix::from_rows(&[[-1.0]]),
            &one,
            &one,
            &one,
            &Matrix::zeros(1, 1),
            &KleinmanOptions::default(),
        )
        .unwrap();
        assert!((sol.p.get(0, 0) - (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn kleinman_decoupled() {
        let id = Matrix::identity(2);
        let sol = kleinman_solve_are(&id.scale(-1.0), &id, &id, &id, &Matrix::zeros(2, 2), &KleinmanOptions::default())
            .unwrap();
        let expected = id.scale(2f64.sqrt() - 1.0);
        assert!((&sol.p.to_matrix() - &expected).max_abs() < 1e-12);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn kleinman_benchmark_origin() {
        let sol = kleinman_solve_are(
            &a0(),
            &b0(),
            &Matrix::identity(2),
            &Matrix::identity(1),
            &Matrix::row(&[2.0, 1.0]),
            &KleinmanOptions::default(),
        )
        .unwrap();
        assert!(sol.residual < 1e-9);
        assert!(sol.p.is_positive_definite());
        assert!(is_hurwitz(&(&a0() - &(&b0() * &sol.gain))));
    }

    #[test]
    fn kleinman_rejects_destabilizing_start() {
        let r = kleinman_solve_are(
            &a0(),
            &b0(),
            &Matrix::identity(2),
            &Matrix::identity(1),
            &Matrix::zeros(1, 2),
            &KleinmanOptions::default(),
        );
        assert!(matches!(r, Err(Error::NotStabilizing)));
    }

    #[test]
    fn kleinman_iteration_cap() {
        let opts = KleinmanOptions { max_iter: 1, ..Default::default() };
        let r = kleinman_solve_are(
            &a0(),
            &b0(),
            &Matrix::identity(2),
            &Matrix::identity(1),
            &Matrix::row(&[2.0, 1.0]),
            &opts,
        );
        assert!(matches!(r, Err(Error::NoConvergence { iterations: 1, .. })));
    }

    #[test]
    fn residual_of_zero_p() {
        let id = Matrix::identity(2);
        let p = SymmetricMatrix::symmetrize(&Matrix::zeros(2, 2));
        assert_eq!(are_residual(&id.scale(-1.0), &id, &id, &id, &p).unwrap(), 1.0);
    }

    #[test]
    fn residual_grows_under_perturbation() {
        let id = Matrix::identity(2);
        let exact = SymmetricMatrix::symmetrize(&id.scale(2f64.sqrt() - 1.0));
        let base = are_residual(&id.scale(-1.0), &id, &id, &id, &exact).unwrap();
        assert!(base < 1e-12);
        let bumped =
            SymmetricMatrix::from_vech(2, exact.vech().iter().zip([1e-3, -1e-3, 1e-3]).map(|(a, b)| a + b).collect())
                .unwrap();
        assert!(are_residual(&id.scale(-1.0), &id, &id, &id, &bumped).unwrap() > base);
    }

    #[test]
    fn gain_from_p_cases() {
        let one = Matrix::identity(1);
        let k = gain_from_p(&b0(), &one, &SymmetricMatrix::identity(2)).unwrap();
        assert_eq!(k, Matrix::row(&[1.0, 1.0]));
        let zero = SymmetricMatrix::symmetrize(&Matrix::zeros(2, 2));
        assert_eq!(gain_from_p(&b0(), &one, &zero).unwrap(), Matrix::zeros(1, 2));
    }

    #[test]
    fn gain_invariant_to_joint_weight_scaling() {
        let solve = |scale: f64| {
            kleinman_solve_are(
                &a0(),
                &b0(),
                &Matrix::identity(2).scale(scale),
                &Matrix::identity(1).scale(scale),
                &Matrix::row(&[2.0, 1.0]),
                &KleinmanOptions::default(),
            )
            .unwrap()
        };
        let base = solve(1.0);
        let doubled = solve(2.0);
        assert!((&base.gain - &doubled.gain).max_abs() < 1e-9);
        assert!((&base.p.to_matrix().scale(2.0) - &doubled.p.to_matrix()).max_abs() < 1e-9);
    }

    #[test]
    fn poly_from_poles_expands() {
        assert_eq!(poly_from_poles(&default_poles(2)), vec![1.0, 3.0, 2.0]);
        assert_eq!(
            poly_from_poles(&[Pole::Real(-1.0), Pole::ConjugatePair { re: 0.0, im: 1.0 }]),
            vec![1.0, 1.0, 1.0, 1.0]
        );
    }
}
