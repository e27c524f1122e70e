//! Dense small-matrix kernels.
//!
//! Everything here targets state dimensions of at most a handful of
//! entries, so the algorithms favour directness over asymptotic cost:
//! Gaussian elimination with partial pivoting, Householder QR, a Kronecker
//! form of the Lyapunov equation, Faddeev-LeVerrier for characteristic
//! polynomials and a Routh table for the Hurwitz test.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Relative pivot threshold for [`linear_solve`].
pub const PIVOT_TOLERANCE: f64 = 1e-13;
/// Relative threshold on the QR diagonal for [`solve_least_squares`].
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Zero-pivot substitution used by the Routh table.
pub const ROUTH_EPSILON: f64 = 1e-12;

/// Dense row-major matrix of finite reals.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!("matrix shape {rows}x{cols} is empty")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of rows.
    ///
    /// Panics when the rows are ragged or contain non-finite values; meant
    /// for literals in code and tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let data: Vec<f64> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data).expect("well-formed matrix literal")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be non-empty");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Column vector `n x 1`.
    pub fn column(values: &[f64]) -> Self {
        Self::from_rows(&values.iter().map(|v| [*v]).collect::<Vec<_>>())
    }

    /// Row vector `1 x n`.
    pub fn row(values: &[f64]) -> Self {
        Self::from_rows(&[values])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Induced infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|r| self.row_slice(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows).map(|r| self.row_slice(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// `xᵀ M x` for a square matrix.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// Leading `k x k` block.
    pub fn leading_block(&self, k: usize) -> Self {
        let mut m = Self::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = self[(i, j)];
            }
        }
        m
    }

    fn check_same_shape(&self, other: &Self, op: &str) {
        assert!(
            self.rows == other.rows && self.cols == other.cols,
            "{op}: shape {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Mul<f64> for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: f64) -> Matrix {
        self.scale(rhs)
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        self.check_same_shape(rhs, "add");
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        self.check_same_shape(rhs, "sub");
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Neg for &Matrix {
    type Output = Matrix;

    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{}[", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            for (c, v) in self.row_slice(r).iter().enumerate() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

/// Symmetric matrix stored once, as its upper triangle in row-major order
/// (the half-vectorization `vech`).
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    upper: Vec<f64>,
}

impl SymmetricMatrix {
    /// Number of free entries of an `n x n` symmetric matrix.
    pub fn vech_len(n: usize) -> usize {
        n * (n + 1) / 2
    }

    /// Position of entry `(i, j)` (any order) inside `vech`.
    pub fn vech_index(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    }

    pub fn from_vech(dim: usize, upper: Vec<f64>) -> Result<Self> {
        if dim == 0 || upper.len() != Self::vech_len(dim) {
            return Err(Error::DimensionMismatch(format!(
                "vech of length {} does not describe a {dim}x{dim} matrix",
                upper.len()
            )));
        }
        if upper.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry);
        }
        Ok(Self { dim, upper })
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrize(m: &Matrix) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let n = m.rows();
        let mut upper = Vec::with_capacity(Self::vech_len(n));
        for i in 0..n {
            for j in i..n {
                upper.push(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        Self { dim: n, upper }
    }

    pub fn identity(n: usize) -> Self {
        Self::symmetrize(&Matrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vech(&self) -> &[f64] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[Self::vech_index(self.dim, i, j)]
    }

    pub fn to_matrix(&self) -> Matrix {
        let n = self.dim;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// Leading principal minors `det(M[..k, ..k])`, `k = 1..=n`, from
    /// elimination without pivoting. Stops at the first non-positive pivot
    /// and reports the minors computed so far.
    pub fn leading_minors(&self) -> Vec<f64> {
        let mut a = self.to_matrix();
        let n = self.dim;
        let mut minors = Vec::with_capacity(n);
        let mut det = 1.0;
        for k in 0..n {
            let pivot = a[(k, k)];
            det *= pivot;
            minors.push(det);
            if pivot <= 0.0 {
                break;
            }
            for i in k + 1..n {
                let f = a[(i, k)] / pivot;
                for j in k..n {
                    a[(i, j)] -= f * a[(k, j)];
                }
            }
        }
        minors
    }

    /// Sylvester's criterion: every leading principal minor is positive.
    pub fn is_positive_definite(&self) -> bool {
        let minors = self.leading_minors();
        minors.len() == self.dim && minors.iter().all(|&d| d > 0.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_inf_vec(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// LU factorization with partial pivoting, `P·M = L·U`.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    lu: Matrix,
    perm: Vec<usize>,
    swaps: usize,
}

impl LuFactorization {
    pub fn new(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!("LU needs a square matrix, got {}x{}", m.rows(), m.cols())));
        }
        let n = m.rows();
        let threshold = PIVOT_TOLERANCE * m.norm_inf();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let (p, pivot_abs) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs < threshold || pivot_abs == 0.0 {
                return Err(Error::SingularMatrix { pivot: pivot_abs });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm, swaps })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu[(i, j)] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu[(i, j)] * y[j];
            }
            y[i] /= self.lu[(i, i)];
        }
        y
    }

    /// Solves `M X = RHS` column by column.
    pub fn solve_matrix(&self, rhs: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(rhs.rows(), rhs.cols());
        for c in 0..rhs.cols() {
            let col: Vec<f64> = (0..rhs.rows()).map(|r| rhs[(r, c)]).collect();
            for (r, v) in self.solve(&col).into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        out
    }

    pub fn determinant(&self) -> f64 {
        let d: f64 = (0..self.lu.rows()).map(|i| self.lu[(i, i)]).product();
        if self.swaps.is_multiple_of(2) {
            d
        } else {
            -d
        }
    }
}

/// Solves `M x = b` by Gaussian elimination with partial pivoting.
pub fn linear_solve(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for a {}x{} system",
            b.len(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(LuFactorization::new(m)?.solve(b))
}

/// Determinant through LU; zero when elimination hits an exact zero pivot.
pub fn determinant(m: &Matrix) -> f64 {
    assert!(m.is_square(), "determinant needs a square matrix");
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs())).unwrap_or(k);
        if a[(p, k)] == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = tmp;
            }
            det = -det;
        }
        let pivot = a[(k, k)];
        det *= pivot;
        for i in k + 1..n {
            let f = a[(i, k)] / pivot;
            for j in k..n {
                a[(i, j)] -= f * a[(k, j)];
            }
        }
    }
    det
}

/// Least-squares minimizer of `‖rows·θ − rhs‖₂` by Householder QR.
pub fn solve_least_squares(rows: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let (m, p) = (rows.rows(), rows.cols());
    if m < p {
        return Err(Error::DimensionMismatch(format!(
            "least squares needs at least as many rows as unknowns ({m} < {p})"
        )));
    }
    if rhs.len() != m {
        return Err(Error::DimensionMismatch(format!("rhs of length {} for {m} equations", rhs.len())));
    }
    let threshold = RANK_TOLERANCE * rows.norm_inf();
    let mut a = rows.clone();
    let mut b = rhs.to_vec();
    let mut v = vec![0.0; m];

    for k in 0..p {
        let col_norm = (k..m).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
        if col_norm < threshold || col_norm == 0.0 {
            return Err(Error::RankDeficient { index: k, diagonal: col_norm });
        }
        let alpha = if a[(k, k)] >= 0.0 { -col_norm } else { col_norm };
        for i in k..m {
            v[i] = a[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        if vnorm2 > 0.0 {
            for j in k..p {
                let s = 2.0 * (k..m).map(|i| v[i] * a[(i, j)]).sum::<f64>() / vnorm2;
                for i in k..m {
                    a[(i, j)] -= s * v[i];
                }
            }
            let s = 2.0 * (k..m).map(|i| v[i] * b[i]).sum::<f64>() / vnorm2;
            for i in k..m {
                b[i] -= s * v[i];
            }
        }
        if a[(k, k)].abs() < threshold {
            return Err(Error::RankDeficient { index: k, diagonal: a[(k, k)].abs() });
        }
    }

    let mut theta = vec![0.0; p];
    for i in (0..p).rev() {
        let tail: f64 = (i + 1..p).map(|j| a[(i, j)] * theta[j]).sum();
        theta[i] = (b[i] - tail) / a[(i, i)];
    }
    Ok(theta)
}

/// Solves `A_clᵀ P + P A_cl + Q = 0` by vectorizing over `vec(P)` with
/// `(I ⊗ A_clᵀ + A_clᵀ ⊗ I) vec(P) = −vec(Q)`, then symmetrizes the result.
pub fn solve_lyapunov(a_cl: &Matrix, q: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    if !a_cl.is_square() || a_cl.rows() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov operator {}x{} with weight of dimension {}",
            a_cl.rows(),
            a_cl.cols(),
            q.dim()
        )));
    }
    let n = a_cl.rows();
    let nn = n * n;
    // column-major vec: P(i, j) lives at i + j n
    let mut op = Matrix::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for k in 0..n {
                // (I ⊗ Aᵀ): couples P(k, j)
                op[(row, k + j * n)] += a_cl[(k, i)];
                // (Aᵀ ⊗ I): couples P(i, k)
                op[(row, i + k * n)] += a_cl[(k, j)];
            }
        }
    }
    let mut rhs = vec![0.0; nn];
    for j in 0..n {
        for i in 0..n {
            rhs[i + j * n] = -q.get(i, j);
        }
    }
    let vec_p = linear_solve(&op, &rhs)?;
    let mut p = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = vec_p[i + j * n];
        }
    }
    Ok(SymmetricMatrix::symmetrize(&p))
}

/// `‖A_clᵀ P + P A_cl + Q‖∞`.
pub fn lyapunov_residual(a_cl: &Matrix, q: &SymmetricMatrix, p: &SymmetricMatrix) -> f64 {
    let pm = p.to_matrix();
    let r = &(&(&a_cl.transpose() * &pm) + &(&pm * a_cl)) + &q.to_matrix();
    r.norm_inf()
}

/// Coefficients of `det(sI − A)` in descending powers, leading `1`
/// included: `[1, c₁, …, cₙ]` for `sⁿ + c₁sⁿ⁻¹ + … + cₙ`.
pub fn char_poly(a: &Matrix) -> Vec<f64> {
    assert!(a.is_square(), "characteristic polynomial needs a square matrix");
    let n = a.rows();
    let id = Matrix::identity(n);
    let mut coeffs = Vec::with_capacity(n + 1);
    coeffs.push(1.0);
    // Faddeev-LeVerrier: M₁ = I, c_k = −tr(A M_k)/k, M_{k+1} = A M_k + c_k I
    let mut m_k = id.clone();
    for k in 1..=n {
        let am = a * &m_k;
        let c = -am.trace() / k as f64;
        coeffs.push(c);
        m_k = &am + &id.scale(c);
    }
    coeffs
}

/// Evaluates a descending-coefficient polynomial at a matrix argument
/// (Horner's scheme).
pub fn poly_eval_matrix(coeffs: &[f64], a: &Matrix) -> Matrix {
    let n = a.rows();
    let id = Matrix::identity(n);
    let mut acc = Matrix::zeros(n, n);
    for &c in coeffs {
        acc = &(&acc * a) + &id.scale(c);
    }
    acc
}

/// First column of the Routh table for a descending-coefficient polynomial.
/// Zero pivots are replaced by [`ROUTH_EPSILON`]; the flag reports whether
/// that happened.
fn routh_first_column(coeffs: &[f64]) -> (Vec<f64>, bool) {
    let degree = coeffs.len() - 1;
    let width = degree / 2 + 1;
    let mut prev: Vec<f64> = (0..width).map(|i| coeffs.get(2 * i).copied().unwrap_or(0.0)).collect();
    let mut cur: Vec<f64> = (0..width).map(|i| coeffs.get(2 * i + 1).copied().unwrap_or(0.0)).collect();
    let mut first = vec![prev[0]];
    let mut perturbed = false;
    for _ in 0..degree {
        if cur[0].abs() <= ROUTH_EPSILON {
            cur[0] = ROUTH_EPSILON;
            perturbed = true;
        }
        first.push(cur[0]);
        let next: Vec<f64> = (0..width)
            .map(|i| {
                let a = prev.get(i + 1).copied().unwrap_or(0.0);
                let b = cur.get(i + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    (first, perturbed)
}

/// Routh-Hurwitz test on a descending-coefficient polynomial: all roots
/// strictly in the open left half-plane.
pub fn polynomial_is_hurwitz(coeffs: &[f64]) -> bool {
    if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
        return false;
    }
    let lead = coeffs[0];
    if lead == 0.0 {
        return false;
    }
    let normalized: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    if normalized.len() == 1 {
        return true;
    }
    if normalized.iter().any(|&c| c <= 0.0) {
        return false;
    }
    let (first, perturbed) = routh_first_column(&normalized);
    // a substituted zero pivot means roots on the imaginary axis or beyond
    !perturbed && first.iter().all(|&v| v > 0.0)
}

/// True iff every eigenvalue of `A` has a strictly negative real part.
pub fn is_hurwitz(a: &Matrix) -> bool {
    a.is_finite() && polynomial_is_hurwitz(&char_poly(a))
}
