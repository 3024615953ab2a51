//! Dense helpers: Cholesky factorization, jittered SPD inversion and small
//! polynomial utilities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T: Scalar> {
    l: DMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factorizes a symmetric matrix. Only the lower triangle is read.
    ///
    /// Fails with [`Error::NotPositiveDefinite`] carrying the index of the first
    /// pivot that is not strictly positive.
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "cholesky of non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let mut l = DMatrix::<T>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `log |A|`
    pub fn log_det(&self) -> T {
        let two: T = lit(2.0);
        (0..self.dim()).fold(T::zero(), |acc, i| acc + two * self.l[(i, i)].ln())
    }

    /// Solves `L y = b` in place, column by column.
    fn forward(&self, b: &mut DMatrix<T>) {
        let n = self.dim();
        for c in 0..b.ncols() {
            for i in 0..n {
                let mut s = b[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * b[(k, c)];
                }
                b[(i, c)] = s / self.l[(i, i)];
            }
        }
    }

    /// Solves `Lᵀ x = y` in place.
    fn backward(&self, b: &mut DMatrix<T>) {
        let n = self.dim();
        for c in 0..b.ncols() {
            for i in (0..n).rev() {
                let mut s = b[(i, c)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * b[(k, c)];
                }
                b[(i, c)] = s / self.l[(i, i)];
            }
        }
    }

    /// `A⁻¹ B`
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(b.nrows(), self.dim(), "right-hand side has wrong row count");
        let mut x = b.clone();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        DVector::from_column_slice(self.solve(&m).as_slice())
    }

    /// `L⁻¹ B`, used for quadratic forms `bᵀ A⁻¹ b = ‖L⁻¹ b‖²`.
    pub fn half_solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let mut x = b.clone();
        self.forward(&mut x);
        x
    }

    /// Symmetric inverse `A⁻¹`.
    pub fn inverse(&self) -> DMatrix<T> {
        let mut inv = self.solve(&DMatrix::identity(self.dim(), self.dim()));
        symmetrize(&mut inv);
        inv
    }
}

/// Replaces `a` by `(a + aᵀ) / 2`.
pub fn symmetrize<T: Scalar>(a: &mut DMatrix<T>) {
    let n = a.nrows();
    let half: T = lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let m = (a[(i, j)] + a[(j, i)]) * half;
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Inverts a symmetric positive-definite matrix, adding diagonal jitter of
/// `1e-10 · tr(A)/n`, then ten times that, up to three escalations, if the
/// plain factorization fails.
pub fn spd_inverse_jittered<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    match Cholesky::new(a) {
        Ok(c) => return Ok(c.inverse()),
        Err(Error::NotPositiveDefinite { pivot }) => {
            let n = a.nrows();
            let mean_diag = a.trace() / lit(n as f64);
            if !(mean_diag > T::zero()) {
                return Err(Error::NotPositiveDefinite { pivot });
            }
            let mut jitter = mean_diag * lit(1e-10);
            let mut last = pivot;
            for _ in 0..=3 {
                let mut b = a.clone();
                for i in 0..n {
                    b[(i, i)] += jitter;
                }
                match Cholesky::new(&b) {
                    Ok(c) => return Ok(c.inverse()),
                    Err(Error::NotPositiveDefinite { pivot }) => last = pivot,
                    Err(e) => return Err(e),
                }
                jitter *= lit(10.0);
            }
            Err(Error::NotPositiveDefinite { pivot: last })
        }
        Err(e) => Err(e),
    }
}

/// Submatrix `a[rows, cols]`.
pub fn select<T: Scalar>(a: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Columns `cols` of `a`.
pub fn select_columns<T: Scalar>(a: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

/// Rows `rows` of `a`.
pub fn select_rows<T: Scalar>(a: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Polynomial with coefficients in ascending powers.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T: Scalar> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::new(vec![T::zero()]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * lit(k as f64))
                .collect(),
        )
    }

    /// Product by convolution of coefficient vectors.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |c: &[T], k: usize| c.get(k).copied().unwrap_or_else(T::zero);
        Self::new(
            (0..n)
                .map(|k| get(&self.coeffs, k) + get(&other.coeffs, k))
                .collect(),
        )
    }

    /// Substitutes `x = c·y`.
    pub fn rescale(&self, c: T) -> Self {
        let mut p = T::one();
        Self::new(
            self.coeffs
                .iter()
                .map(|&a| {
                    let v = a * p;
                    p *= c;
                    v
                })
                .collect(),
        )
    }

    /// Drops leading coefficients that are zero relative to the largest one.
    pub fn trimmed(&self, rel_tol: T) -> Self {
        let scale = self
            .coeffs
            .iter()
            .fold(T::zero(), |m, &c| if c.abs() > m { c.abs() } else { m });
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && coeffs.last().unwrap().abs() <= rel_tol * scale {
            coeffs.pop();
        }
        Self::new(coeffs)
    }

    /// All complex roots, from the eigenvalues of the companion matrix.
    /// Returns `None` if the Schur iteration does not converge.
    pub fn complex_roots(&self) -> Option<Vec<(T, T)>> {
        let n = self.degree();
        if n == 0 {
            return Some(Vec::new());
        }
        let lead = self.coeffs[n];
        if n == 1 {
            return Some(vec![(-self.coeffs[0] / lead, T::zero())]);
        }
        let mut companion = DMatrix::<T>::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = T::one();
        }
        for i in 0..n {
            companion[(i, n - 1)] = -self.coeffs[i] / lead;
        }
        let schur = nalgebra::Schur::try_new(companion, T::default_epsilon(), 200 * n)?;
        Some(
            schur
                .complex_eigenvalues()
                .iter()
                .map(|z| (z.re, z.im))
                .collect(),
        )
    }

    /// Newton refinement of a real root; keeps the starting point if the
    /// iteration does not reduce `|p(x)|`.
    pub fn polish(&self, x0: T, steps: usize) -> T {
        let d = self.derivative();
        let mut best = x0;
        let mut best_val = self.eval(x0).abs();
        let mut x = x0;
        for _ in 0..steps {
            let dp = d.eval(x);
            if dp == T::zero() || !dp.is_finite() {
                break;
            }
            x -= self.eval(x) / dp;
            let v = self.eval(x).abs();
            if !v.is_finite() {
                break;
            }
            if v < best_val {
                best = x;
                best_val = v;
            } else {
                break;
            }
        }
        best
    }
}
