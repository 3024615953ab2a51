//! Kernel evaluation and the design matrix shared by both solvers.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::scalar::{lit, Scalar};

/// Kernel family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// `exp(-‖x - x'‖² / (2 λ²))`
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig<T: Scalar> {
    pub kind: KernelKind,
    pub width: T,
}

impl<T: Scalar> KernelConfig<T> {
    pub fn gaussian(width: T) -> Result<Self> {
        let cfg = Self {
            kind: KernelKind::Gaussian,
            width,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > T::zero()) || !self.width.is_finite() {
            return invalid(format!("kernel width must be positive, got {}", self.width));
        }
        Ok(())
    }

    /// Kernel value between two points given as slices.
    pub fn eval(&self, x: &[T], x_prime: &[T]) -> Result<T> {
        if x.len() != x_prime.len() {
            return invalid(format!(
                "kernel arguments have dimensions {} and {}",
                x.len(),
                x_prime.len()
            ));
        }
        Ok(self.eval_unchecked(x.iter().copied(), x_prime.iter().copied()))
    }

    fn eval_unchecked(&self, x: impl Iterator<Item = T>, y: impl Iterator<Item = T>) -> T {
        match self.kind {
            KernelKind::Gaussian => {
                let sq = x.zip(y).fold(T::zero(), |acc, (a, b)| {
                    let d = a - b;
                    acc + d * d
                });
                (-sq / (lit::<T>(2.0) * self.width * self.width)).exp()
            }
        }
    }

    /// Kernel value between row `i` of `a` and row `j` of `b`.
    pub(crate) fn eval_rows(&self, a: &DMatrix<T>, i: usize, b: &DMatrix<T>, j: usize) -> T {
        debug_assert_eq!(a.ncols(), b.ncols());
        self.eval_unchecked(a.row(i).iter().copied(), b.row(j).iter().copied())
    }
}

/// `K(x, x')` for the configured kernel.
pub fn kernel_eval<T: Scalar>(x: &[T], x_prime: &[T], cfg: &KernelConfig<T>) -> Result<T> {
    cfg.validate()?;
    cfg.eval(x, x_prime)
}

/// `N × (N+1)` matrix `Φ`: column 0 is the bias, column `i ≥ 1` holds
/// `K(x_i, x_n)` down the rows `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix<T: Scalar> {
    values: DMatrix<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_candidates(&self) -> usize {
        self.values.ncols()
    }

    /// Candidate basis vector `φ_i` (length N).
    pub fn column(&self, i: usize) -> nalgebra::DVector<T> {
        self.values.column(i).into_owned()
    }
}

/// Builds the design matrix for inputs `x` (one sample per row).
pub fn build_design_matrix<T: Scalar>(x: &DMatrix<T>, cfg: &KernelConfig<T>) -> Result<DesignMatrix<T>> {
    cfg.validate()?;
    let n = x.nrows();
    if n == 0 {
        return invalid("design matrix needs at least one sample");
    }
    let mut values = DMatrix::<T>::zeros(n, n + 1);
    for row in 0..n {
        values[(row, 0)] = T::one();
        for i in 1..=n {
            values[(row, i)] = cfg.eval_rows(x, i - 1, x, row);
        }
    }
    Ok(DesignMatrix { values })
}

/// Basis row `φ(x*)` restricted to the given relevance inputs.
pub(crate) fn basis_row<T: Scalar>(
    cfg: &KernelConfig<T>,
    has_bias: bool,
    relevance_inputs: &DMatrix<T>,
    x_star: &[T],
) -> Result<Vec<T>> {
    if relevance_inputs.nrows() > 0 && relevance_inputs.ncols() != x_star.len() {
        return invalid(format!(
            "input has dimension {} but the model expects {}",
            x_star.len(),
            relevance_inputs.ncols()
        ));
    }
    let mut row = Vec::with_capacity(relevance_inputs.nrows() + usize::from(has_bias));
    if has_bias {
        row.push(T::one());
    }
    for r in 0..relevance_inputs.nrows() {
        row.push(cfg.eval_unchecked(
            relevance_inputs.row(r).iter().copied(),
            x_star.iter().copied(),
        ));
    }
    Ok(row)
}
