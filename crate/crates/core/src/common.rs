//! Types shared by the two solvers.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::kernel::{build_design_matrix, DesignMatrix, KernelConfig};
use crate::scalar::Scalar;

/// Prior precision of one weight row: finite and positive, or pruned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alpha<T> {
    Finite(T),
    Inactive,
}

impl<T: Scalar> Alpha<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Alpha::Finite(a) => Some(a),
            Alpha::Inactive => None,
        }
    }

    pub fn is_active(self) -> bool {
        matches!(self, Alpha::Finite(_))
    }

    /// `1/α`, zero when pruned.
    pub fn inverse(self) -> T {
        match self {
            Alpha::Finite(a) => T::one() / a,
            Alpha::Inactive => T::zero(),
        }
    }
}

/// Kind of update applied to a single hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Reestimate,
    Add,
    Delete,
}

/// Training inputs (one sample per row) and targets (one output per column).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData<T: Scalar> {
    pub inputs: DMatrix<T>,
    pub targets: DMatrix<T>,
}

impl<T: Scalar> TrainingData<T> {
    pub fn new(inputs: DMatrix<T>, targets: DMatrix<T>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return invalid(format!(
                "{} input rows but {} target rows",
                inputs.nrows(),
                targets.nrows()
            ));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return invalid("training data contains non-finite values");
        }
        Ok(Self { inputs, targets })
    }

    pub fn n_samples(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.targets.ncols()
    }
}

/// Loop controls common to both EM solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Threshold on `|Δ log α|` for a converging re-estimation step.
    pub tolerance: f64,
    /// Keep a per-iteration record of the selected update.
    pub record_trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 0.1,
            record_trace: false,
        }
    }
}

/// One EM iteration as seen by the selection step.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord<T: Scalar> {
    pub iteration: usize,
    pub index: usize,
    pub action: Action,
    pub alpha_before: Alpha<T>,
    pub alpha_after: Alpha<T>,
    /// `2ΔL` of the applied action.
    pub two_delta_l: T,
    /// Full hyperparameter vector after the action.
    pub alphas: Vec<Alpha<T>>,
    /// Noise parameters the selection was made under: `Ω` (V×V) for the
    /// matrix-normal solver, `diag(σ_j²)` for the per-output solver.
    pub noise_at_selection: DMatrix<T>,
    /// Noise parameters after this iteration's noise update.
    pub noise_after: DMatrix<T>,
}

/// Quantities computed once per fit: `Φ`, `ΦᵀΦ` and `ΦᵀT`.
pub(crate) struct Prepared<T: Scalar> {
    pub design: DesignMatrix<T>,
    pub gram: DMatrix<T>,
    pub phi_t_targets: DMatrix<T>,
}

impl<T: Scalar> Prepared<T> {
    pub fn new(data: &TrainingData<T>, cfg: &KernelConfig<T>) -> Result<Self> {
        let design = build_design_matrix(&data.inputs, cfg)?;
        let phi = design.values();
        let gram = phi.transpose() * phi;
        let phi_t_targets = phi.transpose() * &data.targets;
        Ok(Self {
            design,
            gram,
            phi_t_targets,
        })
    }
}

pub(crate) fn active_indices<T: Scalar>(alpha: &[Alpha<T>]) -> Vec<usize> {
    alpha
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.is_active().then_some(i))
        .collect()
}

/// Denominator guard for promoting `s'` to `s`: `1e-12 · max(1, α)`.
pub(crate) fn promotion_guard<T: Scalar>(alpha: T) -> T {
    let one = T::one();
    crate::scalar::lit::<T>(1e-12) * if alpha > one { alpha } else { one }
}

/// Relevance inputs (rows of `x` for active kernel columns) and bias flag.
pub(crate) fn relevance_inputs<T: Scalar>(x: &DMatrix<T>, active: &[usize]) -> (bool, DMatrix<T>) {
    let has_bias = active.first() == Some(&0);
    let rows: Vec<usize> = active.iter().filter(|&&i| i > 0).map(|&i| i - 1).collect();
    (has_bias, crate::linalg::select_rows(x, &rows))
}

/// Sample covariance of the target rows, `Σ (t_i - t̄)ᵀ (t_i - t̄) / (N - 1)`.
pub(crate) fn sample_covariance<T: Scalar>(t: &DMatrix<T>) -> DMatrix<T> {
    let n = t.nrows();
    let v = t.ncols();
    let mut centered = t.clone();
    for j in 0..v {
        let mean = t.column(j).sum() / crate::scalar::lit(n as f64);
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    centered.transpose() * &centered / crate::scalar::lit::<T>((n - 1) as f64)
}

/// Which of the two solvers produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Per-output noise variances.
    Existing,
    /// Full noise covariance.
    Proposed,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Existing => "existing",
            Method::Proposed => "proposed",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "existing" => Ok(Method::Existing),
            "proposed" => Ok(Method::Proposed),
            other => invalid(format!("unknown method {other:?}, expected existing or proposed")),
        }
    }
}
