//! Versioned little-endian binary model files.
//!
//! Every real number is stored as the bit pattern of its `f64` value, which
//! is exact for both `f32` and `f64` models. See the README for the layout.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::baseline::{BaselineHyperState, BaselineModel, BaselinePosterior};
use crate::common::{Alpha, Method};
use crate::error::{Error, Result};
use crate::fast::{FastHyperState, FastModel, FastPosterior};
use crate::kernel::{KernelConfig, KernelKind};
use crate::scalar::{to_f64, Scalar};

pub const MAGIC: &[u8; 4] = b"MRVR";
pub const FORMAT_VERSION: u8 = 1;

/// A fitted model of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel<T: Scalar> {
    Existing(BaselineModel<T>),
    Proposed(FastModel<T>),
}

/// Predictive mean and noise-inclusive covariance at one input. For the
/// per-output model the covariance is diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T: Scalar> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Existing(_) => Method::Existing,
            TrainedModel::Proposed(_) => Method::Proposed,
        }
    }

    pub fn kernel(&self) -> &KernelConfig<T> {
        match self {
            TrainedModel::Existing(m) => &m.kernel,
            TrainedModel::Proposed(m) => &m.kernel,
        }
    }

    pub fn n_relevance_vectors(&self) -> usize {
        match self {
            TrainedModel::Existing(m) => m.n_relevance_vectors(),
            TrainedModel::Proposed(m) => m.n_relevance_vectors(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            TrainedModel::Existing(m) => m.n_outputs(),
            TrainedModel::Proposed(m) => m.n_outputs(),
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            TrainedModel::Existing(m) => m.iterations,
            TrainedModel::Proposed(m) => m.iterations,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            TrainedModel::Existing(m) => m.converged,
            TrainedModel::Proposed(m) => m.converged,
        }
    }

    pub fn log_marginal(&self) -> T {
        match self {
            TrainedModel::Existing(m) => m.log_marginal,
            TrainedModel::Proposed(m) => m.log_marginal,
        }
    }

    pub fn predict(&self, x_star: &[T]) -> Result<Prediction<T>> {
        match self {
            TrainedModel::Existing(m) => {
                let (mean, var) = m.predict(x_star)?;
                Ok(Prediction {
                    mean,
                    cov: DMatrix::from_diagonal(&var),
                })
            }
            TrainedModel::Proposed(m) => {
                let (mean, cov) = m.predict(x_star)?;
                Ok(Prediction {
                    mean: mean.transpose(),
                    cov,
                })
            }
        }
    }
}

/// Training facts stored next to the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelMetadata {
    pub n_samples: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile<T: Scalar> {
    pub metadata: ModelMetadata,
    pub model: TrainedModel<T>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn usize(&mut self, x: usize) {
        self.u64(x as u64);
    }
    fn real<T: Scalar>(&mut self, x: T) {
        self.u64(to_f64(x).to_bits());
    }
    /// Row-major.
    fn matrix<T: Scalar>(&mut self, m: &DMatrix<T>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.real(m[(i, j)]);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Corrupt(format!("truncated: needed {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("eight bytes")))
    }
    /// Counts are bounded by the remaining file size to avoid huge allocations.
    fn count(&mut self, what: &str) -> Result<usize> {
        let x = self.u64()?;
        if x > self.bytes.len() as u64 {
            return Err(Error::Corrupt(format!("{what} count {x} exceeds file size")));
        }
        Ok(x as usize)
    }
    fn flag(&mut self, what: &str) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Corrupt(format!("{what} flag has value {b}"))),
        }
    }
    fn real<T: Scalar>(&mut self) -> Result<T> {
        let x = f64::from_bits(self.u64()?);
        T::from_f64(x).ok_or_else(|| Error::Corrupt(format!("value {x} not representable")))
    }
    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<DMatrix<T>> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.real()?;
            }
        }
        Ok(m)
    }
}

fn method_tag(m: Method) -> u8 {
    match m {
        Method::Existing => 0,
        Method::Proposed => 1,
    }
}

fn active_alphas<T: Scalar>(alpha: &[Alpha<T>], active: &[usize]) -> Vec<T> {
    active.iter().map(|&i| alpha[i].finite().expect("active α is finite")).collect()
}

/// Serializes a model.
pub fn to_bytes<T: Scalar>(file: &ModelFile<T>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u8(FORMAT_VERSION);
    w.u8(T::WIDTH);
    w.u8(method_tag(file.model.method()));
    let kernel = file.model.kernel();
    w.u8(match kernel.kind {
        KernelKind::Gaussian => 0,
    });
    w.real(kernel.width);
    let meta = &file.metadata;
    w.usize(meta.n_samples);
    w.usize(meta.n_inputs);
    w.usize(meta.n_outputs);
    w.u8(u8::from(meta.seed.is_some()));
    w.u64(meta.seed.unwrap_or(0));
    w.usize(file.model.iterations());
    w.u8(u8::from(file.model.converged()));
    w.real(file.model.log_marginal());

    let (active, relevance, alpha) = match &file.model {
        TrainedModel::Existing(m) => (&m.active, &m.relevance_inputs, &m.hyper.alpha),
        TrainedModel::Proposed(m) => (&m.active, &m.relevance_inputs, &m.hyper.alpha),
    };
    w.usize(active.len());
    for &i in active {
        w.usize(i);
    }
    w.matrix(relevance);
    for a in active_alphas(alpha, active) {
        w.real(a);
    }
    match &file.model {
        TrainedModel::Proposed(m) => {
            w.matrix(&m.posterior.weight_mean);
            w.matrix(&m.posterior.sigma);
            w.matrix(&m.hyper.omega);
        }
        TrainedModel::Existing(m) => {
            for j in 0..m.n_outputs() {
                w.real(m.hyper.sigma2[j]);
                for &x in m.posterior.mu[j].iter() {
                    w.real(x);
                }
                w.matrix(&m.posterior.sigma[j]);
            }
        }
    }
    w.0
}

/// Parses a model written by [`to_bytes`] with the same scalar type.
pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<ModelFile<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Corrupt("missing MRVR magic".into()));
    }
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let width = r.u8()?;
    if width != T::WIDTH {
        return Err(Error::Corrupt(format!(
            "file holds {}-byte scalars, reader expects {}",
            width,
            T::WIDTH
        )));
    }
    let method = match r.u8()? {
        0 => Method::Existing,
        1 => Method::Proposed,
        b => return Err(Error::Corrupt(format!("unknown method tag {b}"))),
    };
    let kind = match r.u8()? {
        0 => KernelKind::Gaussian,
        b => return Err(Error::Corrupt(format!("unknown kernel tag {b}"))),
    };
    let kernel = KernelConfig {
        kind,
        width: r.real()?,
    };
    kernel.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    let n_samples = r.count("sample")?;
    let n_inputs = r.count("input")?;
    let n_outputs = r.count("output")?;
    let has_seed = r.flag("seed")?;
    let seed_value = r.u64()?;
    let iterations = r.u64()? as usize;
    let converged = r.flag("converged")?;
    let log_marginal: T = r.real()?;

    let m = r.count("active")?;
    let mut active = Vec::with_capacity(m);
    for _ in 0..m {
        let i = r.u64()?;
        if i > n_samples as u64 || active.last().is_some_and(|&p: &usize| p as u64 >= i) {
            return Err(Error::Corrupt(format!("bad active index {i}")));
        }
        active.push(i as usize);
    }
    let has_bias = active.first() == Some(&0);
    let relevance_inputs = r.matrix(m - usize::from(has_bias), n_inputs)?;
    let mut alpha = vec![Alpha::Inactive; n_samples + 1];
    for &i in &active {
        alpha[i] = Alpha::Finite(r.real()?);
    }

    let model = match method {
        Method::Proposed => {
            let weight_mean = r.matrix(m, n_outputs)?;
            let sigma = r.matrix(m, m)?;
            let omega = r.matrix(n_outputs, n_outputs)?;
            TrainedModel::Proposed(FastModel {
                kernel,
                active,
                has_bias,
                relevance_inputs,
                hyper: FastHyperState { alpha, omega },
                posterior: FastPosterior { sigma, weight_mean },
                iterations,
                converged,
                log_marginal,
                trace: Vec::new(),
            })
        }
        Method::Existing => {
            let mut sigma2 = Vec::with_capacity(n_outputs);
            let mut posterior = BaselinePosterior::empty(n_outputs);
            for j in 0..n_outputs {
                sigma2.push(r.real()?);
                posterior.mu[j] = r.matrix(m, 1)?.column(0).into_owned();
                posterior.sigma[j] = r.matrix(m, m)?;
            }
            TrainedModel::Existing(BaselineModel {
                kernel,
                active,
                has_bias,
                relevance_inputs,
                hyper: BaselineHyperState { alpha, sigma2 },
                posterior,
                iterations,
                converged,
                log_marginal,
                trace: Vec::new(),
            })
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ModelFile {
        metadata: ModelMetadata {
            n_samples,
            n_inputs,
            n_outputs,
            seed: has_seed.then_some(seed_value),
        },
        model,
    })
}

pub fn save_model<T: Scalar>(file: &ModelFile<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(file)).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<ModelFile<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    from_bytes(&bytes)
}

/// Model without the per-iteration trace, as it would come back from disk.
pub fn strip_trace<T: Scalar>(model: TrainedModel<T>) -> TrainedModel<T> {
    match model {
        TrainedModel::Existing(mut m) => {
            m.trace.clear();
            TrainedModel::Existing(m)
        }
        TrainedModel::Proposed(mut m) => {
            m.trace.clear();
            TrainedModel::Proposed(m)
        }
    }
}
