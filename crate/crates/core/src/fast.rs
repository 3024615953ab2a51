//! Matrix-normal multi-output RVR.
//!
//! The noise covariance `Ω` (V×V) is shared between the likelihood and the
//! weight prior, so every output dimension sees the same posterior row
//! covariance `Σ = (ΦᵀΦ + A)⁻¹` and the candidate statistics `s_i` are
//! scalars. Only `θ_i = tr(Ω⁻¹ q_iᵀ q_i)/V - s_i` depends on `Ω`, and the
//! optimal `α_i` has the closed form `s_i² / θ_i`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::common::{
    active_indices, promotion_guard, relevance_inputs, sample_covariance, Action, Alpha,
    FitOptions, IterationRecord, Prepared, TrainingData,
};
use crate::error::{invalid, Error, Result};
use crate::kernel::{basis_row, DesignMatrix, KernelConfig};
use crate::linalg::{select, select_rows, spd_inverse_jittered, symmetrize, Cholesky};
use crate::scalar::{lit, Scalar};

/// Hyperparameters: one `α` per candidate basis plus the noise covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct FastHyperState<T: Scalar> {
    pub alpha: Vec<Alpha<T>>,
    pub omega: DMatrix<T>,
}

impl<T: Scalar> FastHyperState<T> {
    pub fn active_set(&self) -> Vec<usize> {
        active_indices(&self.alpha)
    }
}

/// Posterior row covariance `Σ` (M×M) and mean `M` (M×V) over the active bases.
#[derive(Clone, Debug, PartialEq)]
pub struct FastPosterior<T: Scalar> {
    pub sigma: DMatrix<T>,
    pub weight_mean: DMatrix<T>,
}

impl<T: Scalar> FastPosterior<T> {
    pub fn empty(n_outputs: usize) -> Self {
        Self {
            sigma: DMatrix::zeros(0, 0),
            weight_mean: DMatrix::zeros(0, n_outputs),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsityQuality<T: Scalar> {
    pub s_prime: T,
    pub q_prime: RowDVector<T>,
    pub s: T,
    pub q: RowDVector<T>,
    pub theta: T,
    /// `α_i - s'_i` fell below the promotion guard; only deletion is allowed.
    pub degenerate: bool,
}

/// `φ_iᵀ C⁻¹ φ_i` and `φ_iᵀ C⁻¹ T` for every candidate under the current model.
#[derive(Clone, Debug, PartialEq)]
pub struct Projections<T: Scalar> {
    pub s_prime: DVector<T>,
    pub q_prime: DMatrix<T>,
}

/// Fitted matrix-normal model.
#[derive(Clone, Debug, PartialEq)]
pub struct FastModel<T: Scalar> {
    pub kernel: KernelConfig<T>,
    /// Basis indices in the model (0 is the bias).
    pub active: Vec<usize>,
    pub has_bias: bool,
    /// Training inputs of the kernel bases in the model, in `active` order.
    pub relevance_inputs: DMatrix<T>,
    pub hyper: FastHyperState<T>,
    pub posterior: FastPosterior<T>,
    pub iterations: usize,
    /// False when the loop stopped at the iteration cap.
    pub converged: bool,
    pub log_marginal: T,
    pub trace: Vec<IterationRecord<T>>,
}

impl<T: Scalar> FastModel<T> {
    /// `Ω_MP`
    pub fn omega_mp(&self) -> &DMatrix<T> {
        &self.hyper.omega
    }

    pub fn n_relevance_vectors(&self) -> usize {
        self.active.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.hyper.omega.nrows()
    }

    pub fn predict(&self, x_star: &[T]) -> Result<(RowDVector<T>, DMatrix<T>)> {
        predict_fast(self, x_star)
    }
}

/// `Σ = (ΦᵀΦ + A)⁻¹`, `M = ΣΦᵀT` from an explicit active design matrix.
pub fn posterior_update<T: Scalar>(
    design_active: &DMatrix<T>,
    alpha_active: &[T],
    targets: &DMatrix<T>,
) -> Result<FastPosterior<T>> {
    if design_active.ncols() != alpha_active.len() {
        return invalid("active design columns and α entries differ in count");
    }
    if design_active.nrows() != targets.nrows() {
        return invalid("design and target row counts differ");
    }
    let gram = design_active.transpose() * design_active;
    let phi_t = design_active.transpose() * targets;
    posterior_from_gram(&gram, alpha_active, &phi_t)
}

pub(crate) fn posterior_from_gram<T: Scalar>(
    gram_active: &DMatrix<T>,
    alpha_active: &[T],
    phi_t_targets_active: &DMatrix<T>,
) -> Result<FastPosterior<T>> {
    let m = alpha_active.len();
    if m == 0 {
        return Ok(FastPosterior::empty(phi_t_targets_active.ncols()));
    }
    if alpha_active.iter().any(|a| !(*a > T::zero()) || !a.is_finite()) {
        return invalid("active α must be finite and positive");
    }
    let mut h = gram_active.clone();
    for (k, &a) in alpha_active.iter().enumerate() {
        h[(k, k)] += a;
    }
    let chol = Cholesky::new(&h)?;
    let sigma = chol.inverse();
    let weight_mean = chol.solve(phi_t_targets_active);
    Ok(FastPosterior { sigma, weight_mean })
}

/// Candidate statistics `s'` and `q'` for all N+1 bases.
///
/// Uses `φ_iᵀ C⁻¹ φ_i = φ_iᵀφ_i - φ_iᵀΦΣΦᵀφ_i` with the products `ΦᵀΦ` and `ΦᵀT`
/// computed once, so each iteration costs `O(N M²)`.
pub fn projections<T: Scalar>(
    design: &DesignMatrix<T>,
    targets: &DMatrix<T>,
    active: &[usize],
    posterior: &FastPosterior<T>,
) -> Projections<T> {
    let phi = design.values();
    let gram = phi.transpose() * phi;
    let phi_t = phi.transpose() * targets;
    projections_from_gram(&gram, &phi_t, active, posterior)
}

pub(crate) fn projections_from_gram<T: Scalar>(
    gram: &DMatrix<T>,
    phi_t_targets: &DMatrix<T>,
    active: &[usize],
    posterior: &FastPosterior<T>,
) -> Projections<T> {
    let n1 = gram.nrows();
    let mut s_prime = DVector::from_fn(n1, |i, _| gram[(i, i)]);
    let mut q_prime = phi_t_targets.clone();
    if !active.is_empty() {
        let all: Vec<usize> = (0..n1).collect();
        let p = select(gram, &all, active);
        let z = &p * &posterior.sigma;
        for i in 0..n1 {
            s_prime[i] -= z.row(i).dot(&p.row(i));
        }
        q_prime -= &p * &posterior.weight_mean;
    }
    Projections { s_prime, q_prime }
}

/// Promotes `(s', q')` of candidate `i` to `(s, q)` and computes `θ_i`.
pub fn sq_stats<T: Scalar>(
    i: usize,
    alpha_i: Alpha<T>,
    proj: &Projections<T>,
    omega_inv: &DMatrix<T>,
) -> SparsityQuality<T> {
    let v = proj.q_prime.ncols();
    let s_prime = proj.s_prime[i];
    let q_prime = proj.q_prime.row(i).into_owned();
    let (s, q, degenerate) = match alpha_i {
        Alpha::Inactive => (s_prime, q_prime.clone(), false),
        Alpha::Finite(a) => {
            let den = a - s_prime;
            if den <= promotion_guard(a) {
                (s_prime, q_prime.clone(), true)
            } else {
                let f = a / den;
                (f * s_prime, &q_prime * f, false)
            }
        }
    };
    let theta = if degenerate {
        T::zero()
    } else {
        quad_form(&q, omega_inv) / lit(v as f64) - s
    };
    SparsityQuality {
        s_prime,
        q_prime,
        s,
        q,
        theta,
        degenerate,
    }
}

/// `q Ω⁻¹ qᵀ`, i.e. `tr(Ω⁻¹ qᵀ q)`.
pub(crate) fn quad_form<T: Scalar>(q: &RowDVector<T>, omega_inv: &DMatrix<T>) -> T {
    (q * omega_inv).dot(q)
}

/// Closed-form maximiser of the marginal likelihood in `α_i`.
pub fn alpha_star_fast<T: Scalar>(sq: &SparsityQuality<T>) -> Alpha<T> {
    if sq.theta > T::zero() && !sq.degenerate {
        Alpha::Finite(sq.s * sq.s / sq.theta)
    } else {
        Alpha::Inactive
    }
}

/// `2ΔL_i` for moving `α_i` from `alpha_old` to `alpha_new` under `Ω`.
///
/// Non-finite results (possible only for round-off-degenerate candidates) are
/// returned as is; the caller treats them as not selectable.
pub fn delta_l_fast<T: Scalar>(
    action: Action,
    sq: &SparsityQuality<T>,
    alpha_old: Alpha<T>,
    alpha_new: Alpha<T>,
    omega_inv: &DMatrix<T>,
) -> Result<T> {
    let v: T = lit(sq.q_prime.len() as f64);
    let tr = quad_form(&sq.q_prime, omega_inv);
    let sp = sq.s_prime;
    match (action, alpha_old, alpha_new) {
        (Action::Reestimate, Alpha::Finite(a), Alpha::Finite(a_new)) => {
            let d = T::one() / a_new - T::one() / a;
            let x = sp * d;
            Ok(tr * d / (T::one() + x) - v * x.ln_1p())
        }
        (Action::Add, Alpha::Inactive, Alpha::Finite(_)) => {
            Ok((tr - v * sp) / sp + v * (v * sp / tr).ln())
        }
        (Action::Delete, Alpha::Finite(a), Alpha::Inactive) => {
            Ok(tr / (sp - a) - v * (-(sp / a)).ln_1p())
        }
        _ => invalid(format!(
            "action {action:?} is inconsistent with α {alpha_old:?} -> {alpha_new:?}"
        )),
    }
}

/// `Ω = Tᵀ(T - ΦM)/N`, symmetrized.
pub fn omega_update<T: Scalar>(
    targets: &DMatrix<T>,
    design_active: &DMatrix<T>,
    weight_mean: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let n = targets.nrows();
    if n == 0 {
        return invalid("omega update needs at least one sample");
    }
    let mut omega = if design_active.ncols() == 0 {
        targets.transpose() * targets
    } else {
        targets.transpose() * (targets - design_active * weight_mean)
    };
    omega /= lit::<T>(n as f64);
    symmetrize(&mut omega);
    Ok(omega)
}

/// Same as [`omega_update`] from cached `TᵀT` and `ΦᵀT`.
fn omega_from_cache<T: Scalar>(
    t_t: &DMatrix<T>,
    phi_t_targets: &DMatrix<T>,
    active: &[usize],
    posterior: &FastPosterior<T>,
    n: usize,
) -> DMatrix<T> {
    let mut omega = t_t.clone();
    if !active.is_empty() {
        let phi_t_active = select_rows(phi_t_targets, active);
        omega -= phi_t_active.transpose() * &posterior.weight_mean;
    }
    omega /= lit::<T>(n as f64);
    symmetrize(&mut omega);
    omega
}

/// `L(α, Ω)` evaluated by building `C = I + ΦA⁻¹Φᵀ` explicitly. `O(N³)`.
pub fn log_marginal_fast<T: Scalar>(
    targets: &DMatrix<T>,
    alpha: &[Alpha<T>],
    omega: &DMatrix<T>,
    design: &DesignMatrix<T>,
) -> Result<T> {
    let phi = design.values();
    let n = phi.nrows();
    let v = targets.ncols();
    if alpha.len() != phi.ncols() {
        return invalid("α length does not match the design matrix");
    }
    let mut c = DMatrix::<T>::identity(n, n);
    for (i, a) in alpha.iter().enumerate() {
        if let Alpha::Finite(a) = a {
            let col = phi.column(i);
            c += (&col * col.transpose()) / *a;
        }
    }
    let c_chol = Cholesky::new(&c)?;
    let o_chol = Cholesky::new(omega)?;
    let ct = c_chol.solve(targets);
    let inner = targets.transpose() * ct;
    let tr = o_chol.solve(&inner).trace();
    let (nf, vf): (T, T) = (lit(n as f64), lit(v as f64));
    let two_pi = T::two_pi();
    Ok(-(vf * nf * two_pi.ln() + nf * o_chol.log_det() + vf * c_chol.log_det() + tr) / lit(2.0))
}

/// `L(α, Ω)` from the posterior: `|C| = 1/(|Σ||A|)` and `TᵀC⁻¹T = Tᵀ(T - ΦM)`.
fn log_marginal_from_posterior<T: Scalar>(
    t_t: &DMatrix<T>,
    phi_t_targets: &DMatrix<T>,
    alpha: &[Alpha<T>],
    active: &[usize],
    posterior: &FastPosterior<T>,
    omega: &DMatrix<T>,
    n: usize,
) -> Result<T> {
    let v = omega.nrows();
    let mut log_det_c = T::zero();
    if !active.is_empty() {
        let sigma_chol = Cholesky::new(&posterior.sigma)?;
        log_det_c -= sigma_chol.log_det();
        for &i in active {
            log_det_c -= alpha[i].finite().expect("active α is finite").ln();
        }
    }
    let mut inner = t_t.clone();
    if !active.is_empty() {
        inner -= select_rows(phi_t_targets, active).transpose() * &posterior.weight_mean;
    }
    let o_chol = Cholesky::new(omega)?;
    let tr = o_chol.solve(&inner).trace();
    let (nf, vf): (T, T) = (lit(n as f64), lit(v as f64));
    Ok(-(vf * nf * T::two_pi().ln() + nf * o_chol.log_det() + vf * log_det_c + tr) / lit(2.0))
}

struct Selection<T: Scalar> {
    index: usize,
    action: Action,
    alpha_new: Alpha<T>,
    two_delta_l: T,
}

/// Sequential EM fit of the matrix-normal model.
pub fn fit_fast<T: Scalar>(
    data: &TrainingData<T>,
    cfg: &KernelConfig<T>,
    opts: &FitOptions,
) -> Result<FastModel<T>> {
    let n = data.n_samples();
    let v = data.n_outputs();
    if n < 2 {
        return invalid("fitting needs at least two samples");
    }
    if v == 0 {
        return invalid("targets have no columns");
    }
    cfg.validate()?;
    let prep = Prepared::new(data, cfg)?;
    let t_t = data.targets.transpose() * &data.targets;
    let tol: T = lit(opts.tolerance);

    let mut alpha = vec![Alpha::Inactive; n + 1];
    let mut omega = sample_covariance(&data.targets) * lit::<T>(0.1);
    let mut active: Vec<usize> = Vec::new();
    let mut posterior = FastPosterior::empty(v);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iterations {
        iterations = iter;
        let omega_inv = spd_inverse_jittered(&omega)?;
        let proj = projections_from_gram(&prep.gram, &prep.phi_t_targets, &active, &posterior);

        let mut best: Option<Selection<T>> = None;
        let mut addable = false;
        for (i, &alpha_i) in alpha.iter().enumerate() {
            let sq = sq_stats(i, alpha_i, &proj, &omega_inv);
            let alpha_new = alpha_star_fast(&sq);
            let action = match (alpha_new, alpha_i) {
                (Alpha::Finite(_), Alpha::Finite(_)) => Action::Reestimate,
                (Alpha::Finite(_), Alpha::Inactive) => {
                    addable = true;
                    Action::Add
                }
                (Alpha::Inactive, Alpha::Finite(_)) => Action::Delete,
                (Alpha::Inactive, Alpha::Inactive) => continue,
            };
            let dl = delta_l_fast(action, &sq, alpha_i, alpha_new, &omega_inv)?;
            if !dl.is_finite() {
                continue;
            }
            if best.as_ref().is_none_or(|b| dl > b.two_delta_l) {
                best = Some(Selection {
                    index: i,
                    action,
                    alpha_new,
                    two_delta_l: dl,
                });
            }
        }

        let Some(sel) = best else {
            if active.is_empty() {
                return Err(Error::NoInformativeBasis);
            }
            converged = true;
            break;
        };

        let alpha_before = alpha[sel.index];
        alpha[sel.index] = sel.alpha_new;
        if sel.action == Action::Reestimate {
            let old = alpha_before.finite().expect("re-estimated α was finite");
            let new = sel.alpha_new.finite().expect("re-estimate keeps α finite");
            if (old / new).ln().abs() < tol && !addable {
                converged = true;
            }
        }

        let omega_at_selection = omega.clone();
        if iter != 1 {
            // M-step for Ω uses the posterior from the previous E-step.
            omega = omega_from_cache(&t_t, &prep.phi_t_targets, &active, &posterior, n);
        }

        active = active_indices(&alpha);
        let alpha_active: Vec<T> = active.iter().map(|&i| alpha[i].finite().unwrap()).collect();
        posterior = posterior_from_gram(
            &select(&prep.gram, &active, &active),
            &alpha_active,
            &select_rows(&prep.phi_t_targets, &active),
        )?;

        if opts.record_trace {
            trace.push(IterationRecord {
                iteration: iter,
                index: sel.index,
                action: sel.action,
                alpha_before,
                alpha_after: sel.alpha_new,
                two_delta_l: sel.two_delta_l,
                alphas: alpha.clone(),
                noise_at_selection: omega_at_selection,
                noise_after: omega.clone(),
            });
        }

        if converged {
            break;
        }
    }

    let log_marginal = log_marginal_from_posterior(
        &t_t,
        &prep.phi_t_targets,
        &alpha,
        &active,
        &posterior,
        &omega,
        n,
    )?;
    let (has_bias, relevance_inputs) = relevance_inputs(&data.inputs, &active);
    Ok(FastModel {
        kernel: *cfg,
        active,
        has_bias,
        relevance_inputs,
        hyper: FastHyperState { alpha, omega },
        posterior,
        iterations,
        converged,
        log_marginal,
        trace,
    })
}

/// Predictive mean `φ(x*)ᵀM` and covariance `Ω_MP (1 + φ(x*)ᵀΣφ(x*))`.
pub fn predict_fast<T: Scalar>(model: &FastModel<T>, x_star: &[T]) -> Result<(RowDVector<T>, DMatrix<T>)> {
    let phi = basis_row(&model.kernel, model.has_bias, &model.relevance_inputs, x_star)?;
    let v = model.n_outputs();
    if phi.is_empty() {
        return Ok((RowDVector::zeros(v), model.hyper.omega.clone()));
    }
    let phi = RowDVector::from_vec(phi);
    let mean = &phi * &model.posterior.weight_mean;
    let spread = (&phi * &model.posterior.sigma).dot(&phi);
    let cov = &model.hyper.omega * (T::one() + spread);
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_design_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_matrix(r: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| r.random_range(-1.0..1.0))
    }

    fn random_spd(r: &mut ChaCha8Rng, v: usize) -> DMatrix<f64> {
        let b = random_matrix(r, v, v);
        &b * b.transpose() + DMatrix::identity(v, v) * 0.2
    }

    fn sinc_data(n: usize, v: usize, seed: u64) -> TrainingData<f64> {
        let mut r = rng(seed);
        let x = DMatrix::from_fn(n, 1, |_, _| r.random_range(-10.0..10.0));
        let t = DMatrix::from_fn(n, v, |i, j| {
            let z: f64 = x[(i, 0)] - 2.0 * j as f64;
            let s = if z == 0.0 { 1.0 } else { z.sin() / z };
            s + 0.1 * r.random_range(-1.0..1.0)
        });
        TrainingData::new(x, t).unwrap()
    }

    /// `s_i`, `q_i` straight from their definition with `C_{-i}` built and inverted.
    fn explicit_sq(
        design: &DesignMatrix<f64>,
        t: &DMatrix<f64>,
        alpha: &[Alpha<f64>],
        i: usize,
    ) -> (f64, RowDVector<f64>) {
        let phi = design.values();
        let n = phi.nrows();
        let mut c = DMatrix::<f64>::identity(n, n);
        for (m, a) in alpha.iter().enumerate() {
            if m == i {
                continue;
            }
            if let Alpha::Finite(a) = a {
                let col = phi.column(m);
                c += (&col * col.transpose()) / *a;
            }
        }
        let c_inv = c.try_inverse().unwrap();
        let col = phi.column(i).into_owned();
        let s = (col.transpose() * &c_inv * &col)[(0, 0)];
        let q = col.transpose() * &c_inv * t;
        (s, q)
    }

    #[test]
    fn posterior_scalar_case() {
        let phi = DMatrix::from_row_slice(2, 1, &[1.0f64, 1.0]);
        let t = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let p = posterior_update(&phi, &[2.0], &t).unwrap();
        assert!((p.sigma[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((p.weight_mean[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn posterior_matches_dense_inverse() {
        let mut r = rng(11);
        let phi = random_matrix(&mut r, 5, 3);
        let t = random_matrix(&mut r, 5, 2);
        let alpha = [0.5, 1.5, 3.0];
        let p = posterior_update(&phi, &alpha, &t).unwrap();
        let h = phi.transpose() * &phi + DMatrix::from_diagonal(&DVector::from_row_slice(&alpha));
        let inv = h.clone().try_inverse().unwrap();
        assert!((&p.sigma - &inv).amax() < 1e-12);
        assert!((&p.sigma * &h - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!((&p.sigma - p.sigma.transpose()).amax() == 0.0);
        assert!((&p.weight_mean - &inv * phi.transpose() * &t).amax() < 1e-12);
    }

    #[test]
    fn posterior_rejects_bad_alpha() {
        let phi = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let t = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(posterior_update(&phi, &[0.0], &t).is_err());
        assert!(posterior_update(&phi, &[1.0, 1.0], &t).is_err());
    }

    #[test]
    fn sq_for_empty_model() {
        // N=2 with coincident points, so every column is [1, 1].
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let d = build_design_matrix(&x, &KernelConfig::gaussian(1.0).unwrap()).unwrap();
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let proj = projections(&d, &t, &[], &FastPosterior::empty(2));
        let sq = sq_stats(0, Alpha::Inactive, &proj, &DMatrix::identity(2, 2));
        assert_eq!(sq.s_prime, 2.0);
        assert_eq!(sq.q_prime, RowDVector::from_row_slice(&[2.0, 0.0]));
        assert_eq!(sq.s, sq.s_prime);
        assert_eq!(sq.q, sq.q_prime);
        // tr(Ω⁻¹qᵀq)/V - s = 4/2 - 2
        assert_eq!(sq.theta, 0.0);
        assert_eq!(alpha_star_fast(&sq), Alpha::Inactive);
    }

    #[test]
    fn sq_matches_explicit_covariance() {
        let data = sinc_data(6, 2, 5);
        let d = build_design_matrix(&data.inputs, &KernelConfig::gaussian(1.6).unwrap()).unwrap();
        let mut alpha = vec![Alpha::Inactive; 7];
        alpha[2] = Alpha::Finite(0.7);
        alpha[5] = Alpha::Finite(2.5);
        let active = active_indices(&alpha);
        let phi_a = crate::linalg::select_columns(d.values(), &active);
        let post = posterior_update(&phi_a, &[0.7, 2.5], &data.targets).unwrap();
        let proj = projections(&d, &data.targets, &active, &post);
        for i in 0..7 {
            let sq = sq_stats(i, alpha[i], &proj, &DMatrix::identity(2, 2));
            let (s, q) = explicit_sq(&d, &data.targets, &alpha, i);
            assert!((sq.s - s).abs() <= 1e-8 * s.abs().max(1.0), "s mismatch at {i}");
            assert!((&sq.q - &q).amax() <= 1e-8 * q.amax().max(1.0), "q mismatch at {i}");
        }
    }

    #[test]
    fn alpha_star_closed_form() {
        let sq = SparsityQuality {
            s_prime: 2.0,
            q_prime: RowDVector::from_row_slice(&[2.0, 2.0]),
            s: 2.0,
            q: RowDVector::from_row_slice(&[2.0, 2.0]),
            theta: 2.0,
            degenerate: false,
        };
        // tr term 8, V = 2: quality 4, α* = 4/(4-2)
        assert_eq!(alpha_star_fast(&sq), Alpha::Finite(2.0));
        let flat = SparsityQuality { theta: -0.5, ..sq.clone() };
        assert_eq!(alpha_star_fast(&flat), Alpha::Inactive);
    }

    /// ℓ(α) up to a constant for V = 1.
    fn isolated(alpha: f64, s: f64, q: f64, omega: f64) -> f64 {
        0.5 * (alpha.ln() - (alpha + s).ln() + q * q / omega / (alpha + s))
    }

    #[test]
    fn alpha_star_matches_grid_maximum() {
        let (s, q, omega) = (1.3, 2.1, 0.8);
        let theta = q * q / omega - s;
        let sq = SparsityQuality {
            s_prime: s,
            q_prime: RowDVector::from_row_slice(&[q]),
            s,
            q: RowDVector::from_row_slice(&[q]),
            theta,
            degenerate: false,
        };
        let a = alpha_star_fast(&sq).finite().unwrap();
        let mut best = (0.0, f64::NEG_INFINITY);
        for k in 0..200_000 {
            let cand = 10f64.powf(-4.0 + 8.0 * k as f64 / 200_000.0);
            let val = isolated(cand, s, q, omega);
            if val > best.1 {
                best = (cand, val);
            }
        }
        assert!((a - best.0).abs() / a < 1e-3);
    }

    #[test]
    fn delta_l_edge_cases() {
        let sq = SparsityQuality {
            s_prime: 2.25,
            q_prime: RowDVector::from_row_slice(&[1.5, 1.5]),
            s: 2.25,
            q: RowDVector::from_row_slice(&[1.5, 1.5]),
            theta: 0.0,
            degenerate: false,
        };
        let id = DMatrix::<f64>::identity(2, 2);
        let d = delta_l_fast(Action::Reestimate, &sq, Alpha::Finite(3.0), Alpha::Finite(3.0), &id).unwrap();
        assert_eq!(d, 0.0);
        // V s' = tr(Ω⁻¹q'ᵀq') = 4.5 → 0
        let d = delta_l_fast(Action::Add, &sq, Alpha::Inactive, Alpha::Finite(1.0), &id).unwrap();
        assert!(d.abs() < 1e-15);
        assert!(delta_l_fast(Action::Add, &sq, Alpha::Finite(1.0), Alpha::Finite(1.0), &id).is_err());
        assert!(delta_l_fast(Action::Delete, &sq, Alpha::Inactive, Alpha::Inactive, &id).is_err());
    }

    #[test]
    fn delta_l_matches_direct_difference() {
        let data = sinc_data(12, 2, 9);
        let d = build_design_matrix(&data.inputs, &KernelConfig::gaussian(1.6).unwrap()).unwrap();
        let mut r = rng(3);
        let omega = random_spd(&mut r, 2);
        let omega_inv = omega.clone().try_inverse().unwrap();
        let mut alpha = vec![Alpha::Inactive; 13];
        alpha[0] = Alpha::Finite(0.3);
        alpha[4] = Alpha::Finite(1.2);
        alpha[9] = Alpha::Finite(0.05);
        let active = active_indices(&alpha);
        let phi_a = crate::linalg::select_columns(d.values(), &active);
        let act: Vec<f64> = active.iter().map(|&i| alpha[i].finite().unwrap()).collect();
        let post = posterior_update(&phi_a, &act, &data.targets).unwrap();
        let proj = projections(&d, &data.targets, &active, &post);
        let base = log_marginal_fast(&data.targets, &alpha, &omega, &d).unwrap();

        let cases = [
            (4, Action::Reestimate, Alpha::Finite(2.7)),
            (9, Action::Delete, Alpha::Inactive),
            (0, Action::Delete, Alpha::Inactive),
            (6, Action::Add, Alpha::Inactive),
        ];
        for (i, action, target) in cases {
            let sq = sq_stats(i, alpha[i], &proj, &omega_inv);
            let new = if action == Action::Add {
                // the addition formula assumes the optimal α
                Alpha::Finite(sq.s * sq.s / (quad_form(&sq.q, &omega_inv) / 2.0 - sq.s))
            } else {
                target
            };
            if action == Action::Add && sq.theta <= 0.0 {
                continue;
            }
            let dl = delta_l_fast(action, &sq, alpha[i], new, &omega_inv).unwrap();
            let mut changed = alpha.clone();
            changed[i] = new;
            let after = log_marginal_fast(&data.targets, &changed, &omega, &d).unwrap();
            let direct = 2.0 * (after - base);
            assert!(
                (dl - direct).abs() <= 1e-8 * direct.abs().max(1.0),
                "{action:?} at {i}: {dl} vs {direct}"
            );
        }
    }

    #[test]
    fn omega_update_cases() {
        let t = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, 0.3]);
        let empty = DMatrix::<f64>::zeros(3, 0);
        let m0 = DMatrix::<f64>::zeros(0, 2);
        let o = omega_update(&t, &empty, &m0).unwrap();
        assert!((o - t.transpose() * &t / 3.0).amax() < 1e-15);

        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let w = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]);
        let exact = &phi * &w;
        let o = omega_update(&exact, &phi, &w).unwrap();
        assert_eq!(o, DMatrix::zeros(2, 2));
    }

    #[test]
    fn omega_update_is_psd() {
        let data = sinc_data(15, 3, 21);
        let d = build_design_matrix(&data.inputs, &KernelConfig::gaussian(1.6).unwrap()).unwrap();
        let active = vec![0, 3, 8, 12];
        let phi_a = crate::linalg::select_columns(d.values(), &active);
        let post = posterior_update(&phi_a, &[0.4, 1.0, 0.2, 5.0], &data.targets).unwrap();
        let o = omega_update(&data.targets, &phi_a, &post.weight_mean).unwrap();
        assert_eq!(o, o.transpose());
        let eig = o.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn log_marginal_trivial_cases() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let d = build_design_matrix(&x, &KernelConfig::gaussian(1.0).unwrap()).unwrap();
        let alpha = vec![Alpha::Inactive; 5];
        let zero = DMatrix::<f64>::zeros(4, 2);
        let l = log_marginal_fast(&zero, &alpha, &DMatrix::identity(2, 2), &d).unwrap();
        assert!((l + 0.5 * 8.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);

        let tau = DMatrix::from_row_slice(4, 1, &[0.5, -1.0, 2.0, 0.0]);
        let l = log_marginal_fast(&tau, &alpha, &DMatrix::identity(1, 1), &d).unwrap();
        let expect = -0.5 * (4.0 * (2.0 * std::f64::consts::PI).ln() + tau.norm_squared());
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn log_marginal_routes_agree() {
        let data = sinc_data(10, 2, 4);
        let d = build_design_matrix(&data.inputs, &KernelConfig::gaussian(1.6).unwrap()).unwrap();
        let mut alpha = vec![Alpha::Inactive; 11];
        alpha[1] = Alpha::Finite(0.8);
        alpha[7] = Alpha::Finite(0.1);
        let active = active_indices(&alpha);
        let phi_a = crate::linalg::select_columns(d.values(), &active);
        let post = posterior_update(&phi_a, &[0.8, 0.1], &data.targets).unwrap();
        let omega = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let direct = log_marginal_fast(&data.targets, &alpha, &omega, &d).unwrap();
        let t_t = data.targets.transpose() * &data.targets;
        let phi_t = d.values().transpose() * &data.targets;
        let cheap = log_marginal_from_posterior(&t_t, &phi_t, &alpha, &active, &post, &omega, 10).unwrap();
        assert!((direct - cheap).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn fit_realizable_single_output() {
        // The loop stops at the first re-estimation, which still runs under
        // the initial Ω, so the weight keeps the shrinkage s/(s + α) of that Ω.
        let mut r = rng(8);
        let x = DMatrix::from_fn(25, 1, |_, _| r.random_range(-5.0..5.0));
        let cfg = KernelConfig::gaussian(1.0).unwrap();
        let d = build_design_matrix(&x, &cfg).unwrap();
        let t = DMatrix::from_column_slice(25, 1, d.values().column(1).as_slice());
        let data = TrainingData::new(x, t.clone()).unwrap();
        let model = fit_fast(&data, &cfg, &FitOptions::default()).unwrap();
        assert_eq!(model.active, vec![1]);
        let phi = d.column(1);
        let s = phi.norm_squared();
        let a = model.hyper.alpha[1].finite().unwrap();
        let expect: DVector<f64> = &phi * (a / (s + a));
        let resid: DVector<f64> = t.column(0) - d.values().column(1) * model.posterior.weight_mean[(0, 0)];
        assert!((&resid - &expect).amax() < 1e-12);
        assert!(resid.amax() < 0.01 * t.amax());
    }

    #[test]
    fn fit_rejects_tiny_input() {
        let data = TrainingData::new(DMatrix::from_row_slice(1, 1, &[0.0]), DMatrix::from_row_slice(1, 1, &[1.0])).unwrap();
        assert!(fit_fast(&data, &KernelConfig::gaussian(1.0).unwrap(), &FitOptions::default()).is_err());
    }

    #[test]
    fn fit_without_signal_reports_no_basis() {
        // Targets orthogonal to every basis: only the sign pattern +,- on
        // two coincident inputs, so φ_iᵀT = 0 for all i.
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let t = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let data = TrainingData::new(x, t).unwrap();
        let err = fit_fast(&data, &KernelConfig::gaussian(1.0).unwrap(), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoInformativeBasis));
    }

    #[test]
    fn trace_is_monotone_under_fixed_omega() {
        let data = sinc_data(30, 2, 17);
        let cfg = KernelConfig::gaussian(1.6).unwrap();
        let opts = FitOptions { record_trace: true, ..FitOptions::default() };
        let model = fit_fast(&data, &cfg, &opts).unwrap();
        let d = build_design_matrix(&data.inputs, &cfg).unwrap();
        let mut prev_alpha = vec![Alpha::Inactive; 31];
        for rec in &model.trace {
            assert!(rec.two_delta_l > -1e-12);
            let before = log_marginal_fast(&data.targets, &prev_alpha, &rec.noise_at_selection, &d).unwrap();
            let after = log_marginal_fast(&data.targets, &rec.alphas, &rec.noise_at_selection, &d).unwrap();
            assert!(after >= before - 1e-9 * before.abs());
            prev_alpha = rec.alphas.clone();
        }
    }

    #[test]
    fn prediction_properties() {
        let data = sinc_data(40, 2, 2);
        let cfg = KernelConfig::gaussian(1.6).unwrap();
        let model = fit_fast(&data, &cfg, &FitOptions::default()).unwrap();
        let mut r = rng(99);
        for _ in 0..1000 {
            let xs = [r.random_range(-12.0..12.0)];
            let (_, cov) = model.predict(&xs).unwrap();
            let ratio = cov[(0, 0)] / model.omega_mp()[(0, 0)];
            assert!(ratio >= 1.0);
            let other = cov[(1, 1)] / model.omega_mp()[(1, 1)];
            assert!((ratio - other).abs() < 1e-12);
        }
        assert!(model.predict(&[0.0, 1.0]).is_err());

        let mut zero_sigma = model.clone();
        zero_sigma.posterior.sigma.fill(0.0);
        let (_, cov) = zero_sigma.predict(&[0.3]).unwrap();
        assert_eq!(&cov, zero_sigma.omega_mp());
    }

    #[test]
    fn bias_only_model_predicts_constant() {
        let model = FastModel {
            kernel: KernelConfig::gaussian(1.0).unwrap(),
            active: vec![0],
            has_bias: true,
            relevance_inputs: DMatrix::zeros(0, 1),
            hyper: FastHyperState {
                alpha: vec![Alpha::Finite(1.0), Alpha::Inactive],
                omega: DMatrix::identity(2, 2),
            },
            posterior: FastPosterior {
                sigma: DMatrix::from_element(1, 1, 0.1),
                weight_mean: DMatrix::from_row_slice(1, 2, &[0.7, -0.2]),
            },
            iterations: 1,
            converged: true,
            log_marginal: 0.0,
            trace: Vec::new(),
        };
        for x in [-3.0, 0.0, 10.0] {
            let (mean, _) = model.predict(&[x]).unwrap();
            assert_eq!(mean, RowDVector::from_row_slice(&[0.7, -0.2]));
        }
    }

    #[test]
    fn fit_in_single_precision() {
        let data = sinc_data(30, 2, 1);
        let data32 = TrainingData::new(data.inputs.map(|v| v as f32), data.targets.map(|v| v as f32)).unwrap();
        let model = fit_fast(&data32, &KernelConfig::gaussian(1.6f32).unwrap(), &FitOptions::default()).unwrap();
        assert!(model.n_relevance_vectors() >= 1);
        let (mean, _) = model.predict(&[0.0f32]).unwrap();
        assert!((mean[0] - 1.0).abs() < 0.5);
    }
}
