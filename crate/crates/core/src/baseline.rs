//! Per-output multi-output RVR.
//!
//! Each output dimension `j` has its own noise variance `σ_j²` and its own
//! posterior `(Σ_j, μ_j)`, while the `α` vector is shared. The stationarity
//! condition for a single `α_i` is a polynomial of degree `2V - 1`, solved
//! through the eigenvalues of its companion matrix.

use nalgebra::{DMatrix, DVector};

use crate::common::{
    active_indices, promotion_guard, relevance_inputs, Action, Alpha, FitOptions,
    IterationRecord, Prepared, TrainingData,
};
use crate::error::{invalid, Error, Result};
use crate::kernel::{basis_row, DesignMatrix, KernelConfig};
use crate::linalg::{select, select_columns, select_rows, Cholesky, Polynomial};
use crate::scalar::{lit, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineHyperState<T: Scalar> {
    pub alpha: Vec<Alpha<T>>,
    /// `σ_j²` per output.
    pub sigma2: Vec<T>,
}

impl<T: Scalar> BaselineHyperState<T> {
    pub fn active_set(&self) -> Vec<usize> {
        active_indices(&self.alpha)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePosterior<T: Scalar> {
    pub sigma: Vec<DMatrix<T>>,
    pub mu: Vec<DVector<T>>,
}

impl<T: Scalar> BaselinePosterior<T> {
    pub fn empty(n_outputs: usize) -> Self {
        Self {
            sigma: vec![DMatrix::zeros(0, 0); n_outputs],
            mu: vec![DVector::zeros(0); n_outputs],
        }
    }

    /// `[μ_1 … μ_V]` as an M×V matrix.
    pub fn weight_mean(&self) -> DMatrix<T> {
        let m = self.mu.first().map_or(0, |mu| mu.len());
        DMatrix::from_fn(m, self.mu.len(), |i, j| self.mu[j][i])
    }
}

/// Sparsity and quality of one candidate for one output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputSq<T: Scalar> {
    pub s_prime: T,
    pub q_prime: T,
    pub s: T,
    pub q: T,
    pub degenerate: bool,
}

/// `s'_{i,j}` and `q'_{i,j}` for every candidate `i` (rows) and output `j` (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineProjections<T: Scalar> {
    pub s_prime: DMatrix<T>,
    pub q_prime: DMatrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel<T: Scalar> {
    pub kernel: KernelConfig<T>,
    pub active: Vec<usize>,
    pub has_bias: bool,
    pub relevance_inputs: DMatrix<T>,
    pub hyper: BaselineHyperState<T>,
    pub posterior: BaselinePosterior<T>,
    pub iterations: usize,
    pub converged: bool,
    pub log_marginal: T,
    pub trace: Vec<IterationRecord<T>>,
}

impl<T: Scalar> BaselineModel<T> {
    /// `σ_MP,j`
    pub fn sigma_mp(&self) -> Vec<T> {
        self.hyper.sigma2.iter().map(|s| s.sqrt()).collect()
    }

    pub fn n_relevance_vectors(&self) -> usize {
        self.active.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.hyper.sigma2.len()
    }

    pub fn predict(&self, x_star: &[T]) -> Result<(DVector<T>, DVector<T>)> {
        predict_baseline(self, x_star)
    }
}

/// `Σ_j = (σ_j⁻²ΦᵀΦ + A)⁻¹`, `μ_j = σ_j⁻² Σ_j Φᵀ τ_j`.
pub fn posterior_update_j<T: Scalar>(
    design_active: &DMatrix<T>,
    alpha_active: &[T],
    tau_j: &DVector<T>,
    sigma2_j: T,
) -> Result<(DMatrix<T>, DVector<T>)> {
    if design_active.ncols() != alpha_active.len() {
        return invalid("active design columns and α entries differ in count");
    }
    let gram = design_active.transpose() * design_active;
    let phi_t = design_active.transpose() * tau_j;
    posterior_j_from_gram(&gram, alpha_active, &phi_t, sigma2_j)
}

fn posterior_j_from_gram<T: Scalar>(
    gram_active: &DMatrix<T>,
    alpha_active: &[T],
    phi_t_tau: &DVector<T>,
    sigma2_j: T,
) -> Result<(DMatrix<T>, DVector<T>)> {
    if !(sigma2_j > T::zero()) {
        return invalid(format!("noise variance must be positive, got {sigma2_j}"));
    }
    let m = alpha_active.len();
    if m == 0 {
        return Ok((DMatrix::zeros(0, 0), DVector::zeros(0)));
    }
    if alpha_active.iter().any(|a| !(*a > T::zero()) || !a.is_finite()) {
        return invalid("active α must be finite and positive");
    }
    let beta = T::one() / sigma2_j;
    let mut h = gram_active * beta;
    for (k, &a) in alpha_active.iter().enumerate() {
        h[(k, k)] += a;
    }
    let chol = Cholesky::new(&h)?;
    let sigma = chol.inverse();
    let mu = chol.solve_vec(&(phi_t_tau * beta));
    Ok((sigma, mu))
}

/// Candidate statistics for every `(i, j)` from the current per-output posteriors.
pub fn projections_baseline<T: Scalar>(
    design: &DesignMatrix<T>,
    targets: &DMatrix<T>,
    active: &[usize],
    posterior: &BaselinePosterior<T>,
    sigma2: &[T],
) -> BaselineProjections<T> {
    let phi = design.values();
    let gram = phi.transpose() * phi;
    let phi_t = phi.transpose() * targets;
    projections_from_gram(&gram, &phi_t, active, posterior, sigma2)
}

fn projections_from_gram<T: Scalar>(
    gram: &DMatrix<T>,
    phi_t_targets: &DMatrix<T>,
    active: &[usize],
    posterior: &BaselinePosterior<T>,
    sigma2: &[T],
) -> BaselineProjections<T> {
    let n1 = gram.nrows();
    let v = sigma2.len();
    let mut s_prime = DMatrix::zeros(n1, v);
    let mut q_prime = DMatrix::zeros(n1, v);
    let p = if active.is_empty() {
        None
    } else {
        let all: Vec<usize> = (0..n1).collect();
        Some(select(gram, &all, active))
    };
    for j in 0..v {
        let beta = T::one() / sigma2[j];
        for i in 0..n1 {
            s_prime[(i, j)] = beta * gram[(i, i)];
            q_prime[(i, j)] = beta * phi_t_targets[(i, j)];
        }
        if let Some(p) = &p {
            let z = p * &posterior.sigma[j];
            let pm = p * &posterior.mu[j];
            let beta2 = beta * beta;
            for i in 0..n1 {
                s_prime[(i, j)] -= beta2 * z.row(i).dot(&p.row(i));
                q_prime[(i, j)] -= beta * pm[i];
            }
        }
    }
    BaselineProjections { s_prime, q_prime }
}

/// Promotes `(s'_{i,j}, q'_{i,j})` to `(s_{i,j}, q_{i,j})`.
pub fn sq_stats_j<T: Scalar>(i: usize, j: usize, alpha_i: Alpha<T>, proj: &BaselineProjections<T>) -> OutputSq<T> {
    let s_prime = proj.s_prime[(i, j)];
    let q_prime = proj.q_prime[(i, j)];
    match alpha_i {
        Alpha::Inactive => OutputSq {
            s_prime,
            q_prime,
            s: s_prime,
            q: q_prime,
            degenerate: false,
        },
        Alpha::Finite(a) => {
            let den = a - s_prime;
            if den <= promotion_guard(a) {
                OutputSq {
                    s_prime,
                    q_prime,
                    s: s_prime,
                    q: q_prime,
                    degenerate: true,
                }
            } else {
                let f = a / den;
                OutputSq {
                    s_prime,
                    q_prime,
                    s: f * s_prime,
                    q: f * q_prime,
                    degenerate: false,
                }
            }
        }
    }
}

/// `∂ℓ/∂α = ½ Σ_j (1/α - 1/(α+s_j) - q_j²/(α+s_j)²)`.
pub fn stationarity<T: Scalar>(alpha: T, s: &[T], q: &[T]) -> T {
    let half: T = lit(0.5);
    s.iter().zip(q).fold(T::zero(), |acc, (&s, &q)| {
        let d = alpha + s;
        acc + half * (T::one() / alpha - T::one() / d - q * q / (d * d))
    })
}

/// Polynomial whose positive roots are the stationary points of `ℓ(α)`,
/// obtained by multiplying `2∂ℓ/∂α` through by `α Π_j (α + s_j)²`:
/// `Σ_j [(s_j - q_j²) α + s_j²] Π_{k≠j} (α + s_k)²`.
pub fn stationarity_polynomial<T: Scalar>(s: &[T], q: &[T]) -> Polynomial<T> {
    let v = s.len();
    let mut total = Polynomial::new(vec![T::zero()]);
    for j in 0..v {
        let mut term = Polynomial::new(vec![s[j] * s[j], s[j] - q[j] * q[j]]);
        for (k, &sk) in s.iter().enumerate() {
            if k != j {
                let lin = Polynomial::new(vec![sk, T::one()]);
                term = term.mul(&lin).mul(&lin);
            }
        }
        total = total.add(&term);
    }
    total
}

/// Positive real stationary points of `ℓ(α_i)` for one candidate.
///
/// The polynomial is built in the rescaled variable `α / c` with `c` the
/// geometric mean of the `s_j`, solved by companion-matrix eigenvalues and
/// each real root refined by Newton steps. An empty result means the
/// likelihood is maximised at `α = ∞`.
pub fn alpha_candidates_baseline<T: Scalar>(s: &[T], q: &[T]) -> Vec<T> {
    assert_eq!(s.len(), q.len(), "s and q lengths differ");
    if s.is_empty() || s.iter().any(|&x| !(x > T::zero())) {
        return Vec::new();
    }
    let v = s.len();
    let c = (s.iter().fold(T::zero(), |acc, &x| acc + x.ln()) / lit(v as f64)).exp();
    let s_scaled: Vec<T> = s.iter().map(|&x| x / c).collect();
    // q²/(α+s)² in scaled units: q̃² = q²/c
    let q_scaled: Vec<T> = q.iter().map(|&x| x / c.sqrt()).collect();
    let poly = stationarity_polynomial(&s_scaled, &q_scaled).trimmed(lit(1e-14));

    let raw: Vec<T> = match poly.complex_roots() {
        Some(roots) => roots
            .into_iter()
            .filter(|&(re, im)| {
                let mag = (re * re + im * im).sqrt();
                im.abs() <= lit::<T>(1e-8) * if mag > T::one() { mag } else { T::one() }
            })
            .map(|(re, _)| poly.polish(re, 4))
            .collect(),
        None => bracket_roots(&s_scaled, &q_scaled),
    };

    let floor: T = lit(1e-12);
    let mut roots: Vec<T> = raw
        .into_iter()
        .map(|r| r * c)
        .filter(|&r| r > floor && r.is_finite())
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    let rel: T = lit(1e-8);
    roots.dedup_by(|b, a| (*b - *a).abs() <= rel * a.abs());
    roots
}

/// Sign-change scan with bisection, used only when the eigenvalue iteration
/// does not converge.
fn bracket_roots<T: Scalar>(s: &[T], q: &[T]) -> Vec<T> {
    let grid = 2000;
    let (lo, hi) = (-12.0f64, 12.0f64);
    let f = |x: T| stationarity(x, s, q);
    let mut out = Vec::new();
    let mut prev_x: T = lit(10f64.powf(lo));
    let mut prev_f = f(prev_x);
    for k in 1..=grid {
        let x: T = lit(10f64.powf(lo + (hi - lo) * k as f64 / grid as f64));
        let fx = f(x);
        if (prev_f > T::zero()) != (fx > T::zero()) {
            let (mut a, mut b, mut fa) = (prev_x, x, prev_f);
            for _ in 0..200 {
                let m = (a + b) / lit(2.0);
                let fm = f(m);
                if (fm > T::zero()) == (fa > T::zero()) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            out.push((a + b) / lit(2.0));
        }
        prev_x = x;
        prev_f = fx;
    }
    out
}

/// `2ΔL_i` summed over outputs.
pub fn delta_l_baseline<T: Scalar>(
    action: Action,
    sq: &[OutputSq<T>],
    alpha_old: Alpha<T>,
    alpha_new: Alpha<T>,
) -> Result<T> {
    match (action, alpha_old, alpha_new) {
        (Action::Reestimate, Alpha::Finite(a), Alpha::Finite(a_new)) => {
            let d = T::one() / a_new - T::one() / a;
            Ok(sq.iter().fold(T::zero(), |acc, o| {
                let x = o.s_prime * d;
                acc + o.q_prime * o.q_prime * d / (T::one() + x) - x.ln_1p()
            }))
        }
        (Action::Add, Alpha::Inactive, Alpha::Finite(a_new)) => Ok(sq.iter().fold(T::zero(), |acc, o| {
            let den = a_new + o.s;
            acc + o.q * o.q / den + (a_new / den).ln()
        })),
        (Action::Delete, Alpha::Finite(a), Alpha::Inactive) => Ok(sq.iter().fold(T::zero(), |acc, o| {
            acc + o.q_prime * o.q_prime / (o.s_prime - a) - (-(o.s_prime / a)).ln_1p()
        })),
        _ => invalid(format!(
            "action {action:?} is inconsistent with α {alpha_old:?} -> {alpha_new:?}"
        )),
    }
}

/// `σ_j² = ‖τ_j - Φμ_j‖² / (N - Σ_i γ'_{i,j})` with `γ'_{i,j} = 1 - α_i Σ_{j,ii}`.
pub fn sigma_update_j<T: Scalar>(
    tau_j: &DVector<T>,
    design_active: &DMatrix<T>,
    mu_j: &DVector<T>,
    alpha_active: &[T],
    sigma_j_diag: &[T],
    output: usize,
) -> Result<T> {
    let n = tau_j.len();
    let resid = if design_active.ncols() == 0 {
        tau_j.norm_squared()
    } else {
        (tau_j - design_active * mu_j).norm_squared()
    };
    let gamma = alpha_active
        .iter()
        .zip(sigma_j_diag)
        .fold(T::zero(), |acc, (&a, &d)| acc + T::one() - a * d);
    let dof = lit::<T>(n as f64) - gamma;
    if !(dof > T::zero()) {
        return Err(Error::DegenerateDegreesOfFreedom { output });
    }
    Ok(resid / dof)
}

/// `L(α, σ)` from explicit `C_j = σ_j²I + ΦA⁻¹Φᵀ`. `O(V N³)`.
pub fn log_marginal_baseline<T: Scalar>(
    targets: &DMatrix<T>,
    alpha: &[Alpha<T>],
    sigma2: &[T],
    design: &DesignMatrix<T>,
) -> Result<T> {
    let phi = design.values();
    let n = phi.nrows();
    if alpha.len() != phi.ncols() || sigma2.len() != targets.ncols() {
        return invalid("state does not match the data shape");
    }
    let mut shared = DMatrix::<T>::zeros(n, n);
    for (i, a) in alpha.iter().enumerate() {
        if let Alpha::Finite(a) = a {
            let col = phi.column(i);
            shared += (&col * col.transpose()) / *a;
        }
    }
    let log_two_pi = T::two_pi().ln();
    let mut total = T::zero();
    for (j, &s2) in sigma2.iter().enumerate() {
        let mut c = shared.clone();
        for k in 0..n {
            c[(k, k)] += s2;
        }
        let chol = Cholesky::new(&c)?;
        let tau = DMatrix::from_column_slice(n, 1, targets.column(j).as_slice());
        let z = chol.half_solve(&tau);
        total += lit::<T>(n as f64) * log_two_pi + chol.log_det() + z.norm_squared();
    }
    Ok(-total / lit(2.0))
}

fn log_marginal_from_posterior<T: Scalar>(
    targets: &DMatrix<T>,
    design_active: &DMatrix<T>,
    alpha_active: &[T],
    posterior: &BaselinePosterior<T>,
    sigma2: &[T],
) -> Result<T> {
    let n = targets.nrows();
    let nf: T = lit(n as f64);
    let log_det_a = alpha_active.iter().fold(T::zero(), |acc, a| acc + a.ln());
    let mut total = T::zero();
    for (j, &s2) in sigma2.iter().enumerate() {
        let tau = targets.column(j).into_owned();
        let (log_det_sigma, fit) = if alpha_active.is_empty() {
            (T::zero(), tau.norm_squared())
        } else {
            let chol = Cholesky::new(&posterior.sigma[j])?;
            (chol.log_det(), tau.dot(&(&tau - design_active * &posterior.mu[j])))
        };
        total += nf * T::two_pi().ln() + nf * s2.ln() - log_det_sigma - log_det_a + fit / s2;
    }
    Ok(-total / lit(2.0))
}

struct Candidate<T: Scalar> {
    action: Action,
    alpha_new: Alpha<T>,
    two_delta_l: T,
}

/// Decides the update for candidate `i` from its per-output statistics.
fn evaluate_candidate<T: Scalar>(alpha_i: Alpha<T>, sq: &[OutputSq<T>]) -> Result<Option<Candidate<T>>> {
    let degenerate = sq.iter().any(|o| o.degenerate);
    let alpha_new = if degenerate {
        Alpha::Inactive
    } else {
        let s: Vec<T> = sq.iter().map(|o| o.s).collect();
        let q: Vec<T> = sq.iter().map(|o| o.q).collect();
        let roots = alpha_candidates_baseline(&s, &q);
        match roots.len() {
            0 => Alpha::Inactive,
            1 => Alpha::Finite(roots[0]),
            _ => {
                let action = if alpha_i.is_active() { Action::Reestimate } else { Action::Add };
                let mut best: Option<(T, T)> = None;
                for &r in &roots {
                    let dl = delta_l_baseline(action, sq, alpha_i, Alpha::Finite(r))?;
                    if dl.is_finite() && best.is_none_or(|(_, b)| dl > b) {
                        best = Some((r, dl));
                    }
                }
                match best {
                    Some((r, _)) => Alpha::Finite(r),
                    None => Alpha::Finite(roots[0]),
                }
            }
        }
    };
    let action = match (alpha_new, alpha_i) {
        (Alpha::Finite(_), Alpha::Finite(_)) => Action::Reestimate,
        (Alpha::Finite(_), Alpha::Inactive) => Action::Add,
        (Alpha::Inactive, Alpha::Finite(_)) => Action::Delete,
        (Alpha::Inactive, Alpha::Inactive) => return Ok(None),
    };
    let two_delta_l = delta_l_baseline(action, sq, alpha_i, alpha_new)?;
    Ok(two_delta_l.is_finite().then_some(Candidate {
        action,
        alpha_new,
        two_delta_l,
    }))
}

fn column_variances<T: Scalar>(t: &DMatrix<T>) -> Vec<T> {
    let n = t.nrows();
    (0..t.ncols())
        .map(|j| {
            let col = t.column(j);
            let mean = col.sum() / lit(n as f64);
            col.iter().fold(T::zero(), |acc, &x| acc + (x - mean) * (x - mean)) / lit((n - 1) as f64)
        })
        .collect()
}

/// Sequential EM fit of the per-output model.
pub fn fit_baseline<T: Scalar>(
    data: &TrainingData<T>,
    cfg: &KernelConfig<T>,
    opts: &FitOptions,
) -> Result<BaselineModel<T>> {
    let n = data.n_samples();
    let v = data.n_outputs();
    if n < 2 {
        return invalid("fitting needs at least two samples");
    }
    if v == 0 {
        return invalid("targets have no columns");
    }
    cfg.validate()?;
    let variances = column_variances(&data.targets);
    if let Some(j) = variances.iter().position(|&x| !(x > T::zero())) {
        return invalid(format!("target column {} has zero variance", j + 1));
    }
    let prep = Prepared::new(data, cfg)?;
    let tol: T = lit(opts.tolerance);
    let floors: Vec<T> = variances.iter().map(|&x| x * lit(1e-12)).collect();
    let taus: Vec<DVector<T>> = (0..v).map(|j| data.targets.column(j).into_owned()).collect();

    let mut alpha = vec![Alpha::Inactive; n + 1];
    let mut sigma2: Vec<T> = variances.iter().map(|&x| x * lit(0.1)).collect();
    let mut active: Vec<usize> = Vec::new();
    let mut posterior = BaselinePosterior::empty(v);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut sq = vec![
        OutputSq {
            s_prime: T::zero(),
            q_prime: T::zero(),
            s: T::zero(),
            q: T::zero(),
            degenerate: false,
        };
        v
    ];

    for iter in 1..=opts.max_iterations {
        iterations = iter;
        let proj = projections_from_gram(&prep.gram, &prep.phi_t_targets, &active, &posterior, &sigma2);

        let mut best: Option<(usize, Candidate<T>)> = None;
        let mut addable = false;
        for (i, &alpha_i) in alpha.iter().enumerate() {
            for (j, slot) in sq.iter_mut().enumerate() {
                *slot = sq_stats_j(i, j, alpha_i, &proj);
            }
            let Some(cand) = evaluate_candidate(alpha_i, &sq)? else {
                continue;
            };
            if cand.action == Action::Add {
                addable = true;
            }
            if best.as_ref().is_none_or(|(_, b)| cand.two_delta_l > b.two_delta_l) {
                best = Some((i, cand));
            }
        }

        let Some((index, sel)) = best else {
            if active.is_empty() {
                return Err(Error::NoInformativeBasis);
            }
            converged = true;
            break;
        };

        let sigma_at_selection = DMatrix::from_diagonal(&DVector::from_vec(sigma2.clone()));
        if iter != 1 {
            // σ update sits between selection and the α action, using the
            // posterior of the previous E-step.
            let phi_a = select_columns(prep.design.values(), &active);
            let alpha_active: Vec<T> = active.iter().map(|&i| alpha[i].finite().unwrap()).collect();
            for j in 0..v {
                let diag: Vec<T> = (0..active.len()).map(|k| posterior.sigma[j][(k, k)]).collect();
                let s2 = sigma_update_j(&taus[j], &phi_a, &posterior.mu[j], &alpha_active, &diag, j)?;
                sigma2[j] = if s2 > floors[j] { s2 } else { floors[j] };
            }
        }

        let alpha_before = alpha[index];
        alpha[index] = sel.alpha_new;
        if sel.action == Action::Reestimate {
            let old = alpha_before.finite().expect("re-estimated α was finite");
            let new = sel.alpha_new.finite().expect("re-estimate keeps α finite");
            if (old / new).ln().abs() < tol && !addable {
                converged = true;
            }
        }

        active = active_indices(&alpha);
        let alpha_active: Vec<T> = active.iter().map(|&i| alpha[i].finite().unwrap()).collect();
        let gram_a = select(&prep.gram, &active, &active);
        let phi_t_a = select_rows(&prep.phi_t_targets, &active);
        let mut next = BaselinePosterior::empty(v);
        for j in 0..v {
            let (s, m) = posterior_j_from_gram(&gram_a, &alpha_active, &phi_t_a.column(j).into_owned(), sigma2[j])?;
            next.sigma[j] = s;
            next.mu[j] = m;
        }
        posterior = next;

        if opts.record_trace {
            trace.push(IterationRecord {
                iteration: iter,
                index,
                action: sel.action,
                alpha_before,
                alpha_after: sel.alpha_new,
                two_delta_l: sel.two_delta_l,
                alphas: alpha.clone(),
                noise_at_selection: sigma_at_selection,
                noise_after: DMatrix::from_diagonal(&DVector::from_vec(sigma2.clone())),
            });
        }

        if converged {
            break;
        }
    }

    let phi_a = select_columns(prep.design.values(), &active);
    let alpha_active: Vec<T> = active.iter().map(|&i| alpha[i].finite().unwrap()).collect();
    let log_marginal = log_marginal_from_posterior(&data.targets, &phi_a, &alpha_active, &posterior, &sigma2)?;
    let (has_bias, relevance_inputs) = relevance_inputs(&data.inputs, &active);
    Ok(BaselineModel {
        kernel: *cfg,
        active,
        has_bias,
        relevance_inputs,
        hyper: BaselineHyperState { alpha, sigma2 },
        posterior,
        iterations,
        converged,
        log_marginal,
        trace,
    })
}

/// Per-output predictive mean `φ(x*)ᵀμ_j` and variance `σ_MP,j² + φ(x*)ᵀΣ_jφ(x*)`.
pub fn predict_baseline<T: Scalar>(model: &BaselineModel<T>, x_star: &[T]) -> Result<(DVector<T>, DVector<T>)> {
    let phi = basis_row(&model.kernel, model.has_bias, &model.relevance_inputs, x_star)?;
    let v = model.n_outputs();
    let phi = DVector::from_vec(phi);
    let mut mean = DVector::zeros(v);
    let mut var = DVector::zeros(v);
    for j in 0..v {
        if phi.is_empty() {
            var[j] = model.hyper.sigma2[j];
            continue;
        }
        mean[j] = phi.dot(&model.posterior.mu[j]);
        var[j] = model.hyper.sigma2[j] + phi.dot(&(&model.posterior.sigma[j] * &phi));
    }
    Ok((mean, var))
}

/// Full noise covariance `D̂R̂D̂` with `D̂ = diag(σ_MP)` and `R̂` the correlation
/// of the training residuals `T - Φ[μ_1 … μ_V]`.
pub fn estimate_full_covariance<T: Scalar>(
    model: &BaselineModel<T>,
    targets: &DMatrix<T>,
    design_active: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let n = targets.nrows();
    let v = targets.ncols();
    if n < 2 {
        return invalid("covariance estimate needs at least two samples");
    }
    if v != model.n_outputs() || design_active.ncols() != model.active.len() {
        return invalid("model and data shapes differ");
    }
    let resid = if design_active.ncols() == 0 {
        targets.clone()
    } else {
        targets - design_active * model.posterior.weight_mean()
    };
    let cov = resid.transpose() * &resid / lit::<T>((n - 1) as f64);
    let scale: Vec<T> = (0..v).map(|j| cov[(j, j)].sqrt()).collect();
    if let Some(j) = scale.iter().position(|&d| !(d > T::zero())) {
        return Err(Error::DegenerateResiduals { output: j });
    }
    let sd = model.sigma_mp();
    let mut out = DMatrix::zeros(v, v);
    for a in 0..v {
        for b in 0..v {
            let r = if a == b { T::one() } else { cov[(a, b)] / (scale[a] * scale[b]) };
            out[(a, b)] = sd[a] * r * sd[b];
        }
    }
    crate::linalg::symmetrize(&mut out);
    Ok(out)
}
