//! Synthetic data and the Monte-Carlo comparison of the two solvers.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::baseline::{estimate_full_covariance, fit_baseline};
use crate::common::{FitOptions, Method, TrainingData};
use crate::error::{invalid, Error, Result};
use crate::eval::{entropy_loss, quadratic_loss, rank_sum_pvalue, rmse, EvalReport};
use crate::fast::fit_fast;
use crate::kernel::{build_design_matrix, KernelConfig};
use crate::linalg::{select_columns, Cholesky};

/// Number of evenly spaced points used to measure prediction error.
pub const TEST_GRID_POINTS: usize = 1000;

/// Family of noiseless target functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruthVariant {
    /// Output `j` (0-based) is `sinc(x - 2j)`.
    SincTranslations,
    /// Two outputs: `sinc(x)` and `0.1 x`.
    SincPlusLinear,
}

impl std::str::FromStr for TruthVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinc-translations" => Ok(TruthVariant::SincTranslations),
            "sinc-plus-linear" => Ok(TruthVariant::SincPlusLinear),
            other => invalid(format!(
                "unknown variant {other:?}, expected sinc-translations or sinc-plus-linear"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub v: usize,
    pub n: usize,
    pub u: usize,
    pub width: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub x_range: (f64, f64),
    pub noise_scale: f64,
    pub variant: TruthVariant,
}

impl SimConfig {
    /// Cell with the default settings: one input on `[-10, 10]`, width 1.6,
    /// 11 replications, translated sincs.
    pub fn new(v: usize, n: usize) -> Self {
        Self {
            v,
            n,
            u: 1,
            width: 1.6,
            replications: 11,
            master_seed: 0,
            x_range: (-10.0, 10.0),
            noise_scale: 1.0,
            variant: TruthVariant::SincTranslations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v == 0 {
            return invalid("V must be at least 1");
        }
        if self.n < 2 {
            return invalid("N must be at least 2");
        }
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        if self.u != 1 {
            return invalid("built-in target functions take a single input");
        }
        if !(self.x_range.0 < self.x_range.1) {
            return invalid("x range must be a nonempty interval");
        }
        if !(self.noise_scale > 0.0) {
            return invalid("noise scale must be positive");
        }
        if !(self.width > 0.0) {
            return invalid("kernel width must be positive");
        }
        if self.variant == TruthVariant::SincPlusLinear && self.v != 2 {
            return invalid("sinc-plus-linear targets have exactly two outputs");
        }
        Ok(())
    }
}

/// One synthetic data set.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub x: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub y_true: DMatrix<f64>,
    pub omega_true: DMatrix<f64>,
}

impl TrainingSet {
    pub fn training_data(&self) -> TrainingData<f64> {
        TrainingData {
            inputs: self.x.clone(),
            targets: self.t.clone(),
        }
    }
}

fn sinc(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.sin() / z
    }
}

/// Noiseless outputs for inputs `x` (one sample per row, one column).
pub fn true_functions(x: &DMatrix<f64>, v: usize, variant: TruthVariant) -> Result<DMatrix<f64>> {
    if x.ncols() != 1 {
        return invalid("built-in target functions take a single input");
    }
    match variant {
        TruthVariant::SincTranslations => {
            if v == 0 {
                return invalid("V must be at least 1");
            }
            Ok(DMatrix::from_fn(x.nrows(), v, |i, j| sinc(x[(i, 0)] - 2.0 * j as f64)))
        }
        TruthVariant::SincPlusLinear => {
            if v != 2 {
                return invalid("sinc-plus-linear targets have exactly two outputs");
            }
            Ok(DMatrix::from_fn(x.nrows(), 2, |i, j| {
                if j == 0 {
                    sinc(x[(i, 0)])
                } else {
                    0.1 * x[(i, 0)]
                }
            }))
        }
    }
}

/// Base-10 exponent range of the noise covariance eigenvalues drawn by [`random_spd`].
pub const NOISE_EIGEN_LOG10: (f64, f64) = (-3.0, -1.0);

/// `Q diag(λ) Qᵀ` with `Q` the orthogonal factor of a standard normal matrix
/// and `λ` log-uniform on `[1e-3, 1e-1] · scale²`.
pub fn random_spd<R: Rng + ?Sized>(v: usize, noise_scale: f64, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(v, v, |_, _| StandardNormal.sample(&mut *rng));
    let q = g.qr().q();
    let lambda = nalgebra::DVector::from_fn(v, |_, _| {
        10f64.powf(rng.random_range(NOISE_EIGEN_LOG10.0..=NOISE_EIGEN_LOG10.1)) * noise_scale * noise_scale
    });
    let mut omega = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    crate::linalg::symmetrize(&mut omega);
    omega
}

/// Factor `F` with `F Fᵀ = Ω`, falling back to an eigen factor for
/// semidefinite input.
fn noise_factor(omega: &DMatrix<f64>) -> DMatrix<f64> {
    match Cholesky::new(omega) {
        Ok(c) => c.l().clone(),
        Err(_) => {
            let e = omega.clone().symmetric_eigen();
            let root = e.eigenvalues.map(|l| l.max(0.0).sqrt());
            &e.eigenvectors * DMatrix::from_diagonal(&root)
        }
    }
}

/// Draws inputs, then noise with the given covariance.
pub fn sample_with_omega<R: Rng + ?Sized>(cfg: &SimConfig, omega: &DMatrix<f64>, rng: &mut R) -> Result<TrainingSet> {
    cfg.validate()?;
    if omega.shape() != (cfg.v, cfg.v) {
        return invalid("noise covariance does not match V");
    }
    let (lo, hi) = cfg.x_range;
    let x = DMatrix::from_fn(cfg.n, cfg.u, |_, _| rng.random_range(lo..=hi));
    let y_true = true_functions(&x, cfg.v, cfg.variant)?;
    let factor = noise_factor(omega);
    let z = DMatrix::<f64>::from_fn(cfg.n, cfg.v, |_, _| StandardNormal.sample(&mut *rng));
    let t = &y_true + z * factor.transpose();
    Ok(TrainingSet {
        x,
        t,
        y_true,
        omega_true: omega.clone(),
    })
}

/// Draws `Ω_true` with [`random_spd`], then a data set under it.
pub fn sample_dataset<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<TrainingSet> {
    cfg.validate()?;
    let omega = random_spd(cfg.v, cfg.noise_scale, rng);
    sample_with_omega(cfg, &omega, rng)
}

/// Seed of replication `rep` under `master`.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    master ^ rep as u64
}

/// Evenly spaced inputs covering `range`, one per row.
pub fn test_grid(range: (f64, f64), points: usize) -> DMatrix<f64> {
    let step = (range.1 - range.0) / (points.max(2) - 1) as f64;
    DMatrix::from_fn(points, 1, |i, _| range.0 + step * i as f64)
}

/// Quantity compared between the solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    Runtime,
    EntropyLoss,
    QuadraticLoss,
    Rmse,
    RvCount,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::Runtime,
        Measure::EntropyLoss,
        Measure::QuadraticLoss,
        Measure::Rmse,
        Measure::RvCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Runtime => "runtime_seconds",
            Measure::EntropyLoss => "entropy_loss",
            Measure::QuadraticLoss => "quadratic_loss",
            Measure::Rmse => "rmse",
            Measure::RvCount => "rv_count",
        }
    }

    pub fn of(self, r: &EvalReport) -> f64 {
        match self {
            Measure::Runtime => r.runtime_seconds,
            Measure::EntropyLoss => r.entropy_loss,
            Measure::QuadraticLoss => r.quadratic_loss,
            Measure::Rmse => r.rmse,
            Measure::RvCount => r.rv_count as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSummary {
    pub measure: Measure,
    pub median_existing: f64,
    pub median_proposed: f64,
    /// `median_existing - median_proposed`
    pub difference: f64,
    /// Absent with fewer than two successful replications.
    pub p_value: Option<f64>,
}

/// A replication excluded from the summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub replication: usize,
    pub seed: u64,
    pub method: Method,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub v: usize,
    pub n: usize,
    /// Successful replications as `(existing, proposed)` pairs in replication order.
    pub reports: Vec<(EvalReport, EvalReport)>,
    pub failures: Vec<Failure>,
    pub summaries: Vec<MeasureSummary>,
}

impl CellResult {
    pub fn n_ok(&self) -> usize {
        self.reports.len()
    }

    pub fn n_failed(&self) -> usize {
        self.failures.len()
    }

    pub fn summary(&self, m: Measure) -> &MeasureSummary {
        self.summaries
            .iter()
            .find(|s| s.measure == m)
            .expect("every measure is summarised")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McReport {
    pub cells: Vec<CellResult>,
}

/// Execution settings of [`run_mc`].
#[derive(Clone, Debug, PartialEq)]
pub struct McOptions {
    pub threads: usize,
    pub fit: FitOptions,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            fit: FitOptions::default(),
        }
    }
}

/// Median of a sample; NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Fits one method on `set` and measures it against the truth.
pub fn evaluate(
    method: Method,
    set: &TrainingSet,
    cfg: &SimConfig,
    fit: &FitOptions,
    seed: u64,
) -> Result<EvalReport> {
    let data = set.training_data();
    let kernel = KernelConfig::gaussian(cfg.width)?;
    let grid = test_grid(cfg.x_range, TEST_GRID_POINTS);
    let truth = true_functions(&grid, cfg.v, cfg.variant)?;
    let mut predicted = DMatrix::zeros(grid.nrows(), cfg.v);
    let (runtime, iterations, rv_count, omega_hat) = match method {
        Method::Proposed => {
            let start = Instant::now();
            let model = fit_fast(&data, &kernel, fit)?;
            let runtime = start.elapsed().as_secs_f64();
            for i in 0..grid.nrows() {
                let (mean, _) = model.predict(&[grid[(i, 0)]])?;
                predicted.row_mut(i).copy_from(&mean);
            }
            (runtime, model.iterations, model.n_relevance_vectors(), model.omega_mp().clone())
        }
        Method::Existing => {
            let start = Instant::now();
            let model = fit_baseline(&data, &kernel, fit)?;
            let runtime = start.elapsed().as_secs_f64();
            for i in 0..grid.nrows() {
                let (mean, _) = model.predict(&[grid[(i, 0)]])?;
                predicted.row_mut(i).copy_from(&mean.transpose());
            }
            let design = build_design_matrix(&data.inputs, &kernel)?;
            let active = select_columns(design.values(), &model.active);
            let omega = estimate_full_covariance(&model, &data.targets, &active)?;
            (runtime, model.iterations, model.n_relevance_vectors(), omega)
        }
    };
    Ok(EvalReport {
        method,
        seed,
        runtime_seconds: runtime,
        iterations,
        entropy_loss: entropy_loss(&set.omega_true, &omega_hat)?,
        quadratic_loss: quadratic_loss(&set.omega_true, &omega_hat)?,
        rmse: rmse(&truth, &predicted)?,
        rv_count,
    })
}

enum RepOutcome {
    Ok(EvalReport, EvalReport),
    Failed(Vec<Failure>),
}

fn run_replication(cfg: &SimConfig, rep: usize, fit: &FitOptions) -> RepOutcome {
    let seed = replication_seed(cfg.master_seed, rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let failure = |method, e: Error| Failure {
        replication: rep,
        seed,
        method,
        message: e.to_string(),
    };
    let set = match sample_dataset(cfg, &mut rng) {
        Ok(s) => s,
        Err(e) => return RepOutcome::Failed(vec![failure(Method::Existing, e)]),
    };
    let existing = evaluate(Method::Existing, &set, cfg, fit, seed);
    let proposed = evaluate(Method::Proposed, &set, cfg, fit, seed);
    match (existing, proposed) {
        (Ok(a), Ok(b)) => RepOutcome::Ok(a, b),
        (a, b) => {
            let mut f = Vec::new();
            if let Err(e) = a {
                f.push(failure(Method::Existing, e));
            }
            if let Err(e) = b {
                f.push(failure(Method::Proposed, e));
            }
            RepOutcome::Failed(f)
        }
    }
}

fn summarise(reports: &[(EvalReport, EvalReport)]) -> Result<Vec<MeasureSummary>> {
    Measure::ALL
        .iter()
        .map(|&m| {
            let a: Vec<f64> = reports.iter().map(|(e, _)| m.of(e)).collect();
            let b: Vec<f64> = reports.iter().map(|(_, p)| m.of(p)).collect();
            let (me, mp) = (median(&a), median(&b));
            let p_value = if reports.len() >= 2 {
                Some(rank_sum_pvalue(&a, &b)?)
            } else {
                None
            };
            Ok(MeasureSummary {
                measure: m,
                median_existing: me,
                median_proposed: mp,
                difference: me - mp,
                p_value,
            })
        })
        .collect()
}

/// Runs every cell of `grid`: each replication fits both solvers on the same
/// data set. A replication where either fit fails is excluded for both.
pub fn run_mc(grid: &[SimConfig], opts: &McOptions) -> Result<McReport> {
    if grid.is_empty() {
        return invalid("benchmark grid is empty");
    }
    for cfg in grid {
        cfg.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    // untimed warm-up so one-time costs do not land in the first measurement
    {
        let warm = &grid[0];
        let mut rng = ChaCha8Rng::seed_from_u64(warm.master_seed);
        if let Ok(set) = sample_dataset(warm, &mut rng) {
            let _ = evaluate(Method::Existing, &set, warm, &opts.fit, warm.master_seed);
            let _ = evaluate(Method::Proposed, &set, warm, &opts.fit, warm.master_seed);
        }
    }

    let mut cells = Vec::with_capacity(grid.len());
    for cfg in grid {
        let outcomes: Vec<RepOutcome> = pool.install(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|rep| run_replication(cfg, rep, &opts.fit))
                .collect()
        });
        let mut reports = Vec::new();
        let mut failures = Vec::new();
        for o in outcomes {
            match o {
                RepOutcome::Ok(a, b) => reports.push((a, b)),
                RepOutcome::Failed(f) => failures.extend(f),
            }
        }
        let summaries = summarise(&reports)?;
        cells.push(CellResult {
            v: cfg.v,
            n: cfg.n,
            reports,
            failures,
            summaries,
        });
    }
    Ok(McReport { cells })
}

fn fmt_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.6e}")
    }
}

impl McReport {
    /// One row per cell and measure.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing report: {e}"));
        w.write_record([
            "V",
            "N",
            "measure",
            "median_existing",
            "median_proposed",
            "difference",
            "p_value",
            "n_ok",
            "n_failed",
        ])
        .map_err(io)?;
        for c in &self.cells {
            for s in &c.summaries {
                w.write_record([
                    c.v.to_string(),
                    c.n.to_string(),
                    s.measure.name().to_string(),
                    fmt_value(s.median_existing),
                    fmt_value(s.median_proposed),
                    fmt_value(s.difference),
                    s.p_value.map(fmt_value).unwrap_or_default(),
                    c.n_ok().to_string(),
                    c.n_failed().to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("writing report: {e}")))?;
        Ok(())
    }

    /// Aligned plain-text rendering of the same rows as [`McReport::write_csv`].
    pub fn to_text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>3} {:>5} {:<16} {:>14} {:>14} {:>14} {:>12} {:>5} {:>8}",
            "V", "N", "measure", "existing", "proposed", "difference", "p_value", "ok", "failed"
        );
        for c in &self.cells {
            for m in &c.summaries {
                let p = m.p_value.map(|p| format!("{p:.3e}")).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    s,
                    "{:>3} {:>5} {:<16} {:>14.6e} {:>14.6e} {:>14.6e} {:>12} {:>5} {:>8}",
                    c.v,
                    c.n,
                    m.measure.name(),
                    m.median_existing,
                    m.median_proposed,
                    m.difference,
                    p,
                    c.n_ok(),
                    c.n_failed()
                );
            }
        }
        s
    }
}

fn parse_axis(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("bad grid axis {spec:?}"));
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if let Some((lo, rest)) = part.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((h, s)) => (h, s.trim().parse::<usize>().map_err(|_| bad())?),
                None => (rest, 1),
            };
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if step == 0 || hi < lo {
                return Err(bad());
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

/// Parses `"V=1..5;N=50..300:50"` into `(V, N)` cells, V-major. Axes accept
/// single values, comma lists and `lo..hi[:step]` ranges (inclusive).
pub fn parse_grid(spec: &str) -> Result<Vec<(usize, usize)>> {
    let mut vs = None;
    let mut ns = None;
    for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("grid part {part:?} lacks '='")))?;
        match key.trim() {
            "V" | "v" => vs = Some(parse_axis(value)?),
            "N" | "n" => ns = Some(parse_axis(value)?),
            other => return invalid(format!("unknown grid axis {other:?}")),
        }
    }
    let (Some(vs), Some(ns)) = (vs, ns) else {
        return invalid("grid needs both V and N");
    };
    Ok(vs.iter().flat_map(|&v| ns.iter().map(move |&n| (v, n))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sinc_peaks_and_zeros() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 2.0, 4.0]);
        let y = true_functions(&x, 3, TruthVariant::SincTranslations).unwrap();
        for j in 0..3 {
            assert_eq!(y[(j, j)], 1.0);
        }
        let x = DMatrix::from_column_slice(3, 1, &[PI, PI + 2.0, PI + 4.0]);
        let y = true_functions(&x, 3, TruthVariant::SincTranslations).unwrap();
        for j in 0..3 {
            assert!(y[(j, j)].abs() < 1e-15);
        }
    }

    #[test]
    fn truth_matches_pointwise_formula() {
        let pts = [-9.0, -4.5, -1.0, 0.0, 0.3, 2.0, 7.7];
        let x = DMatrix::from_column_slice(7, 1, &pts);
        let y = true_functions(&x, 4, TruthVariant::SincTranslations).unwrap();
        for (i, &p) in pts.iter().enumerate() {
            for j in 0..4 {
                let z = p - 2.0 * j as f64;
                let expect = if z == 0.0 { 1.0 } else { z.sin() / z };
                assert_eq!(y[(i, j)], expect);
            }
        }
        let y = true_functions(&x, 2, TruthVariant::SincPlusLinear).unwrap();
        for (i, &p) in pts.iter().enumerate() {
            assert_eq!(y[(i, 1)], 0.1 * p);
        }
        assert!(true_functions(&x, 3, TruthVariant::SincPlusLinear).is_err());
        assert!(true_functions(&DMatrix::zeros(2, 2), 1, TruthVariant::SincTranslations).is_err());
    }

    #[test]
    fn random_spd_properties() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = random_spd(1, 1.0, &mut r);
            assert!((1e-3..=1e-1).contains(&s[(0, 0)]));
        }
        for v in 2..6 {
            let s = random_spd(v, 1.0, &mut r);
            assert!((&s - s.transpose()).amax() < 1e-14);
            assert!(s.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        }
        let a = random_spd(4, 2.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_spd(4, 2.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_noise_gives_truth() {
        let cfg = SimConfig::new(3, 20);
        let set = sample_with_omega(&cfg, &DMatrix::zeros(3, 3), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(set.t, set.y_true);
    }

    #[test]
    fn noise_covariance_recovered() {
        let mut cfg = SimConfig::new(2, 100_000);
        cfg.x_range = (-1.0, 1.0);
        let omega = DMatrix::from_row_slice(2, 2, &[0.04, 0.015, 0.015, 0.02]);
        let set = sample_with_omega(&cfg, &omega, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let e = &set.t - &set.y_true;
        let cov = e.transpose() * &e / cfg.n as f64;
        for k in 0..4 {
            assert!((cov[k] - omega[k]).abs() <= 0.05 * omega[k].abs(), "{cov} vs {omega}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = SimConfig::new(2, 30);
        let a = sample_dataset(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_dataset(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("V=1..2;N=50..150:50").unwrap();
        assert_eq!(g, vec![(1, 50), (1, 100), (1, 150), (2, 50), (2, 100), (2, 150)]);
        assert_eq!(parse_grid("V=3;N=200").unwrap(), vec![(3, 200)]);
        assert_eq!(parse_grid("N=10,20; V=1").unwrap(), vec![(1, 10), (1, 20)]);
        assert_eq!(parse_grid("V=1..5;N=50..300:50").unwrap().len(), 30);
        assert!(parse_grid("V=1..5").is_err());
        assert!(parse_grid("V=5..1;N=2").is_err());
        assert!(parse_grid("V=a;N=2").is_err());
        assert!(parse_grid("W=1;N=2").is_err());
    }

    #[test]
    fn summary_ignores_replication_order() {
        let mk = |m, x: f64| EvalReport {
            method: m,
            seed: 0,
            runtime_seconds: x,
            iterations: 1,
            entropy_loss: x * 2.0,
            quadratic_loss: x * x,
            rmse: 1.0 / x,
            rv_count: x as usize,
        };
        let reports: Vec<_> = [3.0, 1.0, 4.0, 1.5, 9.0]
            .iter()
            .map(|&x| (mk(Method::Existing, x), mk(Method::Proposed, x + 0.5)))
            .collect();
        let mut shuffled = reports.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        assert_eq!(summarise(&reports).unwrap(), summarise(&shuffled).unwrap());
    }

    #[test]
    fn single_replication_has_no_pvalues() {
        let mut cfg = SimConfig::new(1, 30);
        cfg.replications = 1;
        let report = run_mc(&[cfg], &McOptions::default()).unwrap();
        let cell = &report.cells[0];
        assert_eq!(cell.n_ok() + cell.n_failed(), 1);
        assert_eq!(cell.reports.len(), 1);
        assert!(cell.summaries.iter().all(|s| s.p_value.is_none()));
        assert_eq!(cell.summaries.len(), 5);
    }

    #[test]
    fn report_is_deterministic_and_thread_independent() {
        let mut cfg = SimConfig::new(2, 30);
        cfg.replications = 4;
        cfg.master_seed = 77;
        let strip = |r: &McReport| {
            r.cells
                .iter()
                .flat_map(|c| c.reports.iter())
                .map(|(a, b)| (a.entropy_loss, a.rmse, a.rv_count, b.entropy_loss, b.rmse, b.rv_count))
                .collect::<Vec<_>>()
        };
        let one = run_mc(std::slice::from_ref(&cfg), &McOptions::default()).unwrap();
        let many = run_mc(
            std::slice::from_ref(&cfg),
            &McOptions {
                threads: 3,
                ..McOptions::default()
            },
        )
        .unwrap();
        assert_eq!(strip(&one), strip(&many));
        for m in [Measure::EntropyLoss, Measure::Rmse, Measure::RvCount] {
            assert_eq!(one.cells[0].summary(m), many.cells[0].summary(m));
        }
        let mut csv = Vec::new();
        one.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("V,N,measure,median_existing"));
        assert_eq!(one.to_text_table().lines().count(), 6);
    }
}
