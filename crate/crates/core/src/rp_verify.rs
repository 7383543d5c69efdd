//! Reflection-positivity Gram matrices and their PSD verdicts.
//!
//! For test functions `φ_1..φ_K` supported at positive time, a measure `ω` is
//! reflection positive on that family iff the Hermitian matrix
//! `M_mn = ω̂(φ_m - θφ_n)` is positive semidefinite. This module computes `M`
//!
//! * exactly, for a centred Gaussian;
//! * by direct Monte Carlo over `T ~ μ` with weight `exp F(T)`;
//! * through the factorization `M_mn = E_Q[conj(H_m(L)) H_n(L)]` with
//!   `H_m(L) = E_P[exp(-i (T+L)(φ_m) + G(T+L))]`, where `P` and `Q` are the
//!   Gaussians with covariances `A - B` and `B` over the positive half.
//!
//! Monte Carlo verdicts are three-valued. `pass` when the minimal eigenvalue
//! clears `-tol - 5·eig_error_bound`; below that, `fail` only if the negative
//! sign survives a batch bootstrap, `inconclusive` otherwise.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize, Serializer};

use crate::density::Potential;
use crate::error::{Error, Result};
use crate::gaussian::{decompose_pq, Covariance, GaussianSampler};
use crate::lattice::{Lattice, SiteVector};
use crate::linalg;
use crate::rng;

/// Default PSD tolerance for Gram verdicts.
pub const GRAM_TOLERANCE: f64 = 1e-10;
/// Multiple of the eigenvalue error bound tolerated before a failure.
pub const SIGMA_GATE: f64 = 5.0;
/// Bootstrap replicates used to confirm a failing sign.
pub const BOOTSTRAP_REPLICATES: usize = 200;
/// Fraction of bootstrap replicates that must stay negative for `fail`.
pub const BOOTSTRAP_STABILITY: f64 = 0.95;
/// Outer draws per chunk in the factorized estimator.
pub const FACTORIZED_CHUNK: usize = 64;

const BOOTSTRAP_STREAM: u64 = u64::MAX;
const TEST_FUNCTION_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    ExactGaussian,
    McDirect,
    McFactorizedShared,
    McFactorizedIndependent,
}

/// Monte Carlo sizes and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub n_samples: usize,
    pub seed: u64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub share_inner: bool,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            n_samples: 200_000,
            seed: 0,
            n_outer: 10_000,
            n_inner: 1_000,
            share_inner: true,
        }
    }
}

impl McParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_outer == 0 || self.n_inner == 0 {
            return Err(Error::InvalidParameter(
                "Monte Carlo sample counts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`psd_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub min_eigenvalue: f64,
    /// `max |M - M†|` before hermitization.
    pub hermitian_defect: f64,
    /// Verdict from the threshold alone: `Fail` here still needs bootstrap
    /// confirmation when `eig_error_bound > 0`.
    pub verdict: Verdict,
}

/// Hermitizes `m` and compares its minimal eigenvalue with
/// `-tol - 5·eig_error_bound`.
pub fn psd_check(m: &DMatrix<Complex64>, tol: f64, eig_error_bound: f64) -> Result<PsdCheck> {
    linalg::require_square(m.nrows(), m.ncols())?;
    let (h, hermitian_defect) = linalg::hermitize(m);
    let min_eigenvalue = linalg::hermitian_eigenvalues(&h)
        .first()
        .copied()
        .unwrap_or(0.0);
    let verdict = if min_eigenvalue >= -tol - SIGMA_GATE * eig_error_bound {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(PsdCheck {
        min_eigenvalue,
        hermitian_defect,
        verdict,
    })
}

/// Gram matrix of characteristic-function values with its error model.
#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    /// Hermitized estimate of `ω̂(φ_m - θφ_n)`.
    pub matrix: DMatrix<Complex64>,
    pub stderr: DMatrix<f64>,
    pub min_eigenvalue: f64,
    /// `K · max stderr`.
    pub eig_error_bound: f64,
    pub verdict: Verdict,
    /// Independent replicates behind the stderr (outer draws for the
    /// factorized estimator).
    pub n_samples: usize,
    pub seed: u64,
    pub estimator_kind: EstimatorKind,
    /// `Σw / max w` for `w = exp F`; direct estimator only.
    pub effective_sample_size: Option<f64>,
    pub hermitian_defect: f64,
    /// Fraction of bootstrap replicates with a minimal eigenvalue below
    /// `-tol`, when a bootstrap was run.
    pub bootstrap_negative_fraction: Option<f64>,
    pub tolerance: f64,
}

impl GramReport {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn max_stderr(&self) -> f64 {
        linalg::max_abs(&self.stderr)
    }

    fn from_estimate(
        raw: &DMatrix<Complex64>,
        stderr: DMatrix<f64>,
        tol: f64,
        meta: (usize, u64, EstimatorKind),
        bootstrap: Option<&dyn Fn() -> f64>,
    ) -> Result<Self> {
        let k = raw.nrows();
        let eig_error_bound = k as f64 * linalg::max_abs(&stderr);
        let check = psd_check(raw, tol, eig_error_bound)?;
        let (verdict, bootstrap_negative_fraction) = match (check.verdict, bootstrap) {
            (Verdict::Pass, _) => (Verdict::Pass, None),
            (_, None) if eig_error_bound == 0.0 => (Verdict::Fail, None),
            (_, None) => (Verdict::Inconclusive, None),
            (_, Some(boot)) => {
                let fraction = boot();
                let verdict = if fraction >= BOOTSTRAP_STABILITY {
                    Verdict::Fail
                } else {
                    Verdict::Inconclusive
                };
                (verdict, Some(fraction))
            }
        };
        let (n_samples, seed, estimator_kind) = meta;
        Ok(Self {
            matrix: linalg::hermitize(raw).0,
            stderr,
            min_eigenvalue: check.min_eigenvalue,
            eig_error_bound,
            verdict,
            n_samples,
            seed,
            estimator_kind,
            effective_sample_size: None,
            hermitian_defect: check.hermitian_defect,
            bootstrap_negative_fraction,
            tolerance: tol,
        })
    }
}

#[derive(Serialize)]
struct GramReportJson<'a> {
    matrix_re: Vec<Vec<f64>>,
    matrix_im: Vec<Vec<f64>>,
    stderr: Vec<Vec<f64>>,
    min_eigenvalue: f64,
    eig_error_bound: f64,
    verdict: Verdict,
    n_samples: usize,
    seed: u64,
    estimator_kind: &'a EstimatorKind,
    effective_sample_size: Option<f64>,
}

fn rows<T: Copy>(m: &DMatrix<T>, f: impl Fn(T) -> f64) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| f(m[(i, j)])).collect())
        .collect()
}

impl Serialize for GramReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GramReportJson {
            matrix_re: rows(&self.matrix, |z| z.re),
            matrix_im: rows(&self.matrix, |z| z.im),
            stderr: rows(&self.stderr, |x| x),
            min_eigenvalue: self.min_eigenvalue,
            eig_error_bound: self.eig_error_bound,
            verdict: self.verdict,
            n_samples: self.n_samples,
            seed: self.seed,
            estimator_kind: &self.estimator_kind,
            effective_sample_size: self.effective_sample_size,
        }
        .serialize(serializer)
    }
}

/// `K` random test functions with standard normal entries on the positive
/// half, followed by the zero function. Deterministic in `seed`.
pub fn random_test_functions(lattice: &Lattice, k: usize, seed: u64) -> Vec<SiteVector> {
    let mut rng = rng::substream(seed, TEST_FUNCTION_STREAM);
    let mut phis: Vec<SiteVector> = (0..k)
        .map(|_| {
            let h: Vec<f64> = (0..lattice.half_count())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            lattice.embed_plus(&h).expect("half length matches")
        })
        .collect();
    phis.push(SiteVector::zeros(lattice.site_count()));
    phis
}

fn require_family(lattice: &Lattice, phis: &[SiteVector]) -> Result<()> {
    if phis.is_empty() {
        return Err(Error::InvalidParameter("need at least one test function".into()));
    }
    phis.iter()
        .try_for_each(|phi| lattice.require_positive_support(phi))
}

/// Exact Gaussian Gram matrix `exp(-½ (φ_m - θφ_n)ᵀ C (φ_m - θφ_n))`.
pub fn gram_exact_gaussian(
    c: &Covariance,
    lattice: &Lattice,
    phis: &[SiteVector],
    tol: f64,
) -> Result<GramReport> {
    require_family(lattice, phis)?;
    let reflected = phis
        .iter()
        .map(|phi| lattice.reflect(phi))
        .collect::<Result<Vec<_>>>()?;
    let k = phis.len();
    let mut m = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    for i in 0..k {
        for j in 0..k {
            let diff: Vec<f64> = phis[i].iter().zip(reflected[j].iter()).map(|(a, b)| a - b).collect();
            m[(i, j)] = Complex64::new(c.char_fn(&diff)?, 0.0);
        }
    }
    GramReport::from_estimate(
        &m,
        DMatrix::zeros(k, k),
        tol,
        (0, 0, EstimatorKind::ExactGaussian),
        None,
    )
}

/// Running sums for a Monte Carlo estimate of a complex `K×K` matrix.
#[derive(Debug, Clone)]
struct MatrixAccumulator {
    k: usize,
    count: usize,
    sum: Vec<Complex64>,
    sum_sq_re: Vec<f64>,
    sum_sq_im: Vec<f64>,
}

impl MatrixAccumulator {
    fn new(k: usize) -> Self {
        Self {
            k,
            count: 0,
            sum: vec![Complex64::new(0.0, 0.0); k * k],
            sum_sq_re: vec![0.0; k * k],
            sum_sq_im: vec![0.0; k * k],
        }
    }

    fn push(&mut self, entry: impl Fn(usize, usize) -> Complex64) {
        self.count += 1;
        for i in 0..self.k {
            for j in 0..self.k {
                let z = entry(i, j);
                let idx = i * self.k + j;
                self.sum[idx] += z;
                self.sum_sq_re[idx] += z.re * z.re;
                self.sum_sq_im[idx] += z.im * z.im;
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        self.count += other.count;
        for idx in 0..self.k * self.k {
            self.sum[idx] += other.sum[idx];
            self.sum_sq_re[idx] += other.sum_sq_re[idx];
            self.sum_sq_im[idx] += other.sum_sq_im[idx];
        }
    }

    fn mean(&self) -> DMatrix<Complex64> {
        let n = self.count as f64;
        DMatrix::from_fn(self.k, self.k, |i, j| self.sum[i * self.k + j] / n)
    }

    /// Standard error of each entry: `sqrt((var re + var im) / n)`.
    fn stderr(&self) -> DMatrix<f64> {
        let n = self.count as f64;
        DMatrix::from_fn(self.k, self.k, |i, j| {
            if self.count < 2 {
                return f64::INFINITY;
            }
            let idx = i * self.k + j;
            let mean = self.sum[idx] / n;
            let var_re = (self.sum_sq_re[idx] / n - mean.re * mean.re).max(0.0);
            let var_im = (self.sum_sq_im[idx] / n - mean.im * mean.im).max(0.0);
            ((var_re + var_im) / (n - 1.0)).sqrt()
        })
    }
}

/// Fraction of batch-bootstrap replicates whose hermitized mean has minimal
/// eigenvalue below `-tol`.
fn bootstrap_negative_fraction(batches: &[MatrixAccumulator], tol: f64, seed: u64) -> f64 {
    if batches.is_empty() {
        return 0.0;
    }
    let mut rng = rng::substream(seed, BOOTSTRAP_STREAM);
    let k = batches[0].k;
    let negative = (0..BOOTSTRAP_REPLICATES)
        .filter(|_| {
            let mut acc = MatrixAccumulator::new(k);
            for _ in 0..batches.len() {
                acc.merge(batches.choose(&mut rng).expect("nonempty"));
            }
            let (h, _) = linalg::hermitize(&acc.mean());
            linalg::hermitian_eigenvalues(&h)
                .first()
                .is_some_and(|&e| e < -tol)
        })
        .count();
    negative as f64 / BOOTSTRAP_REPLICATES as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest finite `F` for which `exp F` does not overflow.
const MAX_LOG_WEIGHT: f64 = 709.0;

/// Direct Monte Carlo estimate of `ω̂(φ_m - θφ_n)` for `ω = exp(F)·μ`:
/// the mean of `exp(i T(φ_m) - i T(θφ_n) + F(T))` over `T ~ μ`.
///
/// `ω` is not normalized. Splitting of `f` is not enforced.
pub fn gram_mc_direct(
    c: &Covariance,
    lattice: &Lattice,
    f: &Potential,
    phis: &[SiteVector],
    params: &McParams,
    tol: f64,
) -> Result<GramReport> {
    params.validate()?;
    require_family(lattice, phis)?;
    if let Some(site) = f.max_site() {
        if site >= lattice.site_count() {
            return Err(Error::SiteOutOfRange {
                site,
                site_count: lattice.site_count(),
            });
        }
    }
    let sampler = c.sampler()?;
    let reflected = phis
        .iter()
        .map(|phi| lattice.reflect(phi))
        .collect::<Result<Vec<_>>>()?;
    let k = phis.len();
    let seed = params.seed;

    struct Chunk {
        acc: MatrixAccumulator,
        weight_sum: f64,
        max_log_weight: f64,
    }

    let chunks = rng::map_chunks(params.n_samples, |chunk, count| {
        let mut rng = rng::substream(seed, chunk);
        let mut z = vec![0.0; sampler.noise_dim()];
        let mut t = vec![0.0; sampler.dim()];
        let mut u = vec![Complex64::new(0.0, 0.0); k];
        let mut v = vec![Complex64::new(0.0, 0.0); k];
        let mut out = Chunk {
            acc: MatrixAccumulator::new(k),
            weight_sum: 0.0,
            max_log_weight: f64::NEG_INFINITY,
        };
        for _ in 0..count {
            sampler.draw_into(&mut rng, &mut z, &mut t);
            let log_w = f.eval_unchecked(&t);
            out.max_log_weight = out.max_log_weight.max(log_w);
            if log_w.is_nan() {
                out.max_log_weight = f64::NAN;
            }
            let w = log_w.exp();
            out.weight_sum += w;
            for m in 0..k {
                u[m] = Complex64::from_polar(w, dot(&t, &phis[m]));
                v[m] = Complex64::from_polar(1.0, -dot(&t, &reflected[m]));
            }
            out.acc.push(|m, n| u[m] * v[n]);
        }
        out
    });

    let max_log_weight = chunks
        .iter()
        .map(|c| c.max_log_weight)
        .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) });
    if max_log_weight.is_nan() || max_log_weight > MAX_LOG_WEIGHT {
        return Err(Error::IllConditionedWeights { max_log_weight });
    }
    let mut total = MatrixAccumulator::new(k);
    let mut weight_sum = 0.0;
    for chunk in &chunks {
        total.merge(&chunk.acc);
        weight_sum += chunk.weight_sum;
    }
    let batches: Vec<MatrixAccumulator> = chunks.into_iter().map(|c| c.acc).collect();
    let boot = || bootstrap_negative_fraction(&batches, tol, seed);
    let mut report = GramReport::from_estimate(
        &total.mean(),
        total.stderr(),
        tol,
        (params.n_samples, seed, EstimatorKind::McDirect),
        Some(&boot),
    )?;
    report.effective_sample_size = Some(weight_sum / max_log_weight.exp());
    Ok(report)
}

/// Factorized estimate `M_mn = E_Q[conj(Ĥ_m(L)) Ĥ_n(L)]` with
/// `Ĥ_m(L)` the inner average of `exp(-i (T+L)(h_m) + G(T+L))` over
/// `T ~ P`, `h_m = π₊φ_m`.
///
/// With `share_inner` every outer draw contributes the rank-one matrix
/// `Ĥ†Ĥ`, so the estimate is PSD for any sample at `O(1/n_inner)` bias.
/// Otherwise the two factors come from independent inner samples, which is
/// unbiased but not PSD by construction.
pub fn gram_mc_factorized(
    c: &Covariance,
    lattice: &Lattice,
    g: &Potential,
    phis: &[SiteVector],
    params: &McParams,
    tol: f64,
) -> Result<GramReport> {
    params.validate()?;
    require_family(lattice, phis)?;
    let half = lattice.half_count();
    if let Some(site) = g.max_site() {
        if site >= half {
            return Err(Error::SiteOutOfRange {
                site,
                site_count: half,
            });
        }
    }
    let pq = decompose_pq(c, lattice);
    if !pq.q_report.passed {
        return Err(Error::NoFactorization(format!(
            "Q covariance is not PSD (min eigenvalue {:e})",
            pq.q_report.min_eigenvalue
        )));
    }
    if !pq.p_report.passed {
        return Err(Error::NoFactorization(format!(
            "P covariance is not PSD (min eigenvalue {:e})",
            pq.p_report.min_eigenvalue
        )));
    }
    let p_sampler = GaussianSampler::new(&pq.c_p, c.psd_tolerance())?;
    let q_sampler = GaussianSampler::new(&pq.c_q, c.psd_tolerance())?;
    let halves = phis
        .iter()
        .map(|phi| lattice.restrict_plus(phi))
        .collect::<Result<Vec<_>>>()?;
    let k = phis.len();
    let seed = params.seed;
    let n_inner = params.n_inner;
    let copies = if params.share_inner { 1 } else { 2 };

    let batches = rng::map_chunks_sized(params.n_outer, FACTORIZED_CHUNK, |chunk, count| {
        let mut rng = rng::substream(seed, chunk);
        let mut zq = vec![0.0; q_sampler.noise_dim()];
        let mut zp = vec![0.0; p_sampler.noise_dim()];
        let mut l = vec![0.0; half];
        let mut t = vec![0.0; half];
        let mut h = vec![vec![Complex64::new(0.0, 0.0); k]; copies];
        let mut acc = MatrixAccumulator::new(k);
        for _ in 0..count {
            q_sampler.draw_into(&mut rng, &mut zq, &mut l);
            for est in h.iter_mut() {
                est.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
                for _ in 0..n_inner {
                    p_sampler.draw_into(&mut rng, &mut zp, &mut t);
                    for (ti, li) in t.iter_mut().zip(&l) {
                        *ti += li;
                    }
                    let w = g.eval_unchecked(&t).exp();
                    for (x, hm) in est.iter_mut().zip(&halves) {
                        *x += Complex64::from_polar(w, -dot(&t, hm));
                    }
                }
                est.iter_mut().for_each(|x| *x /= n_inner as f64);
            }
            let (left, right) = (&h[0], &h[copies - 1]);
            acc.push(|m, n| left[m].conj() * right[n]);
        }
        acc
    });
    let mut total = MatrixAccumulator::new(k);
    for b in &batches {
        total.merge(b);
    }
    let kind = if params.share_inner {
        EstimatorKind::McFactorizedShared
    } else {
        EstimatorKind::McFactorizedIndependent
    };
    let boot = || bootstrap_negative_fraction(&batches, tol, seed);
    GramReport::from_estimate(
        &total.mean(),
        total.stderr(),
        tol,
        (params.n_outer, seed, kind),
        Some(&boot),
    )
}

/// Entrywise agreement of two Gram estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub passed: bool,
    pub max_abs_difference: f64,
    /// Largest `|Δ| / (5·(combined stderr + bias allowance))`; ≤ 1 passes.
    pub max_ratio: f64,
    pub bias_allowance: f64,
}

/// Checks `|a - b| ≤ 5·(sqrt(se_a² + se_b²) + bias_allowance)` entrywise.
pub fn compare_grams(a: &GramReport, b: &GramReport, bias_allowance: f64) -> Result<Agreement> {
    if a.size() != b.size() {
        return Err(Error::ShapeMismatch(format!(
            "gram sizes differ: {} vs {}",
            a.size(),
            b.size()
        )));
    }
    let mut max_abs_difference: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;
    for i in 0..a.size() {
        for j in 0..a.size() {
            let d = (a.matrix[(i, j)] - b.matrix[(i, j)]).norm();
            let se = a.stderr[(i, j)].hypot(b.stderr[(i, j)]);
            let allowed = SIGMA_GATE * (se + bias_allowance);
            max_abs_difference = max_abs_difference.max(d);
            let ratio = if allowed > 0.0 {
                d / allowed
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_ratio = max_ratio.max(ratio);
        }
    }
    Ok(Agreement {
        passed: max_ratio <= 1.0,
        max_abs_difference,
        max_ratio,
        bias_allowance,
    })
}

/// Entrywise (Schur/Hadamard) product.
pub fn schur_product<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>>
where
    T: nalgebra::Scalar + Copy + std::ops::Mul<Output = T>,
{
    linalg::require_square(a.nrows(), a.ncols())?;
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.zip_map(b, |x, y| x * y))
}

/// Both sides of `c†(A∘B)c = Σ_a λ_a (u_a∘c)† A (u_a∘c)`, where
/// `B = Σ_a λ_a u_a u_aᵀ` is the eigendecomposition of the real symmetric
/// `B`. Returns `(direct, via eigendecomposition)`.
pub fn schur_diagonalization_identity(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &[Complex64],
) -> Result<(f64, f64)> {
    let product = schur_product(a, b)?;
    if c.len() != a.nrows() {
        return Err(Error::LengthMismatch {
            expected: a.nrows(),
            actual: c.len(),
        });
    }
    let form = |m: &DMatrix<f64>, x: &[Complex64]| -> f64 {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..x.len() {
            for j in 0..x.len() {
                s += x[i].conj() * m[(i, j)] * x[j];
            }
        }
        s.re
    };
    let direct = form(&product, c);
    let eig = SymmetricEigen::new(b.clone());
    let mut via = 0.0;
    for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
        let scaled: Vec<Complex64> = c
            .iter()
            .enumerate()
            .map(|(i, &ci)| ci * eig.eigenvectors[(i, col)])
            .collect();
        via += lambda * form(a, &scaled);
    }
    Ok((direct, via))
}

/// `λ⁻² Σ_mn c_m* μ̂(ψ_m - θψ_n) c_n` with `ψ = (λφ, 0)` and
/// `c = (λ⁻¹, -λ⁻¹)`, for each `λ`. Tends to `(φ, θφ)` as `λ → 0`.
pub fn small_lambda_probe(
    c: &Covariance,
    lattice: &Lattice,
    phi: &[f64],
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    lattice.require_positive_support(phi)?;
    let reflected = lattice.reflect(phi)?;
    lambdas
        .iter()
        .map(|&lambda| {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "probe scale must be positive, got {lambda}"
                )));
            }
            let psi: Vec<f64> = phi.iter().map(|x| lambda * x).collect();
            let theta_psi: Vec<f64> = reflected.iter().map(|x| lambda * x).collect();
            let diff: Vec<f64> = psi.iter().zip(&theta_psi).map(|(a, b)| a - b).collect();
            let neg_theta: Vec<f64> = theta_psi.iter().map(|x| -x).collect();
            let g11 = c.char_fn(&diff)?;
            let g12 = c.char_fn(&psi)?;
            let g21 = c.char_fn(&neg_theta)?;
            Ok((g11 - g12 - g21 + 1.0) / (lambda * lambda))
        })
        .collect()
}
