//! Centred Gaussian measures on a lattice.
//!
//! A centred Gaussian `μ` is identified with its covariance `C` through
//! `μ̂(φ) = exp(-½ φᵀCφ)`. For a θ-invariant `C` the measure is reflection
//! positive exactly when the cross block `B_xy = C(x, θy)` over positive-time
//! sites is positive semidefinite. With `A` the positive-time block of `C`,
//! the pair `(A - B, B)` gives the covariances of the measures `P` and `Q`
//! whose convolution `(P×P) * (Δ_*Q)` is the joint law of `(π₊T, π₊θT)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, SiteVector};
use crate::linalg;
use crate::rng;

/// Default relative tolerance for positive semidefiniteness.
pub const DEFAULT_PSD_TOLERANCE: f64 = 1e-10;
/// Default relative tolerance for θ-invariance of a covariance.
pub const DEFAULT_INVARIANCE_TOLERANCE: f64 = 1e-12;

/// Symmetric positive semidefinite covariance over lattice sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
    psd_tolerance: f64,
}

impl Covariance {
    /// Validates squareness, exact symmetry and positive semidefiniteness up
    /// to `psd_tolerance · max(1, ‖C‖₂)`.
    pub fn new(matrix: DMatrix<f64>, psd_tolerance: f64) -> Result<Self> {
        linalg::require_square(matrix.nrows(), matrix.ncols())?;
        if psd_tolerance.is_nan() || psd_tolerance < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "psd tolerance must be nonnegative, got {psd_tolerance}"
            )));
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let ev = linalg::symmetric_eigenvalues(&matrix);
        let norm = ev.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()));
        let threshold = psd_tolerance * norm.max(1.0);
        if let Some(&min) = ev.first() {
            if min < -threshold {
                return Err(Error::NotPositiveSemidefinite {
                    min_eigenvalue: min,
                    threshold,
                });
            }
        }
        Ok(Self {
            matrix,
            psd_tolerance,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn psd_tolerance(&self) -> f64 {
        self.psd_tolerance
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }

    /// The `L²(μ)` inner product `aᵀCb`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_len(a.len())?;
        self.check_len(b.len())?;
        let cb = &self.matrix * DVector::from_column_slice(b);
        Ok(a.iter().zip(cb.iter()).map(|(x, y)| x * y).sum())
    }

    /// Characteristic function `exp(-½ φᵀCφ)`.
    pub fn char_fn(&self, phi: &[f64]) -> Result<f64> {
        Ok((-0.5 * self.inner(phi, phi)?).exp())
    }

    /// Symmetric factor for drawing samples.
    pub fn sampler(&self) -> Result<GaussianSampler> {
        GaussianSampler::new(&self.matrix, self.psd_tolerance)
    }

    /// `n` independent draws from `N(0, C)`, a pure function of `(n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<FieldSample> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample count must be positive".into()));
        }
        let sampler = self.sampler()?;
        let chunks = rng::map_chunks(n, |k, count| {
            let mut rng = rng::substream(seed, k);
            let mut z = vec![0.0; sampler.noise_dim()];
            (0..count)
                .map(|_| {
                    let mut out = vec![0.0; sampler.dim()];
                    sampler.draw_into(&mut rng, &mut z, &mut out);
                    SiteVector(out)
                })
                .collect::<Vec<_>>()
        });
        let configs: Vec<SiteVector> = chunks.into_iter().flatten().collect();
        Ok(FieldSample {
            count: configs.len(),
            configs,
            seed,
        })
    }
}

/// Draws from `N(0, C)` as `F z` with `F Fᵀ = C` and `z` standard normal.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    /// Fails if `C` has an eigenvalue below `-tol · max(1, ‖C‖₂)`.
    pub fn new(c: &DMatrix<f64>, psd_tolerance: f64) -> Result<Self> {
        linalg::require_square(c.nrows(), c.ncols())?;
        let threshold = psd_tolerance * linalg::spectral_norm(c).max(1.0);
        Ok(Self {
            factor: linalg::psd_factor(c, threshold)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.factor.ncols()
    }

    /// Writes one draw into `out`, using `z` (length [`Self::noise_dim`]) as
    /// scratch.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self
                .factor
                .row(i)
                .iter()
                .zip(z.iter())
                .map(|(f, zj)| f * zj)
                .sum();
        }
    }
}

/// Independent field configurations drawn from a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub configs: Vec<SiteVector>,
    pub seed: u64,
    pub count: usize,
}

/// Covariance `(-Δ + m²)⁻¹` of the lattice free field.
///
/// Time edges join consecutive layers, including the layers `t = -1` and
/// `t = +1`; there are no edges past `±T`. Spatial edges are periodic.
pub fn free_field_covariance(lattice: &Lattice, mass: f64) -> Result<Covariance> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mass must be positive and finite, got {mass}"
        )));
    }
    let n = lattice.site_count();
    let mut op = DMatrix::from_diagonal_element(n, n, mass * mass);
    let mut link = |x: usize, y: usize| {
        op[(x, x)] += 1.0;
        op[(y, y)] += 1.0;
        op[(x, y)] -= 1.0;
        op[(y, x)] -= 1.0;
    };
    for x in 0..n {
        if let Some(y) = lattice.time_step(x, true) {
            link(x, y);
        }
        for axis in 0..lattice.spatial_extents().len() {
            link(x, lattice.space_step(x, axis, true));
        }
    }
    let inverse = op
        .cholesky()
        .ok_or_else(|| Error::Internal("lattice operator is not positive definite".into()))?
        .inverse();
    let symmetric = (&inverse + inverse.transpose()).scale(0.5);
    Covariance::new(symmetric, DEFAULT_PSD_TOLERANCE)
}

/// Outcome of the θ-invariance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub passed: bool,
    /// `max |C(θx, θy) - C(x, y)|`.
    pub deviation: f64,
    pub threshold: f64,
}

/// Passes iff `‖PθᵀCPθ - C‖_∞ ≤ tol · max(1, ‖C‖_∞)` (entrywise max norm).
pub fn check_theta_invariance(c: &Covariance, lattice: &Lattice, tol: f64) -> InvarianceReport {
    let m = c.matrix();
    let theta = lattice.theta_perm();
    let mut deviation: f64 = 0.0;
    if m.nrows() != theta.len() {
        deviation = f64::INFINITY;
    } else {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                deviation = deviation.max((m[(theta[i], theta[j])] - m[(i, j)]).abs());
            }
        }
    }
    let threshold = tol * linalg::max_abs(m).max(1.0);
    InvarianceReport {
        passed: deviation <= threshold,
        deviation,
        threshold,
    }
}

/// `A_xy = C(x, y)` for positive-time sites `x, y`.
pub fn plus_block(c: &Covariance, lattice: &Lattice) -> DMatrix<f64> {
    let h = lattice.half_count();
    let m = c.matrix();
    DMatrix::from_fn(h, h, |i, j| m[(lattice.plus_site(i), lattice.plus_site(j))])
}

/// `B_xy = C(x, θy)` for positive-time sites `x, y`.
pub fn cross_block(c: &Covariance, lattice: &Lattice) -> DMatrix<f64> {
    let inv = check_theta_invariance(c, lattice, DEFAULT_INVARIANCE_TOLERANCE);
    if !inv.passed {
        log::warn!(
            "covariance is not θ-invariant (deviation {:e}); cross block may be asymmetric",
            inv.deviation
        );
    }
    let h = lattice.half_count();
    let m = c.matrix();
    DMatrix::from_fn(h, h, |i, j| {
        let y = lattice.plus_site(j);
        m[(lattice.plus_site(i), lattice.theta(y))]
    })
}

/// Positive semidefiniteness verdict for a real symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub passed: bool,
    pub min_eigenvalue: f64,
    pub spectral_norm: f64,
    /// The verdict requires `min_eigenvalue ≥ -threshold`.
    pub threshold: f64,
}

impl PsdReport {
    /// Passes iff the minimal eigenvalue is at least `-tol · max(1, ‖M‖₂)`.
    /// Only the symmetric part of `m` is examined.
    pub fn of(m: &DMatrix<f64>, tol: f64) -> Self {
        let sym = (m + m.transpose()).scale(0.5);
        let ev = linalg::symmetric_eigenvalues(&sym);
        let min_eigenvalue = ev.first().copied().unwrap_or(0.0);
        let spectral_norm = ev.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()));
        let threshold = tol * spectral_norm.max(1.0);
        Self {
            passed: min_eigenvalue >= -threshold,
            min_eigenvalue,
            spectral_norm,
            threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpFailure {
    NotThetaInvariant,
    NegativeCrossBlock,
}

/// Exact Gaussian reflection-positivity verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRpReport {
    pub passed: bool,
    pub failure: Option<RpFailure>,
    pub invariance: InvarianceReport,
    pub cross_block: PsdReport,
}

/// Reflection positivity of a θ-invariant Gaussian: the cross block must be
/// positive semidefinite up to `tol · max(1, ‖B‖₂)`.
pub fn check_gaussian_rp(c: &Covariance, lattice: &Lattice, tol: f64) -> GaussianRpReport {
    check_gaussian_rp_with(c, lattice, tol, DEFAULT_INVARIANCE_TOLERANCE)
}

pub fn check_gaussian_rp_with(
    c: &Covariance,
    lattice: &Lattice,
    psd_tol: f64,
    invariance_tol: f64,
) -> GaussianRpReport {
    let invariance = check_theta_invariance(c, lattice, invariance_tol);
    let cross_block = PsdReport::of(&cross_block(c, lattice), psd_tol);
    let failure = if !invariance.passed {
        Some(RpFailure::NotThetaInvariant)
    } else if !cross_block.passed {
        Some(RpFailure::NegativeCrossBlock)
    } else {
        None
    };
    GaussianRpReport {
        passed: failure.is_none(),
        failure,
        invariance,
        cross_block,
    }
}

/// `(φ, θφ)_{L²(μ)} = hᵀBh` for a positive-support `φ` with half vector `h`.
pub fn theta_inner(c: &Covariance, lattice: &Lattice, phi: &[f64]) -> Result<f64> {
    c.check_len(phi.len())?;
    lattice.require_positive_support(phi)?;
    let h = DVector::from_vec(lattice.restrict_plus(phi)?.into_inner());
    let b = cross_block(c, lattice);
    Ok(h.dot(&(&b * &h)))
}

/// Covariances of `P` (`A - B`) and `Q` (`B`) over the positive half.
#[derive(Debug, Clone, PartialEq)]
pub struct PqPair {
    pub c_p: DMatrix<f64>,
    pub c_q: DMatrix<f64>,
    pub p_report: PsdReport,
    pub q_report: PsdReport,
}

impl PqPair {
    pub fn passed(&self) -> bool {
        self.p_report.passed && self.q_report.passed
    }
}

/// Splits `a` into `p + q == a` (floating-point sum) with `q` as close to
/// `b` as possible and `p` close to `a - b`.
///
/// `fl(a - b) + b` misses `a` by an ulp in tie cases, and sometimes no float
/// `p` at all satisfies `p + b == a`; then `q` absorbs the rounding error of
/// `p`, moving off `b` by at most an ulp of `a - b`.
fn exact_split(a: f64, b: f64) -> (f64, f64) {
    let p0 = a - b;
    if !(p0.is_finite() && b.is_finite()) {
        return (p0, b);
    }
    let (mut up, mut down) = (p0, p0);
    if p0 + b == a {
        return (p0, b);
    }
    for _ in 0..4 {
        up = up.next_up();
        down = down.next_down();
        if up + b == a {
            return (up, b);
        }
        if down + b == a {
            return (down, b);
        }
    }
    // a - p0 is exact whenever p0 and a are within a factor of two.
    let q = a - p0;
    if p0 + q == a {
        return (p0, q);
    }
    let q = a - (a - b).next_up();
    if (a - b).next_up() + q == a {
        return ((a - b).next_up(), q);
    }
    (p0, b)
}

/// Splits the positive-time block `A` into `(A - B) + B`, with
/// `c_p + c_q == A` exactly in floating point (see [`exact_split`]).
///
/// The pair is returned even when a block fails its PSD check; the failing
/// report is the diagnostic.
pub fn decompose_pq(c: &Covariance, lattice: &Lattice) -> PqPair {
    decompose_pq_with(c, lattice, c.psd_tolerance())
}

pub fn decompose_pq_with(c: &Covariance, lattice: &Lattice, tol: f64) -> PqPair {
    let a = plus_block(c, lattice);
    let b = cross_block(c, lattice);
    let split = a.zip_map(&b, exact_split);
    let c_p = split.map(|(p, _)| p);
    let c_q = split.map(|(_, q)| q);
    PqPair {
        p_report: PsdReport::of(&c_p, tol),
        q_report: PsdReport::of(&c_q, tol),
        c_p,
        c_q,
    }
}

/// Joint covariance `[[A, B], [B, A]]` of `(π₊T, π₊θT)`.
pub fn joint_covariance(c: &Covariance, lattice: &Lattice) -> DMatrix<f64> {
    let a = plus_block(c, lattice);
    let b = cross_block(c, lattice);
    let h = lattice.half_count();
    DMatrix::from_fn(2 * h, 2 * h, |i, j| {
        if (i < h) == (j < h) {
            a[(i % h, j % h)]
        } else {
            b[(i % h, j % h)]
        }
    })
}

/// Checks of the identity `Cov(π₊T, π₊θT) = diag(A-B, A-B) + [[B, B], [B, B]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub passed: bool,
    pub algebraic_passed: bool,
    /// Entrywise max deviation between the two sides of the block identity.
    pub algebraic_deviation: f64,
    pub sampling_passed: bool,
    pub n_samples: usize,
    pub seed: u64,
    /// Largest `|empirical - exact| / stderr` over joint covariance entries.
    pub max_z_score: f64,
    pub max_abs_deviation: f64,
}

/// Verifies the P/Q convolution structure of the joint law of `(π₊T, π₊θT)`
/// algebraically (to `tol`) and by sampling `n` draws of `μ` (5 stderr per
/// entry).
pub fn verify_convolution_identity(
    c: &Covariance,
    lattice: &Lattice,
    tol: f64,
    n: usize,
    seed: u64,
) -> Result<ConvolutionReport> {
    if n < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples".into()));
    }
    let h = lattice.half_count();
    let joint = joint_covariance(c, lattice);
    let pq = decompose_pq(c, lattice);
    let rebuilt = DMatrix::from_fn(2 * h, 2 * h, |i, j| {
        let diagonal = if (i < h) == (j < h) {
            pq.c_p[(i % h, j % h)]
        } else {
            0.0
        };
        diagonal + pq.c_q[(i % h, j % h)]
    });
    let algebraic_deviation = linalg::max_abs(&(&joint - &rebuilt));
    let algebraic_passed = algebraic_deviation <= tol;

    let sampler = c.sampler()?;
    let dim = 2 * h;
    let partials = rng::map_chunks(n, |k, count| {
        let mut rng = rng::substream(seed, k);
        let mut z = vec![0.0; sampler.noise_dim()];
        let mut t = vec![0.0; sampler.dim()];
        let mut y = vec![0.0; dim];
        let mut sum = vec![0.0; dim * dim];
        let mut sum_sq = vec![0.0; dim * dim];
        for _ in 0..count {
            sampler.draw_into(&mut rng, &mut z, &mut t);
            for i in 0..h {
                let x = lattice.plus_site(i);
                y[i] = t[x];
                y[h + i] = t[lattice.theta(x)];
            }
            for i in 0..dim {
                for j in i..dim {
                    let p = y[i] * y[j];
                    sum[i * dim + j] += p;
                    sum_sq[i * dim + j] += p * p;
                }
            }
        }
        (sum, sum_sq)
    });
    let mut sum = vec![0.0; dim * dim];
    let mut sum_sq = vec![0.0; dim * dim];
    for (s, q) in partials {
        for (acc, v) in sum.iter_mut().zip(s) {
            *acc += v;
        }
        for (acc, v) in sum_sq.iter_mut().zip(q) {
            *acc += v;
        }
    }
    let nf = n as f64;
    let mut max_z_score: f64 = 0.0;
    let mut max_abs_deviation: f64 = 0.0;
    let mut sampling_passed = true;
    for i in 0..dim {
        for j in i..dim {
            let mean = sum[i * dim + j] / nf;
            let var = ((sum_sq[i * dim + j] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
            let stderr = (var / nf).sqrt();
            let dev = (mean - joint[(i, j)]).abs();
            max_abs_deviation = max_abs_deviation.max(dev);
            if dev > 5.0 * stderr {
                sampling_passed = false;
            }
            if stderr > 0.0 {
                max_z_score = max_z_score.max(dev / stderr);
            } else if dev > 0.0 {
                max_z_score = f64::INFINITY;
            }
        }
    }
    Ok(ConvolutionReport {
        passed: algebraic_passed && sampling_passed,
        algebraic_passed,
        algebraic_deviation,
        sampling_passed,
        n_samples: n,
        seed,
        max_z_score,
        max_abs_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_site(c: f64) -> (Lattice, Covariance) {
        let lat = Lattice::new(1, &[]).unwrap();
        let cov = Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0]), 1e-10).unwrap();
        (lat, cov)
    }

    fn free_field_cases() -> Vec<(Lattice, f64)> {
        vec![
            (Lattice::new(1, &[]).unwrap(), 1.0),
            (Lattice::new(4, &[8]).unwrap(), 0.5),
            (Lattice::new(2, &[4, 4]).unwrap(), 1.0),
        ]
    }

    #[test]
    fn covariance_validation() {
        assert!(matches!(
            Covariance::new(DMatrix::zeros(2, 3), 1e-10),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]), 1e-10),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1e-10),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        assert!(Covariance::new(DMatrix::zeros(2, 2), 1e-10).is_ok());
    }

    #[test]
    fn free_field_two_sites_by_hand() {
        let lat = Lattice::new(1, &[]).unwrap();
        let c = free_field_covariance(&lat, 1.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]) / 3.0;
        assert_abs_diff_eq!(c.matrix(), &expected, epsilon = 1e-15);
    }

    #[test]
    fn free_field_operator_inverse() {
        let lat = Lattice::new(2, &[3]).unwrap();
        let c = free_field_covariance(&lat, 0.7).unwrap();
        // Independent stencil: (-Δ + m²)φ at x = (deg(x) + m²)φ_x - Σ_neighbours φ_y
        let n = lat.site_count();
        let mut op = DMatrix::<f64>::zeros(n, n);
        for x in 0..n {
            let t = lat.time_of(x);
            let mut deg = 0.0;
            for dt in [-1i64, 1] {
                let mut tn = t + dt;
                if tn == 0 {
                    tn += dt;
                }
                let mut coord = lat.coordinate(x);
                coord[0] = tn;
                if let Ok(y) = lat.index_of(&coord) {
                    op[(x, y)] -= 1.0;
                    deg += 1.0;
                }
            }
            for dx in [-1i64, 1] {
                let mut coord = lat.coordinate(x);
                coord[1] = (coord[1] + dx).rem_euclid(3);
                op[(x, lat.index_of(&coord).unwrap())] -= 1.0;
                deg += 1.0;
            }
            op[(x, x)] += deg + 0.49;
        }
        let id = &op * c.matrix();
        assert_abs_diff_eq!(id, DMatrix::identity(n, n), epsilon = 1e-12);
    }

    #[test]
    fn free_field_heavy_mass_limit() {
        let lat = Lattice::new(2, &[3]).unwrap();
        let m = 100.0;
        let c = free_field_covariance(&lat, m).unwrap();
        let diff = c.matrix() - DMatrix::identity(12, 12) / (m * m);
        assert!(linalg::max_abs(&diff) <= 1e-6);
    }

    #[test]
    fn free_field_rejects_bad_mass() {
        let lat = Lattice::new(1, &[]).unwrap();
        assert!(free_field_covariance(&lat, 0.0).is_err());
        assert!(free_field_covariance(&lat, -1.0).is_err());
        assert!(free_field_covariance(&lat, f64::NAN).is_err());
    }

    #[test]
    fn free_field_is_invariant_and_reflection_positive() {
        for (lat, m) in free_field_cases() {
            let c = free_field_covariance(&lat, m).unwrap();
            assert!(check_theta_invariance(&c, &lat, 1e-12).passed);
            let rp = check_gaussian_rp(&c, &lat, 1e-10);
            assert!(rp.passed, "{rp:?}");
            let b = cross_block(&c, &lat);
            assert!(linalg::max_abs(&(&b - b.transpose())) <= 1e-12);
        }
    }

    #[test]
    fn free_field_cross_block_min_eigenvalue() {
        let lat = Lattice::new(4, &[8]).unwrap();
        let c = free_field_covariance(&lat, 0.5).unwrap();
        let b = cross_block(&c, &lat);
        assert!(linalg::min_eigenvalue(&b) >= -1e-10);
    }

    #[test]
    fn char_fn_examples() {
        let (_, c) = two_site(0.3);
        assert_eq!(c.char_fn(&[0.0, 0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(c.char_fn(&[0.0, 1.0]).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        let (_, c) = two_site(0.5);
        assert_abs_diff_eq!(c.char_fn(&[1.0, -1.0]).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        assert!(c.char_fn(&[1.0]).is_err());
    }

    #[test]
    fn char_fn_symmetries() {
        let lat = Lattice::new(2, &[3]).unwrap();
        let c = free_field_covariance(&lat, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let phi: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
            let neg: Vec<f64> = phi.iter().map(|x| -x).collect();
            let v = c.char_fn(&phi).unwrap();
            assert!(v > 0.0 && v <= 1.0);
            assert_eq!(v, c.char_fn(&neg).unwrap());
            let r = lat.reflect(&phi).unwrap();
            assert_abs_diff_eq!(v, c.char_fn(&r).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn theta_invariance_examples() {
        let lat = Lattice::new(2, &[2]).unwrap();
        let id = Covariance::new(DMatrix::identity(8, 8), 0.0).unwrap();
        let r = check_theta_invariance(&id, &lat, 0.0);
        assert!(r.passed);
        assert_eq!(r.deviation, 0.0);

        let (lat2, _) = two_site(0.0);
        for c in [-0.9, -0.5, 0.0, 0.25, 1.0] {
            let (_, cov) = two_site(c);
            assert!(check_theta_invariance(&cov, &lat2, 0.0).passed);
        }
        let skew = Covariance::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]), 0.0).unwrap();
        let r = check_theta_invariance(&skew, &lat2, 1e-12);
        assert!(!r.passed);
        assert_eq!(r.deviation, 1.0);
    }

    #[test]
    fn cross_block_examples() {
        let (lat, c) = two_site(0.3);
        assert_eq!(cross_block(&c, &lat), DMatrix::from_element(1, 1, 0.3));
        let lat = Lattice::new(2, &[3]).unwrap();
        let id = Covariance::new(DMatrix::identity(12, 12), 0.0).unwrap();
        assert_eq!(cross_block(&id, &lat), DMatrix::zeros(6, 6));
    }

    #[test]
    fn gaussian_rp_two_site() {
        let (lat, c) = two_site(0.5);
        let r = check_gaussian_rp(&c, &lat, 1e-10);
        assert!(r.passed);
        assert_eq!(r.cross_block.min_eigenvalue, 0.5);

        let (lat, c) = two_site(-0.5);
        let r = check_gaussian_rp(&c, &lat, 1e-10);
        assert!(!r.passed);
        assert_eq!(r.failure, Some(RpFailure::NegativeCrossBlock));
        assert_eq!(r.cross_block.min_eigenvalue, -0.5);
    }

    #[test]
    fn gaussian_rp_reports_invariance_failure() {
        let lat = Lattice::new(1, &[]).unwrap();
        let skew = Covariance::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]), 0.0).unwrap();
        let r = check_gaussian_rp(&skew, &lat, 1e-10);
        assert_eq!(r.failure, Some(RpFailure::NotThetaInvariant));
    }

    #[test]
    fn theta_inner_examples() {
        let (lat, c) = two_site(0.5);
        assert_eq!(theta_inner(&c, &lat, &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(theta_inner(&c, &lat, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            theta_inner(&c, &lat, &[1.0, 1.0]),
            Err(Error::NotPositiveSupport { site: 0 })
        ));
    }

    #[test]
    fn theta_inner_nonnegative_and_matches_direct_pairing() {
        let lat = Lattice::new(4, &[8]).unwrap();
        let c = free_field_covariance(&lat, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let h: Vec<f64> = (0..lat.half_count()).map(|_| rng.sample(StandardNormal)).collect();
            let phi = lat.embed_plus(&h).unwrap();
            let v = theta_inner(&c, &lat, &phi).unwrap();
            assert!(v >= -1e-12);
            let direct = c.inner(&phi, &lat.reflect(&phi).unwrap()).unwrap();
            assert_abs_diff_eq!(v, direct, epsilon = 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn decompose_two_site() {
        let (lat, c) = two_site(0.5);
        let pq = decompose_pq(&c, &lat);
        assert_eq!(pq.c_p[(0, 0)], 0.5);
        assert_eq!(pq.c_q[(0, 0)], 0.5);
        assert!(pq.passed());

        let (lat, c) = two_site(-0.5);
        let pq = decompose_pq(&c, &lat);
        assert_eq!(pq.c_q[(0, 0)], -0.5);
        assert!(!pq.q_report.passed);
        assert!(pq.p_report.passed);

        let lat = Lattice::new(2, &[2]).unwrap();
        let id = Covariance::new(DMatrix::identity(8, 8), 0.0).unwrap();
        let pq = decompose_pq(&id, &lat);
        assert_eq!(pq.c_p, DMatrix::identity(4, 4));
        assert_eq!(pq.c_q, DMatrix::zeros(4, 4));
        assert!(pq.passed());
    }

    #[test]
    fn decompose_sums_exactly_and_satisfies_cauchy_schwarz() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (lat, m) in free_field_cases() {
            let c = free_field_covariance(&lat, m).unwrap();
            let pq = decompose_pq(&c, &lat);
            assert!(pq.passed());
            assert_eq!(&pq.c_p + &pq.c_q, plus_block(&c, &lat));
            for _ in 0..100 {
                let h = DVector::from_fn(lat.half_count(), |_, _| rng.sample(StandardNormal));
                assert!(h.dot(&(&pq.c_q * &h)) >= -1e-10);
                assert!(h.dot(&(&pq.c_p * &h)) >= -1e-10);
            }
        }
    }

    #[test]
    fn exact_split_recovers_minuend() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = a * rng.random_range(-3.0..3.0);
            let (p, q) = exact_split(a, b);
            assert_eq!(p + q, a, "a={a:e} b={b:e}");
            let scale = a.abs().max(b.abs());
            assert!((q - b).abs() <= 2.0 * f64::EPSILON * scale, "a={a:e} b={b:e} q={q:e}");
        }
        assert_eq!(exact_split(1.0, 0.5), (0.5, 0.5));
    }

    #[test]
    fn convolution_identity_two_site() {
        let (lat, c) = two_site(0.5);
        let r = verify_convolution_identity(&c, &lat, 1e-12, 100_000, 42).unwrap();
        assert!(r.algebraic_passed);
        assert_eq!(r.algebraic_deviation, 0.0);
        assert!(r.sampling_passed, "{r:?}");
    }

    #[test]
    fn convolution_identity_free_field() {
        let lat = Lattice::new(2, &[]).unwrap();
        let c = free_field_covariance(&lat, 0.5).unwrap();
        let r = verify_convolution_identity(&c, &lat, 1e-12, 100_000, 7).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sample_identity_variance() {
        let c = Covariance::new(DMatrix::identity(3, 3), 1e-10).unwrap();
        let n = 100_000;
        let s = c.sample(n, 1).unwrap();
        assert_eq!(s.count, n);
        let se = (2.0 / n as f64).sqrt();
        for i in 0..3 {
            let var = s.configs.iter().map(|t| t[i] * t[i]).sum::<f64>() / n as f64;
            assert!((var - 1.0).abs() <= 5.0 * se, "coordinate {i}: {var}");
        }
    }

    #[test]
    fn sample_zero_covariance() {
        let c = Covariance::new(DMatrix::zeros(4, 4), 1e-10).unwrap();
        let s = c.sample(100, 3).unwrap();
        assert!(s.configs.iter().all(|t| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn sample_is_deterministic() {
        let lat = Lattice::new(2, &[2]).unwrap();
        let c = free_field_covariance(&lat, 1.0).unwrap();
        let a = c.sample(3000, 17).unwrap();
        let b = c.sample(3000, 17).unwrap();
        assert_eq!(a, b);
        let other = c.sample(3000, 18).unwrap();
        assert_ne!(a.configs, other.configs);
        // Prefixes agree: draws depend only on (seed, chunk).
        let short = c.sample(1500, 17).unwrap();
        assert_eq!(short.configs[..], a.configs[..1500]);
    }

    #[test]
    fn sample_is_independent_of_thread_count() {
        let lat = Lattice::new(1, &[3]).unwrap();
        let c = free_field_covariance(&lat, 1.0).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| c.sample(5000, 4).unwrap());
        let parallel = c.sample(5000, 4).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn sample_rejects_indefinite_factor() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianSampler::new(&bad, 1e-10).is_err());
        let c = Covariance::new(DMatrix::identity(2, 2), 1e-10).unwrap();
        assert!(c.sample(0, 1).is_err());
    }
}
