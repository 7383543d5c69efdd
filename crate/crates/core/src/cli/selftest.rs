//! Built-in oracle suite: closed forms on two sites, the Schur product
//! battery and small-scale probe convergence.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::Tolerances;
use super::report::{gate, pass_fail, Checks, Command, Reason, ReportConfig, RunReport};
use super::CliError;
use crate::density::{phi4, split_check, Potential, Term, ViolationReason};
use crate::gaussian::{
    check_gaussian_rp_with, check_theta_invariance, decompose_pq_with, free_field_covariance,
    plus_block, Covariance,
};
use crate::lattice::{Lattice, SiteVector};
use crate::linalg;
use crate::rng::substream;
use crate::rp_verify::{
    gram_exact_gaussian, schur_diagonalization_identity, schur_product, small_lambda_probe,
    Verdict,
};

pub const SCHUR_PAIRS: usize = 200;
pub const PROBE_LAMBDAS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
/// Successive probe errors must shrink by a factor within 4 ± 20%.
pub const PROBE_RATIO_WINDOW: (f64, f64) = (3.2, 4.8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SelftestConfig {
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub expected: f64,
    pub deviation: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    fn close(name: &str, value: f64, expected: f64, tolerance: f64) -> Self {
        let deviation = (value - expected).abs();
        Self {
            name: name.into(),
            passed: deviation <= tolerance,
            value,
            expected,
            deviation,
            tolerance,
        }
    }

    fn and(mut self, condition: bool) -> Self {
        self.passed &= condition;
        self
    }
}

fn two_site(c: f64) -> (Lattice, Covariance) {
    let lat = Lattice::new(1, &[]).expect("valid lattice");
    let cov = Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0]), 0.0)
        .expect("|c| < 1 is positive definite");
    (lat, cov)
}

fn gram_determinant(c: f64, tol: &Tolerances) -> Result<OracleCheck, CliError> {
    let (lat, cov) = two_site(c);
    let phis = vec![SiteVector(vec![0.0, 1.0]), SiteVector(vec![0.0, 0.0])];
    let g = gram_exact_gaussian(&cov, &lat, &phis, tol.psd_tol)?;
    let m = &g.matrix;
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
    let expected = (-(1.0 - c)).exp() - (-1.0f64).exp();
    let want = if c >= 0.0 { Verdict::Pass } else { Verdict::Fail };
    Ok(OracleCheck::close(&format!("gram_determinant_c={c}"), det, expected, tol.oracle_tol)
        .and(g.verdict == want))
}

fn random_psd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let rank = rng.random_range(1..=n);
    let g = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    &g * g.transpose()
}

/// Worst `min eig(A∘B) / (‖A‖‖B‖)` over random PSD pairs, some of low rank.
fn schur_battery(seed: u64, tol: &Tolerances) -> Result<OracleCheck, CliError> {
    let mut rng = substream(seed, 0);
    let mut worst = f64::INFINITY;
    for _ in 0..SCHUR_PAIRS {
        let n = rng.random_range(1..=8);
        let a = random_psd(&mut rng, n);
        let b = random_psd(&mut rng, n);
        let scale = linalg::spectral_norm(&a) * linalg::spectral_norm(&b);
        let min = linalg::min_eigenvalue(&schur_product(&a, &b)?);
        worst = worst.min(min / scale);
    }
    let mut check = OracleCheck::close("schur_battery", worst, 0.0, f64::INFINITY);
    check.deviation = (-worst).max(0.0);
    check.tolerance = tol.psd_tol;
    check.passed = worst >= -tol.psd_tol;
    Ok(check)
}

fn schur_identity(seed: u64, tol: &Tolerances) -> Result<OracleCheck, CliError> {
    let mut rng = substream(seed, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..SCHUR_PAIRS {
        let n = rng.random_range(1..=8);
        let a = random_psd(&mut rng, n);
        let b = random_psd(&mut rng, n);
        let c: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let (direct, via) = schur_diagonalization_identity(&a, &b, &c)?;
        let norm2: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        let scale = linalg::spectral_norm(&a) * linalg::spectral_norm(&b) * norm2;
        worst = worst.max((direct - via).abs() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(OracleCheck::close("schur_identity", worst, 0.0, tol.oracle_tol))
}

fn probe_checks(tol: &Tolerances) -> Result<Vec<OracleCheck>, CliError> {
    let (lat, cov) = two_site(0.5);
    let phi = [0.0, 1.0];
    let single = small_lambda_probe(&cov, &lat, &phi, &[0.1])?[0];
    let closed = (1.0 - (-0.005f64).exp()) / 0.01;
    let mut out = vec![OracleCheck::close("probe_lambda_0.1", single, closed, tol.oracle_tol)];

    let values = small_lambda_probe(&cov, &lat, &phi, &PROBE_LAMBDAS)?;
    let errors: Vec<f64> = values.iter().map(|v| (v - 0.5).abs()).collect();
    for (i, w) in errors.windows(2).enumerate() {
        let ratio = w[0] / w[1];
        let (lo, hi) = PROBE_RATIO_WINDOW;
        let mut check = OracleCheck::close(
            &format!("probe_ratio_{}_{}", PROBE_LAMBDAS[i], PROBE_LAMBDAS[i + 1]),
            ratio,
            4.0,
            hi - 4.0,
        );
        check.passed = (lo..=hi).contains(&ratio);
        out.push(check);
    }
    Ok(out)
}

fn free_field_checks(tol: &Tolerances) -> Result<Vec<OracleCheck>, CliError> {
    let lat = Lattice::new(1, &[])?;
    let c = free_field_covariance(&lat, 1.0)?;
    let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]) / 3.0;
    let dev = linalg::max_abs(&(c.matrix() - &expected));
    let mut out = vec![OracleCheck::close("two_site_free_field", dev, 0.0, tol.oracle_tol)];

    let lat = Lattice::new(4, &[8])?;
    let c = free_field_covariance(&lat, 0.5)?;
    let inv = check_theta_invariance(&c, &lat, tol.invariance_tol);
    out.push(OracleCheck::close("free_field_invariance", inv.deviation, 0.0, inv.threshold));
    let rp = check_gaussian_rp_with(&c, &lat, tol.psd_tol, tol.invariance_tol);
    let mut check = OracleCheck::close(
        "free_field_rp",
        rp.cross_block.min_eigenvalue,
        0.0,
        rp.cross_block.threshold,
    );
    check.passed = rp.passed;
    out.push(check);

    let pq = decompose_pq_with(&c, &lat, tol.psd_tol);
    let exact = (&pq.c_p + &pq.c_q) == plus_block(&c, &lat);
    out.push(OracleCheck::close("decomposition_sum", 0.0, 0.0, 0.0).and(exact && pq.passed()));

    let (lat2, c2) = two_site(-0.5);
    let rp = check_gaussian_rp_with(&c2, &lat2, tol.psd_tol, tol.invariance_tol);
    out.push(
        OracleCheck::close("cross_block_c=-0.5", rp.cross_block.min_eigenvalue, -0.5, tol.oracle_tol)
            .and(!rp.passed),
    );
    Ok(out)
}

fn split_checks(tol: &Tolerances) -> Result<Vec<OracleCheck>, CliError> {
    let lat = Lattice::new(2, &[4])?;
    let flag = |name: &str, ok: bool| OracleCheck::close(name, 0.0, 0.0, tol.oracle_tol).and(ok);
    let split = split_check(&lat, &phi4(&lat, 0.1)?);
    let mut out = vec![flag("split_phi4", split.is_splitting && split.witness_g.is_some())];

    let minus = lat.index_of(&[-1, 0])?;
    let plus = lat.index_of(&[1, 0])?;
    let reason = |p: Potential| {
        let r = split_check(&lat, &p);
        (!r.is_splitting).then(|| r.violations.first().map(|v| v.reason)).flatten()
    };
    let cross = Potential::new(vec![Term::new(0.3, vec![(minus, 1), (plus, 1)])], 0.0);
    out.push(flag(
        "split_cross_plane",
        reason(cross) == Some(ViolationReason::MixedSupport),
    ));
    let one_sided = Potential::new(vec![Term::new(-1.0, vec![(plus, 4)])], 0.0);
    out.push(flag(
        "split_plus_only",
        reason(one_sided) == Some(ViolationReason::UnmatchedMirror),
    ));
    Ok(out)
}

/// Runs every oracle; a run passes iff every oracle does.
pub fn run(config: SelftestConfig) -> Result<RunReport, CliError> {
    let tol = config.tolerances;
    let mut oracles = free_field_checks(&tol)?;
    oracles.push(gram_determinant(0.5, &tol)?);
    oracles.push(gram_determinant(-0.5, &tol)?);
    oracles.extend(probe_checks(&tol)?);
    oracles.push(schur_battery(config.seed, &tol)?);
    oracles.push(schur_identity(config.seed, &tol)?);
    oracles.extend(split_checks(&tol)?);

    let gates = oracles
        .iter()
        .map(|o| {
            (
                gate(
                    &o.name,
                    pass_fail(o.passed),
                    format!("value {:.6e}, expected {:.6e}, tol {:.1e}", o.value, o.expected, o.tolerance),
                ),
                Reason::OracleMismatch,
            )
        })
        .collect();
    let checks = Checks {
        oracles: Some(oracles),
        ..Checks::default()
    };
    Ok(RunReport::new(
        Command::Selftest,
        ReportConfig::Selftest(config),
        gates,
        checks,
    ))
}
