//! The verification pipelines behind each subcommand.

use super::config::Experiment;
use super::report::{
    gate, pass_fail, Checks, Command, DecompositionSummary, Gate, GateStatus, GramDiagnostics,
    Reason, ReportConfig, RunReport, SplitSummary,
};
use super::CliError;
use crate::density::split_check;
use crate::error::Error;
use crate::gaussian::{
    check_gaussian_rp_with, check_theta_invariance, decompose_pq_with, plus_block,
    verify_convolution_identity, Covariance,
};
use crate::rp_verify::{compare_grams, gram_mc_direct, gram_mc_factorized, GramReport};

fn covariance(exp: &Experiment) -> Result<&Covariance, CliError> {
    exp.covariance
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a covariance".into()))
}

fn finish(command: Command, exp: &Experiment, gates: Vec<(Gate, Reason)>, checks: Checks) -> RunReport {
    RunReport::new(
        command,
        ReportConfig::Experiment(Box::new(exp.config.clone())),
        gates,
        checks,
    )
}

struct GaussianGates {
    gates: Vec<(Gate, Reason)>,
    passed: bool,
}

fn gaussian_gates(exp: &Experiment, c: &Covariance, checks: &mut Checks) -> GaussianGates {
    let tol = exp.tolerances;
    let inv = check_theta_invariance(c, &exp.lattice, tol.invariance_tol);
    let rp = check_gaussian_rp_with(c, &exp.lattice, tol.psd_tol, tol.invariance_tol);
    let gates = vec![
        (
            gate(
                "theta_invariance",
                pass_fail(inv.passed),
                format!("deviation {:.3e} (threshold {:.3e})", inv.deviation, inv.threshold),
            ),
            Reason::NotThetaInvariant,
        ),
        (
            gate(
                "gaussian_rp",
                pass_fail(rp.passed),
                format!(
                    "cross block min eigenvalue {:.6e} (threshold -{:.3e})",
                    rp.cross_block.min_eigenvalue, rp.cross_block.threshold
                ),
            ),
            Reason::NegativeCrossBlock,
        ),
    ];
    checks.theta_invariance = Some(inv);
    checks.gaussian_rp = Some(rp);
    GaussianGates {
        gates,
        passed: rp.passed,
    }
}

fn decomposition_gate(exp: &Experiment, c: &Covariance, checks: &mut Checks) -> ((Gate, Reason), crate::gaussian::PqPair) {
    let pq = decompose_pq_with(c, &exp.lattice, exp.tolerances.psd_tol);
    let summary = DecompositionSummary::new(&pq, &plus_block(c, &exp.lattice));
    let g = gate(
        "decomposition",
        pass_fail(summary.passed && summary.sum_exact),
        format!(
            "min eig P {:.6e}, Q {:.6e}, exact sum {}",
            summary.p_report.min_eigenvalue, summary.q_report.min_eigenvalue, summary.sum_exact
        ),
    );
    checks.decomposition = Some(summary);
    ((g, Reason::DecompositionFailed), pq)
}

pub fn check_gaussian(exp: &Experiment) -> Result<RunReport, CliError> {
    let c = covariance(exp)?;
    let mut checks = Checks::default();
    let mut gates = gaussian_gates(exp, c, &mut checks).gates;
    gates.push(decomposition_gate(exp, c, &mut checks).0);
    let conv = verify_convolution_identity(
        c,
        &exp.lattice,
        exp.tolerances.oracle_tol,
        exp.config.convolution_samples,
        exp.mc.seed,
    )?;
    gates.push((
        gate(
            "convolution_identity",
            pass_fail(conv.passed),
            format!(
                "algebraic deviation {:.3e}, max z-score {:.2} over {} samples",
                conv.algebraic_deviation, conv.max_z_score, conv.n_samples
            ),
        ),
        Reason::ConvolutionMismatch,
    ));
    checks.convolution = Some(conv);
    Ok(finish(Command::CheckGaussian, exp, gates, checks))
}

fn split_gate(exp: &Experiment, checks: &mut Checks) -> Result<((Gate, Reason), Option<crate::density::Potential>), CliError> {
    let f = exp
        .density
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a density".into()))?;
    let split = split_check(&exp.lattice, f);
    let summary = SplitSummary::new(&exp.lattice, &split);
    let detail = if split.is_splitting {
        "witness found".to_string()
    } else {
        let reasons: Vec<String> = summary
            .violations
            .iter()
            .map(|v| serde_json::to_value(v.reason).expect("reason serializes").as_str().unwrap_or("").to_string())
            .collect();
        format!("{} violation(s): {}", reasons.len(), reasons.join(", "))
    };
    checks.split = Some(summary);
    Ok((
        (gate("split", pass_fail(split.is_splitting), detail), Reason::NotSplitting),
        split.witness_g,
    ))
}

pub fn check_density(exp: &Experiment) -> Result<RunReport, CliError> {
    let mut checks = Checks::default();
    let (g, _) = split_gate(exp, &mut checks)?;
    Ok(finish(Command::CheckDensity, exp, vec![g], checks))
}

fn gram_detail(g: &GramReport) -> String {
    format!(
        "min eigenvalue {:.6e}, error bound {:.3e}",
        g.min_eigenvalue, g.eig_error_bound
    )
}

fn skipped(name: &str, why: &str) -> (Gate, Reason) {
    (gate(name, GateStatus::Skipped, why), Reason::StableFail)
}

pub fn verify_rp(exp: &Experiment) -> Result<RunReport, CliError> {
    let c = covariance(exp)?;
    if exp.density.is_none() {
        return Err(CliError::Config("verify-rp needs a density".into()));
    }
    let mut checks = Checks {
        coverage: Some(format!(
            "verified for K = {} test functions",
            exp.test_functions.len()
        )),
        ..Checks::default()
    };
    let later = ["split", "decomposition", "gram_direct", "gram_factorized", "estimator_agreement"];

    let gaussian = gaussian_gates(exp, c, &mut checks);
    let mut gates = gaussian.gates;
    if !gaussian.passed {
        gates.extend(later.iter().map(|n| skipped(n, "gaussian gate failed")));
        return Ok(finish(Command::VerifyRp, exp, gates, checks));
    }

    let (split, witness) = split_gate(exp, &mut checks)?;
    gates.push(split);
    let Some(witness) = witness else {
        gates.extend(later[1..].iter().map(|n| skipped(n, "split gate failed")));
        return Ok(finish(Command::VerifyRp, exp, gates, checks));
    };

    let (decomposition, _) = decomposition_gate(exp, c, &mut checks);
    let decomposed = decomposition.0.status == GateStatus::Pass;
    gates.push(decomposition);

    let f = exp.density.as_ref().expect("checked above");
    let tol = exp.tolerances.psd_tol;
    let direct = match gram_mc_direct(c, &exp.lattice, f, &exp.test_functions, &exp.mc, tol) {
        Ok(g) => g,
        Err(Error::IllConditionedWeights { max_log_weight }) => {
            gates.push((
                gate(
                    "gram_direct",
                    GateStatus::Fail,
                    format!("exp(F) overflows (max F = {max_log_weight:e})"),
                ),
                Reason::IllConditionedWeights,
            ));
            gates.extend(later[3..].iter().map(|n| skipped(n, "ill-conditioned weights")));
            return Ok(finish(Command::VerifyRp, exp, gates, checks));
        }
        Err(e) => return Err(e.into()),
    };
    gates.push((
        gate("gram_direct", direct.verdict.into(), gram_detail(&direct)),
        Reason::StableFail,
    ));

    if decomposed {
        let factorized = gram_mc_factorized(c, &exp.lattice, &witness, &exp.test_functions, &exp.mc, tol)?;
        gates.push((
            gate("gram_factorized", factorized.verdict.into(), gram_detail(&factorized)),
            Reason::StableFail,
        ));
        let agreement = compare_grams(&direct, &factorized, 2.0 / exp.mc.n_inner as f64)?;
        gates.push((
            gate(
                "estimator_agreement",
                pass_fail(agreement.passed),
                format!(
                    "max |difference| {:.3e}, max ratio {:.3}",
                    agreement.max_abs_difference, agreement.max_ratio
                ),
            ),
            Reason::EstimatorDisagreement,
        ));
        checks.gram_factorized_diagnostics = Some(GramDiagnostics::from(&factorized));
        checks.gram_factorized = Some(factorized);
        checks.estimator_agreement = Some(agreement);
    } else {
        gates.extend(later[3..].iter().map(|n| skipped(n, "decomposition failed")));
    }
    checks.gram_direct_diagnostics = Some(GramDiagnostics::from(&direct));
    checks.gram_direct = Some(direct);
    Ok(finish(Command::VerifyRp, exp, gates, checks))
}
