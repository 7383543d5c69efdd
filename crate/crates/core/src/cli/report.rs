//! Machine-readable run reports.

use serde::Serialize;

use super::config::ExperimentConfig;
use super::selftest::SelftestConfig;
use super::selftest::OracleCheck;
use crate::density::{PotentialSpec, SplitResult, TermSpec, ViolationReason};
use crate::gaussian::{ConvolutionReport, GaussianRpReport, InvarianceReport, PqPair, PsdReport};
use crate::lattice::Lattice;
use crate::rp_verify::{Agreement, GramReport, Verdict};

pub const TOOL_NAME: &str = "rpcheck";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckGaussian,
    CheckDensity,
    VerifyRp,
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => super::EXIT_PASS,
            Outcome::Fail => super::EXIT_FAIL,
        }
    }
}

/// Why a run failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    NotThetaInvariant,
    NegativeCrossBlock,
    DecompositionFailed,
    ConvolutionMismatch,
    NotSplitting,
    IllConditionedWeights,
    StableFail,
    EstimatorDisagreement,
    OracleMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStatus {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

impl From<Verdict> for GateStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => GateStatus::Pass,
            Verdict::Fail => GateStatus::Fail,
            Verdict::Inconclusive => GateStatus::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub status: GateStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionSummary {
    pub passed: bool,
    pub p_report: PsdReport,
    pub q_report: PsdReport,
    /// `c_p + c_q == A` entrywise in floating point.
    pub sum_exact: bool,
}

impl DecompositionSummary {
    pub fn new(pq: &PqPair, a: &nalgebra::DMatrix<f64>) -> Self {
        Self {
            passed: pq.passed(),
            p_report: pq.p_report,
            q_report: pq.q_report,
            sum_exact: (&pq.c_p + &pq.c_q) == *a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationSummary {
    pub term: TermSpec,
    pub reason: ViolationReason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub is_splitting: bool,
    /// Sites are positive-time coordinates.
    pub witness_g: Option<PotentialSpec>,
    pub violations: Vec<ViolationSummary>,
}

impl SplitSummary {
    pub fn new(lattice: &Lattice, split: &SplitResult) -> Self {
        Self {
            is_splitting: split.is_splitting,
            witness_g: split
                .witness_g
                .as_ref()
                .map(|g| PotentialSpec::from_half_potential(lattice, g)),
            violations: split
                .violations
                .iter()
                .map(|v| ViolationSummary {
                    term: TermSpec::from_term(lattice, &v.term),
                    reason: v.reason,
                })
                .collect(),
        }
    }
}

/// Extra Gram diagnostics not part of the Gram report schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramDiagnostics {
    pub hermitian_defect: f64,
    pub bootstrap_negative_fraction: Option<f64>,
    pub tolerance: f64,
}

impl From<&GramReport> for GramDiagnostics {
    fn from(g: &GramReport) -> Self {
        Self {
            hermitian_defect: g.hermitian_defect,
            bootstrap_negative_fraction: g.bootstrap_negative_fraction,
            tolerance: g.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Checks {
    pub theta_invariance: Option<InvarianceReport>,
    pub gaussian_rp: Option<GaussianRpReport>,
    pub decomposition: Option<DecompositionSummary>,
    pub convolution: Option<ConvolutionReport>,
    pub split: Option<SplitSummary>,
    pub gram_direct: Option<GramReport>,
    pub gram_direct_diagnostics: Option<GramDiagnostics>,
    pub gram_factorized: Option<GramReport>,
    pub gram_factorized_diagnostics: Option<GramDiagnostics>,
    pub estimator_agreement: Option<Agreement>,
    /// Reflection positivity is only probed on a finite family.
    pub coverage: Option<String>,
    pub oracles: Option<Vec<OracleCheck>>,
}

/// Resolved configuration echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ReportConfig {
    Experiment(Box<ExperimentConfig>),
    Selftest(SelftestConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: ReportConfig,
    pub gates: Vec<Gate>,
    pub checks: Checks,
    pub verdict: Outcome,
    pub reason: Option<Reason>,
    pub exit_code: i32,
    pub wall_time_seconds: f64,
}

impl RunReport {
    /// Derives verdict, reason and exit code from the gates. The first
    /// failing gate names the reason.
    pub fn new(
        command: Command,
        config: ReportConfig,
        gates: Vec<(Gate, Reason)>,
        checks: Checks,
    ) -> Self {
        let reason = gates
            .iter()
            .find(|(g, _)| g.status == GateStatus::Fail)
            .map(|(_, r)| *r);
        let verdict = if reason.is_some() {
            Outcome::Fail
        } else {
            Outcome::Pass
        };
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command,
            config,
            gates: gates.into_iter().map(|(g, _)| g).collect(),
            checks,
            verdict,
            reason,
            exit_code: verdict.exit_code(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable summary for standard output.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for g in &self.gates {
            let status = match g.status {
                GateStatus::Pass => "PASS",
                GateStatus::Fail => "FAIL",
                GateStatus::Inconclusive => "INCONCLUSIVE",
                GateStatus::Skipped => "SKIPPED",
            };
            out.push_str(&format!("{status:<12} {:<24} {}\n", g.name, g.detail));
        }
        if let Some(c) = &self.checks.coverage {
            out.push_str(&format!("note: {c}\n"));
        }
        let verdict = match self.verdict {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
        };
        match self.reason {
            Some(r) => out.push_str(&format!(
                "verdict: {verdict} ({})\n",
                serde_json::to_value(r).expect("reason serializes").as_str().unwrap_or("")
            )),
            None => out.push_str(&format!("verdict: {verdict}\n")),
        }
        out
    }
}

pub fn gate(name: &str, status: GateStatus, detail: impl Into<String>) -> Gate {
    Gate {
        name: name.into(),
        status,
        detail: detail.into(),
    }
}

pub fn pass_fail(passed: bool) -> GateStatus {
    if passed {
        GateStatus::Pass
    } else {
        GateStatus::Fail
    }
}
