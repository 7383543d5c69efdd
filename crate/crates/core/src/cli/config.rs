//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::density::{phi4, Potential, PotentialSpec};
use crate::gaussian::{
    free_field_covariance, Covariance, DEFAULT_INVARIANCE_TOLERANCE, DEFAULT_PSD_TOLERANCE,
};
use crate::lattice::{Lattice, SiteVector};
use crate::rp_verify::{random_test_functions, McParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub time_extent: usize,
    #[serde(default)]
    pub spatial_extents: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    FreeField,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceConfig {
    pub kind: CovarianceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// CSV file, relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    /// Inline rows; reports echo explicit matrices this way.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phi4Config {
    pub lambda: f64,
}

/// Either the `phi4` shorthand or an explicit term list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensityConfig {
    Phi4 { phi4: Phi4Config },
    Terms(PotentialSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    #[default]
    Random,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionConfig {
    #[serde(default)]
    pub kind: TestFunctionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<Vec<f64>>>,
}

pub const DEFAULT_TEST_FUNCTION_COUNT: usize = 4;
pub const DEFAULT_CONVOLUTION_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "defaults::n_samples")]
    pub n_samples: usize,
    #[serde(default = "defaults::n_outer")]
    pub n_outer: usize,
    #[serde(default = "defaults::n_inner")]
    pub n_inner: usize,
    #[serde(default = "defaults::share_inner")]
    pub share_inner: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        let p = McParams::default();
        Self {
            n_samples: p.n_samples,
            n_outer: p.n_outer,
            n_inner: p.n_inner,
            share_inner: p.share_inner,
            seed: p.seed,
        }
    }
}

impl From<McConfig> for McParams {
    fn from(c: McConfig) -> Self {
        Self {
            n_samples: c.n_samples,
            seed: c.seed,
            n_outer: c.n_outer,
            n_inner: c.n_inner,
            share_inner: c.share_inner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "defaults::psd_tol")]
    pub psd_tol: f64,
    #[serde(default = "defaults::invariance_tol")]
    pub invariance_tol: f64,
    /// Agreement with closed forms in `selftest` and the algebraic block
    /// identity in `check-gaussian`.
    #[serde(default = "defaults::oracle_tol")]
    pub oracle_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd_tol: defaults::psd_tol(),
            invariance_tol: defaults::invariance_tol(),
            oracle_tol: defaults::oracle_tol(),
        }
    }
}

mod defaults {
    use super::*;

    pub fn n_samples() -> usize {
        McParams::default().n_samples
    }
    pub fn n_outer() -> usize {
        McParams::default().n_outer
    }
    pub fn n_inner() -> usize {
        McParams::default().n_inner
    }
    pub fn share_inner() -> bool {
        McParams::default().share_inner
    }
    pub fn psd_tol() -> f64 {
        DEFAULT_PSD_TOLERANCE
    }
    pub fn invariance_tol() -> f64 {
        DEFAULT_INVARIANCE_TOLERANCE
    }
    pub fn oracle_tol() -> f64 {
        1e-12
    }
    pub fn convolution_samples() -> usize {
        DEFAULT_CONVOLUTION_SAMPLES
    }
}

/// Top-level configuration shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
    #[serde(default)]
    pub test_functions: TestFunctionConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Draws for the sampling half of the convolution identity check.
    #[serde(default = "defaults::convolution_samples")]
    pub convolution_samples: usize,
}

/// Everything a command needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// Fully resolved config: defaults filled in, seed override applied,
    /// explicit matrices inlined.
    pub config: ExperimentConfig,
    pub lattice: Lattice,
    pub covariance: Option<Covariance>,
    pub density: Option<Potential>,
    pub test_functions: Vec<SiteVector>,
    pub mc: McParams,
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validates the config and builds the experiment. Relative matrix files
    /// are looked up under `base_dir`.
    pub fn resolve(mut self, base_dir: &Path, seed_override: Option<u64>) -> Result<Experiment, CliError> {
        if let Some(seed) = seed_override {
            self.mc.seed = seed;
        }
        let lattice = Lattice::new(self.lattice.time_extent, &self.lattice.spatial_extents)?;
        let tol = self.tolerances;
        for (name, v) in [
            ("psd_tol", tol.psd_tol),
            ("invariance_tol", tol.invariance_tol),
            ("oracle_tol", tol.oracle_tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("tolerances.{name} must be a nonnegative number")));
            }
        }
        let mc: McParams = self.mc.into();
        mc.validate()?;
        if self.convolution_samples < 2 {
            return Err(CliError::Config("convolution_samples must be at least 2".into()));
        }

        let covariance = match &mut self.covariance {
            None => None,
            Some(cfg) => Some(resolve_covariance(cfg, &lattice, base_dir, tol.psd_tol)?),
        };

        let density = match &self.density {
            None => None,
            Some(DensityConfig::Phi4 { phi4: p }) => Some(phi4(&lattice, p.lambda)?),
            Some(DensityConfig::Terms(spec)) => Some(spec.resolve(&lattice)?),
        };

        let tf = &mut self.test_functions;
        let test_functions = match tf.kind {
            TestFunctionKind::Random => {
                if tf.vectors.is_some() {
                    return Err(CliError::Config("random test functions take no vectors".into()));
                }
                let count = *tf.count.get_or_insert(DEFAULT_TEST_FUNCTION_COUNT);
                let seed = *tf.seed.get_or_insert(self.mc.seed);
                random_test_functions(&lattice, count, seed)
            }
            TestFunctionKind::Explicit => {
                let vectors = tf
                    .vectors
                    .as_ref()
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| CliError::Config("explicit test functions need vectors".into()))?;
                let phis: Vec<SiteVector> = vectors.iter().cloned().map(SiteVector).collect();
                for phi in &phis {
                    lattice.require_positive_support(phi)?;
                }
                phis
            }
        };

        Ok(Experiment {
            lattice,
            covariance,
            density,
            test_functions,
            mc,
            tolerances: tol,
            config: self,
        })
    }
}

fn resolve_covariance(
    cfg: &mut CovarianceConfig,
    lattice: &Lattice,
    base_dir: &Path,
    psd_tol: f64,
) -> Result<Covariance, CliError> {
    match cfg.kind {
        CovarianceKind::FreeField => {
            if cfg.matrix.is_some() || cfg.matrix_file.is_some() {
                return Err(CliError::Config("free_field covariance takes no matrix".into()));
            }
            let mass = cfg
                .mass
                .ok_or_else(|| CliError::Config("free_field covariance needs a mass".into()))?;
            Ok(free_field_covariance(lattice, mass)?)
        }
        CovarianceKind::Explicit => {
            let rows = match (cfg.matrix.take(), cfg.matrix_file.take()) {
                (Some(rows), None) => rows,
                (None, Some(file)) => {
                    let path = if file.is_absolute() { file } else { base_dir.join(file) };
                    read_matrix_csv(&path)?
                }
                _ => {
                    return Err(CliError::Config(
                        "explicit covariance needs exactly one of matrix, matrix_file".into(),
                    ))
                }
            };
            let n = lattice.site_count();
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Config(format!("explicit covariance must be {n}x{n}")));
            }
            let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            cfg.matrix = Some(rows);
            Ok(Covariance::new(m, psd_tol)?)
        }
    }
}

/// Reads a comma-separated matrix, one row per line.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|e| {
                        CliError::Config(format!("{}: row {}: {e}", path.display(), i + 1))
                    })
                })
                .collect()
        })
        .collect()
}

/// Row-major CSV with 17 significant digits.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
