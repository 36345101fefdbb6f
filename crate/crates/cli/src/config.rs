//! Run configuration: a TOML file with `gas`, `state`, `task`, `numerics` and
//! `output` blocks. Every block is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twotemp::{CeOptions, GasModel, GramMethod, MacroState, ScalingMode};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub gas: GasBlock,
    pub state: StateBlock,
    pub task: TaskBlock,
    pub numerics: NumericsBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasBlock {
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_r: f64,
    pub theta: f64,
    /// Overrides the derived C_s. Fault injection only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_s: Option<f64>,
}

impl Default for GasBlock {
    fn default() -> Self {
        GasBlock { delta: 2.0, alpha: 0.0, beta: 1.0, c_r: 1.0, theta: 0.05, c_s: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateBlock {
    pub rho: f64,
    pub u: [f64; 3],
    pub t_tr: f64,
    pub t_int: f64,
}

impl Default for StateBlock {
    fn default() -> Self {
        StateBlock { rho: 1.0, u: [0.0; 3], t_tr: 2.0, t_int: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Coeffs,
    Verify,
    Relax,
    Shock,
    Riemann,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Coeffs => "coeffs",
            TaskKind::Verify => "verify",
            TaskKind::Relax => "relax",
            TaskKind::Shock => "shock",
            TaskKind::Riemann => "riemann",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskBlock {
    /// If set, must agree with the subcommand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<TaskKind>,
    pub coeffs: CoeffsTask,
    pub verify: VerifyTask,
    pub relax: RelaxTask,
    pub shock: ShockTask,
    pub riemann: RiemannTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoeffsTask {
    /// Also compute the first-order relaxation correction K.
    pub with_k: bool,
}

impl Default for CoeffsTask {
    fn default() -> Self {
        CoeffsTask { with_k: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyTask {
    /// Criteria to run, 1..=12. Empty means all.
    pub checks: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxTask {
    pub t_end: f64,
    pub snapshots: usize,
    pub dsmc: bool,
    pub particles: usize,
    pub replicas: usize,
    pub dt_max: f64,
    /// Run the homogeneous fluid solver alongside.
    pub fluid: bool,
}

impl Default for RelaxTask {
    fn default() -> Self {
        RelaxTask { t_end: 5.0, snapshots: 20, dsmc: true, particles: 20_000, replicas: 4, dt_max: 0.01, fluid: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShockTask {
    pub mach: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub tol: f64,
    pub t_max: f64,
}

impl Default for ShockTask {
    fn default() -> Self {
        ShockTask { mach: 2.0, x_left: -1.0, x_right: 3.0, tol: 5e-5, t_max: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiemannTask {
    /// (rho, u, p) left and right of the diaphragm; both temperatures p / rho.
    pub left: [f64; 3],
    pub right: [f64; 3],
    pub x_left: f64,
    pub x_right: f64,
    pub x_diaphragm: f64,
    pub t_end: f64,
}

impl Default for RiemannTask {
    fn default() -> Self {
        RiemannTask { left: [1.0, 0.0, 1.0], right: [0.125, 0.0, 0.1], x_left: 0.0, x_right: 1.0, x_diaphragm: 0.5, t_end: 0.15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramChoice {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientSource {
    /// Closed forms when alpha = beta = 0, a table otherwise.
    Auto,
    Analytic,
    Table,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsBlock {
    pub n_c: usize,
    pub n_i: usize,
    pub gram: GramChoice,
    pub mc_samples: u64,
    /// Largest accepted standard error of a Monte Carlo Gram entry.
    pub mc_budget: f64,
    pub seed: u64,
    pub cells: usize,
    pub cfl: f64,
    pub eps: f64,
    pub kappa: f64,
    pub scaling_mode: ScalingMode,
    pub k_correction: bool,
    pub viscous: bool,
    pub coefficients: CoefficientSource,
    pub table_points: usize,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        NumericsBlock {
            n_c: 8,
            n_i: 4,
            gram: GramChoice::Exact,
            mc_samples: 1_000_000,
            mc_budget: 0.02,
            seed: 1,
            cells: 400,
            cfl: 0.5,
            eps: 0.1,
            kappa: 1.0,
            scaling_mode: ScalingMode::Eps1,
            k_correction: true,
            viscous: true,
            coefficients: CoefficientSource::Auto,
            table_points: 17,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { directory: None, formats: vec![Format::Csv, Format::Json] }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.gas_model()?;
        self.macro_state()?;
        self.ce_options().validate()?;
        let n = &self.numerics;
        if n.cells < 4 {
            return Err(CliError::Config(format!("numerics.cells must be at least 4, got {}", n.cells)));
        }
        if n.table_points < 4 {
            return Err(CliError::Config(format!("numerics.table_points must be at least 4, got {}", n.table_points)));
        }
        if let Some(bad) = self.task.verify.checks.iter().find(|&&c| !(1..=12).contains(&c)) {
            return Err(CliError::Config(format!("task.verify.checks: no criterion {bad}")));
        }
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats must name at least one format".into()));
        }
        Ok(())
    }

    pub fn gas_model(&self) -> CliResult<GasModel> {
        let g = &self.gas;
        let gas = GasModel::new(g.delta, g.alpha, g.beta, g.c_r, g.theta)?;
        Ok(match g.c_s {
            Some(c_s) => gas.with_corrupted_c_s(c_s),
            None => gas,
        })
    }

    pub fn macro_state(&self) -> CliResult<MacroState> {
        let s = &self.state;
        Ok(MacroState::new(s.rho, s.u, s.t_tr, s.t_int)?)
    }

    pub fn ce_options(&self) -> CeOptions {
        let n = &self.numerics;
        let gram = match n.gram {
            GramChoice::Exact => GramMethod::Exact,
            GramChoice::MonteCarlo => GramMethod::MonteCarlo { samples: n.mc_samples, seed: n.seed },
        };
        CeOptions { n_c: n.n_c, n_i: n.n_i, gram, mc_budget: n.mc_budget, ..CeOptions::default() }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml("[gas]\ndelta = 2.0\ngamma = 1.4\n").unwrap_err();
        assert_eq!(e.exit_code(), 2, "{e}");
        assert!(RunConfig::from_toml("[numerix]\n").is_err());
    }

    #[test]
    fn model_errors_are_validation_errors() {
        let e = RunConfig::from_toml("[gas]\nalpha = 1.5\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.task.kind = Some(TaskKind::Shock);
        cfg.numerics.scaling_mode = ScalingMode::Eps2;
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }
}
