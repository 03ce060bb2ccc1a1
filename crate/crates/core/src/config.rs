//! Experiment configuration (TOML). Unknown keys are rejected everywhere.

use crate::bsde::{RegressionBasis, TruncationPolicy};
use crate::error::{Error, Result};
use crate::hamiltonian::{ControlCost, ControlSet, HamiltonianSpec};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub modes: usize,
    pub steps: usize,
    pub horizon: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default)]
    pub state_cost: StateCostSpec,
    #[serde(default)]
    pub terminal: TerminalSpec,
    #[serde(default)]
    pub driver: DriverKind,
    #[serde(default)]
    pub growth: GrowthConfig,
}

/// Modal coefficients of the initial position and velocity; missing entries are zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    #[serde(default)]
    pub y: Vec<f64>,
    #[serde(default)]
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    #[default]
    Zero,
    /// `f(ξ, y) = κ sin(y)`.
    Sine { kappa: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateCostSpec {
    #[default]
    Zero,
    /// `ĝ̄(ξ, y) = weight · (√(width² + y²) − width)`.
    SoftAbs { weight: f64, width: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSpec {
    #[default]
    Zero,
    /// `φ̂(ξ, y) = weight · √(width² + (y − amplitude·sin πξ)²)`.
    SoftAbs { weight: f64, width: f64, amplitude: f64 },
    /// `φ̂(ξ, y) = y²`.
    Square,
    /// `φ(x) = y · y_mode + z · z_mode`.
    ModeLinear { mode: usize, y: f64, z: f64 },
    /// `φ(x) = weight · √(width² + (y_mode − center)²)`.
    ModeSoftAbs { mode: usize, weight: f64, center: f64, width: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    /// `ψ = ḡ + h`.
    #[default]
    Control,
    /// `ψ ≡ 0`.
    Zero,
}

/// Declared `x`-growth of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub r: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self { r: 0.0, alpha: 1.0, beta: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `weight · |u|^q`.
    #[default]
    Norm,
    /// `weight · Σ_k |u_k|^q`.
    Modal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub q: f64,
    #[serde(default)]
    pub cost: CostKind,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default = "full_set")]
    pub control_set: ControlSet,
    #[serde(default)]
    pub actuation: Vec<f64>,
    #[serde(default = "yes")]
    pub closed_form: bool,
}

fn full_set() -> ControlSet {
    ControlSet::Full
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self { q: 2.0, cost: CostKind::Norm, weight: 1.0, control_set: ControlSet::Full, actuation: Vec::new(), closed_form: true }
    }
}

impl HamiltonianConfig {
    pub fn spec(&self) -> Result<HamiltonianSpec> {
        let cost = match self.cost {
            CostKind::Norm => ControlCost::NormPower { q: self.q, weight: self.weight },
            CostKind::Modal => ControlCost::ModalPower { q: self.q, weight: self.weight },
        };
        HamiltonianSpec::new(self.control_set.clone(), cost, self.actuation.clone(), self.closed_form)
            .map_err(|e| Error::Config(format!("hamiltonian: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub paths: usize,
    #[serde(default)]
    pub basis: Option<RegressionBasis>,
    #[serde(default = "default_truncation")]
    pub truncation: TruncationPolicy,
    #[serde(default = "default_picard_iters")]
    pub picard_iters: usize,
    #[serde(default)]
    pub picard: PicardConfig,
}

fn default_truncation() -> TruncationPolicy {
    TruncationPolicy::Default { r: 0.0 }
}

fn default_picard_iters() -> usize {
    8
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { paths: 20_000, basis: None, truncation: default_truncation(), picard_iters: 8, picard: PicardConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    /// Whether `verify` runs the mild solver; `solve-hjb` always does.
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Basis of the mild solver; defaults to the BSDE basis.
    #[serde(default)]
    pub basis: Option<RegressionBasis>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Training states per grid time; defaults to twenty per feature.
    #[serde(default)]
    pub training: Option<usize>,
    /// Monte Carlo samples when Gauss–Hermite does not apply.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    25
}

fn default_mc() -> usize {
    256
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { enabled: true, basis: None, tol: 1e-3, max_iter: 25, training: None, mc_samples: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    #[serde(default = "yes")]
    pub identification: bool,
    #[serde(default = "yes")]
    pub z_growth: bool,
    #[serde(default = "yes")]
    pub exp_moment: bool,
    #[serde(default = "yes")]
    pub fundamental_relation: bool,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_value_se")]
    pub value_threshold_se: f64,
    #[serde(default = "default_gradient_threshold")]
    pub gradient_threshold: f64,
    /// Allowed factor between statistics under path doubling.
    #[serde(default = "default_stability")]
    pub stability_factor: f64,
    /// Paths per candidate policy; defaults to the solver's path count.
    #[serde(default)]
    pub policy_paths: Option<usize>,
    /// Random bounded feedback candidates.
    #[serde(default = "default_random")]
    pub random_candidates: usize,
    #[serde(default = "default_amplitude")]
    pub candidate_amplitude: f64,
}

fn default_eta() -> f64 {
    0.1
}

fn default_value_se() -> f64 {
    3.0
}

fn default_gradient_threshold() -> f64 {
    0.1
}

fn default_stability() -> f64 {
    2.0
}

fn default_random() -> usize {
    3
}

fn default_amplitude() -> f64 {
    0.5
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            identification: true,
            z_growth: true,
            exp_moment: true,
            fundamental_relation: true,
            eta: default_eta(),
            value_threshold_se: default_value_se(),
            gradient_threshold: default_gradient_threshold(),
            stability_factor: default_stability(),
            policy_paths: None,
            random_candidates: default_random(),
            candidate_amplitude: default_amplitude(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub points: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { sigma_min: 1e-3, sigma_max: 1.0, points: 31 }
    }
}

impl ExperimentConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let bad = |key: &str, why: &str| Err(Error::Config(format!("{key}: {why}")));
        if p.modes == 0 {
            return bad("problem.modes", "must be positive");
        }
        if p.steps == 0 {
            return bad("problem.steps", "must be positive");
        }
        if !(p.horizon > p.start) || !p.horizon.is_finite() || !p.start.is_finite() || p.start < 0.0 {
            return bad("problem.horizon", "must be finite and exceed a nonnegative start time");
        }
        if p.initial.y.len() > p.modes || p.initial.z.len() > p.modes {
            return bad("problem.initial", "has more coefficients than modes");
        }
        if p.initial.y.iter().chain(&p.initial.z).any(|v| !v.is_finite()) {
            return bad("problem.initial", "coefficients must be finite");
        }
        match p.drift {
            DriftSpec::Sine { kappa } if !(kappa > 0.0 && kappa.is_finite()) => return bad("problem.drift.kappa", "must be positive"),
            _ => {}
        }
        match p.state_cost {
            StateCostSpec::SoftAbs { weight, width } if !(weight > 0.0 && width > 0.0) => {
                return bad("problem.state_cost", "weight and width must be positive")
            }
            _ => {}
        }
        match &p.terminal {
            TerminalSpec::SoftAbs { weight, width, .. } if !(*weight > 0.0 && *width > 0.0) => {
                return bad("problem.terminal", "weight and width must be positive")
            }
            TerminalSpec::ModeSoftAbs { mode, weight, width, .. } => {
                if !(*weight > 0.0 && *width > 0.0) {
                    return bad("problem.terminal", "weight and width must be positive");
                }
                if *mode == 0 || *mode > p.modes {
                    return bad("problem.terminal.mode", "outside the simulated modes");
                }
            }
            TerminalSpec::ModeLinear { mode, .. } if *mode == 0 || *mode > p.modes => {
                return bad("problem.terminal.mode", "outside the simulated modes")
            }
            _ => {}
        }
        if !(p.growth.r >= 0.0) {
            return bad("problem.growth.r", "must be nonnegative");
        }
        self.hamiltonian.spec()?;
        if self.solver.paths < 2 {
            return bad("solver.paths", "must be at least 2");
        }
        if self.solver.picard_iters == 0 {
            return bad("solver.picard_iters", "must be positive");
        }
        if let Some(b) = &self.solver.basis {
            b.validate(p.modes).map_err(|e| Error::Config(format!("solver.basis: {e}")))?;
        }
        if let Some(b) = &self.solver.picard.basis {
            b.validate(p.modes).map_err(|e| Error::Config(format!("solver.picard.basis: {e}")))?;
        }
        if !(self.solver.picard.tol > 0.0) || self.solver.picard.mc_samples < 2 {
            return bad("solver.picard", "needs a positive tolerance and at least two samples");
        }
        let v = &self.verification;
        if !(v.eta > 0.0) || !(v.value_threshold_se > 0.0) || !(v.gradient_threshold > 0.0) || !(v.stability_factor >= 1.0) {
            return bad("verification", "thresholds must be positive and the stability factor at least 1");
        }
        if !(v.candidate_amplitude > 0.0) {
            return bad("verification.candidate_amplitude", "must be positive");
        }
        let s = &self.smoothing;
        if !(s.sigma_min > 0.0 && s.sigma_max > s.sigma_min) || s.points < 2 {
            return bad("smoothing", "needs 0 < sigma_min < sigma_max and two points");
        }
        Ok(())
    }

    pub fn basis(&self) -> RegressionBasis {
        self.solver.basis.clone().unwrap_or_else(|| RegressionBasis::default_for(self.problem.modes))
    }

    pub fn picard_basis(&self) -> RegressionBasis {
        self.solver.picard.basis.clone().unwrap_or_else(|| self.basis())
    }
}
