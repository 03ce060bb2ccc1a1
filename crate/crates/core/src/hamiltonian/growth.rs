use super::HamiltonianSpec;
use crate::rng::{self, Domain};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Growth constants of the terminal cost and driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverGrowthParams {
    /// `z`-growth index.
    pub l: f64,
    /// `x`-growth index.
    pub r: f64,
    /// `x`-growth coefficient of `φ`.
    pub alpha: f64,
    /// `x`-growth coefficient of `ψ`.
    pub beta: f64,
    /// Coefficient of the `z`-modulus.
    pub gamma_z: f64,
    /// Lipschitz constant in `y`.
    pub k_psi_y: f64,
}

impl DriverGrowthParams {
    /// Parameters matched to `spec`: `l = p − 1` and `γ` from the power Hamiltonian.
    pub fn for_spec(spec: &HamiltonianSpec, r: f64, alpha: f64, beta: f64) -> Self {
        Self { l: spec.p() - 1.0, r, alpha, beta, gamma_z: spec.gamma_z(), k_psi_y: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub accepted: bool,
    pub checks: Vec<GrowthCheck>,
}

impl GrowthReport {
    pub fn failures(&self) -> impl Iterator<Item = &GrowthCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn validate_growth_hypotheses(params: &DriverGrowthParams, spec: &HamiltonianSpec) -> GrowthReport {
    let q = spec.q();
    let p = spec.p();
    let DriverGrowthParams { l, r, alpha, beta, gamma_z, k_psi_y } = *params;
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(GrowthCheck { name: name.into(), passed, detail })
    };
    push("l >= 1", l >= 1.0, format!("l = {l}"));
    push("0 <= r < 1/l", r >= 0.0 && r * l < 1.0, format!("r = {r}, 1/l = {}", 1.0 / l));
    push("q in (1, 2]", q > 1.0 && q <= 2.0, format!("q = {q}"));
    push("r < q - 1", r < q - 1.0, format!("r = {r}, q - 1 = {}", q - 1.0));
    push(
        "l = p - 1",
        (l - (p - 1.0)).abs() <= 1e-12 * l.abs().max(1.0),
        format!("l = {l}, p - 1 = {}", p - 1.0),
    );
    let coefficients = [alpha, beta, gamma_z, k_psi_y];
    push(
        "coefficients >= 0",
        coefficients.iter().all(|c| *c >= 0.0),
        format!("alpha = {alpha}, beta = {beta}, gamma = {gamma_z}, K_psi_y = {k_psi_y}"),
    );
    let accepted = checks.iter().all(|c| c.passed);
    GrowthReport { accepted, checks }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusAudit {
    pub samples: usize,
    /// Largest `|h(z) − h(z')| / ((C + γ/2|z|^l + γ/2|z'|^l)|z − z'|)`.
    pub max_ratio: f64,
    pub violations: usize,
}

/// Samples pairs `z, z'` uniformly in the cube `[−radius, radius]^dim` and
/// checks the declared `z`-modulus of `h`.
pub fn z_modulus_audit(
    spec: &HamiltonianSpec,
    params: &DriverGrowthParams,
    c: f64,
    dim: usize,
    radius: f64,
    samples: usize,
    seed: u64,
) -> crate::Result<ModulusAudit> {
    let mut rng = rng::stream(seed, Domain::Audit, 0, 0);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..samples {
        let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..=radius)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..=radius)).collect();
        let diff: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a - b).collect();
        let bound = (c + 0.5 * params.gamma_z * (norm(&z).powf(params.l) + norm(&w).powf(params.l))) * norm(&diff);
        if bound == 0.0 {
            continue;
        }
        let ratio = (spec.value(&z)? - spec.value(&w)?).abs() / bound;
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 + 1e-12 {
            violations += 1;
        }
    }
    Ok(ModulusAudit { samples, max_ratio, violations })
}
