use super::ValueField;
use crate::bsde::BsdeSolution;
use crate::spectral_ou::PathBundle;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub field_value: f64,
    pub bsde_value: f64,
    pub bsde_std_error: f64,
    /// `|v(t₀, x₀) − Y₀|` in units of the BSDE standard error.
    pub value_discrepancy_se: f64,
    /// Pathwise RMS of `|∇^B v(t_i, X_i) − Z_i|` over RMS `|Z|`.
    pub gradient_discrepancy: f64,
    pub value_threshold_se: f64,
    pub gradient_threshold: f64,
    pub passed: bool,
}

/// Compares a value field with a BSDE solve along the same paths.
pub fn identification_report(
    field: &ValueField,
    sol: &BsdeSolution,
    paths: &PathBundle,
    value_threshold_se: f64,
    gradient_threshold: f64,
) -> IdentificationReport {
    let t0 = paths.grid[0];
    let field_value = field.value(t0, paths.state(0, 0));
    let bsde_value = sol.y0.value;
    let se = sol.y0.std_error;
    let diff = (field_value - bsde_value).abs();
    let value_discrepancy_se = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let n = sol.n_modes;
    let mut g = vec![0.0; n];
    let mut err_sq = 0.0;
    let mut z_sq = 0.0;
    for p in 0..sol.n_paths {
        for i in 0..sol.n_steps() {
            field.bgrad(paths.grid[i], paths.state(p, i), &mut g);
            let z = sol.z(p, i);
            err_sq += g.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            z_sq += z.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let gradient_discrepancy = if z_sq > 0.0 {
        (err_sq / z_sq).sqrt()
    } else if err_sq == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    IdentificationReport {
        field_value,
        bsde_value,
        bsde_std_error: se,
        value_discrepancy_se,
        gradient_discrepancy,
        value_threshold_se,
        gradient_threshold,
        passed: value_discrepancy_se <= value_threshold_se && gradient_discrepancy <= gradient_threshold,
    }
}
