use super::{norm, quantile, BsdeSolution};
use crate::spectral_ou::{h_norm, PathBundle};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZGrowthReport {
    pub r: f64,
    /// Largest `|Z|/(1 + |X|^r)` over all paths and steps; the fitted constant.
    pub max_ratio: f64,
    pub p999_ratio: f64,
    pub samples: usize,
}

impl ZGrowthReport {
    /// `max / other.max`, the resampling stability ratio.
    pub fn stability(&self, other: &ZGrowthReport) -> f64 {
        if self.max_ratio == 0.0 && other.max_ratio == 0.0 {
            1.0
        } else {
            self.max_ratio / other.max_ratio
        }
    }
}

pub fn z_growth_report(sol: &BsdeSolution, paths: &PathBundle, r: f64) -> ZGrowthReport {
    let m = sol.n_steps();
    let mut ratios: Vec<f64> = (0..sol.n_paths)
        .flat_map(|p| (0..m).map(move |i| (p, i)))
        .map(|(p, i)| norm(sol.z(p, i)) / (1.0 + h_norm(paths.state(p, i)).powf(r)))
        .collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let p999_ratio = quantile(&mut ratios, 0.999);
    ZGrowthReport { r, max_ratio, p999_ratio, samples: ratios.len() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub l: f64,
    pub eta: f64,
    pub gamma_z: f64,
    /// `ln E[exp(S)]` with `S = (1/2 + η)(γ²/4) Σ_i |Z_i|^{2l} Δ_i`.
    pub log_value: f64,
    pub value: f64,
    pub std_error: f64,
    /// Share of the sample mean carried by the largest 1% of summands.
    pub top_share: f64,
    pub heavy_tail: bool,
}

impl ExpMomentReport {
    /// `exp(log_value − other.log_value)`.
    pub fn stability(&self, other: &ExpMomentReport) -> f64 {
        (self.log_value - other.log_value).exp()
    }
}

pub fn exp_moment_report(sol: &BsdeSolution, l: f64, eta: f64, gamma_z: f64) -> ExpMomentReport {
    let m = sol.n_steps();
    let scale = (0.5 + eta) * gamma_z * gamma_z / 4.0;
    let exponents: Vec<f64> = (0..sol.n_paths)
        .map(|p| {
            scale
                * (0..m)
                    .map(|i| norm(sol.z(p, i)).powf(2.0 * l) * (sol.grid[i + 1] - sol.grid[i]))
                    .sum::<f64>()
        })
        .collect();
    let n = exponents.len() as f64;
    let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut shifted: Vec<f64> = exponents.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let mean_shifted = total / n;
    let var = shifted.iter().map(|v| (v - mean_shifted).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let log_value = top + mean_shifted.ln();
    let value = top.exp() * mean_shifted;
    let std_error = top.exp() * (var / n).sqrt();
    let k = ((0.01 * n).ceil() as usize).max(1);
    shifted.sort_by(|a, b| b.total_cmp(a));
    let top_share = shifted[..k].iter().sum::<f64>() / total;
    ExpMomentReport {
        l,
        eta,
        gamma_z,
        log_value,
        value,
        std_error,
        top_share,
        heavy_tail: top_share > 0.5,
    }
}
