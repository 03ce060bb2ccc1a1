//! Gaussian evaluation of the Ornstein–Uhlenbeck transition semigroup
//! `P_σ[f](x) = ∫ f(y) N(e^{σA}x, Q_σ)(dy)` and of its derivative along the
//! range of `B`, computed from the integral formula
//!
//! ```text
//! ∇^B P_σ[f](x) h = E[ f(e^{σA}x + ξ) ⟨Q_σ^{-1/2} e^{σA} B h, Q_σ^{-1/2} ξ⟩ ]
//! ```
//!
//! in whitened per-mode coordinates: with `ξ = L u`, the weight is
//! `Σ_k h_k ⟨L_k⁻¹ e^{σA_k} B_k, u_k⟩` and no matrix square root is formed.

mod gauss_hermite;

pub use gauss_hermite::gauss_hermite_normal;

use crate::error::{ensure_finite, Error, Result};
use crate::functional::Functional;
use crate::rng::{self, Domain};
use crate::spectral_ou::{covariance, ModeBasis, OUCovariance};
use serde::{Deserialize, Serialize};

/// Nodes per dimension of the tensor Gauss–Hermite rule.
pub const GH_NODES: usize = 7;
/// Largest number of active modes handled by tensor quadrature.
pub const GH_MAX_ACTIVE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureScheme {
    /// Antithetic Monte Carlo with `samples` evaluations.
    MonteCarlo { samples: usize, seed: u64 },
    /// Tensor Gauss–Hermite over the position/velocity pair of each active mode.
    GaussHermite { nodes: usize, active_modes: Vec<usize> },
}

impl QuadratureScheme {
    /// Tensor quadrature when at most three modes are active, Monte Carlo otherwise.
    pub fn select(active_modes: Option<Vec<usize>>, mc_samples: usize, seed: u64) -> Self {
        match active_modes {
            Some(modes) if modes.len() <= GH_MAX_ACTIVE => {
                QuadratureScheme::GaussHermite { nodes: GH_NODES, active_modes: modes }
            }
            _ => QuadratureScheme::MonteCarlo { samples: mc_samples, seed },
        }
    }

    pub fn rule(&self, n_modes: usize) -> Result<GaussianRule> {
        GaussianRule::new(self, n_modes)
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, QuadratureScheme::MonteCarlo { .. })
    }

    /// Checks that a functional with the given support may be integrated.
    pub fn admits(&self, support: Option<&[usize]>) -> Result<()> {
        if let QuadratureScheme::GaussHermite { active_modes, .. } = self {
            let ok = support.is_some_and(|s| s.iter().all(|m| active_modes.contains(m)));
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "Gauss–Hermite over modes {active_modes:?} needs an integrand supported there, got {support:?}"
                )));
            }
        }
        Ok(())
    }
}

/// A point estimate with its Monte Carlo standard error (zero for quadrature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Standard normal points in coefficient space with their weights.
#[derive(Debug, Clone)]
pub struct GaussianRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    antithetic: bool,
    slots: Vec<usize>,
}

impl GaussianRule {
    pub fn new(scheme: &QuadratureScheme, n_modes: usize) -> Result<Self> {
        let dim = 2 * n_modes;
        match scheme {
            QuadratureScheme::MonteCarlo { samples, seed } => {
                if *samples < 2 {
                    return Err(Error::InvalidArgument("Monte Carlo needs at least two samples".into()));
                }
                let pairs = samples.div_ceil(2);
                let mut points = vec![0.0; pairs * dim];
                let mut rng = rng::stream(*seed, Domain::Quadrature, 0, 0);
                rng::fill_normals(&mut rng, &mut points);
                Ok(Self {
                    dim,
                    points,
                    weights: vec![1.0 / pairs as f64; pairs],
                    antithetic: true,
                    slots: (0..n_modes).collect(),
                })
            }
            QuadratureScheme::GaussHermite { nodes, active_modes } => {
                if active_modes.iter().any(|&m| m == 0 || m > n_modes) {
                    return Err(Error::InvalidArgument(format!(
                        "active modes {active_modes:?} outside 1..={n_modes}"
                    )));
                }
                let mut slots: Vec<usize> = active_modes.iter().map(|m| m - 1).collect();
                slots.sort_unstable();
                slots.dedup();
                let (x, w) = gauss_hermite_normal(*nodes);
                let axes = 2 * slots.len();
                let count = nodes.pow(axes as u32);
                let mut points = vec![0.0; count * dim];
                let mut weights = vec![1.0; count];
                for (j, weight) in weights.iter_mut().enumerate() {
                    let mut rest = j;
                    for axis in 0..axes {
                        let node = rest % nodes;
                        rest /= nodes;
                        let coord = 2 * slots[axis / 2] + axis % 2;
                        points[j * dim + coord] = x[node];
                        *weight *= w[node];
                    }
                }
                Ok(Self { dim, points, weights, antithetic: false, slots })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_monte_carlo(&self) -> bool {
        self.antithetic
    }

    /// Mode slots (0-based) the rule integrates over non-degenerately.
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    /// `Σ_k h_k ⟨w_k, u_k⟩` restricted to the rule's slots.
    fn weight(&self, cov: &OUCovariance, u: &[f64], h: &[f64]) -> f64 {
        self.slots
            .iter()
            .map(|&k| {
                let w = cov.whitened_actuation[k];
                h[k] * (w[0] * u[2 * k] + w[1] * u[2 * k + 1])
            })
            .sum()
    }

    fn summarize(&self, values: &[f64]) -> Estimate {
        let value: f64 = values.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        let std_error = if self.antithetic {
            let n = values.len() as f64;
            let var = values.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Estimate { value, std_error }
    }

    /// `E f(mean + L u)`.
    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, cov: &OUCovariance, mean: &[f64], f: F) -> Result<Estimate> {
        let mut y = vec![0.0; self.dim];
        let mut neg = vec![0.0; self.dim];
        let mut values = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let u = self.point(j);
            cov.shift(mean, u, &mut y);
            let mut v = f(&y);
            if self.antithetic {
                let minus: Vec<f64> = u.iter().map(|a| -a).collect();
                cov.shift(mean, &minus, &mut neg);
                v = 0.5 * (v + f(&neg));
            }
            values.push(ensure_finite(v, || "semigroup integrand".into())?);
        }
        Ok(self.summarize(&values))
    }

    /// `E f(mean + L u) ⟨weight(h), u⟩`.
    pub fn directional<F: Fn(&[f64]) -> f64>(
        &self,
        cov: &OUCovariance,
        mean: &[f64],
        h: &[f64],
        f: F,
    ) -> Result<Estimate> {
        let mut y = vec![0.0; self.dim];
        let mut minus = vec![0.0; self.dim];
        let mut neg = vec![0.0; self.dim];
        let mut values = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let u = self.point(j);
            cov.shift(mean, u, &mut y);
            let w = self.weight(cov, u, h);
            let v = if self.antithetic {
                for (m, a) in minus.iter_mut().zip(u) {
                    *m = -a;
                }
                cov.shift(mean, &minus, &mut neg);
                0.5 * (f(&y) - f(&neg)) * w
            } else {
                f(&y) * w
            };
            values.push(ensure_finite(v, || "gradient integrand".into())?);
        }
        Ok(self.summarize(&values))
    }

    /// Value and full `B`-gradient (one entry per mode) from one sweep of the
    /// rule. `f` receives the point and returns the integrand value.
    pub fn value_and_gradient<F: FnMut(&[f64]) -> f64>(
        &self,
        cov: &OUCovariance,
        mean: &[f64],
        mut f: F,
        grad: &mut [f64],
    ) -> f64 {
        grad.fill(0.0);
        let mut y = vec![0.0; self.dim];
        let mut minus = vec![0.0; self.dim];
        let mut neg = vec![0.0; self.dim];
        let mut value = 0.0;
        for j in 0..self.len() {
            let u = self.point(j);
            let wj = self.weights[j];
            cov.shift(mean, u, &mut y);
            let plus = f(&y);
            let (avg, diff) = if self.antithetic {
                for (m, a) in minus.iter_mut().zip(u) {
                    *m = -a;
                }
                cov.shift(mean, &minus, &mut neg);
                let other = f(&neg);
                (0.5 * (plus + other), 0.5 * (plus - other))
            } else {
                (plus, plus)
            };
            value += wj * avg;
            for &k in &self.slots {
                let w = cov.whitened_actuation[k];
                grad[k] += wj * diff * (w[0] * u[2 * k] + w[1] * u[2 * k + 1]);
            }
        }
        value
    }
}

fn mean_of(sigma: f64, x: &[f64], basis: &ModeBasis) -> Result<(OUCovariance, Vec<f64>)> {
    let cov = covariance(sigma, basis)?;
    let mut mean = vec![0.0; x.len()];
    cov.propagate(x, &mut mean);
    Ok((cov, mean))
}

fn basis_for(x: &[f64]) -> Result<ModeBasis> {
    if x.is_empty() || x.len() % 2 != 0 {
        return Err(Error::InvalidArgument("state needs a position/velocity pair per mode".into()));
    }
    ModeBasis::new(x.len() / 2)
}

/// `P_σ[f](x)`.
pub fn apply_semigroup(f: &dyn Functional, sigma: f64, x: &[f64], quad: &QuadratureScheme) -> Result<Estimate> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        let value = ensure_finite(f.eval(x), || "semigroup integrand".into())?;
        return Ok(Estimate { value, std_error: 0.0 });
    }
    quad.admits(f.active_modes().as_deref())?;
    let basis = basis_for(x)?;
    let (cov, mean) = mean_of(sigma, x, &basis)?;
    quad.rule(basis.len())?.expectation(&cov, &mean, |y| f.eval(y))
}

/// `∇^B P_σ[f](x) h` for a control-space direction `h` (one entry per mode).
pub fn b_gradient_semigroup(
    f: &dyn Functional,
    sigma: f64,
    x: &[f64],
    h: &[f64],
    quad: &QuadratureScheme,
) -> Result<Estimate> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "the B-gradient formula needs sigma > 0, got {sigma}"
        )));
    }
    quad.admits(f.active_modes().as_deref())?;
    let basis = basis_for(x)?;
    if h.len() != basis.len() {
        return Err(Error::InvalidArgument("direction must have one entry per mode".into()));
    }
    let (cov, mean) = mean_of(sigma, x, &basis)?;
    let rule = quad.rule(basis.len())?;
    rule.directional(&cov, &mean, h, |y| f.eval(y))
}

/// `‖Q_σ^{-1/2} e^{σA} B‖`: the largest whitened actuation norm over the modes.
pub fn smoothing_constant(sigma: f64, basis: &ModeBasis) -> Result<f64> {
    let cov = covariance(sigma, basis)?;
    Ok(cov.whitened_norms().into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingAudit {
    /// `(σ, smoothing constant)` rows.
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope of `ln c` against `ln σ`.
    pub slope: f64,
    pub intercept: f64,
    /// `c(σ) √σ` at the smallest σ of the sweep.
    pub small_sigma_prefactor: f64,
    /// Largest `c(σ) √σ` over the sweep.
    pub max_prefactor: f64,
}

/// Log-spaced sweep of the smoothing constant with its fitted power law.
pub fn smoothing_audit(sigma_min: f64, sigma_max: f64, points: usize, basis: &ModeBasis) -> Result<SmoothingAudit> {
    if !(sigma_min > 0.0 && sigma_max > sigma_min) || points < 2 {
        return Err(Error::InvalidArgument("need 0 < sigma_min < sigma_max and two points".into()));
    }
    let (lo, hi) = (sigma_min.ln(), sigma_max.ln());
    let rows: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let s = (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
            smoothing_constant(s, basis).map(|c| (s, c))
        })
        .collect::<Result<_>>()?;
    let (slope, intercept) = fit_line(rows.iter().map(|(s, c)| (s.ln(), c.ln())));
    let small_sigma_prefactor = rows[0].1 * rows[0].0.sqrt();
    let max_prefactor = rows.iter().map(|(s, c)| c * s.sqrt()).fold(0.0, f64::max);
    Ok(SmoothingAudit { rows, slope, intercept, small_sigma_prefactor, max_prefactor })
}

/// Ordinary least-squares line `y = slope x + intercept`.
pub fn fit_line(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = points.collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
