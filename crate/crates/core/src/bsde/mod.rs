//! Regression Monte Carlo for the Markovian backward equation
//!
//! ```text
//! Y_τ = φ(X_T) + ∫_τ^T ψ(s, X_s, Y_s, Z_s) ds − ∫_τ^T Z_s dW_s
//! ```
//!
//! along a `PathBundle`. Each backward step regresses the next value on the
//! current state, takes `Z` from the step weight of the `B`-gradient formula
//! and solves the implicit `y`-dependence by a short Picard loop.

mod basis;
mod reports;

pub use basis::{apply, least_squares, Featurizer, Fit, RegressionBasis, MAX_CONDITION};
pub use reports::{exp_moment_report, z_growth_report, ExpMomentReport, ZGrowthReport};

use crate::error::{Error, Result};
use crate::functional::{Driver, Functional};
use crate::semigroup::Estimate;
use crate::spectral_ou::{h_norm, PathBundle};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const PICARD_MAX: usize = 8;
const PICARD_TOL: f64 = 1e-10;

/// Smooth radial truncation `ρ_M`: identity on `|z| ≤ M − 1`, equal to `M`
/// in norm beyond `M + 1`, with a quadratic blend of slope at most one between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRadius {
    pub radius: f64,
}

impl TruncationRadius {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 1.0) {
            return Err(Error::InvalidArgument(format!("truncation radius must exceed 1, got {radius}")));
        }
        Ok(Self { radius })
    }

    /// Scalar profile applied to `|z|`.
    pub fn profile(&self, s: f64) -> f64 {
        let m = self.radius;
        if s <= m - 1.0 {
            s
        } else if s >= m + 1.0 {
            m
        } else {
            let d = s - (m - 1.0);
            s - 0.25 * d * d
        }
    }

    /// Applies `ρ_M` in place; returns whether it changed `z`.
    pub fn apply(&self, z: &mut [f64]) -> bool {
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= self.radius - 1.0 {
            return false;
        }
        let factor = self.profile(norm) / norm;
        z.iter_mut().for_each(|v| *v *= factor);
        true
    }
}

/// `ρ_M(z)`.
pub fn smooth_truncation(z: &[f64], m: TruncationRadius) -> Vec<f64> {
    let mut out = z.to_vec();
    m.apply(&mut out);
    out
}

/// How the truncation radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruncationPolicy {
    Disabled,
    Fixed { radius: f64 },
    /// `10 · (1 + q99(1 + |X|^r))` over the simulated states.
    Default { r: f64 },
    /// Fixed point `A = c(1 + A^{lr})` of the a-priori recursion, then
    /// `M = 1 + A (1 + max |X|^r)`.
    APriori { c: f64, l: f64, r: f64 },
}

impl TruncationPolicy {
    pub fn resolve(&self, paths: &PathBundle) -> Result<Option<TruncationRadius>> {
        match *self {
            TruncationPolicy::Disabled => Ok(None),
            TruncationPolicy::Fixed { radius } => TruncationRadius::new(radius).map(Some),
            TruncationPolicy::Default { r } => {
                let mut g: Vec<f64> = state_norms(paths).into_iter().map(|n| 1.0 + n.powf(r)).collect();
                let q = quantile(&mut g, 0.99);
                TruncationRadius::new(10.0 * (1.0 + q)).map(Some)
            }
            TruncationPolicy::APriori { c, l, r } => {
                let a = a_priori_fixed_point(c, l * r)?;
                let max = state_norms(paths).into_iter().fold(0.0, f64::max);
                TruncationRadius::new(1.0 + a * (1.0 + max.powf(r))).map(Some)
            }
        }
    }
}

/// Fixed point of `A ↦ c(1 + A^e)` for `0 ≤ e < 1`.
pub fn a_priori_fixed_point(c: f64, e: f64) -> Result<f64> {
    if !(c > 0.0) || !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidArgument(format!("a-priori recursion needs c > 0 and 0 <= lr < 1, got c = {c}, lr = {e}")));
    }
    let mut a = c;
    for _ in 0..10_000 {
        let next = c * (1.0 + a.powf(e));
        if (next - a).abs() <= 1e-14 * next {
            return Ok(next);
        }
        a = next;
    }
    Ok(a)
}

fn state_norms(paths: &PathBundle) -> Vec<f64> {
    (0..paths.n_paths())
        .flat_map(|p| (0..=paths.n_steps()).map(move |i| (p, i)))
        .map(|(p, i)| h_norm(paths.state(p, i)))
        .collect()
}

/// Empirical quantile (nearest rank) of `values`, which is reordered.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let k = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    *values.select_nth_unstable_by(k, |a, b| a.total_cmp(b)).1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub time: f64,
    pub condition: f64,
    /// RMS of `Ŷ_{i+1} − E_i − Z_i·ΔW_i`.
    pub residual_rms: f64,
    /// Largest `|⟨f_j, Ŷ_{i+1} − E_i⟩| / (N · rms(f_j) · rms(Ŷ_{i+1}))`.
    pub orthogonality: f64,
    pub truncation_activations: usize,
    pub picard_iterations: usize,
    pub mean_y: f64,
    pub mean_abs_z: f64,
}

#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub grid: Vec<f64>,
    pub n_paths: usize,
    pub n_modes: usize,
    /// `N × (m+1)`, path-major.
    pub y: Vec<f64>,
    /// `N × m × n`, path-major.
    pub z: Vec<f64>,
    pub basis: RegressionBasis,
    /// Per step `p × 1` coefficients of `E_i`.
    pub value_coeffs: Vec<Vec<f64>>,
    /// Per grid time `p × 1` coefficients of `Y_i` regressed on the features,
    /// with `φ(X_T)` at the terminal time; a single constant at `t₀`.
    pub y_coeffs: Vec<Vec<f64>>,
    /// Per step `p × n` coefficients of `Z_i`.
    pub z_coeffs: Vec<Vec<f64>>,
    pub truncation: Option<TruncationRadius>,
    pub steps: Vec<StepDiagnostics>,
    /// `Y₀` with the standard error of the pathwise sum `φ(X_T) + Σ ψ_i Δ_i`.
    pub y0: Estimate,
    /// Sample mean of that pathwise sum.
    pub pathwise_mean: f64,
}

impl BsdeSolution {
    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn y(&self, path: usize, step: usize) -> f64 {
        self.y[path * self.grid.len() + step]
    }

    pub fn z(&self, path: usize, step: usize) -> &[f64] {
        let n = self.n_modes;
        let start = (path * self.n_steps() + step) * n;
        &self.z[start..start + n]
    }

    pub fn total_activations(&self) -> usize {
        self.steps.iter().map(|s| s.truncation_activations).sum()
    }
}

#[derive(Debug, Clone)]
pub struct BsdeOptions {
    pub basis: RegressionBasis,
    pub truncation: TruncationPolicy,
    /// Upper bound on inner Picard iterations (at least one).
    pub picard_iters: usize,
}

/// Backward regression solve along `paths`.
pub fn solve_bsde(
    paths: &PathBundle,
    psi: &dyn Driver,
    phi: &dyn Functional,
    opts: &BsdeOptions,
) -> Result<BsdeSolution> {
    let n = paths.n_modes();
    let m = paths.n_steps();
    let np = paths.n_paths();
    let basis = &opts.basis;
    basis.validate(n)?;
    basis.check_rank(np)?;
    if opts.picard_iters == 0 {
        return Err(Error::InvalidArgument("at least one Picard iteration is needed".into()));
    }
    let k_y = psi.y_lipschitz();
    let dt_max = (0..m).map(|i| paths.dt(i)).fold(0.0, f64::max);
    if k_y * dt_max >= 0.5 {
        return Err(Error::StepSize { k_psi_y: k_y, dt: dt_max });
    }
    let truncation = opts.truncation.resolve(paths)?;
    let feat = basis.featurizer();
    let p = feat.len();
    let stride = m + 1;

    let mut y = vec![0.0; np * stride];
    let mut z = vec![0.0; np * m * n];
    y.par_chunks_mut(stride).enumerate().try_for_each(|(path, row)| {
        row[m] = phi.eval(paths.state(path, m));
        if row[m].is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { context: format!("terminal value on path {path}") })
        }
    })?;

    // φ(X_T) + Σ ψ_i Δ_i per path: its spread gives the standard error of Y₀.
    let mut pathwise: Vec<f64> = (0..np).map(|path| y[path * stride + m]).collect();
    let mut value_coeffs = vec![Vec::new(); m];
    let mut y_coeffs = vec![Vec::new(); m + 1];
    {
        let terminal: Vec<f64> = (0..np).map(|path| y[path * stride + m]).collect();
        let features = feat.matrix(np, |path| paths.state(path, m));
        y_coeffs[m] = least_squares(&features, p, &terminal, 1, basis.ridge).map_err(|e| step_error(e, m))?.coeffs;
    }
    let mut z_coeffs = vec![Vec::new(); m];
    let mut steps = Vec::with_capacity(m);
    let mut y0 = Estimate { value: 0.0, std_error: 0.0 };
    let mut pathwise_mean = 0.0;

    for i in (0..m).rev() {
        let t = paths.grid[i];
        let dt = paths.dt(i);
        let next: Vec<f64> = (0..np).map(|path| y[path * stride + i + 1]).collect();
        let (features, width) = if i == 0 {
            (vec![1.0; np], 1)
        } else {
            (feat.matrix(np, |path| paths.state(path, i)), p)
        };
        let cv = control_variates(paths, i, phi, &feat, value_coeffs.get(i + 1));
        let fitted_target: Vec<f64> = next.iter().zip(&cv).map(|(y, c)| y - c.0).collect();
        let cond_fit = least_squares(&features, width, &fitted_target, 1, basis.ridge).map_err(|e| step_error(e, i))?;
        check_condition(cond_fit.condition, i)?;
        let expected: Vec<f64> = features.chunks_exact(width).map(|f| dot(f, &cond_fit.coeffs)).collect();

        // Z targets (Ŷ_{i+1} − v_{i+1}(X_{i+1} − ξ) − ⟨g, ξ⟩) · weight_k + ⟨g_k, e^{ΔA_k} B_k⟩.
        let mut targets = vec![0.0; np * n];
        targets.par_chunks_mut(n).enumerate().for_each(|(path, row)| {
            paths.gradient_weight(path, i, row);
            let centred = fitted_target[path] - cv[path].2;
            for (w, g) in row.iter_mut().zip(&cv[path].1) {
                *w = *w * centred + g;
            }
        });
        let z_fit = least_squares(&features, width, &targets, n, basis.ridge).map_err(|e| step_error(e, i))?;

        let results: Vec<(f64, usize, bool)> = z
            .par_chunks_mut(m * n)
            .zip(y.par_chunks_mut(stride))
            .enumerate()
            .map(|(path, (zrow, yrow))| {
                let f = &features[path * width..(path + 1) * width];
                let zi = &mut zrow[i * n..(i + 1) * n];
                apply(&z_fit.coeffs, f, zi);
                let hit = truncation.is_some_and(|tr| tr.apply(zi));
                let x = paths.state(path, i);
                let base = expected[path];
                let mut yi = base;
                let mut iters = 0;
                for _ in 0..opts.picard_iters.min(PICARD_MAX) {
                    iters += 1;
                    let update = base + psi.eval(t, x, yi, zi) * dt;
                    let done = (update - yi).abs() <= PICARD_TOL * update.abs().max(1.0);
                    yi = update;
                    if done || k_y == 0.0 {
                        break;
                    }
                }
                yrow[i] = yi;
                (yi, iters, hit)
            })
            .collect();
        if let Some(path) = results.iter().position(|r| !r.0.is_finite()) {
            return Err(Error::NonFinite { context: format!("Y at step {i} on path {path}") });
        }

        for (acc, (r, e)) in pathwise.iter_mut().zip(results.iter().zip(&expected)) {
            *acc += r.0 - e;
        }
        let activations = results.iter().filter(|r| r.2).count();
        let picard_iterations = results.iter().map(|r| r.1).max().unwrap_or(0);
        let mut dw = vec![0.0; n];
        let mut res_sq = 0.0;
        for path in 0..np {
            paths.brownian_increment(path, i, &mut dw);
            let zdw = dot(&z[(path * m + i) * n..(path * m + i + 1) * n], &dw);
            res_sq += (next[path] - expected[path] - zdw).powi(2);
        }
        let orthogonality = orthogonality(&features, width, &fitted_target, &expected);
        let mean_abs_z = (0..np).map(|path| norm(&z[(path * m + i) * n..(path * m + i + 1) * n])).sum::<f64>() / np as f64;
        let mean_y = results.iter().map(|r| r.0).sum::<f64>() / np as f64;
        if i == 0 {
            let mean = pathwise.iter().sum::<f64>() / np as f64;
            let sd = (pathwise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (np as f64 - 1.0)).sqrt();
            y0 = Estimate { value: results[0].0, std_error: sd / (np as f64).sqrt() };
            pathwise_mean = mean;
        }
        steps.push(StepDiagnostics {
            time: t,
            condition: cond_fit.condition,
            residual_rms: (res_sq / np as f64).sqrt(),
            orthogonality,
            truncation_activations: activations,
            picard_iterations,
            mean_y,
            mean_abs_z,
        });
        let yi: Vec<f64> = results.iter().map(|r| r.0).collect();
        y_coeffs[i] = least_squares(&features, width, &yi, 1, basis.ridge).map_err(|e| step_error(e, i))?.coeffs;
        value_coeffs[i] = cond_fit.coeffs;
        z_coeffs[i] = z_fit.coeffs;
    }
    steps.reverse();

    Ok(BsdeSolution {
        grid: paths.grid.clone(),
        n_paths: np,
        n_modes: n,
        y,
        z,
        basis: basis.clone(),
        value_coeffs,
        y_coeffs,
        z_coeffs,
        truncation,
        steps,
        y0,
        pathwise_mean,
    })
}

/// Per path: `⟨g, ξ⟩`, `(⟨g_k, e^{ΔA_k} B_k⟩)_k` and the next-step value at the
/// conditional mean `X_{i+1} − ξ`, with `g` the gradient there. The first term
/// has conditional mean zero and the second is its exact covariance with the
/// step weights, so subtracting one and adding the other removes the leading
/// noise of the regression targets without bias. The value at the mean is known
/// at time `t_i` and only centres the `Z` targets.
fn control_variates(
    paths: &PathBundle,
    step: usize,
    phi: &dyn Functional,
    feat: &Featurizer,
    next_coeffs: Option<&Vec<f64>>,
) -> Vec<(f64, Vec<f64>, f64)> {
    let dim = paths.dim();
    let cov = paths.step_covariance(step);
    (0..paths.n_paths())
        .into_par_iter()
        .map(|path| {
            let mut xi = vec![0.0; dim];
            paths.convolution(path, step, &mut xi);
            let mean: Vec<f64> = paths.state(path, step + 1).iter().zip(&xi).map(|(a, b)| a - b).collect();
            let mut g = vec![0.0; dim];
            let value = match next_coeffs {
                Some(c) => {
                    feat.gradient(c, &mean, &mut g);
                    let mut v = [0.0];
                    feat.predict(c, &mean, &mut v);
                    v[0]
                }
                None => {
                    phi.gradient(&mean, &mut g);
                    phi.eval(&mean)
                }
            };
            let gv = cov
                .propagators
                .iter()
                .enumerate()
                .map(|(k, prop)| g[2 * k] * prop.0[0][1] + g[2 * k + 1] * prop.0[1][1])
                .collect();
            (dot(&g, &xi), gv, value)
        })
        .collect()
}

fn step_error(e: Error, step: usize) -> Error {
    match e {
        Error::IllConditioned { condition, .. } => Error::IllConditioned { step, condition },
        other => other,
    }
}

fn check_condition(condition: f64, step: usize) -> Result<()> {
    if condition > MAX_CONDITION || !condition.is_finite() {
        return Err(Error::IllConditioned { step, condition });
    }
    Ok(())
}

fn orthogonality(features: &[f64], p: usize, next: &[f64], expected: &[f64]) -> f64 {
    let n = next.len() as f64;
    let y_rms = (next.iter().map(|v| v * v).sum::<f64>() / n).sqrt().max(f64::MIN_POSITIVE);
    (0..p)
        .map(|j| {
            let mut inner = 0.0;
            let mut f_sq = 0.0;
            for (row, (a, b)) in features.chunks_exact(p).zip(next.iter().zip(expected)) {
                inner += row[j] * (a - b);
                f_sq += row[j] * row[j];
            }
            let f_rms = (f_sq / n).sqrt().max(f64::MIN_POSITIVE);
            (inner / n).abs() / (f_rms * y_rms)
        })
        .fold(0.0, f64::max)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests;
