//! Mild solution of the HJB equation by Picard iteration on
//!
//! ```text
//! v(t, x) = P_{T−t}[φ](x) + ∫_t^T P_{s−t}[ψ̃(s, ·, v(s, ·), ∇^B v(s, ·))](x) ds,
//! ```
//!
//! the Girsanov rewrite `ψ̃ = ψ + ⟨z, G⟩` that moves a drift `BG` into the
//! driver, and the identification of `(v, ∇^B v)` with a BSDE solution.

mod field;
mod identification;

pub use field::{GrowthCertificate, ValueField, VALUE_FIELD_SCHEMA};
pub use identification::{identification_report, IdentificationReport};

use crate::bsde::{apply, least_squares, RegressionBasis};
use crate::error::{Error, Result};
use crate::functional::{Driver, Functional};
use crate::rng::{self, Domain};
use crate::semigroup::{apply_semigroup, GaussianRule, QuadratureScheme};
use crate::spectral_ou::{covariance, h_norm, DriftField, ModeBasis, OUCovariance};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// `ψ̃(t, x, y, z) = ψ(t, x, y, z) + ⟨z, G(x)⟩`.
pub struct GirsanovDriver {
    inner: Arc<dyn Driver>,
    drift: Arc<dyn DriftField>,
    n_modes: usize,
}

impl GirsanovDriver {
    /// Checks `|G| ≤ bound` on `samples` before accepting the drift.
    pub fn new<'a>(
        inner: Arc<dyn Driver>,
        drift: Arc<dyn DriftField>,
        n_modes: usize,
        bound: f64,
        samples: impl Iterator<Item = &'a [f64]>,
    ) -> Result<Self> {
        let mut g = vec![0.0; n_modes];
        let mut observed: f64 = 0.0;
        for x in samples {
            drift.drift(0.0, x, &mut g);
            observed = observed.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        if !(observed <= bound) {
            return Err(Error::UnboundedDrift { bound, observed });
        }
        Ok(Self { inner, drift, n_modes })
    }
}

impl Driver for GirsanovDriver {
    fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        let mut g = vec![0.0; self.n_modes];
        self.drift.drift(t, x, &mut g);
        self.inner.eval(t, x, y, z) + g.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    fn y_lipschitz(&self) -> f64 {
        self.inner.y_lipschitz()
    }

    fn is_zero(&self) -> bool {
        self.inner.is_zero() && self.drift.is_zero()
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        if self.drift.is_zero() {
            self.inner.active_modes()
        } else {
            None
        }
    }
}

/// `ψ̃ = ψ + ⟨z, G⟩` without a bound check.
pub fn girsanov_driver(psi: Arc<dyn Driver>, g: Arc<dyn DriftField>, n_modes: usize) -> GirsanovDriver {
    GirsanovDriver { inner: psi, drift: g, n_modes }
}

/// `−2c · ln P_σ[exp(−φ/(2c))](x)`: the value of the problem with Hamiltonian
/// `−|z|²/(4c)` and no running cost.
pub fn exponential_transform(phi: &dyn Functional, c: f64, sigma: f64, x: &[f64], quad: &QuadratureScheme) -> Result<f64> {
    struct Transformed<'a> {
        phi: &'a dyn Functional,
        c: f64,
    }
    impl Functional for Transformed<'_> {
        fn eval(&self, x: &[f64]) -> f64 {
            (-self.phi.eval(x) / (2.0 * self.c)).exp()
        }
        fn active_modes(&self) -> Option<Vec<usize>> {
            self.phi.active_modes()
        }
    }
    let e = apply_semigroup(&Transformed { phi, c }, sigma, x, quad)?;
    Ok(-2.0 * c * e.value.ln())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardOptions {
    pub basis: RegressionBasis,
    pub quad: QuadratureScheme,
    /// Training states per grid time.
    pub training: usize,
    /// Mid-horizon anchors (the initial state is always added).
    pub anchors: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// `x`-growth index for the anchor weights and the certificate.
    pub r: f64,
    pub seed: u64,
}

impl PicardOptions {
    pub fn new(basis: RegressionBasis, quad: QuadratureScheme, seed: u64) -> Self {
        Self { training: 20 * basis.len().max(16), basis, quad, anchors: 64, tol: 1e-3, max_iter: 25, r: 0.0, seed }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardSweep {
    pub iteration: usize,
    /// Weighted sup over anchors of the update.
    pub update: f64,
    /// Ratio to the previous update.
    pub ratio: f64,
    pub value_at_start: f64,
}

#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub field: ValueField,
    pub sweeps: Vec<PicardSweep>,
    pub converged: bool,
    /// Anchor states `(t, x)`; the first is the initial condition.
    pub anchors: Vec<(f64, Vec<f64>)>,
}

impl PicardSolution {
    pub fn iterations(&self) -> usize {
        self.sweeps.len()
    }
}

/// Training states for slot `i`: draws from `N(e^{(t_i−t_0)A} x_0, Q_s)` with
/// `s = max(t_i − t_0, (T − t_0)/4)` so early slots are not degenerate.
fn training_states(grid: &[f64], x0: &[f64], basis: &ModeBasis, count: usize, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    let t0 = grid[0];
    let horizon = grid[grid.len() - 1] - t0;
    let dim = x0.len();
    grid.iter()
        .enumerate()
        .map(|(i, &t)| {
            let elapsed = t - t0;
            let mut mean = x0.to_vec();
            if elapsed > 0.0 {
                covariance(elapsed, basis)?.propagate(x0, &mut mean);
            }
            let spread = covariance(elapsed.max(0.25 * horizon), basis)?;
            let mut rng = rng::stream(seed, Domain::Training, i as u64, 0);
            let mut u = vec![0.0; dim * count];
            rng::fill_normals(&mut rng, &mut u);
            Ok(u.chunks_exact(dim)
                .map(|ui| {
                    let mut x = vec![0.0; dim];
                    spread.shift(&mean, ui, &mut x);
                    x
                })
                .collect())
        })
        .collect()
}

fn anchor_states(grid: &[f64], x0: &[f64], basis: &ModeBasis, count: usize, seed: u64) -> Result<Vec<(f64, Vec<f64>)>> {
    let m = grid.len() - 1;
    let mid = m / 2;
    let t_mid = grid[mid];
    let mut out = vec![(grid[0], x0.to_vec())];
    if mid == 0 {
        return Ok(out);
    }
    let cov = covariance(t_mid - grid[0], basis)?;
    let mut mean = vec![0.0; x0.len()];
    cov.propagate(x0, &mut mean);
    let mut rng = rng::stream(seed, Domain::Anchors, 0, 0);
    let mut u = vec![0.0; x0.len()];
    for _ in 0..count {
        rng::fill_normals(&mut rng, &mut u);
        let mut x = vec![0.0; x0.len()];
        cov.shift(&mean, &u, &mut x);
        out.push((t_mid, x));
    }
    Ok(out)
}

/// The iterate's integrand source on one interval `[t_k, t_{k+1}]` at its midpoint.
struct Midpoint {
    time: f64,
    value: Vec<f64>,
    grad: Vec<f64>,
    /// Whether the right end is the terminal slot, evaluated through `φ`.
    terminal: bool,
}

/// Picard iteration for the mild solution on `grid`, started from `x0`.
pub fn picard_mild_solve(
    phi: &dyn Functional,
    psi_tilde: &dyn Driver,
    grid: &[f64],
    x0: &[f64],
    opts: &PicardOptions,
) -> Result<PicardSolution> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("Picard grid must be strictly increasing".into()));
    }
    if x0.is_empty() || x0.len() % 2 != 0 {
        return Err(Error::InvalidArgument("initial state needs a pair per mode".into()));
    }
    let n = x0.len() / 2;
    let modes = ModeBasis::new(n)?;
    opts.basis.validate(n)?;
    opts.basis.check_rank(opts.training)?;
    if let QuadratureScheme::GaussHermite { .. } = &opts.quad {
        let mut support = Vec::new();
        for part in [opts.basis.support(), phi.active_modes(), psi_tilde.active_modes()] {
            match part {
                Some(p) => support.extend(p),
                None => {
                    return Err(Error::InvalidArgument(
                        "Gauss–Hermite needs a mode-limited basis, terminal cost and driver".into(),
                    ))
                }
            }
        }
        support.sort_unstable();
        support.dedup();
        opts.quad.admits(Some(&support))?;
    }
    let rule = opts.quad.rule(n)?;
    let m = grid.len() - 1;
    let horizon = grid[m];
    let feat = opts.basis.featurizer();
    let p = feat.len();
    let states = training_states(grid, x0, &modes, opts.training, opts.seed)?;
    let anchors = anchor_states(grid, x0, &modes, opts.anchors, opts.seed)?;

    // Covariances of P_{s−t_i} for σ = T − t_i and the midpoints.
    let terminal_cov: Vec<Option<OUCovariance>> = grid[..m]
        .iter()
        .map(|&t| covariance(horizon - t, &modes).map(Some))
        .chain(std::iter::once(Ok(None)))
        .collect::<Result<_>>()?;
    let mid_times: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();

    // Initial iterate: P_{T−t}φ and its B-gradient at the training states.
    let terminal_term: Vec<Vec<(f64, Vec<f64>)>> = (0..=m)
        .map(|i| {
            states[i]
                .par_iter()
                .map(|x| match &terminal_cov[i] {
                    Some(cov) => {
                        let mut mean = vec![0.0; x.len()];
                        cov.propagate(x, &mut mean);
                        let mut g = vec![0.0; n];
                        let v = rule.value_and_gradient(cov, &mean, |y| phi.eval(y), &mut g);
                        (v, g)
                    }
                    None => (phi.eval(x), terminal_bgrad(phi, x)),
                })
                .collect()
        })
        .collect();

    let fit = |i: usize, pts: &[(f64, Vec<f64>)]| -> Result<(Vec<f64>, Vec<f64>)> {
        let features = feat.matrix(pts.len(), |r| states[i][r].as_slice());
        let values: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let grads: Vec<f64> = pts.iter().flat_map(|p| p.1.iter().copied()).collect();
        if values.iter().chain(&grads).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("Picard iterate at slot {i}") });
        }
        let vf = least_squares(&features, p, &values, 1, opts.basis.ridge)?;
        let gf = least_squares(&features, p, &grads, n, opts.basis.ridge)?;
        Ok((vf.coeffs, gf.coeffs))
    };

    let mut iterate: Vec<(Vec<f64>, Vec<f64>)> = (0..=m).map(|i| fit(i, &terminal_term[i])).collect::<Result<_>>()?;
    let mut field = ValueField::new(
        grid.to_vec(),
        n,
        opts.basis.clone(),
        iterate.iter().map(|c| c.0.clone()).collect(),
        iterate.iter().map(|c| c.1.clone()).collect(),
    )?;
    let weight = |x: &[f64]| 1.0 / (1.0 + h_norm(x).powf(opts.r + 1.0));
    let anchor_values = |f: &ValueField| -> Vec<f64> { anchors.iter().map(|(t, x)| f.value(*t, x)).collect() };
    let mut previous = anchor_values(&field);
    let mut sweeps = Vec::new();
    let mut converged = psi_tilde.is_zero();
    let mut streak = 0;
    let mut last_update = f64::NAN;

    while !converged && sweeps.len() < opts.max_iter {
        let mids: Vec<Midpoint> = (0..m)
            .map(|k| {
                let terminal = k + 1 == m;
                let (value, grad) = if terminal {
                    (iterate[k].0.iter().map(|c| 0.5 * c).collect(), iterate[k].1.iter().map(|c| 0.5 * c).collect())
                } else {
                    (average(&iterate[k].0, &iterate[k + 1].0), average(&iterate[k].1, &iterate[k + 1].1))
                };
                Midpoint { time: mid_times[k], value, grad, terminal }
            })
            .collect();
        let integrand = |mid: &Midpoint, y: &[f64]| -> f64 {
            let mut f = vec![0.0; p];
            feat.eval(y, &mut f);
            let mut v = f.iter().zip(&mid.value).map(|(a, b)| a * b).sum::<f64>();
            let mut z = vec![0.0; n];
            apply(&mid.grad, &f, &mut z);
            if mid.terminal {
                v += 0.5 * phi.eval(y);
                for (zk, gk) in z.iter_mut().zip(terminal_bgrad(phi, y)) {
                    *zk += 0.5 * gk;
                }
            }
            psi_tilde.eval(mid.time, y, v, &z)
        };

        let mut next = Vec::with_capacity(m + 1);
        for i in 0..=m {
            if i == m {
                next.push(iterate[m].clone());
                continue;
            }
            let covs: Vec<OUCovariance> = (i..m)
                .map(|k| covariance(mid_times[k] - grid[i], &modes))
                .collect::<Result<_>>()?;
            let pts: Vec<(f64, Vec<f64>)> = states[i]
                .par_iter()
                .zip(terminal_term[i].par_iter())
                .map(|(x, base)| {
                    let mut v = base.0;
                    let mut g = base.1.clone();
                    let mut mean = vec![0.0; x.len()];
                    let mut gk = vec![0.0; n];
                    for (k, cov) in (i..m).zip(&covs) {
                        cov.propagate(x, &mut mean);
                        let dt = grid[k + 1] - grid[k];
                        let val = rule.value_and_gradient(cov, &mean, |y| integrand(&mids[k], y), &mut gk);
                        v += dt * val;
                        for (a, b) in g.iter_mut().zip(&gk) {
                            *a += dt * b;
                        }
                    }
                    (v, g)
                })
                .collect();
            next.push(fit(i, &pts)?);
        }
        iterate = next;
        field = ValueField::new(
            grid.to_vec(),
            n,
            opts.basis.clone(),
            iterate.iter().map(|c| c.0.clone()).collect(),
            iterate.iter().map(|c| c.1.clone()).collect(),
        )?;
        let current = anchor_values(&field);
        let update = anchors
            .iter()
            .zip(current.iter().zip(&previous))
            .map(|((_, x), (a, b))| weight(x) * (a - b).abs())
            .fold(0.0, f64::max);
        let ratio = if last_update.is_nan() || last_update == 0.0 { 0.0 } else { update / last_update };
        sweeps.push(PicardSweep { iteration: sweeps.len() + 1, update, ratio, value_at_start: current[0] });
        streak = if ratio > 0.9 { streak + 1 } else { 0 };
        if streak >= 3 {
            return Err(Error::NonContraction { ratio, streak });
        }
        converged = update < opts.tol;
        last_update = update;
        previous = current;
    }

    let certificate = GrowthCertificate::fit(
        &field,
        opts.r,
        (0..=m).flat_map(|i| states[i].iter().map(move |x| (grid[i], x.as_slice()))),
    );
    field.growth_certificate = Some(certificate);
    Ok(PicardSolution { field, sweeps, converged, anchors })
}

fn average(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// `∇^B φ(x)`: central differences along each velocity coordinate.
pub fn terminal_bgrad(phi: &dyn Functional, x: &[f64]) -> Vec<f64> {
    let n = x.len() / 2;
    let modes = phi.active_modes();
    let mut y = x.to_vec();
    (0..n)
        .map(|k| {
            if modes.as_ref().is_some_and(|m| !m.contains(&(k + 1))) {
                return 0.0;
            }
            let j = 2 * k + 1;
            let h = 1e-5 * x[j].abs().max(1.0);
            y[j] = x[j] + h;
            let plus = phi.eval(&y);
            y[j] = x[j] - h;
            let minus = phi.eval(&y);
            y[j] = x[j];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Plugs `field` back into the right-hand side of the mild equation at the
/// anchors and returns the largest weighted change.
pub fn fixed_point_residual(
    field: &ValueField,
    phi: &dyn Functional,
    psi_tilde: &dyn Driver,
    anchors: &[(f64, Vec<f64>)],
    quad: &QuadratureScheme,
    r: f64,
) -> Result<f64> {
    let n = field.n_modes;
    let modes = ModeBasis::new(n)?;
    let rule: GaussianRule = quad.rule(n)?;
    let grid = &field.grid;
    let m = grid.len() - 1;
    let horizon = grid[m];
    let mut worst: f64 = 0.0;
    for (t, x) in anchors {
        let i = grid.iter().position(|g| (g - t).abs() < 1e-12).ok_or_else(|| {
            Error::InvalidArgument("anchors must sit on grid times".into())
        })?;
        let mut mean = vec![0.0; x.len()];
        let mut g = vec![0.0; n];
        let mut rhs = if i == m {
            phi.eval(x)
        } else {
            let cov = covariance(horizon - t, &modes)?;
            cov.propagate(x, &mut mean);
            rule.value_and_gradient(&cov, &mean, |y| phi.eval(y), &mut g)
        };
        for k in i..m {
            let s = 0.5 * (grid[k] + grid[k + 1]);
            let cov = covariance(s - t, &modes)?;
            cov.propagate(x, &mut mean);
            let f = |y: &[f64]| {
                let mut z = vec![0.0; n];
                let v = if k + 1 == m {
                    let mut zl = vec![0.0; n];
                    field.bgrad_at(k, y, &mut zl);
                    for ((a, b), c) in z.iter_mut().zip(&zl).zip(terminal_bgrad(phi, y)) {
                        *a = 0.5 * (b + c);
                    }
                    0.5 * (field.value_at(k, y) + phi.eval(y))
                } else {
                    field.bgrad(s, y, &mut z);
                    field.value(s, y)
                };
                psi_tilde.eval(s, y, v, &z)
            };
            rhs += (grid[k + 1] - grid[k]) * rule.value_and_gradient(&cov, &mean, f, &mut g);
        }
        let w = 1.0 / (1.0 + h_norm(x).powf(r + 1.0));
        worst = worst.max(w * (rhs - field.value(*t, x)).abs());
    }
    Ok(worst)
}
