use super::{covariance, ModeBasis, OUCovariance, StateVector};
use crate::error::{Error, Result};
use crate::rng::{self, Domain, SeedRecord};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A control-space drift `(t, x) ↦ d` entering the dynamics as `B d`.
pub trait DriftField: Send + Sync {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDrift;

impl DriftField for ZeroDrift {
    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn is_zero(&self) -> bool {
        true
    }
}

impl<F> DriftField for F
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self(t, x, out)
    }
}

/// Draws one transition of the OU process: a sample of `N(e^{δA} x, Q_δ)`.
pub fn sample_ou_step(
    x: &StateVector,
    delta: f64,
    cov: &OUCovariance,
    rng: &mut ChaCha8Rng,
) -> Result<StateVector> {
    if (cov.sigma - delta).abs() > 1e-14 * delta.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "covariance was built for sigma = {}, step is {delta}",
            cov.sigma
        )));
    }
    if cov.n_modes() != x.n_modes() {
        return Err(Error::InvalidArgument("state and covariance mode counts differ".into()));
    }
    let mut normals = vec![0.0; x.len()];
    rng::fill_normals(rng, &mut normals);
    let mut mean = vec![0.0; x.len()];
    cov.propagate(x, &mut mean);
    let mut out = vec![0.0; x.len()];
    cov.shift(&mean, &normals, &mut out);
    Ok(StateVector::from_coords(out))
}

/// Simulated trajectories on a shared time grid.
///
/// Storage is path-major. `noise` keeps the standard normal draws `u` of every
/// step; the sampled convolution increment is `L u` with `L` the step's
/// covariance factor.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: Vec<f64>,
    pub seed_record: SeedRecord,
    n_modes: usize,
    n_paths: usize,
    states: Vec<f64>,
    noise: Vec<f64>,
    steps: Vec<OUCovariance>,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.grid[step + 1] - self.grid[step]
    }

    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let d = self.dim();
        let start = (path * self.grid.len() + step) * d;
        &self.states[start..start + d]
    }

    pub fn noise(&self, path: usize, step: usize) -> &[f64] {
        let d = self.dim();
        let start = (path * self.n_steps() + step) * d;
        &self.noise[start..start + d]
    }

    pub fn step_covariance(&self, step: usize) -> &OUCovariance {
        &self.steps[step]
    }

    /// Brownian increment over `[t_step, t_step+1]` conditioned on the sampled
    /// convolution increment: `E[ΔW_k | ξ_k] = ⟨L_k⁻¹ c_k, u_k⟩`.
    pub fn brownian_increment(&self, path: usize, step: usize, out: &mut [f64]) {
        let u = self.noise(path, step);
        for (k, load) in self.steps[step].brownian_loading.iter().enumerate() {
            out[k] = load[0] * u[2 * k] + load[1] * u[2 * k + 1];
        }
    }

    /// Per-mode step weights `⟨L_k⁻¹ e^{ΔA_k} B_k, u_k⟩`: with them
    /// `E[f(X_{i+1}) weight_k | X_i]` is the `B`-derivative of `P_Δ f` along mode `k`.
    pub fn gradient_weight(&self, path: usize, step: usize, out: &mut [f64]) {
        let u = self.noise(path, step);
        for (k, w) in self.steps[step].whitened_actuation.iter().enumerate() {
            out[k] = w[0] * u[2 * k] + w[1] * u[2 * k + 1];
        }
    }

    /// The sampled convolution increment `ξ = L u` of a step.
    pub fn convolution(&self, path: usize, step: usize, out: &mut [f64]) {
        let zero = vec![0.0; out.len()];
        self.steps[step].shift(&zero, self.noise(path, step), out);
    }

    /// Raw storage: all states, path-major.
    pub fn states_raw(&self) -> &[f64] {
        &self.states
    }

    pub fn noise_raw(&self) -> &[f64] {
        &self.noise
    }
}

fn validate_grid(t: f64, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("time grid needs at least two points".into()));
    }
    if (grid[0] - t).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "time grid starts at {} but the start time is {t}",
            grid[0]
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidArgument("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Simulates `dX = (AX + B d(t, X)) dt + B dW` from `x` at time `t`.
///
/// Each step integrates the linear part exactly and holds the drift fixed:
/// `X_{i+1} = e^{ΔA} X_i + (∫₀^Δ e^{sA} ds) B d(t_i, X_i) + ξ_i`, with
/// `ξ_i ~ N(0, Q_Δ)`. With a zero drift every grid marginal is exact.
pub fn simulate_paths<D: DriftField + ?Sized>(
    t: f64,
    x: &StateVector,
    grid: &[f64],
    drift: &D,
    n_paths: usize,
    seed: SeedRecord,
) -> Result<PathBundle> {
    validate_grid(t, grid)?;
    if n_paths == 0 {
        return Err(Error::InvalidArgument("path count must be positive".into()));
    }
    let n_modes = x.n_modes();
    let basis = ModeBasis::new(n_modes)?;
    let dim = 2 * n_modes;
    let m = grid.len() - 1;
    let steps: Vec<OUCovariance> = grid
        .windows(2)
        .map(|w| covariance(w[1] - w[0], &basis))
        .collect::<Result<_>>()?;

    let state_stride = (m + 1) * dim;
    let noise_stride = m * dim;
    let mut states = vec![0.0; n_paths * state_stride];
    let mut noise = vec![0.0; n_paths * noise_stride];
    let zero_drift = drift.is_zero();

    states
        .par_chunks_mut(state_stride)
        .zip(noise.par_chunks_mut(noise_stride))
        .enumerate()
        .try_for_each(|(p, (path_states, path_noise))| -> Result<()> {
            path_states[..dim].copy_from_slice(x);
            let mut d = vec![0.0; n_modes];
            let mut mean = vec![0.0; dim];
            for i in 0..m {
                let cov = &steps[i];
                let mut rng = rng::stream(seed.base_seed, Domain::Paths, seed.first_stream + p as u64, i as u64);
                let u = &mut path_noise[i * dim..(i + 1) * dim];
                rng::fill_normals(&mut rng, u);
                let (head, tail) = path_states.split_at_mut((i + 1) * dim);
                let current = &head[i * dim..];
                cov.propagate(current, &mut mean);
                if !zero_drift {
                    drift.drift(grid[i], current, &mut d);
                    if d.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite {
                            context: format!("drift at t = {} on path {p}", grid[i]),
                        });
                    }
                    for (k, f) in cov.forcing.iter().enumerate() {
                        mean[2 * k] += f[0] * d[k];
                        mean[2 * k + 1] += f[1] * d[k];
                    }
                }
                cov.shift(&mean, u, &mut tail[..dim]);
            }
            Ok(())
        })?;

    Ok(PathBundle {
        grid: grid.to_vec(),
        seed_record: seed,
        n_modes,
        n_paths,
        states,
        noise,
        steps,
    })
}

/// Uniform grid of `m` steps on `[t, horizon]`.
pub fn uniform_grid(t: f64, horizon: f64, m: usize) -> Vec<f64> {
    let h = (horizon - t) / m as f64;
    (0..=m).map(|i| if i == m { horizon } else { t + i as f64 * h }).collect()
}
