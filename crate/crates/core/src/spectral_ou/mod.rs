//! Spectral representation of the damped-free wave operator
//! `A = [[0, I], [-Λ, 0]]` on `H = L² ⊕ H⁻¹(0,1)` in the Dirichlet sine basis.
//!
//! Each mode `k` evolves as an independent 2×2 linear system driven through its
//! velocity component, so the semigroup, the stochastic convolution covariance
//! and the response to a frozen forcing are all available in closed form.

mod covariance;
mod simulate;
mod state;

pub use covariance::{covariance, covariance_block, OUCovariance, EIGEN_FLOOR};
pub use simulate::{sample_ou_step, simulate_paths, uniform_grid, DriftField, PathBundle, ZeroDrift};
pub use state::{h_norm, h_norm_sq, StateVector};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Mul;

/// One Dirichlet eigenmode of `-∂²/∂ξ²` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    /// 1-based mode number.
    pub index: usize,
    pub lambda: f64,
    pub omega: f64,
}

impl ModeSpec {
    pub fn new(index: usize) -> Self {
        let omega = index as f64 * PI;
        Self { index, lambda: omega * omega, omega }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    modes: Vec<ModeSpec>,
}

impl ModeBasis {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self { modes: build_mode_basis(n)? })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Number of real coordinates of a state (position and velocity per mode).
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn mode(&self, slot: usize) -> &ModeSpec {
        &self.modes[slot]
    }
}

pub fn build_mode_basis(n: usize) -> Result<Vec<ModeSpec>> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be at least 1".into()));
    }
    Ok((1..=n).map(ModeSpec::new).collect())
}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn transpose(&self) -> Mat2 {
        let m = self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn add(&self, other: &Mat2) -> Mat2 {
        let (a, b) = (self.0, other.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        d
    }

    /// Eigenvalues of a symmetric matrix, ascending.
    pub fn sym_eigenvalues(&self) -> [f64; 2] {
        let m = self.0;
        let mean = 0.5 * (m[0][0] + m[1][1]);
        let half_gap = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[1][0]).max(0.0).sqrt();
        [mean - half_gap, mean + half_gap]
    }

    /// Spectral norm.
    pub fn norm2(&self) -> f64 {
        let gram = self.transpose() * *self;
        gram.sym_eigenvalues()[1].max(0.0).sqrt()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }
}

/// Per-mode block of `e^{tA}`: the exact exponential of `[[0, 1], [-ω², 0]] t`.
pub fn mode_semigroup(mode: &ModeSpec, t: f64) -> Mat2 {
    let w = mode.omega;
    let (s, c) = (w * t).sin_cos();
    Mat2([[c, s / w], [-w * s, c]])
}

/// Per-mode response `∫₀ᵗ e^{sA} B ds` to a unit forcing held constant on `[0, t]`.
pub fn mode_forcing(mode: &ModeSpec, t: f64) -> [f64; 2] {
    let w = mode.omega;
    let half = (0.5 * w * t).sin();
    [2.0 * half * half / (w * w), (w * t).sin() / w]
}

/// `e^{tA} B` for one mode.
pub fn mode_actuation(mode: &ModeSpec, t: f64) -> [f64; 2] {
    let w = mode.omega;
    let (s, c) = (w * t).sin_cos();
    [s / w, c]
}

/// Applies `e^{tA}` to a full coordinate vector.
pub fn propagate(basis: &ModeBasis, t: f64, x: &[f64], out: &mut [f64]) {
    for (k, mode) in basis.modes().iter().enumerate() {
        let p = mode_semigroup(mode, t).apply([x[2 * k], x[2 * k + 1]]);
        out[2 * k] = p[0];
        out[2 * k + 1] = p[1];
    }
}

/// Growth bound `‖e^{tA}‖ ≤ N e^{ω t}` of the semigroup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupBounds {
    pub growth: f64,
    pub rate: f64,
}

impl SemigroupBounds {
    /// Bounds of the wave group in the energy-equivalent norm of `H`.
    pub fn wave() -> Self {
        Self { growth: 1.0, rate: 0.0 }
    }

    /// Largest violation of `‖e^{tA}_k‖_H ≤ N e^{ω t}` over the given modes and
    /// times, measured in the weighted norm `y² + z²/λ`.
    pub fn max_violation(&self, basis: &ModeBasis, times: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for mode in basis.modes() {
            for &t in times {
                let norm = weighted_norm(mode, &mode_semigroup(mode, t));
                worst = worst.max(norm - self.growth * (self.rate * t).exp());
            }
        }
        worst
    }
}

/// Operator norm of a per-mode block in the weighted norm `y² + z²/λ`.
pub fn weighted_norm(mode: &ModeSpec, m: &Mat2) -> f64 {
    let w = mode.omega;
    let scale = Mat2([[1.0, 0.0], [0.0, 1.0 / w]]);
    let unscale = Mat2([[1.0, 0.0], [0.0, w]]);
    (scale * *m * unscale).norm2()
}
