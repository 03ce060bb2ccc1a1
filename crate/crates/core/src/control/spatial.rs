//! Spatial quadrature on `[0, 1]` and the registered wave-problem data.

use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::spectral_ou::DriftField;
use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

/// Simpson nodes on `[0, 1]`.
pub const SPATIAL_POINTS: usize = 129;

/// Composite Simpson rule with the sine basis `√2 sin(kπξ)` tabulated at its nodes.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    n_modes: usize,
    /// Node-major table of `√2 sin(kπξ_j)`.
    sines: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(n_modes: usize) -> Result<Self> {
        Self::with_points(n_modes, SPATIAL_POINTS)
    }

    pub fn with_points(n_modes: usize, points: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidArgument("spatial grid needs at least one mode".into()));
        }
        if points < 3 || points % 2 == 0 {
            return Err(Error::InvalidArgument(format!("Simpson needs an odd node count >= 3, got {points}")));
        }
        let h = 1.0 / (points - 1) as f64;
        let nodes: Vec<f64> = (0..points).map(|j| j as f64 * h).collect();
        let weights = (0..points)
            .map(|j| {
                let w = if j == 0 || j == points - 1 {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect();
        let mut sines = Vec::with_capacity(points * n_modes);
        for &xi in &nodes {
            for k in 1..=n_modes {
                sines.push(SQRT_2 * (k as f64 * PI * xi).sin());
            }
        }
        Ok(Self { nodes, weights, n_modes, sines })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `y(ξ_j) = Σ_k y_k √2 sin(kπξ_j)` from interleaved coordinates.
    pub fn positions(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n_modes;
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.sines[j * n..(j + 1) * n];
            *o = row.iter().enumerate().map(|(k, s)| s * x[2 * k]).sum();
        }
    }

    /// Sine coefficients `∫ v(ξ) √2 sin(kπξ) dξ` of nodal values.
    pub fn project(&self, values: &[f64], out: &mut [f64]) {
        let n = self.n_modes;
        out.fill(0.0);
        for (j, (&v, &w)) in values.iter().zip(&self.weights).enumerate() {
            let wv = w * v;
            if wv == 0.0 {
                continue;
            }
            for (o, s) in out.iter_mut().zip(&self.sines[j * n..(j + 1) * n]) {
                *o += wv * s;
            }
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// A pointwise integrand `(ξ, y) ↦ (value, ∂_y value)`.
pub trait Integrand: Send + Sync {
    fn eval(&self, xi: f64, y: f64) -> (f64, f64);
}

/// `weight · (√(width² + y²) − width)`.
#[derive(Debug, Clone, Copy)]
pub struct SoftAbsCost {
    pub weight: f64,
    pub width: f64,
}

impl Integrand for SoftAbsCost {
    fn eval(&self, _xi: f64, y: f64) -> (f64, f64) {
        let r = (self.width * self.width + y * y).sqrt();
        (self.weight * (r - self.width), self.weight * y / r)
    }
}

/// `weight · √(width² + (y − amplitude·sin πξ)²)`.
#[derive(Debug, Clone, Copy)]
pub struct SoftAbsTarget {
    pub weight: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Integrand for SoftAbsTarget {
    fn eval(&self, xi: f64, y: f64) -> (f64, f64) {
        let d = y - self.amplitude * (PI * xi).sin();
        let r = (self.width * self.width + d * d).sqrt();
        (self.weight * r, self.weight * d / r)
    }
}

/// `y²`.
#[derive(Debug, Clone, Copy)]
pub struct Square;

impl Integrand for Square {
    fn eval(&self, _xi: f64, y: f64) -> (f64, f64) {
        (y * y, 2.0 * y)
    }
}

/// `x ↦ ∫ f̂(ξ, y(ξ)) dξ`.
pub struct SpatialFunctional<I> {
    grid: Arc<SpatialGrid>,
    integrand: I,
}

impl<I: Integrand> SpatialFunctional<I> {
    pub fn new(grid: Arc<SpatialGrid>, integrand: I) -> Self {
        Self { grid, integrand }
    }
}

impl<I: Integrand> Functional for SpatialFunctional<I> {
    fn eval(&self, x: &[f64]) -> f64 {
        let g = &*self.grid;
        let mut y = vec![0.0; g.len()];
        g.positions(x, &mut y);
        g.nodes.iter().zip(&g.weights).zip(&y).map(|((&xi, &w), &yj)| w * self.integrand.eval(xi, yj).0).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let g = &*self.grid;
        let mut y = vec![0.0; g.len()];
        g.positions(x, &mut y);
        for (yj, &xi) in y.iter_mut().zip(&g.nodes) {
            *yj = self.integrand.eval(xi, *yj).1;
        }
        let mut modal = vec![0.0; g.n_modes()];
        g.project(&y, &mut modal);
        out.fill(0.0);
        for (k, v) in modal.into_iter().enumerate() {
            out[2 * k] = v;
        }
    }
}

/// `x ↦ a·y_k + b·z_k`.
#[derive(Debug, Clone, Copy)]
pub struct ModeLinear {
    pub mode: usize,
    pub y: f64,
    pub z: f64,
}

impl Functional for ModeLinear {
    fn eval(&self, x: &[f64]) -> f64 {
        let s = 2 * (self.mode - 1);
        self.y * x[s] + self.z * x[s + 1]
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        Some(vec![self.mode])
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let s = 2 * (self.mode - 1);
        out[s] = self.y;
        out[s + 1] = self.z;
    }
}

/// `x ↦ weight · √(width² + (y_k − center)²)`.
#[derive(Debug, Clone, Copy)]
pub struct ModeSoftAbs {
    pub mode: usize,
    pub weight: f64,
    pub center: f64,
    pub width: f64,
}

impl Functional for ModeSoftAbs {
    fn eval(&self, x: &[f64]) -> f64 {
        let d = x[2 * (self.mode - 1)] - self.center;
        self.weight * (self.width * self.width + d * d).sqrt()
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        Some(vec![self.mode])
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let s = 2 * (self.mode - 1);
        let d = x[s] - self.center;
        out[s] = self.weight * d / (self.width * self.width + d * d).sqrt();
    }
}

/// `G(x)_k = ∫ κ sin(y(ξ)) √2 sin(kπξ) dξ`. Bounded by `κ` and `κ`-Lipschitz in `y`.
pub struct SineDrift {
    grid: Arc<SpatialGrid>,
    pub kappa: f64,
}

impl SineDrift {
    pub fn new(grid: Arc<SpatialGrid>, kappa: f64) -> Self {
        Self { grid, kappa }
    }
}

impl DriftField for SineDrift {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let g = &*self.grid;
        let mut y = vec![0.0; g.len()];
        g.positions(x, &mut y);
        for v in &mut y {
            *v = self.kappa * v.sin();
        }
        g.project(&y, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::finite_difference_gradient;

    #[test]
    fn simpson_weights_integrate_constants() {
        let g = SpatialGrid::new(4).unwrap();
        assert!((g.integrate(&vec![1.0; g.len()]) - 1.0).abs() < 1e-14);
        assert!(SpatialGrid::with_points(4, 128).is_err());
    }

    #[test]
    fn sine_table_is_orthonormal() {
        let n = 6;
        let g = SpatialGrid::new(n).unwrap();
        for a in 0..n {
            for b in 0..n {
                let vals: Vec<f64> = (0..g.len()).map(|j| g.sines[j * n + a] * g.sines[j * n + b]).collect();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((g.integrate(&vals) - want).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn squared_single_mode_is_exact() {
        let g = Arc::new(SpatialGrid::new(3).unwrap());
        let phi = SpatialFunctional::new(g, Square);
        for y1 in [-1.5, 0.2, 3.0] {
            let x = [y1, 0.7, 0.0, 0.0, 0.0, -0.4];
            assert!((phi.eval(&x) - y1 * y1).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_inverts_reconstruction() {
        let g = SpatialGrid::new(5).unwrap();
        let x = [0.3, 0.0, -0.2, 0.0, 0.1, 0.0, 0.05, 0.0, -0.4, 0.0];
        let mut field = vec![0.0; g.len()];
        g.positions(&x, &mut field);
        let mut back = vec![0.0; 5];
        g.project(&field, &mut back);
        for k in 0..5 {
            assert!((back[k] - x[2 * k]).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let g = Arc::new(SpatialGrid::new(4).unwrap());
        let x = [0.3, 1.0, -0.2, 0.5, 0.4, -1.0, 0.1, 0.2];
        let fs: Vec<Box<dyn Functional>> = vec![
            Box::new(SpatialFunctional::new(g.clone(), SoftAbsCost { weight: 2.0, width: 0.1 })),
            Box::new(SpatialFunctional::new(g.clone(), SoftAbsTarget { weight: 1.0, width: 0.2, amplitude: 1.0 })),
            Box::new(ModeSoftAbs { mode: 2, weight: 1.5, center: 0.1, width: 0.3 }),
            Box::new(ModeLinear { mode: 3, y: 1.0, z: -2.0 }),
        ];
        for f in &fs {
            let mut a = vec![0.0; 8];
            let mut b = vec![0.0; 8];
            f.gradient(&x, &mut a);
            finite_difference_gradient(|y| f.eval(y), &x, &mut b);
            for j in 0..8 {
                assert!((a[j] - b[j]).abs() < 1e-7, "{j}: {} vs {}", a[j], b[j]);
            }
        }
    }

    #[test]
    fn sine_drift_matches_small_amplitude_linearization() {
        let g = Arc::new(SpatialGrid::new(3).unwrap());
        let drift = SineDrift::new(g, 0.5);
        let x = [1e-6, 0.0, -2e-6, 0.0, 0.5e-6, 0.0];
        let mut out = [0.0; 3];
        drift.drift(0.0, &x, &mut out);
        for k in 0..3 {
            assert!((out[k] - 0.5 * x[2 * k]).abs() < 1e-15);
        }
    }
}
