//! Real functionals on the state space and BSDE drivers.

use std::sync::Arc;

/// A real functional on coefficient space.
pub trait Functional: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// 1-based modes the functional depends on, when it is mode-limited.
    fn active_modes(&self) -> Option<Vec<usize>> {
        None
    }

    /// Gradient in coefficient coordinates; central differences by default.
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        finite_difference_gradient(|y| self.eval(y), x, out);
    }
}

/// Central-difference gradient with relative steps.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
    let mut y = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-5 * x[j].abs().max(1.0);
        y[j] = x[j] + h;
        let plus = f(&y);
        y[j] = x[j] - h;
        let minus = f(&y);
        y[j] = x[j];
        out[j] = (plus - minus) / (2.0 * h);
    }
}

impl<F> Functional for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

impl Functional for Arc<dyn Functional> {
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        (**self).active_modes()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient(x, out)
    }
}

/// Attaches a declaration of the modes a functional reads.
pub struct ModeLimited<F> {
    inner: F,
    modes: Vec<usize>,
}

impl<F: Functional> ModeLimited<F> {
    pub fn new(inner: F, modes: Vec<usize>) -> Self {
        Self { inner, modes }
    }
}

impl<F: Functional> Functional for ModeLimited<F> {
    fn eval(&self, x: &[f64]) -> f64 {
        self.inner.eval(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out)
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        Some(self.modes.clone())
    }
}

/// Generator `ψ(t, x, y, z)` of a backward equation; `z` lives in control space.
pub trait Driver: Send + Sync {
    fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64;

    /// Lipschitz constant in `y`.
    fn y_lipschitz(&self) -> f64 {
        0.0
    }

    fn is_zero(&self) -> bool {
        false
    }

    /// 1-based modes of `x` the driver reads, when it is mode-limited in `x`.
    fn active_modes(&self) -> Option<Vec<usize>> {
        None
    }
}

impl Driver for Arc<dyn Driver> {
    fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        (**self).eval(t, x, y, z)
    }

    fn y_lipschitz(&self) -> f64 {
        (**self).y_lipschitz()
    }

    fn is_zero(&self) -> bool {
        (**self).is_zero()
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        (**self).active_modes()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDriver;

impl Driver for ZeroDriver {
    fn eval(&self, _t: f64, _x: &[f64], _y: f64, _z: &[f64]) -> f64 {
        0.0
    }

    fn is_zero(&self) -> bool {
        true
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        Some(Vec::new())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantDriver(pub f64);

impl Driver for ConstantDriver {
    fn eval(&self, _t: f64, _x: &[f64], _y: f64, _z: &[f64]) -> f64 {
        self.0
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        Some(Vec::new())
    }
}

/// Driver from a closure, with declared `y`-Lipschitz constant and mode support.
pub struct FnDriver<F> {
    f: F,
    k_y: f64,
    modes: Option<Vec<usize>>,
}

impl<F> FnDriver<F>
where
    F: Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, k_y: 0.0, modes: None }
    }

    pub fn with_y_lipschitz(mut self, k: f64) -> Self {
        self.k_y = k;
        self
    }

    pub fn with_active_modes(mut self, modes: Vec<usize>) -> Self {
        self.modes = Some(modes);
        self
    }
}

impl<F> Driver for FnDriver<F>
where
    F: Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.f)(t, x, y, z)
    }

    fn y_lipschitz(&self) -> f64 {
        self.k_y
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        self.modes.clone()
    }
}

/// Driver plus a constant: `ψ + c`.
pub struct ShiftedDriver<D> {
    pub inner: D,
    pub shift: f64,
}

impl<D: Driver> Driver for ShiftedDriver<D> {
    fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        self.inner.eval(t, x, y, z) + self.shift
    }

    fn y_lipschitz(&self) -> f64 {
        self.inner.y_lipschitz()
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        self.inner.active_modes()
    }
}
