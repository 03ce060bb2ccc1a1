//! Control Hamiltonian `h(z) = inf_{u∈K} { g(u) + ⟨z, R u⟩ }`, its minimizing
//! selection `γ(z)`, the driver `ψ = ḡ + h` and the growth-regime validator.
//!
//! `R` is diagonal, so `⟨z, R u⟩ = ⟨R z, u⟩` and everything reduces to the
//! identity-actuation problem at `w = R z`. Norm costs reduce to a radial
//! problem along `−w/|w|`; modal costs separate per component.

mod growth;

pub use growth::{validate_growth_hypotheses, z_modulus_audit, DriverGrowthParams, GrowthCheck, GrowthReport, ModulusAudit};

use crate::error::{Error, Result};
use crate::functional::{Driver, Functional};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Points of the coarse minimization grid.
pub const GRID_POINTS: usize = 257;
const GOLDEN_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSet {
    Full,
    Ball { radius: f64 },
    /// The same interval for every component.
    Box { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlCost {
    /// `weight · |u|^q`.
    NormPower { q: f64, weight: f64 },
    /// `weight · Σ_k |u_k|^q`.
    ModalPower { q: f64, weight: f64 },
}

impl ControlCost {
    pub fn q(&self) -> f64 {
        match self {
            ControlCost::NormPower { q, .. } | ControlCost::ModalPower { q, .. } => *q,
        }
    }

    pub fn weight(&self) -> f64 {
        match self {
            ControlCost::NormPower { weight, .. } | ControlCost::ModalPower { weight, .. } => *weight,
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            ControlCost::NormPower { q, weight } => weight * u.iter().map(|v| v * v).sum::<f64>().sqrt().powf(*q),
            ControlCost::ModalPower { q, weight } => weight * u.iter().map(|v| v.abs().powf(*q)).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub control_set: ControlSet,
    pub cost: ControlCost,
    /// Diagonal of `R`; empty means the identity.
    #[serde(default)]
    pub actuation: Vec<f64>,
    pub closed_form: bool,
}

/// Minimizer and value of a scalar problem `c|s|^q + a s` on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
struct Scalar {
    s: f64,
    value: f64,
}

impl HamiltonianSpec {
    pub fn new(control_set: ControlSet, cost: ControlCost, actuation: Vec<f64>, closed_form: bool) -> Result<Self> {
        let spec = Self { control_set, cost, actuation, closed_form };
        spec.check()?;
        Ok(spec)
    }

    /// Quadratic cost `|u|²` on the full space with identity actuation.
    pub fn quadratic() -> Self {
        Self::power(2.0)
    }

    /// `|u|^q` on the full space with identity actuation, closed form.
    pub fn power(q: f64) -> Self {
        Self {
            control_set: ControlSet::Full,
            cost: ControlCost::NormPower { q, weight: 1.0 },
            actuation: Vec::new(),
            closed_form: true,
        }
    }

    pub fn check(&self) -> Result<()> {
        let q = self.cost.q();
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!("cost exponent must be at least 1, got {q}")));
        }
        if !(self.cost.weight() > 0.0 && self.cost.weight().is_finite()) {
            return Err(Error::InvalidArgument("cost weight must be positive".into()));
        }
        if self.actuation.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("actuation entries must be finite".into()));
        }
        match (&self.control_set, &self.cost) {
            (ControlSet::Ball { radius }, ControlCost::NormPower { .. }) if !(*radius > 0.0) => {
                Err(Error::InvalidArgument("ball radius must be positive".into()))
            }
            (ControlSet::Box { lower, upper }, ControlCost::ModalPower { .. }) if !(lower <= upper) => {
                Err(Error::InvalidArgument("box needs lower <= upper".into()))
            }
            (ControlSet::Ball { .. }, ControlCost::ModalPower { .. }) => Err(Error::InvalidArgument(
                "modal costs need a full or box control set".into(),
            )),
            (ControlSet::Box { .. }, ControlCost::NormPower { .. }) => Err(Error::InvalidArgument(
                "norm costs need a full or ball control set".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn q(&self) -> f64 {
        self.cost.q()
    }

    /// Conjugate exponent `p = q/(q−1)`.
    pub fn p(&self) -> f64 {
        let q = self.q();
        q / (q - 1.0)
    }

    fn r(&self, k: usize) -> f64 {
        self.actuation.get(k).copied().unwrap_or(if self.actuation.is_empty() { 1.0 } else { 0.0 })
    }

    /// Largest `|R_kk|`.
    pub fn actuation_bound(&self) -> f64 {
        if self.actuation.is_empty() {
            1.0
        } else {
            self.actuation.iter().fold(0.0, |m, r| m.max(r.abs()))
        }
    }

    pub fn is_feasible(&self, u: &[f64]) -> bool {
        match self.control_set {
            ControlSet::Full => true,
            ControlSet::Ball { radius } => u.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius * (1.0 + 1e-12),
            ControlSet::Box { lower, upper } => u.iter().all(|v| (lower..=upper).contains(v)),
        }
    }

    /// `g(u) + ⟨z, R u⟩`.
    pub fn objective(&self, z: &[f64], u: &[f64]) -> f64 {
        let lin: f64 = u.iter().enumerate().map(|(k, uk)| z[k] * self.r(k) * uk).sum();
        self.cost.eval(u) + lin
    }

    fn reduced(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(k, zk)| self.r(k) * zk).collect()
    }

    /// `h(z)`.
    pub fn value(&self, z: &[f64]) -> Result<f64> {
        Ok(self.solve(z)?.1)
    }

    /// `γ(z)`.
    pub fn optimal_control(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(z)?.0)
    }

    /// `(γ(z), h(z))`.
    pub fn solve(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "Hamiltonian argument".into() });
        }
        let w = self.reduced(z);
        let (q, c) = (self.q(), self.cost.weight());
        match (&self.cost, &self.control_set) {
            (ControlCost::NormPower { .. }, set) => {
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                let (lo, hi) = match set {
                    ControlSet::Ball { radius } => (0.0, Some(*radius)),
                    _ => (0.0, None),
                };
                // Radial problem along −w/|w|: minimize c s^q − |w| s over s ≥ 0.
                let sol = self.scalar(c, q, -norm, lo, hi)?;
                let u = if norm > 0.0 && sol.s > 0.0 {
                    w.iter().map(|v| -sol.s * v / norm).collect()
                } else {
                    vec![0.0; w.len()]
                };
                Ok((u, sol.value))
            }
            (ControlCost::ModalPower { .. }, set) => {
                let (lo, hi) = match set {
                    ControlSet::Box { lower, upper } => (Some(*lower), Some(*upper)),
                    _ => (None, None),
                };
                let mut u = Vec::with_capacity(w.len());
                let mut value = 0.0;
                for &a in &w {
                    let sol = match lo {
                        Some(l) => self.scalar(c, q, a, l, hi)?,
                        None => self.scalar_free(c, q, a)?,
                    };
                    u.push(sol.s);
                    value += sol.value;
                }
                Ok((u, value))
            }
        }
    }

    /// `c|s|^q + a s` over the whole line: the minimizer lies on the side opposite to `a`.
    fn scalar_free(&self, c: f64, q: f64, a: f64) -> Result<Scalar> {
        let half = self.scalar(c, q, -a.abs(), 0.0, None)?;
        Ok(Scalar { s: -a.signum() * half.s, value: half.value })
    }

    /// `c|s|^q + a s` over `[lo, hi]` (`hi = None` for an unbounded ray).
    fn scalar(&self, c: f64, q: f64, a: f64, lo: f64, hi: Option<f64>) -> Result<Scalar> {
        let f = |s: f64| c * s.abs().powf(q) + a * s;
        if self.closed_form && q > 1.0 {
            let free = -a.signum() * (a.abs() / (c * q)).powf(1.0 / (q - 1.0));
            let s = free.max(lo).min(hi.unwrap_or(f64::INFINITY));
            return Ok(Scalar { s, value: f(s) });
        }
        minimize_scalar(f, lo, hi, a, c, q)
    }

    /// Coefficient `γ` of the `z`-modulus `(C + γ/2 |z|^l + γ/2 |z'|^l)|z − z'|` of `h`.
    pub fn gamma_z(&self) -> f64 {
        let p = self.p();
        2.0 * self.actuation_bound().powf(p) * (self.cost.weight() * self.q()).powf(1.0 - p)
    }

    /// `C` in `|h(z)| ≤ C |z|^p`.
    pub fn growth_constant(&self) -> f64 {
        let p = self.p();
        self.actuation_bound().powf(p) * (self.cost.weight() * self.q()).powf(1.0 - p) / p
    }

    pub fn control_cost(&self, u: &[f64]) -> f64 {
        self.cost.eval(u)
    }
}

/// Coarse grid plus golden-section polish of `f` on `[lo, hi]`, where an open
/// upper end is replaced by an automatic box `1 + C(1 + |a|^{p−1})`.
fn minimize_scalar(f: impl Fn(f64) -> f64, lo: f64, hi: Option<f64>, a: f64, c: f64, q: f64) -> Result<Scalar> {
    let auto = |scale: f64| {
        let reach = if q > 1.0 { (a.abs() / (c * q)).powf(1.0 / (q - 1.0)) } else { a.abs() / c };
        scale * (1.0 + 2.0 * (1.0 + reach))
    };
    let mut scale = 1.0;
    loop {
        let upper = hi.unwrap_or_else(|| lo.max(0.0) + auto(scale));
        let step = (upper - lo) / (GRID_POINTS - 1) as f64;
        let mut best = 0usize;
        let mut best_val = f64::INFINITY;
        for i in 0..GRID_POINTS {
            let s = lo + step * i as f64;
            let v = f(s);
            if !v.is_finite() {
                return Err(Error::NonFinite { context: "Hamiltonian objective".into() });
            }
            let better = v < best_val
                || (v == best_val && s.abs() < (lo + step * best as f64).abs());
            if better {
                best = i;
                best_val = v;
            }
        }
        if step == 0.0 {
            return Ok(Scalar { s: lo, value: best_val });
        }
        if hi.is_none() && best == GRID_POINTS - 1 {
            if scale >= 1e6 {
                let z = vec![a];
                return Err(if f(2.0 * upper) < best_val { Error::UnboundedBelow { z } } else { Error::EmptyArgmin { z } });
            }
            scale *= 4.0;
            continue;
        }
        let left = lo + step * best.saturating_sub(1) as f64;
        let right = (lo + step * (best + 1).min(GRID_POINTS - 1) as f64).min(upper);
        let s = golden_section(&f, left, right);
        let (s, value) = if f(s) <= best_val { (s, f(s)) } else { (lo + step * best as f64, best_val) };
        return Ok(Scalar { s, value });
    }
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOL * (1.0 + a.abs() + b.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `ψ(t, x, y, z) = ḡ(x) + h(z)`.
#[derive(Clone)]
pub struct ControlDriver {
    pub gbar: Option<Arc<dyn Functional>>,
    pub spec: HamiltonianSpec,
}

impl ControlDriver {
    pub fn new(gbar: Option<Arc<dyn Functional>>, spec: HamiltonianSpec) -> Self {
        Self { gbar, spec }
    }
}

impl Driver for ControlDriver {
    fn eval(&self, _t: f64, x: &[f64], _y: f64, z: &[f64]) -> f64 {
        let g = self.gbar.as_ref().map_or(0.0, |g| g.eval(x));
        g + self.spec.value(z).unwrap_or(f64::NAN)
    }

    fn active_modes(&self) -> Option<Vec<usize>> {
        match &self.gbar {
            None => Some(Vec::new()),
            Some(g) => g.active_modes(),
        }
    }
}

#[cfg(test)]
mod tests;
