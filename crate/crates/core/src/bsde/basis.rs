use crate::error::{Error, Result};
use crate::spectral_ou::h_norm;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Rows per partial Gram matrix; fixed so sums do not depend on thread count.
const CHUNK: usize = 1024;
/// Largest accepted condition number of the scaled, ridged Gram matrix.
pub const MAX_CONDITION: f64 = 1e13;

/// Feature map on states: constant, mode coordinates, monomials in a few
/// modes, and powers of the H-norm. Velocities enter as `z_k / ω_k` so that
/// all coordinates share a scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionBasis {
    /// Linear features on modes `1..=linear_modes`.
    pub linear_modes: usize,
    /// 1-based modes entering the monomials.
    #[serde(default)]
    pub poly_modes: Vec<usize>,
    /// Largest total degree of the monomials.
    #[serde(default)]
    pub poly_degree: usize,
    #[serde(default)]
    pub hnorm_powers: Vec<u32>,
    /// Ridge weight relative to the trace of the scaled Gram matrix.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    1e-8
}

impl RegressionBasis {
    pub fn default_for(n_modes: usize) -> Self {
        Self {
            linear_modes: n_modes.min(8),
            poly_modes: Vec::new(),
            poly_degree: 0,
            hnorm_powers: vec![1, 2],
            ridge: default_ridge(),
        }
    }

    pub fn with_poly(mut self, modes: Vec<usize>, degree: usize) -> Self {
        self.poly_modes = modes;
        self.poly_degree = degree;
        self
    }

    /// Exponent tuples of the monomials over the polynomial coordinates,
    /// skipping the linear ones already present.
    fn monomials(&self) -> Vec<Vec<usize>> {
        let vars = 2 * self.poly_modes.len();
        let mut out = Vec::new();
        let mut exps = vec![0usize; vars];
        fn rec(i: usize, left: usize, exps: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if i == exps.len() {
                out.push(exps.clone());
                return;
            }
            for e in 0..=left {
                exps[i] = e;
                rec(i + 1, left - e, exps, out);
            }
            exps[i] = 0;
        }
        if vars > 0 {
            rec(0, self.poly_degree, &mut exps, &mut out);
        }
        out.retain(|e| {
            let deg: usize = e.iter().sum();
            if deg == 0 {
                return false;
            }
            if deg == 1 {
                let var = e.iter().position(|&x| x == 1).unwrap();
                return self.poly_modes[var / 2] > self.linear_modes;
            }
            true
        });
        out.sort_by_key(|e| (e.iter().sum::<usize>(), std::cmp::Reverse(e.clone())));
        out
    }

    pub fn len(&self) -> usize {
        1 + 2 * self.linear_modes + self.monomials().len() + self.hnorm_powers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if self.linear_modes > n_modes || self.poly_modes.iter().any(|&m| m == 0 || m > n_modes) {
            return Err(Error::InvalidArgument(format!(
                "regression basis refers to modes beyond the {n_modes} simulated"
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument("ridge weight must be nonnegative".into()));
        }
        Ok(())
    }

    /// Rank guard: features must stay below a tenth of the sample count.
    pub fn check_rank(&self, samples: usize) -> Result<()> {
        if self.len() * 10 >= samples {
            return Err(Error::InvalidArgument(format!(
                "{} features need more than {} samples",
                self.len(),
                10 * self.len()
            )));
        }
        Ok(())
    }

    /// 1-based modes the features read, or `None` when a norm feature reads all of them.
    pub fn support(&self) -> Option<Vec<usize>> {
        if !self.hnorm_powers.is_empty() {
            return None;
        }
        let mut modes: Vec<usize> = (1..=self.linear_modes).chain(self.poly_modes.iter().copied()).collect();
        modes.sort_unstable();
        modes.dedup();
        Some(modes)
    }

    pub fn featurizer(&self) -> Featurizer {
        Featurizer { basis: self.clone(), monomials: self.monomials() }
    }
}

/// A `RegressionBasis` with its monomials expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    basis: RegressionBasis,
    monomials: Vec<Vec<usize>>,
}

fn scaled(x: &[f64], slot: usize, vel: bool) -> f64 {
    if vel {
        x[2 * slot + 1] / (PI * (slot + 1) as f64)
    } else {
        x[2 * slot]
    }
}

impl Featurizer {
    pub fn len(&self) -> usize {
        1 + 2 * self.basis.linear_modes + self.monomials.len() + self.basis.hnorm_powers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn basis(&self) -> &RegressionBasis {
        &self.basis
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        let mut j = 1;
        for slot in 0..self.basis.linear_modes {
            out[j] = scaled(x, slot, false);
            out[j + 1] = scaled(x, slot, true);
            j += 2;
        }
        let coords: Vec<f64> = self
            .basis
            .poly_modes
            .iter()
            .flat_map(|&m| [scaled(x, m - 1, false), scaled(x, m - 1, true)])
            .collect();
        for e in &self.monomials {
            out[j] = e.iter().zip(&coords).map(|(&p, c)| c.powi(p as i32)).product();
            j += 1;
        }
        let norm = h_norm(x);
        for &p in &self.basis.hnorm_powers {
            out[j] = norm.powi(p as i32);
            j += 1;
        }
    }

    /// Row-major feature matrix of `rows` states taken by `state(i)`.
    pub fn matrix<'a, S>(&self, rows: usize, state: S) -> Vec<f64>
    where
        S: Fn(usize) -> &'a [f64] + Sync,
    {
        let p = self.len();
        let mut out = vec![0.0; rows * p];
        out.par_chunks_mut(p).enumerate().for_each(|(i, row)| self.eval(state(i), row));
        out
    }

    /// Gradient of `x ↦ Σ_j β_j f_j(x)` for a single-target coefficient vector.
    pub fn gradient(&self, coeffs: &[f64], x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let mut j = 1;
        for slot in 0..self.basis.linear_modes {
            grad[2 * slot] += coeffs[j];
            grad[2 * slot + 1] += coeffs[j + 1] / (PI * (slot + 1) as f64);
            j += 2;
        }
        let modes = &self.basis.poly_modes;
        let coords: Vec<f64> = modes
            .iter()
            .flat_map(|&m| [scaled(x, m - 1, false), scaled(x, m - 1, true)])
            .collect();
        for e in &self.monomials {
            let beta = coeffs[j];
            j += 1;
            if beta == 0.0 {
                continue;
            }
            for (v, &ev) in e.iter().enumerate() {
                if ev == 0 {
                    continue;
                }
                let mut d = ev as f64 * coords[v].powi(ev as i32 - 1);
                for (w, &ew) in e.iter().enumerate() {
                    if w != v {
                        d *= coords[w].powi(ew as i32);
                    }
                }
                let slot = modes[v / 2] - 1;
                if v % 2 == 0 {
                    grad[2 * slot] += beta * d;
                } else {
                    grad[2 * slot + 1] += beta * d / (PI * (slot + 1) as f64);
                }
            }
        }
        let norm = h_norm(x);
        for &p in &self.basis.hnorm_powers {
            let beta = coeffs[j];
            j += 1;
            if norm == 0.0 || p == 0 {
                continue;
            }
            // d|x|^p = p |x|^{p−2} ⟨x, ·⟩_H
            let factor = beta * p as f64 * norm.powi(p as i32 - 2);
            for slot in 0..x.len() / 2 {
                let lambda = (PI * (slot + 1) as f64).powi(2);
                grad[2 * slot] += factor * x[2 * slot];
                grad[2 * slot + 1] += factor * x[2 * slot + 1] / lambda;
            }
        }
    }

    pub fn predict(&self, coeffs: &[f64], x: &[f64], out: &mut [f64]) {
        let p = self.len();
        let mut f = vec![0.0; p];
        self.eval(x, &mut f);
        apply(coeffs, &f, out);
    }
}

/// `out_c = Σ_j f_j β_{j,c}` with `β` stored row-major `p × r`.
pub fn apply(coeffs: &[f64], features: &[f64], out: &mut [f64]) {
    let r = out.len();
    out.fill(0.0);
    for (j, fj) in features.iter().enumerate() {
        for c in 0..r {
            out[c] += fj * coeffs[j * r + c];
        }
    }
}

/// Ridge least-squares fit of several targets on a shared feature matrix.
#[derive(Debug, Clone)]
pub struct Fit {
    /// Row-major `p × r`.
    pub coeffs: Vec<f64>,
    pub condition: f64,
}

/// Solves `(FᵀF + λ tr·I) β = Fᵀ T` in column-scaled coordinates; the first
/// feature must be the constant.
/// `features` is `N × p`, `targets` is `N × r`, both row-major.
pub fn least_squares(features: &[f64], p: usize, targets: &[f64], r: usize, ridge: f64) -> Result<Fit> {
    let n = features.len() / p;
    if n == 0 || targets.len() != n * r {
        return Err(Error::InvalidArgument("feature and target row counts differ".into()));
    }
    let partials: Vec<(Vec<f64>, Vec<f64>)> = features
        .par_chunks(CHUNK * p)
        .zip(targets.par_chunks(CHUNK * r))
        .map(|(fc, tc)| {
            let mut gram = vec![0.0; p * p];
            let mut rhs = vec![0.0; p * r];
            for (row, t) in fc.chunks_exact(p).zip(tc.chunks_exact(r)) {
                for a in 0..p {
                    let fa = row[a];
                    if fa == 0.0 {
                        continue;
                    }
                    for b in a..p {
                        gram[a * p + b] += fa * row[b];
                    }
                    for c in 0..r {
                        rhs[a * r + c] += fa * t[c];
                    }
                }
            }
            (gram, rhs)
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DMatrix::<f64>::zeros(p, r);
    for (g, h) in &partials {
        for a in 0..p {
            for b in a..p {
                gram[(a, b)] += g[a * p + b];
            }
            for c in 0..r {
                rhs[(a, c)] += h[a * r + c];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let scale: Vec<f64> = (0..p)
        .map(|a| {
            let d = gram[(a, a)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for a in 0..p {
        for b in 0..p {
            gram[(a, b)] *= scale[a] * scale[b];
        }
        for c in 0..r {
            rhs[(a, c)] *= scale[a];
        }
    }
    // The intercept (first column) is not penalized, so constant shifts of the
    // targets pass through exactly.
    let lift = ridge * gram.trace() / p as f64;
    for a in 1..p {
        gram[(a, a)] += lift.max(f64::MIN_POSITIVE);
    }
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let chol = gram.cholesky().ok_or(Error::IllConditioned { step: usize::MAX, condition })?;
    let sol = chol.solve(&rhs);
    let mut coeffs = vec![0.0; p * r];
    for a in 0..p {
        for c in 0..r {
            coeffs[a * r + c] = sol[(a, c)] * scale[a];
        }
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite { context: "regression coefficients".into() });
    }
    Ok(Fit { coeffs, condition })
}
