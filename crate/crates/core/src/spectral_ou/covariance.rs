use super::{mode_actuation, mode_forcing, mode_semigroup, Mat2, ModeBasis};
use crate::error::{Error, Result};

/// Relative eigenvalue floor for covariance blocks, as a fraction of the block trace.
pub const EIGEN_FLOOR: f64 = 1e-14;

/// Covariance `Q_σ = ∫₀^σ e^{sA} B B* e^{sA*} ds` of the stochastic convolution,
/// block-diagonal over modes, together with the per-mode quantities needed to
/// sample it and to weight directional derivatives.
#[derive(Debug, Clone)]
pub struct OUCovariance {
    pub sigma: f64,
    pub blocks: Vec<Mat2>,
    /// Lower-triangular Cholesky factors `L_k` with `L_k L_kᵀ = Q_{σ,k}`.
    pub factors: Vec<Mat2>,
    /// `L_k⁻¹ e^{σA_k} B_k`.
    pub whitened_actuation: Vec<[f64; 2]>,
    /// `L_k⁻¹ ∫₀^σ e^{sA_k} B_k ds`; its inner product with the standard normal
    /// draw is the Brownian increment conditioned on the sampled convolution.
    pub brownian_loading: Vec<[f64; 2]>,
    /// `e^{σA_k}`.
    pub propagators: Vec<Mat2>,
    /// `∫₀^σ e^{sA_k} B_k ds`.
    pub forcing: Vec<[f64; 2]>,
    /// Modes whose block was lifted by the eigenvalue floor.
    pub regularized: Vec<usize>,
}

/// `u - sin u`, accurate for small `u`.
fn u_minus_sin(u: f64) -> f64 {
    if u.abs() > 0.5 {
        return u - u.sin();
    }
    let u2 = u * u;
    let mut term = u * u2 / 6.0;
    let mut sum = 0.0f64;
    let mut k = 3.0;
    while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
        sum += term;
        term *= -u2 / ((k + 1.0) * (k + 2.0));
        k += 2.0;
    }
    sum
}

/// Closed-form covariance block of mode `omega` after elapsed time `sigma`.
pub fn covariance_block(omega: f64, sigma: f64) -> Mat2 {
    let x = omega * sigma;
    let q11 = u_minus_sin(2.0 * x) / (4.0 * omega.powi(3));
    let s = x.sin();
    let q12 = s * s / (2.0 * omega * omega);
    let q22 = 0.5 * sigma + (2.0 * x).sin() / (4.0 * omega);
    Mat2([[q11, q12], [q12, q22]])
}

fn cholesky(m: &Mat2) -> Option<Mat2> {
    let a = m.0[0][0].sqrt();
    if !(a > 0.0) {
        return None;
    }
    let b = m.0[1][0] / a;
    let c2 = m.0[1][1] - b * b;
    if !(c2 > 0.0) {
        return None;
    }
    Some(Mat2([[a, 0.0], [b, c2.sqrt()]]))
}

/// Solves `L w = v` for lower-triangular `L`.
pub(crate) fn lower_solve(l: &Mat2, v: [f64; 2]) -> [f64; 2] {
    let w0 = v[0] / l.0[0][0];
    [w0, (v[1] - l.0[1][0] * w0) / l.0[1][1]]
}

pub fn covariance(sigma: f64, basis: &ModeBasis) -> Result<OUCovariance> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("covariance needs sigma > 0, got {sigma}")));
    }
    let n = basis.len();
    let mut cov = OUCovariance {
        sigma,
        blocks: Vec::with_capacity(n),
        factors: Vec::with_capacity(n),
        whitened_actuation: Vec::with_capacity(n),
        brownian_loading: Vec::with_capacity(n),
        propagators: Vec::with_capacity(n),
        forcing: Vec::with_capacity(n),
        regularized: Vec::new(),
    };
    for mode in basis.modes() {
        let mut block = covariance_block(mode.omega, sigma);
        let floor = EIGEN_FLOOR * block.trace();
        let smallest = block.sym_eigenvalues()[0];
        if smallest < floor {
            block = block.add(&Mat2([[floor, 0.0], [0.0, floor]]));
            cov.regularized.push(mode.index);
        }
        let factor = cholesky(&block).ok_or(Error::DegenerateBlock {
            mode: mode.index,
            eigenvalue: smallest,
        })?;
        let forcing = mode_forcing(mode, sigma);
        cov.whitened_actuation.push(lower_solve(&factor, mode_actuation(mode, sigma)));
        cov.brownian_loading.push(lower_solve(&factor, forcing));
        cov.propagators.push(mode_semigroup(mode, sigma));
        cov.forcing.push(forcing);
        cov.blocks.push(block);
        cov.factors.push(factor);
    }
    Ok(cov)
}

impl OUCovariance {
    pub fn n_modes(&self) -> usize {
        self.blocks.len()
    }

    /// `mean + L u`, mode by mode.
    pub fn shift(&self, mean: &[f64], normals: &[f64], out: &mut [f64]) {
        for (k, l) in self.factors.iter().enumerate() {
            let (u0, u1) = (normals[2 * k], normals[2 * k + 1]);
            out[2 * k] = mean[2 * k] + l.0[0][0] * u0;
            out[2 * k + 1] = mean[2 * k + 1] + l.0[1][0] * u0 + l.0[1][1] * u1;
        }
    }

    /// `e^{σA} x`.
    pub fn propagate(&self, x: &[f64], out: &mut [f64]) {
        for (k, p) in self.propagators.iter().enumerate() {
            let v = p.apply([x[2 * k], x[2 * k + 1]]);
            out[2 * k] = v[0];
            out[2 * k + 1] = v[1];
        }
    }

    /// Weighted H-trace `Σ_k Q11 + Q22 / λ_k` over the first `modes` blocks.
    pub fn partial_trace(&self, modes: usize) -> f64 {
        self.blocks
            .iter()
            .take(modes)
            .enumerate()
            .map(|(k, b)| {
                let w = (k + 1) as f64 * std::f64::consts::PI;
                b.0[0][0] + b.0[1][1] / (w * w)
            })
            .sum()
    }

    /// Euclidean norm of the whitened actuation of each mode.
    pub fn whitened_norms(&self) -> Vec<f64> {
        self.whitened_actuation.iter().map(|w| w[0].hypot(w[1])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_ou::ModeSpec;
    use std::f64::consts::PI;

    /// Composite Gauss–Legendre (5 points) quadrature of the covariance integrand.
    fn quadrature_block(omega: f64, sigma: f64, panels: usize) -> Mat2 {
        let nodes = [
            (0.0, 128.0 / 225.0),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let h = sigma / panels as f64;
        let mut acc = [[0.0; 2]; 2];
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for &(x, w) in &nodes {
                let s = mid + 0.5 * h * x;
                let v = [(omega * s).sin() / omega, (omega * s).cos()];
                for i in 0..2 {
                    for j in 0..2 {
                        acc[i][j] += 0.5 * h * w * v[i] * v[j];
                    }
                }
            }
        }
        Mat2(acc)
    }

    #[test]
    fn full_period_block() {
        let b = covariance_block(PI, 2.0);
        assert!((b.0[0][0] - 1.0 / (PI * PI)).abs() < 1e-14);
        assert!(b.0[0][1].abs() < 1e-14);
        assert!((b.0[1][1] - 1.0).abs() < 1e-14);
        let q = quadrature_block(PI, 2.0, 400);
        assert!(b.max_abs_diff(&q) < 1e-12);
    }

    #[test]
    fn small_sigma_limit() {
        let sigma = 1e-3;
        for k in [1, 4, 16] {
            let w = ModeSpec::new(k).omega;
            let b = covariance_block(w, sigma);
            let taylor = [sigma.powi(3) / 3.0, sigma * sigma / 2.0, sigma];
            let rel = (w * sigma).powi(2);
            assert!((b.0[0][0] / taylor[0] - 1.0).abs() < rel);
            assert!((b.0[0][1] / taylor[1] - 1.0).abs() < rel);
            assert!((b.0[1][1] / taylor[2] - 1.0).abs() < rel);
            let q = quadrature_block(w, sigma, 8);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(((b.0[i][j] - q.0[i][j]) / q.0[i][j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn trace_matches_quadrature() {
        for &sigma in &[0.05, 0.3, 1.0, 1.7] {
            for k in 1..=8 {
                let w = ModeSpec::new(k).omega;
                let b = covariance_block(w, sigma);
                let q = quadrature_block(w, sigma, 200);
                assert!((b.trace() - q.trace()).abs() < 1e-10);
                assert_eq!(b.0[0][1], b.0[1][0]);
                assert!(b.sym_eigenvalues()[0] >= 0.0);
            }
        }
    }

    #[test]
    fn covariance_flow() {
        let basis = ModeBasis::new(10).unwrap();
        for &(s, d) in &[(0.2, 0.05), (0.7, 0.31), (1.3, 0.9)] {
            let qs = covariance(s, &basis).unwrap();
            let qd = covariance(d, &basis).unwrap();
            let qsd = covariance(s + d, &basis).unwrap();
            for k in 0..basis.len() {
                let p = qd.propagators[k];
                let flowed = (p * qs.blocks[k] * p.transpose()).add(&qd.blocks[k]);
                assert!(flowed.max_abs_diff(&qsd.blocks[k]) < 1e-10);
            }
        }
    }

    #[test]
    fn trace_class_tail() {
        let sigma = 1.0;
        let basis = ModeBasis::new(64).unwrap();
        let cov = covariance(sigma, &basis).unwrap();
        let mut prev = 0.0;
        for n in 1..=64 {
            let t = cov.partial_trace(n);
            assert!(t >= prev);
            prev = t;
        }
        for (k, mode) in basis.modes().iter().enumerate() {
            if mode.omega * sigma >= 1.0 {
                let b = cov.blocks[k];
                let contribution = b.0[0][0] + b.0[1][1] / mode.lambda;
                assert!(contribution <= 2.0 * sigma / mode.lambda);
            }
        }
    }

    #[test]
    fn factors_and_whitening() {
        let basis = ModeBasis::new(6).unwrap();
        let cov = covariance(0.37, &basis).unwrap();
        assert!(cov.regularized.is_empty());
        for k in 0..6 {
            let l = cov.factors[k];
            assert!((l * l.transpose()).max_abs_diff(&cov.blocks[k]) < 1e-15);
            // |L⁻¹ v|² = vᵀ Q⁻¹ v
            let v = mode_actuation(basis.mode(k), 0.37);
            let b = cov.blocks[k].0;
            let det = cov.blocks[k].det();
            let quad = (b[1][1] * v[0] * v[0] - 2.0 * b[0][1] * v[0] * v[1] + b[0][0] * v[1] * v[1]) / det;
            let w = cov.whitened_actuation[k];
            assert!((w[0] * w[0] + w[1] * w[1] - quad).abs() < 1e-9 * quad);
        }
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let basis = ModeBasis::new(2).unwrap();
        assert!(covariance(0.0, &basis).is_err());
        assert!(covariance(-1.0, &basis).is_err());
    }
}
