use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Deref, DerefMut, Mul, Sub};

/// Coefficients of a point of `H = L² ⊕ H⁻¹` in the truncated sine basis.
///
/// Stored interleaved as `[y₁, z₁, y₂, z₂, …]`, where `y_k` is the `L²`
/// coefficient of the displacement and `z_k` the coefficient of the velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    coords: Vec<f64>,
}

impl StateVector {
    pub fn zeros(n_modes: usize) -> Self {
        Self { coords: vec![0.0; 2 * n_modes] }
    }

    pub fn from_modes(y: &[f64], z: &[f64]) -> Self {
        assert_eq!(y.len(), z.len(), "position and velocity lengths differ");
        let coords = y.iter().zip(z).flat_map(|(&a, &b)| [a, b]).collect();
        Self { coords }
    }

    /// Wraps interleaved coordinates; the length must be even.
    pub fn from_coords(coords: Vec<f64>) -> Self {
        assert!(coords.len() % 2 == 0, "state coordinates come in pairs");
        Self { coords }
    }

    pub fn n_modes(&self) -> usize {
        self.coords.len() / 2
    }

    /// Position coefficient of the mode in `slot` (0-based).
    pub fn y(&self, slot: usize) -> f64 {
        self.coords[2 * slot]
    }

    pub fn z(&self, slot: usize) -> f64 {
        self.coords[2 * slot + 1]
    }

    pub fn h_norm(&self) -> f64 {
        h_norm(&self.coords)
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }
}

impl Add for &StateVector {
    type Output = StateVector;

    fn add(self, rhs: &StateVector) -> StateVector {
        let coords = self.coords.iter().zip(&rhs.coords).map(|(a, b)| a + b).collect();
        StateVector { coords }
    }
}

impl Sub for &StateVector {
    type Output = StateVector;

    fn sub(self, rhs: &StateVector) -> StateVector {
        let coords = self.coords.iter().zip(&rhs.coords).map(|(a, b)| a - b).collect();
        StateVector { coords }
    }
}

impl Mul<f64> for &StateVector {
    type Output = StateVector;

    fn mul(self, rhs: f64) -> StateVector {
        StateVector { coords: self.coords.iter().map(|a| a * rhs).collect() }
    }
}

/// Squared norm of `H` for interleaved coordinates: `Σ y_k² + z_k² / λ_k`.
pub fn h_norm_sq(coords: &[f64]) -> f64 {
    coords
        .chunks_exact(2)
        .enumerate()
        .map(|(slot, pair)| {
            let omega = (slot + 1) as f64 * PI;
            pair[0] * pair[0] + pair[1] * pair[1] / (omega * omega)
        })
        .sum()
}

pub fn h_norm(coords: &[f64]) -> f64 {
    h_norm_sq(coords).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norm_examples() {
        assert_eq!(StateVector::zeros(4).h_norm(), 0.0);
        let mut x = StateVector::zeros(3);
        x[0] = 1.0;
        assert!((x.h_norm() - 1.0).abs() < 1e-15);
        let mut x = StateVector::zeros(3);
        x[1] = 1.0;
        assert!((x.h_norm() - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn interleaving() {
        let x = StateVector::from_modes(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(&x[..], &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(x.y(1), 2.0);
        assert_eq!(x.z(0), 3.0);
    }

    proptest! {
        #[test]
        fn vector_space_ops(a in prop::collection::vec(-5.0f64..5.0, 8), b in prop::collection::vec(-5.0f64..5.0, 8), s in -3.0f64..3.0) {
            let x = StateVector::from_coords(a);
            let y = StateVector::from_coords(b);
            let sum = &x + &y;
            let back = &sum - &y;
            for i in 0..8 {
                prop_assert!((back[i] - x[i]).abs() < 1e-12);
            }
            let scaled = &x * s;
            prop_assert!((scaled.h_norm() - s.abs() * x.h_norm()).abs() < 1e-12);
            prop_assert!(sum.h_norm() <= x.h_norm() + y.h_norm() + 1e-12);
        }
    }
}
