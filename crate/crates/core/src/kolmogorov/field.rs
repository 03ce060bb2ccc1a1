use crate::bsde::{apply, BsdeSolution, Featurizer, RegressionBasis};
use crate::error::{Error, Result};
use crate::spectral_ou::h_norm;
use serde::{Deserialize, Serialize};

pub const VALUE_FIELD_SCHEMA: u32 = 1;

/// Fitted growth constants: `|v| ≤ C_v (1 + |x|^{r+1})`, `|∇^B v| ≤ C_g (1 + |x|^r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub r: f64,
    pub value_constant: f64,
    pub gradient_constant: f64,
}

impl GrowthCertificate {
    /// Largest ratios of `|v|` and `|∇^B v|` to their growth envelopes over `states`.
    pub fn fit<'a>(field: &ValueField, r: f64, samples: impl Iterator<Item = (f64, &'a [f64])>) -> Self {
        let mut cv: f64 = 0.0;
        let mut cg: f64 = 0.0;
        let mut g = vec![0.0; field.n_modes];
        for (t, x) in samples {
            let norm = h_norm(x);
            cv = cv.max(field.value(t, x).abs() / (1.0 + norm.powf(r + 1.0)));
            field.bgrad(t, x, &mut g);
            cg = cg.max(g.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + norm.powf(r)));
        }
        Self { r, value_constant: cv, gradient_constant: cg }
    }

    /// Whether `(t, x)` satisfies both bounds with constants inflated by `factor`.
    pub fn holds(&self, field: &ValueField, t: f64, x: &[f64], factor: f64) -> bool {
        let norm = h_norm(x);
        let mut g = vec![0.0; field.n_modes];
        field.bgrad(t, x, &mut g);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        field.value(t, x).abs() <= factor * self.value_constant * (1.0 + norm.powf(self.r + 1.0))
            && gn <= factor * self.gradient_constant * (1.0 + norm.powf(self.r))
    }
}

/// Regression representation of `v(t_i, ·)` and `∇^B v(t_i, ·)` on a time grid.
///
/// Coefficient vectors have length `p` (value) and `p·n` (gradient, row-major)
/// for the basis' `p` features, or `1` and `n` for a constant fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub schema_version: u32,
    pub grid: Vec<f64>,
    pub n_modes: usize,
    pub basis: RegressionBasis,
    pub value_coeffs: Vec<Vec<f64>>,
    pub bgrad_coeffs: Vec<Vec<f64>>,
    pub growth_certificate: Option<GrowthCertificate>,
    #[serde(skip)]
    featurizer: Option<Featurizer>,
}

impl ValueField {
    pub fn new(
        grid: Vec<f64>,
        n_modes: usize,
        basis: RegressionBasis,
        value_coeffs: Vec<Vec<f64>>,
        bgrad_coeffs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut field = Self {
            schema_version: VALUE_FIELD_SCHEMA,
            grid,
            n_modes,
            basis,
            value_coeffs,
            bgrad_coeffs,
            growth_certificate: None,
            featurizer: None,
        };
        field.validate()?;
        Ok(field)
    }

    fn validate(&mut self) -> Result<()> {
        self.basis.validate(self.n_modes)?;
        let feat = self.basis.featurizer();
        let p = feat.len();
        let n = self.n_modes;
        if self.value_coeffs.len() != self.grid.len() || self.bgrad_coeffs.len() != self.grid.len() {
            return Err(Error::InvalidArgument("value field needs coefficients at every grid time".into()));
        }
        for (v, g) in self.value_coeffs.iter().zip(&self.bgrad_coeffs) {
            if !(v.len() == p || v.len() == 1) || !(g.len() == p * n || g.len() == n) {
                return Err(Error::InvalidArgument("value field coefficient shapes do not match the basis".into()));
            }
        }
        self.featurizer = Some(feat);
        Ok(())
    }

    /// Reload from JSON, checking the schema version and shapes.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut field: ValueField = serde_json::from_str(text)?;
        if field.schema_version != VALUE_FIELD_SCHEMA {
            return Err(Error::InvalidArgument(format!(
                "value field schema {} is not supported",
                field.schema_version
            )));
        }
        field.validate()?;
        Ok(field)
    }

    /// Field read off a regression BSDE solve: the `Y` regression for the value
    /// and the `Z` regression for the gradient, whose terminal slice repeats the last step.
    pub fn from_bsde(sol: &BsdeSolution) -> Result<Self> {
        let value = sol.y_coeffs.clone();
        let mut grad = sol.z_coeffs.clone();
        grad.push(grad.last().cloned().unwrap_or_default());
        Self::new(sol.grid.clone(), sol.n_modes, sol.basis.clone(), value, grad)
    }

    fn feat(&self) -> &Featurizer {
        self.featurizer.as_ref().expect("value field validated at construction")
    }

    pub fn featurizer(&self) -> &Featurizer {
        self.feat()
    }

    /// Grid slot and interpolation weight of the later slot for time `t`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let m = self.grid.len() - 1;
        if t <= self.grid[0] {
            return (0, 0.0);
        }
        if t >= self.grid[m] {
            return (m, 0.0);
        }
        let i = self.grid.partition_point(|g| *g <= t) - 1;
        let w = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        (i, w)
    }

    pub fn value_at(&self, slot: usize, x: &[f64]) -> f64 {
        let c = &self.value_coeffs[slot];
        if c.len() == 1 {
            return c[0];
        }
        let mut out = [0.0];
        self.feat().predict(c, x, &mut out);
        out[0]
    }

    pub fn bgrad_at(&self, slot: usize, x: &[f64], out: &mut [f64]) {
        let c = &self.bgrad_coeffs[slot];
        if c.len() == self.n_modes {
            out.copy_from_slice(c);
            return;
        }
        let mut f = vec![0.0; self.feat().len()];
        self.feat().eval(x, &mut f);
        apply(c, &f, out);
    }

    /// `v(t, x)`, linear in time between grid slots.
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        let (i, w) = self.locate(t);
        if w == 0.0 {
            self.value_at(i, x)
        } else {
            (1.0 - w) * self.value_at(i, x) + w * self.value_at(i + 1, x)
        }
    }

    /// `∇^B v(t, x)`, linear in time between grid slots.
    pub fn bgrad(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (i, w) = self.locate(t);
        self.bgrad_at(i, x, out);
        if w > 0.0 {
            let mut next = vec![0.0; self.n_modes];
            self.bgrad_at(i + 1, x, &mut next);
            for (o, b) in out.iter_mut().zip(next) {
                *o = (1.0 - w) * *o + w * b;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
