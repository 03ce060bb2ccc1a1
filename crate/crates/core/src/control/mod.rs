//! Controlled stochastic wave equation on `[0, 1]` with Dirichlet ends:
//! problem assembly from a configuration, cost evaluation of policies by
//! closed-loop simulation and the check `J(u) ≥ v` with equality at the
//! feedback `u = γ(∇^B v)`.

mod spatial;

pub use spatial::{
    Integrand, ModeLinear, ModeSoftAbs, SineDrift, SoftAbsCost, SoftAbsTarget, SpatialFunctional, SpatialGrid, Square,
    SPATIAL_POINTS,
};

use crate::config::{DriftSpec, DriverKind, ExperimentConfig, StateCostSpec, TerminalSpec};
use crate::error::{Error, Result};
use crate::functional::{Driver, Functional, ModeLimited, ZeroDriver};
use crate::hamiltonian::{
    validate_growth_hypotheses, ControlCost, ControlDriver, ControlSet, DriverGrowthParams, GrowthReport,
    HamiltonianSpec,
};
use crate::kolmogorov::ValueField;
use crate::rng::{self, Domain, SeedRecord};
use crate::semigroup::Estimate;
use crate::spectral_ou::{
    covariance, simulate_paths, uniform_grid, DriftField, ModeBasis, OUCovariance, PathBundle, StateVector, ZeroDrift,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Empirical check that `G` is bounded by and Lipschitz with constant `κ` in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzAudit {
    pub samples: usize,
    pub kappa: f64,
    /// Largest `|G(x) − G(x')| / |y − y'|`.
    pub max_ratio: f64,
    /// Largest `|G(x)|`.
    pub max_norm: f64,
    pub passed: bool,
}

pub fn lipschitz_audit(drift: &dyn DriftField, kappa: f64, n_modes: usize, samples: usize, seed: u64) -> LipschitzAudit {
    let dim = 2 * n_modes;
    let mut rng = rng::stream(seed, Domain::Audit, 0, 0);
    let (mut ga, mut gb) = (vec![0.0; n_modes], vec![0.0; n_modes]);
    let (mut max_ratio, mut max_norm) = (0.0f64, 0.0f64);
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    for s in 0..samples {
        // Alternate between far-apart states and close pairs.
        let spread = if s % 2 == 0 { 3.0 } else { 0.05 };
        for k in 0..n_modes {
            let scale = 2.0 / (k + 1) as f64;
            a[2 * k] = scale * rng.random_range(-1.0..1.0);
            b[2 * k] = a[2 * k] + spread * scale * rng.random_range(-1.0..1.0);
            a[2 * k + 1] = rng.random_range(-1.0..1.0);
            b[2 * k + 1] = rng.random_range(-1.0..1.0);
        }
        drift.drift(0.0, &a, &mut ga);
        drift.drift(0.0, &b, &mut gb);
        let dg = ga.iter().zip(&gb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let dy = (0..n_modes).map(|k| (a[2 * k] - b[2 * k]).powi(2)).sum::<f64>().sqrt();
        if dy > 0.0 {
            max_ratio = max_ratio.max(dg / dy);
        }
        max_norm = max_norm.max(ga.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let slack = kappa * (1.0 + 1e-9) + 1e-14;
    LipschitzAudit { samples, kappa, max_ratio, max_norm, passed: max_ratio <= slack && max_norm <= slack }
}

/// Assembled wave control problem on a time grid.
#[derive(Clone)]
pub struct ControlProblem {
    pub basis: ModeBasis,
    pub grid: Vec<f64>,
    pub x0: StateVector,
    pub spatial: Arc<SpatialGrid>,
    pub drift: Arc<dyn DriftField>,
    /// Bound on `|G|`, also its Lipschitz constant.
    pub drift_bound: f64,
    pub gbar: Option<Arc<dyn Functional>>,
    pub phi: Arc<dyn Functional>,
    pub spec: HamiltonianSpec,
    pub driver_kind: DriverKind,
    pub params: DriverGrowthParams,
    pub growth: GrowthReport,
    pub lipschitz: LipschitzAudit,
}

impl ControlProblem {
    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn driver(&self) -> Arc<dyn Driver> {
        match self.driver_kind {
            DriverKind::Control => Arc::new(ControlDriver::new(self.gbar.clone(), self.spec.clone())),
            DriverKind::Zero => Arc::new(ZeroDriver),
        }
    }

    /// Uncontrolled paths `dX = (AX + BG(X)) dt + B dW`.
    pub fn simulate(&self, n_paths: usize, seed: SeedRecord) -> Result<PathBundle> {
        simulate_paths(self.start(), &self.x0, &self.grid, &*self.drift, n_paths, seed)
    }

    fn gbar_at(&self, x: &[f64]) -> f64 {
        self.gbar.as_ref().map_or(0.0, |g| g.eval(x))
    }

    fn actuation(&self, k: usize) -> f64 {
        let a = &self.spec.actuation;
        if a.is_empty() {
            1.0
        } else {
            a.get(k).copied().unwrap_or(0.0)
        }
    }
}

pub fn assemble_wave_problem(config: &ExperimentConfig) -> Result<ControlProblem> {
    config.validate()?;
    let p = &config.problem;
    let n = p.modes;
    let basis = ModeBasis::new(n)?;
    let grid = uniform_grid(p.start, p.horizon, p.steps);
    let mut y0 = p.initial.y.clone();
    let mut z0 = p.initial.z.clone();
    y0.resize(n, 0.0);
    z0.resize(n, 0.0);
    let x0 = StateVector::from_modes(&y0, &z0);
    let spatial = Arc::new(SpatialGrid::new(n)?);

    let (drift, drift_bound): (Arc<dyn DriftField>, f64) = match p.drift {
        DriftSpec::Zero => (Arc::new(ZeroDrift), 0.0),
        DriftSpec::Sine { kappa } => (Arc::new(SineDrift::new(spatial.clone(), kappa)), kappa),
    };
    let gbar: Option<Arc<dyn Functional>> = match p.state_cost {
        StateCostSpec::Zero => None,
        StateCostSpec::SoftAbs { weight, width } => {
            Some(Arc::new(SpatialFunctional::new(spatial.clone(), SoftAbsCost { weight, width })))
        }
    };
    let phi: Arc<dyn Functional> = match p.terminal {
        TerminalSpec::Zero => Arc::new(ModeLimited::new(|_: &[f64]| 0.0, Vec::new())),
        TerminalSpec::SoftAbs { weight, width, amplitude } => {
            Arc::new(SpatialFunctional::new(spatial.clone(), SoftAbsTarget { weight, width, amplitude }))
        }
        TerminalSpec::Square => Arc::new(SpatialFunctional::new(spatial.clone(), Square)),
        TerminalSpec::ModeLinear { mode, y, z } => Arc::new(ModeLinear { mode, y, z }),
        TerminalSpec::ModeSoftAbs { mode, weight, center, width } => {
            Arc::new(ModeSoftAbs { mode, weight, center, width })
        }
    };

    let spec = config.hamiltonian.spec()?;
    let params = DriverGrowthParams::for_spec(&spec, p.growth.r, p.growth.alpha, p.growth.beta);
    let growth = validate_growth_hypotheses(&params, &spec);
    if p.driver == DriverKind::Control && !growth.accepted {
        let failed: Vec<String> = growth.failures().map(|c| format!("{} ({})", c.name, c.detail)).collect();
        return Err(Error::Hypothesis(failed.join("; ")));
    }
    let lipschitz = lipschitz_audit(&*drift, drift_bound, n, 2000, config.seed);
    if !lipschitz.passed {
        return Err(Error::Hypothesis(format!(
            "drift audit: ratio {} and norm {} exceed kappa = {}",
            lipschitz.max_ratio, lipschitz.max_norm, drift_bound
        )));
    }
    Ok(ControlProblem {
        basis,
        grid,
        x0,
        spatial,
        drift,
        drift_bound,
        gbar,
        phi,
        spec,
        driver_kind: p.driver,
        params,
        growth,
        lipschitz,
    })
}

/// A control law `(t, x) ↦ u ∈ U`.
#[derive(Clone)]
pub enum Policy {
    Zero,
    Constant { u: Vec<f64> },
    /// `u_mode(t) = amplitude · sin(2π frequency t)`, other components zero.
    Periodic { amplitude: f64, frequency: f64, mode: usize },
    /// `u = amplitude · tanh(W x + b)`.
    RandomBounded { amplitude: f64, weights: Vec<f64>, bias: Vec<f64> },
    /// `u = scale · γ(∇^B v(t, x))`.
    Feedback { field: Arc<ValueField>, scale: f64 },
}

impl Policy {
    /// Random bounded feedback with seeded weights.
    pub fn random_bounded(amplitude: f64, n_modes: usize, seed: u64, index: u64) -> Self {
        let dim = 2 * n_modes;
        let mut rng = rng::stream(seed, Domain::Policy, index, 0);
        let mut weights = vec![0.0; n_modes * dim];
        rng::fill_normals(&mut rng, &mut weights);
        let scale = 1.0 / (dim as f64).sqrt();
        weights.iter_mut().for_each(|w| *w *= scale);
        let mut bias = vec![0.0; n_modes];
        rng::fill_normals(&mut rng, &mut bias);
        bias.iter_mut().for_each(|b| *b *= 0.5);
        Policy::RandomBounded { amplitude, weights, bias }
    }

    pub fn control(&self, spec: &HamiltonianSpec, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Policy::Zero => out.fill(0.0),
            Policy::Constant { u } => {
                out.fill(0.0);
                let k = u.len().min(out.len());
                out[..k].copy_from_slice(&u[..k]);
            }
            Policy::Periodic { amplitude, frequency, mode } => {
                out.fill(0.0);
                out[mode - 1] = amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin();
            }
            Policy::RandomBounded { amplitude, weights, bias } => {
                let dim = x.len();
                for (k, o) in out.iter_mut().enumerate() {
                    let row = &weights[k * dim..(k + 1) * dim];
                    let s: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias[k];
                    *o = amplitude * s.tanh();
                }
            }
            Policy::Feedback { field, scale } => {
                field.bgrad(t, x, out);
                let u = spec.optimal_control(out)?;
                for (o, v) in out.iter_mut().zip(u) {
                    *o = scale * v;
                }
            }
        }
        project_to_set(&spec.control_set, out);
        Ok(())
    }
}

/// Nearest point of `U` (radial scaling for a ball, clamping for a box).
pub fn project_to_set(set: &ControlSet, u: &mut [f64]) {
    match *set {
        ControlSet::Full => {}
        ControlSet::Ball { radius } => {
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                u.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }
        ControlSet::Box { lower, upper } => u.iter_mut().for_each(|v| *v = v.clamp(lower, upper)),
    }
}

#[derive(Clone)]
pub struct Candidate {
    pub name: String,
    pub policy: Policy,
}

impl Candidate {
    pub fn new(name: impl Into<String>, policy: Policy) -> Self {
        Self { name: name.into(), policy }
    }
}

pub const FEEDBACK: &str = "feedback";
pub const SCALED_FEEDBACK: &str = "feedback_x2";

/// Zero, two constants, a periodic forcing, `n_random` random bounded
/// feedbacks, the optimal feedback and its double.
pub fn standard_candidates(field: Arc<ValueField>, amplitude: f64, n_random: usize, seed: u64) -> Vec<Candidate> {
    let n = field.n_modes;
    let mut out = vec![
        Candidate::new("zero", Policy::Zero),
        Candidate::new("constant_plus", Policy::Constant { u: vec![amplitude] }),
        Candidate::new("constant_minus", Policy::Constant { u: vec![-amplitude] }),
        Candidate::new("periodic", Policy::Periodic { amplitude, frequency: 1.0, mode: 1 }),
    ];
    for i in 0..n_random {
        out.push(Candidate::new(format!("random_{i}"), Policy::random_bounded(amplitude, n, seed, i as u64)));
    }
    out.push(Candidate::new(FEEDBACK, Policy::Feedback { field: field.clone(), scale: 1.0 }));
    out.push(Candidate::new(SCALED_FEEDBACK, Policy::Feedback { field, scale: 2.0 }));
    out
}

/// Monte Carlo cost of one policy.
///
/// Per step the control is held at `u_i = u(t_i, X_i)`, the running state cost
/// is `ḡ` at the midpoint of the step's end states, and `mean` is the sum of
/// the component means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub state_cost: f64,
    pub control_cost: f64,
    pub terminal_cost: f64,
    /// `E Σ |u_i|^q Δ_i` on all paths.
    pub q_moment: f64,
    pub q_moment_se: f64,
    /// The same on the first half of the paths.
    pub q_moment_half: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PathCost {
    state: f64,
    control: f64,
    terminal: f64,
    q_moment: f64,
}

impl PathCost {
    fn total(&self) -> f64 {
        self.state + self.control + self.terminal
    }
}

/// Growth of the control moment under path doubling that counts as divergence.
pub const ADMISSIBILITY_FACTOR: f64 = 4.0;

fn step_covariances(problem: &ControlProblem) -> Result<Vec<OUCovariance>> {
    problem.grid.windows(2).map(|w| covariance(w[1] - w[0], &problem.basis)).collect()
}

/// Rolls out `policy` on the same noise streams `simulate_paths` would use.
fn rollout(problem: &ControlProblem, policy: &Policy, n_paths: usize, seed: SeedRecord) -> Result<Vec<PathCost>> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument("cost evaluation needs at least two paths".into()));
    }
    let steps = step_covariances(problem)?;
    let n = problem.n_modes();
    let dim = 2 * n;
    let grid = &problem.grid;
    let weight = problem.spec.cost.weight();
    let zero_drift = problem.drift.is_zero();
    (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<PathCost> {
            let mut x = problem.x0.to_vec();
            let mut next = vec![0.0; dim];
            let mut mean = vec![0.0; dim];
            let mut mid = vec![0.0; dim];
            let mut u = vec![0.0; n];
            let mut g = vec![0.0; n];
            let mut normals = vec![0.0; dim];
            let mut cost = PathCost::default();
            for (i, cov) in steps.iter().enumerate() {
                let dt = grid[i + 1] - grid[i];
                policy.control(&problem.spec, grid[i], &x, &mut u)?;
                if zero_drift {
                    g.fill(0.0);
                } else {
                    problem.drift.drift(grid[i], &x, &mut g);
                }
                cov.propagate(&x, &mut mean);
                for (k, f) in cov.forcing.iter().enumerate() {
                    let d = g[k] + problem.actuation(k) * u[k];
                    mean[2 * k] += f[0] * d;
                    mean[2 * k + 1] += f[1] * d;
                }
                let mut rng = rng::stream(seed.base_seed, Domain::Paths, seed.first_stream + p as u64, i as u64);
                rng::fill_normals(&mut rng, &mut normals);
                cov.shift(&mean, &normals, &mut next);
                if problem.gbar.is_some() {
                    for j in 0..dim {
                        mid[j] = 0.5 * (x[j] + next[j]);
                    }
                    cost.state += problem.gbar_at(&mid) * dt;
                }
                let c = problem.spec.control_cost(&u);
                cost.control += c * dt;
                cost.q_moment += c / weight * dt;
                std::mem::swap(&mut x, &mut next);
            }
            cost.terminal = problem.phi.eval(&x);
            if !cost.total().is_finite() {
                return Err(Error::NonFinite { context: format!("cost on path {p}") });
            }
            Ok(cost)
        })
        .collect()
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> Estimate {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { value: mean, std_error: (var / n).sqrt() }
}

fn summarize(costs: &[PathCost]) -> Result<CostReport> {
    let n = costs.len();
    let avg = |f: &dyn Fn(&PathCost) -> f64, slice: &[PathCost]| slice.iter().map(f).sum::<f64>() / slice.len() as f64;
    let state_cost = avg(&|c| c.state, costs);
    let control_cost = avg(&|c| c.control, costs);
    let terminal_cost = avg(&|c| c.terminal, costs);
    let q = mean_se(costs.iter().map(|c| c.q_moment));
    let q_moment = q.value;
    let q_moment_half = avg(&|c| c.q_moment, &costs[..n / 2]);
    if !q_moment.is_finite() || q_moment > ADMISSIBILITY_FACTOR * q_moment_half + 1e-12 {
        return Err(Error::Inadmissible { half: q_moment_half, full: q_moment });
    }
    let total = mean_se(costs.iter().map(PathCost::total));
    Ok(CostReport {
        mean: state_cost + control_cost + terminal_cost,
        std_error: total.std_error,
        paths: n,
        state_cost,
        control_cost,
        terminal_cost,
        q_moment,
        q_moment_se: q.std_error,
        q_moment_half,
    })
}

/// Cost `J(t₀, x₀, u)` of `policy` from the problem's initial condition.
pub fn evaluate_cost(problem: &ControlProblem, policy: &Policy, n_paths: usize, seed: SeedRecord) -> Result<CostReport> {
    summarize(&rollout(problem, policy, n_paths, seed)?)
}

/// Closed loop under `u = γ(∇^B v)`: the simulated paths and their cost.
pub fn closed_loop_simulate(
    problem: &ControlProblem,
    field: Arc<ValueField>,
    n_paths: usize,
    seed: SeedRecord,
) -> Result<(PathBundle, CostReport)> {
    let policy = Policy::Feedback { field, scale: 1.0 };
    let n = problem.n_modes();
    let drift = |t: f64, x: &[f64], out: &mut [f64]| {
        let mut u = vec![0.0; n];
        if policy.control(&problem.spec, t, x, &mut u).is_err() {
            out.fill(f64::NAN);
            return;
        }
        if problem.drift.is_zero() {
            out.fill(0.0);
        } else {
            problem.drift.drift(t, x, out);
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += problem.actuation(k) * u[k];
        }
    };
    let paths = simulate_paths(problem.start(), &problem.x0, &problem.grid, &drift, n_paths, seed)?;
    let report = evaluate_cost(problem, &policy, n_paths, seed)?;
    Ok((paths, report))
}

/// Per-time statistics of a path bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub times: Vec<f64>,
    /// 1-based modes summarized.
    pub modes: Vec<usize>,
    /// `[time][mode] -> (mean y, var y, mean z, var z)`.
    pub moments: Vec<Vec<[f64; 4]>>,
    pub xi: Vec<f64>,
    /// `[time][ξ] -> (mean, var)` of the reconstructed displacement `y(ξ)`.
    pub snapshots: Vec<Vec<[f64; 2]>>,
}

pub fn trajectory_summary(paths: &PathBundle, modes: &[usize], xi: &[f64]) -> Result<TrajectorySummary> {
    let n = paths.n_modes();
    if modes.iter().any(|&k| k == 0 || k > n) {
        return Err(Error::InvalidArgument(format!("summary modes {modes:?} outside 1..={n}")));
    }
    if xi.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("snapshot points must lie in [0, 1]".into()));
    }
    let sines: Vec<Vec<f64>> = xi
        .iter()
        .map(|&x| (1..=n).map(|k| std::f64::consts::SQRT_2 * (k as f64 * std::f64::consts::PI * x).sin()).collect())
        .collect();
    let np = paths.n_paths() as f64;
    let var = |s: f64, s2: f64| if np > 1.0 { (s2 - s * s / np) / (np - 1.0) } else { 0.0 };
    let mut moments = Vec::with_capacity(paths.grid.len());
    let mut snapshots = Vec::with_capacity(paths.grid.len());
    for i in 0..paths.grid.len() {
        let mut acc = vec![[0.0; 4]; modes.len()];
        let mut field = vec![[0.0; 2]; xi.len()];
        // Shifted sums around the first path keep the variance exact for identical samples.
        let x_ref = paths.state(0, i);
        let field_ref: Vec<f64> = sines.iter().map(|row| row.iter().enumerate().map(|(k, s)| s * x_ref[2 * k]).sum()).collect();
        for p in 0..paths.n_paths() {
            let x = paths.state(p, i);
            for (a, &k) in acc.iter_mut().zip(modes) {
                let (y, z) = (x[2 * (k - 1)] - x_ref[2 * (k - 1)], x[2 * k - 1] - x_ref[2 * k - 1]);
                a[0] += y;
                a[1] += y * y;
                a[2] += z;
                a[3] += z * z;
            }
            for ((f, row), r) in field.iter_mut().zip(&sines).zip(&field_ref) {
                let y: f64 = row.iter().enumerate().map(|(k, s)| s * x[2 * k]).sum::<f64>() - r;
                f[0] += y;
                f[1] += y * y;
            }
        }
        moments.push(
            acc.iter()
                .zip(modes)
                .map(|(a, &k)| {
                    let (y0, z0) = (x_ref[2 * (k - 1)], x_ref[2 * k - 1]);
                    [y0 + a[0] / np, var(a[0], a[1]), z0 + a[2] / np, var(a[2], a[3])]
                })
                .collect(),
        );
        snapshots.push(field.iter().zip(&field_ref).map(|(f, r)| [r + f[0] / np, var(f[0], f[1])]).collect());
    }
    Ok(TrajectorySummary { times: paths.grid.clone(), modes: modes.to_vec(), moments, xi: xi.to_vec(), snapshots })
}

/// Uniform actuation `a` and weight `c` when `g(u) = c|u|²` on the whole space.
fn quadratic_data(spec: &HamiltonianSpec, n_modes: usize) -> Option<(f64, f64)> {
    let (q, c) = match spec.cost {
        ControlCost::NormPower { q, weight } | ControlCost::ModalPower { q, weight } => (q, weight),
    };
    if q != 2.0 || spec.control_set != ControlSet::Full {
        return None;
    }
    let a = if spec.actuation.is_empty() { 1.0 } else { spec.actuation[0] };
    let uniform = spec.actuation.is_empty() || (spec.actuation.len() >= n_modes && spec.actuation.iter().all(|r| *r == a));
    (uniform && a != 0.0).then_some((a, c))
}

/// `v = −(2c/a²) ln E exp(−a² Φ / (2c))` over uncontrolled paths, where `Φ` is
/// the path cost with zero control. Exact for quadratic costs with uniform
/// actuation; on the discrete scheme it bounds every policy's cost from below.
pub fn cole_hopf_value(problem: &ControlProblem, n_paths: usize, seed: SeedRecord) -> Result<Estimate> {
    let (a, c) = quadratic_data(&problem.spec, problem.n_modes())
        .ok_or_else(|| Error::InvalidArgument("Cole-Hopf reference needs a quadratic cost on the full space".into()))?;
    if problem.driver_kind != DriverKind::Control {
        return Err(Error::InvalidArgument("Cole-Hopf reference needs the control driver".into()));
    }
    let costs = rollout(problem, &Policy::Zero, n_paths, seed)?;
    let theta = a * a / (2.0 * c);
    let exponents: Vec<f64> = costs.iter().map(|k| -theta * k.total()).collect();
    let shift = exponents.iter().fold(f64::NEG_INFINITY, |m, e| m.max(*e));
    let e = mean_se(exponents.iter().map(|x| (x - shift).exp()));
    Ok(Estimate { value: -(e.value.ln() + shift) / theta, std_error: e.std_error / (e.value * theta) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub name: String,
    pub cost: CostReport,
    /// `J − v`.
    pub margin: f64,
    /// `√(SE_J² + SE_v²)`.
    pub margin_se: f64,
    /// `margin ≥ −threshold · margin_se`.
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalRelationReport {
    pub value: Estimate,
    pub reference: Option<Estimate>,
    pub threshold_se: f64,
    pub rows: Vec<PolicyRow>,
    pub feedback_is_min: bool,
    /// `J(2γ) − J(γ)` on common noise.
    pub scaled_gap: f64,
    /// Standard error of the paired difference.
    pub scaled_gap_se: f64,
    pub scaled_gap_ok: bool,
    pub passed: bool,
}

/// Evaluates every candidate on common noise and checks `J ≥ v`, minimality of
/// the feedback and separation of its double.
pub fn fundamental_relation_report(
    problem: &ControlProblem,
    value: Estimate,
    reference: Option<Estimate>,
    candidates: &[Candidate],
    n_paths: usize,
    seed: SeedRecord,
    threshold_se: f64,
) -> Result<FundamentalRelationReport> {
    let position = |name: &str| {
        candidates
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("candidate list lacks `{name}`")))
    };
    let fb = position(FEEDBACK)?;
    let sc = position(SCALED_FEEDBACK)?;
    let mut rows = Vec::with_capacity(candidates.len());
    let mut totals = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let costs = rollout(problem, &cand.policy, n_paths, seed)?;
        let cost = summarize(&costs)?;
        let margin = cost.mean - value.value;
        let margin_se = cost.std_error.hypot(value.std_error);
        rows.push(PolicyRow {
            name: cand.name.clone(),
            cost,
            margin,
            margin_se,
            satisfied: margin >= -threshold_se * margin_se,
        });
        totals.push(costs.iter().map(PathCost::total).collect::<Vec<f64>>());
    }
    let j_fb = rows[fb].cost.mean;
    let feedback_is_min = rows.iter().all(|r| r.cost.mean >= j_fb);
    let diff = mean_se(totals[sc].iter().zip(&totals[fb]).map(|(a, b)| a - b));
    let scaled_gap_ok = diff.value > threshold_se * diff.std_error;
    let passed = rows.iter().all(|r| r.satisfied) && feedback_is_min && scaled_gap_ok;
    Ok(FundamentalRelationReport {
        value,
        reference,
        threshold_se,
        rows,
        feedback_is_min,
        scaled_gap: diff.value,
        scaled_gap_se: diff.std_error,
        scaled_gap_ok,
        passed,
    })
}

#[cfg(test)]
mod tests;
