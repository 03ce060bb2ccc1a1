//! Subcommand pipelines. Each pipeline returns its artifacts and assertion
//! checks; [`run`] writes them only after the whole pipeline succeeded.

use crate::bsde::{exp_moment_report, solve_bsde, z_growth_report, BsdeOptions, BsdeSolution};
use crate::config::{DriftSpec, DriverKind, ExperimentConfig, TerminalSpec, CONFIG_SCHEMA};
use crate::control::{
    assemble_wave_problem, closed_loop_simulate, cole_hopf_value, fundamental_relation_report, standard_candidates,
    trajectory_summary, ControlProblem, TrajectorySummary,
};
use crate::error::{Error, Result};
use crate::functional::Driver;
use crate::hamiltonian::{ControlCost, ControlSet};
use crate::kolmogorov::{
    exponential_transform, girsanov_driver, identification_report, picard_mild_solve, PicardOptions, PicardSolution,
    ValueField,
};
use crate::report::{self, csv, Artifact, Cell, Manifest, REPORT_SCHEMA};
use crate::rng::SeedRecord;
use crate::semigroup::{smoothing_audit, Estimate, QuadratureScheme};
use crate::spectral_ou::{h_norm_sq, mode_semigroup, ModeBasis, ModeSpec, PathBundle};
use serde::Serialize;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

pub const SEED_ENV: &str = "HJB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    SolveBsde,
    SolveHjb,
    Synthesize,
    Verify,
    AuditSmoothing,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Simulate,
        Subcommand::SolveBsde,
        Subcommand::SolveHjb,
        Subcommand::Synthesize,
        Subcommand::Verify,
        Subcommand::AuditSmoothing,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::SolveBsde => "solve-bsde",
            Subcommand::SolveHjb => "solve-hjb",
            Subcommand::Synthesize => "synthesize",
            Subcommand::Verify => "verify",
            Subcommand::AuditSmoothing => "audit-smoothing",
        }
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown subcommand `{s}`")))
    }
}

/// A named pass/fail assertion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Parses config text, applying a seed override from the environment value.
pub fn load_config(text: &str, env_seed: Option<&str>) -> Result<(ExperimentConfig, bool)> {
    let mut config = ExperimentConfig::from_toml(text)?;
    let from_env = match env_seed {
        Some(s) => {
            config.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{s}`")))?;
            true
        }
        None => false,
    };
    Ok((config, from_env))
}

/// Runs a subcommand and writes its artifacts plus a manifest to `out`.
/// Returns whether every enabled assertion passed.
pub fn run(cmd: Subcommand, config_path: &Path, out: &Path, env_seed: Option<&str>) -> Result<bool> {
    let bytes = std::fs::read(config_path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
    let (config, seed_from_env) = load_config(text, env_seed)?;
    let outcome = run_pipeline(cmd, &config)?;
    let passed = outcome.passed();
    let manifest = Manifest {
        schema_version: REPORT_SCHEMA,
        subcommand: cmd.name().into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config_schema: CONFIG_SCHEMA,
        config_sha256: report::sha256_hex(&bytes),
        seed: config.seed,
        seed_from_env,
        assertions_passed: passed,
        files: Vec::new(),
    };
    report::emit(out, &outcome.artifacts, manifest)?;
    Ok(passed)
}

pub fn run_pipeline(cmd: Subcommand, config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    match cmd {
        Subcommand::Simulate => simulate(config),
        Subcommand::SolveBsde => solve_bsde_cmd(config),
        Subcommand::SolveHjb => solve_hjb(config),
        Subcommand::Synthesize => synthesize(config),
        Subcommand::Verify => verify(config),
        Subcommand::AuditSmoothing => audit_smoothing(config),
    }
}

fn summary_modes(n: usize) -> Vec<usize> {
    (1..=n.min(4)).collect()
}

const SNAPSHOT_XI: [f64; 3] = [0.25, 0.5, 0.75];

fn trajectory_csv(s: &TrajectorySummary) -> Result<String> {
    let header = ["time", "mode", "mean_y", "var_y", "mean_z", "var_z"];
    let mut rows = Vec::new();
    for (i, t) in s.times.iter().enumerate() {
        for (j, &k) in s.modes.iter().enumerate() {
            let m = s.moments[i][j];
            rows.push(vec![Cell::Float(*t), Cell::Int(k as i64), Cell::Float(m[0]), Cell::Float(m[1]), Cell::Float(m[2]), Cell::Float(m[3])]);
        }
    }
    csv(&header, &rows)
}

fn snapshot_csv(s: &TrajectorySummary) -> Result<String> {
    let header = ["time", "xi", "mean", "var"];
    let mut rows = Vec::new();
    for (i, t) in s.times.iter().enumerate() {
        for (j, xi) in s.xi.iter().enumerate() {
            let v = s.snapshots[i][j];
            rows.push(vec![Cell::Float(*t), Cell::Float(*xi), Cell::Float(v[0]), Cell::Float(v[1])]);
        }
    }
    csv(&header, &rows)
}

fn summary_artifacts(prefix: &str, paths: &PathBundle) -> Result<Vec<Artifact>> {
    let s = trajectory_summary(paths, &summary_modes(paths.n_modes()), &SNAPSHOT_XI)?;
    Ok(vec![
        Artifact::text(&format!("{prefix}trajectory_summary.csv"), trajectory_csv(&s)?),
        Artifact::text(&format!("{prefix}field_snapshots.csv"), snapshot_csv(&s)?),
    ])
}

fn simulate(config: &ExperimentConfig) -> Result<RunOutcome> {
    #[derive(Serialize)]
    struct SimulateReport {
        paths: usize,
        steps: usize,
        modes: usize,
        horizon: f64,
        /// Mean of `|X_T|²_H`.
        terminal_h_norm_sq: f64,
    }
    let problem = assemble_wave_problem(config)?;
    let paths = problem.simulate(config.solver.paths, SeedRecord::new(config.seed))?;
    let m = paths.n_steps();
    let terminal = (0..paths.n_paths()).map(|p| h_norm_sq(paths.state(p, m))).sum::<f64>() / paths.n_paths() as f64;
    let mut artifacts = summary_artifacts("", &paths)?;
    artifacts.push(Artifact::json(
        "simulate.json",
        "simulate",
        &SimulateReport {
            paths: paths.n_paths(),
            steps: m,
            modes: paths.n_modes(),
            horizon: problem.grid[m],
            terminal_h_norm_sq: terminal,
        },
    )?);
    let checks = vec![Check::new("finite paths", terminal.is_finite(), format!("E|X_T|^2 = {terminal}"))];
    Ok(RunOutcome { artifacts, checks })
}

fn bsde_options(config: &ExperimentConfig) -> BsdeOptions {
    BsdeOptions { basis: config.basis(), truncation: config.solver.truncation.clone(), picard_iters: config.solver.picard_iters }
}

fn run_bsde(problem: &ControlProblem, config: &ExperimentConfig, n_paths: usize) -> Result<(PathBundle, BsdeSolution)> {
    let paths = problem.simulate(n_paths, SeedRecord::new(config.seed))?;
    let sol = solve_bsde(&paths, &*problem.driver(), &*problem.phi, &bsde_options(config))?;
    Ok((paths, sol))
}

#[derive(Serialize)]
struct BsdeReport<'a> {
    paths: usize,
    steps: usize,
    y0: Estimate,
    pathwise_mean: f64,
    truncation_radius: Option<f64>,
    truncation_activations: usize,
    diagnostics: &'a [crate::bsde::StepDiagnostics],
}

fn bsde_artifacts(sol: &BsdeSolution, field: &ValueField) -> Result<Vec<Artifact>> {
    let header = ["time", "condition", "residual_rms", "orthogonality", "truncation_activations", "picard_iterations", "mean_y", "mean_abs_z"];
    let rows: Vec<Vec<Cell>> = sol
        .steps
        .iter()
        .map(|d| {
            vec![
                Cell::Float(d.time),
                Cell::Float(d.condition),
                Cell::Float(d.residual_rms),
                Cell::Float(d.orthogonality),
                Cell::Int(d.truncation_activations as i64),
                Cell::Int(d.picard_iterations as i64),
                Cell::Float(d.mean_y),
                Cell::Float(d.mean_abs_z),
            ]
        })
        .collect();
    let report = BsdeReport {
        paths: sol.n_paths,
        steps: sol.n_steps(),
        y0: sol.y0,
        pathwise_mean: sol.pathwise_mean,
        truncation_radius: sol.truncation.map(|t| t.radius),
        truncation_activations: sol.total_activations(),
        diagnostics: &sol.steps,
    };
    Ok(vec![
        Artifact::json("bsde.json", "bsde", &report)?,
        Artifact::text("bsde_steps.csv", csv(&header, &rows)?),
        Artifact::text("value_field.json", report::to_json(field)?),
    ])
}

fn solve_bsde_cmd(config: &ExperimentConfig) -> Result<RunOutcome> {
    let problem = assemble_wave_problem(config)?;
    let (_, sol) = run_bsde(&problem, config, config.solver.paths)?;
    let field = ValueField::from_bsde(&sol)?;
    let checks = vec![Check::new("finite Y0", sol.y0.value.is_finite(), format!("Y0 = {:?}", sol.y0))];
    Ok(RunOutcome { artifacts: bsde_artifacts(&sol, &field)?, checks })
}

/// `ψ̃ = ψ + ⟨z, G⟩`, the driver of the Kolmogorov equation without drift.
fn kolmogorov_driver(problem: &ControlProblem) -> Arc<dyn Driver> {
    let psi = problem.driver();
    if problem.drift.is_zero() {
        psi
    } else {
        Arc::new(girsanov_driver(psi, problem.drift.clone(), problem.n_modes()))
    }
}

fn picard_options(problem: &ControlProblem, config: &ExperimentConfig, psi: &dyn Driver) -> PicardOptions {
    let basis = config.picard_basis();
    let pc = &config.solver.picard;
    let support = [basis.support(), problem.phi.active_modes(), psi.active_modes()]
        .into_iter()
        .try_fold(Vec::new(), |mut acc, part| {
            acc.extend(part?);
            Some(acc)
        })
        .map(|mut s| {
            s.sort_unstable();
            s.dedup();
            s
        });
    let quad = QuadratureScheme::select(support, pc.mc_samples, config.seed ^ 0x5151);
    let mut opts = PicardOptions::new(basis, quad, config.seed);
    if let Some(t) = pc.training {
        opts.training = t;
    }
    opts.tol = pc.tol;
    opts.max_iter = pc.max_iter;
    opts.r = config.problem.growth.r;
    opts
}

fn run_picard(problem: &ControlProblem, config: &ExperimentConfig) -> Result<PicardSolution> {
    let psi = kolmogorov_driver(problem);
    let opts = picard_options(problem, config, &*psi);
    picard_mild_solve(&*problem.phi, &*psi, &problem.grid, &problem.x0, &opts)
}

fn hjb_artifacts(sol: &PicardSolution, x0: &[f64]) -> Result<Vec<Artifact>> {
    #[derive(Serialize)]
    struct HjbReport<'a> {
        value: f64,
        bgrad: Vec<f64>,
        converged: bool,
        iterations: usize,
        sweeps: &'a [crate::kolmogorov::PicardSweep],
    }
    let t0 = sol.field.grid[0];
    let mut bgrad = vec![0.0; sol.field.n_modes];
    sol.field.bgrad(t0, x0, &mut bgrad);
    let report =
        HjbReport { value: sol.field.value(t0, x0), bgrad, converged: sol.converged, iterations: sol.iterations(), sweeps: &sol.sweeps };
    let rows: Vec<Vec<Cell>> = sol
        .sweeps
        .iter()
        .map(|s| vec![Cell::Int(s.iteration as i64), Cell::Float(s.update), Cell::Float(s.ratio), Cell::Float(s.value_at_start)])
        .collect();
    Ok(vec![
        Artifact::json("hjb.json", "hjb", &report)?,
        Artifact::text("picard_sweeps.csv", csv(&["iteration", "update", "ratio", "value_at_start"], &rows)?),
        Artifact::text("value_field_hjb.json", report::to_json(&sol.field)?),
    ])
}

fn solve_hjb(config: &ExperimentConfig) -> Result<RunOutcome> {
    let problem = assemble_wave_problem(config)?;
    let sol = run_picard(&problem, config)?;
    let checks = vec![Check::new(
        "picard converged",
        sol.converged,
        format!("{} sweeps, last update {:?}", sol.iterations(), sol.sweeps.last().map(|s| s.update)),
    )];
    Ok(RunOutcome { artifacts: hjb_artifacts(&sol, &problem.x0)?, checks })
}

fn policy_paths(config: &ExperimentConfig) -> usize {
    config.verification.policy_paths.unwrap_or(config.solver.paths)
}

/// Disjoint from the BSDE's path streams.
fn policy_seed(config: &ExperimentConfig) -> SeedRecord {
    SeedRecord::with_offset(config.seed, 1 << 40)
}

fn synthesize(config: &ExperimentConfig) -> Result<RunOutcome> {
    #[derive(Serialize)]
    struct ClosedLoopReport {
        value: Estimate,
        cost: crate::control::CostReport,
        gap: f64,
        tolerance: f64,
    }
    let problem = assemble_wave_problem(config)?;
    let (_, sol) = run_bsde(&problem, config, config.solver.paths)?;
    let field = Arc::new(ValueField::from_bsde(&sol)?);
    let (paths, cost) = closed_loop_simulate(&problem, field.clone(), policy_paths(config), policy_seed(config))?;
    let gap = cost.mean - sol.y0.value;
    let tolerance = config.verification.value_threshold_se * cost.std_error.hypot(sol.y0.std_error) + 0.05 * sol.y0.value.abs();
    let mut artifacts = bsde_artifacts(&sol, &field)?;
    artifacts.extend(summary_artifacts("closed_loop_", &paths)?);
    artifacts.push(Artifact::json("closed_loop.json", "closed_loop", &ClosedLoopReport { value: sol.y0, cost, gap, tolerance })?);
    let checks = vec![Check::new("closed-loop cost near value", gap.abs() <= tolerance, format!("J - v = {gap:.6e}, tolerance {tolerance:.6e}"))];
    Ok(RunOutcome { artifacts, checks })
}

/// `(a, c)` when `h(z) = −a²|z|²/(4c)`, so `v = −(2c/a²) ln P[e^{−a²φ/(2c)}]`.
fn quadratic_hamiltonian(problem: &ControlProblem) -> Option<(f64, f64)> {
    let spec = &problem.spec;
    let (q, c) = match spec.cost {
        ControlCost::NormPower { q, weight } | ControlCost::ModalPower { q, weight } => (q, weight),
    };
    let a = spec.actuation.first().copied().unwrap_or(1.0);
    let uniform = spec.actuation.is_empty() || (spec.actuation.len() >= problem.n_modes() && spec.actuation.iter().all(|r| *r == a));
    (q == 2.0 && spec.control_set == ControlSet::Full && uniform && a != 0.0).then_some((a, c))
}

/// `φ(x) = a y_k + b z_k`, whose value under a zero driver is `⟨ℓ, e^{σA} x⟩`.
struct LinearTerminal {
    mode: usize,
    y: f64,
    z: f64,
}

impl LinearTerminal {
    fn row(&self, sigma: f64) -> [f64; 2] {
        let e = mode_semigroup(&ModeSpec::new(self.mode), sigma).0;
        [self.y * e[0][0] + self.z * e[1][0], self.y * e[0][1] + self.z * e[1][1]]
    }

    fn value(&self, sigma: f64, x: &[f64]) -> f64 {
        let r = self.row(sigma);
        let s = 2 * (self.mode - 1);
        r[0] * x[s] + r[1] * x[s + 1]
    }

    fn bgrad(&self, sigma: f64, n_modes: usize) -> Vec<f64> {
        let mut g = vec![0.0; n_modes];
        g[self.mode - 1] = self.row(sigma)[1];
        g
    }
}

fn linear_terminal(config: &ExperimentConfig) -> Option<LinearTerminal> {
    match (config.problem.driver, &config.problem.terminal, &config.problem.drift) {
        (DriverKind::Zero, TerminalSpec::ModeLinear { mode, y, z }, DriftSpec::Zero) => Some(LinearTerminal { mode: *mode, y: *y, z: *z }),
        _ => None,
    }
}

/// Relative agreement `|a − b| ≤ tol·|b|`.
fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}

#[derive(Debug, Clone, Serialize)]
struct OracleComparison {
    bsde: Estimate,
    picard: Option<f64>,
    oracle: Option<Estimate>,
    oracle_kind: Option<String>,
}

fn verify(config: &ExperimentConfig) -> Result<RunOutcome> {
    let v = &config.verification;
    let problem = assemble_wave_problem(config)?;
    let n = config.solver.paths;
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();
    let params = problem.params;

    // Half-size run first so only one bundle is alive at a time.
    let (z_half, e_half) = {
        let (paths, sol) = run_bsde(&problem, config, n / 2)?;
        (z_growth_report(&sol, &paths, params.r), exp_moment_report(&sol, params.l, v.eta, params.gamma_z))
    };
    let (paths, sol) = run_bsde(&problem, config, n)?;
    let field = Arc::new(ValueField::from_bsde(&sol)?);
    artifacts.extend(bsde_artifacts(&sol, &field)?);
    let factor = v.stability_factor;
    let stable = |ratio: f64| ratio.is_finite() && ratio <= factor && ratio >= 1.0 / factor;

    if v.z_growth {
        let full = z_growth_report(&sol, &paths, params.r);
        let ratio = full.stability(&z_half);
        checks.push(Check::new(
            "z-growth stable under doubling",
            full.max_ratio.is_finite() && stable(ratio),
            format!("max |Z|/(1+|X|^r): {:.6e} at N/2, {:.6e} at N (ratio {ratio:.4})", z_half.max_ratio, full.max_ratio),
        ));
        artifacts.push(Artifact::json("z_growth.json", "z_growth", &serde_json::json!({ "half": z_half, "full": full, "ratio": ratio }))?);
    }
    if v.exp_moment {
        let full = exp_moment_report(&sol, params.l, v.eta, params.gamma_z);
        let ratio = full.stability(&e_half);
        let rl = params.r * params.l;
        checks.push(Check::new(
            "exp-moment stable under doubling",
            rl < 1.0 && full.log_value.is_finite() && stable(ratio),
            format!("log E exp: {:.6e} at N/2, {:.6e} at N (ratio {ratio:.4}, r*l = {rl})", e_half.log_value, full.log_value),
        ));
        artifacts.push(Artifact::json("exp_moment.json", "exp_moment", &serde_json::json!({ "half": e_half, "full": full, "ratio": ratio }))?);
    }

    let picard = if config.solver.picard.enabled { Some(run_picard(&problem, config)?) } else { None };
    if let Some(pic) = &picard {
        artifacts.extend(hjb_artifacts(pic, &problem.x0)?);
        checks.push(Check::new("picard converged", pic.converged, format!("{} sweeps", pic.iterations())));
        if v.identification {
            let id = identification_report(&pic.field, &sol, &paths, v.value_threshold_se, v.gradient_threshold);
            checks.push(Check::new(
                "identification",
                id.passed,
                format!(
                    "value gap {:.3} SE (limit {}), gradient discrepancy {:.4} (limit {})",
                    id.value_discrepancy_se, v.value_threshold_se, id.gradient_discrepancy, v.gradient_threshold
                ),
            ));
            artifacts.push(Artifact::json("identification.json", "identification", &id)?);
        }
    }

    // Oracle for the value when one is available.
    let t0 = problem.start();
    let picard_value = picard.as_ref().map(|p| p.field.value(t0, &problem.x0));
    let oracle = if problem.driver_kind == DriverKind::Control {
        match quadratic_hamiltonian(&problem) {
            Some((a, c)) if problem.drift.is_zero() && problem.gbar.is_none() => {
                let quad = QuadratureScheme::select(problem.phi.active_modes(), 1 << 18, config.seed ^ 0xc01e);
                let horizon = problem.grid[problem.grid.len() - 1];
                let value = exponential_transform(&*problem.phi, c / (a * a), horizon - t0, &problem.x0, &quad)?;
                Some((Estimate { value, std_error: 0.0 }, "exponential transform"))
            }
            Some(_) => Some((cole_hopf_value(&problem, n, policy_seed(config))?, "cole-hopf monte carlo")),
            None => None,
        }
    } else {
        None
    };
    if let Some((o, _)) = &oracle {
        let tol = 0.02;
        let se = |a: &Estimate| config.verification.value_threshold_se * a.std_error.hypot(o.std_error);
        checks.push(Check::new(
            "bsde matches oracle",
            close(sol.y0.value, o.value, tol),
            format!(
                "Y0 = {:.6e} ± {:.2e}, oracle {:.6e} ± {:.2e} ({:.2} combined SE)",
                sol.y0.value,
                sol.y0.std_error,
                o.value,
                o.std_error,
                (sol.y0.value - o.value).abs() / se(&sol.y0) * config.verification.value_threshold_se
            ),
        ));
        if let Some(pv) = picard_value {
            checks.push(Check::new("picard matches oracle", close(pv, o.value, tol), format!("v = {pv:.6e}, oracle {:.6e}", o.value)));
        }
    }
    if let Some(lin) = linear_terminal(config) {
        let horizon = problem.grid[problem.grid.len() - 1];
        let mut worst_z: f64 = 0.0;
        let mut scale: f64 = 0.0;
        let mut worst_field: f64 = 0.0;
        let mut g = vec![0.0; problem.n_modes()];
        for (i, &t) in problem.grid[..problem.grid.len() - 1].iter().enumerate() {
            let exact = lin.bgrad(horizon - t, problem.n_modes());
            scale = scale.max(exact.iter().map(|v| v.abs()).fold(0.0, f64::max));
            let mean_z: Vec<f64> = (0..problem.n_modes())
                .map(|k| (0..sol.n_paths).map(|p| sol.z(p, i)[k]).sum::<f64>() / sol.n_paths as f64)
                .collect();
            worst_z = worst_z.max(mean_z.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            if let Some(pic) = &picard {
                pic.field.bgrad(t, &problem.x0, &mut g);
                let e = lin.bgrad(horizon - t, problem.n_modes());
                worst_field = worst_field.max(g.iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        let exact_v = lin.value(horizon - t0, &problem.x0);
        checks.push(Check::new(
            "bsde matches linear closed form",
            close(sol.y0.value, exact_v, 0.02) && worst_z <= 0.02 * scale,
            format!("Y0 = {:.6e} vs {exact_v:.6e}; max |E Z - grad| = {worst_z:.3e} against sup {scale:.3e}", sol.y0.value),
        ));
        if let Some(pv) = picard_value {
            checks.push(Check::new(
                "picard matches linear closed form",
                close(pv, exact_v, 0.02) && worst_field <= 0.02 * scale,
                format!("v = {pv:.6e} vs {exact_v:.6e}; max gradient error {worst_field:.3e}"),
            ));
        }
    }
    if let Some(pv) = picard_value {
        checks.push(Check::new("bsde matches picard", close(sol.y0.value, pv, 0.02), format!("Y0 = {:.6e}, v = {pv:.6e}", sol.y0.value)));
    }
    artifacts.push(Artifact::json(
        "value_comparison.json",
        "value_comparison",
        &OracleComparison { bsde: sol.y0, picard: picard_value, oracle: oracle.map(|o| o.0), oracle_kind: oracle.map(|o| o.1.to_string()) },
    )?);
    drop(paths);

    if v.fundamental_relation && problem.driver_kind == DriverKind::Control {
        let candidates = standard_candidates(field, v.candidate_amplitude, v.random_candidates, config.seed);
        let reference = oracle.filter(|(_, kind)| *kind == "cole-hopf monte carlo").map(|o| o.0);
        let rel = fundamental_relation_report(
            &problem,
            sol.y0,
            reference,
            &candidates,
            policy_paths(config),
            policy_seed(config),
            v.value_threshold_se,
        )?;
        let min_margin = rel.rows.iter().map(|r| r.margin / r.margin_se).fold(f64::INFINITY, f64::min);
        checks.push(Check::new(
            "fundamental relation",
            rel.passed && rel.rows.len() >= 8,
            format!(
                "{} candidates, min margin {min_margin:.3} SE, feedback minimal: {}, doubled feedback gap {:.3} SE",
                rel.rows.len(),
                rel.feedback_is_min,
                rel.scaled_gap / rel.scaled_gap_se
            ),
        ));
        let rows: Vec<Vec<Cell>> = rel
            .rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Text(&r.name),
                    Cell::Float(r.cost.mean),
                    Cell::Float(r.cost.std_error),
                    Cell::Float(r.margin),
                    Cell::Float(r.margin_se),
                    Cell::Float(r.cost.q_moment),
                    Cell::Int(r.satisfied as i64),
                ]
            })
            .collect();
        artifacts.push(Artifact::text(
            "policy_costs.csv",
            csv(&["policy", "cost", "std_error", "margin", "margin_se", "q_moment", "satisfied"], &rows)?,
        ));
        artifacts.push(Artifact::json("fundamental_relation.json", "fundamental_relation", &rel)?);
    }
    artifacts.push(Artifact::json("verify.json", "verify", &checks)?);
    Ok(RunOutcome { artifacts, checks })
}

fn audit_smoothing(config: &ExperimentConfig) -> Result<RunOutcome> {
    #[derive(Serialize)]
    struct SmoothingReport {
        slope: f64,
        intercept: f64,
        small_sigma: f64,
        small_sigma_prefactor: f64,
        max_prefactor: f64,
    }
    let s = &config.smoothing;
    let basis = ModeBasis::new(config.problem.modes)?;
    let audit = smoothing_audit(s.sigma_min, s.sigma_max, s.points, &basis)?;
    let rows: Vec<Vec<Cell>> = audit.rows.iter().map(|(sig, c)| vec![Cell::Float(*sig), Cell::Float(*c)]).collect();
    let report = SmoothingReport {
        slope: audit.slope,
        intercept: audit.intercept,
        small_sigma: s.sigma_min,
        small_sigma_prefactor: audit.small_sigma_prefactor,
        max_prefactor: audit.max_prefactor,
    };
    let checks = vec![
        Check::new("smoothing slope", (audit.slope + 0.5).abs() <= 0.05, format!("slope {:.6}", audit.slope)),
        Check::new(
            "small-sigma prefactor",
            close(audit.small_sigma_prefactor, 2.0, 0.05),
            format!("c(sigma) sqrt(sigma) = {:.6} at sigma = {}", audit.small_sigma_prefactor, s.sigma_min),
        ),
    ];
    Ok(RunOutcome {
        artifacts: vec![
            Artifact::text("smoothing.csv", csv(&["sigma", "smoothing_constant"], &rows)?),
            Artifact::json("smoothing.json", "smoothing", &report)?,
        ],
        checks,
    })
}
