use super::*;
use crate::bsde::{solve_bsde, BsdeOptions, RegressionBasis, TruncationPolicy};

fn wave_config(modes: usize, steps: usize) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
seed = 11
[problem]
modes = {modes}
steps = {steps}
horizon = 1.0
drift = {{ kind = "sine", kappa = 0.5 }}
state_cost = {{ kind = "soft_abs", weight = 0.5, width = 0.1 }}
terminal = {{ kind = "soft_abs", weight = 2.0, width = 0.2, amplitude = 0.5 }}
"#
    ))
    .unwrap()
}

fn wave_field(problem: &ControlProblem, n_paths: usize) -> (Arc<ValueField>, Estimate) {
    let paths = problem.simulate(n_paths, SeedRecord::new(5)).unwrap();
    let opts = BsdeOptions {
        basis: RegressionBasis::default_for(problem.n_modes()).with_poly(vec![1], 3),
        truncation: TruncationPolicy::Default { r: 0.0 },
        picard_iters: 8,
    };
    let sol = solve_bsde(&paths, &*problem.driver(), &*problem.phi, &opts).unwrap();
    (Arc::new(ValueField::from_bsde(&sol).unwrap()), sol.y0)
}

#[test]
fn assembly_reads_the_registry() {
    let p = assemble_wave_problem(&wave_config(3, 8)).unwrap();
    assert_eq!(p.n_modes(), 3);
    assert_eq!(p.grid.len(), 9);
    assert!(p.lipschitz.passed);
    assert!(p.lipschitz.max_ratio <= 0.5 && p.lipschitz.max_ratio > 0.3, "{:?}", p.lipschitz);
    assert!(p.growth.accepted);
    assert!(p.gbar.is_some());
}

#[test]
fn assembly_rejects_growth_violations() {
    let mut c = wave_config(2, 4);
    c.problem.growth.r = 1.5;
    assert!(matches!(assemble_wave_problem(&c), Err(Error::Hypothesis(_))));
}

#[test]
fn rollout_matches_closed_loop_paths() {
    let p = assemble_wave_problem(&wave_config(2, 8)).unwrap();
    let (field, _) = wave_field(&p, 2000);
    let (paths, report) = closed_loop_simulate(&p, field.clone(), 200, SeedRecord::new(9)).unwrap();
    let policy = Policy::Feedback { field, scale: 1.0 };
    let mut u = vec![0.0; 2];
    let mut total = 0.0;
    for path in 0..paths.n_paths() {
        for i in 0..paths.n_steps() {
            let x = paths.state(path, i);
            let next = paths.state(path, i + 1);
            let dt = paths.dt(i);
            policy.control(&p.spec, paths.grid[i], x, &mut u).unwrap();
            let mid: Vec<f64> = x.iter().zip(next).map(|(a, b)| 0.5 * (a + b)).collect();
            total += (p.gbar.as_ref().unwrap().eval(&mid) + p.spec.control_cost(&u)) * dt;
        }
        total += p.phi.eval(paths.state(path, paths.n_steps()));
    }
    let mean = total / paths.n_paths() as f64;
    assert!((mean - report.mean).abs() < 1e-10 * mean.abs().max(1.0), "{mean} vs {}", report.mean);
    let parts = report.state_cost + report.control_cost + report.terminal_cost;
    assert_eq!(parts, report.mean);
}

#[test]
fn zero_data_costs_nothing() {
    let mut c = wave_config(2, 4);
    c.problem.drift = DriftSpec::Zero;
    c.problem.state_cost = StateCostSpec::Zero;
    c.problem.terminal = TerminalSpec::Zero;
    let p = assemble_wave_problem(&c).unwrap();
    let r = evaluate_cost(&p, &Policy::Zero, 50, SeedRecord::new(1)).unwrap();
    assert_eq!(r.mean, 0.0);
    assert_eq!(r.std_error, 0.0);
}

#[test]
fn constant_control_cost_is_exact() {
    let mut c = wave_config(3, 8);
    c.problem.state_cost = StateCostSpec::Zero;
    c.problem.terminal = TerminalSpec::Zero;
    let p = assemble_wave_problem(&c).unwrap();
    let r = evaluate_cost(&p, &Policy::Constant { u: vec![0.3, -0.4] }, 20, SeedRecord::new(1)).unwrap();
    assert!((r.control_cost - 0.25).abs() < 1e-14);
    assert!((r.q_moment - 0.25).abs() < 1e-14);
}

#[test]
fn doubling_that_inflates_the_moment_is_inadmissible() {
    let mut costs = vec![PathCost { q_moment: 1.0, ..Default::default() }; 100];
    for c in &mut costs[50..] {
        c.q_moment = 1e3;
    }
    assert!(matches!(summarize(&costs), Err(Error::Inadmissible { .. })));
    assert!(summarize(&costs[..50]).is_ok());
}

#[test]
fn projection_respects_sets() {
    let mut u = [3.0, 4.0];
    project_to_set(&ControlSet::Ball { radius: 1.0 }, &mut u);
    assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
    let mut v = [3.0, -4.0];
    project_to_set(&ControlSet::Box { lower: -1.0, upper: 2.0 }, &mut v);
    assert_eq!(v, [2.0, -1.0]);
}

#[test]
fn cole_hopf_bounds_every_policy_from_below() {
    let p = assemble_wave_problem(&wave_config(2, 16)).unwrap();
    let seed = SeedRecord::new(21);
    let v = cole_hopf_value(&p, 4000, seed).unwrap();
    let (field, _) = wave_field(&p, 4000);
    for cand in standard_candidates(field, 0.5, 2, 3) {
        let j = evaluate_cost(&p, &cand.policy, 4000, seed).unwrap();
        assert!(j.mean - v.value > -3.0 * j.std_error.hypot(v.std_error), "{}: {} < {}", cand.name, j.mean, v.value);
    }
}

#[test]
fn small_wave_problem_satisfies_the_fundamental_relation() {
    let p = assemble_wave_problem(&wave_config(2, 16)).unwrap();
    let (field, y0) = wave_field(&p, 8000);
    let reference = cole_hopf_value(&p, 8000, SeedRecord::new(31)).unwrap();
    assert!((y0.value - reference.value).abs() < 0.02 * reference.value.abs(), "{y0:?} vs {reference:?}");
    let candidates = standard_candidates(field, 0.5, 3, 4);
    assert!(candidates.len() >= 8);
    let report =
        fundamental_relation_report(&p, y0, Some(reference), &candidates, 4000, SeedRecord::new(41), 3.0).unwrap();
    for r in &report.rows {
        eprintln!("{:>14} J = {:.5} ± {:.5} margin {:+.5}", r.name, r.cost.mean, r.cost.std_error, r.margin);
    }
    assert!(report.passed, "{report:#?}");
}

#[test]
fn feedback_without_scale_is_the_zero_policy() {
    let p = assemble_wave_problem(&wave_config(2, 8)).unwrap();
    let (field, _) = wave_field(&p, 1000);
    let a = evaluate_cost(&p, &Policy::Feedback { field, scale: 0.0 }, 100, SeedRecord::new(2)).unwrap();
    let b = evaluate_cost(&p, &Policy::Zero, 100, SeedRecord::new(2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn uncontrolled_terminal_cost_matches_the_semigroup() {
    let mut c = wave_config(2, 8);
    c.problem.drift = DriftSpec::Zero;
    c.problem.state_cost = StateCostSpec::Zero;
    let p = assemble_wave_problem(&c).unwrap();
    let r = evaluate_cost(&p, &Policy::Zero, 20_000, SeedRecord::new(3)).unwrap();
    let quad = crate::semigroup::QuadratureScheme::MonteCarlo { samples: 200_000, seed: 8 };
    let exact = crate::semigroup::apply_semigroup(&*p.phi, 1.0, &p.x0, &quad).unwrap();
    assert!((r.mean - exact.value).abs() < 3.0 * r.std_error.hypot(exact.std_error), "{r:?} vs {exact:?}");
}

#[test]
fn doubling_paths_shrinks_the_error_by_root_two() {
    let p = assemble_wave_problem(&wave_config(2, 8)).unwrap();
    let a = evaluate_cost(&p, &Policy::Zero, 4000, SeedRecord::new(6)).unwrap();
    let b = evaluate_cost(&p, &Policy::Zero, 8000, SeedRecord::new(6)).unwrap();
    let ratio = b.std_error / a.std_error;
    assert!((ratio / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() < 0.2, "{ratio}");
}

#[test]
fn margins_agree_across_disjoint_seeds() {
    let p = assemble_wave_problem(&wave_config(2, 8)).unwrap();
    let (field, y0) = wave_field(&p, 4000);
    let candidates = standard_candidates(field, 0.5, 1, 2);
    let a = fundamental_relation_report(&p, y0, None, &candidates, 3000, SeedRecord::new(100), 3.0).unwrap();
    let b = fundamental_relation_report(&p, y0, None, &candidates, 3000, SeedRecord::with_offset(100, 1 << 32), 3.0)
        .unwrap();
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        let se = ra.cost.std_error.hypot(rb.cost.std_error);
        assert!((ra.margin - rb.margin).abs() < 3.0 * se, "{}: {} vs {}", ra.name, ra.margin, rb.margin);
    }
}

#[test]
fn trajectory_summary_reports_the_initial_state() {
    let mut c = wave_config(3, 4);
    c.problem.initial.y = vec![0.4];
    let p = assemble_wave_problem(&c).unwrap();
    let paths = p.simulate(100, SeedRecord::new(1)).unwrap();
    let s = trajectory_summary(&paths, &[1, 3], &[0.5]).unwrap();
    assert_eq!(s.moments[0][0], [0.4, 0.0, 0.0, 0.0]);
    assert!((s.snapshots[0][0][0] - 0.4 * std::f64::consts::SQRT_2).abs() < 1e-15);
    assert!(s.moments[4][0][1] > 0.0);
    assert!(trajectory_summary(&paths, &[4], &[0.5]).is_err());
}

#[test]
fn zero_data_gives_zero_value_and_nonnegative_costs() {
    let mut c = wave_config(2, 8);
    c.problem.state_cost = StateCostSpec::Zero;
    c.problem.terminal = TerminalSpec::Zero;
    let p = assemble_wave_problem(&c).unwrap();
    let (field, y0) = wave_field(&p, 1000);
    assert_eq!(y0.value, 0.0);
    for cand in standard_candidates(field, 0.5, 2, 1) {
        let j = evaluate_cost(&p, &cand.policy, 200, SeedRecord::new(4)).unwrap();
        assert!(j.mean >= 0.0);
        if matches!(cand.policy, Policy::Zero | Policy::Feedback { .. }) {
            assert_eq!(j.mean, 0.0, "{}", cand.name);
        }
    }
}
