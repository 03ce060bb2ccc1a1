use super::*;
use crate::functional::{ConstantDriver, FnDriver, ModeLimited, ZeroDriver};
use crate::hamiltonian::{ControlDriver, HamiltonianSpec};
use crate::rng::SeedRecord;
use crate::semigroup::{apply_semigroup, QuadratureScheme, GH_NODES};
use crate::spectral_ou::{mode_actuation, mode_semigroup, simulate_paths, uniform_grid, ModeSpec, StateVector, ZeroDrift};

fn bundle(n: usize, m: usize, paths: usize, seed: u64) -> PathBundle {
    let mut x0 = StateVector::zeros(n);
    x0[0] = 1.0;
    x0[1] = -0.5;
    simulate_paths(0.0, &x0, &uniform_grid(0.0, 1.0, m), &ZeroDrift, paths, SeedRecord::new(seed)).unwrap()
}

fn opts(n: usize) -> BsdeOptions {
    BsdeOptions {
        basis: RegressionBasis::default_for(n).with_poly(vec![1], 4),
        truncation: TruncationPolicy::Disabled,
        picard_iters: 8,
    }
}

fn linear_phi(x: &[f64]) -> f64 {
    0.8 * x[0] + 0.3 * x[1]
}

#[test]
fn truncation_profile() {
    let tr = TruncationRadius::new(2.0).unwrap();
    assert_eq!(smooth_truncation(&[0.3, -0.4], tr), vec![0.3, -0.4]);
    let capped = smooth_truncation(&[60.0, 80.0], tr);
    assert!((norm(&capped) - 2.0).abs() < 1e-14);
    assert!((capped[0] / capped[1] - 0.75).abs() < 1e-14);
    let h = 1e-6;
    let mut prev_slope = 1.0;
    for i in 0..4000 {
        let s = 0.001 * i as f64;
        let slope = (tr.profile(s + h) - tr.profile(s - h)) / (2.0 * h);
        assert!(slope <= 1.0 + 1e-8 && slope >= -1e-8);
        assert!((slope - prev_slope).abs() < 1e-2, "profile slope jumps at {s}");
        assert!(tr.profile(s) <= 2.0);
        prev_slope = slope;
    }
    assert!(TruncationRadius::new(1.0).is_err());
}

#[test]
fn a_priori_radius() {
    let a = a_priori_fixed_point(2.0, 0.5).unwrap();
    assert!((a - 2.0 * (1.0 + a.sqrt())).abs() < 1e-10);
    assert!(a_priori_fixed_point(1.0, 1.0).is_err());
}

#[test]
fn terminal_exact_and_linear_closed_form() {
    let (n, m) = (3, 16);
    let paths = bundle(n, m, 20_000, 1);
    let sol = solve_bsde(&paths, &ZeroDriver, &linear_phi, &opts(n)).unwrap();
    for p in (0..paths.n_paths()).step_by(997) {
        assert_eq!(sol.y(p, m).to_bits(), linear_phi(paths.state(p, m)).to_bits());
    }
    let mode = ModeSpec::new(1);
    let a = [0.8, 0.3];
    let oracle_y = |t: f64, x: &[f64]| {
        let e = mode_semigroup(&mode, 1.0 - t).apply([x[0], x[1]]);
        a[0] * e[0] + a[1] * e[1]
    };
    let oracle_z = |t: f64| {
        let v = mode_actuation(&mode, 1.0 - t);
        a[0] * v[0] + a[1] * v[1]
    };
    let sup_z = (0..m).map(|i| oracle_z(paths.grid[i]).abs()).fold(0.0, f64::max);
    assert!((sol.y0.value - oracle_y(0.0, paths.state(0, 0))).abs() < 0.02 * oracle_y(0.0, paths.state(0, 0)).abs());
    for i in 0..m {
        for p in (0..paths.n_paths()).step_by(1511) {
            let t = paths.grid[i];
            let yerr = (sol.y(p, i) - oracle_y(t, paths.state(p, i))).abs();
            assert!(yerr < 0.02 * (1.0 + oracle_y(t, paths.state(p, i)).abs()), "Y at step {i}: {yerr}");
            let z = sol.z(p, i);
            assert!((z[0] - oracle_z(t)).abs() < 0.02 * sup_z, "Z at step {i}: {} vs {}", z[0], oracle_z(t));
            assert!(z[1].abs() < 0.02 * sup_z && z[2].abs() < 0.02 * sup_z);
        }
    }
    assert!(sol.steps.iter().all(|s| s.orthogonality < 1e-6), "{:?}", sol.steps.iter().map(|s| s.orthogonality).collect::<Vec<_>>());
}

#[test]
fn constant_driver_shifts_value() {
    let (n, m) = (2, 8);
    let paths = bundle(n, m, 5_000, 2);
    let base = solve_bsde(&paths, &ZeroDriver, &linear_phi, &opts(n)).unwrap();
    let shifted = solve_bsde(&paths, &ConstantDriver(0.7), &linear_phi, &opts(n)).unwrap();
    assert!((shifted.y0.value - base.y0.value - 0.7).abs() < 1e-9);
    for i in 0..m {
        let t = paths.grid[i];
        assert!((shifted.y(17, i) - base.y(17, i) - 0.7 * (1.0 - t)).abs() < 1e-9);
    }
}

#[test]
fn implicit_linear_y_dependence() {
    let (n, m) = (1, 10);
    let k = 2.0;
    let paths = bundle(n, m, 1_000, 3);
    let driver = FnDriver::new(move |_t, _x, y, _z| -k * y).with_y_lipschitz(k);
    let sol = solve_bsde(&paths, &driver, &|_: &[f64]| 1.0, &opts(n)).unwrap();
    let exact = (1.0 + k * 0.1f64).powi(-(m as i32));
    // Eight inner Picard iterations leave a residual of order (kΔ)^8 per step.
    assert!((sol.y0.value - exact).abs() < m as f64 * (k * 0.1f64).powi(8), "{} vs {exact}", sol.y0.value);
    let stiff = FnDriver::new(|_t, _x, y, _z| -10.0 * y).with_y_lipschitz(10.0);
    assert!(matches!(solve_bsde(&paths, &stiff, &|_: &[f64]| 1.0, &opts(n)), Err(Error::StepSize { .. })));
}

fn cole_hopf(phi: &ModeLimited<fn(&[f64]) -> f64>, x: &[f64], sigma: f64) -> f64 {
    let e = ModeLimited::new(|y: &[f64]| (-phi.eval(y) / 2.0).exp(), vec![1]);
    let q = QuadratureScheme::GaussHermite { nodes: 21, active_modes: vec![1] };
    -2.0 * apply_semigroup(&e, sigma, x, &q).unwrap().value.ln()
}

fn soft_abs(x: &[f64]) -> f64 {
    2.0 * (0.1 + (x[0] - 0.3).powi(2)).sqrt()
}

#[test]
fn quadratic_driver_matches_exponential_transform() {
    let (n, m) = (2, 16);
    let paths = bundle(n, m, 20_000, 4);
    let phi = ModeLimited::new(soft_abs as fn(&[f64]) -> f64, vec![1]);
    let driver = ControlDriver::new(None, HamiltonianSpec::quadratic());
    let sol = solve_bsde(&paths, &driver, &phi, &opts(n)).unwrap();
    let oracle = cole_hopf(&phi, paths.state(0, 0), 1.0);
    assert!((sol.y0.value - oracle).abs() < 0.02 * oracle.abs(), "{} vs {oracle}", sol.y0.value);
    let _ = GH_NODES;
}

#[test]
fn zero_problem_has_zero_z() {
    let paths = bundle(2, 6, 2_000, 5);
    let sol = solve_bsde(&paths, &ZeroDriver, &|_: &[f64]| 0.0, &opts(2)).unwrap();
    assert!(sol.z.iter().all(|v| *v == 0.0));
    let g = z_growth_report(&sol, &paths, 0.3);
    assert_eq!(g.max_ratio, 0.0);
    let e = exp_moment_report(&sol, 1.0, 0.1, 0.5);
    assert_eq!(e.value, 1.0);
    assert_eq!(e.log_value, 0.0);
}

#[test]
fn linear_run_exp_moment_matches_deterministic_bound() {
    let (n, m) = (2, 16);
    let paths = bundle(n, m, 20_000, 6);
    let sol = solve_bsde(&paths, &ZeroDriver, &linear_phi, &opts(n)).unwrap();
    let mode = ModeSpec::new(1);
    let (l, eta, gamma) = (1.0, 0.1, 1.0);
    let exponent: f64 = (0..m)
        .map(|i| {
            let v = mode_actuation(&mode, 1.0 - paths.grid[i]);
            (0.8 * v[0] + 0.3 * v[1]).powi(2) * paths.dt(i)
        })
        .sum::<f64>()
        * (0.5 + eta)
        * gamma
        * gamma
        / 4.0;
    let rep = exp_moment_report(&sol, l, eta, gamma);
    assert!((rep.value - exponent.exp()).abs() < 0.01 * exponent.exp(), "{} vs {}", rep.value, exponent.exp());
    assert!(!rep.heavy_tail);
    let growth = z_growth_report(&sol, &paths, 0.0);
    let sup = (0..m).map(|i| {
        let v = mode_actuation(&mode, 1.0 - paths.grid[i]);
        (0.8 * v[0] + 0.3 * v[1]).abs()
    }).fold(0.0, f64::max);
    // With r = 0 the denominator 1 + |X|^0 is 2.
    assert!((2.0 * growth.max_ratio - sup).abs() < 0.05 * sup, "{} vs {sup}", growth.max_ratio);
}

#[test]
fn truncation_inert_when_radius_is_large() {
    let paths = bundle(2, 8, 5_000, 7);
    let driver = ControlDriver::new(None, HamiltonianSpec::quadratic());
    let free = solve_bsde(&paths, &driver, &soft_abs, &opts(2)).unwrap();
    let mut o = opts(2);
    o.truncation = TruncationPolicy::Fixed { radius: 50.0 };
    let cut = solve_bsde(&paths, &driver, &soft_abs, &o).unwrap();
    assert_eq!(cut.total_activations(), 0);
    assert!((free.y0.value - cut.y0.value).abs() <= 3.0 * free.y0.std_error);
    o.truncation = TruncationPolicy::Fixed { radius: 1.2 };
    let tight = solve_bsde(&paths, &driver, &soft_abs, &o).unwrap();
    assert!(tight.total_activations() > 0);
    o.truncation = TruncationPolicy::Default { r: 0.0 };
    assert_eq!(o.truncation.resolve(&paths).unwrap().unwrap().radius, 30.0);
}

#[test]
fn comparison_under_larger_terminal_cost() {
    let paths = bundle(2, 8, 5_000, 8);
    let driver = ControlDriver::new(None, HamiltonianSpec::quadratic());
    let low = solve_bsde(&paths, &driver, &soft_abs, &opts(2)).unwrap();
    let high = solve_bsde(&paths, &driver, &|x: &[f64]| soft_abs(x) + 0.1 * x[2].powi(2), &opts(2)).unwrap();
    assert!(high.y0.value >= low.y0.value - 3.0 * low.y0.std_error);
}

#[test]
fn deterministic_across_thread_counts() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let paths = bundle(2, 6, 3_000, 9);
            let driver = ControlDriver::new(None, HamiltonianSpec::quadratic());
            solve_bsde(&paths, &driver, &soft_abs, &opts(2)).unwrap()
        })
    };
    let a = run(1);
    let b = run(3);
    assert!(a.y.iter().zip(&b.y).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.z.iter().zip(&b.z).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn rank_guard_rejects_small_samples() {
    let paths = bundle(4, 4, 50, 10);
    assert!(solve_bsde(&paths, &ZeroDriver, &linear_phi, &opts(4)).is_err());
}
