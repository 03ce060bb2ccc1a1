use super::*;
use crate::error::Error;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn numeric(mut spec: HamiltonianSpec) -> HamiltonianSpec {
    spec.closed_form = false;
    spec
}

/// Dense-grid oracle on `[−10, 10]` refined by golden section, scalar control.
fn grid_oracle(q: f64, z: f64) -> (f64, f64) {
    let f = |u: f64| u.abs().powf(q) + z * u;
    let n = 200_001;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..n {
        let u = -10.0 + 20.0 * i as f64 / (n - 1) as f64;
        if f(u) < best.1 {
            best = (u, f(u));
        }
    }
    let h = 20.0 / (n - 1) as f64;
    let u = golden_section(f, best.0 - h, best.0 + h);
    (u, f(u))
}

#[test]
fn quadratic_closed_form() {
    let spec = HamiltonianSpec::quadratic();
    for z in [-3.0, -0.5, 0.0, 0.25, 2.0] {
        assert_eq!(spec.value(&[z]).unwrap(), -z * z / 4.0);
        assert_eq!(spec.optimal_control(&[z]).unwrap(), vec![-z / 2.0]);
    }
    let z = [0.3, -1.2, 0.8];
    let norm2: f64 = z.iter().map(|v| v * v).sum();
    assert_relative_eq!(spec.value(&z).unwrap(), -norm2 / 4.0, max_relative = 1e-15);
}

#[test]
fn three_halves_power() {
    let (u_ref, h_ref) = grid_oracle(1.5, 1.0);
    assert!((h_ref + 4.0 / 27.0).abs() < 1e-9);
    assert!((u_ref + 4.0 / 9.0).abs() < 1e-6);
    for spec in [HamiltonianSpec::power(1.5), numeric(HamiltonianSpec::power(1.5))] {
        let (u, h) = spec.solve(&[1.0]).unwrap();
        assert!((h - h_ref).abs() < 1e-6 && (h + 4.0 / 27.0).abs() < 1e-12);
        assert!((u[0] - u_ref).abs() < 1e-6 && (u[0] + 4.0 / 9.0).abs() < 1e-6);
    }
}

#[test]
fn numeric_matches_closed_form() {
    let costs = [
        ControlCost::NormPower { q: 1.5, weight: 0.7 },
        ControlCost::ModalPower { q: 1.25, weight: 1.3 },
        ControlCost::NormPower { q: 2.0, weight: 1.0 },
    ];
    for cost in costs {
        let spec = HamiltonianSpec::new(ControlSet::Full, cost, vec![1.0, 0.5, -2.0], true).unwrap();
        for z in [[0.3, -1.0, 2.0], [0.0, 0.0, 0.0], [5.0, 0.1, -0.4]] {
            let (uc, hc) = spec.solve(&z).unwrap();
            let (un, hn) = numeric(spec.clone()).solve(&z).unwrap();
            assert!((hc - hn).abs() <= 1e-8 * hc.abs().max(1.0), "{hc} vs {hn}");
            for (a, b) in uc.iter().zip(&un) {
                assert!((a - b).abs() < 1e-6);
            }
            assert!((spec.objective(&z, &uc) - hc).abs() <= 1e-8 * hc.abs().max(1.0));
        }
    }
}

#[test]
fn constrained_sets() {
    let ball = HamiltonianSpec::new(ControlSet::Ball { radius: 0.2 }, ControlCost::NormPower { q: 2.0, weight: 1.0 }, vec![], true).unwrap();
    let (u, h) = ball.solve(&[3.0, 4.0]).unwrap();
    assert_relative_eq!(u[0], -0.12, epsilon = 1e-14);
    assert_relative_eq!(u[1], -0.16, epsilon = 1e-14);
    assert_relative_eq!(h, 0.04 - 1.0, epsilon = 1e-14);
    let (un, hn) = numeric(ball).solve(&[3.0, 4.0]).unwrap();
    assert!((hn - h).abs() < 1e-10 && (un[0] - u[0]).abs() < 1e-8);

    let boxed = HamiltonianSpec::new(
        ControlSet::Box { lower: -0.5, upper: 1.0 },
        ControlCost::ModalPower { q: 2.0, weight: 1.0 },
        vec![],
        true,
    )
    .unwrap();
    let (u, _) = boxed.solve(&[4.0, -1.0, -8.0]).unwrap();
    assert_eq!(u, vec![-0.5, 0.5, 1.0]);
    let (un, _) = numeric(boxed).solve(&[4.0, -1.0, -8.0]).unwrap();
    for (a, b) in u.iter().zip(&un) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn rejected_combinations() {
    let modal = ControlCost::ModalPower { q: 2.0, weight: 1.0 };
    let norm = ControlCost::NormPower { q: 2.0, weight: 1.0 };
    assert!(HamiltonianSpec::new(ControlSet::Ball { radius: 1.0 }, modal, vec![], true).is_err());
    assert!(HamiltonianSpec::new(ControlSet::Box { lower: -1.0, upper: 1.0 }, norm.clone(), vec![], true).is_err());
    assert!(HamiltonianSpec::new(ControlSet::Full, ControlCost::NormPower { q: 0.5, weight: 1.0 }, vec![], true).is_err());
    assert!(HamiltonianSpec::new(ControlSet::Ball { radius: -1.0 }, norm, vec![], true).is_err());
}

#[test]
fn linear_cost_is_unbounded_below() {
    let spec = HamiltonianSpec::new(ControlSet::Full, ControlCost::NormPower { q: 1.0, weight: 1.0 }, vec![], false).unwrap();
    assert!(matches!(spec.value(&[2.0]), Err(Error::UnboundedBelow { .. })));
    assert_eq!(spec.value(&[0.5]).unwrap(), 0.0);
}

#[test]
fn zero_covector() {
    for spec in [HamiltonianSpec::quadratic(), numeric(HamiltonianSpec::power(1.5))] {
        assert_eq!(spec.value(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(spec.optimal_control(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }
}

#[test]
fn worked_parameter_triples() {
    let check = |q: f64, r: f64, l: f64| {
        let spec = HamiltonianSpec::power(q);
        let params = DriverGrowthParams { l, r, alpha: 1.0, beta: 1.0, gamma_z: spec.gamma_z(), k_psi_y: 0.0 };
        validate_growth_hypotheses(&params, &spec)
    };
    assert!(check(1.5, 0.4, 2.0).accepted);
    let bad = check(2.0, 1.2, 1.0);
    assert!(!bad.accepted);
    assert!(bad.failures().any(|c| c.name == "r < q - 1"));
    let bad = check(1.5, 0.6, 2.0);
    assert!(!bad.accepted);
    assert!(bad.failures().any(|c| c.name == "0 <= r < 1/l"));
    assert!(!check(1.5, 0.2, 1.0).accepted);
}

#[test]
fn driver_adds_state_cost() {
    let gbar: Arc<dyn Functional> = Arc::new(|x: &[f64]| x[0] * x[0]);
    let driver = ControlDriver::new(Some(gbar), HamiltonianSpec::quadratic());
    assert_eq!(driver.eval(0.0, &[2.0, 0.0], 0.0, &[1.0]), 4.0 - 0.25);
    let free = ControlDriver::new(None, HamiltonianSpec::quadratic());
    assert_eq!(free.eval(0.3, &[9.0, 9.0], 1.0, &[2.0]), -1.0);
}

#[test]
fn modulus_holds_on_sampled_pairs() {
    for q in [2.0, 1.5] {
        for cost in [ControlCost::NormPower { q, weight: 1.0 }, ControlCost::ModalPower { q, weight: 1.0 }] {
            let spec = HamiltonianSpec::new(ControlSet::Full, cost, vec![1.0, 0.5, 0.8], true).unwrap();
            let params = DriverGrowthParams::for_spec(&spec, 0.0, 0.0, 0.0);
            let audit = z_modulus_audit(&spec, &params, 0.0, 3, 10.0, 10_000, 7).unwrap();
            assert_eq!(audit.violations, 0, "max ratio {}", audit.max_ratio);
            assert!(audit.max_ratio > 0.1);
        }
    }
}

#[test]
fn growth_bound_over_sweep() {
    let spec = HamiltonianSpec::power(1.5);
    let c = spec.growth_constant();
    for i in 0..10_000 {
        let z = -50.0 + 100.0 * i as f64 / 9999.0;
        let h = spec.value(&[z]).unwrap();
        assert!(h.abs() <= c * (1.0 + z.abs().powf(spec.p())) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dominance_and_selection(
        z in proptest::collection::vec(-5.0f64..5.0, 3),
        us in proptest::collection::vec(proptest::collection::vec(-4.0f64..4.0, 3), 50),
        q in 1.2f64..2.0,
    ) {
        for spec in [HamiltonianSpec::power(q), numeric(HamiltonianSpec::power(q))] {
            let (u_star, h) = spec.solve(&z).unwrap();
            prop_assert!((spec.objective(&z, &u_star) - h).abs() <= 1e-8 * h.abs().max(1.0));
            for u in &us {
                prop_assert!(h <= spec.objective(&z, u) + 1e-9);
            }
        }
    }

    #[test]
    fn power_scaling(z in proptest::collection::vec(-3.0f64..3.0, 2), lambda in 0.1f64..5.0, q in 1.3f64..2.0) {
        let spec = HamiltonianSpec::power(q);
        let scaled: Vec<f64> = z.iter().map(|v| lambda * v).collect();
        let lhs = spec.value(&scaled).unwrap();
        let rhs = lambda.powf(spec.p()) * spec.value(&z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-300));
    }
}
