"""Smoke test for the hjb_wave_py extension module.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import json
import math

import hjb_wave_py as hw

QUADRATIC = """
seed = 3
[problem]
modes = 2
steps = 16
horizon = 1.0
terminal = { kind = "mode_soft_abs", mode = 1, weight = 2.0, center = 0.3, width = 0.3 }
[solver]
paths = 4000
basis = { linear_modes = 1, poly_modes = [1], poly_degree = 4, hnorm_powers = [] }
"""


def main():
    q = hw.covariance_block(1, 1.0)
    assert abs(q[0][1] - q[1][0]) < 1e-15 and q[0][0] > 0 and q[1][1] > 0

    c = hw.smoothing_constant(1e-3, 8)
    assert abs(c * math.sqrt(1e-3) / 2.0 - 1.0) < 0.05, c

    h = hw.Hamiltonian(1.5)
    assert abs(h.value([1.0]) + 4.0 / 27.0) < 1e-12
    assert abs(h.optimal_control([1.0])[0] + 4.0 / 9.0) < 1e-12

    problem = hw.WaveProblem(QUADRATIC)
    y0, se, field = problem.solve_bsde(4000)
    assert math.isfinite(y0) and se > 0
    assert abs(field.value(0.0, problem.x0) - y0) < 1e-12
    again = hw.ValueField.from_json(field.to_json())
    assert again.bgrad(0.5, [0.1, 0.0, 0.0, 0.0]) == field.bgrad(0.5, [0.1, 0.0, 0.0, 0.0])

    v, v_se = problem.cole_hopf_value(4000, 11)
    fb = problem.feedback_cost(field, 4000, 11)
    zero = problem.zero_cost(4000, 11)
    assert fb["mean"] - v > -3 * math.hypot(fb["std_error"], v_se)
    assert fb["mean"] <= zero["mean"]

    passed, files = hw.run_pipeline("audit-smoothing", QUADRATIC)
    assert passed
    assert json.loads(files["smoothing.json"])["schema_version"] == 1

    try:
        hw.WaveProblem(QUADRATIC.replace("horizon = 1.0", "horizon = -1.0"))
    except ValueError:
        pass
    else:
        raise AssertionError("negative horizon accepted")

    print(f"ok: Y0 = {y0:.5f} +- {se:.5f}, Cole-Hopf {v:.5f}, feedback cost {fb['mean']:.5f}")


if __name__ == "__main__":
    main()
