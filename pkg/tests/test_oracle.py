import json

import numpy as np
import pytest

from gaswlan.analytic import optimal_point
from gaswlan.oracle import (
    CheckResult,
    check_boundary_minimizer,
    check_lemma_equal_elements,
    check_lyapunov_descent,
    check_no_selfish_gain,
    check_theorem1_bound,
    finite_horizon_slack,
    random_starts,
    stability_boundary,
)
from gaswlan.phy import DEFAULT_PHY


def test_result_pass_iff_no_violations():
    assert CheckResult("a", 10, 0, 0.1).passed
    r = CheckResult("a", 10, 2, -0.1)
    assert not r.passed and r.to_dict()["pass"] is False
    assert r.line().startswith("FAIL a")
    json.dumps(r.to_dict())


def test_bound_degenerate_ball():
    r = check_theorem1_bound(4, [0.0], samples=100)
    assert r.passed and r.worst_margin >= 0


def test_bound_two_stations_half_tau():
    opt = optimal_point(2, DEFAULT_PHY)
    r = check_theorem1_bound(2, [0.5 * opt.tau_opt], samples=100_000)
    assert r.passed and r.samples == 100_000 + 4


@pytest.mark.parametrize("n", [2, 3, 5, 10])
def test_bound_all_sizes(n):
    opt = optimal_point(n, DEFAULT_PHY)
    r = check_theorem1_bound(n, [0.1 * opt.tau_opt, 0.5 * opt.tau_opt, opt.tau_opt], samples=20_000)
    assert r.passed, r.line()


def test_bound_corners_are_included():
    opt = optimal_point(3, DEFAULT_PHY)
    r = check_theorem1_bound(3, [0.5 * opt.tau_opt], samples=1)
    assert r.samples == 1 + 8 and r.passed


def test_bound_oversized_delta():
    # a ball reaching beyond 2 tau_opt gets clipped at 0 from below
    opt = optimal_point(5, DEFAULT_PHY)
    assert check_theorem1_bound(5, [3 * opt.tau_opt], samples=20_000).passed


def test_bound_worst_margin_monotone_in_samples():
    opt = optimal_point(3, DEFAULT_PHY)
    d = [0.5 * opt.tau_opt]
    w = [check_theorem1_bound(3, d, samples=k, chunk=10**6).worst_margin for k in (10, 100, 1000, 10_000)]
    assert all(a >= b for a, b in zip(w, w[1:]))


def test_lemma_pinned_corner():
    r = check_lemma_equal_elements(2, 0.81, (0.1, 0.4), 1e-3)
    assert r.passed and r.samples >= 1
    assert r.extra["symmetric_tau"] == pytest.approx(0.1)


def test_lemma_three_stations_grid():
    r = check_lemma_equal_elements(3, 0.85**3, (0.1, 0.4), 1e-3)
    assert r.passed and r.samples > 10_000


def test_lemma_two_stations_fine_grid():
    r = check_lemma_equal_elements(2, 0.8**2, (0.1, 0.4), 1e-5)
    assert r.passed and r.samples > 10_000


def test_lemma_infeasible():
    with pytest.raises(ValueError, match="infeasible"):
        check_lemma_equal_elements(2, 0.99, (0.1, 0.4))


def test_boundary_single_point():
    assert check_boundary_minimizer(4, (0.2, 0.2)).passed


def test_boundary_ten_stations():
    opt = optimal_point(10, DEFAULT_PHY)
    r = check_boundary_minimizer(10, (opt.tau_opt / 2, 2 * opt.tau_opt), 1e-5)
    assert r.passed
    assert r.extra["argmin_diagonal"] in (pytest.approx(opt.tau_opt / 2), pytest.approx(2 * opt.tau_opt, abs=1e-5))


def test_boundary_wide_box():
    r = check_boundary_minimizer(2, (0.01, 0.99), 1e-5)
    assert r.passed


def test_descent_from_optimum_is_stationary():
    opt = optimal_point(5, DEFAULT_PHY)
    r = check_lyapunov_descent(5, np.full((1, 5), opt.tau_opt), stages=50)
    assert r.passed and r.samples == 0 and r.extra["unconverged"] == 0


def test_descent_holds_at_default_gain():
    r = check_lyapunov_descent(10, 30, stages=2000, below_floor=5)
    assert r.passed, r.extra


def test_descent_fails_at_ten_times_ceiling():
    opt = optimal_point(10, DEFAULT_PHY)
    r = check_lyapunov_descent(10, 100, gamma=10 * opt.gamma_max, stages=100)
    assert r.extra["descent_violations"] > 0
    assert r.extra["first_violation_stage"] < 100


def test_starts_cover_floor():
    opt = optimal_point(4, DEFAULT_PHY)
    x = random_starts(4, opt, 50, below_floor=20)
    assert x.shape == (70, 4)
    assert np.all(x[:50] >= opt.tau_opt / 2) and np.any(x[50:] < opt.tau_opt / 2)


def test_stability_sweep_brackets_ceiling():
    # frozen gain ceiling of the default profile holds up empirically: no loss of descent below it
    sb = stability_boundary(10, multipliers=(0.5, 1, 10, 30), starts=20, stages=500)
    v = {row["gamma_over_max"]: row["violations"] for row in sb["rows"]}
    assert v[0.5] == 0 and v[1] == 0
    assert v[30] > 0


def test_no_gain_gas_is_exact():
    r = check_no_selfish_gain(6, ("gas",), horizon=500)
    opt = optimal_point(6, DEFAULT_PHY)
    assert r.passed
    assert r.extra["per_family"]["gas"]["max_ratio"] == pytest.approx(1.0, abs=1e-12)
    assert r.extra["finite_horizon_slack_bps"] == pytest.approx(finite_horizon_slack(opt, opt.gamma_default, 500))


def test_no_gain_always_transmit():
    r = check_no_selfish_gain(10, ("static",), horizon=10_000, cw_space=[1])
    assert r.passed
    assert r.extra["per_family"]["static"]["max_ratio"] < 1.01


@pytest.mark.slow
def test_no_gain_greedy_long_horizon():
    r = check_no_selfish_gain(10, ("greedy",), horizon=10_000)
    assert r.passed, r.extra["per_family"]
