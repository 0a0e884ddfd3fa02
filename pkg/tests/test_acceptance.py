"""Acceptance criteria, one test (or parametrised group) per criterion.

Every test carries a ``criterion`` marker; ``conftest.py`` prints one
PASS/FAIL line per criterion at the end of the run.
"""

import math
import time

import numpy as np
import pytest

from qtradeoff.chain import (
    EventuallyConstant,
    FiniteCutoff,
    build_custom_policy,
    build_static_policy,
    evaluate_policy,
    metrics,
    stationary_distribution,
)
from qtradeoff.experiments import (
    ExperimentConfig,
    FamilySpec,
    fit_scaling,
    interpolate_at_queue,
    sweep,
)
from qtradeoff.policies import (
    dynamic_policy,
    fully_dynamic_policy,
    general_k_constant,
    lower_bound_for,
    static_near_capacity_policy,
    throughput_threshold_policy,
    two_arrival_floor,
    two_arrival_policy,
    two_support_threshold_policy,
)
from qtradeoff.reward import (
    RewardFunction,
    derivative,
    dual_value,
    fluid_benchmark,
    polyhedral_check,
    quadratic_majorant,
)
from qtradeoff.simulate import simulate

from .oracles import dense_stationary, exhaustive_fluid, random_polynomial_reward, random_rate_table

M_VALUES = (0, 1, 3)
B_VALUES = (2, 5, 20, 100, 500)
CONCAVE_EPS = (0.01, 0.004, 0.001)
LINEAR_EPS = (0.1, 0.01, 0.001)


def quad():
    return RewardFunction.quadratic(-1.0, 5.0, 0.0, 4.0)


def lin():
    return RewardFunction.linear(1.0, 2.0)


def closed_form_idle(m, B):
    return 3 * (m + 1) ** 2 / (3 * (2 * B + 1) * m**2 + 3 * (B + 1) ** 2 * (2 * m + 1)
                               + B * (B + 1) * (2 * B + 1))


def criterion3_policies():
    """Every (family, reward, eps, policy) cell named by the regret-feasibility criterion."""
    f, g = quad(), lin()
    sf, sg = fluid_benchmark(f), fluid_benchmark(g)
    cells = []
    for e in CONCAVE_EPS:
        cells.append(("two_arrival", f, sf, e, two_arrival_policy(f, e)))
        cells.append(("fully_dynamic", f, sf, e, fully_dynamic_policy(f, e)))
    for e in LINEAR_EPS:
        cells.append(("throughput_threshold", g, sg, e, throughput_threshold_policy(2.0, e)))
        cells.append(("two_support_threshold", g, sg, e, two_support_threshold_policy(sg, g, e)))
    return cells


@pytest.mark.criterion(1, "fully dynamic k=2: E[q] = B exactly")
def test_c1_expected_queue_equals_center():
    t0 = time.perf_counter()
    for m in M_VALUES:
        for B in B_VALUES:
            p = dynamic_policy(m, B, 2.0)
            d = stationary_distribution(p)
            eq = math.fsum(np.arange(d.probabilities.size) * d.probabilities)
            assert abs(eq - B) <= 1e-10, (m, B, eq)
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(2, "closed-form idle probability of the k=2 dynamic policy")
def test_c2_closed_form_idle_probability():
    t0 = time.perf_counter()
    for m in M_VALUES:
        for B in B_VALUES:
            d = stationary_distribution(dynamic_policy(m, B, 2.0))
            assert abs(d.idle - closed_form_idle(m, B)) <= 1e-10, (m, B)
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(3, "constructed policies have exact regret <= eps")
@pytest.mark.parametrize("family", ["two_arrival", "fully_dynamic", "throughput_threshold",
                                    "two_support_threshold"])
def test_c3_regret_feasibility(family):
    t0 = time.perf_counter()
    failures = []
    for name, f, sol, e, p in criterion3_policies():
        if name != family:
            continue
        regret = evaluate_policy(p, f, sol.f_star).regret
        if regret > e:
            failures.append(f"eps={e}: regret={regret:.6g} ({regret / e:.3f} eps)")
    assert time.perf_counter() - t0 < 5.0
    assert not failures, f"{family} misses the regret target: " + "; ".join(failures)


@pytest.mark.criterion(4, "scaling fits: sqrt, linear and logarithmic regimes")
def test_c4_scaling_fits():
    t0 = time.perf_counter()
    eps = tuple(np.logspace(-4, -2, 8))
    cfg = ExperimentConfig(quad(), eps, (FamilySpec("dynamic", "fully_dynamic", {"k": 2.0}),
                                         FamilySpec("static", "static_near_capacity")))
    pts = sweep(cfg)
    dyn = fit_scaling(pts, "powerlaw", "dynamic", None)
    stat = fit_scaling(pts, "powerlaw", "static", None)
    assert abs(dyn.slope - 0.5) <= 0.05, dyn
    assert abs(stat.slope - 1.0) <= 0.05, stat

    for lmax in (1.5, 2.0, 4.0):
        g = RewardFunction.linear(1.0, lmax)
        cfg = ExperimentConfig(g, eps, (FamilySpec("threshold", "throughput_threshold"),))
        pts = sweep(cfg)
        fit = fit_scaling(pts, "logarithmic", "threshold", None)
        target = 1.0 / math.log(lmax)
        assert abs(fit.slope / target - 1.0) <= 0.2, (lmax, fit.slope, target)
        smallest = min(pts, key=lambda p: p.eps)
        ratio = smallest.expected_queue / math.log(1.0 / smallest.eps)
        assert abs(ratio / target - 1.0) <= 0.2, (lmax, ratio, target)
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(5, "universal lower bounds and the two-arrival floor")
def test_c5_lower_bounds_and_floor():
    t0 = time.perf_counter()
    checked = 0
    for name, f, sol, e, p in criterion3_policies():
        m = evaluate_policy(p, f, sol.f_star)
        if name == "two_arrival":
            assert m.expected_queue >= two_arrival_floor(p), (e, m.expected_queue)
        if m.regret <= e:
            lb = lower_bound_for(f, sol, e)
            assert lb.q_lower <= m.expected_queue, (name, e, lb.q_lower, m.expected_queue)
            checked += 1
    assert checked >= 9
    assert time.perf_counter() - t0 < 5.0


@pytest.mark.criterion(6, "fully dynamic beats two-arrival at E[q] = 15")
def test_c6_gap_at_matched_queue_length():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(quad(), (0.001, 0.004, 0.007, 0.01, 0.025, 0.04, 0.055, 0.07, 0.085, 0.1),
                           (FamilySpec("two_arrival", "two_arrival"),
                            FamilySpec("dynamic_k2", "fully_dynamic", {"k": 2.0})))
    pts = sweep(cfg)
    two = interpolate_at_queue(pts, "two_arrival", 15.0) * 100
    dyn = interpolate_at_queue(pts, "dynamic_k2", 15.0) * 100
    print(f"regret ratio at E[q]=15: two-arrival {two:.3f}%, fully dynamic {dyn:.3f}% (exact)")
    assert dyn < two
    assert abs(two - 1.5) <= 0.4
    assert abs(dyn - 1.06) <= 0.4
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.criterion(7, "polyhedral dual certificate for non-concave-like rewards")
def test_c7_dual_certificate():
    t0 = time.perf_counter()
    piecewise = RewardFunction.tabulated([0.0, 1.0, 1.5, 2.0], [0.0, 1.0, 2.0, 2.0])
    for f, u_exp, l_exp in ((lin(), 1.0, 1.0), (piecewise, 4.0 / 3.0, 0.5)):
        sol = fluid_benchmark(f)
        assert sol.is_two_point
        cert = polyhedral_check(f, sol, np.linspace(0.0, 5.0, 501))
        assert cert.u_star == pytest.approx(u_exp, abs=1e-9)
        assert cert.l_margin == pytest.approx(l_exp, abs=1e-9)
        assert cert.grid_violation <= 1e-8
        assert abs(dual_value(f, cert.u_star) + sol.f_star) <= 1e-6
    assert time.perf_counter() - t0 < 2.0


@pytest.mark.criterion(8, "brute-force oracles: dense balance solve and exhaustive pair grid")
def test_c8_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    for _ in range(20):
        table = random_rate_table(rng, 200)
        p = build_custom_policy(table, FiniteCutoff(200), float(max(table)))
        d = stationary_distribution(p)
        np.testing.assert_allclose(d.probabilities, dense_stationary(table), rtol=0, atol=1e-8)
    for _ in range(5):
        f = random_polynomial_reward(rng)
        assert abs(fluid_benchmark(f).f_star - exhaustive_fluid(f, 2000)) <= 1e-4
    assert time.perf_counter() - t0 < 60.0


def _battery():
    q, x, s = quad(), lin(), RewardFunction.power(0.5, 4.0)
    sx = fluid_benchmark(x)
    return [
        (build_static_policy(0.5), x),
        (build_static_policy(0.8), q),
        (dynamic_policy(0, 2), q),
        (dynamic_policy(1, 5), q),
        (dynamic_policy(0, 10, 1.2, 4.0), s),
        (throughput_threshold_policy(2.0, 0.1), x),
        (throughput_threshold_policy(1.5, 0.01), RewardFunction.linear(1.0, 1.5)),
        (two_support_threshold_policy(sx, x, 0.1), x),
        (two_arrival_policy(q, 0.05), q),
        (fully_dynamic_policy(q, 0.05), q),
        (static_near_capacity_policy(s, 1.0, 0.1), s),
        (build_custom_policy([1.5, 1.2, 0.9], EventuallyConstant(0.6, 3), 2.0), x),
    ]


@pytest.mark.criterion(9, "simulation agrees with exact analysis within 3 standard errors")
def test_c9_simulation_cross_validation():
    t0 = time.perf_counter()
    agree = 0
    for i, (p, f) in enumerate(_battery()):
        m = evaluate_policy(p, f, 0.0)
        est = simulate(p, f, horizon=1e5, warmup_fraction=0.2, replications=20, seed=9000 + i)
        # constant-reward policies have se_reward = 0 up to rounding
        ok_q = abs(est.mean_queue - m.expected_queue) <= 3 * est.se_queue + 1e-12
        ok_r = abs(est.mean_reward - m.reward) <= 3 * est.se_reward + 1e-12
        agree += ok_q and ok_r
    assert agree >= 11, f"only {agree}/12 policies agree"
    assert time.perf_counter() - t0 < 120.0


@pytest.mark.criterion(10, "invariant suite")
def test_c10_invariants():
    t0 = time.perf_counter()
    pairs = [(p, f, sol) for _, f, sol, _, p in criterion3_policies()]
    q = quad()
    sq = fluid_benchmark(q)
    for e in (0.1, 0.01):
        pairs.append((static_near_capacity_policy(q, sq.f_star, e), q, sq))
    for m in M_VALUES:
        pairs.append((dynamic_policy(m, 20), q, sq))
    for p, f, sol in pairs:
        d = stationary_distribution(p)
        mt = metrics(p, d, f, sol.f_star)
        assert abs(mt.idle - (1.0 - mt.throughput)) <= 1e-12
        assert mt.regret >= -1e-9
        assert abs(d.total_mass() - 1.0) <= 1e-12

    for f in (q, RewardFunction.power(0.5, 4.0)):
        g = quadratic_majorant(f)
        xs = np.linspace(0.0, f.lambda_max, 10001)
        tangent = f(1.0) + derivative(f, 1.0, 1) * (xs - 1.0)
        assert np.all(f(xs) <= g(xs) + 1e-8)
        assert np.all(g(xs) <= tangent + 1e-8)
    assert general_k_constant(2.0) == 7.0
    assert time.perf_counter() - t0 < 5.0
