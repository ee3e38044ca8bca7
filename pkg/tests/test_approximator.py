import math

import numpy as np
import pytest

from holdergan import approximator as ap
from holdergan import bounds, holder
from holdergan import relu_net as rn
from holdergan.errors import BudgetError, ParameterError
from holdergan.harness import fit_loglog_slope


def test_gadget_zero_row_is_exact():
    g = ap.build_mult_gadget(6)
    y = np.linspace(-1, 1, 41)
    np.testing.assert_array_equal(g(np.zeros_like(y), y), 0.0)


def _gadget_error(m):
    g = ap.build_mult_gadget(m)
    t = np.linspace(-1, 1, 201)
    X, Y = np.meshgrid(t, t)
    return np.max(np.abs(g(X, Y) - X * Y))


def test_gadget_accuracy():
    assert _gadget_error(8) <= 6 * 2.0 ** -18


def test_gadget_error_shrinks_with_depth():
    assert _gadget_error(4) / _gadget_error(5) >= 3.9


def test_gadget_range_scaling():
    g = ap.build_mult_gadget(6, M=3.0)
    x = np.random.default_rng(0).uniform(-3, 3, (500, 2))
    assert np.max(np.abs(g(x[:, 0], x[:, 1]) - x[:, 0] * x[:, 1])) <= g.error_bound


@pytest.mark.parametrize("beta,d,delta,N", [(1, 1, 0.5, 2), (2, 1, 0.1, 4), (1, 1, 0.1, 10), (2, 2, 0.25, 2)])
def test_plan_grid(beta, d, delta, N):
    p = ap.plan(beta, d, delta, with_budget=False)
    assert p.grid_N == N
    assert p.gadget_m == math.ceil(math.log2(1 / delta)) + 2


def test_plan_rejects_bad_delta():
    for delta in (0.0, 1.0, 1.5):
        with pytest.raises(ParameterError):
            ap.plan(1, 1, delta)


def test_plan_refuses_huge_constructions():
    with pytest.raises(BudgetError):
        ap.plan(1, 2, 1e-4)


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_parameter_scaling(beta):
    deltas = [2.0 ** -k for k in range(3, 9)]
    pts = [(1 / dl, ap.plan(beta, 1, dl).budget["params"]) for dl in deltas]
    slope, _, _ = fit_loglog_slope(pts)
    assert 1 / beta - 0.3 <= slope <= 1 / beta + 0.3


def test_zero_target():
    net = ap.approximate(lambda x: np.zeros_like(x), ap.plan(1, 1, 0.1))
    assert ap.sup_error(net, lambda x: np.zeros_like(x), 1001) == 0.0


def test_identity_reproduced_up_to_gadget_error():
    p = ap.plan(2, 1, 0.05)
    net = ap.approximate(lambda x: x, p)
    assert ap.sup_error(net, lambda x: x, 2001) <= ap.build_mult_gadget(p.gadget_m).error_bound


def test_sine_target():
    f = lambda x: np.sin(2 * np.pi * x) / (2 * np.pi) ** 2
    net = ap.approximate(f, ap.plan(2, 1, 0.05))
    assert ap.sup_error(net, f, 10_000) <= 0.05 + 1e-3


def test_weights_bounded_by_kappa():
    pd = holder.synthesize(1, 1, 2.0, 0.3)
    for kappa in (1.0, 2.5):
        net = ap.approximate(pd, ap.plan(2, 1, 0.05), kappa=kappa)
        assert max(np.max(np.abs(l.w)) for l in net.layers) <= kappa
        assert max(np.max(np.abs(l.b)) for l in net.layers) <= kappa


def test_enforce_magnitude_preserves_function():
    rng = np.random.default_rng(2)
    net = rn.random_network(rng, [1, 6, 6, 1], scale=9.0)
    bounded = ap.enforce_magnitude(net, 1.0)
    x = rng.uniform(-1, 1, (300, 1))
    np.testing.assert_allclose(rn.forward(bounded, x), rn.forward(net, x), rtol=1e-10, atol=1e-10)
    assert max(np.max(np.abs(l.w)) for l in bounded.layers) <= 1.0


def test_two_dimensional_target():
    pd = holder.synthesize(3, 2, 1.0, 0.3, k_max=3)
    net = ap.approximate(pd, ap.plan(1, 2, 0.1))
    assert ap.sup_error(net, pd, 60) <= 0.1


def test_plan_dimension_mismatch():
    pd = holder.synthesize(0, 1, 1.0, 0.3)
    with pytest.raises(ParameterError):
        ap.approximate(pd, ap.plan(1, 2, 0.25))
    with pytest.raises(ParameterError):
        ap.approximate(pd, ap.plan(1, 1, 0.25), d=2)


def test_finite_difference_targets_within_loosened_tolerance():
    pd = holder.synthesize(4, 1, 2.0, 0.3)
    plain = lambda x: pd.pdf(x)
    net = ap.approximate(plain, ap.plan(2, 1, 0.05))
    assert ap.sup_error(net, plain, 5000) <= 0.05 + 1e-3


def test_sup_error_matches_brute_loop():
    rng = np.random.default_rng(6)
    for k in range(10):
        net = rn.random_network(rng, [1, 4, 1])
        f = lambda x, k=k: np.cos(k * x)
        pts = rng.random(50)
        brute = max(abs(rn.forward(net, np.array([t]))[0] - math.cos(k * t)) for t in pts)
        assert ap.sup_error(net, f, pts) == pytest.approx(brute, rel=1e-12)


def test_sup_error_grows_under_refinement():
    rng = np.random.default_rng(7)
    net = rn.random_network(rng, [1, 5, 1])
    f = lambda x: x ** 2
    assert ap.sup_error(net, f, 2 * 50 - 1) >= ap.sup_error(net, f, 50)


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_emitted_generators_fit_sized_class(alpha):
    pd = holder.synthesize(2, 1, alpha + 1, 0.3)
    for eps in (0.1, 0.05):
        net = ap.approximate(pd, ap.plan(alpha + 1, 1, eps))
        spec = bounds.size_generator(eps, alpha, 1, constants_mode="recorded")
        report = rn.validate(net, spec.to_class("generator", 1), input_box=(0.0, 1.0))
        for check in report.checks:
            if check.name != "output_bound":
                assert check.passed, check


def test_recorded_constants_cover_budgets():
    for (d, beta) in [(1, 1.0), (1, 2.0), (2, 1.0)]:
        c, cp = ap.recorded_constants(d, beta)
        mc, mcp = ap.measure_constants(d, beta, deltas=[0.25, 0.1])
        assert mc <= c and mcp <= cp


def test_construction_is_deterministic():
    pd = holder.synthesize(5, 1, 2.0, 0.3)
    p = ap.plan(2, 1, 0.1)
    a, b = ap.approximate(pd, p), ap.approximate(pd, p)
    assert rn.to_dict(a) == rn.to_dict(b)
