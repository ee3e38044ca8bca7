import math

import numpy as np
import pytest

from holdergan import bounds
from holdergan.errors import NumericalError, ParameterError
from holdergan.harness import fit_loglog_slope


def test_generator_sizing_example():
    spec = bounds.size_generator(1 / math.e, 1, 1)
    assert (spec.R, spec.kappa, spec.L, spec.p, spec.K) == (1.0, 1.0, 1, 2, 2)
    assert spec.constants_mode == "unit"
    assert bounds.size_generator(0.99, 1, 1).L == 1


def test_generator_sizing_domain():
    for eps in (0.0, 1.0, 2.0):
        with pytest.raises(ParameterError):
            bounds.size_generator(eps, 1, 1)


def test_generator_kappa_follows_B():
    spec = bounds.size_generator(0.1, 1, 1, B=3.0)
    assert spec.R == 3.0 and spec.kappa == 3.0


def test_generator_width_to_size_ratio_tracks_log():
    eps = np.array([2.0 ** -k for k in range(2, 11)])
    ratio = np.array([bounds.size_generator(e, 1, 1).K / bounds.size_generator(e, 1, 1).p for e in eps])
    log = np.log(1 / eps)
    c = np.sum(ratio * log) / np.sum(log * log)
    assert np.all(np.abs(ratio / (c * log) - 1) <= 0.1)


def test_discriminator_sizing_example():
    spec = bounds.size_discriminator(1000, 1, 1)
    # (1/3) ln 1000 = 2.3026, so L = 3 and K = ceil(2.3026 * 10) = 24
    assert (spec.L, spec.p, spec.K) == (3, 10, 24)
    assert bounds.size_discriminator(math.exp(3), 1, 1).L == 1
    ps = [bounds.size_discriminator(n, 1.5, 2).p for n in range(2, 5000, 37)]
    assert all(a <= b for a, b in zip(ps, ps[1:]))


def test_discriminator_requires_beta_at_least_one():
    with pytest.raises(ParameterError):
        bounds.size_discriminator(100, 0.5, 1)


def test_discriminator_radius_scales_with_dimension():
    spec = bounds.size_discriminator(100, 1, 2, B=1.5)
    assert spec.R == 3.0 and spec.kappa == 3.0


def test_finite_m_sizing():
    assert bounds.size_generator_finite_m(math.exp(5), 1, 1).L == 2
    assert bounds.finite_m_exponent(1, 1) == pytest.approx(2 / 5)
    for d in (1, 2):
        assert bounds.size_generator_finite_m(10 ** 6, 1e12, d).p == d


def test_specs_are_valid():
    for spec in (bounds.size_generator(0.05, 2, 1, constants_mode="recorded"),
                 bounds.size_discriminator(4096, 2, 2), bounds.size_generator_finite_m(1e4, 1, 2)):
        assert min(spec.L, spec.p, spec.K) >= 1
        assert spec.to_class().K == spec.K
    with pytest.raises(ParameterError):
        bounds.ArchitectureSpec(1, 1, 0, 1, 1, "generator")


def test_net_covering_bound():
    unit = bounds.ArchitectureSpec(1, 1, 1, 1, 1, "discriminator")
    assert bounds.net_covering_bound(unit, 3.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    spec = bounds.size_discriminator(500, 1, 1)
    diff = bounds.net_covering_bound(spec, 0.05) - bounds.net_covering_bound(spec, 0.1)
    assert diff == pytest.approx(spec.K * math.log(2), rel=1e-12)
    assert bounds.net_covering_bound(unit, 1e6) == 0.0


def test_holder_covering_bound():
    assert bounds.holder_covering_bound(0.5, 1, 1) == pytest.approx(4.0)
    assert bounds.holder_covering_bound(0.5, 2, 4) == pytest.approx(4.0)
    assert bounds.holder_covering_bound(0.5, 1, 3) == pytest.approx(8.0)
    vals = [bounds.holder_covering_bound(d, 1, 1) for d in (0.9, 0.5, 0.1, 0.01)]
    assert vals == sorted(vals)


def test_dudley_zero_entropy():
    grid = [0.01, 0.1, 0.5]
    assert bounds.dudley_bound(lambda e: 0.0 * e, 1.0, 100, grid) == pytest.approx(4 * 0.01)


def test_dudley_constant_entropy_closed_form():
    c, L, n = 2.0, 1.5, 400
    grid = np.linspace(0.01, 1.4, 30)
    expected = min(4 * d + 24 / math.sqrt(n) * (L - d) * math.sqrt(c) for d in grid)
    assert bounds.dudley_bound(lambda e: np.full_like(e, c), L, n, grid) == pytest.approx(expected, abs=1e-9)


def test_dudley_monotone_in_n():
    grid = np.geomspace(1e-3, 0.5, 20)
    f = lambda e: np.log(1 / e)
    vals = [bounds.dudley_bound(f, 1.0, n, grid) for n in (10, 100, 1000, 10_000)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_dudley_rejects_divergent_integrand():
    with pytest.raises(NumericalError):
        bounds.dudley_bound(lambda e: np.where(e < 0.3, np.inf, 1.0), 1.0, 100, [0.25])


def test_oracle_budget():
    assert bounds.oracle_budget(0, 0, 0, 0).total == 0.0
    assert bounds.oracle_budget(0.1, 0.05, 0.02, 0.03).total == pytest.approx(0.35, abs=1e-15)
    base = bounds.oracle_budget(0.3, 0.1, 0.7, 0.2)
    for lam in (0.5, 2.0, 10.0):
        assert bounds.oracle_budget(0.3 * lam, 0.1 * lam, 0.7 * lam, 0.2 * lam).total == pytest.approx(lam * base.total)
    with pytest.raises(ParameterError):
        bounds.oracle_budget(-1, 0, 0, 0)


def test_rate_curve_exponents():
    assert bounds.rate_exponent(1, 1) == pytest.approx(1 / 3)
    assert bounds.rate_exponent(1, 2) == pytest.approx(1 / 4)
    n = np.array([1e3, 1e4])
    vals = bounds.rate_curve(n, 1, 1)
    np.testing.assert_allclose(vals, n ** (-1 / 3) * np.log(n) ** 2)
    assert bounds.rate_curve(1e3, 1, 1, m=1e4, alpha=1) == pytest.approx(vals[0] + 1e4 ** -0.4)
    with pytest.raises(ParameterError):
        bounds.rate_curve(1, 1, 1)


PAIRS = [(b, d) for b in (1.0, 1.5, 2.0, 2.5, 3.0) for d in (1, 2, 3, 4)]


@pytest.mark.parametrize("beta,d", PAIRS)
def test_balance_fixed_point(beta, d):
    for n in (100, 1e4, 1e6):
        eps = bounds.balance_eps(n, beta, d)
        assert eps == pytest.approx(n ** (-beta / (2 * beta + d)), rel=1e-12)
        assert eps == pytest.approx(n ** -0.5 * eps ** (-d / (2 * beta)), rel=1e-12)


@pytest.mark.parametrize("beta,d", [(1, 1), (2, 1), (1, 2), (2, 3)])
def test_statistical_term_slope(beta, d):
    ns = [2 ** k for k in range(10, 21, 2)]
    pts = [(n, bounds.statistical_term(n, beta, d) / math.log(n) ** 2) for n in ns]
    slope, _, _ = fit_loglog_slope(pts)
    assert abs(slope + beta / (2 * beta + d)) <= 0.05


def test_error_budget_invariant():
    b = bounds.error_budget(4096, 1, 1)
    assert b.total == pytest.approx(b.eps1 + 4 * b.eps2 + b.stat_h + b.stat_f)
    assert min(b.eps1, b.eps2, b.stat_h, b.stat_f) >= 0


def test_recorded_generator_constants_are_tight_enough():
    measured = bounds.measure_generator_constants(1.0, 1)
    assert measured == bounds.generator_constants(1.0, 1, "recorded")
    with pytest.raises(ParameterError):
        bounds.generator_constants(7.0, 3, "recorded")
