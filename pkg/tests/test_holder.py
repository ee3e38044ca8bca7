import numpy as np
import pytest
from scipy import stats

from holdergan import holder, ipm
from holdergan.errors import DomainError, ParameterError


def test_empty_series_is_uniform():
    pd = holder.synthesize(0, 1, 2.0, 0.5, k_max=0)
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(holder.eval_density(pd, x), 1.0)


def test_single_mode_closed_forms():
    pd = holder.single_mode(0.25)
    assert holder.eval_density(pd, 1.0) == pytest.approx(0.75)
    assert holder.eval_density(pd, 0.0) == pytest.approx(1.25)
    assert holder.cdf_1d(pd, 1.0) == pytest.approx(1.0, abs=1e-15)
    x = np.linspace(0, 1, 20001)
    assert np.trapezoid(pd.pdf(x), x) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("seed,alpha", [(0, 1.0), (1, 2.0), (2, 2.5), (3, 3.0), (4, 0.5)])
def test_synthesized_1d_invariants(seed, alpha):
    pd = holder.synthesize(seed, 1, alpha, 0.3)
    report = holder.check_invariants(pd)
    assert report["passed"], report


def test_synthesized_2d_invariants():
    pd = holder.synthesize(7, 2, 1.5, 0.3, k_max=4)
    report = holder.check_invariants(pd, grid=256)
    assert report["passed"], report


def test_synthesize_is_deterministic():
    a = holder.synthesize(11, 1, 2.0, 0.2)
    b = holder.synthesize(11, 1, 2.0, 0.2)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)


def test_infeasible_tau():
    with pytest.raises(ParameterError):
        holder.synthesize(0, 1, 1.0, 1.0)


def test_out_of_support_evaluation():
    pd = holder.synthesize(0, 1, 1.0, 0.3)
    with pytest.raises(DomainError):
        holder.eval_density(pd, 1.5)


def test_even_modes_are_reflection_symmetric():
    pd = holder.HolderDensity(1, 2.0, 0.5, np.array([[2], [4]]), np.array([0.2, -0.1]))
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(pd.pdf(x), pd.pdf(1 - x), atol=1e-14)


def test_cdf_and_quantile():
    pd = holder.synthesize(3, 1, 2.0, 0.3)
    assert holder.cdf_1d(pd, 0.0) == 0.0
    assert holder.cdf_1d(pd, 1.0) == pytest.approx(1.0, abs=1e-14)
    x = np.random.default_rng(0).random(1000)
    np.testing.assert_allclose(holder.quantile_1d(pd, holder.cdf_1d(pd, x)), x, atol=1e-10)
    u = holder.BaseDistribution(1)
    np.testing.assert_allclose(u.cdf(x), x)
    with pytest.raises(ParameterError):
        holder.quantile_1d(pd, 1.2)


def test_cdf_integral_is_antiderivative():
    pd = holder.synthesize(5, 1, 2.0, 0.3)
    x = np.linspace(0, 1, 4001)
    G = pd.cdf_integral(x)
    np.testing.assert_allclose(np.gradient(G, x)[1:-1], pd.cdf(x)[1:-1], atol=1e-6)


def test_sampling():
    u = holder.BaseDistribution(1)
    x = holder.sample(u, 20_000, 1)[:, 0]
    ks = stats.kstest(x, "uniform")
    assert ks.statistic < 1.63 / np.sqrt(x.size)
    pd = holder.synthesize(0, 1, 2.0, 0.3)
    one = holder.sample(pd, 1, 3)
    assert one.shape == (1, 1) and 0 <= one[0, 0] <= 1
    np.testing.assert_array_equal(holder.sample(pd, 100, 9), holder.sample(pd, 100, 9))


def test_two_dimensional_sampling_matches_marginals():
    pd = holder.synthesize(2, 2, 2.0, 0.3, k_max=3)
    x = holder.sample(pd, 20_000, 0)
    assert x.shape == (20_000, 2)
    m1 = pd.marginal_1d()
    ks = stats.kstest(x[:, 0], lambda t: m1.cdf(np.asarray(t)))
    assert ks.statistic < 1.63 / np.sqrt(x.shape[0])


@pytest.mark.parametrize("seed", range(4))
def test_sampling_consistency_in_w1(seed):
    pd = holder.synthesize(seed, 1, 2.0, 0.3)
    x = holder.sample(pd, 100_000, seed)
    assert ipm.w1_vs_density_1d(x, pd).value <= 0.01


def test_fixture_round_trip(tmp_path):
    pd = holder.synthesize(4, 2, 1.0, 0.3, k_max=3)
    path = tmp_path / "fixture.json"
    holder.save_fixture(pd, path)
    back = holder.load_fixture(path)
    pts = np.random.default_rng(0).random((100, 2))
    np.testing.assert_array_equal(back.pdf(pts), pd.pdf(pts))
