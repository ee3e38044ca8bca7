import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from holdergan import holder, ipm
from holdergan.errors import DimensionError, DomainError, ParameterError
from holdergan.gan_train import TrainConfig
from holdergan.relu_net import ArchitectureClass


def test_w1_examples():
    assert ipm.w1_exact_1d([0.3, 0.1], [0.1, 0.3]).value == 0.0
    assert ipm.w1_exact_1d([0.0], [1.0]).value == 1.0
    assert ipm.w1_exact_1d([0.0, 0.5], [0.25, 1.0]).value == pytest.approx(0.375, abs=1e-15)


def test_w1_matches_scipy_for_general_weights():
    rng = np.random.default_rng(0)
    a, b = rng.random(37), rng.random(11)
    wa = rng.random(37)
    wa /= wa.sum()
    got = ipm.w1_exact_1d(ipm.PointCloud(a, wa), b).value
    assert got == pytest.approx(wasserstein_distance(a, b, wa, None), rel=1e-12)


def test_w1_triangle_and_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a, b, c = (rng.normal(size=rng.integers(1, 30)) for _ in range(3))
        ab, bc, ac = (ipm.w1_exact_1d(*p).value for p in ((a, b), (b, c), (a, c)))
        assert ac <= ab + bc + 1e-10
        assert ab == pytest.approx(ipm.w1_exact_1d(b, a).value, abs=1e-15)
        assert ab >= 0


def test_w1_dimension_error():
    with pytest.raises(DimensionError):
        ipm.w1_exact_1d(np.zeros((3, 2)), np.zeros((3, 2)))


def test_cloud_weights_must_be_simplex():
    with pytest.raises(ParameterError):
        ipm.PointCloud([0.0, 1.0], [0.7, 0.7])


def test_w1_vs_density_examples():
    u = holder.synthesize(0, 1, 2.0, 0.5, k_max=0)
    assert ipm.w1_vs_density_1d([0.5], u).value == pytest.approx(0.25, abs=1e-14)
    n = 100
    q = (np.arange(n) + 0.5) / n
    assert ipm.w1_vs_density_1d(q, u).value <= 1 / (2 * n)


def test_w1_vs_density_matches_quadrature():
    pd = holder.synthesize(2, 1, 2.0, 0.3)
    x = holder.sample(pd, 300, 4)[:, 0]
    t = np.linspace(0, 1, 400_001)
    Fn = np.searchsorted(np.sort(x), t, side="right") / x.size
    brute = np.trapezoid(np.abs(Fn - pd.cdf(t)), t)
    assert ipm.w1_vs_density_1d(x, pd).value == pytest.approx(brute, abs=1e-5)


def test_w1_vs_density_reflection():
    pd = holder.HolderDensity(1, 2.0, 0.5, np.array([[2]]), np.array([0.3]))
    x = holder.sample(pd, 200, 1)[:, 0]
    assert ipm.w1_vs_density_1d(x, pd).value == pytest.approx(ipm.w1_vs_density_1d(1 - x, pd).value, abs=1e-12)


def test_w1_vs_density_support():
    with pytest.raises(DomainError):
        ipm.w1_vs_density_1d([1.5], holder.synthesize(0, 1, 2.0, 0.3))


def test_sinkhorn_identical_clouds():
    x = np.random.default_rng(2).random((200, 2))
    assert ipm.sinkhorn_w1(x, x).value <= 1e-6


def test_sinkhorn_translation():
    rng = np.random.default_rng(3)
    x = rng.random((300, 2))
    v = np.array([0.3, -0.4])
    assert ipm.sinkhorn_w1(x, x + v).value == pytest.approx(0.5, rel=0.02)


def test_sinkhorn_symmetric_and_deterministic():
    rng = np.random.default_rng(4)
    a, b = rng.random((150, 2)), rng.random((120, 2))
    v1 = ipm.sinkhorn_w1(a, b).value
    assert v1 == ipm.sinkhorn_w1(a, b).value
    assert v1 == pytest.approx(ipm.sinkhorn_w1(b, a).value, rel=1e-3)


def test_sinkhorn_approaches_assignment():
    rng = np.random.default_rng(5)
    a, b = rng.random((64, 2)), rng.random((64, 2)) + 0.2
    C = cdist(a, b)
    r, c = linear_sum_assignment(C)
    exact = C[r, c].mean()
    default = ipm.sinkhorn_w1(a, b)
    coarse = default.meta["primal_cost"]
    fine = ipm.sinkhorn_w1(a, b, eps_reg=default.meta["eps_reg"] / 2).meta["primal_cost"]
    assert abs(fine - exact) <= abs(coarse - exact) + 1e-12
    assert fine == pytest.approx(exact, rel=0.01)


def test_sinkhorn_size_limit():
    with pytest.raises(ParameterError):
        ipm.sinkhorn_w1(np.zeros((5000, 1)), np.zeros((3, 1)))


DISC = ArchitectureClass(1.0, 1.0, 2, 4, 20, role="discriminator")


def test_neural_identical_clouds_zero():
    x = np.random.default_rng(6).random(64)
    est = ipm.neural_net_distance(x, x, DISC, TrainConfig(epochs=5))
    assert est.value == 0.0


def test_neural_below_lipschitz_w1_bound():
    rng = np.random.default_rng(7)
    a, b = rng.random(200), rng.random(200) * 0.5
    est = ipm.neural_net_distance(a, b, DISC, TrainConfig(epochs=40, disc_lr=1e-2))
    assert 0 < est.value <= est.meta["lipschitz_bound"] * ipm.w1_exact_1d(a, b).value


def test_neural_more_budget_does_not_hurt():
    rng = np.random.default_rng(8)
    a, b = rng.random(100), rng.random(100) ** 2
    short = ipm.neural_net_distance(a, b, DISC, TrainConfig(epochs=20, disc_lr=1e-2)).value
    long = ipm.neural_net_distance(a, b, DISC, TrainConfig(epochs=40, disc_lr=1e-2)).value
    assert long >= short - 1e-3
