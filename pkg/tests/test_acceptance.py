"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the two GAN rate runs are
marked ``slow`` and take several minutes each.
"""

import time

import numpy as np
import pytest

from holdergan import bounds, holder
from holdergan import harness as hs
from holdergan import transport as tp

from fdcheck import fd_relative_errors, kink_distance, random_config


def verdict(capsys, k, ok, detail, elapsed=None, limit=None):
    within = limit is None or elapsed < limit
    timing = "" if elapsed is None else f" [{elapsed:.1f}s" + ("]" if limit is None else f", limit {limit:g}s]")
    with capsys.disabled():
        print(f"\n{'PASS' if ok and within else 'FAIL'} criterion {k}: {detail}{timing}")
    assert ok, detail
    assert within, f"runtime {elapsed:.1f}s over {limit}s"


def test_criterion_01_gradients(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, checked = 0.0, 0
    while checked < 100:
        net, x, up = random_config(rng)
        if kink_distance(net, x) < 1e-4:
            continue
        worst = max(worst, max(fd_relative_errors(net, x, up)))
        checked += 1
    verdict(capsys, 1, worst <= 1e-5, f"max relative FD error {worst:.2e} over 100 configs",
            time.perf_counter() - t0, 10)


def test_criterion_02_approximator(capsys):
    t0 = time.perf_counter()
    report = hs.run(hs.default_config("approx_scaling"))
    slopes = ", ".join(f"{k}={v:.3f}" for k, v in report.tables.items())
    verdict(capsys, 2, report.passed, f"sup error within delta; param slopes {slopes}",
            time.perf_counter() - t0, 120)


def test_criterion_03_transport(capsys):
    t0 = time.perf_counter()
    report = hs.run(hs.default_config("transport_check"))
    worst = ", ".join(f"{k}={v:.2e}" for k, v in report.tables["worst"].items())
    verdict(capsys, 3, report.passed, f"worst over 20 fixtures: {worst}", time.perf_counter() - t0, 120)


def test_criterion_04_poisson(capsys):
    t0 = time.perf_counter()
    one = tp.solve_poisson(holder.BaseDistribution(1), holder.single_mode(0.25), 256)
    err1 = np.max(np.abs(one.u + 0.25 * np.cos(np.pi * one.grid) / np.pi ** 2))
    mu2 = holder.HolderDensity(2, 2.0, 0.5, np.array([[1, 1]]), np.array([0.25]))
    two = tp.solve_poisson(holder.BaseDistribution(2), mu2, 128)
    X, Y = np.meshgrid(two.grid, two.grid, indexing="ij")
    err2 = np.max(np.abs(two.u + 0.25 * np.cos(np.pi * X) * np.cos(np.pi * Y) / (2 * np.pi ** 2)))
    verdict(capsys, 4, err1 <= 1e-5 and err2 <= 1e-4, f"node errors 1D {err1:.2e}, 2D {err2:.2e}",
            time.perf_counter() - t0, 60)


def test_criterion_05_covering(capsys):
    t0 = time.perf_counter()
    report = hs.run(hs.default_config("covering_oracle"))
    counts = {r[2]: r[3] for r in report.rows if r[0] == 0.05}
    verdict(capsys, 5, report.passed, f"bound dominates greedy covers; at delta 0.05 {counts}",
            time.perf_counter() - t0, 300)


def test_criterion_06_statistical_slope(capsys):
    t0 = time.perf_counter()
    report = hs.run(hs.default_config("stat_error"))
    slopes = {k: round(v["slope"], 4) for k, v in report.tables.items()}
    verdict(capsys, 6, report.passed, f"fitted slopes {slopes} vs -0.5 +- 0.07", time.perf_counter() - t0, 60)


def test_criterion_08_oracle_arithmetic(capsys):
    t0 = time.perf_counter()
    ok = bounds.oracle_budget(0, 0, 0, 0).total == 0.0
    base = bounds.oracle_budget(0.3, 0.1, 0.7, 0.2)
    ok &= base.total == pytest.approx(0.3 + 0.4 + 0.7 + 0.2, abs=1e-12)
    for lam in (0.5, 2.0, 10.0):
        scaled = bounds.oracle_budget(0.3 * lam, 0.1 * lam, 0.7 * lam, 0.2 * lam)
        ok &= scaled.total == pytest.approx(lam * base.total, rel=1e-12)
    pairs = [(b, d) for b in (1.0, 1.5, 2.0, 2.5, 3.0) for d in (1, 2, 3, 4)]
    worst = 0.0
    for beta, d in pairs:
        for n in (100, 1e4, 1e6):
            eps = bounds.balance_eps(n, beta, d)
            worst = max(worst, abs(eps / n ** (-beta / (2 * beta + d)) - 1),
                        abs(eps / (n ** -0.5 * eps ** (-d / (2 * beta))) - 1))
    ok &= worst <= 1e-12
    verdict(capsys, 8, ok, f"budget identities hold; balance fixed point rel error {worst:.1e} on {len(pairs)} pairs",
            time.perf_counter() - t0, 1)


@pytest.fixture(scope="module")
def population_rate():
    t0 = time.perf_counter()
    report = hs.run(hs.default_config("rate"))
    return report, time.perf_counter() - t0


def rate_detail(report):
    return (f"slope {report.slope:.4f} (CI {report.ci[0]:.3f}..{report.ci[1]:.3f}), "
            f"theory {report.exponent_theory:.4f}, verdicts {report.verdicts}")


@pytest.mark.slow
def test_criterion_07_rate(capsys, population_rate):
    report, elapsed = population_rate
    verdict(capsys, 7, report.passed, rate_detail(report), elapsed, 1800)


@pytest.mark.slow
def test_criterion_09_finite_m(capsys, population_rate):
    t0 = time.perf_counter()
    report = hs.run(hs.default_config("rate", latent="n^2"))
    elapsed = time.perf_counter() - t0
    gap = abs(report.slope - population_rate[0].slope)
    verdict(capsys, 9, report.passed and gap <= report.tolerance,
            f"{rate_detail(report)}; gap to population slope {gap:.4f}", elapsed, 1800)


def test_criterion_10_determinism(capsys, tmp_path):
    t0 = time.perf_counter()
    configs = {
        "stat_error": hs.default_config("stat_error", seeds=5),
        "covering_oracle": hs.default_config("covering_oracle"),
        "bounds": hs.default_config("bounds"),
        "rate": hs.default_config("rate", n_grid=[128, 256, 512], seeds=3, train={"epochs": 3}),
    }
    same = {}
    for name, cfg in configs.items():
        for rep in ("a", "b"):
            hs.emit_csv(hs.run(cfg), tmp_path / f"{name}_{rep}.csv")
        same[name] = (tmp_path / f"{name}_a.csv").read_bytes() == (tmp_path / f"{name}_b.csv").read_bytes()
    verdict(capsys, 10, all(same.values()), f"byte-identical reruns {same}", time.perf_counter() - t0)
