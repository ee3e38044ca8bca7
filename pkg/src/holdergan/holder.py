"""Synthetic Hölder densities on boxes and the uniform base distribution.

Densities are finite cosine series on ``[0, B]^d``

    p(x) = c0 + sum_k a_k prod_j cos(pi k_j x_j / B),      c0 = B^-d,

so every non-constant mode integrates to zero and ``c0`` alone normalises
the density.  Derivatives, the 1-D CDF and its antiderivative are all
closed-form, which gives exact sampling by inversion (conditional inversion
in 2-D).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DimensionError, DomainError, ParameterError

__all__ = [
    "HolderDensity",
    "BaseDistribution",
    "ExplicitDensity1D",
    "synthesize",
    "single_mode",
    "eval_density",
    "cdf_1d",
    "quantile_1d",
    "sample",
    "check_invariants",
    "holder_top_order",
    "save_fixture",
    "load_fixture",
    "density_to_dict",
    "density_from_dict",
]

_SUPPORT_TOL = 1e-12


def holder_top_order(alpha: float) -> int:
    """Largest integer strictly smaller than ``alpha``."""
    return int(math.ceil(alpha)) - 1


def _bisect(F: Callable, target: np.ndarray, lo: float, hi: float, tol: float = 1e-13) -> np.ndarray:
    """Vectorised bisection for nondecreasing ``F``: solves ``F(x) = target`` on ``[lo, hi]``."""
    target = np.asarray(target, dtype=float)
    a = np.full(target.shape, lo, dtype=float)
    b = np.full(target.shape, hi, dtype=float)
    for _ in range(int(math.ceil(math.log2((hi - lo) / tol)))):
        mid = 0.5 * (a + b)
        below = F(mid) < target
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


def _cos_deriv(theta: np.ndarray, order: int) -> np.ndarray:
    # d^n/dtheta^n cos(theta) = cos(theta + n pi / 2)
    r = order % 4
    if r == 0:
        return np.cos(theta)
    if r == 1:
        return -np.sin(theta)
    if r == 2:
        return -np.cos(theta)
    return np.sin(theta)


@dataclass(frozen=True)
class HolderDensity:
    """Cosine-series density in the Hölder class H^alpha, bounded below by tau."""

    d: int
    alpha: float
    tau: float
    modes: np.ndarray
    coeffs: np.ndarray
    B: float = 1.0
    normalizer: float = field(default=None)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ParameterError("only d in {1, 2} is supported")
        modes = np.asarray(self.modes, dtype=int).reshape(-1, self.d)
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if modes.shape[0] != coeffs.shape[0]:
            raise DimensionError("one coefficient per mode is required")
        if np.any(np.all(modes == 0, axis=1)):
            raise ParameterError("the constant mode is carried by the normalizer")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)
        if self.normalizer is None:
            object.__setattr__(self, "normalizer", float(self.B) ** -self.d)

    @property
    def support(self) -> tuple[float, float]:
        return 0.0, float(self.B)

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            return x.reshape(-1, 1)
        if x.shape[-1] != self.d:
            raise DimensionError(f"expected points of dimension {self.d}")
        return x.reshape(-1, self.d)

    def partial(self, x, nu=None) -> np.ndarray:
        """Mixed partial derivative of order ``nu`` (a length-d tuple) at ``x``."""
        x = np.asarray(x, dtype=float)
        pts = self._points(x)
        nu = tuple([0] * self.d) if nu is None else tuple(np.atleast_1d(nu).astype(int))
        freq = np.pi * self.modes / self.B  # (K, d)
        terms = np.ones((pts.shape[0], len(self.coeffs)))
        for j in range(self.d):
            theta = pts[:, j:j + 1] * freq[None, :, j]
            terms *= _cos_deriv(theta, nu[j]) * freq[None, :, j] ** nu[j]
        out = terms @ self.coeffs
        if sum(nu) == 0:
            out = out + self.normalizer
        shape = x.shape if self.d == 1 else x.shape[:-1]
        return out.reshape(shape)

    def pdf(self, x) -> np.ndarray:
        return self.partial(x)

    def _require_1d(self):
        if self.d != 1:
            raise DimensionError("this operation needs a one-dimensional density")

    def cdf(self, x) -> np.ndarray:
        self._require_1d()
        x = np.asarray(x, dtype=float)
        k = self.modes[:, 0]
        scale = self.B / (np.pi * k)
        s = np.sin(np.multiply.outer(x, np.pi * k / self.B)) @ (self.coeffs * scale)
        return self.normalizer * x + s

    def cdf_integral(self, x) -> np.ndarray:
        """Antiderivative ``G(x) = int_0^x F(t) dt`` of the CDF."""
        self._require_1d()
        x = np.asarray(x, dtype=float)
        k = self.modes[:, 0]
        scale = (self.B / (np.pi * k)) ** 2
        c = (1.0 - np.cos(np.multiply.outer(x, np.pi * k / self.B))) @ (self.coeffs * scale)
        return 0.5 * self.normalizer * x ** 2 + c

    def quantile(self, u) -> np.ndarray:
        self._require_1d()
        u = np.asarray(u, dtype=float)
        x = _bisect(self.cdf, u, 0.0, float(self.B))
        return np.where(u <= 0.0, 0.0, np.where(u >= 1.0, float(self.B), x))

    def marginal_1d(self) -> "HolderDensity":
        """Marginal density of the first coordinate of a 2-D density."""
        if self.d != 2:
            raise DimensionError("marginal_1d needs a 2-D density")
        keep = self.modes[:, 1] == 0
        return HolderDensity(1, self.alpha, self.tau, self.modes[keep, :1],
                             self.coeffs[keep] * self.B, self.B, self.normalizer * self.B)

    def sample(self, n: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        u = rng.random((n, self.d))
        if self.d == 1:
            return self.quantile(u[:, 0]).reshape(n, 1)
        return self._conditional_inverse(u)

    def _conditional_inverse(self, u: np.ndarray) -> np.ndarray:
        """Map uniform pairs to the 2-D density: marginal inversion then conditional inversion."""
        x1 = self.marginal_1d().quantile(u[:, 0])
        k1, k2 = self.modes[:, 0], self.modes[:, 1]
        c1 = np.cos(np.multiply.outer(x1, np.pi * k1 / self.B)) * self.coeffs  # (n, K)
        p1 = self.normalizer * self.B + c1[:, k2 == 0].sum(axis=1) * self.B
        safe_k2 = np.where(k2 == 0, 1, k2)

        def cond_cdf(x2):
            s = np.where(k2 == 0, x2[:, None],
                         np.sin(np.multiply.outer(x2, np.pi * safe_k2 / self.B)) * self.B / (np.pi * safe_k2))
            return (self.normalizer * x2 + (c1 * s).sum(axis=1)) / p1

        x2 = _bisect(cond_cdf, u[:, 1], 0.0, float(self.B))
        return np.column_stack([x1, x2])


@dataclass(frozen=True)
class BaseDistribution:
    """Uniform distribution on the unit box, the easy-to-sample source."""

    d: int = 1
    kind: str = "uniform"
    B: float = 1.0

    def __post_init__(self):
        if self.kind != "uniform":
            raise ParameterError("only the uniform base distribution is implemented")

    @property
    def support(self) -> tuple[float, float]:
        return 0.0, 1.0

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape if self.d == 1 else x.shape[:-1])

    def partial(self, x, nu=None):
        if nu is None or sum(np.atleast_1d(nu)) == 0:
            return self.pdf(x)
        return np.zeros_like(self.pdf(x))

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def cdf_integral(self, x):
        return 0.5 * np.asarray(x, dtype=float) ** 2

    def quantile(self, u):
        return np.clip(np.asarray(u, dtype=float), 0.0, 1.0)

    def sample(self, n: int, seed) -> np.ndarray:
        return np.random.default_rng(seed).random((n, self.d))


class ExplicitDensity1D:
    """A 1-D density on ``[0, B]`` given by callables (test fixtures such as ``0.5 + x``).

    ``cdf_integral`` and the derivative fall back to quadrature and central
    differences when not supplied.
    """

    d = 1

    def __init__(self, pdf, cdf, dpdf=None, cdf_integral=None, B: float = 1.0, tau: float | None = None):
        self._pdf, self._cdf, self._dpdf, self._cdf_int = pdf, cdf, dpdf, cdf_integral
        self.B = float(B)
        grid = np.linspace(0.0, self.B, 2049)
        self.tau = float(np.min(pdf(grid))) if tau is None else tau

    @property
    def support(self):
        return 0.0, self.B

    def pdf(self, x):
        return np.asarray(self._pdf(np.asarray(x, dtype=float)), dtype=float)

    def partial(self, x, nu=None):
        order = 0 if nu is None else int(np.sum(nu))
        if order == 0:
            return self.pdf(x)
        if order == 1 and self._dpdf is not None:
            return np.asarray(self._dpdf(np.asarray(x, dtype=float)), dtype=float)
        h = 1e-4
        x = np.asarray(x, dtype=float)
        return sum((-1) ** j * math.comb(order, j) * self.pdf(x + (order / 2 - j) * h)
                   for j in range(order + 1)) / h ** order

    def cdf(self, x):
        return np.asarray(self._cdf(np.asarray(x, dtype=float)), dtype=float)

    def cdf_integral(self, x):
        if self._cdf_int is not None:
            return np.asarray(self._cdf_int(np.asarray(x, dtype=float)), dtype=float)
        x = np.asarray(x, dtype=float)
        flat = [integrate.quad(lambda t: float(self.cdf(t)), 0.0, v, epsabs=1e-13)[0] for v in x.reshape(-1)]
        return np.asarray(flat).reshape(x.shape)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        x = _bisect(self.cdf, u, 0.0, self.B)
        return np.where(u <= 0.0, 0.0, np.where(u >= 1.0, self.B, x))

    def sample(self, n: int, seed) -> np.ndarray:
        u = np.random.default_rng(seed).random(n)
        return self.quantile(u).reshape(n, 1)


def _smoothness_sums(modes: np.ndarray, coeffs: np.ndarray, alpha: float, B: float) -> dict:
    """Coefficient-sum bounds on the lower bound gap, derivative sup-norms and the top Hölder seminorm."""
    a = np.abs(coeffs)
    kinf = np.pi * np.max(np.abs(modes), axis=1) / B
    k2 = np.pi * np.linalg.norm(modes, axis=1) / B
    top = holder_top_order(alpha)
    gamma = alpha - top
    sums = {"amplitude": float(a.sum())}
    for s in range(1, top + 1):
        sums[f"deriv_{s}"] = float(np.sum(a * kinf ** s))
    sums["holder_top"] = float(np.sum(a * kinf ** top * 2.0 ** (1.0 - gamma) * k2 ** gamma))
    return sums


def synthesize(seed, d: int, alpha: float, tau: float, k_max: int = 8, B: float = 1.0) -> HolderDensity:
    """Draw a random cosine-series density satisfying the Hölder-class assumptions.

    Coefficients are Gaussian with polynomial decay in the frequency, then
    rescaled by the worst of the constraint ratios: ``p >= tau`` (via
    ``c0 - sum|a_k| >= tau``), derivative sup-norms at most 1 below the top
    order, and top-order Hölder seminorm at most 1.  ``k_max = 0`` gives the
    uniform density.
    """
    if d not in (1, 2):
        raise ParameterError("d must be 1 or 2")
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    c0 = float(B) ** -d
    if not 0 < tau < c0:
        raise ParameterError(f"tau must lie in (0, {c0}) for a density on [0, {B}]^{d}")
    rng = np.random.default_rng(seed)
    modes = np.array([k for k in itertools.product(range(k_max + 1), repeat=d) if any(k)], dtype=int)
    if modes.size == 0:
        return HolderDensity(d, alpha, tau, np.zeros((0, d), int), np.zeros(0), B)
    decay = (1.0 + np.linalg.norm(modes, axis=1)) ** -(alpha + 1.0)
    coeffs = rng.normal(size=len(modes)) * decay
    sums = _smoothness_sums(modes, coeffs, alpha, B)
    limits = {name: 1.0 for name in sums}
    limits["amplitude"] = c0 - tau
    ratio = min(limits[name] / value for name, value in sums.items() if value > 0)
    scale = min(1.0, ratio) * (1.0 - 1e-9)
    return HolderDensity(d, alpha, tau, modes, coeffs * scale, B)


def single_mode(a: float, k: int = 1, alpha: float = 1.0, tau: float | None = None) -> HolderDensity:
    """``p(x) = 1 + a cos(pi k x)`` on [0, 1]."""
    tau = 1.0 - abs(a) if tau is None else tau
    return HolderDensity(1, alpha, tau, np.array([[k]]), np.array([a]))


def _check_support(pd, x):
    lo, hi = pd.support
    x = np.asarray(x, dtype=float)
    if np.any(x < lo - _SUPPORT_TOL) or np.any(x > hi + _SUPPORT_TOL):
        raise DomainError(f"points outside the support [{lo}, {hi}]^{pd.d}")


def eval_density(pd, x):
    _check_support(pd, x)
    return pd.pdf(x)


def cdf_1d(pd, x):
    if pd.d != 1:
        raise DimensionError("cdf_1d needs d = 1")
    return pd.cdf(np.clip(np.asarray(x, dtype=float), *pd.support))


def quantile_1d(pd, u):
    if pd.d != 1:
        raise DimensionError("quantile_1d needs d = 1")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise ParameterError("quantile levels must lie in [0, 1]")
    return pd.quantile(u)


def sample(pd, n: int, seed) -> np.ndarray:
    """``n`` exact draws of shape ``(n, d)``; deterministic in ``seed``."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    return pd.sample(n, seed)


def _holder_quotient(D: np.ndarray, h: float, gamma: float, offsets) -> float:
    best = 0.0
    for off in offsets:
        dist = h * math.sqrt(sum(o * o for o in off))
        sl_a = tuple(slice(max(0, -o), D.shape[i] - max(0, o)) for i, o in enumerate(off))
        sl_b = tuple(slice(max(0, o), D.shape[i] - max(0, -o)) for i, o in enumerate(off))
        diff = np.abs(D[sl_a] - D[sl_b])
        if diff.size:
            best = max(best, float(diff.max()) / dist ** gamma)
    return best


def check_invariants(pd: HolderDensity, grid: int = 512) -> dict:
    """Numerical check of the three density invariants on a ``grid^d`` lattice.

    Returns the measured minimum, trapezoid integral, Hölder-seminorm estimate
    of the top-order derivatives (difference quotients over lattice offsets),
    the largest lower-order derivative, and an overall ``passed`` flag.
    """
    x = np.linspace(0.0, pd.B, grid)
    h = x[1] - x[0]
    if pd.d == 1:
        pts = x
        offsets = [(o,) for o in range(1, grid)]
    else:
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X1, X2], axis=-1)
        steps = sorted({0, 1, 2, 3} | {2 ** k for k in range(int(math.log2(grid)))})
        offsets = [(i, j) for i in steps for j in steps if i or j] + [(i, -j) for i in steps for j in steps if i and j]
    p = pd.pdf(pts)
    integral = integrate.trapezoid(p, x, axis=0)
    if pd.d == 2:
        integral = integrate.trapezoid(integral, x)
    top = holder_top_order(pd.alpha)
    gamma = pd.alpha - top
    seminorm = 0.0
    lower = 0.0
    for order in range(0, top + 1):
        for nu in itertools.product(range(order + 1), repeat=pd.d):
            if sum(nu) != order:
                continue
            D = pd.partial(pts, nu)
            if order == top:
                seminorm = max(seminorm, float(_holder_quotient(D, h, gamma, offsets)))
            elif order >= 1:
                lower = max(lower, float(np.max(np.abs(D))))
    out = {
        "min_density": float(np.min(p)),
        "integral": float(integral),
        "holder_seminorm": seminorm,
        "lower_derivative_max": lower,
    }
    out["passed"] = (
        out["min_density"] >= pd.tau
        and abs(out["integral"] - 1.0) <= 1e-6
        and seminorm <= 1.0 + 1e-3
        and lower <= 1.0 + 1e-3
    )
    return out


def density_to_dict(pd) -> dict:
    if isinstance(pd, BaseDistribution):
        return {"kind": "uniform", "d": pd.d}
    if not isinstance(pd, HolderDensity):
        raise ParameterError(f"cannot serialise {type(pd).__name__}")
    return {
        "d": pd.d,
        "alpha": pd.alpha,
        "tau": pd.tau,
        "B": pd.B,
        "coeffs": [{"k": [int(v) for v in k], "a": float(a)} for k, a in zip(pd.modes, pd.coeffs)],
        "normalizer": pd.normalizer,
    }


def density_from_dict(doc: dict):
    if doc.get("kind") == "uniform":
        return BaseDistribution(int(doc["d"]))
    modes = np.array([c["k"] for c in doc["coeffs"]], dtype=int).reshape(-1, doc["d"])
    coeffs = np.array([c["a"] for c in doc["coeffs"]], dtype=float)
    return HolderDensity(doc["d"], doc["alpha"], doc["tau"], modes, coeffs, doc["B"], doc["normalizer"])


def save_fixture(pd: HolderDensity, path) -> None:
    Path(path).write_text(json.dumps(density_to_dict(pd), indent=1))


def load_fixture(path) -> HolderDensity:
    return density_from_dict(json.loads(Path(path).read_text()))
