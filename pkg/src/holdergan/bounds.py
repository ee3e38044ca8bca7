"""Closed-form prescriptions: architecture sizes, covering numbers, entropy
integrals, the oracle-inequality budget and the convergence-rate curve.

Every ``O(.)`` constant defaults to 1 ("unit" mode).  The "recorded" mode for
the generator uses constants measured on the networks that
``approximator.approximate`` actually emits, so that constructed generators
are members of the sized class.  Logarithms are natural; integer fields are
ceilings.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .errors import NumericalError, ParameterError
from .relu_net import ArchitectureClass, clip_layer_cost

__all__ = [
    "ArchitectureSpec",
    "ErrorBudget",
    "CONSTANTS_MODES",
    "size_generator",
    "size_discriminator",
    "size_generator_finite_m",
    "net_covering_bound",
    "holder_covering_bound",
    "dudley_bound",
    "oracle_budget",
    "rate_exponent",
    "finite_m_exponent",
    "rate_curve",
    "balance_eps",
    "statistical_term",
    "error_budget",
    "generator_constants",
    "measure_generator_constants",
]

CONSTANTS_MODES = ("unit", "recorded")

# (d, alpha) -> (C_L, C_p, C_K) such that warm-started generators built by
# approximator.approximate (one net per output coordinate, plus the clipping
# layer) fit inside size_generator(eps, ...) for eps in 2^-2 .. 2^-8 (2^-6 for
# d = 2, where the dense width guard of the approximator stops earlier).
# Produced by measure_generator_constants with a 25% margin.
_GEN_RECORDED = {
    (1, 1.0): (10.0, 24.0, 329.0),
    (1, 2.0): (14.0, 35.0, 865.0),
    (2, 1.0): (14.0, 69.0, 1513.0),
}


def _ceil(x: float) -> int:
    return max(1, int(math.ceil(x - 1e-9)))


@dataclass(frozen=True)
class ArchitectureSpec:
    """A sized ``(R, kappa, L, p, K)`` tuple with its provenance."""

    R: float
    kappa: float
    L: int
    p: int
    K: int
    sizing_rule: str
    inputs: dict = field(default_factory=dict)
    constants_mode: str = "unit"
    constants: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not (self.R > 0 and self.kappa > 0):
            raise ParameterError("R and kappa must be positive")
        for name in ("L", "p", "K"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ParameterError(f"{name} must be an integer >= 1, got {v}")
        if self.constants_mode not in CONSTANTS_MODES:
            raise ParameterError(f"constants_mode must be one of {CONSTANTS_MODES}")

    def to_class(self, role: str | None = None, input_dim: int | None = None) -> ArchitectureClass:
        if role is None:
            role = "discriminator" if self.sizing_rule == "discriminator" else "generator"
        d = int(self.inputs.get("d", 1)) if input_dim is None else input_dim
        return ArchitectureClass(self.R, self.kappa, self.L, self.p, max(self.K, d), role, d)

    def as_row(self) -> dict:
        row = asdict(self)
        row["inputs"] = ";".join(f"{k}={v}" for k, v in self.inputs.items())
        row["constants"] = ";".join(f"{c:g}" for c in self.constants)
        return row


@dataclass(frozen=True)
class ErrorBudget:
    eps1: float
    eps2: float
    stat_h: float
    stat_f: float
    total: float


def _check_mode(mode: str):
    if mode not in CONSTANTS_MODES:
        raise ParameterError(f"constants_mode must be one of {CONSTANTS_MODES}")


def generator_constants(alpha: float, d: int, constants_mode: str = "unit") -> tuple:
    _check_mode(constants_mode)
    if constants_mode == "unit":
        return (1.0, 1.0, 1.0)
    key = (d, float(alpha))
    if key not in _GEN_RECORDED:
        raise ParameterError(f"no recorded generator constants for d={d}, alpha={alpha}")
    return _GEN_RECORDED[key]


def size_generator(eps: float, alpha: float, d: int, B: float = 1.0,
                   constants_mode: str = "unit", constants: tuple | None = None) -> ArchitectureSpec:
    """Generator class accurate to ``eps`` for a transport map in H^(alpha+1)."""
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    C = constants or generator_constants(alpha, d, constants_mode)
    log = math.log(1.0 / eps)
    core = d * eps ** (-d / (alpha + 1.0))
    return ArchitectureSpec(
        R=float(B), kappa=max(1.0, float(B)),
        L=_ceil(C[0] * log), p=_ceil(C[1] * core), K=_ceil(C[2] * core * log),
        sizing_rule="generator", inputs={"eps": eps, "alpha": alpha, "d": d, "B": B},
        constants_mode=constants_mode, constants=tuple(C),
    )


def size_discriminator(n: int, beta: float, d: int, B: float = 1.0,
                       constants: tuple = (1.0, 1.0, 1.0)) -> ArchitectureSpec:
    """Discriminator class for sample size ``n`` and IPM smoothness ``beta``."""
    if beta < 1:
        raise ParameterError("the discriminator sizing requires beta >= 1")
    if n < 2:
        raise ParameterError("n must be at least 2")
    r = beta / (2.0 * beta + d)
    log = math.log(n)
    width = n ** (d / (2.0 * beta + d))
    mode = "unit" if tuple(constants) == (1.0, 1.0, 1.0) else "recorded"
    return ArchitectureSpec(
        R=float(B * d), kappa=max(1.0, float(B * d)),
        L=_ceil(constants[0] * r * log), p=_ceil(constants[1] * width), K=_ceil(constants[2] * r * width * log),
        sizing_rule="discriminator", inputs={"n": n, "beta": beta, "d": d, "B": B},
        constants_mode=mode, constants=tuple(constants),
    )


def size_generator_finite_m(m: float, alpha: float, d: int, B: float = 1.0,
                            constants: tuple = (1.0, 1.0, 1.0)) -> ArchitectureSpec:
    """Generator class for the finite latent-sample problem with ``m`` draws."""
    if m < 2:
        raise ParameterError("m must be at least 2")
    a1 = alpha + 1.0
    r = a1 / (2.0 * a1 + d)
    log = math.log(m)
    width = m ** (d / (2.0 * a1 + d))
    mode = "unit" if tuple(constants) == (1.0, 1.0, 1.0) else "recorded"
    return ArchitectureSpec(
        R=float(B), kappa=max(1.0, float(B)),
        L=_ceil(constants[0] * r * log), p=_ceil(constants[1] * d * width),
        K=_ceil(constants[2] * d * r * width * log),
        sizing_rule="generator_finite_m", inputs={"m": m, "alpha": alpha, "d": d, "B": B},
        constants_mode=mode, constants=tuple(constants),
    )


def net_covering_bound(spec, delta: float, B: float = 1.0) -> float:
    """Log of ``(L (pB + 2) (kappa p)^L / delta)^K``, floored at 0."""
    if not delta > 0:
        raise ParameterError("delta must be positive")
    L, p, K, kappa = spec.L, spec.p, spec.K, spec.kappa
    log_arg = math.log(L) + math.log(p * B + 2) + L * math.log(kappa * p) - math.log(delta)
    return max(0.0, K * log_arg)


def holder_covering_bound(delta: float, beta: float, d: int, c: float = 1.0) -> float:
    """``c (1/delta)^(max(d/beta, 2))``."""
    if not 0 < delta <= 1:
        raise ParameterError("delta must lie in (0, 1]")
    return c * (1.0 / delta) ** max(d / beta, 2.0)


def _entropy_integral(log_cover: Callable, lo: float, hi: float, panels: int = 512) -> float:
    if hi <= lo:
        return 0.0
    eps = np.linspace(lo, hi, panels + 1)
    try:
        vals = np.asarray(log_cover(eps), dtype=float)
        if vals.shape != eps.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([float(log_cover(e)) for e in eps])
    vals = np.sqrt(np.maximum(vals, 0.0))
    if not np.all(np.isfinite(vals)):
        raise NumericalError("entropy integrand is not finite on the integration grid",
                             residual=float(np.nanmax(np.where(np.isfinite(vals), vals, np.nan), initial=0.0)))
    return float(simpson(vals, x=eps))


def dudley_bound(log_cover: Callable, L_sup: float, n: int, delta_grid: Sequence[float]) -> float:
    """``2 min_delta (2 delta + 12/sqrt(n) int_delta^L sqrt(log N(eps)) d eps)``.

    The integral is composite Simpson on 512 panels.
    """
    if not L_sup > 0:
        raise ParameterError("L_sup must be positive")
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ParameterError("delta_grid must hold positive values")
    best = math.inf
    for delta in grid:
        val = 2.0 * (2.0 * delta + 12.0 / math.sqrt(n) * _entropy_integral(log_cover, delta, L_sup))
        best = min(best, val)
    return best


def oracle_budget(eps1: float, eps2: float, stat_h: float, stat_f: float) -> ErrorBudget:
    parts = (eps1, eps2, stat_h, stat_f)
    if any(v < 0 for v in parts):
        raise ParameterError("budget terms must be nonnegative")
    return ErrorBudget(eps1, eps2, stat_h, stat_f, eps1 + 4.0 * eps2 + stat_h + stat_f)


def rate_exponent(beta: float, d: int) -> float:
    return beta / (2.0 * beta + d)


def finite_m_exponent(alpha: float, d: int) -> float:
    return (alpha + 1.0) / (2.0 * (alpha + 1.0) + d)


def rate_curve(n, beta: float, d: int, C: float = 1.0, m=None, alpha: float | None = None):
    """``C n^(-beta/(2beta+d)) (ln n)^2``, plus ``C m^(-(alpha+1)/(2(alpha+1)+d))`` when ``m`` is given."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 2):
        raise ParameterError("n must be at least 2")
    out = C * n ** (-rate_exponent(beta, d)) * np.log(n) ** 2
    if m is not None:
        if alpha is None:
            raise ParameterError("alpha is required with m")
        out = out + C * np.asarray(m, dtype=float) ** (-finite_m_exponent(alpha, d))
    return float(out) if out.ndim == 0 else out


def balance_eps(n: float, beta: float, d: int) -> float:
    """Solve ``eps = n^(-1/2) eps^(-d/(2 beta))`` for eps in (0, 1]."""
    if n < 2:
        raise ParameterError("n must be at least 2")
    s = d / (2.0 * beta)
    half_log_n = 0.5 * math.log(n)
    # in t = ln eps the equation is linear: t (1 + s) + ln(n)/2 = 0
    t = brentq(lambda t: t * (1.0 + s) + half_log_n, -half_log_n - 1.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return math.exp(t)


def statistical_term(n: int, beta: float, d: int, B: float = 1.0, delta_points: int = 64) -> float:
    """Dudley bound for the sized discriminator class at sample size ``n``."""
    spec = size_discriminator(n, beta, d, B)
    L_sup = 2.0 * spec.R
    grid = np.geomspace(L_sup / n, L_sup / 2, delta_points)
    return dudley_bound(lambda e: _vector_cover(spec, e, B), L_sup, n, grid)


def _vector_cover(spec, eps, B):
    eps = np.asarray(eps, dtype=float)
    base = math.log(spec.L) + math.log(spec.p * B + 2) + spec.L * math.log(spec.kappa * spec.p)
    return np.maximum(spec.K * (base - np.log(eps)), 0.0)


def error_budget(n: int, beta: float, d: int, B: float = 1.0, c_holder: float = 1.0) -> ErrorBudget:
    """Oracle-inequality budget at the balanced choice eps1 = eps2 = n^(-beta/(2beta+d))."""
    eps = n ** (-rate_exponent(beta, d))
    L_sup = 2.0 * B * d
    grid = np.geomspace(L_sup / n, L_sup / 2, 64)
    stat_h = dudley_bound(lambda e: c_holder * np.asarray(e, float) ** (-max(d / beta, 2.0)), L_sup, n, grid)
    stat_f = statistical_term(n, beta, d, B)
    return oracle_budget(eps, eps, stat_h, stat_f)


def measure_generator_constants(alpha: float, d: int, eps_values=None, margin: float = 1.25) -> tuple:
    """Smallest (C_L, C_p, C_K) for which the structural warm-start generator
    (generic Taylor coefficients, one block per output coordinate, clipping layer)
    fits inside ``size_generator`` for every eps in ``eps_values``."""
    from . import approximator

    if eps_values is None:
        eps_values = [2.0 ** -k for k in range(2, 9)
                      if approximator.estimated_width(approximator._raw_plan(alpha + 1.0, d, 2.0 ** -k))
                      <= approximator.MAX_WIDTH]
    clip = clip_layer_cost(d)
    cl = cp = ck = 0.0
    for eps in eps_values:
        b = approximator.plan(alpha + 1.0, d, eps).budget
        log = math.log(1.0 / eps)
        core = d * eps ** (-d / (alpha + 1.0))
        cl = max(cl, (b["layers"] + clip["depth"]) / log)
        cp = max(cp, max(d * b["width"], clip["width"]) / core)
        ck = max(ck, (d * b["params"] + clip["params"]) / (core * log))
    return tuple(float(math.ceil(margin * c)) for c in (cl, cp, ck))
