"""Transport maps pushing a source distribution onto a Hölder target.

``monge_1d`` tabulates the quantile coupling ``F_mu^{-1} o F_rho``.
``moser_flow`` solves ``Lap u = p_mu - p_rho`` with homogeneous Neumann data
and integrates the density-normalised velocity ``v_t = -grad u / p_t`` with
``p_t = (1 - t) p_rho + t p_mu`` from t = 0 to 1; the time-one map pushes
``rho`` to ``mu`` by conservation of mass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.interpolate import PchipInterpolator
from scipy.sparse.linalg import cg
from scipy.stats import qmc

from . import holder
from .errors import DimensionError, DomainError, NumericalError, ParameterError, StabilityError
from .ipm import sinkhorn_w1, w1_vs_density_1d

__all__ = [
    "TransportMap",
    "PoissonSolution",
    "monge_1d",
    "identity_map",
    "solve_poisson",
    "moser_flow",
    "moser_integral_literal",
    "verify_pushforward",
    "from_uniform",
    "to_dict",
    "from_dict",
    "save",
    "load",
]

MONGE_KNOTS = 4096


def _support(dist) -> tuple[float, float]:
    return tuple(float(v) for v in dist.support)


def from_uniform(dist, u: np.ndarray) -> np.ndarray:
    """Map points of the unit cube to ``dist`` by (conditional) inversion."""
    u = np.asarray(u, dtype=float)
    if isinstance(dist, holder.BaseDistribution):
        return u.copy()
    if dist.d == 1:
        return dist.quantile(u.reshape(-1)).reshape(-1, 1)
    return dist._conditional_inverse(u)


@dataclass(frozen=True)
class PoissonSolution:
    """Node values of the zero-mean Neumann solution on a regular grid."""

    grid: np.ndarray
    u: np.ndarray
    residual: float
    iterations: int
    compatibility_shift: float = 0.0

    @property
    def d(self) -> int:
        return self.u.ndim

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def gradient(self) -> np.ndarray:
        """Central-difference gradient, shape ``(d,) + u.shape``; normal component 0 on the boundary."""
        parts = []
        for axis in range(self.d):
            g = np.gradient(self.u, self.h, axis=axis, edge_order=2)
            idx = [slice(None)] * self.d
            idx[axis] = 0
            g[tuple(idx)] = 0.0
            idx[axis] = -1
            g[tuple(idx)] = 0.0
            parts.append(g)
        return np.stack(parts)


def _neumann_laplacian(n: int, h: float) -> sparse.csr_matrix:
    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    upper[0] = 2.0  # ghost node u_{-1} = u_1
    lower[-1] = 2.0
    return sparse.diags([lower, main, upper], [-1, 0, 1], format="csr") / h ** 2


def solve_poisson(rho, mu, grid_n: int, tol: float = 1e-8, max_rounds: int = 6) -> PoissonSolution:
    """Second-order finite differences for ``Lap u = p_mu - p_rho`` on the common box.

    Ghost-node Neumann rows are symmetrised by trapezoid weights, the right
    side is projected onto the range (removing its discrete mean, which is
    zero up to quadrature error), and the singular SPD system is solved by
    conjugate gradients until the max-norm residual is below ``tol``.
    """
    if rho.d != mu.d:
        raise DimensionError("source and target dimensions differ")
    if _support(rho) != _support(mu):
        raise DomainError(f"supports differ: {_support(rho)} vs {_support(mu)}")
    if grid_n < 8:
        raise ParameterError("grid_n must be at least 8")
    d = mu.d
    lo, hi = _support(mu)
    x = np.linspace(lo, hi, grid_n)
    h = x[1] - x[0]
    if d == 1:
        pts = x
    else:
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X1, X2], axis=-1)
    f = (mu.pdf(pts) - rho.pdf(pts)).reshape(-1)
    L1 = _neumann_laplacian(grid_n, h)
    w1 = np.ones(grid_n)
    w1[[0, -1]] = 0.5
    if d == 1:
        A, w = L1, w1
    else:
        eye = sparse.identity(grid_n, format="csr")
        A = (sparse.kron(L1, eye) + sparse.kron(eye, L1)).tocsr()
        w = np.outer(w1, w1).reshape(-1)
    shift = float(w @ f / w.sum())
    fc = f - shift
    S = (-sparse.diags(w) @ A).tocsr()
    rhs = -w * fc
    u = np.zeros_like(f)
    iterations = 0
    residual = np.inf
    interior = np.ones((grid_n,) * d, dtype=bool)
    interior[(slice(1, -1),) * d] = False
    interior = ~interior.reshape(-1)

    def count(_):
        nonlocal iterations
        iterations += 1

    rtol = 1e-12
    for _ in range(max_rounds):
        u, _info = cg(S, rhs, x0=u, rtol=rtol, atol=0.0, maxiter=20 * grid_n ** d, callback=count)
        u = u - (w @ u) / w.sum()
        residual = float(np.max(np.abs(A @ u - fc)[interior]))
        if residual <= tol:
            break
        rtol *= 1e-2
    if not residual <= tol:
        raise NumericalError(f"Poisson solve stalled at residual {residual:.3e}", residual=residual)
    return PoissonSolution(x, u.reshape((grid_n,) * d), residual, iterations, shift)


@dataclass(frozen=True)
class TransportMap:
    """A map ``T`` with ``T # source = target`` (numerically).

    ``kind`` is ``monge1d`` (monotone cubic interpolant on knots),
    ``moser_flow`` (velocity grid integrated by RK4), ``moser_literal`` (the
    frozen-point time integral of the velocity, kept for comparison) or
    ``identity``.
    """

    d: int
    kind: str
    source: object
    target: object
    knots: np.ndarray | None = None
    values: np.ndarray | None = None
    grid: np.ndarray | None = None
    grad_field: np.ndarray | None = None
    rk_steps: int = 0
    denominator: str = "flow"
    _interp: object = field(default=None, repr=False, compare=False)
    _table: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "monge1d":
            object.__setattr__(self, "_interp", PchipInterpolator(self.knots, self.values, extrapolate=False))
        elif self.kind in ("moser_flow", "moser_literal"):
            # grad u and both densities share one node table, interpolated (bi)linearly
            if self.d == 1:
                pts = self.grid
            else:
                X1, X2 = np.meshgrid(self.grid, self.grid, indexing="ij")
                pts = np.stack([X1, X2], axis=-1)
            channels = [self.grad_field[i] for i in range(self.d)]
            channels += [self.source.pdf(pts), self.target.pdf(pts)]
            object.__setattr__(self, "_table", np.stack(channels, axis=-1))

    @property
    def analytic_derivatives(self) -> bool:
        return self.kind in ("monge1d", "identity") and self.d == 1

    def _lookup(self, x: np.ndarray) -> np.ndarray:
        """Interpolated ``(grad u, p_source, p_target)`` at points ``x`` of shape (n, d)."""
        G = len(self.grid)
        s = (np.clip(x, self.grid[0], self.grid[-1]) - self.grid[0]) / (self.grid[1] - self.grid[0])
        i = np.minimum(s.astype(int), G - 2)
        w = s - i
        if self.d == 1:
            i, w = i[:, 0], w[:, :1]
            return self._table[i] * (1.0 - w) + self._table[i + 1] * w
        i0, i1 = i[:, 0], i[:, 1]
        w0, w1 = w[:, :1], w[:, 1:]
        T = self._table
        return ((T[i0, i1] * (1 - w1) + T[i0, i1 + 1] * w1) * (1 - w0)
                + (T[i0 + 1, i1] * (1 - w1) + T[i0 + 1, i1 + 1] * w1) * w0)

    def velocity(self, t: float, x: np.ndarray) -> np.ndarray:
        vals = self._lookup(x)
        p_src, p_tgt = vals[:, self.d], vals[:, self.d + 1]
        if self.denominator == "flow":
            pt = (1.0 - t) * p_src + t * p_tgt
        else:
            pt = (1.0 - t) * p_tgt + t * p_src
        return -vals[:, :self.d] / pt[:, None]

    def _points(self, z):
        z = np.asarray(z, dtype=float)
        if self.d == 1:
            return z.reshape(-1, 1), z.shape
        if z.shape[-1] != self.d:
            raise DimensionError(f"expected points of dimension {self.d}")
        return z.reshape(-1, self.d), z.shape

    def __call__(self, z):
        x, shape = self._points(z)
        lo, hi = _support(self.source)
        if self.kind == "identity":
            out = x.copy()
        elif self.kind == "monge1d":
            out = np.clip(self._interp(np.clip(x[:, 0], lo, hi)), *_support(self.target))[:, None]
        elif self.kind == "moser_flow":
            out = np.clip(x.copy(), lo, hi)
            dt = 1.0 / self.rk_steps
            tlo, thi = _support(self.target)
            for k in range(self.rk_steps):
                t = k * dt
                k1 = self.velocity(t, out)
                k2 = self.velocity(t + dt / 2, np.clip(out + dt / 2 * k1, tlo, thi))
                k3 = self.velocity(t + dt / 2, np.clip(out + dt / 2 * k2, tlo, thi))
                k4 = self.velocity(t + dt, np.clip(out + dt * k3, tlo, thi))
                out = np.clip(out + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), tlo, thi)
        elif self.kind == "moser_literal":
            # int_0^1 grad u / ((1-t) p_mu + t p_rho) dt in closed form
            vals = self._lookup(x)
            pr, pm = vals[:, self.d], vals[:, self.d + 1]
            ratio = np.where(np.abs(pr - pm) > 1e-12 * pm,
                             np.log(pr / pm) / np.where(pr == pm, 1.0, pr - pm), 1.0 / pm)
            sign = 1.0 if self.denominator == "plus" else -1.0
            out = sign * vals[:, :self.d] * ratio[:, None]
        else:
            raise ParameterError(f"unknown map kind {self.kind!r}")
        return out.reshape(shape)

    def partial(self, z, nu=None):
        """Derivatives of a 1-D monotone map: ``T' = p_rho / p_mu(T)`` and its derivative."""
        if not self.analytic_derivatives:
            raise ParameterError("analytic derivatives exist only for 1-D monge and identity maps")
        z = np.asarray(z, dtype=float)
        order = 0 if nu is None else int(np.sum(nu))
        if self.kind == "identity":
            return z.copy() if order == 0 else np.full(z.shape, 1.0 if order == 1 else 0.0)
        if order == 0:
            return self(z)
        if order > 2:
            step = 1e-4
            k = order - 2
            zc = np.clip(z, k * step / 2, 1.0 - k * step / 2)
            return sum((-1) ** j * math.comb(k, j) * self.partial(zc + (k / 2 - j) * step, (2,))
                       for j in range(k + 1)) / step ** k
        T = self(z)
        pm = self.target.pdf(T)
        d1 = self.source.pdf(z) / pm
        if order == 1:
            return d1
        return (self.source.partial(z, (1,)) - self.target.partial(T, (1,)) * d1 ** 2) / pm


def monge_1d(rho, mu, knots: int = MONGE_KNOTS) -> TransportMap:
    """Quantile coupling ``T = F_mu^{-1} o F_rho`` on ``knots`` equispaced knots (PCHIP)."""
    if rho.d != 1 or mu.d != 1:
        raise DimensionError("monge_1d needs one-dimensional distributions")
    lo, hi = _support(rho)
    z = np.linspace(lo, hi, knots)
    values = mu.quantile(np.clip(rho.cdf(z), 0.0, 1.0))
    values[0], values[-1] = _support(mu)
    values = np.maximum.accumulate(values)
    return TransportMap(1, "monge1d", rho, mu, knots=z, values=values)


def identity_map(dist) -> TransportMap:
    return TransportMap(dist.d, "identity", dist, dist)


def _min_density_on_grid(dist, x, d):
    if d == 1:
        return float(np.min(dist.pdf(x)))
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return float(np.min(dist.pdf(np.stack([X1, X2], axis=-1))))


def moser_flow(rho, mu, grid_n: int = 512, rk_steps: int = 64, denominator: str = "flow") -> TransportMap:
    """Time-one flow of ``-grad u / p_t`` with ``Lap u = p_mu - p_rho``.

    ``denominator="flow"`` uses ``p_t = (1-t) p_rho + t p_mu``, which makes the
    continuity equation hold; ``"swapped"`` exchanges the two endpoints.
    """
    if rho.d not in (1, 2):
        raise DimensionError("moser_flow supports d in {1, 2}")
    if denominator not in ("flow", "swapped"):
        raise ParameterError("denominator must be 'flow' or 'swapped'")
    sol = solve_poisson(rho, mu, grid_n)
    for dist in (rho, mu):
        if _min_density_on_grid(dist, sol.grid, rho.d) < 1e-6:
            raise StabilityError("density below 1e-6 on the grid; the velocity is undefined", residual=None)
    return TransportMap(rho.d, "moser_flow", rho, mu, grid=sol.grid, grad_field=sol.gradient(),
                        rk_steps=rk_steps, denominator=denominator)


def moser_integral_literal(rho, mu, grid_n: int = 512, sign: str = "plus") -> TransportMap:
    """The frozen-point integral ``int_0^1 grad u(x) / ((1-t) p_mu + t p_rho) dt``.

    Kept verbatim for comparison (``sign="plus"`` uses ``+grad u``; any other
    value the negated field); it carries no pushforward guarantee.
    """
    sol = solve_poisson(rho, mu, grid_n)
    return TransportMap(rho.d, "moser_literal", rho, mu, grid=sol.grid, grad_field=sol.gradient(),
                        denominator="plus" if sign == "plus" else "negated")


def _draw(dist, n: int, seed, sampler: str) -> np.ndarray:
    if sampler == "iid":
        return np.asarray(dist.sample(n, seed)).reshape(n, -1)
    u = qmc.Sobol(d=dist.d, scramble=True, seed=seed).random(n)
    return from_uniform(dist, u).reshape(n, -1)


def verify_pushforward(T, rho, mu, n_samples: int, seed=0, sampler: str | None = None,
                       eps_reg: float = 1e-3) -> float:
    """Distance between ``T # rho`` (from ``n_samples`` source draws) and ``mu``.

    In 1-D the exact W1 against the target density is used.  In 2-D the pushed
    cloud is compared with draws of ``mu`` by debiased Sinkhorn; both clouds
    come from scrambled Sobol points by default, which keeps the sampling
    floor of the comparison well below the transport error being measured.
    """
    d = rho.d
    sampler = sampler or ("iid" if d == 1 else "qmc")
    z = _draw(rho, n_samples, seed, sampler)
    x = np.asarray(T(z[:, 0] if d == 1 else z)).reshape(n_samples, d)
    if d == 1:
        return w1_vs_density_1d(x, mu).value
    rng = np.random.default_rng(seed)
    ref = _draw(mu, n_samples, int(rng.integers(2 ** 31)), sampler)
    return sinkhorn_w1(x, ref, eps_reg=eps_reg).value


def to_dict(T: TransportMap) -> dict:
    doc = {"d": T.d, "kind": T.kind, "source": holder.density_to_dict(T.source),
           "target": holder.density_to_dict(T.target)}
    if T.kind == "monge1d":
        doc.update(knots=T.knots.tolist(), values=T.values.tolist())
    elif T.kind in ("moser_flow", "moser_literal"):
        doc.update(grid=T.grid.tolist(), field=T.grad_field.reshape(-1).tolist(),
                   rk_steps=T.rk_steps, denominator=T.denominator)
    return doc


def from_dict(doc: dict) -> TransportMap:
    src, tgt = holder.density_from_dict(doc["source"]), holder.density_from_dict(doc["target"])
    d, kind = int(doc["d"]), doc["kind"]
    if kind == "monge1d":
        return TransportMap(d, kind, src, tgt, knots=np.asarray(doc["knots"]), values=np.asarray(doc["values"]))
    if kind in ("moser_flow", "moser_literal"):
        grid = np.asarray(doc["grid"])
        fld = np.asarray(doc["field"]).reshape((d,) + (len(grid),) * d)
        return TransportMap(d, kind, src, tgt, grid=grid, grad_field=fld, rk_steps=int(doc["rk_steps"]),
                            denominator=doc["denominator"])
    return TransportMap(d, kind, src, tgt)


def save(T: TransportMap, path) -> None:
    Path(path).write_text(json.dumps(to_dict(T)))


def load(path) -> TransportMap:
    return from_dict(json.loads(Path(path).read_text()))
