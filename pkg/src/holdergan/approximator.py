"""Constructive ReLU approximation of smooth functions on the unit box.

The construction follows the classical sawtooth route:

* ``t**2`` on [0, 1] is approximated by ``t - sum_s g_s(t) / 4**s`` where
  ``g_s`` is the s-fold composition of the tent map, and products come from
  polarisation, ``xy = 2M^2 [ s((x+y)/2M) - s(x/2M) - s(y/2M) ]`` evaluated
  on absolute values;
* a partition of unity by 1-D hats ``phi_n`` (products of hats in 2-D);
* on each patch the local Taylor polynomial of the target, whose monomials
  ``phi_n * t^nu`` are built by chaining multiplication gadgets.

Weights are brought under a magnitude bound by exact power-of-two
rebalancing between consecutive layers and a trailing chain of doublings.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import block_diag

from .errors import BudgetError, DimensionError, ParameterError
from .relu_net import Layer, Network, count_nonzero, forward

__all__ = [
    "MultGadget",
    "ApproxPlan",
    "build_mult_gadget",
    "plan",
    "approximate",
    "sup_error",
    "affine",
    "compose",
    "parallel",
    "carry",
    "pad_depth",
    "stack_outputs",
    "enforce_magnitude",
    "derivative_oracle",
    "network_budget",
    "recorded_constants",
    "measure_constants",
    "estimated_width",
    "MAX_WIDTH",
]


def _ceil(x: float) -> int:
    # absorbs float noise such as 10**0.5 squared etc.
    return int(math.ceil(x - 1e-9))


# ---------------------------------------------------------------- combinators

def affine(W, b) -> Network:
    """Single affine layer ``x -> W x + b``."""
    return Network((Layer.dense(np.atleast_2d(np.asarray(W, dtype=float)), b),))


def compose(first: Network, second: Network) -> Network:
    """``second o first``, merging the two adjacent affine maps into one layer."""
    if first.clip_bound is not None:
        raise ParameterError("cannot compose after a clipped network")
    if first.output_dim != second.input_dim:
        raise DimensionError(f"{first.output_dim} outputs feed {second.input_dim} inputs")
    a, b = first.layers[-1], second.layers[0]
    merged = Layer.dense(b.w @ a.w, b.w @ a.b + b.b)
    return Network(first.layers[:-1] + (merged,) + second.layers[1:], second.clip_bound)


def carry(k: int, depth: int) -> Network:
    """Identity on k signed values realised with ``depth`` affine layers (weights +-1)."""
    if depth < 1:
        raise ParameterError("depth must be at least 1")
    eye = np.eye(k)
    if depth == 1:
        return affine(eye, np.zeros(k))
    split = np.vstack([eye, -eye])
    layers = [Layer.dense(split, np.zeros(2 * k))]
    keep = np.block([[eye, -eye], [-eye, eye]])
    layers += [Layer.dense(keep, np.zeros(2 * k)) for _ in range(depth - 2)]
    layers.append(Layer.dense(np.hstack([eye, -eye]), np.zeros(k)))
    return Network(tuple(layers))


def pad_depth(net: Network, depth: int) -> Network:
    if net.depth > depth:
        raise ParameterError(f"network already has depth {net.depth} > {depth}")
    if net.depth == depth:
        return net
    return compose(net, carry(net.output_dim, depth - net.depth + 1))


def parallel(nets, in_idx, n_in: int) -> Network:
    """Run networks side by side on (possibly overlapping) slices of a shared input.

    ``in_idx[i]`` lists the input coordinates fed to ``nets[i]``; outputs are
    concatenated in order.  Shallower networks are padded with carries.
    """
    depth = max(n.depth for n in nets)
    nets = [pad_depth(n, depth) for n in nets]
    rows, biases = [], []
    for net, idx in zip(nets, in_idx):
        idx = np.asarray(idx, dtype=int)
        if len(idx) != net.input_dim:
            raise DimensionError("index list length must match the block input dimension")
        W = np.zeros((net.layers[0].out_dim, n_in))
        np.add.at(W, (slice(None), idx), net.layers[0].w)
        rows.append(W)
        biases.append(net.layers[0].b)
    layers = [Layer.dense(np.vstack(rows), np.concatenate(biases))]
    for i in range(1, depth):
        layers.append(Layer.dense(block_diag(*[n.layers[i].w for n in nets]),
                                  np.concatenate([n.layers[i].b for n in nets])))
    return Network(tuple(layers))


def stack_outputs(nets) -> Network:
    """Networks on the same input, outputs concatenated (block construction)."""
    n_in = nets[0].input_dim
    return parallel(nets, [np.arange(n_in)] * len(nets), n_in)


def _pow2_exponent(ratio: np.ndarray) -> np.ndarray:
    """Smallest j >= 0 with ratio * 2**-j <= 1, elementwise."""
    j = np.zeros(ratio.shape, dtype=int)
    big = ratio > 1.0
    if np.any(big):
        j[big] = np.ceil(np.log2(ratio[big])).astype(int)
        over = ratio * np.ldexp(1.0, -j) > 1.0
        j[over] += 1
    return j


def enforce_magnitude(net: Network, kappa: float = 1.0) -> Network:
    """Equivalent network whose weights and biases all lie in ``[-kappa, kappa]``.

    Each hidden unit with an oversized incoming row is scaled down by a power
    of two and its outgoing column scaled up by the same power (ReLU is
    positively homogeneous, and power-of-two scaling is exact in floating
    point).  What remains at the output layer is divided by ``2**t`` and
    restored by ``t`` doubling layers of width ``4k`` with weights +-1 (two
    nonzeros per unit).
    """
    if kappa < 1.0:
        raise ParameterError("kappa must be at least 1 for identity carries")
    Ws = [l.w.copy() for l in net.layers]
    bs = [l.b.copy() for l in net.layers]
    masks = [l.mask for l in net.layers]
    for i in range(len(Ws) - 1):
        row = np.maximum(np.max(np.abs(Ws[i]), axis=1, initial=0.0), np.abs(bs[i]))
        j = _pow2_exponent(row / kappa)
        Ws[i] = np.ldexp(Ws[i], -j[:, None])
        bs[i] = np.ldexp(bs[i], -j)
        Ws[i + 1] = np.ldexp(Ws[i + 1], j[None, :])
    layers = [Layer(w, b, m | (w != 0)) for w, b, m in zip(Ws, bs, masks)]
    top = max(np.max(np.abs(Ws[-1]), initial=0.0), np.max(np.abs(bs[-1]), initial=0.0))
    t = int(_pow2_exponent(np.array([top / kappa]))[0])
    if t == 0:
        return Network(tuple(layers), net.clip_bound)
    k = net.output_dim
    last = layers.pop()
    w_small, b_small = np.ldexp(last.w, -t), np.ldexp(last.b, -t)
    layers.append(Layer(np.vstack([w_small, w_small, -w_small, -w_small]),
                        np.concatenate([b_small, b_small, -b_small, -b_small]),
                        np.vstack([last.mask] * 4)))
    # units hold (x+, x+, x-, x-); each layer sums the two copies of a sign
    eye, zero = np.eye(k), np.zeros((k, k))
    pos = np.hstack([eye, eye, zero, zero])
    neg = np.hstack([zero, zero, eye, eye])
    for _ in range(t - 1):
        layers.append(Layer.dense(np.vstack([pos, pos, neg, neg]), np.zeros(4 * k)))
    layers.append(Layer.dense(pos - neg, np.zeros(k)))
    return Network(tuple(layers), net.clip_bound)


# ---------------------------------------------------------- multiplication

@dataclass(frozen=True)
class MultGadget:
    """ReLU network approximating ``(x, y) -> x*y`` on ``[-M, M]^2``."""

    depth_m: int
    range_scale: float
    net: Network

    @property
    def error_bound(self) -> float:
        return 6.0 * self.range_scale ** 2 * 2.0 ** (-2 * self.depth_m - 2)

    def __call__(self, x, y):
        pts = np.column_stack([np.ravel(x), np.ravel(y)])
        return forward(self.net, pts)[:, 0].reshape(np.shape(x))


def _squaring_branch(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Layers (after the +- input split) computing s_m(P + Q) from units P, Q.

    Layer widths: 3 (hats of t), then m-1 layers of 4 (hats of g_j plus the
    running sum), then the scalar output.
    """
    hats_b = np.array([0.0, -0.5, -1.0])
    g_row = np.array([2.0, -4.0, 2.0])  # g = 2h1 - 4h2 + 2h3
    layers = [(np.array([[1.0, 1.0]] * 3), hats_b.copy())]
    # after the first hat layer the running sum is h1 itself
    acc = np.array([1.0, 0.0, 0.0])
    for j in range(1, m):
        W = np.zeros((4, len(acc)))
        W[:3, :3] = g_row
        W[3] = acc
        W[3, :3] -= g_row / 4.0 ** j
        layers.append((W, np.r_[hats_b, 0.0]))
        acc = np.array([0.0, 0.0, 0.0, 1.0])
    out = acc.copy()
    out[:3] -= g_row / 4.0 ** m
    layers.append((out[None, :], np.zeros(1)))
    return layers


def build_mult_gadget(m: int, M: float = 1.0) -> MultGadget:
    """Product gadget with ``m`` sawtooth levels, accurate to ``6 M^2 2^(-2m-2)``."""
    if m < 1:
        raise ParameterError("m must be at least 1")
    if not M > 0:
        raise ParameterError("M must be positive")
    combos = np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]) / (2.0 * M)
    first_w = np.vstack([np.vstack([c, -c]) for c in combos])
    branch = _squaring_branch(m)
    layers = [Layer.dense(first_w, np.zeros(6))]
    for w, b in branch[:-1]:
        layers.append(Layer.dense(block_diag(w, w, w), np.tile(b, 3)))
    w_out = branch[-1][0]
    sign = np.array([1.0, -1.0, -1.0]) * 2.0 * M ** 2
    layers.append(Layer.dense(np.hstack([s * w_out for s in sign]), np.zeros(1)))
    return MultGadget(m, float(M), Network(tuple(layers)))


# ------------------------------------------------------------------- plans

# (d, beta) -> (c, c') with depth <= c (ln(1/delta) + 1) and
# nonzero params <= c' delta^(-d/beta) (ln(1/delta) + 1); measured by
# measure_constants over delta in 2^-1 .. 2^-10 (within the width guard) with a
# 25% margin, rounded up.
_RECORDED = {
    (1, 1.0): (3.0, 16.0),
    (1, 2.0): (6.0, 304.0),
    (1, 3.0): (9.0, 718.0),
    (2, 1.0): (6.0, 330.0),
    (2, 2.0): (9.0, 2016.0),
    (2, 3.0): (12.0, 5090.0),
}


@dataclass(frozen=True)
class ApproxPlan:
    """Grid, Taylor order and gadget depth for accuracy ``delta`` on ``[0,1]^d``."""

    beta: float
    d: int
    delta: float
    grid_N: int
    taylor_order: int
    gadget_m: int
    budget: dict = field(default_factory=dict)
    constants: tuple = (math.nan, math.nan)

    @property
    def nodes(self) -> int:
        return (self.grid_N + 1) ** self.d


def _raw_plan(beta: float, d: int, delta: float) -> ApproxPlan:
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    if not beta > 0:
        raise ParameterError("beta must be positive")
    if d not in (1, 2):
        raise ParameterError("d must be 1 or 2")
    N = max(1, _ceil(delta ** (-1.0 / beta)))
    m = _ceil(math.log2(1.0 / delta)) + 2
    return ApproxPlan(float(beta), d, float(delta), N, int(math.ceil(beta)) - 1, m)


def plan(beta: float, d: int, delta: float, with_budget: bool = True) -> ApproxPlan:
    """Choose ``grid_N = ceil(delta^(-1/beta))`` intervals per axis,
    Taylor order ``ceil(beta) - 1`` and gadget depth ``ceil(log2(1/delta)) + 2``."""
    p = _raw_plan(beta, d, delta)
    if estimated_width(p) > MAX_WIDTH:
        raise BudgetError(f"construction would need width ~{estimated_width(p)} > {MAX_WIDTH}")
    if not with_budget:
        return p
    # generic coefficients: constant ones would telescope the hat sum and hide weights
    probe = np.random.default_rng(0).uniform(0.5, 1.0, _coef_shape(p))
    net = enforce_magnitude(_taylor_network(probe, p), 1.0)
    return ApproxPlan(p.beta, d, p.delta, p.grid_N, p.taylor_order, p.gadget_m, network_budget(net),
                      recorded_constants(d, beta))


# layers are stored densely, so very wide constructions are refused
MAX_WIDTH = 2048


def estimated_width(p: ApproxPlan) -> int:
    """Upper estimate of the widest layer of the construction for plan ``p``."""
    nodes = p.grid_N + 1
    monomials = max([1] + [len(_multi_indices(p.d, q)) for q in range(1, p.taylor_order + 1)])
    gadgets = nodes ** p.d * (monomials if p.taylor_order or p.d == 2 else 0)
    return 12 * gadgets + 2 * p.d * nodes + 2 + p.d * (nodes + 2)


def network_budget(net: Network) -> dict:
    return {"layers": net.depth, "neurons": int(sum(net.widths[:-1])),
            "width": int(max(net.widths[:-1], default=0)), "params": count_nonzero(net)}


def recorded_constants(d: int, beta: float) -> tuple:
    key = (d, float(beta))
    if key in _RECORDED:
        return _RECORDED[key]
    return measure_constants(d, beta, margin=1.25)


def measure_constants(d: int, beta: float, deltas=None, margin: float = 1.0) -> tuple:
    """Smallest (c, c') covering the structural budgets over ``deltas``, times ``margin``."""
    if deltas is None:
        deltas = [2.0 ** -k for k in range(1, 11)]
        deltas = [x for x in deltas if estimated_width(_raw_plan(beta, d, x)) <= MAX_WIDTH]
    c = cp = 0.0
    for delta in deltas:
        b = plan(beta, d, delta).budget
        logf = math.log(1.0 / delta) + 1.0
        c = max(c, b["layers"] / logf)
        cp = max(cp, b["params"] / (delta ** (-d / beta) * logf))
    return margin * c, margin * cp


# ------------------------------------------------------------ derivatives

def _multi_indices(d: int, order: int):
    return [nu for nu in itertools.product(range(order + 1), repeat=d) if sum(nu) == order]


def derivative_oracle(f, d: int, step: float = 1e-4) -> tuple[Callable, bool]:
    """Return ``(D, analytic)`` with ``D(points, nu)`` the mixed partial of ``f``.

    Objects exposing ``partial(x, nu)`` are differentiated analytically; plain
    callables by central differences with the given step, the stencil shifted
    inward so it never leaves ``[0, 1]^d``.
    """
    if hasattr(f, "partial") and getattr(f, "analytic_derivatives", True):
        def D(pts, nu):
            x = pts[:, 0] if d == 1 else pts
            return np.asarray(f.partial(x, nu), dtype=float).reshape(-1)
        return D, True

    def value(pts):
        x = pts[:, 0] if d == 1 else pts
        return np.asarray(f(x), dtype=float).reshape(-1)

    def D(pts, nu):
        pts = np.asarray(pts, dtype=float)
        stencils = []
        for j, k in enumerate(nu):
            offs = [((k / 2.0 - i) * step, (-1) ** i * math.comb(k, i) / step ** k) for i in range(k + 1)]
            stencils.append(offs)
        centre = pts.copy()
        for j, k in enumerate(nu):
            half = k / 2.0 * step
            centre[:, j] = np.clip(centre[:, j], half, 1.0 - half)
        total = np.zeros(len(pts))
        for combo in itertools.product(*stencils):
            shifted = centre.copy()
            weight = 1.0
            for j, (off, w) in enumerate(combo):
                shifted[:, j] += off
                weight *= w
            total += weight * value(shifted)
        return total

    return D, False


# ----------------------------------------------------------- construction

def _coef_shape(p: ApproxPlan) -> tuple:
    return ((p.grid_N + 1,) * p.d) + ((p.taylor_order + 1,) * p.d)


def _patch_layer(N: int, d: int) -> Network:
    """Hats ``phi_{i,j}`` and local coordinates ``t_{i,j} in [-1, 1]`` for every axis j.

    Hidden units ``r_i = ReLU(N x_j - i)``, i = -1 .. N+1, are shared:
    ``phi_i = r_{i-1} - 2 r_i + r_{i+1}`` and ``t_i = r_{i-1} - r_{i+1} - 1``.
    Outputs: all hats (axis-major) followed by all local coordinates.
    """
    units = N + 3
    W1 = np.zeros((d * units, d))
    b1 = np.zeros(d * units)
    for j in range(d):
        W1[j * units:(j + 1) * units, j] = N
        b1[j * units:(j + 1) * units] = -np.arange(-1, N + 2)
    nodes = N + 1
    W2 = np.zeros((2 * d * nodes, d * units))
    b2 = np.zeros(2 * d * nodes)
    for j in range(d):
        for i in range(nodes):
            r = j * units + i  # r_{i-1} sits at offset i
            W2[j * nodes + i, [r, r + 1, r + 2]] = [1.0, -2.0, 1.0]
            row = d * nodes + j * nodes + i
            W2[row, [r, r + 2]] = [1.0, -1.0]
            b2[row] = -1.0
    return Network((Layer.dense(W1, b1), Layer.dense(W2, b2)))


def _gadget_stage(n_in: int, pairs, carried, acc_terms, gadget: Network) -> Network:
    """One multiplication stage on a flat state vector.

    ``pairs``: list of (i, j) state indices multiplied by a gadget each;
    ``carried``: state indices passed through unchanged; ``acc_terms``:
    (index, coefficient) list summed into a single carried accumulator, or
    None.  Output order: products, carried values, accumulator.
    """
    blocks = [gadget] * len(pairs)
    idx = [list(ij) for ij in pairs]
    depth = gadget.depth
    if carried:
        blocks.append(carry(len(carried), depth))
        idx.append(list(carried))
    pre_rows = n_in
    pre_W = [np.eye(n_in)]
    if acc_terms is not None:
        acc = np.zeros((1, n_in))
        for i, c in acc_terms:
            acc[0, i] += c
        pre_W.append(acc)
        blocks.append(carry(1, depth))
        idx.append([n_in])
        pre_rows += 1
    pre = affine(np.vstack(pre_W), np.zeros(pre_rows))
    return compose(pre, parallel(blocks, idx, pre_rows))


def _taylor_network(coef: np.ndarray, p: ApproxPlan) -> Network:
    """Sum over patches n and multi-indices nu of ``coef[n, nu] * phi_n * t_n^nu``."""
    N, d, s = p.grid_N, p.d, p.taylor_order
    nodes = N + 1
    gadget = build_mult_gadget(p.gadget_m, 1.0).net
    net = _patch_layer(N, d)
    patches = list(itertools.product(range(nodes), repeat=d))
    # state bookkeeping: names -> position in the current output vector
    t_pos = {(i, j): d * nodes + j * nodes + i for j in range(d) for i in range(nodes)}
    if d == 1:
        u_pos = {((n[0],), (0,)): n[0] for n in patches}
    else:
        pairs = [(n[0], nodes + n[1]) for n in patches]
        carried = sorted(t_pos.values())
        net = compose(net, _gadget_stage(net.output_dim, pairs, carried, None, gadget))
        u_pos = {(n, (0, 0)): k for k, n in enumerate(patches)}
        t_pos = {key: len(pairs) + carried.index(v) for key, v in t_pos.items()}
    acc_pos = None
    for q in range(1, s + 1):
        acc_terms = [(pos, coef[key[0] + key[1]]) for key, pos in u_pos.items()]
        if acc_pos is not None:
            acc_terms.append((acc_pos, 1.0))
        new_keys, pairs = [], []
        for n in patches:
            for nu in _multi_indices(d, q):
                j = max(k for k in range(d) if nu[k] > 0)
                parent = tuple(v - (k == j) for k, v in enumerate(nu))
                new_keys.append((n, nu))
                pairs.append((u_pos[(n, parent)], t_pos[(n[j], j)]))
        carried = sorted(t_pos.values()) if q < s else []
        net = compose(net, _gadget_stage(net.output_dim, pairs, carried, acc_terms, gadget))
        u_pos = {key: k for k, key in enumerate(new_keys)}
        t_pos = {key: len(pairs) + carried.index(v) for key, v in t_pos.items()} if carried else {}
        acc_pos = len(pairs) + len(carried)
    final = np.zeros((1, net.output_dim))
    for key, pos in u_pos.items():
        final[0, pos] += coef[key[0] + key[1]]
    if acc_pos is not None:
        final[0, acc_pos] += 1.0
    return compose(net, affine(final, np.zeros(1)))


def approximate(f, p: ApproxPlan, kappa: float = 1.0, d: int | None = None) -> Network:
    """ReLU network within about ``p.delta`` of ``f`` in sup-norm on ``[0,1]^d``.

    ``f`` is either an object with ``partial(x, nu)`` (analytic derivatives)
    or a plain callable (central differences, step 1e-4).  All weights and
    biases of the result lie in ``[-kappa, kappa]``.
    """
    if d is not None and d != p.d:
        raise ParameterError(f"plan is for d={p.d}, target has d={d}")
    target_d = getattr(f, "d", p.d)
    if target_d != p.d:
        raise ParameterError(f"plan is for d={p.d}, target has d={target_d}")
    D, _ = derivative_oracle(f, p.d)
    N, s = p.grid_N, p.taylor_order
    grid = np.array(list(itertools.product(range(N + 1), repeat=p.d)), dtype=float) / N
    coef = np.zeros(_coef_shape(p))
    h = 1.0 / N
    for order in range(s + 1):
        for nu in _multi_indices(p.d, order):
            vals = D(grid, nu) * h ** order / math.prod(math.factorial(k) for k in nu)
            coef[(Ellipsis,) + nu] = vals.reshape((N + 1,) * p.d)
    return enforce_magnitude(_taylor_network(coef, p), kappa)


def sup_error(net: Network, f, grid_points) -> float:
    """Largest ``|net(x) - f(x)|`` over the grid.

    ``grid_points`` is either an ``(n, d)`` / ``(n,)`` array or an integer,
    meaning that many equispaced points per axis of the unit box.  ``f`` is
    a callable or a density exposing ``pdf``.
    """
    if np.isscalar(grid_points):
        axis = np.linspace(0.0, 1.0, int(grid_points))
        if net.input_dim == 1:
            pts = axis
        else:
            pts = np.array(list(itertools.product(axis, repeat=net.input_dim)))
    else:
        pts = np.asarray(grid_points, dtype=float)
    out = np.asarray(forward(net, pts), dtype=float)
    out = out.reshape(out.shape[0], -1)[:, 0] if out.ndim > 1 else out
    x = pts if net.input_dim > 1 else np.ravel(pts)
    fn = f if callable(f) else f.pdf
    ref = np.asarray(fn(x), dtype=float).reshape(-1)
    return float(np.max(np.abs(out.reshape(-1) - ref)))
