"""Feedforward ReLU networks and the architecture classes that constrain them.

A network is a chain of affine layers with ReLU between consecutive layers and
no activation after the last one.  An optional output clipping to ``[-R, R]``
is realised by the two-unit ReLU identity

    clip(a, R) = ReLU(a + R) - ReLU(a - R) - R.

Sparsity is carried by explicit boolean masks; masked entries are always zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError

__all__ = [
    "Layer",
    "Network",
    "ArchitectureClass",
    "ConstraintCheck",
    "ValidationReport",
    "relu",
    "clip",
    "forward",
    "count_nonzero",
    "clip_layer_cost",
    "validate",
    "interval_bound",
    "zero_network",
    "random_network",
    "to_dict",
    "from_dict",
    "save",
    "load",
]


def relu(a):
    return np.maximum(a, 0.0)


def clip(a, R):
    """Clip ``a`` to ``[-R, R]`` through ReLU units.

    Uses ``ReLU(a + R) - ReLU(a - R) - R``, which agrees with
    ``max(-R, min(a, R))`` in all three regimes.
    """
    R = np.asarray(R, dtype=float)
    if not np.all(R > 0):
        raise ParameterError(f"clip bound must be positive, got {R}")
    a = np.asarray(a, dtype=float)
    out = relu(a + R) - relu(a - R) - R
    # the three-term sum can overshoot R by an ulp in floating point
    out = np.clip(out, -R, R)
    return out if out.ndim else float(out)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Layer:
    """One affine map ``x -> w @ x + b`` with a structural mask on ``w``."""

    w: np.ndarray
    b: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        mask = np.asarray(self.mask, dtype=bool).reshape(w.shape)
        if b.shape[0] != w.shape[0]:
            raise DimensionError(f"bias length {b.shape[0]} != weight rows {w.shape[0]}")
        if np.any(w[~mask] != 0.0):
            raise ParameterError("masked-out weight entries must be exactly zero")
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "b", _readonly(b))
        m = np.array(mask, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def dense(cls, w, b) -> "Layer":
        """Layer whose mask is the nonzero pattern of ``w``."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        return cls(w, b, w != 0.0)

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class Network:
    """Layered ReLU network, optionally followed by output clipping."""

    layers: tuple
    clip_bound: float | None = None

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("a network needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise DimensionError(
                    f"layer {i} expects {layers[i].in_dim} inputs but layer {i - 1} "
                    f"produces {layers[i - 1].out_dim}"
                )
        if self.clip_bound is not None and not self.clip_bound > 0:
            raise ParameterError("clip_bound must be positive")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def depth(self) -> int:
        """Number of affine layers (clipping excluded)."""
        return len(self.layers)

    @property
    def widths(self) -> list[int]:
        return [layer.out_dim for layer in self.layers]

    @property
    def weights(self) -> list[np.ndarray]:
        return [layer.w for layer in self.layers]

    @property
    def biases(self) -> list[np.ndarray]:
        return [layer.b for layer in self.layers]

    @property
    def masks(self) -> list[np.ndarray]:
        return [layer.mask for layer in self.layers]

    def with_params(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]) -> "Network":
        """Same structure and masks, new parameter values (masked entries re-zeroed)."""
        layers = tuple(
            Layer(np.where(layer.mask, w, 0.0), b, layer.mask)
            for layer, w, b in zip(self.layers, weights, biases)
        )
        return Network(layers, self.clip_bound)

    def with_clip(self, R: float | None) -> "Network":
        return Network(self.layers, R)

    def __call__(self, x):
        return forward(self, x)


@dataclass(frozen=True)
class ArchitectureClass:
    """The constraint bundle (R, kappa, L, p, K) of a generator or discriminator class."""

    R: float
    kappa: float
    L: int
    p: int
    K: int
    role: str = "generator"
    input_dim: int = 1

    def __post_init__(self):
        for name in ("R", "kappa", "L", "p", "K"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be strictly positive")
        if self.role not in ("generator", "discriminator"):
            raise ParameterError(f"unknown role {self.role!r}")
        if self.K < self.input_dim:
            raise ParameterError("K must be at least input_dim for the class to be nonempty")


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x, single = x.reshape(1, 1), True
    elif x.ndim == 1 and net.input_dim == 1:
        x, single = x.reshape(-1, 1), False
    elif x.ndim == 1:
        x, single = x.reshape(1, -1), True
    else:
        single = False
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(f"expected inputs of dimension {net.input_dim}, got shape {x.shape}")
    return x, single


def forward(net: Network, x):
    """Evaluate the network.

    ``x`` may be a single point (shape ``(input_dim,)``) or a batch of shape
    ``(n, input_dim)``; for scalar-input networks a flat array is treated as a
    batch of scalars.  Returns an array of shape ``(output_dim,)`` or
    ``(n, output_dim)`` accordingly.
    """
    xb, single = _as_batch(net, x)
    h = xb
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        h = h @ layer.w.T + layer.b
        if i < last:
            h = relu(h)
    if net.clip_bound is not None:
        h = clip(h, net.clip_bound)
    return h[0] if single else h


def forward_trace(net: Network, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Batch forward pass that also returns every pre-activation (before clipping)."""
    h = np.asarray(x, dtype=float)
    pre = []
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        z = h @ layer.w.T + layer.b
        pre.append(z)
        h = relu(z) if i < last else z
    if net.clip_bound is not None:
        h = clip(h, net.clip_bound)
    return pre, h


def count_nonzero(net: Network) -> int:
    """Total number of nonzero weights and biases over all affine layers."""
    return int(sum(np.count_nonzero(l.w) + np.count_nonzero(l.b) for l in net.layers))


def clip_layer_cost(output_dim: int) -> dict:
    """Extra depth, width and parameters charged for the clipping layer.

    The clipping of a k-dimensional output is one hidden layer of 2k units
    (identity weights, biases +-R) followed by a k-row output layer with weights
    +-1 and bias -R: 2k + 2k + 2k + k nonzero parameters.
    """
    k = output_dim
    return {"depth": 1, "width": 2 * k, "params": 7 * k}


def interval_bound(net: Network, lo, hi) -> np.ndarray:
    """Elementwise bound on ``|net(x)|`` over the box ``[lo, hi]`` by interval arithmetic."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (net.input_dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (net.input_dim,)).copy()
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        wp, wn = np.maximum(layer.w, 0), np.minimum(layer.w, 0)
        lo, hi = wp @ lo + wn @ hi + layer.b, wp @ hi + wn @ lo + layer.b
        if i < last:
            lo, hi = relu(lo), relu(hi)
    bound = np.maximum(np.abs(lo), np.abs(hi))
    if net.clip_bound is not None:
        bound = np.minimum(bound, net.clip_bound)
    return bound


@dataclass
class ConstraintCheck:
    name: str
    passed: bool
    measured: float
    limit: float


@dataclass
class ValidationReport:
    checks: list[ConstraintCheck] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> ConstraintCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.measured:g} (limit {c.limit:g})"
                 for c in self.checks]
        return "\n".join(lines + [f"note: {n}" for n in self.notes])


def validate(net: Network, cls: ArchitectureClass, input_box: tuple | None = None) -> ValidationReport:
    """Check class membership of ``net``; failures are report entries, not errors.

    The clipping layer, when present, is charged one extra layer, 2k units of
    width and 7k parameters.  The output bound is certified by a clipping layer
    with bound at most ``R``, or, failing that, by interval arithmetic over
    ``input_box`` when one is given.
    """
    report = ValidationReport()
    k = net.output_dim
    clipped = net.clip_bound is not None
    extra = clip_layer_cost(k) if clipped else {"depth": 0, "width": 0, "params": 0}
    if clipped:
        report.notes.append(
            f"clipping layer counted in budgets: +{extra['depth']} layer, "
            f"width {extra['width']}, +{extra['params']} parameters"
        )

    depth = net.depth + extra["depth"]
    report.checks.append(ConstraintCheck("depth", depth <= cls.L, depth, cls.L))

    width = max(net.widths[:-1] + [extra["width"], 0])
    report.checks.append(ConstraintCheck("width", width <= cls.p, width, cls.p))

    mags = [np.max(np.abs(l.w), initial=0.0) for l in net.layers]
    mags += [np.max(np.abs(l.b), initial=0.0) for l in net.layers]
    if clipped:
        mags += [1.0, net.clip_bound]
    magnitude = float(max(mags))
    report.checks.append(ConstraintCheck("magnitude", magnitude <= cls.kappa, magnitude, cls.kappa))

    nnz = count_nonzero(net) + extra["params"]
    report.checks.append(ConstraintCheck("sparsity", nnz <= cls.K, nnz, cls.K))

    if clipped:
        out = float(net.clip_bound)
        report.notes.append("output bound certified by clipping layer")
    elif input_box is not None:
        out = float(np.max(interval_bound(net, *input_box)))
        report.notes.append("output bound certified by interval arithmetic")
    else:
        out = math.inf
        report.notes.append("no clipping layer and no input box: output bound not certified")
    report.checks.append(ConstraintCheck("output_bound", out <= cls.R, out, cls.R))
    return report


def zero_network(input_dim: int, output_dim: int, hidden: Iterable[int] = (), bias_out=None,
                 clip_bound: float | None = None) -> Network:
    dims = [input_dim, *hidden, output_dim]
    layers = []
    for i in range(len(dims) - 1):
        b = np.zeros(dims[i + 1])
        if i == len(dims) - 2 and bias_out is not None:
            b = np.asarray(bias_out, dtype=float).reshape(-1)
        layers.append(Layer(np.zeros((dims[i + 1], dims[i])), b, np.ones((dims[i + 1], dims[i]), bool)))
    return Network(tuple(layers), clip_bound)


def random_network(rng: np.random.Generator, dims: Sequence[int], scale: float = 1.0,
                   density: float = 1.0, clip_bound: float | None = None) -> Network:
    """Gaussian weights on a random mask; mostly a test fixture."""
    layers = []
    for i in range(len(dims) - 1):
        shape = (dims[i + 1], dims[i])
        mask = rng.random(shape) < density
        w = np.where(mask, rng.normal(0.0, scale, shape), 0.0)
        b = rng.normal(0.0, scale, dims[i + 1])
        layers.append(Layer(w, b, mask))
    return Network(tuple(layers), clip_bound)


def to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "clip_bound": net.clip_bound,
        "layers": [
            {
                "w": [float(v) for v in layer.w.reshape(-1)],
                "b": [float(v) for v in layer.b],
                "mask": [int(v) for v in layer.mask.reshape(-1)],
            }
            for layer in net.layers
        ],
    }


def from_dict(doc: dict) -> Network:
    in_dim = int(doc["input_dim"])
    layers = []
    for entry in doc["layers"]:
        b = np.asarray(entry["b"], dtype=float)
        w = np.asarray(entry["w"], dtype=float).reshape(b.shape[0], in_dim)
        mask = np.asarray(entry["mask"], dtype=bool).reshape(w.shape)
        layers.append(Layer(w, b, mask))
        in_dim = b.shape[0]
    net = Network(tuple(layers), doc.get("clip_bound"))
    if net.output_dim != int(doc["output_dim"]):
        raise DimensionError("output_dim field disagrees with the layer shapes")
    return net


def save(net: Network, path) -> None:
    Path(path).write_text(json.dumps(to_dict(net)))


def load(path) -> Network:
    return from_dict(json.loads(Path(path).read_text()))
