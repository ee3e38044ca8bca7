"""Alternating projected-gradient training of the empirical GAN minimax problem.

The discriminator maximises ``|J|`` with
``J(f, g) = mean_i f(g(z_i)) - mean_j f(x_j)``; taking the absolute value is
the same as letting the class contain ``-f``.  The generator then descends
the same ``|J|``.  Gradients are computed by hand-written reverse mode through
the ReLU layers (and the clipping layer, when present).  After every update
the parameters are projected back into their architecture class.

Latent draws come either fresh from ``rho`` at every step ("population") or
from a fixed pool of ``m`` points.  The pool is never materialised: point ``i``
is a SplitMix64 hash of ``(seed, i)``, so pools of size ``n^2`` cost nothing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import approximator, relu_net, transport
from .errors import ConfigError, DimensionError, ParameterError, TrainingError
from .ipm import as_cloud
from .relu_net import ArchitectureClass, Layer, Network, clip_layer_cost, forward_trace

__all__ = [
    "TrainConfig",
    "TrainedGAN",
    "Gradients",
    "LatentPool",
    "gradients",
    "project",
    "objective",
    "init_network",
    "maximize_discriminator",
    "train",
    "warm_start_from_transport",
    "save_checkpoint",
    "write_history",
]


@dataclass(frozen=True)
class TrainConfig:
    gen_lr: float = 1e-3
    disc_lr: float = 1e-3
    disc_steps_per_gen: int = 5
    epochs: int = 100
    batch: int = 256
    m: int | str = "population"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not (self.gen_lr > 0 and self.disc_lr > 0):
            raise ConfigError("step sizes must be positive")
        if self.epochs < 1 or self.disc_steps_per_gen < 1 or self.batch < 1:
            raise ConfigError("epochs, disc_steps_per_gen and batch must be >= 1")
        if self.m != "population" and not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise ConfigError("m must be 'population' or a positive integer")


@dataclass
class TrainedGAN:
    generator: Network
    discriminator: Network
    history: list = field(default_factory=list)
    config: TrainConfig | None = None


@dataclass
class Gradients:
    """Reverse-mode derivatives of ``sum_i <upstream_i, net(x_i)>``."""

    weights: list
    biases: list
    inputs: np.ndarray


# ------------------------------------------------------------------ backprop

def gradients(net: Network, upstream, x) -> Gradients:
    """Exact gradients of ``sum_i upstream_i . net(x_i)`` (ReLU'(0) = 0).

    ``x`` has shape ``(n, input_dim)`` and ``upstream`` ``(n, output_dim)``.
    Masked weight entries get zero gradient.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if net.input_dim == 1 else x.reshape(1, -1)
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"expected inputs of dimension {net.input_dim}")
    g = np.asarray(upstream, dtype=float).reshape(x.shape[0], -1)
    if g.shape[1] != net.output_dim:
        raise DimensionError(f"upstream must have {net.output_dim} columns")
    pre, _ = forward_trace(net, x)
    if net.clip_bound is not None:
        a, R = pre[-1], net.clip_bound
        g = g * ((a + R > 0).astype(float) - (a - R > 0).astype(float))
    gw = [None] * net.depth
    gb = [None] * net.depth
    for i in range(net.depth - 1, -1, -1):
        h = x if i == 0 else np.maximum(pre[i - 1], 0.0)
        gw[i] = np.where(net.layers[i].mask, g.T @ h, 0.0)
        gb[i] = g.sum(axis=0)
        g = g @ net.layers[i].w
        if i > 0:
            g = g * (pre[i - 1] > 0)
    return Gradients(gw, gb, g)


def project(net: Network, cls: ArchitectureClass) -> Network:
    """Clamp parameters to ``[-kappa, kappa]``, keep masked entries at zero and
    the clipping bound at most ``R``.  If the nonzero count exceeds the class
    budget the smallest entries are pruned from the mask."""
    k = cls.kappa
    ws = [np.clip(w, -k, k) for w in net.weights]
    bs = [np.clip(b, -k, k) for b in net.biases]
    masks = [m.copy() for m in net.masks]
    clip_bound = net.clip_bound
    if clip_bound is not None and clip_bound > cls.R:
        clip_bound = float(cls.R)
    budget = cls.K - (clip_layer_cost(net.output_dim)["params"] if clip_bound is not None else 0)
    nnz = sum(int(np.count_nonzero(np.where(m, w, 0.0))) + int(np.count_nonzero(b))
              for w, b, m in zip(ws, bs, masks))
    if nnz > budget:
        mags = np.concatenate([np.abs(np.where(m, w, 0.0)).ravel() for w, m in zip(ws, masks)]
                              + [np.abs(b) for b in bs])
        keep = np.zeros(mags.size, bool)
        keep[np.argsort(-mags, kind="stable")[:max(budget, 0)]] = True
        pos = 0
        for i in range(len(ws)):
            sz = ws[i].size
            kw = keep[pos:pos + sz].reshape(ws[i].shape)
            masks[i] &= kw
            ws[i] = np.where(masks[i], ws[i], 0.0)
            pos += sz
        for i in range(len(bs)):
            sz = bs[i].size
            bs[i] = np.where(keep[pos:pos + sz], bs[i], 0.0)
            pos += sz
    layers = tuple(Layer(np.where(m, w, 0.0), b, m) for w, b, m in zip(ws, bs, masks))
    return Network(layers, clip_bound)


def objective(disc: Network, fake, real, weights_fake=None, weights_real=None) -> float:
    """``mean f(fake) - mean f(real)`` (weighted means when weights are given)."""
    f_fake = relu_net.forward(disc, np.asarray(fake, dtype=float))[:, 0]
    f_real = relu_net.forward(disc, np.asarray(real, dtype=float))[:, 0]
    a = f_fake.mean() if weights_fake is None else f_fake @ weights_fake
    b = f_real.mean() if weights_real is None else f_real @ weights_real
    return float(a - b)


# ------------------------------------------------------------------- helpers

class _Adam:
    def __init__(self, net: Network, cfg: TrainConfig, lr: float):
        self.lr, self.b1, self.b2, self.eps = lr, cfg.beta1, cfg.beta2, cfg.adam_eps
        self.m = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]
        self.v = [np.zeros_like(a) for a in self.m]
        self.t = 0

    def step(self, net: Network, grads: Gradients, sign: float) -> Network:
        """One Adam update in direction ``sign * grad`` (+1 ascends)."""
        self.t += 1
        params = list(net.weights) + list(net.biases)
        out = []
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for i, (p, g) in enumerate(zip(params, list(grads.weights) + list(grads.biases))):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            out.append(p + sign * self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        k = net.depth
        return net.with_params(out[:k], out[k:])


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class LatentPool:
    """``m`` fixed latent points in ``[0,1)^d``, generated on demand by hashing."""

    m: int
    d: int
    seed: int

    def points(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.uint64).reshape(-1)
        if np.any(idx >= np.uint64(self.m)):
            raise ParameterError("latent index out of range")
        key = _splitmix64(np.full(1, self.seed, dtype=np.uint64))[0]
        cols = []
        with np.errstate(over="ignore"):
            for j in range(self.d):
                h = _splitmix64(idx * np.uint64(self.d) + np.uint64(j) + key)
                cols.append((h >> np.uint64(11)).astype(float) * 2.0 ** -53)
        return np.stack(cols, axis=1)


def init_network(cls: ArchitectureClass, input_dim: int, output_dim: int, rng: np.random.Generator,
                 clip: bool = True, out_scale: float = 0.1) -> Network:
    """Random dense member of ``cls``: the deepest, then widest, dense shape
    whose depth, width and parameter count fit (clipping layer included)."""
    extra = clip_layer_cost(output_dim) if clip else {"depth": 0, "width": 0, "params": 0}
    depth_cap = cls.L - extra["depth"]
    budget = cls.K - extra["params"]
    if depth_cap < 1 or budget < input_dim * output_dim + output_dim or cls.p < extra["width"]:
        raise ParameterError("architecture class too small for the requested network")

    def params(depth, h):
        if depth == 1:
            return input_dim * output_dim + output_dim
        return input_dim * h + h + (depth - 2) * (h * h + h) + h * output_dim + output_dim

    shape = None
    for depth in range(depth_cap, 0, -1):
        fits = [h for h in range(1, cls.p + 1) if params(depth, h) <= budget]
        if depth == 1 or fits:
            shape = (depth, max(fits) if depth > 1 else 0)
            break
    depth, h = shape
    dims = [input_dim] + [h] * (depth - 1) + [output_dim]
    k = min(cls.kappa, 1.0)
    layers = []
    for i in range(depth):
        fan_in = dims[i]
        scale = out_scale if i == depth - 1 else math.sqrt(2.0 / fan_in)
        w = np.clip(rng.normal(0.0, scale, (dims[i + 1], fan_in)), -k, k)
        b = np.zeros(dims[i + 1]) if i == depth - 1 else rng.uniform(-0.5 * k, 0.5 * k, dims[i + 1])
        layers.append(Layer(w, b, np.ones(w.shape, bool)))
    return Network(tuple(layers), float(cls.R) if clip else None)


# -------------------------------------------------------------- discriminator

def _disc_direction(disc: Network, fake: np.ndarray, real: np.ndarray):
    """Gradients of J w.r.t. discriminator parameters, and J itself."""
    nf, nr = fake.shape[0], real.shape[0]
    gf = gradients(disc, np.full((nf, 1), 1.0 / nf), fake)
    gr = gradients(disc, np.full((nr, 1), 1.0 / nr), real)
    J = objective(disc, fake, real)
    return Gradients([a - b for a, b in zip(gf.weights, gr.weights)],
                     [a - b for a, b in zip(gf.biases, gr.biases)], None), J


def maximize_discriminator(a, b, cls: ArchitectureClass, cfg: TrainConfig, init: Network | None = None):
    """Projected Adam ascent on ``|mean f(a) - mean f(b)|`` over ``cls``.

    Runs ``cfg.epochs * cfg.disc_steps_per_gen`` full-batch steps and returns
    ``(best value, curve, best network)``.
    """
    a, b = as_cloud(a), as_cloud(b)
    rng = np.random.default_rng(cfg.seed)
    net = project(init, cls) if init is not None else init_network(cls, a.d, 1, rng)
    opt = _Adam(net, cfg, cfg.disc_lr)
    best, best_net, curve = -1.0, net, []
    for _ in range(cfg.epochs * cfg.disc_steps_per_gen):
        grads, J = _disc_direction(net, a.points, b.points)
        val = abs(J)
        curve.append(val)
        if val > best:
            best, best_net = val, net
        net = project(opt.step(net, grads, 1.0 if J >= 0 else -1.0), cls)
    val = abs(objective(net, a.points, b.points))
    curve.append(val)
    if val > best:
        best, best_net = val, net
    return float(best), curve, best_net


# ------------------------------------------------------------------- training

def _latent_sampler(rho, cfg: TrainConfig, rng: np.random.Generator):
    d = rho.d
    if cfg.m == "population":
        return lambda: transport.from_uniform(rho, rng.random((cfg.batch, d))).reshape(cfg.batch, d)
    pool = LatentPool(int(cfg.m), d, cfg.seed)
    if cfg.m <= cfg.batch:
        full = transport.from_uniform(rho, pool.points(np.arange(cfg.m))).reshape(cfg.m, d)
        return lambda: full
    return lambda: transport.from_uniform(
        rho, pool.points(rng.integers(0, cfg.m, cfg.batch))).reshape(cfg.batch, d)


def _finite(net: Network) -> bool:
    return all(np.all(np.isfinite(w)) for w in net.weights) and all(np.all(np.isfinite(b)) for b in net.biases)


def train(gen_class: ArchitectureClass, disc_class: ArchitectureClass, data, rho, cfg: TrainConfig,
          generator: Network | None = None, discriminator: Network | None = None,
          eval_fn: Callable[[Network], float] | None = None, eval_every: int = 1,
          callback: Callable[[int, Network, Network], None] | None = None) -> TrainedGAN:
    """Alternating minimax training; deterministic in ``cfg.seed``.

    Each epoch runs ``disc_steps_per_gen`` ascent steps on the discriminator
    then one descent step on the generator, both projected onto their classes.
    The history holds, per epoch, the batch objective seen by the generator
    step and ``eval_fn(generator)`` every ``eval_every`` epochs (NaN otherwise).
    ``callback(epoch, generator, discriminator)`` runs after each epoch.
    """
    data = as_cloud(data)
    d = data.d
    rng = np.random.default_rng(cfg.seed)
    gen = project(generator, gen_class) if generator is not None else \
        init_network(gen_class, rho.d, d, rng)
    disc = project(discriminator, disc_class) if discriminator is not None else \
        init_network(disc_class, d, 1, rng)
    if gen.input_dim != rho.d or gen.output_dim != d or disc.input_dim != d:
        raise DimensionError("network dimensions do not match the data and latent spaces")
    latent = _latent_sampler(rho, cfg, rng)
    real = data.points
    opt_d = _Adam(disc, cfg, cfg.disc_lr)
    opt_g = _Adam(gen, cfg, cfg.gen_lr)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        last = (gen, disc)
        for _ in range(cfg.disc_steps_per_gen):
            fake = relu_net.forward(gen, latent())
            grads, J = _disc_direction(disc, fake, real)
            disc = project(opt_d.step(disc, grads, 1.0 if J >= 0 else -1.0), disc_class)
        z = latent()
        fake = relu_net.forward(gen, z)
        J = objective(disc, fake, real)
        s = 1.0 if J >= 0 else -1.0
        # d|J| / d g(z_i) = s * grad_x f(g(z_i)) / batch
        up = gradients(disc, np.full((z.shape[0], 1), s / z.shape[0]), fake).inputs
        gen = project(opt_g.step(gen, gradients(gen, up, z), -1.0), gen_class)
        if not (_finite(gen) and _finite(disc) and math.isfinite(J)):
            raise TrainingError(f"non-finite parameters at epoch {epoch}", state=last)
        ev = float(eval_fn(gen)) if eval_fn is not None and (epoch % eval_every == 0 or epoch == cfg.epochs) \
            else math.nan
        history.append({"epoch": epoch, "objective": J, "eval_ipm": ev})
        if callback is not None:
            callback(epoch, gen, disc)
    return TrainedGAN(gen, disc, history, cfg)


# ---------------------------------------------------------------- warm start

class _Coordinate:
    """Coordinate ``i`` of a vector-valued map, as a scalar target for the approximator."""

    analytic_derivatives = False

    def __init__(self, T, i: int):
        self.T, self.i, self.d = T, i, T.d

    def __call__(self, x):
        return np.asarray(self.T(x)).reshape(-1, self.d)[:, self.i]


def warm_start_from_transport(T, plan: approximator.ApproxPlan, B: float = 1.0) -> Network:
    """Generator initialised at the constructive approximation of ``T``:
    one approximator network per output coordinate, stacked, then clipped to
    ``[-B, B]``; weights bounded by ``max(1, B)``."""
    kappa = max(1.0, B)
    if T.d == 1:
        nets = [approximator.approximate(T, plan, kappa)]
    else:
        nets = [approximator.approximate(_Coordinate(T, i), plan, kappa) for i in range(T.d)]
    net = nets[0] if len(nets) == 1 else approximator.stack_outputs(nets)
    return net.with_clip(float(B))


# ---------------------------------------------------------------- artifacts

def write_history(history: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "objective", "eval_ipm"])
        for row in history:
            w.writerow([row["epoch"], repr(float(row["objective"])), repr(float(row["eval_ipm"]))])


def save_checkpoint(result: TrainedGAN, directory) -> None:
    """Generator and discriminator weight files plus ``history.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    relu_net.save(result.generator, directory / "generator.json")
    relu_net.save(result.discriminator, directory / "discriminator.json")
    write_history(result.history, directory / "history.csv")
