"""Finite-difference gradient checks shared by the training and acceptance tests."""

import numpy as np

from holdergan import gan_train as gt
from holdergan import relu_net as rn


def scalar_objective(net, x, up):
    return float(np.sum(up * rn.forward(net, x)))


def kink_distance(net, x):
    pre, _ = rn.forward_trace(net, x)
    dist = min(np.min(np.abs(p)) for p in pre[:-1]) if len(pre) > 1 else np.inf
    if net.clip_bound is not None:
        R = net.clip_bound
        dist = min(dist, np.min(np.abs(np.abs(pre[-1]) - R)))
    return dist


def fd_relative_errors(net, x, up, h=1e-6):
    g = gt.gradients(net, up, x)
    errs = []
    for i, layer in enumerate(net.layers):
        for kind, arr, grad in (("w", layer.w, g.weights[i]), ("b", layer.b, g.biases[i])):
            for idx in np.ndindex(arr.shape):
                if kind == "w" and not layer.mask[idx]:
                    continue
                shifted = []
                for s in (h, -h):
                    ws = [l.w.copy() for l in net.layers]
                    bs = [l.b.copy() for l in net.layers]
                    (ws if kind == "w" else bs)[i][idx] += s
                    shifted.append(scalar_objective(net.with_params(ws, bs), x, up))
                fd = (shifted[0] - shifted[1]) / (2 * h)
                an = grad[idx]
                errs.append(abs(an - fd) / max(abs(an), abs(fd), 1e-4))
    return errs


def random_config(rng):
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, 4))] + [int(rng.integers(2, 6)) for _ in range(depth - 1)] + [int(rng.integers(1, 3))]
    clip = float(rng.uniform(0.5, 2.0)) if rng.random() < 0.5 else None
    net = rn.random_network(rng, dims, scale=1.0, density=0.8, clip_bound=clip)
    x = rng.normal(size=(3, dims[0]))
    up = rng.normal(size=(3, dims[-1]))
    return net, x, up
