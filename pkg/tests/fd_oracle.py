"""Finite-difference gradient oracle.

Deliberately independent of the production forward implementation: the
neighbor mean is a dense matrix built straight from the edge list and
every perturbed quantity is recomputed from the plain layer formulas.
For speed, perturbations are batched along a leading axis and values a
perturbation cannot touch (e.g. the other pre-activation columns when
one weight column is nudged) are reused bitwise; nothing is derived
from gradients.  `fd_gradients_slow` is the same oracle without any
reuse, used to spot-check the fast path.
"""

import numpy as np

from eda_planner.gcn import GcnModel, PARAM_NAMES
from eda_planner.graphs import DesignGraph, build_features


def dense_mean_matrix(graph: DesignGraph, aggregation: str = "in") -> np.ndarray:
    n = graph.node_count
    a = np.zeros((n, n))
    src, dst = graph.edge_arrays()
    if aggregation == "undirected":
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    for s, d in zip(src.tolist(), dst.tolist()):
        a[d, s] += 1.0
    indeg = a.sum(axis=1)
    rows = indeg > 0
    a[rows] /= indeg[rows, None]
    return a


def _relu(x):
    return np.maximum(x, 0.0)


class _Scenario:
    """One (model, graph, target) evaluation context with its base pass."""

    def __init__(self, model: GcnModel, graph: DesignGraph, target_s):
        self.p = model.params
        self.x = build_features(graph)
        self.a = dense_mean_matrix(graph, model.aggregation)
        self.t_norm = (
            np.asarray(target_s, dtype=np.float64) - model.norm_mean
        ) / model.norm_std
        p = self.p
        self.m0 = self.a @ self.x
        self.z1 = self.m0 @ p["gcn_w1"] + self.x @ p["gcn_b1"]
        self.h1 = _relu(self.z1)
        self.m1 = self.a @ self.h1
        self.z2 = self.m1 @ p["gcn_w2"] + self.h1 @ p["gcn_b2"]
        self.h2 = _relu(self.z2)
        self.pooled = self.h2.sum(axis=0)
        self.zh_base_term = self.pooled @ p["fc_w"]  # excludes fc_b

    def loss_from_zh(self, zh):
        hh = _relu(zh)
        y = np.matmul(hh, self.p["out_w"]) + self.p["out_b"]
        d = y - self.t_norm
        return (d * d).mean(axis=-1)

    def loss_from_pooled(self, pooled):
        return self.loss_from_zh(np.matmul(pooled, self.p["fc_w"]) + self.p["fc_b"])

    def loss_from_z1(self, z1):
        h1 = _relu(z1)
        m1 = np.matmul(self.a, h1)
        z2 = np.matmul(m1, self.p["gcn_w2"]) + np.matmul(h1, self.p["gcn_b2"])
        h2 = _relu(z2)
        return self.loss_from_pooled(h2.sum(axis=-2))


def _layer1_grads(sc: _Scenario, name, h, chunk=128):
    arr = sc.p[name]
    grad = np.empty(arr.size)
    for start in range(0, arr.size, chunk):
        idx = np.arange(start, min(start + chunk, arr.size))
        b = idx.size
        stack = np.repeat(arr[None], 2 * b, axis=0)
        flat = stack.reshape(2 * b, -1)
        flat[np.arange(b), idx] += h
        flat[np.arange(b) + b, idx] -= h
        if name == "gcn_w1":
            z1 = np.matmul(sc.m0, stack) + sc.x @ sc.p["gcn_b1"]
        else:
            z1 = sc.m0 @ sc.p["gcn_w1"] + np.matmul(sc.x, stack)
        losses = sc.loss_from_z1(z1)
        grad[idx] = (losses[:b] - losses[b:]) / (2.0 * h)
    return grad.reshape(arr.shape)


def _layer2_grads(sc: _Scenario, name, h):
    # Perturbing column b of gcn_w2 / gcn_b2 only moves pre-activation
    # column b; recompute that column from its own formula and keep the
    # untouched columns of the base pass.
    arr = sc.p[name]
    rows, cols = arr.shape
    grad = np.empty((rows, cols))
    eye = np.eye(rows)
    for b in range(cols):
        w2_col = sc.p["gcn_w2"][:, b]
        b2_col = sc.p["gcn_b2"][:, b]
        col_stack = np.concatenate([
            (arr[:, b][None, :] + h * eye),
            (arr[:, b][None, :] - h * eye),
        ])  # (2*rows, rows)
        if name == "gcn_w2":
            z2_col = col_stack @ sc.m1.T + sc.h1 @ b2_col
        else:
            z2_col = col_stack @ sc.h1.T + sc.m1 @ w2_col
        pooled = np.repeat(sc.pooled[None], 2 * rows, axis=0)
        pooled[:, b] = _relu(z2_col).sum(axis=1)
        losses = sc.loss_from_pooled(pooled)
        grad[:, b] = (losses[:rows] - losses[rows:]) / (2.0 * h)
    return grad


def _fc_w_grads(sc: _Scenario, h):
    arr = sc.p["fc_w"]
    rows, cols = arr.shape
    grad = np.empty((rows, cols))
    eye = np.eye(rows)
    zh_base = sc.zh_base_term + sc.p["fc_b"]
    for b in range(cols):
        col_stack = np.concatenate([
            (arr[:, b][None, :] + h * eye),
            (arr[:, b][None, :] - h * eye),
        ])
        zh = np.repeat(zh_base[None], 2 * rows, axis=0)
        zh[:, b] = col_stack @ sc.pooled + sc.p["fc_b"][b]
        losses = sc.loss_from_zh(zh)
        grad[:, b] = (losses[:rows] - losses[rows:]) / (2.0 * h)
    return grad


def _fc_b_grads(sc: _Scenario, h):
    n = sc.p["fc_b"].size
    stack = np.repeat(sc.p["fc_b"][None], 2 * n, axis=0)
    stack[np.arange(n), np.arange(n)] += h
    stack[np.arange(n) + n, np.arange(n)] -= h
    losses = sc.loss_from_zh(sc.zh_base_term + stack)
    return (losses[:n] - losses[n:]) / (2.0 * h)


def _head_grads(sc: _Scenario, name, h):
    arr = sc.p[name]
    size = arr.size
    stack = np.repeat(arr[None], 2 * size, axis=0)
    flat = stack.reshape(2 * size, -1)
    flat[np.arange(size), np.arange(size)] += h
    flat[np.arange(size) + size, np.arange(size)] -= h
    hh = _relu(sc.zh_base_term + sc.p["fc_b"])
    if name == "out_w":
        y = np.matmul(hh, stack) + sc.p["out_b"]
    else:
        y = hh @ sc.p["out_w"] + stack
    d = y - sc.t_norm
    losses = (d * d).mean(axis=-1)
    return ((losses[:size] - losses[size:]) / (2.0 * h)).reshape(arr.shape)


def fd_gradients(model: GcnModel, graph: DesignGraph, target_s, h=1e-6):
    """Central-difference gradient of the normalized MSE for every scalar
    parameter."""
    sc = _Scenario(model, graph, target_s)
    return {
        "gcn_w1": _layer1_grads(sc, "gcn_w1", h),
        "gcn_b1": _layer1_grads(sc, "gcn_b1", h),
        "gcn_w2": _layer2_grads(sc, "gcn_w2", h),
        "gcn_b2": _layer2_grads(sc, "gcn_b2", h),
        "fc_w": _fc_w_grads(sc, h),
        "fc_b": _fc_b_grads(sc, h),
        "out_w": _head_grads(sc, "out_w", h),
        "out_b": _head_grads(sc, "out_b", h),
    }


def fd_gradients_slow(model: GcnModel, graph: DesignGraph, target_s, h=1e-6, sample=None):
    """Scalar-at-a-time central differences with zero reuse: every
    evaluation reruns the whole forward pass.  `sample` optionally limits
    the check to {name: [flat indices]} for runtime."""
    x = build_features(graph)
    a = dense_mean_matrix(graph, model.aggregation)
    t_norm = (np.asarray(target_s, dtype=np.float64) - model.norm_mean) / model.norm_std

    def loss(params):
        m0 = a @ x
        z1 = m0 @ params["gcn_w1"] + x @ params["gcn_b1"]
        h1 = _relu(z1)
        m1 = a @ h1
        z2 = m1 @ params["gcn_w2"] + h1 @ params["gcn_b2"]
        pooled = _relu(z2).sum(axis=0)
        hh = _relu(pooled @ params["fc_w"] + params["fc_b"])
        y = hh @ params["out_w"] + params["out_b"]
        d = y - t_norm
        return float((d * d).mean())

    grads = {}
    for name, arr in model.params.items():
        indices = sample.get(name, []) if sample is not None else range(arr.size)
        grad = np.zeros(arr.size)
        for i in indices:
            work = {k: v.copy() for k, v in model.params.items()}
            work[name].reshape(-1)[i] += h
            lp = loss(work)
            work[name].reshape(-1)[i] -= 2 * h
            lm = loss(work)
            grad[i] = (lp - lm) / (2.0 * h)
        grads[name] = grad.reshape(arr.shape)
    return grads


def max_relative_error(analytic, fd, floor=1e-5):
    """Worst elementwise |a-f| / max(|a|, |f|, floor) over all parameters.

    The floor compares near-zero gradients absolutely: below it, 1e-4
    relative corresponds to an absolute difference under 1e-9.
    """
    worst = 0.0
    for name, a in analytic.items():
        f = fd[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float((np.abs(a - f) / denom).max()))
    return worst
