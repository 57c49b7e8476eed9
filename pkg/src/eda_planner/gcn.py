"""Graph convolutional runtime predictor with hand-written backprop.

Two graph-convolution layers (256 and 128 units): each node mixes the
mean of its in-neighbors' previous-layer embeddings through one weight
matrix with its own previous embedding through a second, then applies
ReLU.  Sum-pooling over nodes feeds a 128-unit ReLU layer and a linear
head that emits the four runtimes (1/2/4/8 vCPUs) in z-scored target
space.  Everything is float64 and seeded, so training is reproducible
bit-for-bit.

Reductions over nodes are ordered canonically so predictions are exactly
invariant under node relabeling: neighbor sums gather rows by a
label-independent node color (nodes sharing a color provably carry
bit-identical embeddings), and pooling sums each column in sorted order.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConfigurationError,
    ContractViolation,
    ModelFormatError,
    StateError,
)
from .graphs import DesignGraph, FEATURE_DIM, SourceKind, build_features
from .stages import Stage, VCPU_OPTIONS

GCN_DIMS = (FEATURE_DIM, 256, 128)
FC_HIDDEN = 128
N_OUTPUTS = len(VCPU_OPTIONS)

DEFAULT_LR = 1e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAM_SHAPES: Dict[str, Tuple[int, ...]] = {
    "gcn_w1": (GCN_DIMS[0], GCN_DIMS[1]),
    "gcn_b1": (GCN_DIMS[0], GCN_DIMS[1]),
    "gcn_w2": (GCN_DIMS[1], GCN_DIMS[2]),
    "gcn_b2": (GCN_DIMS[1], GCN_DIMS[2]),
    "fc_w": (GCN_DIMS[2], FC_HIDDEN),
    "fc_b": (FC_HIDDEN,),
    "out_w": (FC_HIDDEN, N_OUTPUTS),
    "out_b": (N_OUTPUTS,),
}
PARAM_NAMES = tuple(PARAM_SHAPES)

AGGREGATION_MODES = ("in", "undirected")


@dataclass
class GcnModel:
    application: Stage
    seed: int
    params: Dict[str, np.ndarray]
    norm_mean: Optional[np.ndarray] = None  # set by train(); per-output z-score stats
    norm_std: Optional[np.ndarray] = None
    aggregation: str = "in"

    @property
    def is_trained(self) -> bool:
        return self.norm_mean is not None and self.norm_std is not None

    def check_shapes(self) -> None:
        for name, shape in PARAM_SHAPES.items():
            if name not in self.params or self.params[name].shape != shape:
                raise ContractViolation(f"parameter {name} missing or has wrong shape")
        if self.aggregation not in AGGREGATION_MODES:
            raise ContractViolation(f"unknown aggregation mode {self.aggregation!r}")
        if self.norm_std is not None and not np.all(self.norm_std > 0):
            raise ContractViolation("normalization std entries must be positive")


def init_model(application: Stage, seed: int, aggregation: str = "in") -> GcnModel:
    """Xavier-uniform weights, zero fc biases, all draws from one seeded RNG."""
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in PARAM_SHAPES.items():
        if len(shape) == 1:
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    model = GcnModel(application=application, seed=seed, params=params, aggregation=aggregation)
    model.check_shapes()
    return model


@dataclass
class TrainSample:
    graph: DesignGraph
    features: np.ndarray
    runtimes: Dict[int, float]  # vcpus -> seconds
    application: Optional[Stage] = None

    def __post_init__(self):
        if sorted(self.runtimes) != list(VCPU_OPTIONS):
            raise ContractViolation(
                f"runtimes must be keyed by {VCPU_OPTIONS}, got {sorted(self.runtimes)}"
            )
        for k, t in self.runtimes.items():
            if not t > 0:
                raise ContractViolation(f"runtime for {k} vCPUs must be positive, got {t}")
        if self.features.shape != (self.graph.node_count, FEATURE_DIM):
            raise ContractViolation("feature matrix does not match the graph")

    def target_vector(self) -> np.ndarray:
        return np.array([self.runtimes[k] for k in VCPU_OPTIONS], dtype=np.float64)


# ---------------------------------------------------------------------------
# Canonical aggregation structure.
#
# Exact permutation invariance needs every float sum to see the same
# operand sequence under any node relabeling.  Per-node neighbor sums
# gather edges ordered by (destination, source color), where colors are
# label-independent node ranks refined once per layer: nodes that share a
# color are guaranteed bit-identical embeddings at that layer, so order
# within a tie cannot matter.  The orders depend only on the graph and
# features, never on parameters, so they are precomputed and reused for
# every training step.


def _row_colors(rows: np.ndarray) -> np.ndarray:
    """Dense rank of each row by content; identical rows share a rank."""
    n = rows.shape[0]
    if n == 0 or rows.shape[1] == 0:
        return np.zeros(n, dtype=np.int64)
    flat = np.ascontiguousarray(rows)
    void = flat.view(np.dtype((np.void, flat.dtype.itemsize * flat.shape[1]))).ravel()
    return np.unique(void, return_inverse=True)[1].astype(np.int64)


def _wl_refine(color: np.ndarray, src: np.ndarray, dst: np.ndarray, n: int) -> np.ndarray:
    """One refinement round: new color = (own color, sorted in-neighbor colors)."""
    buckets: List[List[int]] = [[] for _ in range(n)]
    src_colors = color[src].tolist() if src.size else []
    for edge_pos, d in enumerate(dst.tolist()):
        buckets[d].append(src_colors[edge_pos])
    sigs = [(int(color[v]), tuple(sorted(buckets[v]))) for v in range(n)]
    rank = {sig: i for i, sig in enumerate(sorted(set(sigs)))}
    return np.array([rank[s] for s in sigs], dtype=np.int64)


@dataclass
class GraphCache:
    n: int
    src: np.ndarray
    dst: np.ndarray
    indeg: np.ndarray        # (n,) float in-degrees, zeros allowed
    seg_starts: np.ndarray   # segment boundaries in the dst-sorted edge order
    seg_targets: np.ndarray  # destination node per segment
    gather1: np.ndarray      # src node per edge, layer-1 canonical order
    gather2: np.ndarray      # src node per edge, layer-2 canonical order
    m0: np.ndarray           # cached mean-aggregated input features


def prepare_graph(graph: DesignGraph, features: np.ndarray, aggregation: str) -> GraphCache:
    src, dst = graph.edge_arrays()
    if aggregation == "undirected":
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    n = graph.node_count
    indeg = np.bincount(dst, minlength=n).astype(np.float64)

    color0 = _row_colors(features)
    order1 = np.lexsort((color0[src], dst)) if src.size else np.empty(0, dtype=np.int64)
    dst_sorted = dst[order1]
    seg_starts = (
        np.flatnonzero(np.r_[True, dst_sorted[1:] != dst_sorted[:-1]])
        if src.size
        else np.empty(0, dtype=np.int64)
    )
    seg_targets = dst_sorted[seg_starts] if src.size else np.empty(0, dtype=np.int64)

    color1 = _wl_refine(color0, src, dst, n)
    order2 = np.lexsort((color1[src], dst)) if src.size else order1
    gather1 = src[order1]
    gather2 = src[order2]

    cache = GraphCache(n, src, dst, indeg, seg_starts, seg_targets, gather1, gather2, None)
    cache.m0 = _segmented_mean(features, cache.gather1, cache)
    return cache


def _segmented_mean(h: np.ndarray, gather: np.ndarray, cache: GraphCache) -> np.ndarray:
    """Mean of in-neighbor rows per node; zero vector when there are none."""
    out = np.zeros((cache.n, h.shape[1]), dtype=np.float64)
    if gather.size == 0:
        return out
    sums = np.add.reduceat(h[gather], cache.seg_starts, axis=0)
    out[cache.seg_targets] = sums / cache.indeg[cache.seg_targets, None]
    return out


def _scatter_mean_grad(grad_out: np.ndarray, cache: GraphCache) -> np.ndarray:
    """Adjoint of the neighbor mean: route each node's gradient back to its
    in-neighbors, scaled by 1/in-degree."""
    grad_h = np.zeros_like(grad_out)
    if cache.src.size == 0:
        return grad_h
    scaled = grad_out[cache.dst] / cache.indeg[cache.dst, None]
    np.add.at(grad_h, cache.src, scaled)
    return grad_h


def _relu(x: np.ndarray) -> np.ndarray:
    # np.where keeps zeros positive, which canonical row ordering relies on
    return np.where(x > 0.0, x, 0.0)


def _sorted_column_sum(rows: np.ndarray) -> np.ndarray:
    """Column sums with each column reduced in its own sorted value order."""
    if rows.shape[0] <= 1:
        return rows.sum(axis=0)
    return np.sort(rows, axis=0).sum(axis=0)


@dataclass
class ForwardPass:
    """All intermediate activations needed by the backward pass."""

    x: np.ndarray
    cache: GraphCache
    m0: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    m1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    pooled: np.ndarray
    zh: np.ndarray
    hh: np.ndarray
    y_norm: np.ndarray
    prediction_s: Optional[np.ndarray]


def gcn_forward(
    model: GcnModel,
    graph: DesignGraph,
    features: Optional[np.ndarray] = None,
    activation: str = "relu",
    _cache: Optional[GraphCache] = None,
) -> ForwardPass:
    """Full forward pass.

    Returns node embeddings, the pooled graph vector and, when the model
    carries normalization stats, the prediction in seconds.  `activation`
    accepts "linear" as a test hook that disables the ReLUs.
    """
    model.check_shapes()
    x = build_features(graph) if features is None else np.asarray(features, dtype=np.float64)
    if x.shape != (graph.node_count, FEATURE_DIM):
        raise ContractViolation(
            f"features shape {x.shape} does not match graph with {graph.node_count} nodes"
        )
    if activation not in ("relu", "linear"):
        raise ContractViolation(f"unknown activation {activation!r}")
    act = _relu if activation == "relu" else (lambda v: v)

    p = model.params
    cache = _cache if _cache is not None else prepare_graph(graph, x, model.aggregation)

    m0 = cache.m0
    z1 = m0 @ p["gcn_w1"] + x @ p["gcn_b1"]
    h1 = act(z1)
    m1 = _segmented_mean(h1, cache.gather2, cache)
    z2 = m1 @ p["gcn_w2"] + h1 @ p["gcn_b2"]
    h2 = act(z2)
    pooled = _sorted_column_sum(h2) if h2.shape[0] else np.zeros(GCN_DIMS[2])
    zh = pooled @ p["fc_w"] + p["fc_b"]
    hh = act(zh)
    y_norm = hh @ p["out_w"] + p["out_b"]

    prediction = None
    if model.is_trained:
        prediction = y_norm * model.norm_std + model.norm_mean
        if not np.all(np.isfinite(prediction)):
            raise ContractViolation("forward pass produced non-finite predictions")
    return ForwardPass(x, cache, m0, z1, h1, m1, z2, h2, pooled, zh, hh, y_norm, prediction)


def normalize_targets(target_s: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (np.asarray(target_s, dtype=np.float64) - mean) / std


def mse_loss(
    prediction_s: Sequence[float],
    target_s: Sequence[float],
    norm: Tuple[np.ndarray, np.ndarray],
) -> float:
    """Mean squared error over the four outputs, in normalized target space."""
    mean, std = norm
    p = normalize_targets(np.asarray(prediction_s, dtype=np.float64), mean, std)
    t = normalize_targets(np.asarray(target_s, dtype=np.float64), mean, std)
    diff = p - t
    return float(np.mean(diff * diff))


def _loss_from_norm(y_norm: np.ndarray, t_norm: np.ndarray) -> float:
    diff = y_norm - t_norm
    return float(np.mean(diff * diff))


def gcn_backward(
    model: GcnModel,
    fwd: ForwardPass,
    target_s: np.ndarray,
    activation: str = "relu",
) -> Dict[str, np.ndarray]:
    """Exact gradients of the normalized MSE w.r.t. every parameter."""
    if not model.is_trained:
        raise StateError("backward pass needs normalization stats (set by train)")
    p = model.params
    t_norm = normalize_targets(target_s, model.norm_mean, model.norm_std)
    relu_mode = activation == "relu"

    def gate(z: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        # d(act(z)) = upstream where z > 0; broadcasts upstream if needed
        if relu_mode:
            return np.where(z > 0.0, upstream, 0.0)
        return np.broadcast_to(upstream, z.shape).copy() if upstream.shape != z.shape else upstream

    # loss = mean((y - t)^2) over the 4 outputs
    d_y = 2.0 * (fwd.y_norm - t_norm) / N_OUTPUTS

    grads: Dict[str, np.ndarray] = {}
    grads["out_w"] = np.outer(fwd.hh, d_y)
    grads["out_b"] = d_y.copy()
    d_hh = p["out_w"] @ d_y
    d_zh = gate(fwd.zh, d_hh)
    grads["fc_w"] = np.outer(fwd.pooled, d_zh)
    grads["fc_b"] = d_zh
    d_pooled = p["fc_w"] @ d_zh

    # pooled = sum over node rows of h2, so the pooled gradient broadcasts
    d_z2 = gate(fwd.z2, d_pooled)
    grads["gcn_w2"] = fwd.m1.T @ d_z2
    grads["gcn_b2"] = fwd.h1.T @ d_z2
    d_h1 = _scatter_mean_grad(d_z2 @ p["gcn_w2"].T, fwd.cache) + d_z2 @ p["gcn_b2"].T
    d_z1 = gate(fwd.z1, d_h1)
    grads["gcn_w1"] = fwd.m0.T @ d_z1
    grads["gcn_b1"] = fwd.x.T @ d_z1
    return grads


# ---------------------------------------------------------------------------
# Adam.  Moments live in one flat buffer with per-parameter views, which
# keeps the update a handful of vectorized passes.


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    lr: float = DEFAULT_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    _flat_m: Optional[np.ndarray] = None
    _flat_v: Optional[np.ndarray] = None
    _slices: Optional[Dict[str, Tuple[int, int]]] = None
    _scratch: Optional[Tuple[np.ndarray, ...]] = None

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], lr: float = DEFAULT_LR) -> "AdamState":
        total = sum(a.size for a in params.values())
        flat_m = np.zeros(total)
        flat_v = np.zeros(total)
        slices: Dict[str, Tuple[int, int]] = {}
        m: Dict[str, np.ndarray] = {}
        v: Dict[str, np.ndarray] = {}
        offset = 0
        for name, arr in params.items():
            end = offset + arr.size
            slices[name] = (offset, end)
            m[name] = flat_m[offset:end].reshape(arr.shape)
            v[name] = flat_v[offset:end].reshape(arr.shape)
            offset = end
        scratch = tuple(np.empty(total) for _ in range(3))
        return cls(m=m, v=v, lr=lr, _flat_m=flat_m, _flat_v=flat_v,
                   _slices=slices, _scratch=scratch)


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """Standard Adam update with bias correction; updates params in place."""
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise ContractViolation(f"gradient shape mismatch for {name}")
    if state._flat_m is None or set(grads) != set(state._slices):
        raise ContractViolation("AdamState must be built with AdamState.for_params")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step

    flat_g, tmp, denom = state._scratch
    for name, (start, end) in state._slices.items():
        flat_g[start:end] = np.asarray(grads[name]).reshape(-1)
    fm, fv = state._flat_m, state._flat_v
    fm *= state.beta1
    np.multiply(flat_g, 1.0 - state.beta1, out=tmp)
    fm += tmp
    fv *= state.beta2
    np.multiply(flat_g, flat_g, out=tmp)
    tmp *= 1.0 - state.beta2
    fv += tmp
    np.divide(fv, b2c, out=denom)
    np.sqrt(denom, out=denom)
    denom += state.eps
    np.divide(fm, denom, out=tmp)
    tmp *= state.lr / b1c
    for name, (start, end) in state._slices.items():
        params[name] -= tmp[start:end].reshape(params[name].shape)
    return params, state


# ---------------------------------------------------------------------------
# Training loop: one stochastic step per sample, epoch-shuffled.


def train(
    model: GcnModel,
    samples: Sequence[TrainSample],
    epochs: int = 200,
    lr: float = DEFAULT_LR,
) -> List[float]:
    """Train in place; returns the per-epoch mean loss history.

    Normalization stats are computed from the full sample set before the
    first epoch.  The epoch shuffle comes from the model seed, so the
    same (seed, dataset, epochs) always produces the same model bytes.
    """
    if not samples:
        raise ConfigurationError("training dataset is empty")
    for s in samples:
        if s.application is not None and s.application is not model.application:
            raise ConfigurationError(
                f"sample for {s.application.value} mixed into a "
                f"{model.application.value} training run"
            )
    targets = np.stack([s.target_vector() for s in samples])
    model.norm_mean = targets.mean(axis=0)
    std = targets.std(axis=0)
    std[std == 0.0] = 1.0
    model.norm_std = std
    model.check_shapes()

    prepared = [
        (s, prepare_graph(s.graph, s.features, model.aggregation), s.target_vector())
        for s in samples
    ]

    state = AdamState.for_params(model.params, lr=lr)
    rng = np.random.default_rng(model.seed)
    history: List[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(prepared))
        total = 0.0
        for idx in order:
            sample, cache, target = prepared[idx]
            fwd = gcn_forward(model, sample.graph, sample.features, _cache=cache)
            t_norm = normalize_targets(target, model.norm_mean, model.norm_std)
            total += _loss_from_norm(fwd.y_norm, t_norm)
            grads = gcn_backward(model, fwd, target)
            adam_step(model.params, grads, state)
        history.append(total / len(prepared))
    return history


def predict_runtimes(model: GcnModel, graph: DesignGraph) -> Dict[int, int]:
    """Predicted runtimes in whole seconds for 1/2/4/8 vCPUs, each >= 1.

    The model must be trained, and the graph's source kind must match the
    application (AIG for synthesis, netlist graphs otherwise).
    """
    if not model.is_trained:
        raise StateError("model has no normalization stats; train or load a trained model")
    expected = SourceKind.AIG if model.application is Stage.SYNTHESIS else SourceKind.NETLIST
    if graph.source_kind is not expected:
        raise ConfigurationError(
            f"{model.application.value} model expects a {expected.value}-sourced graph, "
            f"got {graph.source_kind.value}"
        )
    fwd = gcn_forward(model, graph)
    seconds = np.maximum(np.rint(fwd.prediction_s), 1.0).astype(np.int64)
    return {k: int(seconds[i]) for i, k in enumerate(VCPU_OPTIONS)}


# ---------------------------------------------------------------------------
# Versioned binary model container.  Layout documented in docs/model-format.md.

_MAGIC = b"EDAGCNMF"
_VERSION = 1
_STAGE_CODE = {s: i for i, s in enumerate(Stage)}
_CODE_STAGE = {i: s for s, i in _STAGE_CODE.items()}
_AGG_CODE = {mode: i for i, mode in enumerate(AGGREGATION_MODES)}
_CODE_AGG = {i: mode for mode, i in _AGG_CODE.items()}


def save_model(model: GcnModel, path) -> None:
    model.check_shapes()
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<I", _VERSION)
    out += struct.pack(
        "<BBBB", _STAGE_CODE[model.application], _AGG_CODE[model.aggregation],
        1 if model.is_trained else 0, 0,
    )
    out += struct.pack("<q", model.seed)
    mean = model.norm_mean if model.is_trained else np.zeros(N_OUTPUTS)
    std = model.norm_std if model.is_trained else np.ones(N_OUTPUTS)
    out += np.asarray(mean, dtype="<f8").tobytes()
    out += np.asarray(std, dtype="<f8").tobytes()
    for name in PARAM_NAMES:
        arr = model.params[name]
        out += struct.pack("<II", arr.shape[0], arr.shape[1] if arr.ndim == 2 else 0)
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_model(path) -> GcnModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 8:
        raise ModelFormatError("file too short to be a model")
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ModelFormatError("bad magic bytes; not a model file")
    (version,) = struct.unpack_from("<I", blob, len(_MAGIC))
    if version != _VERSION:
        raise ModelFormatError(f"unsupported model version {version} (expected {_VERSION})")
    payload, (crc_stored,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != crc_stored:
        raise ModelFormatError("model file is corrupt (checksum mismatch)")

    off = len(_MAGIC) + 4
    try:
        app_code, agg_code, trained, _pad = struct.unpack_from("<BBBB", payload, off)
        off += 4
        (seed,) = struct.unpack_from("<q", payload, off)
        off += 8
        mean = np.frombuffer(payload, dtype="<f8", count=N_OUTPUTS, offset=off).copy()
        off += 8 * N_OUTPUTS
        std = np.frombuffer(payload, dtype="<f8", count=N_OUTPUTS, offset=off).copy()
        off += 8 * N_OUTPUTS
        params: Dict[str, np.ndarray] = {}
        for name in PARAM_NAMES:
            rows, cols = struct.unpack_from("<II", payload, off)
            off += 8
            count = rows * (cols if cols else 1)
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=off).copy()
            off += 8 * count
            params[name] = arr.reshape((rows, cols) if cols else (rows,))
    except (struct.error, ValueError) as exc:
        raise ModelFormatError(f"truncated or corrupt model file: {exc}") from None
    if off != len(payload):
        raise ModelFormatError("model file has trailing bytes")

    if app_code not in _CODE_STAGE or agg_code not in _CODE_AGG:
        raise ModelFormatError("unknown application or aggregation code")
    model = GcnModel(
        application=_CODE_STAGE[app_code],
        seed=seed,
        params=params,
        norm_mean=mean if trained else None,
        norm_std=std if trained else None,
        aggregation=_CODE_AGG[agg_code],
    )
    model.check_shapes()
    return model
