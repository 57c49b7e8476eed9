"""Synthetic designs and ground-truth runtimes for training and validation.

Random layered DAGs (and-inverter style, fan-in <= 2) stand in for
synthesis inputs; random netlists expanded with the star model stand in
for the physical stages.  Runtimes follow an Amdahl-style model: the
1-vCPU time is linear in node and edge counts, and k vCPUs divide the
parallel fraction.  The serial fraction shrinks with design size, so
small designs stop scaling early while large ones keep speeding up.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ContractViolation, ParseError
from .gcn import TrainSample
from .graphs import (
    DesignGraph,
    NodeKind,
    SourceKind,
    build_features,
    dump_graph,
    load_graph_file,
    make_graph,
)
from .netlist import CellInst, Net, Netlist, Port, PortDir, star_expand
from .stages import Stage, VCPU_OPTIONS

SIZE_CLASSES = ("small", "medium", "large")
_SIZE_TARGET = {"small": 100, "medium": 1000, "large": 10000}

# Serial fraction by size class: small designs are dominated by serial
# work and stop scaling, large designs parallelize well.
SERIAL_FRACTION_BY_SIZE = {"small": 0.5, "medium": 0.2, "large": 0.05}


@dataclass(frozen=True)
class OracleParams:
    application: Stage
    node_cost_s: float      # seconds per node in the 1-vCPU runtime
    edge_cost_s: float      # seconds per edge
    base_cost_s: float      # fixed overhead seconds
    serial_fraction: float  # Amdahl serial fraction, in (0, 1]
    noise_rel: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.node_cost_s < 0 or self.edge_cost_s < 0 or self.base_cost_s < 0:
            raise ContractViolation("cost coefficients must be non-negative")
        if self.node_cost_s + self.edge_cost_s <= 0:
            raise ContractViolation("at least one of node/edge cost must be positive")
        if not 0.0 < self.serial_fraction <= 1.0:
            raise ContractViolation("serial_fraction must be in (0, 1]")
        if self.noise_rel < 0:
            raise ContractViolation("noise_rel must be >= 0")


_BASE_COEFFS = {
    Stage.SYNTHESIS: (2.0, 1.0, 50.0),
    Stage.PLACEMENT: (1.0, 2.5, 100.0),
    Stage.ROUTING: (3.0, 6.0, 200.0),
    Stage.STA: (0.2, 0.4, 20.0),
}


def default_params(
    application: Stage,
    size_class: str = "small",
    noise_rel: float = 0.05,
    seed: int = 0,
) -> OracleParams:
    node_c, edge_c, base_c = _BASE_COEFFS[application]
    return OracleParams(
        application=application,
        node_cost_s=node_c,
        edge_cost_s=edge_c,
        base_cost_s=base_c,
        serial_fraction=SERIAL_FRACTION_BY_SIZE[size_class],
        noise_rel=noise_rel,
        seed=seed,
    )


def gen_graph(seed: int, size_class: str, source_kind: SourceKind = SourceKind.AIG) -> DesignGraph:
    """Deterministic random design of roughly the size class's node count."""
    if size_class not in SIZE_CLASSES:
        raise ContractViolation(f"size_class must be one of {SIZE_CLASSES}")
    rng = np.random.default_rng([seed, _SIZE_TARGET[size_class]])
    target = int(rng.integers(int(0.85 * _SIZE_TARGET[size_class]),
                              int(1.15 * _SIZE_TARGET[size_class]) + 1))
    if source_kind is SourceKind.AIG:
        return _gen_aig_like(rng, target, f"syn{size_class[0]}{seed}")
    return _gen_netlist_like(rng, target, f"net{size_class[0]}{seed}")


def _gen_aig_like(rng: np.random.Generator, target: int, name: str) -> DesignGraph:
    n_in = max(2, round(0.15 * target))
    n_out = max(1, round(0.05 * target))
    # Inverters are inserted on ~10% of fan-ins, so discount the AND budget.
    n_and = max(1, round((target - n_in - n_out) / 1.2))

    nodes: List[Tuple[str, NodeKind]] = [(f"i{k}", NodeKind.PRIMARY_INPUT) for k in range(n_in)]
    edges: List[Tuple[int, int]] = []
    drivable: List[int] = list(range(n_in))
    inv_serial = 0

    for g in range(n_and):
        gate = len(nodes)
        nodes.append((f"a{g}", NodeKind.AND_GATE))
        for pick in rng.choice(len(drivable), size=2, replace=False):
            src = drivable[int(pick)]
            if rng.random() < 0.1:
                inv = len(nodes)
                nodes.append((f"v{inv_serial}", NodeKind.INVERTER))
                inv_serial += 1
                edges.append((src, inv))
                src = inv
            edges.append((src, gate))
        drivable.append(gate)

    gate_indices = [i for i, (_, kind) in enumerate(nodes) if kind is NodeKind.AND_GATE]
    for k in range(n_out):
        po = len(nodes)
        nodes.append((f"o{k}", NodeKind.PRIMARY_OUTPUT))
        driver = gate_indices[int(rng.integers(len(gate_indices)))] if gate_indices else 0
        edges.append((driver, po))
    return make_graph(name, nodes, edges, SourceKind.AIG)


def _gen_netlist_like(rng: np.random.Generator, target: int, name: str) -> DesignGraph:
    n_in = max(2, round(0.1 * target))
    n_out = max(1, round(0.05 * target))
    n_cell = max(1, target - n_in - n_out)

    ports = [Port(f"p{k}", PortDir.IN) for k in range(n_in)]
    ports += [Port(f"q{k}", PortDir.OUT) for k in range(n_out)]
    cells = [CellInst(f"u{k}", f"T{int(rng.integers(8))}") for k in range(n_cell)]
    cell_ids = [c.id for c in cells]

    nets: List[Net] = []
    drivers = [p.id for p in ports if p.direction is PortDir.IN] + cell_ids
    for driver in drivers:
        # Fan-out roughly geometric, occasionally 0 (dangling net).
        fanout = int(rng.geometric(0.55)) - 1
        sinks = []
        for i in rng.integers(0, n_cell, size=fanout):
            sink = cell_ids[int(i)]
            if sink != driver:  # combinational cells never feed themselves
                sinks.append(sink)
        nets.append(Net(driver, tuple(sinks)))
    # Every output port sinks exactly one net.
    for k in range(n_out):
        drv = cell_ids[int(rng.integers(n_cell))]
        nets.append(Net(drv, (f"q{k}",)))

    netlist = Netlist(name, tuple(cells), tuple(ports), tuple(nets))
    return star_expand(netlist)


def oracle_runtime(
    graph: DesignGraph,
    params: OracleParams,
    vcpus: int,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Ground-truth runtime in seconds for one (design, machine size) pair.

    t_1 = base + node_cost*|V| + edge_cost*|E|; running on k vCPUs keeps
    the serial fraction and divides the rest by k, then relative noise is
    applied and the result is clamped to >= 1 s.
    """
    if vcpus not in VCPU_OPTIONS:
        raise ContractViolation(f"vcpus must be one of {VCPU_OPTIONS}, got {vcpus}")
    t1 = params.base_cost_s + params.node_cost_s * graph.node_count \
        + params.edge_cost_s * graph.edge_count
    f = params.serial_fraction
    scaled = round(t1 * (f + (1.0 - f) / vcpus))
    if params.noise_rel > 0:
        if rng is None:
            rng = np.random.default_rng(
                [params.seed, graph.node_count, graph.edge_count, vcpus]
            )
        eps = rng.uniform(-params.noise_rel, params.noise_rel)
    else:
        eps = 0.0
    return max(1.0, scaled * (1.0 + eps))


@dataclass
class SyntheticDataset:
    samples: List[TrainSample]
    params: OracleParams
    train_indices: List[int]
    test_indices: List[int]
    graph_seeds: List[int]

    def train_samples(self) -> List[TrainSample]:
        return [self.samples[i] for i in self.train_indices]

    def test_samples(self) -> List[TrainSample]:
        return [self.samples[i] for i in self.test_indices]


def gen_dataset(
    n_graphs: int,
    params: OracleParams,
    seed: int,
    size_class: str = "small",
) -> SyntheticDataset:
    """n_graphs labeled designs with a design-disjoint 80/20 split.

    Each design carries four runtime labels (one per machine size), so the
    dataset holds 4*n_graphs data points.  Fully deterministic per seed.
    """
    if n_graphs < 10:
        raise ConfigurationError(f"need at least 10 graphs for a meaningful split, got {n_graphs}")
    kind = SourceKind.AIG if params.application is Stage.SYNTHESIS else SourceKind.NETLIST
    samples: List[TrainSample] = []
    graph_seeds: List[int] = []
    for i in range(n_graphs):
        graph_seed = seed * 1_000_003 + i
        graph = gen_graph(graph_seed, size_class, kind)
        noise_rng = np.random.default_rng([params.seed, seed, i])
        runtimes = {
            k: oracle_runtime(graph, params, k, rng=noise_rng) for k in VCPU_OPTIONS
        }
        samples.append(
            TrainSample(graph, build_features(graph), runtimes, application=params.application)
        )
        graph_seeds.append(graph_seed)

    split_rng = np.random.default_rng([seed, n_graphs])
    order = list(split_rng.permutation(n_graphs))
    n_train = round(0.8 * n_graphs)
    return SyntheticDataset(
        samples=samples,
        params=params,
        train_indices=sorted(int(i) for i in order[:n_train]),
        test_indices=sorted(int(i) for i in order[n_train:]),
        graph_seeds=graph_seeds,
    )


# ---------------------------------------------------------------------------
# On-disk form: graph dumps plus JSON-lines sample records.


def write_dataset(dataset: SyntheticDataset, outdir) -> Tuple[Path, Path]:
    """Write graphs/ dumps plus train.jsonl / test.jsonl; returns the two paths."""
    outdir = Path(outdir)
    (outdir / "graphs").mkdir(parents=True, exist_ok=True)
    rel_paths: List[str] = []
    for i, sample in enumerate(dataset.samples):
        rel = os.path.join("graphs", f"g{i:05d}.graph")
        with open(outdir / rel, "w", encoding="utf-8") as fh:
            fh.write(dump_graph(sample.graph))
        rel_paths.append(rel)

    def write_split(name: str, indices: Sequence[int]) -> Path:
        path = outdir / f"{name}.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for i in indices:
                sample = dataset.samples[i]
                record = {
                    "graph": rel_paths[i],
                    "application": sample.application.value,
                    "runtimes": {str(k): sample.runtimes[k] for k in VCPU_OPTIONS},
                }
                fh.write(json.dumps(record) + "\n")
        return path

    return write_split("train", dataset.train_indices), write_split("test", dataset.test_indices)


def load_samples(jsonl_path) -> List[TrainSample]:
    """Read a JSONL dataset; graph paths are relative to the JSONL's directory."""
    jsonl_path = Path(jsonl_path)
    base = jsonl_path.parent
    samples: List[TrainSample] = []
    with open(jsonl_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                graph = load_graph_file(base / record["graph"])
                application = Stage.from_name(record["application"])
                runtimes = {int(k): float(v) for k, v in record["runtimes"].items()}
            except (KeyError, ValueError, TypeError, OSError, ParseError) as exc:
                raise ConfigurationError(f"{jsonl_path}:{lineno}: bad sample record: {exc}") from None
            samples.append(
                TrainSample(graph, build_features(graph), runtimes, application=application)
            )
    if not samples:
        raise ConfigurationError(f"{jsonl_path}: dataset is empty")
    return samples
