"""Multi-choice knapsack deployment optimizer.

One machine configuration must be chosen per flow stage so that the total
runtime fits a deadline.  The default objective maximizes the sum of
reciprocal stage costs (each stage contributes 1/p for its chosen
configuration); a min-total-cost mode is available behind a flag.  Both
are solved exactly by a pseudo-polynomial dynamic program over the
capacity axis in whole seconds, plus a brute-force enumerator used as a
test oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ContractViolation, StateError, ValidationError
from .pricing import PricingTable, job_cost, recommend_family
from .stages import Stage, VCPU_OPTIONS

# Guard for the DP capacity axis; memory grows linearly with the deadline.
MAX_CAPACITY_S = 10**7
ORACLE_MAX_ASSIGNMENTS = 10**6


class Objective(Enum):
    # Maximize sum of 1/cost over chosen configurations (default).
    RECIPROCAL_COST = "reciprocal"
    # Maximize sum of -cost, i.e. minimize total cost.
    MIN_TOTAL_COST = "min-cost"


@dataclass(frozen=True)
class Choice:
    vcpus: int
    runtime_s: int
    cost: float


@dataclass(frozen=True)
class StageChoices:
    stage: Stage
    choices: Tuple[Choice, ...]


@dataclass(frozen=True)
class MckpInstance:
    stages: Tuple[StageChoices, ...]
    capacity_s: int


@dataclass(frozen=True)
class DeploymentPlan:
    feasible: bool
    selection: Dict[Stage, int]  # stage -> chosen vcpus; empty when infeasible
    chosen: Tuple[int, ...]  # choice index per stage position (robust to
    # repeated stage labels in synthetic instances)
    total_runtime_s: int
    total_cost: float
    objective_value: float
    objective: Objective


def validate_instance(instance: MckpInstance) -> None:
    if instance.capacity_s < 0:
        raise ValidationError(f"capacity must be non-negative, got {instance.capacity_s}")
    if instance.capacity_s > MAX_CAPACITY_S:
        raise ContractViolation(
            f"capacity {instance.capacity_s}s exceeds the {MAX_CAPACITY_S}s DP guard"
        )
    if not instance.stages:
        raise ValidationError("instance has no stages")
    for sc in instance.stages:
        if not sc.choices:
            raise ValidationError(f"stage {sc.stage.value} has no choices")
        if len(sc.choices) > 127:
            raise ContractViolation(f"stage {sc.stage.value} has too many choices")
        seen = set()
        for ch in sc.choices:
            if not (isinstance(ch.runtime_s, int) and ch.runtime_s > 0):
                raise ValidationError(
                    f"stage {sc.stage.value}: runtime must be a positive integer, got {ch.runtime_s!r}"
                )
            if not ch.cost > 0:
                raise ValidationError(
                    f"stage {sc.stage.value}: cost must be positive, got {ch.cost!r}"
                )
            if ch.vcpus in seen:
                raise ValidationError(f"stage {sc.stage.value}: duplicate vcpus {ch.vcpus}")
            seen.add(ch.vcpus)
        order = [ch.vcpus for ch in sc.choices]
        if order != sorted(order):
            raise ValidationError(f"stage {sc.stage.value}: choices must be sorted by vcpus")


def build_instance(
    estimates: Mapping[Stage, Mapping[int, int]],
    pricing: PricingTable,
    deadline_s: int,
) -> MckpInstance:
    """Assemble an instance from per-stage runtime estimates and a price table.

    Runtimes are integer seconds; each configuration's cost is runtime in
    hours times the hourly price of the stage's recommended VM family at
    that vCPU count.  Raises ConfigurationError naming the missing
    (family, vcpus) row if the table has a gap.
    """
    missing = [s for s in Stage if s not in estimates]
    if missing:
        raise ConfigurationError(
            "estimates missing for stages: " + ", ".join(s.value for s in missing)
        )
    stage_blocks: List[StageChoices] = []
    for stage in Stage:
        family = recommend_family(stage)
        per_stage = estimates[stage]
        choices = []
        for vcpus in VCPU_OPTIONS:
            if vcpus not in per_stage:
                raise ConfigurationError(f"{stage.value}: no runtime estimate for {vcpus} vCPUs")
            runtime = int(per_stage[vcpus])
            price = pricing.price_for(family, vcpus)
            choices.append(Choice(vcpus, runtime, job_cost(runtime, price)))
        stage_blocks.append(StageChoices(stage, tuple(choices)))
    instance = MckpInstance(tuple(stage_blocks), int(deadline_s))
    validate_instance(instance)
    return instance


def instance_from_tables(
    runtimes: Mapping[Stage, Mapping[int, int]],
    costs: Mapping[Stage, Mapping[int, float]],
    deadline_s: int,
    stages: Sequence[Stage] = tuple(Stage),
) -> MckpInstance:
    """Build an instance from literal (runtime, cost) tables, e.g. published
    measurements, bypassing the pricing model."""
    blocks = []
    for stage in stages:
        choices = tuple(
            Choice(v, int(runtimes[stage][v]), float(costs[stage][v]))
            for v in sorted(runtimes[stage])
        )
        blocks.append(StageChoices(stage, choices))
    instance = MckpInstance(tuple(blocks), int(deadline_s))
    validate_instance(instance)
    return instance


def _choice_values(sc: StageChoices, objective: Objective) -> List[float]:
    if objective is Objective.RECIPROCAL_COST:
        return [1.0 / ch.cost for ch in sc.choices]
    return [-ch.cost for ch in sc.choices]


def fill_dp_table(
    instance: MckpInstance, objective: Objective = Objective.RECIPROCAL_COST
) -> Tuple[np.ndarray, np.ndarray]:
    """Run the DP fill; returns (z, backpointers).

    z has one row per prefix length (row 0 all zeros), columns are the
    capacity axis 0..C; unreachable cells hold -inf.  backpointers[i][c]
    is the choice index picked for stage i at capacity c.  Value ties are
    resolved toward the lower-vCPU choice: choices are scanned in
    ascending vcpus order and a cell is only overwritten on strict
    improvement.
    """
    validate_instance(instance)
    capacity = instance.capacity_s
    n_stages = len(instance.stages)
    z = np.full((n_stages + 1, capacity + 1), -math.inf, dtype=np.float64)
    z[0, :] = 0.0
    back = np.zeros((n_stages, capacity + 1), dtype=np.int8)
    for i, sc in enumerate(instance.stages):
        values = _choice_values(sc, objective)
        row = z[i + 1]
        prev = z[i]
        for j, ch in enumerate(sc.choices):
            t = ch.runtime_s
            if t > capacity:
                continue
            cand = np.full(capacity + 1, -math.inf)
            cand[t:] = prev[: capacity + 1 - t] + values[j]
            better = cand > row
            row[better] = cand[better]
            back[i][better] = j
    return z, back


def solve_dp(
    instance: MckpInstance, objective: Objective = Objective.RECIPROCAL_COST
) -> DeploymentPlan:
    """Exact DP solution; infeasibility is reported in the plan, not raised."""
    z, back = fill_dp_table(instance, objective)
    capacity = instance.capacity_s
    final = z[len(instance.stages), capacity]
    if final == -math.inf:
        return DeploymentPlan(False, {}, (), 0, 0.0, -math.inf, objective)

    picks = [0] * len(instance.stages)
    c = capacity
    for i in range(len(instance.stages) - 1, -1, -1):
        j = int(back[i][c])
        picks[i] = j
        c -= instance.stages[i].choices[j].runtime_s
    return _plan_from_picks(instance, tuple(picks), float(final), objective)


def _plan_from_picks(
    instance: MckpInstance, picks: Tuple[int, ...], value: float, objective: Objective
) -> DeploymentPlan:
    selection: Dict[Stage, int] = {}
    runtime = 0
    cost = 0.0
    for i, j in enumerate(picks):
        sc = instance.stages[i]
        ch = sc.choices[j]
        selection[sc.stage] = ch.vcpus
        runtime += ch.runtime_s
        cost += ch.cost
    return DeploymentPlan(True, selection, picks, runtime, cost, value, objective)


def brute_force_oracle(
    instance: MckpInstance, objective: Objective = Objective.RECIPROCAL_COST
) -> DeploymentPlan:
    """Exhaustive optimum with the same tie-break rule as solve_dp.

    On value ties the assignment whose vcpus vector is lexicographically
    smallest read from the last stage backwards wins, matching the DP
    backtrack.  Guarded against instances with more than 10^6 assignments.
    """
    validate_instance(instance)
    n_assignments = 1
    for sc in instance.stages:
        n_assignments *= len(sc.choices)
        if n_assignments > ORACLE_MAX_ASSIGNMENTS:
            raise ContractViolation(
                f"instance has more than {ORACLE_MAX_ASSIGNMENTS} assignments; oracle refused"
            )

    per_stage_values = [_choice_values(sc, objective) for sc in instance.stages]
    best_value = -math.inf
    best_combo: Optional[Tuple[int, ...]] = None
    best_key: Optional[Tuple[int, ...]] = None
    for combo in itertools.product(*(range(len(sc.choices)) for sc in instance.stages)):
        runtime = 0
        for i, j in enumerate(combo):
            runtime += instance.stages[i].choices[j].runtime_s
        if runtime > instance.capacity_s:
            continue
        value = 0.0
        for i, j in enumerate(combo):
            value += per_stage_values[i][j]
        key = combo[::-1]
        if value > best_value or (value == best_value and (best_key is None or key < best_key)):
            best_value = value
            best_combo = combo
            best_key = key

    if best_combo is None:
        return DeploymentPlan(False, {}, (), 0, 0.0, -math.inf, objective)
    return _plan_from_picks(instance, best_combo, best_value, objective)


def compute_speedups(estimate: Mapping[int, float]) -> Dict[int, float]:
    """Speedups relative to the 1-vCPU runtime: s_k = t_1 / t_k."""
    if 1 not in estimate:
        raise ContractViolation("estimate has no 1-vCPU runtime")
    for k, t in estimate.items():
        if not t > 0:
            raise ContractViolation(f"runtime for {k} vCPUs must be positive, got {t}")
    t1 = estimate[1]
    return {k: t1 / estimate[k] for k in sorted(estimate)}


@dataclass(frozen=True)
class SavingsReport:
    over_provision_cost: float
    under_provision_cost: float
    savings_vs_over_pct: float
    savings_vs_under_pct: float
    runtime_overhead_vs_over_s: int
    over_provision_runtime_s: int
    under_provision_runtime_s: int


def compute_savings(plan: DeploymentPlan, instance: MckpInstance) -> SavingsReport:
    """Compare a feasible plan against the all-8-vCPU (over-provisioning)
    and all-1-vCPU (under-provisioning) baselines."""
    if not plan.feasible:
        raise StateError("cannot compute savings for an infeasible plan")

    def baseline(vcpus: int) -> Tuple[int, float]:
        runtime = 0
        cost = 0.0
        for sc in instance.stages:
            match = [ch for ch in sc.choices if ch.vcpus == vcpus]
            if not match:
                raise ConfigurationError(
                    f"stage {sc.stage.value} has no {vcpus}-vCPU choice for the baseline"
                )
            runtime += match[0].runtime_s
            cost += match[0].cost
        return runtime, cost

    over_rt, over_cost = baseline(max(VCPU_OPTIONS))
    under_rt, under_cost = baseline(min(VCPU_OPTIONS))
    return SavingsReport(
        over_provision_cost=over_cost,
        under_provision_cost=under_cost,
        savings_vs_over_pct=(over_cost - plan.total_cost) / over_cost * 100.0,
        savings_vs_under_pct=(under_cost - plan.total_cost) / under_cost * 100.0,
        runtime_overhead_vs_over_s=plan.total_runtime_s - over_rt,
        over_provision_runtime_s=over_rt,
        under_provision_runtime_s=under_rt,
    )
