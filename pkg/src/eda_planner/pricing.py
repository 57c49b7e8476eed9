"""Cloud pricing tables, per-stage VM family recommendations, job costing.

Prices are ingested from CSV exports (no live vendor API); the repo ships
a back-solved reference fixture plus a template for users' own exports.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Tuple

from .errors import ConfigurationError, ContractViolation, ValidationError
from .stages import Stage, VCPU_OPTIONS

log = logging.getLogger(__name__)

CSV_HEADER = ["family", "vcpus", "price_per_hour", "currency"]


class VmFamily(Enum):
    GENERAL_PURPOSE = "general_purpose"
    MEMORY_OPTIMIZED = "memory_optimized"


# Stages dominated by balanced compute map to general-purpose machines;
# placement and routing want a higher memory-to-core ratio.
STAGE_FAMILY: Dict[Stage, VmFamily] = {
    Stage.SYNTHESIS: VmFamily.GENERAL_PURPOSE,
    Stage.PLACEMENT: VmFamily.MEMORY_OPTIMIZED,
    Stage.ROUTING: VmFamily.MEMORY_OPTIMIZED,
    Stage.STA: VmFamily.GENERAL_PURPOSE,
}


def recommend_family(stage: Stage) -> VmFamily:
    """Fixed job-type -> VM-family recommendation."""
    return STAGE_FAMILY[stage]


@dataclass(frozen=True)
class PricingTable:
    rows: Dict[Tuple[VmFamily, int], float]
    source: str = ""
    currency: str = "USD"

    def price_for(self, family: VmFamily, vcpus: int) -> float:
        try:
            return self.rows[(family, vcpus)]
        except KeyError:
            raise ConfigurationError(
                f"no price for ({family.value}, {vcpus} vCPUs) in {self.source or 'table'}"
            ) from None


def load_pricing(path) -> PricingTable:
    """Load and validate a pricing CSV (header: family,vcpus,price_per_hour,currency).

    Rejects unknown families, non-positive prices, bad vCPU counts and
    duplicate (family, vcpus) keys, naming the offending row.  A price
    that decreases as vCPUs grow within a family is only warned about.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        table = parse_pricing_csv(fh.read(), source=str(path))
    return table


def parse_pricing_csv(text: str, source: str = "") -> PricingTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("empty pricing CSV") from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise ValidationError(f"bad header {header!r}, expected {CSV_HEADER}")

    rows: Dict[Tuple[VmFamily, int], float] = {}
    currency = None
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ValidationError(f"row {rownum}: expected 4 columns, got {len(row)}")
        family_token, vcpus_token, price_token, cur = (c.strip() for c in row)
        try:
            family = VmFamily(family_token)
        except ValueError:
            raise ValidationError(f"row {rownum}: unknown family {family_token!r}") from None
        try:
            vcpus = int(vcpus_token)
        except ValueError:
            raise ValidationError(f"row {rownum}: vcpus {vcpus_token!r} is not an integer") from None
        if vcpus not in VCPU_OPTIONS:
            raise ValidationError(f"row {rownum}: vcpus must be one of {VCPU_OPTIONS}, got {vcpus}")
        try:
            price = float(price_token)
        except ValueError:
            raise ValidationError(f"row {rownum}: price {price_token!r} is not a number") from None
        if not price > 0:
            raise ValidationError(f"row {rownum}: price_per_hour must be positive, got {price}")
        if (family, vcpus) in rows:
            raise ValidationError(f"row {rownum}: duplicate entry for ({family.value}, {vcpus})")
        if currency is None:
            currency = cur
        elif cur != currency:
            raise ValidationError(f"row {rownum}: mixed currencies {currency!r} vs {cur!r}")
        rows[(family, vcpus)] = price

    if not rows:
        raise ValidationError("pricing CSV has no data rows")

    for family in VmFamily:
        prev = None
        for vcpus in VCPU_OPTIONS:
            price = rows.get((family, vcpus))
            if price is None:
                continue
            if prev is not None and price < prev:
                log.warning(
                    "price for (%s, %d vCPUs) is lower than the next-smaller size",
                    family.value, vcpus,
                )
            prev = price

    return PricingTable(rows=rows, source=source, currency=currency or "USD")


def serialize_pricing(table: PricingTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for (family, vcpus), price in sorted(
        table.rows.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
    ):
        writer.writerow([family.value, vcpus, repr(price), table.currency])
    return buf.getvalue()


def job_cost(runtime_seconds, price_per_hour: float) -> float:
    """Cost of one job: runtime in hours times the hourly price.

    Kept at full precision; round only when displaying.
    """
    if not runtime_seconds > 0:
        raise ContractViolation(f"runtime_seconds must be positive, got {runtime_seconds}")
    if not price_per_hour > 0:
        raise ContractViolation(f"price_per_hour must be positive, got {price_per_hour}")
    return (runtime_seconds / 3600.0) * price_per_hour


def format_cost(cost: float) -> str:
    """Two-decimal display rounding used at report boundaries."""
    return f"{cost:.2f}"
