import logging

import pytest

from conftest import FIXTURES
from eda_planner.errors import ConfigurationError, ContractViolation, ValidationError
from eda_planner.pricing import (
    VmFamily,
    format_cost,
    job_cost,
    load_pricing,
    parse_pricing_csv,
    recommend_family,
    serialize_pricing,
)
from eda_planner.stages import Stage

GOOD = """family,vcpus,price_per_hour,currency
general_purpose,1,0.05,USD
general_purpose,2,0.10,USD
general_purpose,4,0.20,USD
general_purpose,8,0.40,USD
memory_optimized,1,0.065,USD
memory_optimized,2,0.13,USD
memory_optimized,4,0.26,USD
memory_optimized,8,0.52,USD
"""


def test_eight_row_fixture_loads():
    table = parse_pricing_csv(GOOD)
    assert len(table.rows) == 8
    assert table.price_for(VmFamily.GENERAL_PURPOSE, 2) == 0.10
    assert table.currency == "USD"


def test_shipped_fixtures_load():
    for name in ("pricing_reference_backsolved.csv", "pricing_template.csv"):
        table = load_pricing(FIXTURES / name)
        assert len(table.rows) == 8


@pytest.mark.parametrize(
    "row,fragment",
    [
        ("general_purpose,2,0.10,USD", "duplicate"),
        ("gpu_monster,1,0.10,USD", "unknown family"),
        ("general_purpose,3,0.10,USD", "vcpus"),
        ("general_purpose,two,0.10,USD", "not an integer"),
        ("memory_optimized,1,0,USD", "positive"),
        ("memory_optimized,1,-4,USD", "positive"),
        ("memory_optimized,1,cheap,USD", "not a number"),
        ("memory_optimized,1,0.10", "4 columns"),
    ],
)
def test_row_validation_errors_name_the_row(row, fragment):
    text = GOOD + row + "\n"
    with pytest.raises(ValidationError) as excinfo:
        parse_pricing_csv(text)
    assert fragment in str(excinfo.value)
    assert "row 10" in str(excinfo.value)


def test_mixed_currencies_rejected():
    text = (
        "family,vcpus,price_per_hour,currency\n"
        "general_purpose,1,0.05,USD\n"
        "memory_optimized,1,0.065,EUR\n"
    )
    with pytest.raises(ValidationError) as excinfo:
        parse_pricing_csv(text)
    assert "mixed currencies" in str(excinfo.value)


def test_header_and_empty_file_rejected():
    with pytest.raises(ValidationError):
        parse_pricing_csv("")
    with pytest.raises(ValidationError):
        parse_pricing_csv("a,b,c,d\n")
    with pytest.raises(ValidationError):
        parse_pricing_csv("family,vcpus,price_per_hour,currency\n")


def test_decreasing_price_is_warning_not_error(caplog):
    text = (
        "family,vcpus,price_per_hour,currency\n"
        "general_purpose,1,0.20,USD\n"
        "general_purpose,2,0.10,USD\n"
    )
    with caplog.at_level(logging.WARNING):
        table = parse_pricing_csv(text)
    assert len(table.rows) == 2
    assert any("lower" in rec.message for rec in caplog.records)


def test_serialize_round_trip():
    table = parse_pricing_csv(GOOD)
    again = parse_pricing_csv(serialize_pricing(table))
    assert again.rows == table.rows
    assert again.currency == table.currency


def test_missing_price_row_names_key():
    table = parse_pricing_csv(
        "family,vcpus,price_per_hour,currency\ngeneral_purpose,1,0.05,USD\n"
    )
    with pytest.raises(ConfigurationError) as excinfo:
        table.price_for(VmFamily.MEMORY_OPTIMIZED, 8)
    assert "memory_optimized" in str(excinfo.value) and "8" in str(excinfo.value)


def test_family_recommendations():
    assert recommend_family(Stage.SYNTHESIS) is VmFamily.GENERAL_PURPOSE
    assert recommend_family(Stage.PLACEMENT) is VmFamily.MEMORY_OPTIMIZED
    assert recommend_family(Stage.ROUTING) is VmFamily.MEMORY_OPTIMIZED
    assert recommend_family(Stage.STA) is VmFamily.GENERAL_PURPOSE


def test_job_cost_basics():
    assert job_cost(3600, 0.10) == pytest.approx(0.10)
    assert job_cost(1800, 0.10) == pytest.approx(0.05)
    # back-solved synthesis rate reproduces the reference billed cost
    assert format_cost(job_cost(6100, 0.0944)) == "0.16"


def test_job_cost_linear_exactly():
    for t, r in [(971, 0.137), (3600, 0.0944), (55555, 0.53)]:
        assert job_cost(2 * t, r) == 2 * job_cost(t, r)


def test_job_cost_monotone_and_positive():
    assert job_cost(10, 0.01) > 0
    assert job_cost(11, 0.01) > job_cost(10, 0.01)
    assert job_cost(10, 0.02) > job_cost(10, 0.01)


def test_job_cost_rejects_non_positive():
    with pytest.raises(ContractViolation):
        job_cost(0, 0.1)
    with pytest.raises(ContractViolation):
        job_cost(100, 0.0)
    with pytest.raises(ContractViolation):
        job_cost(-5, 0.1)


def test_reference_fixture_reproduces_memory_optimized_costs():
    table = load_pricing(FIXTURES / "pricing_reference_backsolved.csv")
    runtimes = {"placement": {1: 1206, 2: 905, 4: 644, 8: 519},
                "routing": {1: 10461, 2: 5514, 4: 2894, 8: 1692}}
    billed = {"placement": {1: "0.04", 2: "0.04", 4: "0.05", 8: "0.08"},
              "routing": {1: "0.32", 2: "0.25", 4: "0.21", 8: "0.25"}}
    for stage, per_vcpu in runtimes.items():
        for v, t in per_vcpu.items():
            rate = table.price_for(VmFamily.MEMORY_OPTIMIZED, v)
            assert format_cost(job_cost(t, rate)) == billed[stage][v]


def test_reference_fixture_reproduces_synthesis_costs():
    table = load_pricing(FIXTURES / "pricing_reference_backsolved.csv")
    billed = {1: ("6100", "0.16"), 2: ("4342", "0.15"), 4: ("3449", "0.19"), 8: ("3352", "0.37")}
    for v, (t, cost) in billed.items():
        rate = table.price_for(VmFamily.GENERAL_PURPOSE, v)
        assert format_cost(job_cost(int(t), rate)) == cost
