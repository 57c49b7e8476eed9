"""Flow stages and the vCPU sizing grid used across the toolkit."""

from enum import Enum


class Stage(Enum):
    SYNTHESIS = "synthesis"
    PLACEMENT = "placement"
    ROUTING = "routing"
    STA = "sta"

    @classmethod
    def from_name(cls, name: str) -> "Stage":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown stage {name!r} (expected one of: {valid})") from None


# Machine sizes considered for every stage, in ascending order.
VCPU_OPTIONS = (1, 2, 4, 8)

ALL_STAGES = tuple(Stage)
