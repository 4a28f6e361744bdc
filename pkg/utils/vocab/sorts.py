from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Tuple


@dataclass(frozen=True)
class Sort:
    """A named sort with an explicit, ordered, finite domain."""

    name: str
    domain: Tuple[Any, ...]

    def __post_init__(self):
        if not self.domain:
            raise ValueError(f"Sort {self.name} has an empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError(f"Sort {self.name} repeats a domain value")

    @classmethod
    def range(cls, lo: int, hi: int) -> "Sort":
        if hi < lo:
            raise ValueError(f"Empty range {{{lo}..{hi}}}")
        return cls(f"{{{lo}..{hi}}}", tuple(range(lo, hi + 1)))

    @classmethod
    def enumeration(cls, values: Iterable[Any]) -> "Sort":
        values = tuple(values)
        if all(isinstance(v, int) and not isinstance(v, bool) for v in values):
            ordered = tuple(sorted(values))
            if ordered == tuple(range(ordered[0], ordered[-1] + 1)):
                return cls.range(ordered[0], ordered[-1])
        return cls("{" + ",".join(format_value(v) for v in values) + "}", values)

    @property
    def family(self) -> str:
        """Sorts of one family may be compared and assigned to each other."""
        if self.name == "bool":
            return "bool"
        if self.name.startswith("location_"):
            return self.name
        if all(isinstance(v, int) and not isinstance(v, bool) for v in self.domain):
            return "int"
        return self.name

    def __contains__(self, value) -> bool:
        if self.family == "int" and isinstance(value, bool):
            return False
        if self.family == "bool" and not isinstance(value, bool):
            return False
        return value in self.domain

    def __str__(self):
        return self.name


BOOL = Sort("bool", (True, False))


def location_sort(process: str, labels: Iterable[str]) -> Sort:
    return Sort(f"location_{process}", tuple(labels))


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)
