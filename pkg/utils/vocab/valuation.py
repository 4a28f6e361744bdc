from __future__ import annotations

from collections.abc import Mapping
from itertools import product
from typing import Any, Dict, Iterable, Iterator, Tuple

from utils.vocab.sorts import Sort, format_value


class Valuation(Mapping):
    """Immutable, hashable map from variable names to values."""

    __slots__ = ("_data", "_items", "_hash")

    def __init__(self, data=(), **extra):
        items = dict(data)
        items.update(extra)
        self._data: Dict[str, Any] = items
        self._items: Tuple[Tuple[str, Any], ...] = tuple(sorted(items.items(), key=lambda kv: kv[0]))
        self._hash = hash(tuple((k, type(v).__name__, v) for k, v in self._items))

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self) -> Iterator[str]:
        return iter(k for k, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Valuation):
            return self._hash == other._hash and _typed(self._items) == _typed(other._items)
        if isinstance(other, Mapping):
            return self == Valuation(other)
        return NotImplemented

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def sort_key(self):
        return tuple((k, type(v).__name__, str(v)) for k, v in self._items)

    def updated(self, changes: Mapping[str, Any]) -> "Valuation":
        merged = dict(self._data)
        merged.update(changes)
        return Valuation(merged)

    def restrict(self, names: Iterable[str]) -> "Valuation":
        names = set(names)
        return Valuation({k: v for k, v in self._items if k in names})

    def drop(self, names: Iterable[str]) -> "Valuation":
        names = set(names)
        return Valuation({k: v for k, v in self._items if k not in names})

    def to_dict(self) -> Dict[str, Any]:
        return dict(self._items)

    def __repr__(self):
        body = ", ".join(f"{k}={format_value(v)}" for k, v in self._items)
        return f"({body})"


def _typed(items):
    return tuple((k, type(v), v) for k, v in items)


def all_valuations(sorts: Mapping[str, Sort]) -> Iterator[Valuation]:
    """Enumerate every valuation over ``sorts`` in domain order."""
    names = list(sorts)
    for values in product(*(sorts[n].domain for n in names)):
        yield Valuation(zip(names, values))
