"""Dyadic intervals of [0, 1) and dense per-level value trees.

Intervals are addressed by ``(level, index)``; the interval ``(k, j)`` is
``[j 2^-k, (j+1) 2^-k)``.  The left child is ``I_-`` and the right child is
``I_+``, so the Haar sign function of ``I`` is ``+1`` on the right half.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

DEFAULT_DEPTH_CAP = 40
TREE_SCHEMA = "poissona2.dyadic_tree/1"


class DepthError(ValueError):
    """Raised when an operation needs levels beyond the supported depth."""


@dataclass(frozen=True, order=True)
class DyadicInterval:
    level: int
    index: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"negative level {self.level}")
        if not 0 <= self.index < (1 << self.level):
            raise ValueError(f"index {self.index} out of range for level {self.level}")

    @classmethod
    def root(cls) -> "DyadicInterval":
        return cls(0, 0)

    @classmethod
    def from_endpoints(cls, left, right) -> "DyadicInterval":
        left, right = Fraction(left), Fraction(right)
        length = right - left
        if length <= 0 or length.numerator != 1 or length.denominator & (length.denominator - 1):
            raise ValueError(f"[{left}, {right}) is not a dyadic interval")
        level = length.denominator.bit_length() - 1
        index = left / length
        if index.denominator != 1:
            raise ValueError(f"[{left}, {right}) is not aligned to the dyadic grid")
        return cls(level, int(index))

    @property
    def length(self) -> float:
        return 2.0 ** -self.level

    @property
    def left(self) -> Fraction:
        return Fraction(self.index, 1 << self.level)

    @property
    def right(self) -> Fraction:
        return Fraction(self.index + 1, 1 << self.level)

    @property
    def minus(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.index)

    @property
    def plus(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.index + 1)

    @property
    def parent(self) -> "DyadicInterval":
        if self.level == 0:
            raise ValueError("the unit interval has no dyadic parent")
        return DyadicInterval(self.level - 1, self.index >> 1)

    @property
    def is_plus_child(self) -> bool:
        return self.level > 0 and self.index % 2 == 1

    def child(self, sign: int) -> "DyadicInterval":
        return self.plus if sign > 0 else self.minus

    def contains(self, other: "DyadicInterval") -> bool:
        if other.level < self.level:
            return False
        return other.index >> (other.level - self.level) == self.index

    def descendants(self, level: int) -> range:
        """Indices of the level-``level`` intervals inside this one."""
        shift = level - self.level
        if shift < 0:
            raise ValueError("level above the interval")
        return range(self.index << shift, (self.index + 1) << shift)

    def __str__(self):
        return f"({self.level},{self.index})"


def is_odd(interval: DyadicInterval) -> bool:
    return interval.level % 2 == 1


def grandchildren(interval: DyadicInterval, depth: int = DEFAULT_DEPTH_CAP):
    """Return ``(I--, I-+, I+-, I++)``, ordered left to right."""
    if interval.level + 2 > depth:
        raise DepthError(f"grandchildren of {interval} exceed depth {depth}")
    k, j = interval.level + 2, 4 * interval.index
    return tuple(DyadicInterval(k, j + r) for r in range(4))


def adjacent(a: DyadicInterval, b: DyadicInterval) -> bool:
    """Equal length, disjoint and sharing an endpoint."""
    return a.level == b.level and abs(a.index - b.index) == 1


class DyadicTree:
    """Dense table of values for every dyadic interval down to ``depth``.

    ``levels[k]`` is an array of shape ``(2**k, *value_shape)``.  Values are
    anything numpy can average (scalars, vectors, stacked matrices).
    """

    def __init__(self, levels: Sequence[np.ndarray], check: bool = True):
        self.levels = [np.asarray(a, dtype=float) for a in levels]
        if check:
            for k, arr in enumerate(self.levels):
                if arr.shape[0] != 1 << k:
                    raise ValueError(f"level {k} has {arr.shape[0]} entries, expected {1 << k}")
                if arr.shape[1:] != self.value_shape:
                    raise ValueError("inconsistent value shapes across levels")

    @classmethod
    def from_leaves(cls, leaves, depth: int | None = None) -> "DyadicTree":
        """Build the martingale of averages from leaf values."""
        leaves = np.asarray(leaves, dtype=float)
        n = leaves.shape[0]
        d = n.bit_length() - 1
        if n != 1 << d:
            raise ValueError("number of leaves must be a power of two")
        if depth is not None and depth != d:
            raise ValueError(f"{n} leaves do not match depth {depth}")
        levels = [leaves]
        for _ in range(d):
            prev = levels[-1]
            levels.append(0.5 * (prev[0::2] + prev[1::2]))
        return cls(levels[::-1])

    @classmethod
    def from_antiderivative(cls, antiderivative: Callable, depth: int) -> "DyadicTree":
        """Exact averages of ``f`` given ``antiderivative`` (``F' = f``)."""
        x = np.arange((1 << depth) + 1) / float(1 << depth)
        big_f = np.asarray(antiderivative(x), dtype=float)
        leaves = (big_f[1:] - big_f[:-1]) * (1 << depth)
        return cls.from_leaves(leaves)

    @classmethod
    def constant(cls, value, depth: int) -> "DyadicTree":
        value = np.asarray(value, dtype=float)
        return cls([np.broadcast_to(value, (1 << k, *value.shape)).copy() for k in range(depth + 1)])

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def value_shape(self) -> tuple:
        return self.levels[0].shape[1:]

    @property
    def leaves(self) -> np.ndarray:
        return self.levels[-1]

    def value(self, interval: DyadicInterval) -> np.ndarray:
        if interval.level > self.depth:
            raise DepthError(f"{interval} is below depth {self.depth}")
        return self.levels[interval.level][interval.index]

    __getitem__ = value

    def set_value(self, interval: DyadicInterval, value) -> None:
        self.levels[interval.level][interval.index] = value

    def intervals(self) -> Iterator[DyadicInterval]:
        for k in range(self.depth + 1):
            for j in range(1 << k):
                yield DyadicInterval(k, j)

    def deltas(self, level: int) -> np.ndarray:
        """``value(I+) - value(I-)`` for every ``I`` on ``level``."""
        if level + 1 > self.depth:
            raise DepthError(f"level {level} has no children in a depth-{self.depth} tree")
        nxt = self.levels[level + 1]
        return nxt[1::2] - nxt[0::2]

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "DyadicTree":
        return DyadicTree([fn(a) for a in self.levels])

    def copy(self) -> "DyadicTree":
        return DyadicTree([a.copy() for a in self.levels], check=False)

    # serialization

    def to_records(self) -> list[dict]:
        return [
            {"level": k, "index": j, "value": np.asarray(arr[j]).tolist()}
            for k, arr in enumerate(self.levels)
            for j in range(arr.shape[0])
        ]

    @classmethod
    def from_records(cls, records) -> "DyadicTree":
        depth = max(r["level"] for r in records)
        table: dict[tuple[int, int], object] = {}
        for r in records:
            key = (int(r["level"]), int(r["index"]))
            if key in table:
                raise ValueError(f"duplicate record for interval {key}")
            table[key] = r["value"]
        levels = []
        for k in range(depth + 1):
            try:
                levels.append(np.array([table[(k, j)] for j in range(1 << k)], dtype=float))
            except KeyError as exc:
                raise ValueError(f"missing record for interval {exc.args[0]}") from None
        return cls(levels)

    def to_json(self) -> str:
        return json.dumps({"schema": TREE_SCHEMA, "depth": self.depth, "records": self.to_records()})

    @classmethod
    def from_json(cls, text: str) -> "DyadicTree":
        doc = json.loads(text)
        if doc.get("schema") != TREE_SCHEMA:
            raise ValueError(f"unsupported tree schema {doc.get('schema')!r}")
        return cls.from_records(doc["records"])


def delta(tree: DyadicTree, interval: DyadicInterval) -> np.ndarray:
    if interval.level + 1 > tree.depth:
        raise DepthError(f"{interval} has no stored children")
    return tree.value(interval.plus) - tree.value(interval.minus)


def validate_martingale(tree: DyadicTree) -> float:
    """Largest deviation of a node from the midpoint of its children.

    Deviations are measured relative to ``max(1, max |value|)`` over the
    tree, so for trees with values of order one this is the absolute
    residual.
    """
    scale = max(1.0, max(float(np.max(np.abs(a))) if a.size else 0.0 for a in tree.levels))
    worst = 0.0
    for k in range(tree.depth):
        nxt = tree.levels[k + 1]
        mid = 0.5 * (nxt[0::2] + nxt[1::2])
        dev = np.abs(tree.levels[k] - mid)
        if dev.size:
            worst = max(worst, float(dev.max()))
    return worst / scale
