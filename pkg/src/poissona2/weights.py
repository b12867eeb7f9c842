"""Piecewise-constant matrix weights on the line and their characteristics.

A :class:`PiecewiseWeight` is constant on each level-``N`` dyadic interval of
``[0, 1)`` and constant on each of the two tails ``(-inf, 0)`` and
``[1, inf)``.  By default the tails repeat the nearest boundary leaf.
All averages, masses and Poisson integrals are evaluated in closed form.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import spd
from .dyadic import DyadicInterval, DyadicTree

WEIGHT_SCHEMA = "poissona2.weight/1"
MATRIX_ORDER_SLACK = 1e-10


def _as_matrices(values) -> np.ndarray:
    arr = np.asarray([v.matrix if isinstance(v, spd.Spd2) else v for v in values], dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 3:
        out = np.empty((arr.shape[0], 2, 2))
        out[:, 0, 0], out[:, 0, 1], out[:, 1, 0], out[:, 1, 1] = arr[:, 0], arr[:, 1], arr[:, 1], arr[:, 2]
        return out
    if arr.ndim == 1:
        # scalar weights become multiples of the identity
        return arr[:, None, None] * np.eye(2)
    if arr.ndim != 3 or arr.shape[1:] != (2, 2):
        raise ValueError(f"cannot interpret leaf values of shape {arr.shape}")
    return arr


class PiecewiseWeight:
    def __init__(self, leaves, left_tail=None, right_tail=None):
        leaves = _as_matrices(leaves)
        n = leaves.shape[0]
        depth = n.bit_length() - 1
        if n != 1 << depth:
            raise ValueError("number of leaves must be a power of two")
        self.leaves = leaves
        self.leaf_depth = depth
        self.left_tail = leaves[0].copy() if left_tail is None else _as_matrices([left_tail])[0]
        self.right_tail = leaves[-1].copy() if right_tail is None else _as_matrices([right_tail])[0]
        allv = np.concatenate([leaves, self.left_tail[None], self.right_tail[None]])
        if np.any(np.abs(allv - np.swapaxes(allv, 1, 2)) > 1e-12 * np.abs(allv).max()):
            raise ValueError("weight values must be symmetric")
        if np.any(spd.eigvalsh2(allv)[0] <= 0):
            raise ValueError("weight values must be positive definite")
        cum = np.zeros((n + 1, 2, 2))
        cum[1:] = np.cumsum(leaves, axis=0) / n
        self._cum = cum

    @classmethod
    def constant(cls, value, leaf_depth: int = 0) -> "PiecewiseWeight":
        m = _as_matrices([value])[0]
        return cls(np.broadcast_to(m, (1 << leaf_depth, 2, 2)).copy())

    def inverse(self) -> "PiecewiseWeight":
        return PiecewiseWeight(spd.inv2(self.leaves), spd.inv2(self.left_tail), spd.inv2(self.right_tail))

    def primitive(self, x) -> np.ndarray:
        """``int_0^x W`` for an array of points (negative for ``x < 0``)."""
        x = np.asarray(x, dtype=float)
        n = self.leaves.shape[0]
        inside = np.clip(x, 0.0, 1.0)
        pos = inside * n
        k = np.minimum(np.floor(pos).astype(int), n - 1)
        frac = (pos - k)[..., None, None] / n
        out = self._cum[k] + frac * self.leaves[k]
        out = out + np.minimum(x, 0.0)[..., None, None] * self.left_tail
        out = out + np.maximum(x - 1.0, 0.0)[..., None, None] * self.right_tail
        return out

    def mass(self, a, b) -> np.ndarray:
        return self.primitive(b) - self.primitive(a)

    def average(self, a, b=None) -> np.ndarray:
        if isinstance(a, DyadicInterval):
            a, b = float(a.left), float(a.right)
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        length = b - a
        if np.any(length <= 0):
            raise ValueError("average over an interval of non-positive length")
        return self.mass(a, b) / length[..., None, None]

    def dyadic_tree(self) -> DyadicTree:
        return DyadicTree.from_leaves(self.leaves)

    def poisson_average(self, x, t) -> np.ndarray:
        """Poisson-kernel average at ``x + i t`` (arrays broadcast)."""
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        if np.any(t <= 0):
            raise ValueError("Poisson average needs Im(lambda) > 0")
        n = self.leaves.shape[0]
        edges = np.arange(n + 1) / n
        ang = np.arctan((edges - x[..., None]) / t[..., None])
        piece = (ang[..., 1:] - ang[..., :-1]) / math.pi
        out = np.einsum("...k,kij->...ij", piece, self.leaves)
        left = (ang[..., 0] + math.pi / 2) / math.pi
        right = (math.pi / 2 - ang[..., -1]) / math.pi
        out = out + left[..., None, None] * self.left_tail + right[..., None, None] * self.right_tail
        return out

    # serialization

    def to_dict(self) -> dict:
        tri = lambda m: [float(m[0, 0]), float(m[0, 1]), float(m[1, 1])]  # noqa: E731
        return {
            "schema": WEIGHT_SCHEMA,
            "leaf_depth": self.leaf_depth,
            "leaves": [tri(m) for m in self.leaves],
            "left_tail": tri(self.left_tail),
            "right_tail": tri(self.right_tail),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PiecewiseWeight":
        if doc.get("schema", WEIGHT_SCHEMA) != WEIGHT_SCHEMA:
            raise ValueError(f"unsupported weight schema {doc.get('schema')!r}")
        w = cls(doc["leaves"], doc.get("left_tail"), doc.get("right_tail"))
        if "leaf_depth" in doc and doc["leaf_depth"] != w.leaf_depth:
            raise ValueError("leaf_depth does not match the number of leaves")
        return w

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseWeight":
        return cls.from_dict(json.loads(text))


def average(weight: PiecewiseWeight, a, b=None) -> np.ndarray:
    return weight.average(a, b)


def dyadic_a2(weight: PiecewiseWeight) -> float:
    """Maximum of ``|<W>_I^(1/2) <W^-1>_I^(1/2)|^2`` over dyadic ``I`` in ``[0,1)``."""
    wt = weight.dyadic_tree()
    vt = weight.inverse().dyadic_tree()
    return max(float(spd.a2_product(a, b).max()) for a, b in zip(wt.levels, vt.levels))


# interval families ------------------------------------------------------

def full_family(leaf_depth: int, lo: float = 0.0, hi: float = 1.0):
    """Intervals with endpoints on the level ``leaf_depth + 2`` grid inside
    ``[lo, hi]`` and length at least ``2^-leaf_depth``."""
    h = 2.0 ** -(leaf_depth + 2)
    pts = np.arange(round(lo / h), round(hi / h) + 1) * h
    a, b = np.meshgrid(pts, pts, indexing="ij")
    keep = b - a >= 4 * h - 1e-15
    return a[keep], b[keep]


def doubled(a, b):
    c, r = 0.5 * (a + b), (b - a)
    return c - r, c + r


def smoothness_over(weight: PiecewiseWeight, a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0:
        return 1.0
    m = 0.5 * (a + b)
    return float(spd.smoothness_ratio(weight.average(a, m), weight.average(m, b)).max())


def s_full(weight: PiecewiseWeight) -> float:
    return smoothness_over(weight, *full_family(weight.leaf_depth))


def s_dyadic(weight: PiecewiseWeight) -> float:
    tree = weight.dyadic_tree()
    worst = 1.0
    for k in range(tree.depth):
        nxt = tree.levels[k + 1]
        worst = max(worst, float(spd.smoothness_ratio(nxt[0::2], nxt[1::2]).max()))
    return worst


def s_strong_dyadic(weight: PiecewiseWeight, coarse_levels: int = 64) -> float:
    """Strong dyadic smoothness over all dyadic intervals of the line.

    Levels finer than the leaf depth add nothing new, so the inside of
    ``[0,1)`` is scanned down to the leaf depth; pairs straddling ``0`` and
    ``1`` and the coarse intervals ``[0, 2^m)`` are added, together with
    the ``m -> inf`` limit pair (left tail against right tail).
    """
    tree = weight.dyadic_tree()
    ratios = [1.0]
    for k in range(tree.depth + 1):
        lev = tree.levels[k]
        if lev.shape[0] > 1:
            ratios.append(float(spd.smoothness_ratio(lev[:-1], lev[1:]).max()))
        ratios.append(float(spd.smoothness_ratio(weight.left_tail, lev[0])))
        ratios.append(float(spd.smoothness_ratio(lev[-1], weight.right_tail)))
    total = weight.mass(0.0, 1.0)
    for m in range(1, coarse_levels + 1):
        big = (total + (2.0 ** m - 1) * weight.right_tail) / 2.0 ** m
        ratios.append(float(spd.smoothness_ratio(weight.left_tail, big)))
        ratios.append(float(spd.smoothness_ratio(big, weight.right_tail)))
    ratios.append(float(spd.smoothness_ratio(weight.left_tail, weight.right_tail)))
    return max(ratios)


def smoothness(weight: PiecewiseWeight):
    """Return ``(s_full, s_dyadic, s_strong_dyadic)``."""
    return s_full(weight), s_dyadic(weight), s_strong_dyadic(weight)


def doubling_constant(weight: PiecewiseWeight, scope=None) -> float:
    """Smallest ``C`` with ``W(2I) <= C W(I)`` over the scope intervals.

    Masses ``W(I) = int_I W`` are used, so constant weights give 2.
    ``scope`` is a pair of arrays ``(a, b)``; defaults to :func:`full_family`.
    """
    a, b = full_family(weight.leaf_depth) if scope is None else scope
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    a2, b2 = doubled(a, b)
    return float(spd.generalized_max_eig(weight.mass(a, b), weight.mass(a2, b2)).max())


def doubling_halves_family(a, b):
    """Intervals whose halves are ``((2I)--, I-)`` and ``(I+, (2I)++)``.

    The smoothness constant over this family bounds the doubling constant
    over ``(a, b)`` by ``D <= S + 1``.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    a2, b2 = doubled(a, b)
    m = 0.5 * (a + b)
    return np.concatenate([a2, m]), np.concatenate([m, b2])


# Poisson ("fattened") characteristics --------------------------------------

@dataclass(frozen=True)
class LambdaGrid:
    """Points ``x + i t`` with ``x`` on a ``2^-re_level`` grid over
    ``[re_min, re_max]`` and ``t = 2^-m`` for ``m`` in ``0..im_max_level``."""

    re_level: int
    im_max_level: int
    re_min: float = -1.0
    re_max: float = 2.0

    @classmethod
    def default_for(cls, weight: PiecewiseWeight) -> "LambdaGrid":
        n = weight.leaf_depth
        return cls(re_level=n + 2, im_max_level=n + 2)

    def points(self):
        h = 2.0 ** -self.re_level
        xs = np.arange(round(self.re_min / h), round(self.re_max / h) + 1) * h
        ts = 2.0 ** -np.arange(self.im_max_level + 1)
        x, t = np.meshgrid(xs, ts, indexing="ij")
        return x.ravel(), t.ravel()

    def describe(self) -> dict:
        return asdict(self)


def fattened_a2(weight: PiecewiseWeight, grid: LambdaGrid | None = None) -> float:
    """Grid maximum of the Poisson A2 quantity: a lower bound for the supremum."""
    grid = grid or LambdaGrid.default_for(weight)
    x, t = grid.points()
    inv = weight.inverse()
    return float(spd.a2_product(weight.poisson_average(x, t), inv.poisson_average(x, t)).max())


def classical_a2_lower(weight: PiecewiseWeight, grid: LambdaGrid | None = None) -> float:
    """Classical A2 over the full family and the intervals ``I_lambda`` of the grid."""
    grid = grid or LambdaGrid.default_for(weight)
    a, b = full_family(weight.leaf_depth)
    x, t = grid.points()
    a = np.concatenate([a, x - t])
    b = np.concatenate([b, x + t])
    inv = weight.inverse()
    return float(spd.a2_product(weight.average(a, b), inv.average(a, b)).max())


def fattened_dominates_average(weight: PiecewiseWeight, grid: LambdaGrid | None = None) -> np.ndarray:
    """For each grid point: ``pi <W>^fat_lambda >= <W>_{I_lambda}``."""
    grid = grid or LambdaGrid.default_for(weight)
    x, t = grid.points()
    fat = math.pi * weight.poisson_average(x, t)
    avg = weight.average(x - t, x + t)
    slack = MATRIX_ORDER_SLACK * (spd.op_norm(fat) + spd.op_norm(avg))
    return spd.dominates(fat, avg, slack)


def doubling_series_factor(doubling: float) -> float:
    """``2 + 8 sum_{n>=1} (D/4)^n`` for ``D < 4``."""
    if doubling >= 4:
        return math.inf
    q = doubling / 4.0
    return 2.0 + 8.0 * q / (1.0 - q)


def fattened_upper_check(weight: PiecewiseWeight, x: float, t: float, chain_length: int = 48):
    """Check the doubling-controlled upper bound at one point ``x + i t``.

    The doubling constant is taken over the chain ``2^n I_lambda``,
    ``n = 0..chain_length``, which is all the bound uses.  Returns
    ``(doubling, factor, holds)``; ``holds`` is ``None`` when ``D >= 4``.
    """
    n = np.arange(chain_length + 1)
    a, b = x - t * 2.0 ** n, x + t * 2.0 ** n
    dbl = doubling_constant(weight, (a, b))
    factor = doubling_series_factor(dbl)
    if not math.isfinite(factor):
        return dbl, factor, None
    lhs = math.pi * weight.poisson_average(x, t)
    rhs = factor * weight.average(x - t, x + t)
    slack = MATRIX_ORDER_SLACK * (spd.op_norm(lhs) + spd.op_norm(rhs))
    return dbl, factor, bool(spd.dominates(rhs, lhs, slack))


# smoothness lemma ----------------------------------------------------------

def _lemma_margins(delta: float, eps: float):
    s = math.sqrt(delta)
    lower = (1 - 2 * s) * (1 + delta) ** (-2 / s) - (1 + eps) ** -0.5
    upper = (1 + eps) ** 0.5 - (1 + 2 * s) * (1 + delta) ** (2 + 2 / s)
    return lower, upper


def delta_for_epsilon(eps: float, margin: float = 1e-9, iterations: int = 60) -> float:
    """Largest dyadic ``delta < 1/4`` (to ``iterations`` bits) satisfying both
    smoothness-lemma inequalities with the given margin."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    ok = lambda d: min(_lemma_margins(d, eps)) > margin  # noqa: E731
    lo = None
    for k in range(3, 400):
        cand = 2.0 ** -k
        if ok(cand):
            lo = cand
            break
    if lo is None:
        raise ArithmeticError(f"no admissible delta found for eps={eps}")
    hi = 0.25
    if ok(hi):
        raise ArithmeticError("admissible set reaches 1/4")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def duality_check(weight: PiecewiseWeight, interval: DyadicInterval, q: float | None = None) -> bool:
    """``<W>_I <= Q' (<W^-1>_I)^-1`` with ``Q'`` the dyadic A2 characteristic."""
    if q is None:
        q = dyadic_a2(weight)
    a = weight.average(interval)
    b = weight.inverse().average(interval)
    lhs = q * spd.inv2(b)
    slack = MATRIX_ORDER_SLACK * (spd.op_norm(lhs) + spd.op_norm(a))
    return bool(spd.dominates(lhs, a, slack))


# reports -----------------------------------------------------------------

@dataclass
class CharacteristicsReport:
    dyadic_a2: float
    classical_a2_lower: float
    fattened_a2_lower: float
    doubling_W: float
    doubling_Vinv: float
    s_full: float
    s_dyadic: float
    s_strong_dyadic: float
    grid: dict = field(default_factory=dict)
    conventions: dict = field(default_factory=dict)

    SCALARS = (
        "dyadic_a2", "classical_a2_lower", "fattened_a2_lower", "doubling_W",
        "doubling_Vinv", "s_full", "s_dyadic", "s_strong_dyadic",
    )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["characteristic", "value"])
        for name in self.SCALARS:
            w.writerow([name, repr(getattr(self, name))])
        return buf.getvalue()


def characteristics(weight: PiecewiseWeight, grid: LambdaGrid | None = None) -> CharacteristicsReport:
    grid = grid or LambdaGrid.default_for(weight)
    sf, sd, ssd = smoothness(weight)
    return CharacteristicsReport(
        dyadic_a2=dyadic_a2(weight),
        classical_a2_lower=classical_a2_lower(weight, grid),
        fattened_a2_lower=fattened_a2(weight, grid),
        doubling_W=doubling_constant(weight),
        doubling_Vinv=doubling_constant(weight.inverse()),
        s_full=sf,
        s_dyadic=sd,
        s_strong_dyadic=ssd,
        grid={"lambda": grid.describe(), "interval_family_level": weight.leaf_depth + 2,
              "min_interval_length": 2.0 ** -weight.leaf_depth},
        conventions={
            "doubling": "matrix masses W(I)=int_I W; constant weights give 2 (average-based value is D/2)",
            "extension": "constant tails, by default the nearest boundary leaf",
            "suprema": "grid maxima, lower bounds for the true suprema",
            "order_slack": MATRIX_ORDER_SLACK,
        },
    )
