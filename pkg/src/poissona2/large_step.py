"""The large-step scaffold: coloring automaton, families and the martingale F.

``F = (W, V, f, g)`` takes values in a 12-dimensional space, stored flat as
``W (2x2 row-major), V (2x2 row-major), f (2), g (2)``.  A ruleset supplies
the ``W`` and ``V`` jumps; ``f = V e`` and ``g = W H f`` are derived.

Coloring: the unit interval is blue, children of blue are red, the plus
child of a red interval is blue and the minus child green, blue intervals
on level ``2 N0`` are green instead, and everything below green is black.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import spd
from .dyadic import DyadicInterval, DyadicTree
from .haar_shift import DEFAULT_SHIFT, ShiftConstants, apply_shift
from .simplex_walk import X_DIM, X_SLICES
from .weights import PiecewiseWeight, dyadic_a2

BLUE, RED, GREEN, BLACK = "blue", "red", "green", "black"
RULESET_SCHEMA = "poissona2.ruleset/1"
DEFAULT_N0 = 4


class AssemblyError(ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def pack(w, v, f=(0.0, 0.0), g=(0.0, 0.0)) -> np.ndarray:
    out = np.empty(X_DIM)
    out[X_SLICES["W"]] = np.asarray(w, dtype=float).reshape(4)
    out[X_SLICES["V"]] = np.asarray(v, dtype=float).reshape(4)
    out[X_SLICES["f"]] = f
    out[X_SLICES["g"]] = g
    return out


def component(values: np.ndarray, name: str) -> np.ndarray:
    """``W``/``V`` as ``(..., 2, 2)`` matrices, ``f``/``g`` as ``(..., 2)`` vectors."""
    part = np.asarray(values)[..., X_SLICES[name]]
    return part.reshape(*part.shape[:-1], 2, 2) if name in ("W", "V") else part


# coloring ----------------------------------------------------------------------

def color(interval: DyadicInterval, n0: int) -> str:
    if interval.level > 2 * n0 + 2:
        raise ValueError(f"{interval} lies below the construction depth {2 * n0 + 2}")
    c = BLUE
    for k in range(1, interval.level + 1):
        bit = (interval.index >> (interval.level - k)) & 1
        if c == BLUE:
            c = RED
        elif c == RED:
            c = BLUE if bit else GREEN
            if c == BLUE and k == 2 * n0:
                c = GREEN
        else:
            c = BLACK
    return c


@dataclass
class Families:
    n0: int
    S: list  # S[n] for n = 0..N0
    F: list  # F[n] for n = 1..N0 (F[0] is empty)
    G: list
    E: list

    @property
    def all_F(self) -> list:
        return [k for fam in self.F for k in fam]

    def counts(self) -> dict:
        return {
            "S": [len(s) for s in self.S],
            "F": [len(f) for f in self.F[1:]],
            "G": len(self.G),
            "E": len(self.E),
        }


def families(n0: int) -> Families:
    if n0 < 1:
        raise ValueError("N0 must be at least 1")
    S = [[DyadicInterval.root()]]
    F = [[]]
    G = []
    for n in range(1, n0 + 1):
        fn = sorted(c for s in S[-1] for c in (s.minus, s.plus))
        F.append(fn)
        G.extend(j.minus for j in fn)
        S.append([j.plus for j in fn])
    G.extend(S[n0])
    G.sort()
    E = sorted(c for gi in G for c in (gi.minus, gi.plus))
    fam = Families(n0, S, F, G, E)
    for n in range(1, n0 + 1):
        if not len(fam.S[n]) == len(fam.F[n]) == 2 ** n:
            raise AssertionError("family sizes differ from 2^n")
    if abs(sum(e.length for e in E) - 1.0) > 1e-15:
        raise AssertionError("E does not partition the unit interval")
    return fam


# rulesets ------------------------------------------------------------------

class LargeStepRuleset(Protocol):
    e: np.ndarray
    Q: float

    def root(self) -> np.ndarray:
        """Root ``(W, V)`` as a packed 12-vector (``f``, ``g`` ignored)."""

    def children(self, interval: DyadicInterval, col: str, parent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Packed values on ``(interval.minus, interval.plus)``."""


class ConstantRuleset:
    def __init__(self, w=None, e=(1.0, 0.0)):
        self.w = np.eye(2) if w is None else np.asarray(w, dtype=float)
        self.e = np.asarray(e, dtype=float)
        self.Q = 1.0

    def root(self):
        return pack(self.w, spd.inv2(self.w))

    def children(self, interval, col, parent):
        return parent.copy(), parent.copy()


class SurrogateRuleset:
    """Diagonal weights ``W = diag(w, v)``, ``V = diag(v, w)``.

    The pair ``(w, v)`` starts at ``(sqrt Q, sqrt Q)``.  Blue and red
    intervals split it as ``(w (1 -/+ s), v (1 +/- s))`` with
    ``s = kappa sqrt(1 - 1/(w v))``, so the product ``w v`` decreases
    towards 1; green intervals terminate to the two scalars ``x, y`` with
    mean ``w`` and ``(1/x + 1/y)/2 = v``, so that ``V = W^-1`` on every
    black interval.  Averages of ``W`` and ``W^-1`` then have product
    ``w v <= Q`` everywhere, with equality at the root.
    """

    def __init__(self, Q: float, n0: int = DEFAULT_N0, kappa_blue: float = 0.5, kappa_red: float = 0.3):
        if Q < 1:
            raise ValueError("Q must be at least 1")
        self.Q = float(Q)
        self.n0 = n0
        self.kappa = {BLUE: kappa_blue, RED: kappa_red}
        self.e = np.array([1.0, 0.0])

    @staticmethod
    def _pair(x: np.ndarray) -> tuple[float, float]:
        return float(x[0]), float(x[3])

    @staticmethod
    def _values(w: float, v: float) -> np.ndarray:
        return pack(np.diag([w, v]), np.diag([v, w]))

    def root(self):
        r = math.sqrt(self.Q)
        return self._values(r, r)

    def children(self, interval, col, parent):
        w, v = self._pair(parent)
        if col in (BLUE, RED):
            s = self.kappa[col] * math.sqrt(max(1.0 - 1.0 / (w * v), 0.0))
            return self._values(w * (1 - s), v * (1 + s)), self._values(w * (1 + s), v * (1 - s))
        if col == GREEN:
            rad = math.sqrt(max(w * w - w / v, 0.0))
            x, y = w - rad, w + rad
            return self._values(x, 1.0 / x), self._values(y, 1.0 / y)
        return parent.copy(), parent.copy()


def surrogate_scalar_ruleset(Q: float, n0: int = DEFAULT_N0) -> SurrogateRuleset:
    return SurrogateRuleset(Q, n0)


class TableRuleset:
    """Child averages read from a table keyed by interval address ``"level,index"``.

    Intervals missing from the table keep the parent value on both children.
    """

    def __init__(self, root_value, table: dict, e=(1.0, 0.0), Q: float = math.nan, tol: float = 1e-12):
        self._root = np.asarray(root_value, dtype=float)
        self.table = {k: (np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for k, (a, b) in table.items()}
        self.e = np.asarray(e, dtype=float)
        self.Q = Q
        self.tol = tol

    def root(self):
        return self._root.copy()

    def children(self, interval, col, parent):
        key = (interval.level, interval.index)
        if key not in self.table:
            return parent.copy(), parent.copy()
        return self.table[key][0].copy(), self.table[key][1].copy()

    @staticmethod
    def _read_xv(doc) -> np.ndarray:
        def mat(t):
            a11, a12, a22 = t
            return [[a11, a12], [a12, a22]]
        return pack(mat(doc["W"]), mat(doc["V"]))

    @classmethod
    def from_json(cls, text: str) -> "TableRuleset":
        doc = json.loads(text)
        if doc.get("schema") != RULESET_SCHEMA:
            raise ValueError(f"unsupported ruleset schema {doc.get('schema')!r}")
        root = cls._read_xv(doc["root"])
        table = {}
        for addr, kids in doc.get("children", {}).items():
            try:
                level, index = (int(x) for x in addr.split(","))
                DyadicInterval(level, index)
            except ValueError as exc:
                raise ValueError(f"bad interval address {addr!r}: {exc}") from None
            table[(level, index)] = (cls._read_xv(kids["minus"]), cls._read_xv(kids["plus"]))
        return cls(root, table, doc.get("e", (1.0, 0.0)), doc.get("Q", math.nan))


# assembly ----------------------------------------------------------------------

@dataclass
class MartingaleX:
    tree: DyadicTree
    n0: int
    fam: Families
    e: np.ndarray
    Q: float = math.nan

    @property
    def depth(self) -> int:
        return self.tree.depth

    def value(self, interval: DyadicInterval) -> np.ndarray:
        return self.tree.value(interval)

    def component_tree(self, name: str) -> DyadicTree:
        return DyadicTree([lv[:, X_SLICES[name]] for lv in self.tree.levels], check=False)

    def weight(self, name: str = "W") -> PiecewiseWeight:
        return PiecewiseWeight(component(self.tree.leaves, name))

    def grandchild_values(self, k: DyadicInterval) -> np.ndarray:
        """Values at ``(K--, K-+, K+-, K++)``."""
        return self.tree.levels[k.level + 2][4 * k.index: 4 * k.index + 4]

    def to_json(self) -> str:
        return json.dumps({
            "schema": "poissona2.martingale_x/1",
            "n0": self.n0,
            "e": self.e.tolist(),
            "Q": self.Q,
            "tree": json.loads(self.tree.to_json()),
        })

    @classmethod
    def from_json(cls, text: str) -> "MartingaleX":
        doc = json.loads(text)
        if doc.get("schema") != "poissona2.martingale_x/1":
            raise ValueError(f"unsupported artifact schema {doc.get('schema')!r}")
        tree = DyadicTree.from_json(json.dumps(doc["tree"]))
        n0 = int(doc["n0"])
        if tree.depth != 2 * n0 + 2:
            raise ValueError("tree depth does not match N0")
        return cls(tree, n0, families(n0), np.asarray(doc["e"], dtype=float), float(doc.get("Q", math.nan)))


def assemble_F(ruleset: LargeStepRuleset, n0: int = DEFAULT_N0, shift: ShiftConstants = DEFAULT_SHIFT,
               check: bool = True) -> MartingaleX:
    depth = 2 * n0 + 2
    fam = families(n0)
    levels = [ruleset.root()[None].copy()]
    for k in range(depth):
        parent = levels[-1]
        nxt = np.empty((2 * parent.shape[0], X_DIM))
        for j in range(parent.shape[0]):
            iv = DyadicInterval(k, j)
            col = color(iv, n0)
            if col == BLACK:
                nxt[2 * j] = nxt[2 * j + 1] = parent[j]
            else:
                lo, hi = ruleset.children(iv, col, parent[j])
                nxt[2 * j], nxt[2 * j + 1] = lo, hi
        levels.append(nxt)
    e = np.asarray(ruleset.e, dtype=float)
    for lv in levels:
        lv[:, X_SLICES["f"]] = component(lv, "V") @ e
    tree = DyadicTree(levels, check=False)
    f_tree = DyadicTree([lv[:, X_SLICES["f"]] for lv in levels], check=False)
    hf = apply_shift(f_tree, shift).leaves
    g_leaves = np.einsum("lij,lj->li", component(levels[-1], "W"), hf)
    g_tree = DyadicTree.from_leaves(g_leaves)
    for lv, gl in zip(levels, g_tree.levels):
        lv[:, X_SLICES["g"]] = gl
    out = MartingaleX(tree, n0, fam, e, float(getattr(ruleset, "Q", math.nan)))
    if check:
        rep = validate_F(out)
        if not rep.ok:
            raise AssemblyError("ruleset produced an invalid martingale", rep)
    return out


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    tol: float = 1e-10

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": self.checks, "violations": self.violations, "tol": self.tol}


def validate_F(F: MartingaleX, tol: float = 1e-10) -> ValidationReport:
    rep = ValidationReport(tol=tol)
    tree = F.tree

    def flag(check, interval, amount):
        rep.violations.append({"check": check, "interval": [interval.level, interval.index], "amount": float(amount)})

    # martingale consistency, per interval for addresses
    worst = 0.0
    for k in range(tree.depth):
        nxt = tree.levels[k + 1]
        dev = np.abs(tree.levels[k] - 0.5 * (nxt[0::2] + nxt[1::2])).max(axis=1)
        scale = max(1.0, float(np.abs(tree.levels[k]).max()))
        worst = max(worst, float(dev.max()) / scale)
        for j in np.flatnonzero(dev > tol * scale):
            flag("martingale", DyadicInterval(k, int(j)), dev[j])
    rep.checks["martingale"] = worst

    # positivity of W and V everywhere
    lo = min(float(spd.eigvalsh2(component(lv, name))[0].min()) for lv in tree.levels for name in ("W", "V"))
    rep.checks["min_eigenvalue"] = lo
    if lo <= 0:
        for k, lv in enumerate(tree.levels):
            for name in ("W", "V"):
                for j in np.flatnonzero(spd.eigvalsh2(component(lv, name))[0] <= 0):
                    flag(f"positivity_{name}", DyadicInterval(k, int(j)), 0.0)

    # V = W^-1 and constancy below every interval of E
    inv_dev, const_dev = 0.0, 0.0
    for L in F.fam.E:
        val = tree.value(L)
        dev = float(np.abs(component(val, "V") @ component(val, "W") - np.eye(2)).max())
        inv_dev = max(inv_dev, dev)
        if dev > tol:
            flag("inverse_on_E", L, dev)
        for k in range(L.level + 1, tree.depth + 1):
            sub = tree.levels[k][L.descendants(k).start: L.descendants(k).stop]
            cd = float(np.abs(sub - val).max())
            const_dev = max(const_dev, cd)
            if cd > tol * max(1.0, float(np.abs(val).max())):
                flag("constant_below_E", L, cd)
                break
    rep.checks["inverse_on_E"] = inv_dev
    rep.checks["constant_below_E"] = const_dev

    # tetrahedron centers
    tet = 0.0
    for K in F.fam.all_F:
        dev = float(np.abs(F.grandchild_values(K).mean(axis=0) - tree.value(K)).max())
        tet = max(tet, dev)
        if dev > tol * max(1.0, float(np.abs(tree.value(K)).max())):
            flag("tetrahedron_center", K, dev)
    rep.checks["tetrahedron_center"] = tet

    # f = V e everywhere
    fdev = max(float(np.abs(component(lv, "f") - component(lv, "V") @ F.e).max()) for lv in tree.levels)
    rep.checks["f_equals_Ve"] = fdev
    if fdev > tol:
        rep.violations.append({"check": "f_equals_Ve", "interval": None, "amount": fdev})
    return rep


def haar_support_of_f(F: MartingaleX, tol: float = 1e-12) -> list[DyadicInterval]:
    """Odd intervals where the f-component has a nonzero difference."""
    out = []
    ft = F.component_tree("f")
    for k in range(1, ft.depth, 2):
        d = np.abs(ft.deltas(k)).max(axis=1)
        out.extend(DyadicInterval(k, int(j)) for j in np.flatnonzero(d > tol))
    return out


def w_dyadic_a2(F: MartingaleX) -> float:
    return dyadic_a2(F.weight("W"))
