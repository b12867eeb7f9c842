"""The small-step transform ``F -> F~``.

Every tetrahedron jump of the large-step martingale is replaced by a
small-step walk on the barycentric lattice of the tetrahedron, started from
its center; the first jump (from the unit interval to its two halves) is
replaced by a walk on the segment between the two half averages.  When a
walk reaches a corner that is itself the center of a further tetrahedron,
the walk of that tetrahedron starts; when it reaches a corner in ``E``,
``F~`` is constant below.

``F~`` is stored as a hash-consed DAG.  A node is a walk node of one frame
(a tetrahedron or the segment) in a given lattice state with a given number
of steps left before the frame's cap, so identical subtrees are shared.  Node
masses (the total length of the intervals where the node occurs) are exact
sums of powers of 1/4 up to rounding.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import spd
from .dyadic import DyadicInterval
from .haar_shift import bilinear_delta_form
from .large_step import MartingaleX, component
from .simplex_walk import (
    CORNER_POSITION,
    INTERIOR,
    VERTEX,
    X_DIM,
    X_SLICES,
    BudgetError,
    WalkChain,
    advance_batch,
    bracket,
    build_chain,
    classify,
    segment_start,
)
from .weights import dyadic_a2

DEFAULT_TAIL_TOL = 1e-9
DEFAULT_NODE_BUDGET = 2_000_000
DEFAULT_POINT_BUDGET = 4_000_000
MAX_CAP = 1 << 20

WALK, STOP, FROZEN = 0, 1, 2


class TransformError(RuntimeError):
    pass


@dataclass
class TransformConfig:
    d: int
    delta_target: float | None = None
    tail_tol: float = DEFAULT_TAIL_TOL
    node_budget: int = DEFAULT_NODE_BUDGET
    materialize: bool = True
    cap: int | None = None  # overrides the tail-driven cap for every frame

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not 0 < self.tail_tol < 1:
            raise ValueError("tail_tol must lie in (0, 1)")


@dataclass
class Frame:
    """One walk: the segment (``K is None``) or the tetrahedron of ``K``."""

    fid: int
    K: DyadicInterval | None
    corners: np.ndarray  # (4, 12) values a1..a4; unused rows are zero for the segment
    corner_intervals: list  # DyadicInterval per corner, or None
    corner_kind: list  # "frame" | "stop" | None per corner
    chain: WalkChain
    cap: int = 0
    expected_tau_truncated: float = 0.0
    hit_probability: np.ndarray = field(default_factory=lambda: np.zeros(4))
    unstopped: float = 0.0

    @property
    def is_segment(self) -> bool:
        return self.K is None

    def values(self, points: np.ndarray) -> np.ndarray:
        return (points / (4.0 * self.chain.d)) @ self.corners


@dataclass
class RemapEntry:
    source: DyadicInterval
    target: DyadicInterval

    @property
    def scale(self) -> Fraction:
        """``|L| / |M|``; always a power of two."""
        return Fraction(2) ** (self.source.level - self.target.level)

    @property
    def offset(self) -> Fraction:
        return self.target.left - self.source.left * self.scale

    def __call__(self, x):
        """The orientation-preserving affine map of ``M`` onto ``L``."""
        return self.target.left + (Fraction(x) - self.source.left) * self.scale


@dataclass
class SmallStepResult:
    d: int
    frames: list
    frame_of: dict  # K -> frame id
    segment: int
    # DAG (empty when not materialized)
    kind: np.ndarray | None = None
    frame_id: np.ndarray | None = None
    state: np.ndarray | None = None
    children: np.ndarray | None = None
    values: np.ndarray | None = None
    target: dict = field(default_factory=dict)  # stop node -> L
    roots: dict = field(default_factory=dict)  # frame id -> root node
    mass: np.ndarray | None = None
    # accounting
    J_mass: dict = field(default_factory=dict)  # K -> total length of J(K)
    I_mass: dict = field(default_factory=dict)  # L -> total length of I(L)
    frozen_mass: float = 0.0
    materialized: bool = True

    @property
    def n_nodes(self) -> int:
        return 0 if self.kind is None else len(self.kind)

    @property
    def tail(self) -> float:
        """Mass left frozen at the caps."""
        return self.frozen_mass

    # interval enumeration ----------------------------------------------------

    def iter_occurrences(self, budget: int = 100_000):
        """Yield ``(interval, node)`` for frame roots, stop and frozen leaves.

        Walk-node occurrences are expanded depth first; a :class:`BudgetError`
        is raised after ``budget`` yielded items.
        """
        if not self.materialized:
            raise TransformError("interval enumeration needs a materialized transform")
        seg_root = self.roots[self.segment]
        tet_roots = {n for fid, n in self.roots.items() if fid != self.segment}
        stack = [(DyadicInterval(1, 1), seg_root), (DyadicInterval(1, 0), seg_root)]
        count = 0
        while stack:
            iv, node = stack.pop()
            if node in tet_roots or self.kind[node] != WALK:
                count += 1
                if count > budget:
                    raise BudgetError(f"more than {budget} intervals")
                yield iv, int(node)
            if self.kind[node] == WALK:
                for r in range(3, -1, -1):
                    stack.append((DyadicInterval(iv.level + 2, 4 * iv.index + r), int(self.children[node, r])))

    def J_family(self, K, budget: int = 100_000) -> list:
        root = self.roots[self.frame_of[K]]
        return [iv for iv, n in self.iter_occurrences(budget) if n == root]

    def I_family(self, L, budget: int = 100_000) -> list:
        return [iv for iv, n in self.iter_occurrences(budget) if self.kind[n] == STOP and self.target[n] == L]

    def summary(self) -> dict:
        return {
            "d": self.d,
            "materialized": self.materialized,
            "n_nodes": self.n_nodes,
            "frames": [
                {
                    "K": None if fr.K is None else [fr.K.level, fr.K.index],
                    "cap": fr.cap,
                    "expected_tau_truncated": fr.expected_tau_truncated,
                    "unstopped": fr.unstopped,
                }
                for fr in self.frames
            ],
            "J_mass": {f"{k.level},{k.index}": m for k, m in self.J_mass.items()},
            "I_mass": {f"{k.level},{k.index}": m for k, m in self.I_mass.items()},
            "frozen_mass": self.frozen_mass,
        }


# frames ------------------------------------------------------------------------

def _frame_caps(frame: Frame, tol: float, fixed: int | None):
    """Run the frame's chain until the mass away from the corners is below ``tol``."""
    chain = frame.chain
    tt = chain.transition.T.tocsr()
    v = np.zeros(chain.n_states)
    v[chain.start] = 1.0
    nonvertex = chain.region != VERTEX
    interior = chain.region == INTERIOR
    e_tau = 0.0
    n = 0
    while True:
        left = float(v[nonvertex].sum())
        if (fixed is None and left < tol) or (fixed is not None and n >= fixed):
            break
        if n >= MAX_CAP:
            raise BudgetError(f"frame cap exceeded {MAX_CAP} steps")
        e_tau += float(v[interior].sum())
        v = tt @ v
        n += 1
    frame.cap = n
    frame.expected_tau_truncated = e_tau
    frame.hit_probability = np.array([v[chain.vertex == i].sum() for i in range(4)])
    frame.unstopped = float(v[nonvertex].sum())


def build_frames(F: MartingaleX, d: int, tol: float = DEFAULT_TAIL_TOL, cap: int | None = None):
    fam = F.fam
    in_F = set(fam.all_F)
    in_E = set(fam.E)
    frames = []
    frame_of = {}
    tet_chain = build_chain(d)
    # deepest tetrahedra first so that every corner frame already exists
    for K in sorted(fam.all_F, key=lambda k: (-k.level, k.index)):
        gc_vals = F.grandchild_values(K)
        k2 = K.level + 2
        gc_ivs = [DyadicInterval(k2, 4 * K.index + r) for r in range(4)]
        ivs = [gc_ivs[p] for p in CORNER_POSITION]
        kinds = []
        for iv in ivs:
            if iv in in_F:
                kinds.append("frame")
            elif iv in in_E:
                kinds.append("stop")
            else:
                raise TransformError(f"grandchild {iv} of {K} is neither in F nor in E")
        fr = Frame(len(frames), K, gc_vals[CORNER_POSITION].copy(), ivs, kinds, tet_chain)
        frame_of[K] = fr.fid
        frames.append(fr)
    lo, hi = DyadicInterval(1, 0), DyadicInterval(1, 1)
    corners = np.zeros((4, X_DIM))
    corners[0], corners[1] = F.value(lo), F.value(hi)
    if np.array_equal(corners[0], corners[1]) and not _is_constant(F):
        raise TransformError("the initial segment is degenerate for a non-constant F")
    seg = Frame(len(frames), None, corners, [lo, hi, None, None], ["frame", "frame", None, None],
                build_chain(d, segment_start(d)))
    frames.append(seg)
    for fr in frames:
        _frame_caps(fr, tol, cap)
    return frames, frame_of, seg.fid


def _is_constant(F: MartingaleX) -> bool:
    return bool(np.all(F.tree.leaves == F.tree.levels[0][0]))


# transform ------------------------------------------------------------------------

def transform(F: MartingaleX, cfg: TransformConfig) -> SmallStepResult:
    n = 4 * cfg.d
    if (n + 1) * (n + 2) * (n + 3) // 6 > cfg.node_budget:
        # the walk chain alone would not fit
        raise BudgetError(f"the lattice for d={cfg.d} exceeds the node budget {cfg.node_budget}")
    frames, frame_of, seg_id = build_frames(F, cfg.d, cfg.tail_tol, cfg.cap)
    res = SmallStepResult(cfg.d, frames, frame_of, seg_id, materialized=cfg.materialize)
    if cfg.materialize:
        _materialize(F, res, cfg.node_budget)
    else:
        _frame_accounting(res)
    return res


def _materialize(F: MartingaleX, res: SmallStepResult, budget: int) -> None:
    kind, fids, states, kids, vals = [], [], [], [], []
    stop_node: dict = {}

    def new_node(k, fid, st, ch, val):
        if len(kind) >= budget:
            raise BudgetError(f"transform needs more than {budget} DAG nodes")
        kind.append(k)
        fids.append(fid)
        states.append(st)
        kids.append(ch)
        vals.append(val)
        return len(kind) - 1

    def stop_leaf(L, val):
        if L not in stop_node:
            stop_node[L] = new_node(STOP, -1, -1, (-1, -1, -1, -1), val)
            res.target[stop_node[L]] = L
        return stop_node[L]

    for fr in res.frames:
        chain = fr.chain
        # reachable states after n steps
        reach = [np.array([chain.start])]
        for _ in range(fr.cap):
            reach.append(np.unique(chain.successors[reach[-1]].ravel()))
        state_vals = fr.values(chain.points)
        below: dict[int, int] = {}
        for n in range(fr.cap, -1, -1):
            here: dict[int, int] = {}
            for s in reach[n]:
                s = int(s)
                if chain.region[s] == VERTEX:
                    i = int(chain.vertex[s])
                    if fr.corner_kind[i] == "frame":
                        here[s] = res.roots[res.frame_of[fr.corner_intervals[i]]]
                    else:
                        here[s] = stop_leaf(fr.corner_intervals[i], state_vals[s])
                elif n == fr.cap:
                    here[s] = new_node(FROZEN, fr.fid, s, (-1, -1, -1, -1), state_vals[s])
                else:
                    ch = tuple(below[int(t)] for t in chain.successors[s])
                    here[s] = new_node(WALK, fr.fid, s, ch, state_vals[s])
            below = here
        res.roots[fr.fid] = below[chain.start]

    res.kind = np.array(kind, dtype=np.int8)
    res.frame_id = np.array(fids, dtype=np.int64)
    res.state = np.array(states, dtype=np.int64)
    res.children = np.array(kids, dtype=np.int64).reshape(-1, 4)
    res.values = np.array(vals, dtype=float).reshape(-1, X_DIM)

    # masses, parents first (children always have smaller ids)
    mass = np.zeros(len(kind))
    mass[res.roots[res.segment]] = 1.0
    for node in range(len(kind) - 1, -1, -1):
        if res.kind[node] == WALK and mass[node]:
            for c in res.children[node]:
                mass[c] += 0.25 * mass[node]
    res.mass = mass
    for K, fid in res.frame_of.items():
        res.J_mass[K] = float(mass[res.roots[fid]])
    for node, L in res.target.items():
        res.I_mass[L] = float(mass[node])
    res.frozen_mass = float(mass[res.kind == FROZEN].sum())


def _frame_accounting(res: SmallStepResult) -> None:
    """Masses from the frame chains alone (no DAG)."""
    incoming = {fr.fid: 0.0 for fr in res.frames}
    incoming[res.segment] = 1.0
    frozen = 0.0
    # the segment feeds the deepest-last ordering backwards: process parents first
    for fr in reversed(res.frames):
        m = incoming[fr.fid]
        frozen += m * fr.unstopped
        for i in range(4):
            if fr.corner_kind[i] == "frame":
                incoming[res.frame_of[fr.corner_intervals[i]]] += m * fr.hit_probability[i]
            elif fr.corner_kind[i] == "stop":
                L = fr.corner_intervals[i]
                res.I_mass[L] = res.I_mass.get(L, 0.0) + m * fr.hit_probability[i]
    for K, fid in res.frame_of.items():
        res.J_mass[K] = incoming[fid]
    res.frozen_mass = frozen


# T and pullback -----------------------------------------------------------------------

@dataclass
class RemapCertificate:
    per_target: dict
    total: float
    max_deviation: float
    tail: float
    ok: bool


def build_T(result: SmallStepResult, F: MartingaleX | None = None, budget: int = 100_000, tol: float | None = None):
    """Remap entries (enumerated up to ``budget``) and the measure certificate.

    Returns ``(entries, certificate, complete)``; ``complete`` is False when
    the enumeration stopped at the budget.  The certificate uses the exact
    node masses and does not depend on the enumeration.
    """
    targets = list(result.I_mass) if F is None else F.fam.E
    tol = 10 * max(result.tail, 1e-15) if tol is None else tol
    per = {}
    worst = 0.0
    for L in targets:
        m = result.I_mass.get(L, 0.0)
        per[L] = m
        worst = max(worst, abs(m - L.length))
    total = float(sum(per.values()))
    ok = worst <= tol + 1e-15 and abs(total + result.tail - 1.0) <= 1e-12 and abs(total - 1.0) <= tol + 1e-15
    cert = RemapCertificate(per, total, worst, result.tail, ok)
    entries, complete = [], True
    if result.materialized:
        try:
            for iv, node in result.iter_occurrences(budget):
                if result.kind[node] == STOP:
                    entries.append(RemapEntry(iv, result.target[node]))
        except BudgetError:
            complete = False
    else:
        complete = False
    return entries, cert, complete


def remap_csv(entries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["M_level", "M_index", "L_level", "L_index"])
    for e in entries:
        w.writerow([e.source.level, e.source.index, e.target.level, e.target.index])
    return buf.getvalue()


@dataclass
class PullbackReport:
    max_deviation: float
    f_norm: float
    f_norm_tilde: float
    g_norm: float
    g_norm_tilde: float
    tail: float

    @property
    def norm_gaps(self) -> tuple[float, float]:
        """Relative differences of the two norms."""
        rel = lambda a, b: abs(a - b) / max(abs(a), 1e-300)  # noqa: E731
        return rel(self.f_norm, self.f_norm_tilde), rel(self.g_norm, self.g_norm_tilde)

    @property
    def norms_ok(self) -> bool:
        band = 10 * self.tail + 1e-12
        return max(self.norm_gaps) <= band


def _quad(values: np.ndarray, wname: str, vname: str) -> np.ndarray:
    w = component(values, wname)
    x = component(values, vname)
    return np.einsum("...i,...ij,...j->...", x, w, x)


def verify_pullback(F: MartingaleX, result: SmallStepResult) -> PullbackReport:
    """Stopped leaves against ``<F>_L`` and the weighted norms of ``f`` and ``g``.

    Leaf values are recomputed from the walk (barycentric coordinates times
    corners) and compared with the averages of ``F`` on the targets.  The
    norms are ``||f||_{L2(W)}`` and ``||g||_{L2(W^-1)}`` (using ``V``).
    """
    dev = 0.0
    f2t, g2t = 0.0, 0.0
    if result.materialized:
        for node, L in result.target.items():
            dev = max(dev, float(np.abs(result.values[node] - F.value(L)).max()))
        leaf = result.kind != WALK
        vals, m = result.values[leaf], result.mass[leaf]
        f2t = float((m * _quad(vals, "W", "f")).sum())
        g2t = float((m * _quad(vals, "V", "g")).sum())
    else:
        for L, m in result.I_mass.items():
            val = F.value(L)
            f2t += m * float(_quad(val, "W", "f"))
            g2t += m * float(_quad(val, "V", "g"))
    # walk vertices reproduce the corners exactly
    for fr in result.frames:
        for i, kind in enumerate(fr.corner_kind):
            if kind is None:
                continue
            p = np.zeros(4)
            p[i] = 4 * fr.chain.d
            walk_val = fr.values(p[None])[0]
            dev = max(dev, float(np.abs(walk_val - F.value(fr.corner_intervals[i])).max()))
    E_vals = np.array([F.value(L) for L in F.fam.E])
    E_len = np.array([L.length for L in F.fam.E])
    f2 = float((E_len * _quad(E_vals, "W", "f")).sum())
    g2 = float((E_len * _quad(E_vals, "V", "g")).sum())
    return PullbackReport(dev, math.sqrt(f2), math.sqrt(max(f2t, 0)), math.sqrt(g2), math.sqrt(max(g2t, 0)), result.tail)


# damage ----------------------------------------------------------------------

def pairing_of_F(F: MartingaleX) -> float:
    return bilinear_delta_form(F.component_tree("f"), F.component_tree("g"))


def frame_brackets(F: MartingaleX, result: SmallStepResult) -> dict:
    out = {}
    for fr in result.frames:
        if fr.is_segment:
            continue
        gc = F.grandchild_values(fr.K)
        out[fr.fid] = bracket(gc[:, X_SLICES["f"]], gc[:, X_SLICES["g"]])
    return out


@dataclass
class DamageReport:
    pairing_F: float
    pairing_F_tilde: float
    ratio: float
    expected: float
    tail_band: float
    per_frame_ratio: dict
    universality_spread: float
    A1_block: float
    source: str

    @property
    def deviation(self) -> float:
        return abs(self.ratio - self.expected)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["per_frame_ratio"] = {str(k): v for k, v in self.per_frame_ratio.items()}
        d["deviation"] = self.deviation
        return d


def damage_ratio(F: MartingaleX, result: SmallStepResult) -> DamageReport:
    """``(H f~, g~) / (H f, g)`` with the walk constant and the tail band.

    With a materialized DAG the numerator is summed node by node from the
    values of ``F~``; otherwise it is assembled from the per-frame masses
    and the walk constant.
    """
    base = pairing_of_F(F)
    if base == 0:
        raise ZeroDivisionError("the pairing of F vanishes (degenerate F)")
    d2 = float(result.d ** 2)
    tet = [fr for fr in result.frames if not fr.is_segment]
    e_tau = tet[0].expected_tau_truncated
    brackets = frame_brackets(F, result)
    contrib = {fr.fid: 0.0 for fr in result.frames}
    if result.materialized:
        walk = np.flatnonzero(result.kind == WALK)
        kids = result.children[walk]
        cv = result.values[kids]  # (n, 4, 12)
        fv, gv = cv[..., X_SLICES["f"]], cv[..., X_SLICES["g"]]
        dkf = 0.5 * (fv[:, 2] + fv[:, 3] - fv[:, 0] - fv[:, 1])
        dkg = 0.5 * (gv[:, 2] + gv[:, 3] - gv[:, 0] - gv[:, 1])
        dpf, dmf = fv[:, 3] - fv[:, 2], fv[:, 1] - fv[:, 0]
        dpg, dmg = gv[:, 3] - gv[:, 2], gv[:, 1] - gv[:, 0]
        dot = lambda a, b: np.einsum("ij,ij->i", a, b)  # noqa: E731
        local = 0.5 * dot(dkf, dpg - dmg) + 0.5 * dot(dpf - dmf, dkg) + 0.25 * (dot(dpf, dmg) - dot(dmf, dpg))
        sums = np.zeros(len(result.frames))
        np.add.at(sums, result.frame_id[walk], result.mass[walk] * local)
        contrib = {i: float(sums[i]) for i in range(len(result.frames))}
        source = "dag"
    else:
        for fr in tet:
            contrib[fr.fid] = result.J_mass[fr.K] * fr.expected_tau_truncated * brackets[fr.fid] / d2
        source = "frame_model"
    total = float(sum(contrib.values()))
    per = {}
    for fr in tet:
        m = result.J_mass[fr.K]
        if m > 0 and abs(brackets[fr.fid]) > 1e-14:
            per[fr.fid] = contrib[fr.fid] / (m * brackets[fr.fid])
    spread = (max(per.values()) - min(per.values())) if per else 0.0
    band = (e_tau / d2) * sum(abs(fr.K.length - result.J_mass[fr.K]) * abs(brackets[fr.fid]) for fr in tet) / abs(base)
    return DamageReport(base, total, total / base, e_tau / d2, band, per, spread, contrib[result.segment], source)


# choice of d and the audit -------------------------------------------------------------------

def comparability_ratio(F: MartingaleX) -> float:
    """Max over ``K`` with grandchildren of ``sum_i |A_i| / min_i m(A_i)`` for ``W`` and ``V``."""
    worst = 0.0
    t = F.tree
    for name in ("W", "V"):
        for k in range(t.depth - 1):
            gc = component(t.levels[k + 2], name).reshape(-1, 4, 2, 2)
            lo, hi = spd.eigvalsh2(gc)
            worst = max(worst, float((hi.sum(axis=1) / lo.min(axis=1)).max()))
    return worst


def choose_d(delta: float, F: MartingaleX) -> int:
    if delta <= 0:
        raise ValueError("delta must be positive")
    return math.ceil(comparability_ratio(F) / delta)


def lattice_points(d: int, kind: str = "tetra", budget: int = DEFAULT_POINT_BUDGET) -> np.ndarray:
    """Every non-vertex lattice point of a frame (a superset of the reachable ones)."""
    n = 4 * d
    if kind == "segment":
        m = np.arange(1, n)
        return np.stack([m, n - m, 0 * m, 0 * m], axis=1)
    count = (n + 1) * (n + 2) * (n + 3) // 6
    if count > budget:
        raise BudgetError(f"{count} lattice points for d={d}, budget is {budget}")
    a, b, c = np.meshgrid(np.arange(n + 1), np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = a + b + c <= n
    pts = np.stack([a[keep], b[keep], c[keep], n - (a + b + c)[keep]], axis=1)
    return pts[(pts == n).sum(axis=1) == 0]


@dataclass
class AuditReport:
    d: int
    delta: float
    s_dyadic_W: float
    s_dyadic_V: float
    comparability_ok_W: bool
    comparability_ok_V: bool
    max_sibling_deviation_times_d: float
    a2_tilde: float
    a2_F: float
    violations: list = field(default_factory=list)
    points_checked: int = 0

    @property
    def smooth_ok(self) -> bool:
        return self.s_dyadic_W < 1 + self.delta and self.s_dyadic_V < 1 + self.delta

    @property
    def a2_ok(self) -> bool:
        return self.a2_tilde <= 16 * self.a2_F

    @property
    def ok(self) -> bool:
        return self.smooth_ok and self.a2_ok and self.comparability_ok_W and self.comparability_ok_V

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(smooth_ok=self.smooth_ok, a2_ok=self.a2_ok, ok=self.ok)
        return d


def _sibling_pairs(points: np.ndarray, signs: np.ndarray, d: int):
    """Barycentric pairs ``(lam, mu)`` of all sibling intervals below the given walk nodes."""
    kids, _ = advance_batch(points, signs)
    lam = kids.reshape(-1, 4, 4) / (4.0 * d)
    left = 0.5 * (lam[:, 0] + lam[:, 1])
    right = 0.5 * (lam[:, 2] + lam[:, 3])
    a = np.concatenate([lam[:, 0], lam[:, 2], left])
    b = np.concatenate([lam[:, 1], lam[:, 3], right])
    nodes = np.concatenate([lam[:, 0], lam[:, 1], lam[:, 2], lam[:, 3], left, right])
    return a, b, nodes


def smoothness_and_a2_audit(F: MartingaleX, d: int, delta: float, point_budget: int = DEFAULT_POINT_BUDGET,
                            result: SmallStepResult | None = None) -> AuditReport:
    """Dyadic smoothness of ``W~``, ``V~`` and the A2 bound, frame by frame.

    Every interval of ``F~`` carries a value ``sum_i lam_i <F>_{K_i}`` of one
    frame.  All lattice states of every frame are scanned (including states
    the walk never reaches), and for each the three sibling pairs below it
    are compared, both exactly (:func:`spd.smoothness_ratio`) and through the
    comparability lemma at ``eps = delta``.  The A2 quantity uses ``<V~>`` as
    the average of the inverse, which is exact wherever ``V~ = W~^-1`` on the
    leaves, i.e. up to the frozen tail.
    """
    frames = result.frames if result is not None else build_frames(F, d, cap=1)[0]
    rep = AuditReport(d, delta, 1.0, 1.0, True, True, 0.0, 1.0, dyadic_a2(F.weight("W")))
    for fr in frames:
        kind = "segment" if fr.is_segment else "tetra"
        pts = lattice_points(d, kind, point_budget)
        region, _ = classify(pts)
        signs = np.where(region == 1, 1, 0)
        face = region == 1
        if face.any():  # faces in both orientations
            pts = np.concatenate([pts, pts[face]])
            signs = np.concatenate([signs, np.full(int(face.sum()), 2)])
        rep.points_checked += len(pts)
        lam, mu, nodes = _sibling_pairs(pts, signs, d)
        dev = float(np.abs(lam - mu).max()) * d
        rep.max_sibling_deviation_times_d = max(rep.max_sibling_deviation_times_d, dev)
        for name in ("W", "V"):
            corners = component(fr.corners, name)
            if fr.is_segment:
                corners = corners.copy()
                corners[2:] = corners[:2]  # never weighted; keeps the batch PD
            ca = np.einsum("mn,nij->mij", lam, corners)
            cb = np.einsum("mn,nij->mij", mu, corners)
            ratio = spd.smoothness_ratio(ca, cb)
            comp = spd.batch_convex_comparability(corners, lam, mu, delta)
            worst = float(ratio.max())
            if name == "W":
                rep.s_dyadic_W = max(rep.s_dyadic_W, worst)
                rep.comparability_ok_W &= bool(comp.all())
            else:
                rep.s_dyadic_V = max(rep.s_dyadic_V, worst)
                rep.comparability_ok_V &= bool(comp.all())
            if worst >= 1 + delta or not comp.all():
                bad = int(np.argmax(ratio))
                rep.violations.append({
                    "frame": None if fr.K is None else [fr.K.level, fr.K.index],
                    "component": name,
                    "ratio": worst,
                    "lambda": lam[bad].tolist(),
                    "mu": mu[bad].tolist(),
                })
        wv = np.einsum("mn,nij->mij", nodes, component(fr.corners, "W"))
        vv = np.einsum("mn,nij->mij", nodes, component(fr.corners, "V"))
        rep.a2_tilde = max(rep.a2_tilde, float(spd.a2_product(wv, vv).max()))
    if not rep.a2_ok:
        rep.violations.append({"check": "a2", "a2_tilde": rep.a2_tilde, "bound": 16 * rep.a2_F})
    return rep
