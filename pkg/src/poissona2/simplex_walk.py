"""The small-step 4-adic random walk on a barycentric lattice of a 3-simplex.

Points are integer vectors ``m = (m1, m2, m3, m4)`` with ``sum(m) = 4d``;
the barycentric coordinates are ``m / (4d)``.  One step of the walk goes from
an interval ``I`` to its four grandchildren, ordered left to right as
``(I--, I-+, I+-, I++)``.  Corners are numbered 1..4 in tags and 0..3 in
arrays.

Three estimators are provided: the explicit 4-adic tree (small caps), a
dynamic program over collapsed states (any ``d``), and seeded Monte Carlo.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dyadic import DyadicInterval, DyadicTree
from .haar_shift import bilinear_delta_form

# layout of the flat 12-vectors used for values in X = (W, V, f, g)
X_DIM = 12
X_SLICES = {"W": slice(0, 4), "V": slice(4, 8), "f": slice(8, 10), "g": slice(10, 12)}

ROOT, PLUS, MINUS = 0, 1, 2
SIGN_NAMES = {ROOT: "root", PLUS: "plus", MINUS: "minus"}
INTERIOR, FACE, EDGE, VERTEX = 0, 1, 2, 3
REGION_NAMES = {INTERIOR: "interior", FACE: "face", EDGE: "edge", VERTEX: "vertex"}

# grandchild r (left to right) takes the +3 step toward this corner
INTERIOR_TARGET = np.array([2, 3, 0, 1])
# grandchild r is the plus or minus child of its own parent
CHILD_SIGN = np.array([MINUS, PLUS, MINUS, PLUS])
# walk corner a_i sits at this grandchild of K: a1 -> K+-, a2 -> K++, a3 -> K--, a4 -> K-+
CORNER_POSITION = np.array([2, 3, 0, 1])

DEFAULT_EXPLICIT_BUDGET = 4 ** 9
DEFAULT_TOLERANCE = 1e-3


class WalkError(RuntimeError):
    pass


class BudgetError(WalkError):
    """Explicit enumeration would exceed the configured node budget."""


# single-node API -----------------------------------------------------------

@dataclass(frozen=True)
class BarycentricPoint:
    m1: int
    m2: int
    m3: int
    m4: int

    def __post_init__(self):
        if min(self.coords) < 0:
            raise ValueError(f"negative lattice coordinate in {self.coords}")
        if sum(self.coords) % 4:
            raise ValueError(f"coordinates {self.coords} do not sum to a multiple of 4")

    @classmethod
    def center(cls, d: int) -> "BarycentricPoint":
        return cls(d, d, d, d)

    @property
    def coords(self) -> tuple[int, int, int, int]:
        return (self.m1, self.m2, self.m3, self.m4)

    @property
    def d(self) -> int:
        return sum(self.coords) // 4

    def barycentric(self) -> np.ndarray:
        return np.array(self.coords, dtype=float) / (4 * self.d)


def region_of(point) -> tuple[str, tuple[int, ...]]:
    """Region tag with 1-based corner labels, e.g. ``("edge", (1, 2))``."""
    m = point.coords if isinstance(point, BarycentricPoint) else tuple(point)
    nz = tuple(i + 1 for i, v in enumerate(m) if v > 0)
    kind = {4: "interior", 3: "face", 2: "edge", 1: "vertex"}[len(nz)]
    return kind, (() if kind == "interior" else nz)


@dataclass(frozen=True)
class WalkNode:
    interval: DyadicInterval
    point: BarycentricPoint
    child_sign: str = "root"

    def __post_init__(self):
        if self.interval.level % 2 == 0:
            raise ValueError("walk nodes live on odd intervals")
        if self.child_sign not in ("root", "plus", "minus"):
            raise ValueError(f"bad child sign {self.child_sign!r}")

    @property
    def region(self) -> tuple[str, tuple[int, ...]]:
        return region_of(self.point)


def advance(node: WalkNode, d: int) -> tuple[WalkNode, ...]:
    """The four successors of ``node``, ordered ``(I--, I-+, I+-, I++)``."""
    if node.point.d != d:
        raise ValueError(f"point {node.point.coords} is not on the lattice for d={d}")
    sign = {"root": ROOT, "plus": PLUS, "minus": MINUS}[node.child_sign]
    pts, _ = advance_batch(np.array([node.point.coords]), np.array([sign]))
    iv = node.interval
    return tuple(
        WalkNode(DyadicInterval(iv.level + 2, 4 * iv.index + r), BarycentricPoint(*map(int, pts[r])), SIGN_NAMES[CHILD_SIGN[r]])
        for r in range(4)
    )


# vectorized step ------------------------------------------------------------

def classify(points: np.ndarray):
    """Region codes and, for vertices, the corner index (else -1)."""
    nz = (points > 0).sum(axis=1)
    region = np.select([nz == 4, nz == 3, nz == 2], [INTERIOR, FACE, EDGE], VERTEX)
    vertex = np.where(region == VERTEX, np.argmax(points, axis=1), -1)
    return region, vertex


def advance_batch(points: np.ndarray, signs: np.ndarray):
    """Successors of many nodes at once.

    Returns ``(points, signs)`` of length ``4 n``; the successors of node
    ``j`` occupy rows ``4j .. 4j+3``.
    """
    points = np.asarray(points, dtype=np.int64)
    signs = np.asarray(signs)
    n = points.shape[0]
    region, _ = classify(points)
    out = np.repeat(points, 4, axis=0).reshape(n, 4, 4)
    # nonzero coordinates first, in index order
    order = np.argsort(points == 0, axis=1, kind="stable")
    rows = np.arange(n)

    inter = region == INTERIOR
    if inter.any():
        out[inter] -= 1
        for r in range(4):
            out[inter, r, INTERIOR_TARGET[r]] += 4

    face = region == FACE
    if face.any():
        if np.any(signs[face] == ROOT):
            raise WalkError("face rule reached at the walk root")
        i = order[:, 0]
        partner = np.where(signs == PLUS, order[:, 1], order[:, 2])
        _pair_shift(out, rows[face], i[face], partner[face])

    edge = region == EDGE
    if edge.any():
        # the edge rule is the face rule with the roles of i and j swapped
        _pair_shift(out, rows[edge], order[edge, 1], order[edge, 0])

    new_points = out.reshape(4 * n, 4)
    if new_points.min() < 0:
        raise WalkError("lattice coordinate underflow")
    new_signs = np.tile(CHILD_SIGN, n)
    return new_points, new_signs


def _pair_shift(out, rows, up, down):
    """On the plus pair move one unit from ``down`` to ``up``; reverse on the minus pair."""
    for r, s in ((0, -1), (1, -1), (2, 1), (3, 1)):
        out[rows, r, up] += s
        out[rows, r, down] -= s


def max_step_increment(points: np.ndarray, successors: np.ndarray, d: int) -> float:
    """Largest squared step of the barycentric vector over the given transitions."""
    diff = (successors.reshape(-1, 4, 4) - points[:, None, :]) / (4.0 * d)
    return float((diff ** 2).sum(axis=2).max()) if len(points) else 0.0


# statistics -----------------------------------------------------------------

@dataclass
class WalkStats:
    d: int
    depth_cap: int
    stopped_mass_per_vertex: list
    interior_mass_remaining: float
    face_mass: float
    edge_mass: float
    unstopped_mass: float
    expected_tau_truncated: float
    tau_distribution: list = field(default_factory=list)
    interior_mass_by_step: list = field(default_factory=list)

    SCHEMA = "poissona2.walk_stats/1"

    @classmethod
    def from_region_masses(cls, d: int, per_step: np.ndarray, vertex_mass: np.ndarray) -> "WalkStats":
        """``per_step[n] = (interior, face, edge, vertex)`` masses after ``n`` steps."""
        per_step = np.asarray(per_step, dtype=float)
        cap = per_step.shape[0] - 1
        inter = per_step[:, INTERIOR]
        return cls(
            d=d,
            depth_cap=cap,
            stopped_mass_per_vertex=[float(x) for x in vertex_mass],
            interior_mass_remaining=float(inter[-1]),
            face_mass=float(per_step[-1, FACE]),
            edge_mass=float(per_step[-1, EDGE]),
            unstopped_mass=float(per_step[-1, :VERTEX].sum()),
            expected_tau_truncated=float(inter[:-1].sum()),
            tau_distribution=[0.0] + [float(x) for x in inter[:-1] - inter[1:]],
            interior_mass_by_step=[float(x) for x in inter],
        )

    @property
    def total_mass(self) -> float:
        return float(sum(self.stopped_mass_per_vertex) + self.unstopped_mass)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["schema"] = self.SCHEMA
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def tau_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "stopped_mass"])
        for n, m in enumerate(self.tau_distribution):
            w.writerow([n, repr(m)])
        return buf.getvalue()


# explicit mode ----------------------------------------------------------------

def _check_budget(cap: int, budget: int):
    if cap < 1:
        raise ValueError("cap must be at least 1")
    if 4 ** cap > budget:
        raise BudgetError(f"explicit walk with cap {cap} needs {4 ** cap} leaves, budget is {budget}")


def explicit_levels(d: int, cap: int, budget: int = DEFAULT_EXPLICIT_BUDGET):
    """Points and signs of every walk node, one array pair per step."""
    _check_budget(cap, budget)
    pts = np.array([[d, d, d, d]], dtype=np.int64)
    sgn = np.array([ROOT])
    levels = [(pts, sgn)]
    bound = 3.0 / (2 * d * d)
    for _ in range(cap):
        new_pts, new_sgn = advance_batch(pts, sgn)
        if max_step_increment(pts, new_pts, d) > bound + 1e-15:
            raise WalkError("step exceeds the squared increment bound")
        pts, sgn = new_pts, new_sgn
        levels.append((pts, sgn))
    return levels


def _stats_from_levels(d: int, levels) -> WalkStats:
    per_step = []
    for pts, _ in levels:
        region, _ = classify(pts)
        per_step.append(np.bincount(region, minlength=4) / len(pts))
    region, vertex = classify(levels[-1][0])
    vmass = np.bincount(vertex[vertex >= 0], minlength=4) / len(region)
    return WalkStats.from_region_masses(d, np.array(per_step), vmass)


def corners_from_grandchildren(values) -> np.ndarray:
    """Walk corners ``(a1..a4)`` from the values at ``(K--, K-+, K+-, K++)``."""
    return np.asarray(values, dtype=float)[CORNER_POSITION]


def grandchildren_from_corners(corners) -> np.ndarray:
    out = np.empty_like(np.asarray(corners, dtype=float))
    out[CORNER_POSITION] = corners
    return out


def run_walk_explicit(d: int, corners, cap: int, budget: int = DEFAULT_EXPLICIT_BUDGET):
    """Full tree of averages of the walk together with its statistics.

    ``corners`` is a ``(4, m)`` array of values ``a1..a4``.  The returned
    :class:`DyadicTree` is rooted at the walk's starting interval and has
    depth ``2 cap``; even levels hold the walk nodes, odd levels the
    midpoints of sibling pairs.
    """
    corners = np.asarray(corners, dtype=float)
    if corners.ndim == 1:
        corners = corners[:, None]
    if corners.shape[0] != 4:
        raise ValueError("a simplex has four corners")
    levels = explicit_levels(d, cap, budget)
    tree_levels = []
    for n, (pts, _) in enumerate(levels):
        vals = (pts / (4.0 * d)) @ corners
        tree_levels.append(vals)
        if n < cap:
            nxt = levels[n + 1][0] / (4.0 * d) @ corners
            tree_levels.append(0.5 * (nxt[0::2] + nxt[1::2]))
    return DyadicTree(tree_levels, check=False), _stats_from_levels(d, levels)


# dynamic programming ----------------------------------------------------------

@dataclass
class WalkChain:
    """Collapsed state space: a state is a point plus, on faces only, its child sign."""

    d: int
    points: np.ndarray
    signs: np.ndarray
    successors: np.ndarray  # (n_states, 4) state indices in grandchild order
    region: np.ndarray
    vertex: np.ndarray
    start: int = 0
    _matrix: sp.csr_matrix | None = None

    @property
    def n_states(self) -> int:
        return len(self.points)

    @property
    def transition(self) -> sp.csr_matrix:
        if self._matrix is None:
            n = self.n_states
            rows = np.repeat(np.arange(n), 4)
            self._matrix = sp.csr_matrix((np.full(4 * n, 0.25), (rows, self.successors.ravel())), shape=(n, n))
        return self._matrix


_CHAINS: dict[tuple, WalkChain] = {}


def segment_start(d: int) -> tuple[int, int, int, int]:
    """Midpoint of the edge between corners 1 and 2."""
    return (2 * d, 2 * d, 0, 0)


def build_chain(d: int, start_point=None) -> WalkChain:
    """Enumerate every state reachable from ``start_point`` (the center by default)."""
    if d < 1:
        raise ValueError("d must be positive")
    start_point = (d, d, d, d) if start_point is None else tuple(int(x) for x in start_point)
    if sum(start_point) != 4 * d or min(start_point) < 0:
        raise ValueError(f"{start_point} is not a lattice point for d={d}")
    cache_key = (d, start_point)
    if cache_key in _CHAINS:
        return _CHAINS[cache_key]
    index: dict[tuple, int] = {}
    pts_list, sgn_list = [], []

    def key(p, s, reg):
        return (*p, s if reg == FACE else ROOT)

    start = np.array([start_point], dtype=np.int64)
    index[key(start_point, ROOT, INTERIOR)] = 0
    pts_list.append(start[0])
    sgn_list.append(ROOT)
    succ_rows = []
    frontier = [0]
    bound = 3.0 / (2 * d * d)
    while frontier:
        fp = np.array([pts_list[i] for i in frontier])
        fs = np.array([sgn_list[i] for i in frontier])
        new_pts, new_sgn = advance_batch(fp, fs)
        if max_step_increment(fp, new_pts, d) > bound + 1e-15:
            raise WalkError("step exceeds the squared increment bound")
        reg, _ = classify(new_pts)
        nxt = []
        for q in range(len(new_pts)):
            k = key(tuple(int(x) for x in new_pts[q]), int(new_sgn[q]), reg[q])
            idx = index.get(k)
            if idx is None:
                idx = len(pts_list)
                index[k] = idx
                pts_list.append(new_pts[q])
                sgn_list.append(k[4])
                nxt.append(idx)
            succ_rows.append((frontier[q // 4], q % 4, idx))
        frontier = nxt
    n = len(pts_list)
    successors = np.empty((n, 4), dtype=np.int64)
    for s, r, t in succ_rows:
        successors[s, r] = t
    points = np.array(pts_list, dtype=np.int64)
    region, vertex = classify(points)
    chain = WalkChain(d, points, np.array(sgn_list), successors, region, vertex)
    _CHAINS[cache_key] = chain
    return chain


def distribution_by_step(chain: WalkChain, cap: int, start=None) -> np.ndarray:
    """Mass vectors after ``0..cap`` steps, shape ``(cap+1, n_states)``."""
    v = np.zeros(chain.n_states)
    if start is None:
        v[chain.start] = 1.0
    else:
        v[:] = start
    tt = chain.transition.T.tocsr()
    out = [v]
    for _ in range(cap):
        v = tt @ v
        out.append(v)
    return np.array(out)


def run_walk_dp(d: int, cap: int) -> WalkStats:
    if cap < 1:
        raise ValueError("cap must be at least 1")
    chain = build_chain(d)
    dist = distribution_by_step(chain, cap)
    per_step = np.stack([dist[:, chain.region == r].sum(axis=1) for r in range(4)], axis=1)
    last = dist[-1]
    vmass = np.array([last[chain.vertex == i].sum() for i in range(4)])
    return WalkStats.from_region_masses(d, per_step, vmass)


def exact_conservation(d: int, steps: int) -> int:
    """Largest integer deviation of ``sum count * point`` from ``4^n (d,d,d,d)``.

    Path counts are exact Python integers, so a return value of 0 means the
    barycentric mean is the center at every step ``0..steps`` exactly.
    """
    chain = build_chain(d)
    counts = {chain.start: 1}
    worst = 0
    for n in range(steps + 1):
        total = [0, 0, 0, 0]
        for s, c in counts.items():
            p = chain.points[s]
            for i in range(4):
                total[i] += c * int(p[i])
        target = (4 ** n) * d
        worst = max(worst, max(abs(t - target) for t in total))
        if n == steps:
            break
        nxt: dict[int, int] = {}
        for s, c in counts.items():
            for t in chain.successors[s]:
                nxt[int(t)] = nxt.get(int(t), 0) + c
        counts = nxt
    return worst


def expected_tau_from_states(d: int) -> np.ndarray:
    """Exact ``E[tau]`` from every interior state (sparse linear solve)."""
    chain = build_chain(d)
    inter = np.flatnonzero(chain.region == INTERIOR)
    pos = -np.ones(chain.n_states, dtype=np.int64)
    pos[inter] = np.arange(len(inter))
    t = chain.transition[inter][:, inter]
    a = sp.identity(len(inter), format="csc") - t.tocsc()
    sol = spla.spsolve(a, np.ones(len(inter)))
    out = np.zeros(chain.n_states)
    out[inter] = np.atleast_1d(sol)
    return out


def expected_tau_exact(d: int) -> float:
    return float(expected_tau_from_states(d)[build_chain(d).start])


def grow_cap(d: int, tol: float = DEFAULT_TOLERANCE, measure: str = "unstopped", step: int | None = None,
             max_cap: int = 1 << 16) -> WalkStats:
    """Grow the cap in steps of ``8 d^2`` until the chosen mass is below ``tol``.

    ``measure`` is ``"interior"`` (mass not yet on the boundary) or
    ``"unstopped"`` (mass not yet at a vertex).
    """
    step = step or 8 * d * d
    cap = step
    while True:
        stats = run_walk_dp(d, cap)
        left = stats.interior_mass_remaining if measure == "interior" else stats.unstopped_mass
        if left < tol:
            return stats
        if cap >= max_cap:
            raise BudgetError(f"mass {left} still above {tol} at cap {cap}")
        cap += step


@dataclass
class HittingTimeEstimate:
    d: int
    expected_tau_truncated: float
    band: tuple
    residual: float
    cap: int
    bounds_ok: bool
    bounds: tuple


def hitting_time_expectation(d: int, target_residual: float = DEFAULT_TOLERANCE) -> HittingTimeEstimate:
    """Truncated ``E[tau]`` with a rigorous residual band.

    The missing tail is ``sum_s P(state s at cap) E_s[tau]`` over interior
    states, bounded by ``residual * max_s E_s[tau]``; the per-state
    expectations come from the exact linear solve.
    """
    if not 0 < target_residual < 1:
        raise ValueError("target_residual must lie in (0, 1)")
    stats = grow_cap(d, target_residual, measure="interior")
    cap_bound = float(expected_tau_from_states(d).max())
    lo = stats.expected_tau_truncated
    hi = lo + stats.interior_mass_remaining * cap_bound
    bounds = (d * d / 6.0, 8.0 * d * d)
    ok = bounds[0] <= lo and hi <= bounds[1]
    return HittingTimeEstimate(d, lo, (lo, hi), stats.interior_mass_remaining, stats.depth_cap, ok, bounds)


# Monte Carlo ----------------------------------------------------------------------

@dataclass
class MonteCarloEstimate:
    paths: int
    cap: int
    mean_tau: float
    std_error: float
    vertex_frequency: list
    seed: int


def monte_carlo(d: int, paths: int, cap: int, seed: int) -> MonteCarloEstimate:
    """Seeded simulation of ``min(tau, cap)`` and the vertex reached by step ``cap``."""
    rng = np.random.default_rng(seed)
    pts = np.tile(np.array([d, d, d, d], dtype=np.int64), (paths, 1))
    sgn = np.full(paths, ROOT)
    tau = np.full(paths, cap)
    alive = np.ones(paths, dtype=bool)
    for n in range(1, cap + 1):
        nxt, nsg = advance_batch(pts, sgn)
        pick = rng.integers(0, 4, size=paths)
        sel = 4 * np.arange(paths) + pick
        pts, sgn = nxt[sel], nsg[sel]
        region, _ = classify(pts)
        hit = alive & (region != INTERIOR)
        tau[hit] = n
        alive &= ~hit
    _, vertex = classify(pts)
    freq = [float(np.mean(vertex == i)) for i in range(4)]
    return MonteCarloEstimate(paths, cap, float(tau.mean()), float(tau.std(ddof=1) / math.sqrt(paths)), freq, seed)


# damage identity ------------------------------------------------------------------

def bracket(x, y) -> float:
    """The per-simplex bracket from values at ``(K--, K-+, K+-, K++)``.

    ``x`` and ``y`` have shape ``(4, m)``.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    dk_x = 0.5 * (x[2] + x[3]) - 0.5 * (x[0] + x[1])
    dk_y = 0.5 * (y[2] + y[3]) - 0.5 * (y[0] + y[1])
    dp_x, dm_x = x[3] - x[2], x[1] - x[0]
    dp_y, dm_y = y[3] - y[2], y[1] - y[0]
    return float(
        0.5 * dk_x @ (dp_y - dm_y) + 0.5 * (dp_x - dm_x) @ dk_y + 0.25 * (dp_x @ dm_y - dm_x @ dp_y)
    )


def per_simplex_pairing_check(d: int, corners, cap: int, root_length: float = 0.5,
                              x_slice=X_SLICES["f"], y_slice=X_SLICES["g"],
                              budget: int = DEFAULT_EXPLICIT_BUDGET):
    """Compare the pairing of the walk with ``|I0| E_trunc[tau] bracket / d^2``.

    Returns ``(residual, scale, lhs, rhs)``; the residual is absolute and
    ``scale`` is a natural size for relative comparisons.
    """
    corners = np.asarray(corners, dtype=float)
    tree, stats = run_walk_explicit(d, corners, cap, budget)
    f = DyadicTree([lv[:, x_slice] for lv in tree.levels], check=False)
    g = DyadicTree([lv[:, y_slice] for lv in tree.levels], check=False)
    lhs = bilinear_delta_form(f, g, parity=0, root_length=root_length)
    gc = grandchildren_from_corners(corners)
    br = bracket(gc[:, x_slice], gc[:, y_slice])
    rhs = root_length * stats.expected_tau_truncated * br / (d * d)
    spread = lambda a: float(np.abs(a - a.mean(axis=0)).max())  # noqa: E731
    scale = root_length * max(stats.expected_tau_truncated, 1.0) * (1 + spread(corners[:, x_slice]) * spread(corners[:, y_slice]))
    return abs(lhs - rhs), scale, lhs, rhs
