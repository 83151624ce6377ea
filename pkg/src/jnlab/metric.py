"""Finite metric measure spaces with doubling geometry.

Points are indices 0..m-1 with positive weights; balls are open,
``B(c, r) = {x : d(c, x) < r}``.  Every ball's member set is realized by
one of finitely many critical radii per center (midpoints between
consecutive distinct distances), which makes suprema over all real radii
exactly computable.  Mean oscillations and averages are weighted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvariantViolation, MetricAxiomError

__all__ = [
    "Ball",
    "BallFamily",
    "JnSearchResult",
    "MetricMeasureSpace",
    "bmo_norm_metric",
    "build_space",
    "check_admissible",
    "doubling_constant",
    "global_maximal",
    "hl_maximal_restricted",
    "jnp_metric_lower",
    "space_from_csv",
    "space_from_points",
    "space_to_csv",
    "values_from_csv",
    "values_to_csv",
    "vitali_subcover",
]


@dataclass(frozen=True)
class Ball:
    """Open ball: index of the center point and a positive radius."""

    center: int
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValueError(f"radius must be positive and finite, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    def dilate(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)


def _validate_metric(d: np.ndarray, w: np.ndarray) -> None:
    m = d.shape[0]
    if d.shape != (m, m):
        raise MetricAxiomError(f"distance matrix must be square, got {d.shape}")
    if w.shape != (m,):
        raise MetricAxiomError(f"need {m} weights, got shape {w.shape}")
    if not np.all(np.isfinite(d)):
        i, j = np.argwhere(~np.isfinite(d))[0]
        raise MetricAxiomError("non-finite distance", witness=(int(i), int(j)))
    if not np.all(np.isfinite(w) & (w > 0)):
        i = int(np.flatnonzero(~(np.isfinite(w) & (w > 0)))[0])
        raise MetricAxiomError("weights must be positive and finite",
                               witness=(i, float(w[i])))
    if np.any(np.diag(d) != 0.0):
        i = int(np.flatnonzero(np.diag(d) != 0.0)[0])
        raise MetricAxiomError("nonzero diagonal distance", witness=(i, float(d[i, i])))
    off = d + np.eye(m)  # lift the diagonal so only off-diagonal zeros trip
    if np.any(off <= 0):
        i, j = np.argwhere(off <= 0)[0]
        raise MetricAxiomError("distinct points at distance <= 0",
                               witness=(int(i), int(j), float(d[i, j])))
    scale = float(d.max()) if m > 1 else 1.0
    asym = np.abs(d - d.T)
    if float(asym.max(initial=0.0)) > 1e-12 * max(1.0, scale):
        i, j = np.argwhere(asym == asym.max())[0]
        raise MetricAxiomError("asymmetric distances",
                               witness=(int(i), int(j), float(d[i, j]), float(d[j, i])))
    tol = 1e-12 * max(1.0, scale)
    for k in range(m):
        via = d[:, k][:, None] + d[k, :][None, :]
        bad = d - via
        worst = float(bad.max())
        if worst > tol:
            i, j = np.argwhere(bad == worst)[0]
            raise MetricAxiomError(
                "triangle inequality fails",
                witness=(int(i), int(j), int(k), float(d[i, j]), float(via[i, j])),
            )


class MetricMeasureSpace:
    """Validated finite metric measure space (distances, weights, optional
    coordinates used only for plotting/regeneration)."""

    def __init__(self, dmat, weights, points=None, validate: bool = True):
        d = np.ascontiguousarray(dmat, dtype=np.float64)
        w = np.ascontiguousarray(weights, dtype=np.float64).reshape(-1)
        if validate:
            _validate_metric(d, w)
        self.d = d
        self.w = w
        self.d.setflags(write=False)
        self.w.setflags(write=False)
        self.points = None if points is None else np.asarray(points, dtype=np.float64)
        self._cache: dict = {}

    @property
    def m(self) -> int:
        return self.w.size

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.w))

    # ------------------------------------------------------- sorted tables

    @property
    def orders(self) -> np.ndarray:
        """Per-center stable distance order of all points (ties by index)."""
        if "orders" not in self._cache:
            o = np.argsort(self.d, axis=1, kind="stable").astype(np.int64)
            o.setflags(write=False)
            self._cache["orders"] = o
        return self._cache["orders"]

    @property
    def sorted_d(self) -> np.ndarray:
        if "sorted_d" not in self._cache:
            sd = np.take_along_axis(self.d, self.orders, axis=1)
            sd.setflags(write=False)
            self._cache["sorted_d"] = sd
        return self._cache["sorted_d"]

    @property
    def wcum(self) -> np.ndarray:
        """Cumulative weight along each center's distance order."""
        if "wcum" not in self._cache:
            wc = np.cumsum(self.w[self.orders], axis=1)
            wc.setflags(write=False)
            self._cache["wcum"] = wc
        return self._cache["wcum"]

    def group_ends(self, center: int) -> np.ndarray:
        """Sorted positions ending a tie group of equal distances; prefixes
        up to these positions are exactly the realized ball member sets."""
        ds = self.sorted_d[center]
        ends = np.flatnonzero(np.append(ds[1:] != ds[:-1], True))
        return ends

    def critical_radii(self, center: int) -> np.ndarray:
        """One radius per realized member set of balls at this center:
        midpoints between consecutive distinct distances, then one value
        past the largest distance."""
        ds = self.sorted_d[center]
        vals = np.unique(ds)
        if vals.size == 1:  # single point space
            return np.array([1.0])
        mids = 0.5 * (vals[:-1] + vals[1:])
        beyond = 1.5 * float(vals[-1]) + 1.0
        return np.append(mids, beyond)

    # ------------------------------------------------------- ball algebra

    def members(self, ball: Ball) -> np.ndarray:
        if not 0 <= ball.center < self.m:
            raise ValueError(f"center {ball.center} out of range (m={self.m})")
        return self.d[ball.center] < ball.radius

    def measure_mask(self, mask: np.ndarray) -> float:
        return float(np.sum(self.w[mask]))

    def measure(self, ball: Ball) -> float:
        return self.measure_mask(self.members(ball))

    def integral_mask(self, f: np.ndarray, mask: np.ndarray) -> float:
        """Integral of f over the member set (weighted sum)."""
        return float(np.sum(self.w[mask] * f[mask]))

    def average_mask(self, f: np.ndarray, mask: np.ndarray) -> float:
        wsum = float(np.sum(self.w[mask]))
        if wsum == 0.0:
            raise ValueError("average over an empty member set")
        return float(np.sum(self.w[mask] * f[mask])) / wsum

    def osc_mask(self, f: np.ndarray, mask: np.ndarray) -> float:
        """Weighted mean oscillation of f over the member set."""
        avg = self.average_mask(f, mask)
        wsum = float(np.sum(self.w[mask]))
        return float(np.sum(self.w[mask] * np.abs(f[mask] - avg))) / wsum

    def check_values(self, f) -> np.ndarray:
        v = np.ascontiguousarray(f, dtype=np.float64).reshape(-1)
        if v.size != self.m:
            raise ValueError(f"need {self.m} point values, got {v.size}")
        if not np.all(np.isfinite(v)):
            i = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValueError(f"non-finite value at point {i}: {v[i]}")
        return v


def build_space(points=None, dmat=None, weights=None, validate: bool = True) -> MetricMeasureSpace:
    """Space from coordinates (Euclidean metric) or an explicit matrix."""
    if (points is None) == (dmat is None):
        raise ValueError("provide exactly one of points / dmat")
    if points is not None:
        return space_from_points(points, weights)
    d = np.asarray(dmat, dtype=np.float64)
    w = np.ones(d.shape[0]) if weights is None else weights
    return MetricMeasureSpace(d, w, validate=validate)


def space_from_points(points, weights=None) -> MetricMeasureSpace:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=2))
    w = np.ones(pts.shape[0]) if weights is None else weights
    return MetricMeasureSpace(d, w, points=pts)


def doubling_constant(space: MetricMeasureSpace) -> float:
    """Exact sup over centers x and real radii r > 0 of
    mu(B(x, 2r)) / mu(B(x, r)).

    Member sets of B(x, r) and B(x, 2r) only change when r crosses a
    distance value v or a half-value v/2, so scanning midpoints of the
    refined breakpoint grid {v} U {v/2} gives the true supremum.
    """
    if "doubling" in space._cache:
        return space._cache["doubling"]
    best = 1.0
    for c in range(space.m):
        ds = space.sorted_d[c]
        pos = np.unique(ds[ds > 0])
        if pos.size == 0:
            continue
        grid = np.unique(np.concatenate([pos, 0.5 * pos]))
        radii = np.concatenate([
            [0.5 * grid[0]],
            0.5 * (grid[:-1] + grid[1:]),
            [1.5 * grid[-1] + 1.0],
        ])
        k_r = np.searchsorted(ds, radii, side="left")
        k_2r = np.searchsorted(ds, 2.0 * radii, side="left")
        mu_r = space.wcum[c][k_r - 1]
        mu_2r = space.wcum[c][k_2r - 1]
        cand = float(np.max(mu_2r / mu_r))
        if cand > best:
            best = cand
    space._cache["doubling"] = best
    return best


def vitali_subcover(space: MetricMeasureSpace, balls) -> list[int]:
    """Greedy 5r-covering selection: scan by non-increasing radius (ties by
    input position), keep balls whose member sets are disjoint from all
    kept ones.  Returns indices into `balls` in selection order.

    Postconditions (checked): kept member sets pairwise disjoint; every
    input ball's member set lies in the union of the kept 5-dilates.
    """
    balls = list(balls)
    order = sorted(range(len(balls)), key=lambda i: (-balls[i].radius, i))
    kept: list[int] = []
    union = np.zeros(space.m, dtype=bool)
    for i in order:
        mem = space.members(balls[i])
        if not np.any(mem & union):
            kept.append(i)
            union |= mem

    cover5 = np.zeros(space.m, dtype=bool)
    for i in kept:
        cover5 |= space.members(balls[i].dilate(5.0))
    seen = np.zeros(space.m, dtype=bool)
    for i, b in enumerate(balls):
        mem = space.members(b)
        seen |= mem
        if np.any(mem & ~cover5):
            raise InvariantViolation("input ball escapes the kept 5-dilates",
                                     ball=b, index=i)
    for a_pos in range(len(kept)):
        for b_pos in range(a_pos + 1, len(kept)):
            ma = space.members(balls[kept[a_pos]])
            mb = space.members(balls[kept[b_pos]])
            if np.any(ma & mb):
                raise InvariantViolation("kept balls intersect",
                                         first=balls[kept[a_pos]],
                                         second=balls[kept[b_pos]])
    return kept


# ------------------------------------------------------------------ maximal


def _maximal(space: MetricMeasureSpace, g: np.ndarray, mask0: np.ndarray) -> np.ndarray:
    """Per-point sup of ball averages of g >= 0 over realized balls whose
    member sets contain the point and sit inside mask0; -inf where no ball
    qualifies (point outside mask0)."""
    orders = space.orders
    wcum, fcum, _ = kernels.ball_tables(orders, space.w, g)
    out = np.full(space.m, -np.inf)
    for c in range(space.m):
        if not mask0[c]:
            continue
        ends = space.group_ends(c)
        inb = mask0[orders[c]]
        bad = np.flatnonzero(~inb)
        first_out = bad[0] if bad.size else space.m
        allowed = ends[ends < first_out]
        if allowed.size == 0:
            continue
        avg = fcum[c][allowed] / wcum[c][allowed]
        sufmax = np.maximum.accumulate(avg[::-1])[::-1]
        # position k of a point maps to its tie group's end, then to the
        # best average over allowed enclosing balls
        grp = np.searchsorted(ends, np.arange(space.m), side="left")
        n_allowed = allowed.size
        for k in range(space.m):
            gi = grp[k]
            if gi >= n_allowed:
                break  # sorted order: later points only lie in larger balls
            j = orders[c, k]
            v = sufmax[gi]
            if v > out[j]:
                out[j] = v
    return out


def hl_maximal_restricted(space: MetricMeasureSpace, f, b0: Ball) -> np.ndarray:
    """Hardy-Littlewood maximal function restricted to b0: at each point of
    b0, the largest |f|-average over realized balls containing the point
    with member set inside b0; NaN outside b0."""
    g = np.abs(space.check_values(f))
    mask0 = space.members(b0)
    out = _maximal(space, g, mask0)
    if np.any(~np.isfinite(out[mask0])):
        # every point of B0 sees at least its own singleton ball
        raise InvariantViolation("point of B0 with no admissible ball")
    out[~mask0] = np.nan
    return out


def global_maximal(space: MetricMeasureSpace, f) -> np.ndarray:
    """Unrestricted maximal |f|-average over all realized balls."""
    g = np.abs(space.check_values(f))
    return _maximal(space, g, np.ones(space.m, dtype=bool))


def bmo_norm_metric(space: MetricMeasureSpace, f) -> float:
    """Largest weighted mean oscillation of f over all realized balls."""
    v = space.check_values(f)
    wcum, _, osc = kernels.ball_tables(space.orders, space.w, v)
    best = 0.0
    for c in range(space.m):
        ends = space.group_ends(c)
        cand = float(np.max(osc[c][ends] / wcum[c][ends]))
        if cand > best:
            best = cand
    return best


# ------------------------------------------------------------- admissible


@dataclass
class BallFamily:
    """A candidate family for the JN_p functional with its admissibility
    flags: centers in B0, member sets inside 11*B0, and pairwise disjoint
    (1/5)-dilates.  `truncated` records that 11*B0 already swallows every
    point, so containment could not be certified geometrically."""

    balls: tuple[Ball, ...]
    centered: bool
    contained: bool
    fifth_disjoint: bool
    truncated: bool
    witness: dict

    @property
    def admissible(self) -> bool:
        return self.centered and self.contained and self.fifth_disjoint


def check_admissible(space: MetricMeasureSpace, b0: Ball, balls) -> BallFamily:
    balls = tuple(balls)
    mask0 = space.members(b0)
    big = space.members(b0.dilate(11.0))
    witness: dict = {}

    centered = True
    for b in balls:
        if not mask0[b.center]:
            centered = False
            witness.setdefault("off_center", b)
            break
    contained = True
    for b in balls:
        if np.any(space.members(b) & ~big):
            contained = False
            witness.setdefault("escapes_11B0", b)
            break
    fifth_disjoint = True
    fifths = [space.members(b.dilate(0.2)) for b in balls]
    for i in range(len(balls)):
        for j in range(i + 1, len(balls)):
            if np.any(fifths[i] & fifths[j]):
                fifth_disjoint = False
                witness.setdefault("fifth_overlap", (balls[i], balls[j]))
                break
        if not fifth_disjoint:
            break
    return BallFamily(
        balls=balls,
        centered=centered,
        contained=contained,
        fifth_disjoint=fifth_disjoint,
        truncated=bool(np.all(big)),
        witness=witness,
    )


@dataclass
class JnSearchResult:
    """Certified lower bound for the metric JN_p functional."""

    value: float  # sum mu(B_i) osc(B_i)^p over the best family found
    norm: float   # value ** (1/p)
    p: float
    family: BallFamily
    evaluations: int


def jnp_metric_lower(space: MetricMeasureSpace, f, b0: Ball, p: float,
                     budget: int = 4000) -> JnSearchResult:
    """Deterministic search for a heavy admissible family.

    Candidate stream (fixed order, independent of budget, so the result is
    non-decreasing in budget): all realized single-ball families, Vitali
    subcovers at several radius scales (both the disjoint balls and their
    5-dilates), steepest-ascent add/swap moves over the realized pool, and
    finally a depth-first enumeration of admissible pool subsets, which
    completes on small spaces and turns the lower bound into the exact pool
    supremum there.  Every candidate family / move probe counts against
    `budget`.
    """
    v = space.check_values(f)
    p = float(p)
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    mask0 = space.members(b0)
    big = space.members(b0.dilate(11.0))

    def term(ball: Ball) -> float | None:
        """mu * osc^p of one ball, or None when it escapes 11*B0."""
        mem = space.members(ball)
        if np.any(mem & ~big):
            return None
        return space.measure_mask(mem) * space.osc_mask(v, mem) ** p

    # realized candidate pool: one ball per (center in B0, tie group)
    pool: list[Ball] = []
    pool_term: list[float] = []
    for c in range(space.m):
        if not mask0[c]:
            continue
        for r in space.critical_radii(c):
            ball = Ball(c, float(r))
            t = term(ball)
            if t is not None:
                pool.append(ball)
                pool_term.append(t)

    evals = 0
    best_val = 0.0
    best_balls: tuple[Ball, ...] = ()
    best_pool_idx: tuple[int, ...] = ()

    def consider(val: float, balls, idx=()) -> None:
        nonlocal best_val, best_balls, best_pool_idx
        if val > best_val:
            best_val = val
            best_balls = tuple(balls)
            best_pool_idx = tuple(idx)

    # 1. singletons
    for i in range(len(pool)):
        if evals >= budget:
            break
        evals += 1
        consider(pool_term[i], (pool[i],), (i,))

    # 2. Vitali seeds at a few radius scales
    if pool and evals < budget:
        radii = np.array([b.radius for b in pool])
        scales = np.quantile(radii, [0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
        for s in scales:
            if evals >= budget:
                break
            largest_below: dict[int, int] = {}
            for i, b in enumerate(pool):  # per center, radii ascend
                if b.radius <= s:
                    largest_below[b.center] = i
            cand_idx = [largest_below[c] for c in sorted(largest_below)]
            if not cand_idx:
                continue
            kept = vitali_subcover(space, [pool[i] for i in cand_idx])
            fam = tuple(sorted(cand_idx[k] for k in kept))
            evals += 1
            consider(float(sum(pool_term[i] for i in fam)),
                     tuple(pool[i] for i in fam), fam)
            # disjoint balls have disjoint fifths, and so do their 5-dilates
            if evals >= budget:
                break
            dil, dil_terms = [], []
            for i in fam:
                bb = pool[i].dilate(5.0)
                t = term(bb)
                if t is not None:
                    dil.append(bb)
                    dil_terms.append(t)
            if dil:
                evals += 1
                consider(float(sum(dil_terms)), tuple(dil))

    # 3. steepest ascent (runs when the incumbent is a pool family)
    if best_pool_idx and evals < budget:
        cur = list(best_pool_idx)
        cur_fifth = {i: space.members(pool[i].dilate(0.2)) for i in cur}
        improved = True
        while improved and evals < budget:
            improved = False
            best_gain, best_move = 0.0, None
            for j in range(len(pool)):
                if evals >= budget:
                    break
                if j in cur_fifth:
                    continue
                evals += 1
                fj = space.members(pool[j].dilate(0.2))
                clash = [i for i in cur if np.any(fj & cur_fifth[i])]
                if not clash:
                    gain = pool_term[j]
                    if gain > best_gain:
                        best_gain, best_move = gain, ("add", j)
                elif len(clash) == 1:
                    gain = pool_term[j] - pool_term[clash[0]]
                    if gain > best_gain:
                        best_gain, best_move = gain, ("swap", j, clash[0])
            if best_move is not None:
                j = best_move[1]
                if best_move[0] == "swap":
                    old = best_move[2]
                    cur.remove(old)
                    del cur_fifth[old]
                cur.append(j)
                cur.sort()
                cur_fifth[j] = space.members(pool[j].dilate(0.2))
                improved = True
        consider(float(sum(pool_term[i] for i in cur)),
                 tuple(pool[i] for i in cur), tuple(cur))

    # 4. exhaustive subset enumeration over the deduplicated pool with the
    # remaining budget; same-center balls always clash, so the admissible
    # count stays tame on small spaces and the DFS finishes there
    if pool and evals < budget:
        sig_first: dict[bytes, int] = {}
        for i, b in enumerate(pool):
            key = (space.members(b).tobytes()
                   + space.members(b.dilate(0.2)).tobytes())
            sig_first.setdefault(key, i)
        dedup = sorted(sig_first.values())
        fifth = {i: space.members(pool[i].dilate(0.2)) for i in dedup}

        def extend(chosen: tuple[int, ...], start: int, val: float) -> None:
            nonlocal evals
            for t in range(start, len(dedup)):
                if evals >= budget:
                    return
                i = dedup[t]
                if any(np.any(fifth[i] & fifth[j]) for j in chosen):
                    continue
                grown = chosen + (i,)
                evals += 1
                consider(val + pool_term[i],
                         tuple(pool[j] for j in grown), grown)
                extend(grown, t + 1, val + pool_term[i])

        extend((), 0, 0.0)

    family = check_admissible(space, b0, best_balls)
    if best_balls and not family.admissible:
        raise InvariantViolation("search produced an inadmissible family",
                                 flags=(family.centered, family.contained,
                                        family.fifth_disjoint))
    return JnSearchResult(
        value=best_val,
        norm=best_val ** (1.0 / p) if best_val > 0 else 0.0,
        p=p,
        family=family,
        evaluations=evals,
    )


# ------------------------------------------------------------------- IO


def space_to_csv(space: MetricMeasureSpace, path) -> None:
    """Header ``m,<m>``; then one row per point: m distances then the weight."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"m,{space.m}\n")
        for i in range(space.m):
            row = [repr(float(x)) for x in space.d[i]] + [repr(float(space.w[i]))]
            fh.write(",".join(row) + "\n")


def space_from_csv(path) -> MetricMeasureSpace:
    with open(path, "r", encoding="ascii") as fh:
        head = fh.readline().strip().split(",")
        if len(head) != 2 or head[0] != "m":
            raise ValueError(f"malformed space header: {head!r}")
        m = int(head[1])
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if len(rows) != m:
        raise ValueError(f"expected {m} rows, got {len(rows)}")
    d = np.empty((m, m))
    w = np.empty(m)
    for i, row in enumerate(rows):
        if len(row) != m + 1:
            raise ValueError(f"row {i} has {len(row)} fields, expected {m + 1}")
        d[i] = [float(x) for x in row[:m]]
        w[i] = float(row[m])
    return MetricMeasureSpace(d, w)


def values_to_csv(f: np.ndarray, path) -> None:
    """Header ``m,<m>``; then ``index,value`` rows."""
    v = np.asarray(f, dtype=np.float64).reshape(-1)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"m,{v.size}\n")
        for i, x in enumerate(v):
            fh.write(f"{i},{repr(float(x))}\n")


def values_from_csv(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        head = fh.readline().strip().split(",")
        if len(head) != 2 or head[0] != "m":
            raise ValueError(f"malformed values header: {head!r}")
        m = int(head[1])
        out = np.full(m, np.nan)
        for line in fh:
            if not line.strip():
                continue
            idx, val = line.strip().split(",")
            out[int(idx)] = float(val)
    if np.any(np.isnan(out)):
        missing = int(np.flatnonzero(np.isnan(out))[0])
        raise ValueError(f"missing value for point {missing}")
    return out
