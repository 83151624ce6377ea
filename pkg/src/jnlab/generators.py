"""Seeded generators for grid functions, metric spaces, and point values.

Every random generator takes an integer seed and feeds a fresh
``numpy.random.default_rng(seed)``, so outputs are reproducible bytes.
"""

from __future__ import annotations

import numpy as np

from .grid import GridFunction, RootCube, _lex_to_z_perm
from .metric import MetricMeasureSpace, build_space, space_from_points

__all__ = [
    "f_distance",
    "f_log_distance",
    "f_random",
    "gen_constant",
    "gen_grid2d",
    "gen_line",
    "gen_log_singularity",
    "gen_power_singularity",
    "gen_random_cloud",
    "gen_random_martingale",
    "gen_random_uniform",
    "gen_step",
    "gen_tree_graph",
]

def _unit_root(dim: int) -> RootCube:
    return RootCube(dim, (0.0,) * dim, 1.0)


# --------------------------------------------------------------------- grids


def gen_constant(dim: int, depth: int, value: float = 1.0) -> GridFunction:
    return GridFunction(_unit_root(dim), depth,
                        np.full(1 << (dim * depth), float(value)))


def gen_step(dim: int, depth: int) -> GridFunction:
    """Indicator of the half where the first coordinate passes midpoint."""
    root = _unit_root(dim)
    return GridFunction.from_callable(
        root, depth, lambda pts: (pts[:, 0] >= 0.5).astype(np.float64))


def gen_power_singularity(p: float, depth: int) -> GridFunction:
    """x^(-1/p) on (0, 2); the singularity sits on the cube boundary and
    midpoint sampling keeps every value finite."""
    root = RootCube(1, (0.0,), 2.0)
    return GridFunction.from_callable(root, depth,
                                      lambda pts: pts[:, 0] ** (-1.0 / float(p)))


def gen_log_singularity(depth: int) -> GridFunction:
    """log(x) on (0, 1): the canonical unbounded mean-oscillation-bounded
    profile."""
    root = _unit_root(1)
    return GridFunction.from_callable(root, depth, lambda pts: np.log(pts[:, 0]))


def gen_random_uniform(dim: int, depth: int, seed: int) -> GridFunction:
    rng = np.random.default_rng(seed)
    return GridFunction(_unit_root(dim), depth,
                        rng.uniform(0.0, 1.0, 1 << (dim * depth)))


def gen_random_martingale(dim: int, depth: int, seed: int) -> GridFunction:
    """Dyadic martingale: each refinement adds increments that sum to zero
    over every sibling block, scaled by 2^(-k/2) at step k.  Cube averages
    therefore reproduce the coarser values, and two runs with the same seed
    but different depths agree on their common scales."""
    rng = np.random.default_rng(seed)
    arity = 1 << dim
    zvals = np.zeros(1)
    for k in range(depth):
        eps = rng.standard_normal(zvals.size * arity)
        eps = eps - np.repeat(eps.reshape(-1, arity).mean(axis=1), arity)
        zvals = np.repeat(zvals, arity) + eps * 2.0 ** (-0.5 * k)
    # increments above are laid out cube-contiguously; convert to cell order
    vals = zvals[_lex_to_z_perm(dim, depth)]
    return GridFunction(_unit_root(dim), depth, vals)


# -------------------------------------------------------------------- spaces


def gen_line(m: int) -> MetricMeasureSpace:
    """m integer points on a line, unit weights."""
    return space_from_points(np.arange(m, dtype=np.float64))


def gen_grid2d(side: int) -> MetricMeasureSpace:
    """side x side lattice with the graph (L1 hop) metric, unit weights."""
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    pts = np.stack([ii.reshape(-1), jj.reshape(-1)], axis=1).astype(np.float64)
    d = (np.abs(pts[:, None, 0] - pts[None, :, 0])
         + np.abs(pts[:, None, 1] - pts[None, :, 1]))
    space = build_space(dmat=d)
    space.points = pts
    return space


def gen_tree_graph(m: int, seed: int) -> MetricMeasureSpace:
    """Random recursive tree on m nodes with hop distance."""
    rng = np.random.default_rng(seed)
    parent = np.zeros(m, dtype=np.int64)
    for i in range(2, m):
        parent[i] = rng.integers(0, i)
    d = np.zeros((m, m))
    # hop distance via per-node climb to the root; depths are tiny
    def path_to_root(i):
        path = [i]
        while path[-1] != 0:
            path.append(int(parent[path[-1]]))
        return path
    paths = [path_to_root(i) for i in range(m)]
    depth = {i: len(paths[i]) - 1 for i in range(m)}
    anc = [set(p) for p in paths]
    for i in range(m):
        for j in range(i + 1, m):
            lca = max(anc[i] & anc[j], key=lambda x: depth[x])
            dij = float(depth[i] + depth[j] - 2 * depth[lca])
            d[i, j] = d[j, i] = dij
    return build_space(dmat=d)


def gen_random_cloud(m: int, seed: int, dim: int = 2) -> MetricMeasureSpace:
    """Uniform points in the unit cube with Euclidean distance; weights 1."""
    rng = np.random.default_rng(seed)
    return space_from_points(rng.uniform(0.0, 1.0, (m, dim)))


# ---------------------------------------------------------- point functions


def f_log_distance(space: MetricMeasureSpace, anchor: int = 0) -> np.ndarray:
    """log(delta + d(anchor, .)) with delta the smallest positive distance:
    bounded mean oscillation at every scale, unbounded range on big spaces."""
    row = space.d[anchor]
    pos = row[row > 0]
    delta = float(pos.min()) if pos.size else 1.0
    return np.log(delta + row)


def f_distance(space: MetricMeasureSpace, anchor: int = 0) -> np.ndarray:
    return space.d[anchor].copy()


def f_random(space: MetricMeasureSpace, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, space.m)
