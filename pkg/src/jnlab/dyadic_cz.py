"""Dyadic maximal function, Calderon-Zygmund cube selection, and the
good-lambda / weak-type John-Nirenberg checks on grid functions.

The maximal value at a cell is the largest average of |f| over the dyadic
cubes containing it (within a fixed ancestor cube Q0).  CZ selection at
level lam keeps the maximal dyadic cubes whose |f|-average exceeds lam;
coarser cubes are inspected first, so the kept cubes are pairwise disjoint
and their parents all have average <= lam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvariantViolation, PreconditionError
from .grid import (
    CellSet,
    DyadicCube,
    GridFunction,
    average,
    cube_from_zindex,
    mean_oscillation,
    _lex_to_z_perm,
)
from .report import CheckReport, degenerate_report

__all__ = [
    "CzCover",
    "MaximalField",
    "check_good_lambda_dyadic",
    "cz_decompose_dyadic",
    "dyadic_maximal",
    "level_set",
    "verify_jn_dyadic",
]


@dataclass
class MaximalField:
    """Maximal averages over the subtree of ``q0``.

    ``values``/``provenance`` are per finest cell of q0 in local
    lexicographic order; provenance is the depth of the shallowest
    ancestor cube attaining the maximum.
    """

    q0: DyadicCube
    max_depth: int
    values: np.ndarray
    provenance: np.ndarray
    _zvalues: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.values.max())


def _local_pyramid(f: GridFunction, q0: DyadicCube, pyramid):
    local_depth = f.max_depth - q0.depth
    off = kernels.pyramid_offsets(local_depth, f.dim)
    buf = np.empty(off[-1], dtype=np.float64)
    for rel in range(local_depth + 1):
        buf[off[rel]:off[rel + 1]] = f.pyramid_slice(pyramid, q0, rel)
    return buf, off


def dyadic_maximal(f: GridFunction, q0: DyadicCube) -> MaximalField:
    """Per-cell max of ancestor |f|-averages within q0, with provenance."""
    f._check_cube(q0)
    buf, off = _local_pyramid(f, q0, f.abs_pyramid())
    zrun, zprov = kernels.maximal_sweep(buf, off, f.dim)
    local_depth = f.max_depth - q0.depth
    perm = _lex_to_z_perm(f.dim, local_depth)
    return MaximalField(
        q0=q0,
        max_depth=f.max_depth,
        values=zrun[perm],
        provenance=zprov[perm] + q0.depth,
        _zvalues=zrun,
    )


def level_set(field: MaximalField, lam: float) -> CellSet:
    """Cells of q0 where the maximal value strictly exceeds ``lam``,
    as a bitmask over the full grid."""
    q0 = field.q0
    dim = q0.root.dim
    width = dim * (field.max_depth - q0.depth)
    zmask = np.zeros(1 << (dim * field.max_depth), dtype=bool)
    z0 = q0.zindex() << width
    zmask[z0:z0 + (1 << width)] = field._zvalues > lam
    return CellSet.from_zmask(q0.root, field.max_depth, zmask,
                              _lex_to_z_perm(dim, field.max_depth))


@dataclass
class CzCover:
    """Maximal dyadic cubes with |f|-average in (lam, 2^n lam], plus the
    residual cells where |f| <= lam."""

    lam: float
    q0: DyadicCube
    cubes: tuple[DyadicCube, ...]
    averages: np.ndarray
    residual: CellSet

    @property
    def union_measure(self) -> float:
        return float(sum(q.measure for q in self.cubes))


def cz_decompose_dyadic(f: GridFunction, q0: DyadicCube, lam: float) -> CzCover:
    """Stopping-time selection of the maximal dyadic subcubes of q0 whose
    |f|-average exceeds lam; requires the q0 average itself to be <= lam.
    """
    f._check_cube(q0)
    lam = float(lam)
    pyr = f.abs_pyramid()
    local_depth = f.max_depth - q0.depth
    arity = 1 << f.dim

    avg0 = float(f.pyramid_slice(pyr, q0, 0)[0]) / float(arity**local_depth)
    if avg0 > lam:
        raise PreconditionError(
            "cz level must dominate the root |f| average", average=avg0, lam=lam
        )

    picked: list[tuple[int, int]] = []  # (relative depth, local z)
    picked_avgs: list[float] = []
    active = np.ones(1, dtype=bool)
    for rel in range(1, local_depth + 1):
        cnt = 1 << (f.dim * (local_depth - rel))
        avgs = f.pyramid_slice(pyr, q0, rel) * (1.0 / float(cnt))
        active = np.repeat(active, arity)
        sel = active & (avgs > lam)
        for z in np.flatnonzero(sel):
            picked.append((rel, int(z)))
            picked_avgs.append(float(avgs[z]))
        active &= ~sel

    # cubes in (depth, z) order; on an empty subtree level the loop still ran
    picked.sort()  # already sorted by construction; keep the guarantee explicit
    cubes = tuple(
        cube_from_zindex(f.root, q0.depth + rel, (q0.zindex() << (f.dim * rel)) + z)
        for rel, z in picked
    )

    width = f.dim * local_depth
    zres = np.zeros(1 << (f.dim * f.max_depth), dtype=bool)
    zres[q0.zindex() << width:(q0.zindex() + 1) << width] = active
    residual = CellSet.from_zmask(f.root, f.max_depth, zres,
                                  _lex_to_z_perm(f.dim, f.max_depth))

    cover = CzCover(lam, q0, cubes, np.asarray(picked_avgs), residual)
    _verify_cz(f, cover)
    return cover


def _verify_cz(f: GridFunction, cover: CzCover) -> None:
    lam, arity = cover.lam, 1 << f.dim
    for q, avg in zip(cover.cubes, cover.averages):
        if not (avg > lam):
            raise InvariantViolation("selected cube average not above level",
                                     cube=q, average=avg, lam=lam)
        if not (avg <= arity * lam):
            raise InvariantViolation("selected cube average above 2^n * level",
                                     cube=q, average=avg, lam=lam)
    if cover.residual.count:
        res_vals = np.abs(f.values[cover.residual.mask])
        worst = float(res_vals.max())
        if worst > lam:
            raise InvariantViolation("residual cell above level", value=worst, lam=lam)
    total = cover.union_measure
    integral = sum(float(avg) * q.measure for q, avg in zip(cover.cubes, cover.averages))
    if lam > 0 and total * lam > integral * (1.0 + 1e-9) + 1e-300:
        raise InvariantViolation("union measure exceeds integral / level",
                                 union=total, integral=integral, lam=lam)


def check_good_lambda_dyadic(
    f: GridFunction,
    q0: DyadicCube,
    p: float,
    b: float,
    lam: float,
    K: float | None = None,
    _field: MaximalField | None = None,
) -> CheckReport:
    """One good-lambda comparison for h = f - avg_{Q0} f:

        |{M h > lam}|  <=  (a K / lam) |{M h > b lam}|^(1/q),

    a = 1/(1 - 2^n b), q = p/(p-1), K = dyadic JN_p norm by default.
    Requires 0 < b < 2^-n and lam >= osc_{Q0}(f) / b.
    """
    from .functionals import jnp_dyadic

    p = float(p)
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    arity = 1 << f.dim
    if not 0 < b < 1.0 / arity:
        raise PreconditionError("b must lie in (0, 2^-n)", b=b, dim=f.dim)
    threshold = mean_oscillation(f, q0) / b
    if lam < threshold * (1.0 - 1e-12):
        raise PreconditionError("lambda below the good-lambda threshold",
                                lam=lam, threshold=threshold)
    field = _field
    if field is None:
        h = f.shifted(average(f, q0))
        field = dyadic_maximal(h, q0)
    if K is None:
        K = jnp_dyadic(f, q0, p).norm
    a = 1.0 / (1.0 - arity * b)
    q = p / (p - 1.0)
    lhs = level_set(field, lam).measure
    eb = level_set(field, b * lam).measure
    rhs = (a * K / lam) * eb ** (1.0 / q)
    return CheckReport(
        claim="good-lambda-dyadic",
        lhs=lhs,
        rhs=rhs,
        constant=a,
        lam=float(lam),
        witness={"b": float(b), "p": p, "q": q, "K": float(K),
                 "measure_at_b_lambda": eb},
    )


def verify_jn_dyadic(f: GridFunction, q0: DyadicCube, p: float,
                     n_lambda: int = 60) -> list[CheckReport]:
    """Weak-type John-Nirenberg sweep on the dyadic maximal sets of
    h = f - avg_{Q0} f:

        |{M h > lam}| <= C (K/lam)^p,

    with C = 2^((n+1)p) for lam <= eta = K / (b |Q0|^(1/p)), b = 2^-(n+1),
    and C = 2^(p + (n+1)(p^2 + (p/q)^3)) above eta, K the dyadic JN_p norm.
    """
    from .functionals import jnp_dyadic

    p = float(p)
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    K = jnp_dyadic(f, q0, p).norm
    if K == 0.0:
        return [degenerate_report("jn-weak-lp-dyadic", "constant function, K = 0")]
    n = f.dim
    q = p / (p - 1.0)
    b = 2.0 ** -(n + 1)
    eta = K / (b * q0.measure ** (1.0 / p))
    c_small = 2.0 ** ((n + 1) * p)
    c_large = 2.0 ** (p + (n + 1) * (p**2 + (p / q) ** 3))

    h = f.shifted(average(f, q0))
    field = dyadic_maximal(h, q0)
    lo = eta / 20.0
    hi = 8.0 * max(eta, field.sup, lo * 10.0)
    lams = np.logspace(np.log10(lo), np.log10(hi), n_lambda)

    reports = []
    for lam in lams:
        lam = float(lam)
        small = lam <= eta
        const = c_small if small else c_large
        lhs = level_set(field, lam).measure
        rhs = const * (K / lam) ** p
        reports.append(CheckReport(
            claim="jn-weak-lp-dyadic",
            lhs=lhs,
            rhs=rhs,
            constant=const,
            lam=lam,
            witness={"branch": "small" if small else "large",
                     "eta": float(eta), "K": float(K), "p": p, "b": b},
        ))
    return reports
