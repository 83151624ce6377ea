import numpy as np
import pytest

from jnlab.dyadic_cz import (check_good_lambda_dyadic, cz_decompose_dyadic,
                             dyadic_maximal, level_set, verify_jn_dyadic)
from jnlab.errors import PreconditionError
from jnlab.functionals import jnp_bruteforce
from jnlab.grid import DyadicCube, GridFunction, RootCube, average, cube_from_zindex
from jnlab.report import all_pass


def unit(dim):
    return RootCube(dim, (0.0,) * dim, 1.0)


def rand_f(dim, depth, seed, lo=-1.0, hi=1.0):
    rng = np.random.default_rng(seed)
    return GridFunction(unit(dim), depth, rng.uniform(lo, hi, 1 << (dim * depth)))


def brute_maximal(f, q0):
    """Max of |f|-averages over all dyadic ancestors, per finest cell of q0
    in local lexicographic order, plus the shallowest attaining depth."""
    from jnlab.grid import _lex_to_z_perm
    g = f.with_values(np.abs(f.values))
    local_depth = f.max_depth - q0.depth
    n_local = 1 << (f.dim * local_depth)
    perm = _lex_to_z_perm(f.dim, local_depth)
    z0 = q0.zindex() << (f.dim * local_depth)
    vals = np.empty(n_local)
    prov = np.empty(n_local, dtype=np.int64)
    for lex in range(n_local):
        z = z0 + int(perm[lex])
        best, bdepth = -np.inf, -1
        for depth in range(q0.depth, f.max_depth + 1):
            cz = z >> (f.dim * (f.max_depth - depth))
            c = cube_from_zindex(f.root, depth, cz)
            a = average(g, c)
            if a > best:
                best, bdepth = a, depth
        vals[lex] = best
        prov[lex] = bdepth
    return vals, prov


def test_maximal_matches_bruteforce_exact():
    for dim in (1, 2):
        for depth in (1, 2, 3):
            for seed in range(6):
                f = rand_f(dim, depth, seed * 7 + depth)
                field = dyadic_maximal(f, f.root.top())
                vals, prov = brute_maximal(f, f.root.top())
                assert np.array_equal(field.values, vals)
                assert np.array_equal(field.provenance, prov)


def test_maximal_on_subcube():
    f = rand_f(1, 4, 5)
    q0 = DyadicCube(f.root, 1, (1,))
    field = dyadic_maximal(f, q0)
    vals, prov = brute_maximal(f, q0)
    assert np.array_equal(field.values, vals)
    assert np.array_equal(field.provenance, prov)


def test_maximal_dominates_function():
    f = rand_f(2, 3, 11)
    field = dyadic_maximal(f, f.root.top())
    assert np.all(field.values >= np.abs(f.values))


def test_level_set_hand_value():
    f = GridFunction(unit(1), 3, np.r_[np.zeros(4), np.ones(4)])
    field = dyadic_maximal(f, f.root.top())
    e = level_set(field, 0.6)
    assert e.measure == 0.5
    assert np.array_equal(e.indices(), np.arange(4, 8))


def test_cz_hand_selection():
    f = GridFunction(unit(1), 3, np.r_[np.zeros(4), np.ones(4)])
    cover = cz_decompose_dyadic(f, f.root.top(), 0.6)
    assert [(c.depth, c.index) for c in cover.cubes] == [(1, (1,))]
    assert cover.averages == (1.0,)
    assert cover.union_measure == 0.5


def test_cz_requires_dominating_level():
    f = rand_f(1, 4, 0, lo=0.5, hi=1.0)
    with pytest.raises(PreconditionError):
        cz_decompose_dyadic(f, f.root.top(), 0.1)


def test_cz_properties_random():
    # selection bounds, disjointness, weak-type bound, small residual
    checked = 0
    for seed in range(60):
        dim = 1 + seed % 2
        f = rand_f(dim, 3 + seed % 3, seed, lo=-1.0, hi=2.0)
        q0 = f.root.top()
        g = f.with_values(np.abs(f.values))
        avg0 = average(g, q0)
        lam = avg0 * (1.1 + (seed % 5) * 0.3)
        cover = cz_decompose_dyadic(f, q0, lam)
        arity = 1 << dim
        union_cells = 0
        integral_union = 0.0
        for c, a in zip(cover.cubes, cover.averages):
            assert a == average(g, c)
            assert lam < a <= arity * lam
            union_cells += 1 << (dim * (f.max_depth - c.depth))
            integral_union += c.measure * a
        assert cover.union_measure * lam <= integral_union * (1 + 1e-9)
        if cover.cubes:
            checked += 1
        # maximal level set equals the union of selected cubes
        e = level_set(dyadic_maximal(f, q0), lam)
        assert e.count == union_cells
        # residual: |f| <= lam off the union
        res = cover.residual.indices()
        if res.size:
            assert np.max(np.abs(f.values[res])) <= lam
    assert checked >= 30  # the suite exercises nonempty covers


def test_cz_cubes_disjoint():
    f = rand_f(2, 3, 17, lo=0.0, hi=3.0)
    q0 = f.root.top()
    lam = average(f, q0) * 1.2
    cover = cz_decompose_dyadic(f, q0, lam)
    seen = set()
    for c in cover.cubes:
        width = 2 * (f.max_depth - c.depth)
        z0 = c.zindex() << width
        block = set(range(z0, z0 + (1 << width)))
        assert not seen & block
        seen |= block


def test_good_lambda_random():
    for seed in range(30):
        dim = 1 + seed % 2
        f = rand_f(dim, 3, seed + 50)
        q0 = f.root.top()
        b = 2.0 ** (-(dim + 1))
        k = jnp_bruteforce(f, q0, 2.0, 3 if dim == 1 else 2).norm
        if k == 0.0:
            continue
        rep = None
        for t in (1.0, 2.0, 5.0):
            from jnlab.grid import mean_oscillation
            lam = t * mean_oscillation(f, q0) / b
            if lam <= 0:
                continue
            rep = check_good_lambda_dyadic(f, q0, 2.0, b, lam, K=k)
            assert rep.passed, (seed, t, rep.to_dict())
        assert rep is None or rep.constant == 1.0 / (1.0 - (1 << dim) * b)


def test_good_lambda_validates_inputs():
    f = rand_f(1, 3, 2)
    q0 = f.root.top()
    with pytest.raises(ValueError):
        check_good_lambda_dyadic(f, q0, 2.0, 0.5, 1.0)  # b >= 2^-n
    with pytest.raises(PreconditionError):
        check_good_lambda_dyadic(f, q0, 2.0, 0.25, 1e-9)  # lam below threshold


def test_verify_jn_dyadic_all_pass_and_branches():
    f = rand_f(1, 7, 23)
    reports = verify_jn_dyadic(f, f.root.top(), 2.0, n_lambda=40)
    assert len(reports) == 40
    assert all_pass(reports)
    branches = {r.witness["branch"] for r in reports}
    assert branches == {"small", "large"}
    # bound constants match the two-branch formula
    n = 1
    for r in reports:
        if r.witness["branch"] == "small":
            assert r.constant == 2.0 ** ((n + 1) * 2.0)
        else:
            assert r.constant == 2.0 ** (2.0 + (n + 1) * (4.0 + 1.0))


def test_verify_jn_dyadic_degenerate_constant():
    f = GridFunction(unit(1), 5, np.full(32, 1.5))
    reports = verify_jn_dyadic(f, f.root.top(), 2.0)
    assert len(reports) == 1
    assert reports[0].degenerate
    assert reports[0].passed
