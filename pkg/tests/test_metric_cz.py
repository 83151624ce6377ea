import math

import numpy as np
import pytest

from jnlab.errors import PreconditionError
from jnlab.generators import f_log_distance, gen_grid2d, gen_line, gen_random_cloud
from jnlab.metric import Ball, doubling_constant, hl_maximal_restricted, space_from_points
from jnlab.metric_cz import (check_toiterate, compute_witness, cz_balls, g_factor,
                             nested_cz, theorem_constants, verify_bmo_jn,
                             verify_mainresult)
from jnlab.report import all_pass


def spanning_ball(space, center=0):
    return Ball(center, 1.5 * float(space.d[center].max()) + 1.0)


def shifted_abs(space, f, b0):
    return np.abs(f - space.average_mask(f, space.members(b0)))


def threshold(space, g, b0):
    return (space.integral_mask(g, space.members(b0.dilate(11.0)))
            / space.measure_mask(space.members(b0)))


# ---------------------------------------------------------------- constants


def test_theorem_constants_hand_values():
    c = theorem_constants(1.0, 2.0, n=1)
    assert c.q == 2.0
    assert c.C1 == 3.0
    assert c.a == 2.0
    assert c.c1 == 4.0
    assert c.c2 == math.log(2.0) / 2.0
    assert c.dyadic_constant == 2.0 ** 12


def test_theorem_constants_q_conjugate():
    for p in (1.5, 2.0, 3.0, 7.0):
        c = theorem_constants(2.0, p)
        assert np.isclose(1.0 / p + 1.0 / c.q, 1.0, rtol=1e-14)


def test_theorem_constants_lambda0():
    c = theorem_constants(2.0, 2.0, K=3.0, mu_b0=16.0)
    assert c.lambda0 == 3.0 * 2.0 ** 8 * 3.0 / 16.0 ** 0.5


def test_g_factor_base_cases():
    assert g_factor(0, 2.0, 2.0) == 1.0
    assert g_factor(1, 2.0, 2.0) == 1.0
    assert g_factor(1, 3.0, 1.5) == 1.0
    assert g_factor(2, 2.0, 2.0) == 2.0


def test_g_factor_closed_form():
    # 2 ** sum_{i<N} (N-1-i) q^-i, using sum_{i<N} q^-i = p - p q^-N
    for p in (1.5, 2.0, 3.0):
        q = p / (p - 1.0)
        for n in range(7):
            expo = sum((n - 1 - i) * q ** (-i) for i in range(n))
            assert np.isclose(g_factor(n, p, q), 2.0 ** expo, rtol=1e-12)


# ------------------------------------------------------------------ witness


def test_witness_matches_restricted_maximal():
    for seed in range(4):
        s = gen_random_cloud(20, seed + 1)
        f = np.abs(np.random.default_rng(seed).standard_normal(s.m)) + 0.05
        b0 = spanning_ball(s)
        table = compute_witness(s, f, b0)
        mf = hl_maximal_restricted(s, f, b0)
        inside = s.members(b0)
        for x in range(s.m):
            if not inside[x]:
                assert table.balls[x] is None
                continue
            ball = table.balls[x]
            mem = s.members(ball)
            assert mem[x]
            assert not np.any(mem & ~inside)
            assert np.isclose(table.values[x], mf[x], rtol=1e-12, atol=0)


def test_witness_prefers_smaller_balls_on_ties():
    # constant function: every ball has the same average; the witness must
    # be the singleton at the point, by the radius-then-center tie rule
    s = space_from_points(np.arange(5, dtype=np.float64))
    f = np.full(5, 2.0)
    b0 = spanning_ball(s)
    table = compute_witness(s, f, b0)
    for x in range(5):
        mem = s.members(table.balls[x])
        assert mem.sum() == 1 and mem[x]


# ----------------------------------------------------------------- cz_balls


def test_cz_balls_requires_nonnegative():
    s = gen_line(10)
    with pytest.raises(PreconditionError):
        cz_balls(s, np.linspace(-1, 1, 10), spanning_ball(s), 1.0)


def test_cz_balls_requires_dominating_level():
    s = gen_line(10)
    f = np.ones(10)
    with pytest.raises(PreconditionError):
        cz_balls(s, f, spanning_ball(s), 0.5)


def test_cz_balls_selection_properties():
    rng = np.random.default_rng(0)
    for seed in range(10):
        s = gen_random_cloud(25, seed + 40)
        f = np.abs(np.random.default_rng(seed).standard_normal(s.m)) * 3.0
        b0 = spanning_ball(s)
        thr = threshold(s, f, b0)
        top = float(hl_maximal_restricted(s, f, b0)[s.members(b0)].max())
        if top <= thr * 1.05:
            continue
        lam = thr * 1.05
        cover = cz_balls(s, f, b0, lam)
        c = doubling_constant(s)
        big = s.members(b0.dilate(11.0))
        for ball, avg, avg5 in zip(cover.balls, cover.averages, cover.averages5):
            assert lam < avg <= c ** 3 * lam * (1 + 1e-9)
            assert avg5 <= lam * (1 + 1e-9)
            assert avg5 > lam / c ** 3 * (1 - 1e-9)
            assert not np.any(s.members(ball.dilate(5.0)) & ~big)
        # selected balls pairwise disjoint, 5-dilates cover the level set
        for i in range(len(cover.balls)):
            for j in range(i + 1, len(cover.balls)):
                assert not np.any(s.members(cover.balls[i])
                                  & s.members(cover.balls[j]))
        assert not np.any(cover.level_mask & ~cover.union5_mask)
        # residual: maximal values at most lam off the level set
        res = cover.residual_mask
        if np.any(res):
            mf = hl_maximal_restricted(s, f, b0)
            assert float(np.nanmax(mf[res])) <= lam * (1 + 1e-9)


def test_cz_balls_stopping_exponents():
    s = gen_random_cloud(20, 9)
    f = np.abs(np.random.default_rng(9).standard_normal(s.m)) * 2.0
    b0 = spanning_ball(s)
    thr = threshold(s, f, b0)
    lam = thr * 1.1
    table = compute_witness(s, f, b0)
    cover = cz_balls(s, f, b0, lam, witness=table)
    for x, n_x in cover.point_exponents.items():
        assert n_x >= 1
        base = table.balls[x]
        assert s.average_mask(f, s.members(base.dilate(5.0 ** n_x))) <= lam * (1 + 1e-9)
        if n_x > 1:
            assert s.average_mask(f, s.members(base.dilate(5.0 ** (n_x - 1)))) > lam


def test_nested_cz_structure():
    s = gen_grid2d(5)
    f = np.abs(f_log_distance(s, 0)) + 0.1
    b0 = spanning_ball(s)
    thr = threshold(s, f, b0)
    levels = (thr * 1.05, thr * 1.6, thr * 2.4)
    nest = nested_cz(s, f, b0, levels)
    assert nest.levels == levels
    assert len(nest.covers) == 3
    # every higher-level ball is swallowed by its parent's 5-dilate
    for k in range(1, 3):
        lo, hi = nest.covers[k - 1], nest.covers[k]
        for j, ball in enumerate(hi.balls):
            parent = nest.containment[k][j]
            assert parent is not None
            mem = s.members(ball)
            assert not np.any(mem & ~s.members(lo.balls[parent].dilate(5.0)))
        assert not np.any(hi.level_mask & ~lo.level_mask)


def test_nested_cz_rejects_decreasing_levels():
    s = gen_line(12)
    f = np.abs(f_log_distance(s, 0)) + 0.1
    b0 = spanning_ball(s)
    thr = threshold(s, f, b0)
    with pytest.raises(ValueError):
        nested_cz(s, f, b0, (thr * 2.0, thr * 1.5))


# ---------------------------------------------------------------- verifiers


def test_check_toiterate_passes_and_is_nonvacuous():
    # spike profile: both levels select balls, so the inequality has teeth
    pts = np.arange(40, dtype=np.float64)
    s = space_from_points(pts)
    f = np.zeros(40)
    f[0] = 40.0
    f[20] = 8.0
    b0 = spanning_ball(s)
    g = shifted_abs(s, f, b0)
    thr = threshold(s, g, b0)
    rep = check_toiterate(s, f, b0, thr * 1.2, 2.0)
    assert rep.passed
    assert rep.lhs > 0.0
    assert rep.witness["n_balls_low"] >= 1
    assert rep.witness["n_balls_high"] >= 1


def test_check_toiterate_random_spaces():
    for seed in range(6):
        s = gen_random_cloud(22, seed + 70)
        f = np.random.default_rng(seed).uniform(0, 5, s.m)
        b0 = spanning_ball(s)
        g = shifted_abs(s, f, b0)
        thr = threshold(s, g, b0)
        rep = check_toiterate(s, f, b0, thr * 1.3, 2.0)
        assert rep.passed, rep.to_dict()


def test_verify_mainresult_passes_and_reports_constants():
    s = gen_line(24)
    f = f_log_distance(s, 0)
    b0 = spanning_ball(s)
    reports = verify_mainresult(s, f, b0, 2.0, n_lambda=18, n_ladder=3)
    assert len(reports) == 18
    assert all_pass(reports)
    c = doubling_constant(s)
    branches = set()
    for r in reports:
        w = r.witness
        branches.add(w["branch"])
        assert np.isclose(w["lambda0"],
                          3.0 * c ** 8 * w["K_cert"] / w["mu_B0"] ** 0.5,
                          rtol=1e-12)
    assert branches == {"small", "large"}


def test_verify_mainresult_degenerate_on_constant():
    # 4.0 stays exact under weighted averaging, so K is exactly zero
    s = gen_line(12)
    reports = verify_mainresult(s, np.full(12, 4.0), spanning_ball(s), 2.0)
    assert len(reports) == 1
    assert reports[0].degenerate and reports[0].passed


def test_verify_bmo_passes_with_both_claims():
    s = gen_grid2d(5)
    f = f_log_distance(s, 7)
    b0 = spanning_ball(s, 7)
    reports = verify_bmo_jn(s, f, b0, n_lambda=20, n_ladder=3)
    assert all_pass(reports)
    claims = {r.claim for r in reports}
    assert claims == {"bmo-halving", "bmo-exponential"}


def test_bmo_halving_ingredients_nonvacuous():
    # the two facts the halving argument rests on, checked on real balls:
    # mu(5B) <= c^3 mu(B) and osc of the normalized function at most 1
    from jnlab.metric import bmo_norm_metric
    s = gen_grid2d(5)
    f = f_log_distance(s, 0)
    b0 = spanning_ball(s)
    u = (f - s.average_mask(f, s.members(b0))) / bmo_norm_metric(s, f)
    c = doubling_constant(s)
    for center in range(0, s.m, 3):
        for r in s.critical_radii(center)[::2]:
            ball = Ball(center, float(r))
            assert s.measure(ball.dilate(5.0)) <= c ** 3 * s.measure(ball) * (1 + 1e-12)
            assert s.osc_mask(u, s.members(ball)) <= 1.0 + 1e-12


def test_witness_table_reuse_is_consistent():
    s = gen_random_cloud(18, 5)
    f = np.abs(np.random.default_rng(5).standard_normal(s.m)) + 0.1
    b0 = spanning_ball(s)
    thr = threshold(s, f, b0)
    lam = thr * 1.2
    a = cz_balls(s, f, b0, lam)
    b = cz_balls(s, f, b0, lam, witness=compute_witness(s, f, b0))
    assert a.balls == b.balls
    assert np.array_equal(a.averages, b.averages)


def test_witness_table_rejects_other_base_ball():
    s = gen_line(10)
    f = np.abs(f_log_distance(s, 0)) + 0.1
    table = compute_witness(s, f, spanning_ball(s, 0))
    thr = threshold(s, f, spanning_ball(s, 3))
    with pytest.raises(ValueError):
        cz_balls(s, f, spanning_ball(s, 3), thr * 1.5, witness=table)
