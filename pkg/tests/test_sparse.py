import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakid.errors import NumericalError, RankDeficientError
from weakid.library import pde_poly_library
from weakid.models import KS_TERMS
from weakid.pipeline import weak_system_for
from weakid.sparse import DEFAULT_LAMBDAS, loss, select_lambda, stls


def best_subset(G, b, s):
    best, best_res = None, np.inf
    for S in itertools.combinations(range(G.shape[1]), s):
        cols = list(S)
        w, *_ = np.linalg.lstsq(G[:, cols], b, rcond=None)
        r = np.linalg.norm(G[:, cols] @ w - b)
        if r < best_res:
            best, best_res = set(S), r
    return best


def planted(seed, J=10, s=3, Q=60):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((Q, J))
    w = np.zeros(J)
    idx = rng.choice(J, s, replace=False)
    w[idx] = rng.uniform(0.5, 2.0, s) * rng.choice([-1, 1], s)
    return G, G @ w, set(idx)


@pytest.fixture(scope="module")
def ks_system(ks_clean):
    lib = pde_poly_library(6, 6)
    system, _, _ = weak_system_for(ks_clean, lib)
    return system


def test_lambda_zero_is_least_squares():
    G, b, _ = planted(0)
    b = b + 0.01 * np.random.default_rng(1).standard_normal(b.size)
    res = stls(G, b, 0.0)
    ref, *_ = np.linalg.lstsq(G, b, rcond=None)
    assert np.allclose(res.w, ref, rtol=1e-12)
    assert set(res.support) == set(np.flatnonzero(ref))


def test_lambda_above_one_is_degenerate():
    G, b, _ = planted(2)
    res = stls(G, b, 1.0 + 1e-9)
    assert res.degenerate and not np.any(res.w) and res.support.size == 0


def test_negative_lambda_and_bad_rule():
    G, b, _ = planted(3)
    with pytest.raises(ValueError):
        stls(G, b, -0.1)
    with pytest.raises(ValueError):
        stls(G, b, 0.1, rule="fuzzy")


def test_rank_deficient_subproblem_reports_condition():
    G, b, _ = planted(4)
    G[:, 1] = G[:, 0]
    with pytest.raises(RankDeficientError) as exc:
        stls(G, b, 0.0)
    assert exc.value.cond > 1e10


def test_underdetermined_active_set():
    with pytest.raises(RankDeficientError):
        stls(np.ones((2, 5)), np.ones(2), 0.0)


def test_ks_support_at_lambda_tenth(ks_system):
    lib = ks_system.library
    truth = {lib.index(t) for t in KS_TERMS}
    res = stls(ks_system.G, ks_system.b[:, 0], 0.1)
    assert set(res.support) == truth
    sel = select_lambda(ks_system.G, ks_system.b[:, 0], gamma=0.2)
    assert set(sel.support) == set(res.support)


def test_ks_sublibrary_best_subset(ks_system):
    lib = ks_system.library
    truth = [lib.index(t) for t in KS_TERMS]
    others = [j for j in range(len(lib)) if j not in truth][:7]
    cols = sorted(truth + others)
    G, b = ks_system.G[:, cols], ks_system.b[:, 0]
    brute = {cols[j] for j in best_subset(G, b, 3)}
    assert brute == set(truth)
    res = stls(G, b, 0.1)
    assert {cols[j] for j in res.support} == brute


def test_single_lambda_grid_equals_stls():
    G, b, _ = planted(5)
    a = select_lambda(G, b, [0.05])
    s = stls(G, b, 0.05)
    assert np.array_equal(a.w, s.w)
    assert len(a.loss_curve) == 1


def test_loss_curve_length_and_tie_break():
    G, b, _ = planted(6)
    res = select_lambda(G, b)
    assert len(res.loss_curve) == DEFAULT_LAMBDAS.size
    best = min(v for _, v in res.loss_curve)
    ties = [lam for lam, v in res.loss_curve if v == best]
    assert res.lambda_star == max(ties)
    assert loss(res, G.shape[1], 1.0) == pytest.approx(best)


def test_all_degenerate_raises():
    G, b, _ = planted(7)
    with pytest.raises(NumericalError):
        select_lambda(G, b, [1.5, 2.0])


@pytest.mark.parametrize("seed", range(12))
def test_planted_recovery_matches_best_subset(seed):
    s = 2 + seed % 3
    G, b, truth = planted(seed, J=10, s=s)
    brute = best_subset(G, b, s)
    res = select_lambda(G, b, gamma=0.2)
    assert set(res.support) == brute == truth


@pytest.mark.parametrize("seed", range(5))
def test_restricted_least_squares_optimality(seed):
    G, b, _ = planted(seed)
    b = b + 0.05 * np.random.default_rng(seed).standard_normal(b.size)
    res = stls(G, b, 0.2)
    Gs = G[:, res.support]
    grad = Gs.T @ (Gs @ res.w[res.support] - b)
    assert np.linalg.norm(grad) <= 1e-10 * np.linalg.norm(Gs.T @ b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.5))
def test_active_set_is_monotone(seed, lam):
    G, b, _ = planted(seed)
    b = b + 0.3 * np.random.default_rng(seed + 1).standard_normal(b.size)
    res = stls(G, b, lam)
    for prev, nxt in zip(res.active_history, res.active_history[1:]):
        assert set(nxt) <= set(prev)
    assert res.iterations <= G.shape[1] + 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3).filter(lambda c: abs(c) > 0),
       st.sampled_from([-1.0, 1.0]))
def test_support_scale_invariance(seed, c, sign):
    G, b, truth = planted(seed)
    c = sign * c
    Gc = G.copy()
    Gc[:, sorted(truth)] *= c
    a = select_lambda(G, b, gamma=0.2)
    s = select_lambda(Gc, c * b, gamma=0.2)
    assert set(a.support) == set(s.support)
