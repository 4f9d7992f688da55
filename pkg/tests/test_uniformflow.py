from fractions import Fraction

import numpy as np
import pytest

from cuniform.dynamics import RandomWalker
from cuniform.gridspace import GridSpec
from cuniform.levelsets import LevelSet, Transition, expand_level
from cuniform.uniformflow import (build_flow_network, closed_form_1d, extract_policy, induced_marginal,
                                  max_flow, precompute)

from oracles import (closed_form_counts, cuniform_feasible, ford_fulkerson, layered_arcs, min_cut_value,
                     random_bipartite, walker_marginals)

LINE = GridSpec(delta=(1.0,), lower=(-200.0,), upper=(200.0,), angular=(False,))

# closed-form table for n=5, k=2 written out by hand, numerators over 9
TABLE_5_2 = [
    [5, 1, 1, 1, 1],
    [4, 1, 1, 1, 2],
    [3, 1, 1, 1, 3],
    [2, 1, 1, 1, 4],
    [1, 1, 1, 1, 5],
]


def walker_transition(n, k):
    w = RandomWalker(-k, k)
    L = LevelSet.from_cells(0, LINE, np.arange(200, 200 + n)[:, None])
    Lp, tr = expand_level(w, LINE, L, w.action_grid(2 * k + 1), 1, 1.0)
    return L, Lp, tr


def bipartite_transition(n, m, pairs):
    """Levels of ``n`` and ``m`` cells joined by ``pairs``, one action per target cell."""
    L = LevelSet.from_cells(0, LINE, np.arange(n)[:, None])
    Lp = LevelSet.from_cells(1, LINE, np.arange(m)[:, None])
    pairs = sorted(pairs)
    src = np.array([i for i, _ in pairs], np.int64)
    tgt = np.array([j for _, j in pairs], np.int64)
    succ = -np.ones((n, m), np.int64)
    succ[src, tgt] = tgt
    return L, Lp, Transition(t=0, src=src, tgt=tgt, action=tgt.copy(), succ=succ, n_actions=m)


class TestClosedForm:
    def test_hand_table(self):
        got = closed_form_1d(5, 2, exact=True)
        assert got.tolist() == [[Fraction(c, 9) for c in row] for row in TABLE_5_2]

    def test_matches_independent_counts(self):
        for n in range(1, 12):
            for k in range(1, 5):
                m = n + 2 * k
                np.testing.assert_array_equal(closed_form_1d(n, k) * m, closed_form_counts(n, k))

    @pytest.mark.parametrize("n,k", [(1, 1), (5, 2), (17, 3), (50, 5)])
    def test_rows_and_marginals_exact(self, n, k):
        table = closed_form_1d(n, k, exact=True)
        assert all(sum(row) == 1 for row in table.tolist())
        assert walker_marginals(table.tolist()) == [Fraction(1, n + 2 * k)] * (n + 2 * k)

    def test_invalid(self):
        with pytest.raises(ValueError):
            closed_form_1d(0, 1)
        with pytest.raises(ValueError):
            closed_form_1d(3, 0)


class TestFlowNetwork:
    def test_counts(self):
        L, Lp, tr = walker_transition(5, 2)
        net = build_flow_network(L, Lp, tr)
        assert (net.n, net.m) == (5, 9)
        assert net.n_nodes == 16
        assert net.n_arcs == 5 + 25 + 9
        assert net.target_value == 45
        assert len(net.isolated) == 0

    def test_capacities(self):
        L, Lp, tr = walker_transition(3, 1)
        net = build_flow_network(L, Lp, tr)
        caps = dict(zip(zip(net.tail.tolist(), net.head.tolist()), net.cap.tolist()))
        assert caps[(0, 1)] == 5
        assert caps[(1, 4)] == 5
        assert caps[(8, 9)] == 3

    def test_edge_records_equivalent(self):
        L, Lp, tr = walker_transition(4, 2)
        a = build_flow_network(L, Lp, tr)
        b = build_flow_network(L, Lp, tr.edge_records(L, Lp))
        for f in ("tail", "head", "cap"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_isolated_target_reported(self):
        L, Lp, tr = bipartite_transition(2, 3, [(0, 0), (1, 1)])
        net = build_flow_network(L, Lp, tr)
        assert net.isolated.tolist() == [2]
        assert max_flow(net).value < net.target_value

    def test_edge_outside_level(self):
        from cuniform.levelsets import EdgeRecord

        L, Lp, _ = walker_transition(2, 1)
        with pytest.raises(ValueError):
            build_flow_network(L, Lp, [EdgeRecord((999,), (200,), frozenset({0}))])


class TestMaxFlow:
    def test_walker_saturates(self):
        for n in (1, 3, 8):
            for k in (1, 2, 4):
                L, Lp, tr = walker_transition(n, k)
                assert max_flow(build_flow_network(L, Lp, tr)).value == n * (n + 2 * k)

    def test_conservation_and_capacity(self):
        L, Lp, tr = walker_transition(7, 3)
        net = build_flow_network(L, Lp, tr)
        res = max_flow(net)
        assert np.all(res.flow >= 0) and np.all(res.flow <= net.cap)
        inflow = np.bincount(net.head, weights=res.flow, minlength=net.n_nodes)
        outflow = np.bincount(net.tail, weights=res.flow, minlength=net.n_nodes)
        inner = np.arange(1, net.sink)
        np.testing.assert_array_equal(inflow[inner], outflow[inner])
        assert outflow[0] == inflow[net.sink] == res.value

    def test_against_oracles(self):
        rng = np.random.default_rng(20)
        for _ in range(60):
            n, m, pairs = random_bipartite(rng)
            if not pairs:
                continue
            arcs, nn, s, t = layered_arcs(n, m, pairs)
            L, Lp, tr = bipartite_transition(n, m, pairs)
            got = max_flow(build_flow_network(L, Lp, tr)).value
            assert got == ford_fulkerson(nn, arcs, s, t)
            if nn <= 12:
                assert got == min_cut_value(nn, arcs, s, t)

    def test_saturation_iff_feasible(self):
        rng = np.random.default_rng(21)
        seen = {True: 0, False: 0}
        for _ in range(100):
            n, m, pairs = random_bipartite(rng)
            if not pairs:
                continue
            L, Lp, tr = bipartite_transition(n, m, pairs)
            net = build_flow_network(L, Lp, tr)
            sat = max_flow(net).value == n * m
            assert sat == cuniform_feasible(n, m, pairs)
            seen[sat] += 1
        assert seen[True] > 5 and seen[False] > 5


class TestExtractPolicy:
    def test_saturated_flow_gives_uniform_marginal(self):
        rng = np.random.default_rng(22)
        checked = 0
        for _ in range(80):
            n, m, pairs = random_bipartite(rng)
            if not pairs:
                continue
            L, Lp, tr = bipartite_transition(n, m, pairs)
            net = build_flow_network(L, Lp, tr)
            res = max_flow(net)
            if res.value != n * m:
                continue
            pol = extract_policy(net, res, tr)
            assert induced_marginal(pol, tr, m, exact=True) == [Fraction(1, m)] * m
            checked += 1
        assert checked > 5

    def test_rows_are_distributions(self):
        L, Lp, tr = walker_transition(9, 3)
        net = build_flow_network(L, Lp, tr)
        pol = extract_policy(net, max_flow(net), tr)
        for r in range(9):
            assert sum(pol.distribution(r).values()) == 1
        np.testing.assert_allclose(pol.probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        assert pol.deficit == 0.0

    def test_single_row_matches_closed_form(self):
        # with one source cell the flow is forced, so the tables coincide
        for k in range(1, 6):
            L, Lp, tr = walker_transition(1, k)
            net = build_flow_network(L, Lp, tr)
            pol = extract_policy(net, max_flow(net), tr)
            np.testing.assert_array_equal(pol.probs, closed_form_1d(1, k))

    def test_merged_actions_split_evenly(self):
        w = RandomWalker()
        g = GridSpec(delta=(2.0,), lower=(-21.0,), upper=(21.0,), angular=(False,))
        L = LevelSet.from_cells(0, g, [(10,)])
        Lp, tr = expand_level(w, g, L, w.action_grid(5), 1, 1.0)
        net = build_flow_network(L, Lp, tr)
        pol = extract_policy(net, max_flow(net), tr)
        # actions landing in the same cell share its probability equally
        for cell in set(pol.succ[0].tolist()):
            ps = pol.probs[0, pol.succ[0] == cell]
            assert np.all(ps == ps[0])
        assert induced_marginal(pol, tr, len(Lp), exact=True) == [Fraction(1, len(Lp))] * len(Lp)

    def test_deficit_for_starved_network(self):
        # two sources share one target but only one of them also reaches the others
        L, Lp, tr = bipartite_transition(2, 3, [(0, 0), (0, 1), (0, 2), (1, 0)])
        net = build_flow_network(L, Lp, tr)
        res = max_flow(net)
        assert res.value < 6
        pol = extract_policy(net, res, tr)
        assert 0 < pol.deficit < 1
        assert pol.stats["flow_value"] == res.value

    def test_zero_outflow_fallback(self):
        L, Lp, tr = bipartite_transition(2, 2, [(0, 0), (1, 1)])
        net = build_flow_network(L, Lp, tr)
        res = max_flow(net)
        res.flow[:] = 0
        res.value = 0
        pol = extract_policy(net, res, tr)
        assert pol.stats["fallback_cells"] == 2
        assert pol.warnings
        np.testing.assert_array_equal(pol.probs[0], [1.0, 0.0])

    def test_rejects_mismatched_network(self):
        L, Lp, tr = walker_transition(3, 1)
        _, _, other = walker_transition(3, 2)
        net = build_flow_network(L, Lp, tr)
        with pytest.raises(ValueError):
            extract_policy(net, max_flow(net), other)
        with pytest.raises(TypeError):
            extract_policy(net, max_flow(net), tr.edge_records(L, Lp))


class TestPrecompute:
    def test_walker_all_saturated(self, walker_policy):
        assert walker_policy.deficits == [0.0] * 10
        assert walker_policy.uniform_through() == 10
        assert [len(lv) for lv in walker_policy.levels] == [2 * t + 1 for t in range(11)]

    def test_cumulative_uniformity_walker(self, walker_policy):
        prior = None
        for t, p in enumerate(walker_policy.policies):
            n_next = len(walker_policy.levels[t + 1])
            prior = induced_marginal(p, _transition_of(walker_policy, t), n_next, prior=prior, exact=True)
            assert prior == [Fraction(1, n_next)] * n_next

    def test_dubins_first_transition_saturated(self, dubins_policy):
        assert dubins_policy.uniform_through() >= 1
        assert dubins_policy.deficits[0] == 0.0
        assert all(0.0 <= d < 1.0 for d in dubins_policy.deficits)

    def test_deterministic(self):
        w = RandomWalker()
        g = GridSpec(delta=(1.0,), lower=(-30.5,), upper=(30.5,), angular=(False,))
        a = precompute(w, g, [0.0], w.action_grid(3), 6, 1.0)
        b = precompute(w, g, [0.0], w.action_grid(3), 6, 1.0)
        for pa, pb in zip(a.policies, b.policies):
            np.testing.assert_array_equal(pa.num, pb.num)
            np.testing.assert_array_equal(pa.den, pb.den)

    def test_progress_callback(self):
        w = RandomWalker()
        g = GridSpec(delta=(1.0,), lower=(-30.5,), upper=(30.5,), angular=(False,))
        seen = []
        precompute(w, g, [0.0], w.action_grid(3), 3, 1.0, progress=seen.append)
        assert [s["t"] for s in seen] == [0, 1, 2]


def _transition_of(policy, t):
    """Rebuild the midpoint transition ``t`` from a finished table."""
    _, tr = expand_level(policy.model, policy.grid, policy.levels[t], policy.actions, 1, policy.dt)
    return tr
