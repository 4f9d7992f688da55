"""Property-based tests (hypothesis)."""

import math
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from cuniform.controller import CostConfig, mppi_weights, run_controller, synthesize_control
from cuniform.dynamics import DubinsCar, wrap_angle
from cuniform.gridspace import GridSpec, cell_of, midpoint_of
from cuniform.sampler import sample_cuniform, sample_gaussian
from cuniform.simworld import Environment, Obstacle
from cuniform.uniformflow import build_flow_network, closed_form_1d, extract_policy, induced_marginal, max_flow

from oracles import cuniform_feasible, ford_fulkerson, layered_arcs, walker_marginals
from test_uniformflow import bipartite_transition

finite_costs = st.floats(min_value=0.0, max_value=1e6, allow_nan=False)
cost_lists = st.lists(st.one_of(finite_costs, st.just(math.inf)), min_size=1, max_size=60)
temps = st.floats(min_value=1e-2, max_value=100.0)


@st.composite
def bipartite(draw, max_side=6):
    n = draw(st.integers(1, max_side))
    m = draw(st.integers(1, max_side))
    pairs = draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, m - 1)), min_size=1))
    return n, m, sorted(pairs)


class TestWeights:
    @given(cost_lists, temps)
    def test_infinite_cost_gets_zero_weight(self, costs, lam):
        assume(any(math.isfinite(c) for c in costs))
        w = mppi_weights(costs, lam)
        for c, wi in zip(costs, w):
            if math.isinf(c):
                assert wi == 0.0
        assert np.all(w >= 0)
        assert math.isclose(w.sum(), 1.0, rel_tol=1e-12)

    @given(st.lists(st.integers(0, 10**6), min_size=1, max_size=50), st.integers(-10**9, 10**9),
           st.floats(min_value=0.1, max_value=50.0))
    def test_shift_invariance_exact(self, costs, shift, lam):
        # integer costs and shifts are exact in binary64, so the weights match bit for bit
        base = mppi_weights(np.array(costs, dtype=float), lam)
        shifted = mppi_weights(np.array(costs, dtype=float) + shift, lam)
        assert base.tobytes() == shifted.tobytes()

    @given(st.lists(finite_costs, min_size=1, max_size=50), st.floats(-1e3, 1e3), temps)
    def test_shift_invariance_floats(self, costs, shift, lam):
        base = mppi_weights(costs, lam)
        shifted = mppi_weights(np.asarray(costs) + shift, lam)
        np.testing.assert_allclose(base, shifted, rtol=1e-6, atol=1e-9)

    @given(st.lists(finite_costs, min_size=2, max_size=30), temps)
    def test_order_preserving(self, costs, lam):
        w = mppi_weights(costs, lam)
        order = np.argsort(costs, kind="stable")
        assert np.all(np.diff(w[order]) <= 1e-15)

    @given(st.integers(1, 40), st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_synthesized_control_admissible(self, K, T, seed):
        rng = np.random.default_rng(seed)
        U = rng.uniform(-1.5, 1.5, (K, T, 1))
        w = rng.dirichlet(np.ones(K))
        out = synthesize_control(U, w, DubinsCar())
        assert np.all(np.abs(out) <= 1.5)


class TestSeedDeterminism:
    @settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["cuniform", "gaussian", "lognormal"]))
    def test_closed_loop_byte_identical(self, small_dubins_policy, seed, kind):
        env = Environment([Obstacle("circle", (1.5, 0.2, 0.3), 0.4)], (3.0, 0.0), ((-5, -5), (8, 5)), 3.0)
        cfg = CostConfig(goal=env.goal, T=1.0)
        src = small_dubins_policy if kind == "cuniform" else "medium"
        a = run_controller(None, env, src, kind, (0, 0, 0), cfg, 40, seed=seed)
        b = run_controller(None, env, src, kind, (0, 0, 0), cfg, 40, seed=seed)
        assert a.outcome == b.outcome
        assert a.states.tobytes() == b.states.tobytes()
        assert a.controls.tobytes() == b.controls.tobytes()

    @settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.integers(0, 2**31 - 1), st.integers(1, 60), st.integers(1, 60))
    def test_prefix_nesting(self, small_dubins_policy, seed, k1, k2):
        lo, hi = sorted((k1, k2))
        a = sample_cuniform(small_dubins_policy, K=lo, seed=seed)
        b = sample_cuniform(small_dubins_policy, K=hi, seed=seed)
        assert a.states.tobytes() == b.states[:lo].tobytes()
        g1 = sample_gaussian(DubinsCar(), [0, 0, 0], None, 0.1, 5, lo, seed)
        g2 = sample_gaussian(DubinsCar(), [0, 0, 0], None, 0.1, 5, hi, seed)
        assert g1.states.tobytes() == g2.states[:lo].tobytes()


class TestFlow:
    @settings(max_examples=150, deadline=None)
    @given(bipartite())
    def test_value_matches_oracle_and_feasibility(self, inst):
        n, m, pairs = inst
        L, Lp, tr = bipartite_transition(n, m, pairs)
        net = build_flow_network(L, Lp, tr)
        res = max_flow(net)
        arcs, nn, s, t = layered_arcs(n, m, pairs)
        assert res.value == ford_fulkerson(nn, arcs, s, t)
        assert (res.value == n * m) == cuniform_feasible(n, m, pairs)
        if res.value == n * m:
            pol = extract_policy(net, res, tr)
            assert induced_marginal(pol, tr, m, exact=True) == [Fraction(1, m)] * m

    @given(st.integers(1, 60), st.integers(1, 8))
    def test_closed_form_rows_and_marginals(self, n, k):
        table = closed_form_1d(n, k, exact=True).tolist()
        m = n + 2 * k
        assert all(sum(r) == 1 for r in table)
        assert walker_marginals(table) == [Fraction(1, m)] * m


GRID = GridSpec(delta=(0.1, 0.1, 2 * math.pi / 36), lower=(-10, -10, 0), upper=(10, 10, 2 * math.pi),
                angular=(False, False, True))


class TestGeometry:
    @given(st.floats(-10, 9.999), st.floats(-10, 9.999), st.floats(-100, 100))
    def test_point_lies_in_its_cell(self, x, y, th):
        c = cell_of(GRID, (x, y, th))
        mid = midpoint_of(GRID, c)
        assert abs(mid[0] - x) <= 0.05 + 1e-9 and abs(mid[1] - y) <= 0.05 + 1e-9
        assert cell_of(GRID, mid) == c

    @given(st.floats(-1e6, 1e6))
    def test_wrap_range(self, a):
        w = wrap_angle(a)
        assert 0.0 <= w < 2 * math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-6)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 6.28), st.floats(-1.5, 1.5))
    def test_dubins_step_length(self, x, y, th, w):
        out = DubinsCar().step(np.array([x, y, th]), np.array([w]), 0.2)
        assert math.isclose(math.hypot(out[0] - x, out[1] - y), 0.4, rel_tol=1e-9)
