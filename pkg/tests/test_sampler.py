import io
import json

import numpy as np
import pytest
from scipy import stats

from cuniform.dynamics import DubinsCar, RandomWalker
from cuniform.errors import OutOfDomainError
from cuniform.sampler import (NoiseConfig, batch_json, level_histograms, sample_cuniform, sample_gaussian,
                              sample_lognormal, tv_to_uniform)


class TestCUniform:
    def test_walker_levels_uniform(self, walker_policy):
        batch = sample_cuniform(walker_policy, K=20_000, seed=1)
        assert batch.drift == 0
        for t, h in enumerate(level_histograms(batch, walker_policy)):
            assert h.sum() == 20_000
            assert len(h) == 2 * t + 1
            if t:
                assert tv_to_uniform(h) < 0.03
                assert stats.chisquare(h).pvalue > 1e-4

    def test_walker_states_are_integers(self, walker_policy):
        batch = sample_cuniform(walker_policy, K=200, seed=0)
        s = batch.states[..., 0]
        assert np.all(s == np.round(s))
        assert np.all(np.abs(np.diff(s, axis=1)) <= 1)

    def test_prefix_nesting(self, small_dubins_policy):
        a = sample_cuniform(small_dubins_policy, K=50, seed=3)
        b = sample_cuniform(small_dubins_policy, K=500, seed=3)
        np.testing.assert_array_equal(a.states, b.states[:50])
        np.testing.assert_array_equal(a.action_index, b.action_index[:50])

    def test_deterministic(self, small_dubins_policy):
        a = sample_cuniform(small_dubins_policy, K=100, seed=8)
        b = sample_cuniform(small_dubins_policy, K=100, seed=8)
        assert a.csv_text() == b.csv_text()

    def test_controls_are_policy_actions(self, dubins_policy):
        batch = sample_cuniform(dubins_policy, K=300, seed=0)
        acts = dubins_policy.actions[:, 0]
        assert np.all(np.isin(batch.controls[..., 0], acts))
        np.testing.assert_array_equal(batch.controls[..., 0], acts[batch.action_index])

    def test_snap_follows_transition_graph(self, dubins_policy):
        batch = sample_cuniform(dubins_policy, K=300, seed=2)
        assert batch.drift == 0
        for t in range(batch.T):
            r, a = batch.cells[:, t], batch.action_index[:, t]
            np.testing.assert_array_equal(dubins_policy.policies[t].succ[r, a], batch.cells[:, t + 1])
            assert np.all(dubins_policy.policies[t].probs[r, a] > 0)

    def test_continuous_tracking_counts_drift(self, small_dubins_policy):
        batch = sample_cuniform(small_dubins_policy, K=400, seed=4, snap=False)
        assert batch.meta == {"snap": False}
        assert 0 <= batch.drift <= 400
        drifted = np.any(batch.cells < 0, axis=1)
        assert batch.drift == int(drifted.sum())
        # drifted rows apply the zero control after losing their cell
        for k in np.flatnonzero(drifted)[:20]:
            t = int(np.argmax(batch.cells[k] < 0))
            if t < batch.T:
                assert batch.controls[k, t, 0] == 0.0

    def test_shorter_horizon(self, dubins_policy):
        batch = sample_cuniform(dubins_policy, T_steps=4, K=10)
        assert batch.states.shape == (10, 5, 3)
        with pytest.raises(ValueError):
            sample_cuniform(dubins_policy, T_steps=16, K=10)

    def test_x0_must_sit_at_origin(self, dubins_policy):
        sample_cuniform(dubins_policy, x0=[0.12, 0.0, 0.0], K=5)
        with pytest.raises(OutOfDomainError):
            sample_cuniform(dubins_policy, x0=[3.0, 0.0, 0.0], K=5)
        with pytest.raises(OutOfDomainError):
            sample_cuniform(dubins_policy, x0=[30.0, 0.0, 0.0], K=5)


class TestNoise:
    def test_gaussian_variance(self):
        car = DubinsCar()
        b = sample_gaussian(car, [0, 0, 0], None, "low", 10, 20_000, seed=0)
        assert np.var(b.meta["noise"]) == pytest.approx(0.03, rel=0.02)
        assert b.meta["sigma_u"] == 0.03

    def test_gaussian_prefix_and_determinism(self):
        car = DubinsCar()
        a = sample_gaussian(car, [0, 0, 0], None, 0.3, 10, 40, seed=5)
        b = sample_gaussian(car, [0, 0, 0], None, 0.3, 10, 400, seed=5)
        np.testing.assert_array_equal(a.states, b.states[:40])

    @pytest.mark.parametrize("kind", ["gaussian", "lognormal"])
    def test_controls_clamped(self, kind):
        car = DubinsCar()
        fn = sample_gaussian if kind == "gaussian" else sample_lognormal
        b = fn(car, [0, 0, 0], np.full(10, 1.4), "high", 10, 2000, seed=1)
        assert b.controls.min() >= -1.5 and b.controls.max() <= 1.5
        assert np.any(b.controls == 1.5)

    def test_lognormal_heavier_tails(self):
        car = DubinsCar()
        g = sample_gaussian(car, [0, 0, 0], None, "low", 10, 20_000, seed=2)
        ln = sample_lognormal(car, [0, 0, 0], None, "low", 10, 20_000, seed=2)
        kg = stats.kurtosis(g.meta["noise"].ravel())
        kl = stats.kurtosis(ln.meta["noise"].ravel())
        assert abs(kg) < 0.1
        assert kl > 1.0

    def test_lognormal_reduces_to_gaussian(self):
        car = DubinsCar()
        g = sample_gaussian(car, [1, 2, 0.5], np.linspace(-1, 1, 8), "medium", 8, 300, seed=9)
        ln = sample_lognormal(car, [1, 2, 0.5], np.linspace(-1, 1, 8), "medium", 8, 300, seed=9, sigma_ln=0.0)
        np.testing.assert_array_equal(g.controls, ln.controls)
        np.testing.assert_array_equal(g.states, ln.states)

    def test_walker_noise_rollout(self):
        w = RandomWalker()
        b = sample_gaussian(w, [0.0], None, "high", 5, 100, seed=0, dt=1.0)
        np.testing.assert_allclose(b.states[:, -1, 0], b.controls[..., 0].sum(axis=1), atol=1e-12)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            NoiseConfig(0.0)
        with pytest.raises(ValueError):
            NoiseConfig(0.1, kind="cauchy")
        with pytest.raises(KeyError):
            NoiseConfig("huge")
        with pytest.raises(ValueError):
            sample_lognormal(DubinsCar(), [0, 0, 0], None, 0.1, 5, 5, sigma_ln=-1.0)
        with pytest.raises(ValueError):
            sample_gaussian(DubinsCar(), [0, 0, 0], np.zeros(3), 0.1, 5, 5)

    def test_label(self):
        assert NoiseConfig("High").label == "high"
        assert NoiseConfig(0.2).label is None


class TestOutput:
    def test_csv_layout(self, small_dubins_policy):
        b = sample_cuniform(small_dubins_policy, K=7, seed=0)
        rows = b.csv_text(["x", "y", "theta"]).splitlines()
        assert rows[0] == "traj_id,t,x,y,theta,u"
        assert len(rows) == 1 + 7 * 6
        assert rows[6].endswith(",")
        first = rows[1].split(",")
        assert first[:2] == ["0", "0"]
        assert float(first[5]) == b.controls[0, 0, 0]

    def test_csv_round_trip_floats(self, small_dubins_policy):
        b = sample_cuniform(small_dubins_policy, K=3, seed=0)
        buf = io.StringIO()
        b.to_csv(buf)
        vals = np.loadtxt(io.StringIO(buf.getvalue()), delimiter=",", skiprows=1, usecols=(2, 3, 4))
        np.testing.assert_array_equal(vals, b.states.reshape(-1, 3))

    def test_json(self, small_dubins_policy):
        b = sample_cuniform(small_dubins_policy, K=3, seed=0)
        doc = json.loads(batch_json(b))
        assert doc["kind"] == "cuniform"
        np.testing.assert_array_equal(np.array(doc["states"]), b.states)

    def test_tv(self):
        assert tv_to_uniform([5, 5, 5]) == 0.0
        assert tv_to_uniform([1, 0]) == 0.5
