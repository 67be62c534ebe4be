import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jdtc.config import ConfigError, ScenarioConfig, SegmentConfig, build_graph, build_sensors, from_dict
from jdtc.density import AugmentedBernoulli, ClassModePmf, GaussianMixture
from jdtc.fusion import consensus_round, metropolis_weights, uniform_weights
from jdtc.sim import (
    MetricsFrame,
    TruthRecord,
    generate_measurements,
    generate_truth,
    monte_carlo,
    ospa,
    run_centralized,
    run_distributed,
)
from jdtc.filter import single_sensor_update
from jdtc.reduce import ReductionPolicy

from conftest import random_density, small_library

REF = ScenarioConfig()


def small(**over):
    """A short scenario on a 2x2 sensor grid."""
    data = {"timesteps": 30, "sensors": {"grid_rows": 2, "grid_cols": 2}}
    for k, v in over.items():
        if isinstance(v, dict):
            data.setdefault(k, {}).update(v)
        else:
            data[k] = v
    return from_dict(data)


class TestTruth:
    def test_schedule(self):
        t = generate_truth(REF)
        assert not t.at(5)[0]
        exists, x, c, m = t.at(6)
        assert exists and c == 2 and m == 1
        np.testing.assert_array_equal(x, [4786.0, -8.3, 3584.0, -100.9])
        assert t.at(30)[3] == 2
        assert t.at(55)[3] == 1 and t.at(61)[3] == 3 and t.at(90)[3] == 3
        assert not t.at(91)[0]
        assert t.window == (6, 90)

    def test_invariants(self):
        t = generate_truth(REF)
        alive = t.exists
        assert set(t.class_id[alive]) == {2}
        assert set(t.mode_id[alive]) <= {1, 2, 3}
        ks = np.flatnonzero(alive)
        assert np.all(np.diff(ks) == 1)

    def test_cv_leg_is_straight(self):
        t = generate_truth(REF)
        x6, x7 = t.at(6)[1], t.at(7)[1]
        np.testing.assert_allclose(x7, [4786.0 - 8.3, -8.3, 3584.0 - 100.9, -100.9], atol=1e-9)
        assert x6[1] == x7[1]

    def test_bad_schedule_mode(self):
        with pytest.raises(ConfigError, match=r"truth.schedule\[0\].mode"):
            from_dict({"truth": {"schedule": [{"from_k": 1, "to_k": 5, "mode": 4}]}})
        cfg = ScenarioConfig()
        cfg.truth.schedule = [SegmentConfig(1, 5, 4)]
        with pytest.raises(ValueError, match="mode set"):
            generate_truth(cfg)

    def test_noisy_truth_uses_rng(self):
        cfg = from_dict({"truth": {"process_noise": True}})
        a, b = generate_truth(cfg, 1), generate_truth(cfg, 1)
        np.testing.assert_array_equal(a.states, b.states)
        assert not np.array_equal(a.states[10], generate_truth(REF).states[10])


class TestMeasurements:
    def test_absent_target_clutter_free(self):
        cfg = from_dict({"sensors": {"clutter_rate": 0.0}})
        truth = TruthRecord(np.zeros(20, bool), np.full((20, 4), np.nan), np.zeros(20, int), np.zeros(20, int))
        scans = generate_measurements(truth, build_sensors(cfg), rng=0)
        assert all(len(z) == 0 for step in scans for z in step.values())

    def test_perfect_detection(self):
        cfg = from_dict({"sensors": {"clutter_rate": 0.0, "detection_prob": 1.0, "noise_var_m2": 1e-16}})
        sensors = build_sensors(cfg)
        truth = generate_truth(cfg)
        scans = generate_measurements(truth, sensors, rng=3)
        for k in (6, 40, 90):
            x = truth.at(k)[1]
            for sid, s in sensors.items():
                z = scans[k - 1][sid]
                assert len(z) == 1
                assert z[0] == pytest.approx(np.hypot(x[0] - s.position[0], x[2] - s.position[1]), abs=1e-6)

    def test_detection_frequency(self):
        cfg = from_dict({"sensors": {"clutter_rate": 0.0, "grid_rows": 1, "grid_cols": 1}})
        N = 100_000
        x = np.tile([1000.0, 0.0, 1000.0, 0.0], (N, 1))
        truth = TruthRecord(np.ones(N, bool), x, np.full(N, 2), np.ones(N, int))
        scans = generate_measurements(truth, build_sensors(cfg), rng=11)
        freq = np.mean([len(s[1]) for s in scans])
        assert 0.945 <= freq <= 0.955

    def test_seeded(self):
        cfg = small()
        truth = generate_truth(cfg)
        a = generate_measurements(truth, build_sensors(cfg), rng=5)
        b = generate_measurements(truth, build_sensors(cfg), rng=5)
        assert all(np.array_equal(x[i], y[i]) for x, y in zip(a, b) for i in x)


class TestOspa:
    def test_examples(self):
        assert ospa([(0.0, 0.0)], [(0.0, 0.0)]) == 0.0
        assert ospa([], [(12.0, 7.0)]) == 150.0
        assert ospa([(0.0, 0.0)], []) == 150.0
        assert ospa([], []) == 0.0
        assert ospa([(0.0, 0.0)], [(30.0, 40.0)]) == pytest.approx(50.0, abs=1e-12)
        assert ospa([(0.0, 0.0)], [(300.0, 400.0)]) == 150.0

    def test_order_and_cutoff(self):
        assert ospa([(0.0, 0.0)], [(3.0, 4.0)], p=2, cutoff=10.0) == pytest.approx(5.0)
        X, Y = [(0.0, 0.0), (10.0, 0.0)], [(0.0, 1.0)]
        assert ospa(X, Y, p=1, cutoff=20.0) == pytest.approx((1.0 + 20.0) / 2)

    @settings(max_examples=200, deadline=None)
    @given(
        x=st.lists(st.tuples(st.floats(-500, 500), st.floats(-500, 500)), max_size=1),
        y=st.lists(st.tuples(st.floats(-500, 500), st.floats(-500, 500)), max_size=1),
    )
    def test_properties(self, x, y):
        d = ospa(x, y)
        assert d == ospa(y, x)
        assert 0.0 <= d <= 150.0
        if len(x) == len(y) and (not x or np.allclose(x, y, atol=1e-12, rtol=0)):
            assert d <= 1e-12
        elif d == 0.0:
            assert len(x) == len(y) and np.allclose(x, y, atol=1e-12, rtol=0)


class TestCentralizedRuns:
    def test_near_ideal_accuracy(self):
        cfg = from_dict({"sensors": {"clutter_rate": 0.0, "detection_prob": 1.0, "noise_var_m2": 1.0}})
        f = run_centralized(cfg, 0)
        assert f.ospa[5:90].mean() < 20.0
        assert np.all(f.est_class[:5] == 0)

    def test_blind_sensors_reach_birth_equilibrium(self):
        cfg = small(timesteps=80, sensors={"detection_prob": 0.0})
        f = run_centralized(cfg, 2)
        # r = pB (1 - r) + pS r has the fixed point pB / (1 - pS + pB)
        assert f.r[-1] == pytest.approx(0.2 / 0.22, abs=1e-6)
        assert np.all(f.est_class[f.r < 0.5] == 0)
        assert f.r[0] == pytest.approx(0.2)

    def test_deterministic(self):
        cfg = small()
        assert run_centralized(cfg, 7).equals(run_centralized(cfg, 7))
        assert not run_centralized(cfg, 7).equals(run_centralized(cfg, 8))

    def test_frame_ranges(self):
        f = run_centralized(small(), 1)
        assert np.all((f.ospa >= 0) & (f.ospa <= 150))
        assert np.all((f.r >= 0) & (f.r <= 1))
        np.testing.assert_allclose(f.gamma.sum(axis=1), 1.0, atol=1e-9)


class TestDistributedRuns:
    def test_single_node_equals_centralized(self):
        cfg = small(sensors={"layout": "explicit", "positions_m": [[1500.0, 2000.0]]}, network={"consensus_steps": 4})
        d = run_distributed(cfg, 3)
        c = run_centralized(cfg, 3)
        assert d.nodes[1].equals(c)
        assert d.network.equals(c)

    def test_two_nodes_with_shared_measurements_agree(self):
        rng = np.random.default_rng(6)
        lib = small_library()
        cfg = from_dict({"sensors": {"layout": "explicit", "positions_m": [[0.0, 0.0], [0.0, 0.0]]}})
        sensors = build_sensors(cfg)
        pred = random_density(rng, lib)
        zs = [1400.0, 900.0]
        local = {i: single_sensor_update(pred, zs, sensors[i]) for i in (1, 2)}
        out = consensus_round(local, metropolis_weights([1, 2], [(1, 2)]), 3, ReductionPolicy())
        assert out[1].r == out[2].r and out[1].gamma == out[2].gamma
        for s in lib.slots():
            np.testing.assert_array_equal(out[1].spdf[s].means, out[2].spdf[s].means)

    def test_complete_uniform_single_step_is_global_gci(self):
        rng = np.random.default_rng(13)
        means, variances, rs = rng.normal(0, 3, 4), rng.uniform(0.5, 3, 4), rng.uniform(0.05, 0.95, 4)
        gamma = {1: 0.5, 2: 0.5}
        states = {}
        for i in range(4):
            gm = GaussianMixture.single([means[i]], [[variances[i]]])
            states[i + 1] = AugmentedBernoulli(rs[i], ClassModePmf(gamma, {1: {1: 1.0}, 2: {1: 1.0}}), {(1, 1): gm, (2, 1): gm})
        nodes = [1, 2, 3, 4]
        edges = [(i, j) for i in nodes for j in nodes if i < j]
        out = consensus_round(states, uniform_weights(nodes, edges), 1)
        # closed form of the uniform geometric mean of four Gaussians
        w = 0.25
        a, b, c = np.sum(w / variances), np.sum(w * means / variances), np.sum(w * means**2 / variances)
        log_z = -0.5 * np.sum(w * np.log(2 * np.pi * variances)) + 0.5 * np.log(2 * np.pi / a) - 0.5 * (c - b * b / a)
        num = np.exp(np.sum(w * np.log(rs)) + log_z)
        r = num / (num + np.exp(np.sum(w * np.log(1 - rs))))
        for d in out.values():
            assert d.r == pytest.approx(r, abs=1e-9)
            assert d.spdf[(1, 1)].means[0, 0] == pytest.approx(b / a, abs=1e-9)
            assert d.spdf[(1, 1)].covs[0, 0, 0] == pytest.approx(1 / a, abs=1e-9)

    def test_complete_graph_run_agrees_everywhere(self):
        cfg = small(timesteps=12, network={"topology": "complete", "weights": "uniform", "consensus_steps": 1})
        d = run_distributed(cfg, 4)
        for i in (2, 3, 4):
            assert d.nodes[1].equals(d.nodes[i])

    def test_deterministic_and_bandwidth(self):
        cfg = small(timesteps=10)
        a, b = run_distributed(cfg, 9), run_distributed(cfg, 9)
        assert a.network.equals(b.network)
        assert all(a.nodes[i].equals(b.nodes[i]) for i in a.nodes)
        np.testing.assert_array_equal(a.bytes_per_step, b.bytes_per_step)
        # four nodes, three iterations, at least a header each
        assert np.all(a.bytes_per_step >= 4 * 3 * 40)

    def test_graph_reference_layout(self):
        g = build_graph(REF, build_sensors(REF))
        assert len(g.nodes) == 20 and g.is_connected()


class TestMonteCarlo:
    def test_single_trial(self):
        cfg = small(timesteps=12)
        res = monte_carlo(cfg, 1, base_seed=21)
        assert res.seeds == [21]
        assert res.mean.equals(run_centralized(cfg, 21))

    def test_mean_is_linear(self):
        cfg = small(timesteps=12)
        a = monte_carlo(cfg, 50, base_seed=0)
        b = monte_carlo(cfg, 50, base_seed=50)
        both = monte_carlo(cfg, 100, base_seed=0)
        for attr in ("ospa", "r", "gamma", "beta"):
            np.testing.assert_allclose(
                (getattr(a.mean, attr) + getattr(b.mean, attr)) / 2, getattr(both.mean, attr), atol=1e-12, rtol=0
            )

    def test_workers_do_not_change_result(self):
        cfg = small(timesteps=8)
        one = monte_carlo(cfg, 4, base_seed=3)
        two = monte_carlo(cfg, 4, base_seed=3, workers=2)
        assert one.mean.equals(two.mean)

    def test_distributed_node_means(self):
        cfg = small(timesteps=6)
        res = monte_carlo(cfg, 2, kind="distributed")
        assert sorted(res.node_means) == [1, 2, 3, 4]
        assert res.mean.r.shape == (6,)

    def test_variance_scales_with_trials(self):
        cfg = from_dict({"timesteps": 6, "sensors": {"grid_rows": 1, "grid_cols": 1}})
        res = monte_carlo(cfg, 3000)
        r6 = np.array([f.r[5] for f in res.trials])
        var10 = r6.reshape(300, 10).mean(axis=1).var(ddof=1)
        var100 = r6.reshape(30, 100).mean(axis=1).var(ddof=1)
        assert 5.0 <= var10 / var100 <= 20.0

    def test_errors(self):
        with pytest.raises(ValueError):
            monte_carlo(small(), 0)
        with pytest.raises(ValueError):
            monte_carlo(small(), 1, kind="both")

    def test_modal_decisions(self):
        f = [MetricsFrame.allocate(2, (1, 2), ((1, 1),)) for _ in range(3)]
        f[0].est_class[:] = [2, 1]
        f[1].est_class[:] = [2, 2]
        f[2].est_class[:] = [1, 0]
        m = MetricsFrame.mean(f)
        np.testing.assert_array_equal(m.est_class, [2, 0])
