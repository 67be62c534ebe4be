import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from jdtc.density import AugmentedBernoulli, ClassModePmf, GaussianMixture, validate
from jdtc.fusion import (
    consensus_round,
    fuse,
    fuse_pair,
    geometric_edges,
    gm_geometric_mean,
    metropolis_weights,
    uniform_weights,
)
from jdtc.reduce import ReductionPolicy

from conftest import random_density, random_mixture, small_library


def bernoulli_1d(r, mean=0.0, var=1.0, gamma=None):
    """Three classes sharing one mode, each slot a single 1-d Gaussian."""
    gamma = gamma or {1: 1 / 3, 2: 1 / 3, 3: 1 / 3}
    gm = GaussianMixture.single([mean], [[var]])
    return AugmentedBernoulli(r, ClassModePmf(gamma, {c: {1: 1.0} for c in gamma}), {(c, 1): gm for c in gamma})


def global_gci(rs, means, variances, weights):
    """Existence, mean and variance of the GCI of 1-d single-Gaussian Bernoullis on a dense grid."""
    rs, w = np.asarray(rs), np.asarray(weights)
    x = np.linspace(min(means) - 40, max(means) + 40, 2_000_001)
    logs = sum(wi * norm.logpdf(x, m, np.sqrt(v)) for m, v, wi in zip(means, variances, w))
    s = np.exp(logs)
    Z = np.trapezoid(s, x)
    mean = np.trapezoid(x * s, x) / Z
    var = np.trapezoid((x - mean) ** 2 * s, x) / Z
    num = np.prod(rs**w) * Z
    return num / (num + np.prod((1 - rs) ** w)), mean, var


class TestGeometricMean:
    def test_identical_single(self):
        g = GaussianMixture.single([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
        out = gm_geometric_mean(g, g, 0.5)
        assert out.total_weight == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(out.means[0], g.means[0], atol=1e-12)
        np.testing.assert_allclose(out.covs[0], g.covs[0], atol=1e-12)

    def test_information_fusion_arithmetic(self):
        a = GaussianMixture.single([0.0], [[1.0]])
        b = GaussianMixture.single([2.0], [[3.0]])
        out = gm_geometric_mean(a, b, 0.5)
        assert out.covs[0, 0, 0] == pytest.approx(1.5, abs=1e-12)
        assert out.means[0, 0] == pytest.approx(0.5, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(
        m1=st.floats(-5, 5), m2=st.floats(-5, 5), v1=st.floats(0.2, 4.0), v2=st.floats(0.2, 4.0), omega=st.floats(0.05, 0.95)
    )
    def test_quadrature(self, m1, m2, v1, v2, omega):
        a = GaussianMixture.single([m1], [[v1]])
        b = GaussianMixture.single([m2], [[v2]])
        out = gm_geometric_mean(a, b, omega)

        def exact(x):
            return norm.pdf(x, m1, np.sqrt(v1)) ** omega * norm.pdf(x, m2, np.sqrt(v2)) ** (1 - omega)

        Z, _ = quad(exact, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
        assert out.total_weight == pytest.approx(Z, rel=1e-9)
        mu, sd = out.means[0, 0], np.sqrt(out.covs[0, 0, 0])
        l1, _ = quad(lambda x: abs(exact(x) / Z - norm.pdf(x, mu, sd)), -30, 30, points=[mu], limit=200)
        assert l1 < 1e-6

    def test_component_count(self, rng):
        a, b = random_mixture(rng, 4), random_mixture(rng, 3)
        assert len(gm_geometric_mean(a, b, 0.3)) == 12

    def test_ci_consistency_form(self, rng):
        for _ in range(20):
            a, b = random_mixture(rng, 1), random_mixture(rng, 1)
            w = rng.uniform(0.05, 0.95)
            out = gm_geometric_mean(a, b, w)
            info = w * np.linalg.inv(a.covs[0]) + (1 - w) * np.linalg.inv(b.covs[0])
            np.testing.assert_allclose(np.linalg.inv(out.covs[0]), info, atol=1e-12, rtol=1e-10)

    def test_bad_weight(self):
        g = GaussianMixture.single([0.0], [[1.0]])
        with pytest.raises(ValueError):
            gm_geometric_mean(g, g, 1.0)

    def test_singular_combination(self):
        g = GaussianMixture.single([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
        with pytest.raises(np.linalg.LinAlgError):
            gm_geometric_mean(g, g, 0.5)


class TestFusePair:
    def test_idempotent(self):
        f = bernoulli_1d(0.7, 2.0, 3.0, {1: 0.2, 2: 0.5, 3: 0.3})
        out = fuse_pair(f, f, 0.5)
        assert out.r == pytest.approx(0.7, abs=1e-12)
        for c in f.gamma:
            assert out.gamma[c] == pytest.approx(f.gamma[c], abs=1e-12)
            gm = out.spdf[(c, 1)]
            assert gm.means[0, 0] == pytest.approx(2.0, abs=1e-12)
            assert gm.covs[0, 0, 0] == pytest.approx(3.0, abs=1e-12)

    def test_existence_hand_value(self):
        out = fuse_pair(bernoulli_1d(0.8), bernoulli_1d(0.6), 0.5)
        assert out.r == pytest.approx(np.sqrt(0.48) / (np.sqrt(0.08) + np.sqrt(0.48)), abs=1e-12)
        assert out.r == pytest.approx(0.7101, abs=5e-5)

    def test_zero_class_annihilates(self):
        out = fuse_pair(bernoulli_1d(0.5, gamma={1: 1.0, 2: 0.0, 3: 0.0}), bernoulli_1d(0.5, gamma={1: 0.5, 2: 0.5, 3: 0.0}), 0.5)
        assert (out.gamma[1], out.gamma[2], out.gamma[3]) == (1.0, 0.0, 0.0)

    def test_continuity_at_unit_weight(self):
        rng = np.random.default_rng(4)
        lib = small_library()
        # deviation is (1 - omega) times the log-density gap, so keep inputs close
        f1 = random_density(rng, lib, max_comp=1, spread=5.0)
        f2 = random_density(rng, lib, max_comp=1, spread=5.0)
        out = fuse_pair(f1, f2, 1 - 1e-6)
        assert out.r == pytest.approx(f1.r, abs=1e-4)
        for c, m in lib.slots():
            assert out.gamma[c] == pytest.approx(f1.gamma[c], abs=1e-4)
            assert out.beta[c][m] == pytest.approx(f1.beta[c][m], abs=1e-4)
            np.testing.assert_allclose(out.spdf[(c, m)].means, f1.spdf[(c, m)].means, atol=1e-4)
            np.testing.assert_allclose(out.spdf[(c, m)].covs, f1.spdf[(c, m)].covs, rtol=1e-4)

    def test_degenerate_keeps_heavier_side(self, caplog):
        f1, f2 = bernoulli_1d(1.0), bernoulli_1d(0.0)
        with caplog.at_level(logging.WARNING, logger="jdtc.fusion"):
            assert fuse_pair(f1, f2, 0.6) is f1
            assert fuse_pair(f1, f2, 0.4) is f2
        assert "degenerate" in caplog.text

    def test_component_count_without_policy(self, rng):
        lib = small_library()
        f1, f2 = random_density(rng, lib, max_comp=3), random_density(rng, lib, max_comp=3)
        out = fuse_pair(f1, f2, 0.5)
        for s in lib.slots():
            assert len(out.spdf[s]) == len(f1.spdf[s]) * len(f2.spdf[s])

    def test_order_of_three(self):
        fs = [bernoulli_1d(r, m, v) for r, m, v in [(0.3, -50.0, 2.0), (0.6, 0.0, 1.0), (0.9, 40.0, 3.0)]]
        a = fuse(fs, [1 / 3] * 3)
        b = fuse(fs[::-1], [1 / 3] * 3)
        assert a.r == pytest.approx(b.r, abs=1e-9)
        r, mean, var = global_gci([0.3, 0.6, 0.9], [-50.0, 0.0, 40.0], [2.0, 1.0, 3.0], [1 / 3] * 3)
        assert a.r == pytest.approx(r, abs=1e-9)
        assert a.spdf[(1, 1)].means[0, 0] == pytest.approx(mean, abs=1e-7)
        assert a.spdf[(1, 1)].covs[0, 0, 0] == pytest.approx(var, abs=1e-7)
        for s in a.spdf:
            assert a.spdf[s].means[0, 0] == pytest.approx(b.spdf[s].means[0, 0], abs=1e-9)
            assert a.spdf[s].covs[0, 0, 0] == pytest.approx(b.spdf[s].covs[0, 0, 0], abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**31), omega=st.floats(0.01, 0.99))
    def test_output_valid(self, seed, omega):
        rng = np.random.default_rng(seed)
        lib = small_library()
        out = fuse_pair(random_density(rng, lib), random_density(rng, lib), omega, ReductionPolicy())
        assert validate(out, lib.mode_sets) is None


class TestWeights:
    def test_two_nodes(self):
        g = metropolis_weights([1, 2], [(1, 2)])
        assert g.weights == {1: {1: 0.5, 2: 0.5}, 2: {1: 0.5, 2: 0.5}}

    def test_path(self):
        g = metropolis_weights([1, 2, 3], [(1, 2), (2, 3)])
        assert g.weights[2][2] == pytest.approx(1 / 3)
        assert g.weights[1] == pytest.approx({1: 2 / 3, 2: 1 / 3})

    def test_isolated(self):
        g = metropolis_weights([1, 2, 3], [(1, 2)])
        assert g.weights[3] == {3: 1.0}

    def test_doubly_stochastic(self, rng):
        pos = {i: rng.uniform(0, 1000, 2) for i in range(1, 16)}
        for g in (metropolis_weights(list(pos), geometric_edges(pos, 400.0)),):
            W = g.weight_matrix()
            np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
            np.testing.assert_allclose(W.sum(axis=0), 1.0, atol=1e-12)
            np.testing.assert_array_equal(W, W.T)
            assert (W[W != 0] > 0).all()

    def test_uniform_rows(self):
        g = uniform_weights([1, 2, 3], [(1, 2), (2, 3)])
        assert g.weights[2] == pytest.approx({1: 1 / 3, 2: 1 / 3, 3: 1 / 3})
        assert g.weights[1] == pytest.approx({1: 0.5, 2: 0.5})

    def test_geometric_edges(self):
        pos = {1: (0.0, 0.0), 2: (100.0, 0.0), 3: (250.0, 0.0)}
        assert geometric_edges(pos, 160.0) == [(1, 2), (2, 3)]
        assert geometric_edges(pos, 150.0) == [(1, 2)]
        assert geometric_edges(pos, 100.0) == []


class TestConsensus:
    def test_two_nodes_single_step(self):
        rng = np.random.default_rng(8)
        lib = small_library()
        f1, f2 = random_density(rng, lib), random_density(rng, lib)
        g = metropolis_weights([1, 2], [(1, 2)])
        out = consensus_round({1: f1, 2: f2}, g, 1)
        ref = fuse_pair(f1, f2, 0.5)
        for i in (1, 2):
            assert out[i].r == ref.r
            for s in lib.slots():
                np.testing.assert_array_equal(out[i].spdf[s].means, ref.spdf[s].means)

    def test_identical_inputs_are_fixed(self):
        f = bernoulli_1d(0.4, 3.0, 2.0, {1: 0.1, 2: 0.6, 3: 0.3})
        g = metropolis_weights([1, 2, 3, 4], [(1, 2), (2, 3), (3, 4), (1, 4)])
        out = consensus_round({i: f for i in g.nodes}, g, 7, ReductionPolicy())
        for d in out.values():
            assert d.r == pytest.approx(0.4, abs=1e-12)
            assert d.gamma[2] == pytest.approx(0.6, abs=1e-12)
            assert d.spdf[(2, 1)].means[0, 0] == pytest.approx(3.0, abs=1e-12)

    def test_star_converges_to_global(self):
        rs = [0.2, 0.5, 0.9]
        states = {i + 1: bernoulli_1d(r, 10.0 * i, 1.0 + i) for i, r in enumerate(rs)}
        g = metropolis_weights([1, 2, 3], [(1, 2), (1, 3)])
        out = consensus_round(states, g, 50)
        target, mean, _ = global_gci(rs, [0.0, 10.0, 20.0], [1.0, 2.0, 3.0], [1 / 3] * 3)
        for d in out.values():
            assert d.r == pytest.approx(target, abs=1e-3)
            assert d.spdf[(1, 1)].means[0, 0] == pytest.approx(mean, abs=1e-3)

    def test_disconnected_warns(self):
        f = bernoulli_1d(0.5)
        g = metropolis_weights([1, 2, 3], [(1, 2)])
        with pytest.warns(RuntimeWarning, match="disconnected"):
            consensus_round({1: f, 2: f, 3: f}, g, 3)

    def test_inputs_untouched(self):
        rng = np.random.default_rng(2)
        lib = small_library()
        states = {1: random_density(rng, lib), 2: random_density(rng, lib)}
        before = {i: (d.r, d.spdf[(2, 2)].means.copy()) for i, d in states.items()}
        consensus_round(states, metropolis_weights([1, 2], [(1, 2)]), 3, ReductionPolicy())
        for i, d in states.items():
            assert d.r == before[i][0]
            np.testing.assert_array_equal(d.spdf[(2, 2)].means, before[i][1])

    def test_needs_a_step(self):
        with pytest.raises(ValueError):
            consensus_round({1: bernoulli_1d(0.5)}, metropolis_weights([1], []), 0)
