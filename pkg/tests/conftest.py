import numpy as np
import pytest

from jdtc import _kernels_numba, _kernels_numpy
from jdtc.density import AugmentedBernoulli, ClassModePmf, GaussianMixture
from jdtc.models import ClassLibrary, MotionMode

BACKENDS = {"numpy": _kernels_numpy, "numba": _kernels_numba}

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def report(request):
    """Collects one pass/fail line per acceptance criterion for the summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def add(criterion: str, ok: bool, detail: str = ""):
        lines.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        return ok

    return add


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


def random_spd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T + n * np.eye(n)) / n


def random_mixture(rng, J, n=4, spread=5.0, normalized=True):
    w = rng.uniform(0.05, 1.0, size=J)
    if normalized:
        w = w / w.sum()
    means = rng.normal(scale=spread, size=(J, n))
    covs = np.stack([random_spd(rng, n) for _ in range(J)])
    return GaussianMixture(w, means, covs)


def random_pmf(rng, k, allow_zero=False):
    p = rng.dirichlet(np.ones(k))
    if allow_zero and k > 1 and rng.random() < 0.2:
        p[rng.integers(k)] = 0.0
        p = p / p.sum()
    return p


def small_library(T=1.0):
    """Two classes over three planar modes."""
    modes = {
        1: MotionMode.planar(1, "cv", 1.0, T),
        2: MotionMode.planar(2, "ct", 1.4, T, -0.1),
        3: MotionMode.planar(3, "ct", 1.4, T, 0.15),
    }
    return ClassLibrary(
        modes,
        {1: (1,), 2: (1, 2, 3)},
        {1: np.array([[1.0]]), 2: np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])},
    )


def random_density(rng, library, max_comp=3, spread=50.0, r=None, center=(1000.0, 0.0, 1000.0, 0.0)):
    classes = library.classes
    g = random_pmf(rng, len(classes))
    gamma = dict(zip(classes, g.tolist()))
    beta = {}
    spdf = {}
    for c in classes:
        ms = library.mode_sets[c]
        beta[c] = dict(zip(ms, random_pmf(rng, len(ms)).tolist()))
        for m in ms:
            gm = random_mixture(rng, int(rng.integers(1, max_comp + 1)), spread=spread)
            spdf[(c, m)] = GaussianMixture(gm.weights, gm.means + np.asarray(center), gm.covs * 25.0)
    r = float(rng.uniform(0.01, 0.99)) if r is None else r
    return AugmentedBernoulli(r, ClassModePmf(gamma, beta), spdf)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
