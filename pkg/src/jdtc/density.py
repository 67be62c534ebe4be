"""Augmented Bernoulli density {r, gamma, beta, s} and its Gaussian-mixture parts.

Class and mode ids are small positive integers. All objects are treated as
immutable values: operations return new instances and never write into the
arrays of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from . import kernels

PMF_TOL = 1e-12
GM_WEIGHT_TOL = 1e-9
SYM_TOL = 1e-9


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted Gaussian components stored as stacked arrays.

    ``weights`` has shape (J,), ``means`` (J, n), ``covs`` (J, n, n). The
    mixture may be unnormalized; ``total_weight`` gives its integral.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        m = np.asarray(self.means, dtype=float)
        if m.ndim == 1:
            m = m.reshape(w.shape[0], -1) if w.shape[0] else m.reshape(0, max(m.shape[0], 1))
        p = np.asarray(self.covs, dtype=float)
        if p.ndim == 2 and w.shape[0] == 1:
            p = p[None]
        if m.shape[0] != w.shape[0] or p.shape[0] != w.shape[0]:
            raise ValueError("weights, means and covs disagree on component count")
        if p.shape[1:] != (m.shape[1], m.shape[1]):
            raise ValueError(f"covariance shape {p.shape[1:]} does not match state dim {m.shape[1]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", p)

    @classmethod
    def single(cls, mean, cov, weight: float = 1.0) -> "GaussianMixture":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(np.array([weight]), mean[None], cov[None])

    @classmethod
    def empty(cls, dim: int) -> "GaussianMixture":
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)))

    @classmethod
    def from_components(cls, components: Iterable[GaussianComponent]) -> "GaussianMixture":
        comps = list(components)
        if not comps:
            raise ValueError("use GaussianMixture.empty(dim) for an empty mixture")
        return cls(
            np.array([c.weight for c in comps]),
            np.array([np.atleast_1d(c.mean) for c in comps], dtype=float),
            np.array([np.atleast_2d(c.cov) for c in comps], dtype=float),
        )

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(w), m, p) for w, m, p in zip(self.weights, self.means, self.covs)]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(self.weights * factor, self.means, self.covs)

    def normalized(self) -> "GaussianMixture":
        total = self.total_weight
        if total <= 0.0:
            raise ValueError("cannot normalize a mixture with zero total weight")
        return self.scaled(1.0 / total)


def gm_eval(gm: GaussianMixture, x) -> float | np.ndarray:
    """Mixture density at a state ``x`` (n,) or at each row of ``x`` (P, n)."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim <= 1
    if gm.dim == 1 and pts.ndim == 1 and pts.shape[0] != 1:
        # a 1-d grid of scalar states
        pts, single = pts[:, None], False
    pts = np.atleast_2d(pts)
    if pts.shape[1] != gm.dim:
        raise ValueError(f"state dimension {pts.shape[1]} does not match mixture dimension {gm.dim}")
    if len(gm) == 0:
        vals = np.zeros(pts.shape[0])
    else:
        vals = kernels.gm_eval(gm.weights, gm.means, gm.covs, pts)
    return float(vals[0]) if single else vals


def gm_moments(gm: GaussianMixture) -> tuple[float, np.ndarray, np.ndarray]:
    """Total weight, mean and moment-matched covariance of a mixture."""
    if len(gm) == 0:
        raise ValueError("moments of an empty mixture are undefined")
    total = gm.total_weight
    w = gm.weights / total
    mean = w @ gm.means
    d = gm.means - mean
    cov = np.einsum("j,jab->ab", w, gm.covs) + np.einsum("j,ja,jb->ab", w, d, d)
    return total, mean, 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class ClassModePmf:
    """Class PMF ``gamma`` and class-conditioned mode PMFs ``beta``."""

    gamma: Mapping[int, float]
    beta: Mapping[int, Mapping[int, float]]

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(self.gamma)

    def modes(self, c: int) -> tuple[int, ...]:
        return tuple(self.beta[c])


@dataclass(frozen=True)
class AugmentedBernoulli:
    r: float
    pmf: ClassModePmf
    spdf: Mapping[tuple[int, int], GaussianMixture] = field(default_factory=dict)

    @property
    def gamma(self) -> Mapping[int, float]:
        return self.pmf.gamma

    @property
    def beta(self) -> Mapping[int, Mapping[int, float]]:
        return self.pmf.beta

    @property
    def classes(self) -> tuple[int, ...]:
        return self.pmf.classes

    def slots(self) -> list[tuple[int, int]]:
        return [(c, m) for c in self.pmf.gamma for m in self.pmf.beta[c]]

    @property
    def dim(self) -> int:
        return next(iter(self.spdf.values())).dim

    def component_count(self) -> int:
        return sum(len(g) for g in self.spdf.values())


@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


def _check_cov(cov: np.ndarray) -> Optional[str]:
    scale = max(np.abs(cov).max(), 1e-300)
    if np.abs(cov - cov.T).max() > SYM_TOL * scale:
        return "asymmetric covariance"
    if not np.all(np.isfinite(cov)) or np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() <= 0.0:
        return "non-PD covariance"
    return None


def validate_mixture(gm: GaussianMixture, normalized: bool = True, where: str = "spdf") -> Optional[Violation]:
    if np.any(gm.weights < 0.0) or not np.all(np.isfinite(gm.weights)):
        return Violation(where, "negative or non-finite component weight")
    if normalized and abs(gm.total_weight - 1.0) > GM_WEIGHT_TOL:
        return Violation(where, f"mixture weight sum = {gm.total_weight:.12g}")
    for j, cov in enumerate(gm.covs):
        msg = _check_cov(cov)
        if msg:
            return Violation(f"{where}[{j}]", msg)
    return None


def validate_pmf(pmf: ClassModePmf, mode_sets: Optional[Mapping[int, Iterable[int]]] = None) -> Optional[Violation]:
    g = np.array(list(pmf.gamma.values()), dtype=float)
    if np.any((g < 0.0) | (g > 1.0)):
        return Violation("gamma", "class probability outside [0, 1]")
    if abs(g.sum() - 1.0) > PMF_TOL:
        return Violation("gamma", f"classPmf sum = {g.sum():.12g}")
    if set(pmf.beta) != set(pmf.gamma):
        return Violation("beta", "mode PMFs and class PMF cover different classes")
    for c, row in pmf.beta.items():
        b = np.array(list(row.values()), dtype=float)
        if np.any((b < 0.0) | (b > 1.0)):
            return Violation(f"beta[{c}]", "mode probability outside [0, 1]")
        if abs(b.sum() - 1.0) > PMF_TOL:
            return Violation(f"beta[{c}]", f"modePmf sum = {b.sum():.12g}")
        if mode_sets is not None and set(row) != set(mode_sets[c]):
            return Violation(f"beta[{c}]", "mode support differs from the class mode set")
    return None


def validate(d: AugmentedBernoulli, mode_sets: Optional[Mapping[int, Iterable[int]]] = None) -> Optional[Violation]:
    """First violated invariant of ``d``, or None when every invariant holds."""
    if not (0.0 <= d.r <= 1.0) or not np.isfinite(d.r):
        return Violation("r", f"existence probability {d.r} outside [0, 1]")
    v = validate_pmf(d.pmf, mode_sets)
    if v:
        return v
    dims = set()
    for c, row in d.beta.items():
        for m, b in row.items():
            gm = d.spdf.get((c, m))
            if gm is None:
                return Violation(f"spdf[{c},{m}]", "missing state density")
            if len(gm):
                dims.add(gm.dim)
            if b > 0.0:
                v = validate_mixture(gm, normalized=True, where=f"spdf[{c},{m}]")
                if v:
                    return v
    if len(dims) > 1:
        return Violation("spdf", f"inconsistent state dimensions {sorted(dims)}")
    return None


def check(d: AugmentedBernoulli, mode_sets=None) -> AugmentedBernoulli:
    """Raise ``ValueError`` on the first violation; return ``d`` otherwise."""
    v = validate(d, mode_sets)
    if v:
        raise ValueError(str(v))
    return d
