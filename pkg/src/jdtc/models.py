"""Motion modes, class library, birth model, scalar sensors and Poisson clutter.

State layout is ``[xi, xi_dot, eta, eta_dot]`` (positions in m, velocities in
m/s) for the planar models; the library itself is dimension-agnostic so the
1-d oracle configurations in the tests can reuse it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .density import ClassModePmf, GaussianMixture, validate_mixture, validate_pmf


class SingularGeometryError(ValueError):
    """Range Jacobian undefined: the state sits on the sensor position."""


def mode_matrices(kind: str, sigma: float, T: float, omega: Optional[float] = None):
    """Transition matrix and process-noise covariance of a planar motion mode.

    ``kind`` is ``"cv"`` (constant velocity) or ``"ct"`` (coordinated turn
    with turn rate ``omega`` rad/s). ``sigma`` scales Q linearly.
    """
    if T <= 0 or sigma <= 0:
        raise ValueError("sampling interval and noise intensity must be positive")
    kind = kind.lower()
    if kind == "cv":
        F = np.array([[1.0, T, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, T], [0, 0, 0, 1.0]])
        block = np.array([[T**3 / 3.0, T**2 / 2.0], [T**2 / 2.0, T]])
    elif kind == "ct":
        if omega is None or omega == 0.0:
            raise ValueError("coordinated turn needs a nonzero turn rate; use kind='cv'")
        sw, cw = np.sin(omega * T), np.cos(omega * T)
        F = np.array(
            [
                [1.0, sw / omega, 0.0, (cw - 1.0) / omega],
                [0.0, cw, 0.0, -sw],
                [0.0, (1.0 - cw) / omega, 1.0, sw / omega],
                [0.0, sw, 0.0, cw],
            ]
        )
        block = np.array([[3.0 * T**4 / 4.0, T**3 / 2.0], [T**3 / 2.0, T**2]])
    else:
        raise ValueError(f"unknown motion kind {kind!r}")
    Q = np.zeros((4, 4))
    Q[:2, :2] = block
    Q[2:, 2:] = block
    return F, sigma * Q


@dataclass(frozen=True, eq=False)
class MotionMode:
    id: int
    F: np.ndarray
    Q: np.ndarray
    kind: str = "linear"
    sigma: Optional[float] = None
    turn_rate: Optional[float] = None

    @classmethod
    def planar(cls, id: int, kind: str, sigma: float, T: float, turn_rate: Optional[float] = None) -> "MotionMode":
        F, Q = mode_matrices(kind, sigma, T, turn_rate)
        return cls(id, F, Q, kind.lower(), sigma, turn_rate)


def propagate_state(x, mode: MotionMode):
    """Mean ``F x`` and Jacobian ``F`` (the motion models are linear)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != mode.F.shape[0]:
        raise ValueError(f"state dimension {x.shape[-1]} does not match mode dimension {mode.F.shape[0]}")
    return x @ mode.F.T, mode.F


@dataclass(frozen=True, eq=False)
class ClassLibrary:
    """Classes with their mode sets and mode-transition matrices.

    ``transitions[c][i, j]`` is the probability of moving from the i-th to the
    j-th mode of ``mode_sets[c]`` (rows indexed by the previous mode).
    """

    modes: Mapping[int, MotionMode]
    mode_sets: Mapping[int, tuple[int, ...]]
    transitions: Mapping[int, np.ndarray]

    def __post_init__(self):
        for c, ms in self.mode_sets.items():
            pi = np.asarray(self.transitions[c], dtype=float)
            if pi.shape != (len(ms), len(ms)):
                raise ValueError(f"class {c}: transition matrix shape {pi.shape} != {(len(ms), len(ms))}")
            if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError(f"class {c}: transition rows must be PMFs")
            for m in ms:
                if m not in self.modes:
                    raise ValueError(f"class {c} references unknown mode {m}")

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(self.mode_sets)

    def slots(self) -> list[tuple[int, int]]:
        return [(c, m) for c in self.mode_sets for m in self.mode_sets[c]]


@dataclass(frozen=True, eq=False)
class BirthModel:
    p_birth: float
    pmf: ClassModePmf
    spdf: Mapping[tuple[int, int], GaussianMixture]

    def __post_init__(self):
        if not 0.0 <= self.p_birth <= 1.0:
            raise ValueError("birth probability outside [0, 1]")
        v = validate_pmf(self.pmf)
        if v:
            raise ValueError(f"birth model: {v}")
        for key, gm in self.spdf.items():
            v = validate_mixture(gm, where=f"birth spdf{key}")
            if v:
                raise ValueError(str(v))

    @classmethod
    def uniform(cls, library: ClassLibrary, p_birth: float, mean, cov) -> "BirthModel":
        """Uniform class and mode PMFs with one shared Gaussian state density."""
        cs = library.classes
        gamma = {c: 1.0 / len(cs) for c in cs}
        beta = {c: {m: 1.0 / len(library.mode_sets[c]) for m in library.mode_sets[c]} for c in cs}
        gm = GaussianMixture.single(mean, cov)
        return cls(p_birth, ClassModePmf(gamma, beta), {s: gm for s in library.slots()})


@dataclass(frozen=True, eq=False)
class Sensor:
    """Scalar-measurement sensor with class-dependent detection and Poisson clutter.

    Subclasses supply ``h`` (vectorised over rows of states) and ``jacobian``.
    Clutter is uniform on ``clutter_region = (lo, hi)`` with ``clutter_rate``
    expected points per scan.
    """

    id: int
    noise_var: float
    detection: Mapping[int, float]
    clutter_rate: float
    clutter_region: tuple[float, float]

    def __post_init__(self):
        if self.noise_var <= 0:
            raise ValueError("measurement noise variance must be positive")
        if self.clutter_rate < 0:
            raise ValueError("clutter rate must be nonnegative")
        lo, hi = self.clutter_region
        if not hi > lo:
            raise ValueError("clutter region must be a nonempty interval")
        for c, pd in self.detection.items():
            if not 0.0 <= pd <= 1.0:
                raise ValueError(f"detection probability for class {c} outside [0, 1]")

    def detection_prob(self, c: int) -> float:
        return self.detection[c]

    def clutter_intensity(self, z) -> np.ndarray:
        lo, hi = self.clutter_region
        z = np.asarray(z, dtype=float)
        inside = (z >= lo) & (z <= hi)
        return np.where(inside, self.clutter_rate / (hi - lo), 0.0)

    def in_region(self, z: float) -> bool:
        lo, hi = self.clutter_region
        return lo <= z <= hi

    def h(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def linearize(self, states: np.ndarray):
        """Predicted measurements (J,) and Jacobian rows (J, n) at ``states``."""
        return self.h(states), self.jacobian(states)


@dataclass(frozen=True, eq=False)
class RangeSensor(Sensor):
    position: tuple[float, float] = (0.0, 0.0)

    def _offsets(self, states):
        states = np.atleast_2d(states)
        dx = states[:, 0] - self.position[0]
        dy = states[:, 2] - self.position[1]
        rng = np.hypot(dx, dy)
        if np.any(rng == 0.0):
            raise SingularGeometryError(f"state coincides with sensor {self.id} at {self.position}")
        return dx, dy, rng

    def h(self, states):
        return self._offsets(states)[2]

    def jacobian(self, states):
        dx, dy, rng = self._offsets(states)
        jac = np.zeros((dx.shape[0], np.atleast_2d(states).shape[1]))
        jac[:, 0] = dx / rng
        jac[:, 2] = dy / rng
        return jac

    def linearize(self, states):
        dx, dy, rng = self._offsets(states)
        jac = np.zeros((dx.shape[0], np.atleast_2d(states).shape[1]))
        jac[:, 0] = dx / rng
        jac[:, 2] = dy / rng
        return rng, jac


@dataclass(frozen=True, eq=False)
class FunctionSensor(Sensor):
    """Scalar sensor defined by callables, for linear and nonlinear test models."""

    func: Callable[[np.ndarray], np.ndarray] = field(default=lambda x: x[:, 0])
    jac: Callable[[np.ndarray], np.ndarray] = field(default=lambda x: np.eye(x.shape[1])[:1].repeat(x.shape[0], 0))

    def h(self, states):
        return np.asarray(self.func(np.atleast_2d(states)), dtype=float)

    def jacobian(self, states):
        return np.asarray(self.jac(np.atleast_2d(states)), dtype=float)


def range_measure(sensor: RangeSensor, x):
    """Predicted range and its Jacobian row for a single state ``x``."""
    z, jac = sensor.linearize(np.asarray(x, dtype=float)[None])
    return float(z[0]), jac[0]


def sample_clutter(sensor: Sensor, rng: np.random.Generator) -> np.ndarray:
    count = rng.poisson(sensor.clutter_rate)
    lo, hi = sensor.clutter_region
    return rng.uniform(lo, hi, size=count)
