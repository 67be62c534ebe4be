"""Reference scenario: truth, measurements, OSPA and Monte-Carlo drivers."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import wire
from .config import (
    ScenarioConfig,
    build_birth,
    build_graph,
    build_library,
    build_policy,
    build_sensors,
)
from .density import AugmentedBernoulli
from .filter import Estimate, centralized_update, extract, predict, single_sensor_update
from .fusion import consensus_round
from .models import ClassLibrary, Sensor, sample_clutter
from .reduce import reduce

RngLike = Union[int, np.random.Generator, None]

POSITION_INDEX = (0, 2)


def _rng(rng: RngLike) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass(frozen=True, eq=False)
class TruthRecord:
    """Ground truth indexed by time step k = 1..K (array row k-1).

    ``class_id`` and ``mode_id`` are 0 while the target is absent.
    """

    exists: np.ndarray
    states: np.ndarray
    class_id: np.ndarray
    mode_id: np.ndarray

    def __len__(self) -> int:
        return len(self.exists)

    def at(self, k: int):
        i = k - 1
        return bool(self.exists[i]), self.states[i], int(self.class_id[i]), int(self.mode_id[i])

    @property
    def window(self) -> tuple[int, int]:
        ks = np.flatnonzero(self.exists) + 1
        return (int(ks[0]), int(ks[-1])) if len(ks) else (0, -1)


def generate_truth(cfg: ScenarioConfig, rng: RngLike = None) -> TruthRecord:
    t = cfg.truth
    library = build_library(cfg)
    allowed = library.mode_sets.get(t.class_id)
    if allowed is None:
        raise ValueError(f"truth class {t.class_id} is not in the class library")
    for seg in t.schedule:
        if seg.mode not in allowed:
            raise ValueError(f"schedule mode {seg.mode} is not in the mode set of class {t.class_id}")
    K = cfg.timesteps
    n = len(t.initial_state_m_mps)
    exists = np.zeros(K, dtype=bool)
    states = np.full((K, n), np.nan)
    cls = np.zeros(K, dtype=np.int64)
    modes = np.zeros(K, dtype=np.int64)
    gen = _rng(rng) if t.process_noise else None
    x = None
    for seg in t.schedule:
        mode = library.modes[seg.mode]
        for k in range(seg.from_k, min(seg.to_k, K) + 1):
            if x is None:
                x = np.asarray(t.initial_state_m_mps, dtype=float)
            else:
                x = mode.F @ x
                if gen is not None:
                    x = x + gen.multivariate_normal(np.zeros(n), mode.Q)
            exists[k - 1] = True
            states[k - 1] = x
            cls[k - 1] = t.class_id
            modes[k - 1] = seg.mode
    return TruthRecord(exists, states, cls, modes)


def generate_measurements(
    truth: TruthRecord,
    sensors: Mapping[int, Sensor],
    library: Optional[ClassLibrary] = None,
    rng: RngLike = None,
) -> list[dict[int, np.ndarray]]:
    """Per step, per sensor: detected target range (plus noise) and clutter.

    Draw order per step and sensor (ascending id): detection coin, noise,
    clutter. A target return outside the sensor's measurement interval is
    not reported.
    """
    gen = _rng(rng)
    out = []
    for k in range(1, len(truth) + 1):
        exists, x, c, _ = truth.at(k)
        scans = {}
        for sid in sorted(sensors):
            s = sensors[sid]
            zs = []
            if exists and gen.random() < s.detection_prob(c):
                z = float(s.h(x[None])[0]) + gen.normal(0.0, np.sqrt(s.noise_var))
                if s.in_region(z):
                    zs.append(z)
            clutter = sample_clutter(s, gen)
            scans[sid] = np.concatenate([np.asarray(zs, dtype=float), clutter])
        out.append(scans)
    return out


def ospa(X: Sequence, Y: Sequence, p: float = 1.0, cutoff: float = 150.0) -> float:
    """OSPA distance between two finite sets of position vectors."""
    X = np.asarray(X, dtype=float).reshape(len(X), -1) if len(X) else np.zeros((0, 1))
    Y = np.asarray(Y, dtype=float).reshape(len(Y), -1) if len(Y) else np.zeros((0, 1))
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(cutoff)
    if m > n:
        X, Y, m, n = Y, X, n, m
    d = np.minimum(np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2), cutoff) ** p
    rows, cols = linear_sum_assignment(d)
    total = d[rows, cols].sum() + cutoff**p * (n - m)
    return float((total / n) ** (1.0 / p))


@dataclass(eq=False)
class MetricsFrame:
    """Per-step metrics of one run (or a mean over runs).

    ``est_class`` and ``est_mode`` are 0 when no target is declared; for
    aggregated frames they hold the most frequent decision (lowest id on ties).
    """

    class_ids: tuple[int, ...]
    slots: tuple[tuple[int, int], ...]
    ospa: np.ndarray
    r: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    est_class: np.ndarray
    est_mode: np.ndarray

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, len(self.r) + 1)

    @classmethod
    def allocate(cls, K: int, class_ids, slots) -> "MetricsFrame":
        return cls(
            tuple(class_ids),
            tuple(slots),
            np.zeros(K),
            np.zeros(K),
            np.zeros((K, len(class_ids))),
            np.zeros((K, len(slots))),
            np.zeros(K, dtype=np.int64),
            np.zeros(K, dtype=np.int64),
        )

    def record(self, k: int, d: AugmentedBernoulli, est: Estimate, truth: TruthRecord, cfg: ScenarioConfig):
        i = k - 1
        exists, x, _, _ = truth.at(k)
        est_pos = [est.state[list(POSITION_INDEX)]] if est.exists else []
        true_pos = [x[list(POSITION_INDEX)]] if exists else []
        self.ospa[i] = ospa(est_pos, true_pos, cfg.ospa.order, cfg.ospa.cutoff_m)
        self.r[i] = d.r
        self.gamma[i] = [d.gamma[c] for c in self.class_ids]
        self.beta[i] = [d.beta[c][m] for c, m in self.slots]
        self.est_class[i] = est.class_id if est.exists else 0
        self.est_mode[i] = est.mode_id if est.exists else 0

    @classmethod
    def mean(cls, frames: Sequence["MetricsFrame"]) -> "MetricsFrame":
        if not frames:
            raise ValueError("need at least one frame")
        f0 = frames[0]
        return cls(
            f0.class_ids,
            f0.slots,
            np.mean([f.ospa for f in frames], axis=0),
            np.mean([f.r for f in frames], axis=0),
            np.mean([f.gamma for f in frames], axis=0),
            np.mean([f.beta for f in frames], axis=0),
            _mode_of([f.est_class for f in frames]),
            _mode_of([f.est_mode for f in frames]),
        )

    def equals(self, other: "MetricsFrame") -> bool:
        return (
            self.class_ids == other.class_ids
            and self.slots == other.slots
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("ospa", "r", "gamma", "beta", "est_class", "est_mode")
            )
        )


def _mode_of(rows) -> np.ndarray:
    a = np.asarray(rows)
    out = np.zeros(a.shape[1], dtype=np.int64)
    for j in range(a.shape[1]):
        vals, counts = np.unique(a[:, j], return_counts=True)
        out[j] = vals[np.argmax(counts)]
    return out


@dataclass
class Scenario:
    """Models built from a config, shared by both filter drivers."""

    cfg: ScenarioConfig
    library: ClassLibrary = field(init=False)

    def __post_init__(self):
        self.library = build_library(self.cfg)
        self.birth = build_birth(self.cfg, self.library)
        self.sensors = build_sensors(self.cfg)
        self.policy = build_policy(self.cfg)

    def initial_density(self) -> AugmentedBernoulli:
        return AugmentedBernoulli(0.0, self.birth.pmf, dict(self.birth.spdf))

    def frame(self) -> MetricsFrame:
        return MetricsFrame.allocate(self.cfg.timesteps, self.library.classes, self.library.slots())

    def step_predict(self, d: AugmentedBernoulli) -> AugmentedBernoulli:
        pred = predict(d, self.birth, self.cfg.survival_prob, self.library)
        spdf = {s: reduce(gm, self.policy) for s, gm in pred.spdf.items()}
        return AugmentedBernoulli(pred.r, pred.pmf, spdf)

    def simulate(self, rng: RngLike):
        gen = _rng(rng)
        truth = generate_truth(self.cfg, gen)
        return truth, generate_measurements(truth, self.sensors, self.library, gen)


def run_centralized(cfg: ScenarioConfig, rng: RngLike = None, scenario: Optional[Scenario] = None) -> MetricsFrame:
    sc = scenario or Scenario(cfg)
    truth, meas = sc.simulate(rng)
    frame = sc.frame()
    d = sc.initial_density()
    for k in range(1, cfg.timesteps + 1):
        d = centralized_update(sc.step_predict(d), meas[k - 1], sc.sensors, sc.policy)
        frame.record(k, d, extract(d, cfg.extraction.threshold, cfg.extraction.criterion), truth, cfg)
    return frame


@dataclass(eq=False)
class DistributedRun:
    nodes: dict[int, MetricsFrame]
    network: MetricsFrame
    bytes_per_step: np.ndarray


def run_distributed(cfg: ScenarioConfig, rng: RngLike = None, scenario: Optional[Scenario] = None) -> DistributedRun:
    """Local filtering at every node, then ``L`` consensus iterations per step.

    ``bytes_per_step`` counts every broadcast density message (one per node
    per consensus iteration) in the wire encoding.
    """
    sc = scenario or Scenario(cfg)
    graph = build_graph(cfg, sc.sensors)
    truth, meas = sc.simulate(rng)
    ids = sorted(sc.sensors)
    frames = {i: sc.frame() for i in ids}
    states = {i: sc.initial_density() for i in ids}
    L = cfg.network.consensus_steps
    sent = np.zeros(cfg.timesteps, dtype=np.int64)
    for k in range(1, cfg.timesteps + 1):
        local = {
            i: single_sensor_update(sc.step_predict(states[i]), meas[k - 1][i], sc.sensors[i], sc.policy) for i in ids
        }
        current = local
        for _ in range(L):
            sent[k - 1] += sum(wire.message_size(current[i]) for i in ids)
            current = consensus_round(current, graph, 1, sc.policy)
        states = current
        for i in ids:
            d = states[i]
            frames[i].record(k, d, extract(d, cfg.extraction.threshold, cfg.extraction.criterion), truth, cfg)
    return DistributedRun(frames, MetricsFrame.mean([frames[i] for i in ids]), sent)


@dataclass(eq=False)
class MonteCarloResult:
    mean: MetricsFrame
    trials: list[MetricsFrame]
    seeds: list[int]
    node_means: Optional[dict[int, MetricsFrame]] = None

    def decision_rate(self, truth: TruthRecord) -> float:
        """Fraction of trials whose class decision at the last truth step is right."""
        _, last = truth.window
        if last < 1:
            return float("nan")
        want = truth.class_id[last - 1]
        return float(np.mean([f.est_class[last - 1] == want for f in self.trials]))


def _trial(cfg: ScenarioConfig, seed: int, kind: str):
    if kind == "centralized":
        return run_centralized(cfg, seed), None
    res = run_distributed(cfg, seed)
    return res.network, res.nodes


def monte_carlo(
    cfg: ScenarioConfig,
    trials: int,
    base_seed: int = 0,
    kind: str = "centralized",
    workers: int = 1,
) -> MonteCarloResult:
    """Mean metrics over ``trials`` runs seeded ``base_seed + i``.

    For ``kind="distributed"`` each trial contributes its network-average
    frame, and ``node_means`` holds the per-node means. Trials are
    independent; ``workers > 1`` spreads them over processes without changing
    the result.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if kind not in ("centralized", "distributed"):
        raise ValueError(f"unknown run kind {kind!r}")
    seeds = [base_seed + i for i in range(trials)]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=min(workers, trials)) as pool:
            outputs = list(pool.map(_trial, [cfg] * trials, seeds, [kind] * trials))
    else:
        outputs = [_trial(cfg, s, kind) for s in seeds]
    frames = [o[0] for o in outputs]
    per_node: dict[int, list[MetricsFrame]] = {}
    for _, nodes in outputs:
        for i, f in (nodes or {}).items():
            per_node.setdefault(i, []).append(f)
    node_means = {i: MetricsFrame.mean(fs) for i, fs in sorted(per_node.items())} if per_node else None
    return MonteCarloResult(MetricsFrame.mean(frames), frames, seeds, node_means)
