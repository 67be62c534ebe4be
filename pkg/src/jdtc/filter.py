"""JDTC Bernoulli filter recursions with Gaussian-mixture state densities.

``predict`` propagates {r, gamma, beta, s} through birth, survival and the
class-conditioned mode Markov chains. ``centralized_update`` applies the exact
multi-sensor update by running one EKF stage per sensor over every (class,
mode) slot; the product of the per-stage normalizers is the slot likelihood
l(m|c), from which the class likelihoods, class/mode PMFs and existence
probability follow. All likelihood bookkeeping is in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .density import AugmentedBernoulli, ClassModePmf, GaussianMixture, gm_moments
from .models import BirthModel, ClassLibrary, Sensor
from .reduce import ReductionPolicy, reduce


class ClutterModelError(ValueError):
    """A measurement falls where the clutter intensity is zero."""


@dataclass(frozen=True)
class Estimate:
    exists: bool
    state: Optional[np.ndarray] = None
    class_id: Optional[int] = None
    mode_id: Optional[int] = None


def _logsumexp(a: np.ndarray) -> float:
    top = np.max(a)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.exp(a - top).sum()))


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def predict(
    prior: AugmentedBernoulli,
    birth: BirthModel,
    p_survival: float,
    library: ClassLibrary,
) -> AugmentedBernoulli:
    if not 0.0 <= p_survival <= 1.0:
        raise ValueError("survival probability outside [0, 1]")
    r = prior.r
    w_birth = birth.p_birth * (1.0 - r)
    w_surv = p_survival * r
    r_pred = w_birth + w_surv

    classes = library.classes
    g_num = np.array([w_birth * birth.pmf.gamma[c] + w_surv * prior.gamma[c] for c in classes])
    if g_num.sum() > 0.0:
        gamma = dict(zip(classes, (g_num / g_num.sum()).tolist()))
    else:
        gamma = dict(prior.gamma)

    beta: dict[int, dict[int, float]] = {}
    spdf: dict[tuple[int, int], GaussianMixture] = {}
    for c in classes:
        ms = library.mode_sets[c]
        pi = np.asarray(library.transitions[c], dtype=float)
        b_prev = np.array([prior.beta[c][m] for m in ms])
        b_birth = np.array([birth.pmf.beta[c][m] for m in ms])
        # a_birth[m], a_surv[m', m]: unnormalized slot-level weights
        a_birth = w_birth * birth.pmf.gamma[c] * b_birth
        a_surv = w_surv * prior.gamma[c] * (b_prev[:, None] * pi)
        num = a_birth + a_surv.sum(axis=0)
        if num.sum() <= 0.0:
            # class carries no mass; keep its conditional structure alive
            a_birth = w_birth * b_birth
            a_surv = w_surv * (b_prev[:, None] * pi)
            num = a_birth + a_surv.sum(axis=0)
        if num.sum() <= 0.0:
            a_birth = b_birth.copy()
            a_surv = np.zeros_like(a_surv)
            num = a_birth
        beta[c] = dict(zip(ms, (num / num.sum()).tolist()))

        prev = [prior.spdf[(c, mp)] for mp in ms]
        for i, m in enumerate(ms):
            mode = library.modes[m]
            ws, mus, covs = [], [], []
            bgm = birth.spdf.get((c, m))
            if bgm is not None:
                ws.append(a_birth[i] * bgm.weights)
                mus.append(bgm.means)
                covs.append(bgm.covs)
            for k, gm in enumerate(prev):
                if len(gm) == 0:
                    continue
                ws.append(a_surv[k, i] * gm.weights)
                mus.append(gm.means @ mode.F.T)
                pc = mode.F @ gm.covs @ mode.F.T + mode.Q
                covs.append(0.5 * (pc + np.swapaxes(pc, 1, 2)))
            if num[i] <= 0.0 or not ws:
                spdf[(c, m)] = GaussianMixture.empty(prior.dim)
                continue
            spdf[(c, m)] = GaussianMixture(
                np.concatenate(ws) / num[i], np.concatenate(mus), np.concatenate(covs)
            )
    return AugmentedBernoulli(r_pred, ClassModePmf(gamma, beta), spdf)


def _sensor_stage(gm: GaussianMixture, sensor: Sensor, zs, kappas, pd, policy, target_only=False):
    """One EKF stage on a normalized mixture: (posterior, log normalizer).

    ``target_only`` marks a clutter-free scan with one return: the return is
    target-originated, so the missed-detection branch is dropped.
    """
    zhat, jac = sensor.linearize(gm.means)
    w, m, p = kernels.ekf_scalar_update(
        gm.weights, gm.means, gm.covs, zhat, jac, float(sensor.noise_var), zs, kappas, float(pd)
    )
    if target_only:
        w[: len(gm)] = 0.0
    lam = w.sum()
    if not lam > 0.0:
        return GaussianMixture(w, m, p), -np.inf
    out = GaussianMixture(w / lam, m, p)
    if policy is not None:
        out = reduce(out, policy)
    return out, float(np.log(lam))


def _combine(pred: AugmentedBernoulli, loglik, spdf, certain: bool = False) -> AugmentedBernoulli:
    gamma_pred = pred.gamma
    classes = list(gamma_pred)
    class_ll = np.full(len(classes), -np.inf)
    beta: dict[int, dict[int, float]] = {}
    out_spdf = dict(spdf)
    for ci, c in enumerate(classes):
        ms = list(pred.beta[c])
        a = np.array([_log(pred.beta[c][m]) + loglik.get((c, m), -np.inf) for m in ms])
        lc = _logsumexp(a)
        if np.isfinite(lc):
            class_ll[ci] = lc
            post = np.exp(a - lc)
            beta[c] = dict(zip(ms, (post / post.sum()).tolist()))
            for m in ms:
                if beta[c][m] == 0.0:
                    out_spdf[(c, m)] = GaussianMixture.empty(pred.dim)
        else:
            beta[c] = dict(pred.beta[c])
            for m in ms:
                out_spdf[(c, m)] = pred.spdf[(c, m)]
    lg = _log(np.array([gamma_pred[c] for c in classes])) + class_ll
    total = _logsumexp(lg)
    if not np.isfinite(total):
        if certain:
            raise ClutterModelError("clutter-free return has zero likelihood under every class and mode")
        return AugmentedBernoulli(0.0, ClassModePmf(dict(gamma_pred), beta), out_spdf)
    g = np.exp(lg - total)
    gamma = dict(zip(classes, (g / g.sum()).tolist()))
    with np.errstate(divide="ignore", over="ignore"):
        odds = np.exp(_log(1.0 - pred.r) - (_log(pred.r) + total))
    if certain:
        # the empty-set hypothesis cannot explain a clutter-free return
        r = 1.0 if pred.r > 0.0 else 0.0
    else:
        r = 0.0 if pred.r == 0.0 else float(1.0 / (1.0 + odds))
    return AugmentedBernoulli(r, ClassModePmf(gamma, beta), out_spdf)


def _prepare_scans(measurements, sensors):
    unknown = set(measurements) - set(sensors)
    if unknown:
        raise KeyError(f"measurements from unregistered sensors {sorted(unknown)}")
    scans = []
    certain = False
    for sid in sorted(measurements):
        sensor = sensors[sid]
        zs = np.asarray(measurements[sid], dtype=float).reshape(-1)
        kappas = sensor.clutter_intensity(zs)
        target_only = False
        if np.any(kappas <= 0.0):
            bad = zs[kappas <= 0.0]
            if sensor.clutter_rate > 0.0:
                raise ClutterModelError(f"sensor {sid}: zero clutter intensity at z={bad.tolist()}")
            if len(zs) > 1:
                raise ClutterModelError(f"clutter-free sensor {sid} reported {len(zs)} returns for one target")
            # no clutter: kappa cancels, any positive constant will do
            kappas = np.ones_like(zs)
            target_only = certain = True
        scans.append((sensor, zs, kappas, target_only))
    return scans, certain


def slot_log_likelihoods(
    pred: AugmentedBernoulli,
    measurements: Mapping[int, Sequence[float]],
    sensors: Mapping[int, Sensor],
    policy: Optional[ReductionPolicy] = None,
):
    """Sequential per-sensor GM update of every active slot.

    Returns ``(loglik, spdf)``: log l(m|c) per slot and the posterior slot
    mixtures. Sensors are processed in ascending id; a registered sensor
    absent from ``measurements`` did not report and is skipped.
    """
    scans, _ = _prepare_scans(measurements, sensors)
    return _slot_updates(pred, scans, policy)


def _slot_updates(pred, scans, policy):
    loglik: dict[tuple[int, int], float] = {}
    spdf: dict[tuple[int, int], GaussianMixture] = dict(pred.spdf)
    for c, row in pred.beta.items():
        for m, b in row.items():
            if b <= 0.0:
                continue
            gm = pred.spdf[(c, m)]
            total = 0.0
            for sensor, zs, kappas, target_only in scans:
                gm, ll = _sensor_stage(gm, sensor, zs, kappas, sensor.detection_prob(c), policy, target_only)
                total += ll
                if not np.isfinite(total):
                    break
            loglik[(c, m)] = total
            spdf[(c, m)] = gm
    return loglik, spdf


def centralized_update(
    pred: AugmentedBernoulli,
    measurements: Mapping[int, Sequence[float]],
    sensors: Mapping[int, Sensor],
    policy: Optional[ReductionPolicy] = None,
) -> AugmentedBernoulli:
    """Exact multi-sensor Bernoulli update, sensors composed in ascending id.

    With ``policy=None`` no reduction happens and every slot grows to
    prod_i(|Z_i| + 1) times its predicted component count; otherwise the
    mixture is reduced after each sensor stage.
    """
    scans, certain = _prepare_scans(measurements, sensors)
    loglik, spdf = _slot_updates(pred, scans, policy)
    return _combine(pred, loglik, spdf, certain)


def single_sensor_update(
    pred: AugmentedBernoulli,
    measurements: Sequence[float],
    sensor: Sensor,
    policy: Optional[ReductionPolicy] = None,
) -> AugmentedBernoulli:
    return centralized_update(pred, {sensor.id: measurements}, {sensor.id: sensor}, policy)


def extract(d: AugmentedBernoulli, threshold: float = 0.5, criterion: str = "mmse") -> Estimate:
    """Existence decision, then MAP class, MAP mode and a state point estimate.

    Ties in the class or mode argmax resolve to the lowest id. ``criterion``
    ``"mmse"`` returns the mixture mean of the selected slot, ``"map"`` the
    mean of its heaviest component.
    """
    if d.r < threshold:
        return Estimate(False)
    classes = sorted(d.gamma)
    c_hat = classes[int(np.argmax([d.gamma[c] for c in classes]))]
    modes = sorted(d.beta[c_hat])
    m_hat = modes[int(np.argmax([d.beta[c_hat][m] for m in modes]))]
    gm = d.spdf[(c_hat, m_hat)]
    if len(gm) == 0:
        return Estimate(False)
    if criterion == "mmse":
        x_hat = gm_moments(gm)[1]
    elif criterion == "map":
        x_hat = gm.means[int(np.argmax(gm.weights))].copy()
    else:
        raise ValueError(f"unknown extraction criterion {criterion!r}")
    return Estimate(True, x_hat, c_hat, m_hat)
