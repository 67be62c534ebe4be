"""Pure-numpy reference implementations of the Gaussian-mixture kernels.

Every function here has a twin with the same signature in
``_kernels_numba``. Mixtures are passed as three arrays: ``weights`` (J,),
``means`` (J, n) and ``covs`` (J, n, n).
"""

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)
JITTER = 1e-12


def _cholesky(a):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(a + JITTER * np.eye(a.shape[-1]))


def _symmetrize(covs):
    return 0.5 * (covs + np.swapaxes(covs, -1, -2))


def gm_eval(weights, means, covs, points):
    """Evaluate the mixture density at each row of ``points`` (P, n)."""
    n = means.shape[1]
    out = np.zeros(points.shape[0])
    for j in range(weights.shape[0]):
        chol = _cholesky(covs[j])
        diff = np.linalg.solve(chol, (points - means[j]).T)
        maha = np.sum(diff * diff, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out += weights[j] * np.exp(-0.5 * (maha + logdet + n * LOG_2PI))
    return out


def ekf_scalar_update(weights, means, covs, zhat, jac, noise_var, zs, kappas, pd):
    """Missed-detection copies followed by one EKF-updated block per measurement.

    ``zhat`` (J,) and ``jac`` (J, n) are the predicted scalar measurement and
    its Jacobian at each component mean. Output has J * (len(zs) + 1)
    components; block ``b`` (b >= 1) holds the update with ``zs[b - 1]``.
    Returned weights are unnormalized: their sum is the stage normalizer.
    """
    J, n = means.shape
    nz = zs.shape[0]
    ph = np.einsum("jab,jb->ja", covs, jac)
    s = np.einsum("ja,ja->j", jac, ph) + noise_var
    gain = ph / s[:, None]
    post_cov = _symmetrize(covs - gain[:, :, None] * gain[:, None, :] * s[:, None, None])

    out_w = np.empty(J * (nz + 1))
    out_m = np.empty((J * (nz + 1), n))
    out_p = np.empty((J * (nz + 1), n, n))
    out_w[:J] = (1.0 - pd) * weights
    out_m[:J] = means
    out_p[:J] = covs
    if nz == 0:
        return out_w, out_m, out_p

    innov = zs[None, :] - zhat[:, None]  # (J, Z)
    q = np.exp(-0.5 * innov**2 / s[:, None]) / np.sqrt(2.0 * np.pi * s[:, None])
    det_w = pd * weights[:, None] * q / kappas[None, :]
    out_w[J:] = det_w.T.ravel()
    out_m[J:] = (means[None, :, :] + innov.T[:, :, None] * gain[None, :, :]).reshape(-1, n)
    out_p[J:] = np.broadcast_to(post_cov, (nz, J, n, n)).reshape(-1, n, n)
    return out_w, out_m, out_p


def geometric_mean(w1, m1, p1, w2, m2, p2, omega):
    """Pairwise GM approximation of s1**omega * s2**(1 - omega).

    Returns the J1 * J2 unnormalized cross-product mixture, row-major in
    (j1, j2).
    """
    J1, n = m1.shape
    J2 = m2.shape[0]
    # cholesky doubles as the positive-definiteness check
    _cholesky(p1)
    _cholesky(p2)
    y1 = np.linalg.inv(p1)
    y2 = np.linalg.inv(p2)
    _, ld1 = np.linalg.slogdet(p1)
    _, ld2 = np.linalg.slogdet(p2)

    info = omega * y1[:, None] + (1.0 - omega) * y2[None, :]
    _cholesky(_symmetrize(info))
    cov = _symmetrize(np.linalg.inv(info))
    vec = (omega * np.einsum("jab,jb->ja", y1, m1))[:, None] + (
        (1.0 - omega) * np.einsum("jab,jb->ja", y2, m2)
    )[None, :]
    mean = np.einsum("xyab,xyb->xya", cov, vec)

    om2 = 1.0 - omega
    # log eps(w, P) = 0.5 * [logdet(2 pi P / w) - w logdet(2 pi P)]
    leps1 = 0.5 * (n * (LOG_2PI - np.log(omega)) + ld1 - omega * (n * LOG_2PI + ld1))
    leps2 = 0.5 * (n * (LOG_2PI - np.log(om2)) + ld2 - om2 * (n * LOG_2PI + ld2))

    sep = p1[:, None] / omega + p2[None, :] / om2
    diff = m1[:, None] - m2[None, :]
    _, ldsep = np.linalg.slogdet(sep)
    maha = np.einsum("xya,xya->xy", diff, np.linalg.solve(sep, diff[..., None])[..., 0])
    log_g = -0.5 * (maha + ldsep + n * LOG_2PI)

    with np.errstate(divide="ignore"):
        logw = (
            omega * np.log(w1)[:, None]
            + om2 * np.log(w2)[None, :]
            + leps1[:, None]
            + leps2[None, :]
            + log_g
        )
    return np.exp(logw).ravel(), mean.reshape(-1, n), cov.reshape(-1, n, n)


def _merge_into(weights, means, covs, idx):
    w = weights[idx]
    total = w.sum()
    mu = (w[:, None] * means[idx]).sum(axis=0) / total
    d = means[idx] - mu
    cov = (w[:, None, None] * (covs[idx] + d[:, :, None] * d[:, None, :])).sum(axis=0) / total
    return total, mu, 0.5 * (cov + cov.T)


def _merge_pass(weights, means, covs, merge_thr):
    """One greedy heaviest-first merge sweep. Returns (w, m, P, merged_any)."""
    order = np.argsort(-weights, kind="stable")
    alive = np.ones(weights.shape[0], dtype=bool)
    ow, om, op = [], [], []
    merged_any = False
    for s in order:
        if not alive[s]:
            continue
        cand = np.flatnonzero(alive)
        diff = means[cand] - means[s]
        maha = np.einsum("ja,ja->j", diff, np.linalg.solve(covs[s], diff.T).T)
        group = cand[maha <= merge_thr]
        alive[group] = False
        if group.shape[0] > 1:
            merged_any = True
            # keep seed first so a singleton group reproduces it bit-for-bit
            group = np.concatenate(([s], group[group != s]))
            w, mu, cov = _merge_into(weights, means, covs, group)
        else:
            w, mu, cov = weights[s], means[s], covs[s]
        ow.append(w)
        om.append(mu)
        op.append(cov)
    return np.array(ow), np.array(om), np.array(op), merged_any


def reduce_mixture(weights, means, covs, prune_thr, merge_thr, max_comp):
    """Prune, merge to a fixed point, cap, and restore the input total weight.

    Returns (weights, means, covs, status) with status 0 = ok,
    1 = everything pruned (single moment-matched component returned).
    """
    n = means.shape[1]
    total = weights.sum()
    if weights.shape[0] == 0 or total <= 0.0:
        return np.zeros(0), np.zeros((0, n)), np.zeros((0, n, n)), 0
    keep = weights / total >= prune_thr
    if not keep.any():
        w, mu, cov = _merge_into(weights, means, covs, np.arange(weights.shape[0]))
        return np.array([total]), mu[None], cov[None], 1
    w, m, p = weights[keep], means[keep], covs[keep]
    merged = True
    while merged and w.shape[0] > 1:
        w, m, p, merged = _merge_pass(w, m, p, merge_thr)
    if w.shape[0] > max_comp:
        top = np.argsort(-w, kind="stable")[:max_comp]
        top.sort()
        w, m, p = w[top], m[top], p[top]
    w = w * (total / w.sum())
    return w, m, p, 0


def fuse_slot(w1, m1, p1, w2, m2, p2, omega, prune_thr, merge_thr, max_comp, do_reduce):
    """Normalized geometric mean of two mixtures, optionally reduced.

    Returns ``(w, m, p, log_integral)``; an empty result with ``-inf`` when the
    geometric mean has no mass.
    """
    w, m, p = geometric_mean(w1, m1, p1, w2, m2, p2, omega)
    total = w.sum()
    n = m1.shape[1]
    if not total > 0.0:
        return np.zeros(0), np.zeros((0, n)), np.zeros((0, n, n)), -np.inf
    w = w / total
    if do_reduce:
        w, m, p, _ = reduce_mixture(w, m, p, prune_thr, merge_thr, max_comp)
    return w, m, p, float(np.log(total))
