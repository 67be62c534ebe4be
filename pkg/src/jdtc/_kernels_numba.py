"""numba-compiled twins of ``_kernels_numpy``. Same signatures, same outputs."""

import numpy as np
from numba import njit

LOG_2PI = np.log(2.0 * np.pi)


JITTER = 1e-12


@njit(cache=True)
def _try_chol(a, L, jitter):
    # hand-rolled Cholesky; LAPACK call overhead dominates at n=4
    n = a.shape[0]
    for i in range(n):
        for j in range(i + 1):
            acc = a[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                acc += jitter
                if not acc > 0.0:
                    return False
                L[i, i] = np.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
        for j in range(i + 1, n):
            L[i, j] = 0.0
    return True


@njit(cache=True)
def _chol_into(a, L):
    # one retry with a small diagonal jitter before giving up
    if not _try_chol(a, L, 0.0):
        if not _try_chol(a, L, JITTER):
            raise np.linalg.LinAlgError("matrix is not positive definite")


@njit(cache=True)
def _chol(a):
    L = np.empty_like(a)
    _chol_into(a, L)
    return L


@njit(cache=True)
def _matvec(a, x, out):
    n = x.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += a[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _spd_inv_into(a, L, linv, inv):
    """Write inv(a) into ``inv`` (a symmetric positive definite); return log det a."""
    n = a.shape[0]
    _chol_into(a, L)
    for j in range(n):
        for i in range(j):
            linv[i, j] = 0.0
        linv[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, n):
            acc = 0.0
            for k in range(j, i):
                acc -= L[i, k] * linv[k, j]
            linv[i, j] = acc / L[i, i]
    for i in range(n):
        for j in range(i, n):
            acc = 0.0
            for k in range(j, n):
                acc += linv[k, i] * linv[k, j]
            inv[i, j] = acc
            inv[j, i] = acc
    logdet = 0.0
    for i in range(n):
        logdet += 2.0 * np.log(L[i, i])
    return logdet


@njit(cache=True)
def _spd_inv(a):
    n = a.shape[0]
    inv = np.empty((n, n))
    logdet = _spd_inv_into(a, np.empty((n, n)), np.empty((n, n)), inv)
    return inv, logdet


@njit(cache=True)
def _maha_logdet_into(cov, diff, L, y):
    """Squared Mahalanobis norm of ``diff`` under ``cov`` and log det cov."""
    n = cov.shape[0]
    _chol_into(cov, L)
    maha = 0.0
    logdet = 0.0
    for a in range(n):
        acc = diff[a]
        for b in range(a):
            acc -= L[a, b] * y[b]
        y[a] = acc / L[a, a]
        maha += y[a] * y[a]
        logdet += 2.0 * np.log(L[a, a])
    return maha, logdet


@njit(cache=True)
def gm_eval(weights, means, covs, points):
    J, n = means.shape
    out = np.zeros(points.shape[0])
    for j in range(J):
        chol = _chol(covs[j])
        logdet = 0.0
        for a in range(n):
            logdet += 2.0 * np.log(chol[a, a])
        y = np.empty(n)
        for p in range(points.shape[0]):
            maha = 0.0
            for a in range(n):
                acc = points[p, a] - means[j, a]
                for b in range(a):
                    acc -= chol[a, b] * y[b]
                y[a] = acc / chol[a, a]
                maha += y[a] * y[a]
            out[p] += weights[j] * np.exp(-0.5 * (maha + logdet + n * LOG_2PI))
    return out


@njit(cache=True)
def ekf_scalar_update(weights, means, covs, zhat, jac, noise_var, zs, kappas, pd):
    J, n = means.shape
    nz = zs.shape[0]
    total = J * (nz + 1)
    out_w = np.empty(total)
    out_m = np.empty((total, n))
    out_p = np.empty((total, n, n))
    ph = np.empty(n)
    gain = np.empty(n)
    for j in range(J):
        out_w[j] = (1.0 - pd) * weights[j]
        for a in range(n):
            out_m[j, a] = means[j, a]
            for b in range(n):
                out_p[j, a, b] = covs[j, a, b]
        if nz == 0:
            continue
        s = noise_var
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += covs[j, a, b] * jac[j, b]
            ph[a] = acc
            s += jac[j, a] * acc
        for a in range(n):
            gain[a] = ph[a] / s
        norm = 1.0 / np.sqrt(2.0 * np.pi * s)
        for iz in range(nz):
            row = (iz + 1) * J + j
            nu = zs[iz] - zhat[j]
            q = norm * np.exp(-0.5 * nu * nu / s)
            out_w[row] = pd * weights[j] * q / kappas[iz]
            for a in range(n):
                out_m[row, a] = means[j, a] + gain[a] * nu
            for a in range(n):
                for b in range(a, n):
                    v = covs[j, a, b] - gain[a] * gain[b] * s
                    v2 = covs[j, b, a] - gain[b] * gain[a] * s
                    sym = 0.5 * (v + v2)
                    out_p[row, a, b] = sym
                    out_p[row, b, a] = sym
    return out_w, out_m, out_p


@njit(cache=True)
def geometric_mean(w1, m1, p1, w2, m2, p2, omega):
    J1, n = m1.shape
    J2 = m2.shape[0]
    om2 = 1.0 - omega
    y1 = np.empty((J1, n, n))
    ym1 = np.empty((J1, n))
    leps1 = np.empty(J1)
    for j in range(J1):
        y1[j], ld = _spd_inv(p1[j])
        _matvec(y1[j], m1[j], ym1[j])
        leps1[j] = 0.5 * (n * (LOG_2PI - np.log(omega)) + ld - omega * (n * LOG_2PI + ld))
    y2 = np.empty((J2, n, n))
    ym2 = np.empty((J2, n))
    leps2 = np.empty(J2)
    for j in range(J2):
        y2[j], ld = _spd_inv(p2[j])
        _matvec(y2[j], m2[j], ym2[j])
        leps2[j] = 0.5 * (n * (LOG_2PI - np.log(om2)) + ld - om2 * (n * LOG_2PI + ld))

    total = J1 * J2
    out_w = np.empty(total)
    out_m = np.empty((total, n))
    out_p = np.empty((total, n, n))
    sep = np.empty((n, n))
    info = np.empty((n, n))
    diff = np.empty(n)
    vec = np.empty(n)
    L = np.empty((n, n))
    linv = np.empty((n, n))
    y = np.empty(n)
    for a1 in range(J1):
        lw1 = omega * np.log(w1[a1]) if w1[a1] > 0.0 else -np.inf
        for a2 in range(J2):
            row = a1 * J2 + a2
            lw2 = om2 * np.log(w2[a2]) if w2[a2] > 0.0 else -np.inf
            for a in range(n):
                vec[a] = omega * ym1[a1, a] + om2 * ym2[a2, a]
                diff[a] = m1[a1, a] - m2[a2, a]
                for b in range(n):
                    info[a, b] = 0.5 * (omega * (y1[a1, a, b] + y1[a1, b, a]) + om2 * (y2[a2, a, b] + y2[a2, b, a]))
                    sep[a, b] = p1[a1, a, b] / omega + p2[a2, a, b] / om2
            _spd_inv_into(info, L, linv, out_p[row])
            _matvec(out_p[row], vec, out_m[row])
            maha, ldsep = _maha_logdet_into(sep, diff, L, y)
            log_g = -0.5 * (maha + ldsep + n * LOG_2PI)
            out_w[row] = np.exp(lw1 + lw2 + leps1[a1] + leps2[a2] + log_g)
    return out_w, out_m, out_p


@njit(cache=True)
def _maha_to(seed_cov_inv, seed_mean, mean):
    n = seed_mean.shape[0]
    acc = 0.0
    for a in range(n):
        da = mean[a] - seed_mean[a]
        for b in range(n):
            acc += da * seed_cov_inv[a, b] * (mean[b] - seed_mean[b])
    return acc


@njit(cache=True)
def _merge_pass(weights, means, covs, merge_thr):
    J, n = means.shape
    order = np.argsort(-weights, kind="mergesort")
    alive = np.ones(J, dtype=np.bool_)
    ow = np.empty(J)
    om = np.empty((J, n))
    op = np.empty((J, n, n))
    members = np.empty(J, dtype=np.int64)
    count = 0
    merged_any = False
    for oi in range(J):
        s = order[oi]
        if not alive[s]:
            continue
        inv, _ = _spd_inv(covs[s])
        members[0] = s
        nm = 1
        alive[s] = False
        for j in range(J):
            if alive[j] and _maha_to(inv, means[s], means[j]) <= merge_thr:
                members[nm] = j
                nm += 1
                alive[j] = False
        if nm == 1:
            ow[count] = weights[s]
            om[count] = means[s]
            op[count] = covs[s]
        else:
            merged_any = True
            wt = 0.0
            mu = np.zeros(n)
            for t in range(nm):
                k = members[t]
                wt += weights[k]
                mu += weights[k] * means[k]
            mu /= wt
            cov = np.zeros((n, n))
            for t in range(nm):
                k = members[t]
                d = means[k] - mu
                for a in range(n):
                    for b in range(n):
                        cov[a, b] += weights[k] * (covs[k, a, b] + d[a] * d[b])
            cov /= wt
            ow[count] = wt
            om[count] = mu
            for a in range(n):
                for b in range(n):
                    op[count, a, b] = 0.5 * (cov[a, b] + cov[b, a])
        count += 1
    return ow[:count].copy(), om[:count].copy(), op[:count].copy(), merged_any


@njit(cache=True)
def reduce_mixture(weights, means, covs, prune_thr, merge_thr, max_comp):
    J, n = means.shape
    total = weights.sum() if J > 0 else 0.0
    if J == 0 or total <= 0.0:
        return np.zeros(0), np.zeros((0, n)), np.zeros((0, n, n)), 0
    keep = weights / total >= prune_thr
    nk = keep.sum()
    if nk == 0:
        mu = np.zeros(n)
        for j in range(J):
            mu += weights[j] * means[j]
        mu /= total
        cov = np.zeros((n, n))
        for j in range(J):
            d = means[j] - mu
            for a in range(n):
                for b in range(n):
                    cov[a, b] += weights[j] * (covs[j, a, b] + d[a] * d[b])
        cov /= total
        cov = 0.5 * (cov + cov.T)
        ow = np.array([total])
        om = np.empty((1, n))
        om[0] = mu
        op = np.empty((1, n, n))
        op[0] = cov
        return ow, om, op, 1
    w = weights[keep]
    m = means[keep]
    p = covs[keep]
    merged = True
    while merged and w.shape[0] > 1:
        w, m, p, merged = _merge_pass(w, m, p, merge_thr)
    if w.shape[0] > max_comp:
        top = np.sort(np.argsort(-w, kind="mergesort")[:max_comp])
        w = w[top]
        m = m[top]
        p = p[top]
    w = w * (total / w.sum())
    return w, m, p, 0


@njit(cache=True)
def fuse_slot(w1, m1, p1, w2, m2, p2, omega, prune_thr, merge_thr, max_comp, do_reduce):
    w, m, p = geometric_mean(w1, m1, p1, w2, m2, p2, omega)
    total = w.sum()
    n = m1.shape[1]
    if not total > 0.0:
        return np.zeros(0), np.zeros((0, n)), np.zeros((0, n, n)), -np.inf
    w = w / total
    if do_reduce:
        w, m, p, _ = reduce_mixture(w, m, p, prune_thr, merge_thr, max_comp)
    return w, m, p, np.log(total)
