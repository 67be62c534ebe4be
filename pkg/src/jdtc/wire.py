"""Binary message format for densities exchanged between consensus nodes.

Layout (little-endian; counts and ids are uint32, every value float64)::

    u32 payload_length              bytes that follow this field
    u32 state_dim n
    f64 r
    u32 n_classes
      per class:  u32 class_id, f64 gamma
    per class (same order):
      u32 n_modes
        per mode: u32 mode_id, f64 beta
    per slot (class order, then mode order):
      u32 J
        per component: f64 weight, f64 mean[n], f64 cov_upper[n(n+1)/2]

The covariance upper triangle is stored row-major (P00, P01, ..., P11, ...).
"""

from __future__ import annotations

import struct

import numpy as np

from .density import AugmentedBernoulli, ClassModePmf, GaussianMixture


def encode(d: AugmentedBernoulli) -> bytes:
    n = d.dim
    iu = np.triu_indices(n)
    parts = [struct.pack("<I", n), struct.pack("<d", d.r), struct.pack("<I", len(d.gamma))]
    for c, g in d.gamma.items():
        parts.append(struct.pack("<Id", c, g))
    for c in d.gamma:
        row = d.beta[c]
        parts.append(struct.pack("<I", len(row)))
        for m, b in row.items():
            parts.append(struct.pack("<Id", m, b))
    for c in d.gamma:
        for m in d.beta[c]:
            gm = d.spdf[(c, m)]
            parts.append(struct.pack("<I", len(gm)))
            if len(gm):
                block = np.hstack([gm.weights[:, None], gm.means, gm.covs[:, iu[0], iu[1]]])
                parts.append(block.astype("<f8").tobytes())
    payload = b"".join(parts)
    return struct.pack("<I", len(payload)) + payload


def decode(buf: bytes) -> AugmentedBernoulli:
    (length,) = struct.unpack_from("<I", buf, 0)
    if len(buf) != length + 4:
        raise ValueError(f"length prefix {length} does not match buffer of {len(buf) - 4} bytes")
    off = 4
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    (r,) = struct.unpack_from("<d", buf, off)
    off += 8
    (nc,) = struct.unpack_from("<I", buf, off)
    off += 4
    gamma = {}
    for _ in range(nc):
        c, g = struct.unpack_from("<Id", buf, off)
        off += 12
        gamma[c] = g
    beta = {}
    for c in gamma:
        (nm,) = struct.unpack_from("<I", buf, off)
        off += 4
        row = {}
        for _ in range(nm):
            m, b = struct.unpack_from("<Id", buf, off)
            off += 12
            row[m] = b
        beta[c] = row
    iu = np.triu_indices(n)
    width = 1 + n + len(iu[0])
    spdf = {}
    for c in gamma:
        for m in beta[c]:
            (J,) = struct.unpack_from("<I", buf, off)
            off += 4
            if J == 0:
                spdf[(c, m)] = GaussianMixture.empty(n)
                continue
            block = np.frombuffer(buf, dtype="<f8", count=J * width, offset=off).reshape(J, width)
            off += 8 * J * width
            covs = np.zeros((J, n, n))
            covs[:, iu[0], iu[1]] = block[:, 1 + n :]
            covs[:, iu[1], iu[0]] = block[:, 1 + n :]
            spdf[(c, m)] = GaussianMixture(block[:, 0].copy(), block[:, 1 : 1 + n].copy(), covs)
    if off != len(buf):
        raise ValueError("trailing bytes after density record")
    return AugmentedBernoulli(r, ClassModePmf(gamma, beta), spdf)


def message_size(d: AugmentedBernoulli) -> int:
    return len(encode(d))
