"""Mixture reduction: prune, merge, cap."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import kernels
from .density import GaussianMixture

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReductionPolicy:
    prune_threshold: float = 1e-15
    merge_threshold: float = 20.0
    max_components: int = 6

    def __post_init__(self):
        if self.prune_threshold < 0:
            raise ValueError("prune threshold must be nonnegative")
        if self.merge_threshold <= 0:
            raise ValueError("merge threshold must be positive")
        if self.max_components < 1:
            raise ValueError("max components must be at least 1")


def reduce(gm: GaussianMixture, policy: ReductionPolicy) -> GaussianMixture:
    """Reduce ``gm`` while preserving its total weight.

    Components whose normalized weight falls below the prune threshold are
    dropped. The survivors are merged greedily, heaviest first, absorbing
    every component within the merge threshold (squared Mahalanobis distance
    in the seed's metric); sweeps repeat until nothing merges, so reducing a
    reduced mixture is a no-op. Finally only the ``max_components`` heaviest
    are kept and weights are rescaled to the input total.
    """
    if len(gm) == 0:
        return gm
    w, m, p, status = kernels.reduce_mixture(
        gm.weights,
        gm.means,
        gm.covs,
        float(policy.prune_threshold),
        float(policy.merge_threshold),
        int(policy.max_components),
    )
    if status == 1:
        log.info("reduction pruned every component; kept a single moment-matched component")
    return GaussianMixture(w, m, p)
