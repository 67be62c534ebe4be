"""Centralized and distributed joint detection, tracking and classification (JDTC) Bernoulli filters."""

from .density import (
    AugmentedBernoulli,
    ClassModePmf,
    GaussianComponent,
    GaussianMixture,
    gm_eval,
    gm_moments,
    validate,
)
from .filter import Estimate, centralized_update, extract, predict, single_sensor_update
from .fusion import consensus_round, fuse, fuse_pair, gm_geometric_mean, metropolis_weights
from .kernels import BACKEND
from .models import BirthModel, ClassLibrary, MotionMode, RangeSensor, mode_matrices
from .reduce import ReductionPolicy, reduce

__version__ = "0.1.0"
