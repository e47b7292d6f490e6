"""mixalign: joint clustering and cross-sample calibration of multi-sample
data with a coarsened hierarchical mixture of multivariate skew normals."""

__version__ = "0.1.0"

from .state import Dataset, Hyper, ChainState, ParticleCloud, init_state, power_loglik
from .sampler import SamplerConfig, run
from .calibrate import CalibratedDataset, calibrate, classify, relabel
from .simulate import SimSpec, generate, distort
from .diagnostics import (
    active_clusters,
    adjusted_rand_index,
    alignment_score,
    marginal_export,
    zeta_sweep,
)
from .chainio import read_chain, write_chain
from .dataio import ingest, write_dataset
from . import snkernel

__all__ = [
    "Dataset",
    "Hyper",
    "ChainState",
    "ParticleCloud",
    "SamplerConfig",
    "CalibratedDataset",
    "SimSpec",
    "init_state",
    "power_loglik",
    "run",
    "calibrate",
    "classify",
    "relabel",
    "generate",
    "distort",
    "active_clusters",
    "adjusted_rand_index",
    "alignment_score",
    "marginal_export",
    "zeta_sweep",
    "read_chain",
    "write_chain",
    "ingest",
    "write_dataset",
    "snkernel",
]
