"""Determinantal consensus clustering with scalable DPP sampling backends."""

__version__ = "0.1.0"

from .consensus import (  # noqa: E402
    ConsensusConfig,
    ConsensusMatrix,
    DeterminantalConsensusClustering,
    Partition,
    consensus_cluster,
)
from .datagen import MixtureSpec, generate_dataset  # noqa: E402
from .dpp import log_pmf, sample_dpp  # noqa: E402
from .eigen import dense_eigh, lanczos_topk  # noqa: E402
from .kernel import RBFKernel, estimate_bandwidth, rbf_kernel  # noqa: E402
from .metrics import adjusted_rand, kde, symmetrized_kl  # noqa: E402
from .nngp import NNGPApproximation  # noqa: E402

__all__ = [
    "ConsensusConfig",
    "ConsensusMatrix",
    "DeterminantalConsensusClustering",
    "Partition",
    "consensus_cluster",
    "MixtureSpec",
    "generate_dataset",
    "log_pmf",
    "sample_dpp",
    "dense_eigh",
    "lanczos_topk",
    "RBFKernel",
    "estimate_bandwidth",
    "rbf_kernel",
    "adjusted_rand",
    "kde",
    "symmetrized_kl",
    "NNGPApproximation",
]
