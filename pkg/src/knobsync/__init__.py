"""Syncytial clustering: k-means sub-clusters merged by kernel-estimated overlap."""

import warnings

# numba warns once about its TBB threading layer version; it is harmless here
warnings.filterwarnings("ignore", message=".*TBB.*")

from .data import (  # noqa: E402
    DataError,
    DataMatrix,
    ScalingSpec,
    load_matrix,
    needs_scaling,
    pca_project,
    read_table,
    save_matrix,
    standardize,
    whiten,
)
from .evaluation import Contingency, adjusted_rand_index, confusion_matrix, jaccard_index, summarized_jaccard  # noqa: E402
from .kernelcdf import ResidualCdf, cdf_eval, ecdf_eval, fit_residual_cdf, gamma_mom_fit, plugin_bandwidth  # noqa: E402
from .kmeans import (  # noqa: E402
    Partition,
    PhaseConfig,
    PhaseResult,
    WssCurve,
    kmeans_phase,
    run_km_means,
    run_kmeans,
    select_k_jump,
    select_k_kl,
)
from .overlap import (  # noqa: E402
    ClusterForest,
    ConvergenceError,
    OverlapMatrix,
    composite_overlap,
    generalized_overlap,
    max_overlap,
    normed_residuals,
    overlap_matrix,
    pairwise_overlap,
    pseudo_residual,
    symmetric_dominant_eigenvalue,
)
from .syncytial import (  # noqa: E402
    KnobSyncConfig,
    KnobSyncResult,
    MergeTrace,
    ingest_partition,
    merge_iteration,
    run_knobsync,
    run_merging,
)

__version__ = "0.1.0"
