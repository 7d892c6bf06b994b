"""N:M sparsification toolkit.

Core pipeline: load layer bundles (ESPT tensors + manifest), compute
per-channel calibration statistics, score weights with an entropy-aware
importance metric, search a channel permutation that raises the retained
score under the N:M constraint, prune, and optionally pack 2:4 results into
the ESPK container for sparse execution.
"""

from .errors import FormatError, ToolkitError, ValidationError
from .metrics import (
    DEFAULT_ALPHA,
    METRIC_KINDS,
    MetricMatrix,
    compute_metric,
    esparse_metric,
    magnitude_metric,
    wanda_metric,
)
from .pruner import (
    ModelPruneError,
    PruneConfig,
    PruneResult,
    ShuffleConfig,
    nm_mask,
    prune_layer,
    prune_model,
    reconstruction_error,
    write_prune_outputs,
)
from .shuffle import (
    Permutation,
    SparsityPattern,
    channel_shuffle,
    global_naive_shuffle,
    identity_permutation,
    local_block_shuffle,
    pruned_objective,
    retained_objective,
)
from .sparse_exec import (
    PackedSparseWeight,
    account,
    pack,
    packed_violations,
    read_packed,
    sparse_gemm,
    unpack,
    write_packed,
)
from .stats import ChannelStats, amplitude, channel_histogram, compute_stats, entropy
from .synth import SynthSpec, ablation_run, generate
from .tensorstore import (
    LayerBundle,
    LayerRef,
    Manifest,
    TensorF,
    load_bundle,
    load_manifest,
    read_tensor,
    write_tensor,
)

__version__ = "0.1.0"
