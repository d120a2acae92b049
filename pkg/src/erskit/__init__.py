"""Embedding recognizability toolkit.

Find the cluster that unrecognizable faces collapse into, score embeddings
by their distance from it, and use that score to gate match decisions and
weight template aggregation. Everything works on precomputed unit-norm
embeddings.
"""

from __future__ import annotations

from ._backend import BACKEND, available_backends
from .aggregation import (
    AggregateResult,
    Template,
    TemplateMember,
    TemplateSpec,
    WeightingStrategy,
    aggregate,
    build_template,
    compute_weights,
    media_pool,
)
from .cluster import (
    ClusterParameters,
    ClusterResult,
    UiModel,
    WeakUiClusterWarning,
    centroid_stability,
    cluster_size_histogram,
    find_ui_cluster,
    hac_cluster,
)
from .decisions import (
    DecisionConfig,
    SearchOutcome,
    identify,
    identify_with_ers,
    verify,
    verify_with_ers,
)
from .embedding import (
    Dataset,
    LabeledEmbedding,
    chordal_distance,
    cosine_similarity,
    mean_direction,
    normalize,
)
from .errors import (
    ConstructionError,
    DegenerateError,
    DimensionMismatchError,
    EmptyInputError,
    ErskitError,
    FormatError,
    ProtocolError,
)
from .ers import ErsValue, batch_ers, compute_ers, enhance_embedding
from .metrics import (
    EvalReport,
    OperatingPoint,
    PairProtocol,
    Pipeline,
    error_reduction,
    eval_search,
    eval_verification,
    relative_reduction,
    roc_sweep,
)

__version__ = "0.1.0"
