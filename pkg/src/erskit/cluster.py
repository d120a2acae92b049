"""Agglomerative clustering of an unlabeled corpus and UI-centroid discovery.

The corpus is clustered bottom-up on chordal distance; the largest resulting
cluster is taken to be the unrecognizable identity (UI) and its normalized
mean becomes the reference direction for recognizability scoring.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .embedding import (
    Embedding,
    chordal_distance,
    as_dataset,
    mean_direction,
)
from .errors import DimensionMismatchError, EmptyInputError

DEFAULT_THRESHOLD = 1.0
DEFAULT_LINKAGE = "average"
UI_SIZE_RATIO_WARN = 10.0


class WeakUiClusterWarning(UserWarning):
    """The largest cluster is not clearly dominant; the corpus may lack UI images."""


@dataclass(frozen=True)
class ClusterParameters:
    linkage: str
    threshold: float


@dataclass(frozen=True)
class ClusterResult:
    """Partition of a corpus into clusters of item ids.

    ``clusters`` is ordered by size (descending), ties broken by the smallest
    member id; members within a cluster are sorted. ``merges`` records the
    merge sequence as ``(id_a, id_b, distance)`` where each id is the
    smallest member id of the cluster being merged.
    """

    clusters: tuple[tuple[str, ...], ...]
    sizes_descending: tuple[int, ...]
    parameters: ClusterParameters
    merges: tuple[tuple[str, str, float], ...] = ()

    @property
    def num_items(self) -> int:
        return sum(self.sizes_descending)

    def labels(self) -> dict[str, int]:
        """Map each item id to its cluster's position in :attr:`clusters`."""
        return {item: k for k, members in enumerate(self.clusters) for item in members}


@dataclass(frozen=True)
class UiModel:
    centroid: Embedding
    source_cluster_size: int
    clustering_parameters: ClusterParameters | None = None
    source_tag: str = ""

    def __post_init__(self):
        c = np.asarray(self.centroid, dtype=np.float64)
        if abs(float(np.linalg.norm(c)) - 1.0) > 1e-6:
            raise ValueError("UiModel centroid must be unit-norm")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "centroid", c)

    @property
    def dim(self) -> int:
        return int(self.centroid.shape[0])


def hac_cluster(
    corpus,
    threshold: float = DEFAULT_THRESHOLD,
    linkage: str = DEFAULT_LINKAGE,
    *,
    workers: int = 1,
    backend: str | None = None,
) -> ClusterResult:
    """Hierarchical agglomerative clustering with a distance cut-off.

    Args:
        corpus: a :class:`~erskit.embedding.Dataset` or list of
            :class:`~erskit.embedding.LabeledEmbedding`.
        threshold: merge cut-off in chordal distance units, in (0, 2].
            Merging continues while the closest pair of clusters is at
            distance <= threshold.
        linkage: ``"average"``, ``"complete"`` or ``"single"``.
        workers: threads for the distance-matrix kernel. Does not change
            the result.
        backend: force ``"cython"`` or ``"python"`` kernels.

    Ties between equally close cluster pairs are resolved by the smallest
    member id of the lower cluster, then of the upper one, which makes the
    result independent of input order.
    """
    if linkage not in _backend.LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}; expected one of {sorted(_backend.LINKAGES)}")
    if not (math.isfinite(threshold) and 0.0 < threshold <= 2.0):
        raise ValueError(f"threshold must be in (0, 2], got {threshold}")
    ds = as_dataset(corpus)
    if len(ds) == 0:
        raise EmptyInputError("cannot cluster an empty corpus")

    kernel = _backend.get(backend)
    order = sorted(range(len(ds)), key=ds.ids.__getitem__)
    ids = [ds.ids[k] for k in order]
    X = np.ascontiguousarray(ds.vectors[order])
    D = kernel.pairwise_chordal(X, workers)
    labels, merges = kernel.hac_merge(D, float(threshold), _backend.LINKAGES[linkage])
    del D

    groups: dict[int, list[str]] = {}
    for k, rep in enumerate(labels.tolist()):
        groups.setdefault(rep, []).append(ids[k])
    clusters = sorted(groups.values(), key=lambda m: (-len(m), m[0]))
    return ClusterResult(
        clusters=tuple(tuple(m) for m in clusters),
        sizes_descending=tuple(len(m) for m in clusters),
        parameters=ClusterParameters(linkage=linkage, threshold=float(threshold)),
        merges=tuple((ids[int(a)], ids[int(b)], float(d)) for a, b, d in merges),
    )


def find_ui_cluster(result: ClusterResult, corpus, source_tag: str = "") -> UiModel:
    """Build the UI model from the largest cluster of ``result``.

    Size ties go to the cluster holding the smallest item id. Warns with
    :class:`WeakUiClusterWarning` when the chosen cluster is less than ten
    times the median cluster size.
    """
    if not result.clusters:
        raise EmptyInputError("cluster result is empty")
    ds = as_dataset(corpus)
    ui = min(result.clusters, key=lambda m: (-len(m), min(m)))
    members = sorted(ui)
    centroid = mean_direction(ds.vectors[[ds.index(i) for i in members]])

    median = float(np.median(result.sizes_descending))
    if len(ui) < UI_SIZE_RATIO_WARN * median:
        warnings.warn(
            f"largest cluster ({len(ui)}) is under {UI_SIZE_RATIO_WARN:g}x the median "
            f"cluster size ({median:g}); the corpus may not contain unrecognizable faces",
            WeakUiClusterWarning,
            stacklevel=2,
        )
    return UiModel(
        centroid=centroid,
        source_cluster_size=len(ui),
        clustering_parameters=result.parameters,
        source_tag=source_tag,
    )


def cluster_size_histogram(result: ClusterResult) -> list[tuple[int, int]]:
    """``(rank, size)`` pairs, largest first, ranks starting at 1."""
    sizes = sorted(result.sizes_descending, reverse=True)
    return [(rank, size) for rank, size in enumerate(sizes, start=1)]


def centroid_stability(models: Sequence[UiModel]) -> np.ndarray:
    """Pairwise chordal distances between UI centroids."""
    models = list(models)
    if len(models) < 2:
        raise ValueError("centroid_stability needs at least two models")
    dims = {m.dim for m in models}
    if len(dims) != 1:
        raise DimensionMismatchError(f"UI models disagree on dimension: {sorted(dims)}")
    k = len(models)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = chordal_distance(models[i].centroid, models[j].centroid)
    return out
