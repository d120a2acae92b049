"""Verification and open-set identification decisions, plain and ERS-gated.

All comparisons are inclusive: a similarity equal to ``tau`` matches and an
ERS equal to ``gamma`` passes the gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .embedding import Embedding, cosine_matrix, cosine_similarity
from .errors import DimensionMismatchError, EmptyInputError
from .ers import ErsValue

DEFAULT_TAU = 0.5
DEFAULT_GAMMA = 0.60

ErsLike = Union[ErsValue, float]


@dataclass(frozen=True)
class DecisionConfig:
    """Similarity threshold ``tau`` and recognizability threshold ``gamma``.

    ``gate_gallery`` extends the ERS gate to gallery entries during search;
    it is off by default because galleries are assumed to be enrolled from
    recognizable images.
    """

    tau: float = DEFAULT_TAU
    gamma: float = DEFAULT_GAMMA
    gate_gallery: bool = False

    def __post_init__(self):
        if not -1.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [-1, 1], got {self.tau}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class SearchOutcome:
    """Result of a 1:N search.

    ``gallery_index`` is 1-based and present exactly when ``matched``.
    ``best_similarity`` is the top score among considered gallery entries
    (``-inf`` if every entry was excluded by the gallery gate).
    """

    matched: bool
    gallery_index: int | None
    best_similarity: float

    def __post_init__(self):
        if self.matched != (self.gallery_index is not None):
            raise ValueError("gallery_index must be set iff matched")

    @property
    def label(self) -> int:
        """0 for no match, otherwise the 1-based gallery index."""
        return self.gallery_index or 0


def _capped(e: ErsLike) -> float:
    return float(e.capped) if isinstance(e, ErsValue) else float(e)


def verify(f1: Embedding, f2: Embedding, cfg: DecisionConfig) -> bool:
    return cosine_similarity(f1, f2) >= cfg.tau


def verify_with_ers(
    f1: Embedding, f2: Embedding, e1: ErsLike, e2: ErsLike, cfg: DecisionConfig
) -> bool:
    """Verification that also requires both images to be recognizable."""
    s = cosine_similarity(f1, f2)
    return s >= cfg.tau and _capped(e1) >= cfg.gamma and _capped(e2) >= cfg.gamma


def _gallery_matrix(query: Embedding, gallery) -> tuple[np.ndarray, np.ndarray]:
    G = np.asarray(gallery, dtype=np.float64)
    if G.size == 0 or (G.ndim == 2 and G.shape[0] == 0):
        raise EmptyInputError("gallery is empty")
    G = np.atleast_2d(G)
    q = np.asarray(query, dtype=np.float64)
    if q.shape[-1] != G.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: query {q.shape[-1]} vs gallery {G.shape[1]}")
    return q, G


def _search(sims: np.ndarray, allowed: np.ndarray | None, tau: float) -> SearchOutcome:
    if allowed is not None:
        if not allowed.any():
            return SearchOutcome(False, None, -math.inf)
        sims = np.where(allowed, sims, -np.inf)
    j = int(np.argmax(sims))
    best = float(sims[j])
    if best >= tau:
        return SearchOutcome(True, j + 1, best)
    return SearchOutcome(False, None, best)


def identify(query: Embedding, gallery: Sequence[Embedding] | np.ndarray, cfg: DecisionConfig) -> SearchOutcome:
    """Open-set search: best gallery match if its similarity reaches ``tau``.

    Equal similarities resolve to the lowest gallery index.
    """
    q, G = _gallery_matrix(query, gallery)
    return _search(cosine_matrix(q, G)[0], None, cfg.tau)


def identify_with_ers(
    query: Embedding,
    e_q: ErsLike,
    gallery: Sequence[Embedding] | np.ndarray,
    gallery_ers: Sequence[ErsLike] | None,
    cfg: DecisionConfig,
) -> SearchOutcome:
    """ERS-gated open-set search.

    A query below ``gamma`` never matches. With ``cfg.gate_gallery`` the
    gallery entries below ``gamma`` are dropped before taking the argmax;
    if none remain the outcome is a non-match without an index.
    """
    q, G = _gallery_matrix(query, gallery)
    allowed = None
    if cfg.gate_gallery:
        if gallery_ers is None:
            raise ValueError("gallery_ers is required when gate_gallery is enabled")
        if len(gallery_ers) != G.shape[0]:
            raise ValueError(f"{len(gallery_ers)} gallery ERS values for {G.shape[0]} entries")
        allowed = np.array([_capped(e) >= cfg.gamma for e in gallery_ers], dtype=bool)
    out = _search(cosine_matrix(q, G)[0], allowed, cfg.tau)
    if _capped(e_q) < cfg.gamma and out.matched:
        return SearchOutcome(False, None, out.best_similarity)
    return out
