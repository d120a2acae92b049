"""Embedding Recognizability Score (ERS) and ERS enhancement.

ERS measures how far an embedding sits from the UI centroid: the capped
score is ``min(1 - <f_ui, f>, 1)`` and the raw score drops the cap, so it
ranges over [0, 2]. Both are always carried together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import NDArray

from .cluster import UiModel
from .embedding import DEGENERATE_TOL, Embedding, as_dataset, cosine_similarity
from .errors import DegenerateError, DimensionMismatchError

PARALLEL_TOL = 1e-9

UiLike = Union[UiModel, Embedding]


@dataclass(frozen=True)
class ErsValue:
    capped: float
    raw: float

    @classmethod
    def from_raw(cls, raw: float) -> "ErsValue":
        raw = float(raw)
        return cls(capped=min(raw, 1.0), raw=raw)


def _centroid(ui: UiLike) -> np.ndarray:
    c = ui.centroid if isinstance(ui, UiModel) else ui
    return np.asarray(c, dtype=np.float64)


def compute_ers(f: Embedding, ui: UiLike) -> ErsValue:
    """ERS of a single embedding against a UI model (or bare centroid)."""
    return ErsValue.from_raw(1.0 - cosine_similarity(_centroid(ui), f))


def ers_arrays(vectors: NDArray[np.float64], ui: UiLike) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ERS for the rows of ``vectors``; returns ``(capped, raw)``."""
    c = _centroid(ui)
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != c.shape[0]:
        raise DimensionMismatchError(f"vectors of shape {X.shape} vs UI dimension {c.shape[0]}")
    raw = 1.0 - np.clip(X @ c, -1.0, 1.0)
    return np.minimum(raw, 1.0), raw


def batch_ers(corpus, ui: UiLike) -> list[tuple[str, ErsValue]]:
    """``(item_id, ErsValue)`` for every record, in input order."""
    if isinstance(corpus, (list, tuple)) and not corpus:
        return []
    ds = as_dataset(corpus)
    _, raw = ers_arrays(ds.vectors, ui)
    return [(item, ErsValue.from_raw(r)) for item, r in zip(ds.ids, raw.tolist())]


def enhance_embedding(f: Embedding, ui: UiLike) -> Embedding:
    """Remove the UI direction from ``f`` and renormalize.

    The result is orthogonal to the UI centroid, so its raw ERS is 1.

    Raises:
        DegenerateError: if ``f`` is (anti)parallel to the centroid.
    """
    c = _centroid(ui)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != c.shape:
        raise DimensionMismatchError(f"dimension mismatch: {f.shape[-1]} vs {c.shape[0]}")
    proj = float(np.dot(f, c))
    if abs(proj) >= 1.0 - PARALLEL_TOL:
        raise DegenerateError("embedding is parallel to the UI centroid; nothing left after projection")
    v = f - proj * c
    n = float(np.sqrt(np.dot(v, v)))
    if n < DEGENERATE_TOL:
        raise DegenerateError("projection residual is numerically zero")
    out = v / n
    out.setflags(write=False)
    return out


def enhance_rows(vectors: NDArray[np.float64], ui: UiLike) -> NDArray[np.float64]:
    """Row-wise :func:`enhance_embedding`."""
    return np.stack([enhance_embedding(row, ui) for row in np.asarray(vectors, dtype=np.float64)])
