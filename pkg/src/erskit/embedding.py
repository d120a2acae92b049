"""Unit-hypersphere embeddings and the elementary geometry on them.

An embedding is a read-only ``float64`` numpy vector of unit Euclidean norm.
Everything downstream (clustering, recognizability scores, decisions) assumes
that invariant, so inputs are always renormalized on the way in rather than
trusted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    ConstructionError,
    DegenerateError,
    DimensionMismatchError,
    EmptyInputError,
)

NORM_TOL = 1e-6
DEGENERATE_TOL = 1e-9

Embedding = NDArray[np.float64]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def normalize(raw: ArrayLike) -> Embedding:
    """Scale ``raw`` to unit length.

    Raises:
        ConstructionError: for empty, non-finite or zero vectors.
    """
    v = np.array(raw, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ConstructionError("embedding must have dimension >= 1")
    if not np.all(np.isfinite(v)):
        raise ConstructionError("embedding has non-finite entries")
    n = float(np.sqrt(np.dot(v, v)))
    if n == 0.0:
        raise ConstructionError("cannot normalize the zero vector")
    return _frozen(v / n)


def normalize_rows(raw: ArrayLike) -> NDArray[np.float64]:
    """Row-wise :func:`normalize` for an ``(n, d)`` matrix."""
    m = np.array(raw, dtype=np.float64, order="C")
    if m.ndim != 2 or m.shape[1] == 0:
        raise ConstructionError(f"expected an (n, d) matrix with d >= 1, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(m), axis=1))[0])
        raise ConstructionError(f"row {bad} has non-finite entries")
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ConstructionError(f"row {bad} is the zero vector")
    m /= norms[:, None]
    return m


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Inner product of two unit vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(a, b)
    return float(min(1.0, max(-1.0, float(np.dot(a, b)))))


def chordal_distance(a: Embedding, b: Embedding) -> float:
    """Euclidean distance between unit vectors, ``sqrt(2 - 2 cos)``."""
    return float(np.sqrt(max(0.0, 2.0 - 2.0 * cosine_similarity(a, b))))


def cosine_matrix(A: NDArray[np.float64], B: NDArray[np.float64]) -> NDArray[np.float64]:
    """Clamped cosine similarities between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    _check_dims(A, B)
    return np.clip(A @ B.T, -1.0, 1.0)


def mean_direction(vectors: Sequence[Embedding] | NDArray[np.float64]) -> Embedding:
    """Arithmetic mean of unit vectors, renormalized.

    Raises:
        EmptyInputError: if ``vectors`` is empty.
        DegenerateError: if the mean has norm below ``DEGENERATE_TOL``.
    """
    m = np.asarray(vectors, dtype=np.float64)
    if m.size == 0 or m.shape[0] == 0:
        raise EmptyInputError("mean_direction of an empty set")
    if m.ndim != 2:
        raise ConstructionError(f"expected a list of vectors, got shape {m.shape}")
    mean = m.sum(axis=0) / m.shape[0]
    n = float(np.sqrt(np.dot(mean, mean)))
    if n < DEGENERATE_TOL:
        raise DegenerateError(f"mean direction is degenerate (norm {n:.3g})")
    return _frozen(mean / n)


@dataclass(frozen=True)
class LabeledEmbedding:
    item_id: str
    embedding: Embedding
    subject_id: str | None = None
    media_id: str | None = None


@dataclass
class Dataset:
    """Column-oriented collection of labeled embeddings.

    ``vectors`` is renormalized at construction. ``subjects`` and ``media``
    are optional per-row labels (``None`` entries allowed in ``media``).
    """

    ids: list[str]
    vectors: NDArray[np.float64]
    subjects: list[str | None] | None = None
    media: list[str | None] | None = None
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.vectors = normalize_rows(self.vectors)
        self.vectors.setflags(write=False)
        n = len(self.ids)
        if self.vectors.shape[0] != n:
            raise ConstructionError(f"{n} ids but {self.vectors.shape[0]} vectors")
        for name in ("subjects", "media"):
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise ConstructionError(f"{name} has {len(col)} entries, expected {n}")
        self._index = {}
        for k, item in enumerate(self.ids):
            if item in self._index:
                raise ConstructionError(f"duplicate item_id {item!r}")
            self._index[item] = k

    @classmethod
    def from_records(cls, records: Iterable[LabeledEmbedding]) -> "Dataset":
        records = list(records)
        if not records:
            raise EmptyInputError("no records")
        return cls(
            ids=[r.item_id for r in records],
            vectors=np.stack([np.asarray(r.embedding, dtype=np.float64) for r in records]),
            subjects=[r.subject_id for r in records],
            media=[r.media_id for r in records],
        )

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def index(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise KeyError(f"unknown item_id {item_id!r}") from None

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._index

    def vector(self, item_id: str) -> Embedding:
        return self.vectors[self.index(item_id)]

    def subject(self, item_id: str) -> str | None:
        return None if self.subjects is None else self.subjects[self.index(item_id)]

    def media_of(self, item_id: str) -> str | None:
        return None if self.media is None else self.media[self.index(item_id)]

    def records(self) -> list[LabeledEmbedding]:
        return [
            LabeledEmbedding(
                item_id=self.ids[k],
                embedding=self.vectors[k],
                subject_id=None if self.subjects is None else self.subjects[k],
                media_id=None if self.media is None else self.media[k],
            )
            for k in range(len(self))
        ]

    def subset(self, item_ids: Sequence[str]) -> "Dataset":
        rows = [self.index(i) for i in item_ids]
        return Dataset(
            ids=list(item_ids),
            vectors=self.vectors[rows],
            subjects=None if self.subjects is None else [self.subjects[r] for r in rows],
            media=None if self.media is None else [self.media[r] for r in rows],
        )


def as_dataset(corpus) -> Dataset:
    """Accept a :class:`Dataset` or an iterable of :class:`LabeledEmbedding`."""
    if isinstance(corpus, Dataset):
        return corpus
    return Dataset.from_records(corpus)
