"""ERS-weighted template aggregation.

A template (set of images of one subject) is collapsed into a single unit
embedding by a weighted mean whose weights are a function of each member's
ERS. The template's own ERS is the plain mean of the members' capped ERS.

Weights are normalized by their own sum before the final renormalization to
unit length, which makes every strategy (including the selection-based
ones) well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embedding import DEGENERATE_TOL, Embedding
from .errors import DegenerateError, DimensionMismatchError, EmptyInputError
from .ers import ErsValue, compute_ers, enhance_embedding

KINDS = ("identity", "square", "softmax", "top_one", "top_fraction", "uniform")


@dataclass(frozen=True)
class WeightingStrategy:
    """How member ERS values become aggregation weights.

    ``identity``: ``w = e``; ``square``: ``w = e**2``; ``softmax``:
    ``exp(e) / sum(exp(e))``; ``top_one``: all weight on the highest-ERS
    member; ``top_fraction``: equal weight on the ``ceil(p * n)`` highest-ERS
    members; ``uniform``: equal weight on everyone (plain average pooling).
    """

    kind: str = "square"
    p: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weighting kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "top_fraction":
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise ValueError(f"top_fraction needs p in (0, 1], got {self.p}")
        elif self.p is not None:
            raise ValueError(f"{self.kind} takes no parameter")

    @classmethod
    def parse(cls, text: str) -> "WeightingStrategy":
        """Parse ``"square"``, ``"top_fraction:0.1"`` and friends."""
        kind, _, arg = text.strip().partition(":")
        return cls(kind, float(arg)) if arg else cls(kind)

    def __str__(self) -> str:
        return f"{self.kind}:{self.p:g}" if self.p is not None else self.kind


@dataclass(frozen=True)
class TemplateMember:
    embedding: Embedding
    ers: ErsValue
    media_id: str | None = None


@dataclass(frozen=True)
class Template:
    template_id: str
    subject_id: str | None
    members: tuple[TemplateMember, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise EmptyInputError(f"template {self.template_id!r} has no members")
        dims = {int(np.shape(m.embedding)[-1]) for m in self.members}
        if len(dims) != 1:
            raise DimensionMismatchError(f"template {self.template_id!r} mixes dimensions {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class AggregateResult:
    embedding: Embedding
    ers: float


def _capped(e) -> float:
    return float(e.capped) if isinstance(e, ErsValue) else float(e)


def _top_indices(e: np.ndarray, m: int) -> np.ndarray:
    # stable sort on -e: equal scores keep input order, so lower index wins
    return np.argsort(-e, kind="stable")[:m]


def compute_weights(ers_list: Sequence, strategy: WeightingStrategy) -> list[float]:
    """Aggregation weights for capped ERS values (``ErsValue`` or floats)."""
    if len(ers_list) == 0:
        raise EmptyInputError("no ERS values to weight")
    e = np.array([_capped(x) for x in ers_list], dtype=np.float64)
    n = e.shape[0]
    kind = strategy.kind
    if kind == "identity":
        w = e.copy()
    elif kind == "square":
        w = e * e
    elif kind == "softmax":
        z = np.exp(e - e.max())
        w = z / z.sum()
    elif kind == "uniform":
        w = np.ones(n)
    else:
        if kind == "top_one":
            m = 1
        else:
            # guard against p*n landing a hair above an integer
            m = max(1, math.ceil(strategy.p * n - 1e-9))
        w = np.zeros(n)
        w[_top_indices(e, m)] = 1.0
    return w.tolist()


def _weighted_direction(F: np.ndarray, w: np.ndarray, what: str) -> Embedding:
    total = float(w.sum())
    if not total > 0.0:
        raise DegenerateError(f"{what}: all aggregation weights are zero")
    v = (w[:, None] * F).sum(axis=0) / total
    n = float(np.sqrt(np.dot(v, v)))
    if n < DEGENERATE_TOL:
        raise DegenerateError(f"{what}: weighted mean is degenerate (norm {n:.3g})")
    out = v / n
    out.setflags(write=False)
    return out


def aggregate(t: Template, strategy: WeightingStrategy) -> AggregateResult:
    """Collapse a template into one embedding and one ERS value."""
    F = np.stack([np.asarray(m.embedding, dtype=np.float64) for m in t.members])
    caps = [m.ers.capped for m in t.members]
    w = np.asarray(compute_weights(caps, strategy))
    emb = _weighted_direction(F, w, f"template {t.template_id!r}")
    return AggregateResult(embedding=emb, ers=float(sum(caps) / len(caps)))


def media_groups(t: Template) -> list[list[int]]:
    """Member indices grouped by media id, in order of first appearance.

    Members without a media id each form their own group.
    """
    groups: dict[object, list[int]] = {}
    for k, m in enumerate(t.members):
        key = ("media", m.media_id) if m.media_id is not None else ("solo", k)
        groups.setdefault(key, []).append(k)
    return list(groups.values())


def media_pool(t: Template, strategy: WeightingStrategy) -> AggregateResult:
    """Two-stage pooling: plain average within each media, then ERS-weighted across media.

    Each media group is reduced to its uniform mean direction with ERS equal
    to the mean of its members' ERS; the groups are then combined with
    :func:`aggregate` under ``strategy``.
    """
    pooled = []
    uniform = WeightingStrategy("uniform")
    for idx in media_groups(t):
        sub = Template(t.template_id, t.subject_id, [t.members[k] for k in idx])
        res = aggregate(sub, uniform)
        raw = float(np.mean([t.members[k].ers.raw for k in idx]))
        pooled.append(TemplateMember(res.embedding, ErsValue(capped=res.ers, raw=raw)))
    return aggregate(Template(t.template_id, t.subject_id, pooled), strategy)


@dataclass(frozen=True)
class TemplateSpec:
    """Template definition by reference: which items belong to which template."""

    template_id: str
    subject_id: str | None
    item_ids: tuple[str, ...]


def build_template(spec: TemplateSpec, dataset, ui=None, *, enhance: bool = False) -> Template:
    """Materialize ``spec`` from ``dataset``, scoring members against ``ui``.

    Without a UI model the member ERS values are NaN, which only the
    ``uniform`` strategy tolerates. With ``enhance=True`` every member is
    replaced by its ERS-enhanced embedding first.
    """
    members = []
    for item in spec.item_ids:
        f = dataset.vector(item)
        e = compute_ers(f, ui) if ui is not None else ErsValue(math.nan, math.nan)
        if enhance:
            if ui is None:
                raise ValueError("ERS enhancement needs a UI model")
            f = enhance_embedding(f, ui)
        members.append(TemplateMember(f, e, dataset.media_of(item)))
    return Template(spec.template_id, spec.subject_id, members)
