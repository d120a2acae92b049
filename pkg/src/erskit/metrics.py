"""Biometric evaluation: verification ROC, open-set search, rank-K.

Operating points follow one convention throughout: for an error-rate target
(FAR or FPIR) the threshold is chosen to minimize the miss rate (FRR or
1 - TPIR) among all thresholds whose empirical false rate does not exceed
the target; among equally good thresholds the largest one is reported.
Candidate thresholds are the distinct observed scores plus ``+inf``.
A score ``s`` is accepted at threshold ``tau`` iff ``s >= tau``.
With no positive scores the miss rate is undefined and the smallest
feasible threshold is reported instead.

Pairs or probes that fail an ERS gate keep their place in the denominators
and are scored with :data:`GATED_SCORE`, which lies below every real cosine
similarity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .aggregation import (
    TemplateSpec,
    WeightingStrategy,
    aggregate,
    build_template,
    media_pool,
)
from .cluster import UiModel
from .decisions import DecisionConfig
from .embedding import Dataset
from .errors import ProtocolError
from .ers import ers_arrays

GATED_SCORE = -2.0

PIPELINE_KINDS = ("single", "single_gated", "template", "template_gated", "enhanced_avg")


@dataclass(frozen=True)
class OperatingPoint:
    """One row of an ROC / DET table.

    ``achieved`` is the empirical false rate at ``threshold``; ``error`` is
    the miss rate there (FRR, or 1 - TPIR), ``None`` when undefined.
    ``attainable`` is False when the target is below one false event.
    """

    target: float
    threshold: float
    achieved: float
    error: float | None
    attainable: bool = True


@dataclass(frozen=True)
class PairProtocol:
    pairs: tuple[tuple[str, str, bool], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((str(a), str(b), bool(g)) for a, b, g in self.pairs))
        if not any(g for _, _, g in self.pairs) or all(g for _, _, g in self.pairs):
            raise ProtocolError("a pair protocol needs at least one genuine and one impostor pair")


@dataclass(frozen=True)
class Pipeline:
    """Scoring pipeline: ``single``, ``single_gated``, ``template[:strategy]``,
    ``template_gated[:strategy]`` or ``enhanced_avg``."""

    kind: str = "single"
    strategy: WeightingStrategy | None = None
    media_pool: bool = False

    def __post_init__(self):
        if self.kind not in PIPELINE_KINDS:
            raise ValueError(f"unknown pipeline {self.kind!r}; expected one of {PIPELINE_KINDS}")
        if self.kind.startswith("template") and self.strategy is None:
            object.__setattr__(self, "strategy", WeightingStrategy("square"))
        if self.kind == "enhanced_avg":
            object.__setattr__(self, "strategy", WeightingStrategy("uniform"))

    @classmethod
    def parse(cls, text: str, media_pool: bool = False) -> "Pipeline":
        kind, _, rest = text.strip().partition(":")
        strategy = WeightingStrategy.parse(rest) if rest else None
        return cls(kind, strategy, media_pool)

    @property
    def gated(self) -> bool:
        return self.kind.endswith("_gated")

    @property
    def uses_templates(self) -> bool:
        return not self.kind.startswith("single")

    @property
    def needs_ui(self) -> bool:
        return self.gated or self.kind == "enhanced_avg" or (
            self.kind == "template" and self.strategy.kind != "uniform"
        )

    def __str__(self) -> str:
        s = self.kind
        if self.kind.startswith("template"):
            s += f":{self.strategy}"
        if self.media_pool:
            s += "+media"
        return s


@dataclass(frozen=True)
class EvalReport:
    operating_points: tuple[OperatingPoint, ...] = ()
    identification_points: tuple[OperatingPoint, ...] = ()
    rank_accuracy: tuple[tuple[int, float | None], ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict)

    @property
    def any_unattainable(self) -> bool:
        return any(not p.attainable for p in self.operating_points + self.identification_points)

    def point(self, target: float, kind: str = "verification") -> OperatingPoint:
        pts = self.operating_points if kind == "verification" else self.identification_points
        for p in pts:
            if p.target == target:
                return p
        raise KeyError(f"no {kind} operating point at target {target!r}")

    def to_csv(self) -> str:
        """Machine-readable form, one row per operating point / rank."""
        rows = ["kind,target,threshold,achieved,error,attainable"]
        for kind, pts in (("verification", self.operating_points), ("identification", self.identification_points)):
            for p in pts:
                rows.append(
                    f"{kind},{_num(p.target)},{_num(p.threshold)},{_num(p.achieved)},{_num(p.error)},{int(p.attainable)}"
                )
        for k, acc in self.rank_accuracy:
            rows.append(f"rank,{k},,,{_num(None if acc is None else 1.0 - acc)},1")
        return "\n".join(rows) + "\n"

    def to_table(self) -> str:
        """Human-readable summary."""
        lines = [f"# {k}: {v}" for k, v in sorted(self.metadata.items())]
        if self.operating_points:
            lines += ["", "verification", f"{'FAR target':>12} {'threshold':>10} {'FAR':>10} {'FRR':>10}"]
            lines += [_row(p) for p in self.operating_points]
        if self.identification_points:
            lines += ["", "identification", f"{'FPIR target':>12} {'threshold':>10} {'FPIR':>10} {'1-TPIR':>10}"]
            lines += [_row(p) for p in self.identification_points]
        if self.rank_accuracy:
            lines += ["", "rank accuracy"]
            lines += [f"{'rank-' + str(k):>12} {_fmt(acc):>10}" for k, acc in self.rank_accuracy]
        return "\n".join(lines) + "\n"


def _num(x) -> str:
    if x is None:
        return "nan"
    return repr(float(x))


def _fmt(x) -> str:
    if x is None:
        return "undefined"
    if math.isinf(x):
        return "inf"
    return f"{x:.6f}"


def _row(p: OperatingPoint) -> str:
    flag = "" if p.attainable else "  (unattainable)"
    return f"{p.target:>12.0e} {_fmt(p.threshold):>10} {_fmt(p.achieved):>10} {_fmt(p.error):>10}{flag}"


def _allowed_false(target: float, n: int) -> int:
    """Largest k with k / n <= target, evaluated in floating point."""
    k = min(n, int(math.floor(target * n)))
    while k < n and (k + 1) / n <= target:
        k += 1
    while k > 0 and k / n > target:
        k -= 1
    return k


def _check_targets(targets: Iterable[float]) -> list[float]:
    out = sorted(float(t) for t in targets)
    for t in out:
        if not 0.0 < t < 1.0:
            raise ValueError(f"rate targets must lie in (0, 1), got {t}")
    return out


def _sweep(pos: np.ndarray, neg: np.ndarray, targets: list[float]) -> list[OperatingPoint]:
    n = neg.shape[0]
    neg_asc = np.sort(neg)
    pos_asc = np.sort(pos)
    distinct = np.unique(np.concatenate([pos_asc, neg_asc]))
    points = []
    for t in targets:
        k = _allowed_false(t, n)
        # feasible thresholds are exactly those above the (k+1)-th largest negative
        bound = neg_asc[n - 1 - k]
        if pos_asc.size:
            idx = int(np.searchsorted(pos_asc, bound, side="right"))
            if idx < pos_asc.size:
                tau = float(pos_asc[idx])
                err = idx / pos_asc.size
            else:
                tau, err = math.inf, 1.0
        else:
            j = int(np.searchsorted(distinct, bound, side="right"))
            tau = float(distinct[j]) if j < distinct.size else math.inf
            err = None
        fa = n - int(np.searchsorted(neg_asc, tau, side="left"))
        points.append(OperatingPoint(t, tau, fa / n, err, attainable=k > 0))
    return points


def roc_sweep(
    scores_genuine: Sequence[float], scores_impostor: Sequence[float], far_targets: Iterable[float]
) -> list[OperatingPoint]:
    """Operating points (threshold, achieved FAR, FRR) at each FAR target."""
    gen = np.asarray(scores_genuine, dtype=np.float64).reshape(-1)
    imp = np.asarray(scores_impostor, dtype=np.float64).reshape(-1)
    if gen.size == 0 or imp.size == 0:
        raise ValueError("roc_sweep needs non-empty genuine and impostor score lists")
    return _sweep(gen, imp, _check_targets(far_targets))


class _Resolver:
    """Turns protocol ids into (embedding, capped ERS) under a pipeline."""

    def __init__(self, dataset: Dataset, pipeline: Pipeline, ui: UiModel | None, templates):
        if pipeline.needs_ui and ui is None:
            raise ProtocolError(f"pipeline {pipeline} requires a UI model")
        if pipeline.uses_templates and templates is None:
            raise ProtocolError(f"pipeline {pipeline} requires template definitions")
        self.dataset = dataset
        self.pipeline = pipeline
        self.ui = ui
        self.templates = templates
        self._cache: dict[str, tuple[np.ndarray, float]] = {}
        if not pipeline.uses_templates and ui is not None:
            self._item_ers = ers_arrays(dataset.vectors, ui)[0]
        else:
            self._item_ers = None

    def subject(self, entry_id: str) -> str | None:
        if self.pipeline.uses_templates:
            return self._spec(entry_id).subject_id
        return self.dataset.subject(entry_id)

    def _spec(self, entry_id: str) -> TemplateSpec:
        try:
            return self.templates[entry_id]
        except KeyError:
            raise ProtocolError(f"unresolvable template id {entry_id!r}") from None

    def resolve(self, entry_id: str) -> tuple[np.ndarray, float]:
        hit = self._cache.get(entry_id)
        if hit is not None:
            return hit
        if self.pipeline.uses_templates:
            spec = self._spec(entry_id)
            try:
                t = build_template(spec, self.dataset, self.ui, enhance=self.pipeline.kind == "enhanced_avg")
            except KeyError as exc:
                raise ProtocolError(f"template {entry_id!r}: {exc.args[0]}") from None
            pool = media_pool if self.pipeline.media_pool else aggregate
            res = pool(t, self.pipeline.strategy)
            out = (res.embedding, res.ers)
        else:
            if entry_id not in self.dataset:
                raise ProtocolError(f"unresolvable item id {entry_id!r}")
            k = self.dataset.index(entry_id)
            e = float(self._item_ers[k]) if self._item_ers is not None else math.nan
            out = (self.dataset.vectors[k], e)
        self._cache[entry_id] = out
        return out

    def matrix(self, ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        vecs, ers = zip(*(self.resolve(i) for i in ids)) if ids else ((), ())
        d = self.dataset.dim
        return np.asarray(vecs, dtype=np.float64).reshape(len(ids), d), np.asarray(ers, dtype=np.float64)


def score_pairs(
    dataset: Dataset,
    protocol: PairProtocol,
    pipeline: Pipeline | str,
    cfg: DecisionConfig,
    *,
    ui: UiModel | None = None,
    templates: Mapping[str, TemplateSpec] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair scores and genuine flags under ``pipeline``."""
    if isinstance(pipeline, str):
        pipeline = Pipeline.parse(pipeline)
    res = _Resolver(dataset, pipeline, ui, templates)
    A, ea = res.matrix([a for a, _, _ in protocol.pairs])
    B, eb = res.matrix([b for _, b, _ in protocol.pairs])
    scores = np.clip(np.einsum("ij,ij->i", A, B), -1.0, 1.0)
    if pipeline.gated:
        ok = (ea >= cfg.gamma) & (eb >= cfg.gamma)
        scores = np.where(ok, scores, GATED_SCORE)
    genuine = np.array([g for _, _, g in protocol.pairs], dtype=bool)
    return scores, genuine


def eval_verification(
    dataset: Dataset,
    protocol: PairProtocol,
    pipeline: Pipeline | str,
    cfg: DecisionConfig,
    far_targets: Iterable[float],
    *,
    ui: UiModel | None = None,
    templates: Mapping[str, TemplateSpec] | None = None,
) -> EvalReport:
    """1:1 verification report for ``protocol`` under ``pipeline``.

    Gated pipelines replace the score of any pair with a member below
    ``cfg.gamma`` by :data:`GATED_SCORE`, so such pairs are always rejected
    but still counted.
    """
    if isinstance(pipeline, str):
        pipeline = Pipeline.parse(pipeline)
    scores, genuine = score_pairs(dataset, protocol, pipeline, cfg, ui=ui, templates=templates)
    pts = roc_sweep(scores[genuine], scores[~genuine], far_targets)
    meta = {
        "protocol": "verification",
        "pipeline": str(pipeline),
        "gamma": repr(cfg.gamma),
        "genuine_pairs": str(int(genuine.sum())),
        "impostor_pairs": str(int((~genuine).sum())),
    }
    return EvalReport(operating_points=tuple(pts), metadata=meta)


@dataclass(frozen=True)
class SearchScores:
    """Intermediate open-set search statistics, exposed for testing."""

    mated_scores: np.ndarray
    nonmated_scores: np.ndarray
    ranks: np.ndarray


def search_scores(
    dataset: Dataset,
    gallery: Sequence[tuple[str, str]],
    probes: Sequence[tuple[str, str]],
    pipeline: Pipeline | str,
    cfg: DecisionConfig,
    *,
    ui: UiModel | None = None,
    templates: Mapping[str, TemplateSpec] | None = None,
) -> SearchScores:
    """Open-set statistics for each probe.

    ``gallery`` and ``probes`` are ``(entry_id, subject_id)`` lists. A mated
    probe scores its top-1 similarity when the top-1 entry is its own
    subject and :data:`GATED_SCORE` otherwise; a non-mated probe scores its
    top-1 similarity. Gated probes and probes with no admissible gallery
    entry score :data:`GATED_SCORE` and get rank ``inf``.
    """
    if isinstance(pipeline, str):
        pipeline = Pipeline.parse(pipeline)
    if not gallery:
        raise ProtocolError("gallery is empty")
    g_subjects = [s for _, s in gallery]
    if len(set(g_subjects)) != len(g_subjects):
        raise ProtocolError("gallery subjects must be unique")
    res = _Resolver(dataset, pipeline, ui, templates)
    G, eg = res.matrix([g for g, _ in gallery])
    P, ep = res.matrix([p for p, _ in probes])
    S = np.clip(P @ G.T, -1.0, 1.0)

    allowed = np.ones(len(gallery), dtype=bool)
    probe_ok = np.ones(len(probes), dtype=bool)
    if pipeline.gated:
        probe_ok = ep >= cfg.gamma
        if cfg.gate_gallery:
            allowed = eg >= cfg.gamma
    S = np.where(allowed[None, :], S, -np.inf)

    subject_col = {s: j for j, s in enumerate(g_subjects)}
    mated, nonmated, ranks = [], [], []
    for i, (_, subj) in enumerate(probes):
        row = S[i]
        top = int(np.argmax(row)) if row.size else -1
        best = float(row[top]) if allowed.any() else -math.inf
        usable = probe_ok[i] and math.isfinite(best)
        j = subject_col.get(subj)
        if j is None:
            nonmated.append(best if usable else GATED_SCORE)
            continue
        if usable and top == j:
            mated.append(best)
        else:
            mated.append(GATED_SCORE)
        if usable and allowed[j]:
            ranks.append(1 + int(np.sum(row > row[j])) + int(np.sum(row[:j] == row[j])))
        else:
            ranks.append(math.inf)
    return SearchScores(
        mated_scores=np.asarray(mated, dtype=np.float64),
        nonmated_scores=np.asarray(nonmated, dtype=np.float64),
        ranks=np.asarray(ranks, dtype=np.float64),
    )


def eval_search(
    dataset: Dataset,
    gallery: Sequence[tuple[str, str]],
    probes: Sequence[tuple[str, str]],
    pipeline: Pipeline | str,
    cfg: DecisionConfig,
    fpir_targets: Iterable[float],
    ks: Iterable[int] = (1, 5, 10),
    *,
    ui: UiModel | None = None,
    templates: Mapping[str, TemplateSpec] | None = None,
) -> EvalReport:
    """Open-set 1:N report: 1 - TPIR at each FPIR target plus rank-K accuracy.

    Thresholds are calibrated on the non-mated probes' top scores. Rank
    ties are broken by gallery order.

    Raises:
        ProtocolError: if no probe is non-mated (FPIR cannot be calibrated).
    """
    if isinstance(pipeline, str):
        pipeline = Pipeline.parse(pipeline)
    st = search_scores(dataset, gallery, probes, pipeline, cfg, ui=ui, templates=templates)
    if st.nonmated_scores.size == 0:
        raise ProtocolError("no non-mated probes: FPIR thresholds cannot be calibrated")
    pts = _sweep(st.mated_scores, st.nonmated_scores, _check_targets(fpir_targets))
    if st.ranks.size:
        rank_acc = tuple((int(k), float(np.mean(st.ranks <= k))) for k in sorted(set(ks)))
    else:
        rank_acc = tuple((int(k), None) for k in sorted(set(ks)))
    meta = {
        "protocol": "open-set search",
        "pipeline": str(pipeline),
        "gamma": repr(cfg.gamma),
        "gate_gallery": str(cfg.gate_gallery).lower(),
        "gallery_size": str(len(gallery)),
        "mated_probes": str(st.mated_scores.size),
        "nonmated_probes": str(st.nonmated_scores.size),
    }
    return EvalReport(identification_points=tuple(pts), rank_accuracy=rank_acc, metadata=meta)


def error_reduction(a: EvalReport, b: EvalReport, point: float, kind: str = "verification") -> float | None:
    """Relative error reduction of ``b`` over baseline ``a`` at a target rate.

    Returns ``None`` when the baseline error is zero or undefined.
    """
    ea = a.point(point, kind).error
    eb = b.point(point, kind).error
    if ea is None or eb is None or ea == 0.0:
        return None
    return (ea - eb) / ea


def relative_reduction(frr_a: float, frr_b: float) -> float | None:
    """:func:`error_reduction` on bare error rates."""
    if frr_a == 0.0:
        return None
    return (frr_a - frr_b) / frr_a
