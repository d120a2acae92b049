"""Ground-truth synthetic hypersphere benchmarks.

Identities are tight caps around well separated mean directions. The
unrecognizable identity is a broader cap around its own mean, and degraded
images are produced by pulling a clean embedding toward that mean::

    f(t) = normalize((1 - t) * f + t * ui_mean + noise * g / sqrt(d))

with ``g`` standard normal. All randomness comes from a single
``numpy.random.Generator(PCG64(seed))`` stream consumed in a fixed order, so
a config (seed included) fully determines the output.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import TemplateSpec
from .embedding import DEGENERATE_TOL, Dataset, Embedding, normalize, normalize_rows
from .errors import DegenerateError, ErskitError
from .ers import ers_arrays
from .metrics import PairProtocol

UI_SUBJECT = "UI"
MAX_TRIES = 2000


class GenerationError(ErskitError):
    """The requested geometry cannot be realized (e.g. too many identities for d)."""


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic benchmark geometry and sizes.

    Spreads are the norm of the isotropic Gaussian offset added to a unit
    mean before renormalizing: 0.5 puts samples about 27 degrees from their
    identity mean. ``ui_spread`` shapes the UI blob of the clustering corpus;
    degraded evaluation images get noise of norm ``t * degradation_noise``.
    """

    dimension: int = 64
    num_identities: int = 400
    samples_per_identity: int = 10
    identity_spread: float = 0.7
    identity_separation: float = 0.5
    ui_separation: float = 0.2
    ui_size: int = 1000
    ui_spread: float = 0.8
    degradation_levels: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    degradation_noise: float = 0.3
    seed: int = 0
    eval_images_per_identity: int = 20
    degraded_fraction: float = 0.3
    genuine_pairs: int = 5000
    impostor_pairs: int = 50000
    templates_per_identity: int = 7
    template_impostor_pairs: int = 40000
    frames_per_media: int = 2
    nonmated_fraction: float = 0.2
    encoding: str = "f32le"

    def __post_init__(self):
        object.__setattr__(self, "degradation_levels", tuple(float(t) for t in self.degradation_levels))
        counts = ("dimension", "num_identities", "samples_per_identity", "ui_size",
                  "eval_images_per_identity", "templates_per_identity", "frames_per_media")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("identity_spread", "ui_spread"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        lv = self.degradation_levels
        if self.degradation_noise < 0:
            raise ValueError("degradation_noise must be >= 0")
        if not lv or any(not 0.0 <= t <= 1.0 for t in lv) or list(lv) != sorted(lv):
            raise ValueError("degradation_levels must be a non-empty ascending list in [0, 1]")
        if self.templates_per_identity < 2:
            raise ValueError("templates_per_identity must be >= 2 (template pairs need a genuine match)")
        if self.templates_per_identity > self.eval_images_per_identity:
            raise ValueError("templates_per_identity cannot exceed eval_images_per_identity")
        if not 0.0 <= self.degraded_fraction <= 1.0:
            raise ValueError("degraded_fraction must be in [0, 1]")
        if not 0.0 <= self.nonmated_fraction < 1.0:
            raise ValueError("nonmated_fraction must be in [0, 1)")
        if self.encoding not in ("f32le", "text"):
            raise ValueError(f"unknown encoding {self.encoding!r}")

    def as_config(self) -> dict[str, str]:
        out = {}
        for k, v in asdict(self).items():
            out[k] = ",".join(repr(x) for x in v) if isinstance(v, tuple) else str(v)
        return out

    @classmethod
    def from_config(cls, kv: dict[str, str]) -> "GeneratorConfig":
        """Build from string key/values (unknown keys are rejected)."""
        defaults = cls()
        kwargs = {}
        for k, v in kv.items():
            if not hasattr(defaults, k):
                raise ValueError(f"unknown generator key {k!r}")
            cur = getattr(defaults, k)
            if isinstance(cur, tuple):
                kwargs[k] = tuple(float(x) for x in v.split(",") if x.strip())
            elif isinstance(cur, bool):
                kwargs[k] = v.lower() in ("1", "true", "yes")
            elif isinstance(cur, int):
                kwargs[k] = int(v)
            elif isinstance(cur, float):
                kwargs[k] = float(v)
            else:
                kwargs[k] = v
        return cls(**kwargs)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_unit(rng: np.random.Generator, d: int) -> Embedding:
    while True:
        g = rng.standard_normal(d)
        if np.dot(g, g) > 0:
            return normalize(g)


def sample_around(rng: np.random.Generator, mean: np.ndarray, spread: float, n: int) -> np.ndarray:
    """``n`` unit vectors ``normalize(mean + spread * g / sqrt(d))``."""
    d = mean.shape[0]
    g = rng.standard_normal((n, d))
    return normalize_rows(mean[None, :] + (spread / math.sqrt(d)) * g)


def gen_degradation(
    emb: Embedding,
    ui_mean: Embedding,
    t: float,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Embedding:
    """Move ``emb`` a fraction ``t`` of the way to ``ui_mean`` plus isotropic noise."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    emb = np.asarray(emb, dtype=np.float64)
    ui_mean = np.asarray(ui_mean, dtype=np.float64)
    v = (1.0 - t) * emb + t * ui_mean
    if noise > 0.0:
        if rng is None:
            raise ValueError("noise > 0 needs an rng")
        v = v + (noise / math.sqrt(v.shape[0])) * rng.standard_normal(v.shape[0])
    n = float(np.sqrt(np.dot(v, v)))
    if n < DEGENERATE_TOL:
        raise DegenerateError("degradation cancelled the embedding")
    out = v / n
    out.setflags(write=False)
    return out


@dataclass
class IdentitySet:
    dataset: Dataset
    subjects: list[str]
    means: np.ndarray
    ui_mean: Embedding


def _separated_means(rng, cfg: GeneratorConfig, ui_mean: np.ndarray) -> np.ndarray:
    d = cfg.dimension
    means = np.empty((cfg.num_identities, d))
    for k in range(cfg.num_identities):
        for _ in range(MAX_TRIES):
            m = random_unit(rng, d)
            if abs(float(m @ ui_mean)) >= cfg.ui_separation:
                continue
            if k and float(np.max(means[:k] @ m)) >= cfg.identity_separation:
                continue
            means[k] = m
            break
        else:
            raise GenerationError(
                f"could not place identity {k + 1} of {cfg.num_identities} in d={d} "
                f"with separation {cfg.identity_separation} after {MAX_TRIES} tries"
            )
    return means


def subject_name(k: int) -> str:
    return f"s{k:05d}"


def _stored(vectors: np.ndarray, encoding: str) -> np.ndarray:
    """Vectors as they will read back from an embedding file of ``encoding``."""
    if encoding == "f32le":
        return vectors.astype("<f4").astype(np.float64)
    return vectors


def gen_identities(cfg: GeneratorConfig, rng: np.random.Generator | None = None) -> IdentitySet:
    """Clean identity samples, their generating means, and the UI mean.

    Draw order: UI mean, identity means, then samples identity by identity.
    """
    rng = rng if rng is not None else make_rng(cfg.seed)
    ui_mean = random_unit(rng, cfg.dimension)
    means = _separated_means(rng, cfg, ui_mean)
    subjects = [subject_name(k) for k in range(cfg.num_identities)]
    ids, vecs, subj = [], [], []
    for k, s in enumerate(subjects):
        vecs.append(sample_around(rng, means[k], cfg.identity_spread, cfg.samples_per_identity))
        ids += [f"c{s}_{j:03d}" for j in range(cfg.samples_per_identity)]
        subj += [s] * cfg.samples_per_identity
    ds = Dataset(ids=ids, vectors=np.vstack(vecs), subjects=subj)
    return IdentitySet(dataset=ds, subjects=subjects, means=means, ui_mean=ui_mean)


@dataclass
class Benchmark:
    """Everything a synthetic run needs, plus the ground truth behind it."""

    config: GeneratorConfig
    corpus: Dataset
    images: Dataset
    pairs: PairProtocol
    templates: dict[str, TemplateSpec]
    template_pairs: PairProtocol
    gallery: list[tuple[str, str]]
    probes: list[tuple[str, str]]
    ui_mean: Embedding
    means: np.ndarray
    subjects: list[str]
    degradation: dict[str, float] = field(default_factory=dict)
    # exactly what gets written to disk (float32-representable for f32le)
    corpus_raw: np.ndarray | None = None
    images_raw: np.ndarray | None = None

    def truth_rows(self) -> list[tuple[str, str, float, float]]:
        """``(item_id, subject_id, t, true_ers)`` for every evaluation image."""
        capped, _ = ers_arrays(self.images.vectors, self.ui_mean)
        return [
            (item, self.images.subjects[k], self.degradation[item], float(capped[k]))
            for k, item in enumerate(self.images.ids)
        ]


def _sample_pairs(rng, labels: list[str], want: int, genuine: bool, limit_factor: int = 50):
    """Up to ``want`` unique unordered index pairs, same label iff ``genuine``."""
    n = len(labels)
    groups: dict[str, list[int]] = {}
    for k, lab in enumerate(labels):
        groups.setdefault(lab, []).append(k)
    seen = set()
    out = []
    tries = 0
    while len(out) < want and tries < want * limit_factor:
        tries += 1
        i = int(rng.integers(0, n))
        if genuine:
            peers = groups[labels[i]]
            j = peers[int(rng.integers(0, len(peers)))]
        else:
            j = int(rng.integers(0, n))
        if i == j or (labels[i] == labels[j]) != genuine:
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        out.append(key)
    return out


def build_benchmark(cfg: GeneratorConfig) -> Benchmark:
    """Generate a full benchmark in memory."""
    rng = make_rng(cfg.seed)
    ident = gen_identities(cfg, rng)
    d = cfg.dimension
    ui_mean = ident.ui_mean

    # clustering corpus: clean identity samples + the UI blob
    blob = sample_around(rng, ui_mean, cfg.ui_spread, cfg.ui_size)
    corpus_raw = _stored(np.vstack([ident.dataset.vectors, blob]), cfg.encoding)
    corpus = Dataset(
        ids=ident.dataset.ids + [f"u{j:06d}" for j in range(cfg.ui_size)],
        vectors=corpus_raw,
        subjects=list(ident.dataset.subjects) + [UI_SUBJECT] * cfg.ui_size,
    )

    # evaluation images, a fraction of them degraded toward the UI
    m = cfg.eval_images_per_identity
    ids, vecs, subj, media = [], [], [], []
    degradation = {}
    templates: dict[str, TemplateSpec] = {}
    for k, s in enumerate(ident.subjects):
        clean = sample_around(rng, ident.means[k], cfg.identity_spread, m)
        degraded = rng.random(m) < cfg.degraded_fraction
        levels = rng.integers(0, len(cfg.degradation_levels), size=m)
        members: dict[int, list[str]] = {}
        for j in range(m):
            item = f"i{s}_{j:03d}"
            t = cfg.degradation_levels[int(levels[j])] if degraded[j] else 0.0
            f = clean[j]
            if t > 0.0:
                f = gen_degradation(f, ui_mean, t, t * cfg.degradation_noise, rng)
            tpl = j * cfg.templates_per_identity // m
            members.setdefault(tpl, []).append(item)
            ids.append(item)
            vecs.append(f)
            subj.append(s)
            pos = len(members[tpl]) - 1
            media.append(f"t{s}_{tpl}_m{pos // cfg.frames_per_media}")
            degradation[item] = t
        for tpl, items in sorted(members.items()):
            tid = f"t{s}_{tpl}"
            templates[tid] = TemplateSpec(tid, s, tuple(items))
    images_raw = _stored(np.vstack(vecs), cfg.encoding)
    images = Dataset(ids=ids, vectors=images_raw, subjects=subj, media=media)

    # single-image pairs
    gen_pairs = _sample_pairs(rng, subj, cfg.genuine_pairs, True)
    imp_pairs = _sample_pairs(rng, subj, cfg.impostor_pairs, False)
    pairs = PairProtocol(
        tuple((ids[i], ids[j], True) for i, j in gen_pairs)
        + tuple((ids[i], ids[j], False) for i, j in imp_pairs)
    )

    # template pairs: every same-subject combination, sampled impostors
    tids = list(templates)
    t_subj = [templates[t].subject_id for t in tids]
    by_subject: dict[str, list[str]] = {}
    for t, s in zip(tids, t_subj):
        by_subject.setdefault(s, []).append(t)
    t_gen = [(a, b, True) for ts in by_subject.values() for a, b in itertools.combinations(ts, 2)]
    t_imp = [(tids[i], tids[j], False) for i, j in _sample_pairs(rng, t_subj, cfg.template_impostor_pairs, False)]
    template_pairs = PairProtocol(tuple(t_gen + t_imp))

    # open-set split: the last nonmated_fraction of subjects stay out of the gallery
    n_gallery = len(ident.subjects) - int(round(cfg.nonmated_fraction * len(ident.subjects)))
    gallery, probes = [], []
    for k, s in enumerate(ident.subjects):
        ts = by_subject.get(s, [])
        if k < n_gallery and ts:
            gallery.append((ts[0], s))
            probes += [(t, s) for t in ts[1:]]
        else:
            probes += [(t, s) for t in ts]

    return Benchmark(
        config=cfg,
        corpus=corpus,
        images=images,
        pairs=pairs,
        templates=templates,
        template_pairs=template_pairs,
        gallery=gallery,
        probes=probes,
        ui_mean=ui_mean,
        means=ident.means,
        subjects=ident.subjects,
        degradation=degradation,
        corpus_raw=corpus_raw,
        images_raw=images_raw,
    )


def write_benchmark(bench: Benchmark, out_dir: str | Path) -> Path:
    """Write ``bench`` as a dataset directory (see the README for the layout)."""
    from . import io

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    enc = bench.config.encoding
    io.write_embeddings(out / "corpus.ersk", bench.corpus.ids, bench.corpus_raw, enc)
    io.write_labels(out / "corpus_labels.csv", bench.corpus)
    io.write_embeddings(out / "embeddings.ersk", bench.images.ids, bench.images_raw, enc)
    io.write_labels(out / "labels.csv", bench.images)
    io.write_pairs(out / "pairs.csv", bench.pairs)
    io.write_templates(out / "templates.csv", bench.templates.values())
    io.write_pairs(out / "template_pairs.csv", bench.template_pairs)
    io.write_manifest(out / "gallery.csv", bench.gallery)
    io.write_manifest(out / "probes.csv", bench.probes)
    io.write_truth(out / "truth.csv", bench.truth_rows())
    io.write_embeddings(
        out / "truth_means.ersk",
        [UI_SUBJECT] + bench.subjects,
        np.vstack([bench.ui_mean[None, :], bench.means]),
        "text",
    )
    io.write_config(out / "run_config.txt", bench.config.as_config())
    return out


def gen_benchmark(cfg: GeneratorConfig, out_dir: str | Path | None = None) -> Benchmark:
    """Generate a benchmark and, if ``out_dir`` is given, write it to disk."""
    bench = build_benchmark(cfg)
    if out_dir is not None:
        write_benchmark(bench, out_dir)
    return bench
