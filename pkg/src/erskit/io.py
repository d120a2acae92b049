"""On-disk formats.

Embedding files (``.ersk``) start with one ASCII header line::

    ERSK1 <dimension> <count> <encoding>

``encoding`` is ``f32le`` or ``text``. For ``f32le`` the header is followed
by ``count`` item-id lines and then ``count * dimension`` little-endian
float32 values, row-major. For ``text`` each record is one line
``item_id,v1,...,vd`` with shortest round-trip decimal values.

Everything else is UTF-8 CSV with a single-comma delimiter and a header
row, or plain ``key = value`` text (run configs, UI models).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .aggregation import TemplateSpec
from .cluster import ClusterParameters, ClusterResult, UiModel, cluster_size_histogram
from .embedding import Dataset
from .errors import ConstructionError, FormatError
from .metrics import EvalReport, PairProtocol

MAGIC = "ERSK1"
ENCODINGS = ("f32le", "text")
UI_FORMAT = "ERSK-UI1"


@dataclass
class EmbeddingFile:
    ids: list[str]
    vectors: np.ndarray
    encoding: str

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def _check_id(path, line, item):
    if not item or any(c in item for c in ",\n\r"):
        raise FormatError(path, line, f"invalid item id {item!r}")


def write_embeddings(path, ids: Sequence[str], vectors, encoding: str = "f32le") -> None:
    if encoding not in ENCODINGS:
        raise ValueError(f"unknown encoding {encoding!r}")
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != len(ids):
        raise ValueError(f"{len(ids)} ids for vectors of shape {V.shape}")
    for k, item in enumerate(ids):
        _check_id(path, None, item)
    n, d = V.shape
    header = f"{MAGIC} {d} {n} {encoding}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if encoding == "f32le":
            fh.write("".join(f"{i}\n" for i in ids).encode("utf-8"))
            fh.write(np.ascontiguousarray(V, dtype="<f4").tobytes())
        else:
            for item, row in zip(ids, V.tolist()):
                fh.write((item + "," + ",".join(repr(x) for x in row) + "\n").encode("utf-8"))


def read_embeddings(path) -> EmbeddingFile:
    """Parse an embedding file; vectors are returned as stored (not normalized)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(path, None, f"cannot read: {exc.strerror}") from None
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError(path, 1, "missing header line")
    parts = blob[:nl].decode("ascii", errors="replace").split()
    if not parts or parts[0] != MAGIC:
        raise FormatError(path, 1, f"missing magic string {MAGIC!r}")
    if len(parts) != 4:
        raise FormatError(path, 1, "header must be 'ERSK1 <dimension> <count> <encoding>'")
    try:
        d, n = int(parts[1]), int(parts[2])
    except ValueError:
        raise FormatError(path, 1, "dimension and count must be integers") from None
    if d < 1 or n < 0:
        raise FormatError(path, 1, f"bad dimension/count {d}/{n}")
    enc = parts[3]
    if enc not in ENCODINGS:
        raise FormatError(path, 1, f"unknown encoding {enc!r}")
    body = blob[nl + 1:]
    ids: list[str] = []
    if enc == "f32le":
        pos = 0
        for k in range(n):
            end = body.find(b"\n", pos)
            if end < 0:
                raise FormatError(path, k + 2, f"expected {n} item id lines, found {k}")
            item = body[pos:end].decode("utf-8")
            _check_id(path, k + 2, item)
            ids.append(item)
            pos = end + 1
        payload = body[pos:]
        if len(payload) != 4 * n * d:
            raise FormatError(path, n + 2, f"binary payload has {len(payload)} bytes, expected {4 * n * d}")
        V = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
    else:
        lines = body.decode("utf-8").splitlines()
        if len(lines) != n:
            raise FormatError(path, None, f"header says {n} records, found {len(lines)}")
        V = np.empty((n, d))
        for k, line in enumerate(lines):
            fields = line.split(",")
            if len(fields) != d + 1:
                raise FormatError(path, k + 2, f"expected {d} values, found {len(fields) - 1}")
            _check_id(path, k + 2, fields[0])
            ids.append(fields[0])
            try:
                V[k] = [float(x) for x in fields[1:]]
            except ValueError:
                raise FormatError(path, k + 2, "non-numeric value") from None
    bad = np.flatnonzero(~np.all(np.isfinite(V), axis=1)) if n else []
    if len(bad):
        raise FormatError(path, int(bad[0]) + 2, "non-finite value")
    if len(set(ids)) != len(ids):
        seen = set()
        for k, item in enumerate(ids):
            if item in seen:
                raise FormatError(path, k + 2, f"duplicate item id {item!r}")
            seen.add(item)
    return EmbeddingFile(ids=ids, vectors=V, encoding=enc)


def read_csv(path, columns: Sequence[str], optional: Sequence[str] = ()) -> list[tuple[int, dict]]:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(path, None, f"cannot read: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh, delimiter=",")
        header = next(reader, None)
        if header is None:
            raise FormatError(path, 1, "empty file; expected a header row")
        header = [h.strip() for h in header]
        allowed = list(columns) + list(optional)
        missing = [c for c in columns if c not in header]
        extra = [h for h in header if h not in allowed]
        if missing or extra:
            raise FormatError(path, 1, f"header must be {','.join(columns)} (got {','.join(header)})")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise FormatError(path, lineno, f"expected {len(header)} fields, found {len(rec)}")
            row = {h: v.strip() for h, v in zip(header, rec)}
            for c in columns:
                if row[c] == "":
                    raise FormatError(path, lineno, f"empty {c}")
            rows.append((lineno, row))
    return rows


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=",", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if x is None else x for x in r])


def read_labels(path) -> dict[str, tuple[str, str | None]]:
    """``item_id -> (subject_id, media_id)``."""
    out = {}
    for lineno, row in read_csv(path, ["item_id", "subject_id"], ["media_id"]):
        if row["item_id"] in out:
            raise FormatError(path, lineno, f"duplicate item id {row['item_id']!r}")
        out[row["item_id"]] = (row["subject_id"], row.get("media_id") or None)
    return out


def write_labels(path, ds: Dataset) -> None:
    media = ds.media or [None] * len(ds)
    subjects = ds.subjects or [None] * len(ds)
    write_csv(path, ["item_id", "subject_id", "media_id"], zip(ds.ids, subjects, media))


def load_dataset(embeddings_path, labels_path=None) -> Dataset:
    """Read an embedding file (and optional labels) into a normalized :class:`Dataset`."""
    ef = read_embeddings(embeddings_path)
    subjects = media = None
    if labels_path is not None:
        labels = read_labels(labels_path)
        missing = [i for i in ef.ids if i not in labels]
        if missing:
            raise FormatError(labels_path, None, f"no label for item id {missing[0]!r}")
        subjects = [labels[i][0] for i in ef.ids]
        media = [labels[i][1] for i in ef.ids]
    try:
        return Dataset(ids=ef.ids, vectors=ef.vectors, subjects=subjects, media=media)
    except ConstructionError as exc:
        raise FormatError(embeddings_path, None, str(exc)) from None


def read_pairs(path) -> PairProtocol:
    pairs = []
    for lineno, row in read_csv(path, ["id_a", "id_b", "genuine"]):
        if row["genuine"] not in ("0", "1"):
            raise FormatError(path, lineno, "genuine must be 0 or 1")
        pairs.append((row["id_a"], row["id_b"], row["genuine"] == "1"))
    try:
        return PairProtocol(tuple(pairs))
    except ValueError as exc:
        raise FormatError(path, None, str(exc)) from None


def write_pairs(path, protocol: PairProtocol) -> None:
    write_csv(path, ["id_a", "id_b", "genuine"], ((a, b, int(g)) for a, b, g in protocol.pairs))


def read_templates(path) -> dict[str, TemplateSpec]:
    """Long-format template file: one ``template_id,subject_id,item_id`` row per member."""
    members: dict[str, list[str]] = {}
    subjects: dict[str, str] = {}
    for lineno, row in read_csv(path, ["template_id", "subject_id", "item_id"]):
        tid = row["template_id"]
        if subjects.setdefault(tid, row["subject_id"]) != row["subject_id"]:
            raise FormatError(path, lineno, f"template {tid!r} has conflicting subject ids")
        members.setdefault(tid, []).append(row["item_id"])
    return {t: TemplateSpec(t, subjects[t], tuple(m)) for t, m in members.items()}


def write_templates(path, specs: Iterable[TemplateSpec]) -> None:
    write_csv(
        path,
        ["template_id", "subject_id", "item_id"],
        ((s.template_id, s.subject_id, i) for s in specs for i in s.item_ids),
    )


def read_manifest(path) -> list[tuple[str, str]]:
    """Gallery or probe manifest: ``entry_id,subject_id`` rows."""
    return [(row["entry_id"], row["subject_id"]) for _, row in read_csv(path, ["entry_id", "subject_id"])]


def write_manifest(path, entries: Iterable[tuple[str, str]]) -> None:
    write_csv(path, ["entry_id", "subject_id"], entries)


def write_truth(path, rows) -> None:
    write_csv(path, ["item_id", "subject_id", "t", "true_ers"], ((i, s, repr(t), repr(e)) for i, s, t, e in rows))


def read_truth(path) -> dict[str, tuple[str, float, float]]:
    return {
        row["item_id"]: (row["subject_id"], float(row["t"]), float(row["true_ers"]))
        for _, row in read_csv(path, ["item_id", "subject_id", "t", "true_ers"])
    }


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(path, None, f"cannot read: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise FormatError(path, lineno, "expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def write_config(path, kv: dict) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in kv.items()), encoding="utf-8")


def write_ui_model(path, ui: UiModel) -> None:
    params = ui.clustering_parameters
    kv = {
        "format": UI_FORMAT,
        "dimension": ui.dim,
        "source_cluster_size": ui.source_cluster_size,
        "linkage": params.linkage if params else "",
        "threshold": repr(params.threshold) if params else "",
        "source_tag": ui.source_tag,
        "centroid": " ".join(repr(x) for x in ui.centroid.tolist()),
    }
    write_config(path, kv)


def read_ui_model(path) -> UiModel:
    kv = read_config(path)
    if kv.get("format") != UI_FORMAT:
        raise FormatError(path, 1, f"not a UI model file (format must be {UI_FORMAT})")
    try:
        centroid = np.array([float(x) for x in kv["centroid"].split()])
        d = int(kv["dimension"])
        size = int(kv["source_cluster_size"])
    except (KeyError, ValueError) as exc:
        raise FormatError(path, None, f"bad or missing field: {exc}") from None
    if centroid.shape[0] != d:
        raise FormatError(path, None, f"centroid has {centroid.shape[0]} values, dimension says {d}")
    params = None
    if kv.get("linkage"):
        params = ClusterParameters(kv["linkage"], float(kv["threshold"]))
    norm = float(np.linalg.norm(centroid))
    if not math.isfinite(norm) or norm == 0.0:
        raise FormatError(path, None, "degenerate centroid")
    # tolerate decimal rounding in hand-edited files
    return UiModel(centroid=centroid / norm, source_cluster_size=size, clustering_parameters=params,
                   source_tag=kv.get("source_tag", ""))


def write_clusters(path, result: ClusterResult) -> None:
    write_csv(path, ["item_id", "cluster"], ((i, k) for k, m in enumerate(result.clusters) for i in m))


def read_clusters(path, params: ClusterParameters | None = None) -> ClusterResult:
    groups: dict[int, list[str]] = {}
    for lineno, row in read_csv(path, ["item_id", "cluster"]):
        try:
            groups.setdefault(int(row["cluster"]), []).append(row["item_id"])
        except ValueError:
            raise FormatError(path, lineno, "cluster must be an integer") from None
    clusters = sorted((sorted(m) for m in groups.values()), key=lambda m: (-len(m), m[0]))
    return ClusterResult(
        clusters=tuple(tuple(m) for m in clusters),
        sizes_descending=tuple(len(m) for m in clusters),
        parameters=params or ClusterParameters("unknown", math.nan),
    )


def write_histogram(path, result: ClusterResult) -> None:
    write_csv(path, ["rank", "size"], cluster_size_histogram(result))


def write_ers_table(path, rows) -> None:
    write_csv(path, ["item_id", "capped", "raw"], ((i, repr(e.capped), repr(e.raw)) for i, e in rows))


def write_report(out_dir, report: EvalReport, stem: str = "report") -> None:
    out = Path(out_dir)
    (out / f"{stem}.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / f"{stem}.txt").write_text(report.to_table(), encoding="utf-8")
