"""Command-line interface: ``erskit <command> ... --out DIR``.

Every command writes only inside its ``--out`` directory and drops a
``run_config.txt`` snapshot of its arguments there. Exit codes: 0 success,
1 usage error, 2 data error, 3 unattainable operating point (with
``--strict``).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, io
from .aggregation import WeightingStrategy, aggregate, build_template, media_pool
from .cluster import DEFAULT_LINKAGE, DEFAULT_THRESHOLD, ClusterParameters, find_ui_cluster, hac_cluster
from .decisions import DEFAULT_GAMMA, DEFAULT_TAU, DecisionConfig, identify, identify_with_ers, verify, verify_with_ers
from .errors import ErskitError, FormatError
from .ers import batch_ers, compute_ers, enhance_rows, ers_arrays
from .metrics import Pipeline, eval_search, eval_verification
from .synthetic import GeneratorConfig, gen_benchmark

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_UNATTAINABLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _targets(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated rates, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _strategy(text: str) -> WeightingStrategy:
    try:
        return WeightingStrategy.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _pipeline(text: str) -> Pipeline:
    try:
        return Pipeline.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(out: Path, args, extra: dict | None = None) -> None:
    kv = {"command": args.command}
    for k, v in sorted(vars(args).items()):
        if k in ("command", "func", "out"):
            continue
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        kv[k] = "" if v is None else str(v)
    kv.update(extra or {})
    io.write_config(out / "run_config.txt", kv)


def _decision_cfg(args) -> DecisionConfig:
    try:
        return DecisionConfig(tau=args.tau, gamma=args.gamma, gate_gallery=getattr(args, "gate_gallery", False))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_cluster(args) -> int:
    ds = io.load_dataset(args.embeddings)
    try:
        result = hac_cluster(ds, args.threshold, args.linkage, workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    io.write_clusters(out / "clusters.csv", result)
    io.write_histogram(out / "histogram.csv", result)
    _snapshot(out, args, {"linkage": args.linkage, "threshold": repr(args.threshold)})
    sizes = result.sizes_descending
    print(f"{len(sizes)} clusters; largest sizes: {', '.join(map(str, sizes[:5]))}")
    return EXIT_OK


def _cluster_params(clusters_path: Path) -> ClusterParameters | None:
    cfg = clusters_path.parent / "run_config.txt"
    if not cfg.exists():
        return None
    kv = io.read_config(cfg)
    if "linkage" in kv and "threshold" in kv:
        return ClusterParameters(kv["linkage"], float(kv["threshold"]))
    return None


def cmd_ui_centroid(args) -> int:
    ds = io.load_dataset(args.embeddings)
    result = io.read_clusters(args.clusters, _cluster_params(Path(args.clusters)))
    missing = [i for m in result.clusters for i in m if i not in ds]
    if missing:
        raise ErskitError(f"{args.clusters}: item id {missing[0]!r} not found in {args.embeddings}")
    ui = find_ui_cluster(result, ds, source_tag=args.source_tag)
    out = _out_dir(args)
    io.write_ui_model(out / "ui_model.txt", ui)
    _snapshot(out, args)
    print(f"UI cluster size {ui.source_cluster_size}")
    return EXIT_OK


def cmd_score(args) -> int:
    ds = io.load_dataset(args.embeddings)
    ui = io.read_ui_model(args.ui)
    rows = batch_ers(ds, ui)
    out = _out_dir(args)
    io.write_ers_table(out / "ers.csv", rows)
    _snapshot(out, args)
    return EXIT_OK


def cmd_enhance(args) -> int:
    ds = io.load_dataset(args.embeddings)
    ui = io.read_ui_model(args.ui)
    out = _out_dir(args)
    io.write_embeddings(out / "enhanced.ersk", ds.ids, enhance_rows(ds.vectors, ui), args.encoding)
    _snapshot(out, args)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _decision_cfg(args)
    ds = io.load_dataset(args.embeddings)
    protocol = io.read_pairs(args.pairs)
    ui = io.read_ui_model(args.ui) if args.ui else None
    rows = []
    accepted = {True: 0, False: 0}
    for a, b, genuine in protocol.pairs:
        for item in (a, b):
            if item not in ds:
                raise ErskitError(f"{args.pairs}: item id {item!r} not found in {args.embeddings}")
        fa, fb = ds.vector(a), ds.vector(b)
        sim = float(np.clip(np.dot(fa, fb), -1.0, 1.0))
        if ui is None:
            ok = verify(fa, fb, cfg)
        else:
            ok = verify_with_ers(fa, fb, compute_ers(fa, ui), compute_ers(fb, ui), cfg)
        accepted[genuine] += ok
        rows.append((a, b, int(genuine), repr(sim), int(ok)))
    out = _out_dir(args)
    io.write_csv(out / "decisions.csv", ["id_a", "id_b", "genuine", "similarity", "accept"], rows)
    n_gen = sum(g for _, _, g in protocol.pairs)
    n_imp = len(protocol.pairs) - n_gen
    summary = (
        f"gated = {ui is not None}\n"
        f"genuine_pairs = {n_gen}\nimpostor_pairs = {n_imp}\n"
        f"true_accept_rate = {accepted[True] / n_gen!r}\n"
        f"false_accept_rate = {accepted[False] / n_imp!r}\n"
    )
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    _snapshot(out, args)
    sys.stdout.write(summary)
    return EXIT_OK


def _ers_lookup(path, ids: Sequence[str]) -> list[float]:
    table = {}
    for lineno, row in io.read_csv(path, ["item_id", "capped"], ["raw"]):
        try:
            table[row["item_id"]] = float(row["capped"])
        except ValueError:
            raise FormatError(path, lineno, "capped ERS must be a number") from None
    missing = [i for i in ids if i not in table]
    if missing:
        raise FormatError(path, None, f"no ERS for id {missing[0]!r}")
    return [table[i] for i in ids]


def cmd_search(args) -> int:
    cfg = _decision_cfg(args)
    gallery = io.load_dataset(args.gallery)
    probes = io.load_dataset(args.probes)
    if gallery.dim != probes.dim:
        raise ErskitError(f"dimension mismatch: gallery {gallery.dim} vs probes {probes.dim}")
    ui = io.read_ui_model(args.ui) if args.ui else None
    if ui is None and (args.gallery_ers or args.probe_ers or args.gate_gallery):
        raise UsageError("--gallery-ers, --probe-ers and --gate-gallery need --ui")
    g_ers = p_ers = None
    if ui is not None:
        g_ers = _ers_lookup(args.gallery_ers, gallery.ids) if args.gallery_ers else ers_arrays(gallery.vectors, ui)[0].tolist()
        p_ers = _ers_lookup(args.probe_ers, probes.ids) if args.probe_ers else ers_arrays(probes.vectors, ui)[0].tolist()
    rows = []
    for k, pid in enumerate(probes.ids):
        q = probes.vectors[k]
        if ui is None:
            res = identify(q, gallery.vectors, cfg)
        else:
            res = identify_with_ers(q, p_ers[k], gallery.vectors, g_ers, cfg)
        entry = gallery.ids[res.gallery_index - 1] if res.matched else ""
        rows.append((pid, res.label, entry, repr(res.best_similarity)))
    out = _out_dir(args)
    io.write_csv(out / "search.csv", ["probe_id", "gallery_index", "gallery_id", "best_similarity"], rows)
    _snapshot(out, args)
    print(f"{sum(1 for r in rows if r[1])} of {len(rows)} probes matched")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    ds = io.load_dataset(args.embeddings, args.labels)
    specs = io.read_templates(args.templates)
    ui = io.read_ui_model(args.ui)
    pool = media_pool if args.media_pool else aggregate
    ids, vecs, rows = [], [], []
    for tid, spec in specs.items():
        try:
            t = build_template(spec, ds, ui, enhance=args.enhance)
        except KeyError as exc:
            raise ErskitError(f"{args.templates}: template {tid!r}: {exc.args[0]}") from None
        res = pool(t, args.strategy)
        ids.append(tid)
        vecs.append(res.embedding)
        rows.append((tid, spec.subject_id, repr(res.ers)))
    out = _out_dir(args)
    io.write_embeddings(out / "aggregated.ersk", ids, np.asarray(vecs).reshape(len(ids), ds.dim), args.encoding)
    io.write_csv(out / "template_ers.csv", ["item_id", "subject_id", "capped"], rows)
    _snapshot(out, args)
    return EXIT_OK


def _finish_report(args, report) -> int:
    out = _out_dir(args)
    io.write_report(out, report)
    _snapshot(out, args)
    sys.stdout.write(report.to_table())
    if report.any_unattainable:
        print("warning: some operating points are unattainable with this many non-match scores", file=sys.stderr)
        if args.strict:
            return EXIT_UNATTAINABLE
    return EXIT_OK


def _eval_inputs(args):
    ds = io.load_dataset(args.embeddings, args.labels)
    ui = io.read_ui_model(args.ui) if args.ui else None
    templates = io.read_templates(args.templates) if args.templates else None
    pipeline = args.pipeline
    if args.media_pool:
        pipeline = Pipeline(pipeline.kind, pipeline.strategy, True)
    return ds, ui, templates, pipeline


def cmd_eval_verification(args) -> int:
    ds, ui, templates, pipeline = _eval_inputs(args)
    protocol = io.read_pairs(args.pairs)
    cfg = DecisionConfig(gamma=args.gamma)
    report = eval_verification(ds, protocol, pipeline, cfg, args.far_targets, ui=ui, templates=templates)
    return _finish_report(args, report)


def cmd_eval_search(args) -> int:
    ds, ui, templates, pipeline = _eval_inputs(args)
    gallery = io.read_manifest(args.gallery)
    probes = io.read_manifest(args.probes)
    cfg = DecisionConfig(gamma=args.gamma, gate_gallery=args.gate_gallery)
    report = eval_search(
        ds, gallery, probes, pipeline, cfg, args.fpir_targets, args.ranks, ui=ui, templates=templates
    )
    return _finish_report(args, report)


def cmd_synth(args) -> int:
    kv = io.read_config(args.config) if args.config else {}
    kv.pop("command", None)
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    try:
        cfg = GeneratorConfig.from_config(kv)
    except (TypeError, ValueError) as exc:
        raise ErskitError(f"{args.config or 'defaults'}: {exc}") from None
    gen_benchmark(cfg, args.out)
    print(f"wrote benchmark to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="erskit", description="Embedding recognizability toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--out", required=True, help="output directory (created if missing)")
        return sp

    def decision_flags(sp):
        sp.add_argument("--tau", type=float, default=DEFAULT_TAU, help=f"similarity threshold (default {DEFAULT_TAU})")
        sp.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help=f"ERS gate threshold (default {DEFAULT_GAMMA})")

    def eval_flags(sp):
        sp.add_argument("embeddings", help="embedding file (.ersk)")
        sp.add_argument("--labels", help="labels CSV (item_id,subject_id,media_id); needed for --media-pool")
        sp.add_argument("--ui", help="UI model file; required by gated, weighted and enhanced pipelines")
        sp.add_argument("--templates", help="template CSV; required by template pipelines")
        sp.add_argument(
            "--pipeline", type=_pipeline, default=Pipeline("single"),
            help="single, single_gated, template[:strategy], template_gated[:strategy] or enhanced_avg",
        )
        sp.add_argument("--media-pool", action="store_true", help="average within media before weighting")
        sp.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help=f"ERS gate threshold (default {DEFAULT_GAMMA})")
        sp.add_argument("--strict", action="store_true", help="exit with code 3 if any target is unattainable")

    sp = command("cluster", cmd_cluster, "Cluster embeddings with thresholded HAC.")
    sp.add_argument("embeddings", help="embedding file (.ersk)")
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                    help=f"chordal distance cut-off in (0, 2] (default {DEFAULT_THRESHOLD})")
    sp.add_argument("--linkage", choices=("average", "complete", "single"), default=DEFAULT_LINKAGE,
                    help=f"cluster linkage (default {DEFAULT_LINKAGE})")
    sp.add_argument("--workers", type=int, default=1, help="threads for the distance matrix (result is unaffected)")

    sp = command("ui-centroid", cmd_ui_centroid, "Build the UI model from the largest cluster.")
    sp.add_argument("clusters", help="clusters.csv written by 'erskit cluster'")
    sp.add_argument("embeddings", help="the embedding file that was clustered")
    sp.add_argument("--source-tag", default="", help="free-form provenance label stored in the model")

    sp = command("score", cmd_score, "Compute capped and raw ERS per item.")
    sp.add_argument("embeddings", help="embedding file (.ersk)")
    sp.add_argument("ui", help="UI model file")

    sp = command("enhance", cmd_enhance, "Project the UI direction out of every embedding.")
    sp.add_argument("embeddings", help="embedding file (.ersk)")
    sp.add_argument("ui", help="UI model file")
    sp.add_argument("--encoding", choices=io.ENCODINGS, default="f32le", help="output encoding")

    sp = command("verify", cmd_verify, "1:1 decisions for a pair list (ERS-gated when --ui is given).")
    sp.add_argument("embeddings", help="embedding file (.ersk)")
    sp.add_argument("pairs", help="pair CSV (id_a,id_b,genuine)")
    sp.add_argument("--ui", help="UI model file; enables the ERS gate")
    decision_flags(sp)

    sp = command("search", cmd_search, "Open-set 1:N search; gallery index 0 means no match.")
    sp.add_argument("gallery", help="gallery embedding file")
    sp.add_argument("probes", help="probe embedding file")
    sp.add_argument("--ui", help="UI model file; enables the ERS gate")
    sp.add_argument("--gate-gallery", action="store_true", help="also drop gallery entries below gamma")
    sp.add_argument("--gallery-ers", help="ERS table for gallery entries (default: computed from --ui)")
    sp.add_argument("--probe-ers", help="ERS table for probes (default: computed from --ui)")
    decision_flags(sp)

    sp = command("aggregate", cmd_aggregate, "Collapse templates into one embedding each.")
    sp.add_argument("embeddings", help="embedding file (.ersk)")
    sp.add_argument("templates", help="template CSV (template_id,subject_id,item_id)")
    sp.add_argument("ui", help="UI model file")
    sp.add_argument("--labels", help="labels CSV providing media ids")
    sp.add_argument("--strategy", type=_strategy, default=WeightingStrategy("square"),
                    help="identity, square, softmax, top_one, top_fraction:P or uniform (default square)")
    sp.add_argument("--media-pool", action="store_true", help="average within media before weighting")
    sp.add_argument("--enhance", action="store_true", help="ERS-enhance members before pooling")
    sp.add_argument("--encoding", choices=io.ENCODINGS, default="f32le", help="output encoding")

    sp = command("eval-verification", cmd_eval_verification, "Verification report (FRR at FAR targets).")
    eval_flags(sp)
    sp.add_argument("--pairs", required=True, help="pair CSV (id_a,id_b,genuine)")
    sp.add_argument("--far-targets", type=_targets, default=[1e-4, 1e-3, 1e-2], help="comma-separated FAR targets")

    sp = command("eval-search", cmd_eval_search, "Open-set search report (1-TPIR at FPIR targets, rank-K).")
    eval_flags(sp)
    sp.add_argument("--gallery", required=True, help="gallery manifest (entry_id,subject_id)")
    sp.add_argument("--probes", required=True, help="probe manifest (entry_id,subject_id)")
    sp.add_argument("--fpir-targets", type=_targets, default=[1e-2, 1e-1], help="comma-separated FPIR targets")
    sp.add_argument("--ranks", type=_ints, default=[1, 5, 10], help="comma-separated K for rank-K accuracy")
    sp.add_argument("--gate-gallery", action="store_true", help="also drop gallery entries below gamma")

    sp = command("synth", cmd_synth, "Generate a synthetic benchmark directory.")
    sp.add_argument("config", nargs="?", help="generator config (key = value lines); defaults if omitted")
    sp.add_argument("--seed", type=int, help="override the config seed")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"erskit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ErskitError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"erskit {args.command}: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
