"""Command-line front end: train, recover, viz, mojofm, diff, cache tools."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import subprocess
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import ConcernMapError, __version__
from .bayes import (
    load_model,
    render_candidate_report,
    save_model,
    select_best,
    train_and_select,
)
from .corpus import (
    DEFAULT_STOP_WORDS,
    load_stop_words,
    load_training_corpus,
    scan_corpus,
)
from .deps import extract_deps, parse_dep_lines
from .figures import render_cluster_summary
from .hashing import canonical_json
from .metrics import (
    Partition,
    diff_recoveries,
    mojofm_with_coverage,
    parse_roster,
)
from .recover import (
    RecoveryConfig,
    atomic_write_bytes,
    atomic_write_text,
    audit_cache,
    incremental_recover,
    load_cache,
    parse_result,
    recover_with_stats,
    save_cache,
    serialize_result,
    write_textual_output,
)
from .viz import DotOptions, assign_palette, build_tree, emit_dot

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Resolved settings for one invocation; flags override config-file values."""

    classifier: str | None = None
    corpus_root: str | None = None
    include: tuple[str, ...] = ("**/*",)
    exclude: tuple[str, ...] = ()
    weight_measure: str = "bytes"
    unknown_threshold: float = 0.5
    alpha: float = 1.0
    n_candidates: int = 10
    holdout_fraction: float = 1.0 / 3.0
    base_seed: int = 0
    out_dir: str = "concernmap-out"
    cache_path: str | None = None
    audit: bool = False
    jobs: int = 1
    stop_words: str | None = None

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ConcernMapError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConcernMapError(
                f"holdout fraction must be in (0,1), got {self.holdout_fraction}"
            )
        if not 0.0 <= self.unknown_threshold <= 1.0:
            raise ConcernMapError(
                f"unknown threshold must be in [0,1], got {self.unknown_threshold}"
            )
        if self.n_candidates < 1:
            raise ConcernMapError("n_candidates must be at least 1")
        if self.jobs < 1:
            raise ConcernMapError("jobs must be at least 1")

    def recovery_config(self) -> RecoveryConfig:
        return RecoveryConfig(
            unknown_threshold=self.unknown_threshold,
            weight_measure=self.weight_measure,
        )


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < config file < command-line flags."""
    values: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConcernMapError(f"cannot read config file {config_path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConcernMapError(f"config file {config_path} must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConcernMapError(
                f"config file {config_path} has unknown keys: " + ", ".join(unknown)
            )
        values.update(raw)
    for f in fields(RunConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            values[f.name] = flag_value
    if "include" in values:
        values["include"] = tuple(values["include"])
    if "exclude" in values:
        values["exclude"] = tuple(values["exclude"])
    config = RunConfig(**values)
    config.validate()
    return config


def _stop_words_from(config: RunConfig) -> frozenset[str]:
    if config.stop_words:
        return load_stop_words(Path(config.stop_words))
    return DEFAULT_STOP_WORDS


# --- commands ----------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    corpus = load_training_corpus(Path(args.training_root), stop_words=_stop_words_from(config))
    model, reports = train_and_select(
        corpus,
        n_candidates=config.n_candidates,
        base_seed=config.base_seed,
        holdout_fraction=config.holdout_fraction,
        alpha=config.alpha,
    )
    winner = select_best(reports)
    summary = render_candidate_report(reports, winner)
    out_model = Path(args.out_model)
    atomic_write_bytes(out_model, save_model(model))
    report_path = Path(args.report) if args.report else out_model.with_suffix(".report.txt")
    atomic_write_text(report_path, summary)
    print(summary, end="")
    print(f"concerns: {', '.join(model.concerns)}")
    print(f"model fingerprint: {model.fingerprint}")
    print(f"model written to {out_model}")
    return 0


def cmd_recover(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    model_path = Path(args.model)
    if not model_path.exists():
        raise ConcernMapError(f"model file not found: {model_path}")
    model = load_model(model_path.read_bytes())

    scan = scan_corpus(
        Path(args.corpus_root), include_globs=config.include, exclude_globs=config.exclude
    )
    for warning in scan.warnings:
        log.warning("%s", warning)

    cache = load_cache(Path(config.cache_path)) if config.cache_path else None
    rec_config = config.recovery_config()

    if config.audit and cache is not None:
        mismatches = audit_cache(scan, model, rec_config, cache)
        if mismatches:
            for line in mismatches:
                print(f"cache audit mismatch: {line}", file=sys.stderr)
            return 1
        print(f"cache audit: {len(cache)} entries, 0 mismatches")

    if args.previous:
        previous = parse_result(Path(args.previous).read_bytes())
        result, stats = incremental_recover(
            previous, scan, model, cache, rec_config, jobs=config.jobs
        )
    else:
        result, stats = recover_with_stats(scan, model, cache, rec_config, jobs=config.jobs)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(out_dir / "result.json", serialize_result(result))
    graph = extract_deps(scan)
    write_textual_output(result, graph, out_dir)
    palette = assign_palette(result.concerns)
    render_cluster_summary(result, palette, out_dir / "clusters.png")
    if config.cache_path and cache is not None:
        save_cache(cache, Path(config.cache_path))

    for cluster in [*result.concerns, "Unknown"]:
        print(f"{cluster}: {len(result.clusters.get(cluster, []))} entities")
    print(
        f"reused: {stats.reused}, reclassified: {stats.reclassified}, "
        f"added: {stats.added}, removed: {stats.removed}"
    )
    print(f"outputs written to {out_dir}")
    return 0


def cmd_viz(args: argparse.Namespace) -> int:
    result = parse_result(Path(args.result).read_bytes())
    weight_measure = args.weight_measure or result.config.weight_measure
    tree = build_tree(result, weight_measure)

    user_colors = None
    if args.palette:
        raw = json.loads(Path(args.palette).read_text(encoding="utf-8"))
        user_colors = {str(k): str(v) for k, v in raw.items()}
    palette = assign_palette(result.concerns, user_colors)

    graph = None
    if args.deps:
        nodes = [r.entity.path for r in result.records]
        graph = parse_dep_lines(Path(args.deps).read_text(encoding="utf-8"), nodes)

    options = DotOptions(width=args.width, height=args.height, detail=args.detail)
    dot_text = emit_dot(tree, palette, graph, options)
    out_path = Path(args.out)
    atomic_write_text(out_path, dot_text)
    print(f"DOT written to {out_path}")

    if args.pdf:
        renderer = shutil.which("dot")
        if renderer is None:
            raise ConcernMapError(
                "PDF requested but no `dot` renderer found on PATH (install graphviz)"
            )
        pdf_path = out_path.with_suffix(".pdf")
        proc = subprocess.run(
            [renderer, "-Tpdf", str(out_path), "-o", str(pdf_path)],
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            raise ConcernMapError(f"dot failed: {proc.stderr.strip()}")
        print(f"PDF written to {pdf_path}")
    return 0


def _load_partition(path: Path) -> Partition:
    """Ground truth may be a result file or a `cluster<TAB>path` roster."""
    data = path.read_bytes()
    text = data.decode("utf-8")
    if text.lstrip().startswith("{"):
        return Partition.from_clusters(parse_result(data).clusters)
    return Partition.from_clusters(parse_roster(text))


def cmd_mojofm(args: argparse.Namespace) -> int:
    clustering = _load_partition(Path(args.result))
    ground_truth = _load_partition(Path(args.ground_truth))
    value, warnings = mojofm_with_coverage(clustering, ground_truth)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"{value:.2f}")
    return 0


def cmd_diff(args: argparse.Namespace) -> int:
    old = parse_result(Path(args.old_result).read_bytes())
    new = parse_result(Path(args.new_result).read_bytes())
    report = diff_recoveries(old, new)
    if report.is_empty() and not report.warnings:
        print("no changes")
    else:
        print(report.render(), end="")
    return 0


def cmd_cache_audit(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    model = load_model(Path(args.model).read_bytes())
    cache_path = Path(args.cache)
    cache = load_cache(cache_path)
    scan = scan_corpus(
        Path(args.corpus_root), include_globs=config.include, exclude_globs=config.exclude
    )
    mismatches = audit_cache(scan, model, config.recovery_config(), cache)
    if mismatches:
        for line in mismatches:
            print(f"mismatch: {line}", file=sys.stderr)
        return 1
    print(f"cache audit: {len(cache)} entries, 0 mismatches")
    return 0


def cmd_cache_clear(args: argparse.Namespace) -> int:
    cache_path = Path(args.cache)
    if cache_path.exists():
        cache_path.unlink()
        print(f"cache cleared: {cache_path}")
    else:
        print(f"no cache at {cache_path}")
    return 0


def cmd_show_config(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    print(canonical_json({f.name: getattr(config, f.name) for f in fields(config)}))
    return 0


# --- argument parsing ----------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")


def _add_corpus_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--include", action="append", metavar="GLOB",
                        help="include glob (repeatable; default **/*)")
    parser.add_argument("--exclude", action="append", metavar="GLOB",
                        help="exclude glob (repeatable)")


def _add_recovery_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--unknown-threshold", dest="unknown_threshold", type=float,
                        help="affinity below this in every concern -> Unknown (default 0.5)")
    parser.add_argument("--weight-measure", dest="weight_measure",
                        choices=["bytes", "physical_sloc", "logical_sloc"],
                        help="entity weight used for aggregation (default bytes)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="concernmap",
        description="Concern-oriented architecture recovery: classify source "
        "entities against named concerns, cluster, visualize, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a classifier from a labeled directory tree")
    p_train.add_argument("training_root", help="directory with one subdirectory per concern")
    p_train.add_argument("-o", "--out-model", required=True, help="model output path")
    p_train.add_argument("--report", help="candidate report path (default: <model>.report.txt)")
    p_train.add_argument("--n-candidates", dest="n_candidates", type=int,
                         help="hold-out trials to run (default 10)")
    p_train.add_argument("--base-seed", dest="base_seed", type=int,
                         help="first split seed (default 0)")
    p_train.add_argument("--holdout-fraction", dest="holdout_fraction", type=float,
                         help="held-out share per trial (default 1/3)")
    p_train.add_argument("--alpha", type=float, help="Laplace smoothing (default 1.0)")
    p_train.add_argument("--stop-words", dest="stop_words",
                         help="file with one stop word per line (replaces the built-in list)")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_recover = sub.add_parser("recover", help="classify a corpus and write the recovery result")
    p_recover.add_argument("corpus_root", help="source tree to recover")
    p_recover.add_argument("-m", "--model", required=True, help="trained model file")
    p_recover.add_argument("-o", "--out-dir", dest="out_dir", help="output directory")
    p_recover.add_argument("--cache", dest="cache_path", help="affinity cache file")
    p_recover.add_argument("--previous", help="previous result.json for incremental recovery")
    p_recover.add_argument("--audit", action="store_true", default=None,
                           help="re-verify every cache hit before reuse")
    p_recover.add_argument("--jobs", type=int, help="worker threads (default 1)")
    _add_corpus_flags(p_recover)
    _add_recovery_flags(p_recover)
    _add_config_flags(p_recover)
    p_recover.set_defaults(func=cmd_recover)

    p_viz = sub.add_parser("viz", help="render a recovery result as a DOT directory tree")
    p_viz.add_argument("result", help="result.json from `recover`")
    p_viz.add_argument("-o", "--out", required=True, help="DOT output path")
    p_viz.add_argument("--deps", help="dependency list file (required for --detail)")
    p_viz.add_argument("--detail", action="store_true",
                       help="per-entity boxes with size and dependency rows")
    p_viz.add_argument("--weight-measure", dest="weight_measure",
                       choices=["bytes", "physical_sloc", "logical_sloc"],
                       help="override the result's weight measure")
    p_viz.add_argument("--width", type=float, help="graph width directive (inches)")
    p_viz.add_argument("--height", type=float, help="graph height directive (inches)")
    p_viz.add_argument("--palette", help="JSON file mapping concern -> #RRGGBB")
    p_viz.add_argument("--pdf", action="store_true", help="also render PDF via graphviz dot")
    p_viz.set_defaults(func=cmd_viz)

    p_mojofm = sub.add_parser("mojofm", help="compare a result against a ground-truth roster")
    p_mojofm.add_argument("result", help="result.json or cluster<TAB>path roster")
    p_mojofm.add_argument("ground_truth", help="result.json or cluster<TAB>path roster")
    p_mojofm.set_defaults(func=cmd_mojofm)

    p_diff = sub.add_parser("diff", help="report changes between two recovery results")
    p_diff.add_argument("old_result")
    p_diff.add_argument("new_result")
    p_diff.set_defaults(func=cmd_diff)

    p_cache = sub.add_parser("cache", help="cache maintenance")
    cache_sub = p_cache.add_subparsers(dest="cache_command", required=True)

    p_audit = cache_sub.add_parser("audit", help="re-verify cached vectors against the model")
    p_audit.add_argument("corpus_root")
    p_audit.add_argument("-m", "--model", required=True)
    p_audit.add_argument("--cache", required=True)
    _add_corpus_flags(p_audit)
    _add_recovery_flags(p_audit)
    _add_config_flags(p_audit)
    p_audit.set_defaults(func=cmd_cache_audit)

    p_clear = cache_sub.add_parser("clear", help="delete the cache file")
    p_clear.add_argument("--cache", required=True)
    p_clear.set_defaults(func=cmd_cache_clear)

    p_config = sub.add_parser("show-config", help="print the resolved configuration")
    _add_corpus_flags(p_config)
    _add_recovery_flags(p_config)
    _add_config_flags(p_config)
    p_config.set_defaults(func=cmd_show_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConcernMapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
