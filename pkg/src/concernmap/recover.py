"""Concern recovery: classify entities, cluster by dominant concern, cache.

Every entity is scored independently, so recovery results compose: merging
the results of two disjoint corpus halves is byte-identical to recovering
the union, and re-running after an edit only reclassifies changed content.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import ConcernMapError
from .bayes import ClassifierModel, affinity_vector
from .corpus import TOKENIZER_VERSION, CorpusScan, SourceEntity, tokenize
from .deps import DepGraph, render_dep_lines
from .hashing import canonical_json_bytes, digest_of

log = logging.getLogger(__name__)

RESULT_FORMAT = "concernmap-result/1"
CACHE_FORMAT = "concernmap-cache/1"

UNKNOWN_CLUSTER = "Unknown"

WEIGHT_MEASURES = ("bytes", "physical_sloc", "logical_sloc")


class RecoveryError(ConcernMapError):
    """Recovery misuse: bad config, non-composable results, bad payloads."""


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via a sibling temp file + rename so readers never see partials."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class RecoveryConfig:
    """Settings that change classification output and thus key the cache."""

    unknown_threshold: float = 0.5
    weight_measure: str = "bytes"
    tokenizer_version: str = TOKENIZER_VERSION

    def __post_init__(self) -> None:
        if not 0.0 <= self.unknown_threshold <= 1.0:
            raise RecoveryError(
                f"unknown_threshold must be in [0,1], got {self.unknown_threshold}"
            )
        if self.weight_measure not in WEIGHT_MEASURES:
            raise RecoveryError(
                f"weight_measure must be one of {WEIGHT_MEASURES}, got {self.weight_measure!r}"
            )

    def fingerprint(self) -> str:
        return digest_of(
            {
                "unknown_threshold": self.unknown_threshold,
                "weight_measure": self.weight_measure,
                "tokenizer_version": self.tokenizer_version,
            }
        )


@dataclass
class EntityRecord:
    entity: SourceEntity
    affinities: list[float]
    main_concern: str

    @property
    def weight_bytes(self) -> int:
        return self.entity.byte_size

    @property
    def weight_psloc(self) -> int:
        return self.entity.physical_sloc

    @property
    def weight_lsloc(self) -> int:
        return self.entity.logical_sloc

    def weight(self, measure: str) -> int:
        if measure == "bytes":
            return self.weight_bytes
        if measure == "physical_sloc":
            return self.weight_psloc
        if measure == "logical_sloc":
            return self.weight_lsloc
        raise RecoveryError(f"unknown weight measure {measure!r}")


@dataclass
class RecoveryResult:
    classifier_fingerprint: str
    config_fingerprint: str
    config: RecoveryConfig
    concerns: list[str]
    records: list[EntityRecord]          # sorted by path
    clusters: dict[str, list[str]]       # concern order + Unknown, paths sorted
    warnings: list[str] = field(default_factory=list)

    def record_by_path(self) -> dict[str, EntityRecord]:
        return {r.entity.path: r for r in self.records}


def cosine_similarity(v: Sequence[float], u: Sequence[float]) -> float:
    """Plain cosine; 0 when either vector is zero (the Unknown cluster)."""
    dot = sum(a * b for a, b in zip(v, u))
    nv = math.sqrt(sum(a * a for a in v))
    nu = math.sqrt(sum(b * b for b in u))
    if nv == 0.0 or nu == 0.0:
        return 0.0
    return dot / (nv * nu)


def assign_cluster(
    affinities: Sequence[float], concerns: Sequence[str], unknown_threshold: float
) -> str:
    """Cluster for one affinity vector.

    Everything below the threshold goes to Unknown; otherwise the concern
    whose unit vector is cosine-closest, which for orthogonal unit cluster
    vectors is simply the largest component (first index wins ties).
    """
    if len(affinities) != len(concerns):
        raise RecoveryError(
            f"affinity vector has {len(affinities)} components for {len(concerns)} concerns"
        )
    if all(a < unknown_threshold for a in affinities):
        return UNKNOWN_CLUSTER
    best_i = 0
    for i in range(1, len(affinities)):
        if affinities[i] > affinities[best_i]:
            best_i = i
    return concerns[best_i]


class RecoveryCache:
    """(content hash, classifier fingerprint, config fingerprint) -> vector."""

    def __init__(self, entries: dict[tuple[str, str, str], list[float]] | None = None):
        self._entries = dict(entries or {})
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: tuple[str, str, str]) -> list[float] | None:
        vec = self._entries.get(key)
        return list(vec) if vec is not None else None

    def put(self, key: tuple[str, str, str], affinities: Sequence[float]) -> None:
        with self._lock:
            self._entries[key] = [float(a) for a in affinities]

    def items(self) -> list[tuple[tuple[str, str, str], list[float]]]:
        return sorted(self._entries.items())


def save_cache(cache: RecoveryCache, path: Path) -> None:
    lines = [canonical_json_bytes({"format": CACHE_FORMAT})]
    for (content_hash, classifier_fp, config_fp), vec in cache.items():
        lines.append(
            canonical_json_bytes(
                {
                    "content_hash": content_hash,
                    "classifier_fingerprint": classifier_fp,
                    "config_fingerprint": config_fp,
                    "affinities": vec,
                }
            )
        )
    atomic_write_bytes(Path(path), b"\n".join(lines) + b"\n")


def load_cache(path: Path) -> RecoveryCache:
    """Load a cache file; any corruption yields an empty cache, never bad data."""
    path = Path(path)
    if not path.exists():
        return RecoveryCache()
    entries: dict[tuple[str, str, str], list[float]] = {}
    try:
        with path.open("r", encoding="utf-8") as handle:
            header = json.loads(handle.readline())
            if header.get("format") != CACHE_FORMAT:
                log.warning(
                    "ignoring cache %s: format %r, wanted %r",
                    path, header.get("format"), CACHE_FORMAT,
                )
                return RecoveryCache()
            for line in handle:
                if not line.strip():
                    continue
                row = json.loads(line)
                key = (
                    str(row["content_hash"]),
                    str(row["classifier_fingerprint"]),
                    str(row["config_fingerprint"]),
                )
                entries[key] = [float(a) for a in row["affinities"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        log.warning("ignoring corrupt cache %s: %s", path, exc)
        return RecoveryCache()
    return RecoveryCache(entries)


def classify_entity(
    scan: CorpusScan, entity: SourceEntity, model: ClassifierModel
) -> list[float]:
    return affinity_vector(model, tokenize(scan.read_text(entity)))


@dataclass
class RecoveryStats:
    reused: int = 0
    reclassified: int = 0
    added: int = 0
    removed: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "reused": self.reused,
            "reclassified": self.reclassified,
            "added": self.added,
            "removed": self.removed,
        }


def _build_result(
    model: ClassifierModel,
    config: RecoveryConfig,
    scored: Iterable[tuple[SourceEntity, list[float]]],
    warnings: list[str],
) -> RecoveryResult:
    records = [
        EntityRecord(
            entity=entity,
            affinities=[float(a) for a in affinities],
            main_concern=assign_cluster(affinities, model.concerns, config.unknown_threshold),
        )
        for entity, affinities in scored
    ]
    records.sort(key=lambda r: r.entity.path)
    clusters: dict[str, list[str]] = {c: [] for c in model.concerns}
    clusters[UNKNOWN_CLUSTER] = []
    for record in records:
        clusters[record.main_concern].append(record.entity.path)
    return RecoveryResult(
        classifier_fingerprint=model.fingerprint,
        config_fingerprint=config.fingerprint(),
        config=config,
        concerns=list(model.concerns),
        records=records,
        clusters=clusters,
        warnings=sorted(warnings),
    )


def recover(
    scan: CorpusScan,
    model: ClassifierModel,
    cache: RecoveryCache | None = None,
    config: RecoveryConfig | None = None,
    jobs: int = 1,
) -> RecoveryResult:
    """Classify every scanned entity and bucket it into concern clusters.

    Vectors come from the cache when the (content, classifier, config) key
    hits; fresh classifications are cached. Output is independent of the
    worker count because assembly sorts by path.
    """
    result, _ = recover_with_stats(scan, model, cache, config, jobs)
    return result


def recover_with_stats(
    scan: CorpusScan,
    model: ClassifierModel,
    cache: RecoveryCache | None = None,
    config: RecoveryConfig | None = None,
    jobs: int = 1,
    previous: dict[tuple[str, str], list[float]] | None = None,
) -> tuple[RecoveryResult, RecoveryStats]:
    config = config or RecoveryConfig()
    cache = cache if cache is not None else RecoveryCache()
    classifier_fp = model.fingerprint
    config_fp = config.fingerprint()
    stats = RecoveryStats()
    warnings: list[str] = []
    lock = threading.Lock()

    def score(entity: SourceEntity) -> tuple[SourceEntity, list[float] | None]:
        if previous is not None:
            prior = previous.get((entity.path, entity.content_hash))
            if prior is not None:
                with lock:
                    stats.reused += 1
                return entity, list(prior)
        key = (entity.content_hash, classifier_fp, config_fp)
        hit = cache.get(key)
        if hit is not None:
            with lock:
                stats.reused += 1
            return entity, hit
        try:
            vec = classify_entity(scan, entity, model)
        except OSError as exc:
            with lock:
                warnings.append(f"unreadable entity skipped: {entity.path}: {exc}")
            return entity, None
        cache.put(key, vec)
        with lock:
            stats.reclassified += 1
        return entity, vec

    if jobs > 1 and len(scan.entities) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(score, scan.entities))
    else:
        outcomes = [score(e) for e in scan.entities]

    scored = [(e, v) for e, v in outcomes if v is not None]
    result = _build_result(model, config, scored, warnings)
    return result, stats


def merge(r1: RecoveryResult, r2: RecoveryResult) -> RecoveryResult:
    """Compose two recoveries of disjoint entity sets into one."""
    if r1.classifier_fingerprint != r2.classifier_fingerprint:
        raise RecoveryError(
            "cannot merge results from different classifiers: "
            f"{r1.classifier_fingerprint} vs {r2.classifier_fingerprint}"
        )
    if r1.config_fingerprint != r2.config_fingerprint:
        raise RecoveryError(
            "cannot merge results with different configurations: "
            f"{r1.config_fingerprint} vs {r2.config_fingerprint}"
        )
    paths1 = {r.entity.path for r in r1.records}
    dupes = sorted(paths1 & {r.entity.path for r in r2.records})
    if dupes:
        raise RecoveryError("cannot merge overlapping results; duplicates: " + ", ".join(dupes))

    records = sorted(r1.records + r2.records, key=lambda r: r.entity.path)
    clusters: dict[str, list[str]] = {c: [] for c in r1.concerns}
    clusters[UNKNOWN_CLUSTER] = []
    for record in records:
        clusters[record.main_concern].append(record.entity.path)
    return RecoveryResult(
        classifier_fingerprint=r1.classifier_fingerprint,
        config_fingerprint=r1.config_fingerprint,
        config=r1.config,
        concerns=list(r1.concerns),
        records=records,
        clusters=clusters,
        warnings=sorted(r1.warnings + r2.warnings),
    )


def incremental_recover(
    previous: RecoveryResult,
    scan: CorpusScan,
    model: ClassifierModel,
    cache: RecoveryCache | None = None,
    config: RecoveryConfig | None = None,
    jobs: int = 1,
) -> tuple[RecoveryResult, RecoveryStats]:
    """Re-recover after edits, reusing prior vectors for unchanged content."""
    config = config or RecoveryConfig()
    prior_vectors: dict[tuple[str, str], list[float]] | None
    if (
        previous.classifier_fingerprint != model.fingerprint
        or previous.config_fingerprint != config.fingerprint()
    ):
        log.warning(
            "previous result was produced by a different classifier/config; "
            "running full recovery"
        )
        prior_vectors = None
    else:
        prior_vectors = {
            (r.entity.path, r.entity.content_hash): r.affinities for r in previous.records
        }
    result, stats = recover_with_stats(scan, model, cache, config, jobs, previous=prior_vectors)
    old_paths = {r.entity.path for r in previous.records}
    new_paths = {r.entity.path for r in result.records}
    stats.added = len(new_paths - old_paths)
    stats.removed = len(old_paths - new_paths)
    if prior_vectors is None:
        stats.reused = 0
        stats.reclassified = len(result.records)
    return result, stats


def audit_cache(
    scan: CorpusScan,
    model: ClassifierModel,
    config: RecoveryConfig,
    cache: RecoveryCache,
) -> list[str]:
    """Re-verify every cache hit for the scanned entities; returns mismatches."""
    config_fp = config.fingerprint()
    mismatches: list[str] = []
    for entity in scan.entities:
        key = (entity.content_hash, model.fingerprint, config_fp)
        hit = cache.get(key)
        if hit is None:
            continue
        fresh = classify_entity(scan, entity, model)
        if hit != fresh:
            mismatches.append(
                f"{entity.path}: cached {hit!r} != fresh {fresh!r}"
            )
    return mismatches


# --- serialization -----------------------------------------------------------

def serialize_result(result: RecoveryResult) -> bytes:
    payload = {
        "format": RESULT_FORMAT,
        "classifier_fingerprint": result.classifier_fingerprint,
        "config_fingerprint": result.config_fingerprint,
        "config": {
            "unknown_threshold": result.config.unknown_threshold,
            "weight_measure": result.config.weight_measure,
            "tokenizer_version": result.config.tokenizer_version,
        },
        "concerns": result.concerns,
        "records": [
            {
                "path": r.entity.path,
                "package": list(r.entity.package),
                "content_hash": r.entity.content_hash,
                "byte_size": r.entity.byte_size,
                "physical_sloc": r.entity.physical_sloc,
                "logical_sloc": r.entity.logical_sloc,
                "affinities": r.affinities,
                "main_concern": r.main_concern,
            }
            for r in result.records
        ],
        "clusters": result.clusters,
        "warnings": result.warnings,
    }
    return canonical_json_bytes(payload) + b"\n"


def parse_result(data: bytes) -> RecoveryResult:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RecoveryError(f"malformed result payload: {exc}") from exc
    if not isinstance(payload, dict) or "format" not in payload:
        raise RecoveryError("malformed result payload: missing format marker")
    if payload["format"] != RESULT_FORMAT:
        raise RecoveryError(
            f"unsupported result format {payload['format']!r}; this build reads {RESULT_FORMAT!r}"
        )
    try:
        config = RecoveryConfig(
            unknown_threshold=float(payload["config"]["unknown_threshold"]),
            weight_measure=str(payload["config"]["weight_measure"]),
            tokenizer_version=str(payload["config"]["tokenizer_version"]),
        )
        records = [
            EntityRecord(
                entity=SourceEntity(
                    path=str(row["path"]),
                    package=tuple(row["package"]),
                    content_hash=str(row["content_hash"]),
                    byte_size=int(row["byte_size"]),
                    physical_sloc=int(row["physical_sloc"]),
                    logical_sloc=int(row["logical_sloc"]),
                ),
                affinities=[float(a) for a in row["affinities"]],
                main_concern=str(row["main_concern"]),
            )
            for row in payload["records"]
        ]
        concerns = [str(c) for c in payload["concerns"]]
        clusters: dict[str, list[str]] = {c: [] for c in concerns}
        clusters[UNKNOWN_CLUSTER] = []
        for name, paths in payload["clusters"].items():
            clusters[str(name)] = [str(p) for p in paths]
        result = RecoveryResult(
            classifier_fingerprint=str(payload["classifier_fingerprint"]),
            config_fingerprint=str(payload["config_fingerprint"]),
            config=config,
            concerns=concerns,
            records=records,
            clusters=clusters,
            warnings=[str(w) for w in payload.get("warnings", [])],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RecoveryError(f"malformed result payload: {exc}") from exc
    return result


ENTITY_HEADER = "# path\tmain_concern\taffinities\tbytes\tphysical_sloc\tlogical_sloc\n"
CLUSTER_HEADER = "# cluster\tpath\n"
DEPS_HEADER = "# from\tto\n"


def render_entity_table(result: RecoveryResult) -> str:
    lines = [ENTITY_HEADER]
    for r in result.records:
        vec = ";".join(repr(a) for a in r.affinities)
        lines.append(
            f"{r.entity.path}\t{r.main_concern}\t{vec}"
            f"\t{r.entity.byte_size}\t{r.entity.physical_sloc}\t{r.entity.logical_sloc}\n"
        )
    return "".join(lines)


def render_cluster_roster(result: RecoveryResult) -> str:
    lines = [CLUSTER_HEADER]
    for cluster in [*result.concerns, UNKNOWN_CLUSTER]:
        for path in result.clusters.get(cluster, []):
            lines.append(f"{cluster}\t{path}\n")
    return "".join(lines)


def write_textual_output(
    result: RecoveryResult, dep_graph: DepGraph | None, out_dir: Path
) -> list[Path]:
    """Write entity table, cluster roster, and dependency list under out_dir."""
    out_dir = Path(out_dir)
    dep_lines = render_dep_lines(dep_graph) if dep_graph is not None else ""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        for name, text in (
            ("entities.tsv", render_entity_table(result)),
            ("clusters.tsv", render_cluster_roster(result)),
            ("deps.tsv", DEPS_HEADER + dep_lines),
        ):
            target = out_dir / name
            atomic_write_text(target, text)
            written.append(target)
    except OSError as exc:
        raise RecoveryError(f"cannot write report files under {out_dir}: {exc}") from exc
    return written
