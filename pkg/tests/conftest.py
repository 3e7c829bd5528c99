"""Shared fixture builders: training trees, Java corpora, canned results."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from concernmap.bayes import ClassifierModel, fit_model
from concernmap.corpus import (
    SourceEntity,
    TokenBag,
    TrainingCorpus,
    load_training_corpus,
    scan_corpus,
)
from concernmap.recover import EntityRecord, RecoveryConfig, RecoveryResult, UNKNOWN_CLUSTER

CONCERN_WORDS = {
    "Database": [
        "sql", "query", "table", "schema", "index", "transaction", "commit",
        "rollback", "cursor", "jdbc", "statement", "resultset", "select",
        "insert", "update", "database",
    ],
    "Graphics": [
        "screen", "pixel", "render", "draw", "canvas", "bitmap", "sprite",
        "texture", "shader", "polygon", "vertex", "raster", "frame", "color",
        "palette", "widget",
    ],
    "Networking": [
        "socket", "packet", "protocol", "tcp", "udp", "port", "address",
        "route", "firewall", "datagram", "header", "request", "response",
        "gateway", "dns", "session",
    ],
}
SHARED_WORDS = ["manager", "util", "handler", "service", "context", "buffer"]


def write_training_tree(
    root: Path,
    docs_per_concern: int = 8,
    words_per_doc: int = 12,
    overlap_words: int = 0,
    seed: int = 11,
) -> Path:
    """Labeled training layout: one subdirectory per concern, text documents."""
    rng = random.Random(seed)
    for concern, words in CONCERN_WORDS.items():
        concern_dir = root / concern
        concern_dir.mkdir(parents=True, exist_ok=True)
        for i in range(docs_per_concern):
            picked = [rng.choice(words) for _ in range(words_per_doc)]
            picked += [rng.choice(SHARED_WORDS) for _ in range(overlap_words)]
            rng.shuffle(picked)
            (concern_dir / f"doc{i:03d}.txt").write_text(" ".join(picked) + "\n")
    return root


def bag(*tokens: str) -> TokenBag:
    counts: dict[str, int] = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    return TokenBag(tokens=counts)


def tiny_corpus() -> TrainingCorpus:
    """The hand-checked two-concern corpus: affinity({sql}) for pos = 2/3."""
    return TrainingCorpus(
        concerns=["pos", "neg"],
        documents={
            "pos": [bag("sql", "query", "table")],
            "neg": [bag("socket", "ip", "packet")],
        },
    )


def java_file(package: str, class_name: str, words: list[str], pad_lines: int = 0) -> str:
    fields = "\n".join(
        f"    private int {w}Field{i};" for i, w in enumerate(words[: len(words) // 2])
    )
    calls = "\n".join(f"        apply({w});" for w in words[len(words) // 2 :])
    padding = "\n".join(
        f"    private int padField{i};" for i in range(pad_lines)
    )
    body = "\n".join(part for part in (fields, padding, f"    public void run() {{\n{calls}\n    }}") if part)
    return f"package {package};\n\npublic class {class_name} {{\n{body}\n}}\n"


def build_java_corpus(
    root: Path,
    files_per_concern: int = 5,
    words_per_file: int = 10,
    seed: int = 23,
    packages: dict[str, str] | None = None,
) -> dict[str, str]:
    """Write a corpus with known intended concerns; returns path -> concern."""
    rng = random.Random(seed)
    packages = packages or {
        "Database": "org/db",
        "Graphics": "org/ui",
        "Networking": "org/net",
    }
    expected: dict[str, str] = {}
    for concern, pkg in packages.items():
        pkg_dir = root / pkg
        pkg_dir.mkdir(parents=True, exist_ok=True)
        for i in range(files_per_concern):
            words = [rng.choice(CONCERN_WORDS[concern]) for _ in range(words_per_file)]
            name = f"{concern[:2]}Unit{i:03d}"
            rel = f"{pkg}/{name}.java"
            (root / rel).write_text(java_file(pkg.replace("/", "."), name, words))
            expected[rel] = concern
    return expected


@pytest.fixture(scope="session")
def trained_model(tmp_path_factory) -> ClassifierModel:
    root = write_training_tree(tmp_path_factory.mktemp("training"))
    corpus = load_training_corpus(root)
    return fit_model(corpus)


@pytest.fixture(scope="session")
def fixture_corpus_root(tmp_path_factory) -> Path:
    """200-file read-only corpus shared by additivity/determinism suites."""
    root = tmp_path_factory.mktemp("fixture_corpus")
    build_java_corpus(root, files_per_concern=66, words_per_file=12, seed=5)
    extra = root / "org/db/DbUnit900.java"
    extra.write_text(java_file("org.db", "DbUnit900", CONCERN_WORDS["Database"][:8]))
    extra2 = root / "org/ui/GrUnit900.java"
    extra2.write_text(java_file("org.ui", "GrUnit900", CONCERN_WORDS["Graphics"][:8]))
    assert sum(1 for _ in root.rglob("*.java")) == 200
    return root


def make_record(
    path: str,
    concern: str,
    concerns: list[str],
    byte_size: int = 100,
    psloc: int = 10,
    lsloc: int = 5,
    affinity: float = 0.9,
) -> EntityRecord:
    parts = tuple(path.split("/")[:-1])
    if concern == UNKNOWN_CLUSTER:
        affinities = [0.0] * len(concerns)
    else:
        affinities = [affinity if c == concern else 0.05 for c in concerns]
    return EntityRecord(
        entity=SourceEntity(
            path=path,
            package=parts,
            content_hash="x" * 64,
            byte_size=byte_size,
            physical_sloc=psloc,
            logical_sloc=lsloc,
        ),
        affinities=affinities,
        main_concern=concern,
    )


def make_result(
    rows: list[tuple[str, str] | tuple[str, str, int]],
    concerns: list[str] | None = None,
    config: RecoveryConfig | None = None,
    classifier_fingerprint: str = "f" * 64,
) -> RecoveryResult:
    """Assemble a RecoveryResult from (path, concern[, byte_size]) rows."""
    concerns = concerns or ["Database", "Graphics", "Networking"]
    config = config or RecoveryConfig()
    records = []
    for row in rows:
        path, concern = row[0], row[1]
        size = row[2] if len(row) > 2 else 100
        records.append(make_record(path, concern, concerns, byte_size=size))
    records.sort(key=lambda r: r.entity.path)
    clusters: dict[str, list[str]] = {c: [] for c in concerns}
    clusters[UNKNOWN_CLUSTER] = []
    for record in records:
        clusters[record.main_concern].append(record.entity.path)
    return RecoveryResult(
        classifier_fingerprint=classifier_fingerprint,
        config_fingerprint=config.fingerprint(),
        config=config,
        concerns=concerns,
        records=records,
        clusters=clusters,
    )


@pytest.fixture()
def scanned_fixture(fixture_corpus_root):
    return scan_corpus(fixture_corpus_root, include_globs=("**/*.java",))
