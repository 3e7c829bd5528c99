"""Source-tree and training-data ingestion.

Scans directory trees into source entities (path, content hash, size, SLOC),
turns file text into normalized token bags, and loads labeled training
corpora laid out as one subdirectory per concern.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Iterable, Sequence

from . import ConcernMapError

logger = logging.getLogger(__name__)

# Bump whenever tokenization rules change; feeds the recovery config fingerprint.
TOKENIZER_VERSION = "1"

# File suffixes treated as C-family for comment syntax and SLOC rules.
C_FAMILY_SUFFIXES = frozenset(
    {
        ".java", ".c", ".h", ".cc", ".cpp", ".cxx", ".hpp", ".hh", ".hxx",
        ".cs", ".js", ".jsx", ".ts", ".tsx", ".go", ".scala", ".kt", ".kts",
        ".swift", ".m", ".mm", ".groovy", ".dart", ".rs", ".php",
    }
)

# Small general-English stop list used when building training corpora.
ENGLISH_STOP_WORDS = frozenset(
    """
    about above after again against all also am an and any are as at be
    because been before being below between both but by can could did do
    does doing down during each few for from further had has have having
    he her here hers herself him himself his how if in into is it its
    itself just me more most my myself no nor not now of off on once only
    or other our ours ourselves out over own same she should so some such
    than that the their theirs them themselves then there these they this
    those through to too under until up very was we were what when where
    which while who whom why will with would you your yours yourself
    yourselves
    """.split()
)

# C-family language keywords; present in every concern, so no signal.
C_FAMILY_KEYWORDS = frozenset(
    """
    abstract assert boolean break byte case catch char class const continue
    default delete do double else enum extends extern final finally float
    for goto if implements import inline instanceof int interface long
    namespace native new package private protected public register return
    short signed sizeof static strictfp struct super switch synchronized
    template this throw throws transient try typedef union unsigned using
    var virtual void volatile while true false null
    """.split()
)

DEFAULT_STOP_WORDS = ENGLISH_STOP_WORDS | C_FAMILY_KEYWORDS


class CorpusError(ConcernMapError):
    """Unusable corpus or training-data layout."""


# --- token bags -------------------------------------------------------------

@dataclass
class TokenBag:
    """Multiset of normalized tokens extracted from one document."""

    tokens: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.tokens.values())

    def __bool__(self) -> bool:
        return bool(self.tokens)


_RAW_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")
# Splits compounds at camelCase humps, uppercase runs, and digit boundaries.
_SUBWORD_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+|[0-9]+")


def tokenize(raw_text: str, stop_words: frozenset[str] | None = None) -> TokenBag:
    """Split text into a bag of lowercase identifier-word tokens.

    Splits on any non-alphanumeric character, then at camelCase humps and
    digit/letter boundaries; lowercases; drops tokens shorter than 2 chars
    and pure numbers. `stop_words` is only passed when preparing training
    documents; classification-time input keeps all tokens.
    """
    counts: dict[str, int] = {}
    for raw in _RAW_TOKEN_RE.findall(raw_text):
        for part in _SUBWORD_RE.findall(raw):
            if len(part) < 2 or part.isdigit():
                continue
            token = part.lower()
            if stop_words is not None and token in stop_words:
                continue
            counts[token] = counts.get(token, 0) + 1
    return TokenBag(counts)


# --- SLOC counting ----------------------------------------------------------

# One pass over C-family text: comments, then string/char literals, each
# tolerant of an unterminated tail.
_C_REGION_RE = re.compile(
    r"(?P<line>//[^\n]*)"
    r"|(?P<block>/\*.*?(?:\*/|\Z))"
    r"|(?P<dq>\"(?:\\.|[^\"\\\n])*(?:\"|(?=\n)|\Z))"
    r"|(?P<sq>'(?:\\.|[^'\\\n])*(?:'|(?=\n)|\Z))",
    re.DOTALL,
)


def _blank_region(text: str) -> str:
    """Replace every character except newlines with a space."""
    return "".join("\n" if ch == "\n" else " " for ch in text)


def mask_c_family(raw_text: str) -> tuple[str, str]:
    """Return (text with comments blanked, text with comments and strings blanked).

    Blanked regions keep their newlines so line structure survives.
    """
    no_comments: list[str] = []
    no_comments_no_strings: list[str] = []
    pos = 0
    for m in _C_REGION_RE.finditer(raw_text):
        gap = raw_text[pos:m.start()]
        no_comments.append(gap)
        no_comments_no_strings.append(gap)
        blanked = _blank_region(m.group())
        if m.lastgroup in ("line", "block"):
            no_comments.append(blanked)
        else:
            no_comments.append(m.group())
        no_comments_no_strings.append(blanked)
        pos = m.end()
    tail = raw_text[pos:]
    no_comments.append(tail)
    no_comments_no_strings.append(tail)
    return "".join(no_comments), "".join(no_comments_no_strings)


def count_sloc(raw_text: str, language_family: str = "unknown") -> tuple[int, int]:
    """Count (physical, logical) SLOC.

    c_family: physical = lines that are neither blank nor comment-only;
    logical = `;` and `}` occurrences outside comments and string literals.
    unknown: physical = non-blank lines; logical = physical.
    """
    if language_family == "c_family":
        code_with_strings, code_only = mask_c_family(raw_text)
        physical = sum(1 for line in code_with_strings.splitlines() if line.strip())
        logical = code_only.count(";") + code_only.count("}")
        return physical, logical
    if language_family == "unknown":
        physical = sum(1 for line in raw_text.splitlines() if line.strip())
        return physical, physical
    raise ValueError(f"unknown language family: {language_family!r}")


def language_family_of(path: str) -> str:
    suffix = PurePosixPath(path).suffix.lower()
    return "c_family" if suffix in C_FAMILY_SUFFIXES else "unknown"


# --- source-tree scanning ---------------------------------------------------

@dataclass(frozen=True)
class SourceEntity:
    """One source file treated as a classifiable document."""

    path: str                 # relative, '/'-separated, unique within a corpus
    package: tuple[str, ...]  # directory segments from the corpus root
    content_hash: str         # sha256 of raw bytes
    byte_size: int
    physical_sloc: int
    logical_sloc: int

    @property
    def base_name(self) -> str:
        """File name without its final suffix (e.g. 'B' for 'a/B.java')."""
        name = self.path.rsplit("/", 1)[-1]
        stem, _, _ = name.rpartition(".")
        return stem or name


@dataclass
class CorpusScan:
    """Result of scanning a source tree: entities plus raw-text access."""

    root: Path
    entities: list[SourceEntity]
    warnings: list[str] = field(default_factory=list)

    def read_text(self, entity: SourceEntity) -> str:
        return (self.root / entity.path).read_text(encoding="utf-8", errors="replace")


def glob_to_regex(pattern: str) -> re.Pattern[str]:
    """Translate a glob with `*` (segment), `**` (recursive), `?` to a regex."""
    out: list[str] = []
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "*":
            if pattern[i:i + 2] == "**":
                if pattern[i:i + 3] == "**/":
                    out.append(r"(?:[^/]+/)*")
                    i += 3
                else:
                    out.append(r".*")
                    i += 2
            else:
                out.append(r"[^/]*")
                i += 1
        elif ch == "?":
            out.append(r"[^/]")
            i += 1
        else:
            out.append(re.escape(ch))
            i += 1
    return re.compile("".join(out) + r"\Z")


def _matches_any(path: str, patterns: Sequence[re.Pattern[str]]) -> bool:
    return any(p.match(path) for p in patterns)


def scan_corpus(
    root: Path | str,
    include_globs: Sequence[str] = ("**/*",),
    exclude_globs: Sequence[str] = (),
) -> CorpusScan:
    """Scan a source tree into entities, sorted lexicographically by path.

    Unreadable individual files are skipped and noted in `warnings`; an
    unreadable or missing root is fatal.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root is not a readable directory: {root}")
    include = [glob_to_regex(g) for g in include_globs]
    exclude = [glob_to_regex(g) for g in exclude_globs]

    entities: list[SourceEntity] = []
    warnings: list[str] = []
    try:
        candidates = sorted(p for p in root.rglob("*") if p.is_file())
    except OSError as exc:
        raise CorpusError(f"cannot walk corpus root {root}: {exc}") from exc

    for file_path in candidates:
        rel = file_path.relative_to(root).as_posix()
        if not _matches_any(rel, include) or _matches_any(rel, exclude):
            continue
        try:
            raw = file_path.read_bytes()
        except OSError as exc:
            warnings.append(f"skipped unreadable file {rel}: {exc}")
            continue
        text = raw.decode("utf-8", errors="replace")
        physical, logical = count_sloc(text, language_family_of(rel))
        entities.append(
            SourceEntity(
                path=rel,
                package=tuple(rel.split("/")[:-1]),
                content_hash=hashlib.sha256(raw).hexdigest(),
                byte_size=len(raw),
                physical_sloc=physical,
                logical_sloc=logical,
            )
        )
    entities.sort(key=lambda e: e.path)
    return CorpusScan(root=root, entities=entities, warnings=warnings)


# --- training corpora -------------------------------------------------------

@dataclass
class TrainingCorpus:
    """Labeled training documents grouped by concern name."""

    concerns: list[str]
    documents: dict[str, list[TokenBag]]

    def validate(self) -> None:
        if len(self.concerns) < 2:
            raise CorpusError("training corpus has fewer than 2 concerns")
        if len(set(self.concerns)) != len(self.concerns):
            raise CorpusError("concern names must be unique")
        for name in self.concerns:
            if not name or "/" in name or "\\" in name:
                raise CorpusError(f"invalid concern name: {name!r}")
            if not self.documents.get(name):
                raise CorpusError(f"concern {name!r} has no documents")


def load_training_corpus(
    root: Path | str,
    stop_words: frozenset[str] | None = DEFAULT_STOP_WORDS,
) -> TrainingCorpus:
    """Load a training tree laid out as `<root>/<concern-name>/<files...>`.

    Concern order is the lexicographic subdirectory order; every file under
    a concern directory (recursively) becomes one training document,
    tokenized with stop-word removal.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"training root is not a readable directory: {root}")
    concern_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(concern_dirs) < 2:
        raise CorpusError(
            f"training root {root} has fewer than 2 concerns "
            f"(found {len(concern_dirs)} subdirectories)"
        )

    concerns: list[str] = []
    documents: dict[str, list[TokenBag]] = {}
    for concern_dir in concern_dirs:
        files = sorted(p for p in concern_dir.rglob("*") if p.is_file())
        if not files:
            raise CorpusError(f"concern directory {concern_dir} contains no documents")
        docs = []
        for f in files:
            text = f.read_bytes().decode("utf-8", errors="replace")
            docs.append(tokenize(text, stop_words=stop_words))
        concerns.append(concern_dir.name)
        documents[concern_dir.name] = docs

    corpus = TrainingCorpus(concerns=concerns, documents=documents)
    corpus.validate()
    return corpus


def load_stop_words(path: Path | str) -> frozenset[str]:
    """Read a user stop-word file: one word per line, '#' comments allowed."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word and not word.startswith("#"):
            words.add(word)
    return frozenset(words)


def iter_token_bags(scan: CorpusScan, entities: Iterable[SourceEntity]) -> Iterable[TokenBag]:
    for entity in entities:
        yield tokenize(scan.read_text(entity))
