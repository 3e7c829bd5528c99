"""Source-level dependency extraction between corpus entities.

Works from import/include declarations and same-package name references in
comment- and string-stripped text. External references (anything that does
not resolve to a corpus entity) are dropped.
"""

from __future__ import annotations

import logging
import posixpath
import re
from dataclasses import dataclass, field

from . import ConcernMapError
from .corpus import CorpusScan, SourceEntity, language_family_of, mask_c_family

log = logging.getLogger(__name__)


class DepsError(ConcernMapError):
    """Dependency graph misuse (unknown node, malformed dep file)."""


@dataclass
class DepGraph:
    """Deduplicated, canonically sorted entity-to-entity edges."""

    nodes: list[str]
    edges: list[tuple[str, str]]
    _out: dict[str, list[str]] = field(default_factory=dict, repr=False)
    _in: dict[str, list[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._out:
            self._out = {n: [] for n in self.nodes}
            self._in = {n: [] for n in self.nodes}
            for src, dst in self.edges:
                self._out[src].append(dst)
                self._in[dst].append(src)


def build_graph(nodes: list[str], edges: set[tuple[str, str]]) -> DepGraph:
    node_set = set(nodes)
    kept = sorted(
        (a, b) for a, b in edges if a != b and a in node_set and b in node_set
    )
    return DepGraph(nodes=sorted(nodes), edges=kept)


def fan(graph: DepGraph, path: str) -> tuple[list[str], list[str]]:
    """(outgoing, incoming) dependency endpoints of one entity, sorted."""
    if path not in graph._out:
        raise DepsError(f"unknown entity in dependency graph: {path}")
    return sorted(graph._out[path]), sorted(graph._in[path])


_IMPORT_RE = re.compile(r"^\s*import\s+(static\s+)?([A-Za-z_][\w.]*(?:\.\*)?)\s*;", re.MULTILINE)
_QUALIFIED_RE = re.compile(r"[A-Za-z_]\w*(?:\.[A-Za-z_]\w*)+")
_IDENT_RE = re.compile(r"[A-Za-z_]\w*")
_INCLUDE_RE = re.compile(r'^\s*#\s*include\s*"([^"\n]+)"', re.MULTILINE)


def _dotted_name(entity: SourceEntity) -> str:
    stem = entity.base_name
    return ".".join((*entity.package, stem)) if entity.package else stem


def _java_refs(
    text: str,
    entity: SourceEntity,
    by_dotted: dict[str, str],
    siblings: dict[tuple[str, ...], dict[str, str]],
) -> set[str]:
    targets: set[str] = set()
    for match in _IMPORT_RE.finditer(text):
        static, name = match.group(1), match.group(2)
        if name.endswith(".*"):
            if not static:
                continue  # on-demand imports name no single entity
            name = name[:-2]
        elif static:
            # import static pkg.Type.member -> the declaring type
            name = name.rsplit(".", 1)[0]
        resolved = by_dotted.get(name)
        if resolved:
            targets.add(resolved)
    # fully qualified references in the body; the regex grabs maximal dotted
    # runs (e.g. org.x.B.run), so dotted prefixes are tried longest-first
    for match in _QUALIFIED_RE.finditer(text):
        segments = match.group(0).split(".")
        for end in range(len(segments), 1, -1):
            resolved = by_dotted.get(".".join(segments[:end]))
            if resolved:
                targets.add(resolved)
                break
    # unqualified references to same-package entities
    local = siblings.get(entity.package, {})
    if len(local) > 1:
        idents = {m.group(0) for m in _IDENT_RE.finditer(text)}
        for base, path in local.items():
            if path != entity.path and base in idents:
                targets.add(path)
    return targets


def _include_refs(text: str, entity: SourceEntity, by_path: set[str]) -> set[str]:
    targets: set[str] = set()
    here = posixpath.dirname(entity.path)
    for match in _INCLUDE_RE.finditer(text):
        rel = match.group(1)
        for candidate in (posixpath.normpath(posixpath.join(here, rel)), posixpath.normpath(rel)):
            if candidate in by_path:
                targets.add(candidate)
                break
    return targets


def extract_deps(scan: CorpusScan, entities: list[SourceEntity] | None = None) -> DepGraph:
    """Dependency graph over the scanned entities.

    Java-like files contribute import declarations, fully qualified name
    references, and same-package base-name references; C-like files
    contribute quoted #include lines resolved against the corpus.
    """
    if entities is None:
        entities = scan.entities
    nodes = [e.path for e in entities]
    by_path = set(nodes)
    by_dotted: dict[str, str] = {}
    siblings: dict[tuple[str, ...], dict[str, str]] = {}
    for entity in entities:
        by_dotted.setdefault(_dotted_name(entity), entity.path)
        siblings.setdefault(entity.package, {})[entity.base_name] = entity.path

    edges: set[tuple[str, str]] = set()
    for entity in entities:
        family = language_family_of(entity.path)
        if family == "unknown":
            continue
        try:
            raw = scan.read_text(entity)
        except OSError as exc:
            log.warning("skipping dependency scan of %s: %s", entity.path, exc)
            continue
        no_comments, no_strings = mask_c_family(raw)
        if entity.path.endswith(".java"):
            targets = _java_refs(no_strings, entity, by_dotted, siblings)
        else:
            # include directives quote their target, so strings must survive
            targets = _include_refs(no_comments, entity, by_path)
        edges.update((entity.path, t) for t in targets if t != entity.path)

    return build_graph(nodes, edges)


def render_dep_lines(graph: DepGraph) -> str:
    """Canonical dependency list: one `from<TAB>to` line per edge, sorted."""
    return "".join(f"{a}\t{b}\n" for a, b in graph.edges)


def parse_dep_lines(text: str, nodes: list[str] | None = None) -> DepGraph:
    edges: set[tuple[str, str]] = set()
    seen: set[str] = set(nodes or ())
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DepsError(f"dependency file line {lineno}: expected `from<TAB>to`, got {line!r}")
        edges.add((parts[0], parts[1]))
        seen.update(parts)
    return build_graph(sorted(seen), edges)
