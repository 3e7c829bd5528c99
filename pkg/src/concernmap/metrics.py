"""Clustering distance (MoJo / MojoFM) and recovery-to-recovery diffing.

mno(A, B) is the minimum number of Move and Join operations turning
partition A into partition B. It is computed by assigning each group of A
a maximum-overlap target group of B, with a bipartite matching choosing
which groups keep distinct targets; the count is then
moves (objects outside their group's target) + joins (groups sharing one).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import ConcernMapError
from .recover import UNKNOWN_CLUSTER, RecoveryResult
from .viz import prevailing_by_package


class MetricsError(ConcernMapError):
    """Partition misuse: overlaps, universe mismatch, degenerate sizes."""


@dataclass(frozen=True)
class Partition:
    groups: tuple[frozenset[str], ...]
    universe: frozenset[str]

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[str]]) -> "Partition":
        frozen = tuple(frozenset(g) for g in groups)
        seen: set[str] = set()
        for g in frozen:
            if not g:
                raise MetricsError("partition groups must be non-empty")
            overlap = seen & g
            if overlap:
                raise MetricsError(
                    "partition groups must be disjoint; repeated: "
                    + ", ".join(sorted(overlap))
                )
            seen |= g
        return cls(groups=frozen, universe=frozenset(seen))

    @classmethod
    def from_clusters(cls, clusters: Mapping[str, Iterable[str]]) -> "Partition":
        """Build from a cluster roster, skipping empty clusters."""
        return cls.from_groups(g for g in (set(v) for v in clusters.values()) if g)

    def restrict(self, universe: set[str] | frozenset[str]) -> "Partition":
        """Drop members outside `universe` (and any group left empty)."""
        kept = [g & universe for g in self.groups]
        return Partition.from_groups(g for g in kept if g)


def _max_matching(edges: list[list[int]], n_right: int) -> int:
    """Kuhn's augmenting-path maximum bipartite matching; edges[i] lists
    right-side neighbors of left node i."""
    match_right = [-1] * n_right

    def augment(i: int, seen: list[bool]) -> bool:
        for j in edges[i]:
            if seen[j]:
                continue
            seen[j] = True
            if match_right[j] == -1 or augment(match_right[j], seen):
                match_right[j] = i
                return True
        return False

    matched = 0
    for i in range(len(edges)):
        if augment(i, [False] * n_right):
            matched += 1
    return matched


def mno(a: Partition, b: Partition) -> int:
    """Exact minimum Move/Join operation count transforming a into b.

    Every optimal transformation can be normalized so each group of a sends
    its members toward a single maximum-overlap group of b: switching any
    group to a maximum-overlap target saves at least one Move and costs at
    most one Join. Among those, Moves are fixed at n - sum(max overlaps) and
    Joins are minimized by giving as many groups as possible distinct
    targets, a maximum bipartite matching over the argmax edges.
    """
    if a.universe != b.universe:
        raise MetricsError(
            f"partitions cover different universes ({len(a.universe)} vs {len(b.universe)} members)"
        )
    n = len(a.universe)
    max_overlaps: list[int] = []
    argmax_edges: list[list[int]] = []
    for ga in a.groups:
        overlaps = [len(ga & gb) for gb in b.groups]
        top = max(overlaps)
        max_overlaps.append(top)
        argmax_edges.append([j for j, o in enumerate(overlaps) if o == top])
    matched = _max_matching(argmax_edges, len(b.groups))
    moves = n - sum(max_overlaps)
    joins = len(a.groups) - matched
    return moves + joins


def max_mno(b: Partition) -> int:
    """Maximum of mno(a, b) over every partition a of the universe.

    Closed form: with group sizes g1 >= ... >= gm (and g_{m+1} = 0),
    max = n - min_k (k + g_{k+1}). The adversary's best start is one big
    group plus singletons; the defender either joins into the k largest
    target groups or moves, whichever is cheaper. Verified against
    exhaustive enumeration for every target shape with n <= 8.
    """
    n = len(b.universe)
    if n < 2:
        raise MetricsError("max_mno needs at least 2 members, got " + str(n))
    sizes = sorted((len(g) for g in b.groups), reverse=True)
    m = len(sizes)
    cheapest = min(k + (sizes[k] if k < m else 0) for k in range(m + 1))
    return n - cheapest


def mojofm(a: Partition, b: Partition) -> float:
    """(1 - mno/max_mno) * 100: 100 means identical, 0 maximally distant."""
    distance = mno(a, b)
    return (1.0 - distance / max_mno(b)) * 100.0


def mojofm_with_coverage(a: Partition, b: Partition) -> tuple[float, list[str]]:
    """MojoFM on the shared universe; members on one side only are dropped
    from both with a coverage warning. An empty intersection is an error."""
    warnings: list[str] = []
    common = a.universe & b.universe
    if not common:
        raise MetricsError("the clustering and the ground truth share no entities")
    dropped = len(a.universe - common) + len(b.universe - common)
    if dropped:
        warnings.append(
            f"coverage: dropped {len(a.universe - common)} clustered / "
            f"{len(b.universe - common)} ground-truth entities outside the shared universe"
        )
        a = a.restrict(common)
        b = b.restrict(common)
    return mojofm(a, b), warnings


def parse_roster(text: str) -> dict[str, list[str]]:
    """Parse `cluster<TAB>path` lines into a roster; `#` lines are comments."""
    clusters: dict[str, list[str]] = {}
    seen: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MetricsError(
                f"roster line {lineno}: expected `cluster<TAB>path`, got {line!r}"
            )
        cluster, path = parts
        if path in seen and seen[path] != cluster:
            raise MetricsError(
                f"roster line {lineno}: {path} assigned to both {seen[path]} and {cluster}"
            )
        seen[path] = cluster
        clusters.setdefault(cluster, []).append(path)
    return clusters


# --- version-to-version diff -------------------------------------------------

@dataclass
class DiffReport:
    added: list[str]
    removed: list[str]
    concern_changes: list[tuple[str, str, str]]          # path, old, new
    cluster_deltas: list[tuple[str, int, int]]           # cluster, old size, new size
    package_changes: list[tuple[str, str, str]]          # package, old, new
    warnings: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (
            self.added or self.removed or self.concern_changes
            or self.cluster_deltas or self.package_changes
        )

    def render(self) -> str:
        lines: list[str] = []
        for warning in self.warnings:
            lines.append(f"# warning: {warning}")
        for path in self.added:
            lines.append(f"added\t{path}")
        for path in self.removed:
            lines.append(f"removed\t{path}")
        for path, old, new in self.concern_changes:
            lines.append(f"concern\t{path}\t{old}\t{new}")
        for cluster, old_size, new_size in self.cluster_deltas:
            lines.append(f"cluster\t{cluster}\t{old_size}\t{new_size}\t{new_size - old_size:+d}")
        for package, old, new in self.package_changes:
            lines.append(f"package\t{package}\t{old}\t{new}")
        return "".join(line + "\n" for line in lines)


def diff_recoveries(r_old: RecoveryResult, r_new: RecoveryResult) -> DiffReport:
    """What changed between two recoveries: entities, concerns, clusters,
    and per-package prevailing concerns."""
    warnings: list[str] = []
    if r_old.classifier_fingerprint != r_new.classifier_fingerprint:
        warnings.append("results come from different classifiers; diff may reflect model drift")

    old_records = r_old.record_by_path()
    new_records = r_new.record_by_path()
    added = sorted(set(new_records) - set(old_records))
    removed = sorted(set(old_records) - set(new_records))
    concern_changes = [
        (path, old_records[path].main_concern, new_records[path].main_concern)
        for path in sorted(set(old_records) & set(new_records))
        if old_records[path].main_concern != new_records[path].main_concern
    ]

    cluster_order = [*r_new.concerns, UNKNOWN_CLUSTER]
    for name in [*r_old.concerns, UNKNOWN_CLUSTER]:
        if name not in cluster_order:
            cluster_order.append(name)
    cluster_deltas = []
    for name in cluster_order:
        old_size = len(r_old.clusters.get(name, []))
        new_size = len(r_new.clusters.get(name, []))
        if old_size != new_size:
            cluster_deltas.append((name, old_size, new_size))

    measure = r_new.config.weight_measure
    old_prevailing = prevailing_by_package(r_old, measure)
    new_prevailing = prevailing_by_package(r_new, measure)
    package_changes = [
        (pkg, old_prevailing[pkg], new_prevailing[pkg])
        for pkg in sorted(set(old_prevailing) & set(new_prevailing))
        if old_prevailing[pkg] != new_prevailing[pkg]
    ]

    return DiffReport(
        added=added,
        removed=removed,
        concern_changes=concern_changes,
        cluster_deltas=cluster_deltas,
        package_changes=package_changes,
        warnings=warnings,
    )
