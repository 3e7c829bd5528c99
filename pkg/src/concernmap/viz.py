"""Directory-tree visualization of a recovery result in DOT format.

Packages are inner nodes, entities leaves. Every package carries per-concern
weight sums over its leaf descendants; the heaviest concern prevails and
colors the node and its outgoing edges. Detail mode adds per-entity boxes
with size and dependency rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ConcernMapError
from .deps import DepGraph, fan
from .recover import UNKNOWN_CLUSTER, EntityRecord, RecoveryResult

# 12-class qualitative scheme (ColorBrewer "Paired"): adjacent entries stay
# distinguishable, which is what concern maps need most.
QUALITATIVE_PALETTE = (
    "#a6cee3", "#1f78b4", "#b2df8a", "#33a02c", "#fb9a99", "#e31a1c",
    "#fdbf6f", "#ff7f00", "#cab2d6", "#6a3d9a", "#ffff99", "#b15928",
)
UNKNOWN_COLOR = "#808080"
ROOT_LABEL = "(root)"


class VizError(ConcernMapError):
    """Visualization misuse: palette overflow, missing inputs."""


@dataclass
class PackageNode:
    name: str
    path: tuple[str, ...]
    subpackages: list["PackageNode"] = field(default_factory=list)
    leaves: list[EntityRecord] = field(default_factory=list)
    weights: dict[str, int] = field(default_factory=dict)
    prevailing: str = UNKNOWN_CLUSTER

    def total_weight(self) -> int:
        return sum(self.weights.values())


@dataclass
class DirTree:
    concerns: list[str]
    weight_measure: str
    root: PackageNode


def build_tree(result: RecoveryResult, weight_measure: str = "bytes") -> DirTree:
    """Package tree with bottom-up per-concern weight aggregation.

    Weights aggregate per concern across ALL leaf descendants, so a parent's
    vector is exactly the sum of its children's vectors (minority concerns
    inside a subpackage are not absorbed by its prevailing one).
    """
    cluster_names = [*result.concerns, UNKNOWN_CLUSTER]
    root = PackageNode(name=ROOT_LABEL, path=())
    nodes: dict[tuple[str, ...], PackageNode] = {(): root}

    for record in result.records:
        parts = record.entity.package
        for depth in range(len(parts)):
            prefix = parts[: depth + 1]
            if prefix not in nodes:
                node = PackageNode(name=prefix[-1], path=prefix)
                nodes[prefix] = node
                nodes[prefix[:-1]].subpackages.append(node)
        nodes[parts].leaves.append(record)

    def settle(node: PackageNode) -> dict[str, int]:
        weights = {name: 0 for name in cluster_names}
        node.subpackages.sort(key=lambda n: n.name)
        for leaf in node.leaves:
            weights[leaf.main_concern] += leaf.weight(weight_measure)
        for sub in node.subpackages:
            for name, w in settle(sub).items():
                weights[name] += w
        node.weights = weights
        node.prevailing = prevailing_of(weights, cluster_names)
        return weights

    settle(root)
    return DirTree(concerns=list(result.concerns), weight_measure=weight_measure, root=root)


def prevailing_of(weights: dict[str, int], cluster_names: list[str]) -> str:
    """Heaviest cluster; ties break toward the earlier name, zero -> Unknown."""
    best = UNKNOWN_CLUSTER
    best_w = 0
    for name in cluster_names:
        w = weights.get(name, 0)
        if w > best_w:
            best, best_w = name, w
    return best


def prevailing_by_package(result: RecoveryResult, weight_measure: str = "bytes") -> dict[str, str]:
    """Package path ("a/b", root = "(root)") -> prevailing concern."""
    tree = build_tree(result, weight_measure)
    out: dict[str, str] = {}

    def walk(node: PackageNode) -> None:
        key = "/".join(node.path) if node.path else ROOT_LABEL
        out[key] = node.prevailing
        for sub in node.subpackages:
            walk(sub)

    walk(tree.root)
    return out


@dataclass
class Palette:
    colors: dict[str, str]

    def color(self, cluster: str) -> str:
        try:
            return self.colors[cluster]
        except KeyError:
            raise VizError(f"no color assigned for cluster {cluster!r}") from None


def assign_palette(concerns: list[str], user_colors: dict[str, str] | None = None) -> Palette:
    """Deterministic concern -> color mapping; Unknown is always mid-gray."""
    if user_colors is not None:
        missing = [c for c in concerns if c not in user_colors]
        if missing:
            raise VizError("user palette is missing colors for: " + ", ".join(missing))
        colors = {c: user_colors[c] for c in concerns}
    else:
        if len(concerns) > len(QUALITATIVE_PALETTE):
            raise VizError(
                f"{len(concerns)} concerns exceed the bundled {len(QUALITATIVE_PALETTE)}-color "
                "palette; supply an explicit palette file"
            )
        colors = {c: QUALITATIVE_PALETTE[i] for i, c in enumerate(concerns)}
    values = list(colors.values())
    if len(set(values)) != len(values):
        raise VizError("palette colors must be pairwise distinct")
    colors[UNKNOWN_CLUSTER] = UNKNOWN_COLOR
    return Palette(colors=colors)


@dataclass
class DotOptions:
    width: float | None = None
    height: float | None = None
    detail: bool = False


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _html_escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def _detail_label(
    record: EntityRecord,
    palette: Palette,
    graph: DepGraph,
    concern_of: dict[str, str],
) -> str:
    own_color = palette.color(record.main_concern)
    name = record.entity.path.rsplit("/", 1)[-1]
    outgoing, incoming = fan(graph, record.entity.path)

    def dep_row(paths: list[str]) -> str:
        if not paths:
            return "<TR><TD></TD></TR>"
        cells = "".join(
            f'<TD BGCOLOR="{palette.color(concern_of.get(p, UNKNOWN_CLUSTER))}">'
            f"{_html_escape(p.rsplit('/', 1)[-1])}</TD>"
            for p in paths
        )
        return f"<TR>{cells}</TR>"

    rows = [
        f"<TR><TD>{_html_escape(name)}</TD></TR>",
        f'<TR><TD BGCOLOR="{own_color}">{record.entity.byte_size} B, '
        f"{record.entity.logical_sloc} SLOC</TD></TR>",
        dep_row(outgoing),
        dep_row(incoming),
    ]
    return (
        '<<TABLE BORDER="0" CELLBORDER="1" CELLSPACING="0">' + "".join(rows) + "</TABLE>>"
    )


def emit_dot(
    tree: DirTree,
    palette: Palette,
    graph: DepGraph | None = None,
    options: DotOptions | None = None,
) -> str:
    """Render the tree as DOT text: deterministic, parseable, legend included."""
    options = options or DotOptions()
    if options.detail and graph is None:
        raise VizError("detail mode needs a dependency graph")

    concern_of: dict[str, str] = {}

    def collect(node: PackageNode) -> None:
        for leaf in node.leaves:
            concern_of[leaf.entity.path] = leaf.main_concern
        for sub in node.subpackages:
            collect(sub)

    collect(tree.root)

    lines: list[str] = ["digraph concernmap {"]
    if options.width is not None and options.height is not None:
        lines.append(f'  size="{options.width},{options.height}";')
    elif options.width is not None:
        lines.append(f'  size="{options.width}";')
    elif options.height is not None:
        lines.append(f'  size="{options.height}";')
    lines.append("  rankdir=TB;")
    lines.append('  node [shape=box, style=filled, fontname="Helvetica"];')

    counter = 0

    def next_id() -> str:
        nonlocal counter
        counter += 1
        return f"n{counter}"

    def emit_node(node: PackageNode, node_id: str) -> None:
        color = palette.color(node.prevailing)
        lines.append(f"  {node_id} [label={_quote(node.name)}, fillcolor={_quote(color)}];")
        for sub in node.subpackages:
            sub_id = next_id()
            emit_node(sub, sub_id)
            lines.append(f"  {node_id} -> {sub_id} [color={_quote(color)}];")
        for leaf in sorted(node.leaves, key=lambda r: r.entity.path):
            leaf_id = next_id()
            if options.detail:
                assert graph is not None
                label = _detail_label(leaf, palette, graph, concern_of)
                lines.append(f"  {leaf_id} [shape=plaintext, style=solid, label={label}];")
            else:
                leaf_color = palette.color(leaf.main_concern)
                leaf_name = leaf.entity.path.rsplit("/", 1)[-1]
                lines.append(
                    f"  {leaf_id} [label={_quote(leaf_name)}, fillcolor={_quote(leaf_color)}];"
                )
            lines.append(f"  {node_id} -> {leaf_id} [color={_quote(color)}];")

    if tree.root.subpackages or tree.root.leaves:
        emit_node(tree.root, next_id())

    lines.append("  subgraph cluster_legend {")
    lines.append('    label="Legend";')
    for i, name in enumerate([*tree.concerns, UNKNOWN_CLUSTER]):
        lines.append(
            f"    legend{i} [label={_quote(name)}, fillcolor={_quote(palette.color(name))}];"
        )
    lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
