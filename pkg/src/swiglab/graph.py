"""Causal DAGs, single-world intervention graphs and d-separation.

Graphs are immutable. Nodes are addressed by their rendered label, e.g.
``"Y^{s=1,z}"`` for the outcome downstream of the joint intervention on S and
Z, ``"s=1"`` / ``"z"`` for the fixed halves of split nodes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple

import networkx as nx

__all__ = [
    "NodeKind",
    "GraphKind",
    "NodeId",
    "ContextDrop",
    "CausalGraph",
    "DSepQuery",
    "GraphError",
    "CycleDetected",
    "DuplicateNode",
    "DanglingEdge",
    "NotADag",
    "UnknownNode",
    "InterveneOnUnmeasured",
    "InvalidQuery",
    "build_graph",
    "split_intervene",
    "restrict_to_context",
    "d_separated",
    "separated",
    "open_paths",
    "format_path",
    "format_graph",
    "parse_graph",
    "to_dot",
    "fixed_label",
    "parse_label",
]


class GraphError(ValueError):
    """Base class for graph construction and query errors."""


class CycleDetected(GraphError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("cycle detected: " + " -> ".join(cycle + cycle[:1]))


class DuplicateNode(GraphError):
    pass


class DanglingEdge(GraphError):
    pass


class NotADag(GraphError):
    pass


class UnknownNode(GraphError, LookupError):
    pass


class InterveneOnUnmeasured(GraphError):
    pass


class InvalidQuery(GraphError):
    pass


class NodeKind(str, enum.Enum):
    MEASURED = "node"
    UNMEASURED = "unmeasured"
    FIXED = "fixed"


class GraphKind(str, enum.Enum):
    DAG = "dag"
    SWIG = "swig"


def fixed_label(name: str, value: str) -> str:
    """Render an intervention ``(name, value)`` the way fixed nodes are drawn.

    >>> fixed_label("S", "1"), fixed_label("Z", "z")
    ('s=1', 'z')
    """
    low = name.lower()
    return low if value == low else f"{low}={value}"


def _parse_fixed_item(text: str) -> tuple[str, str]:
    text = text.strip()
    if "=" in text:
        name, value = text.split("=", 1)
        return name.strip().upper(), value.strip()
    return text.upper(), text


@dataclass(frozen=True)
class NodeId:
    name: str
    kind: NodeKind = NodeKind.MEASURED
    tag: tuple[tuple[str, str], ...] = ()
    value: str | None = None

    def __post_init__(self):
        if self.kind is NodeKind.FIXED and self.value is None:
            raise GraphError(f"fixed node {self.name!r} needs a value label")
        if self.kind is not NodeKind.FIXED and self.value is not None:
            raise GraphError(f"only fixed nodes carry a value ({self.name!r})")

    @property
    def label(self) -> str:
        if self.kind is NodeKind.FIXED:
            return fixed_label(self.name, self.value)
        if self.tag:
            inner = ",".join(fixed_label(n, v) for n, v in self.tag)
            return f"{self.name}^{{{inner}}}"
        return self.name


def parse_label(label: str, kind: NodeKind = NodeKind.MEASURED) -> NodeId:
    """Inverse of :attr:`NodeId.label`."""
    label = label.strip()
    if kind is NodeKind.FIXED:
        name, value = _parse_fixed_item(label)
        return NodeId(name, kind, value=value)
    if "^" in label:
        name, rest = label.split("^", 1)
        if not (rest.startswith("{") and rest.endswith("}")):
            raise GraphError(f"malformed counterfactual label {label!r}")
        items = tuple(_parse_fixed_item(t) for t in rest[1:-1].split(",") if t.strip())
        return NodeId(name, kind, tag=items)
    return NodeId(label, kind)


class ContextDrop(NamedTuple):
    """Edge ``parent -> child`` that is inactive once ``gate`` is set to ``value``."""

    parent: str
    child: str
    gate: str
    value: str


@dataclass(frozen=True)
class CausalGraph:
    """A validated DAG or SWIG.

    ``copies`` lists ``(source, target)`` pairs where target is a deterministic
    copy of source (perfect adherence). ``drops`` lists context-specific edges
    removed when their gate node is intervened on (or conditioned) at a value.
    """

    nodes: tuple[NodeId, ...]
    edges: tuple[tuple[str, str], ...]
    kind: GraphKind = GraphKind.DAG
    copies: tuple[tuple[str, str], ...] = ()
    drops: tuple[ContextDrop, ...] = field(default=())

    def __post_init__(self):
        labels = [n.label for n in self.nodes]
        seen: set[str] = set()
        for lab in labels:
            if lab in seen:
                raise DuplicateNode(f"duplicate node {lab!r}")
            seen.add(lab)
        for p, c in self.edges:
            for end in (p, c):
                if end not in seen:
                    raise DanglingEdge(f"edge {p} -> {c} references undeclared node {end!r}")
        if len(set(self.edges)) != len(self.edges):
            raise GraphError("duplicate edge")
        g = nx.DiGraph()
        g.add_nodes_from(labels)
        g.add_edges_from(self.edges)
        try:
            cyc = nx.find_cycle(g)
        except nx.NetworkXNoCycle:
            cyc = None
        if cyc:
            raise CycleDetected([u for u, _ in cyc])
        fixed = [n for n in self.nodes if n.kind is NodeKind.FIXED]
        for n in fixed:
            if g.in_degree(n.label):
                raise GraphError(f"fixed node {n.label!r} has incoming edges")
        if self.kind is GraphKind.DAG and fixed:
            raise GraphError("a DAG cannot contain fixed intervention nodes")
        if self.kind is GraphKind.SWIG and not fixed:
            raise GraphError("a SWIG needs at least one fixed intervention node")
        tagged = [n.label for n in self.nodes if n.tag]
        if tagged:
            downstream: set[str] = set()
            for n in fixed:
                downstream |= nx.descendants(g, n.label)
            stray = [t for t in tagged if t not in downstream]
            if stray:
                raise GraphError(f"counterfactual tags outside any intervention's descendants: {stray}")
        edge_set = set(self.edges)
        for src, dst in self.copies:
            if (src, dst) not in edge_set:
                raise GraphError(f"copy {src} {dst} has no matching edge")
        for d in self.drops:
            if (d.parent, d.child) not in edge_set:
                raise GraphError(f"drop {d.parent} -> {d.child} has no matching edge")
            if d.gate not in seen:
                raise DanglingEdge(f"drop gate {d.gate!r} is not a node")

    # -- structure -------------------------------------------------------
    @cached_property
    def nx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(n.label for n in self.nodes)
        g.add_edges_from(self.edges)
        return g

    @cached_property
    def _by_label(self) -> dict[str, NodeId]:
        return {n.label: n for n in self.nodes}

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(n.label for n in self.nodes)

    def __contains__(self, label: object) -> bool:
        return label in self._by_label

    def node(self, label: str) -> NodeId:
        try:
            return self._by_label[label]
        except KeyError:
            raise UnknownNode(f"unknown node {label!r}") from None

    def parents(self, label: str) -> tuple[str, ...]:
        return tuple(self.nx.predecessors(label))

    def children(self, label: str) -> tuple[str, ...]:
        return tuple(self.nx.successors(label))

    def descendants(self, label: str) -> set[str]:
        return nx.descendants(self.nx, label)

    def ancestors(self, label: str) -> set[str]:
        return nx.ancestors(self.nx, label)

    def topological_order(self) -> list[str]:
        # ties broken by declaration order so the result is stable
        pos = {lab: i for i, lab in enumerate(self.labels)}
        return list(nx.lexicographical_topological_sort(self.nx, key=pos.__getitem__))

    @cached_property
    def fixed_labels(self) -> frozenset[str]:
        return frozenset(n.label for n in self.nodes if n.kind is NodeKind.FIXED)

    @property
    def determined(self) -> dict[str, str]:
        """Nodes pinned to a constant by a copy of a fixed node (``A^z = z``)."""
        out = {}
        for src, dst in self.copies:
            node = self.node(src)
            if node.kind is NodeKind.FIXED:
                out[dst] = node.value
        return out

    def remove_edges(self, edges: Iterable[tuple[str, str]]) -> "CausalGraph":
        gone = set(edges)
        return CausalGraph(
            self.nodes,
            tuple(e for e in self.edges if e not in gone),
            self.kind,
            tuple(c for c in self.copies if c not in gone),
            tuple(d for d in self.drops if (d.parent, d.child) not in gone),
        )

    def same_structure(self, other: "CausalGraph") -> bool:
        return (
            set(self.nodes) == set(other.nodes)
            and set(self.edges) == set(other.edges)
            and self.kind == other.kind
            and set(self.copies) == set(other.copies)
            and set(self.drops) == set(other.drops)
        )


def build_graph(
    nodes: Iterable[str | NodeId],
    edges: Iterable[tuple[str, str]],
    *,
    unmeasured: Iterable[str] = (),
    copies: Iterable[tuple[str, str]] = (),
    drops: Iterable[tuple[str, str, str, str]] = (),
) -> CausalGraph:
    """Build a validated DAG.

    Raises :class:`DuplicateNode`, :class:`DanglingEdge` or
    :class:`CycleDetected` (whose ``cycle`` attribute lists the nodes).
    """
    latent = set(unmeasured)
    ids = []
    for n in nodes:
        if isinstance(n, NodeId):
            ids.append(n)
        else:
            ids.append(NodeId(n, NodeKind.UNMEASURED if n in latent else NodeKind.MEASURED))
    return CausalGraph(
        tuple(ids),
        tuple((str(p), str(c)) for p, c in edges),
        GraphKind.DAG,
        tuple(tuple(c) for c in copies),
        tuple(ContextDrop(*d) for d in drops),
    )


def split_intervene(g: CausalGraph, interventions: Iterable[tuple[str, str]]) -> CausalGraph:
    """Construct the SWIG for a joint intervention by node splitting.

    Each intervened node keeps its incoming edges on the random half, and a new
    fixed node inherits its outgoing edges. Every node downstream of a fixed
    node is relabelled with the full intervention set (less its own
    intervention, for random halves of intervened nodes). Context drops gated
    on an intervention are applied, so e.g. ``drop U -> Z if S=1`` removes the
    latent cause of ``Z^{s=1}``.
    """
    ivs = [(str(n), str(v)) for n, v in interventions]
    if g.kind is not GraphKind.DAG:
        raise NotADag("split_intervene expects a DAG")
    if not ivs:
        return g
    names = [n for n, _ in ivs]
    if len(set(names)) != len(names):
        raise GraphError(f"node intervened on more than once: {names}")
    for name, _ in ivs:
        kind = g.node(name).kind
        if kind is NodeKind.UNMEASURED:
            raise InterveneOnUnmeasured(f"cannot intervene on unmeasured node {name!r}")
        if g.node(name).tag:
            raise GraphError(f"{name!r} is already a counterfactual")
    order = {lab: i for i, lab in enumerate(g.topological_order())}
    ivs.sort(key=lambda nv: order[nv[0]])
    fixed = {name: NodeId(name, NodeKind.FIXED, value=value) for name, value in ivs}
    active = set(ivs)
    dropped = {(d.parent, d.child) for d in g.drops if (d.gate, d.value) in active}

    def src(label: str) -> str:
        return fixed[label].label if label in fixed else label

    raw_edges = [(src(p), c) for p, c in g.edges if (p, c) not in dropped]
    tmp = nx.DiGraph()
    tmp.add_nodes_from(g.labels)
    tmp.add_nodes_from(f.label for f in fixed.values())
    tmp.add_edges_from(raw_edges)
    downstream: set[str] = set()
    for f in fixed.values():
        downstream |= nx.descendants(tmp, f.label)

    relabel: dict[str, str] = {}
    new_nodes: list[NodeId] = []
    for node in g.nodes:
        if node.label in downstream:
            tag = tuple((n, v) for n, v in ivs if n != node.name)
            new = NodeId(node.name, node.kind, tag=tag)
        else:
            new = node
        relabel[node.label] = new.label
        new_nodes.append(new)
        if node.label in fixed:
            new_nodes.append(fixed[node.label])
    for f in fixed.values():
        relabel[f.label] = f.label

    edges = tuple((relabel[p], relabel[c]) for p, c in raw_edges)
    copies = tuple(
        (relabel[src(s)], relabel[d]) for s, d in g.copies if (s, d) not in dropped
    )
    drops = tuple(
        ContextDrop(relabel[src(d.parent)], relabel[d.child], relabel[d.gate], d.value)
        for d in g.drops
        if (d.parent, d.child) not in dropped and d.gate not in fixed
    )
    return CausalGraph(tuple(new_nodes), edges, GraphKind.SWIG, copies, drops)


def restrict_to_context(g: CausalGraph, gate: str, value: str) -> CausalGraph:
    """Graph for the sub-population where ``gate == value`` (e.g. trial members).

    Edges whose drop rule is gated on this context are removed; the gate stays
    a node and should be conditioned on in every query.
    """
    g.node(gate)
    gone = [(d.parent, d.child) for d in g.drops if d.gate == gate and d.value == str(value)]
    return g.remove_edges(gone)


# -- d-separation -------------------------------------------------------------


@dataclass(frozen=True)
class DSepQuery:
    set_a: frozenset[str]
    set_b: frozenset[str]
    conditioning: frozenset[str] = frozenset()

    @classmethod
    def of(cls, a, b, given=()) -> "DSepQuery":
        def _set(x):
            return frozenset([x]) if isinstance(x, str) else frozenset(x)

        return cls(_set(a), _set(b), _set(given))

    @classmethod
    def parse(cls, text: str) -> "DSepQuery":
        """Parse ``"Y^{s=1,z} _||_ S | X, A^{s=1,z}"`` (commas inside braces kept)."""
        left, sep, right = text.partition("_||_")
        if not sep:
            raise InvalidQuery(f"query needs '_||_': {text!r}")
        right, _, given = right.partition("|")
        q = cls(_split_labels(left), _split_labels(right), _split_labels(given))
        if not q.set_a or not q.set_b:
            raise InvalidQuery(f"empty side in query {text!r}")
        return q

    def validate(self, g: CausalGraph) -> None:
        if not self.set_a or not self.set_b:
            raise InvalidQuery("both query sets must be non-empty")
        for lab in self.set_a | self.set_b | self.conditioning:
            if lab not in g:
                raise InvalidQuery(f"unknown node {lab!r}")
        if (
            self.set_a & self.set_b
            or self.set_a & self.conditioning
            or self.set_b & self.conditioning
        ):
            raise InvalidQuery("query sets must be pairwise disjoint")

    def __str__(self) -> str:
        a = ", ".join(sorted(self.set_a))
        b = ", ".join(sorted(self.set_b))
        s = f"{a} _||_ {b}"
        if self.conditioning:
            s += " | " + ", ".join(sorted(self.conditioning))
        return s


def split_labels(text: str) -> list[str]:
    """Split a comma-separated label list, keeping commas inside braces."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [t.strip() for t in out if t.strip()]


def _split_labels(text: str) -> frozenset[str]:
    return frozenset(split_labels(text))


def _given_closure(g: CausalGraph, given: set[str]) -> set[str]:
    # nodes that are in `given` or have a descendant in it
    out: set[str] = set()
    stack = list(given)
    while stack:
        n = stack.pop()
        if n in out:
            continue
        out.add(n)
        stack.extend(p for p in g.parents(n) if p not in g.fixed_labels)
    return out


def _reachable(g: CausalGraph, sources: Iterable[str], given: set[str]) -> set[str]:
    fixed = g.fixed_labels
    anc = _given_closure(g, given)
    visited: set[tuple[str, bool]] = set()
    reach: set[str] = set()
    # (node, arrived_from_child): True means travelling up against an edge
    stack = [(s, True) for s in sources if s not in fixed]
    while stack:
        n, up = stack.pop()
        if (n, up) in visited:
            continue
        visited.add((n, up))
        if n not in given:
            reach.add(n)
        if up:
            if n in given:
                continue
            stack.extend((p, True) for p in g.parents(n) if p not in fixed)
            stack.extend((c, False) for c in g.children(n))
        else:
            if n not in given:
                stack.extend((c, False) for c in g.children(n))
            if n in anc:
                stack.extend((p, True) for p in g.parents(n) if p not in fixed)
    return reach


def d_separated(g: CausalGraph, q: DSepQuery) -> bool:
    """True iff every path between the two sets is blocked given ``conditioning``.

    Fixed intervention nodes are constants, so no path through them is open.
    """
    q.validate(g)
    fixed = g.fixed_labels
    a = set(q.set_a) - fixed
    b = set(q.set_b) - fixed
    if not a or not b:
        return True
    given = set(q.conditioning) - fixed
    return not (_reachable(g, a, given) & b)


def separated(g: CausalGraph, a, b, given=()) -> bool:
    return d_separated(g, DSepQuery.of(a, b, given))


def open_paths(g: CausalGraph, a: str, b: str, conditioning: Iterable[str] = ()) -> list[tuple[str, ...]]:
    """Every unblocked simple path from ``a`` to ``b``.

    Paths alternate node labels and arrows read left to right, e.g.
    ``("Z", "<-", "U", "->", "Y^{z}")``.
    """
    given = frozenset(conditioning)
    DSepQuery.of(a, b, given).validate(g)
    fixed = g.fixed_labels
    if a in fixed or b in fixed:
        return []
    given = set(given) - fixed
    anc = _given_closure(g, given)
    nbrs: dict[str, list[tuple[str, str]]] = {lab: [] for lab in g.labels}
    for p, c in g.edges:
        if p in fixed or c in fixed:
            continue
        nbrs[p].append((c, "->"))
        nbrs[c].append((p, "<-"))

    found: list[tuple[str, ...]] = []

    def walk(path: list[str], on_path: set[str], last_arrow: str | None):
        here = path[-1]
        for nxt, arrow in nbrs[here]:
            if nxt in on_path:
                continue
            if last_arrow is not None:
                collider = last_arrow == "->" and arrow == "<-"
                if collider and here not in anc:
                    continue
                if not collider and here in given:
                    continue
            if nxt == b:
                found.append(tuple(path + [arrow, nxt]))
                continue
            on_path.add(nxt)
            walk(path + [arrow, nxt], on_path, arrow)
            on_path.discard(nxt)

    walk([a], {a}, None)
    return found


def format_path(path: tuple[str, ...]) -> str:
    return " ".join(path)


# -- interchange --------------------------------------------------------------


def format_graph(g: CausalGraph) -> str:
    """Line-oriented text form; :func:`parse_graph` inverts it exactly."""
    lines = [f"kind {g.kind.value}"]
    lines += [f"{n.kind.value} {n.label}" for n in g.nodes]
    lines += [f"copy {s} {d}" for s, d in g.copies]
    lines += [f"drop {d.parent} -> {d.child} if {d.gate}={d.value}" for d in g.drops]
    lines += [f"{p} -> {c}" for p, c in g.edges]
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> CausalGraph:
    """Parse the text interchange format.

    Recognised lines: ``kind dag|swig``, ``node X``, ``unmeasured U1``,
    ``fixed s=1``, ``copy Z A``, ``drop U -> Z if S=1`` and edges ``A -> B``.
    Nodes first seen in an edge default to measured. ``#`` starts a comment.
    """
    kind = GraphKind.DAG
    nodes: dict[str, NodeId] = {}
    edges: list[tuple[str, str]] = []
    copies: list[tuple[str, str]] = []
    drops: list[ContextDrop] = []

    def declare(label: str, nk: NodeKind, lineno: int):
        if label in nodes:
            raise DuplicateNode(f"line {lineno}: node {label!r} declared twice")
        node = parse_label(label, nk)
        if node.label != label:
            raise GraphError(f"line {lineno}: label {label!r} is not canonical ({node.label!r})")
        nodes[label] = node

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "kind":
            kind = GraphKind(rest)
        elif head in ("node", "unmeasured", "fixed"):
            declare(rest, NodeKind(head), lineno)
        elif head == "copy":
            src, dst = rest.split()
            copies.append((src, dst))
        elif head == "drop":
            edge, sep, gate = rest.partition(" if ")
            if not sep or "->" not in edge or "=" not in gate:
                raise GraphError(f"line {lineno}: malformed drop rule {raw!r}")
            p, c = (t.strip() for t in edge.split("->"))
            gname, gval = (t.strip() for t in gate.split("=", 1))
            drops.append(ContextDrop(p, c, gname, gval))
        elif "->" in line:
            p, c = (t.strip() for t in line.split("->", 1))
            for end in (p, c):
                if end not in nodes:
                    declare(end, NodeKind.MEASURED, lineno)
            edges.append((p, c))
        else:
            raise GraphError(f"line {lineno}: cannot parse {raw!r}")
    return CausalGraph(tuple(nodes.values()), tuple(edges), kind, tuple(copies), tuple(drops))


def to_dot(g: CausalGraph, name: str = "G") -> str:
    """Graphviz DOT rendering for external tools."""
    copy_edges = set(g.copies)
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for n in g.nodes:
        attrs = [f'label="{n.label}"']
        if n.kind is NodeKind.UNMEASURED:
            attrs.append("style=dashed")
        elif n.kind is NodeKind.FIXED:
            attrs.append("shape=box")
        lines.append(f'  "{n.label}" [{", ".join(attrs)}];')
    for p, c in g.edges:
        extra = " [penwidth=3]" if (p, c) in copy_edges else ""
        lines.append(f'  "{p}" -> "{c}"{extra};')
    lines.append("}")
    return "\n".join(lines) + "\n"
