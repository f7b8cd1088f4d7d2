"""Turns, gates and Whitehead graphs of topological representatives."""
from dataclasses import dataclass
import logging
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

import networkx as nx
from networkx.utils import UnionFind

from reltrack.freegroup import FreeFactorSystem, base_letter, ffs_partial_order, inverse_letter, lexical_key
from reltrack.graphmap import (
    GraphMapRep,
    Path,
    apply_map,
    direction_map,
    gate_key,
    realized_ffs,
    transition_matrix,
)

logger = logging.getLogger(__name__)

V_A = "v_A"


@dataclass(frozen=True)
class Turn:
    """An unordered pair of directions at a common vertex."""
    first: str
    second: str

    def __post_init__(self):
        if lexical_key(self.second) < lexical_key(self.first):
            first, second = self.second, self.first
            object.__setattr__(self, "first", first)
            object.__setattr__(self, "second", second)

    @property
    def degenerate(self) -> bool:
        return self.first == self.second

    def __iter__(self):
        return iter((self.first, self.second))

    def __str__(self) -> str:
        return f"{{{self.first}, {self.second}}}"


def turns_in(path: Path) -> List[Turn]:
    """Turns crossed between consecutive edges (never across a vertex group element)."""
    turns = []
    for a, b in zip(path, path[1:]):
        if isinstance(a, str) and isinstance(b, str):
            turns.append(Turn(inverse_letter(a), b))
    return turns


def taken_turns(rep: GraphMapRep) -> FrozenSet[Turn]:
    """Turns inside edge images, closed under the direction map."""
    dmap = direction_map(rep)
    turns: Set[Turn] = set()
    queue = [t for e in rep.graph.edges for t in turns_in(rep.edge_images[e])]
    while queue:
        turn = queue.pop()
        if turn in turns or turn.degenerate:
            continue
        turns.add(turn)
        queue.append(Turn(dmap[turn.first], dmap[turn.second]))
    return frozenset(turns)


@dataclass(frozen=True)
class WhiteheadGraph:
    vertex: str
    nodes: Tuple[str, ...]
    edges: Tuple[Tuple[str, str], ...]

    def __post_init__(self):
        for u, v in self.edges:
            if u not in self.nodes or v not in self.nodes:
                raise ValueError(f"Whitehead edge ({u}, {v}) leaves the vertex set")

    @property
    def relative(self) -> bool:
        return V_A in self.nodes

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def to_dot(self) -> str:
        lines = [f'graph "whitehead_{self.vertex}" {{']
        for v in self.nodes:
            shape = "doublecircle" if v == V_A else "circle"
            lines.append(f'  "{v}" [shape={shape}];')
        for u, v in self.edges:
            lines.append(f'  "{u}" -- "{v}";')
        lines.append("}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"vertex": self.vertex, "nodes": list(self.nodes), "edges": [list(e) for e in self.edges]}


def _graph_from_turns(vertex: str, nodes: List[str], turns, rename=None) -> WhiteheadGraph:
    rename = rename or (lambda d: d)
    position = {v: i for i, v in enumerate(nodes)}
    edges = set()
    for turn in turns:
        u, v = rename(turn.first), rename(turn.second)
        if u == v or u not in position or v not in position:
            continue
        edges.add((u, v) if position[u] < position[v] else (v, u))
    return WhiteheadGraph(vertex, tuple(nodes), tuple(sorted(edges, key=lambda e: (position[e[0]], position[e[1]]))))


def whitehead_graph(rep: GraphMapRep, vertex: str) -> WhiteheadGraph:
    if vertex not in rep.graph.vertices:
        raise ValueError(f"Unknown vertex '{vertex}'")
    nodes = list(rep.graph.directions(vertex))
    return _graph_from_turns(vertex, nodes, taken_turns(rep))


def relative_whitehead_graph(collapsed_rep: GraphMapRep, original_rep: GraphMapRep, vertex: str) -> WhiteheadGraph:
    """Whitehead graph at a vertex of the collapse.

    At a vertex with a non-trivial group the graph is read off the original
    representative at every preimage, with all collapsed directions
    identified to the single node ``v_A``.
    """
    if collapsed_rep is original_rep:
        return whitehead_graph(original_rep, vertex)
    if collapsed_rep.parent is not original_rep:
        raise ValueError("The collapsed representative does not come from the given representative")
    if vertex not in collapsed_rep.graph.vertices:
        raise ValueError(f"Unknown vertex '{vertex}'")
    if not collapsed_rep.graph.vertex_groups.get(vertex):
        return whitehead_graph(collapsed_rep, vertex)

    K = collapsed_rep.collapsed
    graph = original_rep.graph
    preimages = [v for v in graph.vertices if collapsed_rep.vertex_collapse[v] == vertex]

    def rename(d):
        return V_A if base_letter(d) in K else d

    directions = sorted((d for v in preimages for d in graph.directions(v)), key=graph.direction_key)
    nodes = [d for d in directions if rename(d) != V_A]
    if len(nodes) < len(directions):
        nodes.append(V_A)
    return _graph_from_turns(vertex, nodes, taken_turns(original_rep), rename)


@dataclass
class ConnectivityReport:
    connected: bool
    components: List[List[str]]

    def to_dict(self) -> dict:
        return {"connected": self.connected, "components": self.components}


def connectivity_report(g: WhiteheadGraph) -> ConnectivityReport:
    uf = UnionFind(g.nodes)
    for u, v in g.edges:
        uf.union(u, v)
    position = {v: i for i, v in enumerate(g.nodes)}
    components = [sorted(s, key=position.get) for s in uf.to_sets()]
    components.sort(key=lambda c: position[c[0]])
    return ConnectivityReport(len(components) <= 1, components)


def gates(rep: GraphMapRep, vertex: str) -> List[List[str]]:
    """Gates at a vertex: the components of its Whitehead graph."""
    return connectivity_report(whitehead_graph(rep, vertex)).components


def direction_classes(rep: GraphMapRep, vertex: str) -> List[List[str]]:
    """Directions at a vertex grouped by their eventual image under Dφ."""
    keys = gate_key(rep)
    classes: Dict[str, List[str]] = {}
    for d in rep.graph.directions(vertex):
        classes.setdefault(keys[d], []).append(d)
    return list(classes.values())


def gate_divergence(rep: GraphMapRep, vertex: str) -> List[Turn]:
    """Illegal turns whose directions lie in different gates."""
    component = {}
    for i, gate in enumerate(gates(rep, vertex)):
        for d in gate:
            component[d] = i
    divergent = []
    for cls in direction_classes(rep, vertex):
        for d in cls[1:]:
            if component[d] != component[cls[0]]:
                divergent.append(Turn(cls[0], d))
    if divergent:
        logger.warning(f"Gates at {vertex} split {len(divergent)} illegal turns")
    return divergent


@dataclass
class IrreducibilityCertificate:
    realized_lower_equals_A: bool
    top_matrix_primitive: bool
    relative_wh_connected_everywhere: bool
    witness: Optional[str] = None

    @property
    def certified(self) -> bool:
        return self.realized_lower_equals_A and self.top_matrix_primitive and self.relative_wh_connected_everywhere

    @property
    def verdict(self) -> str:
        return "certified_necessary_conditions" if self.certified else "failed"

    def to_dict(self) -> dict:
        return {
            "realized_lower_equals_A": self.realized_lower_equals_A,
            "top_matrix_primitive": self.top_matrix_primitive,
            "relative_wh_connected_everywhere": self.relative_wh_connected_everywhere,
            "verdict": self.verdict,
            "witness": self.witness,
        }


def irreducibility_certificate(collapsed_rep: GraphMapRep, original_rep: GraphMapRep,
                               A: FreeFactorSystem) -> IrreducibilityCertificate:
    """Necessary conditions for full irreducibility relative to A; never a proof of it."""
    witnesses = []
    lower = realized_ffs(original_rep.graph, original_rep.lower(original_rep.top))
    lower_ok = ffs_partial_order(lower, A) == "equal"
    if not lower_ok:
        witnesses.append(f"lower filtration realizes {lower.describe()}, A is {A.describe()}")

    top = transition_matrix(original_rep, original_rep.top)
    primitive = top.matrix_class == "primitive"
    if not primitive:
        witnesses.append(f"top stratum matrix is {top.matrix_class}")

    connected = True
    for v in collapsed_rep.graph.vertices:
        report = connectivity_report(relative_whitehead_graph(collapsed_rep, original_rep, v))
        if not report.connected:
            connected = False
            witnesses.append(f"Whitehead graph at {v} has components {report.components}")
            break
    return IrreducibilityCertificate(lower_ok, primitive, connected, witnesses[0] if witnesses else None)


def eigenray_prefix(rep: GraphMapRep, direction: str, length: int) -> Path:
    """First ``length`` tokens of the ray grown from a Dφ-periodic direction."""
    if length < 1:
        raise ValueError("Eigenray prefixes have positive length")
    rep.graph.check_edge(direction)
    dmap = direction_map(rep)
    orbit = [direction]
    x = direction
    for k in range(1, len(dmap) + 1):
        x = dmap[x]
        if x == direction:
            break
        orbit.append(x)
    else:
        raise ValueError(f"Direction '{direction}' is not fixed by any power of Dφ; orbit {' -> '.join(orbit)}")
    path: Path = (direction,)
    while len(path) < length:
        grown = apply_map(rep, path, power=k)
        if len(grown) <= len(path):
            raise ValueError(f"Iterates of '{direction}' stop growing at length {len(path)}")
        path = grown
    return path[:length]


def leaf_classes_at_vertex(rep: GraphMapRep, vertex: str,
                           original_rep: Optional[GraphMapRep] = None) -> List[List[str]]:
    """Germs of leaf classes at a vertex; pass ``original_rep`` for a collapsed representative."""
    if original_rep is None:
        g = whitehead_graph(rep, vertex)
    else:
        g = relative_whitehead_graph(rep, original_rep, vertex)
    return connectivity_report(g).components
