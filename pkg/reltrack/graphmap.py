"""Marked graphs, topological representatives and relative train track checks.

Paths are tuples of tokens. An edge token is a signed edge name (``e`` or
``e'``); on graphs with vertex groups a :class:`GroupElement` token records
an element of the group at the vertex the path is passing through.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
import logging
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from reltrack.freegroup import (
    Automorphism,
    FreeFactorSystem,
    RelativeBasis,
    Word,
    _Folder,
    base_letter,
    core_graph,
    ffs_partial_order,
    fold_marking,
    inverse_letter,
    is_inverse,
)

logger = logging.getLogger(__name__)


class MapOverflow(OverflowError):
    def __init__(self, cap: int):
        super().__init__(f"Path length exceeds the cap {cap}")
        self.cap = cap


@dataclass(frozen=True)
class GroupElement:
    """An element of the vertex group at ``vertex``, met by a path."""
    vertex: str
    word: Word

    def inverse(self) -> "GroupElement":
        return GroupElement(self.vertex, self.word.inverse())

    def __str__(self) -> str:
        return f"[{self.word}]"


Token = Union[str, GroupElement]
Path = Tuple[Token, ...]


def inverse_token(token: Token) -> Token:
    return token.inverse() if isinstance(token, GroupElement) else inverse_letter(token)

def invert_path(path: Sequence[Token]) -> Path:
    return tuple(inverse_token(t) for t in reversed(path))

def edge_tokens(path: Iterable[Token]) -> List[str]:
    return [t for t in path if isinstance(t, str)]

def format_path(path: Iterable[Token]) -> str:
    return " ".join(str(t) for t in path)

def as_path(path: Union[str, Sequence[Token]]) -> Path:
    if isinstance(path, str):
        return tuple(path.split())
    return tuple(path)


@dataclass(frozen=True)
class MarkedGraph:
    """A graph with a marking by the rose on ``basis``.

    ``edges`` maps each edge name to its (origin, terminus) in declaration
    order; ``marking`` sends each basis letter to a loop at ``base``.
    ``edge_labels`` is the inverse marking (the basis word each edge
    carries); it is folded from the marking unless supplied.
    """
    basis: RelativeBasis
    vertices: Tuple[str, ...]
    edges: Mapping[str, Tuple[str, str]]
    marking: Mapping[str, Path]
    base: str
    vertex_groups: Mapping[str, Tuple[Word, ...]] = field(default_factory=dict)
    edge_labels: Optional[Mapping[str, Word]] = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "marking", {x: as_path(p) for x, p in self.marking.items()})
        for name, (o, t) in self.edges.items():
            if "'" in name:
                raise ValueError(f"Invalid edge name '{name}'")
            for v in (o, t):
                if v not in self.vertices:
                    raise ValueError(f"Edge '{name}' uses unknown vertex '{v}'")
        if self.base not in self.vertices:
            raise ValueError(f"Unknown base vertex '{self.base}'")
        for v in self.vertices:
            if len(self.directions(v)) < 2 and not self.vertex_groups.get(v):
                raise ValueError(f"Vertex '{v}' has valence {len(self.directions(v))}")
        if set(self.marking) != set(self.basis.letters):
            raise ValueError("Marking must send every basis letter to a loop")
        group_rank = sum(core_graph(gens).rank for gens in self.vertex_groups.values())
        if self.rank + group_rank != self.basis.rank:
            raise ValueError(
                f"Graph rank {self.rank} plus vertex group rank {group_rank} is not the ambient rank {self.basis.rank}")
        for x, path in self.marking.items():
            if tighten(path, self) != path:
                raise ValueError(f"Marking of '{x}' is not tightened")
        if self.edge_labels is None:
            if self.vertex_groups:
                raise ValueError("Graphs with vertex groups need explicit edge labels")
            labels = fold_marking(self.edges, {x: tuple(p) for x, p in self.marking.items()}, self.base)
            object.__setattr__(self, "edge_labels", labels)

    @classmethod
    def rose(cls, basis: RelativeBasis, vertex: str = "v") -> "MarkedGraph":
        return cls(
            basis,
            (vertex,),
            {x: (vertex, vertex) for x in basis.letters},
            {x: (x,) for x in basis.letters},
            vertex,
        )

    @property
    def rank(self) -> int:
        return len(self.edges) - len(self.vertices) + 1

    @cached_property
    def _edge_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.edges)}

    def check_edge(self, d: str) -> None:
        if base_letter(d) not in self.edges:
            raise ValueError(f"Unknown edge '{d}'")

    def origin(self, d: str) -> str:
        self.check_edge(d)
        o, t = self.edges[base_letter(d)]
        return t if is_inverse(d) else o

    def terminus(self, d: str) -> str:
        return self.origin(inverse_letter(d))

    def direction_key(self, d: str) -> int:
        return 2 * self._edge_index[base_letter(d)] + (1 if is_inverse(d) else 0)

    def directions(self, vertex: str) -> Tuple[str, ...]:
        out = []
        for name, (o, t) in self.edges.items():
            if o == vertex:
                out.append(name)
            if t == vertex:
                out.append(inverse_letter(name))
        return tuple(out)

    def label(self, token: Token) -> Word:
        if isinstance(token, GroupElement):
            return token.word
        label = self.edge_labels[base_letter(token)]
        return label.inverse() if is_inverse(token) else label

    def read(self, path: Iterable[Token]) -> Word:
        letters = []
        for token in path:
            letters.extend(self.label(token).letters)
        return Word(letters)

    @cached_property
    def _tree_paths(self) -> Dict[str, Path]:
        paths = {self.base: ()}
        queue = [self.base]
        while queue:
            u = queue.pop(0)
            for d in self.directions(u):
                v = self.terminus(d)
                if v not in paths:
                    paths[v] = paths[u] + (d,)
                    queue.append(v)
        if len(paths) != len(self.vertices):
            raise ValueError("Marked graphs must be connected")
        return paths

    def tree_path(self, vertex: str) -> Path:
        return self._tree_paths[vertex]

    def path_between(self, u: str, v: str) -> Path:
        return tighten(invert_path(self.tree_path(u)) + self.tree_path(v))

    def loop_of(self, word: Union[Word, Sequence[str]]) -> Path:
        """The tightened loop at the base realizing ``word`` through the marking."""
        path = []
        for x in word:
            self.basis.check(x)
            image = self.marking[base_letter(x)]
            path.extend(invert_path(image) if is_inverse(x) else image)
        return tighten(path)

    def to_dot(self, name: str = "graph") -> str:
        lines = [f"digraph {name} {{"]
        for v in self.vertices:
            group = self.vertex_groups.get(v)
            label = v if not group else f"{v} <{', '.join(str(g) for g in group)}>"
            lines.append(f'  "{v}" [label="{label}"];')
        for e, (o, t) in self.edges.items():
            lines.append(f'  "{o}" -> "{t}" [label="{e}"];')
        lines.append("}")
        return "\n".join(lines)


def _check_composable(path: Sequence[Token], graph: MarkedGraph) -> None:
    vertex = None
    for i, token in enumerate(path):
        if isinstance(token, GroupElement):
            if vertex is not None and token.vertex != vertex:
                raise ValueError(f"Path is not composable at position {i}")
            vertex = token.vertex
            continue
        graph.check_edge(token)
        if vertex is not None and graph.origin(token) != vertex:
            raise ValueError(f"Path is not composable at position {i}")
        vertex = graph.terminus(token)


def tighten(path: Sequence[Token], graph: Optional[MarkedGraph] = None) -> Path:
    """Cancel backtracking; e.g. ``e e' f`` tightens to ``f``."""
    if graph is not None:
        _check_composable(path, graph)
    stack: List[Token] = []
    for token in path:
        if isinstance(token, GroupElement):
            if token.word.is_trivial():
                continue
            if stack and isinstance(stack[-1], GroupElement):
                merged = GroupElement(token.vertex, stack.pop().word * token.word)
                if not merged.word.is_trivial():
                    stack.append(merged)
            else:
                stack.append(token)
        elif stack and stack[-1] == inverse_letter(token):
            stack.pop()
        else:
            stack.append(token)
    return tuple(stack)


def cyclic_tighten(path: Sequence[Token]) -> Path:
    path = list(tighten(path))
    while len(path) >= 2:
        first, last = path[0], path[-1]
        if isinstance(first, str) and isinstance(last, str) and first == inverse_letter(last):
            path = path[1:-1]
        elif isinstance(first, GroupElement) and isinstance(last, GroupElement):
            path = list(tighten([GroupElement(last.vertex, last.word * first.word)] + path[1:-1]))
        else:
            break
    return tuple(path)


@dataclass(frozen=True)
class VertexGroupAction:
    """Action of the map on the group at a collapsed vertex.

    A local element h is sent to ``twist * phi(conjugator * h * conjugator^-1) * twist^-1``
    in the group at ``target``.
    """
    target: str
    phi: Automorphism
    conjugator: Word
    twist: Word

    def __call__(self, h: Word) -> Word:
        P, Y = self.conjugator, self.twist
        return Y * self.phi(P * h * P.inverse()) * Y.inverse()


@dataclass(frozen=True)
class GraphMapRep:
    """A topological representative with its filtration.

    ``filtration`` lists G_1 ⊂ ... ⊂ G_K as edge sets, G_K being every
    edge. ``peripheral_index`` is the s with A = F(G_s) (0 when A is carried
    by vertex groups or is empty). Collapsed representatives keep the
    representative they came from in ``parent`` along with the collapsed
    edges and the vertex map of the collapse.
    """
    graph: MarkedGraph
    edge_images: Mapping[str, Path]
    vertex_images: Mapping[str, str]
    filtration: Tuple[FrozenSet[str], ...] = ()
    peripheral_index: int = 0
    vertex_group_action: Mapping[str, VertexGroupAction] = field(default_factory=dict)
    parent: Optional["GraphMapRep"] = None
    collapsed: FrozenSet[str] = frozenset()
    vertex_collapse: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        graph = self.graph
        object.__setattr__(self, "edge_images", {e: as_path(p) for e, p in self.edge_images.items()})
        everything = frozenset(graph.edges)
        filtration = [frozenset(level) for level in self.filtration]
        if not filtration or filtration[-1] != everything:
            filtration.append(everything)
        object.__setattr__(self, "filtration", tuple(filtration))
        for e in graph.edges:
            if e not in self.edge_images:
                raise ValueError(f"No image given for edge '{e}'")
        for e, image in self.edge_images.items():
            graph.check_edge(e)
            if not edge_tokens(image):
                raise ValueError(f"Image of edge '{e}' contains no edge")
            if tighten(image, graph) != image:
                raise ValueError(f"Image of edge '{e}' is not tightened")
            if _path_start(image, graph) != self.vertex_images[graph.origin(e)] \
                    or _path_end(image, graph) != self.vertex_images[graph.terminus(e)]:
                raise ValueError(f"Image of edge '{e}' does not join the images of its endpoints")
        for lower, upper in zip(filtration, filtration[1:]):
            if not lower < upper:
                raise ValueError("Filtration must be strictly increasing")
        for i, level in enumerate(filtration):
            for e in level:
                for d in edge_tokens(self.edge_images[e]):
                    if base_letter(d) not in level:
                        raise ValueError(f"Filtration element G{i + 1} is not invariant: '{e}' crosses '{d}'")

    @classmethod
    def from_images(cls, graph: MarkedGraph, images: Mapping[str, Union[str, Sequence[Token]]],
                    filtration: Sequence[Iterable[str]] = (), peripheral_index: int = 0) -> "GraphMapRep":
        images = {e: as_path(p) for e, p in images.items()}
        vertex_images = {}
        for e, image in images.items():
            for v, w in ((graph.origin(e), _path_start(image, graph)), (graph.terminus(e), _path_end(image, graph))):
                if vertex_images.setdefault(v, w) != w:
                    raise ValueError(f"Edge images disagree on the image of vertex '{v}'")
        return cls(graph, images, vertex_images, tuple(frozenset(f) for f in filtration), peripheral_index)

    @classmethod
    def rose(cls, automorphism: Automorphism, filtration: Sequence[Iterable[str]] = (),
             peripheral_index: int = 0) -> "GraphMapRep":
        graph = MarkedGraph.rose(automorphism.basis)
        images = {x: tighten(automorphism.images[x].letters) for x in automorphism.basis.letters}
        return cls.from_images(graph, images, filtration, peripheral_index)

    @property
    def basis(self) -> RelativeBasis:
        return self.graph.basis

    @property
    def top(self) -> int:
        return len(self.filtration)

    def stratum(self, r: int) -> Tuple[str, ...]:
        if not 1 <= r <= len(self.filtration):
            raise ValueError(f"Unknown stratum {r}")
        lower = self.filtration[r - 2] if r > 1 else frozenset()
        return tuple(e for e in self.graph.edges if e in self.filtration[r - 1] and e not in lower)

    def lower(self, r: int) -> FrozenSet[str]:
        return self.filtration[r - 2] if r > 1 else frozenset()

    def image(self, token: Token) -> Path:
        if isinstance(token, GroupElement):
            action = self.vertex_group_action.get(token.vertex)
            if action is None:
                raise ValueError(f"Vertex '{token.vertex}' has no group action")
            return (GroupElement(action.target, action(token.word)),)
        image = self.edge_images[base_letter(token)]
        return invert_path(image) if is_inverse(token) else image

    def substitute(self, path: Sequence[Token]) -> Path:
        out: List[Token] = []
        for token in path:
            out.extend(self.image(token))
        return tighten(out)

    def base_shift(self) -> Path:
        return self.graph.path_between(self.graph.base, self.vertex_images[self.graph.base])

    def automorphism(self) -> Automorphism:
        """The automorphism of F this map represents, read at the base vertex."""
        rho = self.base_shift()
        images = {}
        for x in self.basis.letters:
            loop = tighten(rho + self.substitute(self.graph.marking[x]) + invert_path(rho))
            images[x] = self.graph.read(loop)
        return Automorphism(self.basis, images)

    def inverse_rose(self, filtration: Sequence[Iterable[str]] = ()) -> "GraphMapRep":
        return GraphMapRep.rose(self.automorphism().inverse(), filtration)

    def power(self, k: int) -> "GraphMapRep":
        """The representative of the k-th iterate on the same graph and filtration."""
        if k < 1:
            raise ValueError("Powers of representatives start at 1")
        if self.vertex_group_action:
            raise ValueError("Powers are only taken of representatives without vertex groups")
        images = {e: apply_map(self, (e,), k) for e in self.graph.edges}
        vertex_images = {}
        for v in self.graph.vertices:
            w = v
            for _ in range(k):
                w = self.vertex_images[w]
            vertex_images[v] = w
        return GraphMapRep(self.graph, images, vertex_images, self.filtration, self.peripheral_index)


def _path_start(path: Sequence[Token], graph: MarkedGraph) -> str:
    first = path[0]
    return first.vertex if isinstance(first, GroupElement) else graph.origin(first)

def _path_end(path: Sequence[Token], graph: MarkedGraph) -> str:
    last = path[-1]
    return last.vertex if isinstance(last, GroupElement) else graph.terminus(last)


def apply_map(rep: GraphMapRep, path: Union[str, Sequence[Token]], power: int = 1,
              mode: str = "explicit", cap: Optional[int] = None) -> Path:
    """Tightened image of ``path`` under the ``power``-th iterate.

    In ``capped`` mode a :class:`MapOverflow` is raised as soon as an iterate
    is longer than ``cap``.
    """
    if power < 0:
        raise ValueError("Power must be non-negative")
    if mode not in ("explicit", "capped"):
        raise ValueError(f"Mode '{mode}' not implemented")
    if mode == "capped" and cap is None:
        raise ValueError("Capped mode needs a cap")
    path = tighten(as_path(path), rep.graph)
    for _ in range(power):
        path = rep.substitute(path)
        if mode == "capped" and len(path) > cap:
            raise MapOverflow(cap)
    return path


# Perron-Frobenius data

IRREDUCIBLE = ("irreducible_non_primitive", "primitive")


def matrix_class(matrix) -> str:
    M = np.asarray(matrix)
    if not M.any():
        return "zero"
    n = M.shape[0]
    reach = nx.DiGraph()
    reach.add_nodes_from(range(n))
    reach.add_edges_from((j, i) for i in range(n) for j in range(n) if M[i, j] > 0)
    if not nx.is_strongly_connected(reach):
        return "reducible"
    if (M.sum(axis=0) == 1).all():
        # a permutation matrix: λ = 1
        return "irreducible_non_primitive"
    B = (M > 0).astype(np.int64)
    power = B.copy()
    for _ in range((n - 1) ** 2 + 1):
        if (power > 0).all():
            return "primitive"
        power = ((power @ B) > 0).astype(np.int64)
    return "irreducible_non_primitive"


def collatz_wielandt(M: np.ndarray, x: np.ndarray) -> Tuple[Fraction, Fraction]:
    exact = [Fraction(float(v)) for v in x]
    ratios = []
    for i in range(M.shape[0]):
        total = sum((int(M[i, j]) * exact[j] for j in np.nonzero(M[i])[0]), Fraction(0))
        ratios.append(total / exact[i])
    return min(ratios), max(ratios)


def power_iterate(M: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    n = M.shape[0]
    B = M.astype(float) + np.eye(n)
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        y = B @ x
        y /= y.sum()
        ratios = (M @ y) / y
        if ratios.max() - ratios.min() <= tol / 4 and np.abs(y - x).max() <= tol / 4:
            return y
        x = y
    logger.warning(f"Power iteration did not settle within {max_iter} steps")
    return x


@dataclass(frozen=True)
class PerronFrobenius:
    value: float
    lower: Fraction
    upper: Fraction
    left: np.ndarray
    right: np.ndarray

    def __iter__(self):
        return iter((self.value, self.left, self.right))


def pf_data(matrix, tol: float = 1e-10, max_iter: int = 100000, check: bool = True) -> PerronFrobenius:
    """Perron-Frobenius eigenvalue and eigenvectors (each summing to 1).

    The eigenvalue is bracketed by the Collatz-Wielandt bounds of the
    computed right eigenvector, evaluated in exact rational arithmetic.
    Pass ``check=False`` for large matrices already known to be irreducible.
    """
    M = np.asarray(matrix, dtype=np.int64)
    if check and matrix_class(M) not in IRREDUCIBLE:
        raise ValueError("Perron-Frobenius data needs an irreducible non-zero matrix")
    right = power_iterate(M, tol, max_iter)
    left = power_iterate(M.T, tol, max_iter)
    lower, upper = collatz_wielandt(M, right)
    if upper - lower > tol:
        logger.warning(f"Perron-Frobenius enclosure width {float(upper - lower)} exceeds {tol}")
    return PerronFrobenius(float((lower + upper) / 2), lower, upper, left / left.sum(), right / right.sum())


def matrix_power(matrix, p: int) -> np.ndarray:
    """Exact ``matrix ** p`` over Python integers by repeated squaring."""
    M = np.array(np.asarray(matrix).tolist(), dtype=object)
    result = np.identity(M.shape[0], dtype=object)
    while p:
        if p & 1:
            result = np.dot(result, M)
        M = np.dot(M, M)
        p >>= 1
    return result


@dataclass
class StratumData:
    stratum_index: int
    edges: Tuple[str, ...]
    matrix: np.ndarray
    matrix_class: str
    pf: Optional[PerronFrobenius] = None

    @property
    def pf_value(self) -> Optional[float]:
        return self.pf.value if self.pf is not None else None

    @property
    def is_eg(self) -> bool:
        return self.pf is not None and self.pf.value > 1 + 1e-9

    def to_dict(self) -> dict:
        return {
            "stratum": self.stratum_index,
            "edges": list(self.edges),
            "matrix": self.matrix.tolist(),
            "class": self.matrix_class,
            "pf_value": self.pf_value,
            "pf_left": None if self.pf is None else [float(v) for v in self.pf.left],
            "pf_right": None if self.pf is None else [float(v) for v in self.pf.right],
        }


def transition_matrix(rep: GraphMapRep, r: Optional[int] = None, tol: float = 1e-10) -> StratumData:
    """Entry (i, j) counts edge i of the stratum in the image of edge j."""
    r = rep.top if r is None else r
    edges = rep.stratum(r)
    index = {e: i for i, e in enumerate(edges)}
    M = np.zeros((len(edges), len(edges)), dtype=np.int64)
    for j, e in enumerate(edges):
        for d in edge_tokens(rep.edge_images[e]):
            if base_letter(d) in index:
                M[index[base_letter(d)], j] += 1
    cls = matrix_class(M)
    pf = pf_data(M, tol) if cls in IRREDUCIBLE else None
    return StratumData(r, edges, M, cls, pf)


@dataclass(frozen=True)
class OccurrenceVector:
    counts: Mapping[str, int]
    power: int

    def total(self) -> int:
        return sum(self.counts.values())


def occurrence_vector(rep: GraphMapRep, edge: str, power: int) -> OccurrenceVector:
    data = transition_matrix(rep, rep.top)
    name = base_letter(edge)
    if name not in data.edges:
        raise ValueError(f"Edge '{edge}' is not in the top stratum")
    column = matrix_power(data.matrix, power)[:, data.edges.index(name)]
    return OccurrenceVector({e: int(column[i]) for i, e in enumerate(data.edges)}, power)


def top_counts(path: Iterable[Token], edges: Sequence[str]) -> Dict[str, int]:
    counts = {e: 0 for e in edges}
    for d in edge_tokens(path):
        if base_letter(d) in counts:
            counts[base_letter(d)] += 1
    return counts


# Directions and turns

def direction_map(rep: GraphMapRep) -> Dict[str, str]:
    """Dφ: each direction goes to the first edge of its image."""
    dmap = {}
    for e in rep.graph.edges:
        for d in (e, inverse_letter(e)):
            dmap[d] = edge_tokens(rep.image(d))[0]
    return dmap


def gate_key(rep: GraphMapRep) -> Dict[str, str]:
    """Eventual Dφ-image of each direction; equal keys mean the same gate."""
    dmap = direction_map(rep)
    steps = len(dmap) ** 2
    keys = {}
    for d in dmap:
        x = d
        for _ in range(steps):
            x = dmap[x]
        keys[d] = x
    return keys


def is_illegal(turn: Tuple[str, str], keys: Mapping[str, str]) -> bool:
    d1, d2 = turn
    return d1 != d2 and keys[d1] == keys[d2]


def illegal_turns_in(path: Sequence[Token], rep: GraphMapRep, edges: Iterable[str],
                     keys: Optional[Mapping[str, str]] = None, cyclic: bool = False) -> List[int]:
    """Positions i where the turn between tokens i and i+1 (both in ``edges``) is illegal."""
    keys = gate_key(rep) if keys is None else keys
    edges = set(edges)
    positions = []
    n = len(path)
    for i in range(n if cyclic else n - 1):
        a, b = path[i], path[(i + 1) % n]
        if isinstance(a, str) and isinstance(b, str) and base_letter(a) in edges and base_letter(b) in edges:
            if is_illegal((inverse_letter(a), b), keys):
                positions.append(i)
    return positions


# Relative train track verification

@dataclass
class StratumCheck:
    stratum: int
    exponentially_growing: bool
    boundary_edges_in_stratum: bool = True
    lower_paths_nontrivial: bool = True
    legality_preserved: bool = True
    witnesses: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.boundary_edges_in_stratum and self.lower_paths_nontrivial and self.legality_preserved


@dataclass
class RTTReport:
    strata: List[StratumCheck]
    path_bound: int

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.strata)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "path_bound": self.path_bound,
            "strata": [
                {
                    "stratum": c.stratum,
                    "eg": c.exponentially_growing,
                    "boundary_edges_in_stratum": c.boundary_edges_in_stratum,
                    "lower_paths_nontrivial": c.lower_paths_nontrivial,
                    "legality_preserved": c.legality_preserved,
                    "witnesses": dict(sorted(c.witnesses.items())),
                }
                for c in self.strata
            ],
        }


def _lower_collapse(rep: GraphMapRep, lower: FrozenSet[str], ends: set) -> Optional[Tuple[str, ...]]:
    """Find endpoints joined by a non-trivial lower path whose image tightens away.

    Folds the subdivided images of the lower edges: two endpoints get
    identified, or a loop dies, exactly when such a path exists.
    """
    graph = rep.graph
    components = nx.MultiGraph()
    for e in lower:
        components.add_edge(*graph.edges[e], key=e)
    for comp in nx.connected_components(components):
        comp_ends = sorted(v for v in comp if v in ends)
        if not comp_ends:
            continue
        folder = _Folder()
        ids = {v: folder.add_vertex() for v in sorted(comp)}
        comp_edges = [e for e in graph.edges if e in lower and graph.edges[e][0] in comp]
        for e in comp_edges:
            image = edge_tokens(rep.edge_images[e])
            u = ids[graph.origin(e)]
            for i, d in enumerate(image):
                v = ids[graph.terminus(e)] if i == len(image) - 1 else folder.add_vertex()
                folder.add_edge(u, d, v)
                u = v
        roots = {}
        for v in comp_ends:
            root = folder.find(ids[v])
            if root in roots:
                return (roots[root], v)
            roots[root] = v
        out = folder.adjacency()
        live = {folder.find(v) for v in out} - {0}
        edge_count = sum(1 for v in live for x in out[v] if not is_inverse(x))
        if edge_count - len(live) + 1 < len(comp_edges) - len(comp) + 1:
            return (comp_ends[0], comp_ends[0])
    return None


def _find_lower_witness(rep: GraphMapRep, lower: FrozenSet[str], ends: set, bound: int) -> Optional[Path]:
    graph = rep.graph
    dirs = {v: [d for d in graph.directions(v) if base_letter(d) in lower] for v in graph.vertices}
    images = {d: edge_tokens(rep.image(d)) for v in dirs for d in dirs[v]}

    def search(v, last, path, image):
        for d in dirs[v]:
            if last is not None and d == inverse_letter(last):
                continue
            log = []
            for token in images[d]:
                if image and image[-1] == inverse_letter(token):
                    log.append(image.pop())
                else:
                    image.append(token)
                    log.append(None)
            path.append(d)
            w = graph.terminus(d)
            found = tuple(path) if (w in ends and not image) else None
            if found is None and len(path) < bound:
                found = search(w, d, path, image)
            path.pop()
            for entry in reversed(log):
                if entry is None:
                    image.pop()
                else:
                    image.append(entry)
            if found is not None:
                return found
        return None

    for v in sorted(ends):
        found = search(v, None, [], [])
        if found is not None:
            return found
    return None


def verify_rtt(rep: GraphMapRep, path_bound: int = 12) -> RTTReport:
    """Check the relative train track conditions on every EG stratum."""
    graph = rep.graph
    keys = gate_key(rep)
    checks = []
    for r in range(1, rep.top + 1):
        data = transition_matrix(rep, r)
        check = StratumCheck(r, data.is_eg)
        checks.append(check)
        if not data.is_eg:
            continue
        H = set(data.edges)
        lower = rep.lower(r)

        for e in data.edges:
            image = edge_tokens(rep.edge_images[e])
            if base_letter(image[0]) not in H or base_letter(image[-1]) not in H:
                check.boundary_edges_in_stratum = False
                check.witnesses.setdefault("boundary_edges_in_stratum", e)

        if lower:
            lower_vertices = {v for e in lower for v in graph.edges[e]}
            ends = {v for e in H for v in graph.edges[e]} & lower_vertices
            pair = _lower_collapse(rep, lower, ends)
            if pair is not None:
                check.lower_paths_nontrivial = False
                witness = _find_lower_witness(rep, lower, ends, path_bound)
                check.witnesses["lower_paths_nontrivial"] = (
                    format_path(witness) if witness is not None
                    else f"{pair[0]}..{pair[1]} (longer than {path_bound})")

        signed = [d for e in data.edges for d in (e, inverse_letter(e))]
        for e1 in signed:
            for e2 in signed:
                if graph.terminus(e1) != graph.origin(e2) or e2 == inverse_letter(e1):
                    continue
                if is_illegal((inverse_letter(e1), e2), keys):
                    continue
                image = rep.substitute((e1, e2))
                if illegal_turns_in(image, rep, H, keys):
                    check.legality_preserved = False
                    check.witnesses.setdefault("legality_preserved", f"{e1} {e2}")
    return RTTReport(checks, path_bound)


# Invariant subgraphs and the collapse

def maximal_invariant_subgraph(rep: GraphMapRep) -> FrozenSet[str]:
    """Union of the invariant closures of single edges that avoid the top stratum."""
    top = set(rep.stratum(rep.top))
    union = set()
    for e in rep.graph.edges:
        closure = {e}
        queue = [e]
        while queue:
            x = queue.pop()
            for d in edge_tokens(rep.edge_images[x]):
                if base_letter(d) not in closure:
                    closure.add(base_letter(d))
                    queue.append(base_letter(d))
        if not closure & top:
            union |= closure
    if not union:
        logger.info("Every invariant subgraph reaches the top stratum; nothing is collapsed")
    return frozenset(union)


def _components(graph: MarkedGraph, subgraph: Iterable[str]) -> List[Tuple[str, List[str], Dict[str, Path]]]:
    """Components of a subgraph as (center, edges, tree paths from the center).

    The center is the base vertex when the component contains it, otherwise
    the first vertex in declaration order.
    """
    subgraph = set(subgraph)
    order = {v: i for i, v in enumerate(graph.vertices)}
    g = nx.MultiGraph()
    for e in subgraph:
        g.add_edge(*graph.edges[e], key=e)
    result = []
    for comp in sorted(nx.connected_components(g), key=lambda c: min(order[v] for v in c)):
        center = graph.base if graph.base in comp else min(comp, key=order.get)
        edges = [e for e in graph.edges if e in subgraph and graph.edges[e][0] in comp]
        paths = {center: ()}
        queue = [center]
        while queue:
            u = queue.pop(0)
            for d in graph.directions(u):
                if base_letter(d) in subgraph and graph.terminus(d) not in paths:
                    paths[graph.terminus(d)] = paths[u] + (d,)
                    queue.append(graph.terminus(d))
        result.append((center, edges, paths))
    return result


def _component_generators(graph: MarkedGraph, edges: Sequence[str], paths: Mapping[str, Path]) -> List[Path]:
    tree = {base_letter(d) for p in paths.values() for d in p}
    loops = []
    for e in edges:
        if e in tree:
            continue
        o, t = graph.edges[e]
        loops.append(tighten(paths[o] + (e,) + invert_path(paths[t])))
    return loops


def realized_ffs(graph: MarkedGraph, subgraph: Iterable[str]) -> FreeFactorSystem:
    """One factor per non-contractible component of the subgraph."""
    factors = []
    for center, edges, paths in _components(graph, subgraph):
        to_center = graph.tree_path(center)
        generators = [
            graph.read(to_center + loop + invert_path(to_center))
            for loop in _component_generators(graph, edges, paths)
        ]
        if generators:
            factors.append(core_graph(generators))
    return FreeFactorSystem(tuple(factors), graph.basis.rank)


def collapse_to_a_traintrack(rep: GraphMapRep, A: Optional[FreeFactorSystem] = None) -> GraphMapRep:
    """Collapse the maximal invariant proper subgraph to vertices with groups."""
    K = maximal_invariant_subgraph(rep)
    if not K:
        return rep
    graph = rep.graph
    expected = A if A is not None else graph.basis.peripheral_system()
    realized = realized_ffs(graph, K)
    if ffs_partial_order(realized, expected) != "equal":
        raise ValueError(f"Collapsed subgraph realizes {realized.describe()} but A is {expected.describe()}")

    components = _components(graph, K)
    center_of: Dict[str, str] = {v: v for v in graph.vertices}
    to_center: Dict[str, Path] = {v: () for v in graph.vertices}
    groups = {}
    for center, edges, paths in components:
        for v, p in paths.items():
            center_of[v] = center
            to_center[v] = p
        generators = [graph.read(loop) for loop in _component_generators(graph, edges, paths)]
        if generators:
            groups[center] = tuple(generators)

    def group_token(start: str, segment: Sequence[str], end: str) -> List[Token]:
        word = graph.read(to_center[start] + tuple(segment) + invert_path(to_center[end]))
        return [] if word.is_trivial() else [GroupElement(center_of[end], word)]

    def project(path: Sequence[str], start: str) -> Path:
        """Replace each maximal run of collapsed edges by a vertex group element."""
        tokens: List[Token] = []
        segment: List[str] = []
        segment_start = v = start
        for d in path:
            if base_letter(d) in K:
                if not segment:
                    segment_start = v
                segment.append(d)
            else:
                if segment:
                    tokens.extend(group_token(segment_start, segment, v))
                    segment = []
                tokens.append(d)
            v = graph.terminus(d)
        if segment:
            tokens.extend(group_token(segment_start, segment, v))
        return tuple(tokens)

    vertices = tuple(v for v in graph.vertices if center_of[v] == v)
    new_edges = {e: (center_of[o], center_of[t]) for e, (o, t) in graph.edges.items() if e not in K}
    labels = {
        e: graph.read(to_center[o] + (e,) + invert_path(to_center[t]))
        for e, (o, t) in graph.edges.items() if e not in K
    }
    base = center_of[graph.base]
    marking = {
        x: tighten(project(tighten(to_center[graph.base] + graph.marking[x] + invert_path(to_center[graph.base])), base))
        for x in graph.basis.letters
    }
    quotient = MarkedGraph(graph.basis, vertices, new_edges, marking, base, groups, labels)

    f = rep.substitute
    images = {}
    for e, (o, t) in graph.edges.items():
        if e in K:
            continue
        fo, ft = rep.vertex_images[center_of[o]], rep.vertex_images[center_of[t]]
        lifted = to_center[fo] + f(to_center[o]) + rep.image(e) + invert_path(f(to_center[t])) + invert_path(to_center[ft])
        images[e] = tighten(project(tighten(lifted), center_of[fo]))

    phi = rep.automorphism()
    rho = rep.base_shift()
    actions = {}
    for center in groups:
        pi = graph.tree_path(center)
        fc = rep.vertex_images[center]
        twist = graph.read(tighten(to_center[fc] + invert_path(f(pi)) + invert_path(rho)))
        actions[center] = VertexGroupAction(center_of[fc], phi, graph.read(pi), twist)

    vertex_images = {v: center_of[rep.vertex_images[v]] for v in vertices}
    return GraphMapRep(
        quotient, images, vertex_images, (), 0, actions,
        parent=rep, collapsed=K, vertex_collapse=dict(center_of),
    )


def original(rep: GraphMapRep) -> GraphMapRep:
    """The uncollapsed representative behind ``rep``."""
    while rep.parent is not None:
        rep = rep.parent
    return rep
