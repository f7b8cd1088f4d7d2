"""Simplicial trees of relative outer space and their length functions.

A tree is given by a marked graph together with a subgraph K whose lifts
are collapsed in the universal cover; the vertex groups of the collapse
are the fundamental groups of the components of K. Trees whose realized
system is strictly above A are the simplicial boundary points used in
the worked examples.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import logging
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Union

import numpy as np
import polars as pl
from tqdm import tqdm

from reltrack.currents import RelativeCurrent, support_at_depth
from reltrack.freegroup import (
    Automorphism,
    CyclicWord,
    FreeFactorSystem,
    RelativeBasis,
    Word,
    base_letter,
    cyclic_reduce,
    ffs_partial_order,
    is_nonperipheral,
)
from reltrack.graphmap import (
    GraphMapRep,
    MarkedGraph,
    cyclic_tighten,
    edge_tokens,
    gate_key,
    illegal_turns_in,
    maximal_invariant_subgraph,
    original,
    realized_ffs,
    transition_matrix,
)
from reltrack.lamination import dual_language_simplicial, word_sort_key

logger = logging.getLogger(__name__)


def _cyclic(g: Union[str, Word, CyclicWord], basis: RelativeBasis) -> CyclicWord:
    if isinstance(g, str):
        return CyclicWord.parse(g, basis)
    if isinstance(g, Word):
        return cyclic_reduce(g, basis)[0]
    return g


@dataclass(frozen=True)
class GrushkoTreePoint:
    """The tree obtained from ``graph`` by collapsing ``collapsed``, with edge ``lengths``."""
    graph: MarkedGraph
    collapsed: FrozenSet[str]
    lengths: Mapping[str, Fraction]
    peripheral: Optional[FreeFactorSystem] = None

    def __post_init__(self):
        object.__setattr__(self, "collapsed", frozenset(self.collapsed))
        object.__setattr__(self, "lengths", {e: Fraction(v) for e, v in self.lengths.items()})
        for e in self.collapsed:
            self.graph.check_edge(e)
        for e in self.graph.edges:
            if e in self.collapsed:
                if e in self.lengths:
                    raise ValueError(f"Collapsed edge '{e}' cannot carry a length")
            elif self.lengths.get(e, 0) <= 0:
                raise ValueError(f"Edge '{e}' needs a positive length")
        for e in self.lengths:
            self.graph.check_edge(e)
        A = self.peripheral if self.peripheral is not None else self.graph.basis.peripheral_system()
        object.__setattr__(self, "peripheral", A)
        order = ffs_partial_order(A, self.realized_system)
        if order not in ("equal", "below"):
            raise ValueError(f"Vertex groups {self.realized_system.describe()} do not contain A = {A.describe()}")

    @property
    def basis(self) -> RelativeBasis:
        return self.graph.basis

    @property
    def realized_system(self) -> FreeFactorSystem:
        return realized_ffs(self.graph, self.collapsed)

    @property
    def is_grushko(self) -> bool:
        """True when the point stabilizers are exactly A."""
        return ffs_partial_order(self.peripheral, self.realized_system) == "equal"

    @property
    def volume(self) -> Fraction:
        return sum(self.lengths.values(), Fraction(0))

    def scaled(self, t) -> "GrushkoTreePoint":
        t = Fraction(t)
        return GrushkoTreePoint(self.graph, self.collapsed, {e: v * t for e, v in self.lengths.items()}, self.peripheral)


def translation_length(tree: GrushkoTreePoint, g: Union[str, Word, CyclicWord]) -> Fraction:
    """Length of the cyclically tightened loop of g, ignoring collapsed edges."""
    g = _cyclic(g, tree.basis)
    if not len(g):
        return Fraction(0)
    loop = cyclic_tighten(tree.graph.loop_of(g.word()))
    return sum((tree.lengths[base_letter(d)] for d in edge_tokens(loop) if base_letter(d) not in tree.collapsed),
               Fraction(0))


def act(tree: GrushkoTreePoint, phi: Automorphism) -> GrushkoTreePoint:
    """The tree with marking precomposed by φ, so that l(act(T, φ), g) = l(T, φ(g))."""
    if not phi.preserves(tree.peripheral):
        raise ValueError(f"Automorphism does not preserve A = {tree.peripheral.describe()}")
    graph = tree.graph
    marking = {x: graph.loop_of(phi.images[x]) for x in graph.basis.letters}
    moved = MarkedGraph(graph.basis, graph.vertices, graph.edges, marking, graph.base)
    return GrushkoTreePoint(moved, tree.collapsed, tree.lengths, tree.peripheral)


def tree_point_from_rep(rep: GraphMapRep, metric: str = "unit") -> GrushkoTreePoint:
    """The tree T_G of a representative: its graph with the collapsed subgraph and a metric.

    ``metric="pf"`` puts the Perron-Frobenius left eigenvector (summing to 1)
    on the top stratum edges, which must then be the only edges kept.
    """
    collapsed = rep.collapsed if rep.parent is not None else maximal_invariant_subgraph(rep)
    rep = original(rep)
    kept = [e for e in rep.graph.edges if e not in collapsed]
    if metric == "unit":
        lengths = {e: Fraction(1) for e in kept}
    elif metric == "pf":
        top = transition_matrix(rep, rep.top)
        if top.pf is None or set(top.edges) != set(kept):
            raise ValueError("The Perron-Frobenius metric needs the top stratum to be exactly the kept edges")
        lengths = {e: Fraction(float(v)) for e, v in zip(top.edges, top.pf.left)}
    else:
        raise ValueError(f"Metric '{metric}' not implemented")
    return GrushkoTreePoint(rep.graph, collapsed, lengths)


def rose_tree(basis: RelativeBasis, collapsed: Sequence[str], lengths: Optional[Mapping[str, Fraction]] = None,
              peripheral: Optional[FreeFactorSystem] = None) -> GrushkoTreePoint:
    """A rose on the basis with some petals collapsed (unit lengths by default)."""
    graph = MarkedGraph.rose(basis)
    lengths = lengths or {x: Fraction(1) for x in basis.letters if x not in collapsed}
    return GrushkoTreePoint(graph, frozenset(collapsed), lengths, peripheral)


# Stock trees of the worked examples

def _two_vertex_graph(k: int) -> MarkedGraph:
    basis = RelativeBasis(("a", "b"), (("a",),))
    marking = {"a": ("e", "x", "e'"), "b": ("e",) + ("x'",) * k + ("e'", "l")}
    return MarkedGraph(basis, ("u", "w"), {"e": ("u", "w"), "l": ("u", "u"), "x": ("w", "w")}, marking, "u")


def counterexample_tree(k: int) -> GrushkoTreePoint:
    """Loop l reading a^k b and edge e of length 1; the far vertex carries <a>."""
    if k < 1:
        raise ValueError("k must be positive")
    return GrushkoTreePoint(_two_vertex_graph(k), frozenset({"x"}), {"e": 1, "l": 1})


def limit_example_tree(k: int) -> GrushkoTreePoint:
    """Vertex groups <a^k b> and <a> joined by one edge."""
    if k < 1:
        raise ValueError("k must be positive")
    return GrushkoTreePoint(_two_vertex_graph(k), frozenset({"x", "l"}), {"e": 1})


def hnn_limit_tree(length=1) -> GrushkoTreePoint:
    """One vertex with group <a> and a loop carrying b."""
    basis = RelativeBasis(("a", "b"), (("a",),))
    graph = MarkedGraph(basis, ("v",), {"x": ("v", "v"), "y": ("v", "v")}, {"a": ("x",), "b": ("y",)}, "v")
    return GrushkoTreePoint(graph, frozenset({"x"}), {"y": Fraction(length)})


def limit_current_table(m: int) -> RelativeCurrent:
    """Depth-m weights of the limit of the currents of a^k b: every a^n b a^j has weight 1."""
    basis = RelativeBasis(("a", "b"), (("a",),))
    weights = {}
    for n in range(m):
        for j in range(m - n):
            w = ("a",) * n + ("b",) + ("a",) * j
            weights[w] = Fraction(1)
            weights[("a'",) * j + ("b'",) + ("a'",) * n] = Fraction(1)
    return RelativeCurrent(basis, m, weights)


# Stable lengths

@dataclass(frozen=True)
class LengthEnclosure:
    lower: Fraction
    upper: Fraction
    power_used: int

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"Empty enclosure [{self.lower}, {self.upper}]")

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower

    def contains(self, value, slack: float = 0.0) -> bool:
        return float(self.lower) - slack <= float(value) <= float(self.upper) + slack

    def to_dict(self) -> dict:
        return {"lower": float(self.lower), "upper": float(self.upper), "power_used": self.power_used}


def pf_lengths(rep: GraphMapRep) -> Dict[str, Fraction]:
    rep = original(rep)
    top = transition_matrix(rep, rep.top)
    if top.matrix_class != "primitive":
        raise ValueError(f"Top stratum matrix is {top.matrix_class}; stable lengths need a primitive matrix")
    return {e: Fraction(float(v)) for e, v in zip(top.edges, top.pf.left)}


def stable_length(rep: GraphMapRep, g: Union[str, Word, CyclicWord], tol: float = 1e-6,
                  power_max: int = 40, max_length: int = 200000) -> LengthEnclosure:
    """Enclosure of lim l(φ^p g) / λ^p in the Perron-Frobenius metric of the top stratum.

    The upper bound is the current normalized length; the lower bound
    subtracts at most 2C per illegal turn per iteration, C = λ · volume
    bounding the cancellation of the map. Legal loops scale exactly.
    """
    rep = original(rep)
    g = _cyclic(g, rep.basis)
    if not is_nonperipheral(g, rep.basis):
        return LengthEnclosure(Fraction(0), Fraction(0), 0)
    lengths = pf_lengths(rep)
    top = transition_matrix(rep, rep.top)
    lam = Fraction(top.pf.value)
    C = lam * sum(lengths.values(), Fraction(0))
    keys = gate_key(rep)

    loop = cyclic_tighten(rep.graph.loop_of(g.word()))
    enclosure = None
    for p in range(power_max + 1):
        if p:
            loop = cyclic_tighten(rep.substitute(loop))
        scale = lam ** p
        upper = sum((lengths.get(base_letter(d), Fraction(0)) for d in edge_tokens(loop)), Fraction(0)) / scale
        illegal = len(illegal_turns_in(edge_tokens(loop), rep, top.edges, keys, cyclic=True))
        if not illegal:
            return LengthEnclosure(upper, upper, p)
        lower = max(Fraction(0), upper - 2 * C * illegal / (scale * (lam - 1)))
        enclosure = LengthEnclosure(lower, upper, p)
        if enclosure.width <= tol:
            return enclosure
        if len(loop) * lam > max_length:
            break
    logger.warning(f"Stable length of '{g}' reached width {float(enclosure.width)} > {tol}")
    return enclosure


# Duality with currents

def rational_dual(tree: GrushkoTreePoint, alpha: Union[str, Word, CyclicWord]) -> bool:
    return translation_length(tree, alpha) == 0


@dataclass
class DualityVerdict:
    dual: bool
    depth: int
    witness: Optional[str] = None

    def __bool__(self) -> bool:
        return self.dual

    def to_dict(self) -> dict:
        label = f"dual up to depth {self.depth}" if self.dual else f"not dual at depth {self.depth}"
        return {"dual": self.dual, "depth": self.depth, "witness": self.witness, "verdict": label}


def is_dual_at_depth(tree: GrushkoTreePoint, eta: RelativeCurrent, m: int) -> DualityVerdict:
    """Whether every word supporting η up to depth m is read in a vertex group of the tree."""
    if eta.depth < m:
        raise ValueError(f"Current of depth {eta.depth} cannot be read at depth {m}")
    dual = dual_language_simplicial(tree, m).words
    missing = sorted(support_at_depth(eta, m) - dual, key=word_sort_key)
    if missing:
        return DualityVerdict(False, m, " ".join(missing[0]))
    return DualityVerdict(True, m)


def intersection_is_zero(tree: GrushkoTreePoint, eta: RelativeCurrent, m: Optional[int] = None) -> bool:
    if eta.provenance is not None:
        return rational_dual(tree, eta.provenance)
    return is_dual_at_depth(tree, eta, eta.depth if m is None else m).dual


# Convergence of trees under iteration

@dataclass
class TreeNSReport:
    sample: List[str]
    powers: List[int]
    spectra: List[List[float]]
    differences: List[float]
    enclosures: Dict[str, LengthEnclosure]
    modes: List[str]
    tol: float
    contained: Optional[bool] = None

    @property
    def cauchy(self) -> bool:
        return bool(self.differences) and self.differences[-1] < self.tol

    def to_frame(self) -> pl.DataFrame:
        """Rows are the sample elements, columns the powers."""
        columns = {"g": self.sample}
        for i, p in enumerate(self.powers):
            columns[f"p{p}"] = [row for row in self.spectra[i]]
        return pl.DataFrame(columns)

    def to_dict(self) -> dict:
        return {
            "sample": self.sample,
            "powers": self.powers,
            "spectra": self.spectra,
            "differences": self.differences,
            "modes": self.modes,
            "cauchy": self.cauchy,
            "contained": self.contained,
            "enclosures": {g: e.to_dict() for g, e in self.enclosures.items()},
        }


def _top_lengths_only(tree: GrushkoTreePoint, rep: GraphMapRep, top_edges: Sequence[str]) -> bool:
    return tree.graph is rep.graph and all(e in top_edges for e in tree.lengths)


def tree_ns_experiment(rep: GraphMapRep, tree: GrushkoTreePoint, sample: Sequence[Union[str, CyclicWord]],
                       p_max: int, tol: float = 1e-6, max_length: int = 200000,
                       verbose: bool = False) -> TreeNSReport:
    """Normalized spectra l(Tφ^p, g) / λ^p for p = 0..p_max.

    When the tree lives on the graph of the representative with lengths on
    top edges only, legal loops are advanced through their top edge counts.
    """
    rep = original(rep)
    basis = rep.basis
    if not sample:
        raise ValueError("Sample of conjugacy classes is empty")
    words = [_cyclic(g, basis) for g in sample]
    for g in words:
        if not is_nonperipheral(g, basis):
            raise ValueError(f"Sample element '{g}' is peripheral")
    top = transition_matrix(rep, rep.top)
    if top.pf is None:
        raise ValueError(f"Top stratum matrix is {top.matrix_class}")
    lam = top.pf.value
    keys = gate_key(rep)
    shortcut = _top_lengths_only(tree, rep, top.edges)
    phi = rep.automorphism()

    report = TreeNSReport([str(g) for g in words], [], [], [], {}, [], tol)
    states = []
    for g in words:
        loop = cyclic_tighten(rep.graph.loop_of(g.word())) if shortcut else None
        states.append({"word": g, "loop": loop, "counts": None})

    for p in tqdm(range(p_max + 1), desc="Tree spectra", disable=not verbose):
        row, mode = [], "explicit"
        for state in states:
            if p:
                if state["counts"] is not None:
                    state["counts"] = np.dot(np.array(top.matrix.tolist(), dtype=object), state["counts"])
                elif shortcut:
                    state["loop"] = cyclic_tighten(rep.substitute(state["loop"]))
                else:
                    state["word"] = phi(state["word"])
            if shortcut and state["counts"] is None:
                tokens = edge_tokens(state["loop"])
                if not illegal_turns_in(tokens, rep, top.edges, keys, cyclic=True):
                    counts = [0] * len(top.edges)
                    for d in tokens:
                        if base_letter(d) in top.edges:
                            counts[top.edges.index(base_letter(d))] += 1
                    state["counts"] = np.array(counts, dtype=object)
                elif len(tokens) > max_length:
                    raise ValueError(f"Loop of '{state['word']}' stays illegal past length {max_length}")
            if state["counts"] is not None:
                value = sum((tree.lengths[e] * int(c) for e, c in zip(top.edges, state["counts"]) if e in tree.lengths),
                            Fraction(0))
                mode = "vector"
            elif shortcut:
                value = sum((tree.lengths.get(base_letter(d), Fraction(0)) for d in edge_tokens(state["loop"])),
                            Fraction(0))
            else:
                if len(state["word"]) > max_length:
                    raise ValueError(f"φ^{p}({state['word']}) is longer than {max_length}; use a smaller p_max")
                value = translation_length(tree, state["word"])
            row.append(float(value) / lam ** p)
        if report.spectra:
            report.differences.append(max(abs(a - b) for a, b in zip(row, report.spectra[-1])))
        report.powers.append(p)
        report.spectra.append(row)
        report.modes.append(mode)

    report.enclosures = {str(g): stable_length(rep, g, tol) for g in words}
    if shortcut and tree.lengths == pf_lengths(rep):
        report.contained = all(
            report.enclosures[str(g)].contains(report.spectra[-1][i], slack=tol) for i, g in enumerate(words))
    return report


@dataclass
class ChainStep:
    smaller: int
    larger: int
    witness: str
    dual_in_smaller: bool
    dual_in_larger: bool
    trees_realize_systems: bool

    @property
    def passed(self) -> bool:
        return self.dual_in_smaller and self.dual_in_larger and self.trees_realize_systems


@dataclass
class ChainReport:
    steps: List[ChainStep] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(step.passed for step in self.steps)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "steps": [dict(vars(s), passed=s.passed) for s in self.steps]}


def duality_chain_check(chain: Sequence[FreeFactorSystem], trees: Sequence[GrushkoTreePoint],
                        witnesses: Sequence[Union[str, CyclicWord]]) -> ChainReport:
    """Walk a chain of free factor systems checking that each witness stays dual."""
    if len(trees) != len(chain):
        raise ValueError(f"{len(chain)} systems but {len(trees)} trees")
    if len(witnesses) != len(chain) - 1:
        raise ValueError(f"A chain of {len(chain)} systems needs {len(chain) - 1} witnesses")
    report = ChainReport()
    for i, (D, E) in enumerate(zip(chain, chain[1:])):
        order = ffs_partial_order(D, E)
        if order == "incomparable":
            raise ValueError(f"Systems {i} and {i + 1} are not comparable")
        small, large = (i, i + 1) if order in ("below", "equal") else (i + 1, i)
        alpha = _cyclic(witnesses[i], trees[small].basis)
        if not chain[small].carries(alpha):
            raise ValueError(f"Witness '{alpha}' is not carried by system {small}")
        realize = all(ffs_partial_order(trees[j].realized_system, chain[j]) == "equal" for j in (small, large))
        report.steps.append(ChainStep(
            small, large, str(alpha),
            rational_dual(trees[small], alpha), rational_dual(trees[large], alpha), realize,
        ))
    return report
