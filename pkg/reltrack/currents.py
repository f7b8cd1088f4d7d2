"""Relative currents at finite depth.

A current is stored as its weights on the cylinders of non-peripheral
reduced words of length at most ``depth``. Rational currents count
occurrences in a cyclic word; frequency currents come from the block
system of the attracting lamination of a representative.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import logging
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import networkx as nx
import numpy as np
import polars as pl
from tqdm import tqdm

from reltrack.freegroup import (
    Automorphism,
    CyclicWord,
    RelativeBasis,
    Word,
    base_letter,
    cyclic_reduce,
    invert,
    inverse_letter,
    is_nonperipheral,
)
from reltrack.graphmap import (
    GraphMapRep,
    cyclic_tighten,
    edge_tokens,
    original,
    pf_data,
    tighten,
    transition_matrix,
)
from reltrack.lamination import WordTuple, attracting_language, word_sort_key

logger = logging.getLogger(__name__)


def _word(w: Union[str, Word, CyclicWord, Tuple[str, ...]]) -> WordTuple:
    if isinstance(w, str):
        return tuple(w.split())
    return tuple(w)


def _weight_text(value: Fraction) -> str:
    return str(value) if value.denominator == 1 else repr(float(value))


@dataclass(frozen=True)
class RelativeCurrent:
    """Weights of a relative current on non-peripheral words up to ``depth``.

    ``provenance`` is the conjugacy class a rational current counts;
    ``tolerance`` bounds the consistency defects of currents computed from
    an eigenvector enclosure (zero for exact currents).
    """
    basis: RelativeBasis
    depth: int
    weights: Mapping[WordTuple, Fraction]
    provenance: Optional[CyclicWord] = None
    scale: Fraction = Fraction(1)
    tolerance: Fraction = Fraction(0)

    def __post_init__(self):
        weights = {}
        for w, value in self.weights.items():
            w = _word(w)
            if not 1 <= len(w) <= self.depth:
                raise ValueError(f"Word '{' '.join(w)}' does not fit depth {self.depth}")
            if not is_nonperipheral(w, self.basis):
                raise ValueError(f"Word '{' '.join(w)}' is peripheral")
            value = Fraction(value)
            if value < 0:
                raise ValueError(f"Negative weight on '{' '.join(w)}'")
            if value:
                weights[w] = value
        object.__setattr__(self, "weights", weights)

    @classmethod
    def zero(cls, basis: RelativeBasis, depth: int) -> "RelativeCurrent":
        return cls(basis, depth, {})

    def __getitem__(self, w) -> Fraction:
        return self.weights.get(_word(w), Fraction(0))

    def words(self, length: Optional[int] = None) -> List[WordTuple]:
        """Every non-peripheral reduced word up to the depth (or of one length)."""
        lengths = range(1, self.depth + 1) if length is None else [length]
        letters = self.basis.all_letters()
        result = []
        layer = [()]
        for n in range(1, max(lengths, default=0) + 1):
            layer = [w + (x,) for w in layer for x in letters if not w or x != inverse_letter(w[-1])]
            if n in lengths:
                result.extend(w for w in layer if is_nonperipheral(w, self.basis))
        return result

    def truncate(self, m: int) -> "RelativeCurrent":
        if m > self.depth:
            raise ValueError(f"Cannot truncate a depth {self.depth} current to depth {m}")
        weights = {w: v for w, v in self.weights.items() if len(w) <= m}
        return RelativeCurrent(self.basis, m, weights, self.provenance, self.scale, self.tolerance)

    def scaled(self, t) -> "RelativeCurrent":
        t = Fraction(t)
        if t < 0:
            raise ValueError("Currents scale by non-negative factors")
        weights = {w: v * t for w, v in self.weights.items()}
        return RelativeCurrent(self.basis, self.depth, weights, self.provenance, self.scale * t, self.tolerance * t)

    def consistency_violations(self) -> List[str]:
        """Flip and two-sided shift equations that fail beyond the tolerance."""
        violations = []
        letters = self.basis.all_letters()
        for w in self.words():
            value = self[w]
            if abs(value - self[invert(w)]) > self.tolerance:
                violations.append(f"flip {' '.join(w)}")
            if len(w) == self.depth:
                continue
            right = sum((self[w + (x,)] for x in letters if x != inverse_letter(w[-1])), Fraction(0))
            left = sum((self[(x,) + w] for x in letters if x != inverse_letter(w[0])), Fraction(0))
            if abs(value - right) > self.tolerance:
                violations.append(f"right shift {' '.join(w)}")
            if abs(value - left) > self.tolerance:
                violations.append(f"left shift {' '.join(w)}")
        return violations

    def to_frame(self) -> pl.DataFrame:
        words = sorted(self.weights, key=lambda w: self.basis.word_key(w))
        return pl.DataFrame({
            "word": [" ".join(w) for w in words],
            "weight": [_weight_text(self.weights[w]) for w in words],
        })

    def to_csv(self, path: Optional[str] = None) -> Optional[str]:
        return self.to_frame().write_csv(path)


def rational_current(alpha: Union[str, CyclicWord, Word], m: int, basis: RelativeBasis) -> RelativeCurrent:
    """Counts of each word in one period of the periodic lines of α and of its inverse."""
    if isinstance(alpha, str):
        alpha = CyclicWord.parse(alpha, basis)
    elif isinstance(alpha, Word):
        alpha = cyclic_reduce(alpha, basis)[0]
    if m < 1:
        raise ValueError(f"Depth must be positive, got {m}")
    if not is_nonperipheral(alpha, basis):
        raise ValueError(f"'{alpha}' is peripheral")
    if alpha.is_proper_power():
        raise ValueError(f"'{alpha}' is a proper power of '{alpha.root()}'")
    weights: Dict[WordTuple, Fraction] = {}
    for period in (alpha.letters, invert(alpha.letters)):
        n = len(period)
        for i in range(n):
            for j in range(1, m + 1):
                w = tuple(period[(i + k) % n] for k in range(j))
                if is_nonperipheral(w, basis):
                    weights[w] = weights.get(w, Fraction(0)) + 1
    return RelativeCurrent(basis, m, weights, alpha)


def pushforward(phi: Automorphism, eta: RelativeCurrent) -> RelativeCurrent:
    if eta.provenance is None:
        raise ValueError("Only currents of conjugacy classes can be pushed forward at finite depth")
    image = rational_current(phi(eta.provenance), eta.depth, eta.basis)
    return image.scaled(eta.scale) if eta.scale != 1 else image


def norm(eta: RelativeCurrent, j: int) -> Fraction:
    if not 1 <= j <= eta.depth:
        raise ValueError(f"Level {j} is outside depth {eta.depth}")
    return sum((v for w, v in eta.weights.items() if len(w) == j), Fraction(0))


def projective_distance(first: RelativeCurrent, second: RelativeCurrent, m: int) -> float:
    """Sup distance between level-1 normalized weights; a finite-depth surrogate metric."""
    for eta in (first, second):
        if eta.depth < m:
            raise ValueError(f"Current of depth {eta.depth} cannot be compared at depth {m}")
    n1, n2 = norm(first, 1), norm(second, 1)
    if not n1 or not n2:
        raise ValueError("Projective distance needs currents of positive norm")
    words = {w for w in first.weights if len(w) <= m} | {w for w in second.weights if len(w) <= m}
    return max((abs(float(first[w] / n1 - second[w] / n2)) for w in words), default=0.0)


def support_at_depth(eta: RelativeCurrent, m: int) -> FrozenSet[WordTuple]:
    return frozenset(w for w, v in eta.weights.items() if len(w) <= m and v > 0)


# Block system of the attracting lamination

@dataclass
class BlockSystem:
    """Leaf blocks of one length and how the map moves them.

    ``children[i]`` counts, for block i, the blocks starting inside the
    image of its first edge. Leaves must map to leaves without cancellation.
    """
    rep: GraphMapRep
    depth: int
    states: Tuple[WordTuple, ...]
    children: List[Dict[int, int]]
    index: Dict[WordTuple, int] = field(init=False)

    def __post_init__(self):
        self.index = {s: i for i, s in enumerate(self.states)}

    def step(self, counts: np.ndarray) -> np.ndarray:
        out = np.zeros(len(self.states), dtype=object)
        for parent, kids in enumerate(self.children):
            if counts[parent]:
                for child, k in kids.items():
                    out[child] += k * counts[parent]
        return out

    def cyclic_counts(self, loop: Tuple[str, ...]) -> Optional[np.ndarray]:
        """Block counts of a cyclic loop, or None when a block is not a leaf block."""
        counts = np.zeros(len(self.states), dtype=object)
        n = len(loop)
        for i in range(n):
            block = tuple(loop[(i + k) % n] for k in range(self.depth))
            if block not in self.index:
                return None
            counts[self.index[block]] += 1
        return counts


def _check_single_letter_labels(rep: GraphMapRep) -> None:
    for e, label in rep.graph.edge_labels.items():
        if len(label) != 1:
            raise NotImplementedError(
                f"Edge '{e}' carries '{label}'; block systems need every edge to carry one basis letter")


def block_system(rep: GraphMapRep, depth: int) -> BlockSystem:
    rep = original(rep)
    _check_single_letter_labels(rep)
    language = attracting_language(rep, depth)
    states = tuple(sorted((w for w in language.words if len(w) == depth), key=word_sort_key))
    index = {s: i for i, s in enumerate(states)}
    children = []
    for s in states:
        image = [d for x in s for d in edge_tokens(rep.image(x))]
        if tighten(image) != tuple(image):
            raise NotImplementedError(f"Leaf block '{' '.join(s)}' cancels under the map")
        kids: Dict[int, int] = {}
        for i in range(len(edge_tokens(rep.image(s[0])))):
            child = tuple(image[i:i + depth])
            if child not in index:
                raise ValueError(f"Block '{' '.join(child)}' from '{' '.join(s)}' is not a leaf block")
            kids[index[child]] = kids.get(index[child], 0) + 1
        children.append(kids)
    return BlockSystem(rep, depth, states, children)


def _block_frequencies(system: BlockSystem, tol: float) -> Tuple[Dict[WordTuple, float], float, float]:
    """Limiting frequencies of leaf blocks in one orientation, the growth rate and its enclosure width."""
    rep = system.rep
    top = set(rep.stratum(rep.top))
    g = nx.DiGraph()
    g.add_nodes_from(range(len(system.states)))
    for parent, kids in enumerate(system.children):
        g.add_edges_from((parent, child) for child in kids)
    anchored = [i for i, s in enumerate(system.states) if base_letter(s[0]) in top]
    seed = anchored[0]
    component = sorted(next(c for c in nx.strongly_connected_components(g) if seed in c))
    position = {s: i for i, s in enumerate(component)}
    M = np.zeros((len(component), len(component)), dtype=np.int64)
    for parent in component:
        for child, k in system.children[parent].items():
            if child in position:
                M[position[child], position[parent]] += k
    pf = pf_data(M, tol, check=False)
    lam = pf.value

    freq = {system.states[i]: float(pf.right[position[i]]) for i in component}
    downstream = sorted(nx.descendants(g, seed) - set(component))
    if downstream:
        values = {i: 0.0 for i in downstream}
        for _ in range(10000):
            updated = {i: 0.0 for i in downstream}
            for parent in component + downstream:
                source = pf.right[position[parent]] if parent in position else values[parent]
                for child, k in system.children[parent].items():
                    if child in updated:
                        updated[child] += k * source
            updated = {i: v / lam for i, v in updated.items()}
            change = max(abs(updated[i] - values[i]) for i in downstream)
            values = updated
            if change <= tol * 1e-3:
                break
        else:
            raise ValueError("Frequencies of blocks starting in lower strata do not settle")
        for i, v in values.items():
            freq[system.states[i]] = v
    return freq, lam, float(pf.upper - pf.lower)


def frequency_current(rep: GraphMapRep, m: int, tol: float = 1e-10) -> RelativeCurrent:
    """Normalized frequencies of words along a generic leaf of the attracting lamination.

    Needs a primitive top matrix and leaves that map without cancellation on
    a graph whose edges carry single basis letters.
    """
    if m < 1:
        raise ValueError(f"Depth must be positive, got {m}")
    rep = original(rep)
    system = block_system(rep, max(m, 2))
    freq, lam, width = _block_frequencies(system, tol)

    oriented: Dict[WordTuple, float] = {}
    for block, value in freq.items():
        for j in range(1, m + 1):
            oriented[block[:j]] = oriented.get(block[:j], 0.0) + value
    graph = rep.graph
    raw = {}
    for w, value in oriented.items():
        letters = tuple(graph.label(x).letters[0] for x in w)
        for key in (letters, invert(letters)):
            if is_nonperipheral(key, rep.basis):
                raw[key] = raw.get(key, Fraction(0)) + Fraction(value)
    total = sum((v for w, v in raw.items() if len(w) == 1), Fraction(0))
    if not total:
        raise ValueError("Generic leaf crosses no non-peripheral letter")
    weights = {w: v / total for w, v in raw.items()}
    tolerance = Fraction(max(width / lam, tol)) * 4 * max(1, len(system.states))
    current = RelativeCurrent(rep.basis, m, weights, tolerance=tolerance)
    violations = current.consistency_violations()
    if violations:
        logger.warning(f"Frequency current violates {len(violations)} consistency equations, e.g. {violations[0]}")
    return current


def _current_from_counts(system: BlockSystem, counts: np.ndarray, m: int) -> RelativeCurrent:
    graph = system.rep.graph
    basis = system.rep.basis
    weights: Dict[WordTuple, Fraction] = {}
    for i, c in enumerate(counts):
        if not c:
            continue
        block = tuple(graph.label(x).letters[0] for x in system.states[i])
        for j in range(1, m + 1):
            for key in (block[:j], invert(block[:j])):
                if is_nonperipheral(key, basis):
                    weights[key] = weights.get(key, Fraction(0)) + int(c)
    return RelativeCurrent(basis, m, weights)


@dataclass
class NSReport:
    """North-south convergence of iterated rational currents toward the frequency current."""
    ns: List[int]
    distances: List[float]
    ratios: List[float]
    modes: List[str]
    lengths: List[int]
    pf_value: float
    distance_kind: str = "finite-depth surrogate (sup of level-1 normalized weights)"

    @property
    def eventually_decreasing(self) -> bool:
        d = self.distances
        if len(d) < 2:
            return True
        for start in range(len(d) // 2 + 1):
            if all(b <= a + 1e-12 for a, b in zip(d[start:], d[start + 1:])):
                return True
        return False

    def ratio_converged(self, tolerance: float = 1e-3) -> bool:
        return bool(self.ratios) and abs(self.ratios[-1] - self.pf_value) <= tolerance

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame({
            "n": self.ns,
            "mode": self.modes,
            "length": self.lengths,
            "distance": self.distances,
            "ratio": self.ratios,
        })

    def to_dict(self) -> dict:
        return {
            "n": self.ns,
            "distances": self.distances,
            "ratios": self.ratios,
            "modes": self.modes,
            "lengths": self.lengths,
            "pf_value": self.pf_value,
            "distance_kind": self.distance_kind,
            "eventually_decreasing": self.eventually_decreasing,
            "ratio_converged": self.ratio_converged(),
        }


def ns_experiment(rep: GraphMapRep, alpha: Union[str, CyclicWord], n_max: int, m: int,
                  explicit_cap: int = 2000, tol: float = 1e-10, verbose: bool = False) -> NSReport:
    """Push the current of α forward n_max times and compare with the frequency current.

    Words longer than ``explicit_cap`` are replaced by their block counts,
    which the block system moves exactly once the loop is made of leaf blocks.
    """
    rep = original(rep)
    basis = rep.basis
    if isinstance(alpha, str):
        alpha = CyclicWord.parse(alpha, basis)
    eta = rational_current(alpha, m, basis)
    if n_max <= 0:
        return NSReport([], [], [], [], [], float("nan"))
    target = frequency_current(rep, m, tol)
    system = block_system(rep, max(m, 2))
    phi = rep.automorphism()
    top = transition_matrix(rep, rep.top, tol)
    if top.pf is None:
        raise ValueError(f"Top stratum matrix is {top.matrix_class}")
    lam = top.pf.value

    report = NSReport([], [], [], [], [], lam)
    word, counts = alpha, None
    previous = norm(eta, 1)
    for n in tqdm(range(1, n_max + 1), desc="North-south", disable=not verbose):
        if counts is not None:
            counts = system.step(counts)
        else:
            word = phi(word)
            if len(word) > explicit_cap:
                loop = cyclic_tighten(rep.graph.loop_of(word.word()))
                counts = system.cyclic_counts(tuple(edge_tokens(loop)))
                if counts is None:
                    raise ValueError(
                        f"φ^{n}({alpha}) has length {len(word)} above the cap {explicit_cap} and is not made of "
                        f"leaf blocks; use a smaller n_max")
                logger.info(f"Switching to block counts at n={n} (length {len(word)})")
        if counts is None:
            eta = rational_current(word, m, basis)
            mode, length = "explicit", len(word)
        else:
            eta = _current_from_counts(system, counts, m)
            mode, length = "vector", int(sum(counts))
        current = norm(eta, 1)
        report.ns.append(n)
        report.distances.append(projective_distance(eta, target, m))
        report.ratios.append(float(current / previous))
        report.modes.append(mode)
        report.lengths.append(length)
        previous = current
    return report
