"""Finite-depth languages of attracting laminations and of simplicial trees."""
from dataclasses import dataclass
import logging
from typing import FrozenSet, List, Optional, Sequence, Set, Tuple, Union

from tqdm import tqdm

from reltrack.freegroup import Word, invert, inverse_letter, lexical_key
from reltrack.graphmap import (
    GraphMapRep,
    MapOverflow,
    MarkedGraph,
    edge_tokens,
    original,
    realized_ffs,
    transition_matrix,
)

logger = logging.getLogger(__name__)

WordTuple = Tuple[str, ...]


def word_sort_key(word: Sequence[str]):
    return (len(word), tuple(lexical_key(x) for x in word))


def subwords(path: Sequence[str], m: int) -> Set[WordTuple]:
    """Every subword of length 1..m, in both orientations."""
    words = set()
    n = len(path)
    for i in range(n):
        for j in range(i + 1, min(i + m, n) + 1):
            w = tuple(path[i:j])
            words.add(w)
            words.add(invert(w))
    return words


def _as_word(word: Union[str, Sequence[str], Word]) -> WordTuple:
    if isinstance(word, str):
        return tuple(word.split())
    return tuple(word)


@dataclass(frozen=True)
class LeafLanguage:
    """Reduced words of length at most ``depth`` crossed by leaves.

    ``alphabet`` is ``"edges"`` for languages over the edges of a graph and
    ``"basis"`` for languages over the group basis.
    """
    depth: int
    words: FrozenSet[WordTuple]
    alphabet: str
    generator: str
    rounds: int = 0

    def __contains__(self, word) -> bool:
        return _as_word(word) in self.words

    def __len__(self) -> int:
        return len(self.words)

    def sorted_words(self) -> List[WordTuple]:
        return sorted(self.words, key=word_sort_key)

    def truncate(self, m: int) -> "LeafLanguage":
        if m > self.depth:
            raise ValueError(f"Cannot truncate a depth {self.depth} language to depth {m}")
        return LeafLanguage(m, frozenset(w for w in self.words if len(w) <= m), self.alphabet, self.generator, self.rounds)

    def to_basis(self, graph: MarkedGraph) -> "LeafLanguage":
        if self.alphabet == "basis":
            return self
        labels = {e: graph.edge_labels[e].letters for e in graph.edges}
        if any(len(label) != 1 for label in labels.values()):
            raise NotImplementedError("Translating languages needs every edge to carry a single basis letter")
        words = frozenset(tuple(graph.label(x).letters[0] for x in w) for w in self.words)
        return LeafLanguage(self.depth, words, "basis", self.generator, self.rounds)

    def to_text(self) -> str:
        return "\n".join(" ".join(w) for w in self.sorted_words())


def attracting_language(rep: GraphMapRep, m: int, max_length: int = 500000, verbose: bool = False) -> LeafLanguage:
    """Language of the attracting lamination of the top stratum.

    Iterates every top stratum edge and collects subwords until two further
    rounds add nothing; the number of rounds is recorded.
    """
    rep = original(rep)
    top = transition_matrix(rep, rep.top)
    if top.matrix_class != "primitive":
        raise ValueError(f"Top stratum matrix is {top.matrix_class}; the generic leaf needs a primitive matrix")
    generator = f"iterates of {', '.join(top.edges)}"
    if m <= 0:
        return LeafLanguage(0, frozenset(), "edges", generator, 0)

    paths = {e: (e,) for e in top.edges}
    words: Set[WordTuple] = set()
    quiet_rounds = rounds = 0
    with tqdm(desc="Language rounds", disable=not verbose) as progress:
        while quiet_rounds < 2:
            rounds += 1
            paths = {e: rep.substitute(p) for e, p in paths.items()}
            if any(len(p) > max_length for p in paths.values()):
                raise MapOverflow(max_length)
            found = set(words)
            for p in paths.values():
                found |= subwords(edge_tokens(p), m)
            quiet_rounds = quiet_rounds + 1 if found == words else 0
            words = found
            progress.update(1)
    logger.debug(f"Depth {m} language stabilized after {rounds} rounds with {len(words)} words")
    return LeafLanguage(m, frozenset(words), "edges", generator, rounds)


def repelling_language(rep: GraphMapRep, m: int, **kwargs) -> LeafLanguage:
    """Language of the lamination of the inverse, read on a rose filtered by the peripheral blocks."""
    rep = original(rep)
    basis = rep.basis
    filtration = [{x for block in basis.blocks for x in block}] if basis.blocks else []
    return attracting_language(rep.inverse_rose(filtration), m, **kwargs)


def languages_equal_at_depth(first: LeafLanguage, second: LeafLanguage, m: int) -> bool:
    for language in (first, second):
        if language.depth < m:
            raise ValueError(f"Language of depth {language.depth} cannot be compared at depth {m}")
    return first.truncate(m).words == second.truncate(m).words


def dual_language_simplicial(tree, m: int) -> LeafLanguage:
    """Words read along immersed paths in the core graphs of the vertex groups of ``tree``.

    These are the lines of zero translation length, the dual lamination of a
    simplicial tree with trivial edge stabilizers.
    """
    system = realized_ffs(tree.graph, tree.collapsed)
    words: Set[WordTuple] = set()
    for factor in system.factors:
        out = factor._out

        def walk(v, word):
            if word:
                words.add(tuple(word))
            if len(word) == m:
                return
            for x, w in out[v].items():
                if word and x == inverse_letter(word[-1]):
                    continue
                word.append(x)
                walk(w, word)
                word.pop()

        for v in factor.vertices:
            walk(v, [])
    generators = "; ".join(",".join(str(g) for g in f.generators) for f in system.factors)
    return LeafLanguage(max(m, 0), frozenset(words), "basis", f"vertex groups <{generators}>")


@dataclass
class RecurrenceGap:
    gap: Optional[int]
    window: int
    diagnostic: str = ""

    @property
    def unbounded(self) -> bool:
        return self.gap is None

    def to_dict(self) -> dict:
        return {"gap": self.gap, "unbounded": self.unbounded, "window": self.window, "diagnostic": self.diagnostic}


def leaf_prefix(rep: GraphMapRep, window: int, seed: Optional[str] = None) -> List[str]:
    """Up to ``window`` edges of an iterate of a top stratum edge."""
    rep = original(rep)
    seed = seed or rep.stratum(rep.top)[0]
    path = (seed,)
    while len(path) < window:
        grown = rep.substitute(path)
        if len(grown) <= len(path):
            break
        path = grown
    return edge_tokens(path)[:window]


def recurrence_gap(rep: GraphMapRep, m: int, window: int) -> RecurrenceGap:
    """Largest gap between occurrences of a length-m leaf word in a leaf prefix.

    The distance from the start of the prefix to the first occurrence counts
    as a gap. An unoriented occurrence (the word or its inverse) counts.
    """
    prefix = leaf_prefix(rep, window)
    top = transition_matrix(original(rep), original(rep).top)
    if top.matrix_class == "primitive":
        candidates = {w for w in attracting_language(rep, m).words if len(w) == m}
    else:
        candidates = {w for w in subwords(prefix, m) if len(w) == m}
    if not candidates:
        return RecurrenceGap(None, window, f"no words of length {m} in a prefix of length {len(prefix)}")

    worst = 0
    seen = set()
    for w in sorted(candidates, key=word_sort_key):
        key = min(w, invert(w), key=word_sort_key)
        if key in seen:
            continue
        seen.add(key)
        targets = {w, invert(w)}
        positions = [i for i in range(len(prefix) - m + 1) if tuple(prefix[i:i + m]) in targets]
        if len(positions) < 2:
            return RecurrenceGap(
                None, window, f"'{' '.join(w)}' occurs {len(positions)} times in a prefix of length {len(prefix)}")
        gaps = [positions[0]] + [b - a for a, b in zip(positions, positions[1:])]
        worst = max(worst, max(gaps))
    return RecurrenceGap(worst, window)
