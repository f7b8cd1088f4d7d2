"""Words, cyclic words, Stallings core graphs and free factor systems.

Letters are basis symbols written as plain strings; the inverse of ``x`` is
``x'``. A word is a tuple of such letters, always kept freely reduced. The
relative basis fixes the letter order used for canonical forms and the
peripheral blocks that make up the basis-aligned free factor system A.
"""
from dataclasses import dataclass, field
from functools import cached_property
import itertools
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union


def inverse_letter(x: str) -> str:
    return x[:-1] if x.endswith("'") else x + "'"

def base_letter(x: str) -> str:
    return x[:-1] if x.endswith("'") else x

def is_inverse(x: str) -> bool:
    return x.endswith("'")

def invert(letters: Sequence[str]) -> Tuple[str, ...]:
    return tuple(inverse_letter(x) for x in reversed(letters))

def free_reduce(letters: Iterable[str]) -> Tuple[str, ...]:
    stack = []
    for x in letters:
        if stack and stack[-1] == inverse_letter(x):
            stack.pop()
        else:
            stack.append(x)
    return tuple(stack)

def lexical_key(x: str) -> Tuple[str, bool]:
    return (base_letter(x), is_inverse(x))


@dataclass(frozen=True)
class RelativeBasis:
    """A basis of F split into peripheral blocks and cofactor letters.

    Each block spans one free factor of the basis-aligned system A; the
    letters outside every block are the cofactor letters b_j.
    """
    letters: Tuple[str, ...]
    blocks: Tuple[Tuple[str, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(self.letters))
        object.__setattr__(self, "blocks", tuple(tuple(block) for block in self.blocks))
        if len(set(self.letters)) != len(self.letters):
            raise ValueError(f"Repeated letter in basis {self.letters}")
        for x in self.letters:
            if not x or "'" in x or any(c.isspace() for c in x):
                raise ValueError(f"Invalid basis letter '{x}'")
        seen = set()
        for block in self.blocks:
            if not block:
                raise ValueError("Empty peripheral block")
            for x in block:
                if x not in self.letters:
                    raise ValueError(f"Unknown symbol '{x}' in peripheral block {block}")
                if x in seen:
                    raise ValueError(f"Letter '{x}' appears in two peripheral blocks")
                seen.add(x)

    @classmethod
    def free(cls, letters: Sequence[str]) -> "RelativeBasis":
        return cls(tuple(letters), ())

    @property
    def rank(self) -> int:
        return len(self.letters)

    @property
    def cofactor_letters(self) -> Tuple[str, ...]:
        peripheral = {x for block in self.blocks for x in block}
        return tuple(x for x in self.letters if x not in peripheral)

    @cached_property
    def _positions(self) -> Dict[str, int]:
        return {x: i for i, x in enumerate(self.letters)}

    def letter_key(self, x: str) -> int:
        """Position in the order a < a' < b < b' < ... of the declaration."""
        self.check(x)
        return 2 * self._positions[base_letter(x)] + (1 if is_inverse(x) else 0)

    def word_key(self, word: Union["Word", Sequence[str]]) -> Tuple[int, Tuple[int, ...]]:
        letters = word.letters if isinstance(word, Word) else tuple(word)
        return (len(letters), tuple(self.letter_key(x) for x in letters))

    def check(self, x: str) -> None:
        if base_letter(x) not in self._positions:
            raise ValueError(f"Unknown symbol '{x}' for basis {','.join(self.letters)}")

    def all_letters(self) -> Tuple[str, ...]:
        return tuple(y for x in self.letters for y in (x, inverse_letter(x)))

    def block_of(self, x: str) -> Optional[int]:
        for i, block in enumerate(self.blocks):
            if base_letter(x) in block:
                return i
        return None

    def peripheral_system(self) -> "FreeFactorSystem":
        return FreeFactorSystem.from_blocks(self.blocks, self.rank)


@dataclass(frozen=True)
class Word:
    """A freely reduced word. Construction reduces its input."""
    letters: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", free_reduce(self.letters))

    @classmethod
    def parse(cls, text: str, basis: Optional[RelativeBasis] = None) -> "Word":
        return reduce(text.split(), basis)

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return Word(self.letters[index])
        return self.letters[index]

    def __mul__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def __pow__(self, n: int) -> "Word":
        if n < 0:
            return self.inverse() ** (-n)
        return Word(self.letters * n)

    def __str__(self) -> str:
        return " ".join(self.letters)

    def inverse(self) -> "Word":
        return Word(invert(self.letters))

    @property
    def alphabet(self) -> FrozenSet[str]:
        return frozenset(base_letter(x) for x in self.letters)

    def is_trivial(self) -> bool:
        return not self.letters


def reduce(letters: Iterable[str], basis: Optional[RelativeBasis] = None) -> Word:
    letters = tuple(letters)
    if basis is not None:
        for x in letters:
            basis.check(x)
    return Word(letters)


def _canonical_rotation(letters: Tuple[str, ...], key: Callable[[str], object]) -> Tuple[str, ...]:
    n = len(letters)
    if n == 0:
        return ()
    best = None
    for seq in (letters, invert(letters)):
        keys = [key(x) for x in seq]
        doubled = keys + keys
        for r in range(n):
            candidate = (doubled[r:r + n], r, seq)
            if best is None or candidate[0] < best[0]:
                best = candidate
    _, r, seq = best
    return seq[r:] + seq[:r]


@dataclass(frozen=True)
class CyclicWord:
    """A cyclically reduced word up to rotation and inversion.

    ``letters`` holds the canonical representative: the least rotation of the
    word and of its inverse in the basis order. Build instances with
    :func:`cyclic_reduce` or :meth:`parse`.
    """
    letters: Tuple[str, ...] = ()

    @classmethod
    def parse(cls, text: str, basis: Optional[RelativeBasis] = None) -> "CyclicWord":
        return cyclic_reduce(Word.parse(text, basis), basis)[0]

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __str__(self) -> str:
        return " ".join(self.letters)

    def word(self) -> Word:
        return Word(self.letters)

    def root(self) -> "CyclicWord":
        n = len(self.letters)
        for p in range(1, n + 1):
            if n % p == 0 and self.letters == self.letters[:p] * (n // p):
                return CyclicWord(self.letters[:p])
        return self

    def is_proper_power(self) -> bool:
        return len(self.root()) < len(self.letters)

    @property
    def alphabet(self) -> FrozenSet[str]:
        return frozenset(base_letter(x) for x in self.letters)


def cyclic_reduce(w: Union[Word, Sequence[str]], basis: Optional[RelativeBasis] = None) -> Tuple[CyclicWord, Word]:
    """Return the canonical cyclic word of ``w`` and the stripped conjugator.

    ``w`` equals ``conjugator * core * conjugator^-1`` where ``core`` is the
    cyclically reduced middle of ``w`` before it is rotated into canonical form.
    """
    if not isinstance(w, Word):
        w = reduce(w, basis)
    letters = w.letters
    i, j = 0, len(letters) - 1
    while i < j and letters[i] == inverse_letter(letters[j]):
        i += 1
        j -= 1
    core = letters[i:j + 1]
    key = basis.letter_key if basis is not None else lexical_key
    return CyclicWord(_canonical_rotation(core, key)), Word(letters[:i])


@dataclass(frozen=True)
class CoreGraph:
    """Folded Stallings graph of a finitely generated subgroup.

    ``edges`` holds (origin, positive letter, terminus) triples; reading an
    inverse letter traverses an edge backwards. ``base`` is None for the
    basepoint-free core used in conjugacy questions.
    """
    vertices: Tuple[int, ...]
    edges: Tuple[Tuple[int, str, int], ...]
    base: Optional[int] = 0
    generators: Tuple[Word, ...] = field(default=(), compare=False)

    @cached_property
    def _out(self) -> Dict[int, Dict[str, int]]:
        out = {v: {} for v in self.vertices}
        for u, x, v in self.edges:
            out[u][x] = v
            out[v][inverse_letter(x)] = u
        return out

    @property
    def rank(self) -> int:
        if not self.vertices:
            return 0
        return len(self.edges) - len(self.vertices) + 1

    def read(self, start: int, letters: Iterable[str]) -> Optional[int]:
        v = start
        for x in letters:
            v = self._out[v].get(x)
            if v is None:
                return None
        return v

    def contains(self, word: Word) -> bool:
        if self.base is None:
            raise ValueError("Membership needs a based core graph")
        return self.read(self.base, word.letters) == self.base

    def core(self) -> "CoreGraph":
        if self.base is None:
            return self
        return _trimmed(self._out, None, self.generators)

    def immerses_into(self, other: "CoreGraph") -> bool:
        """True iff the subgroup of ``self`` is conjugate into that of ``other``."""
        source, target = self.core(), other.core()
        if not source.edges:
            return True
        start = source.vertices[0]
        for image in target.vertices:
            assignment = {start: image}
            queue = [start]
            ok = True
            while queue and ok:
                v = queue.pop()
                for x, w in source._out[v].items():
                    w_image = target._out[assignment[v]].get(x)
                    if w_image is None:
                        ok = False
                        break
                    if w in assignment:
                        if assignment[w] != w_image:
                            ok = False
                            break
                    else:
                        assignment[w] = w_image
                        queue.append(w)
            if ok:
                return True
        return False

    def to_dot(self, name: str = "core") -> str:
        lines = [f"digraph {name} {{"]
        for v in self.vertices:
            shape = "doublecircle" if v == self.base else "circle"
            lines.append(f'  {v} [shape={shape}];')
        for u, x, v in self.edges:
            lines.append(f'  {u} -> {v} [label="{x}"];')
        lines.append("}")
        return "\n".join(lines)


class _Folder:
    """Union-find folding of labelled edges; vertex 0 is the base."""
    def __init__(self):
        self.parent = {}
        self.out = {}
        self.pending = []
        self.add_vertex()

    def add_vertex(self) -> int:
        v = len(self.parent)
        self.parent[v] = v
        self.out[v] = {}
        return v

    def find(self, v: int) -> int:
        while self.parent[v] != v:
            self.parent[v] = self.parent[self.parent[v]]
            v = self.parent[v]
        return v

    def add_edge(self, u: int, x: str, v: int) -> None:
        self.pending.append((u, x, v))
        while self.pending:
            u, x, v = self.pending.pop()
            self._attach(u, x, v)
            self._attach(v, inverse_letter(x), u)

    def _attach(self, u: int, x: str, v: int) -> None:
        u, v = self.find(u), self.find(v)
        w = self.out[u].get(x)
        if w is None:
            self.out[u][x] = v
        elif self.find(w) != v:
            self._merge(w, v)

    def _merge(self, a: int, b: int) -> None:
        a, b = self.find(a), self.find(b)
        if a == b:
            return
        if a > b:
            a, b = b, a
        self.parent[b] = a
        for x, w in self.out.pop(b).items():
            self.pending.append((a, x, w))

    def adjacency(self) -> Dict[int, Dict[str, int]]:
        return {u: {x: self.find(v) for x, v in targets.items()} for u, targets in self.out.items()}


def _trimmed(out: Mapping[int, Mapping[str, int]], base: Optional[int], generators: Tuple[Word, ...]) -> CoreGraph:
    out = {u: dict(targets) for u, targets in out.items()}
    hanging = [v for v in out if len(out[v]) == 1 and v != base]
    while hanging:
        v = hanging.pop()
        if v not in out or len(out[v]) != 1 or v == base:
            continue
        (x, w), = out.pop(v).items()
        if w in out:
            out[w].pop(inverse_letter(x), None)
            if len(out[w]) == 1 and w != base:
                hanging.append(w)
    if not out:
        return CoreGraph((0,), (), base if base is None else 0, generators)

    # canonical numbering: breadth first from the base (or the least vertex)
    start = base if base is not None else min(out)
    order = {start: 0}
    queue = [start]
    while queue:
        u = queue.pop(0)
        for x in sorted(out[u], key=lexical_key):
            v = out[u][x]
            if v not in order:
                order[v] = len(order)
                queue.append(v)
    edges = sorted(
        (order[u], x, order[v]) for u in out for x, v in out[u].items() if not is_inverse(x)
    )
    return CoreGraph(tuple(range(len(order))), tuple(edges), None if base is None else 0, generators)


def core_graph(generators: Iterable[Union[Word, Sequence[str]]], basis: Optional[RelativeBasis] = None) -> CoreGraph:
    """Stallings graph of the subgroup generated by ``generators``, based at 0."""
    words = tuple(g if isinstance(g, Word) else reduce(g, basis) for g in generators)
    folder = _Folder()
    for w in words:
        if w.is_trivial():
            continue
        v = 0
        for i, x in enumerate(w.letters):
            u = 0 if i == len(w) - 1 else folder.add_vertex()
            folder.add_edge(v, x, u)
            v = u
    out = folder.adjacency()
    live = {folder.find(v) for v in out}
    return _trimmed({v: out[v] for v in live}, 0, words)


def is_conjugate_into(g: CyclicWord, H: CoreGraph) -> bool:
    if not len(g):
        return True
    core = H.core()
    return any(core.read(v, g.letters) == v for v in core.vertices)


@dataclass(frozen=True)
class FreeFactorSystem:
    factors: Tuple[CoreGraph, ...]
    ambient_rank: int

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(f.core() for f in self.factors))
        for f in self.factors:
            if f.rank < 1:
                raise ValueError("Free factor systems do not contain trivial factors")
        if self.rank > self.ambient_rank:
            raise ValueError(f"Factor ranks sum to {self.rank}, more than the ambient rank {self.ambient_rank}")
        for i, j in itertools.permutations(range(len(self.factors)), 2):
            if self.factors[i].immerses_into(self.factors[j]):
                raise ValueError(f"Factors {i} and {j} are not pairwise non-conjugate")

    @classmethod
    def from_blocks(cls, blocks: Iterable[Sequence[str]], ambient_rank: int) -> "FreeFactorSystem":
        return cls(tuple(core_graph([Word((x,)) for x in block]) for block in blocks), ambient_rank)

    @classmethod
    def from_subgroups(cls, subgroups: Iterable[Sequence[Word]], ambient_rank: int) -> "FreeFactorSystem":
        return cls(tuple(core_graph(gens) for gens in subgroups), ambient_rank)

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def rank(self) -> int:
        return sum(f.rank for f in self.factors)

    @property
    def cofactor_rank(self) -> int:
        return self.ambient_rank - self.rank

    def carries(self, g: CyclicWord) -> bool:
        return any(is_conjugate_into(g, f) for f in self.factors)

    def describe(self) -> List[List[str]]:
        return [[str(w) for w in f.generators] for f in self.factors]


def ffs_partial_order(A: FreeFactorSystem, D: FreeFactorSystem) -> str:
    if A.ambient_rank != D.ambient_rank:
        raise ValueError(f"Ambient rank mismatch: {A.ambient_rank} vs {D.ambient_rank}")
    below = all(any(f.immerses_into(g) for g in D.factors) for f in A.factors)
    above = all(any(g.immerses_into(f) for f in A.factors) for g in D.factors)
    if below and above:
        return "equal"
    if below:
        return "below"
    if above:
        return "above"
    return "incomparable"


def classify_ffs(A: FreeFactorSystem) -> str:
    k, N = A.k, A.cofactor_rank
    if k == 0 or (k == 1 and N == 0):
        return "trivial"
    if (k, N) == (2, 0):
        return "empty_complex"
    if (k, N) == (1, 1):
        return "zero_dimensional_hnn"
    if (k, N) == (3, 0):
        return "zero_dimensional_triple"
    return "non_exceptional"


def zeta(A: FreeFactorSystem) -> int:
    return A.k + A.cofactor_rank


def is_nonperipheral(w: Union[Word, CyclicWord, Sequence[str]], basis: RelativeBasis) -> bool:
    alphabet = frozenset(base_letter(x) for x in w)
    if not alphabet:
        return False
    return not any(alphabet <= set(block) for block in basis.blocks)


def fold_marking(
        edges: Mapping[str, Tuple[str, str]],
        marking: Mapping[str, Sequence[str]],
        base: str,
    ) -> Dict[str, Word]:
    """Fold the bouquet of marking paths onto a graph, tracking basis labels.

    ``marking`` sends every basis letter to a loop of signed edge names at
    ``base``. The result assigns each graph edge the basis word it carries,
    so that reading any loop at ``base`` through the labels recovers the
    basis word whose marking it is. Raises if the marking is not a homotopy
    equivalence.
    """
    image = {0: base}
    gamma: Dict[int, list] = {}
    vertex_ids = itertools.count(1)
    edge_ids = itertools.count()
    for letter, path in marking.items():
        if not path:
            raise ValueError(f"Marking of '{letter}' is the trivial path")
        u = 0
        for i, e in enumerate(path):
            name = base_letter(e)
            if name not in edges:
                raise ValueError(f"Unknown edge '{e}' in the marking of '{letter}'")
            o, t = edges[name]
            if is_inverse(e):
                o, t = t, o
            if image[u] != o:
                raise ValueError(f"Marking of '{letter}' breaks at position {i}")
            if i == len(path) - 1:
                if t != base:
                    raise ValueError(f"Marking of '{letter}' is not a loop at {base}")
                v = 0
            else:
                v = next(vertex_ids)
                image[v] = t
            label = (letter,) if i == 0 else ()
            if is_inverse(e):
                gamma[next(edge_ids)] = [v, u, name, invert(label)]
            else:
                gamma[next(edge_ids)] = [u, v, name, label]
            u = v

    def far(eid, forward):
        return gamma[eid][1] if forward else gamma[eid][0]

    def half_label(eid, forward):
        return gamma[eid][3] if forward else invert(gamma[eid][3])

    def adjust(x, g):
        g_inv = invert(g)
        for edge in gamma.values():
            if edge[0] == x:
                edge[3] = free_reduce(g_inv + edge[3])
            if edge[1] == x:
                edge[3] = free_reduce(edge[3] + g)

    def merge(a, b):
        for edge in gamma.values():
            if edge[0] == a:
                edge[0] = b
            if edge[1] == a:
                edge[1] = b

    while True:
        seen, fold = {}, None
        for eid, (o, t, name, _) in gamma.items():
            for vertex, letter, forward in ((o, name, True), (t, name + "'", False)):
                other = seen.setdefault((vertex, letter), (eid, forward))
                if other != (eid, forward):
                    fold = (vertex, other, (eid, forward))
                    break
            if fold:
                break
        if fold is None:
            break
        v, (e1, f1), (e2, f2) = fold
        u1, u2 = far(e1, f1), far(e2, f2)
        h1, h2 = half_label(e1, f1), half_label(e2, f2)
        if u1 == u2:
            if h1 != h2:
                raise ValueError("Marking is not injective on fundamental groups")
            del gamma[e2]
        elif u2 not in (0, v):
            adjust(u2, free_reduce(invert(h2) + h1))
            merge(u2, u1)
        elif u1 not in (0, v):
            adjust(u1, free_reduce(invert(h1) + h2))
            merge(u1, u2)
        else:
            if u1 == v:
                adjust(v, free_reduce(invert(h1) + h2))
            else:
                adjust(v, free_reduce(invert(h2) + h1))
            merge(v, 0)

    names = sorted(edge[2] for edge in gamma.values())
    live = {0} | {edge[0] for edge in gamma.values()} | {edge[1] for edge in gamma.values()}
    graph_vertices = {o for o, _ in edges.values()} | {t for _, t in edges.values()} | {base}
    if names != sorted(edges) or len(live) != len(graph_vertices) or {image[v] for v in live} != graph_vertices:
        raise ValueError("Marking is not a homotopy equivalence onto the graph")
    if len(edges) - len(graph_vertices) + 1 != len(marking):
        raise ValueError("Marking does not match the rank of the graph")
    return {edge[2]: Word(edge[3]) for edge in gamma.values()}


@dataclass(frozen=True)
class Automorphism:
    """An automorphism of F given by the images of the basis letters."""
    basis: RelativeBasis
    images: Mapping[str, Word]

    def __post_init__(self):
        images = {}
        for x in self.basis.letters:
            if x not in self.images:
                raise ValueError(f"No image given for '{x}'")
            w = self.images[x]
            images[x] = w if isinstance(w, Word) else reduce(w, self.basis)
            if images[x].is_trivial():
                raise ValueError(f"Image of '{x}' is trivial")
        extra = set(self.images) - set(self.basis.letters)
        if extra:
            raise ValueError(f"Unknown symbol '{sorted(extra)[0]}' in automorphism")
        object.__setattr__(self, "images", images)

    @classmethod
    def identity(cls, basis: RelativeBasis) -> "Automorphism":
        return cls(basis, {x: Word((x,)) for x in basis.letters})

    @classmethod
    def parse(cls, text: str, basis: RelativeBasis) -> "Automorphism":
        images = {}
        for clause in text.split(";"):
            if not clause.strip():
                continue
            if "->" not in clause:
                raise ValueError(f"Expected 'x->word' in '{clause.strip()}'")
            x, image = clause.split("->", 1)
            images[x.strip()] = Word.parse(image, basis)
        return cls(basis, images)

    def __call__(self, w):
        if isinstance(w, CyclicWord):
            return cyclic_reduce(self(w.word()), self.basis)[0]
        letters = []
        for x in w:
            image = self.images[base_letter(x)].letters
            letters.extend(invert(image) if is_inverse(x) else image)
        return Word(letters)

    def compose(self, other: "Automorphism") -> "Automorphism":
        """``self`` after ``other``."""
        return Automorphism(self.basis, {x: self(other.images[x]) for x in self.basis.letters})

    def __pow__(self, n: int) -> "Automorphism":
        if n < 0:
            return self.inverse() ** (-n)
        result = Automorphism.identity(self.basis)
        square = self
        while n:
            if n & 1:
                result = square.compose(result)
            square = square.compose(square)
            n >>= 1
        return result

    def inverse(self) -> "Automorphism":
        labels = fold_marking(
            {x: ("*", "*") for x in self.basis.letters},
            {x: self.images[x].letters for x in self.basis.letters},
            "*",
        )
        return Automorphism(self.basis, labels)

    def is_identity(self) -> bool:
        return all(self.images[x].letters == (x,) for x in self.basis.letters)

    def preserves(self, A: FreeFactorSystem) -> bool:
        images = FreeFactorSystem.from_subgroups(
            [[self(g) for g in f.generators] for f in A.factors], A.ambient_rank)
        return ffs_partial_order(images, A) == "equal"

    def __str__(self) -> str:
        return " ; ".join(f"{x}->{self.images[x]}" for x in self.basis.letters)
