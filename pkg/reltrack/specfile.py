"""Line based specification files for automorphisms, representatives and trees.

A file holds one automorphism (or one tree point) together with optional
experiment parameters::

    group  rank=4 basis=a,b,c,d
    factor A1=a,b
    graph  vertices=v  edges=a(v,v),b(v,v),c(v,v),d(v,v)
    marking a=a b=b c=c d=d
    map    a->a b ; b->b ; c->c a d ; d->d c a d
    filtration G1=a,b

Marking paths join edge tokens with ``.``; map images and words separate
tokens by spaces. Without a ``graph`` line the map is an automorphism of
the rose on the basis.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import importlib.resources
import logging
import os
import re
from typing import Dict, List, Optional, Tuple

from reltrack.freegroup import Automorphism, CyclicWord, RelativeBasis, ffs_partial_order
from reltrack.graphmap import GraphMapRep, MarkedGraph, realized_ffs

logger = logging.getLogger(__name__)

LINE = re.compile(r"^([A-Za-z_]+)(?:\s+|=)(.*)$")
EDGE = re.compile(r"([A-Za-z_][\w]*)\(\s*([\w]+)\s*,\s*([\w]+)\s*\)")

REPEATABLE = {"factor", "map", "filtration"}
PARAMETERS = {"depth": int, "power_max": int, "tol": float, "seed": int, "alpha": str, "sample": str}
KEYS = {"group", "factor", "graph", "marking", "map", "filtration", "collapse", "lengths"} | set(PARAMETERS)


class SpecParseError(ValueError):
    """A malformed specification file, located by its 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _pairs(text: str, line: int) -> Dict[str, str]:
    pairs = {}
    for item in text.split():
        if "=" not in item:
            raise SpecParseError(f"Expected key=value, got '{item}'", line)
        key, value = item.split("=", 1)
        pairs[key] = value
    return pairs


def _names(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


@dataclass
class SpecFile:
    basis: RelativeBasis
    graph: Optional[MarkedGraph] = None
    images: Optional[Dict[str, str]] = None
    filtration: List[List[str]] = field(default_factory=list)
    collapse: Optional[List[str]] = None
    lengths: Optional[Dict[str, Fraction]] = None
    parameters: Dict[str, object] = field(default_factory=dict)
    lines: Dict[str, int] = field(default_factory=dict)
    source: str = "<string>"

    @property
    def is_tree(self) -> bool:
        return self.lengths is not None

    def automorphism(self) -> Automorphism:
        if self.graph is not None:
            return self.to_rep().automorphism()
        try:
            return Automorphism.parse(" ; ".join(f"{x}->{w}" for x, w in self.images.items()), self.basis)
        except ValueError as e:
            raise SpecParseError(str(e), self.lines.get("map", 0))

    def to_rep(self) -> GraphMapRep:
        """The representative the file declares, with A placed in the filtration."""
        if self.images is None:
            raise SpecParseError("No map given", self.lines.get("group", 1))
        line = self.lines.get("map", 0)
        try:
            if self.graph is None:
                rep = GraphMapRep.rose(self.automorphism(), self.filtration)
            else:
                rep = GraphMapRep.from_images(
                    self.graph, {e: tuple(w.split()) for e, w in self.images.items()}, self.filtration)
        except ValueError as e:
            if isinstance(e, SpecParseError):
                raise
            raise SpecParseError(str(e), line)
        A = self.basis.peripheral_system()
        for s, level in enumerate(rep.filtration[:-1], start=1):
            if ffs_partial_order(realized_ffs(rep.graph, level), A) == "equal":
                return GraphMapRep(rep.graph, rep.edge_images, rep.vertex_images, rep.filtration, s)
        if self.basis.blocks:
            logger.warning(f"No filtration element of {self.source} realizes A = {A.describe()}")
        return rep

    def to_tree(self):
        from reltrack.reltrees import GrushkoTreePoint
        if not self.is_tree:
            raise SpecParseError("A tree needs a lengths line", self.lines.get("group", 1))
        graph = self.graph or MarkedGraph.rose(self.basis)
        try:
            return GrushkoTreePoint(graph, frozenset(self.collapse or ()), self.lengths)
        except ValueError as e:
            raise SpecParseError(str(e), self.lines.get("lengths", 0))

    def sample(self) -> List[CyclicWord]:
        text = self.parameters.get("sample", "")
        return [CyclicWord.parse(w, self.basis) for w in _names(text)]

    def dumps(self) -> str:
        basis = self.basis
        out = [f"group rank={basis.rank} basis={','.join(basis.letters)}"]
        for i, block in enumerate(basis.blocks, start=1):
            out.append(f"factor A{i}={','.join(block)}")
        if self.graph is not None:
            g = self.graph
            edges = ",".join(f"{e}({o},{t})" for e, (o, t) in g.edges.items())
            out.append(f"graph vertices={','.join(g.vertices)} edges={edges} base={g.base}")
            out.append("marking " + " ".join(f"{x}={'.'.join(str(d) for d in g.marking[x])}" for x in basis.letters))
        if self.images is not None:
            out.append("map " + " ; ".join(f"{e}->{w}" for e, w in self.images.items()))
        if self.filtration:
            out.append("filtration " + " ".join(f"G{i}={','.join(level)}" for i, level in enumerate(self.filtration, 1)))
        if self.collapse is not None:
            out.append(f"collapse={','.join(self.collapse)}")
        if self.lengths is not None:
            out.append(f"lengths={','.join(f'{e}:{v}' for e, v in self.lengths.items())}")
        for key in sorted(self.parameters):
            out.append(f"{key}={self.parameters[key]}")
        return "\n".join(out) + "\n"


def parse_spec(text: str, source: str = "<string>") -> SpecFile:
    entries: List[Tuple[str, str, int]] = []
    seen = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = LINE.match(line)
        if not match:
            raise SpecParseError(f"Cannot read '{line}'", number)
        key, value = match.group(1), match.group(2).strip()
        if key not in KEYS:
            raise SpecParseError(f"Unknown key '{key}'", number)
        if key in seen and key not in REPEATABLE:
            raise SpecParseError(f"Duplicate '{key}' (first on line {seen[key]})", number)
        seen.setdefault(key, number)
        entries.append((key, value, number))

    if "group" not in seen:
        raise SpecParseError("Missing group line", 1)
    group = next((v, n) for k, v, n in entries if k == "group")
    pairs = _pairs(*group)
    letters = _names(pairs.get("basis", ""))
    if "rank" in pairs and int(pairs["rank"]) != len(letters):
        raise SpecParseError(f"rank={pairs['rank']} but {len(letters)} basis letters", group[1])
    blocks = []
    for key, value, number in entries:
        if key == "factor":
            name, _, members = value.partition("=")
            if not members:
                raise SpecParseError(f"Factor '{name}' has no letters", number)
            blocks.append(tuple(_names(members)))
    try:
        basis = RelativeBasis(tuple(letters), tuple(blocks))
    except ValueError as e:
        raise SpecParseError(str(e), seen.get("factor", group[1]))

    spec = SpecFile(basis, lines=dict(seen), source=source)
    graph_line = marking_line = None
    for key, value, number in entries:
        if key == "graph":
            graph_line = (_pairs(value, number), number)
        elif key == "marking":
            marking_line = (_pairs(value, number), number)
        elif key == "map":
            spec.images = spec.images or {}
            for clause in value.split(";"):
                if not clause.strip():
                    continue
                if "->" not in clause:
                    raise SpecParseError(f"Expected 'x->image' in '{clause.strip()}'", number)
                x, image = (part.strip() for part in clause.split("->", 1))
                if x in spec.images:
                    raise SpecParseError(f"Second image for '{x}'", number)
                spec.images[x] = image
        elif key == "filtration":
            levels = sorted(_pairs(value, number).items(), key=lambda kv: int(kv[0].lstrip("G") or 0))
            spec.filtration.extend(_names(members) for _, members in levels)
        elif key == "collapse":
            spec.collapse = _names(value)
        elif key == "lengths":
            spec.lengths = {}
            for item in _names(value):
                edge, _, length = item.partition(":")
                try:
                    spec.lengths[edge.strip()] = Fraction(length.strip())
                except ValueError:
                    raise SpecParseError(f"Bad length '{item}'", number)
        elif key in PARAMETERS:
            try:
                spec.parameters[key] = PARAMETERS[key](value)
            except ValueError:
                raise SpecParseError(f"Bad value '{value}' for {key}", number)

    if graph_line is not None:
        pairs, number = graph_line
        vertices = _names(pairs.get("vertices", ""))
        edges = {name: (o, t) for name, o, t in EDGE.findall(pairs.get("edges", ""))}
        if not vertices or not edges:
            raise SpecParseError("A graph needs vertices= and edges=", number)
        if marking_line is None:
            raise SpecParseError("A graph needs a marking line", number)
        marking = {x: tuple(p.split(".")) for x, p in marking_line[0].items()}
        try:
            spec.graph = MarkedGraph(basis, tuple(vertices), edges, marking, pairs.get("base", vertices[0]))
        except ValueError as e:
            raise SpecParseError(str(e), marking_line[1])
    elif marking_line is not None:
        raise SpecParseError("A marking needs a graph line", marking_line[1])
    return spec


def load_spec(path: str) -> SpecFile:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Specification file '{path}' not found")
    with open(path) as f:
        return parse_spec(f.read(), source=path)


def asset_path(name: str) -> str:
    """Path of a packaged example specification."""
    filename = name if name.endswith(".tt") else f"{name}.tt"
    path = importlib.resources.files("reltrack") / "data" / filename
    if not path.is_file():
        raise FileNotFoundError(f"Packaged specification '{filename}' not found")
    return str(path)


def load_asset(name: str) -> SpecFile:
    return load_spec(asset_path(name))
