"""Command line front end: ``reltrack <command> SPEC [options]``.

Exit codes are 0 on success, 1 when a verification or convergence check
fails and 2 on bad input.
"""
import argparse
import json
import logging
import os
import sys
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from reltrack import currents, graphmap, reltrees, whitehead
from reltrack.freegroup import CyclicWord, RelativeBasis, Word, classify_ffs, is_nonperipheral
from reltrack.main import AnalysisConfig, RelativeAutomorphism
from reltrack.specfile import SpecFile, SpecParseError, asset_path, load_spec

logger = logging.getLogger(__name__)

OK, FAILED, BAD_INPUT = 0, 1, 2


def _resolve(path: str) -> str:
    """A file path, or the name of a packaged example."""
    return path if os.path.exists(path) else asset_path(path)


def _config(args, spec: Optional[SpecFile] = None) -> AnalysisConfig:
    """Command line flags first, then the parameters of the spec file, then the defaults."""
    defaults = AnalysisConfig()
    parameters = spec.parameters if spec is not None else {}
    values = {}
    for key in ("depth", "power_max", "tol", "seed"):
        flag = getattr(args, key, None)
        values[key] = flag if flag is not None else parameters.get(key, getattr(defaults, key))
    return AnalysisConfig(verbose=args.verbose, **values)


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2)


def _load(args) -> Tuple[RelativeAutomorphism, SpecFile]:
    spec = load_spec(_resolve(args.spec))
    return RelativeAutomorphism.from_spec(spec, _config(args, spec)), spec


def cmd_analyze(args) -> int:
    relative, _ = _load(args)
    report = relative.analyze()
    if args.format == "dot":
        _emit("\n".join(g.to_dot() for g in relative.whitehead_graphs().values()))
    else:
        _emit(_json(report))
    return OK if report["rtt"]["passed"] else FAILED


def cmd_whitehead(args) -> int:
    relative, _ = _load(args)
    graphs = relative.relative_whitehead_graphs() if args.relative else relative.whitehead_graphs()
    if args.vertex is not None:
        if args.vertex not in graphs:
            raise ValueError(f"Unknown vertex '{args.vertex}'")
        graphs = {args.vertex: graphs[args.vertex]}
    if args.format == "dot":
        _emit("\n".join(g.to_dot() for g in graphs.values()))
    else:
        _emit(_json({v: dict(g.to_dict(), connectivity=whitehead.connectivity_report(g).to_dict())
                     for v, g in graphs.items()}))
    return OK


def cmd_lamination(args) -> int:
    relative, _ = _load(args)
    language = relative.repelling_language() if args.repelling else relative.attracting_language()
    if args.basis:
        language = language.to_basis(relative.rep.graph if not args.repelling else relative.rep.inverse_rose().graph)
    if args.format == "csv":
        _emit("word\n" + language.to_text())
    else:
        _emit(_json({
            "depth": language.depth,
            "alphabet": language.alphabet,
            "generator": language.generator,
            "rounds": language.rounds,
            "words": [" ".join(w) for w in language.sorted_words()],
        }))
    return OK


def cmd_currents(args) -> int:
    relative, spec = _load(args)
    config = relative.config
    if config.depth < 1:
        raise ValueError(f"Depth must be positive, got {config.depth}")
    alpha = args.alpha or spec.parameters.get("alpha")
    if not alpha:
        raise ValueError("Give --alpha or an alpha line in the spec file")
    report = relative.ns_experiment(alpha, config.power_max, config.depth)
    if args.format == "csv":
        _emit(report.to_frame().write_csv())
    else:
        payload = report.to_dict()
        payload["frequency_current"] = relative.frequency_current().to_frame().to_dicts()
        _emit(_json(payload))
    return OK if report.ratio_converged(1e-3) else FAILED


def _random_sample(basis: RelativeBasis, size: int, seed: int) -> List[CyclicWord]:
    rng = np.random.default_rng(seed)
    letters = basis.all_letters()
    sample: List[CyclicWord] = []
    while len(sample) < size:
        length = int(rng.integers(1, 5))
        g = CyclicWord.parse(" ".join(letters[i] for i in rng.integers(0, len(letters), length)), basis)
        if is_nonperipheral(g, basis) and g not in sample:
            sample.append(g)
    return sample


def cmd_trees(args) -> int:
    relative, spec = _load(args)
    if args.tree in ("tg", "tg-pf"):
        tree = relative.tree("pf" if args.tree == "tg-pf" else "unit")
    else:
        tree = load_spec(_resolve(args.tree)).to_tree()
    if args.sample is not None:
        sample = [w for w in (x.strip() for x in args.sample.split(",")) if w]
        if not sample:
            raise ValueError("Sample of conjugacy classes is empty")
    else:
        sample = spec.sample() or _random_sample(relative.basis, 3, relative.config.seed)
    report = relative.tree_ns_experiment(tree, sample)
    if args.format == "csv":
        _emit(report.to_frame().write_csv())
    else:
        _emit(_json(report.to_dict()))
    return OK if report.cauchy or not report.differences else FAILED


def cmd_pairing(args) -> int:
    tree_spec = load_spec(_resolve(args.tree))
    depth = _config(args, tree_spec).depth
    tree = tree_spec.to_tree()
    payload = {}
    if args.word is not None:
        g = CyclicWord.parse(args.word, tree.basis)
        payload["word"] = str(g)
        payload["translation_length"] = str(reltrees.translation_length(tree, g))
        payload["rational_dual"] = reltrees.rational_dual(tree, g)
        if is_nonperipheral(g, tree.basis) and not g.is_proper_power():
            eta = currents.rational_current(g, depth, tree.basis)
            payload["dual_at_depth"] = reltrees.is_dual_at_depth(tree, eta, depth).to_dict()
    if args.limit_current:
        eta = reltrees.limit_current_table(depth)
        payload["limit_current"] = reltrees.is_dual_at_depth(tree, eta, depth).to_dict()
    if not payload:
        raise ValueError("Give --word or --limit-current")
    _emit(_json(payload))
    return OK


# Worked examples

def _check(name: str, expected, got) -> dict:
    return {"name": name, "expected": expected, "got": got, "passed": expected == got}


def _abaab_counts() -> dict:
    basis = RelativeBasis(("a", "b"), (("a",),))
    eta = currents.rational_current("a b a a b", 4, basis)
    got = {w: int(eta[w]) for w in ("b", "b a", "a b a b")}
    return _check("abaab current counts", {"b": 2, "b a": 2, "a b a b": 1}, got)


def _example_gates() -> dict:
    rep = load_spec(asset_path("example")).to_rep()
    got = sorted(sorted(gate) for gate in whitehead.gates(rep, "v"))
    return _check("Whitehead gates of the example", [["a", "c", "c'", "d'"], ["a'", "b", "b'", "d"]], got)


def _example_relative() -> dict:
    rep = load_spec(asset_path("example")).to_rep()
    collapsed = graphmap.collapse_to_a_traintrack(rep)
    vertex = collapsed.graph.vertices[0]
    g = whitehead.relative_whitehead_graph(collapsed, rep, vertex)
    got = {"nodes": sorted(g.nodes), "connected": whitehead.connectivity_report(g).connected}
    return _check("relative Whitehead graph of the example",
                  {"nodes": sorted(["c", "c'", "d", "d'", whitehead.V_A]), "connected": True}, got)


def _counterexample_lengths() -> dict:
    got = {}
    for k in range(1, 6):
        tree = reltrees.counterexample_tree(k)
        got[k] = [int(reltrees.translation_length(tree, Word(("a",) * j + ("b",)))) for j in (k, k + 1)]
    return _check("lengths on the counterexample trees", {k: [1, 3] for k in range(1, 6)}, got)


def _intersection_pair() -> dict:
    dual = all(reltrees.rational_dual(reltrees.limit_example_tree(k), Word(("a",) * k + ("b",)))
               for k in range(1, 6))
    limit = reltrees.is_dual_at_depth(reltrees.hnn_limit_tree(), reltrees.limit_current_table(6), 6).dual
    return _check("intersection form discontinuity", {"trees": True, "limit": False}, {"trees": dual, "limit": limit})


EXCEPTIONAL = {(1, 0): "trivial", (2, 0): "empty_complex", (1, 1): "zero_dimensional_hnn",
               (3, 0): "zero_dimensional_triple"}


def _partitions(total: int, parts: int, largest: int):
    if parts == 0:
        if total == 0:
            yield ()
        return
    for size in range(min(total, largest), 0, -1):
        for rest in _partitions(total - size, parts - 1, size):
            yield (size,) + rest


def _classification_table() -> dict:
    mismatches = []
    count = 0
    for n in range(1, 6):
        letters = tuple(f"x{i}" for i in range(1, n + 1))
        for k in range(1, n + 1):
            for used in range(k, n + 1):
                if k + n - used > 4:
                    continue
                for sizes in _partitions(used, k, used):
                    blocks, start = [], 0
                    for s in sizes:
                        blocks.append(letters[start:start + s])
                        start += s
                    A = RelativeBasis(letters, tuple(blocks)).peripheral_system()
                    expected = EXCEPTIONAL.get((k, n - used), "non_exceptional")
                    count += 1
                    if classify_ffs(A) != expected:
                        mismatches.append(f"rank {n} blocks {sizes}: {classify_ffs(A)} != {expected}")
    return _check(f"classification of {count} basis-aligned systems", [], mismatches)


def _stretch_factor() -> dict:
    rep = load_spec(asset_path("example")).to_rep()
    value = graphmap.transition_matrix(rep, rep.top).pf_value
    return _check("stretch factor of the example", 2.618034, round(value, 6))


WORKED_EXAMPLES: List[Callable[[], dict]] = [
    _abaab_counts,
    _example_gates,
    _example_relative,
    _stretch_factor,
    _counterexample_lengths,
    _intersection_pair,
    _classification_table,
]


def cmd_reproduce_paper(args) -> int:
    results = []
    for check in tqdm(WORKED_EXAMPLES, desc="Worked examples", disable=not args.verbose):
        result = check()
        if not result["passed"]:
            logger.error(f"{result['name']}: expected {result['expected']}, got {result['got']}")
        results.append(result)
    passed = all(r["passed"] for r in results)
    _emit(_json({"passed": passed, "checks": results}))
    return OK if passed else FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--depth", type=int)
    common.add_argument("--power-max", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=["json", "csv", "dot"], default="json")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="reltrack", description="Relative train track computations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="strata, verification, collapse and Whitehead graphs")
    p.add_argument("spec")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("whitehead", parents=[common], help="Whitehead graphs")
    p.add_argument("spec")
    p.add_argument("--vertex")
    p.add_argument("--relative", action="store_true")
    p.set_defaults(func=cmd_whitehead)

    p = sub.add_parser("lamination", parents=[common], help="finite-depth leaf languages")
    p.add_argument("spec")
    p.add_argument("--repelling", action="store_true")
    p.add_argument("--basis", action="store_true", help="translate edge words to basis words")
    p.set_defaults(func=cmd_lamination)

    p = sub.add_parser("currents", parents=[common], help="north-south experiment for a rational current")
    p.add_argument("spec")
    p.add_argument("--alpha", help="defaults to the alpha parameter of the spec file")
    p.set_defaults(func=cmd_currents)

    p = sub.add_parser("trees", parents=[common], help="normalized length spectra of an iterated tree")
    p.add_argument("spec")
    p.add_argument("tree", help="tree file, or tg / tg-pf for the tree of the representative")
    p.add_argument("--sample", help="comma separated conjugacy classes")
    p.set_defaults(func=cmd_trees)

    p = sub.add_parser("pairing", parents=[common], help="length pairing of a tree with a word or current")
    p.add_argument("tree")
    p.add_argument("--word")
    p.add_argument("--limit-current", action="store_true")
    p.set_defaults(func=cmd_pairing)

    p = sub.add_parser("reproduce-paper", parents=[common], help="check every worked example")
    p.set_defaults(func=cmd_reproduce_paper)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (SpecParseError, ValueError, FileNotFoundError, NotImplementedError) as e:
        sys.stderr.write(f"reltrack {args.command}: {e}\n")
        return BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
