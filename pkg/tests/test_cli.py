import json

import pytest

from reltrack.cli import main
from reltrack.freegroup import Automorphism
from reltrack.reltrees import translation_length
from reltrack.specfile import SpecParseError, load_asset, load_spec, parse_spec

EXAMPLE = "a->a b ; b->b ; c->c a d ; d->d c a d"


def test_example_spec():
    spec = load_asset("example")
    rep = spec.to_rep()
    assert rep.peripheral_index == 1
    assert rep.automorphism().images == Automorphism.parse(EXAMPLE, spec.basis).images
    assert spec.parameters == {"depth": 2, "alpha": "c", "sample": "c,d,c d'"}
    assert [str(g) for g in spec.sample()][:2] == ["c", "d"]


def test_rose_without_graph_line():
    rep = parse_spec("group rank=2 basis=a,b\nmap a->a b ; b->a\n").to_rep()
    assert rep.top == 1
    assert rep.graph.vertices == ("v",)


def test_dumps_reparses():
    spec = load_asset("example")
    again = parse_spec(spec.dumps())
    assert again.to_rep().automorphism().images == spec.to_rep().automorphism().images
    assert again.parameters == spec.parameters


@pytest.mark.parametrize("text, line, message", [
    ("group rank=2 basis=a,b\nmap a->a b ; b a\n", 2, "Expected 'x->image'"),
    ("group rank=2 basis=a,b\nfactor A1=a\nwidth=3\n", 3, "Unknown key 'width'"),
    ("group rank=3 basis=a,b\n", 1, "rank=3"),
    ("group rank=2 basis=a,b\ndepth=2\ndepth=3\n", 3, "Duplicate 'depth'"),
    ("group rank=2 basis=a,b\ndepth=two\n", 2, "Bad value"),
    ("map a->b\n", 1, "Missing group line"),
])
def test_parse_errors(text, line, message):
    with pytest.raises(SpecParseError, match=message) as info:
        parse_spec(text)
    assert info.value.line == line


def test_bad_map_reported_at_its_line():
    spec = parse_spec("# comment\ngroup rank=2 basis=a,b\nmap a->a e ; b->b\n")
    with pytest.raises(SpecParseError, match="Unknown symbol 'e'") as info:
        spec.to_rep()
    assert info.value.line == 3


def test_tree_spec():
    tree = load_asset("counterexample_k2").to_tree()
    assert translation_length(tree, "a a b") == 1
    assert translation_length(tree, "a a a b") == 3


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_spec("no/such/file.tt")


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_reproduce_paper(capsys):
    code, out, _ = run(capsys, "reproduce-paper")
    assert code == 0
    report = json.loads(out)
    assert report["passed"]
    assert len(report["checks"]) == 7


def test_analyze(capsys):
    code, out, _ = run(capsys, "analyze", "example")
    assert code == 0
    report = json.loads(out)
    assert abs(report["stretch_factor"] - 2.618034) < 1e-6
    assert report["rtt"]["passed"]
    assert report["certificate"]["verdict"] == "certified_necessary_conditions"
    assert report["collapse"]["collapsed_edges"] == ["a", "b"]


def test_analyze_fibonacci(capsys):
    code, out, _ = run(capsys, "analyze", "fibonacci")
    assert code == 0
    assert json.loads(out)["collapse"]["collapsed_edges"] == []


def test_relative_whitehead_dot(capsys):
    code, out, _ = run(capsys, "whitehead", "example", "--relative", "--format", "dot")
    assert code == 0
    assert "doublecircle" in out


def test_lamination_csv(capsys):
    code, out, _ = run(capsys, "lamination", "example", "--depth", "1", "--format", "csv")
    assert code == 0
    assert out.splitlines() == ["word", "a", "a'", "b", "b'", "c", "c'", "d", "d'"]


def test_currents(capsys):
    code, out, _ = run(capsys, "currents", "example", "--alpha", "c", "--depth", "1", "--power-max", "20")
    assert code == 0
    assert json.loads(out)["ratio_converged"]


@pytest.mark.parametrize("argv, message", [
    (["currents", "example", "--alpha", "a", "--depth", "1"], "peripheral"),
    (["currents", "example", "--depth", "0"], "positive"),
    (["trees", "example", "tg", "--sample", ""], "empty"),
    (["analyze", "missing.tt"], "not found"),
    (["pairing", "hnn_limit"], "--word"),
])
def test_bad_input(capsys, argv, message):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert message in err


def test_trees(capsys):
    code, out, _ = run(capsys, "trees", "example", "tg-pf", "--power-max", "15")
    assert code == 0
    report = json.loads(out)
    assert report["cauchy"]
    assert report["contained"]


def test_trees_csv(capsys):
    code, out, _ = run(capsys, "trees", "example", "tg", "--sample", "c,d", "--power-max", "0", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "g,p0"


def test_pairing(capsys):
    code, out, _ = run(capsys, "pairing", "hnn_limit", "--limit-current")
    assert code == 0
    assert json.loads(out)["limit_current"]["dual"] is False
    code, out, _ = run(capsys, "pairing", "counterexample_k2", "--word", "a a b")
    assert code == 0
    assert json.loads(out)["translation_length"] == "1"
