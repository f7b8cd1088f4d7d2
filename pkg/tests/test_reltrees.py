from fractions import Fraction

from hypothesis import given, settings, strategies as st
import pytest

from reltrack.currents import rational_current
from reltrack.freegroup import Automorphism, FreeFactorSystem, RelativeBasis, Word
from reltrack.graphmap import GraphMapRep, invert_path, tighten
from reltrack.reltrees import (
    GrushkoTreePoint,
    act,
    counterexample_tree,
    duality_chain_check,
    hnn_limit_tree,
    intersection_is_zero,
    is_dual_at_depth,
    limit_current_table,
    limit_example_tree,
    pf_lengths,
    rational_dual,
    rose_tree,
    stable_length,
    translation_length,
    tree_ns_experiment,
    tree_point_from_rep,
)
from reltrack.whitehead import taken_turns

AB = RelativeBasis(("a", "b"), (("a",),))
ABCD = RelativeBasis(("a", "b", "c", "d"), (("a", "b"),))
EXAMPLE = "a->a b ; b->b ; c->c a d ; d->d c a d"


@pytest.fixture
def phi():
    return Automorphism.parse(EXAMPLE, ABCD)


@pytest.fixture
def rep(phi):
    return GraphMapRep.rose(phi, [{"a", "b"}], peripheral_index=1)


def power_word(k, extra=0):
    return " ".join(["a"] * (k + extra) + ["b"])


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_counterexample_lengths(k):
    tree = counterexample_tree(k)
    assert translation_length(tree, power_word(k)) == 1
    assert translation_length(tree, power_word(k, 1)) == 3
    assert translation_length(tree, "a") == 0
    assert not rational_dual(tree, power_word(k))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_limit_tree_is_dual(k):
    tree = limit_example_tree(k)
    assert not tree.is_grushko
    assert rational_dual(tree, power_word(k))
    assert is_dual_at_depth(tree, rational_current(power_word(k), 2 * k, AB), 2 * k)
    assert intersection_is_zero(tree, rational_current(power_word(k), 2 * k, AB))


def test_hnn_tree_is_not_dual_to_limit_current():
    tree = hnn_limit_tree()
    assert tree.is_grushko
    verdict = is_dual_at_depth(tree, limit_current_table(6), 6)
    assert not verdict
    assert verdict.witness == "b"
    assert not intersection_is_zero(tree, limit_current_table(6))


def test_limit_current_table_is_consistent():
    assert limit_current_table(4).consistency_violations() == []


def test_scaling():
    tree = counterexample_tree(2)
    assert translation_length(tree.scaled(3), power_word(2, 1)) == 9
    assert tree.scaled(3).volume == 6


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(AB.all_letters()), max_size=6), st.lists(st.sampled_from(AB.all_letters()), max_size=6),
       st.integers(-3, 3))
def test_conjugacy_invariance_and_homogeneity(g, h, n):
    tree = counterexample_tree(2)
    g, h = Word(g), Word(h)
    assert translation_length(tree, h * g * h.inverse()) == translation_length(tree, g)
    assert translation_length(tree, g ** n) == abs(n) * translation_length(tree, g)


def test_tree_validation():
    with pytest.raises(ValueError, match="positive length"):
        GrushkoTreePoint(counterexample_tree(1).graph, frozenset({"x"}), {"e": 1})
    with pytest.raises(ValueError, match="cannot carry a length"):
        GrushkoTreePoint(counterexample_tree(1).graph, frozenset({"x"}), {"e": 1, "l": 1, "x": 1})
    with pytest.raises(ValueError, match="do not contain A"):
        rose_tree(ABCD, ["a"])


def test_act(rep, phi):
    tree = tree_point_from_rep(rep)
    moved = act(tree, phi)
    for g in ["c", "d", "c d'", "c a d b"]:
        assert translation_length(moved, g) == translation_length(tree, phi(Word.parse(g)))
    assert translation_length(moved, "c") == 2


def test_act_needs_preserved_system(rep):
    swap = Automorphism.parse("a->c ; b->b ; c->a ; d->d", ABCD)
    with pytest.raises(ValueError, match="does not preserve"):
        act(tree_point_from_rep(rep), swap)


def test_tree_from_rep(rep):
    tree = tree_point_from_rep(rep)
    assert tree.collapsed == frozenset({"a", "b"})
    assert tree.lengths == {"c": 1, "d": 1}
    assert tree.is_grushko
    pf = tree_point_from_rep(rep, "pf")
    assert abs(float(pf.volume) - 1) < 1e-9


def test_stable_length_of_legal_loop(rep):
    enclosure = stable_length(rep, "c")
    assert enclosure.power_used == 0
    assert enclosure.width == 0
    assert enclosure.upper == pf_lengths(rep)["c"]


def test_stable_length_after_one_iteration(rep):
    lam = (3 + 5 ** 0.5) / 2
    enclosure = stable_length(rep, "c d'")
    assert enclosure.power_used == 1
    assert enclosure.lower == enclosure.upper
    assert abs(float(enclosure.upper) - float(pf_lengths(rep)["d"]) / lam) < 1e-9


def test_taken_turns_tighten_without_cancellation(rep):
    for turn in taken_turns(rep):
        joined = invert_path(rep.image(turn.first)) + rep.image(turn.second)
        assert len(tighten(joined)) == len(joined)


def test_enclosure_before_loop_is_legal_contains_limit(rep):
    lam = (3 + 5 ** 0.5) / 2
    limit = float(pf_lengths(rep)["d"]) / lam
    enclosure = stable_length(rep, "c d'", tol=0, power_max=0)
    assert enclosure.power_used == 0
    assert enclosure.width > 0
    assert enclosure.lower <= limit <= enclosure.upper


def test_stable_length_of_peripheral(rep):
    assert stable_length(rep, "a b").upper == 0


def test_tree_spectra_converge(rep):
    tree = tree_point_from_rep(rep, "pf")
    report = tree_ns_experiment(rep, tree, ["c", "d", "c d'"], 15)
    assert report.cauchy
    assert report.contained
    assert report.modes[-1] == "vector"
    assert report.to_frame().columns[:2] == ["g", "p0"]


def test_tree_spectra_unit_metric(rep):
    report = tree_ns_experiment(rep, tree_point_from_rep(rep), ["c", "c d'"], 15)
    assert report.cauchy
    assert report.contained is None


def test_tree_spectra_reject_bad_samples(rep):
    tree = tree_point_from_rep(rep)
    with pytest.raises(ValueError, match="empty"):
        tree_ns_experiment(rep, tree, [], 3)
    with pytest.raises(ValueError, match="peripheral"):
        tree_ns_experiment(rep, tree, ["c", "a b"], 3)


@pytest.fixture
def chain():
    rank = 3
    return [
        FreeFactorSystem.from_blocks((("a",),), rank),
        FreeFactorSystem.from_blocks((("a", "b"),), rank),
    ]


def test_duality_chain(chain):
    basis = RelativeBasis(("a", "b", "c"), (("a",),))
    trees = [rose_tree(basis, ["a"]), rose_tree(basis, ["a", "b"])]
    report = duality_chain_check(chain, trees, ["a"])
    assert report.passed
    assert report.steps[0].smaller == 0


def test_duality_chain_rejects(chain):
    basis = RelativeBasis(("a", "b", "c"), (("a",),))
    tree = rose_tree(basis, ["a"])
    with pytest.raises(ValueError, match="not carried"):
        duality_chain_check(chain, [tree, tree], ["b"])
    incomparable = [chain[0], FreeFactorSystem.from_blocks((("b",),), 3)]
    with pytest.raises(ValueError, match="not comparable"):
        duality_chain_check(incomparable, [tree, tree], ["a"])
    with pytest.raises(ValueError, match="trees"):
        duality_chain_check(chain, [tree], ["a"])


def test_lengths_are_fractions():
    assert isinstance(translation_length(counterexample_tree(1), "a b"), Fraction)
