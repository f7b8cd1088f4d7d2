from fractions import Fraction

from hypothesis import assume, given, settings, strategies as st
import pytest

from reltrack.freegroup import Automorphism, CyclicWord, RelativeBasis, Word, cyclic_reduce, is_nonperipheral
from reltrack.graphmap import GraphMapRep
from reltrack.currents import (
    RelativeCurrent,
    block_system,
    frequency_current,
    norm,
    ns_experiment,
    projective_distance,
    pushforward,
    rational_current,
    support_at_depth,
)
from reltrack.lamination import attracting_language

AB = RelativeBasis(("a", "b"), (("a",),))
ABCD = RelativeBasis(("a", "b", "c", "d"), (("a", "b"),))
EXAMPLE = "a->a b ; b->b ; c->c a d ; d->d c a d"


@pytest.fixture
def rep():
    return GraphMapRep.rose(Automorphism.parse(EXAMPLE, ABCD), [{"a", "b"}], peripheral_index=1)


def test_rational_current_counts():
    eta = rational_current("a b a a b", 4, AB)
    assert eta["b"] == 2
    assert eta["a b"] == 2
    assert eta["b a"] == 2
    assert eta["a b a b"] == 1
    assert eta["a a"] == 0
    assert norm(eta, 1) == 4


def test_single_letter_current():
    eta = rational_current("b", 2, AB)
    assert eta["b"] == 1
    assert eta["b b"] == 1
    assert eta["b'"] == 1


@pytest.mark.parametrize("alpha, message", [
    ("a", "peripheral"),
    ("a a", "peripheral"),
    ("a b a b", "proper power"),
])
def test_rational_current_rejects(alpha, message):
    with pytest.raises(ValueError, match=message):
        rational_current(alpha, 2, AB)


def test_rational_current_needs_depth():
    with pytest.raises(ValueError, match="positive"):
        rational_current("b", 0, AB)


def test_peripheral_weights_rejected():
    with pytest.raises(ValueError, match="peripheral"):
        RelativeCurrent(AB, 2, {("a",): Fraction(1)})


@pytest.mark.parametrize("alpha", ["b", "a b", "a a b a' b", "b b a"])
def test_rational_currents_are_consistent(alpha):
    assert rational_current(alpha, 3, AB).consistency_violations() == []


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(AB.all_letters()), min_size=1, max_size=10))
def test_random_rational_currents_are_consistent(letters):
    alpha, _ = cyclic_reduce(Word(letters), AB)
    assume(is_nonperipheral(alpha, AB) and not alpha.is_proper_power())
    eta = rational_current(alpha, 4, AB)
    assert eta.consistency_violations() == []
    assert norm(eta, 1) == 2 * sum(1 for x in alpha.letters if x in ("b", "b'"))


def test_pushforward():
    phi = Automorphism.parse(EXAMPLE, ABCD)
    eta = rational_current("c", 2, ABCD)
    assert pushforward(phi, eta).weights == rational_current("c a d", 2, ABCD).weights


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(ABCD.all_letters()), min_size=1, max_size=6), st.sampled_from([1, -1, 2]))
def test_random_pushforwards_are_consistent(letters, power):
    alpha, _ = cyclic_reduce(Word(letters), ABCD)
    assume(is_nonperipheral(alpha, ABCD) and not alpha.is_proper_power())
    phi = Automorphism.parse(EXAMPLE, ABCD) ** power
    image = pushforward(phi, rational_current(alpha, 3, ABCD))
    assert image.consistency_violations() == []
    assert image.weights == rational_current(phi(alpha), 3, ABCD).weights


def test_projective_distance():
    eta = rational_current("a b a a b", 2, AB)
    assert projective_distance(eta, eta.scaled(3), 2) == 0
    assert projective_distance(eta, rational_current("b", 2, AB), 2) > 0


def test_current_frame():
    eta = rational_current("a b", 2, AB)
    frame = eta.to_frame()
    assert frame.columns == ["word", "weight"]
    assert frame.height == len(eta.weights)


def test_block_system_states(rep):
    system = block_system(rep, 2)
    assert ("c", "a") in system.index
    assert ("c", "c") not in system.index


def test_frequency_current(rep):
    eta = frequency_current(rep, 2)
    assert norm(eta, 1) == 1
    assert abs(float(eta["c"] / (eta["c"] + eta["d"])) - (3 - 5 ** 0.5) / 2) < 1e-6
    assert eta.consistency_violations() == []


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_frequency_support_is_leaf_language(rep, m):
    language = attracting_language(rep, m).to_basis(rep.graph)
    expected = {w for w in language.words if is_nonperipheral(w, ABCD)}
    assert support_at_depth(frequency_current(rep, m), m) == expected


def test_north_south_convergence(rep):
    report = ns_experiment(rep, "c", 20, 1)
    assert report.ratio_converged(1e-3)
    assert "vector" in report.modes
    assert report.lengths == sorted(report.lengths)
    assert report.eventually_decreasing
    assert report.to_frame().height == 20


def test_north_south_without_iterations(rep):
    assert ns_experiment(rep, "c", 0, 1).ns == []


def test_north_south_rejects_peripheral(rep):
    with pytest.raises(ValueError, match="peripheral"):
        ns_experiment(rep, CyclicWord.parse("a", ABCD), 5, 1)
