import pytest

from reltrack.freegroup import Automorphism, RelativeBasis
from reltrack.graphmap import GraphMapRep, MapOverflow
from reltrack.lamination import (
    attracting_language,
    dual_language_simplicial,
    languages_equal_at_depth,
    leaf_prefix,
    recurrence_gap,
    repelling_language,
    subwords,
)
from reltrack.reltrees import hnn_limit_tree

ABCD = RelativeBasis(("a", "b", "c", "d"), (("a", "b"),))
EXAMPLE = "a->a b ; b->b ; c->c a d ; d->d c a d"


@pytest.fixture
def rep():
    return GraphMapRep.rose(Automorphism.parse(EXAMPLE, ABCD), [{"a", "b"}], peripheral_index=1)


def test_subwords_cover_both_orientations():
    words = subwords(("c", "a", "d"), 2)
    assert ("c", "a") in words
    assert ("a'", "c'") in words
    assert ("c", "d") not in words


def test_attracting_language_depth_one(rep):
    language = attracting_language(rep, 1)
    assert len(language) == 8
    assert language.rounds >= 2


def test_attracting_language_depth_two(rep):
    forward = {("c", "a"), ("a", "d"), ("d", "a"), ("a", "b"), ("b", "d"), ("d", "c"), ("b", "b")}
    language = attracting_language(rep, 2)
    assert {w for w in language.words if len(w) == 2} == forward | {tuple(reversed([x + "'" for x in w])) for w in forward}
    assert "c c" not in language
    assert "a a" not in language


def test_repelling_language_differs(rep):
    repelling = repelling_language(rep, 2)
    assert "c c" in repelling
    assert not languages_equal_at_depth(attracting_language(rep, 2), repelling, 2)


def test_truncation_agrees(rep):
    assert languages_equal_at_depth(attracting_language(rep, 3), attracting_language(rep, 2), 2)
    with pytest.raises(ValueError, match="cannot be compared"):
        languages_equal_at_depth(attracting_language(rep, 1), attracting_language(rep, 2), 2)


def test_empty_language_at_depth_zero(rep):
    assert len(attracting_language(rep, 0)) == 0


def test_language_overflow(rep):
    with pytest.raises(MapOverflow):
        attracting_language(rep, 2, max_length=5)


def test_reducible_top_stratum_rejected():
    rep = GraphMapRep.rose(Automorphism.parse("a->a ; b->b a", RelativeBasis.free(("a", "b"))))
    with pytest.raises(ValueError, match="reducible"):
        attracting_language(rep, 2)


def test_basis_words_on_rose(rep):
    language = attracting_language(rep, 2)
    assert language.to_basis(rep.graph).words == language.words
    assert language.to_text().splitlines()[0] == "a"


def test_dual_language_of_simplicial_tree():
    language = dual_language_simplicial(hnn_limit_tree(), 3)
    assert language.words == {
        ("a",), ("a'",), ("a", "a"), ("a'", "a'"), ("a", "a", "a"), ("a'", "a'", "a'"),
    }


def test_leaf_prefix(rep):
    assert leaf_prefix(rep, 5) == ["c", "a", "d", "a", "b"]


def test_recurrence_gap(rep):
    assert not recurrence_gap(rep, 2, 200).unbounded
    short = recurrence_gap(rep, 2, 5)
    assert short.unbounded
    assert "occurs" in short.diagnostic
