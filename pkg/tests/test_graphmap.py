from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from reltrack.freegroup import Automorphism, FreeFactorSystem, RelativeBasis, Word, ffs_partial_order
from reltrack.graphmap import (
    GraphMapRep,
    GroupElement,
    MapOverflow,
    MarkedGraph,
    apply_map,
    collapse_to_a_traintrack,
    cyclic_tighten,
    direction_map,
    gate_key,
    matrix_class,
    matrix_power,
    maximal_invariant_subgraph,
    occurrence_vector,
    original,
    pf_data,
    realized_ffs,
    tighten,
    top_counts,
    transition_matrix,
    verify_rtt,
)

ABCD = RelativeBasis(("a", "b", "c", "d"), (("a", "b"),))
EXAMPLE = "a->a b ; b->b ; c->c a d ; d->d c a d"


@pytest.fixture
def phi():
    return Automorphism.parse(EXAMPLE, ABCD)


@pytest.fixture
def rep(phi):
    return GraphMapRep.rose(phi, [{"a", "b"}], peripheral_index=1)


def test_marked_graph_rejects_valence_one():
    basis = RelativeBasis.free(("a",))
    with pytest.raises(ValueError, match="valence 1"):
        MarkedGraph(basis, ("u", "w"), {"a": ("u", "u"), "e": ("u", "w")}, {"a": ("a",)}, "u")


def test_marked_graph_rejects_wrong_rank():
    basis = RelativeBasis.free(("a", "b"))
    with pytest.raises(ValueError, match="rank"):
        MarkedGraph(basis, ("v",), {"a": ("v", "v")}, {"a": ("a",), "b": ("a",)}, "v")


def test_marking_labels_on_two_vertex_graph():
    basis = RelativeBasis(("a", "b"), (("a",),))
    graph = MarkedGraph(basis, ("u", "w"), {"e": ("u", "w"), "l": ("u", "u"), "x": ("w", "w")},
                        {"a": ("e", "x", "e'"), "b": ("e", "x'", "x'", "e'", "l")}, "u")
    assert graph.read(graph.loop_of(Word.parse("a a b"))) == Word.parse("a a b")
    assert graph.loop_of(Word.parse("a a b")) == ("l",)
    assert graph.directions("w") == ("e'", "x", "x'")


def test_tighten():
    assert tighten(("e", "e'", "f")) == ("f",)
    a = GroupElement("v", Word.parse("a"))
    assert tighten((a, a.inverse(), "c")) == ("c",)
    assert tighten(("c", a, "c'")) == ("c", a, "c'")
    assert cyclic_tighten(("c", "a", "c'")) == ("a",)


def test_apply_map(rep):
    assert apply_map(rep, "c", 2) == tuple("c a d a b d c a d".split())
    assert apply_map(rep, "c", 0) == ("c",)
    assert rep.power(2).edge_images["c"] == apply_map(rep, "c", 2)


def test_apply_map_capped(rep):
    with pytest.raises(MapOverflow) as info:
        apply_map(rep, "c", 10, mode="capped", cap=50)
    assert info.value.cap == 50
    with pytest.raises(ValueError, match="needs a cap"):
        apply_map(rep, "c", 1, mode="capped")


def test_images_must_be_tight():
    graph = MarkedGraph.rose(RelativeBasis.free(("a", "b")))
    with pytest.raises(ValueError, match="not tightened"):
        GraphMapRep.from_images(graph, {"a": ("a", "b", "b'"), "b": ("b",)})


def test_filtration_must_be_invariant(phi):
    with pytest.raises(ValueError, match="not invariant"):
        GraphMapRep.rose(phi, [{"c", "d"}])


def test_automorphism_of_rose(rep, phi):
    assert rep.automorphism().images == phi.images
    assert rep.inverse_rose().automorphism().images == phi.inverse().images


def test_transition_matrix(rep):
    top = transition_matrix(rep)
    assert top.edges == ("c", "d")
    assert top.matrix.tolist() == [[1, 1], [1, 2]]
    assert top.matrix_class == "primitive"
    assert abs(top.pf_value - (3 + 5 ** 0.5) / 2) < 1e-9
    assert top.is_eg
    lower = transition_matrix(rep, 1)
    assert lower.matrix_class == "reducible"
    assert lower.pf is None


def test_pf_data():
    pf = pf_data([[1, 1], [1, 2]], 1e-10)
    assert abs(pf.value - (3 + 5 ** 0.5) / 2) <= 1e-10
    assert pf.lower <= pf.upper
    assert abs(pf.right.sum() - 1) < 1e-12
    assert abs(pf.left.sum() - 1) < 1e-12


def test_pf_data_rejects_reducible():
    with pytest.raises(ValueError, match="irreducible"):
        pf_data([[1, 0], [1, 1]])


@pytest.mark.parametrize("matrix, expected", [
    ([[0, 0], [0, 0]], "zero"),
    ([[1, 0], [1, 1]], "reducible"),
    ([[0, 1], [1, 0]], "irreducible_non_primitive"),
    ([[1, 1], [1, 0]], "primitive"),
    ([[0, 1, 0], [0, 0, 1], [1, 0, 0]], "irreducible_non_primitive"),
])
def test_matrix_class(matrix, expected):
    assert matrix_class(matrix) == expected


def test_matrix_power_is_exact():
    fib = [0, 1]
    while len(fib) < 92:
        fib.append(fib[-1] + fib[-2])
    power = matrix_power([[1, 1], [1, 0]], 90)
    assert power[0, 1] == fib[90]
    assert power[0, 0] == fib[91]


@pytest.mark.parametrize("edge", ["c", "d"])
@pytest.mark.parametrize("power", range(7))
def test_occurrence_vector_matches_iteration(rep, edge, power):
    counts = top_counts(apply_map(rep, edge, power), ("c", "d"))
    assert occurrence_vector(rep, edge, power).counts == counts


def test_occurrence_vector_rejects_lower_edge(rep):
    with pytest.raises(ValueError, match="not in the top stratum"):
        occurrence_vector(rep, "a", 2)


def test_direction_map(rep):
    dmap = direction_map(rep)
    assert dmap["c'"] == "d'"
    assert dmap["a'"] == "b'"
    assert dmap["d"] == "d"
    keys = gate_key(rep)
    assert keys["c'"] == keys["d'"] == "d'"
    assert keys["a'"] == keys["b'"]


def test_example_is_relative_train_track(rep):
    report = verify_rtt(rep)
    assert report.passed
    assert [check.exponentially_growing for check in report.strata] == [False, True]
    assert report.to_dict()["path_bound"] == 12


def test_illegal_image_detected():
    basis = RelativeBasis.free(("a", "b"))
    rep = GraphMapRep.rose(Automorphism.parse("a->a b a ; b->a'", basis))
    report = verify_rtt(rep)
    assert not report.passed
    assert "legality_preserved" in report.strata[0].witnesses


def test_boundary_edge_condition_fails():
    graph = MarkedGraph.rose(RelativeBasis.free(("a", "b")))
    rep = GraphMapRep.from_images(graph, {"a": "a", "b": "a b b"}, [{"a"}])
    report = verify_rtt(rep)
    assert not report.passed
    check = report.strata[1]
    assert check.exponentially_growing
    assert not check.boundary_edges_in_stratum
    assert check.witnesses["boundary_edges_in_stratum"] == "b"


def test_maximal_invariant_subgraph(rep):
    K = maximal_invariant_subgraph(rep)
    assert K == frozenset({"a", "b"})
    assert ffs_partial_order(realized_ffs(rep.graph, K), ABCD.peripheral_system()) == "equal"


def test_collapse(rep, phi):
    collapsed = collapse_to_a_traintrack(rep)
    graph = collapsed.graph
    assert graph.vertices == ("v",)
    assert dict(graph.edges) == {"c": ("v", "v"), "d": ("v", "v")}
    assert graph.vertex_groups["v"] == (Word.parse("a"), Word.parse("b"))
    assert collapsed.collapsed == frozenset({"a", "b"})
    assert collapsed.edge_images["c"] == ("c", GroupElement("v", Word.parse("a")), "d")
    assert collapsed.automorphism().images == phi.images
    assert original(collapsed) is rep


def test_collapse_rejects_wrong_system(phi):
    rep = GraphMapRep.rose(phi, [{"a", "b"}])
    A = RelativeBasis(("a", "b", "c", "d"), (("a",),)).peripheral_system()
    with pytest.raises(ValueError, match="but A is"):
        collapse_to_a_traintrack(rep, A)


def test_invariant_subgraph_avoids_top_stratum():
    phi = Automorphism.parse("a->a b ; b->b ; c->c d ; d->d c d", ABCD)
    rep = GraphMapRep.rose(phi, [{"a", "b"}], peripheral_index=1)
    assert maximal_invariant_subgraph(rep) == frozenset({"a", "b"})
    collapsed = collapse_to_a_traintrack(rep)
    assert collapsed.collapsed == frozenset({"a", "b"})
    assert dict(collapsed.graph.edges) == {"c": ("v", "v"), "d": ("v", "v")}


def test_single_stratum_has_nothing_to_collapse():
    rep = GraphMapRep.rose(Automorphism.parse("a->a b ; b->a", RelativeBasis.free(("a", "b"))))
    assert maximal_invariant_subgraph(rep) == frozenset()
    assert collapse_to_a_traintrack(rep) is rep


def test_collapse_is_idempotent(rep):
    collapsed = collapse_to_a_traintrack(rep)
    assert collapse_to_a_traintrack(collapsed) is collapsed


def test_realized_system_of_whole_graph_and_tree():
    basis = RelativeBasis(("a", "b"), (("a",),))
    graph = MarkedGraph(basis, ("u", "w"), {"e": ("u", "w"), "l": ("u", "u"), "x": ("w", "w")},
                        {"a": ("e", "x", "e'"), "b": ("e", "x'", "x'", "e'", "l")}, "u")
    whole = realized_ffs(graph, graph.edges)
    assert ffs_partial_order(whole, FreeFactorSystem.from_blocks((("a", "b"),), 2)) == "equal"
    assert realized_ffs(graph, {"e"}).factors == ()


def test_collapse_to_two_vertex_groups():
    basis = RelativeBasis(("a", "b", "c", "d"), (("a",), ("b",)))
    edges = {"a": ("u", "u"), "b": ("w", "w"), "e": ("u", "w"), "c": ("u", "w"), "d": ("u", "w")}
    marking = {"a": ("a",), "b": ("e", "b", "e'"), "c": ("c", "e'"), "d": ("d", "e'")}
    graph = MarkedGraph(basis, ("u", "w"), edges, marking, "u")
    images = {"a": "a", "b": "b", "e": "e", "c": "c d' c", "d": "c"}
    rep = GraphMapRep.from_images(graph, images, [{"a", "b"}], peripheral_index=1)
    assert maximal_invariant_subgraph(rep) == frozenset({"a", "b"})
    collapsed = collapse_to_a_traintrack(rep)
    assert collapsed.graph.vertices == ("u", "w")
    assert set(collapsed.graph.vertex_groups) == {"u", "w"}
    assert collapsed.graph.vertex_groups["u"] == (Word.parse("a"),)
    assert len(collapsed.graph.vertex_groups["w"]) == 1
    assert set(collapsed.graph.edges) == {"e", "c", "d"}


@st.composite
def positive_automorphisms(draw):
    letters = ("a", "b", "c")
    images = {x: [x] for x in letters}
    for _ in range(draw(st.integers(1, 2))):
        i, j = draw(st.permutations(letters))[:2]
        images[i] = images[i] + images[j]
    return Automorphism(RelativeBasis.free(letters), {x: Word(w) for x, w in images.items()})


@settings(max_examples=100, deadline=None)
@given(positive_automorphisms(), st.sampled_from(("a", "b", "c")), st.integers(0, 6))
def test_occurrence_vectors_on_positive_maps(phi, edge, power):
    rep = GraphMapRep.rose(phi)
    explicit = top_counts(apply_map(rep, edge, power), ("a", "b", "c"))
    assert occurrence_vector(rep, edge, power).counts == explicit
    assert occurrence_vector(rep, edge, power).total() == int(np.sum(list(explicit.values())))


@settings(max_examples=100, deadline=None)
@given(positive_automorphisms(), st.lists(st.sampled_from(RelativeBasis.free(("a", "b", "c")).all_letters()), max_size=6),
       st.integers(0, 3), st.integers(0, 3))
def test_apply_map_composes(phi, letters, n, m):
    rep = GraphMapRep.rose(phi)
    path = tighten(letters)
    assert apply_map(rep, apply_map(rep, path, m), n) == apply_map(rep, path, n + m)
