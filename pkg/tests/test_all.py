import numpy as np
import pytest

from reltrack import AnalysisConfig, RelativeAutomorphism
from reltrack.freegroup import Automorphism, RelativeBasis
from reltrack.reltrees import hnn_limit_tree, is_dual_at_depth, limit_current_table
from experiments import datasets, metrics

ABCD = RelativeBasis(("a", "b", "c", "d"), (("a", "b"),))
EXAMPLE = "a->a b ; b->b ; c->c a d ; d->d c a d"


@pytest.fixture
def relative():
    return RelativeAutomorphism.from_spec(datasets.load_dataset("example"), AnalysisConfig(power_max=15))


def test_from_automorphism_matches_spec(relative):
    other = RelativeAutomorphism.from_automorphism(Automorphism.parse(EXAMPLE, ABCD), [("a", "b")])
    assert other.automorphism.images == relative.automorphism.images
    assert abs(other.stretch_factor - relative.stretch_factor) < 1e-12


def test_analyze(relative):
    report = relative.analyze()
    assert report["rtt"]["passed"]
    assert [s["class"] for s in report["strata"]] == ["reducible", "primitive"]
    assert report["collapse"]["vertex_groups"] == {"v": ["a", "b"]}
    assert report["relative_whitehead"]["v"]["connectivity"]["connected"]
    assert report["certificate"]["verdict"] == "certified_necessary_conditions"


def test_languages(relative):
    attracting = relative.attracting_language()
    repelling = relative.repelling_language()
    assert attracting.depth == repelling.depth == 2
    assert "b b" in attracting
    assert "c c" in repelling


def test_explicit_zero_depth_is_not_the_default(relative):
    assert len(relative.attracting_language(0)) == 0
    assert len(relative.repelling_language(0)) == 0
    with pytest.raises(ValueError, match="positive"):
        relative.ns_experiment("c", n_max=3, m=0)


def test_north_south(relative):
    report = relative.ns_experiment("c", n_max=20, m=1)
    assert metrics.ratio_error(report.ratios, report.pf_value) < 1e-3
    assert metrics.first_converged(report.ratios, report.pf_value, 1e-3) is not None
    assert report.distances[-1] < report.distances[0]


def test_tree_spectra(relative):
    report = relative.tree_ns_experiment(relative.tree("pf"), ["c", "d", "c d'"])
    drift = metrics.spectrum_drift(report.spectra)
    assert len(drift) == len(report.powers) - 1
    assert np.allclose(drift, report.differences)
    widths = metrics.enclosure_widths(report.enclosures)
    assert all(w == 0 for w in widths.values())
    assert relative.stable_length("c").width == 0


def test_limit_current_is_not_dual():
    assert not limit_current_table(6).consistency_violations()
    assert not is_dual_at_depth(hnn_limit_tree(), limit_current_table(6), 6)


@pytest.mark.parametrize("name, kind", [
    ("example", "automorphism"),
    ("fibonacci", "automorphism"),
    ("hnn_limit", "tree"),
    ("counterexample_k2", "tree"),
])
def test_datasets(name, kind):
    spec = datasets.load_dataset(name)
    assert spec.is_tree == (kind == "tree")
    table = datasets.list_datasets()
    assert table.filter(table["name"] == name)["kind"].to_list() == [kind]


def test_unknown_dataset():
    with pytest.raises(ValueError, match="Unknown dataset"):
        datasets.load_dataset("nonexistent")


def test_metrics_edge_cases():
    assert np.isnan(metrics.ratio_error([], 2.0))
    assert metrics.first_converged([5.0, 1.0], 0.0, 0.5) is None
    assert metrics.distance_decay_rate([1.0, 0.5, 0.25]) == pytest.approx(0.5)
    assert len(metrics.spectrum_drift([[1.0]])) == 0
