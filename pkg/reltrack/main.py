from dataclasses import dataclass, asdict
import logging
from typing import Dict, List, Optional, Sequence, Union

from reltrack import currents, graphmap, lamination, reltrees, whitehead
from reltrack.freegroup import Automorphism, CyclicWord, FreeFactorSystem
from reltrack.graphmap import GraphMapRep
from reltrack.specfile import SpecFile, load_spec, parse_spec

logger = logging.getLogger(__name__)


@dataclass
class AnalysisConfig:
    depth: int = 2
    power_max: int = 20
    tol: float = 1e-6
    pf_tol: float = 1e-10
    path_bound: int = 12
    explicit_cap: int = 2000
    stable_power_max: int = 40
    seed: int = 0
    verbose: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class RelativeAutomorphism:
    """An outer automorphism relative to A, held through a relative train track representative.

    The collapse to an A-train track map is computed on first use.
    """

    def __init__(self, rep: GraphMapRep, config: Optional[AnalysisConfig] = None, name: str = ""):
        self.rep = graphmap.original(rep)
        self.config = config or AnalysisConfig()
        self.name = name
        self._collapsed = None

    @classmethod
    def from_spec(cls, spec: Union[str, SpecFile], config: Optional[AnalysisConfig] = None) -> "RelativeAutomorphism":
        if isinstance(spec, str):
            spec = load_spec(spec) if "\n" not in spec else parse_spec(spec)
        return cls(spec.to_rep(), config, spec.source)

    @classmethod
    def from_automorphism(cls, phi: Automorphism, filtration: Sequence[Sequence[str]] = (),
                          config: Optional[AnalysisConfig] = None) -> "RelativeAutomorphism":
        return cls(GraphMapRep.rose(phi, filtration), config)

    @property
    def basis(self):
        return self.rep.basis

    @property
    def peripheral(self) -> FreeFactorSystem:
        return self.basis.peripheral_system()

    @property
    def automorphism(self) -> Automorphism:
        return self.rep.automorphism()

    @property
    def collapsed(self) -> GraphMapRep:
        if self._collapsed is None:
            self._collapsed = graphmap.collapse_to_a_traintrack(self.rep, self.peripheral)
        return self._collapsed

    @property
    def stretch_factor(self) -> Optional[float]:
        return graphmap.transition_matrix(self.rep, self.rep.top, self.config.pf_tol).pf_value

    def strata(self) -> List[graphmap.StratumData]:
        return [graphmap.transition_matrix(self.rep, r, self.config.pf_tol) for r in range(1, self.rep.top + 1)]

    def verify(self) -> graphmap.RTTReport:
        return graphmap.verify_rtt(self.rep, self.config.path_bound)

    def whitehead_graphs(self) -> Dict[str, whitehead.WhiteheadGraph]:
        return {v: whitehead.whitehead_graph(self.rep, v) for v in self.rep.graph.vertices}

    def relative_whitehead_graphs(self) -> Dict[str, whitehead.WhiteheadGraph]:
        collapsed = self.collapsed
        return {v: whitehead.relative_whitehead_graph(collapsed, self.rep, v) for v in collapsed.graph.vertices}

    def certificate(self) -> whitehead.IrreducibilityCertificate:
        return whitehead.irreducibility_certificate(self.collapsed, self.rep, self.peripheral)

    def attracting_language(self, m: Optional[int] = None) -> lamination.LeafLanguage:
        m = self.config.depth if m is None else m
        return lamination.attracting_language(self.rep, m, verbose=self.config.verbose)

    def repelling_language(self, m: Optional[int] = None) -> lamination.LeafLanguage:
        m = self.config.depth if m is None else m
        return lamination.repelling_language(self.rep, m, verbose=self.config.verbose)

    def frequency_current(self, m: Optional[int] = None) -> currents.RelativeCurrent:
        return currents.frequency_current(self.rep, self.config.depth if m is None else m, self.config.pf_tol)

    def ns_experiment(self, alpha: Union[str, CyclicWord], n_max: Optional[int] = None,
                      m: Optional[int] = None) -> currents.NSReport:
        return currents.ns_experiment(
            self.rep, alpha, self.config.power_max if n_max is None else n_max, self.config.depth if m is None else m,
            explicit_cap=self.config.explicit_cap, tol=self.config.pf_tol, verbose=self.config.verbose,
        )

    def tree(self, metric: str = "unit") -> reltrees.GrushkoTreePoint:
        return reltrees.tree_point_from_rep(self.rep, metric)

    def stable_length(self, g: Union[str, CyclicWord]) -> reltrees.LengthEnclosure:
        return reltrees.stable_length(self.rep, g, self.config.tol, self.config.stable_power_max)

    def tree_ns_experiment(self, tree: reltrees.GrushkoTreePoint, sample: Sequence[Union[str, CyclicWord]],
                           p_max: Optional[int] = None) -> reltrees.TreeNSReport:
        return reltrees.tree_ns_experiment(
            self.rep, tree, sample, self.config.power_max if p_max is None else p_max,
            self.config.tol, verbose=self.config.verbose,
        )

    def analyze(self) -> dict:
        """Strata, verification, collapse and Whitehead data in one JSON-ready report."""
        report = {
            "name": self.name,
            "automorphism": str(self.automorphism),
            "strata": [s.to_dict() for s in self.strata()],
            "stretch_factor": self.stretch_factor,
            "rtt": self.verify().to_dict(),
            "whitehead": {},
        }
        for v, g in self.whitehead_graphs().items():
            report["whitehead"][v] = {
                "graph": g.to_dict(),
                "gates": whitehead.gates(self.rep, v),
                "direction_classes": whitehead.direction_classes(self.rep, v),
            }
        try:
            collapsed = self.collapsed
        except ValueError as e:
            logger.warning(f"No A-train track collapse: {e}")
            report["collapse"] = {"error": str(e)}
            return report
        report["collapse"] = {
            "collapsed_edges": sorted(collapsed.collapsed),
            "vertices": list(collapsed.graph.vertices),
            "vertex_groups": {v: [str(w) for w in gens] for v, gens in collapsed.graph.vertex_groups.items()},
            "edges": {e: list(ends) for e, ends in collapsed.graph.edges.items()},
        }
        report["relative_whitehead"] = {}
        for v, g in self.relative_whitehead_graphs().items():
            report["relative_whitehead"][v] = {
                "graph": g.to_dict(),
                "connectivity": whitehead.connectivity_report(g).to_dict(),
            }
        report["certificate"] = self.certificate().to_dict()
        return report
