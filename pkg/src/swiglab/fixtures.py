"""Registered causal structures and their expected independence verdicts."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .graph import CausalGraph, DSepQuery, GraphError, parse_graph, restrict_to_context, split_intervene


class UnknownScenario(GraphError, LookupError):
    pass


class ScenarioId(str, enum.Enum):
    FIG1 = "fig1_perfect_adherence"
    FIG2 = "fig2_direct_effect"
    FIG3 = "fig3_common_causes"
    COMBINED = "combined_appendix"

    @property
    def short(self) -> str:
        return _SHORT[self]

    @classmethod
    def parse(cls, text: "str | ScenarioId") -> "ScenarioId":
        if isinstance(text, ScenarioId):
            return text
        key = str(text).strip().lower()
        for sid in cls:
            if key in (sid.value, _SHORT[sid]):
                return sid
        raise UnknownScenario(f"unknown scenario {text!r}")


_SHORT = {
    ScenarioId.FIG1: "fig1",
    ScenarioId.FIG2: "fig2",
    ScenarioId.FIG3: "fig3",
    ScenarioId.COMBINED: "combined",
}

# Perfect adherence: A is a deterministic copy of Z. Within the trial Z is
# randomized, so its latent cause is inactive once S is set to 1.
_FIG1 = """\
node X
node S
node Z
node A
node Y
unmeasured U
copy Z A
drop U -> Z if S=1
X -> S
X -> Z
S -> Z
U -> Z
Z -> A
X -> Y
A -> Y
U -> Y
"""

_FIG2 = """\
node X
node S
node Z
node A
node Y
unmeasured U
drop U -> Z if S=1
X -> S
X -> Z
X -> A
X -> Y
S -> Z
S -> A
U -> Z
Z -> A
U -> A
A -> Y
U -> Y
"""

_FIG3 = """\
node X
unmeasured U1
node S
node Z
node A
node Y
unmeasured U2
drop U2 -> Z if S=1
X -> S
U1 -> S
X -> Z
X -> A
X -> Y
S -> Z
U2 -> Z
Z -> A
U1 -> A
U2 -> A
A -> Y
U2 -> Y
"""

_COMBINED = _FIG3 + "S -> A\n"

GRAPH_TEXT = {
    ScenarioId.FIG1: _FIG1,
    ScenarioId.FIG2: _FIG2,
    ScenarioId.FIG3: _FIG3,
    ScenarioId.COMBINED: _COMBINED,
}

# Symbolic intervention value used in graph queries.
ASSIGN = [("Z", "z")]
JOINT = [("S", "1"), ("Z", "z")]


def scenario_graph(scenario: "str | ScenarioId") -> CausalGraph:
    return parse_graph(GRAPH_TEXT[ScenarioId.parse(scenario)])


VARIANTS = ("dag", "swig_assign", "swig_joint", "trial_swig")


def graph_variant(scenario: "str | ScenarioId", variant: str, dag: CausalGraph | None = None) -> CausalGraph:
    """One of the registered views of a scenario.

    ``dag`` is the observational graph, ``swig_assign`` splits Z,
    ``swig_joint`` splits S and Z jointly, and ``trial_swig`` restricts to the
    trial context (S=1) before splitting Z. Pass ``dag`` to use a modified
    structure (e.g. with severed edges) instead of the shipped one.
    """
    g = dag if dag is not None else scenario_graph(scenario)
    if variant == "dag":
        return g
    if variant == "swig_assign":
        return split_intervene(g, ASSIGN)
    if variant == "swig_joint":
        return split_intervene(g, JOINT)
    if variant == "trial_swig":
        return split_intervene(restrict_to_context(g, "S", "1"), ASSIGN)
    raise UnknownScenario(f"unknown graph variant {variant!r}")


@dataclass(frozen=True)
class IndependenceClaim:
    structure: str
    variant: str
    query: DSepQuery
    expected: bool
    note: str

    @property
    def claim_id(self) -> str:
        return f"{self.structure}:{self.variant}:{self.query}"


def _c(structure, variant, a, b, given, expected, note):
    return IndependenceClaim(structure, variant, DSepQuery.of(a, b, given), expected, note)


_TABLE = {
    "fig1": [
        _c("fig1", "swig_assign", "Y^{z}", "Z", ["X"], False, "latent confounding of assignment"),
        _c("fig1", "swig_assign", "Y^{z}", "Z", ["X", "S"], False, "conditioning on S leaves U open"),
        _c("fig1", "swig_joint", "Y^{s=1,z}", "S", ["X"], True, "participation exchangeability"),
        _c("fig1", "swig_joint", "Y^{s=1,z}", "Z^{s=1}", ["X", "S"], True, "assignment exchangeability in the trial"),
    ],
    "fig2": [
        _c("fig2", "swig_assign", "Y^{z}", "Z", ["X"], False, "open via U and via S -> A"),
        _c("fig2", "swig_assign", "Y^{z}", "Z", ["X", "S"], False, "conditioning on S leaves U open"),
        _c("fig2", "swig_joint", "Y^{s=1,z}", "S", ["X"], True, "participation exchangeability"),
        _c("fig2", "swig_joint", "Y^{s=1,z}", "Z^{s=1}", ["X", "S"], True, "assignment exchangeability in the trial"),
    ],
    "fig3": [
        _c("fig3", "swig_assign", "Y^{z}", "Z", ["X"], False, "open via S <- U1 and via U2"),
        _c("fig3", "swig_joint", "Y^{s=1,z}", "Z^{s=1}", ["X", "S"], True, "assignment exchangeability in the trial"),
        _c("fig3", "swig_joint", "Y^{s=1,z}", "S", ["X"], False, "S <- U1 -> A -> Y open"),
        _c("fig3", "swig_joint", "Y^{s=1,z}", "S", ["X", "A^{s=1,z}"], False, "A is a collider between U1 and U2"),
    ],
    "combined": [
        _c("combined", "swig_assign", "Y^{z}", "Z", ["X"], False, "all fig2 and fig3 paths open"),
        _c("combined", "swig_joint", "Y^{s=1,z}", "S", ["X"], False, "S <- U1 -> A -> Y open"),
        _c("combined", "swig_joint", "Y^{s=1,z}", "Z^{s=1}", ["X", "S"], True, "assignment exchangeability in the trial"),
    ],
    "trial-conditional": [
        _c("trial-conditional", "trial_swig", "Y^{z}", "Z", ["X", "S"], True, "randomization within the trial"),
    ],
}

_TABLE_SCENARIO = {
    "fig1": ScenarioId.FIG1,
    "fig2": ScenarioId.FIG2,
    "fig3": ScenarioId.FIG3,
    "combined": ScenarioId.COMBINED,
    "trial-conditional": ScenarioId.COMBINED,
}


def table_structures() -> list[str]:
    return list(_TABLE)


def independence_table(structure: str) -> list[IndependenceClaim]:
    """Expected d-separation verdicts for a registered structure.

    ``structure`` is ``fig1``, ``fig2``, ``fig3``, ``combined`` (long scenario
    ids accepted) or ``trial-conditional``.
    """
    key = structure.strip().lower()
    if key not in _TABLE:
        try:
            key = ScenarioId.parse(key).short
        except UnknownScenario:
            raise UnknownScenario(f"no independence table for {structure!r}") from None
    return list(_TABLE[key])


def claim_graph(claim: IndependenceClaim) -> CausalGraph:
    return graph_variant(_TABLE_SCENARIO[claim.structure], claim.variant)
