"""Identifiability claims and the end-to-end verification harness.

Each claim pairs a scenario with an estimand and a statement about whether the
trial-based identification functional recovers it. The expected status is read
off the scenario's effective graph (edges with zero coefficients removed), so
coefficient overrides that sever a path flip the expectation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import pandas as pd

from .estimators import DEFAULT_BOOTSTRAP, EstimateReport, Estimator, contrast, estimate
from .fixtures import ScenarioId, claim_graph, graph_variant, independence_table, table_structures
from .graph import CausalGraph, d_separated, DSepQuery
from .scm import (
    Estimand,
    Population,
    ScenarioSpec,
    consistency_check,
    effective_graph,
    graph_distribution_check,
    sample_observational,
)

IDENTIFIED = "identified"
NOT_IDENTIFIED = "not-identified"

IDENTIFIED_SE = 4.0
BIASED_SE = 5.0
BIASED_FRACTION = 0.5
CMI_TOL = 1e-12

VERIFY_N = 1_000_000
VERIFY_SEEDS = (1, 2, 3, 4, 5)

_STATEMENTS = {
    (True, Population.TARGET): "mean outcome if everyone joined the trial and was assigned z",
    (False, Population.TARGET): "mean outcome if everyone were assigned z outside any trial",
    (True, Population.SUBSET): "joint-intervention mean among those who did not join the trial",
    (False, Population.SUBSET): "assignment-only mean among those who did not join the trial",
    (True, Population.TRIAL): "joint-intervention mean among trial participants",
    (False, Population.TRIAL): "assignment-only mean among trial participants",
}

_MEANS = (
    "mean_joint({z})@target",
    "mean_assign({z})@target",
    "mean_joint({z})@subset",
    "mean_assign({z})@trial",
)
_CONTRASTS = ("contrast_joint(1,0)@target", "contrast_assign(1,0)@target")


@dataclass(frozen=True)
class Claim:
    scenario: ScenarioId
    estimand: Estimand

    @property
    def claim_id(self) -> str:
        return f"{self.scenario.short}:{self.estimand}"

    @property
    def statement(self) -> str:
        e = self.estimand
        text = _STATEMENTS[(e.joint, e.population)]
        if e.is_contrast:
            text = "difference z=1 vs z=0 of the " + text
        return text


def claim_registry(scenario: str | ScenarioId) -> list[Claim]:
    sid = ScenarioId.parse(scenario)
    out = [Claim(sid, Estimand.parse(t.format(z=z))) for t in _MEANS for z in (0, 1)]
    out += [Claim(sid, Estimand.parse(t)) for t in _CONTRASTS]
    return out


def _label(g: CausalGraph, name: str) -> str:
    (lab,) = [n.label for n in g.nodes if n.name == name and n.tag]
    return lab


def _random_half(g: CausalGraph, name: str) -> str:
    (lab,) = [n.label for n in g.nodes if n.name == name and n.value is None]
    return lab


def expected_status(spec: ScenarioSpec, estimand: Estimand) -> str:
    """Graphical identifiability of ``estimand`` under the effective graph.

    Joint-intervention means need participation exchangeability and assignment
    exchangeability in the trial. Assignment-only means additionally need
    participation to have no effect on the outcome except through assignment.
    The trial-population mean needs only randomization within the trial.
    """
    dag = effective_graph(spec)
    if estimand.population is Population.TRIAL:
        g = graph_variant(spec.scenario, "trial_swig", dag)
        ok = d_separated(g, DSepQuery.of(_label(g, "Y"), _random_half(g, "Z"), ["X", "S"]))
        return IDENTIFIED if ok else NOT_IDENTIFIED
    g = graph_variant(spec.scenario, "swig_joint", dag)
    y = _label(g, "Y")
    ok = d_separated(g, DSepQuery.of(y, "S", ["X"])) and d_separated(
        g, DSepQuery.of(y, _random_half(g, "Z"), ["X", "S"])
    )
    if ok and not estimand.joint:
        ok = y not in g.descendants("s=1")
    return IDENTIFIED if ok else NOT_IDENTIFIED


# -- verdicts ----------------------------------------------------------------------------


@dataclass(frozen=True)
class VerdictRow:
    claim_id: str
    expected: str
    observed: float  # median |estimate - oracle| over seeds
    threshold: float  # median per-seed threshold
    passed: bool
    seeds_passed: int = 0
    seeds: int = 0
    asymptotic_bias: float = 0.0
    statement: str = ""


@dataclass(frozen=True)
class CheckRow:
    check: str
    item: str
    expected: str
    observed: str
    passed: bool


@dataclass
class VerifyVerdict:
    rows: list[VerdictRow] = field(default_factory=list)
    checks: list[CheckRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(c.passed for c in self.checks)

    def frame(self) -> pd.DataFrame:
        cols = list(VerdictRow.__dataclass_fields__)
        return pd.DataFrame([r.__dict__ for r in self.rows], columns=cols)

    def checks_frame(self) -> pd.DataFrame:
        cols = list(CheckRow.__dataclass_fields__)
        return pd.DataFrame([c.__dict__ for c in self.checks], columns=cols)

    def failures(self) -> list[str]:
        return [r.claim_id for r in self.rows if not r.passed] + [
            f"{c.check}:{c.item}" for c in self.checks if not c.passed
        ]


def seed_passes(status: str, report: EstimateReport) -> tuple[bool, float]:
    """Per-seed verdict and the threshold it was judged against."""
    bias = abs(report.point - report.oracle)
    if status == IDENTIFIED:
        thr = IDENTIFIED_SE * report.mc_se
        return bias < thr, thr
    thr = max(BIASED_SE * report.mc_se, BIASED_FRACTION * abs(report.asymptotic_bias))
    return bias > thr, thr


def _seed_reports(spec, claims, seed, n, estimator, n_boot):
    d = sample_observational(spec, n, seed=seed)
    means: dict[str, EstimateReport] = {}
    out = {}
    for c in claims:
        e = c.estimand
        parts = e.parts() if e.is_contrast else (e,)
        for p in parts:
            if str(p) not in means:
                means[str(p)] = estimate(d, p, estimator, spec=spec, n_boot=n_boot, boot_seed=seed)
        if e.is_contrast:
            out[c.claim_id] = contrast(means[str(parts[0])], means[str(parts[1])])
        else:
            out[c.claim_id] = means[str(e)]
    return out


def verify_claims(
    spec: ScenarioSpec,
    *,
    n: int = VERIFY_N,
    seeds: Iterable[int] = VERIFY_SEEDS,
    estimator: Estimator | str = Estimator.GFORMULA,
    n_boot: int = DEFAULT_BOOTSTRAP,
    claims: list[Claim] | None = None,
    jobs: int = 1,
) -> list[VerdictRow]:
    """Judge every claim by majority over seeds."""
    claims = claims if claims is not None else claim_registry(spec.scenario)
    seeds = list(seeds)

    def run(seed):
        return _seed_reports(spec, claims, seed, n, estimator, n_boot)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            per_seed = list(pool.map(run, seeds))
    else:
        per_seed = [run(s) for s in seeds]
    rows = []
    for c in claims:
        status = expected_status(spec, c.estimand)
        judged = [seed_passes(status, r[c.claim_id]) for r in per_seed]
        biases = [abs(r[c.claim_id].point - r[c.claim_id].oracle) for r in per_seed]
        wins = sum(ok for ok, _ in judged)
        rows.append(
            VerdictRow(
                claim_id=c.claim_id,
                expected=status,
                observed=float(np.median(biases)),
                threshold=float(np.median([t for _, t in judged])),
                passed=wins * 2 > len(seeds),
                seeds_passed=wins,
                seeds=len(seeds),
                asymptotic_bias=float(per_seed[0][c.claim_id].asymptotic_bias),
                statement=c.statement,
            )
        )
    return rows


def dsep_checks(structures: Iterable[str] | None = None) -> list[CheckRow]:
    out = []
    for s in structures if structures is not None else table_structures():
        for claim in independence_table(s):
            got = d_separated(claim_graph(claim), claim.query)
            word = {True: "separated", False: "connected"}
            out.append(CheckRow("dsep", claim.claim_id, word[claim.expected], word[got], got == claim.expected))
    return out


def consistency_checks(spec: ScenarioSpec, n: int = 10_000) -> list[CheckRow]:
    rep = consistency_check(spec, n)
    return [
        CheckRow(
            "consistency", spec.scenario.short, "0 violations",
            f"{rep.violations} violations in {rep.checked} comparisons", rep.passed,
        )
    ]


def distribution_checks(spec: ScenarioSpec) -> list[CheckRow]:
    res = graph_distribution_check(spec)
    worst = max((r.cmi for r in res), default=0.0)
    return [
        CheckRow(
            "distribution", spec.scenario.short, f"max CMI < {CMI_TOL:g}",
            f"max CMI {worst:.3g} over {len(res)} statements", worst < CMI_TOL,
        )
    ]


def verify(
    specs: list[ScenarioSpec],
    *,
    n: int = VERIFY_N,
    seeds: Iterable[int] = VERIFY_SEEDS,
    estimator: Estimator | str = Estimator.GFORMULA,
    n_boot: int = DEFAULT_BOOTSTRAP,
    jobs: int = 1,
    consistency_n: int = 10_000,
) -> VerifyVerdict:
    """Claim matrix plus d-separation, graph/distribution and consistency checks."""
    seeds = list(seeds)
    verdict = VerifyVerdict()
    shorts = {s.scenario.short for s in specs}
    structures = [t for t in table_structures() if t in shorts]
    if len(shorts) == len(ScenarioId):
        structures = table_structures()
    verdict.checks += dsep_checks(structures)
    for spec in specs:
        verdict.checks += distribution_checks(spec)
        verdict.checks += consistency_checks(spec, consistency_n)
        verdict.rows += verify_claims(spec, n=n, seeds=seeds, estimator=estimator, n_boot=n_boot, jobs=jobs)
    return verdict


def format_verdict(verdict: VerifyVerdict) -> str:
    lines = []
    for c in verdict.checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.check:<12} {c.item}  [{c.observed}]")
    for r in verdict.rows:
        rel = ">" if r.expected == NOT_IDENTIFIED else "<"
        lines.append(
            f"{'PASS' if r.passed else 'FAIL'}  {r.claim_id:<34} {r.expected:<15} "
            f"|bias|={r.observed:.4f} {rel} {r.threshold:.4f}  ({r.seeds_passed}/{r.seeds} seeds)"
        )
    total = len(verdict.rows) + len(verdict.checks)
    bad = len(verdict.failures())
    lines.append(f"{total - bad}/{total} passed")
    return "\n".join(lines)

