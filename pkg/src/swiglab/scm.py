"""Discrete structural causal models for the registered scenarios.

Each scenario graph is read as a nonparametric structural equation model with
logistic links. Every node owns an exogenous uniform keyed by (seed, node,
row), so observational and interventional draws for the same row share their
noise and consistency holds draw by draw. The same conditional distributions
drive an exact enumeration oracle.
"""

from __future__ import annotations

import enum
import itertools
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd
import yaml

from .errors import InvalidEstimand, InvalidSpec, PositivityViolation
from .fixtures import ScenarioId, graph_variant, independence_table, scenario_graph
from .graph import CausalGraph, DSepQuery, NodeKind, d_separated
from .rng import row_range, uniforms

NA = -1
CHUNK_ROWS = 1 << 18

# the latent that confounds assignment outside the trial; also the partner of
# Z in the optional Z x U interaction of the treatment equation
CONFOUNDER = {
    ScenarioId.FIG1: "U",
    ScenarioId.FIG2: "U",
    ScenarioId.FIG3: "U2",
    ScenarioId.COMBINED: "U2",
}


def expit(x):
    return 1.0 / (1.0 + np.exp(-x))


# -- estimands ------------------------------------------------------------------


class EstimandKind(str, enum.Enum):
    MEAN_ASSIGN = "mean_assign"
    MEAN_JOINT = "mean_joint"
    CONTRAST_ASSIGN = "contrast_assign"
    CONTRAST_JOINT = "contrast_joint"


class Population(str, enum.Enum):
    TARGET = "target"
    SUBSET = "subset"  # non-randomized subset, S=0
    TRIAL = "trial"  # population underlying the trial, S=1


_ESTIMAND_RE = re.compile(r"^\s*(\w+)\s*\(\s*([01])\s*(?:,\s*([01])\s*)?\)\s*(?:@\s*(\w+))?\s*$")


@dataclass(frozen=True)
class Estimand:
    """A counterfactual mean or contrast.

    ``mean_assign(z)`` is E[Y^z]; ``mean_joint(z)`` is E[Y^{s=1,z}]. The
    population restricts the expectation to S=0 (subset) or S=1 (trial) using
    the natural participation indicator.
    """

    kind: EstimandKind
    z: int
    z_ref: int | None = None
    population: Population = Population.TARGET

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimandKind(self.kind))
        object.__setattr__(self, "population", Population(self.population))
        if self.z not in (0, 1):
            raise InvalidEstimand(f"assignment value must be 0 or 1, got {self.z!r}")
        if self.is_contrast:
            if self.z_ref not in (0, 1):
                raise InvalidEstimand("contrast needs a reference assignment 0 or 1")
            if self.z_ref == self.z:
                raise InvalidEstimand("contrast needs two different assignments")
        elif self.z_ref is not None:
            raise InvalidEstimand("a mean takes a single assignment value")

    @property
    def is_contrast(self) -> bool:
        return self.kind in (EstimandKind.CONTRAST_ASSIGN, EstimandKind.CONTRAST_JOINT)

    @property
    def joint(self) -> bool:
        return self.kind in (EstimandKind.MEAN_JOINT, EstimandKind.CONTRAST_JOINT)

    def mean(self, z: int) -> "Estimand":
        kind = EstimandKind.MEAN_JOINT if self.joint else EstimandKind.MEAN_ASSIGN
        return Estimand(kind, z, None, self.population)

    def parts(self) -> tuple["Estimand", "Estimand"]:
        return self.mean(self.z), self.mean(self.z_ref)

    def regime(self, z: int | None = None) -> dict[str, int]:
        z = self.z if z is None else z
        return {"S": 1, "Z": z} if self.joint else {"Z": z}

    @classmethod
    def parse(cls, text: str) -> "Estimand":
        """Parse ``mean_joint(1)@target`` or ``contrast_assign(1,0)@subset``."""
        m = _ESTIMAND_RE.match(text)
        if not m:
            raise InvalidEstimand(f"cannot parse estimand {text!r}")
        kind, z, zref, pop = m.groups()
        try:
            return cls(
                EstimandKind(kind),
                int(z),
                None if zref is None else int(zref),
                Population(pop or "target"),
            )
        except ValueError as exc:
            if isinstance(exc, InvalidEstimand):
                raise
            raise InvalidEstimand(f"cannot parse estimand {text!r}: {exc}") from None

    def __str__(self) -> str:
        args = f"{self.z}" if self.z_ref is None else f"{self.z},{self.z_ref}"
        return f"{self.kind.value}({args})@{self.population.value}"


# -- regimes --------------------------------------------------------------------


def regime_label(fixed: Mapping[str, int]) -> str:
    if not fixed:
        return "observational"
    order = [k for k in ("S", "Z") if k in fixed] + sorted(k for k in fixed if k not in ("S", "Z"))
    return "do(" + ",".join(f"{k}={int(fixed[k])}" for k in order) + ")"


def parse_regime(text: str | Mapping[str, int]) -> dict[str, int]:
    """``"do(S=1,Z=0)"`` -> ``{"S": 1, "Z": 0}``; ``"observational"`` -> ``{}``."""
    if isinstance(text, Mapping):
        return {str(k): int(v) for k, v in text.items()}
    t = text.strip()
    if t in ("", "observational", "obs"):
        return {}
    m = re.fullmatch(r"do\((.*)\)", t)
    if not m:
        raise InvalidSpec(f"cannot parse regime {text!r}")
    out = {}
    for item in m.group(1).split(","):
        k, _, v = item.partition("=")
        if not v:
            raise InvalidSpec(f"cannot parse regime {text!r}")
        out[k.strip().upper()] = int(v)
    return out


# -- scenario parameters ----------------------------------------------------------


@dataclass(frozen=True)
class OtherTreatment:
    """Optional third treatment level ("other treatment", coded A=2)."""

    prob: float
    y_effect: float


def coefficient_name(g: CausalGraph, parent: str, child: str) -> str:
    prefix = "gamma" if g.node(parent).kind is NodeKind.UNMEASURED else "beta"
    return f"{prefix}_{parent}_on_{child}"


def coefficient_edges(g: CausalGraph) -> dict[str, tuple[str, str]]:
    """Edges that carry a logit coefficient, keyed by coefficient name.

    The S -> Z edge switches between the trial and routine-care assignment
    mechanisms and copy edges are deterministic, so neither has a coefficient.
    """
    copies = set(g.copies)
    out = {}
    for p, c in g.edges:
        if (p, c) in copies or (p, c) == ("S", "Z"):
            continue
        out[coefficient_name(g, p, c)] = (p, c)
    return out


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one scenario's structural equations (logit scale)."""

    scenario: ScenarioId
    coeffs: Mapping[str, float]
    intercepts: Mapping[str, float]
    latent_probs: Mapping[str, float]
    x_levels: int = 4
    x_probs: tuple[float, ...] = (0.3, 0.3, 0.2, 0.2)
    interaction: float = 0.0
    other_treatment: OtherTreatment | None = None
    trial_assign_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", ScenarioId.parse(self.scenario))
        object.__setattr__(self, "coeffs", {k: float(v) for k, v in self.coeffs.items()})
        object.__setattr__(self, "intercepts", {k: float(v) for k, v in self.intercepts.items()})
        object.__setattr__(self, "latent_probs", {k: float(v) for k, v in self.latent_probs.items()})
        object.__setattr__(self, "x_probs", tuple(float(p) for p in self.x_probs))
        if isinstance(self.other_treatment, Mapping):
            object.__setattr__(self, "other_treatment", OtherTreatment(**self.other_treatment))
        self.validate()

    # hashable identity for caches
    def key(self) -> tuple:
        return (
            self.scenario,
            tuple(sorted(self.coeffs.items())),
            tuple(sorted(self.intercepts.items())),
            tuple(sorted(self.latent_probs.items())),
            self.x_levels,
            self.x_probs,
            self.interaction,
            self.other_treatment,
            self.trial_assign_prob,
        )

    @property
    def graph(self) -> CausalGraph:
        return scenario_graph(self.scenario)

    @property
    def interaction_name(self) -> str:
        return f"delta_Z_{CONFOUNDER[self.scenario]}_on_A"

    def validate(self) -> None:
        g = self.graph
        if self.x_levels < 2 or len(self.x_probs) != self.x_levels:
            raise InvalidSpec("x_probs must list one probability per X level (at least 2)")
        _check_probs("x_probs", self.x_probs)
        latents = [n.label for n in g.nodes if n.kind is NodeKind.UNMEASURED]
        if set(self.latent_probs) != set(latents):
            raise InvalidSpec(f"latent_probs must cover exactly {sorted(latents)}, got {sorted(self.latent_probs)}")
        for name, p in self.latent_probs.items():
            if not 0.0 < p < 1.0:
                raise InvalidSpec(f"latent probability {name}={p} outside (0, 1)")
        expected = set(coefficient_edges(g))
        got = set(self.coeffs)
        if got != expected:
            missing, extra = sorted(expected - got), sorted(got - expected)
            raise InvalidSpec(f"coefficients do not match graph edges: missing {missing}, extra {extra}")
        copies = {d for _, d in g.copies}
        need = {"S", "Z", "A", "Y"} - copies
        if set(self.intercepts) != need:
            raise InvalidSpec(f"intercepts must cover exactly {sorted(need)}, got {sorted(self.intercepts)}")
        for k, v in [*self.coeffs.items(), *self.intercepts.items(), ("interaction", self.interaction)]:
            if not np.isfinite(v):
                raise InvalidSpec(f"{k} is not finite")
        if not 0.0 < self.trial_assign_prob < 1.0:
            raise PositivityViolation(
                f"trial_assign_prob={self.trial_assign_prob} leaves an arm empty in the trial"
            )
        if "A" in copies and (self.interaction != 0.0 or self.other_treatment is not None):
            raise InvalidSpec("perfect adherence leaves no treatment equation to modify")
        if self.other_treatment is not None and not 0.0 < self.other_treatment.prob < 1.0:
            raise InvalidSpec("other_treatment.prob must lie in (0, 1)")
        if not isinstance(self.seed, (int, np.integer)):
            raise InvalidSpec("seed must be an integer")

    def check_positivity(self, tol: float = 1e-12) -> None:
        """Raise :class:`PositivityViolation` if some X level has Pr[S=1|x] at 0 or 1."""
        cond = observational_conditionals(self)
        for x, p in enumerate(cond.p_s1_x):
            if not tol < p < 1.0 - tol:
                raise PositivityViolation(f"Pr[S=1|X={x}] = {p:.3g} is not inside (0, 1)", ("x", x))

    # -- overrides and serialization --------------------------------------------
    def settable(self) -> list[str]:
        names = list(self.coeffs) + [f"alpha_{k}" for k in self.intercepts]
        names += [f"p_{k}" for k in self.latent_probs] + ["trial_assign_prob"]
        if "A" not in {d for _, d in self.graph.copies}:
            names.append(self.interaction_name)
        return names

    def with_overrides(self, overrides: Mapping[str, float] | None = None, **kw) -> "ScenarioSpec":
        """Copy with individual parameters replaced (``beta_S_on_A=0`` etc.)."""
        items = dict(overrides or {}, **kw)
        coeffs, intercepts, latents = dict(self.coeffs), dict(self.intercepts), dict(self.latent_probs)
        changes: dict = {}
        for name, value in items.items():
            value = float(value)
            if name in coeffs:
                coeffs[name] = value
            elif name.startswith("alpha_") and name[6:] in intercepts:
                intercepts[name[6:]] = value
            elif name.startswith("p_") and name[2:] in latents:
                latents[name[2:]] = value
            elif name == "trial_assign_prob":
                changes["trial_assign_prob"] = value
            elif name == self.interaction_name and name in self.settable():
                changes["interaction"] = value
            elif name == "seed":
                changes["seed"] = int(value)
            else:
                raise InvalidSpec(f"unknown parameter {name!r}; settable: {', '.join(self.settable())}")
        return replace(self, coeffs=coeffs, intercepts=intercepts, latent_probs=latents, **changes)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "x_levels": self.x_levels,
            "x_probs": list(self.x_probs),
            "latent_probs": dict(self.latent_probs),
            "intercepts": dict(self.intercepts),
            "coeffs": dict(self.coeffs),
            "interaction": self.interaction,
            "other_treatment": None
            if self.other_treatment is None
            else {"prob": self.other_treatment.prob, "y_effect": self.other_treatment.y_effect},
            "trial_assign_prob": self.trial_assign_prob,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioSpec":
        data = dict(data)
        unknown = set(data) - set(SPEC_KEYS)
        if unknown:
            raise InvalidSpec(f"unknown scenario spec keys: {sorted(unknown)}")
        if "scenario" not in data:
            raise InvalidSpec("scenario spec needs a 'scenario' key")
        base = default_spec(data["scenario"]).to_dict()
        base.update({k: v for k, v in data.items() if v is not None or k == "other_treatment"})
        try:
            return cls(**base)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    def dump_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dump_yaml())

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioSpec":
        data = yaml.safe_load(Path(path).read_text())
        if not isinstance(data, Mapping):
            raise InvalidSpec(f"{path}: expected a mapping at top level")
        return cls.from_dict(data)


SPEC_KEYS = {
    "scenario": "registered scenario id (fig1_perfect_adherence, fig2_direct_effect, fig3_common_causes, combined_appendix) or short alias",
    "x_levels": "number of levels of the discrete covariate X (>= 2)",
    "x_probs": "probability of each X level; sums to 1",
    "latent_probs": "Pr[U=1] for every unmeasured node of the scenario graph",
    "intercepts": "logit intercepts of S, Z (routine care), A and Y",
    "coeffs": "one logit coefficient per graph edge, named beta_<P>_on_<C> (gamma_ for latent parents); S->Z and copy edges excluded",
    "interaction": "Z x U coefficient in the treatment equation (U2 in fig3/combined)",
    "other_treatment": "null, or {prob, y_effect}: probability of a third treatment level and its logit effect on Y",
    "trial_assign_prob": "Pr[Z=1 | S=1], the randomization ratio",
    "seed": "default 64-bit seed for sampling",
}


def _check_probs(name: str, probs: Iterable[float]) -> None:
    probs = list(probs)
    if any(not 0.0 < p < 1.0 for p in probs):
        raise InvalidSpec(f"{name} must lie strictly inside (0, 1)")
    if abs(sum(probs) - 1.0) > 1e-12:
        raise InvalidSpec(f"{name} must sum to 1 (got {sum(probs)!r})")


# Fixture coefficients; biases they induce are checked by enumeration in the tests.
_FIXTURE_SPECS: dict[ScenarioId, dict] = {
    ScenarioId.FIG1: dict(
        latent_probs={"U": 0.4},
        intercepts={"S": -1.0, "Z": -0.5, "Y": -1.5},
        coeffs={
            "beta_X_on_S": 0.6,
            "beta_X_on_Z": 0.4,
            "gamma_U_on_Z": 1.5,
            "beta_X_on_Y": 0.5,
            "beta_A_on_Y": 1.0,
            "gamma_U_on_Y": 1.2,
        },
        seed=101,
    ),
    ScenarioId.FIG2: dict(
        latent_probs={"U": 0.4},
        intercepts={"S": -1.0, "Z": -0.5, "A": -2.0, "Y": -1.5},
        coeffs={
            "beta_X_on_S": 0.6,
            "beta_X_on_Z": 0.4,
            "gamma_U_on_Z": 1.5,
            "beta_X_on_A": 0.2,
            "beta_S_on_A": 2.0,
            "beta_Z_on_A": 1.5,
            "gamma_U_on_A": 0.8,
            "beta_X_on_Y": 0.4,
            "beta_A_on_Y": 2.0,
            "gamma_U_on_Y": 1.0,
        },
        interaction=0.5,
        seed=202,
    ),
    ScenarioId.FIG3: dict(
        latent_probs={"U1": 0.5, "U2": 0.4},
        intercepts={"S": -1.8, "Z": -0.5, "A": -2.5, "Y": -1.5},
        coeffs={
            "beta_X_on_S": 0.6,
            "gamma_U1_on_S": 2.5,
            "beta_X_on_Z": 0.4,
            "gamma_U2_on_Z": 1.5,
            "beta_X_on_A": 0.2,
            "beta_Z_on_A": 1.5,
            "gamma_U1_on_A": 3.0,
            "gamma_U2_on_A": 0.8,
            "beta_X_on_Y": 0.4,
            "beta_A_on_Y": 2.5,
            "gamma_U2_on_Y": 1.0,
        },
        interaction=0.5,
        seed=303,
    ),
}
_FIXTURE_SPECS[ScenarioId.COMBINED] = dict(
    _FIXTURE_SPECS[ScenarioId.FIG3],
    coeffs={**_FIXTURE_SPECS[ScenarioId.FIG3]["coeffs"], "beta_S_on_A": 1.0},
    seed=404,
)


def default_spec(scenario: str | ScenarioId) -> ScenarioSpec:
    sid = ScenarioId.parse(scenario)
    return ScenarioSpec(scenario=sid, **_FIXTURE_SPECS[sid])


def effective_graph(spec: ScenarioSpec) -> CausalGraph:
    """Scenario graph with edges removed wherever a zero coefficient removes their effect."""
    g = spec.graph
    conf = CONFOUNDER[spec.scenario]
    dead = []
    for name, (p, c) in coefficient_edges(g).items():
        alive = spec.coeffs[name] != 0.0
        if c == "A" and p in ("Z", conf) and spec.interaction != 0.0:
            alive = True
        if (p, c) == ("A", "Y") and spec.other_treatment is not None and spec.other_treatment.y_effect != 0.0:
            alive = True
        if not alive:
            dead.append((p, c))
    return g.remove_edges(dead)


# -- structural equations -----------------------------------------------------------


class _Equations:
    """Conditional distributions Pr[node | parents] shared by sampler and oracle."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        g = spec.graph
        self.order = g.topological_order()
        self.parents = {n: g.parents(n) for n in self.order}
        self.latents = {n.label for n in g.nodes if n.kind is NodeKind.UNMEASURED}
        self.copy_of = {d: s for s, d in g.copies}
        self.coef = {edge: name for name, edge in coefficient_edges(g).items()}
        self.conf = CONFOUNDER[spec.scenario]
        self.levels = {n: 2 for n in self.order}
        self.levels["X"] = spec.x_levels
        if spec.other_treatment is not None:
            self.levels["A"] = 3

    def probs(self, node: str, pv: Mapping[str, np.ndarray]) -> np.ndarray:
        """Array of shape ``broadcast(parents) + (levels,)``."""
        spec = self.spec
        if node == "X":
            return np.asarray(spec.x_probs)
        if node in self.latents:
            p = spec.latent_probs[node]
            return np.array([1.0 - p, p])
        if node in self.copy_of:
            v = np.asarray(pv[self.copy_of[node]])
            return np.stack([v == 0, v == 1], axis=-1).astype(float)
        eta = spec.intercepts[node]
        for p in self.parents[node]:
            if (p, node) not in self.coef:
                continue
            v = np.asarray(pv[p])
            beta = spec.coeffs[self.coef[(p, node)]]
            if p == "A":
                term = beta * (v == 1)
                if spec.other_treatment is not None:
                    term = term + spec.other_treatment.y_effect * (v == 2)
            else:
                term = beta * v
            eta = eta + term
        if node == "A" and spec.interaction != 0.0:
            eta = eta + spec.interaction * np.asarray(pv["Z"]) * np.asarray(pv[self.conf])
        p1 = expit(np.asarray(eta, dtype=float))
        if node == "Z":
            p1 = np.where(np.asarray(pv["S"]) == 1, spec.trial_assign_prob, p1)
        if node == "A" and spec.other_treatment is not None:
            q = spec.other_treatment.prob
            return np.stack([(1 - q) * (1 - p1), (1 - q) * p1, np.full_like(p1, q)], axis=-1)
        return np.stack([1.0 - p1, p1], axis=-1)

    def parent_values(self, node, values, fixed):
        return {p: (fixed[p] if p in fixed else values[p]) for p in self.parents[node]}


# -- sampling ---------------------------------------------------------------------


@dataclass
class Dataset:
    """Rectangular sample over (x, s, z, a, y); masked cells hold ``NA`` (-1)."""

    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    a: np.ndarray
    y: np.ndarray
    regime: str = "observational"
    design: str = "nested"
    scenario: str | None = None
    seed: int | None = None
    natural: dict[str, np.ndarray] = field(default_factory=dict)

    COLUMNS = ("x", "s", "z", "a", "y")

    def __post_init__(self):
        cols = [np.asarray(getattr(self, c)) for c in self.COLUMNS]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise InvalidSpec("dataset columns differ in length")
        for name, c in zip(self.COLUMNS, cols):
            setattr(self, name, c.astype(np.int64 if name == "x" else np.int8, copy=False))
        if self.design not in ("nested", "non_nested"):
            raise InvalidSpec(f"unknown design {self.design!r}")

    @property
    def n(self) -> int:
        return len(self.x)

    def __len__(self) -> int:
        return self.n

    @property
    def masked(self) -> np.ndarray:
        return self.y == NA

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {c: pd.array(np.where(getattr(self, c) == NA, pd.NA, getattr(self, c)), dtype="Int64")
             for c in self.COLUMNS}
        )

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, na_rep="NA", lineterminator="\n")

    @classmethod
    def from_csv(cls, path: str | Path, **meta) -> "Dataset":
        df = pd.read_csv(path, na_values=["NA"], keep_default_na=False, dtype="Int64")
        if list(df.columns) != list(cls.COLUMNS):
            raise InvalidSpec(f"{path}: expected header x,s,z,a,y, got {','.join(df.columns)}")
        cols = {c: df[c].fillna(NA).to_numpy(dtype=np.int64) for c in cls.COLUMNS}
        return cls(**cols, **meta)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple], **meta) -> "Dataset":
        arr = np.array([[NA if v is None else v for v in r] for r in rows], dtype=np.int64).reshape(-1, 5)
        return cls(*arr.T, **meta)

    def take(self, idx: np.ndarray) -> "Dataset":
        return replace(
            self,
            **{c: getattr(self, c)[idx] for c in self.COLUMNS},
            natural={k: v[idx] for k, v in self.natural.items()},
        )


def _draw(spec: ScenarioSpec, eqs: _Equations, seed: int, rows: np.ndarray, fixed: Mapping[str, int]):
    values: dict[str, np.ndarray] = {}
    n = len(rows)
    for node in eqs.order:
        probs = eqs.probs(node, eqs.parent_values(node, values, fixed))
        probs = np.broadcast_to(probs, (n, probs.shape[-1]))
        u = uniforms(seed, node, rows)
        cut = np.cumsum(probs[:, :-1], axis=1)
        values[node] = (u[:, None] >= cut).sum(axis=1).astype(np.int8 if node != "X" else np.int64)
    return values


def _simulate(spec, n, fixed, seed, jobs=1, start=0):
    eqs = _Equations(spec)
    bounds = [(lo, min(lo + CHUNK_ROWS, start + n)) for lo in range(start, start + n, CHUNK_ROWS)]
    if jobs > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            parts = list(pool.map(lambda b: _draw(spec, eqs, seed, row_range(*b), fixed), bounds))
    else:
        parts = [_draw(spec, eqs, seed, row_range(*b), fixed) for b in bounds]
    if not parts:
        return {node: np.zeros(0, dtype=np.int8) for node in eqs.order}
    return {node: np.concatenate([p[node] for p in parts]) for node in eqs.order}


def _prepare(spec: ScenarioSpec, n: int) -> None:
    if n < 1:
        raise InvalidSpec("sample size must be at least 1")
    spec.check_positivity()


def sample_observational(
    spec: ScenarioSpec,
    n: int,
    mask_nonparticipants: bool = True,
    seed: int | None = None,
    jobs: int = 1,
) -> Dataset:
    """Draw ``n`` i.i.d. rows from the observational (nested-cohort) model."""
    _prepare(spec, n)
    seed = spec.seed if seed is None else seed
    v = _simulate(spec, n, {}, seed, jobs)
    z, a, y = v["Z"].copy(), v["A"].copy(), v["Y"].copy()
    if mask_nonparticipants:
        off = v["S"] == 0
        z[off] = a[off] = y[off] = NA
    return Dataset(v["X"], v["S"], z, a, y, "observational", "nested", spec.scenario.value, seed)


def sample_non_nested(
    spec: ScenarioSpec,
    n_trial: int,
    n_nontrial: int,
    mask_nonparticipants: bool = True,
    seed: int | None = None,
    jobs: int = 1,
) -> Dataset:
    """Separately sampled trial and non-randomized strata of fixed sizes.

    Rows are scanned in counter order and the first ``n_trial`` participants
    and first ``n_nontrial`` non-participants are kept.
    """
    if n_trial < 1 or n_nontrial < 1:
        raise InvalidSpec("both strata need at least one row")
    spec.check_positivity()
    seed = spec.seed if seed is None else seed
    keep: list[Dataset] = []
    need = {1: n_trial, 0: n_nontrial}
    start, block = 0, max(4 * (n_trial + n_nontrial), 1024)
    while need[0] or need[1]:
        v = _simulate(spec, block, {}, seed, jobs, start=start)
        take = np.zeros(block, dtype=bool)
        for s_val in (0, 1):
            idx = np.flatnonzero(v["S"] == s_val)[: need[s_val]]
            take[idx] = True
            need[s_val] -= len(idx)
        keep.append(Dataset(*(v[k][take] for k in ("X", "S", "Z", "A", "Y"))))
        start += block
    cols = {c: np.concatenate([getattr(d, c) for d in keep]) for c in Dataset.COLUMNS}
    if mask_nonparticipants:
        off = cols["s"] == 0
        for c in ("z", "a", "y"):
            cols[c][off] = NA
    return Dataset(**cols, regime="observational", design="non_nested", scenario=spec.scenario.value, seed=seed)


def sample_interventional(
    spec: ScenarioSpec,
    regime: str | Mapping[str, int],
    n: int,
    seed: int | None = None,
    jobs: int = 1,
) -> Dataset:
    """Draw from the mutilated model under ``do(Z=z)`` or ``do(S=1,Z=z)``.

    Columns ``s`` and ``z`` hold the intervention values; the natural values of
    the intervened nodes (the random halves of the split nodes) are kept in
    ``Dataset.natural``. Rows share exogenous noise with
    :func:`sample_observational` for the same seed.
    """
    fixed = parse_regime(regime)
    if set(fixed) not in ({"Z"}, {"S", "Z"}):
        raise InvalidSpec(f"regime must intervene on Z or on S and Z, got {regime!r}")
    if fixed["Z"] not in (0, 1) or fixed.get("S", 1) != 1:
        raise InvalidSpec(f"illegal intervention values {fixed}")
    _prepare(spec, n)
    seed = spec.seed if seed is None else seed
    v = _simulate(spec, n, fixed, seed, jobs)
    s = np.full(n, fixed["S"], dtype=np.int8) if "S" in fixed else v["S"]
    z = np.full(n, fixed["Z"], dtype=np.int8)
    natural = {k: v[k] for k in fixed}
    return Dataset(v["X"], s, z, v["A"], v["Y"], regime_label(fixed), "nested", spec.scenario.value, seed, natural)


# -- exact enumeration ------------------------------------------------------------

_JOINT_CACHE: dict = {}


def enumerate_joint(spec: ScenarioSpec, fixed: Mapping[str, int] | None = None) -> tuple[list[str], np.ndarray]:
    """Exact joint distribution of every random node in the (mutilated) model.

    Intervened nodes keep their natural distribution as random halves; only
    their children see the fixed value. Returns axis names and a probability
    tensor with one axis per node in topological order.
    """
    fixed = dict(fixed or {})
    key = (spec.key(), tuple(sorted(fixed.items())))
    hit = _JOINT_CACHE.get(key)
    if hit is not None:
        return list(hit[0]), hit[1]
    eqs = _Equations(spec)
    names: list[str] = []
    joint = np.ones(())
    for node in eqs.order:
        grids = np.indices(joint.shape, sparse=True) if names else ()
        values = {nm: grids[i] for i, nm in enumerate(names)}
        probs = eqs.probs(node, eqs.parent_values(node, values, fixed))
        probs = np.broadcast_to(probs, joint.shape + (probs.shape[-1],))
        joint = joint[..., None] * probs
        names.append(node)
    joint.setflags(write=False)
    if len(_JOINT_CACHE) > 256:
        _JOINT_CACHE.clear()
    _JOINT_CACHE[key] = (tuple(names), joint)
    return names, joint


def _marginal(names, joint, keep):
    axes = tuple(i for i, nm in enumerate(names) if nm not in keep)
    m = joint.sum(axis=axes)
    kept = [nm for nm in names if nm in keep]
    return np.transpose(m, [kept.index(k) for k in keep])


def _population_weight(pop: Population, s_levels: int = 2) -> np.ndarray:
    if pop is Population.TARGET:
        return np.ones(s_levels)
    return np.array([1.0, 0.0]) if pop is Population.SUBSET else np.array([0.0, 1.0])


def oracle_truth(spec: ScenarioSpec, estimand: Estimand) -> float:
    """Exact counterfactual mean or contrast by enumeration (no Monte Carlo error)."""
    if not isinstance(estimand, Estimand):
        raise InvalidEstimand(f"not an estimand: {estimand!r}")
    if estimand.is_contrast:
        e1, e0 = estimand.parts()
        return oracle_truth(spec, e1) - oracle_truth(spec, e0)
    names, joint = enumerate_joint(spec, estimand.regime())
    sy = _marginal(names, joint, ["S", "Y"])
    w = _population_weight(estimand.population)
    return float((sy[:, 1] * w).sum() / (sy.sum(axis=1) * w).sum())


@dataclass(frozen=True)
class Conditionals:
    """Observational quantities that enter the identification formulas."""

    p_x: np.ndarray  # Pr[X=x]
    p_s1_x: np.ndarray  # Pr[S=1|X=x]
    p_z_xs1: np.ndarray  # Pr[Z=z|X=x,S=1], shape (K, 2)
    ey_xs1z: np.ndarray  # E[Y|X=x,S=1,Z=z], shape (K, 2)
    p_s1: float


def observational_conditionals(spec: ScenarioSpec) -> Conditionals:
    names, joint = enumerate_joint(spec)
    xszy = _marginal(names, joint, ["X", "S", "Z", "Y"])
    p_x = xszy.sum(axis=(1, 2, 3))
    p_xs = xszy.sum(axis=(2, 3))
    p_xs1z = xszy[:, 1].sum(axis=2)
    return Conditionals(
        p_x=p_x,
        p_s1_x=p_xs[:, 1] / p_x,
        p_z_xs1=p_xs1z / p_xs[:, 1:2],
        ey_xs1z=xszy[:, 1, :, 1] / p_xs1z,
        p_s1=float(p_xs[:, 1].sum()),
    )


def functional_truth(spec: ScenarioSpec, estimand: Estimand) -> float:
    """Large-sample limit of the plug-in estimators for ``estimand``.

    The standardized trial outcome mean is evaluated on the exact observational
    conditionals; ``functional_truth - oracle_truth`` is the asymptotic bias.
    """
    if estimand.is_contrast:
        e1, e0 = estimand.parts()
        return functional_truth(spec, e1) - functional_truth(spec, e0)
    c = observational_conditionals(spec)
    if estimand.population is Population.TARGET:
        w = c.p_x
    elif estimand.population is Population.SUBSET:
        w = c.p_x * (1 - c.p_s1_x) / (1 - c.p_s1)
    else:
        w = c.p_x * c.p_s1_x / c.p_s1
    return float((w * c.ey_xs1z[:, estimand.z]).sum())


def asymptotic_bias(spec: ScenarioSpec, estimand: Estimand) -> float:
    return functional_truth(spec, estimand) - oracle_truth(spec, estimand)


# -- consistency ------------------------------------------------------------------


@dataclass
class ConsistencyReport:
    passed: bool
    n: int
    checked: int
    violations: int
    counterexample: dict | None
    checks: list[str]


def consistency_check(
    spec: ScenarioSpec,
    n: int,
    seed: int | None = None,
    intervention_seed: int | None = None,
) -> ConsistencyReport:
    """Row-level check of the consistency conditions under common random numbers.

    If S=1 then Z^{s=1}=Z; if S=1 and Z=z then A^{s=1,z}=A and Y^{s=1,z}=Y;
    if Z=z then A^z=A and Y^z=Y. Under perfect adherence also A^z = z.
    ``intervention_seed`` draws the interventional rows with different noise
    (a negative control that should fail).
    """
    seed = spec.seed if seed is None else seed
    iseed = seed if intervention_seed is None else intervention_seed
    obs = sample_observational(spec, n, mask_nonparticipants=False, seed=seed)
    perfect = "A" in {d for _, d in spec.graph.copies}
    checked = violations = 0
    first = None
    checks = []

    def tally(name, mask, observed, counterfactual):
        nonlocal checked, violations, first
        bad = np.flatnonzero(mask & (observed != counterfactual))
        checked += int(mask.sum())
        violations += len(bad)
        checks.append(name)
        if len(bad) and first is None:
            i = int(bad[0])
            first = {"check": name, "row": i, "observed": int(observed[i]), "counterfactual": int(counterfactual[i])}

    everyone = np.ones(n, dtype=bool)
    for z in (0, 1):
        joint = sample_interventional(spec, {"S": 1, "Z": z}, n, seed=iseed)
        trial = obs.s == 1
        tally(f"S=1 => Z^(s=1)=Z [z={z}]", trial, obs.z, joint.natural["Z"])
        arm = trial & (obs.z == z)
        tally(f"S=1,Z={z} => A^(s=1,z)=A", arm, obs.a, joint.a)
        tally(f"S=1,Z={z} => Y^(s=1,z)=Y", arm, obs.y, joint.y)
        assign = sample_interventional(spec, {"Z": z}, n, seed=iseed)
        tally(f"Z={z} => A^z=A", obs.z == z, obs.a, assign.a)
        tally(f"Z={z} => Y^z=Y", obs.z == z, obs.y, assign.y)
        if perfect:
            zz = np.full(n, z, dtype=np.int8)
            tally(f"A^z={z} (perfect adherence)", everyone, zz, assign.a)
            tally(f"A^(s=1,z)={z} (perfect adherence)", everyone, zz, joint.a)
    return ConsistencyReport(violations == 0, n, checked, violations, first, checks)


# -- graph / distribution agreement -------------------------------------------------


def conditional_mutual_information(
    names: list[str], joint: np.ndarray, a: Iterable[str], b: Iterable[str], given: Iterable[str] = ()
) -> float:
    """I(A; B | C) in nats from an exact joint probability tensor."""
    a, b, c = list(a), list(b), list(given)
    m = _marginal(names, joint, a + b + c)
    shp = m.shape
    na = int(np.prod(shp[: len(a)]))
    nb = int(np.prod(shp[len(a): len(a) + len(b)]))
    m = m.reshape(na, nb, -1)
    p_c = m.sum(axis=(0, 1))
    p_ac = m.sum(axis=1)
    p_bc = m.sum(axis=0)
    num = m * p_c[None, None, :]
    den = p_ac[:, None, :] * p_bc[None, :, :]
    pos = m > 0
    return float(np.sum(m[pos] * np.log(num[pos] / den[pos])))


def variant_distribution(spec: ScenarioSpec, variant: str, z: int = 1):
    """Exact joint over the random nodes of a graph variant, keyed by graph label.

    For ``trial_swig`` the distribution is the trial sub-population (S=1).
    """
    g = graph_variant(spec.scenario, variant)
    fixed = {"dag": {}, "swig_assign": {"Z": z}, "swig_joint": {"S": 1, "Z": z}, "trial_swig": {"Z": z}}[variant]
    names, joint = enumerate_joint(spec, fixed)
    if variant == "trial_swig":
        i = names.index("S")
        sl = [slice(None)] * joint.ndim
        sl[i] = slice(1, 2)
        joint = joint[tuple(sl)]
        joint = joint / joint.sum()
    by_name = {n.name: n.label for n in g.nodes if n.kind is not NodeKind.FIXED}
    return g, [by_name[nm] for nm in names], joint


@dataclass(frozen=True)
class IndependenceCheck:
    variant: str
    z: int
    query: DSepQuery
    cmi: float


def implied_independencies(g: CausalGraph, always_given: Iterable[str] = ()) -> list[DSepQuery]:
    """All single-pair d-separation statements of a graph (fixed nodes excluded)."""
    always = frozenset(always_given)
    random_nodes = [lab for lab in g.labels if lab not in g.fixed_labels]
    out = []
    for a, b in itertools.combinations(random_nodes, 2):
        if a in always or b in always:
            continue
        rest = [r for r in random_nodes if r not in (a, b) and r not in always]
        for k in range(len(rest) + 1):
            for cond in itertools.combinations(rest, k):
                q = DSepQuery.of(a, b, always | set(cond))
                if d_separated(g, q):
                    out.append(q)
    return out


def graph_distribution_check(spec: ScenarioSpec, variants=("dag", "swig_assign", "swig_joint", "trial_swig")):
    """CMI of every d-separation-implied independence under the exact distribution."""
    results: list[IndependenceCheck] = []
    for variant in variants:
        for z in ((0,) if variant == "dag" else (0, 1)):
            g, labels, joint = variant_distribution(spec, variant, z)
            always = ["S"] if variant == "trial_swig" else []
            for q in implied_independencies(g, always):
                given = [c for c in q.conditioning if c != "S"] if variant == "trial_swig" else list(q.conditioning)
                cmi = conditional_mutual_information(labels, joint, list(q.set_a), list(q.set_b), given)
                results.append(IndependenceCheck(variant, z, q, cmi))
    return results


def named_dependences(spec: ScenarioSpec, z: int = 1) -> list[IndependenceCheck]:
    """CMI of the dependences the registered table expects to be present."""
    out = []
    for claim in independence_table(spec.scenario.short):
        if claim.expected:
            continue
        g, labels, joint = variant_distribution(spec, claim.variant, z)
        q = claim.query
        out.append(
            IndependenceCheck(
                claim.variant, z, q,
                conditional_mutual_information(labels, joint, list(q.set_a), list(q.set_b), list(q.conditioning)),
            )
        )
    return out
