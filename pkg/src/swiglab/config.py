"""Run configuration for the command-line harness (YAML)."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import DesignError, InvalidSpec
from .estimators import DEFAULT_BOOTSTRAP, Estimator
from .fixtures import ScenarioId, UnknownScenario
from .scm import Estimand, Population, ScenarioSpec, default_spec, parse_regime, regime_label

DEFAULT_ESTIMANDS = (
    "mean_joint(0)@target",
    "mean_joint(1)@target",
    "mean_assign(0)@target",
    "mean_assign(1)@target",
)
NON_NESTED_ESTIMANDS = (
    "mean_joint(0)@subset",
    "mean_joint(1)@subset",
    "mean_assign(0)@trial",
    "mean_assign(1)@trial",
)

# key -> (default, description); rendered into the README schema table
CONFIG_KEYS: dict[str, tuple[Any, str]] = {
    "scenario": ("fig1", "registered scenario id (short or long form) or path to a scenario YAML file"),
    "n": (10_000, "rows per dataset (nested design)"),
    "seeds": ([1], "list of integer seeds; one dataset per seed and regime"),
    "estimands": (None, "estimand strings such as mean_joint(1)@target; default depends on design"),
    "estimators": (["gformula", "ipw"], "any of gformula, ipw, ipw_normalized"),
    "output_dir": ("out", "directory for datasets, reports and verdicts"),
    "design": ("nested", "nested or non_nested"),
    "strata": ({"trial": None, "nontrial": None}, "non_nested stratum sizes; default n/2 each"),
    "regimes": (["observational"], "regimes to simulate: observational, do(Z=z), do(S=1,Z=z)"),
    "set": ({}, "coefficient overrides applied to the scenario (name: value)"),
    "bootstrap": (DEFAULT_BOOTSTRAP, "bootstrap resamples for mc_se"),
    "mask_nonparticipants": (True, "blank z, a, y on S=0 rows"),
    "jobs": (1, "worker threads"),
    "verify_n": (1_000_000, "rows per seed in verify"),
    "verify_seeds": ([1, 2, 3, 4, 5], "seeds used by verify"),
}


@dataclass
class RunConfig:
    scenario: str = "fig1"
    n: int = 10_000
    seeds: list[int] = field(default_factory=lambda: [1])
    estimands: list[str] | None = None
    estimators: list[str] = field(default_factory=lambda: ["gformula", "ipw"])
    output_dir: str = "out"
    design: str = "nested"
    strata: dict = field(default_factory=lambda: {"trial": None, "nontrial": None})
    regimes: list[str] = field(default_factory=lambda: ["observational"])
    set: dict = field(default_factory=dict)
    bootstrap: int = DEFAULT_BOOTSTRAP
    mask_nonparticipants: bool = True
    jobs: int = 1
    verify_n: int = 1_000_000
    verify_seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.design not in ("nested", "non_nested"):
            raise InvalidSpec(f"design must be nested or non_nested, got {self.design!r}")
        if int(self.n) < 1:
            raise InvalidSpec("n must be positive")
        if not self.seeds:
            raise InvalidSpec("at least one seed is required")
        self.seeds = [int(s) for s in self.seeds]
        self.verify_seeds = [int(s) for s in self.verify_seeds]
        for e in self.estimators:
            Estimator(e)
        parsed = self.parsed_estimands()
        if self.design == "non_nested":
            bad = [str(e) for e in parsed if e.population is Population.TARGET]
            if bad:
                raise DesignError(f"non_nested design cannot target the whole population: {', '.join(bad)}")
        for r in self.regimes:
            parse_regime(r)
        unknown = set(self.strata) - {"trial", "nontrial"}
        if unknown:
            raise InvalidSpec(f"unknown strata keys {sorted(unknown)}")

    def parsed_estimands(self) -> list[Estimand]:
        chosen = self.estimands
        if not chosen:
            chosen = NON_NESTED_ESTIMANDS if self.design == "non_nested" else DEFAULT_ESTIMANDS
        return [Estimand.parse(e) for e in chosen]

    def stratum_sizes(self) -> tuple[int, int]:
        t = self.strata.get("trial") or self.n // 2
        o = self.strata.get("nontrial") or self.n - self.n // 2
        return int(t), int(o)

    def regime_labels(self) -> list[str]:
        return [regime_label(parse_regime(r)) for r in self.regimes]

    def load_spec(self) -> ScenarioSpec:
        try:
            spec = default_spec(ScenarioId.parse(self.scenario))
        except UnknownScenario:
            path = Path(self.scenario)
            if not path.is_absolute():
                path = self.base_dir / path
            if not path.exists():
                raise
            spec = ScenarioSpec.load(path)
        return spec.with_overrides(self.set) if self.set else spec

    def with_updates(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: Path | None = None) -> "RunConfig":
        names = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(data) - names
        if unknown:
            raise InvalidSpec(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = dict(data)
        if "strata" in cfg:
            cfg["strata"] = {"trial": None, "nontrial": None, **(cfg["strata"] or {})}
        return cls(**cfg, base_dir=base_dir or Path("."))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        data = yaml.safe_load(path.read_text()) or {}
        if not isinstance(data, Mapping):
            raise InvalidSpec(f"{path}: config must be a mapping")
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "base_dir"}
