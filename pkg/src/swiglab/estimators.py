"""Nonparametric plug-in g-formula and weighting estimators.

All nuisance functions are saturated cell frequencies over the observed X
support. Only X is read from S=0 rows, so masked non-participant rows are
fully supported. Monte Carlo standard errors come from a nonparametric
bootstrap; because every estimator is a function of the (x, s, z, y) cell
counts, a row resample is drawn exactly as a multinomial draw over cells.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from .errors import (
    DesignError,
    EmptyDataset,
    InvalidSpec,
    MismatchedEstimands,
    NoNonParticipants,
    NonfiniteWeight,
    NoParticipants,
    PositivityViolation,
)
from .scm import NA, Dataset, Estimand, Population, ScenarioSpec, functional_truth, oracle_truth

DEFAULT_BOOTSTRAP = 200


class Estimator(str, enum.Enum):
    GFORMULA = "gformula"
    IPW = "ipw"
    IPW_NORMALIZED = "ipw_normalized"


@dataclass(frozen=True)
class PositivityCell:
    condition: int  # 1: participation, 2: assignment within the trial
    x: int
    z: int | None
    detail: str


@dataclass(frozen=True)
class NuisanceTables:
    """Empirical nuisance functions indexed by position in ``x_levels``."""

    x_levels: np.ndarray
    n: int
    n_x: np.ndarray
    n_xs: np.ndarray  # (K, 2)
    n_xs1z: np.ndarray  # (K, 2)
    sum_y_xs1z: np.ndarray  # (K, 2)
    p_x: np.ndarray
    p_s_given_x: np.ndarray
    p_z_given_xs1: np.ndarray  # (K, 2)
    y_mean_xs1z: np.ndarray  # (K, 2), nan where the cell is empty
    p_s1: float
    smoothed: bool = False
    design: str = "nested"
    violations: tuple[PositivityCell, ...] = ()

    @property
    def cell_counts(self) -> dict[tuple, int]:
        """Counts per (x, s, z); S=0 cells pool over z (z is ``None``)."""
        out = {}
        for i, x in enumerate(self.x_levels):
            out[(int(x), 0, None)] = int(self.n_xs[i, 0])
            for z in (0, 1):
                out[(int(x), 1, z)] = int(self.n_xs1z[i, z])
        return out

    @property
    def positivity_ok(self) -> bool:
        return not self.violations


def _counts(d: Dataset):
    if d.n == 0:
        raise EmptyDataset("dataset has no rows")
    trial = d.s == 1
    if np.any(trial & ((d.z == NA) | (d.y == NA))):
        raise InvalidSpec("trial rows must have observed assignment and outcome")
    if np.any(trial & ~np.isin(d.z, (0, 1))) or np.any(trial & ~np.isin(d.y, (0, 1))):
        raise InvalidSpec("assignment and outcome must be binary")
    if not np.all(np.isin(d.s, (0, 1))):
        raise InvalidSpec("participation must be binary")
    levels, idx = np.unique(d.x, return_inverse=True)
    k = len(levels)
    c0 = np.bincount(idx[~trial], minlength=k)
    flat = (idx[trial] * 2 + d.z[trial]) * 2 + d.y[trial]
    c1 = np.bincount(flat, minlength=4 * k).reshape(k, 2, 2)
    return levels, c0, c1


def _tables(levels, c0, c1, smoothing: bool, design: str) -> NuisanceTables:
    c0 = np.asarray(c0, dtype=float)
    c1 = np.asarray(c1, dtype=float)
    n_xs1z = c1.sum(axis=2)
    n_xs = np.stack([c0, n_xs1z.sum(axis=1)], axis=1)
    n_x = n_xs.sum(axis=1)
    n = n_x.sum()
    sum_y = c1[:, :, 1]
    half = 0.5 if smoothing else 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        p_s = (n_xs[:, 1] + half) / (n_x + 2 * half)
        p_z = (n_xs1z + half) / (n_xs[:, 1:2] + 2 * half)
        ybar = (sum_y + half) / (n_xs1z + 2 * half)
    viol = []
    for i, x in enumerate(levels):
        if n_x[i] == 0:
            continue
        if n_xs[i, 1] == 0 or n_xs[i, 0] == 0:
            viol.append(PositivityCell(1, int(x), None, f"Pr[S=1|X={x}] = {n_xs[i, 1] / n_x[i]:.3g}"))
        if n_xs[i, 1] > 0:
            for z in (0, 1):
                if n_xs1z[i, z] == 0:
                    viol.append(PositivityCell(2, int(x), z, f"no trial rows with X={x}, Z={z}"))
    return NuisanceTables(
        x_levels=np.asarray(levels),
        n=int(n),
        n_x=n_x,
        n_xs=n_xs,
        n_xs1z=n_xs1z,
        sum_y_xs1z=sum_y,
        p_x=n_x / n,
        p_s_given_x=p_s,
        p_z_given_xs1=p_z,
        y_mean_xs1z=ybar,
        p_s1=float(n_xs[:, 1].sum() / n),
        smoothed=smoothing,
        design=design,
        violations=tuple(viol),
    )


def fit_nuisances(d: Dataset, smoothing: bool = False) -> NuisanceTables:
    """Cell-frequency estimates of Pr[S=1|X], Pr[Z=z|X,S=1], E[Y|X,S=1,Z=z].

    Empty cells are recorded in ``violations`` rather than raised; estimators
    raise when they need one. ``smoothing`` adds one half to every count.
    """
    levels, c0, c1 = _counts(d)
    return _tables(levels, c0, c1, smoothing, d.design)


# -- checks ----------------------------------------------------------------------


def _require_target(nt: NuisanceTables):
    if nt.design == "non_nested":
        raise DesignError("target-population estimands are not identifiable from a non-nested design")


def _require_cells(nt: NuisanceTables, z: int, weight: np.ndarray, population: str):
    if nt.smoothed:
        return
    for i, x in enumerate(nt.x_levels):
        if weight[i] > 0 and nt.n_xs1z[i, z] == 0:
            raise PositivityViolation(
                f"{population}: no trial rows in cell (X={x}, S=1, Z={z})", (int(x), 1, z)
            )


def _row_index(d: Dataset, nt: NuisanceTables) -> np.ndarray:
    idx = np.searchsorted(nt.x_levels, d.x)
    idx = np.clip(idx, 0, len(nt.x_levels) - 1)
    if not np.array_equal(nt.x_levels[idx], d.x):
        raise InvalidSpec("dataset has X levels absent from the nuisance tables")
    return idx


def _weights(d: Dataset, nt: NuisanceTables, z: int, numerator: np.ndarray | None = None, trial_only=False):
    idx = _row_index(d, nt)
    ind = (d.s == 1) & (d.z == z)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = nt.p_z_given_xs1[idx, z]
        if not trial_only:
            denom = denom * nt.p_s_given_x[idx]
        w = np.where(ind, 1.0 / denom, 0.0)
        if numerator is not None:
            w = w * numerator[idx]
    if not np.all(np.isfinite(w)):
        bad = int(np.flatnonzero(~np.isfinite(w))[0])
        raise NonfiniteWeight(f"infinite weight at row {bad} (X={d.x[bad]}, Z={z})")
    y = np.where(ind, d.y, 0).astype(float)
    return w, y


# -- target population ---------------------------------------------------------------


def gformula_target(d: Dataset, nt: NuisanceTables, z: int) -> float:
    """Sum over x of Pr[X=x] E[Y|X=x,S=1,Z=z] (standardized to the whole sample)."""
    _require_target(nt)
    _require_cells(nt, z, nt.n_x, "target")
    keep = nt.n_x > 0
    return float(np.sum(nt.p_x[keep] * nt.y_mean_xs1z[keep, z]))


def ipw_target(d: Dataset, nt: NuisanceTables, z: int, normalized: bool = False) -> float:
    """Mean of I(S=1,Z=z) Y / (Pr[S=1|X] Pr[Z=z|X,S=1]); Hajek form if ``normalized``."""
    _require_target(nt)
    _require_cells(nt, z, nt.n_x, "target")
    w, y = _weights(d, nt, z)
    if normalized:
        return float(np.sum(w * y) / np.sum(w))
    return float(np.sum(w * y) / d.n)


# -- non-randomized subset ----------------------------------------------------------


def _subset_checks(nt: NuisanceTables, z: int):
    if nt.n_xs[:, 0].sum() == 0:
        raise NoNonParticipants("no S=0 rows")
    _require_cells(nt, z, nt.n_xs[:, 0], "subset")


def gformula_subset(d: Dataset, nt: NuisanceTables, z: int) -> float:
    """E[ E[Y|X,S=1,Z=z] | S=0 ]."""
    _subset_checks(nt, z)
    w = nt.p_x * (1.0 - nt.p_s_given_x) / (1.0 - nt.p_s1)
    keep = w > 0
    return float(np.sum(w[keep] * nt.y_mean_xs1z[keep, z]))


def ipw_subset(d: Dataset, nt: NuisanceTables, z: int, normalized: bool = False) -> float:
    """Odds-of-participation weighting, scaled by 1 / Pr[S=0]."""
    _subset_checks(nt, z)
    odds_num = 1.0 - nt.p_s_given_x
    w, y = _weights(d, nt, z, numerator=odds_num)
    if normalized:
        return float(np.sum(w * y) / np.sum(w))
    return float(np.sum(w * y) / d.n / (1.0 - nt.p_s1))


# -- population underlying the trial ----------------------------------------------------


def trial_population(d: Dataset, nt: NuisanceTables, z: int, form: Estimator | str = Estimator.GFORMULA) -> float:
    """E[ E[Y|X,S=1,Z=z] | S=1 ] by standardization or within-trial weighting."""
    form = Estimator(form)
    n1 = nt.n_xs[:, 1].sum()
    if n1 == 0:
        raise NoParticipants("no S=1 rows")
    _require_cells(nt, z, nt.n_xs[:, 1], "trial")
    if form is Estimator.GFORMULA:
        w = nt.n_xs[:, 1] / n1
        keep = w > 0
        return float(np.sum(w[keep] * nt.y_mean_xs1z[keep, z]))
    w, y = _weights(d, nt, z, trial_only=True)
    if form is Estimator.IPW_NORMALIZED:
        return float(np.sum(w * y) / np.sum(w))
    return float(np.sum(w * y) / n1)


def point_estimate(d: Dataset, nt: NuisanceTables, estimand: Estimand, estimator: Estimator | str) -> float:
    """Plug-in value of the identifying functional for ``estimand``.

    Assignment-only and joint-intervention estimands share the same functional;
    whether it identifies the estimand depends on the causal structure.
    """
    estimator = Estimator(estimator)
    if estimand.is_contrast:
        e1, e0 = estimand.parts()
        return point_estimate(d, nt, e1, estimator) - point_estimate(d, nt, e0, estimator)
    z = estimand.z
    pop = estimand.population
    if pop is Population.TRIAL:
        return trial_population(d, nt, z, estimator)
    if pop is Population.SUBSET:
        if estimator is Estimator.GFORMULA:
            return gformula_subset(d, nt, z)
        return ipw_subset(d, nt, z, normalized=estimator is Estimator.IPW_NORMALIZED)
    if estimator is Estimator.GFORMULA:
        return gformula_target(d, nt, z)
    return ipw_target(d, nt, z, normalized=estimator is Estimator.IPW_NORMALIZED)


# -- cell-level functional (bootstrap) ------------------------------------------------------


def _cell_value(nt: NuisanceTables, estimand: Estimand, estimator: Estimator) -> float:
    """Same functionals as :func:`point_estimate`, from cell totals only."""
    if estimand.is_contrast:
        e1, e0 = estimand.parts()
        return _cell_value(nt, e1, estimator) - _cell_value(nt, e0, estimator)
    z, pop = estimand.z, estimand.population
    if pop is Population.TARGET:
        _require_target(nt)
        base = nt.n_x
    elif pop is Population.SUBSET:
        if nt.n_xs[:, 0].sum() == 0:
            raise NoNonParticipants("no S=0 rows")
        base = nt.n_xs[:, 0]
    else:
        if nt.n_xs[:, 1].sum() == 0:
            raise NoParticipants("no S=1 rows")
        base = nt.n_xs[:, 1]
    _require_cells(nt, z, base, pop.value)
    keep = base > 0
    if estimator is Estimator.GFORMULA:
        if pop is Population.TARGET:
            w = nt.p_x
        elif pop is Population.SUBSET:
            w = nt.p_x * (1 - nt.p_s_given_x) / (1 - nt.p_s1)
        else:
            w = nt.n_xs[:, 1] / nt.n_xs[:, 1].sum()
        return float(np.sum(w[keep] * nt.y_mean_xs1z[keep, z]))
    # weighting: sum over cells of count * weight (* y)
    with np.errstate(divide="ignore", invalid="ignore"):
        if pop is Population.TRIAL:
            wx = 1.0 / nt.p_z_given_xs1[:, z]
        else:
            wx = 1.0 / (nt.p_s_given_x * nt.p_z_given_xs1[:, z])
            if pop is Population.SUBSET:
                wx = wx * (1 - nt.p_s_given_x)
    live = nt.n_xs1z[:, z] > 0
    num = np.sum(wx[live] * nt.sum_y_xs1z[live, z])
    if estimator is Estimator.IPW_NORMALIZED:
        return float(num / np.sum(wx[live] * nt.n_xs1z[live, z]))
    if pop is Population.TRIAL:
        return float(num / nt.n_xs[:, 1].sum())
    if pop is Population.SUBSET:
        return float(num / nt.n / (1 - nt.p_s1))
    return float(num / nt.n)


def bootstrap_replicates(
    d: Dataset,
    estimand: Estimand,
    estimator: Estimator | str,
    n_boot: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
    smoothing: bool = False,
) -> np.ndarray:
    """Nonparametric bootstrap replicates of the plug-in estimate.

    Replicates whose resample leaves a needed cell empty are ``nan``. The
    resampling draws depend only on ``seed`` and the data, so replicates of
    different estimands on one dataset are paired.
    """
    estimator = Estimator(estimator)
    levels, c0, c1 = _counts(d)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), 0x5EED]))
    k = len(levels)
    n0, n1 = int(c0.sum()), int(c1.sum())
    if d.design == "non_nested":
        draws0 = rng.multinomial(n0, c0 / n0, size=n_boot) if n0 else np.zeros((n_boot, k), int)
        draws1 = rng.multinomial(n1, c1.ravel() / n1, size=n_boot) if n1 else np.zeros((n_boot, 4 * k), int)
    else:
        p = np.concatenate([c0, c1.ravel()]) / (n0 + n1)
        draws = rng.multinomial(n0 + n1, p, size=n_boot)
        draws0, draws1 = draws[:, :k], draws[:, k:]
    out = np.full(n_boot, np.nan)
    for b in range(n_boot):
        nt = _tables(levels, draws0[b], draws1[b].reshape(k, 2, 2), smoothing, d.design)
        try:
            out[b] = _cell_value(nt, estimand, estimator)
        except (PositivityViolation, NoParticipants, NoNonParticipants):
            continue
    return out


# -- reports ---------------------------------------------------------------------------


@dataclass
class EstimateReport:
    estimand: str
    estimator: str
    point: float
    mc_se: float
    oracle: float | None = None
    abs_bias: float | None = None
    asymptotic_bias: float | None = None
    positivity_ok: bool = True
    n: int = 0
    seed: int | None = None
    scenario: str | None = None
    design: str = "nested"
    n_boot: int = 0
    replicates: np.ndarray | None = field(default=None, repr=False, compare=False)

    FIELDS = (
        "scenario", "design", "estimand", "estimator", "n", "seed", "point", "mc_se",
        "oracle", "abs_bias", "asymptotic_bias", "positivity_ok", "n_boot",
    )

    def __post_init__(self):
        if self.oracle is not None and self.abs_bias is None:
            self.abs_bias = abs(self.point - self.oracle)

    @property
    def parsed(self) -> Estimand:
        return Estimand.parse(self.estimand)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("replicates")
        return {k: d[k] for k in self.FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict) -> "EstimateReport":
        return cls(**{k: data.get(k) for k in cls.FIELDS if k in data})


def estimate(
    d: Dataset,
    estimand: Estimand | str,
    estimator: Estimator | str = Estimator.GFORMULA,
    *,
    spec: ScenarioSpec | None = None,
    n_boot: int = DEFAULT_BOOTSTRAP,
    boot_seed: int | None = None,
    smoothing: bool = False,
) -> EstimateReport:
    """Point estimate, bootstrap standard error and (given ``spec``) oracle truth."""
    if isinstance(estimand, str):
        estimand = Estimand.parse(estimand)
    estimator = Estimator(estimator)
    nt = fit_nuisances(d, smoothing=smoothing)
    point = point_estimate(d, nt, estimand, estimator)
    seed = boot_seed if boot_seed is not None else (d.seed or 0)
    reps = None
    se = float("nan")
    if n_boot > 1:
        reps = bootstrap_replicates(d, estimand, estimator, n_boot, seed, smoothing)
        ok = reps[np.isfinite(reps)]
        if len(ok) > 1:
            se = float(np.std(ok, ddof=1))
    oracle = asym = None
    if spec is not None:
        oracle = oracle_truth(spec, estimand)
        asym = functional_truth(spec, estimand) - oracle
    return EstimateReport(
        estimand=str(estimand),
        estimator=estimator.value,
        point=point,
        mc_se=se,
        oracle=oracle,
        asymptotic_bias=asym,
        positivity_ok=nt.positivity_ok,
        n=d.n,
        seed=d.seed,
        scenario=d.scenario,
        design=d.design,
        n_boot=n_boot if n_boot > 1 else 0,
        replicates=reps,
    )


def contrast(e1: EstimateReport, e2: EstimateReport) -> EstimateReport:
    """Difference of two mean reports; the standard error pairs bootstrap replicates."""
    a, b = e1.parsed, e2.parsed
    if a.is_contrast or b.is_contrast:
        raise MismatchedEstimands("contrast takes two means")
    if e1.estimator != e2.estimator or a.population is not b.population or a.kind is not b.kind:
        raise MismatchedEstimands(f"cannot contrast {e1.estimand} [{e1.estimator}] with {e2.estimand} [{e2.estimator}]")
    if a.z == b.z:
        raise MismatchedEstimands("contrast needs two different assignment values")
    if e1.n != e2.n or e1.seed != e2.seed:
        raise MismatchedEstimands("reports come from different datasets")
    target = Estimand(
        {True: "contrast_joint", False: "contrast_assign"}[a.joint], a.z, b.z, a.population
    )
    reps = None
    if e1.replicates is not None and e2.replicates is not None and len(e1.replicates) == len(e2.replicates):
        reps = e1.replicates - e2.replicates
        ok = reps[np.isfinite(reps)]
        se = float(np.std(ok, ddof=1)) if len(ok) > 1 else float("nan")
    else:
        se = float(np.hypot(e1.mc_se, e2.mc_se))
    oracle = None if e1.oracle is None or e2.oracle is None else e1.oracle - e2.oracle
    asym = None
    if e1.asymptotic_bias is not None and e2.asymptotic_bias is not None:
        asym = e1.asymptotic_bias - e2.asymptotic_bias
    return EstimateReport(
        estimand=str(target),
        estimator=e1.estimator,
        point=e1.point - e2.point,
        mc_se=se,
        oracle=oracle,
        asymptotic_bias=asym,
        positivity_ok=e1.positivity_ok and e2.positivity_ok,
        n=e1.n,
        seed=e1.seed,
        scenario=e1.scenario,
        design=e1.design,
        n_boot=e1.n_boot,
        replicates=reps,
    )


def reports_frame(reports: Iterable[EstimateReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in reports], columns=list(EstimateReport.FIELDS))


def write_reports(reports: list[EstimateReport], json_path: str | Path, csv_path: str | Path) -> None:
    Path(json_path).write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    reports_frame(reports).to_csv(csv_path, index=False, lineterminator="\n", float_format="%.10g")


# -- positivity --------------------------------------------------------------------------


@dataclass
class PositivityReport:
    table: pd.DataFrame
    violations: list[PositivityCell]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def participation_failures(self) -> list[PositivityCell]:
        return [v for v in self.violations if v.condition == 1]

    @property
    def assignment_failures(self) -> list[PositivityCell]:
        return [v for v in self.violations if v.condition == 2]


def positivity_report(d: Dataset) -> PositivityReport:
    """Per-X table of Pr[S=1|X] and Pr[Z=z|X,S=1] with empirical 0/1 flags.

    Condition 1 fails at x when no (or only) participants have X=x; condition 2
    fails at (x, z) when trial members with X=x were never assigned z.
    """
    nt = fit_nuisances(d)
    rows = []
    for i, x in enumerate(nt.x_levels):
        flags = {(v.condition, v.z) for v in nt.violations if v.x == x}
        rows.append(
            {
                "x": int(x),
                "n": int(nt.n_x[i]),
                "n_trial": int(nt.n_xs[i, 1]),
                "p_s1": nt.p_s_given_x[i],
                "p_z0_trial": nt.p_z_given_xs1[i, 0],
                "p_z1_trial": nt.p_z_given_xs1[i, 1],
                "participation_violation": (1, None) in flags,
                "assignment_violation_z0": (2, 0) in flags,
                "assignment_violation_z1": (2, 1) in flags,
            }
        )
    return PositivityReport(pd.DataFrame(rows), list(nt.violations))
