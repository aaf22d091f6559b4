"""Command-line entry point: ``swiglab graph|simulate|estimate|verify|report``."""

from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd

from .claims import VERIFY_N, format_verdict, verify
from .config import RunConfig
from .errors import SwiglabError
from .estimators import EstimateReport, Estimator, estimate, reports_frame, write_reports
from .fixtures import ScenarioId, graph_variant, scenario_graph
from .graph import (
    DSepQuery,
    GraphError,
    d_separated,
    format_graph,
    format_path,
    open_paths,
    split_intervene,
    split_labels,
    to_dot,
)
from .scm import Dataset, default_spec, sample_interventional, sample_non_nested, sample_observational


def _parse_set(items: list[str] | None) -> dict[str, float]:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise SwiglabError(f"--set expects name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise SwiglabError(f"--set {name}: {value!r} is not a number") from None
    return out


def _parse_do(text: str) -> list[tuple[str, str]]:
    out = []
    for item in split_labels(text):
        name, sep, value = item.partition("=")
        if not sep or not value.strip():
            raise GraphError(f"--do expects NODE=value items, got {item!r}")
        out.append((name.strip(), value.strip()))
    return out


def _regime_slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", label).strip("_")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seeds"] = [args.seed]
    if getattr(args, "out", None):
        updates["output_dir"] = args.out
    if getattr(args, "jobs", None):
        updates["jobs"] = args.jobs
    for key in ("n", "design", "bootstrap"):
        if getattr(args, key, None) is not None:
            updates[key] = getattr(args, key)
    if getattr(args, "scenario", None):
        updates["scenario"] = args.scenario
    if getattr(args, "estimand", None):
        updates["estimands"] = args.estimand
    if getattr(args, "estimator", None):
        updates["estimators"] = args.estimator
    if getattr(args, "regime", None):
        updates["regimes"] = args.regime
    sets = _parse_set(getattr(args, "set", None))
    if sets:
        updates["set"] = {**cfg.set, **sets}
    if getattr(args, "strata", None):
        t, o = args.strata
        updates["strata"] = {"trial": t, "nontrial": o}
    cfg = cfg.with_updates(**updates)
    cfg.validate()
    return cfg


# -- graph ------------------------------------------------------------------------------


def cmd_graph(args) -> int:
    g = scenario_graph(args.scenario)
    if args.variant:
        g = graph_variant(args.scenario, args.variant)
    if args.do:
        g = split_intervene(g, _parse_do(args.do))
    print(to_dot(g) if args.dot else format_graph(g), end="")
    for text in args.query or []:
        q = DSepQuery.parse(text)
        q.validate(g)
        if d_separated(g, q):
            print(f"{q}: SEPARATED")
            continue
        print(f"{q}: CONNECTED")
        for a in sorted(q.set_a):
            for b in sorted(q.set_b):
                for path in open_paths(g, a, b, q.conditioning):
                    print(f"  open: {format_path(path)}")
    return 0


# -- simulate -----------------------------------------------------------------------------


def _datasets(cfg: RunConfig, spec, seed: int) -> list[Dataset]:
    if cfg.design == "non_nested":
        t, o = cfg.stratum_sizes()
        return [sample_non_nested(spec, t, o, cfg.mask_nonparticipants, seed=seed)]
    out = []
    for label in cfg.regime_labels():
        if label == "observational":
            out.append(sample_observational(spec, cfg.n, cfg.mask_nonparticipants, seed=seed))
        else:
            out.append(sample_interventional(spec, label, cfg.n, seed=seed))
    return out


def _data_path(out: Path, spec, d: Dataset) -> Path:
    tag = _regime_slug(d.regime) if d.design == "nested" else "non_nested"
    return out / "data" / spec.scenario.short / f"{tag}_seed{d.seed}.csv"


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    spec = cfg.load_spec()
    out = Path(cfg.output_dir)
    (out / "data" / spec.scenario.short).mkdir(parents=True, exist_ok=True)
    spec.save(out / "data" / spec.scenario.short / "spec.yaml")

    def run(seed):
        return [(d, _data_path(out, spec, d)) for d in _datasets(cfg, spec, seed)]

    with ThreadPoolExecutor(max(cfg.jobs, 1)) as pool:
        batches = list(pool.map(run, cfg.seeds))
    for batch in batches:
        for d, path in batch:
            d.to_csv(path)
            print(f"wrote {path} ({d.n} rows)")
    return 0


# -- estimate -----------------------------------------------------------------------------


def _estimate_one(cfg, spec, d: Dataset, estimand, estimator) -> EstimateReport:
    try:
        return estimate(d, estimand, estimator, spec=spec, n_boot=cfg.bootstrap, boot_seed=d.seed)
    except SwiglabError as exc:
        raise type(exc)(f"{estimand} [{estimator}] seed {d.seed}: {exc}") from None


def run_estimates(cfg: RunConfig, data_files: list[str] | None = None) -> list[EstimateReport]:
    spec = cfg.load_spec()
    if data_files:
        sets = [
            Dataset.from_csv(f, design=cfg.design, scenario=spec.scenario.value, seed=cfg.seeds[i % len(cfg.seeds)])
            for i, f in enumerate(data_files)
        ]
    else:
        sets = []
        for seed in cfg.seeds:
            if cfg.design == "non_nested":
                t, o = cfg.stratum_sizes()
                sets.append(sample_non_nested(spec, t, o, cfg.mask_nonparticipants, seed=seed))
            else:
                sets.append(sample_observational(spec, cfg.n, cfg.mask_nonparticipants, seed=seed))
    jobs = [(d, e, est) for d in sets for e in cfg.parsed_estimands() for est in cfg.estimators]
    with ThreadPoolExecutor(max(cfg.jobs, 1)) as pool:
        return list(pool.map(lambda j: _estimate_one(cfg, spec, *j), jobs))


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    reports = run_estimates(cfg, args.data)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_reports(reports, out / "estimates.json", out / "estimates.csv")
    frame = reports_frame(reports)[["estimand", "estimator", "seed", "point", "mc_se", "oracle", "abs_bias"]]
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.5f}"))
    return 0


# -- verify ----------------------------------------------------------------------------------


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    overrides = cfg.set
    if args.target == "all":
        scenarios = list(ScenarioId)
    else:
        scenarios = [ScenarioId.parse(args.target)]
    specs = [default_spec(s).with_overrides(overrides) if overrides else default_spec(s) for s in scenarios]
    n = args.n if args.n is not None else cfg.verify_n
    seeds = args.seeds if args.seeds else cfg.verify_seeds
    verdict = verify(
        specs,
        n=n,
        seeds=seeds,
        estimator=args.estimator_one or Estimator.GFORMULA,
        n_boot=cfg.bootstrap,
        jobs=cfg.jobs,
    )
    print(format_verdict(verdict))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    verdict.frame().to_csv(out / "verdict.csv", index=False, lineterminator="\n", float_format="%.10g")
    verdict.checks_frame().to_csv(out / "checks.csv", index=False, lineterminator="\n")
    return 0 if verdict.passed else 1


# -- report ----------------------------------------------------------------------------------


def _read_reports(path: Path) -> pd.DataFrame:
    if path.is_dir():
        found = sorted(path.rglob("estimates.json"))
        if not found:
            found = sorted(path.rglob("estimates.csv"))
        return pd.concat([_read_reports(p) for p in found], ignore_index=True) if found else pd.DataFrame()
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        return pd.DataFrame(data if isinstance(data, list) else [data])
    return pd.read_csv(path)


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """One row per (scenario, design, estimand, estimator, n) averaged over seeds."""
    keys = ["scenario", "design", "estimand", "estimator", "n"]
    g = frame.groupby(keys, sort=True, dropna=False)
    out = g.agg(
        seeds=("seed", "nunique"),
        mean_point=("point", "mean"),
        mean_mc_se=("mc_se", "mean"),
        oracle=("oracle", "first"),
        mean_abs_bias=("abs_bias", "mean"),
        asymptotic_bias=("asymptotic_bias", "first"),
    ).reset_index()
    out["bias_over_se"] = out["mean_abs_bias"] / out["mean_mc_se"]
    return out


def cmd_report(args) -> int:
    cfg = _load_config(args)
    inputs = [Path(p) for p in (args.inputs or [cfg.output_dir])]
    frames = [_read_reports(p) for p in inputs]
    frame = pd.concat([f for f in frames if not f.empty], ignore_index=True) if any(
        not f.empty for f in frames
    ) else pd.DataFrame()
    if frame.empty:
        print("no estimate reports found", file=sys.stderr)
        return 1
    summary = summarize(frame)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out / "summary.csv", index=False, lineterminator="\n", float_format="%.10g")
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.5f}"))
    return 0


# -- parser ----------------------------------------------------------------------------------


def _common(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=d, help="run a single seed (overrides config seeds)")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--jobs", type=int, default=d, help="worker threads")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swiglab", parents=[_common(False)], description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_common(True)]

    g = sub.add_parser("graph", parents=common, help="print a scenario graph or SWIG and answer queries")
    g.add_argument("scenario")
    g.add_argument("--do", default="", help='interventions, e.g. "S=1,Z=z"')
    g.add_argument("--variant", choices=["dag", "swig_assign", "swig_joint", "trial_swig"])
    g.add_argument("--query", action="append", help='d-separation query "A _||_ B | C"')
    g.add_argument("--dot", action="store_true", help="print Graphviz DOT instead of the text format")
    g.set_defaults(func=cmd_graph)

    def run_opts(p):
        p.add_argument("--scenario")
        p.add_argument("--n", type=int)
        p.add_argument("--design", choices=["nested", "non_nested"])
        p.add_argument("--strata", type=int, nargs=2, metavar=("TRIAL", "NONTRIAL"))
        p.add_argument("--set", action="append", metavar="NAME=VALUE", help="override a scenario parameter")

    s = sub.add_parser("simulate", parents=common, help="write simulated datasets as CSV")
    run_opts(s)
    s.add_argument("--regime", action="append", help="observational, do(Z=z) or do(S=1,Z=z)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", parents=common, help="estimate with oracle columns, write JSON and CSV")
    run_opts(e)
    e.add_argument("--estimand", action="append")
    e.add_argument("--estimator", action="append", choices=[x.value for x in Estimator])
    e.add_argument("--bootstrap", type=int)
    e.add_argument("--data", nargs="+", help="estimate on existing CSV files instead of simulating")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("verify", parents=common, help="run the identifiability claim matrix")
    v.add_argument("target", nargs="?", default="all", help="all or a scenario id")
    v.add_argument("--set", action="append", metavar="NAME=VALUE")
    v.add_argument("--n", type=int, help=f"rows per seed (default {VERIFY_N})")
    v.add_argument("--seeds", type=int, nargs="+")
    v.add_argument("--estimator", dest="estimator_one", choices=[x.value for x in Estimator])
    v.add_argument("--bootstrap", type=int)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", parents=common, help="summarize estimate reports")
    r.add_argument("inputs", nargs="*", help="JSON/CSV report files or directories")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SwiglabError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
