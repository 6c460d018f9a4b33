"""Command-line pipeline: synth -> fit -> tree -> solve -> eval, decoupled through files.

Every stage reads and writes inside ``--workdir``:

    split.json                 train/test day ids
    train_days.csv, test_days.csv
    splines_{ct,dt}.json       fitted splines per profile
    tree_{ct,dt}.json/.svg     scenario trees
    model_{ct,dt}.mps          exported models
    solution_{ct,dt}.json      decoded solutions with census and solver status
    report_{ct,dt}.csv/.json   evaluation reports, bands/ per-day band CSVs
    comparison.csv, costs.svg  side-by-side summary

Exit codes: 0 success, 2 infeasible model, 3 input error, 4 resource limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .bernstein import FitError, Spline
from .evaluate import cost_report, evaluate_day, write_report_csv, write_report_json
from .fleet import (
    DroppedDayWarning,
    LoadParseError,
    SchemaError,
    load_fleet,
    load_sample_days,
    reference_fleet_path,
    split_train_test,
    synthetic_days,
    write_sample_days,
)
from .milp import ModelError, UcSolution, build_model, decode
from .mps import write_mps
from .scenario import build_tree, load_tree, save_tree
from .solver import solve_milp

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_LIMIT = 0, 2, 3, 4
DT_PROFILE = (1, 1)


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    workdir: Path
    load: Path | None = None
    fleet: Path | None = None
    tests: Path | None = None
    degree: int = 3
    continuity: int = 2
    stages: tuple[int, ...] = (1, 2, 4)
    hours: int = 24
    rho: float = 3.0
    gap: float = 0.05
    seed: int = 0
    train_frac: float = 0.7
    scale: float = 1.0
    step: int = 5
    time_limit: float | None = None
    export_only: bool = False
    reproducible: bool = False
    band_mode: str = "schedule"

    def validate(self) -> None:
        if self.continuity < 1 or self.degree < self.continuity:
            raise InputError(f"need 1 <= continuity <= degree, got {self.continuity}, {self.degree}")
        if self.rho < 0 or self.gap < 0:
            raise InputError("rho and gap must be non-negative")
        if not 0 < self.train_frac < 1:
            raise InputError("train fraction must lie in (0, 1)")
        if self.scale <= 0 or self.step <= 0 or 60 % self.step:
            raise InputError("scale must be positive and step must divide 60 minutes")
        for name in ("load", "fleet", "tests"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise InputError(f"{name} file {p} does not exist")

    def profiles(self) -> dict[str, tuple[int, int]]:
        return {"ct": (self.degree, self.continuity), "dt": DT_PROFILE}

    def stage_counts(self) -> tuple[int, ...]:
        """``--stages`` padded with its last entry up to the horizon."""
        c = list(self.stages)
        if len(c) > self.hours:
            raise InputError(f"{len(c)} stage counts for a {self.hours}-hour horizon")
        return tuple(c + [c[-1]] * (self.hours - len(c)))


def _header(cfg: RunConfig) -> dict:
    head = {"version": __version__}
    if not cfg.reproducible:
        head["created"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return head


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise InputError(f"{path} is missing; run the preceding stage first")
    return json.loads(path.read_text())


def _load_days(cfg: RunConfig, path) -> list:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DroppedDayWarning)
        days = load_sample_days(path, scale=cfg.scale, H=cfg.hours, resolution=cfg.step)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return days


def _fleet(cfg: RunConfig):
    return load_fleet(cfg.fleet or reference_fleet_path())


def cmd_synth(cfg: RunConfig, args) -> int:
    days = synthetic_days(args.days, H=cfg.hours, start_hour=args.start_hour, seed=cfg.seed,
                          base=args.base, swing=args.swing, duck=args.duck, ramp=args.ramp,
                          ramp_hour=args.ramp_hour, ramp_width=args.ramp_width, noise=args.noise,
                          spread=args.spread, resolution=cfg.step)
    write_sample_days(days, args.out)
    print(f"wrote {len(days)} days to {args.out}")
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    if cfg.load is None:
        raise InputError("fit needs --load")
    days = _load_days(cfg, cfg.load)
    if len(days) < 2:
        raise InputError(f"need at least two complete days, found {len(days)}")
    train, test = split_train_test(days, cfg.train_frac, cfg.seed)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    write_sample_days(train, cfg.workdir / "train_days.csv")
    write_sample_days(test, cfg.workdir / "test_days.csv")
    _write_json(cfg.workdir / "split.json", {**_header(cfg), "seed": cfg.seed, "train_fraction": cfg.train_frac,
                                             "train": [d.id for d in train], "test": [d.id for d in test]})
    for label, (n, D) in cfg.profiles().items():
        records = []
        for d in days:
            try:
                s = d.fit(n, D, cfg.hours)
            except FitError as exc:
                raise InputError(f"day {d.id}: {exc}") from None
            records.append({"id": d.id, "degree": n, "continuity": D, "residual": s.residual,
                            "coeffs": s.coefficient_matrix().tolist()})
        _write_json(cfg.workdir / f"splines_{label}.json",
                    {**_header(cfg), "degree": n, "continuity": D, "splines": records})
        worst = max(r["residual"] for r in records)
        print(f"{label}: fitted {len(records)} days (degree {n}, continuity {D}), max rms {worst:.4g} MW")
    return EXIT_OK


def _splines(cfg: RunConfig, label: str) -> dict[str, Spline]:
    doc = _read_json(cfg.workdir / f"splines_{label}.json")
    return {r["id"]: Spline.from_matrix(r["coeffs"], r["continuity"], r["residual"]) for r in doc["splines"]}


def cmd_tree(cfg: RunConfig) -> int:
    from .plotting import plot_tree

    split = _read_json(cfg.workdir / "split.json")
    counts = cfg.stage_counts()
    for label, (n, D) in cfg.profiles().items():
        splines = _splines(cfg, label)
        train = [splines[i] for i in split["train"]]
        try:
            tree = build_tree(train, counts, depth=D, seed=cfg.seed)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        save_tree(tree, cfg.workdir / f"tree_{label}.json")
        plot_tree(tree, cfg.workdir / f"tree_{label}.svg", title=f"{label.upper()} tree (n={n}, D={D})")
        print(f"{label}: tree with {len(tree.nodes) - 1} edges, {len(tree.leaves())} leaves")
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    fleet = _fleet(cfg)
    outcome = EXIT_OK
    for label, (n, D) in cfg.profiles().items():
        tree = _tree(cfg, label)
        try:
            model, index = build_model(tree, fleet, cfg.rho, n, D)
        except ModelError as exc:
            raise InputError(str(exc)) from None
        write_mps(model, cfg.workdir / f"model_{label}.mps")
        if cfg.export_only:
            print(f"{label}: exported {model.n_vars} variables, {model.n_rows} rows")
            continue
        started = time.monotonic()
        res = solve_milp(model, gap=cfg.gap, time_limit=cfg.time_limit)
        elapsed = time.monotonic() - started
        meta = {**_header(cfg), "profile": label, "status": res.status, "nodes": res.nodes, "rho": cfg.rho,
                "census": index.census, "variables": index.variable_counts()}
        if not cfg.reproducible:
            meta["seconds"] = elapsed
        if res.status == "infeasible":
            _write_json(cfg.workdir / f"solution_{label}.json", meta)
            print(f"{label}: model is infeasible (capacity, ramp or minimum up/down limits cannot "
                  f"meet the tree's load and reserve margins)", file=sys.stderr)
            outcome = max(outcome, EXIT_INFEASIBLE)
            continue
        if not res.has_incumbent:
            _write_json(cfg.workdir / f"solution_{label}.json", meta)
            print(f"{label}: stopped at the time limit without a feasible schedule", file=sys.stderr)
            outcome = max(outcome, EXIT_LIMIT)
            continue
        sol = decode(model, index, res.x, fleet, objective=res.objective, gap=res.gap)
        sol.bound = float(res.bound)
        sol.save(cfg.workdir / f"solution_{label}.json", extra=meta)
        print(f"{label}: {res.status}, objective {res.objective:.2f}, gap {res.gap:.4f}, "
              f"{res.nodes} nodes, max violation {sol.max_violation:.2g}")
        if res.status == "time-limit":
            outcome = max(outcome, EXIT_LIMIT)
    return outcome


def _tree(cfg: RunConfig, label: str):
    path = cfg.workdir / f"tree_{label}.json"
    if not path.exists():
        raise InputError(f"{path} is missing; run the preceding stage first")
    return load_tree(path)


def cmd_eval(cfg: RunConfig) -> int:
    from .plotting import plot_band, plot_costs

    fleet = _fleet(cfg)
    tests_path = cfg.tests or cfg.workdir / "test_days.csv"
    if not Path(tests_path).exists():
        raise InputError(f"no test days at {tests_path}")
    days = _load_days(cfg, tests_path)
    if not days:
        raise InputError(f"no complete test days in {tests_path}")
    band_dir = cfg.workdir / "bands"
    band_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    for label in cfg.profiles():
        doc = _read_json(cfg.workdir / f"solution_{label}.json")
        if "x" not in doc:
            raise InputError(f"{label} solution has no schedule (status {doc.get('status')})")
        sol = UcSolution.from_dict(doc)
        tree = _tree(cfg, label)
        rep = cost_report(sol, tree, fleet, days, label=label, mode=cfg.band_mode, band_dir=band_dir)
        reports[label] = rep
        write_report_csv(rep, cfg.workdir / f"report_{label}.csv")
        write_report_json(rep, cfg.workdir / f"report_{label}.json")
        # figure for the worst day of this profile
        worst = max(rep.days, key=lambda d: (d.max_violation, d.day_id))
        day = next(d for d in days if d.id == worst.day_id)
        _, band, samples = evaluate_day(sol, tree, fleet, day, cfg.band_mode)
        plot_band(band, samples, cfg.workdir / f"band_{label}.svg",
                  title=f"{label.upper()} service band, day {day.id}")
    plot_costs(reports, cfg.workdir / "costs.svg")
    rows = _comparison(reports, days)
    with open(cfg.workdir / "comparison.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    width = max(len(r[0]) for r in rows)
    for r in rows:
        print(r[0].ljust(width), *(str(c).rjust(14) for c in r[1:]), sep="\t")
    return EXIT_OK


def _comparison(reports, days) -> list[list]:
    labels = list(reports)
    rows = [["metric", *labels]]
    for key in ("expected_day_ahead", "reserve_cost", "mean_testing", "total_testing", "infeasibility_rate"):
        rows.append([key, *(f"{getattr(reports[k], key):.4f}" for k in labels)])
    rows.append(["infeasible_days", *(sum(not d.feasible for d in reports[k].days) for k in labels)])
    rows.append(["test_days", *(len(days) for _ in labels)])
    return rows


def _stages(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad stage list {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("stage counts must be positive integers")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", type=Path, default=Path("run"))
    common.add_argument("--load", type=Path, help="load CSV with header day_id,minute,mw")
    common.add_argument("--fleet", type=Path, help="fleet TOML/JSON (default: bundled reference fleet)")
    common.add_argument("--tests", type=Path, help="test-day CSV for eval (default: workdir/test_days.csv)")
    common.add_argument("--degree", type=int, default=3)
    common.add_argument("--continuity", type=int, default=2)
    common.add_argument("--stages", type=_stages, default=(1, 2, 4),
                        help="comma-separated nodes per stage, padded with the last value")
    common.add_argument("--hours", type=int, default=24)
    common.add_argument("--rho", type=float, default=3.0)
    common.add_argument("--gap", type=float, default=0.05)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--train-frac", type=float, default=0.7)
    common.add_argument("--scale", type=float, default=1.0, help="divide load MW by this factor")
    common.add_argument("--step", type=int, default=5, help="load sample spacing in minutes")
    common.add_argument("--time-limit", type=float, default=None, help="solver wall-clock limit in seconds")
    common.add_argument("--export-only", action="store_true", help="write MPS files without solving")
    common.add_argument("--reproducible", action="store_true", help="omit timestamps from outputs")
    common.add_argument("--band-mode", choices=("schedule", "edge"), default="schedule")

    parser = argparse.ArgumentParser(prog="ctmsruc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    synth = sub.add_parser("synth", parents=[common], help="write a synthetic load CSV")
    synth.add_argument("--out", type=Path, required=True)
    synth.add_argument("--days", type=int, default=30)
    synth.add_argument("--start-hour", type=int, default=0)
    synth.add_argument("--base", type=float, default=500.0)
    synth.add_argument("--swing", type=float, default=120.0)
    synth.add_argument("--duck", type=float, default=150.0)
    synth.add_argument("--ramp", type=float, default=0.0)
    synth.add_argument("--ramp-hour", type=float, default=19.0)
    synth.add_argument("--ramp-width", type=float, default=0.15)
    synth.add_argument("--noise", type=float, default=2.0)
    synth.add_argument("--spread", type=float, default=0.05)
    for name, text in (("fit", "fit splines for both profiles and split train/test"),
                       ("tree", "build scenario trees from the training splines"),
                       ("solve", "build, export and solve both models"),
                       ("eval", "replay test days and report costs and feasibility"),
                       ("run", "fit, tree, solve and eval in sequence")):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(
        workdir=args.workdir, load=args.load, fleet=args.fleet, tests=args.tests, degree=args.degree,
        continuity=args.continuity, stages=args.stages, hours=args.hours, rho=args.rho, gap=args.gap,
        seed=args.seed, train_frac=args.train_frac, scale=args.scale, step=args.step,
        time_limit=args.time_limit, export_only=args.export_only, reproducible=args.reproducible,
        band_mode=args.band_mode,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    try:
        cfg.validate()
        if args.command == "synth":
            return cmd_synth(cfg, args)
        if args.command == "run":
            for step in (cmd_fit, cmd_tree, cmd_solve):
                code = step(cfg)
                if code != EXIT_OK:
                    return code
            return EXIT_OK if cfg.export_only else cmd_eval(cfg)
        return {"fit": cmd_fit, "tree": cmd_tree, "solve": cmd_solve, "eval": cmd_eval}[args.command](cfg)
    except (InputError, LoadParseError, SchemaError, FitError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
