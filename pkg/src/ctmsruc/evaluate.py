"""Replay held-out load days against a solved schedule.

Each test day follows the tree path whose centroids are nearest to its own
spline; the committed units on that path, together with the published
schedule and hourly reserve envelopes, define the band of load the solution
can serve. A day is feasible when every sample lies inside the band.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .bernstein import Spline, basis_matrix
from .fleet import Fleet, SampleDay
from .milp import UcSolution, deterministic_cost, nodal_cost
from .scenario import ScenarioTree, TreePath, nearest_path

BAND_MODES = ("schedule", "edge")


@dataclass
class RealizedSchedule:
    """Hour-indexed arrays (position h-1 holds hour h)."""

    path: TreePath
    distance: float
    y: np.ndarray         # (G, H) commitment on the followed path
    dispatch: np.ndarray  # (G, H, n+1) path edge generation
    rhat: np.ndarray      # (G, H, n+1) path edge up-reserve
    rchk: np.ndarray      # (G, H, n+1) path edge down-reserve
    schedule: np.ndarray  # (G, H, n+1)
    res_up: np.ndarray    # (G, H, n+1)
    res_down: np.ndarray  # (G, H, n+1)

    @property
    def H(self) -> int:
        return self.y.shape[1]


def follow(solution: UcSolution, tree: ScenarioTree, test: Spline) -> RealizedSchedule:
    path, dist = nearest_path(tree, test)
    edges = list(path.nodes[1:])
    return RealizedSchedule(
        path=path, distance=dist,
        y=solution.y[:, edges], dispatch=solution.x[:, edges],
        rhat=solution.rhat[:, edges], rchk=solution.rchk[:, edges],
        schedule=solution.xs, res_up=solution.rbar, res_down=solution.rlow,
    )


def band_on_grid(rs: RealizedSchedule, fleet: Fleet, t, mode: str = "schedule") -> np.ndarray:
    """Rows ``(t, lo, hi)`` for absolute times ``t`` in hours, ``0 <= t <= H``."""
    if mode not in BAND_MODES:
        raise ValueError(f"unknown band mode {mode!r}")
    t = np.asarray(t, dtype=float)
    H = rs.H
    if t.size and (t.min() < 0 or t.max() > H + 1e-12):
        raise ValueError("band times outside the horizon")
    hour = np.minimum(np.floor(t).astype(int), H - 1)
    local = t - hour
    if mode == "schedule":
        base, up, dn = rs.schedule, rs.res_up, rs.res_down
    else:
        base, up, dn = rs.dispatch, rs.rhat, rs.rchk
    n = base.shape[2] - 1
    B = basis_matrix(n, local)  # (m, n+1)
    lo = np.zeros(t.size)
    hi = np.zeros(t.size)
    for g, unit in enumerate(fleet):
        on = rs.y[g, hour].astype(float)
        x = np.einsum("mi,mi->m", B, base[g, hour])
        r_up = np.einsum("mi,mi->m", B, up[g, hour])
        r_dn = np.einsum("mi,mi->m", B, dn[g, hour])
        hi += on * np.minimum(unit.p_max, x + r_up)
        lo += on * np.maximum(unit.p_min, x - r_dn)
    return np.column_stack([t, lo, hi])


def service_band(rs: RealizedSchedule, fleet: Fleet, step: float, mode: str = "schedule") -> np.ndarray:
    """Band sampled every ``step`` hours over ``[0, H)``."""
    if step <= 0:
        raise ValueError("step must be positive")
    count = int(round(rs.H / step))
    return band_on_grid(rs, fleet, np.arange(count) * step, mode)


def check_feasibility(band, samples, tol: float = 1e-6) -> tuple[bool, float, float]:
    """Closed-band test of ``samples`` (rows ``t_hours, MW``) against ``band``.

    Returns ``(feasible, max violation MW, minutes out of band)``; each
    violating sample counts for one grid step.
    """
    band = np.asarray(band, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if band.shape[0] != samples.shape[0] or not np.allclose(band[:, 0], samples[:, 0], atol=1e-9):
        raise ValueError("band and samples are on different time grids")
    load = samples[:, 1]
    viol = np.maximum.reduce([load - band[:, 2], band[:, 1] - load, np.zeros(load.size)])
    bad = viol > tol
    step_min = 60.0 * float(np.median(np.diff(samples[:, 0]))) if len(samples) > 1 else 0.0
    return (not bad.any(), float(viol.max(initial=0.0)), float(bad.sum() * step_min))


@dataclass
class DayResult:
    day_id: str
    leaf: int
    distance: float
    feasible: bool
    max_violation: float
    violation_minutes: float
    realized_cost: float


@dataclass
class EvalReport:
    label: str
    days: list[DayResult]
    expected_day_ahead: float
    reserve_cost: float
    mean_testing: float
    total_testing: float
    infeasibility_rate: float
    band_mode: str = "schedule"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["days"] = [asdict(d) for d in self.days]
        return doc


def realized_cost(solution: UcSolution, fleet: Fleet, path: TreePath) -> float:
    """Energy, commitment and switching cost along one path at day-ahead prices."""
    return float(sum(nodal_cost(solution, fleet, g, v) for v in path.nodes[1:] for g in range(len(fleet))))


def day_grid(day: SampleDay) -> np.ndarray:
    return np.column_stack([day.minutes / 60.0, day.values])


def evaluate_day(solution: UcSolution, tree: ScenarioTree, fleet: Fleet, day: SampleDay,
                 mode: str = "schedule"):
    """Follow, band and check one day; returns ``(DayResult, band, samples)``."""
    spline = day.fit(solution.n, solution.depth, tree.H)
    rs = follow(solution, tree, spline)
    samples = day_grid(day)
    band = band_on_grid(rs, fleet, samples[:, 0], mode)
    ok, worst, minutes = check_feasibility(band, samples)
    result = DayResult(day.id, rs.path.nodes[-1], rs.distance, ok, worst, minutes,
                       realized_cost(solution, fleet, rs.path))
    return result, band, samples


def cost_report(solution: UcSolution, tree: ScenarioTree, fleet: Fleet, days, label: str = "",
                mode: str = "schedule", band_dir=None) -> EvalReport:
    """Evaluate every test day; optionally write one band CSV per day to ``band_dir``."""
    days = list(days)
    if not days:
        raise ValueError("no test days to evaluate")
    results = []
    for day in days:
        res, band, samples = evaluate_day(solution, tree, fleet, day, mode)
        results.append(res)
        if band_dir is not None:
            write_band_csv(Path(band_dir) / f"band_{label or 'run'}_{day.id}.csv", band, samples)
    reserve = deterministic_cost(solution, fleet)
    mean = float(np.mean([r.realized_cost for r in results]))
    return EvalReport(
        label=label, days=results, expected_day_ahead=float(solution.objective),
        reserve_cost=reserve, mean_testing=mean, total_testing=mean + reserve,
        infeasibility_rate=sum(not r.feasible for r in results) / len(results), band_mode=mode,
    )


REPORT_FIELDS = ("kind", "name", "leaf", "feasible", "max_violation_mw", "violation_minutes",
                 "realized_cost", "value")


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for d in report.days:
            w.writerow(["day", d.day_id, d.leaf, int(d.feasible), repr(d.max_violation),
                        repr(d.violation_minutes), repr(d.realized_cost), ""])
        for key in ("expected_day_ahead", "reserve_cost", "mean_testing", "total_testing",
                    "infeasibility_rate"):
            w.writerow(["aggregate", key, "", "", "", "", "", repr(float(getattr(report, key)))])


def write_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True))


def write_band_csv(path, band, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_hours", "lo_mw", "hi_mw", "load_mw"])
        for (t, lo, hi), (_, load) in zip(np.asarray(band), np.asarray(samples)):
            w.writerow([repr(float(t)), repr(float(lo)), repr(float(hi)), repr(float(load))])
