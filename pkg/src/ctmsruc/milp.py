"""Continuous-time multistage reserve and unit commitment model.

Every generator trajectory on a tree edge is a degree-n Bernstein polynomial;
capacity and ramp limits act on control points, so they hold for the whole
continuous trajectory. With ``n = 1, depth = 1`` the same builder yields the
discrete-time benchmark.

Constraint families (row ``family`` tags):

``b``  knot continuity between an edge and each child edge
``c``  hourly reserve envelopes and the hourly commitment indicator
``d``  coefficient-wise balance, plus the reserve margin rows
``e``  capacity limits with late start-up / shut-down
``f``  ramp limits on forward differences, relaxed on switching
``g``  start-up/shut-down logic and minimum up/down windows
``h``  tie of the published schedule to the most likely path
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bernstein import ControlPoly, continuity_rows
from .fleet import Fleet
from .model import MilpModel
from .scenario import ScenarioTree, ancestor, most_likely_path, stage_nodes


class ModelError(ValueError):
    pass


class DecodeError(ValueError):
    families: tuple[str, ...] = ()


@dataclass
class VariableIndex:
    n: int
    depth: int
    G: int
    H: int
    edges: list[int]
    schedule_path: tuple[int, ...]
    initial_status: tuple[int, ...]
    x: dict = field(default_factory=dict)      # (g, v, i)
    rhat: dict = field(default_factory=dict)   # (g, v, i)
    rchk: dict = field(default_factory=dict)   # (g, v, i)
    rbar: dict = field(default_factory=dict)   # (g, h, i)
    rlow: dict = field(default_factory=dict)   # (g, h, i)
    xs: dict = field(default_factory=dict)     # (g, h, i)
    y: dict = field(default_factory=dict)      # (g, v)
    su: dict = field(default_factory=dict)     # (g, v)
    sd: dict = field(default_factory=dict)     # (g, v)
    ybar: dict = field(default_factory=dict)   # (g, h)
    census: dict = field(default_factory=dict)

    FAMILIES = ("x", "y", "su", "sd", "ybar", "rhat", "rchk", "rbar", "rlow", "xs")

    def variable_counts(self) -> dict[str, int]:
        return {f: len(getattr(self, f)) for f in self.FAMILIES}


def build_model(tree: ScenarioTree, fleet: Fleet, rho: float, n: int | None = None,
                depth: int | None = None, initial_status=None, name: str = "ctmsruc"):
    """Assemble the MILP for ``tree`` and ``fleet``; returns ``(model, index)``.

    ``rho`` scales the bundle RMSE that aggregate reserves must cover.
    ``initial_status`` gives each unit's commitment before stage 1
    (default: all off).
    """
    n = tree.degree if n is None else n
    D = tree.depth if depth is None else depth
    if n != tree.degree:
        raise ModelError(f"tree carries degree {tree.degree} but model asked for {n}")
    if D < 1 or n < D:
        raise ModelError(f"need 1 <= continuity depth <= degree, got depth={D}, n={n}")
    if rho < 0:
        raise ModelError("rho must be non-negative")
    if len(fleet) == 0:
        raise ModelError("empty fleet")
    for node in tree.nodes[1:]:
        if node.xi is None or node.xi.degree != n or node.eps is None or len(node.eps) != n + 1:
            raise ModelError(f"node {node.id} lacks degree-{n} centroid or error vector")
    G, H = len(fleet), tree.H
    y0 = tuple(int(s) for s in (initial_status if initial_status is not None else [0] * G))
    if len(y0) != G:
        raise ModelError("initial_status length differs from fleet size")

    edges = tree.edges()
    ml = most_likely_path(tree).nodes
    idx = VariableIndex(n, D, G, H, edges, ml, y0)
    m = MilpModel(name)
    coef = range(n + 1)
    lead = range(0, n - D + 1)
    trail = range(n - D + 1, n + 1)
    k_relax = n - D
    width = n + 1
    census: dict[str, int] = {}

    def row(terms, sense, rhs, fam, sub, where):
        m.add_constraint(terms, sense, rhs, name=f"{sub}_{where}", family=fam, where=where)
        census[fam] = census.get(fam, 0) + 1

    for g, unit in enumerate(fleet):
        for v in edges:
            pi = tree.nodes[v].prob
            for i in coef:
                idx.x[g, v, i] = m.add_var(f"xg{g}e{v}i{i}", 0.0, unit.p_max,
                                           cost=pi * unit.cost_energy / width)
        for v in edges:
            for i in coef:
                idx.rhat[g, v, i] = m.add_var(f"rug{g}e{v}i{i}")
            for i in coef:
                idx.rchk[g, v, i] = m.add_var(f"rdg{g}e{v}i{i}")
        for h in range(1, H + 1):
            for i in coef:
                idx.rbar[g, h, i] = m.add_var(f"Rug{g}h{h}i{i}", cost=unit.price_res_up / width)
            for i in coef:
                idx.rlow[g, h, i] = m.add_var(f"Rdg{g}h{h}i{i}", cost=unit.price_res_down / width)
            for i in coef:
                idx.xs[g, h, i] = m.add_var(f"xsg{g}h{h}i{i}", 0.0, unit.p_max)
    for g, unit in enumerate(fleet):
        for v in edges:
            pi = tree.nodes[v].prob
            idx.y[g, v] = m.add_binary(f"yg{g}e{v}", cost=pi * unit.cost_commit)
            idx.su[g, v] = m.add_binary(f"sug{g}e{v}", cost=pi * unit.cost_startup)
            idx.sd[g, v] = m.add_binary(f"sdg{g}e{v}", cost=pi * unit.cost_shutdown)
        for h in range(1, H + 1):
            idx.ybar[g, h] = m.add_binary(f"ybg{g}h{h}", cost=unit.price_commit_option)

    X, Y, RU, RD, XS = idx.x, idx.y, idx.rhat, idx.rchk, idx.xs

    # (b) continuity across knots
    pairs = continuity_rows(n, D)
    for g in range(G):
        for v in edges:
            for c in tree.children(v):
                for d, (w_end, w_start) in enumerate(pairs):
                    terms = [(X[g, v, i], w_end[i]) for i in coef if w_end[i]]
                    terms += [(X[g, c, i], -w_start[i]) for i in coef if w_start[i]]
                    row(terms, "=", 0.0, "b", f"cont{d}", f"g{g}v{v}c{c}")

    # (c) hourly reserve envelopes over all nodes of the stage
    for h in range(1, H + 1):
        for v in stage_nodes(tree, h):
            for g in range(G):
                for i in coef:
                    row([(idx.rbar[g, h, i], 1.0), (X[g, v, i], -1.0), (RU[g, v, i], -1.0), (XS[g, h, i], 1.0)],
                        ">=", 0.0, "c", "resup", f"g{g}h{h}v{v}i{i}")
                    row([(idx.rlow[g, h, i], 1.0), (XS[g, h, i], -1.0), (X[g, v, i], 1.0), (RD[g, v, i], -1.0)],
                        ">=", 0.0, "c", "resdn", f"g{g}h{h}v{v}i{i}")
                row([(idx.ybar[g, h], 1.0), (Y[g, v], -1.0)], ">=", 0.0, "c", "ybar", f"g{g}h{h}v{v}")

    # (d) balance and reserve margins
    for v in edges:
        node = tree.nodes[v]
        for i in coef:
            xi, eps = float(node.xi.coeffs[i]), float(node.eps[i])
            gen = [(X[g, v, i], 1.0) for g in range(G)]
            row(gen, "=", xi, "d", "bal", f"v{v}i{i}")
            row(gen + [(RU[g, v, i], 1.0) for g in range(G)], "=", xi + rho * eps, "d", "up", f"v{v}i{i}")
            row(gen + [(RD[g, v, i], -1.0) for g in range(G)], "=", xi - rho * eps, "d", "dn", f"v{v}i{i}")

    # (e) capacity: leading points follow the edge's own commitment, trailing
    # points follow the commitment of the next edge (late on/off)
    def capacity(g, unit, e, i, yv, sub, where):
        row([(X[g, e, i], 1.0), (RU[g, e, i], 1.0), (Y[g, yv], -unit.p_max)], "<=", 0.0, "e", sub + "max", where)
        row([(X[g, e, i], 1.0), (RD[g, e, i], -1.0), (Y[g, yv], -unit.p_min)], ">=", 0.0, "e", sub + "min", where)

    for g, unit in enumerate(fleet):
        for v in edges:
            h = tree.nodes[v].stage
            for i in lead:
                capacity(g, unit, v, i, v, "own", f"g{g}v{v}i{i}")
            if h >= 2:
                p = tree.nodes[v].parent
                for i in trail:
                    capacity(g, unit, p, i, v, "late", f"g{g}e{p}v{v}i{i}")
            if h == H:
                for i in trail:
                    capacity(g, unit, v, i, v, "last", f"g{g}v{v}i{i}")

    # (f) ramping on forward differences n * (x[i+1] - x[i])
    def ramp_terms(g, e, i):
        return [(X[g, e, i + 1], float(n)), (X[g, e, i], -float(n))]

    for g, unit in enumerate(fleet):
        R, relax = unit.ramp_limit, n * unit.p_max
        for v in edges:
            h = tree.nodes[v].stage
            for i in range(n):
                if i == k_relax:
                    continue
                row(ramp_terms(g, v, i), "<=", R, "f", "rampup", f"g{g}v{v}i{i}")
                row(ramp_terms(g, v, i), ">=", -R, "f", "rampdn", f"g{g}v{v}i{i}")
            if h >= 2:
                p = tree.nodes[v].parent
                row(ramp_terms(g, p, k_relax) + [(idx.su[g, v], -relax)], "<=", R, "f", "relaxup", f"g{g}e{p}v{v}")
                row(ramp_terms(g, p, k_relax) + [(idx.sd[g, v], relax)], ">=", -R, "f", "relaxdn", f"g{g}e{p}v{v}")
            if h == H:
                row(ramp_terms(g, v, k_relax), "<=", R, "f", "lastup", f"g{g}v{v}")
                row(ramp_terms(g, v, k_relax), ">=", -R, "f", "lastdn", f"g{g}v{v}")

    # (g) switching logic and minimum up/down windows
    for g, unit in enumerate(fleet):
        for v in edges:
            h = tree.nodes[v].stage
            p = tree.nodes[v].parent
            terms = [(idx.su[g, v], 1.0), (idx.sd[g, v], -1.0), (Y[g, v], -1.0)]
            rhs = 0.0
            if h >= 2:
                terms.append((Y[g, p], 1.0))
            else:
                rhs = -float(y0[g])
            row(terms, "=", rhs, "g", "switch", f"g{g}v{v}")
            on = [(idx.su[g, ancestor(tree, v, u)], -1.0) for u in range(min(unit.min_on, h))]
            row([(Y[g, v], 1.0)] + on, ">=", 0.0, "g", "minon", f"g{g}v{v}")
            off = [(idx.sd[g, ancestor(tree, v, u)], 1.0) for u in range(min(unit.min_off, h))]
            row([(Y[g, v], 1.0)] + off, "<=", 1.0, "g", "minoff", f"g{g}v{v}")

    # (h) published schedule equals the most likely path
    for g in range(G):
        for h in range(1, H + 1):
            for i in coef:
                row([(XS[g, h, i], 1.0), (X[g, ml[h], i], -1.0)], "=", 0.0, "h", "tie", f"g{g}h{h}i{i}")

    idx.census = census
    return m, idx


def build_dt(tree: ScenarioTree, fleet: Fleet, rho: float, initial_status=None):
    """Discrete-time benchmark: first-order, value-continuous trajectories."""
    if tree.degree != 1:
        raise ModelError("the discrete-time model needs a degree-1 tree")
    return build_model(tree, fleet, rho, n=1, depth=1, initial_status=initial_status, name="dtmsruc")


def expected_census(tree: ScenarioTree, G: int, n: int, D: int) -> dict[str, int]:
    """Closed-form row counts per family for a tree."""
    N = len(tree.nodes) - 1
    Z1 = len(stage_nodes(tree, 1))
    ZH = len(stage_nodes(tree, tree.H))
    H = tree.H
    w = n + 1
    non_first = N - Z1
    return {
        "b": G * D * non_first,
        "c": G * N * (2 * w + 1),
        "d": 3 * N * w,
        "e": G * (2 * (n - D + 1) * N + 2 * D * non_first + 2 * D * ZH),
        "f": G * (2 * (n - 1) * N + 2 * non_first + 2 * ZH),
        "g": 3 * G * N,
        "h": G * H * w,
    }


@dataclass
class UcSolution:
    """Decoded schedule; hour-indexed arrays use position h-1 for hour h."""

    generators: list[str]
    n: int
    depth: int
    schedule_path: tuple[int, ...]
    x: np.ndarray        # (G, V, n+1), row 0 (root) unused
    rhat: np.ndarray     # (G, V, n+1)
    rchk: np.ndarray     # (G, V, n+1)
    y: np.ndarray        # (G, V) int
    su: np.ndarray
    sd: np.ndarray
    ybar: np.ndarray     # (G, H) int
    rbar: np.ndarray     # (G, H, n+1)
    rlow: np.ndarray
    xs: np.ndarray
    objective: float
    gap: float = 0.0
    max_violation: float = 0.0
    bound: float = np.nan

    def dispatch(self, g: int, v: int) -> ControlPoly:
        return ControlPoly(self.x[g, v])

    def schedule(self, g: int, h: int) -> ControlPoly:
        return ControlPoly(self.xs[g, h - 1])

    def reserve_up(self, g: int, h: int) -> ControlPoly:
        return ControlPoly(self.rbar[g, h - 1])

    def reserve_down(self, g: int, h: int) -> ControlPoly:
        return ControlPoly(self.rlow[g, h - 1])

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
            elif isinstance(v, tuple):
                out[k] = list(v)
            elif isinstance(v, float) and not np.isfinite(v):
                out[k] = None
            else:
                out[k] = v
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "UcSolution":
        ints = {"y", "su", "sd", "ybar"}
        kw = {}
        for k, v in doc.items():
            if k not in cls.__dataclass_fields__:
                continue
            if k in ("x", "rhat", "rchk", "rbar", "rlow", "xs"):
                kw[k] = np.array(v, dtype=float)
            elif k in ints:
                kw[k] = np.array(v, dtype=int)
            elif k == "schedule_path":
                kw[k] = tuple(v)
            elif k in ("gap", "max_violation", "bound", "objective"):
                kw[k] = np.nan if v is None else float(v)
            else:
                kw[k] = v
        return cls(**kw)

    def save(self, path, extra: dict | None = None) -> None:
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "UcSolution":
        return cls.from_dict(json.loads(Path(path).read_text()))


def decode(model: MilpModel, index: VariableIndex, assignment, fleet: Fleet | None = None,
           tol: float = 1e-6, objective: float | None = None, gap: float = 0.0) -> UcSolution:
    """Check an assignment against every row and unpack it.

    ``assignment`` is a vector in model order or a ``{name: value}`` map.
    Raises :class:`DecodeError` naming the family and location of the worst
    violated row, or the first non-integral binary.
    """
    if isinstance(assignment, dict):
        missing = [v.name for v in model.variables if v.name not in assignment]
        if missing:
            raise DecodeError(f"assignment lacks variable {missing[0]}")
        x = np.array([assignment[v.name] for v in model.variables], dtype=float)
    else:
        x = np.asarray(assignment, dtype=float)
        if x.shape != (model.n_vars,):
            raise DecodeError(f"assignment has {x.size} values, model has {model.n_vars} variables")
    for j in model.integer_indices():
        if abs(x[j] - round(x[j])) > tol:
            raise DecodeError(f"integrality: {model.variables[j].name} = {x[j]}")
    lb, ub = model.bounds()
    bound_viol = np.maximum(lb - x, 0) + np.maximum(x - ub, 0)
    if bound_viol.size and bound_viol.max() > tol:
        j = int(np.argmax(bound_viol))
        raise DecodeError(f"bounds: {model.variables[j].name} = {x[j]} outside [{lb[j]}, {ub[j]}]")
    viol = model.violations(x)
    worst = float(viol.max(initial=0.0))
    if worst > tol:
        per_family: dict[str, int] = {}
        for i in np.flatnonzero(viol > tol):
            fam = model.constraints[i].family
            if fam not in per_family or viol[i] > viol[per_family[fam]]:
                per_family[fam] = int(i)
        parts = []
        for fam in sorted(per_family):
            con = model.constraints[per_family[fam]]
            parts.append(f"family ({fam}) row {con.name} at {con.where} off by {viol[per_family[fam]]:.3g}")
        err = DecodeError("violated constraints: " + "; ".join(parts))
        err.families = tuple(sorted(per_family))
        raise err

    G, H, n = index.G, index.H, index.n
    V = max(index.edges) + 1
    w = n + 1

    def edge_arr(d):
        a = np.zeros((G, V, w))
        for (g, v, i), j in d.items():
            a[g, v, i] = x[j]
        return a

    def hour_arr(d):
        a = np.zeros((G, H, w))
        for (g, h, i), j in d.items():
            a[g, h - 1, i] = x[j]
        return a

    def node_bin(d):
        a = np.zeros((G, V), dtype=int)
        for (g, v), j in d.items():
            a[g, v] = int(round(x[j]))
        return a

    ybar = np.zeros((G, H), dtype=int)
    for (g, h), j in index.ybar.items():
        ybar[g, h - 1] = int(round(x[j]))
    names = [u.name for u in fleet] if fleet is not None else [f"g{g}" for g in range(G)]
    return UcSolution(
        generators=names, n=n, depth=index.depth, schedule_path=index.schedule_path,
        x=edge_arr(index.x), rhat=edge_arr(index.rhat), rchk=edge_arr(index.rchk),
        y=node_bin(index.y), su=node_bin(index.su), sd=node_bin(index.sd), ybar=ybar,
        rbar=hour_arr(index.rbar), rlow=hour_arr(index.rlow), xs=hour_arr(index.xs),
        objective=float(model.evaluate(x) if objective is None else objective),
        gap=float(gap), max_violation=worst,
    )


def deterministic_cost(sol: UcSolution, fleet: Fleet) -> float:
    """Up-front part of the objective: reserve envelopes and commitment options."""
    w = sol.n + 1
    total = 0.0
    for g, unit in enumerate(fleet):
        total += unit.price_res_up * sol.rbar[g].sum() / w
        total += unit.price_res_down * sol.rlow[g].sum() / w
        total += unit.price_commit_option * sol.ybar[g].sum()
    return float(total)


def nodal_cost(sol: UcSolution, fleet: Fleet, g: int, v: int) -> float:
    unit = fleet[g]
    return float(unit.cost_commit * sol.y[g, v] + unit.cost_startup * sol.su[g, v]
                 + unit.cost_shutdown * sol.sd[g, v] + unit.cost_energy * sol.x[g, v].sum() / (sol.n + 1))


def expected_nodal_cost(sol: UcSolution, tree: ScenarioTree, fleet: Fleet) -> float:
    return float(sum(tree.nodes[v].prob * nodal_cost(sol, fleet, g, v)
                     for v in tree.edges() for g in range(len(fleet))))
