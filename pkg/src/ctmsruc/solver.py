"""Exact desk-scale solvers for :class:`~ctmsruc.model.MilpModel`.

``solve_lp`` runs a bounded-variable primal simplex (dense tableau, two
phases, Dantzig pricing with a Bland fallback against cycling). Models too
large for a dense tableau go to HiGHS through :func:`scipy.optimize.linprog`
when ``backend="auto"``; pass ``backend="simplex"`` to force the built-in
method. ``solve_milp`` is a best-bound branch and bound on top of either.

Tolerances are fixed: primal feasibility 1e-7, integrality 1e-6.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import MilpModel

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
INT_TOL = 1e-6
_DUAL_TOL = 1e-9
_PIVOT_TOL = 1e-9
# tableau cells above which "auto" hands the LP to HiGHS
DENSE_LIMIT = 400_000


@dataclass
class LpResult:
    status: str
    objective: float = np.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    iterations: int = 0
    backend: str = ""


@dataclass
class MilpResult:
    status: str
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    log: list = field(default_factory=list)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None


class _LpData:
    """Row data of a model in the shape both LP backends consume."""

    def __init__(self, model: MilpModel):
        self.c = model.cost_vector()
        self.A = model.matrix()
        self.b = model.rhs()
        codes = {"<=": -1, "=": 0, ">=": 1}
        self.sense = np.array([codes[s] for s in model.senses()], dtype=int)
        self.lb, self.ub = model.bounds()
        self._dense = None
        self._highs_form = None

    @property
    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.A.toarray()
        return self._dense

    def pick(self, backend: str) -> str:
        if backend != "auto":
            return backend
        m, n = self.A.shape
        return "simplex" if m * (n + 2 * m) <= DENSE_LIMIT else "highs"

    def solve(self, lb=None, ub=None, backend: str = "auto") -> LpResult:
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        if np.any(lb > ub + FEAS_TOL):
            return LpResult("infeasible", backend=backend)
        which = self.pick(backend)
        if which == "simplex":
            res = simplex(self.c, self.dense, self.b, self.sense, lb, ub)
        elif which == "highs":
            if self._highs_form is None:
                self._highs_form = _HighsForm(self.A, self.b, self.sense)
            res = _highs(self.c, self.A, self.b, self.sense, lb, ub, self._highs_form)
        else:
            raise ValueError(f"unknown LP backend {backend!r}")
        res.backend = which
        return res


def solve_lp(model: MilpModel, backend: str = "auto") -> LpResult:
    """Solve the continuous relaxation of ``model`` (integrality ignored)."""
    return _LpData(model).solve(backend=backend)


def simplex(c, A, b, sense, lb, ub, max_iter: int | None = None) -> LpResult:
    """Two-phase bounded primal simplex on a dense tableau.

    ``sense`` holds -1 / 0 / +1 for <=, =, >= rows. Duals follow the
    d(objective)/d(rhs) convention.
    """
    c = np.asarray(c, float)
    A = np.asarray(A, float).reshape(len(b), len(c))
    b = np.asarray(b, float)
    sense = np.asarray(sense, int)
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    m, n = A.shape

    # substitute every column so it lives on [0, cap]
    src, sign, cap = [], [], []
    shift = np.zeros(n)
    for j in range(n):
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            src.append(j), sign.append(1.0), cap.append(ub[j] - lb[j])
        elif np.isfinite(ub[j]):
            shift[j] = ub[j]
            src.append(j), sign.append(-1.0), cap.append(np.inf)
        else:
            src += [j, j]
            sign += [1.0, -1.0]
            cap += [np.inf, np.inf]
    src = np.array(src, dtype=int)
    sign = np.array(sign)
    rhs = b - A @ shift
    slack_rows = np.flatnonzero(sense != 0)
    nx, ns = len(src), len(slack_rows)
    N = nx + ns + m
    T = np.zeros((m, N))
    T[:, :nx] = A[:, src] * sign
    T[slack_rows, nx + np.arange(ns)] = np.where(sense[slack_rows] < 0, 1.0, -1.0)
    rowsign = np.where(rhs < 0, -1.0, 1.0)
    T[:, :nx + ns] *= rowsign[:, None]
    rhs = rhs * rowsign
    T[:, nx + ns:] = np.eye(m)
    body = T.copy()

    upper = np.concatenate([cap, np.full(ns + m, np.inf)])
    arts = np.arange(nx + ns, N)
    basis = arts.copy()
    at_upper = np.zeros(N, dtype=bool)
    xB = rhs.copy()
    allowed = np.ones(N, dtype=bool)
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000

    cost1 = np.zeros(N)
    cost1[arts] = 1.0
    state = _Tableau(T, xB, basis, at_upper, upper)
    status, it1 = state.run(cost1, allowed, max_iter)
    if status != "optimal":
        return LpResult("numerical", iterations=it1)
    state.refresh(body, rhs)
    infeas = float(np.sum(state.values()[arts]))
    if infeas > FEAS_TOL * max(1.0, np.abs(rhs).max(initial=0.0)):
        return LpResult("infeasible", iterations=it1)

    upper[arts] = 0.0
    allowed[arts] = False
    cost2 = np.zeros(N)
    cost2[:nx] = c[src] * sign
    status, it2 = state.run(cost2, allowed, max_iter)
    iters = it1 + it2
    if status == "unbounded":
        return LpResult("unbounded", iterations=iters)
    if status != "optimal":
        return LpResult("numerical", iterations=iters)
    state.refresh(body, rhs)
    vals = state.values()
    x = shift.copy()
    np.add.at(x, src, sign * vals[:nx])
    d = cost2 - cost2[state.basis] @ state.T
    duals = -d[arts] * rowsign
    res = LpResult("optimal", float(c @ x), x, duals, iters)
    if not _certify(res, c, A, b, sense, lb, ub):
        return LpResult("numerical", iterations=iters)
    return res


class _Tableau:
    def __init__(self, T, xB, basis, at_upper, upper):
        self.T, self.xB, self.basis, self.at_upper, self.upper = T, xB, basis, at_upper, upper

    def values(self) -> np.ndarray:
        v = np.where(self.at_upper, self.upper, 0.0)
        v[self.basis] = self.xB
        return v

    def refresh(self, body, rhs):
        # recompute basic values from the original columns to shed drift
        fixed = np.where(self.at_upper, self.upper, 0.0)
        fixed[self.basis] = 0.0
        if not len(self.basis):
            return
        B = body[:, self.basis]
        try:
            self.xB = np.linalg.solve(B, rhs - body @ fixed)
        except np.linalg.LinAlgError:
            pass

    def run(self, cost, allowed, max_iter):
        T, upper = self.T, self.upper
        m = T.shape[0]
        d = cost - cost[self.basis] @ T
        in_basis = np.zeros(T.shape[1], dtype=bool)
        in_basis[self.basis] = True
        bland = False
        stalls = 0
        for it in range(max_iter):
            score = np.where(self.at_upper, d, -d)
            score[~allowed | in_basis] = 0.0
            if bland:
                cand = np.flatnonzero(score > _DUAL_TOL)
                if cand.size == 0:
                    return "optimal", it
                j = int(cand[0])
            else:
                j = int(np.argmax(score))
                if score[j] <= _DUAL_TOL:
                    return "optimal", it
            direction = -1.0 if self.at_upper[j] else 1.0
            alpha = T[:, j] * direction
            theta = upper[j]
            ratios = np.full(m, np.inf)
            dec = alpha > _PIVOT_TOL
            ratios[dec] = np.maximum(self.xB[dec], 0.0) / alpha[dec]
            ub_b = upper[self.basis]
            inc = (alpha < -_PIVOT_TOL) & np.isfinite(ub_b)
            ratios[inc] = np.maximum(ub_b[inc] - self.xB[inc], 0.0) / -alpha[inc]
            best = ratios.min() if m else np.inf
            if not np.isfinite(theta) and not np.isfinite(best):
                return "unbounded", it
            if theta <= best:
                # entering variable reaches its opposite bound first
                self.xB -= theta * alpha
                self.at_upper[j] = not self.at_upper[j]
                stalls = 0
                bland = False
                continue
            ties = np.flatnonzero(ratios <= best + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            theta = ratios[r]
            if theta <= 1e-12:
                stalls += 1
                if stalls > 50:
                    bland = True
            else:
                stalls = 0
                bland = False
            leave = self.basis[r]
            self.at_upper[leave] = alpha[r] < 0
            self.xB -= theta * alpha
            self.xB[r] = (upper[j] - theta) if self.at_upper[j] else theta
            self.at_upper[j] = False
            piv = T[r, j]
            T[r] /= piv
            col = T[:, j].copy()
            col[r] = 0.0
            T -= np.outer(col, T[r])
            d -= d[j] * T[r]
            in_basis[leave] = False
            in_basis[j] = True
            self.basis[r] = j
        return "iteration-limit", max_iter


def _certify(res: LpResult, c, A, b, sense, lb, ub) -> bool:
    """Primal feasibility and complementary slackness of an LP answer."""
    x, y = res.x, res.duals
    scale = max(1.0, np.abs(b).max(initial=0.0), np.abs(x).max(initial=0.0))
    lhs = A @ x
    gap = lhs - b
    tol = 1e-6 * scale
    if np.any(x < lb - tol) or np.any(x > ub + tol):
        return False
    if np.any(gap[sense < 0] > tol) or np.any(gap[sense > 0] < -tol) or np.any(np.abs(gap[sense == 0]) > tol):
        return False
    # dual objective must match the primal one
    return abs(dual_objective(c, A, b, lb, ub, y) - res.objective) <= 1e-6 * max(1.0, abs(res.objective))


def dual_objective(c, A, b, lb, ub, y) -> float:
    """Lagrangian dual value for row duals ``y`` (bound multipliers implied)."""
    d = np.asarray(c, float) - A.T @ y
    total = float(np.dot(b, y))
    for dj, lo, hi in zip(d, lb, ub):
        if dj > _DUAL_TOL:
            total += dj * lo if np.isfinite(lo) else -np.inf
        elif dj < -_DUAL_TOL:
            total += dj * hi if np.isfinite(hi) else -np.inf
    return total


class _HighsForm:
    """Rows split into ``A_ub x <= b_ub`` and ``A_eq x = b_eq`` once per model."""

    def __init__(self, A, b, sense):
        A = sparse.csr_matrix(A)
        le = np.flatnonzero(sense < 0)
        ge = np.flatnonzero(sense > 0)
        self.m = len(b)
        self.eq = np.flatnonzero(sense == 0)
        self.ineq = np.concatenate([le, ge])
        self.sign = np.concatenate([np.ones(le.size), -np.ones(ge.size)])
        self.A_ub = sparse.diags(self.sign) @ A[self.ineq] if self.ineq.size else None
        self.b_ub = self.sign * b[self.ineq] if self.ineq.size else None
        self.A_eq = A[self.eq] if self.eq.size else None
        self.b_eq = b[self.eq] if self.eq.size else None


def _highs(c, A, b, sense, lb, ub, form: _HighsForm | None = None) -> LpResult:
    form = form or _HighsForm(A, b, sense)
    ineq, sign, eq = form.ineq, form.sign, form.eq
    A_ub, b_ub, A_eq, b_eq = form.A_ub, form.b_ub, form.A_eq, form.b_eq
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=np.column_stack([lb, ub]), method="highs")
    if res.status == 2:
        return LpResult("infeasible")
    if res.status == 3:
        return LpResult("unbounded")
    if res.status != 0:
        return LpResult("numerical")
    y = np.zeros(form.m)
    if ineq.size:
        y[ineq] = res.ineqlin.marginals * sign
    if eq.size:
        y[eq] = res.eqlin.marginals
    return LpResult("optimal", float(res.fun), np.asarray(res.x), y, int(res.nit))


def relative_gap(incumbent: float, bound: float) -> float:
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


def solve_milp(model: MilpModel, gap: float = 0.05, node_limit: int | None = None,
               time_limit: float | None = None, backend: str = "auto",
               heuristic_every: int = 10) -> MilpResult:
    """Best-bound branch and bound over the model's integer variables.

    Branches on the most fractional variable (ties: lowest index); a
    round-and-fix heuristic runs at the root and every ``heuristic_every``
    nodes. Stops once ``(incumbent - bound) / max(1, |incumbent|) <= gap``.
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    data = _LpData(model)
    ints = model.integer_indices()
    started = time.monotonic()
    trace = []

    def lp(lb, ub):
        return data.solve(lb, ub, backend)

    root = lp(data.lb, data.ub)
    nodes = 1
    if root.status == "infeasible":
        return MilpResult("infeasible", None, np.inf, np.inf, np.inf, nodes, trace)
    if root.status != "optimal":
        raise RuntimeError(f"root relaxation ended with status {root.status}")

    best_x, best_obj = None, np.inf
    heap: list = []
    counter = 0

    def consider(res):
        nonlocal best_x, best_obj
        if res.objective < best_obj - 1e-9:
            x = res.x.copy()
            x[ints] = np.round(x[ints])
            best_x, best_obj = x, res.objective

    def push(res, lb, ub):
        nonlocal counter
        frac = _fractional(res.x, ints)
        if frac is None:
            consider(res)
            return
        heapq.heappush(heap, (res.objective, counter, lb, ub, res.x, frac))
        counter += 1

    def heuristic(x, lb, ub):
        nonlocal nodes
        for rounder in (np.round, np.ceil):
            flb, fub = lb.copy(), ub.copy()
            vals = np.clip(rounder(x[ints] - INT_TOL), lb[ints], ub[ints])
            flb[ints] = vals
            fub[ints] = vals
            res = lp(flb, fub)
            nodes += 1
            if res.status == "optimal":
                consider(res)
                return

    push(root, data.lb.copy(), data.ub.copy())
    if heap:
        heuristic(root.x, data.lb, data.ub)
    bound = root.objective
    status = "optimal-within-gap"
    expanded = 0
    while heap:
        bound = heap[0][0]
        trace.append((nodes, best_obj, bound))
        if best_x is not None and relative_gap(best_obj, bound) <= gap:
            break
        if node_limit is not None and nodes >= node_limit:
            status = "time-limit"
            break
        if time_limit is not None and time.monotonic() - started > time_limit:
            status = "time-limit"
            break
        obj, _, lb, ub, x, j = heapq.heappop(heap)
        if obj >= best_obj - 1e-9:
            continue
        expanded += 1
        if heuristic_every and expanded % heuristic_every == 0:
            heuristic(x, lb, ub)
        v = x[j]
        for lo, hi in ((lb[j], np.floor(v)), (np.ceil(v), ub[j])):
            clb, cub = lb.copy(), ub.copy()
            clb[j], cub[j] = lo, hi
            res = lp(clb, cub)
            nodes += 1
            if res.status == "optimal" and res.objective < best_obj - 1e-9:
                push(res, clb, cub)
    else:
        bound = best_obj if best_x is not None else np.inf
    if heap:
        bound = min(bound, heap[0][0])
    if best_x is None:
        if status == "optimal-within-gap":
            return MilpResult("infeasible", None, np.inf, np.inf, np.inf, nodes, trace)
        return MilpResult(status, None, np.inf, bound, np.inf, nodes, trace)
    bound = min(bound, best_obj)
    trace.append((nodes, best_obj, bound))
    return MilpResult(status, best_x, best_obj, bound, relative_gap(best_obj, bound), nodes, trace)


def _fractional(x, ints):
    if ints.size == 0:
        return None
    f = np.abs(x[ints] - np.round(x[ints]))
    if f.max() <= INT_TOL:
        return None
    # most fractional: distance to 0.5 smallest, ties lowest index
    score = np.abs(x[ints] - np.floor(x[ints]) - 0.5)
    score[f <= INT_TOL] = np.inf
    return int(ints[int(np.argmin(score))])
