"""Generic sparse MILP container shared by the model builder and the solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

SENSES = ("<=", "=", ">=")


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0
    upper: float = np.inf
    is_integer: bool = False


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    family: str = ""
    where: str = ""


@dataclass
class MilpModel:
    """Minimisation model: objective, bounded variables, sparse linear rows."""

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)

    def add_var(self, name: str, lower: float = 0.0, upper: float = np.inf, integer: bool = False,
                cost: float = 0.0) -> int:
        if lower > upper:
            raise ValueError(f"variable {name}: lower bound above upper bound")
        self.variables.append(Variable(name, float(lower), float(upper), bool(integer)))
        j = len(self.variables) - 1
        if cost:
            self.objective[j] = self.objective.get(j, 0.0) + float(cost)
        return j

    def add_binary(self, name: str, cost: float = 0.0) -> int:
        return self.add_var(name, 0.0, 1.0, True, cost)

    def add_constraint(self, coeffs, sense: str, rhs: float, name: str = "", family: str = "",
                       where: str = "") -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        merged: dict[int, float] = {}
        for j, w in coeffs:
            if not 0 <= j < len(self.variables):
                raise IndexError(f"constraint {name}: unknown variable index {j}")
            merged[j] = merged.get(j, 0.0) + float(w)
        terms = tuple((j, w) for j, w in merged.items() if w != 0.0)
        name = name or f"r{len(self.constraints)}"
        self.constraints.append(Constraint(name, terms, sense, float(rhs), family, where))
        return len(self.constraints) - 1

    def add_cost(self, j: int, weight: float) -> None:
        if weight:
            self.objective[j] = self.objective.get(j, 0.0) + float(weight)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    def integer_indices(self) -> np.ndarray:
        return np.array([j for j, v in enumerate(self.variables) if v.is_integer], dtype=int)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)
        return lb, ub

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, w in self.objective.items():
            c[j] = w
        return c

    def matrix(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, con in enumerate(self.constraints):
            for j, w in con.coeffs:
                rows.append(i)
                cols.append(j)
                vals.append(w)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_vars))

    def rhs(self) -> np.ndarray:
        return np.array([c.rhs for c in self.constraints], dtype=float)

    def senses(self) -> list[str]:
        return [c.sense for c in self.constraints]

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(sum(w * x[j] for j, w in self.objective.items()))

    def violations(self, x) -> np.ndarray:
        """Per-row violation (>= 0) of the linear constraints at ``x``."""
        x = np.asarray(x, dtype=float)
        if not self.constraints:
            return np.zeros(0)
        lhs = self.matrix() @ x
        b = self.rhs()
        out = np.zeros(self.n_rows)
        for i, s in enumerate(self.senses()):
            if s == "<=":
                out[i] = max(0.0, lhs[i] - b[i])
            elif s == ">=":
                out[i] = max(0.0, b[i] - lhs[i])
            else:
                out[i] = abs(lhs[i] - b[i])
        return out

    def var_index(self) -> dict[str, int]:
        return {v.name: j for j, v in enumerate(self.variables)}
