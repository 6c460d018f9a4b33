"""MPS export/import and plain-text solution dumps.

Records keep the classic fixed-field column layout (code in columns 2-3,
names from column 5 and 15, values right-aligned), but fields widen when a
name exceeds 8 characters, so readers should treat the file as free MPS
(whitespace separated). Numbers are written with ``repr`` and therefore
round-trip bit-exactly.

Naming: the objective row is ``COST``; variable and row names come from the
model unchanged.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import MilpModel

OBJ_ROW = "COST"
_SENSE_CODE = {"<=": "L", ">=": "G", "=": "E"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}


class MpsError(ValueError):
    pass


class SolutionError(ValueError):
    pass


def _num(v: float) -> str:
    return repr(float(v))


def _line(code: str, a: str, b: str = "", value: str = "") -> str:
    out = f" {code:<2} {a:<8}  {b:<8}"
    if value:
        out += f"  {value:>12}"
    return out.rstrip()


def write_mps(model: MilpModel, path) -> None:
    if any(c.name == OBJ_ROW for c in model.constraints):
        raise MpsError(f"row name {OBJ_ROW} is reserved for the objective")
    lines = [f"NAME          {model.name}", "ROWS", f" N  {OBJ_ROW}"]
    for con in model.constraints:
        lines.append(f" {_SENSE_CODE[con.sense]}  {con.name}")
    by_col: list[list[tuple[str, float]]] = [[] for _ in model.variables]
    for con in model.constraints:
        for j, w in con.coeffs:
            by_col[j].append((con.name, w))
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j, var in enumerate(model.variables):
        if var.is_integer != in_int:
            tag = "'INTORG'" if var.is_integer else "'INTEND'"
            lines.append(f"    MARKER{marker:<4}  'MARKER'                 {tag}")
            marker += 1
            in_int = var.is_integer
        entries = []
        cost = model.objective.get(j, 0.0)
        if cost != 0.0 or not by_col[j]:
            entries.append((OBJ_ROW, cost))
        entries += by_col[j]
        for row, w in entries:
            lines.append(_line("", var.name, row, _num(w)))
    if in_int:
        lines.append(f"    MARKER{marker:<4}  'MARKER'                 'INTEND'")
    lines.append("RHS")
    for con in model.constraints:
        if con.rhs != 0.0:
            lines.append(_line("", "RHS", con.name, _num(con.rhs)))
    lines.append("RANGES")
    lines.append("BOUNDS")
    for var in model.variables:
        lo, hi = var.lower, var.upper
        if var.is_integer and lo == 0.0 and hi == 1.0:
            lines.append(_line("BV", "BND", var.name))
            continue
        if lo == hi:
            lines.append(_line("FX", "BND", var.name, _num(lo)))
            continue
        if lo == -np.inf and hi == np.inf:
            lines.append(_line("FR", "BND", var.name))
            continue
        if lo == -np.inf:
            lines.append(_line("MI", "BND", var.name))
        elif lo != 0.0:
            lines.append(_line("LO", "BND", var.name, _num(lo)))
        if hi != np.inf:
            lines.append(_line("UP", "BND", var.name, _num(hi)))
        elif var.is_integer:
            lines.append(_line("PL", "BND", var.name))
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mps(path) -> MilpModel:
    """Parse an MPS file written by :func:`write_mps` (or any free-MPS file
    without RANGES entries)."""
    model = MilpModel()
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_name = None
    cols: dict[str, int] = {}
    col_entries: list[list[tuple[str, float]]] = []
    col_meta: list[list] = []  # name, lower, upper, integer
    rhs: dict[str, float] = {}
    integer = False
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0].upper()
            if section == "NAME":
                model.name = head[1] if len(head) > 1 else ""
            elif section == "ENDATA":
                break
            elif section not in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS"):
                raise MpsError(f"line {lineno}: unknown section {section}")
            continue
        tok = raw.split()
        try:
            if section == "ROWS":
                code, name = tok
                if code == "N":
                    if obj_name is None:
                        obj_name = name
                    continue
                row_sense[name] = _CODE_SENSE[code]
                row_order.append(name)
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1] == "'MARKER'":
                    integer = tok[2] == "'INTORG'"
                    continue
                name = tok[0]
                if name not in cols:
                    cols[name] = len(col_meta)
                    col_meta.append([name, 0.0, np.inf, integer])
                    col_entries.append([])
                for k in range(1, len(tok), 2):
                    col_entries[cols[name]].append((tok[k], float(tok[k + 1])))
            elif section == "RHS":
                for k in range(1, len(tok), 2):
                    rhs[tok[k]] = float(tok[k + 1])
            elif section == "RANGES":
                raise MpsError(f"line {lineno}: RANGES entries are not supported")
            elif section == "BOUNDS":
                code, name = tok[0], tok[2]
                meta = col_meta[cols[name]]
                value = float(tok[3]) if len(tok) > 3 else None
                if code == "UP":
                    meta[2] = value
                elif code == "LO":
                    meta[1] = value
                elif code == "FX":
                    meta[1] = meta[2] = value
                elif code == "MI":
                    meta[1] = -np.inf
                elif code == "PL":
                    meta[2] = np.inf
                elif code == "FR":
                    meta[1], meta[2] = -np.inf, np.inf
                elif code == "BV":
                    meta[1], meta[2], meta[3] = 0.0, 1.0, True
                else:
                    raise MpsError(f"line {lineno}: unknown bound type {code}")
            else:
                raise MpsError(f"line {lineno}: data outside a section")
        except (ValueError, IndexError, KeyError) as exc:
            if isinstance(exc, MpsError):
                raise
            raise MpsError(f"line {lineno}: cannot parse {raw.strip()!r}") from None
    for name, lo, hi, is_int in col_meta:
        model.add_var(name, lo, hi, is_int)
    per_row: dict[str, list[tuple[int, float]]] = {r: [] for r in row_order}
    for j, entries in enumerate(col_entries):
        for row, w in entries:
            if row == obj_name:
                model.add_cost(j, w)
            elif row in per_row:
                per_row[row].append((j, w))
            else:
                raise MpsError(f"column {col_meta[j][0]} references unknown row {row}")
    for name in row_order:
        model.add_constraint(per_row[name], row_sense[name], rhs.get(name, 0.0), name=name)
    return model


def write_solution(model: MilpModel, x, path) -> None:
    with open(path, "w") as fh:
        for var, v in zip(model.variables, np.asarray(x, dtype=float)):
            fh.write(f"{var.name} {_num(v)}\n")


def read_solution(path, model: MilpModel | None = None) -> dict[str, float]:
    """Read ``name value`` lines. With a model, names are checked against it:
    strays and duplicates are rejected and every variable must be present."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        tok = raw.split()
        if len(tok) != 2:
            raise SolutionError(f"line {lineno}: expected 'name value'")
        name, val = tok
        if name in values:
            raise SolutionError(f"line {lineno}: duplicate variable {name}")
        try:
            values[name] = float(val)
        except ValueError:
            raise SolutionError(f"line {lineno}: bad value {val!r}") from None
    if model is not None:
        known = model.var_index()
        stray = [n for n in values if n not in known]
        if stray:
            raise SolutionError(f"unknown variables: {', '.join(stray)}")
        for var in model.variables:
            if var.name not in values:
                raise SolutionError(f"missing variable {var.name}")
    return values


def assignment_vector(model: MilpModel, assignment: dict[str, float]) -> np.ndarray:
    x = np.empty(model.n_vars)
    for j, var in enumerate(model.variables):
        if var.name not in assignment:
            raise SolutionError(f"missing variable {var.name}")
        x[j] = assignment[var.name]
    return x
