"""Generator fleets and net-load sample days."""

from __future__ import annotations

import csv
import json
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bernstein import Spline, fit_spline


class SchemaError(ValueError):
    """Invalid fleet document; the message starts with the offending field path."""


class LoadParseError(ValueError):
    pass


class DroppedDayWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Generator:
    name: str
    unit_type: str
    p_min: float
    p_max: float
    ramp_limit: float
    min_on: int
    min_off: int
    cost_startup: float
    cost_shutdown: float
    cost_commit: float
    cost_energy: float
    price_res_up: float
    price_res_down: float
    price_commit_option: float


# file key -> Generator attribute
FIELD_MAP = {
    "name": "name",
    "type": "unit_type",
    "p_min_mw": "p_min",
    "p_max_mw": "p_max",
    "ramp_mw_per_h": "ramp_limit",
    "min_on_h": "min_on",
    "min_off_h": "min_off",
    "cost_startup": "cost_startup",
    "cost_shutdown": "cost_shutdown",
    "cost_commit": "cost_commit",
    "cost_energy": "cost_energy",
    "price_res_up": "price_res_up",
    "price_res_down": "price_res_down",
    "price_commit_option": "price_commit_option",
}
_PRICES = ("cost_startup", "cost_shutdown", "cost_commit", "cost_energy",
           "price_res_up", "price_res_down", "price_commit_option")


@dataclass(frozen=True)
class Fleet:
    units: tuple[Generator, ...]

    def __post_init__(self):
        names = [g.name for g in self.units]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SchemaError(f"unit.name: duplicate names {sorted(dup)}")

    def __len__(self):
        return len(self.units)

    def __iter__(self):
        return iter(self.units)

    def __getitem__(self, i):
        return self.units[i]

    def by_name(self, name: str) -> Generator:
        for g in self.units:
            if g.name == name:
                return g
        raise KeyError(name)

    def subset(self, names) -> "Fleet":
        return Fleet(tuple(self.by_name(n) for n in names))

    @property
    def capacity(self) -> float:
        return sum(g.p_max for g in self.units)


def _validate(g: Generator, where: str) -> None:
    if g.p_min < 0:
        raise SchemaError(f"{where}.p_min_mw: must be >= 0, got {g.p_min}")
    if g.p_min > g.p_max:
        raise SchemaError(f"{where}.p_min_mw: exceeds p_max_mw ({g.p_min} > {g.p_max})")
    if g.ramp_limit <= 0:
        raise SchemaError(f"{where}.ramp_mw_per_h: must be > 0")
    if g.min_on < 1:
        raise SchemaError(f"{where}.min_on_h: must be >= 1")
    if g.min_off < 1:
        raise SchemaError(f"{where}.min_off_h: must be >= 1")
    for attr in _PRICES:
        if getattr(g, attr) < 0:
            raise SchemaError(f"{where}.{attr}: must be >= 0")


def fleet_from_dict(doc: dict) -> Fleet:
    rows = doc.get("unit")
    if not isinstance(rows, list) or not rows:
        raise SchemaError("unit: expected a non-empty array of unit tables")
    units = []
    for i, row in enumerate(rows):
        where = f"unit[{i}]"
        kwargs = {}
        for key, attr in FIELD_MAP.items():
            if key not in row:
                raise SchemaError(f"{where}.{key}: missing field")
            value = row[key]
            try:
                if attr in ("name", "unit_type"):
                    kwargs[attr] = str(value)
                elif attr in ("min_on", "min_off"):
                    if float(value) != int(value):
                        raise ValueError
                    kwargs[attr] = int(value)
                else:
                    kwargs[attr] = float(value)
            except (TypeError, ValueError):
                raise SchemaError(f"{where}.{key}: bad value {value!r}") from None
        count = row.get("count", 1)
        if not isinstance(count, int) or count < 1:
            raise SchemaError(f"{where}.count: must be a positive integer")
        base = Generator(**kwargs)
        _validate(base, where)
        if count == 1:
            units.append(base)
        else:
            for k in range(1, count + 1):
                units.append(Generator(**{**asdict(base), "name": f"{base.name}_{k}"}))
    return Fleet(tuple(units))


def fleet_to_dict(fleet: Fleet) -> dict:
    inverse = {v: k for k, v in FIELD_MAP.items()}
    rows = []
    for g in fleet:
        row = {}
        for f in fields(g):
            row[inverse[f.name]] = getattr(g, f.name)
        row["count"] = 1
        rows.append(row)
    return {"unit": rows}


def load_fleet(path) -> Fleet:
    """Read a fleet from a TOML (``[[unit]]`` tables) or JSON file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
    else:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise SchemaError(f"<document>: {exc}") from None
    return fleet_from_dict(doc)


def save_fleet(fleet: Fleet, path) -> None:
    path = Path(path)
    doc = fleet_to_dict(fleet)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(doc, indent=1))
    else:
        path.write_text(tomli_w.dumps(doc))


def reference_fleet_path() -> Path:
    return Path(str(resources.files("ctmsruc") / "data" / "rts96.toml"))


def reference_fleet() -> Fleet:
    """The bundled single-area RTS-96 fleet."""
    return load_fleet(reference_fleet_path())


@dataclass(frozen=True)
class SampleDay:
    id: str
    samples: np.ndarray  # (m, 2): minute offset, MW

    @property
    def minutes(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def values(self) -> np.ndarray:
        return self.samples[:, 1]

    def hourly(self, H: int) -> list[list[tuple[float, float]]]:
        """Samples grouped by hour as (fraction of hour, MW) pairs."""
        out = [[] for _ in range(H)]
        for m, v in self.samples:
            h = int(m // 60)
            if h < H:
                out[h].append(((m - 60 * h) / 60.0, float(v)))
        return out

    def fit(self, n: int, depth: int, H: int | None = None) -> Spline:
        H = H or int(np.ceil((self.minutes.max() + 1) / 60))
        return fit_spline(self.hourly(H), n, depth)


def load_sample_days(path, scale: float = 1.0, H: int = 24, resolution: int = 5) -> list[SampleDay]:
    """Parse a ``day_id,minute,mw`` CSV; MW values are divided by ``scale``.

    Days not covering every ``resolution`` minute slot of the H hours are
    dropped with a :class:`DroppedDayWarning`.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    raw: dict[str, dict[int, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["day_id", "minute", "mw"]:
            raise LoadParseError(f"line 1: expected header day_id,minute,mw, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise LoadParseError(f"line {lineno}: expected 3 fields, got {len(row)}")
            day, minute, mw = (c.strip() for c in row)
            try:
                m = int(minute)
                v = float(mw)
            except ValueError:
                raise LoadParseError(f"line {lineno}: cannot parse {row}") from None
            if not np.isfinite(v):
                raise LoadParseError(f"line {lineno}: non-finite load {mw}")
            slots = raw.setdefault(day, {})
            if m in slots:
                raise LoadParseError(f"line {lineno}: duplicate minute {m} for day {day}")
            slots[m] = v
    expected = list(range(0, H * 60, resolution))
    days = []
    for day, slots in raw.items():
        if sorted(slots) != expected:
            warnings.warn(f"day {day}: incomplete coverage, dropped", DroppedDayWarning, stacklevel=2)
            continue
        arr = np.array([[m, slots[m] / scale] for m in expected], dtype=float)
        days.append(SampleDay(day, arr))
    return days


def write_sample_days(days, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day_id", "minute", "mw"])
        for d in days:
            for m, v in d.samples:
                w.writerow([d.id, int(m), repr(float(v))])


def split_train_test(days, train_fraction: float = 0.7, seed: int = 0):
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    days = list(days)
    if len(days) < 2:
        raise ValueError("need at least two days to split")
    order = np.random.default_rng(seed).permutation(len(days))
    k = min(max(int(round(train_fraction * len(days))), 1), len(days) - 1)
    return [days[i] for i in order[:k]], [days[i] for i in order[k:]]


def synthetic_days(count: int, H: int = 24, start_hour: int = 0, seed: int = 0, base: float = 500.0,
                   swing: float = 120.0, duck: float = 150.0, ramp: float = 0.0, ramp_hour: float = 19.0,
                   ramp_width: float = 0.15, noise: float = 2.0, spread: float = 0.05,
                   resolution: int = 5) -> list[SampleDay]:
    """Desk-scale net-load days: diurnal sinusoid, midday solar dip, optional
    sharp evening ramp (logistic step of height ``ramp`` centred at
    ``ramp_hour``, width in hours), plus noise.

    ``spread`` scales day-to-day variation of each component; ``start_hour``
    selects which part of the clock day the H hours cover.
    """
    rng = np.random.default_rng(seed)
    minutes = np.arange(0, H * 60, resolution)
    clock = start_hour + minutes / 60.0
    days = []
    for d in range(count):
        a = 1 + spread * rng.normal(size=5)
        shift = 0.25 * spread * rng.normal(size=2) / 0.05
        diurnal = base * a[0] + swing * a[1] * np.sin(2 * np.pi * (clock - 9.0) / 24.0)
        dip = duck * a[2] * np.exp(-0.5 * ((clock - 13.0 - shift[0]) / 2.2) ** 2)
        step = ramp * a[3] / (1 + np.exp(-(clock - ramp_hour - 0.1 * shift[1]) / max(ramp_width, 1e-6)))
        vals = diurnal - dip + step + noise * rng.normal(size=minutes.size)
        days.append(SampleDay(f"d{d:03d}", np.column_stack([minutes, vals]).astype(float)))
    return days
