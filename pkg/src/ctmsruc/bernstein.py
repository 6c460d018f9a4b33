"""Bernstein-basis polynomial algebra on the unit interval.

Every hour of a load or generation trajectory is a :class:`ControlPoly`;
a day is a :class:`Spline` of consecutive hours whose adjacent pieces agree
up to ``depth`` endpoint conditions (value, first difference, ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np


class FitError(ValueError):
    """Raised when a constrained spline fit has no unique solution."""


@dataclass(frozen=True)
class ControlPoly:
    """Degree-n polynomial stored by its n+1 Bernstein control points."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            raise ValueError("a ControlPoly needs at least one control point")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, x):
        return evaluate(self, x)

    def __eq__(self, other):
        if not isinstance(other, ControlPoly):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def tolist(self) -> list[float]:
        return self.coeffs.tolist()


@dataclass(frozen=True)
class Spline:
    """A day as consecutive one-hour pieces.

    ``depth`` counts matched endpoint conditions at each interior knot:
    0 leaves pieces independent, 1 matches values (C0), 2 also matches the
    first finite difference (C1).
    """

    hours: tuple[ControlPoly, ...]
    depth: int = 0
    residual: float = field(default=0.0, compare=False)

    def __post_init__(self):
        hours = tuple(h if isinstance(h, ControlPoly) else ControlPoly(h) for h in self.hours)
        if not hours:
            raise ValueError("a Spline needs at least one hour")
        degrees = {h.degree for h in hours}
        if len(degrees) != 1:
            raise ValueError(f"mixed degrees in spline: {sorted(degrees)}")
        if self.depth < 0 or self.depth > hours[0].degree + 1:
            raise ValueError(f"continuity depth {self.depth} out of range for degree {hours[0].degree}")
        object.__setattr__(self, "hours", hours)

    @property
    def degree(self) -> int:
        return self.hours[0].degree

    @property
    def n_hours(self) -> int:
        return len(self.hours)

    def coefficient_matrix(self) -> np.ndarray:
        """Coefficients as an (H, n+1) array."""
        return np.vstack([h.coeffs for h in self.hours])

    @classmethod
    def from_matrix(cls, matrix, depth: int = 0, residual: float = 0.0) -> "Spline":
        return cls(tuple(ControlPoly(row) for row in np.asarray(matrix, dtype=float)), depth, residual)

    def __call__(self, t):
        """Evaluate at absolute time ``t`` in hours from the start of the day."""
        t = np.asarray(t, dtype=float)
        h = np.clip(np.floor(t).astype(int), 0, self.n_hours - 1)
        u = t - h
        out = np.empty_like(t)
        for k in np.unique(h):
            mask = h == k
            out[mask] = evaluate(self.hours[k], u[mask])
        return out if out.ndim else float(out)


def basis_eval(k: int, n: int, x: float) -> float:
    """Value of the k-th Bernstein basis polynomial of degree n at x."""
    if n < 0 or not 0 <= k <= n:
        raise ValueError(f"basis index k={k} outside [0, {n}]")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    return comb(n, k) * x**k * (1.0 - x) ** (n - k)


def basis_matrix(n: int, x) -> np.ndarray:
    """All n+1 basis values at each abscissa, shape (len(x), n+1)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(n + 1)
    binom = np.array([comb(n, i) for i in k], dtype=float)
    return binom * x[:, None] ** k * (1.0 - x[:, None]) ** (n - k)


def evaluate(p: ControlPoly, x):
    """Evaluate ``p`` at ``x`` in [0, 1] by de Casteljau's recurrence.

    Accepts a scalar or an array; returns the same shape.
    """
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0.0) or np.any(xs > 1.0) or np.any(np.isnan(xs)):
        raise ValueError("evaluation point outside [0, 1]")
    flat = xs.reshape(-1)
    beta = np.repeat(p.coeffs[None, :], flat.size, axis=0)
    t = flat[:, None]
    for r in range(p.degree):
        beta = (1.0 - t) * beta[:, :-1] + t * beta[:, 1:]
    out = beta[:, 0].reshape(xs.shape)
    return float(out) if out.ndim == 0 else out


def derivative(p: ControlPoly) -> ControlPoly:
    """Control points of dp/dx: n times the forward differences."""
    n = p.degree
    if n < 1:
        raise ValueError("cannot differentiate a degree-0 polynomial")
    return ControlPoly(n * np.diff(p.coeffs))


def difference_matrix(n: int) -> np.ndarray:
    """The (n+1) x n bidiagonal operator M with ``derivative = n * M.T @ coeffs``."""
    m = np.zeros((n + 1, n))
    idx = np.arange(n)
    m[idx, idx] = -1.0
    m[idx + 1, idx] = 1.0
    return m


def integral(p: ControlPoly, interval_length: float = 1.0) -> float:
    """Integral over an interval of the given length (hours)."""
    if interval_length <= 0:
        raise ValueError("interval_length must be positive")
    return interval_length * float(np.sum(p.coeffs)) / (p.degree + 1)


def hull_bounds(p: ControlPoly) -> tuple[float, float]:
    return float(p.coeffs.min()), float(p.coeffs.max())


def leading_differences(coeffs, depth: int) -> np.ndarray:
    """Forward differences of order 0..depth-1 at the start of a piece."""
    c = np.asarray(coeffs, dtype=float)
    return np.array([np.diff(c[: d + 1], d)[0] for d in range(depth)])


def trailing_differences(coeffs, depth: int) -> np.ndarray:
    """Forward differences of order 0..depth-1 at the end of a piece."""
    c = np.asarray(coeffs, dtype=float)
    n = c.size - 1
    return np.array([np.diff(c[n - d:], d)[0] for d in range(depth)])


def difference_weights(order: int) -> np.ndarray:
    """Weights w with ``sum(w[j] * c[j]) == d-th forward difference`` of c[0..d]."""
    return np.array([(-1) ** (order - j) * comb(order, j) for j in range(order + 1)], dtype=float)


def match_leading(child, parent, depth: int) -> np.ndarray:
    """Overwrite the first ``depth`` control points of ``child`` so that its
    leading differences equal the trailing differences of ``parent``."""
    c = np.array(child, dtype=float)
    target = trailing_differences(parent, depth)
    for d in range(depth):
        w = difference_weights(d)
        c[d] = (target[d] - np.dot(w[:-1], c[:d])) / w[-1]
    return c


def continuity_rows(n: int, depth: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairs (w_end, w_start) such that ``w_end @ left == w_start @ right``
    expresses each of the ``depth`` knot conditions between two pieces."""
    rows = []
    for d in range(depth):
        w = difference_weights(d)
        w_end = np.zeros(n + 1)
        w_end[n - d:] = w
        w_start = np.zeros(n + 1)
        w_start[: d + 1] = w
        rows.append((w_end, w_start))
    return rows


def fit_spline(samples: Sequence[Sequence[tuple[float, float]]], n: int, depth: int) -> Spline:
    """Least-squares spline through per-hour samples with knot continuity.

    ``samples[h]`` holds (fraction of hour, value) pairs for hour h. The whole
    day is solved at once so continuity is honoured at every interior knot.
    The RMS residual is stored on the returned spline.
    """
    if n < 0:
        raise ValueError("degree must be non-negative")
    if depth < 0 or depth > n:
        raise ValueError(f"continuity depth {depth} must lie in [0, {n}]")
    H = len(samples)
    if H == 0:
        raise ValueError("no hours to fit")
    width = n + 1
    blocks = []
    targets = []
    for h, hour in enumerate(samples):
        arr = np.asarray(hour, dtype=float).reshape(-1, 2)
        if arr.shape[0] < width:
            raise FitError(f"hour {h} has {arr.shape[0]} samples, need at least {width}")
        blocks.append(basis_matrix(n, arr[:, 0]))
        targets.append(arr[:, 1])
    rows = sum(b.shape[0] for b in blocks)
    A = np.zeros((rows, H * width))
    r = 0
    for h, b in enumerate(blocks):
        A[r:r + b.shape[0], h * width:(h + 1) * width] = b
        r += b.shape[0]
    y = np.concatenate(targets)

    C = np.zeros(((H - 1) * depth, H * width))
    k = 0
    for h in range(H - 1):
        for w_end, w_start in continuity_rows(n, depth):
            C[k, h * width:(h + 1) * width] = w_end
            C[k, (h + 1) * width:(h + 2) * width] = -w_start
            k += 1
    if C.shape[0]:
        _, s, vt = np.linalg.svd(C)
        rank = int(np.sum(s > 1e-12 * s[0]))
        basis = vt[rank:].T
    else:
        basis = np.eye(H * width)
    reduced = A @ basis
    z, _, rank, sv = np.linalg.lstsq(reduced, y, rcond=None)
    if rank < reduced.shape[1]:
        raise FitError("rank-deficient design: too few distinct sample times")
    coeffs = basis @ z
    resid = A @ coeffs - y
    rms = float(np.sqrt(np.mean(resid**2)))
    return Spline.from_matrix(coeffs.reshape(H, width), depth, rms)


def resample(s: Spline, step: float) -> list[tuple[float, float]]:
    """Evaluate a spline on a regular grid from t=0 to t=H inclusive."""
    if step <= 0:
        raise ValueError("step must be positive")
    H = s.n_hours
    count = int(np.floor(H / step + 1e-9))
    ts = np.arange(count + 1) * step
    out = []
    for t in ts:
        h = min(int(np.floor(t + 1e-12)), H - 1)
        u = min(max(t - h, 0.0), 1.0)
        out.append((float(t), evaluate(s.hours[h], u)))
    return out
