"""Grids, sampled signals, discrete norms and linear forward operators.

All signal-space norms carry the quadrature weight ``h`` so that they
approximate the continuum :math:`L_q(a, b)` norms independently of the
resolution.  Data-space noise levels and discrepancies are measured with
:func:`data_norm`, the plain Euclidean norm of the sample vector.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

__all__ = [
    "Grid",
    "Signal",
    "LinearOperator",
    "IntegrationOperator",
    "make_grid",
    "weighted_norm",
    "weighted_inner",
    "data_norm",
    "integration_operator",
    "matrix_operator",
    "apply",
    "apply_adjoint",
    "format_float",
    "write_signal_csv",
    "read_signal_csv",
]

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Grid:
    """Midpoint discretization of ``[a, b]`` into ``n`` cells."""

    n: int
    a: float
    b: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"grid needs n >= 1 samples, got {self.n}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or self.a >= self.b:
            raise ValueError(f"grid needs a < b, got a={self.a}, b={self.b}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.a + (np.arange(self.n) + 0.5) * self.h
        x.flags.writeable = False
        return x

    def same_as(self, other: "Grid") -> bool:
        return (
            self.n == other.n
            and math.isclose(self.a, other.a, rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(self.b, other.b, rel_tol=1e-12, abs_tol=1e-12)
        )


def make_grid(n: int, a: float = 0.0, b: float = 1.0) -> Grid:
    """Return the midpoint grid ``x_i = a + (i - 1/2) h`` with ``h = (b - a)/n``."""
    return Grid(int(n), float(a), float(b))


def _check_same_grid(g1: Grid, g2: Grid) -> None:
    if not g1.same_as(g2):
        raise ValueError(f"grid mismatch: {g1} vs {g2}")


@dataclass(frozen=True, eq=False)
class Signal:
    """Real samples of a function on a :class:`Grid`.  Immutable."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.size != self.grid.n:
            raise ValueError(f"signal has {v.size} values but grid has n={self.grid.n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("signal values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "Signal":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Signal":
        return cls(grid, func(grid.nodes))

    def with_values(self, values) -> "Signal":
        return Signal(self.grid, values)

    def _other_values(self, other):
        if isinstance(other, Signal):
            _check_same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other_values(other))

    def __rsub__(self, other):
        return self.with_values(self._other_values(other) - self.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def __len__(self):
        return self.grid.n


def weighted_norm(u: Signal, q: float = 2.0) -> float:
    """Discrete :math:`L_q` norm ``(h * sum |u_i|^q)^(1/q)`` for ``q`` in [1, 2]."""
    if not 1.0 <= q <= 2.0:
        raise ValueError(f"q must lie in [1, 2], got {q}")
    return float((u.grid.h * np.sum(np.abs(u.values) ** q)) ** (1.0 / q))


def weighted_inner(u: Signal, w: Signal) -> float:
    """``h * sum u_i w_i``, the inner product matching :func:`weighted_norm`."""
    _check_same_grid(u.grid, w.grid)
    return float(u.grid.h * np.dot(u.values, w.values))


def data_norm(v: Union[Signal, np.ndarray]) -> float:
    """Euclidean norm of a data vector; the scale in which noise levels are given."""
    values = v.values if isinstance(v, Signal) else np.asarray(v, dtype=float)
    return float(np.linalg.norm(values))


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Dense matrix acting from ``domain_grid`` to ``range_grid``."""

    matrix: np.ndarray
    domain_grid: Grid
    range_grid: Grid

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        if m.shape != (self.range_grid.n, self.domain_grid.n):
            raise ValueError(
                f"matrix shape {m.shape} does not match grids "
                f"({self.range_grid.n}, {self.domain_grid.n})"
            )
        if not np.all(np.isfinite(m)):
            raise ValueError("operator entries must be finite")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.matrix.T @ y

    @cached_property
    def norm(self) -> float:
        """Spectral norm of the matrix."""
        return float(np.linalg.norm(self.matrix, 2))


class IntegrationOperator(LinearOperator):
    """Midpoint discretization of ``u -> int_a^x u(s) ds``.

    The matrix is ``h`` below the diagonal and ``h/2`` on it.  Products are
    evaluated with cumulative sums, which is O(n) instead of O(n^2).
    """

    def matvec(self, x: np.ndarray) -> np.ndarray:
        h = self.domain_grid.h
        return h * (np.cumsum(x) - 0.5 * x)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        h = self.domain_grid.h
        return h * (np.cumsum(y[::-1])[::-1] - 0.5 * y)


def integration_operator(grid: Grid) -> IntegrationOperator:
    h = grid.h
    matrix = h * (np.tril(np.ones((grid.n, grid.n)), k=-1) + 0.5 * np.eye(grid.n))
    return IntegrationOperator(matrix, grid, grid)


def matrix_operator(matrix, domain_grid: Grid, range_grid: Optional[Grid] = None) -> LinearOperator:
    return LinearOperator(matrix, domain_grid, range_grid or domain_grid)


def apply(op: LinearOperator, u: Signal) -> Signal:
    _check_same_grid(op.domain_grid, u.grid)
    return Signal(op.range_grid, op.matvec(u.values))


def apply_adjoint(op: LinearOperator, v: Signal) -> Signal:
    _check_same_grid(op.range_grid, v.grid)
    return Signal(op.domain_grid, op.rmatvec(v.values))


def format_float(x: float) -> str:
    # 17 significant digits round-trip every double exactly
    return format(float(x), ".17g")


def write_signal_csv(path: PathLike, signal: Signal) -> None:
    with open(path, "w", newline="") as f:
        f.write("x,value\n")
        for x, v in zip(signal.grid.nodes, signal.values):
            f.write(f"{format_float(x)},{format_float(v)}\n")


def read_signal_csv(path: PathLike, grid: Optional[Grid] = None) -> Signal:
    """Read an ``x,value`` CSV.  Without ``grid`` the grid is inferred from x."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]][:2] != ["x", "value"]:
        raise ValueError(f"{path}: expected header 'x,value'")
    body = [r for r in rows[1:] if r]
    x = np.array([float(r[0]) for r in body])
    values = np.array([float(r[1]) for r in body])
    if grid is not None:
        if grid.n != x.size or not np.allclose(x, grid.nodes, rtol=1e-9, atol=1e-12):
            raise ValueError(f"{path}: x column does not match the given grid")
        return Signal(grid, values)
    if x.size < 2:
        raise ValueError(f"{path}: cannot infer spacing from fewer than 2 samples")
    dx = np.diff(x)
    h = float((x[-1] - x[0]) / (x.size - 1))
    if h <= 0 or np.max(np.abs(dx - h)) > 1e-9 * abs(h):
        raise ValueError(f"{path}: x column is not uniformly spaced")
    a = float(x[0] - 0.5 * h)
    inferred = Grid(int(x.size), a, a + x.size * h)
    return Signal(inferred, values)
