"""The epsilon-insensitive modulus and the tolerance penalty built on it.

For a tolerance ``eps >= 0`` the modulus is ``d_eps(x) = max(|x| - eps, 0)``
applied componentwise, and the penalty around a reference ``u*`` is

    R(u) = h * sum_i d_{eps_i}(u_i - u*_i) ** q,   1 <= q <= 2,

which vanishes exactly on the tube ``|u - u*| <= eps``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .core import Grid, Signal, _check_same_grid, format_float

__all__ = [
    "ToleranceProfile",
    "PenaltySpec",
    "Subgradient",
    "as_tolerance",
    "eps_modulus",
    "eps_measure",
    "penalty_value",
    "penalty_subgradient",
    "bregman_distance",
    "write_tolerance_csv",
    "read_tolerance_csv",
]

ZERO_AT_KINK = "zero-at-kink"


def _check_q(q: float) -> float:
    q = float(q)
    if not 1.0 <= q <= 2.0:
        raise ValueError(f"q must lie in [1, 2], got {q}")
    return q


@dataclass(frozen=True, eq=False)
class ToleranceProfile:
    """Scalar or per-sample tolerance, all entries finite and >= 0."""

    values: Union[float, np.ndarray]

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim > 1:
            raise ValueError("tolerance must be a scalar or a 1-d vector")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("tolerance entries must be finite and non-negative")
        if v.ndim == 0:
            object.__setattr__(self, "values", float(v))
        else:
            v.flags.writeable = False
            object.__setattr__(self, "values", v)

    @property
    def is_scalar(self) -> bool:
        return isinstance(self.values, float)

    def array(self, n: int) -> np.ndarray:
        if self.is_scalar:
            return np.full(n, self.values)
        if self.values.size != n:
            raise ValueError(f"tolerance has {self.values.size} entries, expected {n}")
        return self.values


def as_tolerance(eps) -> ToleranceProfile:
    if isinstance(eps, ToleranceProfile):
        return eps
    if isinstance(eps, Signal):
        return ToleranceProfile(eps.values)
    return ToleranceProfile(eps)


def _eps_for(eps, n: int):
    tol = as_tolerance(eps)
    if not tol.is_scalar and tol.values.size != n:
        raise ValueError(f"tolerance has {tol.values.size} entries, signal has {n}")
    return tol.values


@dataclass(frozen=True, eq=False)
class PenaltySpec:
    """Exponent, reference solution and tolerance of the penalty."""

    q: float
    reference: Signal
    tolerance: ToleranceProfile

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))
        object.__setattr__(self, "tolerance", as_tolerance(self.tolerance))
        _eps_for(self.tolerance, self.reference.grid.n)

    @property
    def grid(self) -> Grid:
        return self.reference.grid

    def with_tolerance(self, eps) -> "PenaltySpec":
        return PenaltySpec(self.q, self.reference, as_tolerance(eps))


@dataclass(frozen=True)
class Subgradient:
    """One element of the subdifferential together with the rule that picked it."""

    element: Signal
    selection_rule: str = ZERO_AT_KINK


def _modulus(w: np.ndarray, eps) -> np.ndarray:
    return np.maximum(np.abs(w) - eps, 0.0)


def _penalty_terms(w: np.ndarray, eps, q: float, h: float):
    """Penalty value and the h-weighted subgradient selection at ``w = u - u*``."""
    d = _modulus(w, eps)
    if q == 1.0:
        value = h * np.sum(d)
        # zero on |w| <= eps, including the kinks
        grad = h * np.sign(w) * (d > 0)
    elif q == 2.0:
        value = h * np.dot(d, d)
        grad = 2.0 * h * np.sign(w) * d
    else:
        value = h * np.sum(d**q)
        grad = q * h * np.sign(w) * d ** (q - 1.0)
    return float(value), grad


def eps_modulus(x: Signal, eps) -> Signal:
    """Componentwise ``max(|x_i| - eps_i, 0)``."""
    return x.with_values(_modulus(x.values, _eps_for(eps, x.grid.n)))


def eps_measure(u: Signal, q: float, eps) -> float:
    """The epsilon-insensitive measure ``(h * sum d_eps(u_i)^q)^(1/q)``.

    Not a norm: it is zero on the whole band ``|u| <= eps``.
    """
    q = _check_q(q)
    d = _modulus(u.values, _eps_for(eps, u.grid.n))
    return float((u.grid.h * np.sum(d**q)) ** (1.0 / q))


def penalty_value(u: Signal, spec: PenaltySpec) -> float:
    _check_same_grid(u.grid, spec.grid)
    w = u.values - spec.reference.values
    value, _ = _penalty_terms(w, spec.tolerance.values, spec.q, u.grid.h)
    return value


def penalty_subgradient(u: Signal, spec: PenaltySpec) -> Subgradient:
    """A measurable selection from the subdifferential of the penalty at ``u``.

    Componentwise, with ``w = u - u*``: ``q * h * sign(w) * d_eps(w)^(q-1)``
    outside the tube and 0 inside.  For q = 1 the interval-valued cases at
    ``|w| = eps`` resolve to 0.
    """
    _check_same_grid(u.grid, spec.grid)
    w = u.values - spec.reference.values
    _, grad = _penalty_terms(w, spec.tolerance.values, spec.q, u.grid.h)
    return Subgradient(u.with_values(grad), ZERO_AT_KINK)


def bregman_distance(u_test: Signal, u_base: Signal, spec: PenaltySpec, xi: Subgradient) -> float:
    """``R(u_test) - R(u_base) - <xi, u_test - u_base>`` for the given selection.

    ``xi.element`` is a Euclidean subgradient of the discrete (h-weighted)
    penalty, so the pairing is the plain dot product.
    """
    _check_same_grid(u_test.grid, u_base.grid)
    _check_same_grid(u_test.grid, xi.element.grid)
    pairing = float(np.dot(xi.element.values, u_test.values - u_base.values))
    return penalty_value(u_test, spec) - penalty_value(u_base, spec) - pairing


def write_tolerance_csv(path, grid: Grid, eps) -> None:
    values = as_tolerance(eps).array(grid.n)
    with open(path, "w", newline="") as f:
        f.write("x,eps\n")
        for x, e in zip(grid.nodes, values):
            f.write(f"{format_float(x)},{format_float(e)}\n")


def read_tolerance_csv(path, grid: Grid) -> ToleranceProfile:
    """Read a per-sample tolerance column aligned with ``grid``."""
    with open(Path(path), newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    header = [c.strip() for c in rows[0]]
    col = header.index("eps") if "eps" in header else len(header) - 1
    values = np.array([float(r[col]) for r in rows[1:]])
    if values.size != grid.n:
        raise ValueError(f"{path}: {values.size} tolerance entries for a grid of {grid.n}")
    return ToleranceProfile(values)

