"""Uniform interior grids on intervals and boxes, fields with exterior-zero
semantics, and the norms/seminorms used by the decay experiments.

The grid stores interior nodes only: the homogeneous exterior condition
(u = 0 outside the domain) is structural, never stored.  On an interval
(a, b) with N interior nodes the spacing is h = (b - a)/(N + 1) and node i
sits at a + (i + 1) h, so the boundary points a, b act as implicit zero
nodes one spacing away from the first/last interior node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "make_grid",
    "lp_norm",
    "h1_seminorm_sq",
    "gagliardo_seminorm_sq",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid of interior nodes on an interval or a 2D box."""

    kind: str                       # "interval" | "box"
    endpoints: tuple                # ((a, b),) or ((a1, b1), (a2, b2))
    points_per_axis: tuple          # (N,) or (N1, N2)

    def __post_init__(self):
        if self.kind not in ("interval", "box"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        naxes = 1 if self.kind == "interval" else 2
        if len(self.endpoints) != naxes or len(self.points_per_axis) != naxes:
            raise ValueError(
                f"{self.kind} grid needs exactly {naxes} axis/axes, got "
                f"{len(self.endpoints)} endpoint pairs, {len(self.points_per_axis)} counts"
            )
        for (a, b), n in zip(self.endpoints, self.points_per_axis):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError("endpoints must be finite")
            if not a < b:
                raise ValueError(f"endpoints must satisfy a < b, got ({a}, {b})")
            if int(n) != n or n < 3:
                raise ValueError(f"points_per_axis must be an integer >= 3, got {n}")

    @property
    def ndim(self) -> int:
        return len(self.points_per_axis)

    @property
    def spacing(self) -> tuple:
        """Spacing per axis, h = (b - a)/(N + 1)."""
        return tuple(
            (b - a) / (n + 1) for (a, b), n in zip(self.endpoints, self.points_per_axis)
        )

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def node_count(self) -> int:
        return int(np.prod(self.points_per_axis))

    def axis_nodes(self, axis: int = 0) -> np.ndarray:
        """Interior node coordinates along one axis."""
        (a, b) = self.endpoints[axis]
        n = self.points_per_axis[axis]
        h = self.spacing[axis]
        return a + h * np.arange(1, n + 1)

    @property
    def shape(self) -> tuple:
        return tuple(self.points_per_axis)


@dataclass(frozen=True)
class Field:
    """Sampled solution values on the interior nodes of a grid.

    Values outside the domain are identically zero by construction; every
    operator in this package receives that zero-extension contract.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    scalar_kind: str = "real"       # "real" | "complex"

    def __post_init__(self):
        vals = np.asarray(self.values)
        if self.scalar_kind == "real":
            vals = vals.astype(float).reshape(-1)
        elif self.scalar_kind == "complex":
            vals = vals.astype(complex).reshape(-1)
        else:
            raise ValueError(f"unknown scalar kind {self.scalar_kind!r}")
        if vals.size != self.grid.node_count:
            raise ValueError(
                f"field has {vals.size} values but the grid has "
                f"{self.grid.node_count} interior nodes"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def is_complex(self) -> bool:
        return self.scalar_kind == "complex"

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.scalar_kind)

    def as_array2d(self) -> np.ndarray:
        """Box fields as an (N1, N2) array (row-major node ordering)."""
        if self.grid.kind != "box":
            raise ValueError("as_array2d is only defined for box grids")
        return self.values.reshape(self.grid.shape)


def make_grid(kind: str, endpoints, points_per_axis) -> Grid:
    """Build a uniform interior grid.

    ``endpoints`` is (a, b) for an interval or ((a1, b1), (a2, b2)) for a box;
    ``points_per_axis`` is N or (N1, N2) accordingly.
    """
    if kind == "interval":
        eps = (tuple(endpoints),)
        ns = (int(points_per_axis),)
    elif kind == "box":
        eps = tuple(tuple(e) for e in endpoints)
        ns = tuple(int(n) for n in points_per_axis)
    else:
        raise ValueError(f"unknown grid kind {kind!r}")
    return Grid(kind, eps, ns)


def zero_field(grid: Grid, scalar_kind: str = "real") -> Field:
    dtype = complex if scalar_kind == "complex" else float
    return Field(grid, np.zeros(grid.node_count, dtype=dtype), scalar_kind)


def lp_norm(fld: Field, ell: float) -> float:
    """L^ell norm by midpoint quadrature: (sum |u_i|^ell h^n)^(1/ell)."""
    if not ell >= 1:
        raise ValueError(f"norm exponent must satisfy ell >= 1, got {ell}")
    if not math.isfinite(ell):
        raise ValueError("norm exponent must be finite")
    vals = np.abs(fld.values)
    if not np.all(np.isfinite(vals)):
        raise ValueError("field values contain NaN or infinity")
    return float((np.sum(vals**ell) * fld.grid.cell_volume) ** (1.0 / ell))


def _forward_diffs(values: np.ndarray, h: float) -> np.ndarray:
    """Difference quotients on the N+1 faces of an interval grid, with zero
    ghost values at both boundary points."""
    padded = np.concatenate(([0.0], values, [0.0]))
    return np.diff(padded) / h


def h1_seminorm_sq(fld: Field) -> float:
    """Squared H^1 seminorm: sum of squared forward difference quotients
    (zero boundary ghosts) times h.  Interval grids, real fields only."""
    if fld.is_complex:
        raise ValueError("h1_seminorm_sq is defined for real fields only")
    if fld.grid.kind != "interval":
        raise ValueError("h1_seminorm_sq is restricted to interval grids")
    h = fld.grid.spacing[0]
    d = _forward_diffs(fld.values, h)
    return float(np.sum(d * d) * h)


def gagliardo_seminorm_sq(fld: Field, s: float) -> float:
    """Squared Gagliardo seminorm of order s on an interval.

    Double sum over node pairs with the kernel |x - y|^(-1-2s) (midpoint
    quadrature, the singular diagonal cells omitted) plus the exact
    exterior-interaction tail, where the zero extension makes the integrand
    u(x)^2 against the closed-form kernel tail; the factor 2 accounts for
    both orderings of (interior, exterior).
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0,1), got {s}")
    if fld.is_complex:
        raise ValueError("gagliardo_seminorm_sq is defined for real fields only")
    if fld.grid.kind != "interval":
        raise ValueError("gagliardo_seminorm_sq is restricted to interval grids")
    u = fld.values
    x = fld.grid.axis_nodes()
    h = fld.grid.spacing[0]
    (a, b) = fld.grid.endpoints[0]
    dx = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dx, 1.0)  # masked below
    diff = u[:, None] - u[None, :]
    kern = dx ** (-1.0 - 2.0 * s)
    np.fill_diagonal(kern, 0.0)
    interior = float(np.sum(diff * diff * kern) * h * h)
    tail = ((x - a) ** (-2.0 * s) + (b - x) ** (-2.0 * s)) / (2.0 * s)
    exterior = float(2.0 * h * np.sum(u * u * tail))
    return interior + exterior
