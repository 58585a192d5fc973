"""Discrete spatial diffusion operators on interior grids.

Every operator is returned with the dissipative sign convention: it is the
operator that enters the evolution equation with a plus sign, so divergence
forms are negated.  All nonlocal operators share one quadrature backbone:
piecewise-linear cellwise integration with exact cell moments, a local
quadratic model across the singular cell pair (the principal-value
cancellation handled analytically), and closed-form exterior tails coming
from the zero extension outside the domain.  The resulting pairwise weights
are symmetric, which makes the discrete dissipation pairing provably
nonnegative for the monotone nonlinearities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import hyp2f1, gammaln
from numpy.polynomial.legendre import leggauss

from .grids import Field, Grid, h1_seminorm_sq, gagliardo_seminorm_sq

__all__ = [
    "Laplacian",
    "BiLaplacian",
    "PLaplacianPorous",
    "MeanCurvature",
    "FractionalLaplacian",
    "FractionalPLaplacian",
    "Superposition",
    "AnisotropicFractional",
    "PorousMediaI",
    "PorousMediaII",
    "FractionalMeanCurvature",
    "Kirchhoff",
    "FractionalKirchhoff",
    "Magnetic",
    "FractionalMagnetic",
    "apply",
    "lagged_matrix",
    "is_linear",
    "diffusive_scale",
    "dissipation_pairing",
]

_EPS_DEGENERATE = 1e-10  # regularizes |r|^(p-2) and |u|^(m-1) below their exponents' validity


def _check_s(s: float, name: str = "s") -> None:
    if not 0.0 < s < 1.0:
        raise ValueError(f"{name} must lie in (0,1), got {s}")


def _check_p(p: float, name: str = "p") -> None:
    if not p > 1.0:
        raise ValueError(f"{name} must lie in (1,inf), got {p}")


# ---------------------------------------------------------------------------
# Operator specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Laplacian:
    pass


@dataclass(frozen=True)
class BiLaplacian:
    pass


@dataclass(frozen=True)
class PLaplacianPorous:
    """-div(|grad u^m|^(p-2) grad u^m) with the signed power u^m."""
    p: float
    m: float

    def __post_init__(self):
        _check_p(self.p)
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")


@dataclass(frozen=True)
class MeanCurvature:
    """-div(grad u / sqrt(1 + |grad u|^2))."""


@dataclass(frozen=True)
class FractionalLaplacian:
    s: float

    def __post_init__(self):
        _check_s(self.s)


@dataclass(frozen=True)
class FractionalPLaplacian:
    s: float
    p: float

    def __post_init__(self):
        _check_s(self.s)
        _check_p(self.p)


@dataclass(frozen=True)
class Superposition:
    """Sum of fractional p-Laplacians: terms are (beta_j, s_j, p_j)."""
    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ValueError("superposition needs at least one term")
        for beta, s, p in self.terms:
            if not beta > 0:
                raise ValueError(f"coefficients must be positive, got {beta}")
            _check_s(s)
            _check_p(p)

    @property
    def p_max(self) -> float:
        return max(p for _, _, p in self.terms)


@dataclass(frozen=True)
class AnisotropicFractional:
    """Sum of one-dimensional fractional second derivatives along the axes."""
    beta: tuple
    sigma: tuple

    def __post_init__(self):
        if len(self.beta) != 2 or len(self.sigma) != 2:
            raise ValueError("anisotropic operator needs exactly two axes")
        for b in self.beta:
            if not b > 0:
                raise ValueError(f"axis coefficients must be positive, got {b}")
        for sg in self.sigma:
            _check_s(sg, "sigma")


@dataclass(frozen=True)
class PorousMediaI:
    """(-Delta)^s applied to the signed power u^m."""
    s: float
    m: float

    def __post_init__(self):
        _check_s(self.s)
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")


@dataclass(frozen=True)
class PorousMediaII:
    """-div(u grad R[u]) with R the Riesz-type potential of order 2s.

    On an interval the displayed kernel |x-y|^(2s-1) is a decaying potential
    only for s < 1/2; larger s is rejected.
    """
    s: float

    def __post_init__(self):
        if not 0.0 < self.s < 0.5:
            raise ValueError(
                f"s must lie in (0, 1/2) on an interval: the potential kernel "
                f"exponent 2s-1 is nonnegative for s >= 1/2 (got s={self.s})"
            )


@dataclass(frozen=True)
class FractionalMeanCurvature:
    s: float

    def __post_init__(self):
        _check_s(self.s)


@dataclass(frozen=True)
class Kirchhoff:
    """-M(|grad u|_L2^2) Laplacian u with affine M(t) = m0 + m1 t."""
    m0: float
    m1: float

    def __post_init__(self):
        if self.m0 < 0 or self.m1 < 0 or self.m0 + self.m1 == 0:
            raise ValueError("Kirchhoff coefficient needs m0, m1 >= 0, m0 + m1 > 0")


@dataclass(frozen=True)
class FractionalKirchhoff:
    """M(Gagliardo seminorm squared) times the fractional Laplacian."""
    s: float
    m0: float
    m1: float

    def __post_init__(self):
        _check_s(self.s)
        if self.m0 < 0 or self.m1 < 0 or self.m0 + self.m1 == 0:
            raise ValueError("Kirchhoff coefficient needs m0, m1 >= 0, m0 + m1 > 0")


@dataclass(frozen=True)
class Magnetic:
    """-(d/dx - iA)^2 on complex fields; A tabulated on the interior nodes
    (a single float means a constant potential)."""
    potential: object = 0.0


@dataclass(frozen=True)
class FractionalMagnetic:
    s: float
    potential: object = 0.0

    def __post_init__(self):
        _check_s(self.s)


_LINEAR = (Laplacian, BiLaplacian, FractionalLaplacian, AnisotropicFractional,
           Magnetic, FractionalMagnetic)
_COMPLEX_ONLY = (Magnetic, FractionalMagnetic)
_BOX_ONLY = (AnisotropicFractional,)


def is_linear(spec) -> bool:
    return isinstance(spec, _LINEAR)


# ---------------------------------------------------------------------------
# Nonlocal quadrature backbone
# ---------------------------------------------------------------------------

def _cell_moments(d1: np.ndarray, d2: np.ndarray, q: float):
    """Zeroth and first moments of z^(-1-q) over [d1, d2] (first moment
    about the singularity)."""
    m0 = (d1 ** (-q) - d2 ** (-q)) / q
    if abs(q - 1.0) < 1e-12:
        m1 = np.log(d2 / d1)
    else:
        m1 = (d1 ** (1.0 - q) - d2 ** (1.0 - q)) / (q - 1.0)
    return m0, m1


@lru_cache(maxsize=64)
def _nonlocal_weights(grid: Grid, q: float):
    """Pairwise quadrature weights for the kernel |z|^(-1-q) on an interval.

    Returns (W, tail) where W has shape (N, N+2): column j is the weight
    coupling interior node i to all-node j (all-nodes are [a, x_1..x_N, b],
    the boundary columns carrying the zero Dirichlet value), and tail[i] is
    the exact exterior integral [(x_i-a)^(-q) + (b-x_i)^(-q)] / q.

    W collects the exact hat-function cell integrals away from node i and
    the quadratic-model principal-value weight h^(-q)/(2-q) on the two
    adjacent all-nodes.  On a uniform grid the interior block is symmetric.
    """
    if not 0.0 < q < 2.0:
        raise ValueError(f"kernel exponent parameter must lie in (0,2), got {q}")
    (a, b) = grid.endpoints[0]
    n = grid.points_per_axis[0]
    h = grid.spacing[0]
    x = grid.axis_nodes()
    all_nodes = np.concatenate(([a], x, [b]))
    W = np.zeros((n, n + 2))
    beta_sing = h ** (-q) / (2.0 - q)
    cell_left = all_nodes[:-1]          # n+1 cells
    for i in range(n):
        W[i, i] += beta_sing
        W[i, i + 2] += beta_sing
        # cells strictly right of the singular pair: indices i+2 .. n
        right = np.arange(i + 2, n + 1)
        if right.size:
            d1 = cell_left[right] - x[i]
            d2 = d1 + h
            m0, m1 = _cell_moments(d1, d2, q)
            W[i, right] += (d2 * m0 - m1) / h      # near endpoint (all-node index = cell index)
            W[i, right + 1] += (m1 - d1 * m0) / h  # far endpoint
        # cells strictly left: indices 0 .. i-1
        left = np.arange(0, i)
        if left.size:
            d2 = x[i] - cell_left[left]
            d1 = d2 - h
            m0, m1 = _cell_moments(d1, d2, q)
            # near endpoint of a left cell is its right node (all-node index left+1)
            W[i, left + 1] += (d2 * m0 - m1) / h
            W[i, left] += (m1 - d1 * m0) / h
    tail = ((x - a) ** (-q) + (b - x) ** (-q)) / q
    W.flags.writeable = False
    tail.flags.writeable = False
    return W, tail


def _all_values(u: np.ndarray) -> np.ndarray:
    z = np.zeros(1, dtype=u.dtype)
    return np.concatenate((z, u, z))


def _all_positions(grid: Grid) -> np.ndarray:
    (a, b) = grid.endpoints[0]
    return np.concatenate(([a], grid.axis_nodes(), [b]))


# ---------------------------------------------------------------------------
# Local (flux-form) helpers
# ---------------------------------------------------------------------------

def _signed_power(u: np.ndarray, m: float) -> np.ndarray:
    if m == 1.0:
        return u
    if m >= 1.0:
        return np.abs(u) ** (m - 1.0) * u
    return (u * u + _EPS_DEGENERATE**2) ** ((m - 1.0) / 2.0) * u


def _signed_power_ratio(u: np.ndarray, m: float) -> np.ndarray:
    """Multiplier r with r * u == signed_power(u, m)."""
    if m == 1.0:
        return np.ones_like(u)
    if m >= 1.0:
        return np.abs(u) ** (m - 1.0)
    return (u * u + _EPS_DEGENERATE**2) ** ((m - 1.0) / 2.0)


def _phi_p_coeff(r: np.ndarray, p: float) -> np.ndarray:
    """Multiplier |r|^(p-2), regularized for p < 2 where it is singular."""
    if p == 2.0:
        return np.ones_like(r)
    if p > 2.0:
        return np.abs(r) ** (p - 2.0)
    return (r * r + _EPS_DEGENERATE**2) ** ((p - 2.0) / 2.0)


def _face_diff_matrix(grid: Grid) -> np.ndarray:
    """D mapping node values to the N+1 face difference quotients (zero
    boundary ghosts).  Its negative transpose (times 1/h ... already folded)
    realizes -div for face fluxes."""
    n = grid.points_per_axis[0]
    h = grid.spacing[0]
    d = np.zeros((n + 1, n))
    idx = np.arange(n)
    d[idx, idx] += 1.0 / h
    d[idx + 1, idx] -= 1.0 / h
    return d


def _neg_div(flux: np.ndarray, h: float) -> np.ndarray:
    return (flux[:-1] - flux[1:]) / h


def _laplacian_matrix(grid: Grid) -> np.ndarray:
    n = grid.points_per_axis[0]
    h = grid.spacing[0]
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return np.diag(main) + np.diag(off, 1) + np.diag(off, -1)


# ---------------------------------------------------------------------------
# The monotone profile F of the graphical fractional mean curvature
# ---------------------------------------------------------------------------

class _CurvatureProfile:
    """F(r) = int_0^r (1+tau^2)^(-(2+s)/2) dtau on a 2048-point monotone
    table with the exact saturation value F(inf)."""

    TABLE_SIZE = 2048

    def __init__(self, s: float):
        self.s = s
        beta = (2.0 + s) / 2.0
        # tan-spaced abscissae concentrate points where F still varies
        t = np.linspace(0.0, np.pi / 2, self.TABLE_SIZE, endpoint=False)
        self.r_table = np.tan(t)
        self.f_table = self.r_table * hyp2f1(0.5, beta, 1.5, -self.r_table**2)
        # F(inf) = (sqrt(pi)/2) Gamma((1+s)/2) / Gamma(1 + s/2)
        self.f_inf = (math.sqrt(math.pi) / 2.0) * math.exp(
            gammaln((1.0 + s) / 2.0) - gammaln(1.0 + s / 2.0)
        )

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.interp(np.abs(r), self.r_table, self.f_table, right=self.f_inf)
        return np.sign(r) * out

    def ratio(self, r: np.ndarray) -> np.ndarray:
        """F(r)/r with the limit F'(0) = 1 at r = 0."""
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        nz = np.abs(r) > 1e-300
        out[nz] = self(r[nz]) / r[nz]
        return out


@lru_cache(maxsize=32)
def _curvature_profile(s: float) -> _CurvatureProfile:
    return _CurvatureProfile(s)


_GAUSS_X, _GAUSS_W = leggauss(32)
_GAUSS01_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS01_W = 0.5 * _GAUSS_W


def _curvature_tail(u: np.ndarray, dist: np.ndarray, s: float) -> np.ndarray:
    """Exterior contribution int_d^inf F(u/r) r^(-1-s) dr per node for one
    side at distances dist, evaluated as (d^-s / s) int_0^1 F(u t^(1/s)/d) dt."""
    F = _curvature_profile(s)
    t_pow = _GAUSS01_X ** (1.0 / s)
    args = (u[:, None] / dist[:, None]) * t_pow[None, :]
    vals = F(args) @ _GAUSS01_W
    return dist ** (-s) / s * vals


# ---------------------------------------------------------------------------
# Individual operators
# ---------------------------------------------------------------------------

def apply_p_laplacian_porous(fld: Field, p: float, m: float) -> Field:
    _check_p(p)
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    _require_real_interval(fld)
    h = fld.grid.spacing[0]
    w = _signed_power(fld.values, m)
    dw = np.diff(np.concatenate(([0.0], w, [0.0]))) / h
    flux = _phi_p_coeff(dw, p) * dw
    return fld.with_values(_neg_div(flux, h))


def apply_mean_curvature(fld: Field) -> Field:
    _require_real_interval(fld)
    h = fld.grid.spacing[0]
    du = np.diff(np.concatenate(([0.0], fld.values, [0.0]))) / h
    flux = du / np.sqrt(1.0 + du * du)
    return fld.with_values(_neg_div(flux, h))


@lru_cache(maxsize=64)
def _fractional_laplacian_matrix(grid: Grid, s: float) -> np.ndarray:
    W, tail = _nonlocal_weights(grid, 2.0 * s)
    A = np.diag(W.sum(axis=1) + tail) - W[:, 1:-1]
    A.flags.writeable = False
    return A


def apply_fractional_laplacian(fld: Field, s: float) -> Field:
    _check_s(s)
    _require_real_interval(fld)
    A = _fractional_laplacian_matrix(fld.grid, s)
    return fld.with_values(A @ fld.values)


def apply_fractional_p_laplacian(fld: Field, s: float, p: float) -> Field:
    _check_s(s)
    _check_p(p)
    _require_real_interval(fld)
    W, tail = _nonlocal_weights(fld.grid, s * p)
    u = fld.values
    diff = u[:, None] - _all_values(u)[None, :]
    phi = _phi_p_coeff(diff, p) * diff
    vals = np.sum(W * phi, axis=1) + tail * (_phi_p_coeff(u, p) * u)
    return fld.with_values(vals)


def apply_superposition(fld: Field, terms) -> Field:
    out = np.zeros_like(fld.values)
    for beta, s, p in terms:
        out = out + beta * apply_fractional_p_laplacian(fld, s, p).values
    return fld.with_values(out)


def _axis_grid(grid: Grid, axis: int) -> Grid:
    return Grid("interval", (grid.endpoints[axis],), (grid.points_per_axis[axis],))


def apply_anisotropic_fractional(fld: Field, beta, sigma) -> Field:
    if fld.grid.kind != "box":
        raise ValueError("the anisotropic operator requires a box grid")
    if fld.is_complex:
        raise ValueError("the anisotropic operator acts on real fields")
    if len(beta) != 2 or len(sigma) != 2:
        raise ValueError("beta and sigma must both have length 2")
    U = fld.as_array2d()
    A0 = _fractional_laplacian_matrix(_axis_grid(fld.grid, 0), sigma[0])
    A1 = _fractional_laplacian_matrix(_axis_grid(fld.grid, 1), sigma[1])
    out = beta[0] * (A0 @ U) + beta[1] * (U @ A1.T)
    return fld.with_values(out.reshape(-1))


def apply_porous_medium_I(fld: Field, s: float, m: float) -> Field:
    powered = fld.with_values(_signed_power(fld.values, m))
    return apply_fractional_laplacian(powered, s)


@lru_cache(maxsize=64)
def _riesz_matrix(grid: Grid, s: float) -> np.ndarray:
    """R[u](x_i) = int u(y) |x_i - y|^(2s-1) dy for the piecewise-linear
    interpolant with zero boundary values, by exact cell moments."""
    n = grid.points_per_axis[0]
    h = grid.spacing[0]
    x = grid.axis_nodes()
    nodes = _all_positions(grid)
    kpow = 2.0 * s - 1.0  # in (-1, 0)
    R = np.zeros((n, n + 2))

    def m0(d1, d2):
        return (d2 ** (kpow + 1.0) - d1 ** (kpow + 1.0)) / (kpow + 1.0)

    def m1(d1, d2):
        return (d2 ** (kpow + 2.0) - d1 ** (kpow + 2.0)) / (kpow + 2.0)

    for i in range(n):
        for c in range(n + 1):  # cell c spans [nodes[c], nodes[c+1]]
            yl, yr = nodes[c], nodes[c + 1]
            if x[i] >= yr:      # cell left of node
                d1, d2 = x[i] - yr, x[i] - yl
                w_right = (d2 * m0(d1, d2) - m1(d1, d2)) / h
                w_left = (m1(d1, d2) - d1 * m0(d1, d2)) / h
            elif x[i] <= yl:    # cell right of node
                d1, d2 = yl - x[i], yr - x[i]
                w_left = (d2 * m0(d1, d2) - m1(d1, d2)) / h
                w_right = (m1(d1, d2) - d1 * m0(d1, d2)) / h
            else:               # node interior to the cell: split at x_i
                dl, dr = x[i] - yl, yr - x[i]
                # on [yl, x_i], y = x_i - z: phi_left = (dr+z)/h, phi_right = (dl-z)/h
                w_left = (dr * m0(0.0, dl) + m1(0.0, dl)) / h
                w_right = (dl * m0(0.0, dl) - m1(0.0, dl)) / h
                # on [x_i, yr], y = x_i + z: phi_left = (dr-z)/h, phi_right = (dl+z)/h
                w_left += (dr * m0(0.0, dr) - m1(0.0, dr)) / h
                w_right += (dl * m0(0.0, dr) + m1(0.0, dr)) / h
            R[i, c] += w_left
            R[i, c + 1] += w_right
    out = R[:, 1:-1]
    out.flags.writeable = False
    return out


def apply_porous_medium_II(fld: Field, s: float) -> Field:
    if not 0.0 < s < 0.5:
        raise ValueError(
            f"porous media II requires s in (0, 1/2) on an interval, got {s}"
        )
    _require_real_interval(fld)
    h = fld.grid.spacing[0]
    u = fld.values
    ru = _riesz_matrix(fld.grid, s) @ u
    d_ru = np.diff(np.concatenate(([0.0], ru, [0.0]))) / h
    ua = _all_values(u)
    u_face = 0.5 * (ua[:-1] + ua[1:])
    flux = u_face * d_ru
    return fld.with_values(_neg_div(flux, h))


def apply_fractional_mean_curvature(fld: Field, s: float) -> Field:
    _check_s(s)
    _require_real_interval(fld)
    W, _ = _nonlocal_weights(fld.grid, s)
    u = fld.values
    x = fld.grid.axis_nodes()
    (a, b) = fld.grid.endpoints[0]
    pos = _all_positions(fld.grid)
    dist = np.abs(x[:, None] - pos[None, :])
    np.fill_diagonal(dist[:, 1:-1], 1.0)  # self-distance never used (W diag block is 0)
    diff = u[:, None] - _all_values(u)[None, :]
    F = _curvature_profile(s)
    vals = np.sum(W * dist * F(diff / dist), axis=1)
    vals += _curvature_tail(u, x - a, s) + _curvature_tail(u, b - x, s)
    return fld.with_values(vals)


def _kirchhoff_scalar(fld: Field, m0: float, m1: float, s) -> float:
    if s is None:
        sem = h1_seminorm_sq(fld)
    else:
        sem = gagliardo_seminorm_sq(fld, s)
    return m0 + m1 * sem


def apply_kirchhoff(fld: Field, m0: float, m1: float, s=None) -> Field:
    scal = _kirchhoff_scalar(fld, m0, m1, s)
    if s is None:
        base = fld.with_values(_laplacian_matrix(fld.grid) @ fld.values)
    else:
        base = apply_fractional_laplacian(fld, s)
    return fld.with_values(scal * base.values)


def _potential_on_nodes(potential, grid: Grid) -> np.ndarray:
    n = grid.points_per_axis[0]
    if np.isscalar(potential):
        return np.full(n, float(potential))
    arr = np.asarray(potential, dtype=float)
    if arr.size != n:
        raise ValueError(
            f"magnetic potential table has {arr.size} entries, grid has {n} nodes"
        )
    return arr


@lru_cache(maxsize=64)
def _magnetic_matrix(grid: Grid, potential) -> np.ndarray:
    """-u'' + 2iAu' + (iA' + A^2)u with centered differences; A' by centered
    differences of the table (one-sided at the two ends)."""
    n = grid.points_per_axis[0]
    h = grid.spacing[0]
    A = _potential_on_nodes(potential, grid)
    Ap = np.gradient(A, h)
    M = _laplacian_matrix(grid).astype(complex)
    idx = np.arange(n)
    deriv = np.zeros((n, n))
    deriv[idx[:-1], idx[:-1] + 1] += 1.0 / (2.0 * h)
    deriv[idx[1:], idx[1:] - 1] -= 1.0 / (2.0 * h)
    M += 2.0j * (A[:, None] * deriv)
    M += np.diag(1.0j * Ap + A * A)
    M.flags.writeable = False
    return M


@lru_cache(maxsize=64)
def _fractional_magnetic_matrix(grid: Grid, s: float, potential) -> np.ndarray:
    """Pairwise fractional magnetic operator: the fractional-Laplacian
    weights with the phase e^{i (x_i - x_j) A((x_i+x_j)/2)} on each pair."""
    W, tail = _nonlocal_weights(grid, 2.0 * s)
    x = grid.axis_nodes()
    pos = _all_positions(grid)
    A = _potential_on_nodes(potential, grid)
    mid = 0.5 * (x[:, None] + pos[None, :])
    a_mid = np.interp(mid, x, A)
    theta = (x[:, None] - pos[None, :]) * a_mid
    M = np.diag(W.sum(axis=1) + tail).astype(complex)
    M -= W[:, 1:-1] * np.exp(1.0j * theta[:, 1:-1])
    M.flags.writeable = False
    return M


def apply_magnetic(fld: Field, potential, s=None) -> Field:
    if not fld.is_complex:
        raise ValueError("magnetic operators act on complex fields")
    if fld.grid.kind != "interval":
        raise ValueError("magnetic operators are restricted to interval grids")
    if s is None:
        M = _magnetic_matrix(fld.grid, potential)
    else:
        _check_s(s)
        M = _fractional_magnetic_matrix(fld.grid, s, potential)
    return fld.with_values(M @ fld.values)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _require_real_interval(fld: Field) -> None:
    if fld.is_complex:
        raise ValueError("this operator acts on real fields")
    if fld.grid.kind != "interval":
        raise ValueError("this operator is restricted to interval grids")


def apply(spec, fld: Field) -> Field:
    """Apply the spatial operator described by ``spec`` to a field."""
    if isinstance(spec, Laplacian):
        _require_real_interval(fld)
        return fld.with_values(_laplacian_matrix(fld.grid) @ fld.values)
    if isinstance(spec, BiLaplacian):
        _require_real_interval(fld)
        L = _laplacian_matrix(fld.grid)
        return fld.with_values(L @ (L @ fld.values))
    if isinstance(spec, PLaplacianPorous):
        return apply_p_laplacian_porous(fld, spec.p, spec.m)
    if isinstance(spec, MeanCurvature):
        return apply_mean_curvature(fld)
    if isinstance(spec, FractionalLaplacian):
        return apply_fractional_laplacian(fld, spec.s)
    if isinstance(spec, FractionalPLaplacian):
        return apply_fractional_p_laplacian(fld, spec.s, spec.p)
    if isinstance(spec, Superposition):
        return apply_superposition(fld, spec.terms)
    if isinstance(spec, AnisotropicFractional):
        return apply_anisotropic_fractional(fld, spec.beta, spec.sigma)
    if isinstance(spec, PorousMediaI):
        return apply_porous_medium_I(fld, spec.s, spec.m)
    if isinstance(spec, PorousMediaII):
        return apply_porous_medium_II(fld, spec.s)
    if isinstance(spec, FractionalMeanCurvature):
        return apply_fractional_mean_curvature(fld, spec.s)
    if isinstance(spec, Kirchhoff):
        return apply_kirchhoff(fld, spec.m0, spec.m1, None)
    if isinstance(spec, FractionalKirchhoff):
        return apply_kirchhoff(fld, spec.m0, spec.m1, spec.s)
    if isinstance(spec, Magnetic):
        return apply_magnetic(fld, spec.potential, None)
    if isinstance(spec, FractionalMagnetic):
        return apply_magnetic(fld, spec.potential, spec.s)
    raise TypeError(f"unknown operator spec {spec!r}")


def lagged_matrix(spec, grid: Grid, v: np.ndarray) -> np.ndarray:
    """Linearized operator matrix A(v) with the consistency A(v) v = apply(v).

    Linear operators return their constant matrix; nonlinear ones freeze
    their coefficients at the lag state v (ratio form, so consistency is
    exact including the regularizations).
    """
    if isinstance(spec, Laplacian):
        return _laplacian_matrix(grid)
    if isinstance(spec, BiLaplacian):
        L = _laplacian_matrix(grid)
        return L @ L
    if isinstance(spec, FractionalLaplacian):
        return _fractional_laplacian_matrix(grid, spec.s)
    if isinstance(spec, Magnetic):
        return _magnetic_matrix(grid, spec.potential)
    if isinstance(spec, FractionalMagnetic):
        return _fractional_magnetic_matrix(grid, spec.s, spec.potential)
    if isinstance(spec, AnisotropicFractional):
        A0 = _fractional_laplacian_matrix(_axis_grid(grid, 0), spec.sigma[0])
        A1 = _fractional_laplacian_matrix(_axis_grid(grid, 1), spec.sigma[1])
        n0, n1 = grid.points_per_axis
        return (spec.beta[0] * np.kron(A0, np.eye(n1))
                + spec.beta[1] * np.kron(np.eye(n0), A1))
    if isinstance(spec, PLaplacianPorous):
        D = _face_diff_matrix(grid)
        dw = D @ _signed_power(v, spec.m)
        kappa = _phi_p_coeff(dw, spec.p)
        ratio = _signed_power_ratio(v, spec.m)
        return _flux_matrix(D, kappa, ratio)
    if isinstance(spec, MeanCurvature):
        D = _face_diff_matrix(grid)
        dv = D @ v
        kappa = 1.0 / np.sqrt(1.0 + dv * dv)
        return _flux_matrix(D, kappa, np.ones_like(v))
    if isinstance(spec, FractionalPLaplacian):
        return _fpl_lagged(grid, spec.s, spec.p, v)
    if isinstance(spec, Superposition):
        out = None
        for beta, s, p in spec.terms:
            m = beta * _fpl_lagged(grid, s, p, v)
            out = m if out is None else out + m
        return out
    if isinstance(spec, PorousMediaI):
        A = _fractional_laplacian_matrix(grid, spec.s)
        return A * _signed_power_ratio(v, spec.m)[None, :]
    if isinstance(spec, PorousMediaII):
        D = _face_diff_matrix(grid)
        va = _all_values(v)
        u_face = 0.5 * (va[:-1] + va[1:])
        R = _riesz_matrix(grid, spec.s)
        return (D.T * u_face[None, :]) @ (D @ R)
    if isinstance(spec, FractionalMeanCurvature):
        return _fmc_lagged(grid, spec.s, v)
    if isinstance(spec, Kirchhoff):
        fld = Field(grid, v)
        scal = _kirchhoff_scalar(fld, spec.m0, spec.m1, None)
        return scal * _laplacian_matrix(grid)
    if isinstance(spec, FractionalKirchhoff):
        fld = Field(grid, v)
        scal = _kirchhoff_scalar(fld, spec.m0, spec.m1, spec.s)
        return scal * _fractional_laplacian_matrix(grid, spec.s)
    raise TypeError(f"unknown operator spec {spec!r}")


def _flux_matrix(D: np.ndarray, kappa: np.ndarray, ratio: np.ndarray) -> np.ndarray:
    """Matrix of u -> -div(kappa * d(ratio*u)) in the shared flux form.

    With D the face difference map (including 1/h) and -div realized by
    D^T scaled back by h ... concretely -div(F) = (F[:-1]-F[1:])/h = (D^T F)
    since D^T already carries the 1/h.  So A = D^T diag(kappa) D diag(ratio).
    """
    return (D.T * kappa[None, :]) @ (D * ratio[None, :])


def _fpl_lagged(grid: Grid, s: float, p: float, v: np.ndarray) -> np.ndarray:
    W, tail = _nonlocal_weights(grid, s * p)
    diff = v[:, None] - _all_values(v)[None, :]
    Wk = W * _phi_p_coeff(diff, p)
    A = np.diag(Wk.sum(axis=1) + tail * _phi_p_coeff(v, p)) - Wk[:, 1:-1]
    return A


def _fmc_lagged(grid: Grid, s: float, v: np.ndarray) -> np.ndarray:
    W, _ = _nonlocal_weights(grid, s)
    x = grid.axis_nodes()
    (a, b) = grid.endpoints[0]
    pos = _all_positions(grid)
    dist = np.abs(x[:, None] - pos[None, :])
    np.fill_diagonal(dist[:, 1:-1], 1.0)
    F = _curvature_profile(s)
    diff = v[:, None] - _all_values(v)[None, :]
    Wk = W * F.ratio(diff / dist)
    A = np.diag(Wk.sum(axis=1)) - Wk[:, 1:-1]
    # exterior tail by the ratio trick, with the small-amplitude limit
    tail_lin = np.zeros_like(v)
    for d in (x - a, b - x):
        tl = _curvature_tail(v, d, s)
        lim = d ** (-1.0 - s) / (1.0 + s)  # d/du of the tail at u=0 (F'(0)=1)
        nz = np.abs(v) > 1e-300
        r = np.where(nz, tl / np.where(nz, v, 1.0), lim)
        tail_lin += r
    return A + np.diag(tail_lin)


# ---------------------------------------------------------------------------
# Time-scale suggestion support and the dissipation pairing
# ---------------------------------------------------------------------------

def diffusive_scale(spec, grid: Grid) -> float:
    """Diffusive time scale h^(order) of the operator on this grid."""
    h = min(grid.spacing)
    if isinstance(spec, (Laplacian, PLaplacianPorous, MeanCurvature, Magnetic, Kirchhoff)):
        return h**2
    if isinstance(spec, BiLaplacian):
        return h**4
    if isinstance(spec, (FractionalLaplacian, PorousMediaI, FractionalMagnetic,
                         FractionalKirchhoff)):
        return h ** (2.0 * spec.s)
    if isinstance(spec, FractionalPLaplacian):
        return h ** (spec.s * spec.p)
    if isinstance(spec, Superposition):
        return min(h ** (s * p) for _, s, p in spec.terms)
    if isinstance(spec, AnisotropicFractional):
        return min(h ** (2.0 * sg) for sg in spec.sigma)
    if isinstance(spec, PorousMediaII):
        return h ** (2.0 - 2.0 * spec.s)
    if isinstance(spec, FractionalMeanCurvature):
        return h ** (1.0 + spec.s)
    raise TypeError(f"unknown operator spec {spec!r}")


def dissipation_pairing(fld: Field, ell: float, spec) -> float:
    """h^n * sum |u|^(ell-2) Re(conj(u) * N[u]), the discrete counterpart of
    the energy-dissipation integrand.  For ell < 2 the singular weight is
    regularized as (|u|^2 + eps^2)^((ell-2)/2) with eps = 1e-12 max|u|."""
    if not ell >= 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    u = fld.values
    nu = apply(spec, fld).values
    mod2 = np.abs(u) ** 2
    if ell >= 2.0:
        weight = mod2 ** ((ell - 2.0) / 2.0) if ell != 2.0 else np.ones_like(mod2)
    else:
        eps = 1e-12 * (np.max(np.abs(u)) if u.size else 0.0)
        weight = (mod2 + eps * eps) ** ((ell - 2.0) / 2.0)
    val = float(np.sum(weight * np.real(np.conj(u) * nu)) * fld.grid.cell_volume)
    if math.isnan(val):
        raise ValueError("dissipation pairing produced NaN")
    return val
