"""Stable heat kernels, ball masses, escape products, and stable walks.

The kernel G_s(x,t) solves the (possibly fractional) heat equation with a
Dirac initial datum; its Fourier transform is e^{-t |xi|^{2s}}.  Closed
forms exist at s = 1 (Gaussian, normalized with the (4 pi t)^{-n/2} factor
demanded by mass conservation) and s = 1/2 (Poisson kernel); other orders
are evaluated by one-dimensional radial Fourier inversion in n = 1, 2, 3.

Ball masses integrate the kernel radially; outside a scaled switch radius
the exterior mass comes from the Blumenthal-Getoor asymptotic series of
the stable density, integrated termwise.  Escape products q(s,rho)
evaluate the infinite product of the out-of-ball probabilities q_k at
integer times through one cached t = 1 mass profile (the scaling property
makes q_k a function of rho k^{-1/(2s)} alone), with an analytic bound on
the neglected tail of the log-product.  A Chambers-Mallows-Stuck walk
sampler provides the Monte Carlo cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

__all__ = [
    "kernel_value",
    "ball_mass",
    "KernelProfile",
    "kernel_profile",
    "RecurrenceEstimate",
    "escape_product",
    "classify_recurrence",
    "sample_stable_step",
    "WalkStats",
    "walk_return_stats",
]

_QUAD_ABSTOL = 1e-10
_SWITCH_RADIUS = 60.0        # scaled radius beyond which the tail series takes over
_TAIL_TERMS = 8

# surface area of the unit sphere boundary factor: |S^{n-1}|
_SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


def _check_query(s: float, n: int, t: float) -> None:
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must lie in (0,1], got {s}")
    if n not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {n}")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")


@lru_cache(maxsize=8)
def _poisson_constant(n: int) -> float:
    """c_n of the s = 1/2 kernel c_n t/(t^2+r^2)^((n+1)/2), fixed by unit
    mass at t = 1 through radial quadrature."""
    val, err = integrate.quad(
        lambda r: r ** (n - 1) * (1.0 + r * r) ** (-(n + 1) / 2.0),
        0.0, np.inf, epsabs=_QUAD_ABSTOL, epsrel=1e-12,
    )
    return 1.0 / (_SPHERE_AREA[n] * val)


def _decay_breakpoints(s: float, t: float):
    """Geometric breakpoints resolving e^{-t xi^{2s}}, and its support cap."""
    xi_char = t ** (-1.0 / (2.0 * s))
    xi_max = (37.0 / t) ** (1.0 / (2.0 * s))
    pts = [xi_char * 2.0**j for j in range(-2, 64)]
    return [p for p in pts if p < xi_max], xi_max


def _fourier_kernel(s: float, n: int, r: float, t: float) -> float:
    """Radial Fourier inversion of e^{-t xi^{2s}} for general s."""
    decay = lambda xi: math.exp(-t * xi ** (2.0 * s))
    if r == 0.0:
        # closed-moment forms: int xi^(n-1) e^{-t xi^{2s}} dxi
        mom = special.gamma(n / (2.0 * s)) * t ** (-n / (2.0 * s)) / (2.0 * s)
        return {1: mom / math.pi, 2: mom / (2.0 * math.pi),
                3: mom / (2.0 * math.pi**2)}[n]
    if n == 2:
        # composite Gauss between consecutive zeros of J0(xi r)
        return _hankel_inversion(s, r, t)
    weight = "cos" if n == 1 else "sin"
    f = decay if n == 1 else (lambda xi: xi * decay(xi))
    points, xi_max = _decay_breakpoints(s, t)
    oscillations = r * xi_max / math.pi
    if oscillations <= 40.0:
        # one oscillation spans the decay scale: plain adaptive quadrature
        # (the QAWF cycle machinery misbehaves in this regime)
        trig = math.cos if n == 1 else math.sin
        val, err = integrate.quad(lambda xi: f(xi) * trig(xi * r), 0.0, xi_max,
                                  points=points, limit=400,
                                  epsabs=_QUAD_ABSTOL, epsrel=1e-12)
    else:
        val, err = integrate.quad(f, 0.0, np.inf, weight=weight, wvar=r,
                                  epsabs=_QUAD_ABSTOL, limit=400)
    _check_quad(err)
    return val / math.pi if n == 1 else val / (2.0 * math.pi**2 * r)


def _check_quad(err: float) -> None:
    if not err < 1e-8:
        raise ArithmeticError(f"quadrature tolerance not met (error {err:g})")


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _hankel_inversion(s: float, r: float, t: float) -> float:
    """(2 pi)^{-1} int_0^inf e^{-t xi^{2s}} J0(xi r) xi dxi by vectorized
    Gauss panels between consecutive zeros of the Bessel factor."""
    xi_max = (-math.log(1e-16) / t) ** (1.0 / (2.0 * s))
    n_zeros = int(np.ceil(xi_max * r / math.pi)) + 2
    breaks = np.concatenate(([0.0], special.jn_zeros(0, max(n_zeros, 1)) / r))
    breaks = breaks[breaks <= xi_max * 1.0 + breaks[1]]
    if breaks[-1] < xi_max:
        breaks = np.concatenate((breaks, [xi_max]))
    a, b = breaks[:-1], breaks[1:]
    mid = 0.5 * (a + b)[:, None]
    half = 0.5 * (b - a)[:, None]
    xi = mid + half * _GL_X[None, :]
    f = np.exp(-t * xi ** (2.0 * s)) * special.j0(xi * r) * xi
    return float(np.sum((f @ _GL_W) * half[:, 0])) / (2.0 * math.pi)


def kernel_value(s: float, n: int, r: float, t: float) -> float:
    """The radial stable heat kernel G_s(|x| = r, t).

    s = 1 is the normalized Gaussian (4 pi t)^{-n/2} e^{-r^2/4t}; s = 1/2
    the Poisson kernel c_n t/(t^2+r^2)^{(n+1)/2}; otherwise the radial
    Fourier inversion of e^{-t xi^{2s}} with absolute tolerance 1e-10.
    """
    _check_query(s, n, t)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if s == 1.0:
        return (4.0 * math.pi * t) ** (-n / 2.0) * math.exp(-r * r / (4.0 * t))
    if s == 0.5:
        return _poisson_constant(n) * t / (t * t + r * r) ** ((n + 1) / 2.0)
    return _fourier_kernel(s, n, r, t)


@lru_cache(maxsize=64)
def _tail_coefficients(s: float, n: int) -> tuple:
    """Coefficients c_k of the large-r expansion of the t = 1 density,
    G_s(r,1) ~ sum_k c_k r^{-n-2sk} (Blumenthal-Getoor series)."""
    alpha = 2.0 * s
    out = []
    for k in range(1, _TAIL_TERMS + 1):
        ka = k * alpha
        c = ((-1) ** (k + 1) / math.factorial(k)
             * (ka / 2.0) * 2.0**ka * math.pi ** (-n / 2.0 - 1.0)
             * math.sin(math.pi * ka / 2.0)
             * special.gamma((n + ka) / 2.0) * special.gamma(ka / 2.0))
        out.append(c)
    return tuple(out)


def _exterior_mass_series(s: float, n: int, R: float) -> float:
    """Exterior mass 1 - M at t = 1 beyond scaled radius R (R large):
    termwise radial integration of the tail series, truncated where the
    asymptotic terms stop decreasing."""
    alpha = 2.0 * s
    total = 0.0
    prev = math.inf
    for k, c in enumerate(_tail_coefficients(s, n), start=1):
        term = _SPHERE_AREA[n] * c * R ** (-k * alpha) / (k * alpha)
        if abs(term) >= prev:
            break
        total += term
        prev = abs(term)
    return total


def _gaussian_ball_mass(n: int, rho: float, t: float) -> float:
    x = rho / (2.0 * math.sqrt(t))
    if n == 1:
        return math.erf(x)
    if n == 2:
        return 1.0 - math.exp(-x * x)
    return math.erf(x) - 2.0 * x * math.exp(-x * x) / math.sqrt(math.pi)


def ball_mass(s: float, n: int, rho: float, t: float) -> float:
    """Mass of the kernel inside the centered ball of radius rho: radial
    quadrature of kernel_value against the sphere-area factor, with the
    analytic tail series taking over past the scaled switch radius."""
    _check_query(s, n, t)
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0.0:
        return 0.0
    if s == 1.0:
        return _gaussian_ball_mass(n, rho, t)
    t_scale = t ** (1.0 / (2.0 * s))
    r_switch = _SWITCH_RADIUS * t_scale
    area = _SPHERE_AREA[n]
    if rho >= r_switch:
        return 1.0 - _exterior_mass_series(s, n, rho / t_scale)
    # piecewise radial quadrature: one panel near the origin, then
    # geometric panels out to rho
    breaks = [0.0, min(rho, t_scale)]
    while breaks[-1] < rho:
        breaks.append(min(rho, breaks[-1] * 2.0))
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        val, err = integrate.quad(
            lambda r: area * r ** (n - 1) * kernel_value(s, n, r, t),
            a, b, epsabs=_QUAD_ABSTOL, epsrel=1e-10, limit=200,
        )
        _check_quad(err)
        total += val
    return min(total, 1.0)


# ---------------------------------------------------------------------------
# Cached mass profile and escape products
# ---------------------------------------------------------------------------

class KernelProfile:
    """The t = 1 ball-mass profile M(R) of one (s, n) pair, tabulated once
    and reused for all integer times through the scaling property
    (q_k depends on rho k^{-1/(2s)} only)."""

    R_MIN = 1e-4
    GRID = 1600

    def __init__(self, s: float, n: int):
        _check_query(s, n, 1.0)
        self.s = s
        self.n = n
        self.peak = kernel_value(s, n, 0.0, 1.0)   # kernel maximum, at the origin
        if s == 1.0:
            self._log_r = None
            return
        r = np.geomspace(self.R_MIN, _SWITCH_RADIUS, self.GRID)
        g = np.array([kernel_value(s, n, float(ri), 1.0) for ri in r])
        area = _SPHERE_AREA[n]
        # cumulative mass: exact small-ball head (kernel flat at the
        # origin) plus cumulative trapezoid in between
        head = self.peak * area * r[0] ** n / n
        integrand = area * r ** (n - 1) * g
        cum = head + np.concatenate(
            ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(r)))
        )
        self._log_r = np.log(r)
        self._log_mass = np.log(np.minimum(cum, 1.0))

    def mass(self, R) -> np.ndarray:
        """Ball mass at t = 1 and radius R (vectorized)."""
        R = np.asarray(R, dtype=float)
        if self.s == 1.0:
            return np.vectorize(lambda x: _gaussian_ball_mass(self.n, x, 1.0))(R)
        out = np.empty_like(R)
        small = R <= self.R_MIN
        out[small] = self.peak * _SPHERE_AREA[self.n] * R[small] ** self.n / self.n
        big = R >= _SWITCH_RADIUS
        if big.any():
            out[big] = [1.0 - _exterior_mass_series(self.s, self.n, float(x))
                        for x in R[big]]
        mid = ~(small | big)
        out[mid] = np.exp(np.interp(np.log(R[mid]), self._log_r, self._log_mass))
        return np.minimum(out, 1.0)


@lru_cache(maxsize=32)
def kernel_profile(s: float, n: int) -> KernelProfile:
    return KernelProfile(s, n)


@dataclass(frozen=True)
class RecurrenceEstimate:
    s: float
    n: int
    rho: float
    K: int
    q: np.ndarray                # q_k, k = 1..K
    log_product: float           # log prod q_k (may be -inf)
    tail_bound: float            # bound on the neglected -log-product, k > K
    classification: str          # "recurrent" | "transient"

    @property
    def product(self) -> float:
        return math.exp(self.log_product) if self.log_product > -np.inf else 0.0

    def to_json_dict(self) -> dict:
        return {
            "n": self.n, "s": self.s, "rho": self.rho, "K": self.K,
            "product": self.product,
            "tail_bound": self.tail_bound if math.isfinite(self.tail_bound) else "inf",
            "classification": self.classification,
        }


def classify_recurrence(n: int, s: float) -> str:
    """The dichotomy of the 2s-stable walk: recurrent iff n <= 2s."""
    if n not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {n}")
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must lie in (0,1], got {s}")
    return "recurrent" if n <= 2.0 * s else "transient"


def escape_product(s: float, n: int, rho: float, K: int) -> RecurrenceEstimate:
    """Truncated escape product prod_{k=1}^K q_k(s,rho) with q_k the
    probability of lying outside B_rho at integer time k.

    The neglected factors are bounded through p_k <= peak * |B_rho| *
    k^{-n/(2s)} and -log(1-p) <= 2p (valid for p <= 1/2): finite when
    n > 2s, infinite in the recurrent regime n <= 2s where the product
    genuinely diverges to zero.
    """
    _check_query(s, n, 1.0)
    if rho <= 0:
        raise ValueError("rho must be positive")
    if K < 10:
        raise ValueError("K must be at least 10")
    prof = kernel_profile(s, n)
    k = np.arange(1, K + 1, dtype=float)
    p = prof.mass(rho * k ** (-1.0 / (2.0 * s)))
    q = 1.0 - p
    with np.errstate(divide="ignore"):
        log_product = float(np.sum(np.log(q)))
    ball_volume = _SPHERE_AREA[n] * rho**n / n
    exponent = n / (2.0 * s)
    p_tail_start = prof.peak * ball_volume * (K + 1.0) ** (-exponent)
    if exponent <= 1.0:
        tail = math.inf
    else:
        if p_tail_start > 0.5:
            raise ValueError(
                f"K={K} too small for the tail bound: p_(K+1) bound "
                f"{p_tail_start:.3g} exceeds 1/2"
            )
        tail = 2.0 * prof.peak * ball_volume * K ** (1.0 - exponent) / (exponent - 1.0)
    return RecurrenceEstimate(
        s=s, n=n, rho=rho, K=K, q=q,
        log_product=log_product, tail_bound=tail,
        classification=classify_recurrence(n, s),
    )


# ---------------------------------------------------------------------------
# Stable-walk Monte Carlo
# ---------------------------------------------------------------------------

def _cms_symmetric(alpha: float, rng: np.random.Generator, size) -> np.ndarray:
    """Chambers-Mallows-Stuck samples of the symmetric alpha-stable law
    with characteristic function e^{-|xi|^alpha}."""
    theta = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size)
    w = rng.standard_exponential(size)
    return (np.sin(alpha * theta) / np.cos(theta) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha))


def _stable_subordinator(s: float, rng: np.random.Generator, size) -> np.ndarray:
    """Positive s-stable samples with Laplace transform E e^{-lam S} =
    e^{-lam^s} (Kanter's representation)."""
    u = rng.uniform(0.0, math.pi, size)
    w = rng.standard_exponential(size)
    a = (np.sin(s * u) ** s * np.sin((1.0 - s) * u) ** (1.0 - s)
         / np.sin(u))
    return (a ** (1.0 / (1.0 - s)) / w) ** ((1.0 - s) / s)


def sample_stable_step(s: float, n: int, rng: np.random.Generator,
                       size: int = 1) -> np.ndarray:
    """``size`` unit-time increments of the isotropic 2s-stable process
    (characteristic function e^{-|xi|^{2s}}), shape (size, n).

    s = 1 is Brownian (per-coordinate Gaussian of variance 2); n = 1 uses
    the Chambers-Mallows-Stuck transform directly; n >= 2 subordinates a
    Gaussian vector by an s-stable time change, X = sqrt(2 S) Z.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must lie in (0,1], got {s}")
    if n not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {n}")
    if not isinstance(rng, np.random.Generator):
        raise TypeError("rng must be a numpy Generator")
    if s == 1.0:
        return math.sqrt(2.0) * rng.standard_normal((size, n))
    if n == 1:
        return _cms_symmetric(2.0 * s, rng, (size, 1))
    S = _stable_subordinator(s, rng, size)
    Z = rng.standard_normal((size, n))
    return np.sqrt(2.0 * S)[:, None] * Z


@dataclass(frozen=True)
class WalkStats:
    n: int
    s: float
    rho: float
    horizon: int
    trials: int
    seed: int
    q_hat: float                 # empirical never-return frequency
    stderr: float                # binomial standard error
    mean_returns: float          # mean number of distinct return times

    def to_json_dict(self) -> dict:
        return {"trials": self.trials, "q_hat": self.q_hat,
                "stderr": self.stderr, "seed": self.seed,
                "mean_returns": self.mean_returns}


def walk_return_stats(n: int, s: float, rho: float, horizon: int,
                      trials: int, seed: int, batch: int = 200) -> WalkStats:
    """Monte Carlo return statistics of the 2s-stable walk observed at
    integer times 1..horizon.

    Each trial owns a counter-based substream derived from (seed, trial
    batch), so results are independent of execution order.
    """
    if trials < 1 or horizon < 1:
        raise ValueError("trials and horizon must be positive")
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    never = 0
    total_returns = 0
    done = 0
    batch_idx = 0
    while done < trials:
        m = min(batch, trials - done)
        rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(batch_idx,))
        )
        steps = sample_stable_step(s, n, rng, size=m * horizon)
        pos = np.cumsum(steps.reshape(m, horizon, n), axis=1)
        inside = np.linalg.norm(pos, axis=2) <= rho
        returns = inside.sum(axis=1)
        never += int(np.sum(returns == 0))
        total_returns += int(returns.sum())
        done += m
        batch_idx += 1
    q_hat = never / trials
    stderr = math.sqrt(max(q_hat * (1.0 - q_hat), 1.0 / trials) / trials)
    return WalkStats(n=n, s=s, rho=rho, horizon=horizon, trials=trials,
                     seed=seed, q_hat=q_hat, stderr=stderr,
                     mean_returns=total_returns / trials)
