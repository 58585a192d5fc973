"""Semi-implicit time stepping for the mixed evolution

    lambda1 * D_t^alpha u + lambda2 * u_t + N[u] = 0,

with convex weights lambda1 + lambda2 = 1.  The Caputo derivative of order
alpha is discretized by the L1 scheme (nonuniform-grid form, including the
1/Gamma(1-alpha) normalization); the spatial operator is advanced
implicitly through its lagged linearization A(v) from
operators.lagged_matrix, with a fixed-point loop refreshing the lag state
for nonlinear operators.  Each step solves

    (lambda1 * A_k + lambda2 / dt_k) u^{k+1} + A(u_lag) u^{k+1} = rhs,

where A_k = dt_k^(-alpha)/Gamma(2-alpha) is the leading L1 weight and rhs
collects the Caputo history and the classical backward difference.

Steps are held at dt until t = 1 and then grow geometrically (ratio 1.05
by default): long-horizon decay fits only need logarithmically spaced
samples, and the growth bounds the O(K^2) Caputo memory work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .grids import Field, Grid, lp_norm
from . import operators

__all__ = [
    "TimeScheme",
    "EvolutionState",
    "EvolutionResult",
    "caputo_l1_weights",
    "caputo_l1_weights_nonuniform",
    "suggest_dt",
    "advance",
    "run_evolution",
]


@dataclass(frozen=True)
class TimeScheme:
    """Time discretization: convex split lambda1/lambda2, Caputo order
    alpha, step dt (None resolves via suggest_dt), horizon t_final."""

    lambda1: float
    lambda2: float = None
    alpha: float = 0.5
    dt: float = None
    t_final: float = 1.0
    dt_growth: float = 1.05
    growth_after: float = 1.0

    def __post_init__(self):
        if self.lambda2 is None:
            object.__setattr__(self, "lambda2", 1.0 - self.lambda1)
        if not 0.0 <= self.lambda1 <= 1.0 or not 0.0 <= self.lambda2 <= 1.0:
            raise ValueError("lambda1 and lambda2 must lie in [0,1]")
        if abs(self.lambda1 + self.lambda2 - 1.0) > 1e-12:
            raise ValueError("lambda1 + lambda2 must equal 1")
        if self.lambda1 > 0 and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.dt is not None and not 0.0 < self.dt <= self.t_final:
            raise ValueError("dt must satisfy 0 < dt <= t_final")
        if self.dt_growth < 1.0:
            raise ValueError("dt_growth must be >= 1")

    @property
    def needs_memory(self) -> bool:
        return self.lambda1 > 0


def caputo_l1_weights(alpha: float, k: int) -> np.ndarray:
    """Uniform-grid L1 weights b_j = (j+1)^(1-alpha) - j^(1-alpha),
    j = 0..k (scaled by dt^-alpha / Gamma(2-alpha) at the use site).

    b_0 = 1, the sequence is strictly decreasing, and the partial sums
    telescope to (k+1)^(1-alpha).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    if k < 0:
        raise ValueError("k must be >= 0")
    j = np.arange(k + 1, dtype=float)
    return (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)


def caputo_l1_weights_nonuniform(times, alpha: float) -> np.ndarray:
    """L1 weights A_0..A_k for the Caputo derivative at t_{k+1} on the
    nonuniform grid t_0 < ... < t_{k+1}: the discrete derivative is
    sum_j A_j (u^{j+1} - u^j) with

        A_j = [(t_{k+1}-t_j)^(1-a) - (t_{k+1}-t_{j+1})^(1-a)]
              / (Gamma(2-a) (t_{j+1}-t_j)).

    On a uniform grid this reduces to caputo_l1_weights (reversed) times
    dt^-alpha / Gamma(2-alpha).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    t = np.asarray(times, dtype=float)
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing with >= 2 entries")
    tk1 = t[-1]
    gaps = (tk1 - t[:-1]) ** (1.0 - alpha) - (tk1 - t[1:]) ** (1.0 - alpha)
    return gaps / (math.gamma(2.0 - alpha) * np.diff(t))


def suggest_dt(spec, grid: Grid, scheme: TimeScheme = None) -> float:
    """A stable-and-accurate step: a quarter of the diffusive time scale
    h^(operator order)."""
    return operators.diffusive_scale(spec, grid) / 4.0


@dataclass
class EvolutionState:
    """Mutable state of one evolution: current field, nonuniform time
    grid, Caputo history (retained only when lambda1 > 0), and the
    per-step norm/dissipation samples."""

    current: Field
    times: list
    history: list                # list of value arrays, [] when no memory
    norms: dict                  # ell -> list of floats
    dissipation: dict            # ell -> list of floats
    max_picard_iters: int = 0
    _lu_cache: dict = field(default_factory=dict, repr=False)

    @property
    def k(self) -> int:
        return len(self.times) - 1

    @property
    def t(self) -> float:
        return self.times[-1]


def initial_state(initial: Field, spec, scheme: TimeScheme, ells) -> EvolutionState:
    ells = tuple(float(e) for e in ells)
    return EvolutionState(
        current=initial,
        times=[0.0],
        history=[initial.values] if scheme.needs_memory else [],
        norms={e: [lp_norm(initial, e)] for e in ells},
        dissipation={e: [operators.dissipation_pairing(initial, e, spec)] for e in ells},
    )


def advance(state: EvolutionState, spec, scheme: TimeScheme, dt: float = None,
            picard_tol: float = 1e-10, picard_max: int = 50) -> EvolutionState:
    """One semi-implicit step of size dt (defaults to scheme.dt)."""
    if dt is None:
        dt = scheme.dt
    if dt is None or dt <= 0:
        raise ValueError("advance needs a positive dt")
    fld = state.current
    grid = fld.grid
    u = fld.values
    t_next = state.t + dt

    if scheme.needs_memory:
        tgrid = np.array(state.times + [t_next])
        w = caputo_l1_weights_nonuniform(tgrid, scheme.alpha)
        a_lead = w[-1]
        h_term = a_lead * state.history[-1]
        if len(state.history) > 1:
            hist = np.asarray(state.history)
            h_term = h_term - w[:-1] @ np.diff(hist, axis=0)
    else:
        a_lead = 0.0
        h_term = 0.0

    c = scheme.lambda1 * a_lead + scheme.lambda2 / dt
    rhs = scheme.lambda1 * h_term + (scheme.lambda2 / dt) * u
    dtype = complex if fld.is_complex else float

    if operators.is_linear(spec):
        key = round(math.log(dt) * 1e12)
        if key not in state._lu_cache:
            A = operators.lagged_matrix(spec, grid, u).astype(dtype)
            state._lu_cache[key] = scipy.linalg.lu_factor(
                A + c * np.eye(A.shape[0], dtype=dtype)
            )
            if len(state._lu_cache) > 4:
                state._lu_cache.pop(next(iter(state._lu_cache)))
        u_new = scipy.linalg.lu_solve(state._lu_cache[key], rhs)
        iters = 1
    else:
        scale = max(np.max(np.abs(u)), 1e-300)
        lag = u
        u_new = u
        iters = 0
        for iters in range(1, picard_max + 1):
            A = operators.lagged_matrix(spec, grid, lag)
            u_try = scipy.linalg.solve(
                A + c * np.eye(A.shape[0], dtype=A.dtype), rhs
            )
            delta = np.max(np.abs(u_try - u_new))
            u_new = u_try
            if delta <= picard_tol * scale:
                break
            lag = u_new
        state.max_picard_iters = max(state.max_picard_iters, iters)

    if not np.all(np.isfinite(u_new)):
        raise FloatingPointError(
            f"time step produced non-finite values at t={t_next:g} "
            f"(dt={dt:g}); reduce dt"
        )

    state.current = fld.with_values(u_new)
    state.times.append(t_next)
    if scheme.needs_memory:
        state.history.append(state.current.values)
    for e in state.norms:
        state.norms[e].append(lp_norm(state.current, e))
        state.dissipation[e].append(
            operators.dissipation_pairing(state.current, e, spec)
        )
    return state


@dataclass
class EvolutionResult:
    """Per-ell norm and dissipation trajectories of one completed run."""

    times: np.ndarray
    norms: dict                  # ell -> array aligned with times
    dissipation: dict            # ell -> array aligned with times
    final: Field
    steps: int
    max_picard_iters: int
    ells: tuple = ()

    def norm_series(self, ell: float):
        return self.times, self.norms[float(ell)]


def run_evolution(initial: Field, spec, scheme: TimeScheme,
                  ells=(2.0,), picard_tol: float = 1e-10,
                  picard_max: int = 50) -> EvolutionResult:
    """Integrate to scheme.t_final, recording norms at every step."""
    dt = scheme.dt
    if dt is None:
        dt = suggest_dt(spec, initial.grid, scheme)
        dt = min(dt, scheme.t_final)
    state = initial_state(initial, spec, scheme, ells)
    t_final = scheme.t_final
    step_dt = dt
    while state.t < t_final * (1.0 - 1e-12):
        step = min(step_dt, t_final - state.t)
        advance(state, spec, scheme, step, picard_tol, picard_max)
        if state.t >= scheme.growth_after:
            step_dt *= scheme.dt_growth
    return EvolutionResult(
        times=np.array(state.times),
        norms={e: np.array(v) for e, v in state.norms.items()},
        dissipation={e: np.array(v) for e, v in state.dissipation.items()},
        final=state.current,
        steps=state.k,
        max_picard_iters=state.max_picard_iters,
        ells=tuple(state.norms),
    )
