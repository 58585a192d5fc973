"""Decay-rate catalog, prediction, empirical rate fitting, and verdicts.

The catalog enumerates the published long-time decay rates for the mixed
evolution lambda1 * D_t^alpha u + lambda2 * u_t + N[u] = 0: each operator
carries one row for the mixed regime (lambda1 in (0,1]) and one or more
guarded rows for the purely classical regime (lambda1 = 0, lambda2 = 1).
Predictions are either polynomial envelopes t^-beta or exponential
envelopes e^(-t/C) with C structural and never predicted — exponential
predictions are judged on form only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import operators as ops

__all__ = [
    "DecayPrediction",
    "FitResult",
    "DissipationDiagnostic",
    "CatalogRow",
    "Report",
    "catalog_rows",
    "predicted_rate",
    "fit_rate",
    "verdict",
    "check_dissipation_inequality",
]

_DVV = "Thm {thm}, Dipierro-Valdinoci-Vespri (2019)"
_AV = "Thm {thm}, Affili-Valdinoci (2019)"

UNDERFLOW_FRACTION = 1e-13      # trailing norms below this times ||u0|| are dropped
R2_EXP_MARGIN = 0.02            # exponential must beat polynomial R^2 by this much


@dataclass(frozen=True)
class DecayPrediction:
    """A predicted decay envelope Theta(t)."""

    form: str                    # "polynomial" | "exponential" | "unsupported"
    exponent: float = None       # beta of t^-beta (polynomial only)
    ell_range: tuple = (1.0, math.inf)
    source: str = ""
    ambiguous: bool = False
    reason: str = None           # for unsupported rows

    def __post_init__(self):
        if self.form not in ("polynomial", "exponential", "unsupported"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.form == "polynomial":
            if self.exponent is None or not self.exponent > 0:
                raise ValueError("polynomial predictions need a positive exponent")
        if self.form == "unsupported" and not self.reason:
            raise ValueError("unsupported predictions must carry a reason")
        lo, hi = self.ell_range
        if not (lo < hi):
            raise ValueError("ell range must be a nonempty interval")

    @property
    def supported(self) -> bool:
        return self.form != "unsupported"


@dataclass(frozen=True)
class FitResult:
    """Empirical decay envelope fitted from a norm trajectory."""

    form: str                    # "polynomial" | "exponential"
    rate: float                  # beta-hat, or r-hat = 1/C-hat for exponential
    stderr: float
    window: tuple                # (t0, t1) actually used
    r_squared: float
    r2_polynomial: float
    r2_exponential: float
    samples: int

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("standard error must be >= 0")


@dataclass(frozen=True)
class DissipationDiagnostic:
    """Largest gamma-hat and smallest C-hat validating the discrete energy
    inequality ||u||^(ell-1+gamma) <= C * D at every positive-D sample."""

    gamma_hat: float
    C_hat: float
    fraction_nonpositive: float
    samples: int


@dataclass(frozen=True)
class CatalogRow:
    table: int
    operator: str
    guard: str
    regime: str                  # "mixed" | "classical"
    ell_range: str
    theta: str
    source: str
    ambiguous: bool = False
    note: str = ""

    def describe(self) -> str:
        flags = []
        if self.ambiguous:
            flags.append("AMBIGUOUS")
        if self.note:
            flags.append(self.note)
        tail = f"  [{'; '.join(flags)}]" if flags else ""
        guard = f" {self.guard}" if self.guard else ""
        return (f"[T{self.table}] {self.operator}{guard} | {self.regime} | "
                f"ell {self.ell_range} | {self.theta} | {self.source}{tail}")


def catalog_rows() -> tuple:
    """Every published table row, in publication order."""
    inf = "[1, inf)"
    t1 = lambda thm: _DVV.format(thm=thm)
    t2 = lambda thm: _AV.format(thm=thm)
    rows = [
        # ---- first table ----
        CatalogRow(1, "nonlinear classical diffusion Delta_p u^m", "", "mixed",
                   inf, "Theta(t) = 1/t^(alpha/(m(p-1)))", t1("1.2")),
        CatalogRow(1, "nonlinear classical diffusion Delta_p u^m", "(m,p) != (1,2)",
                   "classical", inf, "Theta(t) = 1/t^(1/(m(p-1)-1))", t1("1.2"),
                   note="m(p-1) <= 1 outside the formula's validity; "
                        "(m,p)=(1,2) decays exponentially (heat equation)"),
        CatalogRow(1, "bi-Laplacian Delta_2 u", "", "classical", inf,
                   "Theta(t) = e^(-t/C)", t1("1.2"), ambiguous=True,
                   note="symbol Delta_2 u is ambiguous: Delta^2 or Delta_p at p=2"),
        CatalogRow(1, "graphical mean curvature", "", "mixed", inf,
                   "Theta(t) = 1/t^alpha", t1("1.5")),
        CatalogRow(1, "graphical mean curvature", "", "classical", inf,
                   "Theta(t) = e^(-t/C)", t1("1.5")),
        CatalogRow(1, "fractional p-Laplacian", "", "mixed", inf,
                   "Theta(t) = 1/t^(alpha/(p-1))", t1("1.6")),
        CatalogRow(1, "fractional p-Laplacian", "p > 2", "classical", inf,
                   "Theta(t) = 1/t^(1/(p-2))", t1("1.6")),
        CatalogRow(1, "fractional p-Laplacian", "p <= 2", "classical", inf,
                   "Theta(t) = e^(-t/C)", t1("1.6")),
        CatalogRow(1, "superposition of fractional p-Laplacians", "beta_j > 0",
                   "mixed", inf, "Theta(t) = 1/t^(alpha/(p_max-1))", t1("1.7")),
        CatalogRow(1, "superposition of fractional p-Laplacians",
                   "beta_j > 0, p_max > 2", "classical", inf,
                   "Theta(t) = 1/t^(1/(p_max-2))", t1("1.7")),
        CatalogRow(1, "superposition of fractional p-Laplacians",
                   "beta_j > 0, p_max <= 2", "classical", inf,
                   "Theta(t) = e^(-t/C)", t1("1.7")),
        CatalogRow(1, "superposition of anisotropic fractional Laplacians",
                   "beta_j > 0", "mixed", inf, "Theta(t) = 1/t^alpha", t1("1.8")),
        CatalogRow(1, "superposition of anisotropic fractional Laplacians",
                   "beta_j > 0", "classical", inf, "Theta(t) = e^(-t/C)", t1("1.8")),
        CatalogRow(1, "fractional porous media I", "", "mixed", inf,
                   "Theta(t) = 1/t^(alpha/m)", t1("1.9")),
        CatalogRow(1, "fractional porous media I", "m > 1", "classical", inf,
                   "Theta(t) = 1/t^(1/(m-1))", t1("1.9")),
        CatalogRow(1, "fractional porous media I", "m <= 1", "classical", inf,
                   "Theta(t) = e^(-t/C)", t1("1.9")),
        CatalogRow(1, "fractional graphical mean curvature", "", "mixed", inf,
                   "Theta(t) = 1/t^alpha", t1("1.10")),
        CatalogRow(1, "fractional graphical mean curvature", "", "classical", inf,
                   "Theta(t) = e^(-t/C)", t1("1.10")),
        # ---- second table ----
        CatalogRow(2, "fractional porous media II", "", "mixed", inf,
                   "Theta(t) = 1/t^(alpha/2)", t2("1.3"),
                   note="interval runs restricted to s in (0, 1/2): the displayed "
                        "potential kernel is non-decaying otherwise"),
        CatalogRow(2, "fractional porous media II", "", "classical", inf,
                   "Theta(t) = 1/t", t2("1.3"),
                   note="interval runs restricted to s in (0, 1/2): the displayed "
                        "potential kernel is non-decaying otherwise"),
        CatalogRow(2, "classical Kirchhoff operator", "M(0) > 0", "mixed", inf,
                   "Theta(t) = 1/t^alpha", t2("1.4")),
        CatalogRow(2, "classical Kirchhoff operator", "M(t) = bt, b > 0, n <= 4",
                   "mixed", inf, "Theta(t) = 1/t^(alpha/3)", t2("1.4")),
        CatalogRow(2, "classical Kirchhoff operator", "M(t) = bt, b > 0, n >= 5",
                   "mixed", "[1, 2n/(n-4))", "Theta(t) = 1/t^(alpha/3)", t2("1.4")),
        CatalogRow(2, "classical Kirchhoff operator", "M(0) > 0", "classical", inf,
                   "Theta(t) = e^(-t/C)", t2("1.4")),
        CatalogRow(2, "classical Kirchhoff operator", "M(t) = bt, b > 0",
                   "classical", inf, "Theta(t) = 1/sqrt(t)", t2("1.4")),
        CatalogRow(2, "fractional Kirchhoff operator", "M(0) > 0", "mixed", inf,
                   "Theta(t) = 1/t^alpha", t2("1.5")),
        CatalogRow(2, "fractional Kirchhoff operator", "M(t) = bt, b > 0, n <= 4s",
                   "mixed", inf, "Theta(t) = 1/t^(alpha/3)", t2("1.5")),
        CatalogRow(2, "fractional Kirchhoff operator", "M(t) = bt, b > 0, n > 4s",
                   "mixed", "[1, 2n/(n-4s))", "Theta(t) = 1/t^(alpha/3)", t2("1.5")),
        CatalogRow(2, "fractional Kirchhoff operator", "M(0) > 0", "classical", inf,
                   "Theta(t) = e^(-t/C)", t2("1.5")),
        CatalogRow(2, "fractional Kirchhoff operator", "M(t) = bt, b > 0",
                   "classical", inf, "Theta(t) = 1/sqrt(t)", t2("1.5")),
        CatalogRow(2, "classical magnetic operator", "", "mixed", inf,
                   "Theta(t) = 1/t^alpha", t2("1.6")),
        CatalogRow(2, "classical magnetic operator", "", "classical", inf,
                   "Theta(t) = e^(-t/C)", t2("1.6")),
        CatalogRow(2, "fractional magnetic operator", "", "mixed", inf,
                   "Theta(t) = 1/t^alpha", t2("1.7")),
        CatalogRow(2, "fractional magnetic operator", "", "classical", inf,
                   "Theta(t) = e^(-t/C)", t2("1.7")),
    ]
    return tuple(rows)


def catalog_examples() -> tuple:
    """One reachable (spec, lambda1, alpha-or-None n, ...) configuration per
    catalog row, in row order; None marks a row reachable only through an
    annotated restriction (there are none — every row has an example)."""
    a = 0.5
    return (
        (ops.PLaplacianPorous(2.5, 1.5), 1.0, a, 1),
        (ops.PLaplacianPorous(2.0, 2.0), 0.0, None, 1),
        (ops.BiLaplacian(), 0.0, None, 1),
        (ops.MeanCurvature(), 1.0, a, 1),
        (ops.MeanCurvature(), 0.0, None, 1),
        (ops.FractionalPLaplacian(0.5, 3.0), 1.0, a, 1),
        (ops.FractionalPLaplacian(0.5, 3.0), 0.0, None, 1),
        (ops.FractionalPLaplacian(0.5, 1.5), 0.0, None, 1),
        (ops.Superposition(((1.0, 0.3, 2.5), (1.0, 0.6, 3.0))), 1.0, a, 1),
        (ops.Superposition(((1.0, 0.3, 2.5), (1.0, 0.6, 3.0))), 0.0, None, 1),
        (ops.Superposition(((1.0, 0.3, 1.5), (1.0, 0.6, 2.0))), 0.0, None, 1),
        (ops.AnisotropicFractional((1.0, 1.0), (0.4, 0.6)), 1.0, a, 2),
        (ops.AnisotropicFractional((1.0, 1.0), (0.4, 0.6)), 0.0, None, 2),
        (ops.PorousMediaI(0.5, 2.0), 1.0, a, 1),
        (ops.PorousMediaI(0.5, 2.0), 0.0, None, 1),
        (ops.PorousMediaI(0.5, 0.8), 0.0, None, 1),
        (ops.FractionalMeanCurvature(0.5), 1.0, a, 1),
        (ops.FractionalMeanCurvature(0.5), 0.0, None, 1),
        (ops.PorousMediaII(0.3), 1.0, a, 1),
        (ops.PorousMediaII(0.3), 0.0, None, 1),
        (ops.Kirchhoff(1.0, 1.0), 1.0, a, 1),
        (ops.Kirchhoff(0.0, 1.0), 1.0, a, 1),
        (ops.Kirchhoff(0.0, 1.0), 1.0, a, 5),
        (ops.Kirchhoff(1.0, 1.0), 0.0, None, 1),
        (ops.Kirchhoff(0.0, 1.0), 0.0, None, 1),
        (ops.FractionalKirchhoff(0.5, 1.0, 1.0), 1.0, a, 1),
        (ops.FractionalKirchhoff(0.5, 0.0, 1.0), 1.0, a, 1),
        (ops.FractionalKirchhoff(0.2, 0.0, 1.0), 1.0, a, 1),
        (ops.FractionalKirchhoff(0.5, 1.0, 1.0), 0.0, None, 1),
        (ops.FractionalKirchhoff(0.5, 0.0, 1.0), 0.0, None, 1),
        (ops.Magnetic(1.0), 1.0, a, 1),
        (ops.Magnetic(1.0), 0.0, None, 1),
        (ops.FractionalMagnetic(0.5, 1.0), 1.0, a, 1),
        (ops.FractionalMagnetic(0.5, 1.0), 0.0, None, 1),
    )


def _mixed(exponent, thm, cite, ell=(1.0, math.inf)) -> DecayPrediction:
    return DecayPrediction("polynomial", exponent, ell, cite.format(thm=thm))


def predicted_rate(spec, lambda1: float, lambda2: float, alpha: float,
                   ell: float, n: int = 1) -> DecayPrediction:
    """Catalog lookup: the predicted Theta(t) for one operator/regime pair.

    ``n`` is the ambient dimension (only the Kirchhoff degenerate rows and
    their ell ranges depend on it).  Raises if ell falls outside the row's
    validity range.
    """
    if lambda1 < 0 or lambda2 < 0 or abs(lambda1 + lambda2 - 1.0) > 1e-12:
        raise ValueError("lambda1, lambda2 must be nonnegative with sum 1")
    if lambda1 > 0 and (alpha is None or not 0.0 < alpha < 1.0):
        raise ValueError("the mixed regime requires alpha in (0,1)")
    if not ell >= 1:
        raise ValueError("ell must be >= 1")
    mixed = lambda1 > 0
    pred = _lookup(spec, mixed, alpha, n)
    lo, hi = pred.ell_range
    if pred.supported and not (lo <= ell < hi):
        raise ValueError(
            f"ell={ell} outside the row's validity range [{lo}, {hi})"
        )
    return pred


def _lookup(spec, mixed: bool, alpha: float, n: int) -> DecayPrediction:
    t1 = _DVV
    t2 = _AV
    exp_ = lambda thm, cite, **kw: DecayPrediction(
        "exponential", None, (1.0, math.inf), cite.format(thm=thm), **kw)

    if isinstance(spec, ops.Laplacian):
        # the (m,p) = (1,2) instance of Delta_p u^m
        spec = ops.PLaplacianPorous(2.0, 1.0)
    if isinstance(spec, ops.PLaplacianPorous):
        q = spec.m * (spec.p - 1.0)
        if mixed:
            return _mixed(alpha / q, "1.2", t1)
        if q > 1.0:
            return DecayPrediction("polynomial", 1.0 / (q - 1.0),
                                   (1.0, math.inf), t1.format(thm="1.2"))
        if q == 1.0:
            # the published polynomial row excludes (m,p)=(1,2) and its
            # formula degenerates at m(p-1)=1; the linear case is the heat
            # equation with its exponential decay
            return exp_("1.2", t1)
        return DecayPrediction(
            "unsupported", None, (1.0, math.inf), t1.format(thm="1.2"),
            reason="m(p-1) < 1: fast-diffusion range not covered by the "
                   "published rate formula")
    if isinstance(spec, ops.BiLaplacian):
        if mixed:
            return DecayPrediction(
                "unsupported", None, (1.0, math.inf), t1.format(thm="1.2"),
                reason="no published mixed-regime row for the bi-Laplacian")
        return exp_("1.2", t1, ambiguous=True)
    if isinstance(spec, ops.MeanCurvature):
        return _mixed(alpha, "1.5", t1) if mixed else exp_("1.5", t1)
    if isinstance(spec, ops.FractionalLaplacian):
        spec = ops.FractionalPLaplacian(spec.s, 2.0)
    if isinstance(spec, ops.FractionalPLaplacian):
        if mixed:
            return _mixed(alpha / (spec.p - 1.0), "1.6", t1)
        if spec.p > 2.0:
            return DecayPrediction("polynomial", 1.0 / (spec.p - 2.0),
                                   (1.0, math.inf), t1.format(thm="1.6"))
        return exp_("1.6", t1)
    if isinstance(spec, ops.Superposition):
        pmax = spec.p_max
        if mixed:
            return _mixed(alpha / (pmax - 1.0), "1.7", t1)
        if pmax > 2.0:
            return DecayPrediction("polynomial", 1.0 / (pmax - 2.0),
                                   (1.0, math.inf), t1.format(thm="1.7"))
        return exp_("1.7", t1)
    if isinstance(spec, ops.AnisotropicFractional):
        return _mixed(alpha, "1.8", t1) if mixed else exp_("1.8", t1)
    if isinstance(spec, ops.PorousMediaI):
        if mixed:
            return _mixed(alpha / spec.m, "1.9", t1)
        if spec.m > 1.0:
            return DecayPrediction("polynomial", 1.0 / (spec.m - 1.0),
                                   (1.0, math.inf), t1.format(thm="1.9"))
        return exp_("1.9", t1)
    if isinstance(spec, ops.FractionalMeanCurvature):
        return _mixed(alpha, "1.10", t1) if mixed else exp_("1.10", t1)
    if isinstance(spec, ops.PorousMediaII):
        if mixed:
            return _mixed(alpha / 2.0, "1.3", t2)
        return DecayPrediction("polynomial", 1.0, (1.0, math.inf),
                               t2.format(thm="1.3"))
    if isinstance(spec, ops.Kirchhoff):
        if spec.m0 > 0:
            return _mixed(alpha, "1.4", t2) if mixed else exp_("1.4", t2)
        if mixed:
            ell_hi = math.inf if n <= 4 else 2.0 * n / (n - 4.0)
            return _mixed(alpha / 3.0, "1.4", t2, (1.0, ell_hi))
        return DecayPrediction("polynomial", 0.5, (1.0, math.inf),
                               t2.format(thm="1.4"))
    if isinstance(spec, ops.FractionalKirchhoff):
        if spec.m0 > 0:
            return _mixed(alpha, "1.5", t2) if mixed else exp_("1.5", t2)
        if mixed:
            ell_hi = math.inf if n <= 4.0 * spec.s else 2.0 * n / (n - 4.0 * spec.s)
            return _mixed(alpha / 3.0, "1.5", t2, (1.0, ell_hi))
        return DecayPrediction("polynomial", 0.5, (1.0, math.inf),
                               t2.format(thm="1.5"))
    if isinstance(spec, ops.Magnetic):
        return _mixed(alpha, "1.6", t2) if mixed else exp_("1.6", t2)
    if isinstance(spec, ops.FractionalMagnetic):
        return _mixed(alpha, "1.7", t2) if mixed else exp_("1.7", t2)
    raise TypeError(f"unknown operator spec {spec!r}")


# ---------------------------------------------------------------------------
# Empirical fitting
# ---------------------------------------------------------------------------

def _ols_line(x: np.ndarray, y: np.ndarray):
    """Slope, its standard error, and R^2 of a least-squares line."""
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(n - 2, 1)
    se = math.sqrt(ss_res / dof / sxx)
    return slope, se, r2


def fit_rate(series, ell: float = 2.0, window: tuple = None) -> FitResult:
    """Fit a decay envelope to the norm trajectory recorded in ``series``
    (an EvolutionResult, or a (times, norms) pair).

    Least squares on (log t, log ||u||) gives the polynomial candidate and
    on (t, log ||u||) the exponential one; the exponential form is chosen
    only if its R^2 exceeds the polynomial one by 0.02 (polynomial on
    ties; steep exponentials masquerade as polynomials on short windows,
    not vice versa).  Underflowed trailing norms (below 1e-13 of the
    initial value) are excluded; the default window is [max(1, T/10), T]
    clipped to the positive support.
    """
    if isinstance(series, tuple):
        t, nrm = np.asarray(series[0], float), np.asarray(series[1], float)
    else:
        t, nrm = series.norm_series(ell)
    if t.size != nrm.size or t.size < 2:
        raise ValueError("series must provide matching times/norms with >= 2 samples")
    positive = nrm > UNDERFLOW_FRACTION * nrm[0]
    positive &= t > 0
    if not positive.any():
        raise ValueError("no positive norm samples to fit")
    t_hi = t[positive][-1]
    if window is None:
        t_lo = max(1.0, t[-1] / 10.0)
        if t_lo >= t_hi:
            t_lo = t_hi / 10.0
        window = (t_lo, t_hi)
    t_lo, t_hi = window
    mask = positive & (t >= t_lo) & (t <= t_hi)
    nsamp = int(mask.sum())
    if nsamp < 20:
        raise ValueError(
            f"fit window [{t_lo:g}, {t_hi:g}] holds only {nsamp} samples (< 20)"
        )
    tv, nv = t[mask], nrm[mask]
    if np.any(nv <= 0):
        raise ValueError("zero norms inside the fit window")
    logn = np.log(nv)
    sp, sep, r2p = _ols_line(np.log(tv), logn)
    se_, see, r2e = _ols_line(tv, logn)
    if r2e > r2p + R2_EXP_MARGIN:
        return FitResult("exponential", -se_, see, (float(tv[0]), float(tv[-1])),
                         r2e, r2p, r2e, nsamp)
    return FitResult("polynomial", -sp, sep, (float(tv[0]), float(tv[-1])),
                     r2p, r2p, r2e, nsamp)


# ---------------------------------------------------------------------------
# Verdicts and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Report:
    spec: str
    regime: str
    alpha: float
    ell: float
    predicted: DecayPrediction
    fitted: FitResult
    verdict: str                 # PASS | FAIL | INCONCLUSIVE
    margin: float = None         # relative rate error (polynomial only)
    annotation: str = ""
    gamma_hat: float = None
    C_hat: float = None
    run_metadata: dict = None

    def to_json(self, indent: int = 2) -> str:
        doc = {
            "version": "1",
            "spec": self.spec,
            "regime": self.regime,
            "alpha": self.alpha,
            "ell": self.ell,
            "predicted": asdict(self.predicted),
            "fitted": asdict(self.fitted),
            "verdict": self.verdict,
            "margin": self.margin,
            "annotation": self.annotation,
            "gamma_hat": self.gamma_hat,
            "C_hat": self.C_hat,
            "run_metadata": self.run_metadata or {},
        }
        doc["predicted"]["ell_range"] = [
            self.predicted.ell_range[0],
            "inf" if math.isinf(self.predicted.ell_range[1])
            else self.predicted.ell_range[1],
        ]
        return json.dumps(doc, indent=indent, sort_keys=True, allow_nan=False,
                          default=_json_default)


def _json_default(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    raise TypeError(f"not JSON serializable: {obj!r}")


def verdict(prediction: DecayPrediction, fit: FitResult, tol_rel: float = 0.15,
            *, spec: str = "", regime: str = "", alpha: float = None,
            ell: float = 2.0, dissipation: DissipationDiagnostic = None,
            run_metadata: dict = None) -> Report:
    """Judge a fitted envelope against a catalog prediction.

    PASS requires a form match, and for polynomial predictions a relative
    rate error within tol_rel; exponential predictions match on form only
    (their C is structural and never predicted).  INCONCLUSIVE when the
    predicted rate sits within two standard errors but outside tol_rel,
    and always for rows carrying the ambiguity flag.
    """
    if not prediction.supported:
        raise ValueError(f"prediction is unsupported: {prediction.reason}")
    margin = None
    annotation = ""
    if fit.form != prediction.form:
        result = "FAIL"
        annotation = (f"form mismatch: predicted {prediction.form}, "
                      f"fitted {fit.form}")
    elif prediction.form == "exponential":
        result = "PASS"
    else:
        beta = prediction.exponent
        margin = abs(fit.rate - beta) / beta
        if margin <= tol_rel:
            result = "PASS"
        elif abs(fit.rate - beta) <= 2.0 * fit.stderr:
            result = "INCONCLUSIVE"
            annotation = (f"rate within 2 standard errors but relative error "
                          f"{margin:.3f} > {tol_rel}")
        else:
            result = "FAIL"
            annotation = f"relative rate error {margin:.3f} > {tol_rel}"
    if prediction.ambiguous:
        result = "INCONCLUSIVE"
        annotation = ("ambiguous catalog row; " + annotation).rstrip("; ")
    return Report(
        spec=spec, regime=regime, alpha=alpha, ell=ell,
        predicted=prediction, fitted=fit, verdict=result, margin=margin,
        annotation=annotation,
        gamma_hat=None if dissipation is None else dissipation.gamma_hat,
        C_hat=None if dissipation is None else dissipation.C_hat,
        run_metadata=run_metadata,
    )


def check_dissipation_inequality(series, ell: float = 2.0) -> DissipationDiagnostic:
    """Fit the energy-inequality parameters along a trajectory.

    gamma-hat is the least-squares exponent in log D = const +
    (ell-1+gamma) log ||u|| over the samples with positive dissipation;
    C-hat is then the smallest constant making
    ||u||^(ell-1+gamma-hat) <= C * D hold at every such sample.
    """
    t = series.times
    nrm = series.norms[float(ell)]
    dis = series.dissipation[float(ell)]
    ok = (dis > 0) & (nrm > UNDERFLOW_FRACTION * nrm[0])
    frac_bad = float(np.mean(dis <= 0))
    if ok.sum() < 3:
        raise ValueError("too few positive-dissipation samples")
    logn = np.log(nrm[ok])
    logd = np.log(dis[ok])
    slope, _, _ = _ols_line(logn, logd)
    gamma = slope - (ell - 1.0)
    c_hat = float(np.max(nrm[ok] ** (ell - 1.0 + gamma) / dis[ok]))
    return DissipationDiagnostic(
        gamma_hat=float(gamma), C_hat=c_hat,
        fraction_nonpositive=frac_bad, samples=int(ok.sum()),
    )
