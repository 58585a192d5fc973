"""TOML experiment configurations.

An experiment config is a TOML document with a top-level ``kind`` and the
tables [operator], [scheme], [grid], [initial], [report] (evolution and
catalog-check kinds) or [walk] (recurrence kind).  Parsing is strict:
unknown keys are rejected and every parameter is validated against the
constructor invariants of the objects it feeds before any computation
starts.  All violations are collected and reported together, each naming
the offending field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:       # Python < 3.11
    import tomli

from . import operators as ops
from .grids import Field, Grid, make_grid
from .stepping import TimeScheme

KINDS = ("evolution", "catalog-check", "recurrence", "kernel-validate")

# operator name -> (constructor, required keys, optional keys with defaults)
_OPERATORS = {
    "laplacian": (ops.Laplacian, (), {}),
    "bilaplacian": (ops.BiLaplacian, (), {}),
    "p_laplacian_porous": (ops.PLaplacianPorous, ("p", "m"), {}),
    "mean_curvature": (ops.MeanCurvature, (), {}),
    "fractional_laplacian": (ops.FractionalLaplacian, ("s",), {}),
    "fractional_p_laplacian": (ops.FractionalPLaplacian, ("s", "p"), {}),
    "superposition": (ops.Superposition, ("terms",), {}),
    "anisotropic_fractional": (ops.AnisotropicFractional, ("beta", "sigma"), {}),
    "porous_media_i": (ops.PorousMediaI, ("s", "m"), {}),
    "porous_media_ii": (ops.PorousMediaII, ("s",), {}),
    "fractional_mean_curvature": (ops.FractionalMeanCurvature, ("s",), {}),
    "kirchhoff": (ops.Kirchhoff, ("m0", "m1"), {}),
    "fractional_kirchhoff": (ops.FractionalKirchhoff, ("s", "m0", "m1"), {}),
    "magnetic": (ops.Magnetic, (), {"potential": 0.0}),
    "fractional_magnetic": (ops.FractionalMagnetic, ("s",), {"potential": 0.0}),
}

_INITIAL_KEYS = {
    "sine": ((), {"k": 1}),
    "bump": (("center", "width"), {}),
    "random": (("seed",), {}),
    "file": (("path",), {}),
}


class ConfigError(ValueError):
    """One or more field-level violations in a config document."""

    def __init__(self, errors):
        self.errors = tuple(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment description."""

    kind: str
    operator: object = None
    scheme: TimeScheme = None
    grid: Grid = None
    initial: dict = None          # {"kind": ..., parameters...}
    ells: tuple = (2.0,)
    tol_rel: float = 0.15
    regime: str = None            # "mixed" | "classical" (derived from scheme)
    out_dir: str = "."
    seed: int = 0
    walk: dict = None             # recurrence parameters
    raw: dict = field(default=None, repr=False, compare=False)


def _take(table: dict, section: str, known, errors) -> dict:
    """Pop every known key; whatever is left is an unknown-key error."""
    out = {k: table.pop(k) for k in list(table) if k in known}
    for key in table:
        errors.append(f"{section}: unknown key {key!r}")
    return out


def _build_operator(table: dict, errors):
    name = table.pop("name", None)
    if name is None:
        errors.append("operator: missing required key 'name'")
        return None
    if name not in _OPERATORS:
        errors.append(f"operator.name: unknown operator {name!r} "
                      f"(choose from {', '.join(sorted(_OPERATORS))})")
        return None
    ctor, required, optional = _OPERATORS[name]
    kwargs = {}
    for key in required:
        if key not in table:
            errors.append(f"operator: {name} requires key {key!r}")
        else:
            kwargs[key] = table.pop(key)
    for key, default in optional.items():
        kwargs[key] = table.pop(key, default)
    for key in list(table):
        errors.append(f"operator: unknown key {key!r} for {name}")
    if len(kwargs) < len(required):
        return None
    try:
        if name == "superposition":
            kwargs["terms"] = tuple(tuple(map(float, t)) for t in kwargs["terms"])
        if name == "anisotropic_fractional":
            kwargs["beta"] = tuple(map(float, kwargs["beta"]))
            kwargs["sigma"] = tuple(map(float, kwargs["sigma"]))
        if "potential" in kwargs and isinstance(kwargs["potential"], list):
            kwargs["potential"] = tuple(map(float, kwargs["potential"]))
        return ctor(**kwargs)
    except (ValueError, TypeError) as exc:
        errors.append(f"operator.{name}: {exc}")
        return None


def _build_scheme(table: dict, errors) -> TimeScheme:
    known = ("lambda1", "lambda2", "alpha", "dt", "t_final",
             "dt_growth", "growth_after")
    got = _take(table, "scheme", known, errors)
    if "lambda1" not in got:
        errors.append("scheme: missing required key 'lambda1'")
        return None
    if got.get("lambda1", 0.0) > 0.0 and "alpha" not in got:
        errors.append("scheme.alpha: required when lambda1 > 0 "
                      "(order of the Caputo derivative)")
        return None
    if got.get("dt") == "auto":
        got["dt"] = None
    try:
        return TimeScheme(**{k: got[k] for k in known if k in got})
    except (ValueError, TypeError) as exc:
        errors.append(f"scheme: {exc}")
        return None


def _build_grid(table: dict, errors) -> Grid:
    got = _take(table, "grid", ("kind", "endpoints", "n"), errors)
    missing = [k for k in ("kind", "endpoints", "n") if k not in got]
    if missing:
        errors.append(f"grid: missing required key(s) {missing}")
        return None
    try:
        return make_grid(got["kind"], got["endpoints"], got["n"])
    except (ValueError, TypeError) as exc:
        errors.append(f"grid: {exc}")
        return None


def _build_initial(table: dict, errors) -> dict:
    kind = table.pop("kind", None)
    if kind is None:
        errors.append("initial: missing required key 'kind'")
        return None
    if kind not in _INITIAL_KEYS:
        errors.append(f"initial.kind: unknown datum {kind!r} "
                      f"(choose from {', '.join(sorted(_INITIAL_KEYS))})")
        return None
    required, optional = _INITIAL_KEYS[kind]
    out = {"kind": kind}
    for key in required:
        if key not in table:
            errors.append(f"initial: {kind} requires key {key!r}")
        else:
            out[key] = table.pop(key)
    for key, default in optional.items():
        out[key] = table.pop(key, default)
    for key in list(table):
        errors.append(f"initial: unknown key {key!r} for {kind}")
    return out


def _build_walk(table: dict, errors) -> dict:
    known = ("s", "n", "rho", "horizon", "trials", "seed")
    before = len(errors)
    got = _take(table, "walk", known, errors)
    missing = [k for k in ("s", "n", "rho", "horizon") if k not in got]
    if missing:
        errors.append(f"walk: missing required key(s) {', '.join(missing)}")
        return None
    got.setdefault("trials", 0)
    got.setdefault("seed", 0)
    if not 0.0 < got["s"] <= 1.0:
        errors.append("walk.s: s must lie in (0, 1]")
    if got["n"] not in (1, 2, 3):
        errors.append("walk.n: dimension must be 1, 2 or 3")
    if not got["rho"] >= 0.0:
        errors.append("walk.rho: radius must be >= 0")
    if not got["horizon"] >= 1:
        errors.append("walk.horizon: need at least one step")
    return got if len(errors) == before else None


def config_from_document(doc: dict, *, out_dir: str = None,
                         seed: int = None, tol: float = None) -> ExperimentConfig:
    """Validate a parsed TOML document; collect all field errors."""
    doc = dict(doc)
    errors = []
    kind = doc.pop("kind", None)
    if kind not in KINDS:
        errors.append(f"kind: must be one of {', '.join(KINDS)}, got {kind!r}")
        raise ConfigError(errors)

    top = {k: doc.pop(k) for k in ("out_dir", "seed", "tol") if k in doc}
    sections = {k: v for k, v in doc.items() if isinstance(v, dict)}
    for key in doc:
        if key not in sections:
            errors.append(f"top level: unknown key {key!r}")

    operator = scheme = grid = initial = walk = None
    ells, tol_rel, regime = (2.0,), 0.15, None

    if kind in ("evolution", "catalog-check"):
        for name in ("operator", "scheme", "grid", "initial"):
            if name not in sections:
                errors.append(f"missing required section [{name}]")
        if "walk" in sections:
            errors.append(f"section [walk] is not valid for kind {kind!r}")
        if "operator" in sections:
            operator = _build_operator(dict(sections["operator"]), errors)
        if "scheme" in sections:
            scheme = _build_scheme(dict(sections["scheme"]), errors)
        if "grid" in sections:
            grid = _build_grid(dict(sections["grid"]), errors)
        if "initial" in sections:
            initial = _build_initial(dict(sections["initial"]), errors)
        report = _take(dict(sections.get("report", {})), "report",
                       ("ells", "tol"), errors)
        ells = tuple(float(e) for e in report.get("ells", [2.0]))
        tol_rel = float(report.get("tol", 0.15))
        for e in ells:
            if not e >= 1.0:
                errors.append(f"report.ells: every exponent must be >= 1, got {e}")
        if not tol_rel > 0:
            errors.append("report.tol: tolerance must be positive")
        for name in sections:
            if name not in ("operator", "scheme", "grid", "initial", "report"):
                errors.append(f"unknown section [{name}]")
        if operator is not None and grid is not None:
            box_only = isinstance(operator, ops._BOX_ONLY)
            if box_only and grid.kind != "box":
                errors.append("grid.kind: this operator is defined on 2D boxes")
            if not box_only and grid.kind != "interval":
                errors.append("grid.kind: this operator is defined on intervals")
        if scheme is not None:
            regime = "mixed" if scheme.lambda1 > 0 else "classical"
    elif kind == "recurrence":
        if "walk" not in sections:
            errors.append("missing required section [walk]")
        else:
            walk = _build_walk(dict(sections["walk"]), errors)
        for name in sections:
            if name != "walk":
                errors.append(f"section [{name}] is not valid for kind 'recurrence'")
    else:  # kernel-validate
        for name in sections:
            errors.append(f"section [{name}] is not valid for kind 'kernel-validate'")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        kind=kind, operator=operator, scheme=scheme, grid=grid,
        initial=initial, ells=ells, tol_rel=tol if tol is not None else tol_rel,
        regime=regime,
        out_dir=out_dir if out_dir is not None else top.get("out_dir", "."),
        seed=seed if seed is not None else int(top.get("seed", 0)),
        walk=walk, raw=doc,
    )


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse and validate a TOML experiment config.

    Raises ConfigError carrying every field-level violation, or a
    tomli.TOMLDecodeError (with line number) for malformed documents.
    """
    doc = tomli.loads(text)
    return config_from_document(doc, **overrides)


def build_initial_field(config: ExperimentConfig) -> Field:
    """Materialize the configured initial datum u0 on the config grid."""
    grid, spec = config.grid, config.initial
    scalar = ("complex" if isinstance(config.operator, ops._COMPLEX_ONLY)
              else "real")
    coords = np.stack([g.ravel() for g in np.meshgrid(
        *[grid.axis_nodes(axis) for axis in range(grid.ndim)],
        indexing="ij")], axis=1)
    kind = spec["kind"]
    if kind == "sine":
        k = int(spec["k"])
        vals = np.ones(grid.node_count)
        for axis in range(grid.ndim):
            a, b = grid.endpoints[axis]
            vals = vals * np.sin(k * math.pi * (coords[:, axis] - a) / (b - a))
    elif kind == "bump":
        center = np.atleast_1d(np.asarray(spec["center"], float))
        width = float(spec["width"])
        r2 = np.sum((coords - center) ** 2, axis=1) / width ** 2
        vals = np.where(r2 < 1.0, np.exp(1.0 - 1.0 / np.maximum(1e-300, 1.0 - r2)),
                        0.0)
    elif kind == "random":
        rng = np.random.default_rng(int(spec["seed"]))
        vals = rng.standard_normal(grid.node_count)
    else:  # file
        vals = np.loadtxt(spec["path"], dtype=float)
        if vals.shape != (grid.node_count,):
            raise ValueError(
                f"initial.file: expected {grid.node_count} values, "
                f"got shape {vals.shape}")
    return Field(grid, np.asarray(vals, dtype=complex if scalar == "complex"
                                  else float), scalar)
