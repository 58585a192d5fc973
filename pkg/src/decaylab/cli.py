"""Command-line experiment runner.

Verbs: ``run <config.toml>``, ``sweep <config.toml> --set key=v1,v2,...``,
``catalog list`` and ``kernels validate``.  Artifacts are written to the
output directory: ``norms.csv`` (columns t, ell, norm, dissipation),
``report.json`` (version "1") and ``decay.svg``.  Reruns with identical
config and seed produce byte-identical csv/json/svg output.

Exit status: 0 on PASS / completion, 2 on a FAIL verdict, 1 on any
runtime or configuration error.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:       # Python < 3.11
    import tomli

from . import decay, kernels
from .config import ConfigError, ExperimentConfig, build_initial_field, \
    config_from_document, parse_config
from .stepping import run_evolution, suggest_dt

_SWEEP_BUDGET = 64


def _styled(text: str, **kwargs) -> str:
    if os.environ.get("NO_COLOR"):
        return text
    return click.style(text, **kwargs)


def _fmt(x) -> str:
    """Round-tripping text form of a scalar for CSV output."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------

def write_norms_csv(path, result, ells) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "ell", "norm", "dissipation"])
        for ell in ells:
            t = result.times
            nrm = result.norms[float(ell)]
            dis = result.dissipation[float(ell)]
            for i in range(t.size):
                writer.writerow([_fmt(float(t[i])), _fmt(float(ell)),
                                 _fmt(float(nrm[i])), _fmt(float(dis[i]))])


def read_norms_csv(path) -> dict:
    """Re-parse norms.csv into {ell: (times, norms, dissipation)} exactly."""
    series = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ell = float(row["ell"])
            series.setdefault(ell, ([], [], []))
            series[ell][0].append(float(row["t"]))
            series[ell][1].append(float(row["norm"]))
            series[ell][2].append(float(row["dissipation"]))
    return {ell: tuple(np.array(col) for col in cols)
            for ell, cols in series.items()}


def write_decay_svg(path, result, ells, prediction=None) -> None:
    """Log-log plot of every ell-series with the predicted slope guide."""
    import matplotlib
    matplotlib.use("svg")
    matplotlib.rcParams["svg.hashsalt"] = "decaylab"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    tail = None
    for ell in ells:
        t = result.times
        nrm = result.norms[float(ell)]
        keep = (t > 0) & (nrm > 0)
        ax.loglog(t[keep], nrm[keep], label=f"ell = {ell:g}")
        if keep.any():
            tail = (t[keep], nrm[keep])
    if prediction is not None and prediction.supported and tail is not None:
        t, nrm = tail
        lo = max(t[0], t[-1] / 10.0)
        guide = t[t >= lo]
        if guide.size >= 2:
            anchor = nrm[t >= lo][0]
            if prediction.form == "polynomial":
                theta = anchor * (guide / guide[0]) ** (-prediction.exponent)
                label = f"guide t^-{prediction.exponent:g}"
            else:
                theta = anchor * np.exp(-(guide - guide[0]))
                label = "guide exp(-t)"
            ax.loglog(guide, theta, "k--", label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("L^ell norm")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _dump_json(path, doc) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True,
                            default=decay._json_default))
        fh.write("\n")


# ---------------------------------------------------------------------------
# Experiment execution
# ---------------------------------------------------------------------------

def _evolution_report(config: ExperimentConfig, result, ell: float):
    """Fit one ell-series; verdict against the catalog when checking."""
    fit = decay.fit_rate(result, ell=ell)
    diag = decay.check_dissipation_inequality(result, ell=ell)
    meta = {
        "operator": repr(config.operator),
        "grid": f"{config.grid.kind} N={config.grid.points_per_axis}",
        "dt": config.scheme.dt if config.scheme.dt is not None else "auto",
        "t_final": config.scheme.t_final,
        "steps": result.steps,
        "seed": config.seed,
    }
    if config.kind == "evolution":
        return None, fit, diag, meta
    prediction = decay.predicted_rate(
        config.operator, config.scheme.lambda1, config.scheme.lambda2,
        config.scheme.alpha, ell, n=config.grid.ndim)
    report = decay.verdict(
        prediction, fit, config.tol_rel,
        spec=type(config.operator).__name__, regime=config.regime,
        alpha=config.scheme.alpha if config.scheme.lambda1 > 0 else None,
        ell=ell, dissipation=diag, run_metadata=meta)
    return report, fit, diag, meta


def run_experiment(config: ExperimentConfig, out_dir=None, quiet=False) -> int:
    """Execute one experiment, write its artifacts, return the exit code."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = (lambda *a, **k: None) if quiet else click.echo

    if config.kind == "kernel-validate":
        checks = kernel_checks()
        doc = {"version": "1", "kind": "kernel-validate",
               "checks": [{"name": n, "passed": p, "detail": d}
                          for n, p, d in checks]}
        _dump_json(out / "report.json", doc)
        ok = all(p for _, p, _ in checks)
        for name, passed, detail in checks:
            tag = _styled("PASS", fg="green") if passed else _styled("FAIL", fg="red")
            echo(f"{tag}  {name}: {detail}")
        return 0 if ok else 2

    if config.kind == "recurrence":
        w = config.walk
        estimate = kernels.escape_product(w["s"], w["n"], w["rho"],
                                          int(w["horizon"]))
        doc = {"version": "1", "kind": "recurrence",
               "estimate": estimate.to_json_dict()}
        if w["trials"] > 0:
            stats = kernels.walk_return_stats(
                w["n"], w["s"], w["rho"], int(w["horizon"]),
                int(w["trials"]), seed=int(w.get("seed", config.seed)))
            doc["monte_carlo"] = stats.to_json_dict()
        _dump_json(out / "report.json", doc)
        echo(f"classification: {estimate.classification}  "
             f"(product {estimate.product:.3e})")
        return 0

    # evolution / catalog-check
    initial = build_initial_field(config)
    result = run_evolution(initial, config.operator, config.scheme,
                           ells=config.ells)
    write_norms_csv(out / "norms.csv", result, config.ells)

    reports, fits = [], {}
    worst = "PASS"
    prediction = None
    for ell in config.ells:
        report, fit, diag, meta = _evolution_report(config, result, ell)
        fits[ell] = (fit, diag, meta)
        if report is not None:
            reports.append(report)
            prediction = report.predicted
            if report.verdict == "FAIL":
                worst = "FAIL"
            elif report.verdict == "INCONCLUSIVE" and worst == "PASS":
                worst = "INCONCLUSIVE"

    if config.kind == "catalog-check":
        if len(reports) == 1:
            (out / "report.json").write_text(reports[0].to_json() + "\n")
        else:
            docs = [json.loads(r.to_json()) for r in reports]
            _dump_json(out / "report.json",
                       {"version": "1", "reports": docs})
        for report in reports:
            color = {"PASS": "green", "FAIL": "red"}.get(report.verdict, "yellow")
            echo(f"{_styled(report.verdict, fg=color)}  ell={report.ell:g}  "
                 f"predicted {report.predicted.form}"
                 + (f" rate {report.predicted.exponent:g}"
                    if report.predicted.form == "polynomial" else "")
                 + f", fitted {report.fitted.form} rate {report.fitted.rate:.4g}")
    else:
        doc = {"version": "1", "kind": "evolution",
               "fits": {f"{ell:g}": {
                   "fit": asdict(fit), "dissipation": asdict(diag),
                   "run_metadata": meta}
                   for ell, (fit, diag, meta) in fits.items()}}
        _dump_json(out / "report.json", doc)
        for ell, (fit, _, _) in fits.items():
            echo(f"ell={ell:g}: fitted {fit.form} rate {fit.rate:.4g} "
                 f"(R^2 {fit.r_squared:.3f})")

    write_decay_svg(out / "decay.svg", result, config.ells, prediction)
    return 2 if worst == "FAIL" else 0


# ---------------------------------------------------------------------------
# Kernel property suite
# ---------------------------------------------------------------------------

def kernel_checks() -> list:
    """Fast self-contained property checks of the kernel stack."""
    checks = []

    value = kernels.kernel_value(0.5, 1, 0.0, 1.0)
    err = abs(value - 1.0 / math.pi)
    checks.append(("poisson kernel value at origin, n=1",
                   err < 1e-8, f"|G(0,1) - 1/pi| = {err:.2e}"))

    worst = 0.0
    for n in (1, 2, 3):
        worst = max(worst, abs(kernels.ball_mass(1.0, n, 1e6, 0.7) - 1.0))
    checks.append(("gaussian unit mass, n=1..3",
                   worst < 1e-10, f"max deficiency {worst:.2e}"))

    rng = np.random.default_rng(7)
    worst = 0.0
    for s, n in ((0.25, 1), (0.75, 1), (0.75, 2), (0.75, 3)):
        for _ in range(3):
            r, t = float(rng.uniform(0.1, 3.0)), float(rng.uniform(0.5, 2.0))
            lhs = kernels.kernel_value(s, n, r, t)
            rhs = t ** (-n / (2 * s)) * kernels.kernel_value(
                s, n, r * t ** (-1 / (2 * s)), 1.0)
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
    checks.append(("self-similar scaling identity",
                   worst < 1e-8, f"max relative error {worst:.2e}"))

    rhos = np.array([0.3, 1.0, 3.0, 10.0])
    masses = np.array([kernels.ball_mass(0.75, 1, r, 1.0) for r in rhos])
    mono = bool(np.all(np.diff(masses) > 0) and np.all(masses > 0)
                and np.all(masses < 1))
    checks.append(("ball mass positive, increasing, below 1",
                   mono, f"masses {np.array2string(masses, precision=4)}"))

    est = kernels.escape_product(0.25, 1, 0.1, 1000)
    ok = (est.classification == "transient"
          and np.all(est.q >= 0) and np.all(est.q <= 1))
    checks.append(("escape probabilities in [0,1], s<1/2 transient in n=1",
                   bool(ok), f"product {est.product:.3e}"))
    return checks


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _parse_set(expr: str):
    """Parse one --set key=v1,v2,... into (dotted key, list of values)."""
    if "=" not in expr:
        raise ConfigError([f"--set {expr!r}: expected key=v1,v2,..."])
    key, _, values = expr.partition("=")
    key = key.strip()
    out = []
    for token in values.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            out.append(tomli.loads(f"v = {token}")["v"])
        except tomli.TOMLDecodeError:
            out.append(token)
    if not out:
        raise ConfigError([f"--set {key}: empty value range refused"])
    return key, out


def _set_in(doc: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def run_sweep(template: dict, ranges, out_dir: str, jobs: int,
              seed, tol) -> int:
    """Cartesian-product sweep; write sweep.csv in deterministic order."""
    keys = [k for k, _ in ranges]
    combos = list(itertools.product(*(v for _, v in ranges)))
    if not combos:
        raise ConfigError(["sweep: empty parameter range refused"])
    if len(combos) > _SWEEP_BUDGET:
        raise ConfigError([f"sweep: {len(combos)} runs exceed the budget "
                           f"of {_SWEEP_BUDGET}"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    configs = []
    for idx, combo in enumerate(combos):
        doc = json.loads(json.dumps(template))   # deep copy
        for key, value in zip(keys, combo):
            _set_in(doc, key, value)
        configs.append(config_from_document(
            doc, out_dir=str(out / f"run_{idx:03d}"), seed=seed, tol=tol))

    def member(idx: int):
        config = configs[idx]
        initial = build_initial_field(config)
        result = run_evolution(initial, config.operator, config.scheme,
                               ells=config.ells)
        ell = config.ells[0]
        fit = decay.fit_rate(result, ell=ell)
        prediction = decay.predicted_rate(
            config.operator, config.scheme.lambda1, config.scheme.lambda2,
            config.scheme.alpha, ell, n=config.grid.ndim)
        report = decay.verdict(prediction, fit, config.tol_rel,
                               spec=type(config.operator).__name__,
                               regime=config.regime, ell=ell)
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
        write_norms_csv(Path(config.out_dir) / "norms.csv", result, config.ells)
        (Path(config.out_dir) / "report.json").write_text(report.to_json() + "\n")
        return report

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        reports = list(pool.map(member, range(len(combos))))

    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(keys) + ["predicted_form", "predicted_rate",
                                      "fitted_form", "fitted_rate", "verdict"])
        for combo, report in zip(combos, reports):
            pred = report.predicted
            writer.writerow(
                [_fmt(v) for v in combo]
                + [pred.form,
                   _fmt(pred.exponent) if pred.exponent is not None else "",
                   report.fitted.form, _fmt(report.fitted.rate),
                   report.verdict])
    worst = "PASS"
    for report in reports:
        if report.verdict == "FAIL":
            worst = "FAIL"
    return 2 if worst == "FAIL" else 0


# ---------------------------------------------------------------------------
# Click entry points
# ---------------------------------------------------------------------------

@click.group()
def main():
    """Decay-rate laboratory for mixed-order evolution equations."""


@main.command("run")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, help="Output directory override.")
@click.option("--seed", default=None, type=int, help="Seed override.")
@click.option("--tol", default=None, type=float,
              help="Relative rate tolerance override.")
@click.option("--jobs", default=1, type=int, show_default=True,
              help="Worker bound (single runs are sequential).")
def run_cmd(config_path, out, seed, tol, jobs):
    """Run one experiment from a TOML config."""
    try:
        config = parse_config(Path(config_path).read_text(),
                              out_dir=out, seed=seed, tol=tol)
    except (ConfigError, tomli.TOMLDecodeError) as exc:
        _fail("config", exc)
    try:
        code = run_experiment(config)
    except Exception as exc:            # noqa: BLE001 - CLI boundary
        _fail("run", exc)
    sys.exit(code)


@main.command("sweep")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--set", "assignments", multiple=True, required=True,
              help="Swept parameter, e.g. --set operator.p=2.5,3,4")
@click.option("--out", default="sweep_out", show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--tol", default=None, type=float)
@click.option("--jobs", default=1, type=int, show_default=True)
def sweep_cmd(config_path, assignments, out, seed, tol, jobs):
    """Run the Cartesian product of parameter ranges over a template."""
    try:
        template = tomli.loads(Path(config_path).read_text())
        ranges = [_parse_set(expr) for expr in assignments]
        code = run_sweep(template, ranges, out, jobs, seed, tol)
    except (ConfigError, tomli.TOMLDecodeError) as exc:
        _fail("sweep", exc)
    except Exception as exc:            # noqa: BLE001 - CLI boundary
        _fail("sweep", exc)
    sys.exit(code)


@main.group("catalog")
def catalog_group():
    """Decay-rate catalog."""


@catalog_group.command("list")
def catalog_list():
    """Print every catalog row with its guards and citation."""
    for row in decay.catalog_rows():
        click.echo(row.describe())


@main.group("kernels")
def kernels_group():
    """Stable heat kernel utilities."""


@kernels_group.command("validate")
@click.option("--out", default=None, help="Also write report.json here.")
def kernels_validate(out):
    """Run the kernel property suite."""
    try:
        checks = kernel_checks()
    except Exception as exc:            # noqa: BLE001 - CLI boundary
        _fail("kernels validate", exc)
    ok = True
    for name, passed, detail in checks:
        tag = _styled("PASS", fg="green") if passed else _styled("FAIL", fg="red")
        click.echo(f"{tag}  {name}: {detail}")
        ok = ok and passed
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        _dump_json(Path(out) / "report.json",
                   {"version": "1", "kind": "kernel-validate",
                    "checks": [{"name": n, "passed": p, "detail": d}
                               for n, p, d in checks]})
    sys.exit(0 if ok else 2)


def _fail(stage: str, exc) -> None:
    click.echo(f"error during {stage}: {exc}", err=True)
    sys.exit(1)


if __name__ == "__main__":
    main()
