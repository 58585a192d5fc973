"""Decay catalog, rate fitting, verdicts, and the dissipation diagnostic."""

import json
import math

import numpy as np
import pytest

from decaylab import operators as ops
from decaylab.decay import (DecayPrediction, catalog_examples, catalog_rows,
                            check_dissipation_inequality, fit_rate,
                            predicted_rate, verdict)


def poly_series(beta, noise=0.0, seed=0):
    t = np.geomspace(1.0, 1e3, 200)
    n = t ** (-beta)
    if noise:
        n *= np.exp(noise * np.random.default_rng(seed).standard_normal(200))
    return t, n


class TestFitRate:
    def test_recovers_polynomial_exponent(self):
        fit = fit_rate(poly_series(0.7))
        assert fit.form == "polynomial"
        assert fit.rate == pytest.approx(0.7, abs=1e-8)
        assert fit.stderr < 1e-10

    def test_recovers_exponential_rate(self):
        t = np.linspace(0.5, 30.0, 300)
        fit = fit_rate((t, np.exp(-t / 3.0)))
        assert fit.form == "exponential"
        assert fit.rate == pytest.approx(1.0 / 3.0, abs=1e-8)

    def test_noisy_polynomial(self):
        fit = fit_rate(poly_series(0.5, noise=0.02, seed=3))
        assert fit.form == "polynomial"
        assert fit.rate == pytest.approx(0.5, abs=0.01)

    def test_underflow_excluded(self):
        t = np.geomspace(1.0, 100.0, 300)
        n = np.exp(-t)          # reaches ~1e-44, far below the cutoff
        fit = fit_rate((t, n))
        assert fit.form == "exponential"
        assert fit.window[1] < 35.0

    def test_window_override(self):
        t, n = poly_series(1.0)
        fit = fit_rate((t, n), window=(10.0, 100.0))
        assert fit.window[0] >= 10.0
        assert fit.window[1] <= 100.0

    def test_too_few_samples_raise(self):
        with pytest.raises(ValueError):
            fit_rate((np.array([1.0, 2.0]), np.array([1.0, 0.5])))


class TestVerdict:
    def test_pass_on_matching_rate(self):
        pred = DecayPrediction("polynomial", 0.5, source="x")
        fit = fit_rate(poly_series(0.52))
        report = verdict(pred, fit)
        assert report.verdict == "PASS"
        assert report.margin == pytest.approx(0.04)

    def test_fail_on_form_mismatch(self):
        pred = DecayPrediction("exponential", source="x")
        report = verdict(pred, fit_rate(poly_series(0.5)))
        assert report.verdict == "FAIL"
        assert "form mismatch" in report.annotation

    def test_fail_on_rate_mismatch(self):
        pred = DecayPrediction("polynomial", 1.0, source="x")
        report = verdict(pred, fit_rate(poly_series(0.5)))
        assert report.verdict == "FAIL"

    def test_inconclusive_within_two_stderr(self):
        # a clean fit whose rate misses the prediction by more than tol
        # but by less than two of its (inflated) standard errors
        fit = fit_rate(poly_series(0.5, noise=1.0, seed=7))
        gap = abs(fit.rate - fit.rate * 1.3)
        pred = DecayPrediction("polynomial", fit.rate * 1.3, source="x")
        if gap <= 2.0 * fit.stderr:
            assert verdict(pred, fit, tol_rel=0.05).verdict == "INCONCLUSIVE"
        else:
            assert verdict(pred, fit, tol_rel=0.05).verdict == "FAIL"

    def test_ambiguous_rows_never_pass(self):
        pred = DecayPrediction("exponential", source="x", ambiguous=True)
        t = np.linspace(0.5, 30.0, 300)
        fit = fit_rate((t, np.exp(-t)))
        assert verdict(pred, fit).verdict == "INCONCLUSIVE"

    def test_unsupported_prediction_rejected(self):
        pred = DecayPrediction("unsupported", reason="outside validity")
        with pytest.raises(ValueError):
            verdict(pred, fit_rate(poly_series(1.0)))

    def test_report_json_versioned_and_stable(self):
        pred = DecayPrediction("polynomial", 0.5, source="x")
        report = verdict(pred, fit_rate(poly_series(0.5)), spec="Laplacian",
                         regime="mixed", alpha=0.5)
        doc = json.loads(report.to_json())
        assert doc["version"] == "1"
        assert doc["verdict"] == "PASS"
        assert report.to_json() == report.to_json()


class TestCatalog:
    def test_row_counts_per_table(self):
        rows = catalog_rows()
        assert len([r for r in rows if r.table == 1]) == 18
        assert len([r for r in rows if r.table == 2]) == 16

    def test_rows_fully_annotated(self):
        for row in catalog_rows():
            assert row.theta.startswith("Theta(t)")
            assert row.ell_range
            assert row.source
            assert row.regime in ("mixed", "classical")
            assert "(2019)" in row.source

    def test_one_reachable_example_per_row(self):
        rows = catalog_rows()
        examples = catalog_examples()
        assert len(rows) == len(examples)
        for row, (spec, lam1, alpha, n) in zip(rows, examples):
            pred = predicted_rate(spec, lam1, 1.0 - lam1, alpha,
                                  ell=2.0, n=n)
            if pred.supported:
                expected_form = "exponential" if "e^" in row.theta \
                    else "polynomial"
                assert pred.form == expected_form, row.operator
                assert pred.ambiguous == row.ambiguous
            else:
                # the only permitted unsupported annotations
                assert row.note, row.operator

    def test_ambiguous_only_bilaplacian(self):
        flagged = [r for r in catalog_rows() if r.ambiguous]
        assert len(flagged) == 1
        assert "bi-Laplacian" in flagged[0].operator

    def test_mixed_rates_scale_with_alpha(self):
        spec = ops.FractionalLaplacian(0.5)
        p1 = predicted_rate(spec, 1.0, 0.0, 0.3, 2.0)
        p2 = predicted_rate(spec, 1.0, 0.0, 0.6, 2.0)
        assert p2.exponent == pytest.approx(2.0 * p1.exponent)

    def test_fpl_dichotomy(self):
        fast = predicted_rate(ops.FractionalPLaplacian(0.5, 3.0),
                              0.0, 1.0, None, 2.0)
        assert fast.form == "polynomial"
        assert fast.exponent == pytest.approx(1.0)
        slow = predicted_rate(ops.FractionalPLaplacian(0.5, 1.5),
                              0.0, 1.0, None, 2.0)
        assert slow.form == "exponential"

    def test_kirchhoff_form_switch(self):
        nondeg = predicted_rate(ops.Kirchhoff(1.0, 1.0), 0.0, 1.0, None, 2.0)
        assert nondeg.form == "exponential"
        deg = predicted_rate(ops.Kirchhoff(0.0, 1.0), 0.0, 1.0, None, 2.0)
        assert deg.form == "polynomial"
        assert deg.exponent == pytest.approx(0.5)
        mixed_deg = predicted_rate(ops.Kirchhoff(0.0, 1.0), 1.0, 0.0, 0.6, 2.0)
        assert mixed_deg.exponent == pytest.approx(0.2)

    def test_kirchhoff_degenerate_ell_restriction_large_n(self):
        # for n >= 5 the degenerate row only covers ell < 2n/(n-4)
        spec = ops.Kirchhoff(0.0, 1.0)
        assert predicted_rate(spec, 1.0, 0.0, 0.5, 2.0, n=5).supported
        with pytest.raises(ValueError):
            predicted_rate(spec, 1.0, 0.0, 0.5, 20.0, n=5)

    def test_ell_validation(self):
        with pytest.raises(ValueError):
            predicted_rate(ops.Laplacian(), 0.0, 1.0, None, 0.5)
        with pytest.raises(ValueError):
            predicted_rate(ops.Laplacian(), 0.7, 0.3, None, 2.0)  # no alpha

    def test_classical_heat_is_exponential(self):
        pred = predicted_rate(ops.Laplacian(), 0.0, 1.0, None, 2.0)
        assert pred.form == "exponential"

    def test_porous_fast_diffusion_unsupported(self):
        pred = predicted_rate(ops.PLaplacianPorous(1.5, 0.8), 0.0, 1.0,
                              None, 2.0)
        assert not pred.supported
        assert pred.reason


class TestDissipationDiagnostic:
    def test_eigen_decay_gives_gamma_one(self):
        # [DERIVED] for D = mu ||u||^2 the fitted exponent is exactly 1
        class Series:
            times = np.linspace(0.0, 5.0, 200)
            norms = {2.0: np.exp(-times)}
            dissipation = {2.0: 2.0 * norms[2.0] ** 2}

        diag = check_dissipation_inequality(Series())
        assert diag.gamma_hat == pytest.approx(1.0, abs=1e-10)
        assert diag.C_hat == pytest.approx(0.5, rel=1e-10)
        assert diag.fraction_nonpositive == 0.0
