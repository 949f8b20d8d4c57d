"""Constant-of-motion certification and the completeness/commutation report."""

import json

import numpy as np
import pytest

from comgreen.catalog import catalog_hamiltonian, catalog_observable, catalog_set
from comgreen.conservation import (
    chebyshev_times,
    check_commuting_complete_set,
    conservation_residual,
)
from comgreen.phasespace import LinearObservable, ZERO, ts_const

X_1D = LinearObservable(dim=1, alpha=(ts_const(1.0), ZERO), label="x")


def test_oscillator_initial_position_is_conserved():
    A = catalog_observable("ho_x0")
    H = catalog_hamiltonian("ho")
    for t in (0.1, 0.5, 1.3):
        assert conservation_residual(A, H, t).max_coefficient(t) < 1e-10


def test_ramp_initial_position_is_conserved():
    A = catalog_observable("ramp_x0")
    H = catalog_hamiltonian("ramp")
    for t in (0.2, 1.0, 2.5):
        assert conservation_residual(A, H, t).max_coefficient(t) < 1e-10


def test_plain_position_is_not_conserved():
    H = catalog_hamiltonian("ho")
    R = conservation_residual(X_1D, H, 0.8)
    # dx/dt + [x, H]/(i hbar) = p/m
    assert R.alpha_at(0.8) == pytest.approx([0.0, 1.0], abs=1e-14)


def test_all_catalog_observables_conserved_50_samples():
    systems = [("ho_x0", "ho"), ("ho_p0", "ho"), ("free_x0", "free"),
               ("ramp_x0", "ramp"), ("uniform_x0", "uniform"),
               ("magnetic_x0", "magnetic"), ("magnetic_y0", "magnetic")]
    for oname, hname in systems:
        A = catalog_observable(oname)
        H = catalog_hamiltonian(hname)
        worst = max(
            conservation_residual(A, H, t).max_coefficient(t)
            for t in chebyshev_times(0.05, 3.0, 50)
        )
        assert worst <= 1e-10, (oname, worst)


def test_detector_has_no_false_negatives():
    # random non-conserved observables must show a nonzero residual
    rng = np.random.default_rng(11)
    H = catalog_hamiltonian("ho")
    found = 0
    for _ in range(100):
        coeffs = rng.uniform(-2, 2, size=3)
        A = LinearObservable(dim=1, alpha=(ts_const(coeffs[0]), ts_const(coeffs[1])),
                             gamma=ts_const(coeffs[2]))
        t = rng.uniform(0.1, 2.0)
        R = conservation_residual(A, H, t)
        if max(abs(coeffs[0]), abs(coeffs[1])) > 1e-3:
            assert R.max_coefficient(t) >= 1e-3 * min(1.0, max(abs(c) for c in coeffs[:2]))
            found += 1
    assert found > 90


def test_magnetic_set_passes():
    observables, H = catalog_set("magnetic")
    report = check_commuting_complete_set(observables, H, [0.3, 1.0, 2.0], tol=1e-10)
    assert report.passed
    assert all(s.Ap_cond < 1e8 for s in report.samples)


def test_completeness_fails_at_caustic():
    # sin(w t) = 0 makes the momentum block singular: degenerate window
    observables, H = catalog_set("ho")
    report = check_commuting_complete_set(observables, H, [np.pi], tol=1e-10)
    assert not report.passed
    assert report.samples[0].Ap_cond > 1e8 or not np.isfinite(report.samples[0].Ap_cond)
    assert report.samples[0].residual_max <= 1e-10  # conservation itself still holds


def test_non_conserved_set_fails():
    H = catalog_hamiltonian("free")
    report = check_commuting_complete_set([X_1D], H, [0.5, 1.0], tol=1e-10)
    assert not report.passed
    assert report.samples[0].residual_max > 1e-3


def test_wrong_set_size_is_structural():
    observables, H = catalog_set("magnetic")
    report = check_commuting_complete_set(observables[:1], H, [0.5], tol=1e-10)
    assert report.structural_failure
    assert not report.passed
    assert "size" in report.message


def test_pairwise_commutation_50_samples():
    observables, H = catalog_set("magnetic")
    report = check_commuting_complete_set(
        observables, H, chebyshev_times(0.05, 6.0, 50), tol=1e-10
    )
    assert max(s.pairwise_max for s in report.samples) <= 1e-12


def test_report_serializes_to_json():
    observables, H = catalog_set("ho")
    report = check_commuting_complete_set(observables, H, [0.4, 1.1], tol=1e-10)
    payload = json.loads(json.dumps(report.to_dict()))
    assert payload["pass"] is True
    assert {"t", "residual_max", "pairwise_max", "Ap_cond"} <= set(payload["samples"][0])


def test_chebyshev_times_interior_and_sorted():
    ts = chebyshev_times(0.0, 2.0, 50)
    assert ts.size == 50
    assert np.all(np.diff(ts) > 0)
    assert ts[0] > 0.0 and ts[-1] < 2.0
