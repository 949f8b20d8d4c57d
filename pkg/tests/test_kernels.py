"""Closed-form kernels: printed values, symmetries, limits, composition."""

import numpy as np
import pytest

from comgreen.catalog import catalog_hamiltonian, catalog_kernel, catalog_observable
from comgreen.eigenstates import (
    gaussian_state,
    kernel_evaluate,
    smear_kernel_with_gaussian,
    state_integral,
)
from comgreen.errors import ContinuationError, SingularTimeError, WindowError
from comgreen.gridsim import Axis


# ---------------------------------------------------------------------------
# point values and constants


def test_oscillator_kernel_at_quarter_period_origin():
    K = catalog_kernel("ho")
    val = kernel_evaluate(K, 0.0, np.pi / 2, 0.0)
    expected = (1.0 / np.sqrt(2 * np.pi)) * np.exp(-1j * np.pi / 4)
    assert val == pytest.approx(expected, abs=1e-15)
    assert val.real == pytest.approx(0.2821, abs=5e-5)
    assert val.imag == pytest.approx(-0.2821, abs=5e-5)


def test_free_kernel_at_coincidence():
    K = catalog_kernel("free")
    val = kernel_evaluate(K, 1.3, 1.0, 1.3)
    assert val == pytest.approx((1.0 / np.sqrt(2 * np.pi)) * np.exp(-1j * np.pi / 4),
                                abs=1e-15)


def test_oscillator_kernel_cross_phase():
    # at w t = pi/2 the cos term drops; phase is -pi/4 - m w x x0/hbar
    K = catalog_kernel("ho")
    val = kernel_evaluate(K, 1.0, np.pi / 2, 2.0)
    assert abs(val) == pytest.approx(1.0 / np.sqrt(2 * np.pi), abs=1e-15)
    phase = np.angle(val)
    assert np.exp(1j * phase) == pytest.approx(np.exp(1j * (-np.pi / 4 - 2.0)), abs=1e-12)


def test_printed_constants():
    assert catalog_kernel("ho").C == pytest.approx(np.sqrt(1.0 / (2j * np.pi)), abs=1e-15)
    assert catalog_kernel("ramp").C == pytest.approx(np.sqrt(1.0 / (2j * np.pi)), abs=1e-15)
    assert catalog_kernel("magnetic").C == pytest.approx(1.0 / (4j * np.pi), abs=1e-15)
    p = {"m": 2.5, "omega": 1.7, "hbar": 0.8}
    assert catalog_kernel("ho", p).C == pytest.approx(
        np.sqrt(2.5 * 1.7 / (2j * np.pi * 0.8)), abs=1e-14
    )
    assert catalog_kernel("magnetic", p).C == pytest.approx(
        2.5 * 1.7 / (4j * np.pi * 0.8), abs=1e-14
    )


def test_ramp_kernel_exponent_terms():
    # K = C/sqrt(t) exp{(im/2 hbar t)[(x-x0)^2 + k t^3 (2x + x0)/(3m) - k^2 t^6/(45 m^2)]}
    K = catalog_kernel("ramp")
    t, x, x0, k = 0.8, 0.9, -0.4, 1.0
    val = kernel_evaluate(K, x, t, x0)
    phase = ((x - x0) ** 2 + k * t**3 * (2 * x + x0) / 3.0 - k**2 * t**6 / 45.0) / (2 * t)
    expected = np.sqrt(1.0 / (2j * np.pi * t)) * np.exp(1j * phase)
    assert val == pytest.approx(expected, abs=1e-14)


def test_uniform_kernel_exponent_terms():
    K = catalog_kernel("uniform")
    t, x, x0, eE = 1.1, 0.5, -0.2, 1.0
    val = kernel_evaluate(K, x, t, x0)
    phase = ((x - x0) ** 2 + eE * t**2 * (x + x0) - eE**2 * t**4 / 12.0) / (2 * t)
    expected = np.sqrt(1.0 / (2j * np.pi * t)) * np.exp(1j * phase)
    assert val == pytest.approx(expected, abs=1e-14)


def test_magnetic_kernel_formula():
    K = catalog_kernel("magnetic")
    t = 1.9
    r, r0 = np.array([0.7, -0.3]), np.array([-0.2, 0.5])
    val = kernel_evaluate(K, r, t, r0)
    cot = 1.0 / np.tan(t / 2)
    phase = 0.25 * (np.sum((r - r0) ** 2) * cot + 2 * (r0[0] * r[1] - r0[1] * r[0]))
    expected = (1.0 / (4j * np.pi)) / np.sin(t / 2) * np.exp(1j * phase)
    assert val == pytest.approx(expected, abs=1e-14)


def test_oscillator_interchange_symmetry():
    K = catalog_kernel("ho")
    rng = np.random.default_rng(1)
    for _ in range(50):
        x, x0 = rng.uniform(-3, 3, size=2)
        t = rng.uniform(0.1, 3.0)
        a = kernel_evaluate(K, x, t, x0)
        b = kernel_evaluate(K, x0, t, x)
        assert abs(a - b) <= 1e-13


# ---------------------------------------------------------------------------
# windows, caustics, branches


def test_window_enforced():
    K = catalog_kernel("ho")
    with pytest.raises(WindowError):
        kernel_evaluate(K, 0.0, 3.5, 0.0)  # past pi
    with pytest.raises(WindowError):
        kernel_evaluate(K, 0.0, -0.1, 0.0)


def test_caustic_time_raises():
    K = catalog_kernel("free")
    with pytest.raises((SingularTimeError, WindowError)):
        kernel_evaluate(K, 0.0, 1e-13, 0.0)
    Km = catalog_kernel("magnetic", branch="tracked")
    with pytest.raises(SingularTimeError):
        kernel_evaluate(Km, np.zeros(2), 2 * np.pi, np.zeros(2))


def test_tracked_branch_periodicity():
    # one full period multiplies the oscillator kernel by exp(-i pi)
    K = catalog_kernel("ho", branch="tracked")
    t = 1.1
    a = kernel_evaluate(K, 0.7, t, -0.2)
    b = kernel_evaluate(K, 0.7, t + 2 * np.pi, -0.2)
    assert b == pytest.approx(-a, rel=1e-10)
    # 2D: one cyclotron period also gives exp(-i pi), via exp(-i pi/2) per axis
    Km = catalog_kernel("magnetic", branch="tracked")
    r, r0 = np.array([0.4, 0.1]), np.array([-0.3, 0.2])
    am = kernel_evaluate(Km, r, 2.0, r0)
    bm = kernel_evaluate(Km, r, 2.0 + 2 * np.pi, r0)
    assert bm == pytest.approx(-am, rel=1e-10)


def test_default_branch_stops_at_first_window():
    K = catalog_kernel("ho")
    with pytest.raises(WindowError):
        kernel_evaluate(K, 0.0, np.pi + 0.4, 0.0)


# ---------------------------------------------------------------------------
# free-kernel limits (small-parameter recovery)


def _rel_diff(a, b):
    return np.max(np.abs(a - b) / np.abs(b))


def test_limit_oscillator_to_free():
    eps = 1e-4
    Kw = catalog_kernel("ho", {"omega": eps})
    Kf = catalog_kernel("free")
    xs = np.linspace(-0.5, 0.5, 9)[:, None]
    x0s = np.linspace(-0.4, 0.4, 7)[None, :]
    for t in (0.1, 0.5, 1.5):
        assert _rel_diff(Kw.evaluator(xs, t, x0s), Kf.evaluator(xs, t, x0s)) <= 1e-6


def test_limit_ramp_to_free():
    # deviation is linear in k (phase ~ k t^2 x), so the sample box fixes
    # the attainable bound: |x| <= 0.3, t <= 0.2 keeps it under 1e-6 at k=1e-4
    eps = 1e-4
    Kk = catalog_kernel("ramp", {"k": eps})
    Kf = catalog_kernel("free")
    xs = np.linspace(-0.3, 0.3, 9)[:, None]
    x0s = np.linspace(-0.3, 0.3, 7)[None, :]
    for t in (0.05, 0.1, 0.2):
        assert _rel_diff(Kk.evaluator(xs, t, x0s), Kf.evaluator(xs, t, x0s)) <= 1e-6


def test_limit_uniform_to_free():
    eps = 1e-4
    Ke = catalog_kernel("uniform", {"eE": eps})
    Kf = catalog_kernel("free")
    xs = np.linspace(-0.08, 0.08, 9)[:, None]
    x0s = np.linspace(-0.08, 0.08, 7)[None, :]
    for t in (0.02, 0.05, 0.1):
        assert _rel_diff(Ke.evaluator(xs, t, x0s), Kf.evaluator(xs, t, x0s)) <= 1e-6


def test_limit_magnetic_to_2d_free():
    eps = 1e-4
    Kb = catalog_kernel("magnetic", {"omega": eps})

    def free2d(x, t, x0):
        d2 = np.sum((x - x0) ** 2, axis=-1)
        return (1.0 / (2j * np.pi * t)) * np.exp(1j * d2 / (2 * t))

    s = np.linspace(-0.1, 0.1, 7)
    xs = np.stack([s, -0.5 * s], axis=-1)[:, None, :]
    x0s = np.stack([0.3 * s, s], axis=-1)[None, :, :]
    for t in (0.1, 0.4, 1.0):
        assert _rel_diff(Kb.evaluator(xs, t, x0s), free2d(xs, t, x0s)) <= 1e-6


def test_limit_scaling_with_parameter():
    # the deviation from the free kernel shrinks linearly with the parameter
    Kf = catalog_kernel("free")
    xs = np.linspace(-0.3, 0.3, 5)[:, None]
    x0s = np.linspace(-0.2, 0.2, 5)[None, :]
    t = 0.2
    d1 = _rel_diff(catalog_kernel("uniform", {"eE": 1e-3}).evaluator(xs, t, x0s),
                   Kf.evaluator(xs, t, x0s))
    d2 = _rel_diff(catalog_kernel("uniform", {"eE": 1e-4}).evaluator(xs, t, x0s),
                   Kf.evaluator(xs, t, x0s))
    assert d1 / d2 == pytest.approx(10.0, rel=0.05)


# ---------------------------------------------------------------------------
# composition (semigroup) and unitarity diagnostics


def _compose_on_grid(K, t1, t2, x, x0, n=6001, half=60.0, eps=1e-2):
    y, h = np.linspace(-half, half, n, retstep=True)
    vals1 = K.evaluator(x, t2, y)
    vals2 = K.evaluator(y, t1, x0)
    def reg(e):
        return np.sum(vals1 * vals2 * np.exp(-e * y**2)) * h
    # regulator extrapolation: I(eps) analytic in eps near 0
    return 2.0 * reg(eps / 2) - reg(eps)


@pytest.mark.parametrize("system,t1,t2", [
    ("free", 0.4, 0.7),
    ("ho", 0.5, 0.8),
    ("uniform", 0.5, 0.6),
])
def test_semigroup_composition(system, t1, t2):
    # one-parameter composition applies to the time-independent systems;
    # the ramp propagator is two-time (H depends on t) and is excluded
    K = catalog_kernel(system)
    for x, x0 in [(0.3, -0.2), (0.0, 0.5)]:
        lhs = _compose_on_grid(K, t1, t2, x, x0)
        rhs = kernel_evaluate(K, x, t1 + t2, x0)
        assert abs(lhs - rhs) / abs(rhs) <= 1e-4


def test_semigroup_composition_2d_magnetic():
    K = catalog_kernel("magnetic")
    t1, t2 = 0.7, 0.9
    x = np.array([0.4, -0.1])
    x0 = np.array([-0.2, 0.3])
    half, n = 40.0, 1401
    g, h = np.linspace(-half, half, n, retstep=True)
    Y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    vals1 = K.evaluator(x, t2, Y)
    vals2 = K.evaluator(Y, t1, x0)
    r2 = np.sum(Y**2, axis=-1)

    def reg(e):
        return np.sum(vals1 * vals2 * np.exp(-e * r2)) * h * h

    lhs = 2.0 * reg(5e-3) - reg(1e-2)
    rhs = kernel_evaluate(K, x, t1 + t2, x0)
    assert abs(lhs - rhs) / abs(rhs) <= 1e-4


def test_smeared_kernel_orthogonality():
    # smeared kernels inherit the overlap of their smearing Gaussians
    K = catalog_kernel("ho")
    t, sigma = 0.9, 0.35
    axis = Axis(-14.0, 14.0, 4096)
    x = axis.points
    w = axis.trapz_weights
    overlaps = []
    for x0, x0p in [(0.0, 0.8), (-0.5, 0.5), (0.2, 1.4)]:
        a = smear_kernel_with_gaussian(K.quadform(t), x0, sigma)
        b = smear_kernel_with_gaussian(K.quadform(t), x0p, sigma)
        inner = np.sum(w * np.conj(a(x)) * b(x))
        expected = np.exp(-((x0 - x0p) ** 2) / (8 * sigma**2))
        overlaps.append((inner, expected))
        assert abs(inner - expected) / abs(expected) <= 1e-3
    # distinct centers are nearly orthogonal relative to the same center
    assert abs(overlaps[2][0]) < abs(overlaps[0][0])


def test_delta_limit_smearing():
    # as t -> 0 the smeared kernel reproduces the smearing Gaussian
    K = catalog_kernel("ho")
    sigma, x0 = 1.0, 0.4
    axis = Axis(-8.0, 8.0, 2048)
    x, w = axis.points, axis.trapz_weights
    g = gaussian_state(1, x0, sigma)
    sm = smear_kernel_with_gaussian(K.quadform(5e-4), x0, sigma)
    dist = np.sqrt(np.sum(w * np.abs(sm(x) - g(x)) ** 2))
    assert dist <= 1e-3


def test_delta_normalization_integral():
    # lim_{t->0} integral K(x, t; 0) dx = 1, via the closed-form Gaussian integral
    for system in ("free", "ho", "ramp", "uniform"):
        K = catalog_kernel(system)
        qf = K.quadform(1e-5)
        state_like = smear_kernel_with_gaussian(qf, 0.0, 1.0)  # smooth proxy
        assert state_like is not None  # smearing path exercised
        # direct integral of the unsmeared kernel column
        from comgreen.eigenstates import QuadraticPhaseState

        col = QuadraticPhaseState(dim=1, S=qf.S, w=qf.d, N=qf.amp, hbar=qf.hbar)
        # x0 = 0 column: exponent has no x0 terms left
        val = state_integral(col)
        assert val == pytest.approx(1.0, abs=2e-5)


# ---------------------------------------------------------------------------
# imaginary-time continuation plumbing


def test_continuation_guarded():
    K = catalog_kernel("ho")
    v = kernel_evaluate(K, 0.3, -0.5j, 0.2)
    assert v.imag == pytest.approx(0.0, abs=1e-14)  # Mehler-type: real positive
    assert v.real > 0
    with pytest.raises(ContinuationError):
        kernel_evaluate(K, 0.3, 0.5j, 0.2)  # wrong half axis


def test_quadform_consistent_with_evaluator():
    for system in ("free", "ho", "ramp", "uniform", "magnetic"):
        K = catalog_kernel(system)
        t = 0.9
        if K.dim == 1:
            x, x0 = 0.7, -0.3
        else:
            x, x0 = np.array([0.7, 0.1]), np.array([-0.3, 0.4])
        assert K.quadform(t).evaluate(x, x0) == pytest.approx(
            K.evaluator(x, t, x0), rel=1e-14
        )
        assert np.exp(K.log_evaluator(x, t, x0)) == pytest.approx(
            K.evaluator(x, t, x0), rel=1e-12
        )


def test_unknown_names_rejected():
    with pytest.raises(ValueError):
        catalog_kernel("driven")
    with pytest.raises(ValueError):
        catalog_observable("nope")
    with pytest.raises(ValueError):
        catalog_hamiltonian("nope")
    with pytest.raises(ValueError):
        catalog_kernel("ho", {"mass": 2.0})
