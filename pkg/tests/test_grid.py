"""Grid oracle: unitary evolution, kernel quadrature, residuals, spectra, I/O."""

import warnings

import numpy as np
import pytest

from comgreen._kernels import available_backends
from comgreen.catalog import catalog_hamiltonian, catalog_kernel, catalog_observable, catalog_set
from comgreen.conservation import eigenvalue_constancy_check
from comgreen.errors import ContinuationError, SupportError, WindowError
from comgreen.eigenstates import KernelSpec
from comgreen.gridsim import (
    Axis,
    GridState,
    evolve,
    expectation_value,
    gaussian_packet,
    imaginary_time_ground_state,
    kernel_convolve,
    l2_distance,
    load_binary,
    load_csv,
    pde_residual,
    save_binary,
    save_csv,
)


@pytest.fixture(autouse=True)
def _quiet_dt_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="dt=.*", category=RuntimeWarning)
        yield


def free_gaussian_exact(axis, t, sigma0=1.0, center=0.0):
    """Analytic free evolution of a real Gaussian packet (L2-normalized)."""
    x = axis.points
    st = sigma0 * np.sqrt(1.0 + (t / (2 * sigma0**2)) ** 2)
    pref = (2 * np.pi * sigma0**2) ** (-0.25) / np.sqrt(1.0 + 1j * t / (2 * sigma0**2))
    vals = pref * np.exp(-((x - center) ** 2) / (4 * sigma0**2 * (1.0 + 1j * t / (2 * sigma0**2))))
    return GridState(axes=(axis,), values=vals, t=t)


# ---------------------------------------------------------------------------
# grid plumbing


def test_axis_point_count_rule():
    Axis(-1, 1, 64)
    Axis(-1, 1, 32)  # power of two below 64 is allowed
    Axis(-1, 1, 100)
    with pytest.raises(ValueError):
        Axis(-1, 1, 48)


def test_norm_and_weights():
    ax = Axis(-8, 8, 256)
    psi = gaussian_packet(ax, 0.0, 0.7)
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)


def test_csv_roundtrip_1d(tmp_path):
    ax = Axis(-5, 5, 128)
    psi = gaussian_packet(ax, 0.3, 0.9, momentum=1.2)
    psi.t = 0.77
    path = tmp_path / "state.csv"
    save_csv(psi, path)
    back = load_csv(path)
    assert back.t == pytest.approx(0.77)
    assert np.allclose(back.values, psi.values, atol=0)  # 17 digits round-trip
    assert back.axes[0].n == 128


def test_csv_roundtrip_2d(tmp_path):
    axes = (Axis(-3, 3, 64), Axis(-2, 2, 64))
    psi = gaussian_packet(axes, (0.2, -0.1), 0.8)
    path = tmp_path / "state2d.csv"
    save_csv(psi, path)
    back = load_csv(path)
    assert back.dim == 2
    assert np.allclose(back.values, psi.values, atol=0)


def test_binary_roundtrip(tmp_path):
    axes = (Axis(-3, 3, 64), Axis(-2, 2, 128))
    psi = gaussian_packet(axes, (0.2, -0.1), 0.8, momentum=(0.5, -0.3))
    psi.t = 1.25
    path = tmp_path / "state.bin"
    save_binary(psi, path)
    back = load_binary(path)
    assert back.t == 1.25
    assert np.array_equal(back.values, psi.values)
    assert back.axes[1].n == 128


# ---------------------------------------------------------------------------
# evolution


def test_free_gaussian_spreading():
    ax = Axis(-11, 11, 1024)
    psi0 = gaussian_packet(ax, 0.0, 1.0)
    res = evolve(catalog_hamiltonian("free"), psi0, 2.0, 5e-4)
    x = ax.points
    second = np.sum(res.state.weights() * np.abs(res.state.values) ** 2 * x**2)
    exact = 1.0 + (2.0 / 2.0) ** 2
    assert abs(second - exact) / exact <= 1e-4
    assert l2_distance(res.state, free_gaussian_exact(ax, 2.0)) <= 1e-3


def test_oscillator_coherent_period():
    ax = Axis(-11, 11, 1024)
    psi0 = gaussian_packet(ax, 1.0, np.sqrt(0.5))
    res = evolve(catalog_hamiltonian("ho"), psi0, 2 * np.pi, 5e-4)
    fid = abs(np.sum(res.state.weights() * np.conj(psi0.values) * res.state.values))
    assert fid >= 1.0 - 1e-4


def test_ramp_packet_follows_classical_center():
    # m x'' = k t: x(t) = x0 + k t^3 / 6m
    ax = Axis(-12, 12, 1024)
    psi0 = gaussian_packet(ax, -1.0, 0.8)
    t1 = 2.0
    res = evolve(catalog_hamiltonian("ramp"), psi0, t1, 5e-4)
    center = np.sum(res.state.weights() * np.abs(res.state.values) ** 2 * ax.points)
    expected = -1.0 + t1**3 / 6.0
    assert abs(center - expected) <= 1e-3


def test_norm_preservation_1000_steps():
    ax = Axis(-10, 10, 256)
    psi0 = gaussian_packet(ax, 0.4, 0.9)
    res = evolve(catalog_hamiltonian("ho"), psi0, 1000 * 1e-3, 1e-3)
    assert res.norm_drift <= 1e-10


def test_norm_preservation_2d_splitting():
    axes = (Axis(-9, 9, 64), Axis(-9, 9, 64))
    psi0 = gaussian_packet(axes, (0.5, 0.0), 1.0)
    res = evolve(catalog_hamiltonian("magnetic"), psi0, 1000 * 2e-3, 2e-3)
    assert res.norm_drift <= 1e-8


def test_snapshots_and_time_bookkeeping():
    ax = Axis(-10, 10, 256)
    psi0 = gaussian_packet(ax, 0.0, 1.0)
    res = evolve(catalog_hamiltonian("free"), psi0, 1.0, 1e-3,
                 snapshot_times=[0.25, 0.5, 0.75])
    assert [s.t for s in res.snapshots] == [0.25, 0.5, 0.75]
    assert res.state.t == 1.0


def test_dimension_mismatch():
    ax = Axis(-10, 10, 256)
    psi0 = gaussian_packet(ax, 0.0, 1.0)
    with pytest.raises(ValueError):
        evolve(catalog_hamiltonian("magnetic"), psi0, 1.0, 1e-3)


# ---------------------------------------------------------------------------
# kernel quadrature


def test_convolve_free_matches_analytic():
    ax = Axis(-11, 11, 1024)
    psi0 = gaussian_packet(ax, 0.0, 1.0)
    out = kernel_convolve(catalog_kernel("free"), psi0, 2.0)
    assert l2_distance(out, free_gaussian_exact(ax, 2.0)) <= 1e-6


def test_convolve_oscillator_ground_state_phase():
    # the width-1/sqrt(2) Gaussian is stationary: only exp(-i t/2) appears
    ax = Axis(-11, 11, 1024)
    psi0 = gaussian_packet(ax, 0.0, np.sqrt(0.5))
    t = np.pi / 2
    out = kernel_convolve(catalog_kernel("ho"), psi0, t)
    expected = GridState(axes=(ax,), values=np.exp(-0.5j * t) * psi0.values, t=t)
    assert l2_distance(out, expected) <= 1e-6


def test_convolve_narrow_gaussian_approaches_smeared_kernel():
    from comgreen.eigenstates import smear_kernel_with_gaussian

    ax = Axis(-12, 12, 2048)
    sigma, x0, t = 0.05, 0.4, 0.9
    psi0 = gaussian_packet(ax, x0, sigma)
    out = kernel_convolve(catalog_kernel("ho"), psi0, t)
    smeared = smear_kernel_with_gaussian(catalog_kernel("ho").quadform(t), x0, sigma)
    ref = GridState(axes=(ax,), values=smeared(ax.points), t=t)
    assert l2_distance(out, ref) <= 1e-3


def test_convolve_guards():
    ax = Axis(-4, 4, 256)  # Gaussian too wide for this box
    psi0 = gaussian_packet(ax, 0.0, 1.0)
    with pytest.raises(SupportError):
        kernel_convolve(catalog_kernel("free"), psi0, 0.5)
    ax2 = Axis(-11, 11, 512)
    psi2 = gaussian_packet(ax2, 0.0, 1.0)
    with pytest.raises(WindowError):
        kernel_convolve(catalog_kernel("ho"), psi2, 3.5)


def test_evolve_vs_convolve_richardson_in_dt():
    # halving dt cuts the disagreement ~4x until the quadrature floor: the
    # floor (spatial + quadrature error, dt-independent) is measured at tiny
    # dt and subtracted before forming the ratios
    ax = Axis(-11, 11, 1024)
    psi0 = gaussian_packet(ax, 1.0, np.sqrt(0.5))
    H = catalog_hamiltonian("ho")
    conv = kernel_convolve(catalog_kernel("ho"), psi0, 1.9)
    dists = []
    for dt in (0.1, 0.05, 0.025, 0.004):
        res = evolve(H, psi0, 1.9, dt)
        dists.append(l2_distance(res.state, conv))
    floor = dists[-1]
    assert floor < 0.3 * dists[2]
    corrected = [d - floor for d in dists[:3]]
    assert corrected[0] / corrected[1] == pytest.approx(4.0, abs=0.4)
    assert corrected[1] / corrected[2] == pytest.approx(4.0, abs=0.5)


# ---------------------------------------------------------------------------
# expectation values and eigenvalue constancy


def test_eigenvalue_constancy_free_particle():
    ax = Axis(-13, 13, 1024)
    psi0 = gaussian_packet(ax, 0.3, 1.0, momentum=0.4)
    H = catalog_hamiltonian("free")
    times = [0.0, 0.5, 1.0, 1.5, 2.0]
    res = evolve(H, psi0, 2.0, 5e-4, snapshot_times=times[1:])
    snaps = {s.t: s for s in res.snapshots}
    snaps[0.0] = psi0
    A = catalog_observable("free_x0")
    rep = eigenvalue_constancy_check(A, lambda t: snaps[t], times)
    assert rep.lambdas[0] == pytest.approx(0.3, abs=1e-3)
    assert rep.max_drift <= 5e-4


def test_eigenvalue_constancy_energy():
    ax = Axis(-11, 11, 1024)
    psi0 = gaussian_packet(ax, 1.0, np.sqrt(0.5))
    H = catalog_hamiltonian("ho")
    times = [0.0, 0.7, 1.4, 2.1]
    res = evolve(H, psi0, 2.1, 2e-4, snapshot_times=times[1:])
    snaps = {s.t: s for s in res.snapshots}
    snaps[0.0] = psi0
    rep = eigenvalue_constancy_check(H, lambda t: snaps[t], times)
    assert rep.max_drift <= 1e-6


def test_eigenvalue_constancy_oscillator_position():
    ax = Axis(-11, 11, 1024)
    psi0 = gaussian_packet(ax, 1.0, np.sqrt(0.5))
    H = catalog_hamiltonian("ho")
    times = [0.0, 0.6, 1.2, 1.8, 2.4]
    res = evolve(H, psi0, 2.4, 5e-4, snapshot_times=times[1:])
    snaps = {s.t: s for s in res.snapshots}
    snaps[0.0] = psi0
    A = catalog_observable("ho_x0")
    rep = eigenvalue_constancy_check(A, lambda t: snaps[t], times)
    assert rep.lambdas[0] == pytest.approx(1.0, abs=1e-3)
    assert rep.max_drift <= 5e-4


@pytest.mark.parametrize("name,oname,center,n", [
    ("ramp", "ramp_x0", -1.0, 1024),
    ("uniform", "uniform_x0", 0.0, 2048),
])
def test_eigenvalue_constancy_driven_systems(name, oname, center, n):
    ax = Axis(-13, 13, n)
    psi0 = gaussian_packet(ax, center, 0.9)
    H = catalog_hamiltonian(name)
    times = [0.0, 0.5, 1.0, 1.5]
    res = evolve(H, psi0, 1.5, 5e-4, snapshot_times=times[1:])
    snaps = {s.t: s for s in res.snapshots}
    snaps[0.0] = psi0
    rep = eigenvalue_constancy_check(catalog_observable(oname), lambda t: snaps[t], times)
    assert rep.lambdas[0] == pytest.approx(center, abs=1e-3)
    assert rep.max_drift <= 5e-4


def test_eigenvalue_constancy_magnetic_2d():
    axes = (Axis(-11.5, 11.5, 128), Axis(-11.5, 11.5, 128))
    psi0 = gaussian_packet(axes, (0.5, 0.0), 1.0)
    H = catalog_hamiltonian("magnetic")
    times = [0.0, 0.5, 1.0, 1.5]
    res = evolve(H, psi0, 1.5, 2e-3, snapshot_times=times[1:])
    snaps = {s.t: s for s in res.snapshots}
    snaps[0.0] = psi0
    rep = eigenvalue_constancy_check(catalog_observable("magnetic_x0"),
                                     lambda t: snaps[t], times)
    assert rep.lambdas[0] == pytest.approx(0.5, abs=1e-3)
    assert rep.max_drift <= 5e-4


def test_expectation_value_stencil_estimate():
    ax = Axis(-11, 11, 512)
    psi0 = gaussian_packet(ax, 0.0, 1.0, momentum=0.7)
    P = catalog_observable("free_x0")  # contains a p-term
    v1 = expectation_value(P, psi0, 1.0)
    v2 = expectation_value(P, psi0, 1.0, stencil_stride=2)
    assert abs(v1 - v2) < 1e-3  # second-order stencil difference is small


# ---------------------------------------------------------------------------
# PDE residual


@pytest.mark.parametrize("system", ["free", "ho", "ramp", "uniform"])
def test_pde_residual_second_order_1d(system):
    K = catalog_kernel(system)
    H = catalog_hamiltonian(system)
    xs = np.linspace(-1.5, 1.5, 7)
    r1 = pde_residual(K, H, 0.8, xs, 0.4, h=2e-2, dt_fd=2e-2)
    r2 = pde_residual(K, H, 0.8, xs, 0.4, h=1e-2, dt_fd=1e-2)
    assert r1 / r2 == pytest.approx(4.0, abs=0.4)


def test_pde_residual_second_order_2d():
    K = catalog_kernel("magnetic")
    H = catalog_hamiltonian("magnetic")
    pts = np.stack([np.linspace(-1, 1, 5), np.linspace(-0.5, 1, 5)], axis=-1)
    r1 = pde_residual(K, H, 1.3, pts, [0.3, -0.2], h=2e-2, dt_fd=2e-2)
    r2 = pde_residual(K, H, 1.3, pts, [0.3, -0.2], h=1e-2, dt_fd=1e-2)
    assert r1 / r2 == pytest.approx(4.0, abs=0.4)


def test_pde_residual_detects_wrong_normalization():
    # an extra t^0.1 amplitude factor leaves an O(1) residual that does not
    # converge away under stencil refinement
    base = catalog_kernel("free")
    wrong = KernelSpec(
        system="free-wrong",
        dim=1,
        evaluator=lambda x, t, x0: base.evaluator(x, t, x0) * t**0.1,
        window=base.window,
        params=base.params,
    )
    H = catalog_hamiltonian("free")
    xs = np.linspace(-1.5, 1.5, 7)
    r1 = pde_residual(wrong, H, 0.9, xs, 0.3, h=2e-2, dt_fd=2e-2)
    r2 = pde_residual(wrong, H, 0.9, xs, 0.3, h=1e-2, dt_fd=1e-2)
    r3 = pde_residual(wrong, H, 0.9, xs, 0.3, h=5e-3, dt_fd=5e-3)
    assert r1 / r3 < 1.5  # plateau, no second-order decay
    assert r2 > 1e-3


# ---------------------------------------------------------------------------
# imaginary-time spectroscopy


def test_oscillator_ground_state_energy_and_profile():
    K = catalog_kernel("ho")
    res = imaginary_time_ground_state(K, (8.0, 80.0), profile_axis=Axis(-6, 6, 512))
    assert abs(res.energy - 0.5) <= 1e-6
    phi = np.pi ** (-0.25) * np.exp(-res.profile_x**2 / 2)
    w = Axis(-6, 6, 512).trapz_weights
    assert np.sqrt(np.sum(w * np.abs(res.profile - phi) ** 2)) <= 1e-5


def test_oscillator_first_excited_energy():
    K = catalog_kernel("ho")
    res = imaginary_time_ground_state(K, (6.0, 60.0), sector="odd", probe=1.0)
    assert abs(res.energy - 1.5) <= 1e-5


def test_free_kernel_flags_continuous_spectrum():
    K = catalog_kernel("free")
    res = imaginary_time_ground_state(K, (8.0, 80.0))
    assert res.continuous


def test_assembled_kernel_refuses_continuation():
    from comgreen.catalog import catalog_set, system_window
    from comgreen.eigenstates import assemble_kernel

    obs, H = catalog_set("ho")
    spec = assemble_kernel(obs, H, system_window("ho"))
    with pytest.raises(ContinuationError):
        imaginary_time_ground_state(spec, (8.0, 80.0))


def test_scaled_oscillator_energy():
    p = {"m": 2.0, "omega": 1.5, "hbar": 0.7}
    K = catalog_kernel("ho", p)
    res = imaginary_time_ground_state(K, (8.0 / 1.5, 80.0 / 1.5))
    assert abs(res.energy - 0.5 * 0.7 * 1.5) <= 1e-6


# ---------------------------------------------------------------------------
# backends


def test_convolve_thread_count_does_not_change_results(monkeypatch):
    ax = Axis(-11, 11, 512)
    psi0 = gaussian_packet(ax, 0.0, 1.0)
    K = catalog_kernel("free")
    serial = kernel_convolve(K, psi0, 1.0, chunk_elems=2**14)
    monkeypatch.setenv("COMGREEN_THREADS", "4")
    threaded = kernel_convolve(K, psi0, 1.0, chunk_elems=2**14)
    assert np.array_equal(serial.values, threaded.values)


def test_backends_agree_on_evolution():
    backends = available_backends()
    if len(backends) < 2:
        pytest.skip("compiled backend not built")
    import comgreen.gridsim as gs

    ax = Axis(-10, 10, 256)
    psi0 = gaussian_packet(ax, 0.5, 0.9)
    H = catalog_hamiltonian("ho")
    results = {}
    original = gs.cn_sweep
    try:
        for name, fn in backends.items():
            gs.cn_sweep = fn
            results[name] = evolve(H, psi0, 0.8, 1e-3).state.values
    finally:
        gs.cn_sweep = original
    assert np.max(np.abs(results["native"] - results["fallback"])) < 1e-12
