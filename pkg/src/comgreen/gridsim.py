"""Independent numerical oracle: unitary grid integration of the
time-dependent Schrodinger equation, kernel quadrature, finite-difference
PDE residuals, and imaginary-time spectral extraction.

Spatial discretization is second order (three-point stencils, hard-wall
boundaries); time stepping is the trapezoidal Cayley form of each
(sub-)generator, which preserves the discrete L2 norm exactly.  In 2D the
generator is Strang-split into the two axis Hamiltonians and the cross
advection terms (velocity constant along each sweep), keeping global second
order with midpoint coefficient sampling.  The batched tridiagonal sweeps
run in the compiled backend when available (see comgreen._kernels).
"""

import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._kernels import cn_sweep
from .eigenstates import KernelSpec
from .errors import ComgreenError, ContinuationError, ConvergenceError, SupportError, WindowError
from .phasespace import LinearObservable, QuadraticHamiltonian


def worker_count():
    """Thread cap from COMGREEN_THREADS (default 1, deterministic either way)."""
    try:
        return max(1, int(os.environ.get("COMGREEN_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ValueError("axis upper bound must exceed lower bound")
        n = self.n
        if n < 2 or not (n >= 64 or (n & (n - 1)) == 0):
            raise ValueError(f"axis point count {n} must be >= 64 or a power of two")

    @property
    def h(self):
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def points(self):
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def trapz_weights(self):
        w = np.full(self.n, self.h)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass
class GridState:
    """Complex wavefunction samples on a uniform 1D or 2D grid."""

    axes: tuple
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.axes = tuple(self.axes)
        self.values = np.asarray(self.values, dtype=np.complex128)
        shape = tuple(a.n for a in self.axes)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @property
    def dim(self):
        return len(self.axes)

    def weights(self):
        if self.dim == 1:
            return self.axes[0].trapz_weights
        return np.outer(self.axes[0].trapz_weights, self.axes[1].trapz_weights)

    def norm(self):
        return float(np.sqrt(np.sum(self.weights() * np.abs(self.values) ** 2)))

    def copy(self):
        return GridState(axes=self.axes, values=self.values.copy(), t=self.t)

    def points(self):
        """Sample coordinates, shape (n,) in 1D or (nx, ny, 2) in 2D."""
        if self.dim == 1:
            return self.axes[0].points
        x, y = self.axes[0].points, self.axes[1].points
        return np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)


def l2_distance(a: GridState, b: GridState):
    if a.values.shape != b.values.shape:
        raise ValueError("grid shapes differ")
    return float(np.sqrt(np.sum(a.weights() * np.abs(a.values - b.values) ** 2)))


def gaussian_packet(axes, center, sigma, momentum=None, hbar=1.0, t=0.0) -> GridState:
    """L2-normalized Gaussian exp(-|x-c|^2/(4 sigma^2) + i p.x/hbar)."""
    axes = tuple(axes) if isinstance(axes, (tuple, list)) else (axes,)
    dim = len(axes)
    center = np.atleast_1d(np.asarray(center, dtype=float))
    momentum = np.zeros(dim) if momentum is None else np.atleast_1d(np.asarray(momentum, float))
    if dim == 1:
        x = axes[0].points
        psi = np.exp(-((x - center[0]) ** 2) / (4 * sigma**2) + 1j * momentum[0] * x / hbar)
    else:
        x = axes[0].points[:, None]
        y = axes[1].points[None, :]
        psi = np.exp(
            -((x - center[0]) ** 2 + (y - center[1]) ** 2) / (4 * sigma**2)
            + 1j * (momentum[0] * x + momentum[1] * y) / hbar
        )
    state = GridState(axes=axes, values=psi, t=t)
    state.values /= state.norm()
    return state


# ---------------------------------------------------------------------------
# grid application of observables / Hamiltonians


def _central_diff(values, axis, h, stride=1):
    out = np.zeros_like(values)
    s = stride
    sl = [slice(None)] * values.ndim
    lo, hi = [slice(None)] * values.ndim, [slice(None)] * values.ndim
    sl[axis] = slice(s, -s)
    lo[axis] = slice(2 * s, None)
    hi[axis] = slice(None, -2 * s)
    out[tuple(sl)] = (values[tuple(lo)] - values[tuple(hi)]) / (2 * s * h)
    return out


def _second_diff(values, axis, h, stride=1):
    out = np.zeros_like(values)
    s = stride
    sl = [slice(None)] * values.ndim
    lo, hi = [slice(None)] * values.ndim, [slice(None)] * values.ndim
    sl[axis] = slice(s, -s)
    lo[axis] = slice(2 * s, None)
    hi[axis] = slice(None, -2 * s)
    out[tuple(sl)] = (values[tuple(lo)] - 2 * values[tuple(sl)] + values[tuple(hi)]) / (s * h) ** 2
    return out


def _coordinate_arrays(state: GridState):
    if state.dim == 1:
        return (state.axes[0].points,)
    return (state.axes[0].points[:, None], state.axes[1].points[None, :])


def grid_apply(op, state: GridState, t, hbar=1.0, stencil_stride=1):
    """Apply a linear observable or quadratic Hamiltonian to grid samples.

    x acts multiplicatively, p = -i hbar d/dx by central differences (stride
    widening doubles the stencil step for discretization-error estimates).
    """
    coords = _coordinate_arrays(state)
    psi = state.values
    hs = [a.h for a in state.axes]
    if isinstance(op, LinearObservable):
        n = op.dim
        alpha = op.alpha_at(t)
        out = op.gamma_at(t) * psi
        for a in range(n):
            if alpha[a] != 0.0:
                out = out + alpha[a] * coords[a] * psi
            if alpha[n + a] != 0.0:
                out = out + alpha[n + a] * (-1j * hbar) * _central_diff(psi, a, hs[a], stencil_stride)
        return out
    if isinstance(op, QuadraticHamiltonian):
        n = op.dim
        Mxx, Mxp, Mpp = op.blocks_at(t)
        v = op.v_at(t)
        out = op.c_at(t) * psi
        # potential (x quadratic + linear)
        for a in range(n):
            out = out + (0.5 * Mxx[a, a] * coords[a] ** 2 + v[a] * coords[a]) * psi
            for b in range(a + 1, n):
                if Mxx[a, b] != 0.0:
                    out = out + Mxx[a, b] * coords[a] * coords[b] * psi
        # kinetic
        for a in range(n):
            if Mpp[a, a] != 0.0:
                out = out - 0.5 * hbar**2 * Mpp[a, a] * _second_diff(psi, a, hs[a], stencil_stride)
            for b in range(a + 1, n):
                if Mpp[a, b] != 0.0:
                    d2 = _central_diff(_central_diff(psi, a, hs[a], stencil_stride), b, hs[b],
                                       stencil_stride)
                    out = out - hbar**2 * Mpp[a, b] * d2
        # Weyl cross terms and p-linear terms
        for a in range(n):
            for b in range(n):
                if Mxp[a, b] != 0.0:
                    grad = _central_diff(psi, b, hs[b], stencil_stride)
                    out = out + Mxp[a, b] * (-1j * hbar) * (coords[a] * grad)
                    if a == b:
                        out = out + Mxp[a, b] * (-0.5j * hbar) * psi
            if v[n + a] != 0.0:
                out = out + v[n + a] * (-1j * hbar) * _central_diff(psi, a, hs[a], stencil_stride)
        return out
    raise TypeError(f"cannot apply object of type {type(op).__name__} on a grid")


def expectation_value(op, state: GridState, t, hbar=1.0, stencil_stride=1):
    """<psi| op psi> / <psi|psi> with op applied as a grid operator."""
    w = state.weights()
    phi = grid_apply(op, state, t, hbar=hbar, stencil_stride=stencil_stride)
    num = np.sum(w * np.conj(state.values) * phi)
    den = np.sum(w * np.abs(state.values) ** 2)
    return float((num / den).real)


# ---------------------------------------------------------------------------
# Crank-Nicolson evolution


def _link_average(vals):
    return 0.5 * (vals[:-1] + vals[1:])


def _axis_bands(x, h, kin2, pot, vel, hbar):
    """Tridiagonal bands of a 1D operator -kin2 d^2 + pot(x) + Weyl(vel(x) p)."""
    n = x.size
    diag = np.full(n, 2.0 * kin2 / h**2, dtype=complex) + pot
    sup = np.full(n, -kin2 / h**2, dtype=complex)
    sub = np.full(n, -kin2 / h**2, dtype=complex)
    if vel is not None:
        links = _link_average(vel)
        sup[:-1] += -1j * hbar * links / (2 * h)
        sub[1:] += 1j * hbar * links / (2 * h)
    sup[-1] = 0.0
    sub[0] = 0.0
    return sub, diag, sup


def _bands_1d(H: QuadraticHamiltonian, x, h, t, hbar):
    Mxx, Mxp, Mpp = H.blocks_at(t)
    v = H.v_at(t)
    kin2 = 0.5 * hbar**2 * Mpp[0, 0]
    pot = 0.5 * Mxx[0, 0] * x**2 + v[0] * x + H.c_at(t)
    vel = None
    if Mxp[0, 0] != 0.0 or v[1] != 0.0:
        vel = Mxp[0, 0] * x + v[1]
    return _axis_bands(x, h, kin2, pot, vel, hbar)


class _Sweeper2D:
    """Per-substep tridiagonal bands for the 2D Strang splitting."""

    def __init__(self, H, axes, hbar):
        self.H = H
        self.axes = axes
        self.hbar = hbar
        self.x = axes[0].points
        self.y = axes[1].points

    def bands(self, op, t):
        H, hbar = self.H, self.hbar
        Mxx, Mxp, Mpp = H.blocks_at(t)
        v = H.v_at(t)
        if abs(Mxx[0, 1]) > 0 or abs(Mpp[0, 1]) > 0:
            raise NotImplementedError(
                "2D splitting supports cross terms only via x p_y / y p_x generators"
            )
        if op == "Hx":
            kin2 = 0.5 * hbar**2 * Mpp[0, 0]
            pot = 0.5 * Mxx[0, 0] * self.x**2 + v[0] * self.x + H.c_at(t)
            vel = Mxp[0, 0] * self.x + v[2] if (Mxp[0, 0] != 0.0 or v[2] != 0.0) else None
            return _axis_bands(self.x, self.axes[0].h, kin2, pot, vel, hbar)
        if op == "Hy":
            kin2 = 0.5 * hbar**2 * Mpp[1, 1]
            pot = 0.5 * Mxx[1, 1] * self.y**2 + v[1] * self.y
            vel = Mxp[1, 1] * self.y + v[3] if (Mxp[1, 1] != 0.0 or v[3] != 0.0) else None
            return _axis_bands(self.y, self.axes[1].h, kin2, pot, vel, hbar)
        if op == "A":  # (y p_x) advection: x-sweeps, one velocity per y row
            coeff = Mxp[1, 0]
            return ("constvel-x", coeff * self.y)
        if op == "B":  # (x p_y) advection: y-sweeps, one velocity per x row
            coeff = Mxp[0, 1]
            return ("constvel-y", coeff * self.x)
        raise ValueError(op)


def _advection_const_bands(n, h, vels, hbar):
    """Bands (B, n) for Weyl(v p) with per-system constant velocity."""
    B = vels.size
    zero = np.zeros((B, n), dtype=complex)
    sup = zero.copy()
    sub = zero.copy()
    sup[:, :-1] = (-1j * hbar / (2 * h)) * vels[:, None]
    sub[:, 1:] = (1j * hbar / (2 * h)) * vels[:, None]
    return sub, zero, sup


def _cn_apply(bands, psi_rows, scale):
    """One Cayley sub-step with T = scale * H on a (B, n) batch."""
    sub, diag, sup = bands
    if sub.ndim == 1:
        sub = np.broadcast_to(sub, psi_rows.shape)
        diag = np.broadcast_to(diag, psi_rows.shape)
        sup = np.broadcast_to(sup, psi_rows.shape)
    return cn_sweep(
        np.ascontiguousarray(sub * scale),
        np.ascontiguousarray(diag * scale),
        np.ascontiguousarray(sup * scale),
        np.ascontiguousarray(psi_rows),
    )


@dataclass
class EvolveResult:
    state: GridState
    norm_drift: float
    snapshots: list = field(default_factory=list)


def _accuracy_warnings(H, state, dt, hbar, t0):
    try:
        coords = _coordinate_arrays(state)
        Mxx, _, Mpp = H.blocks_at(t0)
        v = H.v_at(t0)
        pot = np.zeros(state.values.shape)
        for a in range(H.dim):
            pot = pot + 0.5 * Mxx[a, a] * coords[a] ** 2 + v[a] * coords[a]
        vmax = float(np.max(np.abs(pot)))
        m_eff = 1.0 / max(Mpp[a, a] for a in range(H.dim))
        h_min = min(a.h for a in state.axes)
        limit = min(hbar / vmax if vmax > 0 else np.inf, 2 * m_eff * h_min**2 / hbar)
        if dt > limit:
            warnings.warn(
                f"dt={dt:.3g} does not resolve the fastest Hamiltonian scale ({limit:.3g}); "
                "accuracy degrades although the scheme stays unitary",
                RuntimeWarning,
                stacklevel=3,
            )
    except Exception:
        pass


def evolve(
    H: QuadraticHamiltonian,
    psi0: GridState,
    t_final,
    dt,
    hbar=1.0,
    snapshot_times: Sequence[float] = (),
    norm_drift_max=1e-6,
) -> EvolveResult:
    """Integrate i hbar d psi/dt = H psi from psi0.t to t_final.

    Trapezoidal (Cayley) stepping with coefficients sampled at step
    midpoints; exact norm preservation up to roundoff.  2D Hamiltonians are
    Strang-split: half steps of both axis Hamiltonians and the y p_x
    advection around a full step of the x p_y advection.
    """
    if H.dim != psi0.dim:
        raise ValueError("Hamiltonian and state dimension differ")
    if t_final <= psi0.t:
        raise ValueError("t_final must exceed the initial time")
    _accuracy_warnings(H, psi0, dt, hbar, psi0.t)

    marks = sorted(set(float(s) for s in snapshot_times if psi0.t < s <= t_final))
    boundaries = marks + ([t_final] if (not marks or marks[-1] < t_final) else [])
    norm0 = psi0.norm()
    psi = psi0.values.copy()
    t = psi0.t
    snapshots = []
    static = not H.is_time_dependent

    if psi0.dim == 1:
        x = psi0.axes[0].points
        h = psi0.axes[0].h
        cached = _bands_1d(H, x, h, psi0.t, hbar) if static else None

        def step_1d(psi, t_mid, dt_k):
            bands = cached if static else _bands_1d(H, x, h, t_mid, hbar)
            scale = 0.5j * dt_k / hbar
            return _cn_apply(bands, psi[None, :], scale)[0]

        stepper = step_1d
    else:
        sweeper = _Sweeper2D(H, psi0.axes, hbar)
        nx, ny = psi0.axes[0].n, psi0.axes[1].n
        hx, hy = psi0.axes[0].h, psi0.axes[1].h
        substeps = [("Hx", 0.5), ("Hy", 0.5), ("A", 0.5), ("B", 1.0),
                    ("A", 0.5), ("Hy", 0.5), ("Hx", 0.5)]
        cache = {}

        def op_bands(op, t_mid):
            if static and op in cache:
                return cache[op]
            raw = sweeper.bands(op, t_mid)
            if isinstance(raw, tuple) and len(raw) == 2 and isinstance(raw[0], str):
                kind, vels = raw
                if kind == "constvel-x":
                    bands = _advection_const_bands(nx, hx, vels, hbar)  # batch over y
                else:
                    bands = _advection_const_bands(ny, hy, vels, hbar)  # batch over x
            else:
                bands = raw
            if static:
                cache[op] = bands
            return bands

        def step_2d(psi, t_mid, dt_k):
            for op, frac in substeps:
                bands = op_bands(op, t_mid)
                scale = 0.5j * frac * dt_k / hbar
                if op in ("Hx", "A"):
                    rows = np.ascontiguousarray(psi.T)  # (ny, nx), sweep along x
                    rows = _cn_apply(bands, rows, scale)
                    psi = np.ascontiguousarray(rows.T)
                else:
                    psi = _cn_apply(bands, psi, scale)
            return psi

        stepper = step_2d

    for boundary in boundaries:
        span = boundary - t
        n_steps = max(1, int(np.ceil(span / dt - 1e-12)))
        dt_k = span / n_steps
        for _ in range(n_steps):
            psi = stepper(psi, t + 0.5 * dt_k, dt_k)
            t += dt_k
        t = boundary
        if boundary in marks:
            snapshots.append(GridState(axes=psi0.axes, values=psi.copy(), t=t))

    final = GridState(axes=psi0.axes, values=psi, t=t)
    drift = abs(final.norm() - norm0) / norm0
    if drift > norm_drift_max:
        raise ComgreenError(f"norm drift {drift:.3e} exceeds {norm_drift_max:.1e}")
    return EvolveResult(state=final, norm_drift=drift, snapshots=snapshots)


# ---------------------------------------------------------------------------
# kernel quadrature


def _boundary_max(state: GridState):
    vals = np.abs(state.values)
    peak = vals.max()
    if state.dim == 1:
        edge = max(vals[0], vals[-1])
    else:
        edge = max(vals[0, :].max(), vals[-1, :].max(), vals[:, 0].max(), vals[:, -1].max())
    return edge / peak if peak > 0 else 0.0


def kernel_convolve(
    K: KernelSpec,
    psi0: GridState,
    t,
    out_axes: Optional[tuple] = None,
    support_tol=1e-12,
    chunk_elems=2**22,
) -> GridState:
    """psi(x, t) = integral K(x, t; y) psi0(y) dy by trapezoidal quadrature.

    psi0 is taken at the kernel's initial time; it must decay below
    ``support_tol`` (relative) at the grid edges so the truncated domain
    carries the whole integral.
    """
    lo, hi = K.window
    if not (lo < t < hi):
        raise WindowError(f"t={t} outside kernel window ({lo}, {hi})")
    if _boundary_max(psi0) > support_tol:
        raise SupportError(
            f"initial state does not decay at the grid edges (relative edge value "
            f"{_boundary_max(psi0):.2e} > {support_tol:.0e})"
        )
    out_axes = tuple(out_axes) if out_axes is not None else psi0.axes
    weighted = (psi0.weights() * psi0.values).ravel()

    if psi0.dim == 1:
        xin = psi0.axes[0].points
        xout = out_axes[0].points
        out = np.empty(xout.size, dtype=complex)
        chunk = max(1, chunk_elems // xin.size)
        tasks = [(i, min(i + chunk, xout.size)) for i in range(0, xout.size, chunk)]

        def run(seg):
            i, j = seg
            Kmat = K.evaluator(xout[i:j, None], t, xin[None, :])
            return i, j, Kmat @ weighted

        if worker_count() > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=worker_count()) as pool:
                for i, j, vals in pool.map(run, tasks):
                    out[i:j] = vals
        else:
            for seg in tasks:
                i, j, vals = run(seg)
                out[i:j] = vals
        return GridState(axes=out_axes, values=out, t=t)

    pts_in = psi0.points().reshape(-1, 2)
    pts_out = GridState(axes=out_axes, values=np.zeros((out_axes[0].n, out_axes[1].n)),
                        t=0.0).points().reshape(-1, 2)
    out = np.empty(pts_out.shape[0], dtype=complex)
    chunk = max(1, chunk_elems // pts_in.shape[0])
    tasks = [(i, min(i + chunk, pts_out.shape[0])) for i in range(0, pts_out.shape[0], chunk)]

    def run2(seg):
        i, j = seg
        Kmat = K.evaluator(pts_out[i:j, None, :], t, pts_in[None, :, :])
        return i, j, Kmat @ weighted

    if worker_count() > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            for i, j, vals in pool.map(run2, tasks):
                out[i:j] = vals
    else:
        for seg in tasks:
            i, j, vals = run2(seg)
            out[i:j] = vals
    return GridState(axes=out_axes, values=out.reshape(out_axes[0].n, out_axes[1].n), t=t)


# ---------------------------------------------------------------------------
# PDE residual


def pde_residual(K: KernelSpec, H: QuadraticHamiltonian, t, x_grid, x0, h, dt_fd, hbar=None):
    """max |i hbar dK/dt - H K| / max |H K| over sample points, by central
    differences of the kernel evaluator (space step h, time step dt_fd)."""
    hbar = K.hbar if hbar is None else hbar
    n = K.dim
    pts = np.asarray(x_grid, dtype=float)
    if n == 1:
        pts = pts.reshape(-1, 1)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def ev(points, tt):
        return K.evaluator(points if n > 1 else points[..., 0], tt, x0 if n > 1 else x0[0])

    E0 = ev(pts, t)
    dKdt = (ev(pts, t + dt_fd) - ev(pts, t - dt_fd)) / (2 * dt_fd)

    Mxx, Mxp, Mpp = H.blocks_at(t)
    v = H.v_at(t)
    shift = lambda a, s: pts + s * h * np.eye(n)[a]
    Ep = [ev(shift(a, +1), t) for a in range(n)]
    Em = [ev(shift(a, -1), t) for a in range(n)]
    grad = [(Ep[a] - Em[a]) / (2 * h) for a in range(n)]

    HK = H.c_at(t) * E0
    for a in range(n):
        HK = HK + (0.5 * Mxx[a, a] * pts[:, a] ** 2 + v[a] * pts[:, a]) * E0
        for b in range(a + 1, n):
            if Mxx[a, b] != 0.0:
                HK = HK + Mxx[a, b] * pts[:, a] * pts[:, b] * E0
        if Mpp[a, a] != 0.0:
            HK = HK - 0.5 * hbar**2 * Mpp[a, a] * (Ep[a] - 2 * E0 + Em[a]) / h**2
        for b in range(a + 1, n):
            if Mpp[a, b] != 0.0:
                Epp = ev(shift(a, +1) + h * np.eye(n)[b], t)
                Epm = ev(shift(a, +1) - h * np.eye(n)[b], t)
                Emp = ev(shift(a, -1) + h * np.eye(n)[b], t)
                Emm = ev(shift(a, -1) - h * np.eye(n)[b], t)
                HK = HK - hbar**2 * Mpp[a, b] * (Epp - Epm - Emp + Emm) / (4 * h**2)
    for a in range(n):
        for b in range(n):
            if Mxp[a, b] != 0.0:
                HK = HK + Mxp[a, b] * (-1j * hbar) * pts[:, a] * grad[b]
                if a == b:
                    HK = HK + Mxp[a, b] * (-0.5j * hbar) * E0
        if v[n + a] != 0.0:
            HK = HK + v[n + a] * (-1j * hbar) * grad[a]

    R = 1j * hbar * dKdt - HK
    scale = float(np.max(np.abs(HK)))
    return float(np.max(np.abs(R)) / scale)


# ---------------------------------------------------------------------------
# imaginary-time spectroscopy


@dataclass
class SpectralResult:
    energy: float
    continuous: bool
    spread: float
    tau_window: tuple
    profile_x: Optional[np.ndarray] = None
    profile: Optional[np.ndarray] = None


def _odd_exponent_shift(qf, x, a):
    """(i/hbar)[E(x, -a) - E(x, a)] formed without cancellation.

    Only the x0-linear pieces survive (the x0-quadratic block cancels
    exactly), so the tiny large-tau differences keep full precision.
    """
    x = np.asarray(x, dtype=float)
    cross = qf.B[0, 0] * x * (-2.0 * a)
    lin = qf.e[0] * (-2.0 * a)
    return (1j / qf.hbar) * (cross + lin)


def _sector_log_values(K: KernelSpec, taus, sector, probe):
    """Re log of K(a, -i tau; a) (even) or its odd antisymmetrization.

    The odd sector needs the closed-form quadform: the two kernel values
    nearly cancel at large tau, and only expm1 on the structurally-formed
    exponent difference keeps the decay rate."""
    if K.log_evaluator is None:
        raise ContinuationError("kernel has no log evaluator for spectral extraction")
    if sector == "odd" and (K.quadform is None or K.dim != 1):
        raise ContinuationError("odd-sector extraction needs a 1D closed-form kernel")
    out = np.empty(taus.size)
    for i, tau in enumerate(taus):
        tt = -1j * tau
        if sector == "even":
            out[i] = np.real(K.log_evaluator(0.0 if K.dim == 1 else np.zeros(K.dim), tt,
                                             0.0 if K.dim == 1 else np.zeros(K.dim)))
        else:
            a = probe
            qf = K.quadform(tt)
            la = np.real(K.log_evaluator(a, tt, a))
            shift = np.real(_odd_exponent_shift(qf, a, a))
            diff = -np.expm1(shift)
            if np.any(diff <= 0):
                raise ConvergenceError("odd-sector antisymmetrization lost positivity")
            out[i] = la + np.log(diff)
    return out


def imaginary_time_ground_state(
    K: KernelSpec,
    tau_range,
    sector="even",
    probe=1.0,
    samples=48,
    profile_axis: Optional[Axis] = None,
) -> SpectralResult:
    """Ground-state energy (and profile) from the imaginary-time kernel.

    Continues the kernel to t = -i tau and fits the decay rate of the
    diagonal value over the largest tau decade: E = -hbar d ln K / d tau.
    The slope must agree across three sub-ranges to 1e-4 relative; a
    power-law decay (slope falling like 1/tau) is reported as a continuous
    spectrum instead.
    """
    if not K.continuable:
        raise ContinuationError(f"kernel {K.system!r} does not support imaginary time")
    tau_lo, tau_hi = float(tau_range[0]), float(tau_range[1])
    if not (0 < tau_lo < tau_hi):
        raise ValueError("tau_range must satisfy 0 < lo < hi")
    lo = max(tau_lo, tau_hi / 10.0)
    taus = np.linspace(lo, tau_hi, samples)
    logs = _sector_log_values(K, taus, sector, probe)
    hbar = K.hbar

    def fit(tsel, ysel):
        slope = np.polyfit(tsel, ysel, 1)[0]
        return -hbar * slope

    E = fit(taus, logs)
    third = samples // 3
    subs = [fit(taus[i * third:(i + 1) * third], logs[i * third:(i + 1) * third])
            for i in range(3)]
    spread = max(subs) - min(subs)
    mids = [np.mean(taus[i * third:(i + 1) * third]) for i in range(3)]

    continuous = False
    if spread > 1e-4 * max(abs(E), 1e-300):
        # 1/tau decay: E_i * tau_i constant and magnitude falling
        prods = [abs(subs[i]) * mids[i] for i in range(3)]
        falling = abs(subs[2]) < 0.8 * abs(subs[0])
        flat = max(prods) < 1.6 * min(prods) if min(prods) > 0 else False
        if falling and flat:
            continuous = True
        else:
            raise ConvergenceError(
                f"spectral slope spread {spread:.3e} relative to E={E:.6f} "
                "does not converge"
            )

    profile_x = profile = None
    if profile_axis is not None and not continuous:
        x = profile_axis.points
        tt = -1j * tau_hi
        if sector == "even":
            anchor = 0.0 if K.dim == 1 else np.zeros(K.dim)
            logv = np.real(K.log_evaluator(x if K.dim == 1 else np.stack([x, 0 * x], -1),
                                           tt, anchor))
            vals = np.exp(logv - logv.max())
        else:
            qf = K.quadform(tt)
            la = np.real(K.log_evaluator(x, tt, probe))
            shift = np.real(_odd_exponent_shift(qf, x, probe))
            vals = np.exp(la - la.max()) * (-np.expm1(shift))
        norm = np.sqrt(np.sum(profile_axis.trapz_weights * np.abs(vals) ** 2))
        profile_x, profile = x, vals / norm
    return SpectralResult(energy=float(E), continuous=continuous, spread=float(spread),
                          tau_window=(lo, tau_hi), profile_x=profile_x, profile=profile)


# ---------------------------------------------------------------------------
# I/O


def save_csv(state: GridState, path):
    """Columns x[,y], re, im; 17 significant digits; t in a header comment."""
    fmt = "%.17g"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# t={state.t:.17g}\n")
        if state.dim == 1:
            fh.write("x,re,im\n")
            for x, v in zip(state.axes[0].points, state.values):
                fh.write(f"{fmt % x},{fmt % v.real},{fmt % v.imag}\n")
        else:
            fh.write("x,y,re,im\n")
            xs, ys = state.axes[0].points, state.axes[1].points
            for i, x in enumerate(xs):
                for j, y in enumerate(ys):
                    v = state.values[i, j]
                    fh.write(f"{fmt % x},{fmt % y},{fmt % v.real},{fmt % v.imag}\n")


def load_csv(path) -> GridState:
    t = 0.0
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first.startswith("#"):
            if "t=" in first:
                t = float(first.split("t=")[1])
            header = fh.readline().strip()
        else:
            header = first
        cols = header.split(",")
        data = np.loadtxt(fh, delimiter=",")
    if data.ndim == 1:
        data = data[None, :]
    if cols[:1] == ["x"] and len(cols) == 3:
        x = data[:, 0]
        axis = Axis(float(x[0]), float(x[-1]), x.size)
        return GridState(axes=(axis,), values=data[:, 1] + 1j * data[:, 2], t=t)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    ax = Axis(float(xs[0]), float(xs[-1]), xs.size)
    ay = Axis(float(ys[0]), float(ys[-1]), ys.size)
    vals = (data[:, 2] + 1j * data[:, 3]).reshape(xs.size, ys.size)
    return GridState(axes=(ax, ay), values=vals, t=t)


_BIN_MAGIC = b"CGRD\x01"


def save_binary(state: GridState, path):
    """Compact dump: magic, dim, t, axis specs, little-endian float64 pairs."""
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<Bd", state.dim, state.t))
        for a in state.axes:
            fh.write(struct.pack("<ddQ", a.lo, a.hi, a.n))
        flat = np.empty(state.values.size * 2)
        flat[0::2] = state.values.real.ravel()
        flat[1::2] = state.values.imag.ravel()
        fh.write(flat.astype("<f8").tobytes())


def load_binary(path) -> GridState:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != _BIN_MAGIC:
            raise ValueError("not a comgreen grid dump")
        dim, t = struct.unpack("<Bd", fh.read(9))
        axes = []
        for _ in range(dim):
            lo, hi, n = struct.unpack("<ddQ", fh.read(24))
            axes.append(Axis(lo, hi, int(n)))
        count = int(np.prod([a.n for a in axes]))
        flat = np.frombuffer(fh.read(16 * count), dtype="<f8")
        vals = (flat[0::2] + 1j * flat[1::2]).reshape(tuple(a.n for a in axes))
    return GridState(axes=tuple(axes), values=vals, t=t)
