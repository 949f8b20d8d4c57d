"""Constant-of-motion tests: dA/dt + [A, H]/(i hbar) = 0, set completeness,
and eigenvalue constancy on numerically evolved grid states."""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .phasespace import (
    LinearObservable,
    QuadraticHamiltonian,
    commutator_with_hamiltonian,
    observable_time_derivative,
    symplectic_product,
    ts_const,
)

# Completeness threshold on cond(A_p); beyond it the window counts as degenerate.
AP_COND_MAX = 1e8


def conservation_residual(A: LinearObservable, H: QuadraticHamiltonian, t) -> LinearObservable:
    """R(t) = dA/dt + [A, H]/(i hbar); A is conserved at t iff R(t) == 0.

    hbar cancels: [A, H] = i*hbar*L with L real-linear, so R = dA/dt + L.
    """
    L = commutator_with_hamiltonian(A, H)
    dA = observable_time_derivative(A, t)
    alpha = tuple(ts_const(dA.alpha[k](t) + L.alpha[k](t)) for k in range(2 * A.dim))
    gamma = ts_const(dA.gamma(t) + L.gamma(t))
    return LinearObservable(dim=A.dim, alpha=alpha, gamma=gamma,
                            label=f"residual({A.label or 'A'})")


def chebyshev_times(t_lo, t_hi, count=50):
    """Chebyshev-distributed interior sample times on (t_lo, t_hi)."""
    k = np.arange(count)
    nodes = np.cos(np.pi * (2 * k + 1) / (2 * count))
    return (0.5 * (t_lo + t_hi) + 0.5 * (t_hi - t_lo) * nodes)[::-1]


@dataclass
class SetCheckSample:
    t: float
    residual_max: float
    pairwise_max: float
    Ap_cond: float


@dataclass
class SetCheckReport:
    observables: list
    hamiltonian: str
    tol: float
    samples: list = field(default_factory=list)
    structural_failure: bool = False
    message: str = ""

    @property
    def passed(self) -> bool:
        if self.structural_failure or not self.samples:
            return False
        return all(
            s.residual_max <= self.tol and s.pairwise_max <= self.tol and s.Ap_cond < AP_COND_MAX
            for s in self.samples
        )

    def to_dict(self) -> dict:
        return {
            "observables": self.observables,
            "hamiltonian": self.hamiltonian,
            "tol": self.tol,
            "samples": [
                {
                    "t": s.t,
                    "residual_max": s.residual_max,
                    "pairwise_max": s.pairwise_max,
                    # strict-JSON safe: clamp a singular block to the float max
                    "Ap_cond": s.Ap_cond if np.isfinite(s.Ap_cond) else 1.8e308,
                }
                for s in self.samples
            ],
            "structural_failure": self.structural_failure,
            "message": self.message,
            "pass": self.passed,
        }


def check_commuting_complete_set(
    observables: Sequence[LinearObservable],
    H: QuadraticHamiltonian,
    t_samples,
    tol: float = 1e-10,
) -> SetCheckReport:
    """Certify a candidate complete commuting set of constants of motion.

    Per sample time: max conservation residual over the set, max pairwise
    symplectic product, and the effective condition number of A_p (rows =
    momentum coefficient blocks), defined as the set's overall coefficient
    scale over sigma_min(A_p).  A wrong set size is reported structurally,
    not raised.
    """
    report = SetCheckReport(
        observables=[o.label or f"obs{k}" for k, o in enumerate(observables)],
        hamiltonian=H.label or "H",
        tol=tol,
    )
    n = H.dim
    if len(observables) != n:
        report.structural_failure = True
        report.message = f"set size {len(observables)} != configuration dimension {n}"
        return report
    if any(o.dim != n for o in observables):
        report.structural_failure = True
        report.message = "observable dimension mismatch"
        return report

    for t in np.atleast_1d(np.asarray(t_samples, dtype=float)):
        res_max = max(conservation_residual(o, H, t).max_coefficient(t) for o in observables)
        pair_max = 0.0
        for i in range(len(observables)):
            for j in range(i + 1, len(observables)):
                pair_max = max(pair_max, abs(symplectic_product(observables[i], observables[j], t)))
        # Effective condition of A_p: its smallest singular value measured
        # against the full coefficient block, so a vanishing momentum block
        # registers as degenerate even when n = 1.
        alphas = np.array([o.alpha_at(t) for o in observables])
        Ap = alphas[:, n:]
        smin = float(np.min(np.linalg.svd(Ap, compute_uv=False)))
        scale = float(np.max(np.linalg.svd(alphas, compute_uv=False)))
        cond = np.inf if smin == 0.0 else scale / smin
        report.samples.append(SetCheckSample(float(t), float(res_max), float(pair_max), cond))
    return report


@dataclass
class ConstancyReport:
    times: np.ndarray
    lambdas: np.ndarray
    max_drift: float
    p_error_estimate: float


def eigenvalue_constancy_check(A, psi_t, t_samples) -> ConstancyReport:
    """Drift of <psi|A psi>/<psi|psi> along a Schrodinger-evolving family.

    ``psi_t`` maps t to a GridState.  A is applied as a grid operator
    (x multiplicative, p by central differences); A may be a LinearObservable
    or a QuadraticHamiltonian.  The p-discretization error is estimated by
    re-evaluating the momentum part with a doubled stencil step.
    """
    from .gridsim import expectation_value  # local import avoids a cycle

    times = np.atleast_1d(np.asarray(t_samples, dtype=float))
    lams = []
    p_errs = []
    for t in times:
        state = psi_t(t)
        lam = expectation_value(A, state, t)
        lam2 = expectation_value(A, state, t, stencil_stride=2)
        lams.append(lam)
        # second-order stencils: err(h) ~ (err(2h) - err(h)) / 3
        p_errs.append(abs(lam2 - lam) / 3.0)
    lams = np.array(lams)
    drift = float(np.max(np.abs(lams - lams[0])))
    return ConstancyReport(times=times, lambdas=lams, max_drift=drift,
                           p_error_estimate=float(np.max(p_errs)))
