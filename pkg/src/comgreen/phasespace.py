"""Observables linear in (x, p) and Hamiltonians quadratic in (x, p).

Phase-space coordinates are ordered z = (x_1..x_n, p_1..p_n).  Canonical
commutators are encoded by the symplectic form J = [[0, I], [-I, 0]], so
[z_a, z_b] = i*hbar*J_ab.  Coefficients are real functions of time wrapped
in :class:`TimeScalar`; all objects are immutable and all operations pure.
"""

from dataclasses import dataclass
from math import inf
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatchError, TimeDomainError

# Finite-difference step used when no analytic derivative is supplied.
FD_STEP = 1e-6


def _fd_derivative(fn, t, lo, hi):
    """Central difference with one Richardson level, step FD_STEP*max(1,|t|)."""
    h = FD_STEP * max(1.0, abs(t))
    if t - h < lo or t + h > hi:
        raise TimeDomainError(
            f"cannot differentiate numerically at t={t}: step {h} leaves domain [{lo}, {hi}]"
        )
    d1 = (fn(t + h) - fn(t - h)) / (2.0 * h)
    d2 = (fn(t + 0.5 * h) - fn(t - 0.5 * h)) / h
    return (4.0 * d2 - d1) / 3.0


@dataclass(frozen=True)
class TimeScalar:
    """A real-valued function of time with an optional analytic derivative.

    When ``derivative`` is None, :meth:`d` falls back to a Richardson-
    extrapolated central difference.  ``constant`` marks coefficients known
    to be time independent (lets solvers cache matrices between steps).
    """

    value: Callable[[float], float]
    derivative: Optional[Callable[[float], float]] = None
    description: str = ""
    domain: tuple = (-inf, inf)
    constant: bool = False

    def __call__(self, t):
        lo, hi = self.domain
        if not (lo <= t <= hi):
            raise TimeDomainError(f"t={t} outside domain [{lo}, {hi}] of {self.description!r}")
        return float(self.value(t))

    def d(self, t):
        if self.constant:
            return 0.0
        if self.derivative is not None:
            lo, hi = self.domain
            if not (lo <= t <= hi):
                raise TimeDomainError(f"t={t} outside domain [{lo}, {hi}] of {self.description!r}")
            return float(self.derivative(t))
        return _fd_derivative(self.value, t, *self.domain)

    # -- arithmetic (derivatives propagate when both operands carry one) --

    def _merge_domain(self, other):
        return (max(self.domain[0], other.domain[0]), min(self.domain[1], other.domain[1]))

    def __add__(self, other):
        other = as_time_scalar(other)
        f, g = self.value, other.value
        if self.derivative is not None or self.constant:
            df = self.d
        else:
            df = None
        dg = other.d if (other.derivative is not None or other.constant) else None
        deriv = (lambda t, df=df, dg=dg: df(t) + dg(t)) if (df and dg) else None
        return TimeScalar(
            value=lambda t: f(t) + g(t),
            derivative=deriv,
            description=f"({self.description} + {other.description})",
            domain=self._merge_domain(other),
            constant=self.constant and other.constant,
        )

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        f = self.value
        df = self.d if (self.derivative is not None or self.constant) else None
        return TimeScalar(
            value=lambda t: -f(t),
            derivative=(lambda t, df=df: -df(t)) if df else None,
            description=f"(-{self.description})",
            domain=self.domain,
            constant=self.constant,
        )

    def __sub__(self, other):
        return self.__add__(-as_time_scalar(other))

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        other = as_time_scalar(other)
        f, g = self.value, other.value
        df = self.d if (self.derivative is not None or self.constant) else None
        dg = other.d if (other.derivative is not None or other.constant) else None
        deriv = None
        if df and dg:
            deriv = lambda t, f=f, g=g, df=df, dg=dg: df(t) * g(t) + f(t) * dg(t)
        return TimeScalar(
            value=lambda t: f(t) * g(t),
            derivative=deriv,
            description=f"({self.description} * {other.description})",
            domain=self._merge_domain(other),
            constant=self.constant and other.constant,
        )

    def __rmul__(self, other):
        return self.__mul__(other)


def as_time_scalar(x) -> TimeScalar:
    if isinstance(x, TimeScalar):
        return x
    return ts_const(float(x))


def ts_const(c, description=None) -> TimeScalar:
    c = float(c)
    return TimeScalar(
        value=lambda t: c,
        derivative=lambda t: 0.0,
        description=description if description is not None else repr(c),
        constant=True,
    )


def ts_fn(value, derivative=None, description="", domain=(-inf, inf)) -> TimeScalar:
    return TimeScalar(value=value, derivative=derivative, description=description, domain=domain)


ZERO = ts_const(0.0, "0")
ONE = ts_const(1.0, "1")


def symplectic_matrix(dim: int) -> np.ndarray:
    """J = [[0, I], [-I, 0]] in the (x.., p..) ordering."""
    n = int(dim)
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


@dataclass(frozen=True)
class SymplecticForm:
    dim: int

    @property
    def matrix(self) -> np.ndarray:
        return symplectic_matrix(self.dim)


@dataclass(frozen=True)
class LinearObservable:
    """A(t) = alpha(t) . z + gamma(t) with real coefficients (Hermitean)."""

    dim: int
    alpha: tuple  # 2n TimeScalars, x-block first
    gamma: TimeScalar = ZERO
    label: str = ""
    source: Optional[str] = None  # canonical text form, when one exists

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if len(self.alpha) != 2 * self.dim:
            raise ValueError(f"alpha must have {2 * self.dim} entries, got {len(self.alpha)}")
        object.__setattr__(self, "alpha", tuple(as_time_scalar(a) for a in self.alpha))
        object.__setattr__(self, "gamma", as_time_scalar(self.gamma))

    def alpha_at(self, t) -> np.ndarray:
        return np.array([a(t) for a in self.alpha])

    def alpha_dot_at(self, t) -> np.ndarray:
        return np.array([a.d(t) for a in self.alpha])

    def gamma_at(self, t) -> float:
        return self.gamma(t)

    def gamma_dot_at(self, t) -> float:
        return self.gamma.d(t)

    def position_block(self, t) -> np.ndarray:
        return self.alpha_at(t)[: self.dim]

    def momentum_block(self, t) -> np.ndarray:
        return self.alpha_at(t)[self.dim :]

    def max_coefficient(self, t) -> float:
        """Largest |coefficient| at t, gamma included (zero test)."""
        return max(float(np.max(np.abs(self.alpha_at(t)))), abs(self.gamma_at(t)))


def zero_observable(dim: int, label="0") -> LinearObservable:
    return LinearObservable(dim=dim, alpha=(ZERO,) * (2 * dim), gamma=ZERO, label=label)


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """H(t) = 1/2 z^T M(t) z + v(t)^T z + c(t), Weyl-symmetrized.

    M is a 2n x 2n symmetric matrix of TimeScalars; the mixed x_a p_b entries
    denote the symmetrized product (x_a p_b + p_b x_a)/2.
    """

    dim: int
    M: tuple  # 2n rows of 2n TimeScalars
    v: tuple = ()
    c: TimeScalar = ZERO
    label: str = ""
    source: Optional[str] = None

    def __post_init__(self):
        n2 = 2 * self.dim
        if len(self.M) != n2 or any(len(row) != n2 for row in self.M):
            raise ValueError(f"M must be {n2}x{n2}")
        M = tuple(tuple(as_time_scalar(e) for e in row) for row in self.M)
        object.__setattr__(self, "M", M)
        v = self.v if self.v else (ZERO,) * n2
        if len(v) != n2:
            raise ValueError(f"v must have {n2} entries")
        object.__setattr__(self, "v", tuple(as_time_scalar(e) for e in v))
        object.__setattr__(self, "c", as_time_scalar(self.c))

    def M_at(self, t) -> np.ndarray:
        M = np.array([[e(t) for e in row] for row in self.M])
        asym = np.max(np.abs(M - M.T))
        scale = max(1.0, np.max(np.abs(M)))
        if asym > 1e-10 * scale:
            raise ValueError(f"M(t={t}) is not symmetric (max asymmetry {asym:.3e})")
        return 0.5 * (M + M.T)

    def v_at(self, t) -> np.ndarray:
        return np.array([e(t) for e in self.v])

    def c_at(self, t) -> float:
        return self.c(t)

    @property
    def is_time_dependent(self) -> bool:
        entries = [e for row in self.M for e in row] + list(self.v) + [self.c]
        return any(not e.constant for e in entries)

    # Block views of M in the (x, p) ordering.
    def blocks_at(self, t):
        n = self.dim
        M = self.M_at(t)
        return M[:n, :n], M[:n, n:], M[n:, n:]  # Mxx, Mxp, Mpp


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")


def symplectic_product(A: LinearObservable, B: LinearObservable, t) -> float:
    """alpha_A(t)^T J alpha_B(t); equals [A, B]/(i*hbar) as operators."""
    _check_dims(A, B)
    n = A.dim
    a, b = A.alpha_at(t), B.alpha_at(t)
    # alpha^T J beta = a_x . b_p - a_p . b_x
    return float(a[:n] @ b[n:] - a[n:] @ b[:n])


def commutator_with_hamiltonian(A: LinearObservable, H: QuadraticHamiltonian, t=None) -> LinearObservable:
    """The linear observable L with [A, H] = i*hbar*L.

    Coefficients: alpha_L = (J M)^T alpha_A, gamma_L = alpha_A^T J v.  The
    result carries TimeScalar coefficients, so it can be re-evaluated or
    differentiated at any time; ``t`` is accepted for symmetry with the other
    operations and only triggers a domain check when given.
    """
    _check_dims(A, H)
    n = A.dim
    J = symplectic_matrix(n)
    n2 = 2 * n

    # (J M)^T alpha: build entry-wise TimeScalar combinations.
    # (J M)_{ab} = sum_c J_{ac} M_{cb}; J rows have a single +-1.
    alpha_L = []
    for b in range(n2):
        acc = ZERO
        for a_idx in range(n2):
            for c_idx in range(n2):
                j = J[a_idx, c_idx]
                if j == 0.0:
                    continue
                term = A.alpha[a_idx] * H.M[c_idx][b]
                acc = acc + (term if j > 0 else -term)
        alpha_L.append(acc)

    gamma_L = ZERO
    for a_idx in range(n2):
        for c_idx in range(n2):
            j = J[a_idx, c_idx]
            if j == 0.0:
                continue
            term = A.alpha[a_idx] * H.v[c_idx]
            gamma_L = gamma_L + (term if j > 0 else -term)

    L = LinearObservable(dim=n, alpha=tuple(alpha_L), gamma=gamma_L,
                         label=f"[{A.label or 'A'}, {H.label or 'H'}]/(i*hbar)")
    if t is not None:
        L.alpha_at(t)  # domain check
    return L


def observable_time_derivative(A: LinearObservable, t) -> LinearObservable:
    """dA/dt at time t, as a constant-coefficient LinearObservable."""
    alpha_dot = A.alpha_dot_at(t)
    gamma_dot = A.gamma_dot_at(t)
    return LinearObservable(
        dim=A.dim,
        alpha=tuple(ts_const(a) for a in alpha_dot),
        gamma=ts_const(gamma_dot),
        label=f"d({A.label or 'A'})/dt at t={t}",
    )
