"""Pure-Python Crank-Nicolson sweep: numpy band multiply + LAPACK gtsv solve."""

import numpy as np
from scipy.linalg import lapack


def cn_sweep(sub, diag, sup, psi):
    """Apply one Cayley sub-step (I + T)^-1 (I - T) to a batch of vectors.

    T is tridiagonal per batch row: bands ``sub``, ``diag``, ``sup`` of shape
    (B, N) with sub[:, 0] and sup[:, -1] ignored.  ``psi`` has shape (B, N).
    Returns a new (B, N) array.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    rhs = psi - diag * psi
    rhs[:, 1:] -= sub[:, 1:] * psi[:, :-1]
    rhs[:, :-1] -= sup[:, :-1] * psi[:, 1:]

    out = np.empty_like(psi)
    one_plus = 1.0 + diag
    for b in range(psi.shape[0]):
        dl = np.ascontiguousarray(sub[b, 1:])
        d = np.ascontiguousarray(one_plus[b])
        du = np.ascontiguousarray(sup[b, :-1])
        _, _, _, x, info = lapack.zgtsv(dl, d, du, rhs[b])
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        out[b] = x
    return out
