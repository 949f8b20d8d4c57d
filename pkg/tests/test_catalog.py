"""Catalog coefficient values and derivative consistency."""

import numpy as np
import pytest

from comgreen.catalog import (
    OBSERVABLE_NAMES,
    catalog_hamiltonian,
    catalog_observable,
)
from comgreen.phasespace import TimeScalar


def test_ho_x0_reduces_to_position_at_t0():
    obs = catalog_observable("ho_x0")
    assert np.allclose(obs.alpha_at(0.0), [1.0, 0.0])
    assert obs.gamma_at(0.0) == 0.0


def test_ramp_x0_scalar_part():
    obs = catalog_observable("ramp_x0", {"m": 2.0, "k": 0.7})
    for t in (0.5, 1.3):
        assert obs.gamma_at(t) == pytest.approx(0.7 * t**3 / 6.0, abs=1e-14)


def test_magnetic_x0_at_half_turn():
    # w t = pi: only the p_y coefficient (1 - cos)/mw = 2/mw survives
    obs = catalog_observable("magnetic_x0", {"m": 1.5, "omega": 2.0})
    t = np.pi / 2.0
    alpha = obs.alpha_at(t)
    assert alpha[:3] == pytest.approx([0.0, 0.0, 0.0], abs=1e-15)
    assert alpha[3] == pytest.approx(2.0 / (1.5 * 2.0), abs=1e-15)


def test_ho_hamiltonian_blocks():
    H = catalog_hamiltonian("ho", {"m": 1.3, "omega": 0.9})
    Mxx, Mxp, Mpp = H.blocks_at(0.7)
    assert Mxx[0, 0] == pytest.approx(1.3 * 0.81)
    assert Mpp[0, 0] == pytest.approx(1.0 / 1.3)
    assert Mxp[0, 0] == 0.0
    assert np.all(H.v_at(0.7) == 0.0) and H.c_at(0.7) == 0.0


def test_uniform_hamiltonian_force_term():
    H = catalog_hamiltonian("uniform", {"eE": 0.4})
    assert H.v_at(1.0)[0] == pytest.approx(-0.4)
    assert not H.is_time_dependent


def test_ramp_hamiltonian_is_time_dependent():
    H = catalog_hamiltonian("ramp", {"k": 2.0})
    assert H.is_time_dependent
    assert H.v_at(1.5)[0] == pytest.approx(-3.0)


def test_magnetic_expansion_constant():
    # the x^2 coefficient of H is m w^2/8, i.e. M_xx = m w^2/4
    H = catalog_hamiltonian("magnetic", {"m": 2.0, "omega": 3.0})
    Mxx, Mxp, Mpp = H.blocks_at(0.0)
    assert Mxx[0, 0] == pytest.approx(2.0 * 9.0 / 4.0)
    assert Mxx[0, 0] / 2.0 == pytest.approx(2.0 * 9.0 / 8.0)  # the x^2 coefficient
    assert Mxp[0, 1] == pytest.approx(-1.5)  # -(w/2) x p_y
    assert Mxp[1, 0] == pytest.approx(1.5)   # +(w/2) y p_x
    assert Mpp[0, 1] == 0.0


@pytest.mark.parametrize("name", OBSERVABLE_NAMES)
def test_numeric_derivative_agrees_with_analytic(name):
    # drop the analytic derivative and compare the finite-difference path
    obs = catalog_observable(name)
    for coeff in (*obs.alpha, obs.gamma):
        stripped = TimeScalar(value=coeff.value, derivative=None,
                              description=coeff.description)
        for t in (0.15, 0.8, 2.1):
            exact = coeff.d(t)
            approx = stripped.d(t)
            assert approx == pytest.approx(exact, rel=1e-8, abs=1e-10)
