import math

import mpmath
import numpy as np
import pytest

from qcurv.params import derive_params, gamma_fn, nonlin, nonlin_prime


def test_gamma_against_mpmath():
    # independent oracle: mpmath at 30 digits
    mpmath.mp.dps = 30
    zs = np.concatenate([np.linspace(0.05, 10.0, 200), [0.5, 1.0, 1.5, 2.0, 25.0]])
    for z in zs:
        ref = float(mpmath.gamma(z))
        assert abs(gamma_fn(float(z)) - ref) <= 1e-12 * abs(ref)


def test_gamma_recurrence_property():
    # Gamma(z+1) = z Gamma(z) across the working range
    rng = np.random.default_rng(7)
    zs = np.concatenate([np.linspace(0.1, 10.0, 100), rng.uniform(0.1, 10.0, 50)])
    vals = gamma_fn(zs)
    vals_p1 = gamma_fn(zs + 1.0)
    rel = np.abs(vals_p1 - zs * vals) / np.abs(vals_p1)
    assert rel.max() <= 1e-12


def test_gamma_rejects_nonpositive():
    with pytest.raises(ValueError):
        gamma_fn(0.0)
    with pytest.raises(ValueError):
        gamma_fn(-1.3)


def test_derived_values_at_5_15():
    prm = derive_params(5, 1.5)
    assert prm.gamma_s == pytest.approx(1.0, abs=0)
    assert prm.gamma_dual == pytest.approx(4.0, abs=0)
    assert prm.m == 1
    assert prm.s == pytest.approx(0.5)
    assert prm.p == pytest.approx(4.0)
    assert prm.crit_exp == pytest.approx(5.0)
    # 2^3 Gamma(2)^2 / Gamma(1/2)^2 = 8 / pi
    assert prm.c_ns == pytest.approx(8.0 / math.pi, rel=1e-13)
    # Riesz constant: Gamma(1) / (4^1.5 pi^2.5 Gamma(1.5)) = 1/(4 pi^3)
    assert prm.riesz_const == pytest.approx(1.0 / (4.0 * math.pi**3), rel=1e-13)


def test_curvature_normalization_low_order_crosscheck():
    # at sigma = 1 the constant must reduce to n(n-2)/4
    prm = derive_params(5, 1.0, allow_low_order=True)
    assert prm.q_ns == pytest.approx(5.0 * 3.0 / 4.0, rel=1e-13)


def test_q_ns_against_mpmath():
    mpmath.mp.dps = 30
    for n, sigma in [(5, 1.5), (7, 2.5), (9, 1.2)]:
        prm = derive_params(n, sigma)
        ref = float(mpmath.gamma((n + 2 * sigma) / 2) / mpmath.gamma((n - 2 * sigma) / 2))
        assert prm.q_ns == pytest.approx(ref, rel=1e-12)


def test_kappa_low_order_field():
    # order-s singular kernel constant, fractional part only
    mpmath.mp.dps = 30
    prm = derive_params(5, 1.5)
    s = 0.5
    ref = float(mpmath.pi ** (-2.5) * 4**s * s * mpmath.gamma(2.5 + s) / mpmath.gamma(1 - s))
    assert prm.kappa_ns == pytest.approx(ref, rel=1e-12)
    # integer order: the constant degenerates to zero
    assert derive_params(7, 2.0).kappa_ns == 0.0


def test_validation():
    with pytest.raises(ValueError):
        derive_params(5, 2.5)  # n = 2 sigma
    with pytest.raises(ValueError):
        derive_params(5, -1.0)
    with pytest.raises(ValueError):
        derive_params(5, 1.0)  # needs the flag
    with pytest.raises(ValueError):
        derive_params(4.5, 1.5)


def test_nonlinearity_consistency():
    prm = derive_params(5, 1.5)
    xi = np.linspace(0.1, 2.0, 17)
    # finite-difference check of f' against f
    h = 1e-6
    fd = (nonlin(xi + h, prm) - nonlin(xi - h, prm)) / (2 * h)
    assert np.allclose(fd, nonlin_prime(xi, prm), rtol=1e-8)


def test_sphere_measures():
    prm = derive_params(5, 1.5)
    # |S^4| = 8 pi^2 / 3, |S^3| = 2 pi^2
    assert prm.omega_sphere == pytest.approx(8.0 * math.pi**2 / 3.0, rel=1e-13)
    assert prm.omega_equator == pytest.approx(2.0 * math.pi**2, rel=1e-13)
