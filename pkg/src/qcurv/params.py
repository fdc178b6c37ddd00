"""Derived exponents and normalizing constants for the critical dual equation.

Everything downstream is parametrized by the dimension ``n`` and the order
``sigma`` of the inverse operator.  The standing range is ``sigma > 1`` with
``n > 2 sigma``; the range ``0 < sigma <= 1`` is accepted behind a flag for
cross-checks against classical second-order results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# ─────────────────────────────────────────────────────────────────────────────
# Gamma function (in-repo; no dependency on scipy.special here by design)
# ─────────────────────────────────────────────────────────────────────────────

# Lanczos coefficients, g = 7, 9 terms.  Relative error below 1e-13 on the
# positive real axis once the reflection formula handles z < 0.5.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _ln_gamma_pos(z: float) -> float:
    # valid for z >= 0.5
    z = z - 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, 9):
        acc += _LANCZOS_COEF[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return 0.5 * math.log(2.0 * math.pi) + (z + 0.5) * math.log(t) - t + math.log(acc)


def gamma_fn(z):
    """Gamma(z) for real z > 0 (scalar or array), accurate to ~1e-13 relative.

    Uses a Lanczos approximation with reflection below 1/2 so accuracy does
    not degrade near the origin.  Poles (z <= 0) are rejected.
    """
    arr = np.asarray(z, dtype=float)
    if np.any(arr <= 0.0):
        raise ValueError("gamma_fn requires z > 0")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    for i, zi in enumerate(flat):
        if zi >= 0.5:
            out[i] = math.exp(_ln_gamma_pos(zi))
        else:
            # reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z)
            out[i] = math.pi / (math.sin(math.pi * zi) * math.exp(_ln_gamma_pos(1.0 - zi)))
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


# ─────────────────────────────────────────────────────────────────────────────
# Parameter bundle
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Params:
    """Derived quantities attached to a pair (n, sigma).

    gamma_s      (n - 2 sigma)/2, decay rate of the singular profile
    gamma_dual   (n + 2 sigma)/2, decay rate of the dual-side density
    m, s         integer and fractional parts of sigma (s in [0, 1))
    p            critical power (n + 2 sigma)/(n - 2 sigma)
    crit_exp     Sobolev-type exponent 2n/(n - 2 sigma)
    c_ns         normalizing constant of the nonlinearity,
                 2^{2 sigma} Gamma((n+2 sigma)/4)^2 / Gamma((n-2 sigma)/4)^2
    q_ns         curvature normalization Gamma((n+2 sigma)/2)/Gamma((n-2 sigma)/2)
    riesz_const  constant of the inverse-operator kernel,
                 Gamma(gamma_s) / (4^sigma pi^{n/2} Gamma(sigma))
    kappa_ns     constant of the order-s singular integral kernel (uses the
                 fractional part s; identically 0 at integer sigma)
    """

    n: int
    sigma: float
    m: int
    s: float
    gamma_s: float
    gamma_dual: float
    p: float
    crit_exp: float
    c_ns: float
    q_ns: float
    riesz_const: float
    kappa_ns: float

    @property
    def omega_sphere(self) -> float:
        """Surface measure of the unit sphere S^{n-1} in R^n."""
        return 2.0 * math.pi ** (self.n / 2.0) / gamma_fn(self.n / 2.0)

    @property
    def omega_equator(self) -> float:
        """Surface measure of S^{n-2} (the sphere in R^{n-1})."""
        return 2.0 * math.pi ** ((self.n - 1) / 2.0) / gamma_fn((self.n - 1) / 2.0)


def derive_params(n: int, sigma: float, allow_low_order: bool = False) -> Params:
    """Validate (n, sigma) and derive the attached constants.

    Rejects sigma <= 0 and n <= 2 sigma.  sigma <= 1 is outside the standing
    range and requires ``allow_low_order=True`` (used only for cross-checks).
    """
    if int(n) != n or n < 2:
        raise ValueError(f"dimension n must be an integer >= 2, got {n!r}")
    n = int(n)
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if n <= 2.0 * sigma:
        raise ValueError(f"need n > 2 sigma, got n={n}, sigma={sigma}")
    if sigma <= 1.0 and not allow_low_order:
        raise ValueError(
            f"sigma={sigma} is outside the standing range sigma > 1; "
            "pass allow_low_order=True for cross-check use"
        )

    m = int(math.floor(sigma))
    s = sigma - m
    gamma_s = 0.5 * (n - 2.0 * sigma)
    gamma_dual = 0.5 * (n + 2.0 * sigma)
    p = (n + 2.0 * sigma) / (n - 2.0 * sigma)
    crit_exp = 2.0 * n / (n - 2.0 * sigma)
    c_ns = 4.0**sigma * (gamma_fn(0.25 * (n + 2.0 * sigma)) / gamma_fn(0.25 * (n - 2.0 * sigma))) ** 2
    q_ns = gamma_fn(gamma_dual) / gamma_fn(gamma_s)
    riesz_const = gamma_fn(gamma_s) / (4.0**sigma * math.pi ** (n / 2.0) * gamma_fn(sigma))
    if s == 0.0:
        kappa_ns = 0.0
    else:
        kappa_ns = math.pi ** (-n / 2.0) * 4.0**s * s * gamma_fn(n / 2.0 + s) / gamma_fn(1.0 - s)

    return Params(
        n=n,
        sigma=sigma,
        m=m,
        s=s,
        gamma_s=gamma_s,
        gamma_dual=gamma_dual,
        p=p,
        crit_exp=crit_exp,
        c_ns=c_ns,
        q_ns=q_ns,
        riesz_const=riesz_const,
        kappa_ns=kappa_ns,
    )


# ─────────────────────────────────────────────────────────────────────────────
# Critical nonlinearity
# ─────────────────────────────────────────────────────────────────────────────


def nonlin(xi, prm: Params):
    """f(xi) = c_ns * xi^p, the critical nonlinearity (xi >= 0)."""
    return prm.c_ns * np.asarray(xi, dtype=float) ** prm.p


def nonlin_prime(xi, prm: Params):
    """f'(xi) = c_ns * p * xi^(p-1)."""
    return prm.c_ns * prm.p * np.asarray(xi, dtype=float) ** (prm.p - 1.0)
