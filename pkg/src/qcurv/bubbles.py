"""Bubbles, bubble towers, and their variation kernels.

The building blocks are the radial profiles (2*lam / (lam^2 + |x-x0|^2))^gamma_s
together with their images under the logarithmic change of variables that turns
dilation into translation.  A tower stacks geometrically shrinking copies at a
common center; the variation kernels are the analytic derivatives of one tower
level with respect to its dilation perturbation and its center.

Everything here is pure evaluation over frozen configurations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .params import Params, nonlin_prime

__all__ = [
    "Bubble",
    "TowerConfig",
    "KernelIndex",
    "bubble_eval",
    "ef_forward",
    "ef_inverse",
    "tower_eval",
    "kernel_Z",
    "cokernel_Zbar",
    "cyl_coefficient",
    "flat_profile",
]


@dataclass(frozen=True)
class Bubble:
    """One profile (2*lam / (lam^2 + |x - center|^2))^gamma_s."""

    lam: float
    center: np.ndarray

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError(f"bubble scale must be positive, got {self.lam}")
        object.__setattr__(self, "center",
                           np.array(self.center, dtype=float, copy=True))
        if self.center.ndim != 1:
            raise ValueError("bubble center must be a single point")


def bubble_eval(x: np.ndarray, b: Bubble, prm: Params) -> float | np.ndarray:
    """Evaluate the bubble at one point (n,) or a batch (..., n)."""
    x = np.asarray(x, dtype=float)
    rho2 = np.sum((x - b.center) ** 2, axis=-1)
    val = (2.0 * b.lam / (b.lam**2 + rho2)) ** prm.gamma_s
    return float(val) if np.ndim(val) == 0 else val


# ─────────────────────────────────────────────────────────────────────────────
# log coordinates


def ef_forward(u: Callable[[float], float], t: float | np.ndarray,
               prm: Params) -> float | np.ndarray:
    """Profile in log coordinates: exp(-gamma_s*t) * u(exp(-t)).

    `u` is a radial evaluator taking the radius.  A bubble with scale lam at
    the origin becomes cosh(t + ln(lam))^(-gamma_s); dilation acts by shifting
    t, which is what makes towers periodic objects in this picture.
    """
    t = np.asarray(t, dtype=float)
    val = np.exp(-prm.gamma_s * t) * u(np.exp(-t))
    return float(val) if np.ndim(val) == 0 else val


def ef_inverse(v: Callable[[float], float], x: np.ndarray | float,
               prm: Params) -> float:
    """Undo ef_forward: |x|^(-gamma_s) * v(-ln|x|).  Rejects x = 0."""
    x = np.asarray(x, dtype=float)
    r = float(np.sqrt(np.sum(x * x))) if x.ndim == 1 else float(abs(x))
    if r == 0.0:
        raise ValueError("log coordinates degenerate at the origin")
    return r ** (-prm.gamma_s) * v(-np.log(r))


def cyl_coefficient(prm: Params) -> float:
    """Height of the exact flat profile a*|x|^(-gamma_s).

    Plugging the flat profile into the dual equation forces
    a^(p-1) = c_ns / q_ns: the power law |x|^(-gamma_s) carries the constant
    c_ns under the operator, while the inverse operator is normalized so the
    bubble family (constant q_ns) is exactly reproduced.  Tests cross-check
    this closed form against the kernel-mass route in log coordinates.
    """
    return float((prm.c_ns / prm.q_ns) ** (1.0 / (prm.p - 1.0)))


def flat_profile(x: np.ndarray, prm: Params) -> float | np.ndarray:
    """The exact singular solution a_ns * |x|^(-gamma_s)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0.0):
        raise ValueError("flat profile is singular at the origin")
    val = cyl_coefficient(prm) * r2 ** (-0.5 * prm.gamma_s)
    return float(val) if np.ndim(val) == 0 else val


# ─────────────────────────────────────────────────────────────────────────────
# towers


@dataclass(frozen=True)
class TowerConfig:
    """Deformed half tower at one singular point.

    Level j (0-based) sits at log height t_j = (1+2j)*period with scale
    lam_j = baseline*(1+dilations[j])*exp(-t_j) and center
    center + shifts[j].  Admissibility keeps the deformations subordinate:
    |dilations[j]| <= exp(-tau*t_j) and |shifts[j]| <= shift_bound*lam_j^2.
    Negative levels (used by the doubly infinite sum) carry no deformation
    data and fall back to the standard scales.
    """

    index: int
    center: np.ndarray
    period: float
    levels: int
    baseline: float = 1.0
    dilations: np.ndarray | None = None
    shifts: np.ndarray | None = None
    tau: float = 0.5
    shift_bound: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "center",
                           np.array(self.center, dtype=float, copy=True))
        n = self.center.shape[0]
        if self.center.ndim != 1:
            raise ValueError("tower center must be a single point")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if self.levels < 0:
            raise ValueError("levels must be >= 0")
        if not self.baseline > 0:
            raise ValueError("baseline scale must be positive")
        if not self.tau > 0:
            raise ValueError("admissibility rate tau must be positive")
        m = self.levels + 1
        dil = (np.zeros(m) if self.dilations is None
               else np.array(self.dilations, dtype=float, copy=True))
        shf = (np.zeros((m, n)) if self.shifts is None
               else np.array(self.shifts, dtype=float, copy=True))
        if dil.shape != (m,):
            raise ValueError(f"dilations must have shape ({m},)")
        if shf.shape != (m, n):
            raise ValueError(f"shifts must have shape ({m}, {n})")
        object.__setattr__(self, "dilations", dil)
        object.__setattr__(self, "shifts", shf)
        tj = self.level_heights()
        if np.any(np.abs(dil) > np.exp(-self.tau * tj)):
            raise ValueError("dilation perturbations exceed the admissible envelope")
        lam = self.scales()
        if np.any(lam <= 0):
            raise ValueError("deformed scales must stay positive")
        if np.any(np.diff(lam) >= 0):
            raise ValueError("scales must decrease strictly level by level")
        if np.any(np.linalg.norm(shf, axis=1) > self.shift_bound * lam**2):
            raise ValueError("translation perturbations exceed the admissible envelope")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def level_heights(self) -> np.ndarray:
        """t_j = (1+2j)*period for j = 0..levels."""
        return (1.0 + 2.0 * np.arange(self.levels + 1)) * self.period

    def scales(self) -> np.ndarray:
        """Deformed scales lam_j for the stored levels."""
        return (self.baseline * (1.0 + self.dilations)
                * np.exp(-self.level_heights()))

    def level_bubble(self, j: int) -> Bubble:
        """Bubble of level j; negative j gives the undeformed mirror level."""
        if j >= 0:
            if j > self.levels:
                raise ValueError(f"level {j} beyond truncation {self.levels}")
            lam = (self.baseline * (1.0 + self.dilations[j])
                   * np.exp(-(1.0 + 2.0 * j) * self.period))
            return Bubble(lam, self.center + self.shifts[j])
        lam = self.baseline * np.exp(-(1.0 + 2.0 * j) * self.period)
        return Bubble(lam, self.center)


def tower_eval(x: np.ndarray, cfg: TowerConfig, prm: Params,
               half: bool = True) -> float | np.ndarray:
    """Sum the tower's bubbles at x; half=False also adds levels -J..-1."""
    lo = 0 if half else -cfg.levels
    vals = [bubble_eval(x, cfg.level_bubble(j), prm)
            for j in range(lo, cfg.levels + 1)]
    out = np.sum(vals, axis=0)
    return float(out) if np.ndim(out) == 0 else out


# ─────────────────────────────────────────────────────────────────────────────
# variation kernels


@dataclass(frozen=True)
class KernelIndex:
    """(tower, level, mode): mode 0 is dilation, modes 1..n are translations."""

    tower: int
    level: int
    mode: int

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError("kernel level must be >= 0")
        if self.mode < 0:
            raise ValueError("kernel mode must be >= 0")


def _check_index(idx: KernelIndex, cfg: TowerConfig) -> Bubble:
    if idx.tower != cfg.index:
        raise ValueError(f"index targets tower {idx.tower}, config is {cfg.index}")
    if idx.mode > cfg.dim:
        raise ValueError(f"mode {idx.mode} out of range for dimension {cfg.dim}")
    return cfg.level_bubble(idx.level)


def kernel_Z(x: np.ndarray, idx: KernelIndex, cfg: TowerConfig,
             prm: Params) -> float | np.ndarray:
    """Analytic derivative of one tower level at the current configuration.

    Mode 0 differentiates in the dilation perturbation: lam_j depends on it
    linearly with slope baseline*exp(-t_j), so the value is that slope times
    dU/dlam = gamma_s*U*(rho^2-lam^2)/(lam*(lam^2+rho^2)).  Modes ell >= 1
    return -lam_j * dU/dx_ell = 2*gamma_s*lam_j*(x-x0)_ell*U/(lam^2+rho^2).
    """
    b = _check_index(idx, cfg)
    x = np.asarray(x, dtype=float)
    diff = x - b.center
    rho2 = np.sum(diff**2, axis=-1)
    u = (2.0 * b.lam / (b.lam**2 + rho2)) ** prm.gamma_s
    if idx.mode == 0:
        du_dlam = prm.gamma_s * u * (rho2 - b.lam**2) / (b.lam * (b.lam**2 + rho2))
        val = du_dlam * cfg.baseline * np.exp(-(1.0 + 2.0 * idx.level) * cfg.period)
    else:
        val = (2.0 * prm.gamma_s * b.lam * diff[..., idx.mode - 1]
               * u / (b.lam**2 + rho2))
    return float(val) if np.ndim(val) == 0 else val


def cokernel_Zbar(x: np.ndarray, idx: KernelIndex, cfg: TowerConfig,
                  prm: Params) -> float | np.ndarray:
    """Linearized-nonlinearity weight times the kernel of the same level."""
    b = _check_index(idx, cfg)
    u = bubble_eval(x, b, prm)
    return nonlin_prime(u, prm) * kernel_Z(x, idx, cfg, prm)
