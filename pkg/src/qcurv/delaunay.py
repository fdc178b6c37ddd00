"""Periodic cylindrical solutions by collocation and damped Newton.

In log coordinates the singular radial problem becomes a 2L-periodic fixed
point v = kappa * R_per * (c_ns v^p) for the bounded reduced kernel.  The
solver collocates on a uniform half grid [0, L] (evenness is structural:
reflected quadrature folds the other half in), iterates Newton with a
positivity-preserving line search, and reports the neck value v(0) together
with the defect psi against the periodized profile sum.

Phase convention: profile peaks sit at odd multiples (1+2j)L so the neck,
the minimum of v, is at t = 0.  The two printed phase choices differ by a
half-period shift of the same solution; pinning the neck at the origin is
what makes v(0) the decaying quantity the sweeps fit.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .params import Params
from .bubbles import cyl_coefficient
from .kernels import calibrate_cyl_kernel, periodized_lattice, riesz_kernel_cyl

__all__ = [
    "CylSolution",
    "NewtonError",
    "SweepRow",
    "SweepResult",
    "solve_periodic",
    "delaunay_to_rn",
    "neck_sweep",
    "sweep_csv",
    "bifurcation_half_period",
]


class NewtonError(RuntimeError):
    """Raised when the damped iteration cannot reach the tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} steps)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class CylSolution:
    """Discrete 2L-periodic solution on the symmetric grid [-L, L]."""

    L: float
    grid: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    neck: float
    residual_norm: float
    n_iter: int
    kappa: float

    @cached_property
    def spline(self) -> CubicSpline:
        return CubicSpline(self.grid, self.v, bc_type="periodic")


def _periodization_order(L: float, prm: Params) -> int:
    # keep the dropped image tail below e^{-40}
    return max(3, int(np.ceil(20.0 / (prm.gamma_s * L))))


def _tower_profile(ts: np.ndarray, L: float, prm: Params, J: int) -> np.ndarray:
    """Periodized profile sum with peaks at the odd multiples (1+2j)L."""
    js = np.arange(-J - 1, J + 1)
    centers = (1.0 + 2.0 * js) * L
    return np.cosh(ts[..., None] - centers) ** (-prm.gamma_s) @ np.ones(len(centers))


def _collocation_matrix(ts: np.ndarray, L: float, prm: Params, tol: float,
                        kappa: float) -> np.ndarray:
    """Folded product-trapezoid matrix A with (A w)_k ~ kappa*int R_per*(c w)."""
    m = len(ts) - 1
    h = L / m
    lattice = periodized_lattice(
        lambda a: riesz_kernel_cyl(a, prm, tol=tol),
        np.arange(2 * m + 1) * h, L, _periodization_order(L, prm))
    k = np.arange(m + 1)
    kk, qq = np.meshgrid(k, k, indexing="ij")
    W = lattice[np.abs(kk - qq)] + lattice[kk + qq]
    W[:, 0] = lattice[k]            # tau = 0 contributes once
    W[:, m] = lattice[np.abs(k - m)]  # tau = L pairs with tau = -L by periodicity
    return prm.c_ns * kappa * h * W


def solve_periodic(L: float, prm: Params, M: int = 800, tol: float = 1e-10,
                   max_iter: int = 60, init_factor: float = 1.0,
                   quad_tol: float = 1e-11, kappa: float | None = None) -> CylSolution:
    """Solve the periodic problem at half-period L on an M-point grid.

    The returned solution is even by construction (half-grid unknowns,
    reflected quadrature) and strictly positive; the damped Newton step
    halves until positivity and residual decrease both hold.
    """
    if L < 1.5:
        raise ValueError(f"half-period too small: {L} < 1.5")
    if M < 200:
        raise ValueError(f"grid too coarse: {M} < 200")
    if kappa is None:
        kappa = calibrate_cyl_kernel(prm, tol=quad_tol).kappa
    m = M // 2
    ts = np.linspace(0.0, L, m + 1)
    A = _collocation_matrix(ts, L, prm, quad_tol, kappa)
    Jper = _periodization_order(L, prm)
    v = init_factor * _tower_profile(ts, L, prm, Jper + 1)

    def residual(w: np.ndarray) -> np.ndarray:
        return w - A @ w**prm.p

    F = residual(v)
    norm = float(np.max(np.abs(F)))
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise NewtonError("iteration budget exhausted", norm, it)
        Jac = np.eye(m + 1) - A * (prm.p * v ** (prm.p - 1.0))[None, :]
        step = np.linalg.solve(Jac, -F)
        alpha = 1.0
        for _ in range(50):
            cand = v + alpha * step
            if np.all(cand > 0.0):
                Fc = residual(cand)
                nc = float(np.max(np.abs(Fc)))
                if nc < norm:
                    v, F, norm = cand, Fc, nc
                    break
            alpha *= 0.5
        else:
            raise NewtonError("positivity lost along the Newton step", norm, it)
        it += 1

    # reject states off the tower branch: below the bifurcation half-period
    # the collocation fixed point collapses to the flat profile, and near the
    # threshold Newton can land phase-flipped (peak at the origin)
    osc = float((v.max() - v.min()) / v.mean())
    if osc < 1e-2:
        a = cyl_coefficient(prm)
        raise NewtonError(
            f"converged to the constant branch (flat profile {a:.6g}); "
            "no tower solution at this half-period", norm, it)
    if v[0] > np.min(v):
        raise NewtonError("converged with the neck away from the origin", norm, it)

    grid = np.concatenate([-ts[:0:-1], ts])
    v_full = np.concatenate([v[:0:-1], v])
    psi_full = v_full - _tower_profile(grid, L, prm, Jper + 1)
    return CylSolution(
        L=float(L),
        grid=grid,
        v=v_full,
        psi=psi_full,
        neck=float(v[0]),
        residual_norm=norm,
        n_iter=it,
        kappa=float(kappa),
    )


def delaunay_to_rn(sol: CylSolution, x, prm: Params):
    """Map the periodic profile back to the punctured space.

    u(x) = |x|^{-gamma_s} v(-ln|x| mod 2L); exactly self-similar under
    x -> e^{-2L} x by construction.
    """
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(r == 0.0):
        raise ValueError("the profile is singular at the origin")
    t = -np.log(r)
    tr = np.mod(t + sol.L, 2.0 * sol.L) - sol.L
    val = r ** (-prm.gamma_s) * sol.spline(tr)
    return float(val) if np.ndim(val) == 0 else val


# ─────────────────────────────────────────────────────────────────────────────
# sweeps


@dataclass(frozen=True)
class SweepRow:
    L: float
    eps: float
    psi_sup: float
    resid: float
    iters: int
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    slope_eps: float
    slope_psi: float


def neck_sweep(L_list: Sequence[float], prm: Params, M: int = 800,
               tol: float = 1e-10) -> SweepResult:
    """Solve along increasing L and fit the two decay laws.

    Failures are kept as marked rows; slopes use the successful entries.
    """
    L_arr = [float(L) for L in L_list]
    if len(L_arr) < 3:
        raise ValueError("need at least three half-periods for a slope fit")
    if any(b <= a for a, b in zip(L_arr, L_arr[1:])):
        raise ValueError("half-periods must be strictly increasing")
    kappa = calibrate_cyl_kernel(prm).kappa
    rows = []
    for L in L_arr:
        try:
            sol = solve_periodic(L, prm, M=M, tol=tol, kappa=kappa)
            rows.append(SweepRow(L, sol.neck, float(np.max(np.abs(sol.psi))),
                                 sol.residual_norm, sol.n_iter))
        except (NewtonError, ValueError) as exc:
            rows.append(SweepRow(L, float("nan"), float("nan"), float("nan"),
                                 0, error=str(exc)))
    good = [r for r in rows if r.error is None]
    if len(good) < 2:
        slope_eps = slope_psi = float("nan")
    else:
        Ls = np.array([r.L for r in good])
        slope_eps = float(np.polyfit(Ls, np.log([r.eps for r in good]), 1)[0])
        slope_psi = float(np.polyfit(Ls, np.log([r.psi_sup for r in good]), 1)[0])
    return SweepResult(rows=tuple(rows), slope_eps=slope_eps, slope_psi=slope_psi)


def sweep_csv(sweep: SweepResult) -> str:
    """Render a sweep as CSV (failed rows keep nan markers)."""
    buf = io.StringIO()
    buf.write("L,eps,psi_sup,resid,iters\n")
    for r in sweep.rows:
        buf.write(f"{r.L:.6g},{r.eps:.12g},{r.psi_sup:.12g},{r.resid:.6g},{r.iters}\n")
    return buf.getvalue()


def bifurcation_half_period(prm: Params, tol: float = 1e-10,
                            w_max: float = 8.0) -> float:
    """Half-period where tower solutions split off the constant branch.

    Linearizing the collocation fixed point at the flat profile gives the
    mode-1 condition p * F(pi/L) = F(0) with F the cosine transform of the
    reduced kernel; the normalization constants cancel, so the threshold
    depends on (n, sigma) only.  Below the returned L the flat profile is
    the only positive even periodic solution.
    """
    def ft(w: float) -> float:
        val, _ = quad(lambda t: riesz_kernel_cyl(t, prm, tol=tol) * np.cos(w * t),
                      0.0, 60.0, epsabs=1e-12, epsrel=1e-10, limit=400)
        return 2.0 * val

    f0 = ft(0.0)
    w_star = brentq(lambda w: ft(w) - f0 / prm.p, 1e-2, w_max, xtol=1e-9)
    return float(np.pi / w_star)
