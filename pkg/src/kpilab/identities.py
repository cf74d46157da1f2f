"""Weighted-energy identity machinery: the Leibniz expansion of the
quadratic term, the five integration-by-parts identities, and the exact
energy identity evaluated along numerical trajectories.

For a weight f(x, t) and multi-index a = (a1, a2), the identity reads

    d/dt I[f (d^a u)^2] + I[3 f_x (d^a u_x)^2] - I[(f_t + f_xxx + f_x)(d^a u)^2]
        - I[f_x (d^a dx^{-1} u_y)^2] + I[R_a] = 0

with R_a the trilinear double-binomial expansion of 2 f (d^a u) d^a(u u_x).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .spectral import Field, deriv, inv_dx
from .weights import WeightFn
from .dynamics import Trajectory


@dataclass(frozen=True)
class LeibnizTerm:
    n: int
    m: int
    coeff: int
    left: tuple[int, int]
    right: tuple[int, int]


def leibniz_terms(alpha: tuple[int, int]) -> list[LeibnizTerm]:
    """Double-binomial expansion of d^alpha (u u_x)."""
    a1, a2 = alpha
    if a1 < 0 or a2 < 0:
        raise ValueError(f"invalid multi-index {alpha}")
    out = []
    for n in range(a1 + 1):
        for m in range(a2 + 1):
            out.append(LeibnizTerm(
                n=n, m=m, coeff=comb(a1, n) * comb(a2, m),
                left=(n, m), right=(a1 + 1 - n, a2 - m)))
    return out


def _leibniz_sum(u: Field, alpha: tuple[int, int]) -> np.ndarray:
    total = np.zeros((u.grid.nx, u.grid.ny))
    for term in leibniz_terms(alpha):
        total += term.coeff * deriv(u, term.left).phys() * deriv(u, term.right).phys()
    return total


def check_leibniz(u: Field, alpha: tuple[int, int]) -> float:
    """Relative L2 mismatch between the expansion and d^alpha(u u_x).

    The direct side is evaluated spectrally without dealiasing, so the
    comparison is exact for fields band-limited below half the grid.
    """
    if sum(alpha) > 6:
        raise ValueError("multi-index order above 6 unsupported")
    prod = Field.from_phys(u.grid, u.phys() * deriv(u, (1, 0)).phys())
    direct = deriv(prod, alpha).phys()
    expansion = _leibniz_sum(u, alpha)
    scale = np.sqrt(np.mean(direct ** 2)) + np.sqrt(np.mean(expansion ** 2))
    if scale == 0.0:
        return 0.0
    return float(np.sqrt(np.mean((direct - expansion) ** 2)) / scale)


@dataclass(frozen=True)
class TermBreakdown:
    """One adjacent-snapshot interval of the energy identity."""

    t: float                    # mid-interval time
    dA: float                   # d/dt of the weighted energy (centered difference)
    B: float                    # 3 f_x against (d^a u_x)^2
    C: float                    # -(f_t + f_xxx + f_x) against (d^a u)^2
    D: float                    # -f_x against (d^a dx^{-1} u_y)^2
    E: float                    # trilinear remainder integral
    @property
    def residual(self) -> float:
        return self.dA + self.B + self.C + self.D + self.E

    @property
    def largest(self) -> float:
        return max(abs(self.B), abs(self.C), abs(self.D), abs(self.E))


def _wq(u: Field, v: Field, wvals: np.ndarray) -> float:
    g = u.grid
    return float(np.sum(u.phys() * v.phys() * wvals[:, None]) * g.cell)


def _weighted_energy(u: Field, f: WeightFn, alpha: tuple[int, int]) -> float:
    du = deriv(u, alpha)
    return _wq(du, du, f.eval(u.grid.x, u.time, 0))


def main_equality_terms(traj: Trajectory, f: WeightFn,
                        alpha: tuple[int, int]) -> list[TermBreakdown]:
    """Evaluate every identity term per adjacent-snapshot interval.

    dA is a centered difference of the weighted energy at the snapshot
    times; the remaining terms use the midpoint field (average of the two
    snapshots), giving second-order consistency in the snapshot spacing.
    Quadrature runs over the full torus: the taper makes the weight
    periodic-smooth, and trajectory fields obey the decay margin.
    """
    out = []
    x = traj.grid.x
    for lo, hi in zip(traj.snapshots[:-1], traj.snapshots[1:]):
        dt = hi.time - lo.time
        tm = 0.5 * (lo.time + hi.time)
        mid = Field.from_spec(traj.grid, 0.5 * (lo.spec() + hi.spec()), time=tm,
                              zero_x_mean=lo.zero_x_mean)
        dA = (_weighted_energy(hi, f, alpha) - _weighted_energy(lo, f, alpha)) / dt

        fx = f.eval(x, tm, 1)
        theta = -(f.eval_t(x, tm) + f.eval(x, tm, 3) + fx)
        da_u = deriv(mid, alpha)
        da_ux = deriv(mid, (alpha[0] + 1, alpha[1]))
        da_invdx_uy = deriv(inv_dx(deriv(mid, (0, 1))), alpha)

        B = _wq(da_ux, da_ux, 3.0 * fx)
        C = _wq(da_u, da_u, theta)
        D = _wq(da_invdx_uy, da_invdx_uy, -fx)
        fvals = f.eval(x, tm, 0)
        E = float(np.sum(2.0 * fvals[:, None] * da_u.phys()
                         * _leibniz_sum(mid, alpha)) * traj.grid.cell)
        out.append(TermBreakdown(t=tm, dA=dA, B=B, C=C, D=D, E=E))
    return out


def ibp_identity_check(u: Field, f: WeightFn, alpha: tuple[int, int],
                       which: int, v: Field | None = None) -> float:
    """Relative mismatch of one integration-by-parts identity.

    1: time term   2 I[f P P_t] = d/ds I[f (P + s P_v)^2] at s = 0
       (the time slot P_t is filled by an arbitrary field v; the path
       derivative is formed by symmetric differencing, which is exact
       for the quadratic dependence on s)
    2: dispersive  2 I[f P d^a u_xxx] = 3 I[f_x (d^a u_x)^2] - I[f_xxx P^2]
    3: transport   2 I[f P d^a u_x] = -I[f_x P^2]
    4: nonlocal   -2 I[f P d^a dx^{-1} u_yy] = -I[f_x (d^a dx^{-1} u_y)^2]
    5: nonlinear   2 I[f P d^a (u u_x)] = I[R_a]
    with P = d^a u.
    """
    t = u.time
    x = u.grid.x
    fvals = f.eval(x, t, 0)
    fx = f.eval(x, t, 1)
    P = deriv(u, alpha)

    if which == 1:
        if v is None:
            raise ValueError("identity 1 needs a field for the time slot")
        Pv = deriv(v, alpha)
        lhs = 2.0 * _wq(P, Pv, fvals)
        h = 1e-3
        rhs = (_wq_path(P, Pv, fvals, +h) - _wq_path(P, Pv, fvals, -h)) / (2.0 * h)
    elif which == 2:
        Q = deriv(u, (alpha[0] + 3, alpha[1]))
        Px = deriv(u, (alpha[0] + 1, alpha[1]))
        lhs = 2.0 * _wq(P, Q, fvals)
        rhs = 3.0 * _wq(Px, Px, fx) - _wq(P, P, f.eval(x, t, 3))
    elif which == 3:
        Px = deriv(u, (alpha[0] + 1, alpha[1]))
        lhs = 2.0 * _wq(P, Px, fvals)
        rhs = -_wq(P, P, fx)
    elif which == 4:
        Q = deriv(inv_dx(deriv(u, (0, 2))), alpha)
        R = deriv(inv_dx(deriv(u, (0, 1))), alpha)
        lhs = -2.0 * _wq(P, Q, fvals)
        rhs = -_wq(R, R, fx)
    elif which == 5:
        prod = Field.from_phys(u.grid, u.phys() * deriv(u, (1, 0)).phys())
        lhs = 2.0 * _wq(P, deriv(prod, alpha), fvals)
        rhs = float(np.sum(2.0 * fvals[:, None] * P.phys()
                           * _leibniz_sum(u, alpha)) * u.grid.cell)
    else:
        raise ValueError(f"identity index {which} outside 1..5")
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)


def _wq_path(P: Field, Pv: Field, fvals: np.ndarray, s: float) -> float:
    g = P.grid
    vals = P.phys() + s * Pv.phys()
    return float(np.sum(fvals[:, None] * vals * vals) * g.cell)


@dataclass(frozen=True)
class InequalityRecord:
    t: float
    lhs: float
    rhs: float
    tolerance: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + self.tolerance


def main_inequality_monitor(traj: Trajectory, f: WeightFn,
                            alpha: tuple[int, int]) -> list[InequalityRecord]:
    """Check the sign-structure inequality per interval: bounding the
    trilinear remainder by its absolute value in the identity gives

        dA + B <= (-D) + (-C) + |E|

    up to the identity's own discretization residual, which sets the
    per-interval tolerance."""
    out = []
    for tb in main_equality_terms(traj, f, alpha):
        lhs = tb.dA + tb.B
        rhs = -tb.D - tb.C + abs(tb.E)
        # lhs - rhs equals the residual exactly when E < 0, so pad the
        # bound by a few ulps to keep the comparison robust.
        tol = max(abs(tb.residual) * (1.0 + 1e-9), 1e-12 * max(tb.largest, 1.0))
        out.append(InequalityRecord(t=tb.t, lhs=lhs, rhs=rhs, tolerance=tol))
    return out
