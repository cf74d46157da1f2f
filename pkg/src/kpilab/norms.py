"""Norm families: X^N, Y^N, Z_t^N, weighted Sobolev, Z_L, and embedding ratios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import Field, deriv, inv_dx, weighted_integral
from .weights import WeightFn, WeightSpec


def multi_indices(N: int, exact: bool = False) -> list[tuple[int, int]]:
    """All (a1, a2) with a1 + a2 <= N (or == N when exact)."""
    out = []
    for total in range(N, -1, -1) if exact else range(N + 1):
        for a1 in range(total + 1):
            out.append((a1, total - a1))
        if exact:
            break
    return out


@dataclass(frozen=True)
class NormReport:
    kind: str
    order: int
    value: float
    components: dict[str, float] = field(default_factory=dict)
    window: float = 1.0
    weight_spec: WeightSpec | None = None

    def __post_init__(self):
        if self.components:
            total = sum(self.components.values())
            if total > 0 and abs(self.value ** 2 - total) > 1e-8 * total:
                raise ValueError("norm value inconsistent with its components")


def _sq(u: Field) -> float:
    return weighted_integral(u, u)


def _alpha_key(a1: int, a2: int, suffix: str) -> str:
    return f"dx{a1}dy{a2}_{suffix}"


def x_norm(u: Field, N: int) -> NormReport:
    """||u||_{X^N}: u^2 plus (d^a u_xxx)^2 and (d^a dx^-1 u_yy)^2, |a| <= N."""
    comps = {"u^2": _sq(u)}
    invdx_uyy = inv_dx(deriv(u, (0, 2)))
    for a1, a2 in multi_indices(N):
        comps[_alpha_key(a1, a2, "uxxx^2")] = _sq(deriv(u, (a1 + 3, a2)))
        comps[_alpha_key(a1, a2, "invdx_uyy^2")] = _sq(deriv(invdx_uyy, (a1, a2)))
    value = float(np.sqrt(sum(comps.values())))
    return NormReport(kind="XN" if N else "X0", order=N, value=value,
                      components=comps)


def y_norm(u: Field, N: int) -> NormReport:
    """||u||_{Y^N}: X^N components plus the (d^a u_yy)^2 family."""
    comps = {"u^2": _sq(u)}
    invdx_uyy = inv_dx(deriv(u, (0, 2)))
    for a1, a2 in multi_indices(N):
        comps[_alpha_key(a1, a2, "uxxx^2")] = _sq(deriv(u, (a1 + 3, a2)))
        comps[_alpha_key(a1, a2, "invdx_uyy^2")] = _sq(deriv(invdx_uyy, (a1, a2)))
        comps[_alpha_key(a1, a2, "uyy^2")] = _sq(deriv(u, (a1, a2 + 2)))
    value = float(np.sqrt(sum(comps.values())))
    return NormReport(kind="YN", order=N, value=value, components=comps)


def zt_norm(traj, N: int) -> NormReport:
    """sup-in-time norm of a trajectory; u_t is evaluated through the
    equation (spectral accuracy) rather than by differencing snapshots."""
    from .dynamics import rhs

    sup_space = 0.0
    sup_time = 0.0
    for snap in traj.snapshots:
        space = _sq(snap)
        ut = rhs(snap)
        time_part = _sq(ut)
        for a1, a2 in multi_indices(N, exact=True):
            space += _sq(deriv(snap, (a1 + 3, a2)))
            space += _sq(deriv(snap, (a1, a2 + 2)))
            time_part += _sq(deriv(ut, (a1, a2)))
        sup_space = max(sup_space, space)
        sup_time = max(sup_time, time_part)
    comps = {"sup_space": sup_space, "sup_ut": sup_time}
    return NormReport(kind="ZtN", order=N, value=float(np.sqrt(sup_space + sup_time)),
                      components=comps)


def weighted_sobolev_norm(u: Field, N: int, f: WeightFn, t: float | None = None) -> NormReport:
    """H~^N_x: full Sobolev part plus the f-weighted top x-derivative."""
    if t is None:
        t = u.time
    comps = {}
    for a1, a2 in multi_indices(N):
        comps[_alpha_key(a1, a2, "u^2")] = _sq(deriv(u, (a1, a2)))
    top = deriv(u, (N, 0)).with_time(t)
    comps["f_dxN_u^2"] = weighted_integral(top, top, f, window=f.window)
    value = float(np.sqrt(sum(comps.values())))
    return NormReport(kind="HtildeN", order=N, value=value, components=comps,
                      window=f.window, weight_spec=f.spec)


def zL_norm(u: Field, L: int, f: WeightFn, t: float | None = None) -> NormReport:
    """Z_L: X^1-type leading terms plus the weighted Sobolev tail."""
    if t is None:
        t = u.time
    comps = {
        "u^2": _sq(u),
        "uxxxx^2": _sq(deriv(u, (4, 0))),
        "invdx_uyy^2": _sq(inv_dx(deriv(u, (0, 2)))),
        "uyy^2": _sq(deriv(u, (0, 2))),
    }
    for a1, a2 in multi_indices(L):
        comps[_alpha_key(a1, a2, "u^2")] = _sq(deriv(u, (a1, a2)))
    top = deriv(u, (L, 0)).with_time(t)
    comps["f_dxL_u^2"] = weighted_integral(top, top, f, window=f.window)
    value = float(np.sqrt(sum(comps.values())))
    return NormReport(kind="ZL", order=L, value=value, components=comps,
                      window=f.window, weight_spec=f.spec)


def linf_embedding_ratio(u: Field) -> float:
    """max|u| over the L-infinity embedding's right-hand side."""
    denom_sq = _sq(u) + _sq(deriv(u, (2, 0))) + _sq(deriv(u, (0, 1)))
    if denom_sq == 0.0:
        raise ValueError("embedding ratio undefined for the zero field")
    return u.max_abs() / float(np.sqrt(denom_sq))


def anisotropic_Ln_ratio(u: Field, n: int) -> float:
    """L^n norm over the anisotropic derivative norm, 2 <= n < 6."""
    if not 2 <= n < 6:
        raise ValueError(f"n={n} outside the embedding's range 2 <= n < 6")
    g = u.grid
    lhs = float(np.sum(np.abs(u.phys()) ** n) * g.cell) ** (1.0 / n)
    denom_sq = _sq(u) + _sq(deriv(u, (1, 0))) + _sq(inv_dx(deriv(u, (0, 1))))
    if denom_sq == 0.0:
        raise ValueError("embedding ratio undefined for the zero field")
    return lhs / float(np.sqrt(denom_sq))
