"""Weight functions behaving like t^k * e^{sigma x} (left) and t^k * x^i (right).

A weight is t^k times a time-independent x-profile.  The profile glues the
exponential branch (x <= -1) to the polynomial branch (x >= 1) with a C-inf
partition of unity built from exp(-1/s), and is tapered near the box
boundary down to a small positive floor so that it is smooth across the
periodic seam.  All x-derivatives up to order 4 are produced analytically
(sympy chain rule per region), never by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .spectral import Grid2D

MAX_DERIV = 4

# Taper floor: keeps f > 0 on the whole torus so derivative ratios stay finite.
EPS_W = 1e-8

_X = sp.Symbol("x", real=True)


def _smoothstep(z):
    """C-infinity step: 0 for z<=0, 1 for z>=1, built from exp(-1/z)."""
    s = sp.exp(-1 / z)
    s1 = sp.exp(-1 / (1 - z))
    return s / (s + s1)


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightSpec:
    """Exponential rate sigma, polynomial power i, time power k."""

    sigma: float
    i: int
    k: int

    def __post_init__(self):
        if self.sigma < 0:
            raise WeightError(f"sigma={self.sigma} must be >= 0")
        if self.i < 0 or self.k < 0:
            raise WeightError("polynomial and time powers must be >= 0")


class _PiecewiseProfile:
    """Smooth x-profile given by one sympy expression per region.

    Regions are (mask_fn, expr, clamp_lo, clamp_hi); clamping nudges
    evaluation points off the removable endpoint singularities of the
    exp(-1/s) bump (where the profile is flat to all orders, so the clamp
    is exact to machine precision).
    """

    def __init__(self, regions):
        self._regions = []
        for mask_fn, expr, lo, hi in regions:
            funcs = []
            d = sp.sympify(expr)
            for r in range(MAX_DERIV + 1):
                funcs.append(sp.lambdify(_X, d, modules="numpy"))
                d = sp.diff(d, _X)
            self._regions.append((mask_fn, funcs, lo, hi))

    def d(self, x, r: int) -> np.ndarray:
        if not 0 <= r <= MAX_DERIV:
            raise WeightError(f"derivative order {r} outside 0..{MAX_DERIV}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        with np.errstate(under="ignore"):
            for mask_fn, funcs, lo, hi in self._regions:
                m = mask_fn(x)
                if not m.any():
                    continue
                xs = np.clip(x[m], lo, hi)
                vals = funcs[r](xs)
                out[m] = np.broadcast_to(vals, xs.shape)
        return out


@dataclass(frozen=True)
class WeightFn:
    """Realized weight f(x, t) = t^k * profile(x) with analytic derivatives."""

    spec: WeightSpec
    grid: Grid2D
    window: float
    profile: _PiecewiseProfile
    eps_w: float = EPS_W
    t_floor: float = 1e-6

    def eval(self, x, t: float, r: int = 0) -> np.ndarray:
        """r-th x-derivative of f at time t."""
        p = self.profile.d(x, r)
        if self.spec.k == 0:
            return p
        if t <= 0.0:
            return np.zeros_like(p)
        return t ** self.spec.k * p

    def eval_t(self, x, t: float) -> np.ndarray:
        """Time derivative of f."""
        k = self.spec.k
        p = self.profile.d(x, 0)
        if k == 0:
            return np.zeros_like(p)
        if t <= 0.0 and k > 1:
            return np.zeros_like(p)
        return k * t ** (k - 1) * p


def _taper_regions(sigma: float, i: int, Lx: float, x0: float, eps: float):
    """Region table for the standard blended-and-tapered profile."""
    M = Lx - x0
    delta = 1e-6 * M
    A = sp.exp(sigma * _X) if sigma > 0 else sp.Integer(1)
    B = (1 + _X) ** i if i > 0 else sp.Integer(1)
    blend = A + _smoothstep((_X + 1) / 2) * (B - A)
    ramp_l = _smoothstep((_X + Lx) / M)
    ramp_r = _smoothstep((Lx - _X) / M)
    return [
        (lambda x: x < -x0, eps + ramp_l * (A - eps), -Lx + delta, -x0 - delta),
        (lambda x: (x >= -x0) & (x <= -1), A, -x0, -1.0),
        (lambda x: (x > -1) & (x < 1), blend, -1 + 1e-9, 1 - 1e-9),
        (lambda x: (x >= 1) & (x <= x0), B, 1.0, x0),
        (lambda x: x > x0, eps + ramp_r * (B - eps), x0 + delta, Lx - delta),
    ]


@lru_cache(maxsize=256)
def _build_profile(sigma: float, i: int, Lx: float, x0: float,
                   eps: float) -> _PiecewiseProfile:
    return _PiecewiseProfile(_taper_regions(sigma, i, Lx, x0, eps))


def build_weight(spec: WeightSpec, grid: Grid2D, window: float) -> WeightFn:
    """Construct a weight in class W_{sigma, i, k} on the given box."""
    if not (0.0 < window < 1.0):
        raise WeightError(f"window={window} must lie in (0, 1): the taper "
                          "must not clip the region where the class bounds hold")
    x0 = window * grid.Lx
    if x0 <= 1.0:
        raise WeightError(
            f"interior window |x| <= {x0:.3g} does not contain the asymptotic "
            "region |x| > 1; enlarge the box or the window")
    profile = _build_profile(float(spec.sigma), int(spec.i), float(grid.Lx),
                             float(x0), EPS_W)
    return WeightFn(spec=spec, grid=grid, window=window, profile=profile)


@dataclass(frozen=True)
class WeightReport:
    """Tightest realized class constants, or the violation that was found."""

    ok: bool
    c1: float = math.nan
    c2: float = math.nan
    c3: float = math.nan
    c4: float = math.nan
    c5: float = math.nan
    violations: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {"ok": self.ok, "c1": self.c1, "c2": self.c2, "c3": self.c3,
                "c4": self.c4, "c5": self.c5, "violations": list(self.violations)}


def validate_weight(w: WeightFn, grid: Grid2D, T: float,
                    oversample: int = 4) -> WeightReport:
    """Sample the interior window and report realized class constants."""
    if T <= 0:
        raise WeightError("T must be positive")
    x0 = w.window * grid.Lx
    xs = np.linspace(-x0, x0, oversample * grid.nx + 1)
    p = w.profile.d(xs, 0)
    violations = []
    if np.any(~np.isfinite(p)):
        bad = xs[~np.isfinite(p)][0]
        violations.append(f"profile not finite at x={bad:.6g}")
    if np.any(p <= 0):
        bad = xs[p <= 0][0]
        violations.append(f"profile not positive at x={bad:.6g}")
    if violations:
        return WeightReport(ok=False, violations=tuple(violations))

    sigma, i, k = w.spec.sigma, w.spec.i, w.spec.k
    # The t^k factor cancels in every class ratio, so the constants are
    # time-independent; t|f_t|/f contributes exactly k to c5.
    left = xs < -1
    right = xs > 1
    c1 = float(np.min(np.exp(-sigma * xs[left]) * p[left]))
    c2 = float(np.max(np.exp(-sigma * xs[left]) * p[left]))
    c3 = float(np.min(xs[right] ** (-i) * p[right]))
    c4 = float(np.max(xs[right] ** (-i) * p[right]))
    c5 = 0.0
    for r in range(1, MAX_DERIV + 1):
        c5 = max(c5, float(np.max(np.abs(w.profile.d(xs, r)) / p)))
    c5 += k
    cs = (c1, c2, c3, c4, c5)
    if not all(np.isfinite(c) for c in cs) or c1 <= 0 or c3 <= 0:
        return WeightReport(ok=False, c1=c1, c2=c2, c3=c3, c4=c4, c5=c5,
                            violations=("class constants not finite/positive",))
    return WeightReport(ok=True, c1=c1, c2=c2, c3=c3, c4=c4, c5=c5)


class _AntiderivativeProfile:
    """Profile F with F' == g's profile exactly; F(x) = tail + int_{-Lx}^x g.

    The exponential lower tail int_{-inf}^{-Lx} e^{sigma z} dz is closed
    form; the on-box part is a dense cumulative quadrature (values only:
    every derivative of F is an analytic derivative of g).
    """

    def __init__(self, g_profile: _PiecewiseProfile, sigma: float, Lx: float,
                 n_dense: int = 16385):
        self._g = g_profile
        xs = np.linspace(-Lx, Lx, n_dense)
        gv = g_profile.d(xs, 0)
        cum = cumulative_trapezoid(gv, xs, initial=0.0)
        tail = math.exp(-sigma * Lx) / sigma
        self._spline = CubicSpline(xs, tail + cum)

    def d(self, x, r: int) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if r == 0:
            return self._spline(x)
        return self._g.d(x, r - 1)


def antiderivative_weight(g: WeightFn) -> WeightFn:
    """Integrate g in W_{sigma, i, k} from -infinity: result is in
    W_{sigma, i+1, k} and satisfies f_x == g exactly."""
    if g.spec.sigma <= 0:
        raise WeightError("antiderivative needs sigma > 0 (the lower tail "
                          "of a sigma=0 weight does not converge)")
    profile = _AntiderivativeProfile(g.profile, g.spec.sigma, g.grid.Lx)
    spec = WeightSpec(sigma=g.spec.sigma, i=g.spec.i + 1, k=g.spec.k)
    return WeightFn(spec=spec, grid=g.grid, window=g.window, profile=profile)


def _persistence_regions(i: int, Lx: float, x0: float):
    """Bounded-below family member: 1 on the left, (1+x)^i on the right,
    blended on [0, 1] so that f_i >= 1 everywhere, relaxing back to 1 at
    the periodic seam."""
    M = Lx - x0
    delta = 1e-6 * M
    B = (1 + _X) ** i
    blend = 1 + _smoothstep(_X) * (B - 1)
    ramp_r = _smoothstep((Lx - _X) / M)
    return [
        (lambda x: x <= 0, sp.Integer(1), -Lx, 0.0),
        (lambda x: (x > 0) & (x < 1), blend, 1e-9, 1 - 1e-9),
        (lambda x: (x >= 1) & (x <= x0), B, 1.0, x0),
        (lambda x: x > x0, 1 + ramp_r * (B - 1), x0 + delta, Lx - delta),
    ]


@lru_cache(maxsize=64)
def _persistence_profile(i: int, Lx: float, x0: float) -> _PiecewiseProfile:
    return _PiecewiseProfile(_persistence_regions(i, Lx, x0))


def persistence_weight_family(K: int, grid: Grid2D,
                              window: float = 0.75) -> list[WeightFn]:
    """f_i in W_{0, i, 0}, i = 0..K, with f_i >= 1 and (f_i)_x <= C f_{i-1}."""
    if K < 0:
        raise WeightError("K must be >= 0")
    x0 = window * grid.Lx
    if x0 <= 1.0:
        raise WeightError("interior window must contain the region x > 1")
    out = []
    for i in range(K + 1):
        profile = _persistence_profile(int(i), float(grid.Lx), float(x0))
        out.append(WeightFn(spec=WeightSpec(0.0, i, 0), grid=grid,
                            window=window, profile=profile))
    return out


def family_derivative_bound(family: list[WeightFn], grid: Grid2D,
                            oversample: int = 4) -> float:
    """Smallest C with (f_i)_x <= C f_{i-1} on the interior window, over i >= 1."""
    if len(family) < 2:
        return 0.0
    x0 = family[0].window * grid.Lx
    xs = np.linspace(-x0, x0, oversample * grid.nx + 1)
    C = 0.0
    for lo, hi in zip(family[:-1], family[1:]):
        ratio = hi.profile.d(xs, 1) / lo.profile.d(xs, 0)
        C = max(C, float(np.max(ratio)))
    return C
