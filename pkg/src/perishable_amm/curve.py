"""Power-family state curves and the AMM surface they induce.

A curve is pinned by an exponent ``c`` and an anchor state ``(x0, y0)``::

    f(x) = y0 * (x / x0) ** -c          A(x, y) = x**c * y - x0**c * y0

``x`` is the nonperishable reserve (cash) and ``y`` the perishable one.
Every reachable state satisfies ``A(x, y) == 0``.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, DomainError, InsufficientInventoryError

__all__ = [
    "AxiomReport",
    "Bounds",
    "CurveParams",
    "GridSpec",
    "PoolState",
    "check_amm_axioms",
    "cost_to_buy_units",
    "evaluate",
    "proceeds_to_sell_units",
    "rebase",
    "slippage",
    "spot_price",
    "surface",
]

CURVE_RTOL = 1e-9


@dataclass(frozen=True)
class CurveParams:
    c: float
    x0: float
    y0: float
    k: float = field(init=False)

    def __post_init__(self):
        for name in ("c", "x0", "y0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")
        object.__setattr__(self, "k", self.x0**self.c * self.y0)


@dataclass(frozen=True)
class Bounds:
    a: float
    b: float

    def __post_init__(self):
        if not (0 < self.a < self.b):
            raise BoundsError(f"bounds need 0 < a < b, got a={self.a}, b={self.b}")

    def __contains__(self, c):
        return self.a <= c <= self.b

    def check(self, c):
        if c not in self:
            raise BoundsError(f"constant {c} outside [{self.a}, {self.b}]")
        return c


@dataclass(frozen=True)
class PoolState:
    x: float
    y: float

    def on_curve(self, params, rtol=CURVE_RTOL):
        if self.x <= 0 or self.y <= 0:
            return False
        return abs(self.x**params.c * self.y - params.k) <= rtol * params.k


def _positive(name, value):
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value!r}")


def _whole_units(n):
    if isinstance(n, bool) or not isinstance(n, numbers.Integral):
        raise DomainError(f"unit count must be an integer, got {n!r}")
    if n <= 0:
        raise DomainError(f"unit count must be positive, got {n}")
    return int(n)


def evaluate(params: CurveParams, x: float) -> float:
    """Reserve of Y on the curve when the reserve of X is ``x``."""
    _positive("x", x)
    return params.y0 * (x / params.x0) ** -params.c


def surface(params: CurveParams, x: float, y: float) -> float:
    _positive("x", x)
    _positive("y", y)
    return x**params.c * y - params.k


def spot_price(params: CurveParams, x: float) -> float:
    """Instantaneous price of one unit of Y in X, ``|f'(x)| = c f(x) / x``."""
    return params.c * evaluate(params, x) / x


def slippage(params: CurveParams, x: float) -> float:
    """Second derivative of the curve, ``c (c + 1) f(x) / x**2``."""
    return params.c * (params.c + 1) * evaluate(params, x) / (x * x)


def cost_to_buy_units(params: CurveParams, state: PoolState, n: int) -> float:
    """X a trader must add to take ``n`` whole units of Y out of the pool."""
    n = _whole_units(n)
    if n >= state.y:
        raise InsufficientInventoryError(
            f"cannot take {n} units from a reserve of {state.y}; the curve never drains Y"
        )
    return (params.k / (state.y - n)) ** (1.0 / params.c) - state.x


def proceeds_to_sell_units(params: CurveParams, state: PoolState, n: int) -> float:
    """X paid out by the pool when a trader puts ``n`` units of Y in."""
    n = _whole_units(n)
    return state.x - (params.k / (state.y + n)) ** (1.0 / params.c)


def rebase(params: CurveParams, new_c: float, anchor: PoolState, bounds: Bounds | None = None) -> CurveParams:
    """Curve with exponent ``new_c`` passing through ``anchor``.

    ``params`` is accepted for symmetry with the other operations; the new
    curve depends only on the exponent and the anchor.
    """
    if bounds is not None:
        bounds.check(new_c)
    _positive("anchor.x", anchor.x)
    _positive("anchor.y", anchor.y)
    return CurveParams(new_c, anchor.x, anchor.y)


@dataclass(frozen=True)
class GridSpec:
    """Sampling rectangle ``[lo, hi]**2`` for the axiom checker."""

    lo: float = 1.0
    hi: float = 200.0
    points: int = 100
    pairs: int = 4000
    derivative_points: int = 20
    seed: int = 0


@dataclass(frozen=True)
class AxiomReport:
    monotone_ok: bool
    convexity_ok: bool
    differentiability_ok: bool
    worst_violation: float
    samples_checked: int

    @property
    def ok(self):
        return self.monotone_ok and self.convexity_ok and self.differentiability_ok


def _surface_grid(c, k, x, y):
    return x**c * y - k


def _monotone_violation(c, k, xs, ys):
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    A = _surface_grid(c, k, X, Y)
    scale = np.abs(A) + k
    dx = np.diff(A, axis=0)
    dy = np.diff(A, axis=1)
    vx = np.maximum(0.0, -dx) / scale[1:, :]
    vy = np.maximum(0.0, -dy) / scale[:, 1:]
    return float(max(vx.max(initial=0.0), vy.max(initial=0.0))), dx.size + dy.size


def _convexity_violation(c, k, xs, ys, pairs, rng):
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    A = _surface_grid(c, k, X, Y)
    # superlevel sets {A >= beta} are only claimed for beta >= 0
    inside = np.flatnonzero(A.ravel() >= 0.0)
    if inside.size < 2:
        return 0.0, 0
    i = rng.choice(inside, size=pairs)
    j = rng.choice(inside, size=pairs)
    distinct = i != j
    i, j = i[distinct], j[distinct]
    x1, y1, a1 = X.ravel()[i], Y.ravel()[i], A.ravel()[i]
    x2, y2, a2 = X.ravel()[j], Y.ravel()[j], A.ravel()[j]
    beta = np.minimum(a1, a2)
    worst = 0.0
    for t in (0.25, 0.5, 0.75):
        am = _surface_grid(c, k, t * x1 + (1 - t) * x2, t * y1 + (1 - t) * y2)
        v = np.maximum(0.0, beta - am) / (beta + k)
        worst = max(worst, float(v.max(initial=0.0)))
    return worst, 3 * i.size


def _second_difference(fn, z, h):
    return (fn(z + h) - 2.0 * fn(z) + fn(z - h)) / (h * h)


def _richardson(fn, z, h):
    # two Richardson levels on the central second difference: error O(h**6)
    d1 = _second_difference(fn, z, h)
    d2 = _second_difference(fn, z, h / 2)
    d3 = _second_difference(fn, z, h / 4)
    r1 = (4 * d2 - d1) / 3
    r2 = (4 * d3 - d2) / 3
    return (16 * r2 - r1) / 15


def _mixed_difference(fn, x, y, hx, hy):
    return (fn(x + hx, y + hy) - fn(x + hx, y - hy) - fn(x - hx, y + hy) + fn(x - hx, y - hy)) / (4 * hx * hy)


def _differentiability_violation(c, k, xs, ys, n):
    sx = xs[np.linspace(0, xs.size - 1, n).astype(int)]
    sy = ys[np.linspace(0, ys.size - 1, n).astype(int)]
    X, Y = np.meshgrid(sx, sy, indexing="ij")
    hx, hy = 1e-2 * X, 1e-2 * Y
    # k has zero derivative; differencing A + k avoids cancellation against it
    A = lambda x, y: _surface_grid(c, 0.0, x, y)  # noqa: E731
    axx = _richardson(lambda x: A(x, Y), X, hx)
    ayy = _richardson(lambda y: A(X, y), Y, hy)
    # first Richardson level is enough for the mixed partial, A is linear in y
    m1 = _mixed_difference(A, X, Y, hx, hy)
    m2 = _mixed_difference(A, X, Y, hx / 2, hy / 2)
    axy = (4 * m2 - m1) / 3
    exact_xx = c * (c - 1) * X ** (c - 2) * Y
    exact_xy = c * X ** (c - 1)
    # natural magnitudes of each second partial
    sxx = (c * (c + 1) + 1) * X**c * Y / X**2
    sxy = (c + 1) * X**c / X
    v = max(
        float(np.max(np.abs(axx - exact_xx) / sxx)),
        float(np.max(np.abs(ayy) / (X**c * Y / Y**2))),
        float(np.max(np.abs(axy - exact_xy) / sxy)),
    )
    return v, 3 * X.size


def check_amm_axioms(params: CurveParams, grid: GridSpec | None = None, tolerance: float = 1e-8) -> AxiomReport:
    """Numerically certify the AMM axioms for ``A(x, y) = x**c y - k``.

    Checks strict monotonicity along both axes, midpoint convexity of the
    superlevel sets ``{A >= beta}`` for ``beta >= 0`` at t in {1/4, 1/2, 3/4},
    and that Richardson-extrapolated second differences converge to the
    second partials. All violations are relative; a flag is true when its
    worst violation is within ``tolerance``.
    """
    grid = grid or GridSpec()
    if not (0 < grid.lo < grid.hi):
        raise DomainError("grid must lie in the open positive quadrant")
    if grid.points < 100:
        raise DomainError("the axiom grid needs at least 100 points per axis")
    xs = np.linspace(grid.lo, grid.hi, grid.points)
    ys = xs.copy()
    rng = np.random.default_rng(grid.seed)
    c, k = params.c, params.k

    v_mono, n_mono = _monotone_violation(c, k, xs, ys)
    v_conv, n_conv = _convexity_violation(c, k, xs, ys, grid.pairs, rng)
    v_diff, n_diff = _differentiability_violation(c, k, xs, ys, grid.derivative_points)
    return AxiomReport(
        monotone_ok=v_mono <= tolerance,
        convexity_ok=v_conv <= tolerance,
        differentiability_ok=v_diff <= tolerance,
        worst_violation=max(v_mono, v_conv, v_diff),
        samples_checked=n_mono + n_conv + n_diff,
    )
