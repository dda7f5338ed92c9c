"""Explicit solutions: Barenblatt-type profiles, heat-type kernel, traveling wave.

All profiles are functions of the radius only.  The Barenblatt formulas are
the d-dimensional q-Laplacian source solutions evaluated at the rescaled time
``s = (p-1)/(q-1) * (t + t_delay)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import mpmath
import numpy as np
from scipy.optimize import brentq

from .params import EquationParams, Regime, derive, range_condition, regime

# working precision for the finite-difference residual checks
_MP_DPS = 40


class UnboundedSupport(ValueError):
    """Raised when a finite support radius is requested for a non-slow profile."""


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class BarenblattSpec:
    params: EquationParams
    C: float = 1.0
    t_delay: float = 0.0
    r_center: float = 0.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"mass constant C must be positive, got {self.C}")
        if self.t_delay < 0:
            raise ValueError("t_delay must be nonnegative")
        if regime(self.params) is Regime.FAST and not range_condition(self.params):
            raise ValueError(
                f"fast Barenblatt profile needs the range condition, {self.params} violates it"
            )

    @property
    def regime(self) -> Regime:
        return regime(self.params)

    def with_C(self, C: float) -> "BarenblattSpec":
        return replace(self, C=C)


def _shifted_time(spec: BarenblattSpec, t):
    tt = t + spec.t_delay
    if np.any(np.asarray(tt) <= 0):
        raise ValueError("t + t_delay must be positive")
    return tt


def _profile(spec: BarenblattSpec, r, tt, exp, pos):
    """Closed form at radius r and shifted time tt = t + t_delay.

    ``exp`` and ``pos`` (positive part) are supplied by the numeric backend.
    """
    par = spec.params
    p, q = par.p, par.q
    ex = derive(par)
    d, lam = ex.d, ex.lam
    C = spec.C
    reg = regime(par)
    if reg is Regime.LINEAR:
        return C * tt ** (-d / 2) * exp(-(r * r) / (4 * (p - 1) * tt))
    s = par.diffusion_factor * tt
    eta = r / s ** (1 / lam)
    if reg is Regime.SLOW:
        c = (q - 2) / q * lam ** (1 / (1 - q))
        return s ** (-d / lam) * pos(C - c * eta ** (q / (q - 1))) ** ((q - 1) / (q - 2))
    c = (2 - q) / q * lam ** (1 / (1 - q))
    return s ** (-d / lam) * (C + c * eta ** (q / (q - 1))) ** (-(q - 1) / (2 - q))


def barenblatt_eval(spec: BarenblattSpec, r, t):
    """Evaluate the source-type solution; r may be an array."""
    tt = _shifted_time(spec, t)
    rr = np.abs(np.asarray(r, dtype=float) - spec.r_center)
    out = _profile(spec, rr, tt, np.exp, lambda x: np.maximum(x, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def _barenblatt_mp(spec: BarenblattSpec, r, t):
    tt = mpmath.mpf(t) + spec.t_delay
    if tt <= 0:
        raise ValueError("t + t_delay must be positive")
    rr = abs(mpmath.mpf(r) - spec.r_center)
    return _profile(spec, rr, tt, mpmath.exp, lambda x: x if x > 0 else mpmath.mpf(0))


def support_radius(spec: BarenblattSpec, t: float) -> float:
    if spec.regime is not Regime.SLOW:
        raise UnboundedSupport(f"{spec.regime.value} profile has unbounded support")
    par = spec.params
    q = par.q
    lam = derive(par).lam
    s = par.diffusion_factor * _shifted_time(spec, t)
    edge = s ** (1 / lam) * (spec.C * q / (q - 2)) ** ((q - 1) / q) * lam ** (1 / q)
    return spec.r_center + edge


def _grade(x, k):
    """Smooth map of [0, 1] onto itself, flat to order k at both ends."""
    a, b = x**k, (1 - x) ** k
    g = a / (a + b)
    dg = k * x ** (k - 1) * (1 - x) ** (k - 1) / (a + b) ** 2
    return g, dg


def _simpson(f, a, b, cells):
    x = np.linspace(a, b, cells + 1)
    y = f(x)
    h = (b - a) / cells
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def _weighted_integral(spec, t, power, quad_cells, rtol, max_doublings=12):
    """Integral of B(r, t) r^power over (0, inf) by refined composite Simpson."""
    if quad_cells < 64:
        raise ValueError("quad_cells must be at least 64")
    if spec.r_center != 0:
        raise ValueError("moments are defined for centred profiles only")
    cells = quad_cells + (quad_cells % 2)

    if spec.regime is Regime.SLOW:
        edge = support_radius(spec, t)

        def estimate(m):
            def integrand(x):
                g, dg = _grade(x, 4)
                r = edge * g
                return barenblatt_eval(spec, r, t) * r**power * edge * dg

            return _simpson(integrand, 0.0, 1.0, m)
    else:
        estimate = _tail_estimator(spec, t, power)

    prev = estimate(cells)
    for _ in range(max_doublings):
        cells *= 2
        cur = estimate(cells)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    raise QuadratureError(f"quadrature did not reach rtol={rtol} after {cells} cells")


def _tail_estimator(spec, t, power):
    par = spec.params
    ex = derive(par)
    tt = _shifted_time(spec, t)
    if spec.regime is Regime.LINEAR:
        r0 = math.sqrt(4 * (par.p - 1) * tt)
    else:
        q = par.q
        if power - q / (2 - q) >= -1:
            raise ValueError(f"moment r^{power} diverges for the fast profile (tail ~ r^(-q/(2-q)))")
        s = par.diffusion_factor * tt
        c = (2 - q) / q * ex.lam ** (1 / (1 - q))
        # radius where the two bracket terms balance
        r0 = s ** (1 / ex.lam) * (spec.C / c) ** ((q - 1) / q)

    def integrand(r):
        return barenblatt_eval(spec, r, t) * r**power

    # panel ends: graded core [0, r0] followed by doubling panels
    probe = r0 * np.geomspace(1e-3, 1.0, 200)
    peak = max(integrand(probe).max(), integrand(np.array([r0])).max())
    ends = [r0]
    while integrand(np.array([ends[-1]]))[0] > 1e-14 * peak:
        ends.append(2.0 * ends[-1])
        if len(ends) > 400:
            raise QuadratureError("tail cutoff not reached")

    def estimate(m):
        def core(x):
            g, dg = x**4, 4 * x**3
            return integrand(r0 * g) * r0 * dg

        total = _simpson(core, 0.0, 1.0, m)
        per_panel = max(16, m // 8 + (m // 8) % 2)
        for a, b in zip(ends[:-1], ends[1:]):
            total += _simpson(integrand, a, b, per_panel)
        return total

    return estimate


def d_mass(spec: BarenblattSpec, t: float, quad_cells: int = 64, rtol: float = 1e-11) -> float:
    """Integral of B(r, t) r^(d-1) dr; constant in t."""
    return _weighted_integral(spec, t, derive(spec.params).d - 1, quad_cells, rtol)


def n_moment(spec: BarenblattSpec, t: float, quad_cells: int = 64, rtol: float = 1e-11) -> float:
    """Integral of B(r, t) r^(n-1) dr; behaves like t^(-mu)."""
    return _weighted_integral(spec, t, spec.params.n - 1, quad_cells, rtol)


def mass_exponent(params: EquationParams) -> float:
    """e such that d_mass(C) = d_mass(1) * C**e (from substituting r ~ C^((q-1)/q))."""
    q = params.q
    d = derive(params).d
    reg = regime(params)
    if reg is Regime.LINEAR:
        return 1.0
    if reg is Regime.SLOW:
        return (q - 1) / (q - 2) + d * (q - 1) / q
    return -(q - 1) / (2 - q) + d * (q - 1) / q


def C_for_mass(params: EquationParams, mass: float, t_delay: float = 0.0) -> float:
    """Mass constant of the Barenblatt profile carrying the given d-mass."""
    if not mass > 0:
        raise ValueError("mass must be positive")
    unit = d_mass(BarenblattSpec(params, 1.0, t_delay), 1.0)
    return (mass / unit) ** (1.0 / mass_exponent(params))


def self_similar_residual(spec: BarenblattSpec, r: float, t: float, h: float) -> float:
    """Central-difference residual of the weighted radial equation at (r, t).

    u_t - (p-1)/(q-1) |u_r|^(q-2) ((q-1) u_rr + (d-1)/r u_r), with the
    closed form sampled in extended precision so only truncation error remains.
    """
    if r <= 0 or h <= 0 or r - h <= 0:
        raise ValueError("need 0 < h < r")
    if spec.regime is Regime.SLOW and r + h >= support_radius(spec, t + h) - spec.r_center:
        raise ValueError("stencil touches the free boundary")
    par = spec.params
    d = derive(par).d
    with mpmath.workdps(_MP_DPS):
        r_, t_, h_ = mpmath.mpf(r), mpmath.mpf(t), mpmath.mpf(h)
        f = lambda rr, tt: _barenblatt_mp(spec, rr, tt)  # noqa: E731
        u0 = f(r_, t_)
        u_t = (f(r_, t_ + h_) - f(r_, t_ - h_)) / (2 * h_)
        u_r = (f(r_ + h_, t_) - f(r_ - h_, t_)) / (2 * h_)
        u_rr = (f(r_ + h_, t_) - 2 * u0 + f(r_ - h_, t_)) / h_**2
        rhs = par.diffusion_factor * abs(u_r) ** (par.q - 2) * (
            (par.q - 1) * u_rr + (d - 1) / r_ * u_r
        )
        return float(u_t - rhs)


# ---------------------------------------------------------------------------
# traveling wave


@dataclass(frozen=True)
class TravelingWaveSpec:
    params: EquationParams
    a: float
    b: float = 0.0
    c_amp: float = 1.0

    def __post_init__(self):
        if not self.params.q > 2:
            raise ValueError("traveling wave needs q > 2")
        if not self.a > 0:
            raise ValueError("wave speed must be positive")


def traveling_wave_eval(spec: TravelingWaveSpec, x1, t):
    q = spec.params.q
    z = spec.a * t + np.asarray(x1, dtype=float) - spec.b
    out = spec.c_amp * np.maximum(z, 0.0) ** ((q - 1) / (q - 2))
    return float(out) if np.ndim(out) == 0 else out


def traveling_wave_residual(spec: TravelingWaveSpec, x1: float, t: float, h: float = 1e-4) -> float:
    """u_t - (p-1)|u'|^(q-2) u'' by central differences (extended precision)."""
    p, q = spec.params.p, spec.params.q
    m = (q - 1) / (q - 2)

    def u(x, tt):
        z = spec.a * tt + x - spec.b
        return spec.c_amp * z**m if z > 0 else mpmath.mpf(0)

    with mpmath.workdps(_MP_DPS):
        x_, t_, h_ = mpmath.mpf(x1), mpmath.mpf(t), mpmath.mpf(h)
        u_t = (u(x_, t_ + h_) - u(x_, t_ - h_)) / (2 * h_)
        u_x = (u(x_ + h_, t_) - u(x_ - h_, t_)) / (2 * h_)
        u_xx = (u(x_ + h_, t_) - 2 * u(x_, t_) + u(x_ - h_, t_)) / h_**2
        return float(u_t - (p - 1) * abs(u_x) ** (q - 2) * u_xx)


def calibrate_traveling_wave(params: EquationParams, a: float, b: float = 0.0,
                             x_ref: float = 1.0, t_ref: float = 0.0) -> TravelingWaveSpec:
    """Find the amplitude that makes the wave an exact solution.

    The residual is c * (positive - c^(q-2) * positive), so the nontrivial
    root of residual/c is bracketed between 0 and a large amplitude.
    """
    base = TravelingWaveSpec(params, a, b)
    if a * t_ref + x_ref - b <= 0:
        raise ValueError("reference point must lie behind the front")

    def scaled(c):
        return traveling_wave_residual(replace(base, c_amp=c), x_ref, t_ref) / c

    lo, hi = 1e-12, 1.0
    while scaled(hi) > 0:
        hi *= 4.0
    c_amp = brentq(scaled, lo, hi, xtol=1e-15, rtol=1e-14)
    return replace(base, c_amp=c_amp)
