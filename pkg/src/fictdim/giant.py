"""Separable "friendly giant" profile on a ball, q > 2.

The profile V solves the integral equation V = T V with

    (T V)(R) = int_R^1 ( (q-1)/(p-1) int_0^r V(y)/(q-2) (y/r)^(d-1) dy )^(1/(q-1)) dr

and t^(-1/(q-2)) V(r) is then a solution vanishing on the sphere r = 1.

Near the origin V = V(0) - c r^b + ... with b = q/(q-1), so V is smooth as
a function of z = r^b but not of r.  Both quadratures below run in z: the
inner one integrates V(z) against the exact power weight, and the outer
integrand r^(1/(q-1)) G(r) dr becomes G dz / b with G smooth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .params import EquationParams, derive

DEFAULT_NODES = 1024
MIN_NODES = 32


class GiantError(RuntimeError):
    """The monotone iteration failed to converge or collapsed to zero."""


@dataclass
class GiantProfile:
    params: EquationParams
    r: np.ndarray
    V: np.ndarray
    report: dict = field(default_factory=dict)

    @property
    def radius(self) -> float:
        return float(self.r[-1])

    @property
    def h(self) -> float:
        return float(self.r[1] - self.r[0])


def _require_slow(params: EquationParams):
    if not params.q > 2:
        raise ValueError("the separable profile needs q > 2")


def _constants(params: EquationParams):
    q = params.q
    d = derive(params).d
    beta = 1.0 / (q - 1.0)
    b = q / (q - 1.0)
    kk = (q - 1.0) / ((params.p - 1.0) * (q - 2.0))
    return d, beta, b, kk


def unit_nodes(nodes: int) -> np.ndarray:
    if int(nodes) != nodes or nodes < MIN_NODES:
        raise ValueError(f"node count must be an integer >= {MIN_NODES}")
    return np.linspace(0.0, 1.0, int(nodes))


def _inner_mean(V, r, d, b):
    """r^(-d) int_0^r V(y) y^(d-1) dy at every node (V(0)/d at r = 0).

    V is taken linear in z = y^b on each panel and integrated against the
    weight y^(d-1) dy = z^c dz / b, c = (d - b)/b, with exact moments.
    """
    z = r**b
    c = (d - b) / b
    za, zb = z[:-1], z[1:]
    dz = zb - za
    m0 = (zb ** (c + 1) - za ** (c + 1)) / (c + 1)
    m1 = (zb ** (c + 2) - za ** (c + 2)) / (c + 2)
    # int z^c (zb - z)/dz and int z^c (z - za)/dz over each panel
    wa = (zb * m0 - m1) / dz
    wb = (m1 - za * m0) / dz
    panel = (V[:-1] * wa + V[1:] * wb) / b
    cum = np.concatenate(([0.0], np.cumsum(panel)))
    out = np.empty_like(r)
    out[0] = V[0] / d
    out[1:] = cum[1:] / r[1:] ** d
    return out


def _G(V, r, params):
    """G with r^(1/(q-1)) G(r) = (k int_0^r V (y/r)^(d-1) dy)^(1/(q-1))."""
    d, beta, b, kk = _constants(params)
    mean = _inner_mean(V, r, d, b)
    return (kk * np.maximum(mean, 0.0)) ** beta


def apply_T(V: np.ndarray, params: EquationParams, r: Optional[np.ndarray] = None) -> np.ndarray:
    """(T V) at the nodes; V is given at uniformly spaced nodes on [0, 1]."""
    _require_slow(params)
    V = np.asarray(V, dtype=float)
    if r is None:
        r = unit_nodes(V.size)
    if np.any(V < 0):
        raise ValueError("V must be nonnegative")
    _, _, b, _ = _constants(params)
    G = _G(V, r, params)
    z = r**b
    panel = 0.5 * (G[:-1] + G[1:]) * np.diff(z) / b
    # running sum from the outer end so that (T V)(1) = 0 exactly
    out = np.zeros_like(V)
    out[:-1] = np.cumsum(panel[::-1])[::-1]
    return out


def M_bound_min(params: EquationParams) -> float:
    """Smallest constant M for which the crude bound T M <= M holds."""
    _require_slow(params)
    d, _, _, kk = _constants(params)
    return (kk / d) ** (1.0 / (params.q - 2.0))


def m_bound(params: EquationParams) -> float:
    """Lower bound m with m^((q-2)/(q-1)) = int_{1/2}^1 (r k / d)^(1/(q-1)) dr."""
    _require_slow(params)
    d, beta, _, kk = _constants(params)
    val, _ = quad(lambda r: (r * kk / d) ** beta, 0.5, 1.0, epsabs=0, epsrel=1e-13)
    return val ** ((params.q - 1.0) / (params.q - 2.0))


def fixed_point(params: EquationParams, tol: float = 1e-10, max_iter: int = 10_000,
                nodes: int = DEFAULT_NODES, M_start: float = 1.0) -> GiantProfile:
    """Monotone iteration V <- T V from the constant M_start (from above)."""
    _require_slow(params)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if M_start < M_bound_min(params):
        raise ValueError(f"M_start={M_start} is below the bound {M_bound_min(params):.6g}")
    r = unit_nodes(nodes)
    V = np.full(r.size, float(M_start))
    V[-1] = 0.0
    monotone = True
    change = math.inf
    for it in range(1, max_iter + 1):
        new = apply_T(V, params, r)
        if np.any(new > V + 1e-14 * max(1.0, float(V.max()))):
            monotone = False
        change = float(np.max(np.abs(new - V)))
        V = new
        if change < tol:
            break
    else:
        raise GiantError(f"no convergence after {max_iter} iterations (last change {change:.3e})")
    lo = m_bound(params)
    if V.max() < 0.5 * lo:
        raise GiantError(f"iteration collapsed: sup V = {V.max():.3e} < m_bound/2 = {0.5 * lo:.3e}")
    prof = GiantProfile(params, r, V)
    prof.report = {
        "iterations": it,
        "final_change": change,
        "monotone": monotone,
        "integral_residual": float(np.max(np.abs(apply_T(V, params, r) - V))),
        "ode_residual": ode_residual(prof),
        "m_bound": lo,
        "M_start": float(M_start),
        "above_m_bound": bool(V.max() >= lo),
        "nodes": int(r.size),
    }
    return prof


def _zderivative(F, z):
    """dF/dz at interior nodes, three-point formula on nonuniform nodes."""
    h1 = z[1:-1] - z[:-2]
    h2 = z[2:] - z[1:-1]
    return (-h2 / (h1 * (h1 + h2)) * F[:-2] + (h2 - h1) / (h1 * h2) * F[1:-1]
            + h1 / (h2 * (h1 + h2)) * F[2:])


def ode_residual(profile: GiantProfile) -> float:
    """max over interior nodes of |V'(r) + (k int_0^r V (y/r)^(d-1) dy)^(1/(q-1))|."""
    params = profile.params
    _, beta, b, _ = _constants(params)
    R = profile.radius
    # work on the unit ball; the equation is invariant under the rescaling
    # V -> R^(q/(q-2)) V(r/R) up to the factor R^(2/(q-2)) on both terms
    s = 1.0 / R
    amp = R ** (params.q / (params.q - 2.0))
    r = profile.r * s
    V = profile.V / amp
    if not np.any(V):
        return 0.0
    z = r**b
    dV = _zderivative(V, z) * b * r[1:-1] ** beta
    g = r[1:-1] ** beta * _G(V, r, params)[1:-1]
    return float(np.max(np.abs(dV + g))) * R ** (2.0 / (params.q - 2.0))


def first_node_slope(profile: GiantProfile) -> float:
    """One-sided difference (V_1 - V_0)/h at the origin."""
    return float((profile.V[1] - profile.V[0]) / profile.h)


def rescale(profile: GiantProfile, R_target: float) -> GiantProfile:
    """Profile on [0, R_target]: V_R(r) = R^(q/(q-2)) V(r/R)."""
    if not R_target > 0:
        raise ValueError("R_target must be positive")
    ratio = R_target / profile.radius
    amp = ratio ** (profile.params.q / (profile.params.q - 2.0))
    out = GiantProfile(profile.params, profile.r * ratio, profile.V * amp,
                       dict(profile.report, radius=float(profile.radius * ratio)))
    return out


def separable_eval(profile: GiantProfile, r, t):
    """t^(-1/(q-2)) V(r), linear interpolation between nodes."""
    if not t > 0:
        raise ValueError("t must be positive")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(r_arr > profile.radius * (1 + 1e-12)):
        raise ValueError("r outside the ball")
    val = t ** (-1.0 / (profile.params.q - 2.0)) * np.interp(r_arr, profile.r, profile.V)
    return float(val) if np.ndim(r) == 0 else val


def write_csv(profile: GiantProfile, path, extra: Optional[dict] = None) -> Path:
    from .io import write_table

    meta = {"kind": "giant", "radius": profile.radius}
    meta.update({k: v for k, v in profile.report.items()})
    if extra:
        meta.update(extra)
    return write_table(path, {"r": profile.r, "V": profile.V}, profile.params, meta)
