"""Radial operator versus the weighted 1-D divergence form.

``radial_rhs`` is the n-dimensional operator written in the radius,

    |u_r|^(q-2) ((p-1) u_rr + (n-1)/r u_r),

and ``divergence_rhs`` the q-Laplacian in the fictitious dimension d,

    (p-1)/(q-1) r^(1-d) (|u_r|^(q-2) u_r r^(d-1))_r .

They agree identically for smooth profiles with u_r != 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .params import EquationParams, derive

GRADIENT_FLOOR = 1e-12


class SingularPoint(ValueError):
    """Vanishing gradient with q < 2: the diffusivity blows up."""


@dataclass
class SampledProfile:
    radii: np.ndarray
    values: np.ndarray
    du: Optional[Callable[[float], float]] = None
    d2u: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.radii.shape != self.values.shape or self.radii.ndim != 1:
            raise ValueError("radii and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be strictly increasing")
        if np.any(self.radii <= 0):
            raise ValueError("radii must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile values must be finite")

    @classmethod
    def from_callable(cls, f, df, d2f, radii):
        radii = np.asarray(radii, dtype=float)
        return cls(radii, np.array([f(r) for r in radii]), df, d2f)

    @property
    def analytic(self) -> bool:
        return self.du is not None and self.d2u is not None


def _locate(profile: SampledProfile, where):
    """Return (radius, index or None)."""
    if isinstance(where, (int, np.integer)):
        i = int(where)
        return profile.radii[i], i
    r = float(where)
    if profile.analytic:
        return r, None
    hits = np.flatnonzero(np.isclose(profile.radii, r, rtol=1e-14, atol=0))
    if hits.size == 0:
        raise ValueError(f"radius {r} is not a sample point of a finite-difference profile")
    return r, int(hits[0])


def _fd_derivatives(profile: SampledProfile, i: int):
    if i <= 0 or i >= profile.radii.size - 1:
        raise ValueError("finite differences need an interior sample")
    r, u = profile.radii, profile.values
    h1, h2 = r[i] - r[i - 1], r[i + 1] - r[i]
    um, u0, up = u[i - 1], u[i], u[i + 1]
    u_r = (-h2 / (h1 * (h1 + h2)) * um + (h2 - h1) / (h1 * h2) * u0
           + h1 / (h2 * (h1 + h2)) * up)
    u_rr = 2 * (um / (h1 * (h1 + h2)) - u0 / (h1 * h2) + up / (h2 * (h1 + h2)))
    return u_r, u_rr


def _derivatives(profile: SampledProfile, where):
    r, i = _locate(profile, where)
    if r <= 0:
        raise ValueError("radius must be positive")
    if profile.analytic:
        return r, i, profile.du(r), profile.d2u(r)
    u_r, u_rr = _fd_derivatives(profile, i)
    return r, i, u_r, u_rr


def _flat(u_r, q):
    """True when the gradient is below the floor and the value is degenerate 0."""
    if abs(u_r) >= GRADIENT_FLOOR:
        return False
    if q < 2:
        raise SingularPoint("vanishing gradient with q < 2")
    return q > 2


def radial_rhs(profile: SampledProfile, where, params: EquationParams) -> float:
    r, _, u_r, u_rr = _derivatives(profile, where)
    n, p, q = params.n, params.p, params.q
    if _flat(u_r, q):
        return 0.0
    return abs(u_r) ** (q - 2) * ((p - 1) * u_rr + (n - 1) / r * u_r)


def _phi(s, q):
    return np.abs(s) ** (q - 2) * s


def divergence_rhs(profile: SampledProfile, where, params: EquationParams) -> float:
    r, i, u_r, u_rr = _derivatives(profile, where)
    q = params.q
    d = derive(params).d
    k = params.diffusion_factor
    if _flat(u_r, q):
        return 0.0
    if profile.analytic:
        # product rule for (phi(u_r) r^(d-1))', then the r^(1-d) weight
        flux_deriv = ((q - 1) * abs(u_r) ** (q - 2) * u_rr * r ** (d - 1)
                      + _phi(u_r, q) * (d - 1) * r ** (d - 2))
        return k * r ** (1 - d) * flux_deriv
    # conservative difference of face fluxes
    rr, u = profile.radii, profile.values
    rm, rp = 0.5 * (rr[i - 1] + rr[i]), 0.5 * (rr[i] + rr[i + 1])
    g_m = _phi((u[i] - u[i - 1]) / (rr[i] - rr[i - 1]), q) * rm ** (d - 1)
    g_p = _phi((u[i + 1] - u[i]) / (rr[i + 1] - rr[i]), q) * rp ** (d - 1)
    return k * r ** (1 - d) * (g_p - g_m) / (rp - rm)


def equivalence_check(profile: SampledProfile, params: EquationParams,
                      sample_radii: Sequence) -> float:
    """Max relative discrepancy between the two operator forms over the samples.

    Samples at r <= 0, at the ends of a finite-difference profile, or with a
    gradient below the floor are skipped.
    """
    worst = None
    for where in sample_radii:
        try:
            r, i, u_r, _ = _derivatives(profile, where)
        except ValueError:
            continue
        if abs(u_r) < GRADIENT_FLOOR:
            continue
        a = radial_rhs(profile, where, params)
        b = divergence_rhs(profile, where, params)
        scale = max(abs(a), abs(b), np.finfo(float).tiny)
        rel = abs(a - b) / scale
        worst = rel if worst is None else max(worst, rel)
    if worst is None:
        raise ValueError("no admissible sample points")
    return worst
