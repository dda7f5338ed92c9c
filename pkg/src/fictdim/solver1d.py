"""Explicit conservative finite-volume solver for the weighted q-Laplacian.

Solves

    u_t = (p-1)/(q-1) r^(1-d) (|u_r|^(q-2) u_r r^(d-1))_r     on [0, R]

with cell averages on a uniform grid, cell weights int r^(d-1) dr, zero flux
at the origin and either zero flux or u = 0 at r = R.  Face fluxes use the
two-point gradient with the regularized flux function

    phi_delta(s) = (s^2 + delta^2)^((q-2)/2) s .

The time step is chosen so that every updated value is a convex combination
of its old neighbours, which gives the discrete maximum principle, the
comparison principle and the weighted L^m contraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .params import EquationParams, derive

SUPPORT_THRESHOLD = 1e-12
DEFAULT_FAST_DELTA = 1e-8

# kernel status codes
_OK, _UNDERFLOW, _NONFINITE, _STOPPED = 0, 1, 2, 3


class SolverError(RuntimeError):
    """Non-finite values or a collapsing time step."""


class OuterBC(str, Enum):
    DIRICHLET_ZERO = "dirichlet"
    ZERO_FLUX = "zeroflux"


@dataclass(frozen=True)
class Grid:
    R: float
    cells: int
    d: float

    @property
    def h(self) -> float:
        return self.R / self.cells

    @property
    def faces(self) -> np.ndarray:
        return np.linspace(0.0, self.R, self.cells + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.h

    @property
    def weights(self) -> np.ndarray:
        f = self.faces
        return (f[1:] ** self.d - f[:-1] ** self.d) / self.d

    @property
    def face_area(self) -> np.ndarray:
        """r^(d-1) at every face (0 at the origin when d > 1)."""
        f = self.faces
        out = f ** (self.d - 1)
        if self.d == 1:
            out[:] = 1.0
        return out


def build_grid(R: float, cells: int, d: float) -> Grid:
    if not R > 0:
        raise ValueError("R must be positive")
    if int(cells) != cells or cells < 16:
        raise ValueError("cells must be an integer >= 16")
    if not d >= 1:
        raise ValueError("d must be >= 1")
    return Grid(float(R), int(cells), float(d))


@dataclass
class RadialState:
    grid: Grid
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.array(self.u, dtype=float)
        if self.u.shape != (self.grid.cells,):
            raise ValueError("state size does not match the grid")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("state values must be finite")

    def copy(self) -> "RadialState":
        return RadialState(self.grid, self.u.copy(), self.t)


@dataclass(frozen=True)
class SolverConfig:
    cfl_safety: float = 0.4
    outer_bc: OuterBC = OuterBC.ZERO_FLUX
    fast_regularization: Optional[float] = None
    max_dt: float = math.inf
    nan_guard: bool = True

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        object.__setattr__(self, "outer_bc", OuterBC(self.outer_bc))
        if self.fast_regularization is not None and self.fast_regularization < 0:
            raise ValueError("fast_regularization must be nonnegative")
        if not self.max_dt > 0:
            raise ValueError("max_dt must be positive")

    def delta(self, params: EquationParams) -> float:
        """Regularization in force for these parameters."""
        if self.fast_regularization is None:
            return DEFAULT_FAST_DELTA if params.q < 2 else 0.0
        if params.q < 2 and self.fast_regularization == 0:
            raise ValueError("fast diffusion (q < 2) needs a positive regularization")
        return self.fast_regularization


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    d_mass: list = field(default_factory=list)
    support: list = field(default_factory=list)
    l2w: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    steps: int = 0
    grid: Optional[Grid] = None
    params: Optional[EquationParams] = None
    config: Optional[SolverConfig] = None

    def record(self, state: RadialState, keep_snapshot: bool):
        if self.times and state.t <= self.times[-1]:
            raise ValueError("trajectory times must increase")
        self.times.append(state.t)
        self.sup.append(sup_norm(state))
        self.d_mass.append(d_mass(state))
        self.support.append(support_radius(state))
        self.l2w.append(math.sqrt(float(np.sum(state.u**2 * state.grid.weights))))
        if keep_snapshot:
            self.snapshots.append(state.u.copy())

    def states(self) -> list:
        """Snapshots as RadialState objects (requires snapshots=True)."""
        if len(self.snapshots) != len(self.times):
            raise ValueError("trajectory was recorded without snapshots")
        return [RadialState(self.grid, u, t) for t, u in zip(self.times, self.snapshots)]

    def as_arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in ("times", "sup", "d_mass", "support", "l2w")}


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, inline="always")
def _gpow(x, e):
    # avoid the generic pow for the common exponents
    if e == 1.0:
        return x
    if e == 0.0:
        return 1.0
    if e == 0.5:
        return math.sqrt(x)
    return x ** e


@njit(cache=True)
def _face_terms(u, h, area, q, delta, qfac, dirichlet, flux, stiff):
    """Face fluxes r^(d-1) phi(s) and stiffness r^(d-1) max phi' / distance."""
    n = u.size
    e = 0.5 * (q - 2.0)
    d2 = delta * delta
    flux[0] = 0.0
    stiff[0] = 0.0
    for f in range(1, n):
        s = (u[f] - u[f - 1]) / h
        g = _gpow(s * s + d2, e)
        flux[f] = area[f] * g * s
        stiff[f] = area[f] * qfac * g / h
    if dirichlet:
        hb = 0.5 * h
        s = -u[n - 1] / hb
        g = _gpow(s * s + d2, e)
        flux[n] = area[n] * g * s
        stiff[n] = area[n] * qfac * g / hb
    else:
        flux[n] = 0.0
        stiff[n] = 0.0


@njit(cache=True)
def _stable_dt(stiff, w, k, cfl):
    cmax = 0.0
    for i in range(w.size):
        c = k * (stiff[i] + stiff[i + 1]) / w[i]
        if c > cmax:
            cmax = c
    if cmax == 0.0:
        return np.inf
    return cfl / cmax


@njit(cache=True)
def _advance(u, t, t_end, h, area, w, k, q, delta, qfac, dirichlet, cfl, max_dt,
             max_steps, nan_guard, stop_sup=0.0):
    n = u.size
    flux = np.empty(n + 1)
    stiff = np.empty(n + 1)
    steps = 0
    while t < t_end and steps < max_steps:
        _face_terms(u, h, area, q, delta, qfac, dirichlet, flux, stiff)
        dt = _stable_dt(stiff, w, k, cfl)
        if dt > max_dt:
            dt = max_dt
        # underflow is judged on the stability limit, not on a short landing step
        if dt < 1e-15 * max(abs(t), 1.0) and dt < t_end - t:
            return t, steps, _UNDERFLOW
        landing = False
        if dt >= t_end - t:
            dt = t_end - t
            landing = True
        for i in range(n):
            u[i] += dt * k * (flux[i + 1] - flux[i]) / w[i]
        t = t_end if landing else t + dt
        steps += 1
        if nan_guard:
            for i in range(n):
                if not np.isfinite(u[i]):
                    return t, steps, _NONFINITE
        if stop_sup > 0.0:
            top = 0.0
            for i in range(n):
                if abs(u[i]) > top:
                    top = abs(u[i])
            if top < stop_sup:
                return t, steps, _STOPPED
    return t, steps, _OK


@njit(cache=True)
def _advance_pair(u, v, t, t_end, h, area, w, k, q, delta, qfac, dirichlet, cfl,
                  max_dt, max_steps):
    """Advance two states with a common step that is monotone for both.

    The stiffness bound must cover every gradient between the two states:
    phi' grows with |s| for q >= 2, and peaks at s = 0 for q < 2.
    """
    n = u.size
    fu = np.empty(n + 1)
    su = np.empty(n + 1)
    fv = np.empty(n + 1)
    sv = np.empty(n + 1)
    stiff = np.empty(n + 1)
    e = 0.5 * (q - 2.0)
    steps = 0
    while t < t_end and steps < max_steps:
        _face_terms(u, h, area, q, delta, qfac, dirichlet, fu, su)
        _face_terms(v, h, area, q, delta, qfac, dirichlet, fv, sv)
        if q >= 2.0:
            for f in range(n + 1):
                stiff[f] = max(su[f], sv[f])
        else:
            for f in range(n + 1):
                if f == 0 or (f == n and not dirichlet):
                    stiff[f] = 0.0
                    continue
                dist = h if f < n else 0.5 * h
                if f < n:
                    a = (u[f] - u[f - 1]) / h
                    b = (v[f] - v[f - 1]) / h
                else:
                    a = -u[n - 1] / dist
                    b = -v[n - 1] / dist
                if a * b <= 0.0:
                    smin = 0.0
                else:
                    smin = min(abs(a), abs(b))
                stiff[f] = area[f] * qfac * (smin * smin + delta * delta) ** e / dist
        dt = _stable_dt(stiff, w, k, cfl)
        if dt > max_dt:
            dt = max_dt
        # underflow is judged on the stability limit, not on a short landing step
        if dt < 1e-15 * max(abs(t), 1.0) and dt < t_end - t:
            return t, steps, _UNDERFLOW
        landing = False
        if dt >= t_end - t:
            dt = t_end - t
            landing = True
        for i in range(n):
            u[i] += dt * k * (fu[i + 1] - fu[i]) / w[i]
            v[i] += dt * k * (fv[i + 1] - fv[i]) / w[i]
        t = t_end if landing else t + dt
        steps += 1
    return t, steps, _OK


# ---------------------------------------------------------------------------
# public API


def _kernel_args(grid: Grid, config: SolverConfig, params: EquationParams):
    d = derive(params).d
    if abs(d - grid.d) > 1e-12 * max(1.0, d):
        raise ValueError(f"grid dimension {grid.d} does not match the parameters (d={d})")
    q = params.q
    return dict(
        h=grid.h,
        area=grid.face_area,
        w=grid.weights,
        k=params.diffusion_factor,
        q=q,
        delta=config.delta(params),
        qfac=max(1.0, q - 1.0),
        dirichlet=config.outer_bc is OuterBC.DIRICHLET_ZERO,
        cfl=config.cfl_safety,
        max_dt=config.max_dt,
    )


def _raise_for(status, t):
    if status == _UNDERFLOW:
        raise SolverError(f"time step underflow at t={t:.6g}")
    if status == _NONFINITE:
        raise SolverError(f"non-finite value at t={t:.6g}")


def flux(face_radius: float, u_left: float, u_right: float, h: float,
         params: EquationParams, delta: float, d: Optional[float] = None) -> float:
    """r_face^(d-1) phi_delta((u_right - u_left)/h)."""
    if not h > 0:
        raise ValueError("h must be positive")
    if d is None:
        d = derive(params).d
    s = (u_right - u_left) / h
    area = 1.0 if d == 1 else face_radius ** (d - 1)
    return area * (s * s + delta * delta) ** ((params.q - 2) / 2) * s


def stable_dt(state: RadialState, config: SolverConfig, params: EquationParams) -> float:
    a = _kernel_args(state.grid, config, params)
    n = state.grid.cells
    fl, st = np.empty(n + 1), np.empty(n + 1)
    _face_terms(state.u, a["h"], a["area"], a["q"], a["delta"], a["qfac"], a["dirichlet"], fl, st)
    return min(_stable_dt(st, a["w"], a["k"], a["cfl"]), config.max_dt)


def step(state: RadialState, config: SolverConfig, params: EquationParams) -> RadialState:
    """One explicit step with the largest admissible time step."""
    dt = stable_dt(state, config, params)
    if not math.isfinite(dt):
        # no face carries any diffusivity: the update is identically zero
        return state.copy()
    out = state.copy()
    a = _kernel_args(state.grid, config, params)
    t, _, status = _advance(out.u, out.t, out.t + dt, max_steps=1,
                            nan_guard=config.nan_guard, **a)
    _raise_for(status, t)
    out.t = t
    return out


def advance(state: RadialState, t_end: float, config: SolverConfig,
            params: EquationParams, max_steps: int = 10**9,
            stop_sup: float = 0.0) -> tuple[RadialState, int]:
    """Step until exactly t_end; returns the new state and the step count.

    A positive stop_sup ends the run early, at the first step whose sup norm
    falls below it.
    """
    if t_end < state.t:
        raise ValueError("t_end lies before the current time")
    out = state.copy()
    a = _kernel_args(state.grid, config, params)
    t, steps, status = _advance(out.u, out.t, float(t_end), max_steps=max_steps,
                                nan_guard=config.nan_guard, stop_sup=float(stop_sup), **a)
    _raise_for(status, t)
    if t < t_end and status != _STOPPED:
        raise SolverError(f"step budget of {max_steps} exhausted at t={t:.6g}")
    out.t = t
    return out, steps


def run_until(state: RadialState, T_end: float, config: SolverConfig, params: EquationParams,
              sample_times: Optional[Sequence[float]] = None, snapshots: bool = False,
              callback: Optional[Callable[[RadialState], None]] = None,
              stop_below: Optional[float] = None) -> tuple[Trajectory, RadialState]:
    """Advance to T_end, recording diagnostics exactly at each sample time.

    With stop_below set, the run ends at the first step whose sup norm is
    below that value, and that state is recorded as a final extra sample
    (extinction studies: near u = 0 the regularized fast diffusion forces
    tiny steps).
    """
    if not T_end > state.t:
        raise ValueError("T_end must exceed the current time")
    times = sorted(set(float(s) for s in (sample_times if sample_times is not None else [T_end])))
    if times and (times[0] <= state.t or times[-1] > T_end):
        raise ValueError("sample times must lie in (t, T_end]")
    traj = Trajectory(grid=state.grid, params=params, config=config)
    cur = state
    stop = 0.0 if stop_below is None else float(stop_below)
    for ts in times:
        cur, n = advance(cur, ts, config, params, stop_sup=stop)
        traj.steps += n
        traj.record(cur, snapshots)
        if callback is not None:
            callback(cur)
        if stop and traj.sup[-1] < stop:
            return traj, cur
    if cur.t < T_end:
        cur, n = advance(cur, T_end, config, params)
        traj.steps += n
    return traj, cur


def advance_pair(u: RadialState, v: RadialState, t_end: float, config: SolverConfig,
                 params: EquationParams, max_steps: int = 10**9):
    """Advance two states on the same grid with a common step sequence."""
    if u.grid != v.grid or u.t != v.t:
        raise ValueError("paired states need the same grid and time")
    a = _kernel_args(u.grid, config, params)
    uu, vv = u.copy(), v.copy()
    t, steps, status = _advance_pair(uu.u, vv.u, u.t, float(t_end), max_steps=max_steps, **a)
    _raise_for(status, t)
    uu.t = vv.t = t
    return uu, vv, steps


def d_mass(state: RadialState) -> float:
    return float(np.dot(state.u, state.grid.weights))


def sup_norm(state: RadialState) -> float:
    return float(np.max(np.abs(state.u)))


def support_radius(state: RadialState, rel_threshold: float = SUPPORT_THRESHOLD) -> float:
    """Outer face of the last cell above rel_threshold * sup (0 for a zero state)."""
    top = sup_norm(state)
    if top == 0:
        return 0.0
    idx = np.flatnonzero(np.abs(state.u) > rel_threshold * top)
    return float(state.grid.faces[idx[-1] + 1])


def project(profile: Callable, grid: Grid, t: float = 0.0) -> RadialState:
    """Sample a profile at the cell midpoints."""
    vals = np.asarray(profile(grid.midpoints), dtype=float)
    if vals.shape != (grid.cells,):
        vals = np.array([profile(r) for r in grid.midpoints], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("profile produced non-finite samples")
    return RadialState(grid, vals, t)


def sup_distance(state: RadialState, reference: Callable) -> float:
    ref = np.asarray(reference(state.grid.midpoints), dtype=float)
    return float(np.max(np.abs(state.u - ref)))


def weighted_lm_distance(a: RadialState, b: RadialState, m: float = 2.0) -> float:
    """sum |a_i - b_i|^m w_i."""
    return float(np.sum(np.abs(a.u - b.u) ** m * a.grid.weights))


def with_config(config: SolverConfig, **changes) -> SolverConfig:
    return replace(config, **changes)
