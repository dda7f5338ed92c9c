"""Measurements on solver output: rates, asymptotic profiles and probes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import linregress

from .closed_forms import BarenblattSpec, barenblatt_eval
from .params import EquationParams, Regime, derive, range_condition, regime
from .solver1d import (
    RadialState,
    SolverConfig,
    Trajectory,
    advance,
    d_mass,
    run_until,
    sup_distance,
    support_radius,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TAIL_CONTAMINATION = 1e-8


class DegenerateInput(ValueError):
    """Nothing to measure (zero state, zero oscillation, ...)."""


class BracketError(ValueError):
    """The search bracket does not contain an interior minimum."""


class ContainmentError(ValueError):
    """A probe region leaves the computed domain or time horizon."""


@dataclass(frozen=True)
class FitResult:
    exponent: float
    stderr: float
    window: tuple
    count: int
    intercept: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.exponent):
            raise ValueError("fitted exponent is not finite")


def loglog_fit(x, y, window=None, negate=False) -> FitResult:
    """Least-squares slope of log y against log x over x in the window."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = window if window is not None else (x.min(), x.max())
    sel = (x >= lo) & (x <= hi)
    if sel.sum() < 5:
        raise ValueError(f"need at least 5 samples in the window, got {int(sel.sum())}")
    if np.any(y[sel] <= 0) or np.any(x[sel] <= 0):
        raise ValueError("log-log fit needs positive data")
    res = linregress(np.log(x[sel]), np.log(y[sel]))
    slope = -res.slope if negate else res.slope
    return FitResult(float(slope), float(res.stderr), (float(lo), float(hi)), int(sel.sum()),
                     float(res.intercept))


def fit_decay_exponent(trajectory: Trajectory, window) -> FitResult:
    """alpha-hat with sup u ~ t^(-alpha-hat)."""
    return loglog_fit(trajectory.times, trajectory.sup, window, negate=True)


def fit_support_exponent(trajectory: Trajectory, window) -> FitResult:
    """Exponent of support radius ~ t^(exponent)."""
    if trajectory.params is not None and regime(trajectory.params) is not Regime.SLOW:
        raise ValueError("support exponent needs the slow regime (bounded support)")
    t = np.asarray(trajectory.times)
    s = np.asarray(trajectory.support)
    sel = (t >= window[0]) & (t <= window[1])
    if trajectory.grid is not None and np.any(s[sel] >= trajectory.grid.R):
        raise ContainmentError("support reached the outer boundary inside the fit window")
    return loglog_fit(t, s, window)


def exponential_rate(trajectory: Trajectory, window) -> FitResult:
    """Rate c with sup u ~ exp(-c t), least squares on log sup against t."""
    t = np.asarray(trajectory.times, dtype=float)
    y = np.asarray(trajectory.sup, dtype=float)
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 5:
        raise ValueError("need at least 5 samples in the window")
    if np.any(y[sel] <= 0):
        raise ValueError("sup norm vanished inside the window")
    res = linregress(t[sel], np.log(y[sel]))
    return FitResult(float(-res.slope), float(res.stderr), tuple(map(float, window)),
                     int(sel.sum()), float(res.intercept))


# ---------------------------------------------------------------------------
# asymptotic profile


def _golden_min(f, a, b, rtol):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > rtol * abs(c + d) / 2:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def best_fit_barenblatt(state: RadialState, params: EquationParams, C_bracket,
                        t: Optional[float] = None, t_delay: float = 0.0,
                        rtol: float = 1e-6) -> tuple[float, float]:
    """C* minimizing sup|u - B(., t; C)| and the renormalized error t^alpha * min."""
    t = state.t if t is None else t
    if np.max(np.abs(state.u)) == 0:
        raise DegenerateInput("zero state has no best-fit profile")
    if np.any(state.u < 0):
        raise ValueError("best fit needs a nonnegative state")
    a, b = map(float, C_bracket)
    if not 0 < a < b:
        raise ValueError("bracket must satisfy 0 < a < b")

    def obj(C):
        spec = BarenblattSpec(params, C=C, t_delay=t_delay)
        return sup_distance(state, lambda r: barenblatt_eval(spec, r, t))

    fa, fb = obj(a), obj(b)
    probes = np.linspace(a, b, 9)[1:-1]
    fmin = min(obj(c) for c in probes)
    if not fmin < min(fa, fb):
        raise BracketError(f"objective is monotone over [{a}, {b}]")
    C_star, err = _golden_min(obj, a, b, rtol)
    return C_star, t ** derive(params).alpha * err


# ---------------------------------------------------------------------------
# fast-regime tail


def tail_exponent(state: RadialState, params: EquationParams, window,
                  delta: Optional[float] = None) -> FitResult:
    """Slope of log u against log r for cell midpoints in the radius window."""
    if regime(params) is not Regime.FAST:
        raise ValueError("tail exponent needs the fast regime (q < 2)")
    if not range_condition(params):
        raise ValueError("tail exponent needs the range condition")
    if delta is None:
        delta = SolverConfig().delta(params)
    top = float(np.max(np.abs(state.u)))
    if abs(state.u[-1]) > TAIL_CONTAMINATION * top:
        raise ContainmentError("tail contaminated by the outer boundary")
    r = state.grid.midpoints
    sel = (r >= window[0]) & (r <= window[1])
    if np.any(state.u[sel] <= 10 * delta):
        raise ValueError("tail values fall below the regularization floor")
    return loglog_fit(r, state.u, window)


# ---------------------------------------------------------------------------
# scaling and shape


def rescaled_orbit(state: RadialState, params: EquationParams, kappa: float) -> RadialState:
    """kappa^(d/lam) u(kappa^(1/lam) r), labelled with time t/kappa."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    ex = derive(params)
    g = state.grid
    stretch = kappa**ex.spread
    if support_radius(state) / stretch > g.R * (1 + 1e-12):
        raise ContainmentError("support escapes the rescaled domain")
    r = g.midpoints
    # outside the last midpoint the state is taken to decay linearly to 0 at R
    xp = np.concatenate((r, [g.R]))
    fp = np.concatenate((state.u, [0.0]))
    vals = kappa**ex.alpha * np.interp(stretch * r, xp, fp, right=0.0)
    return RadialState(g, vals, state.t / kappa)


def alexandrov_monotonicity(state: RadialState, R0: float) -> float:
    """Largest increase u_(i+1) - u_i among cells beyond R0 (0 if none)."""
    g = state.grid
    if not R0 < g.R:
        raise ValueError("R0 must lie inside the grid")
    idx = np.flatnonzero(g.midpoints >= R0)
    if idx.size < 2:
        return 0.0
    inc = np.diff(state.u[idx])
    return float(max(0.0, inc.max()))


def extinction_time(trajectory: Trajectory, threshold: float) -> Optional[float]:
    """First sample time with sup < threshold, None when never reached.

    With q < 2 the flux regularization slows the final collapse, so the
    detected time is biased late.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    for t, s in zip(trajectory.times, trajectory.sup):
        if s < threshold:
            return float(t)
    return None


def monotonicity_defect(trajectory: Trajectory, params: Optional[EquationParams] = None
                        ) -> tuple[float, float]:
    """(min over cells and consecutive samples of the change of t^(1/(q-2)) u, scale).

    scale is the largest value of t^(1/(q-2)) |u| seen.
    """
    params = params or trajectory.params
    if params is None or not params.q > 2:
        raise ValueError("monotonicity estimate needs q > 2")
    states = trajectory.states()
    if len(states) < 2:
        raise ValueError("need at least two snapshots")
    e = 1.0 / (params.q - 2.0)
    w = np.array([s.t**e * s.u for s in states])
    return float(np.min(np.diff(w, axis=0))), float(np.max(np.abs(w)))


# ---------------------------------------------------------------------------
# probes


@dataclass(frozen=True)
class RunContext:
    """Everything needed to continue a run from one of its states."""
    params: EquationParams
    config: SolverConfig
    t_start: float = 0.0
    horizon: float = math.inf


@dataclass(frozen=True)
class HarnackReport:
    index: int
    t0: float
    r: float
    C_theta: float
    theta: float
    u0: float
    inf_later: float
    mu: float


def _ball_cells(grid, index, r):
    center = grid.midpoints[index]
    m = grid.midpoints
    return np.flatnonzero((m >= center - r) & (m <= center + r))


def harnack_probe(ctx: RunContext, state: RadialState, index: int, r: float,
                  C_theta: float = 1.0) -> HarnackReport:
    """u(x0, t0) / inf over the radius interval |x0| +- r at t0 + theta."""
    g = state.grid
    if not 0 <= index < g.cells:
        raise ValueError("cell index outside the grid")
    if not (r > 0 and C_theta > 0):
        raise ValueError("r and C_theta must be positive")
    u0 = float(state.u[index])
    if not u0 > 0:
        raise ValueError("probe point must have u > 0")
    q = ctx.params.q
    theta = C_theta * r**q / u0 ** (q - 2.0)
    x0 = g.midpoints[index]
    if x0 + 4 * r > g.R:
        raise ContainmentError("the ball of radius 4r leaves the domain")
    if state.t - 4 * theta < ctx.t_start or state.t + 4 * theta > ctx.horizon:
        raise ContainmentError("the time window t0 +- 4 theta leaves the run")
    later, _ = advance(state, state.t + theta, ctx.config, ctx.params)
    cells = _ball_cells(g, index, r)
    low = float(np.min(later.u[cells]))
    mu = u0 / low if low > 0 else math.inf
    return HarnackReport(index, float(state.t), float(r), float(C_theta), float(theta), u0, low, mu)


@dataclass
class OscillationReport:
    radii: np.ndarray
    osc: np.ndarray
    omega0: float
    a0: float
    exponent: float = math.nan
    C_hat: float = math.nan
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))
    zero_oscillation: bool = False


def oscillation_scan(ctx: RunContext, state: RadialState, index: int, radii: Sequence[float],
                     omega0: Optional[float] = None, substeps: int = 8) -> OscillationReport:
    """Oscillation over backward cylinders ending at t0 = state.t + a0 r_max^q.

    Cylinders are {|r' - |x0|| <= r} x [t0 - a0 r^q, t0] with a0 = omega0^(2-q);
    omega0 defaults to the sup of u at the starting state.  Time maxima are
    taken over substeps snapshots per cylinder.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 2 or np.any(np.diff(radii) >= 0) or radii[-1] <= 0:
        raise ValueError("radii must be positive and strictly decreasing")
    g = state.grid
    x0 = g.midpoints[index]
    if x0 + radii[0] > g.R:
        raise ContainmentError("largest cylinder leaves the domain")
    if omega0 is None:
        omega0 = float(np.max(np.abs(state.u)))
    if omega0 == 0:
        return OscillationReport(radii, np.zeros_like(radii), 0.0, math.inf, zero_oscillation=True)
    q = ctx.params.q
    a0 = (1.0 / omega0) ** (q - 2.0)
    lengths = a0 * radii**q
    t0 = state.t + lengths[0]
    if t0 > ctx.horizon:
        raise ContainmentError("cylinders extend past the horizon")
    times = set()
    for L in lengths:
        times.update(np.linspace(t0 - L, t0, substeps + 1).tolist())
    times.discard(state.t)
    samples = sorted(t for t in times if t > state.t)
    snaps = {state.t: state.u}
    if samples:
        traj, _ = run_until(state, t0, ctx.config, ctx.params, sample_times=samples, snapshots=True)
        snaps.update(zip(traj.times, traj.snapshots))
    tt = np.array(sorted(snaps))
    U = np.array([snaps[t] for t in tt])
    osc = np.empty_like(radii)
    for k, (r, L) in enumerate(zip(radii, lengths)):
        cells = _ball_cells(g, index, r)
        rows = tt >= t0 - L - 1e-12 * max(1.0, t0)
        block = U[np.ix_(rows, cells)]
        osc[k] = block.max() - block.min()
    rep = OscillationReport(radii, osc, omega0, a0)
    if np.all(osc == 0):
        rep.zero_oscillation = True
        return rep
    if np.any(osc <= 0):
        raise DegenerateInput("oscillation vanished on part of the radius sequence")
    x = np.log(radii / radii[0])
    y = np.log(osc / omega0)
    res = linregress(x, y)
    rep.exponent = float(res.slope)
    rep.C_hat = float(math.exp(res.intercept))
    rep.residuals = y - (res.intercept + res.slope * x)
    return rep


def barenblatt_reference(params: EquationParams, C: float, t_delay: float = 0.0) -> Callable:
    """Profile factory B(., t + t_delay; C) indexed by t."""
    spec = BarenblattSpec(params, C=C, t_delay=t_delay)
    return lambda t: (lambda r: barenblatt_eval(spec, r, t))


def mass_drift(trajectory: Trajectory, reference: Optional[float] = None) -> float:
    """Largest relative deviation of the d-mass from the reference (first sample)."""
    m = np.asarray(trajectory.d_mass)
    ref = m[0] if reference is None else reference
    return float(np.max(np.abs(m - ref)) / abs(ref))


__all__ = [
    "FitResult", "HarnackReport", "OscillationReport", "RunContext",
    "alexandrov_monotonicity", "best_fit_barenblatt", "exponential_rate", "extinction_time",
    "fit_decay_exponent", "fit_support_exponent", "harnack_probe", "loglog_fit",
    "mass_drift", "monotonicity_defect", "oscillation_scan", "rescaled_orbit", "tail_exponent",
    "d_mass",
]
