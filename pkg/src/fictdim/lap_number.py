"""Sign-change counting and intersection comparison between solutions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .closed_forms import BarenblattSpec, barenblatt_eval
from .params import EquationParams
from .solver1d import RadialState, Trajectory

DEFAULT_RELATIVE_BAND = 1e-8
RESOLVED_FLOOR = 1e-4


@dataclass(frozen=True)
class SignChangeConfig:
    """Values with |w| <= zero_band + relative_band * max|w| are skipped.

    floor only applies when comparing two profiles: points where both lie
    below floor * (larger sup) are skipped too, since that far tail is set by
    truncation and regularization rather than by the equation.
    """
    zero_band: float = 0.0
    relative_band: float = 0.0
    floor: float = 0.0

    def __post_init__(self):
        if self.zero_band < 0 or self.relative_band < 0 or self.floor < 0:
            raise ValueError("zero band must be nonnegative")

    def band(self, w: np.ndarray) -> float:
        top = float(np.max(np.abs(w))) if w.size else 0.0
        return self.zero_band + self.relative_band * top


DEFAULT_CONFIG = SignChangeConfig(relative_band=DEFAULT_RELATIVE_BAND)
RESOLVED_CONFIG = SignChangeConfig(relative_band=DEFAULT_RELATIVE_BAND, floor=RESOLVED_FLOOR)


def sign_pattern(samples, config: SignChangeConfig = SignChangeConfig()) -> str:
    """Signs of the maximal constant-sign blocks, e.g. '-+'."""
    w = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("samples must be finite")
    kept = w[np.abs(w) > config.band(w)]
    if kept.size == 0:
        return ""
    s = np.sign(kept)
    starts = np.concatenate(([0], np.flatnonzero(np.diff(s)) + 1))
    return "".join("+" if s[i] > 0 else "-" for i in starts)


def sign_changes(samples, config: SignChangeConfig = SignChangeConfig()) -> int:
    return max(0, len(sign_pattern(samples, config)) - 1)


def intersection_count(state: RadialState, reference: Callable,
                       config: SignChangeConfig = DEFAULT_CONFIG) -> tuple[int, str]:
    """(number of sign changes of u - reference, block sign pattern)."""
    ref = np.asarray(reference(state.grid.midpoints), dtype=float)
    diff = state.u - ref
    if config.floor > 0:
        top = max(float(np.max(np.abs(state.u))), float(np.max(np.abs(ref))))
        diff = diff[np.maximum(np.abs(state.u), np.abs(ref)) > config.floor * top]
    pat = sign_pattern(diff, config)
    return max(0, len(pat) - 1), pat


@dataclass
class SturmianResult:
    times: list
    counts: list
    patterns: list

    @property
    def nonincreasing(self) -> bool:
        return all(b <= a for a, b in zip(self.counts, self.counts[1:]))


def sturmian_monotonicity(trajectory: Trajectory, family: Callable[[float], Callable],
                          config: SignChangeConfig = DEFAULT_CONFIG) -> SturmianResult:
    """Intersection counts N(t) of every snapshot against family(t)."""
    states = trajectory.states()
    if len(states) < 3:
        raise ValueError("need snapshots at three or more times")
    out = SturmianResult([], [], [])
    for s in states:
        n, pat = intersection_count(s, family(s.t), config)
        out.times.append(s.t)
        out.counts.append(n)
        out.patterns.append(pat)
    return out


def delayed_barenblatt_family(params: EquationParams, C: float, delay: float) -> Callable:
    """t -> B(., t + delay; C)."""
    spec = BarenblattSpec(params, C=C, t_delay=delay)
    return lambda t: (lambda r: barenblatt_eval(spec, r, t))


@dataclass
class ChangeOnceResult:
    t1: Optional[float]
    t2: Optional[float]
    below: Optional[SturmianResult]
    above: Optional[SturmianResult]

    @property
    def found(self) -> bool:
        return self.t1 is not None and self.t2 is not None


def find_change_once_delays(trajectory: Trajectory, params: EquationParams, C: float,
                            delays: Sequence[float],
                            config: SignChangeConfig = DEFAULT_CONFIG) -> ChangeOnceResult:
    """Scan delays (ascending) for references crossing the run exactly once.

    t1 is the largest delay whose reference gives N = 1 with pattern '-+' at
    every snapshot, t2 the smallest delay giving '+-' everywhere.
    """
    delays = sorted(float(x) for x in delays)
    t1 = t2 = None
    r1 = r2 = None
    for dl in delays:
        res = sturmian_monotonicity(trajectory, delayed_barenblatt_family(params, C, dl), config)
        if all(p == "-+" for p in res.patterns):
            t1, r1 = dl, res
        if t2 is None and all(p == "+-" for p in res.patterns):
            t2, r2 = dl, res
    if t1 is not None and t2 is not None and not t1 < t2:
        t1 = t2 = None
        r1 = r2 = None
    return ChangeOnceResult(t1, t2, r1, r2)


def fronts_resolved(trajectory: Trajectory, params: EquationParams, C: float, delay: float,
                    min_cells: float = 2.0) -> bool:
    """True when the run's support edge stays min_cells away from the reference edge.

    Slow regime only; without free boundaries every reference is resolved.
    The scheme places free boundaries to first order, so when the two edges
    are within a cell or two the sign right at the edge is not meaningful.
    """
    from .closed_forms import support_radius as edge
    from .params import Regime, regime

    if regime(params) is not Regime.SLOW:
        return True
    spec = BarenblattSpec(params, C=C, t_delay=delay)
    h = trajectory.grid.h
    return all(abs(s - edge(spec, t)) >= min_cells * h
               for t, s in zip(trajectory.times, trajectory.support))


@dataclass
class SturmianSuite:
    delays: list
    results: list
    resolved: list

    @property
    def passed(self) -> bool:
        return all(r.nonincreasing for r, ok in zip(self.results, self.resolved) if ok)

    @property
    def checked(self) -> int:
        return sum(self.resolved)


def sturmian_suite(trajectory: Trajectory, params: EquationParams, C: float,
                   delays: Sequence[float], config: SignChangeConfig = DEFAULT_CONFIG,
                   min_cells: float = 2.0) -> SturmianSuite:
    """N(t) against every delayed same-mass reference; edge-unresolved ones are reported only."""
    out = SturmianSuite([], [], [])
    for dl in delays:
        out.delays.append(float(dl))
        out.results.append(sturmian_monotonicity(
            trajectory, delayed_barenblatt_family(params, C, dl), config))
        out.resolved.append(fronts_resolved(trajectory, params, C, dl, min_cells))
    return out
