"""Scenario files and the simulate pipeline behind the command line.

A scenario is an INI file::

    [scenario]
    name = barenblatt_track_3_3_4
    n = 3
    p = 3
    q = 4
    R = 8              ; or: ball = true  (unit ball, u = 0 on the sphere)
    cells = 400
    bc = zeroflux      ; or dirichlet
    t_start = 1.5
    T_end = 3
    samples = geom(1.6, 3, 8)

    [initial]
    kind = barenblatt  ; barenblatt | giant | bump | csv | random-bumps
    C = 1

    [analysis:mass_conservation]
    tol = 1e-10

Every ``[analysis:<name>]`` section requests one check or report.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import analysis as an
from . import giant as gi
from . import lap_number as lap
from .closed_forms import BarenblattSpec, C_for_mass, barenblatt_eval
from .io import fmt, read_table, write_summary, write_table
from .params import EquationParams, Regime, derive, range_condition, regime
from .solver1d import (
    OuterBC,
    SolverConfig,
    SolverError,
    build_grid,
    d_mass,
    project,
    run_until,
    sup_distance,
)

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

KNOWN_ANALYSES = {
    "mass_conservation", "barenblatt_error", "decay_exponent", "support_exponent",
    "tail_exponent", "best_fit", "alexandrov", "extinction", "monotonicity",
    "sturmian", "change_once", "harnack", "giant_residual",
}


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    params: EquationParams
    R: float
    ball: bool
    cells: int
    bc: OuterBC
    t_start: float
    T_end: float
    samples: list
    initial: dict
    analyses: dict
    cfl: float = 0.4
    delta: Optional[float] = None
    seed: int = 0
    source: Optional[Path] = None
    echo: dict = field(default_factory=dict)

    @property
    def solver_config(self) -> SolverConfig:
        return SolverConfig(cfl_safety=self.cfl, outer_bc=self.bc, fast_regularization=self.delta)


_CALL = re.compile(r"(geom|linspace)\s*\(([^)]*)\)")


def parse_times(text: str) -> list:
    """Comma list of numbers and geom(a, b, n) / linspace(a, b, n) items."""
    out = []

    def expand(m):
        try:
            parts = [float(x) for x in m.group(2).split(",")]
        except ValueError:
            raise ConfigError(f"bad time grid {m.group(0)!r}") from None
        if len(parts) != 3 or int(parts[2]) != parts[2] or parts[2] < 2:
            raise ConfigError(f"bad time grid {m.group(0)!r}")
        fn = np.geomspace if m.group(1) == "geom" else np.linspace
        out.extend(float(x) for x in fn(parts[0], parts[1], int(parts[2])))
        return ""

    rest = _CALL.sub(expand, text)
    for item in rest.split(","):
        item = item.strip()
        if item:
            try:
                out.append(float(item))
            except ValueError:
                raise ConfigError(f"bad time {item!r}") from None
    return sorted(set(out))


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def _get(sec, key, conv, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"missing key '{key}' in [{sec.name}]")
        return default
    try:
        return conv(sec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for '{key}' in [{sec.name}]: {exc}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        with path.open() as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if "scenario" not in cp:
        raise ConfigError("missing [scenario] section")
    s = cp["scenario"]
    try:
        params = EquationParams(_get(s, "n", int, required=True), _get(s, "p", float, required=True),
                                _get(s, "q", float, required=True))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ball = _get(s, "ball", _bool, False)
    R = 1.0 if ball else _get(s, "R", float, required=True)
    bc_text = _get(s, "bc", str, "dirichlet" if ball else "zeroflux")
    try:
        bc = OuterBC(bc_text.strip().lower())
    except ValueError:
        raise ConfigError(f"unknown boundary condition {bc_text!r}") from None
    if ball and bc is not OuterBC.DIRICHLET_ZERO:
        raise ConfigError("a ball scenario needs bc = dirichlet")
    cells = _get(s, "cells", int, required=True)
    t_start = _get(s, "t_start", float, 0.0)
    T_end = _get(s, "T_end", float, required=True)
    samples = _get(s, "samples", parse_times, [T_end])
    if not T_end > t_start:
        raise ConfigError("T_end must exceed t_start")
    if not samples or min(samples) <= t_start or max(samples) > T_end * (1 + 1e-12):
        raise ConfigError("sample times must lie in (t_start, T_end]")
    if t_start < 0:
        raise ConfigError("t_start must be nonnegative")
    scen_seed = _get(s, "seed", int, 0)
    sc = Scenario(
        name=_get(s, "name", str, path.stem),
        params=params, R=R, ball=ball, cells=cells, bc=bc, t_start=t_start, T_end=T_end,
        samples=sorted(set(min(x, T_end) for x in samples)),
        initial=dict(cp["initial"]) if "initial" in cp else {},
        analyses={},
        cfl=_get(s, "cfl", float, 0.4),
        delta=_get(s, "delta", float, None),
        seed=scen_seed if seed is None else int(seed),
        source=path,
    )
    for name in cp.sections():
        if name.startswith("analysis:"):
            key = name.split(":", 1)[1].strip()
            if key not in KNOWN_ANALYSES:
                raise ConfigError(f"unknown analysis {key!r}")
            sc.analyses[key] = cp[name]
    sc.echo = {f"{sec}.{k}": v for sec in cp.sections() for k, v in cp[sec].items()}
    try:
        build_grid(sc.R, sc.cells, derive(params).d)
        sc.solver_config.delta(params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _check_preconditions(sc)
    return sc


def _check_preconditions(sc: Scenario):
    reg = regime(sc.params)
    kind = sc.initial.get("kind", "").strip()
    if kind not in ("barenblatt", "giant", "bump", "csv", "random-bumps"):
        raise ConfigError(f"unknown initial kind {kind!r}")
    a = sc.analyses
    if "tail_exponent" in a and (reg is not Regime.FAST or not range_condition(sc.params)):
        raise ConfigError("tail_exponent needs the fast regime (q < 2) inside the range condition")
    if "support_exponent" in a and reg is not Regime.SLOW:
        raise ConfigError("support_exponent needs the slow regime (q > 2)")
    if "monotonicity" in a and not (sc.params.q > 2 and sc.bc is OuterBC.DIRICHLET_ZERO):
        raise ConfigError("monotonicity needs q > 2 and a dirichlet boundary")
    if kind == "giant" and not (sc.params.q > 2 and sc.bc is OuterBC.DIRICHLET_ZERO):
        raise ConfigError("giant initial data needs q > 2 and a dirichlet boundary")
    if "giant_residual" in a and kind != "giant":
        raise ConfigError("giant_residual needs giant initial data")
    if "barenblatt_error" in a and kind != "barenblatt":
        raise ConfigError("barenblatt_error needs barenblatt initial data")
    if {"sturmian", "change_once", "best_fit"} & set(a) and not range_condition(sc.params):
        raise ConfigError("Barenblatt references need the range condition")


# ---------------------------------------------------------------------------
# initial data


def _bump(center, width, height):
    def f(r):
        x = (np.asarray(r) - center) / width
        return height * np.where(np.abs(x) < 1, (1 - x * x) ** 2, 0.0)
    return f


def build_initial(sc: Scenario):
    """(profile callable on radii, extra provenance)."""
    ini = sc.initial
    kind = ini["kind"].strip()

    def num(key, default=None):
        if key not in ini:
            if default is None:
                raise ConfigError(f"missing key '{key}' in [initial]")
            return default
        try:
            return float(ini[key])
        except ValueError:
            raise ConfigError(f"bad value for '{key}' in [initial]") from None

    if kind == "barenblatt":
        try:
            spec = BarenblattSpec(sc.params, C=num("C", 1.0), t_delay=num("t_delay", 0.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if sc.t_start + spec.t_delay <= 0:
            raise ConfigError("barenblatt initial data needs t_start + t_delay > 0")
        return (lambda r: barenblatt_eval(spec, r, sc.t_start)), {"initial.spec": "barenblatt"}
    if kind == "bump":
        return _bump(num("center", 0.0), num("width", 1.0), num("height", 1.0)), {}
    if kind == "random-bumps":
        count = int(num("count", 3))
        rng = np.random.default_rng(sc.seed)
        spread = num("spread", sc.R / 4)
        bumps = [_bump(c, w, h) for c, w, h in zip(
            rng.uniform(0.0, spread, count), rng.uniform(0.1, 0.3, count) * spread,
            rng.uniform(0.5, 1.0, count))]
        return (lambda r: sum(b(r) for b in bumps)), {"initial.seed": sc.seed}
    if kind == "csv":
        if "path" not in ini:
            raise ConfigError("missing key 'path' in [initial]")
        p = Path(ini["path"])
        if not p.is_absolute() and sc.source is not None:
            p = sc.source.parent / p
        try:
            _, cols = read_table(p)
            rr, uu = cols["r"], cols["u"]
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read initial profile {p}: {exc}") from None
        return (lambda r: np.interp(r, rr, uu, right=0.0)), {}
    # giant
    if sc.params.q <= 2:
        raise ConfigError("giant initial data needs q > 2")
    prof = gi.fixed_point(sc.params, tol=num("tol", 1e-10), nodes=int(num("nodes", 1024)))
    prof = gi.rescale(prof, sc.R)
    t0 = sc.t_start
    if not t0 > 0:
        raise ConfigError("giant initial data needs t_start > 0")
    sc.initial["_profile"] = prof
    return (lambda r: gi.separable_eval(prof, np.minimum(r, prof.radius), t0)), {}


# ---------------------------------------------------------------------------
# analyses


class Outcome:
    def __init__(self):
        self.entries = {}
        self.failures = []
        self.warnings = []

    def check(self, name, ok, detail=""):
        self.entries[f"{name}.pass"] = bool(ok)
        if not ok:
            self.failures.append(f"{name}: {detail}" if detail else name)


def _opt(sec, key, conv, default):
    try:
        return conv(sec[key]) if key in sec else default
    except ValueError:
        raise ConfigError(f"bad value for '{key}' in [analysis:{sec.name}]") from None


def _window(sec, default):
    w = _opt(sec, "window", _floats, default)
    if len(w) != 2:
        raise ConfigError("window needs two values")
    return tuple(w)


def _run_analyses(sc: Scenario, traj, state0, final, out: Outcome):
    P = sc.params
    ex = derive(P)
    A = sc.analyses
    mass0 = d_mass(state0)
    e = out.entries
    states = traj.states()
    C_mass = None
    if range_condition(P) and mass0 > 0:
        C_mass = C_for_mass(P, mass0)
        e["C_mass"] = C_mass

    if "mass_conservation" in A:
        tol = _opt(A["mass_conservation"], "tol", float, 1e-10)
        drift = an.mass_drift(traj, mass0)
        e["mass_conservation.drift"] = drift
        out.check("mass_conservation", drift <= tol, f"drift {drift:.3e} > {tol:.1e}")

    if "barenblatt_error" in A:
        sec = A["barenblatt_error"]
        tol = _opt(sec, "tol", float, 2e-2)
        spec = BarenblattSpec(P, C=float(sc.initial.get("C", 1.0)),
                              t_delay=float(sc.initial.get("t_delay", 0.0)))
        err = max(sup_distance(s, lambda r, t=s.t: barenblatt_eval(spec, r, t)) for s in states)
        e["barenblatt_error.max"] = err
        out.check("barenblatt_error", err <= tol, f"error {err:.3e} > {tol:.1e}")

    for key, fitter, default in (("decay_exponent", an.fit_decay_exponent, ex.alpha),
                                 ("support_exponent", an.fit_support_exponent, ex.spread)):
        if key in A:
            sec = A[key]
            res = fitter(traj, _window(sec, (traj.times[0], traj.times[-1])))
            expect = _opt(sec, "expect", float, default)
            tol = _opt(sec, "tol", float, None)
            if tol is None:
                tol = _opt(sec, "rtol", float, 0.1) * abs(expect)
            e[f"{key}.value"] = res.exponent
            e[f"{key}.stderr"] = res.stderr
            e[f"{key}.expect"] = expect
            out.check(key, abs(res.exponent - expect) <= tol,
                      f"{res.exponent:.6g} vs {expect:.6g} +- {tol:.3g}")

    if "tail_exponent" in A:
        sec = A["tail_exponent"]
        res = an.tail_exponent(final, P, _window(sec, (sc.R / 20, sc.R / 4)), sc.solver_config.delta(P))
        expect = _opt(sec, "expect", float, -P.q / (2 - P.q))
        tol = _opt(sec, "tol", float, 0.15)
        e["tail_exponent.value"] = res.exponent
        e["tail_exponent.expect"] = expect
        out.check("tail_exponent", abs(res.exponent - expect) <= tol,
                  f"{res.exponent:.6g} vs {expect:.6g} +- {tol:.3g}")

    if "best_fit" in A:
        sec = A["best_fit"]
        times = _opt(sec, "times", _floats, [s.t for s in states])
        lo, hi = _opt(sec, "bracket", _floats, [0.5, 2.0])
        slack = _opt(sec, "slack", float, 0.05)
        stab = _opt(sec, "stabilize", float, 0.02)
        by_t = {s.t: s for s in states}
        errs, Cs = [], []
        for t in times:
            s = _nearest(by_t, t)
            C, err = an.best_fit_barenblatt(s, P, (lo * C_mass, hi * C_mass))
            Cs.append(C)
            errs.append(err)
            e[f"best_fit.t={fmt(s.t)}.C"] = C
            e[f"best_fit.t={fmt(s.t)}.error"] = err
        ok = all(b <= a * (1 + slack) for a, b in zip(errs, errs[1:]))
        out.check("best_fit.error_nonincreasing", ok, "renormalized error grew")
        if len(Cs) >= 2:
            change = abs(Cs[-1] - Cs[-2]) / abs(Cs[-1])
            e["best_fit.C_change"] = change
            out.check("best_fit.C_stable", change < stab, f"C* changed by {change:.3e}")

    if "alexandrov" in A:
        sec = A["alexandrov"]
        R0 = _opt(sec, "R0", float, None)
        if R0 is None:
            raise ConfigError("alexandrov needs R0")
        tol = _opt(sec, "tol", float, 1e-10)
        worst = max(an.alexandrov_monotonicity(s, R0) / max(s.u.max(), 1e-300) for s in states)
        e["alexandrov.defect_rel"] = worst
        out.check("alexandrov", worst <= tol, f"relative defect {worst:.3e}")

    if "extinction" in A:
        sec = A["extinction"]
        thr = _opt(sec, "threshold", float, 1e-6)
        expect = sec.get("expect", "any").strip()
        te = an.extinction_time(traj, thr)
        e["extinction.time"] = "none" if te is None else te
        if expect == "finite":
            out.check("extinction", te is not None, "no extinction detected")
        elif expect == "none":
            out.check("extinction", te is None, f"sup fell below {thr} at t={te}")
        if "rate_window" in sec:
            rw = _opt(sec, "rate_window", _floats, [])
            if len(rw) != 2:
                raise ConfigError("rate_window needs two values")
            res = an.exponential_rate(traj, tuple(rw))
            e["extinction.exponential_rate"] = res.exponent

    if "monotonicity" in A:
        tol = _opt(A["monotonicity"], "tol", float, 1e-6)
        defect, scale = an.monotonicity_defect(traj, P)
        e["monotonicity.defect"] = defect
        e["monotonicity.scale"] = scale
        out.check("monotonicity", defect >= -tol * scale, f"defect {defect:.3e}")

    if "sturmian" in A:
        sec = A["sturmian"]
        delays = _opt(sec, "delays", parse_times, [0.1, 1.0, 10.0])
        cfg = lap.SignChangeConfig(relative_band=_opt(sec, "band", float, lap.DEFAULT_RELATIVE_BAND),
                                   floor=_opt(sec, "floor", float, lap.RESOLVED_FLOOR))
        e["sturmian.floor"] = cfg.floor
        suite = lap.sturmian_suite(traj, P, C_mass, delays, cfg,
                                   min_cells=_opt(sec, "min_cells", float, 2.0))
        for dl, res, ok in zip(suite.delays, suite.results, suite.resolved):
            e[f"sturmian.delay={fmt(dl)}.counts"] = " ".join(map(str, res.counts))
            e[f"sturmian.delay={fmt(dl)}.resolved"] = ok
        e["sturmian.checked"] = suite.checked
        if suite.checked == 0:
            out.warnings.append("sturmian: no reference with resolved support edges")
        out.check("sturmian", suite.passed, "intersection count increased")

    if "change_once" in A:
        sec = A["change_once"]
        delays = _opt(sec, "delays", parse_times, list(np.geomspace(1e-3, 1e3, 61)))
        cfg = lap.SignChangeConfig(relative_band=_opt(sec, "band", float, lap.DEFAULT_RELATIVE_BAND))
        res = lap.find_change_once_delays(traj, P, C_mass, delays, cfg)
        e["change_once.t1"] = "none" if res.t1 is None else res.t1
        e["change_once.t2"] = "none" if res.t2 is None else res.t2
        out.check("change_once", res.found, "no delay pair with patterns -+ and +-")

    if "harnack" in A:
        sec = A["harnack"]
        t0 = _opt(sec, "t0", float, states[len(states) // 2].t)
        s0 = _nearest({s.t: s for s in states}, t0)
        ctx = an.RunContext(P, sc.solver_config, t_start=sc.t_start, horizon=sc.T_end)
        radii = _opt(sec, "probes", _floats, [])
        r = _opt(sec, "r", float, 0.1)
        Ct = _opt(sec, "C_theta", float, 1.0)
        for k, x in enumerate(radii):
            idx = int(np.clip(np.searchsorted(s0.grid.midpoints, x), 0, s0.grid.cells - 1))
            rep = an.harnack_probe(ctx, s0, idx, r, Ct)
            e[f"harnack.{k}.x0"] = s0.grid.midpoints[idx]
            e[f"harnack.{k}.theta"] = rep.theta
            e[f"harnack.{k}.mu"] = rep.mu
            if not math.isfinite(rep.mu):
                out.warnings.append(f"harnack probe {k}: infinite mu")

    if "giant_residual" in A:
        prof = sc.initial["_profile"]
        rep = prof.report
        e["giant.integral_residual"] = rep["integral_residual"]
        e["giant.ode_residual"] = rep["ode_residual"]
        e["giant.iterations"] = rep["iterations"]
        tol = float(sc.initial.get("tol", 1e-10))
        out.check("giant_residual", rep["integral_residual"] < 10 * tol,
                  f"integral residual {rep['integral_residual']:.3e}")
        if not rep["monotone"]:
            out.warnings.append("giant iteration was not monotone")


def _nearest(by_t: dict, t: float):
    key = min(by_t, key=lambda x: abs(x - t))
    if abs(key - t) > 1e-9 * max(1.0, abs(t)):
        raise ConfigError(f"time {t} is not a sample time")
    return by_t[key]


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class RunResult:
    name: str
    status: int
    reason: str
    out_dir: Optional[Path]
    entries: dict = field(default_factory=dict)

    @property
    def line(self) -> str:
        tag = {EXIT_OK: "ok", EXIT_ASSERT: "fail", EXIT_CONFIG: "config_error",
               EXIT_SOLVER: "solver_error"}[self.status]
        return f"status={tag} scenario={self.name} code={self.status} reason={self.reason}"


def provenance_block(sc: Scenario) -> dict:
    ex = derive(sc.params)
    meta = {"version": __version__, "seed": sc.seed, "scenario": sc.name,
            "n": sc.params.n, "p": sc.params.p, "q": sc.params.q,
            "d": ex.d, "lam": ex.lam, "alpha": ex.alpha, "spread": ex.spread,
            "sigma": ex.sigma, "mu": ex.mu, "range_condition": range_condition(sc.params),
            "regime": regime(sc.params).value, "R": sc.R, "cells": sc.cells,
            "bc": sc.bc.value, "cfl": sc.cfl, "delta": sc.solver_config.delta(sc.params)}
    meta.update({f"config.{k}": v for k, v in sorted(sc.echo.items())})
    return meta


def run_scenario(path, out_root, seed: Optional[int] = None, strict: bool = False) -> RunResult:
    try:
        sc = load_scenario(path, seed)
    except ConfigError as exc:
        return RunResult(Path(path).stem, EXIT_CONFIG, str(exc), None)
    out_dir = Path(out_root) / sc.name
    try:
        profile, extra = build_initial(sc)
        grid = build_grid(sc.R, sc.cells, derive(sc.params).d)
        state0 = project(profile, grid, sc.t_start)
    except (ConfigError, ValueError, gi.GiantError) as exc:
        return RunResult(sc.name, EXIT_CONFIG, str(exc), None)
    try:
        stop = None
        if "extinction" in sc.analyses:
            stop = _opt(sc.analyses["extinction"], "threshold", float, 1e-6)
        traj, final = run_until(state0, sc.T_end, sc.solver_config, sc.params,
                                sample_times=sc.samples, snapshots=True, stop_below=stop)
    except SolverError as exc:
        return RunResult(sc.name, EXIT_SOLVER, str(exc), None)

    meta = provenance_block(sc)
    meta.update(extra)
    out = Outcome()
    try:
        _run_analyses(sc, traj, state0, final, out)
    except ConfigError as exc:
        return RunResult(sc.name, EXIT_CONFIG, str(exc), None)
    except (ValueError, SolverError) as exc:
        out.failures.append(f"analysis error: {exc}")

    r = grid.midpoints
    for k, s in enumerate(traj.states()):
        write_table(out_dir / "profiles" / f"profile_{k:03d}.csv", {"r": r, "u": s.u}, sc.params,
                    {**meta, "t": s.t})
    write_table(out_dir / "series.csv",
                {"t": traj.times, "sup": traj.sup, "d_mass": traj.d_mass,
                 "support": traj.support, "L2w": traj.l2w}, sc.params, meta)
    if "_profile" in sc.initial:
        gi.write_csv(sc.initial["_profile"], out_dir / "giant.csv")

    if strict and out.warnings:
        out.failures.extend(f"warning: {w}" for w in out.warnings)
    status = EXIT_ASSERT if out.failures else EXIT_OK
    reason = "; ".join(out.failures) if out.failures else "all checks passed"
    summary = {"status": "ok" if status == EXIT_OK else "fail", "reason": reason}
    summary.update({f"provenance.{k}": v for k, v in meta.items()})
    summary["steps"] = traj.steps
    summary.update(out.entries)
    for k, w in enumerate(out.warnings):
        summary[f"warning.{k}"] = w
    write_summary(out_dir / "summary.txt", summary)
    return RunResult(sc.name, status, reason, out_dir, out.entries)
