"""Acceptance criteria, one test per criterion, each logging PASS/FAIL lines."""
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pytest

from fictdim.closed_forms import BarenblattSpec, barenblatt_eval
from fictdim.giant import first_node_slope, fixed_point
from fictdim.params import EquationParams, derive, range_condition
from fictdim.scenario import EXIT_OK, run_scenario
from fictdim.solver1d import (
    OuterBC,
    RadialState,
    SolverConfig,
    advance_pair,
    build_grid,
    d_mass,
    project,
    run_until,
    sup_distance,
    weighted_lm_distance,
)
from fictdim import analysis as an

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
P334 = EquationParams(3, 3, 4)


def _run(job):
    path, out = job
    return run_scenario(path, out)


@pytest.fixture(scope="module")
def shipped(tmp_path_factory):
    out = tmp_path_factory.mktemp("shipped")
    files = sorted(SCENARIOS.glob("*.ini"))
    with ProcessPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(_run, [(f, out) for f in files]))
    return {r.name: r for r in results}


def test_criterion_01_exponent_identities(acceptance_log):
    rng = np.random.default_rng(2024)
    N = 10_000
    n = rng.integers(1, 11, N)
    p = rng.uniform(1.01, 6.0, N)
    q = rng.uniform(1.01, 6.0, N)
    t0 = time.perf_counter()
    got = np.array([(ex.d, ex.lam, ex.alpha, rc) for ex, rc in (
        (derive(P), range_condition(P)) for P in map(EquationParams, n, p, q))])
    elapsed = time.perf_counter() - t0

    d = (n - 1) * (q - 1) / (p - 1) + 1
    lam = d * (q - 2) + q
    with np.errstate(divide="ignore"):
        alpha = np.where(lam != 0, d / np.where(lam != 0, lam, 1), np.inf)
    direct = 2 * n < q * (n - 1) + 2 * p
    lam_form = lam > 0
    formulas = (np.allclose(got[:, 0], d, rtol=1e-13) and np.allclose(got[:, 1], lam, rtol=1e-12, atol=1e-12)
                and np.allclose(got[:, 2], alpha, rtol=1e-11))
    agree = bool(np.all(direct == lam_form)) and bool(np.all(got[:, 3].astype(bool) == direct))
    acceptance_log(1, "closed formulas", formulas, f"{N} points")
    acceptance_log(1, "range forms agree", agree, f"{int(direct.sum())} inside the range")
    acceptance_log(1, "runtime < 1 s", elapsed < 1.0, f"{elapsed:.3f} s")
    assert formulas and agree and elapsed < 1.0


def test_criterion_02_barenblatt_exactness(acceptance_log):
    spec = BarenblattSpec(P334, C=1.0)
    errs, drifts, times = [], [], []
    for cells in (2000, 4000):
        t0 = time.perf_counter()
        g = build_grid(8.0, cells, derive(P334).d)
        s = project(lambda r: barenblatt_eval(spec, r, 1.5), g, 1.5)
        traj, final = run_until(s, 3.0, SolverConfig(outer_bc=OuterBC.ZERO_FLUX), P334,
                                sample_times=[2.0, 2.5, 3.0])
        times.append(time.perf_counter() - t0)
        errs.append(sup_distance(final, lambda r: barenblatt_eval(spec, r, 3.0)))
        m0 = d_mass(s)
        drifts.append(max(abs(m - m0) for m in traj.d_mass) / m0)
    ratio = errs[0] / errs[1]
    ok = [acceptance_log(2, "sup error at 2000 cells <= 2e-2", errs[0] <= 2e-2, f"{errs[0]:.3e}"),
          acceptance_log(2, "error ratio 2000/4000 >= 1.6", ratio >= 1.6, f"{ratio:.3f}"),
          acceptance_log(2, "d-mass drift <= 1e-10", max(drifts) <= 1e-10, f"{max(drifts):.3e}"),
          acceptance_log(2, "2000-cell runtime <= 60 s", times[0] <= 60, f"{times[0]:.1f} s"),
          acceptance_log(2, "4000-cell runtime <= 60 s", times[1] <= 60, f"{times[1]:.1f} s")]
    assert all(ok)


def test_criterion_03_decay_and_spread(shipped, acceptance_log):
    bump = shipped["bump_asymptotics_3_3_4"].entries
    heat = shipped["heat_decay_2_2_2"].entries
    a, s = bump["decay_exponent.value"], bump["support_exponent.value"]
    ah = heat["decay_exponent.value"]
    ok = [acceptance_log(3, "(3,3,4) decay 1/3 +- 0.02", abs(a - 1 / 3) <= 0.02, f"{a:.5f}"),
          acceptance_log(3, "(3,3,4) support 1/12 +- 0.012", abs(s - 1 / 12) <= 0.012, f"{s:.5f}"),
          # stated target; the planar heat kernel decays like t^-1
          acceptance_log(3, "(2,2,2) decay 1/2 +- 0.02", abs(ah - 0.5) <= 0.02, f"{ah:.5f}")]
    assert all(ok)


def test_criterion_04_best_fit_convergence(shipped, acceptance_log):
    e = shipped["bump_asymptotics_3_3_4"].entries
    times = [5.0, 10.0, 20.0, 40.0]
    errs = [e[f"best_fit.t={t:.17g}.error"] for t in times]
    Cs = [e[f"best_fit.t={t:.17g}.C"] for t in times]
    mono = all(b <= a * 1.05 for a, b in zip(errs, errs[1:]))
    change = abs(Cs[-1] - Cs[-2]) / abs(Cs[-1])
    ok = [acceptance_log(4, "renormalized error nonincreasing (5% slack)", mono,
                         " ".join(f"{x:.4e}" for x in errs)),
          acceptance_log(4, "C* change over last doubling < 2%", change < 0.02, f"{change:.3e}")]
    assert all(ok)


def test_criterion_05_fast_tail(shipped, acceptance_log):
    r = shipped["fast_tail_3_3_1p5"]
    assert r.status == EXIT_OK, r.reason
    x = r.entries["tail_exponent.value"]
    assert acceptance_log(5, "tail exponent -3 +- 0.15", abs(x + 3) <= 0.15, f"{x:.5f}")


def test_criterion_06_friendly_giant(acceptance_log):
    prof = fixed_point(P334, tol=1e-10, nodes=1024)
    rep = prof.report
    slope = abs(first_node_slope(prof))
    ok = [acceptance_log(6, "integral residual < 1e-8", rep["integral_residual"] < 1e-8,
                         f"{rep['integral_residual']:.3e}"),
          acceptance_log(6, "ode residual < 1e-6", rep["ode_residual"] < 1e-6, f"{rep['ode_residual']:.3e}"),
          acceptance_log(6, "V(1) = 0", prof.V[-1] == 0.0, f"{float(prof.V[-1])}"),
          acceptance_log(6, "|V'(0)| <= 10 h", slope <= 10 * prof.h,
                         f"slope {slope:.4e} vs {10 * prof.h:.4e}")]
    g = build_grid(1.0, 2000, derive(P334).d)
    s = project(lambda r: np.interp(r, prof.r, prof.V), g, 1.0)
    _, final = run_until(s, 4.0, SolverConfig(outer_bc=OuterBC.DIRICHLET_ZERO), P334)
    err = float(np.max(np.abs(math.sqrt(final.t) * final.u - np.interp(g.midpoints, prof.r, prof.V))))
    ok.append(acceptance_log(6, "separable run at t=4, 2000 cells <= 5e-2", err <= 5e-2, f"{err:.3e}"))
    assert all(ok)


BALL_DATA = {
    "cap": lambda r: 1 - r * r,
    "cosine": lambda r: np.cos(0.5 * np.pi * r),
    "ring": lambda r: 0.2 * (1 - r) + np.exp(-40 * (r - 0.6) ** 2) * (1 - r),
}


def test_criterion_07_monotonicity_estimate(acceptance_log):
    g = build_grid(1.0, 200, derive(P334).d)
    cfg = SolverConfig(outer_bc=OuterBC.DIRICHLET_ZERO)
    ok = []
    for name, f in BALL_DATA.items():
        s = project(f, g, 0.0)
        assert np.all(s.u > 0)
        traj, _ = run_until(s, 2.0, cfg, P334, sample_times=np.linspace(0.05, 2.0, 40), snapshots=True)
        defect, scale = an.monotonicity_defect(traj, P334)
        ok.append(acceptance_log(7, f"{name}: defect >= -1e-6 scale", defect >= -1e-6 * scale,
                                 f"defect {defect:.3e}, scale {scale:.3e}"))
    assert all(ok)


def test_criterion_08_contraction_and_comparison(acceptance_log):
    rng = np.random.default_rng(8)
    cases = [EquationParams(3, 3, 4), EquationParams(3, 3, 1.7), EquationParams(2, 2, 2),
             EquationParams(2, 2.5, 3)]
    ordered, l2_ok, l4_ok = True, True, True
    worst = 0.0
    for k in range(20):
        P = cases[k % len(cases)]
        bc = list(OuterBC)[k % 2]
        g = build_grid(2.0, 80, derive(P).d)
        base = rng.uniform(0, 1, g.cells) * (g.midpoints < rng.uniform(0.3, 0.9) * g.R)
        extra = rng.uniform(0, 0.5, g.cells) * (rng.uniform(size=g.cells) < 0.5)
        u, v = RadialState(g, base), RadialState(g, base + extra)
        cfg = SolverConfig(outer_bc=bc)
        d2, d4 = weighted_lm_distance(u, v, 2), weighted_lm_distance(u, v, 4)
        for t in np.linspace(0.005, 0.1, 10):
            u, v, _ = advance_pair(u, v, t, cfg, P)
            ordered &= bool(np.all(u.u <= v.u))
            n2, n4 = weighted_lm_distance(u, v, 2), weighted_lm_distance(u, v, 4)
            l2_ok &= n2 <= d2 * (1 + 1e-8)
            l4_ok &= n4 <= d4 * (1 + 1e-8)
            worst = max(worst, n2 / d2 - 1, n4 / d4 - 1)
            d2, d4 = n2, n4
    ok = [acceptance_log(8, "ordering preserved in 20 pairs", ordered, "exact"),
          acceptance_log(8, "weighted L2 nonincreasing", l2_ok, f"worst relative growth {worst:.2e}"),
          acceptance_log(8, "weighted L4 nonincreasing", l4_ok, f"worst relative growth {worst:.2e}")]
    assert all(ok)


def test_criterion_09_sturmian_suite(shipped, acceptance_log):
    ok = []
    for name, res in sorted(shipped.items()):
        keys = [k for k in res.entries if k.startswith("sturmian.delay=") and k.endswith(".counts")]
        if not keys:
            continue
        bad = []
        for k in keys:
            counts = list(map(int, res.entries[k].split()))
            resolved = res.entries[k.replace(".counts", ".resolved")]
            if resolved and any(b > a for a, b in zip(counts, counts[1:])):
                bad.append(k.split("=")[1].removesuffix(".counts"))
        checked = res.entries["sturmian.checked"]
        ok.append(acceptance_log(9, f"{name}: N(t) nonincreasing", not bad and checked > 0,
                                 f"{checked} resolved references" + (f", increases at {bad}" if bad else "")))
    e = shipped["change_once_3_3_4"].entries
    found = e["change_once.t1"] != "none" and e["change_once.t2"] != "none"
    ok.append(acceptance_log(9, "change_once: N = 1 with -+ and +-", found,
                             f"t1={e['change_once.t1']} t2={e['change_once.t2']}"))
    assert all(ok)


def test_criterion_10_extinction_boundary(shipped, acceptance_log):
    ext = shipped["extinction_ball_3_1p3"].entries["extinction.time"]
    sup = shipped["supercritical_mass_3_1p7"].entries
    drift = sup["mass_conservation.drift"]
    ok = [acceptance_log(10, "(3,1.3,1.3) ball extinguishes", ext != "none", f"sup < 1e-6 at t={ext}"),
          acceptance_log(10, "(3,1.7,1.7) d-mass drift <= 1e-4", drift <= 1e-4, f"{drift:.3e}"),
          acceptance_log(10, "(3,1.7,1.7) no extinction", sup["extinction.time"] == "none",
                         f"{sup['extinction.time']}")]
    assert all(ok)


def test_criterion_11_harnack_stability(tmp_path, acceptance_log):
    text = (SCENARIOS / "bump_asymptotics_3_3_4.ini").read_text()
    head = text.split("[analysis:")[0].replace("T_end = 100", "T_end = 20")
    head = head.replace("samples = 0.5, 1, 2, 5, 10, 20, 40, geom(10, 100, 21)", "samples = 5, 10, 20")
    harnack = "[analysis:harnack]\nt0 = 10\nprobes = 0.1, 0.3, 0.5, 0.7, 0.9\nr = 0.2\nC_theta = 1\n"
    mus = []
    for cells in (400, 800):
        path = tmp_path / f"harnack_{cells}.ini"
        path.write_text(head.replace("cells = 400", f"cells = {cells}") + harnack)
        res = run_scenario(path, tmp_path / "out")
        assert res.status == EXIT_OK, res.reason
        mus.append(np.array([res.entries[f"harnack.{k}.mu"] for k in range(5)]))
    finite = bool(np.all(np.isfinite(mus[0])) and np.all(np.isfinite(mus[1])))
    change = np.abs(mus[1] - mus[0]) / np.abs(mus[0])
    ok = [acceptance_log(11, "mu finite at 5 probes", finite, " ".join(f"{m:.4g}" for m in mus[0])),
          acceptance_log(11, "mu change under mesh doubling < 20%", bool(np.all(change < 0.2)),
                         f"max {change.max():.3e}")]
    assert all(ok)
