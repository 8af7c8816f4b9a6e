"""Acceptance gate: the seven mission-level criteria.

Each test prints one PASS/FAIL line (with capture suspended, so the lines
always reach the console) and then asserts, so a red criterion is both
visible and a test failure. Tolerances are pinned here, not imported, so a
drive-by edit of package defaults cannot silently relax the gate.
"""

import math

import numpy as np
import pytest

from flipthrow import projectile_range, solve_throw_params
from flipthrow.checks import (
    check_box_feasibility,
    check_cost_brute,
    check_energy_drift,
    check_fallback_rule,
    check_hover_residual,
    check_jacobians,
    check_mpc_kkt,
    check_release_momentum,
    check_solve_time,
)

RANGE_TARGET = 20.0
RANGE_TOL_FRAC = 0.10
WALL_BUDGET_S = 30.0
PEAK_RATE_MIN = 12.0
RECOVERY_WINDOW_S = 5.0
UPRIGHT_R33 = 0.95
TRACKING_FRAC = 0.10
TRIALS = 8
SPREAD_MAX_FRAC = 0.05
ROUNDTRIP_TOL_M = 1e-6
GRID_TOL_MS = 0.01


def _line(capsys, tag, ok, detail):
    with capsys.disabled():
        print(f"[{tag}] {'PASS' if ok else 'FAIL'}: {detail}")


def _r33(quat):
    w, x, y, z = quat
    return 1.0 - 2.0 * (x * x + y * y)


def test_c1_throw_accuracy(nominal_report, capsys):
    rep = nominal_report
    parts = []
    ok = rep.completed
    parts.append(f"mission {'completed' if rep.completed else 'incomplete'}")
    rng = rep.range_from_release
    if rng is None:
        ok = False
        parts.append("no landing recorded")
    else:
        lo = RANGE_TARGET * (1.0 - RANGE_TOL_FRAC)
        hi = RANGE_TARGET * (1.0 + RANGE_TOL_FRAC)
        ok = ok and lo <= rng <= hi
        parts.append(f"range {rng:.2f} m (window [{lo:.1f}, {hi:.1f}])")
    ok = ok and rep.wall_time_s < WALL_BUDGET_S
    parts.append(f"wall {rep.wall_time_s:.1f} s (budget {WALL_BUDGET_S:.0f})")
    _line(capsys, "C1 throw accuracy", ok, ", ".join(parts))
    assert ok, ", ".join(parts)


def test_c2_flip_rate_tracking(nominal_report, capped_report, capsys):
    rep = nominal_report
    parts = []
    ok = rep.peak_pitch_rate >= PEAK_RATE_MIN
    parts.append(f"peak pitch rate {rep.peak_pitch_rate:.2f} rad/s (need >= {PEAK_RATE_MIN})")

    enters = {p["phase"]: p["t_enter"] for p in rep.phase_timeline}
    flip_start = enters.get("flip_throw")
    t_recovery = enters.get("recovery")
    if flip_start is None or t_recovery is None:
        ok = False
        parts.append("flip or recovery phase missing")
    else:
        # recovery entry certifies the full revolution; upright is the first
        # R33 crossing after that (the spin's own tail also passes upright,
        # which must not count)
        t_up = None
        for rec in rep.records:
            if rec.t >= t_recovery and _r33(rec.quat) > UPRIGHT_R33:
                t_up = rec.t
                break
        if t_up is None:
            ok = False
            parts.append("never recovered upright")
        else:
            dt = t_up - flip_start
            ok = ok and dt <= RECOVERY_WINDOW_S
            parts.append(f"revolution+upright {dt:.2f} s after flip start (window {RECOVERY_WINDOW_S:.0f} s)")

    cap_ok = capped_report.completed and "hold" in {p["phase"] for p in capped_report.phase_timeline}
    ok = ok and cap_ok
    parts.append(
        f"11 rad/s capped variant {'recovered' if cap_ok else 'FAILED'} "
        f"(peak {capped_report.peak_pitch_rate:.2f} rad/s)"
    )
    _line(capsys, "C2 flip-rate tracking", ok, ", ".join(parts))
    assert ok, ", ".join(parts)


def test_c3_tracking_error(nominal_report, capsys):
    wanted = {"takeoff", "transit_to_rally", "hold"}
    parts = []
    ok = True
    seen = set()
    for row in nominal_report.tracking:
        if row["phase"] not in wanted:
            continue
        seen.add(row["phase"])
        budget = TRACKING_FRAC * row["displacement"]
        good = row["arrived"] and row["steady_error"] < budget
        ok = ok and good
        parts.append(
            f"{row['phase']} steady {row['steady_error']:.3f} m of {row['displacement']:.2f} m"
            f" ({'ok' if good else 'over 10%'})"
        )
    missing = wanted - seen
    if missing:
        ok = False
        parts.append(f"phases never tracked: {sorted(missing)}")
    _line(capsys, "C3 tracking error", ok, ", ".join(parts))
    assert ok, ", ".join(parts)


def test_c4_repeatability(trial_reports, capsys):
    diverged = [t for t in trial_reports if t["error"] is not None]
    incomplete = [t for t in trial_reports if t["report"] is not None and not t["report"].completed]
    peaks = [t["report"].peak_pitch_rate for t in trial_reports if t["report"] is not None]
    parts = [f"{len(trial_reports) - len(diverged)}/{TRIALS} ran, {len(diverged)} diverged"]
    ok = len(trial_reports) == TRIALS and not diverged and not incomplete
    if incomplete:
        parts.append(f"{len(incomplete)} incomplete")
    if peaks:
        spread = (max(peaks) - min(peaks)) / (sum(peaks) / len(peaks))
        ok = ok and spread < SPREAD_MAX_FRAC
        parts.append(f"peak-rate spread {spread * 100.0:.2f}% (limit {SPREAD_MAX_FRAC * 100:.0f}%)")
    else:
        ok = False
        parts.append("no surviving trials")
    _line(capsys, "C4 repeatability", ok, ", ".join(parts))
    assert ok, ", ".join(parts)


def test_c5_physics_oracles(capsys):
    rng = np.random.default_rng(0)
    rows = [
        ("energy drift", check_energy_drift(rng)),
        ("release momentum", check_release_momentum(rng)),
        ("jacobians", check_jacobians(rng)),
        ("hover residual", check_hover_residual(rng)),
    ]
    ok = all(passed for _, (passed, _) in rows)
    detail = "; ".join(f"{name}: {d}" for name, (_, d) in rows)
    _line(capsys, "C5 physics oracles", ok, detail)
    assert ok, detail


def test_c6_optimization_oracles(capsys):
    rng = np.random.default_rng(0)
    rows = [
        ("dense kkt", check_mpc_kkt(rng)),
        ("box feasibility", check_box_feasibility(rng)),
        ("cost brute force", check_cost_brute(rng)),
        ("fallback rule", check_fallback_rule(rng)),
        ("solve time", check_solve_time(rng)),
    ]
    ok = all(passed for _, (passed, _) in rows)
    detail = "; ".join(f"{name}: {d}" for name, (_, d) in rows)
    _line(capsys, "C6 optimization oracles", ok, detail)
    assert ok, detail


def test_c7_throw_planner_roundtrip(capsys):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        h = rng.uniform(0.5, 6.0)
        target = rng.uniform(2.0, 30.0)
        plan = solve_throw_params(target, h)
        back = projectile_range(plan.release_speed, plan.release_angle, h)
        worst = max(worst, abs(back - target))
    ok = worst <= ROUNDTRIP_TOL_M

    # independent grid search over (V, theta) for the minimal feasible speed
    R_want, h = 20.0, 2.0
    lo, hi = math.radians(20.0), math.radians(70.0)
    plan = solve_throw_params(R_want, h)
    V = np.linspace(0.0, 20.0, 2000)[:, None]
    TH = np.linspace(lo, hi, 2000)[None, :]
    vs = V * np.sin(TH)
    ranges = V * np.cos(TH) * (vs + np.sqrt(vs * vs + 2 * 9.81 * h)) / 9.81
    v_grid = float(V[np.argmax((ranges >= R_want).any(axis=1)), 0])
    grid_err = abs(plan.release_speed - v_grid)
    ok = ok and grid_err <= GRID_TOL_MS

    detail = (
        f"roundtrip worst {worst:.2e} m over 100 targets (tol {ROUNDTRIP_TOL_M:.0e}), "
        f"grid search gap {grid_err:.4f} m/s (tol {GRID_TOL_MS})"
    )
    _line(capsys, "C7 throw planner", ok, detail)
    assert ok, detail
