"""Command-line driver.

Subcommands:
  run          one closed-loop mission; writes telemetry.csv + report.json
  flip-trials  repeatability study: --count missions from perturbed starts
  verify       first-principles check suite, PASS/FAIL table

Exit codes: 0 success, 1 generic failure (mission incomplete, checks
failed), 2 simulation divergence, 3 configuration error.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import sim
from ._backend import backend_name
from .errors import ConfigError, SimDivergedError
from .simconfig import load_config


def _common(sub):
    sub.add_argument("--config", default=None, help="JSON config file (defaults when omitted)")
    sub.add_argument("--out-dir", default=None, help="output directory (default from config)")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out_dir is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out_dir)
    return cfg


def _ensure_out(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _ensure_out(cfg)
    report = sim.run(cfg)
    sim.write_logs(report.records, os.path.join(out, "telemetry.csv"), report=report)
    print(f"backend: {report.backend}")
    print(f"phases: {' -> '.join(p['phase'] for p in report.phase_timeline)}")
    if report.release:
        r = report.release
        print(
            f"release: t={r['t']:.3f}s speed={r['speed']:.2f} m/s "
            f"elevation={r['elevation_deg']:.1f} deg height={r['position'][2]:.2f} m"
        )
    if report.landing is not None:
        print(
            f"probe landing: x={report.landing['x']:.2f} y={report.landing['y']:.2f} "
            f"(range from release {report.range_from_release:.2f} m)"
        )
    print(f"peak pitch rate: {report.peak_pitch_rate:.2f} rad/s")
    med = report.mpc_stats["median_solve_us"]
    if med is not None:
        print(f"mpc: {report.mpc_stats['solves']} solves, median {med / 1000.0:.2f} ms")
    print(
        f"mission {'completed' if report.completed else 'INCOMPLETE'} "
        f"({report.duration_simulated:.2f} s simulated, {report.wall_time_s:.1f} s wall)"
    )
    print(f"logs: {os.path.join(out, 'telemetry.csv')}")
    return 0 if report.completed else 1


def cmd_flip_trials(args) -> int:
    cfg = _load(args)
    out = _ensure_out(cfg)
    rng = np.random.default_rng(cfg.seed)
    offsets = rng.uniform(-0.05, 0.05, size=(args.count, 3))
    rows = []
    diverged = 0
    for i in range(args.count):
        off = offsets[i]
        try:
            report = sim.run(cfg, initial_offset=off)
            sim.write_logs(
                report.records, os.path.join(out, f"trial_{i:02d}.csv"), report=report
            )
            rows.append(
                {
                    "trial": i,
                    "offset": [float(v) for v in off],
                    "diverged": False,
                    "completed": report.completed,
                    "peak_pitch_rate": report.peak_pitch_rate,
                    "range_from_release": report.range_from_release,
                }
            )
            print(
                f"trial {i}: peak rate {report.peak_pitch_rate:.3f} rad/s, "
                f"range {report.range_from_release and f'{report.range_from_release:.2f}'} m, "
                f"{'ok' if report.completed else 'incomplete'}"
            )
        except SimDivergedError as exc:
            diverged += 1
            rows.append(
                {
                    "trial": i,
                    "offset": [float(v) for v in off],
                    "diverged": True,
                    "tick": exc.tick,
                }
            )
            print(f"trial {i}: DIVERGED at tick {exc.tick}")
    peaks = [r["peak_pitch_rate"] for r in rows if not r["diverged"]]
    spread = None
    if peaks:
        spread = (max(peaks) - min(peaks)) / (sum(peaks) / len(peaks))
        print(
            f"peak-rate spread: {spread * 100.0:.2f}% over {len(peaks)} trials "
            f"(min {min(peaks):.3f}, max {max(peaks):.3f} rad/s)"
        )
    summary = {"trials": rows, "diverged": diverged, "peak_rate_spread": spread}
    with open(os.path.join(out, "trials.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if diverged:
        return 2
    return 0


def cmd_verify(args) -> int:
    from .checks import run_all

    cfg = _load(args)  # validates the config file if one was given
    ok, rows = run_all(seed=cfg.seed)
    width = max(len(name) for name, _, _ in rows)
    print(f"kernel backend: {backend_name()}")
    for name, passed, detail in rows:
        print(f"{'PASS' if passed else 'FAIL'}  {name:<{width}}  {detail}")
    print(f"{sum(1 for _, p, _ in rows if p)}/{len(rows)} checks passed")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flipthrow",
        description="Closed-loop quadrotor flip-and-throw simulation",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="run one mission")
    _common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_tr = subs.add_parser("flip-trials", help="repeatability study")
    p_tr.add_argument("--count", type=int, default=8, help="number of trials")
    _common(p_tr)
    p_tr.set_defaults(fn=cmd_flip_trials)

    p_ver = subs.add_parser("verify", help="run the verification suite")
    _common(p_ver)
    p_ver.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except SimDivergedError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
