"""Command line entry point: ``nrflow run | dump-trajectory | sweep-tuning``."""
import argparse
import json
import os
import sys

from . import config as config_mod
from .defaults import make_episode
from .exceptions import ConfigError
from .models import make_plant
from .runner import dump_trajectory, run_matrix
from .trajectories import KINDS, TrajectorySpec
from .tuning import select_tuning, sweep_tuning


def _parser():
    p = argparse.ArgumentParser(prog="nrflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a run matrix")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--serial", action="store_true", default=None,
                     help="run episodes one at a time (for timing runs)")
    run.add_argument("--seed", type=int, default=None)

    dt = sub.add_parser("dump-trajectory", help="sample a reference to CSV")
    dt.add_argument("--config", default=None, help="take trajectory defaults from this file")
    dt.add_argument("--kind", default="CircleA", choices=KINDS)
    dt.add_argument("--rate", type=float, default=100.0)
    dt.add_argument("--total-time", type=float, default=None)
    dt.add_argument("--out", required=True, help="CSV path")
    dt.add_argument("--seed", type=int, default=None, help="accepted for symmetry; unused")
    dt.add_argument("--serial", action="store_true", default=None, help=argparse.SUPPRESS)

    sw = sub.add_parser("sweep-tuning", help="grid search over NR alpha and T")
    sw.add_argument("--config", default=None)
    sw.add_argument("--out", default=None, help="output directory")
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--serial", action="store_true", default=None, help=argparse.SUPPRESS)
    return p


def _cmd_run(args):
    cfg = config_mod.load(args.config, seed=args.seed, out_dir=args.out, serial=args.serial)
    summary, code = run_matrix(cfg, cfg.out_dir)
    with open(os.path.join(cfg.out_dir, "tables.txt")) as fh:
        sys.stdout.write(fh.read())
    for err in summary["config_errors"]:
        print(f"config error: {err}", file=sys.stderr)
    return code


def _cmd_dump(args):
    traj = {}
    if args.config:
        traj = dict(config_mod.read(args.config).get("trajectory") or {})
    traj["kind"] = args.kind
    if args.total_time is not None:
        traj["total_time"] = args.total_time
    try:
        spec = TrajectorySpec(**traj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"trajectory: {exc}") from exc
    rows = dump_trajectory(spec, args.rate, args.out)
    print(f"wrote {rows} rows to {args.out}")
    return 0


def _cmd_sweep(args):
    raw = config_mod.read(args.config) if args.config else {}
    raw.setdefault("matrix", [{"platform": "quad", "controller": "NR", "trajectory": "CircleA"}])
    raw.setdefault("tuning", {})
    cfg = config_mod.resolve(raw, seed=args.seed, out_dir=args.out)
    tuning = cfg.tuning
    over = tuning["overrides"]
    plant = make_plant(tuning["platform"], over["params"])
    ep = make_episode(over["episode"], cfg.seed)
    spec = TrajectorySpec(**over["trajectory"])
    points = sweep_tuning(tuning["platform"], plant, over["controller"], spec, ep,
                          tuning["T_grid"], tuning["alpha_grid"])
    best = select_tuning(points)
    os.makedirs(cfg.out_dir, exist_ok=True)
    out = {"tuning": tuning, "points": [p.as_dict() for p in points],
           "selected": None if best is None else best.as_dict()}
    with open(os.path.join(cfg.out_dir, "tuning.json"), "w") as fh:
        json.dump(out, fh, indent=2)
    print("T      alpha  stable  clipped RMSE [m]")
    for p in points:
        err = "-" if not p.stable else f"{p.rmse_clipped:.5f}"
        print(f"{p.T:<6g} {p.alpha:<6g} {str(p.stable):<7} {err}")
    print("selected:", "none" if best is None else f"T = {best.T:g}, alpha = {best.alpha:g}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "dump-trajectory": _cmd_dump, "sweep-tuning": _cmd_sweep}
    try:
        return handler[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
