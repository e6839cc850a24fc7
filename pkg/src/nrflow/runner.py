"""Batch execution of a resolved run matrix and table rendering."""
import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import dump
from .defaults import CONTROLLERS, make_controller, make_episode
from .exceptions import ConfigError
from .models import make_plant
from .sim import run_episode, summarize
from .trajectories import Trajectory, TrajectorySpec

TABLE_METRICS = (
    ("rmse_clipped", "Clipped RMSE [m]"),
    ("rmse", "RMSE with transients [m]"),
    ("compute_ms", "Compute time per iteration [ms]"),
)


def episode_name(entry, rep):
    p, c, k = entry.key
    return f"{p}_{c}_{k}_rep{rep}"


def run_one(entry, rep, seed, out_dir=None):
    """Run repetition ``rep`` of ``entry``; returns its summary block."""
    plant = make_plant(entry.platform, entry.params)
    ep = make_episode(entry.episode, seed)
    ctrl = make_controller(entry.platform, entry.controller, plant, entry.settings, ep.dt)
    try:
        log = run_episode(plant, ctrl, entry.spec(), ep)
    except Exception as exc:  # recorded, the batch keeps going
        return {"platform": entry.platform, "controller": entry.controller,
                "trajectory": entry.trajectory["kind"], "repetition": rep, "seed": seed,
                "crashed": True, "crash_reason": f"{type(exc).__name__}: {exc}",
                "rmse_clipped": None, "rmse": None,
                "compute_ms_mean": None, "compute_ms_std": None, "csv": None}
    s = summarize(log)
    s.update(platform=entry.platform, repetition=rep, seed=seed, csv=None)
    if out_dir is not None:
        path = os.path.join(out_dir, "logs", episode_name(entry, rep) + ".csv")
        log.to_csv(path)
        s["csv"] = os.path.relpath(path, out_dir)
    return s


def _jobs(cfg):
    for entry in cfg.entries:
        if entry.error is None:
            for rep in range(entry.repetitions):
                yield entry, rep, cfg.seed + rep


def _aggregate(entry, reps):
    """Per-cell block: mean over repetitions, ``None`` if any crashed."""
    cell = {"platform": entry.platform, "controller": entry.controller,
            "trajectory": entry.trajectory["kind"], "repetitions": len(reps),
            "crashed": any(r["crashed"] for r in reps), "error": entry.error}
    for key in ("rmse_clipped", "rmse", "compute_ms_mean", "compute_ms_std",
                "deadline_miss_fraction"):
        vals = [r.get(key) for r in reps]
        ok = bool(vals) and all(v is not None for v in vals)
        if key.startswith("rmse") and cell["crashed"]:
            ok = False
        cell[key] = float(np.mean(vals)) if ok else None
    return cell


def run_matrix(cfg, out_dir=None):
    """Execute every resolved entry; returns ``(summary, exit_code)``.

    Writes per-episode CSV logs, ``summary.json``, ``tables.txt`` and the
    resolved configuration ``resolved_config.yaml`` into ``out_dir``.
    Exit code is 2 when any entry failed configuration validation.
    """
    out_dir = out_dir or cfg.out_dir
    os.makedirs(os.path.join(out_dir, "logs"), exist_ok=True)
    jobs = list(_jobs(cfg))
    workers = 1 if cfg.serial else min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_one, e, rep, seed, out_dir) for e, rep, seed in jobs]
            results = [f.result() for f in futures]
    else:
        results = [run_one(e, rep, seed, out_dir) for e, rep, seed in jobs]

    by_entry = {}
    for (entry, _, _), res in zip(jobs, results):
        by_entry.setdefault(id(entry), []).append(res)
    cells = [_aggregate(e, by_entry.get(id(e), [])) for e in cfg.entries]
    summary = {"seed": cfg.seed, "episodes": results, "cells": cells,
               "config_errors": [e.error for e in cfg.entries if e.error is not None]}
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "tables.txt"), "w") as fh:
        fh.write(render_tables(cells))
    dump(cfg, os.path.join(out_dir, "resolved_config.yaml"))
    return summary, (2 if summary["config_errors"] else 0)


def _cell_text(cell, metric):
    if cell is None or cell.get("error") is not None:
        return "-"
    if metric == "compute_ms":
        m, s = cell.get("compute_ms_mean"), cell.get("compute_ms_std")
        return "-" if m is None else f"{m:.4g} ± {s:.2g}"
    v = cell.get(metric)
    return "-" if v is None else f"{v:.5f}"


def render_table(cells, platform, metric, title):
    """Text table with columns Trajectory | NR | NMPC | FBL for one metric."""
    rows = {}
    for c in cells:
        if c["platform"] == platform:
            rows.setdefault(c["trajectory"], {})[c["controller"]] = c
    header = ["Trajectory", *CONTROLLERS]
    body = [[kind] + [_cell_text(by.get(name), metric) for name in CONTROLLERS]
            for kind, by in rows.items()]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    fmt = " | ".join("{:<%d}" % w for w in widths)
    lines = [f"{platform}: {title}", fmt.format(*header),
             "-+-".join("-" * w for w in widths)]
    lines += [fmt.format(*r) for r in body]
    return "\n".join(lines) + "\n"


def render_tables(cells):
    out = []
    for platform in dict.fromkeys(c["platform"] for c in cells):
        for metric, title in TABLE_METRICS:
            out.append(render_table(cells, platform, metric, title))
    return "\n".join(out)


def dump_trajectory(spec, rate, path):
    """Write ``(t, phase, r, r_dot, r_ddot)`` rows sampled at ``rate`` Hz.

    Produces ``rate * total_time + 1`` rows, endpoints included.
    """
    if not isinstance(spec, TrajectorySpec):
        try:
            spec = TrajectorySpec(**spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"trajectory: {exc}") from exc
    if not (isinstance(rate, (int, float)) and rate > 0):
        raise ConfigError("rate: must be a positive number")
    n = int(round(rate * spec.total_time))
    if not np.isclose(n, rate * spec.total_time):
        raise ConfigError("rate: rate * total_time must be an integer")
    traj = Trajectory(spec)
    header = (["t", "phase"] + [f"r{i}" for i in range(4)]
              + [f"r_dot{i}" for i in range(4)] + [f"r_ddot{i}" for i in range(4)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(n + 1):
            t = min(k / rate, spec.total_time)
            s = traj.sample(t)
            w.writerow([repr(t), s.phase] + [repr(float(v)) for v in
                                             np.concatenate([s.r, s.r_dot, s.r_ddot])])
    return n + 1
