"""Grid sweep over the NR speedup factor and prediction horizon.

The practical rule is: start with ``alpha = 1``, pick a small horizon ``T``
whose prediction error is acceptable, then raise ``alpha`` until the closed
loop is stable.  :func:`sweep_tuning` runs that search over a grid and
:func:`select_tuning` picks the result.
"""
import copy
from dataclasses import dataclass

import numpy as np

from .defaults import make_controller
from .exceptions import EmptyWindow
from .sim import rmse, run_episode, timing_stats


@dataclass(frozen=True)
class TuningPoint:
    T: float
    alpha: float
    stable: bool
    rmse_clipped: float
    compute_ms_mean: float

    def as_dict(self):
        return {"T": self.T, "alpha": self.alpha, "stable": self.stable,
                "rmse_clipped": self.rmse_clipped, "compute_ms_mean": self.compute_ms_mean}


def sweep_tuning(platform, plant, nr_block, spec, episode_cfg, T_grid, alpha_grid,
                 stop_at_stable=True):
    """Run NR episodes over ``T_grid x alpha_grid``.

    For each horizon (ascending) the speedup factor is raised through
    ``alpha_grid`` (ascending).  With ``stop_at_stable`` the scan of a
    horizon stops at the first stable ``alpha``, which is the smallest
    speedup that stabilizes it.  Returns a list of :class:`TuningPoint`.
    """
    points = []
    for T in sorted(T_grid):
        for alpha in sorted(alpha_grid):
            block = copy.deepcopy(nr_block)
            block["alpha"] = float(alpha)
            block.setdefault("predictor", {})["T"] = float(T)
            ctrl = make_controller(platform, "NR", plant, block, episode_cfg.dt)
            log = run_episode(plant, ctrl, spec, episode_cfg)
            try:
                err = rmse(log, clip=True)
            except EmptyWindow:
                err = float("nan")
            stable = not log.crashed and np.isfinite(err)
            points.append(TuningPoint(float(T), float(alpha), bool(stable),
                                      err if stable else float("nan"),
                                      timing_stats(log)[0]))
            if stable and stop_at_stable:
                break
    return points


def select_tuning(points):
    """Stable point with the lowest clipped RMSE (ties go to the smaller ``T``)."""
    stable = [p for p in points if p.stable]
    if not stable:
        return None
    return min(stable, key=lambda p: (p.rmse_clipped, p.T, p.alpha))
