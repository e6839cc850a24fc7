"""Run configuration: YAML loading, validation and resolution.

A configuration file has these top-level blocks, all optional except
``matrix``::

    seed: 0
    out_dir: results
    serial: false
    trajectory: {radius: 0.8, period: 10.0}      # defaults for every entry
    platforms:
      quad:
        params: {m: 2.1}
        episode: {control_rate: 100}
        NR: {alpha: 10, predictor: {T: 0.8}}
    matrix:
      - platform: quad
        controller: NR
        trajectory: CircleA          # a kind, a list of kinds, or "all"
        repetitions: 1
        overrides: {controller: {alpha: 12}, trajectory: {}, episode: {}}
    tuning: {platform: quad, trajectory: CircleA, T_grid: [...], alpha_grid: [...]}

Resolution deep-merges the built-in defaults, the ``platforms`` blocks and
the per-entry overrides, and expands trajectory lists into one entry per
kind.  The resolved form is itself a valid configuration.

``NRFLOW_OUT_DIR`` and ``NRFLOW_SERIAL`` override ``out_dir`` and ``serial``.
"""
import copy
import os
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .baselines.fbl import FBLConfig
from .baselines.nmpc import NMPCConfig
from .defaults import CONTROLLERS, PLATFORMS, defaults, make_episode, nr_config
from .exceptions import ConfigError
from .models import make_plant
from .sim import EpisodeConfig
from .trajectories import BLIMP_KINDS, KINDS, TrajectorySpec

ENV_OUT_DIR = "NRFLOW_OUT_DIR"
ENV_SERIAL = "NRFLOW_SERIAL"

TOP_KEYS = ("seed", "out_dir", "serial", "trajectory", "platforms", "matrix", "tuning")
ENTRY_KEYS = ("platform", "controller", "trajectory", "repetitions", "overrides")
OVERRIDE_KEYS = ("controller", "trajectory", "episode", "params")
PLATFORM_KEYS = ("params", "episode") + CONTROLLERS
TUNING_KEYS = ("platform", "trajectory", "T_grid", "alpha_grid", "overrides")
TRAJECTORY_KEYS = tuple(f.name for f in fields(TrajectorySpec))
EPISODE_KEYS = tuple(f.name for f in fields(EpisodeConfig) if f.name != "seed")


@dataclass
class RunEntry:
    """One fully resolved (platform, controller, trajectory) cell."""

    index: int
    platform: str
    controller: str
    trajectory: dict
    episode: dict
    settings: dict
    params: dict
    repetitions: int = 1
    error: str = None

    @property
    def key(self):
        return (self.platform, self.controller, self.trajectory["kind"])

    def spec(self):
        return TrajectorySpec(**self.trajectory)

    def as_dict(self):
        return {
            "platform": self.platform, "controller": self.controller,
            "trajectory": self.trajectory["kind"], "repetitions": self.repetitions,
            "overrides": {"controller": self.settings, "trajectory": self.trajectory,
                          "episode": self.episode, "params": self.params},
        }


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "results"
    serial: bool = False
    entries: list = field(default_factory=list)
    tuning: dict = None
    raw: dict = None

    def resolved(self):
        """Plain-data configuration that resolves back to the same entries."""
        out = {"seed": self.seed, "out_dir": self.out_dir, "serial": self.serial,
               "matrix": [e.as_dict() for e in self.entries if e.error is None]}
        if self.tuning is not None:
            out["tuning"] = copy.deepcopy(self.tuning)
        return _plain(out)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _check_keys(block, allowed, where):
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(block).__name__}")
    for k in block:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}: unknown key")
    return block


def _merge(base, over, where, strict=True):
    """Deep merge ``over`` into a copy of ``base``; unknown keys are errors."""
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if strict and k not in out:
            raise ConfigError(f"{where}.{k}: unknown key")
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v, f"{where}.{k}", strict)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _validate_settings(platform, controller, settings, where):
    try:
        if controller == "NR":
            nr_config(settings)
        elif controller == "NMPC":
            NMPCConfig(**settings)
        else:
            FBLConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _kinds(value, platform, where):
    allowed = BLIMP_KINDS if platform == "blimp" else KINDS
    if value in (None, "all"):
        return list(allowed)
    kinds = [value] if isinstance(value, str) else list(value)
    for k in kinds:
        if k not in allowed:
            raise ConfigError(f"{where}: trajectory {k!r} is not available for {platform}")
    return kinds


def _resolve_entry(i, entry, platform_blocks, traj_defaults, seed):
    where = f"matrix[{i}]"
    _check_keys(entry, ENTRY_KEYS, where)
    platform = entry.get("platform")
    if platform not in PLATFORMS:
        raise ConfigError(f"{where}.platform: unknown platform {platform!r}")
    controller = entry.get("controller")
    if controller not in CONTROLLERS:
        raise ConfigError(f"{where}.controller: unknown controller {controller!r}")
    if controller == "FBL" and platform != "blimp":
        raise ConfigError(f"{where}.controller: FBL pairs with the blimp only")
    reps = entry.get("repetitions", 1)
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        raise ConfigError(f"{where}.repetitions: must be an integer >= 1")
    over = _check_keys(entry.get("overrides"), OVERRIDE_KEYS, f"{where}.overrides")

    user_block = platform_blocks.get(platform, {})
    params = dict(user_block.get("params", {}))
    params.update(over.get("params", {}))
    try:
        make_plant(platform, params)
        base = defaults(platform, params if platform == "quad" else None)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.params: {exc}") from exc
    params = _merge(base["params"], params, f"{where}.params", strict=False)
    episode = _merge(base["episode"], user_block.get("episode"), f"platforms.{platform}.episode",
                     strict=False)
    episode = _merge(episode, over.get("episode"), f"{where}.overrides.episode", strict=False)
    _check_keys(episode, EPISODE_KEYS, f"{where}.episode")
    try:
        make_episode(episode, seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.episode: {exc}") from exc
    settings = _merge(base[controller], user_block.get(controller),
                      f"platforms.{platform}.{controller}")
    settings = _merge(settings, over.get("controller"), f"{where}.overrides.controller")
    _validate_settings(platform, controller, settings, f"{where}.controller")

    traj = dict(traj_defaults)
    traj_over = _check_keys(over.get("trajectory"), TRAJECTORY_KEYS,
                            f"{where}.overrides.trajectory")
    traj.update(traj_over)
    out = []
    for kind in _kinds(traj_over.get("kind", entry.get("trajectory")), platform,
                       f"{where}.trajectory"):
        t = dict(traj, kind=kind)
        try:
            t = TrajectorySpec(**t).as_dict()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.overrides.trajectory: {exc}") from exc
        out.append(RunEntry(i, platform, controller, t, episode, settings, params, reps))
    return out


def resolve(raw, seed=None, out_dir=None, serial=None, env=None):
    """Validate a parsed configuration and expand it into :class:`RunEntry` items.

    Matrix entries that fail validation are kept with ``error`` set so that
    the runner can report them; structural problems outside the matrix
    raise :class:`ConfigError` immediately.
    """
    env = os.environ if env is None else env
    raw = _check_keys(raw, TOP_KEYS, "config")
    cfg = RunConfig(raw=copy.deepcopy(raw))
    cfg.seed = int(raw.get("seed", 0) if seed is None else seed)
    cfg.out_dir = str(out_dir or env.get(ENV_OUT_DIR) or raw.get("out_dir", "results"))
    if serial is not None:
        cfg.serial = bool(serial)
    elif ENV_SERIAL in env:
        cfg.serial = env[ENV_SERIAL].strip().lower() in ("1", "true", "yes", "on")
    else:
        cfg.serial = bool(raw.get("serial", False))

    traj_defaults = _check_keys(raw.get("trajectory"), TRAJECTORY_KEYS, "trajectory")
    if "kind" in traj_defaults:
        raise ConfigError("trajectory.kind: set the kind per matrix entry")
    platform_blocks = _check_keys(raw.get("platforms"), PLATFORMS, "platforms")
    for name, block in platform_blocks.items():
        _check_keys(block, PLATFORM_KEYS, f"platforms.{name}")
        if name == "quad" and "FBL" in (block or {}):
            raise ConfigError("platforms.quad.FBL: FBL pairs with the blimp only")
    platform_blocks = {k: (v or {}) for k, v in platform_blocks.items()}

    matrix = raw.get("matrix")
    if not isinstance(matrix, list) or not matrix:
        raise ConfigError("matrix: expected a non-empty list of entries")
    for i, entry in enumerate(matrix):
        try:
            cfg.entries.extend(_resolve_entry(i, entry, platform_blocks,
                                              traj_defaults, cfg.seed))
        except ConfigError as exc:
            cfg.entries.append(RunEntry(i, str((entry or {}).get("platform")),
                                        str((entry or {}).get("controller")),
                                        {"kind": str((entry or {}).get("trajectory"))},
                                        {}, {}, {}, 1, error=str(exc)))
    if "tuning" in raw:
        cfg.tuning = _resolve_tuning(raw["tuning"], platform_blocks, traj_defaults)
    return cfg


def _resolve_tuning(block, platform_blocks, traj_defaults):
    block = _check_keys(block, TUNING_KEYS, "tuning")
    platform = block.get("platform", "quad")
    if platform not in PLATFORMS:
        raise ConfigError(f"tuning.platform: unknown platform {platform!r}")
    kinds = _kinds(block.get("trajectory", "CircleA"), platform, "tuning.trajectory")
    if len(kinds) != 1:
        raise ConfigError("tuning.trajectory: give a single trajectory kind")
    for key in ("T_grid", "alpha_grid"):
        grid = block.get(key)
        if grid is not None and (not isinstance(grid, list) or not grid
                                 or not all(isinstance(g, (int, float)) and g > 0 for g in grid)):
            raise ConfigError(f"tuning.{key}: expected a non-empty list of positive numbers")
    over = _check_keys(block.get("overrides"), OVERRIDE_KEYS, "tuning.overrides")
    entry = {"platform": platform, "controller": "NR", "trajectory": kinds[0],
             "overrides": over}
    resolved = _resolve_entry(0, entry, platform_blocks, traj_defaults, 0)[0]
    return {
        "platform": platform,
        "trajectory": kinds[0],
        "T_grid": [float(v) for v in block.get("T_grid", [0.2, 0.3, 0.5, 0.8, 1.0])],
        "alpha_grid": [float(v) for v in block.get("alpha_grid", [1, 2, 5, 10, 20])],
        "overrides": resolved.as_dict()["overrides"],
    }


def read(path):
    """Parse a YAML configuration file into plain data."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: malformed YAML in {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    return raw


def load(path, **kwargs):
    """Parse and resolve a YAML configuration file."""
    return resolve(read(path), **kwargs)


def dump(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.resolved(), fh, sort_keys=False)
