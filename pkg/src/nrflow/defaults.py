"""Desk-tuned default settings per platform and controller factories.

All numbers here come from tuning runs in the simulator, not from flight
hardware.  Every value can be overridden from the run configuration.
"""
from .baselines.fbl import FBLConfig, FBLController
from .baselines.nmpc import NMPCConfig, NMPCController
from .models import QuadrotorParams, make_plant
from .nr import NRConfig, NRController
from .predictor import PredictorConfig
from .sim import EpisodeConfig

PLATFORMS = ("quad", "blimp")
CONTROLLERS = ("NR", "NMPC", "FBL")

_BLIMP_BOX = dict(u_min=[-0.2, -0.2, -0.2, -0.02], u_max=[0.2, 0.2, 0.2, 0.02])


def _quad_defaults(m, g):
    hover = m * g
    box = dict(u_min=[0.0, -3.0, -3.0, -3.0], u_max=[2.0 * hover, 3.0, 3.0, 3.0])
    return {
        "params": {"m": m, "g": g},
        "episode": {"control_rate": 100.0, "sim_substeps": 10, "deadline_budget": 0.010},
        "NR": {
            "alpha": 10.0, "gamma": 20.0, "lam": 0.0, "sigma_min": 1e-6,
            "predictor": {"T": 0.8, "n_steps": 8, "jacobian_mode": "dual", "fd_step": 1e-6},
            **box,
        },
        "NMPC": {
            "N": 20, "dt": 0.05, "Q": 10.0, "R": 0.1, "u_ref": [hover, 0.0, 0.0, 0.0],
            "max_iters": 10, "cost_tol": 1e-6, "warm_start": True, "iteration_cap": None,
            **box,
        },
    }


def _blimp_defaults():
    return {
        "params": {},
        "episode": {"control_rate": 40.0, "sim_substeps": 10, "deadline_budget": 0.025},
        "NR": {
            "alpha": 4.0, "gamma": 10.0, "lam": 0.0, "sigma_min": 1e-6,
            "predictor": {"T": 1.0, "n_steps": 4, "jacobian_mode": "dual", "fd_step": 1e-6},
            **_BLIMP_BOX,
        },
        "NMPC": {
            "N": 30, "dt": 0.1, "Q": 10.0, "R": 1.0, "u_ref": [0.0, 0.0, 0.0, 0.0],
            "max_iters": 10, "cost_tol": 1e-6, "warm_start": True, "iteration_cap": None,
            **_BLIMP_BOX,
        },
        "FBL": {"k1": 1.0, "k2": 2.0, "cond_max": 1e8, **_BLIMP_BOX},
    }


def defaults(platform, params=None):
    """Default settings block for ``platform``.

    Quadrotor input boxes and the NMPC effort reference scale with the
    hover thrust of the given mass parameters.
    """
    if platform == "quad":
        base = QuadrotorParams(**(params or {}))
        return _quad_defaults(base.m, base.g)
    if platform == "blimp":
        return _blimp_defaults()
    raise ValueError(f"unknown platform {platform!r}")


def nr_config(block):
    block = dict(block)
    block["predictor"] = PredictorConfig(**block.get("predictor", {}))
    return NRConfig(**block)


def make_controller(platform, name, plant, block, dt_ctrl):
    """Instantiate controller ``name`` from a fully resolved settings block."""
    if name == "NR":
        return NRController(plant, nr_config(block), dt_ctrl)
    if name == "NMPC":
        return NMPCController(plant, NMPCConfig(**block))
    if name == "FBL":
        if platform != "blimp":
            raise ValueError("the FBL baseline pairs with the blimp only")
        return FBLController(plant, FBLConfig(**block))
    raise ValueError(f"unknown controller {name!r}")


def make_episode(block, seed=0):
    return EpisodeConfig(**{**block, "seed": seed})
