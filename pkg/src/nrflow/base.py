"""Controller protocol shared by the NR controller and the baselines."""
from dataclasses import dataclass, field

import numpy as np

SINGULAR_JACOBIAN = "singular-jacobian"
NO_DESCENT = "no-descent"
DEADLINE_MISS = "deadline-miss"
TRUNCATED = "truncated"
NOT_LINEARIZABLE = "not-linearizable"
CRASH = "crash"


@dataclass
class ControlOutput:
    u: np.ndarray
    y_pred: np.ndarray = None
    flags: tuple = ()
    info: dict = field(default_factory=dict)


class Controller:
    """A stateful controller driven once per control tick.

    ``compute`` receives the tick time, the (possibly noisy) measured state
    and the reference trajectory, and returns the input to hold until the
    next tick.  Only the ``compute`` call is timed by the harness.
    """

    name = "controller"

    def reset(self, x0):
        pass

    def compute(self, t, x, traj):
        raise NotImplementedError

    def describe(self):
        return {"name": self.name}
