"""Newton-Raphson flow tracking control for quadrotor and blimp models,
with feedback-linearization and NMPC baselines and a timing-aware
closed-loop simulation harness."""
from .base import ControlOutput, Controller
from .baselines import (
    FBLConfig, FBLController, NMPCConfig, NMPCController, fbl_control, fbl_decompose,
    nmpc_solve,
)
from .exceptions import (
    ConfigError, EmptyWindow, EpisodeDiverged, NoDescent, NonFiniteJacobian, NonPDMass,
    NotLinearizable, NRFlowError, OutOfWindow, SingularAttitude, SingularJacobian,
)
from .models import (
    Blimp, BlimpParams, LinearPlant, Memoryless, Quadrotor, QuadrotorParams, blimp_f,
    euler_rates, make_plant, memoryless_eval, quad_f, wrap_angle,
)
from .nr import NRConfig, NRController, NRState, icbf_filter, nr_rate, nr_rate_memoryless, step
from .predictor import (
    PredictorConfig, output_jacobian, predict_output, predict_state, predict_with_jacobian,
)
from .sim import EpisodeConfig, EpisodeLog, rmse, run_episode, summarize, timing_stats
from .trajectories import KINDS, ReferenceSample, Trajectory, TrajectorySpec, lookahead, sample

__version__ = "0.1.0"
