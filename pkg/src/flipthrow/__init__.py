"""flipthrow: closed-loop quadrotor flip-and-throw simulation stack.

Modules: dynamics (coupled quad + slung probe on SO(3) x S^2), mpc
(receding-horizon thrust controller with in-house SQP/box-QP solver),
attitude (geometric attitude pipeline), mission (phase machine + throw
planner + release), sim/simconfig/cli (closed-loop driver, config, CLI).
A compiled integration kernel is used when available; set FLIPTHROW_PURE=1
to force the numpy fallback.
"""

from ._backend import backend_name
from .attitude import (
    AttitudeCmd,
    AttitudeGains,
    attitude_command,
    attitude_error,
    body_rate_command,
    desired_attitude,
)
from .dynamics import (
    ControlInput,
    Params,
    PayloadState,
    QuadState,
    StateDerivative,
    SystemState,
    derivative,
    hat,
    kinetic_energy,
    linearize,
    potential_energy,
    probe_position,
    probe_velocity,
    step,
    total_energy,
    vee,
)
from .errors import (
    ConfigError,
    DegenerateThrustError,
    FlipthrowError,
    NoFeasibleHistoryError,
    NotSkewError,
    ProbeNotAttachedError,
    SimDivergedError,
    SingularYawError,
    UnreachableRangeError,
)
from .mission import (
    MissionPhase,
    MissionProfile,
    MissionTolerances,
    PhaseName,
    ProbeBallisticState,
    ReferenceSet,
    ThrowPlan,
    mission_step,
    projectile_range,
    release_probe,
    release_speed_from_pitch_rate,
    solve_throw_params,
)
from .mpc import (
    MpcConfig,
    MpcProblem,
    MpcSolution,
    MpcStatus,
    cost,
    fallback,
    predict,
    solve,
)
from .sim import LogRecord, SimReport, run, write_logs
from .simconfig import SimConfig, config_from_dict, load_config

__version__ = "0.1.0"
