"""Desk-scale hard-real-time robot control stack.

A binary UDP wire protocol with CRC framing and multi-version field
skipping, a watchdog-guarded session state machine, a callback-driven
client SDK with command guards, a 7-DoF kinematic model of the LBR family,
and a simulated controller that closes the loop without hardware.
"""

from .client import (
    ClientCallbacks,
    ClientCore,
    CommandGuardConfig,
    ExponentialFilter,
    UdpClient,
    cartesian_pose_command,
    dispatch,
    echo_command,
    filter_step,
    guard_command,
    position_command,
    torque_command,
    wrench_command,
)
from .model import Pose, RobotVariant, forward_kinematics, jacobian, list_variants, load_variant, pose_error
from .session import (
    Action,
    ConnectionQuality,
    Outcome,
    QualityMonitor,
    ServerSession,
    WatchdogConfig,
    answer_outcome,
    classify_quality,
    step_client,
    step_server,
)
from .simulator import SimConfig, SimState, SimulatorCore, inject_disturbance, step_dynamics
from .wire import (
    CommandMessage,
    CommandMode,
    FrameHeader,
    MessageType,
    MonitorMessage,
    SessionState,
    decode_frame,
    encode_frame,
    negotiate_version,
    supported_modes,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ClientCallbacks",
    "ClientCore",
    "CommandGuardConfig",
    "CommandMessage",
    "CommandMode",
    "ConnectionQuality",
    "ExponentialFilter",
    "FrameHeader",
    "MessageType",
    "MonitorMessage",
    "Outcome",
    "Pose",
    "QualityMonitor",
    "RobotVariant",
    "ServerSession",
    "SessionState",
    "SimConfig",
    "SimState",
    "SimulatorCore",
    "UdpClient",
    "WatchdogConfig",
    "answer_outcome",
    "cartesian_pose_command",
    "classify_quality",
    "decode_frame",
    "dispatch",
    "echo_command",
    "encode_frame",
    "filter_step",
    "forward_kinematics",
    "guard_command",
    "inject_disturbance",
    "jacobian",
    "list_variants",
    "load_variant",
    "negotiate_version",
    "pose_error",
    "position_command",
    "step_client",
    "step_dynamics",
    "step_server",
    "supported_modes",
    "torque_command",
    "wrench_command",
    "__version__",
]
