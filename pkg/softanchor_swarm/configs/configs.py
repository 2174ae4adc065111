"""Set all calibration constants, defaults and paths.

Lengths that come from the hardware characterization are kept in millimetres
here (``*_MM``) and converted to SI where they are consumed.
"""

from pathlib import Path

DEFAULT_SEED = 20240
OUTPUT_DIR_NAME = "runs"
output_dir = Path.cwd() / OUTPUT_DIR_NAME

# Robot body
BODY_WIDTH_MM = 50.0
BODY_DEPTH_MM = 50.0
ANCHOR_LENGTH_MM = 6.0
OPENING_DEPTH_MM = 5.0
MOUTH_HALF_WIDTH_MM = 3.0
RIM_FRICTION = 0.5  # tangential over normal approach below which the head sticks on the rim
ROBOT_MASS_KG = 0.068

# Actuation
MAX_PUSH_FORCE_N = 0.5
PUSH_SATURATION_SPEED = 0.003  # m/s of commanded closing speed giving full wheel force
V_MAX = 0.1
W_MAX = 2.0
V_DOT_MAX = 0.5
W_DOT_MAX = 5.0
V_MIN_RATIO = 0.25

# Anchor force profile (displacement mm -> force N)
FORWARD_KNOTS_MM = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
FORWARD_FORCES_N = (0.0, 0.11, 0.19, 0.12, 0.06, 0.04)
BACKWARD_KNOTS_MM = (0.0, 1.0, 2.0, 3.0, 4.0, 4.7, 5.0)
BACKWARD_FORCES_N = (0.0, 0.35, 0.5, 0.6, 0.6, 0.62, 0.25)
PULLOUT_DISPLACEMENT_MM = 3.0
SLIP_DISPLACEMENT_MM = 4.7
HOLDING_LOAD_KG = 0.5

# Floating joint
JOINT_TRAVEL_MM = 5.0
JOINT_YAW_LIMIT = 0.5
JOINT_LATERAL_SLACK_MM = 0.5
YAW_RELEASE_THRESHOLD = 0.25
RELEASE_WINDOW_S = 1.0

# Planning
EPSILON_MM = 3.0
DT = 0.1
PREDICTION_HORIZON = 5
CONSTRAINT_HORIZON = 3
ANGLE_COST_CAP = 1e6

# Wiggle decoupling
WIGGLE_V_BIAS = 0.02
WIGGLE_W_MAX = 0.6
WIGGLE_B = 2.5

# Experiments
SEPARATION_MM = 65.0
COUPLE_TIMEOUT_S = 60.0
DECOUPLE_TIMEOUT_S = 20.0
POSE_NOISE_MM = 1.0
HEADING_NOISE_RAD = 0.02
BENCH_ROBOT_COUNTS = (2, 4, 6, 8)
BENCH_HORIZONS = (3, 5, 10)


def mm(value: float) -> float:
    """Convert millimetres to metres.

    Args:
        value (float): Length in millimetres.

    Returns:
        float: Length in metres.
    """
    return value * 1e-3
