"""Application constants and enums."""

from enum import Enum


# Plot palette (dark theme, shared with the SVG plot canvas)
COLORS = {
    'background': '#252526',
    'surface': '#2d2d2d',
    'grid': '#3c3c3c',
    'text': '#cccccc',
    'text_secondary': '#969696',

    # One color per series / policy
    'active': '#007acc',
    'uniform': '#c42b1c',
    'random': '#d7ba7d',
    'estimated': '#007acc',
    'baseline': '#969696',
}


class ObjectKind(str, Enum):
    """Kinds of planar objects the simulator and filter handle."""
    HOMOGENEOUS = 'homogeneous'
    HETEROGENEOUS = 'heterogeneous'
    ARTICULATED = 'articulated'


class ActionKind(str, Enum):
    """Exploratory interaction types."""
    PUSH = 'push'
    PULL = 'pull'


class Policy(str, Enum):
    """Selection strategies for views and actions."""
    ACTIVE = 'active'
    UNIFORM = 'uniform'
    RANDOM = 'random'


# --- Superquadric geometry -------------------------------------------------

EPS_MIN = 0.1
EPS_MAX = 2.0
KAPPA1_BOUNDS = (-1.0, 1.0)
KAPPA2_BOUNDS = (0.0, 1.0)
SCALE_MIN = 1e-3

# Quadrature grid of the spherical-product parameterization
AREA_GRID = 128
# Cells used to drive area-uniform surface sampling
SAMPLING_GRID = (128, 256)

PROJECTION_SEEDS = 64
PROJECTION_TOL = 1e-7


# --- Shape fitting -----------------------------------------------------------

OUTLIER_PROB = 0.1
EM_PARAM_TOL = 1e-3
EM_MAX_ITER = 200
EM_STAGNATION_TOL = 1e-4
EM_STAGNATION_PATIENCE = 3
SWITCH_TRIAL_ITER = 5
M_STEP_FD_STEP = 1e-5
M_STEP_MAX_ITER = 8
M_STEP_ROUNDS = 3
M_STEP_AREA_GRID = 64
FIT_MAX_POINTS = 1500
MAX_SWITCHES = 2
SIGMA2_MIN = 1e-8
MIN_FIT_POINTS = 50
OUTLIER_THRESHOLD_POINTS = 100
CLUSTER_RADIUS = 0.02
MAX_SQ_FITS = 8


# --- Active view -------------------------------------------------------------

CAMERA_WIDTH = 640
CAMERA_HEIGHT = 480
CAMERA_FOCAL = 525.0
NUM_CANDIDATE_VIEWS = 64
VIEW_RADIUS_MARGIN = 0.3
ENTROPY_P_MIN = 1e-3
ENTROPY_SIGMA_FLOOR = 0.02
ENTROPY_THRESHOLD = 0.05
ENTROPY_REFIT_SLACK = 1e-3
MAX_VIEWS = 8
ENTROPY_SAMPLES = 1500
ICP_MAX_ITER = 50
ICP_MIN_OVERLAP = 0.3
ICP_DIVERGENCE_PATIENCE = 3


# --- Simulator -----------------------------------------------------------------

GRAVITY = 9.81
DT = 1.0 / 15.0
HORIZON_STEPS = 75
MAX_SPEED = 0.025
PUSH_SPEED = 0.02
ROBOT_FRICTION = 0.3
CHAR_LENGTH_RATIO = 0.6
GRIPPER_SPAN = 0.085
ROBOT_FOOTPRINT_RADIUS = 0.04
FIXED_POINT_MAX_ITER = 50
FIXED_POINT_TOL = 1e-10

# Heteroscedastic noise generator
VISUAL_NOISE_BASE = 0.02
VISUAL_NOISE_OCCLUSION = 0.10
TACTILE_NOISE_BASE = 0.01
TACTILE_NOISE_SLIP = 0.05

# Overhead observation camera
OBS_IMAGE_SIZE = 64
OBS_CAMERA_HEIGHT = 0.9
OBS_CAMERA_FOCAL = 96.0
OBS_DEPTH_NEAR = 0.5
OBS_DEPTH_FAR = 1.0
OBS_VECTOR_SIZE = OBS_IMAGE_SIZE * OBS_IMAGE_SIZE + 2


# --- Networks / training ---------------------------------------------------------

HIDDEN_WIDTH = 64
EDGE_DIM = 16
NODE_DIM = 9
LEARNING_RATE = 1e-3
BUFFER_CAPACITY = 300
ACTIONS_PER_ROUND = 5
SEGMENTS_PER_TRAJECTORY = 3
PLATEAU_EPOCHS = 5
PLATEAU_IMPROVEMENT = 0.01
INTERACTION_BUDGET = 500
MAX_EPOCHS_PER_ROUND = 50
BATCH_SIZE = 8
GRAD_CLIP_NORM = 10.0
VALIDATION_INTERACTIONS = 2
DEFAULT_ROBOT_MASS = 1.0
ACTION_ENCODING_DIM = 5
VARIANCE_FLOOR = 1e-6
INITIAL_VISUAL_VAR = 2.5e-3
INITIAL_TACTILE_VAR = 1e-4
CONV_CHANNELS = (8, 16, 16)
TACTILE_NOISE_HIDDEN = 32


# --- Dual filter -------------------------------------------------------------------

NUM_SIGMA_POINTS = 100
KERNEL_SHRINKAGE = 0.01
COV_JITTER = 1e-9
INFLATION_ON_SKIP = 1.05

PARAM_MASS_BOUNDS = (0.0, 5.0)
PARAM_FRICTION_BOUNDS = (0.0, 1.0)
PARAM_JOINT_BOUNDS = (0.0, 1.0)

PRIOR_POSE_STD = (0.01, 0.01, 0.0872664626)
PRIOR_TWIST_STD = 1e-3
PRIOR_MASS = 1.0
PRIOR_FRICTION = 0.4
PRIOR_COM = 0.0
PRIOR_JOINT = 0.5
PRIOR_PARAM_STD = (0.5, 0.2, 0.02, 0.25)

PROCESS_NOISE_POSITION = 1e-6
PROCESS_NOISE_ANGLE = 1e-5
PROCESS_NOISE_TWIST = 1e-6

# Fixed observation noise of the analytical baseline (std)
ANALYTICAL_VISUAL_STD = 0.05
ANALYTICAL_TACTILE_STD = 0.05


# --- Active exploration ------------------------------------------------------------

AFFORDANCE_CANDIDATES = 32
DIRECTION_JITTER_DEG = 5.0
IG_LOOKAHEAD_STEPS = 38
PULL_Y_THRESHOLD = 0.3

CEM_SAMPLES = 32
CEM_ROUNDS = 5
CEM_ELITE_FRACTION = 0.1
CEM_SEGMENT_STEPS = 15
CEM_HORIZON = 2
CEM_GOAL_TOLERANCE = 1e-4
CEM_DIRECTION_RANGE_DEG = 20.0
CEM_ANGLE_WEIGHT = 0.01
CEM_MAX_EXECUTIONS = 10
DEFAULT_GOAL = (0.5, 0.1, 0.0)

CHANGE_WINDOW = 8
CHANGE_RATIO = 0.5
CALIBRATION_SECONDS = 1.0


# --- Object set --------------------------------------------------------------------

OBJECTS_PER_KIND = 40
MASS_RANGE = (0.2, 2.0)
FRICTION_RANGE = (0.1, 0.6)
JOINT_FRICTION_RANGE = (0.0, 0.8)
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


# Valid point cloud extensions
VALID_CLOUD_EXTENSIONS = ['.txt', '.xyz', '.pts']

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

SEED_ENV_VAR = 'PUSHFILTER_SEED'
