"""Numeric and file-format constants"""

# Dense solvers
DEFAULT_TOL = 1e-8
DIVERGENCE_LIMIT = 1e12
MAX_SWEEPS = 10000

# Copositivity grid search
COPOSITIVE_MAX_N = 12
COPOSITIVE_SLACK = 1e-12

# Dense expansion
DENSE_MAX_VARIABLES = 4096

# Stick-figure skeleton, labelled keypoints come first.
# Mirrored pairs sit next to each other so small keypoint counts still
# contain left/right confusable parts.
JOINTS = [
    "l_foot", "r_foot",
    "l_hand", "r_hand",
    "l_knee", "r_knee",
    "l_elbow", "r_elbow",
    "head", "neck", "pelvis",
]

LIMBS = [
    ("head", "neck"),
    ("neck", "pelvis"),
    ("neck", "l_elbow"), ("l_elbow", "l_hand"),
    ("neck", "r_elbow"), ("r_elbow", "r_hand"),
    ("pelvis", "l_knee"), ("l_knee", "l_foot"),
    ("pelvis", "r_knee"), ("r_knee", "r_foot"),
]

# Render intensities (0-255)
BODY_GRAY = 230
LEFT_GRAY = 230
RIGHT_GRAY = 120
SUPERSAMPLE = 4
LINE_WIDTH = 2

# Binary formats
DATASET_MAGIC = b"RGDS"
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b"RGCK"
CHECKPOINT_VERSION = 1

# Exit codes
EXIT_RUNTIME = 1
EXIT_USAGE = 2
