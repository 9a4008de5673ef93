"""Application configuration"""
from pathlib import Path

# Application Info
APP_NAME = "rgnet"
APP_VERSION = "1.0.0"

# Paths
BASE_DIR = Path(__file__).parent
CONFIGS_DIR = BASE_DIR / "configs"
DEFAULT_CONFIG_PATH = CONFIGS_DIR / "default.env"

# Environment overrides for run-config keys, e.g. RGNET_SEED=3
ENV_PREFIX = "RGNET_"

# Architecture (56x56 input, three NMS layers, 7x7 top layer)
DEFAULT_INPUT_CHANNELS = 1
DEFAULT_IMAGE_SIZE = 56
DEFAULT_N_KEYPOINTS = 4
DEFAULT_LAYERS = "8/3/1/2x2,16/3/2/2x2,16/3/2/2x2,16/7/2/-"
DEFAULT_TAPS = "3,2"          # coarse to fine; the coarse head always sits on the top layer
DEFAULT_COARSE_SIZE = 7

# Training
DEFAULT_LEARNING_RATE = 0.2
DEFAULT_MOMENTUM = 0.9
DEFAULT_WEIGHT_DECAY = 5e-4
DEFAULT_BATCH_SIZE = 10
DEFAULT_EPOCHS = 5
DEFAULT_K = 2
DEFAULT_LR_DECAY_PER_FINER_SCALE = 2.0
DEFAULT_POSITIVE_RADIUS = 1.0
DEFAULT_SEED = 0
DEFAULT_INIT_SCALE = 1.0

# Synthetic data
DEFAULT_N_SAMPLES = 200
DEFAULT_OCCLUSION_RATE = 0.3
DEFAULT_AMBIGUITY = 1.0
DEFAULT_NOISE_STD = 0.05

# Inference / evaluation
DEFAULT_VISIBILITY_THRESHOLD = 0.5
DEFAULT_PCK_ALPHAS = [0.05, 0.1, 0.2]
PCK_CURVE_ALPHAS = [round(0.01 * i, 2) for i in range(1, 31)]
TARGET_PRECISION = 0.8
