import logging
import os
import importlib.resources
from pathlib import Path

PACKAGE_NAME = "crackSeg"

package_root_path = importlib.resources.files(PACKAGE_NAME)
DEFAULTS_YAML: Path = (package_root_path / "config/defaults.yaml").resolve()
TEMPLATES_PATH: Path = (package_root_path / "reporting/templates").resolve()

# Initialize logger
logger = logging.getLogger(PACKAGE_NAME)
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

# Checkpoint format
CHECKPOINT_MAGIC = b"CRKSEG01"
CHECKPOINT_SUFFIX = ".ckpt"

# Threads
THREADS_ENV_VAR = "CRACKSEG_THREADS"
DEFAULT_THREADS = 1

# CLI exit codes
EXIT_OK = 0
EXIT_NUMERIC_FAILURE = 1
EXIT_INPUT_ERROR = 2

# Batch normalization
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# AdamW
ADAMW_BETA1 = 0.9
ADAMW_BETA2 = 0.999
ADAMW_EPS = 1e-8
ADAMW_WEIGHT_DECAY = 0.01

# One-cycle schedule
ONE_CYCLE_MIN_FRAC = 0.05
ONE_CYCLE_WARM_FRAC = 0.4
ONE_CYCLE_FINAL_FRAC = 0.001

# Layer-group learning-rate ratio 1/9 : 1/3 : 1
GROUP_SCALES = (1.0 / 9.0, 1.0 / 3.0, 1.0)

# Loss and evaluation
DICE_EPS = 1e-7
BINARIZE_THRESHOLD = 0.5
DEFAULT_TOLERANCE_RADIUS = 2
MASK_THRESHOLD = 127

# Data
DEFAULT_SIZES = (128, 256, 320)
SIZE_MULTIPLE = 32
TRAIN_RATIO = 0.6
IMAGES_DIR_NAME = "images"
MASKS_DIR_NAME = "masks"
TRAIN_MANIFEST = "train.txt"
TEST_MANIFEST = "test.txt"
RUN_CONFIG_YAML = "run_config.yaml"
PREFETCH_DEPTH = 2

# Gradient checking
GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-4


def configure_logging(level: int = logging.INFO, log_file: str | None = None) -> logging.Logger:
    """
    Attach a stream handler (and optionally a file handler) to the package logger.

    Args:
        level (int): Logging level for the package logger.
        log_file (str, optional): Extra file that receives the same records.

    Returns:
        logging.Logger: The configured package logger.
    """
    formatter = logging.Formatter(LOG_FORMAT)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    logger.setLevel(level)
    return logger


def resolve_threads(flag_value: int | None = None) -> int:
    """Thread count from the `--threads` flag, falling back to `CRACKSEG_THREADS`."""
    if flag_value is not None:
        return max(1, int(flag_value))
    env_value = os.environ.get(THREADS_ENV_VAR)
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={env_value!r}.")
    return DEFAULT_THREADS
