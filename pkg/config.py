import os
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv

# Load environment variables from .env file
load_dotenv()

TOOLKIT_VERSION = "0.3.0"

# Runtime
DATA_CACHE_DIR = os.getenv(
    "SKELAUG_DATA_DIR", os.path.join(os.path.expanduser("~"), ".cache", "skelaug")
)
LOG_LEVEL = os.getenv("SKELAUG_LOG_LEVEL", "INFO")
JOBS = int(os.getenv("SKELAUG_JOBS", "1"))

# Data preparation
SAVGOL_WINDOW = 7
SAVGOL_ORDER = 3
SHREC_JOINTS = 22
MSR_JOINTS = 20

# Classical augmentation
AUG_MULTIPLIER = 4
SHREC_NOISE_JOINTS = (1, 8)
MSR_NOISE_JOINTS = (1, 4)

# Generative augmentation
GAN_HIDDEN = 512
GAN_BATCH = 64
GAN_LAMBDA_CYCLE = 10.0
GAN_LAMBDA_IDENTITY = 5.0
GAN_NOISE_SIGMA = 0.01
GAN_LR = 2e-4
GAN_BETA1 = 0.5
GAN_MAX_EPOCHS = 200
GAN_CONVERGENCE_WINDOW = 10
GAN_CONVERGENCE_TOL = 1e-3
GAN_PER_SAMPLE = 4
ABLATION_HIDDEN_UNITS = (64, 128, 256, 512)

# Recognition
RECOGNIZER_LR = 1e-4
RECOGNIZER_BATCH = 64
RECOGNIZER_MAX_EPOCHS = 200
PLATEAU_PATIENCE = 3
EARLY_STOP_PATIENCE = 5
PLATEAU_FACTOR = 0.5
IMPROVEMENT_THRESHOLD = 1e-4
LATENT_DIM = 512
LSTM_HIDDEN = 512

# Evaluation
SEEDS = (0, 1, 2, 3)
COARSE_GRID = {
    "sigma_scale": (0.1, 0.15, 0.2, 0.25, 0.3),
    "sigma_shift": (0.1, 0.15, 0.2, 0.25, 0.3),
    "sigma_noise": (0.1, 0.2, 0.3),
}
FINE_GRID = {
    "sigma_scale": (0.1, 0.12, 0.14, 0.18, 0.2),
    "sigma_shift": (0.1, 0.12, 0.14, 0.18, 0.2),
    "sigma_noise": (0.05, 0.1, 0.15),
}
PCA_KEEP = 50
TSNE_PERPLEXITY = 30.0
TSNE_ITERATIONS = 1000
TSNE_EXAGGERATION = 12.0
TSNE_EXAGGERATION_ITERS = 250
TSNE_LEARNING_RATE = 200.0


def read_config_file(path: Optional[str]) -> Dict[str, str]:
    """
    Read a KEY=value configuration file.

    Keys are upper-cased CLI option names with '_' for '-', e.g. HIDDEN=256.

    Raises:
        FileNotFoundError: If path is given but does not exist
    """
    if not path:
        return {}
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    values = dotenv_values(path)
    return {key.upper(): value for key, value in values.items() if value is not None}
