'''
File: settings.py
Description: Project-wide settings for saddletail. Values can be overridden
through environment variables (or a local .env file).
'''

import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, default))


def _env_int(name: str, default: int) -> int:
    return int(float(os.getenv(name, default)))


PROJECT_ROOT = Path(__file__).parent.parent
RESULTS_DIR = Path(os.getenv("SADDLETAIL_RESULTS_DIR",
                             PROJECT_ROOT / "results"))

TOOL_VERSION = "0.3.0"
SCHEMA_VERSION = 1

LOG_LEVEL = os.getenv("SADDLETAIL_LOG_LEVEL", "WARNING")

# Simulation
DEFAULT_SEED = _env_int("SADDLETAIL_SEED", 0)
SIM_CHUNK_SIZE = _env_int("SADDLETAIL_SIM_CHUNK_SIZE", 16384)
MIN_SAMPLES = 100

# Exact lattice convolution
MAX_LATTICE_SUPPORT = _env_int("SADDLETAIL_MAX_LATTICE_SUPPORT", 10**7)

# Saddle-point solver
SADDLE_MAX_ITER = _env_int("SADDLETAIL_SADDLE_MAX_ITER", 200)
SADDLE_RTOL = _env_float("SADDLETAIL_SADDLE_RTOL", 1e-10)
LAMBDA_SERIES_RADIUS = _env_float("SADDLETAIL_LAMBDA_SERIES_RADIUS", 1e-3)
LAMBDA_DEGENERATE_RADIUS = _env_float("SADDLETAIL_LAMBDA_DEGENERATE_RADIUS",
                                      1e-8)
LEGENDRE_GRID_POINTS = _env_int("SADDLETAIL_LEGENDRE_GRID_POINTS", 2001)
LEGENDRE_AGREEMENT_TOL = 1e-6

# A sum S "exceeds" t only if S > t + EXCEEDANCE_RTOL * max(1, |t|)
EXCEEDANCE_RTOL = _env_float("SADDLETAIL_EXCEEDANCE_RTOL", 1e-9)

# Advisory regime checks flag a violation once the scaled quantity
# passes this limit
REGIME_LIMIT = _env_float("SADDLETAIL_REGIME_LIMIT", 1.0)
