import os

DEFAULT_SEED: int = int(os.getenv("SKETCHLRF_SEED", "0"))
DEFAULT_CALIBRATION_C: float = float(os.getenv("SKETCHLRF_CALIBRATION_C", "4.0"))
ORACLE_CELL_CAP: int = int(os.getenv("SKETCHLRF_ORACLE_CELL_CAP", "1000000"))
LOG_LEVEL: str = os.getenv("SKETCHLRF_LOG_LEVEL", "INFO").upper()

SERVICE_URL: str = os.getenv("SKETCHLRF_URL", "http://sketchlrf:5000")
REQUEST_TIMEOUT: float = float(os.getenv("SKETCHLRF_REQUEST_TIMEOUT", "10"))
MAX_STREAMS: int = int(os.getenv("SKETCHLRF_MAX_STREAMS", "64"))
# testing only: lets callers pin private noise with "noise_seed"
ALLOW_PINNED_NOISE: bool = os.getenv("SKETCHLRF_ALLOW_PINNED_NOISE", "false").lower() in ("1", "true", "yes")

LOG_FORMAT: str = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
