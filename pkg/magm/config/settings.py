"""
Configuration settings for magm.
"""

import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Load environment variables from .env file
load_dotenv()

# Base paths
BASE_DIR = Path(__file__).resolve().parent.parent.parent
DATA_DIR = Path(os.getenv("MAGM_DATA_DIR", str(BASE_DIR / "data")))
LOGS_DIR = Path(os.getenv("MAGM_LOGS_DIR", str(BASE_DIR / "logs")))

# Environment variables
LOG_LEVEL = os.getenv("MAGM_LOG_LEVEL", "INFO")
JOBS = int(os.getenv("MAGM_JOBS", "1"))
TRACY_SINGH_CAP = int(os.getenv("MAGM_TRACY_SINGH_CAP", "1000000"))
DIAGNOSTIC_MAX_DIM = int(os.getenv("MAGM_DIAGNOSTIC_MAX_DIM", "20"))
HESSIAN_MAX_DIM = int(os.getenv("MAGM_HESSIAN_MAX_DIM", "12"))
DEBUG_CHECKS = os.getenv("MAGM_DEBUG_CHECKS", "false").lower() in ("1", "true", "yes")


class AppConfig(BaseModel):
    """Application configuration."""

    # Path settings
    base_dir: Path = Field(default=BASE_DIR)
    data_dir: Path = Field(default=DATA_DIR)
    logs_dir: Path = Field(default=LOGS_DIR)

    # Logging and execution
    log_level: str = Field(default=LOG_LEVEL, description="Console log level.")
    jobs: int = Field(default=JOBS, ge=1, description="Default worker count for grid and run fan-out.")

    # Resource caps for dense Kronecker-type constructions
    tracy_singh_cap: int = Field(
        default=TRACY_SINGH_CAP, gt=0, description="Maximum number of output entries, (mp)^4, of a Tracy-Singh product."
    )
    diagnostic_max_dim: int = Field(
        default=DIAGNOSTIC_MAX_DIM, gt=0, description="Largest mp accepted by the irrepresentability check."
    )
    hessian_max_dim: int = Field(
        default=HESSIAN_MAX_DIM, gt=0, description="Largest mp accepted by the Hessian convexity check."
    )

    # Solver
    debug_checks: bool = Field(
        default=DEBUG_CHECKS, description="Assert positive definiteness of every ADMM Omega-update."
    )


# Default configuration
config = AppConfig()


def get_config() -> AppConfig:
    """Get the application configuration."""
    return config
