"""
Central process-level settings for the LGE lab.
Loads environment variables and provides typed access to settings.
"""

import os
from dotenv import load_dotenv
from typing import Literal, Optional

import torch

load_dotenv()


# ==========================================
# Output Configuration
# ==========================================

OUTPUT_ROOT = os.getenv("LGE_OUTPUT_ROOT", "runs")

if not OUTPUT_ROOT:
    raise ValueError("LGE_OUTPUT_ROOT must not be empty")


# ==========================================
# Numerical Precision
# ==========================================

Precision = Literal["float32", "float64"]

PRECISION: Precision = os.getenv("LGE_PRECISION", "float32")  # float64 is forced for grad checks

VALID_PRECISIONS = ["float32", "float64"]
if PRECISION not in VALID_PRECISIONS:
    raise ValueError(f"LGE_PRECISION must be one of {VALID_PRECISIONS}, got: {PRECISION}")


def get_dtype(precision: Optional[Precision] = None) -> torch.dtype:
    """Map a precision name to the torch dtype used for parameters"""
    selected = precision or PRECISION
    if selected not in VALID_PRECISIONS:
        raise ValueError(f"Unknown precision: {selected}")
    return torch.float64 if selected == "float64" else torch.float32


# ==========================================
# Application Settings
# ==========================================

# Environment
ENVIRONMENT = os.getenv("ENVIRONMENT", "development")  # development, ci

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s  [%(levelname)s]  %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

# Feature Flags
DETERMINISTIC = os.getenv("LGE_DETERMINISTIC", "false").lower() == "true"


# ==========================================
# Helper Functions
# ==========================================

def get_config_summary() -> dict:
    """Return a summary of the process settings"""
    return {
        "environment": ENVIRONMENT,
        "output_root": OUTPUT_ROOT,
        "precision": PRECISION,
        "deterministic": DETERMINISTIC,
        "log_level": LOG_LEVEL,
        "torch_version": torch.__version__,
    }
