import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """Process-level configuration for landscape-scan"""

    # Directories
    OUTPUT_DIR = os.getenv("CLPT_OUTPUT_DIR", "output")
    LOGS_DIR = os.getenv("CLPT_LOGS_DIR", "logs")
    EXPERIMENT_CONFIG_DIR = os.getenv("CLPT_CONFIG_DIR", "experiment_configs")

    # Execution
    WORKERS = int(os.getenv("CLPT_WORKERS", "1"))
    LOG_LEVEL = os.getenv("CLPT_LOG_LEVEL", "INFO")

    # Artifacts
    SCHEMA_VERSION = 1
    FLOAT_DIGITS = 12  # significant digits of every float written to disk

    AVAILABLE_METRICS = ["avg", "set", "prt"]
    AVAILABLE_PRESETS = ["desk", "paper"]

    @classmethod
    def validate(cls):
        """Validate the environment-derived settings"""
        if cls.WORKERS < 1:
            raise ValueError(f"CLPT_WORKERS must be >= 1, got {cls.WORKERS}")

        if cls.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown CLPT_LOG_LEVEL: {cls.LOG_LEVEL}")

        return True

    @classmethod
    def create_directories(cls, output_dir=None):
        """Create output and log directories if they don't exist"""
        for directory in [output_dir or cls.OUTPUT_DIR, cls.LOGS_DIR]:
            os.makedirs(directory, exist_ok=True)
