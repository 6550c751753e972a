from functools import lru_cache
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """
    Application settings with environment variable support.

    Every field can be overridden by an environment variable with the
    TREEPROBE_ prefix (e.g. TREEPROBE_THREADS=8) or from a .env file.
    """

    # Application settings
    log_level: str = "WARNING"
    environment: str = "development"  # development, production
    log_file: Optional[str] = None

    # Output
    output_dir: str = "."  # relative --output paths resolve here
    write_verify: bool = True  # re-read and checksum every written file

    # Trial parallelism (TREEPROBE_THREADS)
    threads: int = Field(default=1, ge=1)

    # Acceptance battery
    acceptance_trials: int = Field(default=200, ge=1)
    acceptance_scale: float = Field(default=1.0, gt=0.0, le=1.0)  # shrinks trial counts for CI

    model_config = {
        "env_prefix": "TREEPROBE_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }


@lru_cache()
def get_settings() -> Settings:
    return Settings()
