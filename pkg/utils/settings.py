import os
import logging
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

from utils.errors import ConfigError

# Load environment variables
load_dotenv()

LOG_LEVELS = {
    "error": logging.ERROR,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class Settings(BaseModel):
    """Process-wide settings resolved from the environment"""
    log_level: str = "info"
    threads: int = Field(default=1, ge=1)
    brute_force_limit: int = Field(default=10, ge=2)
    fitness_cap: int = Field(default=24, ge=1)


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")


def get_settings() -> Settings:
    """Factory function to create Settings from environment"""
    log_level = os.getenv("GIAUG_LOG", "info").strip().lower()
    if log_level not in LOG_LEVELS:
        raise ConfigError(
            f"GIAUG_LOG must be one of {sorted(LOG_LEVELS)}, got {log_level!r}"
        )

    try:
        return Settings(
            log_level=log_level,
            threads=_int_env("GIAUG_THREADS", 1),
            brute_force_limit=_int_env("GIAUG_BRUTE_FORCE_LIMIT", 10),
            fitness_cap=_int_env("GIAUG_FITNESS_CAP", 24),
        )
    except ValueError as e:
        raise ConfigError(f"Invalid settings: {str(e)}")


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once per process"""
    name = (level or get_settings().log_level).lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(name, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
