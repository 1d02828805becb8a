"""
Application settings and logging setup
"""
import logging
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()

# =================== Configuration ===================
SCHEMA_VERSION = 1
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class Settings(BaseSettings):
    """Environment-driven defaults (ENTANGLEOMETER_* variables or .env)"""

    model_config = SettingsConfigDict(env_prefix="ENTANGLEOMETER_", env_file=".env", extra="ignore")

    app_name: str = "Entangleometer"
    app_version: str = "1.0.0"
    log_level: str = Field("INFO", pattern="^(DEBUG|INFO|WARNING|ERROR|CRITICAL)$")
    output_dir: Path = Path("results")
    workers: int = Field(1, ge=1)
    default_seed: int = Field(20240101, ge=0)
    cors_origins: str = "http://localhost:3000,http://localhost:8000"

    @property
    def cors_origin_list(self) -> list:
        return [origin.strip() for origin in self.cors_origins.split(",") if origin.strip()]


@lru_cache
def get_settings() -> Settings:
    return Settings()


def setup_logging(level: str = None) -> None:
    """Configure the root logger once; later calls only adjust the level"""
    level = (level or get_settings().log_level).upper()
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=level, format=LOG_FORMAT)
    root.setLevel(level)
