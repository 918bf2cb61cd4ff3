"""
Configuration management for taro-lab
"""
import os
from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process settings loaded from environment variables"""

    # Parallelism
    TARO_THREADS: Optional[int] = None

    # Logging
    LOG_LEVEL: str = "INFO"
    DEBUG: bool = False

    # Run artifacts
    CHECKPOINT_FILENAME: str = "checkpoint.json"
    METRICS_FILENAME: str = "metrics.jsonl"
    SUMMARY_FILENAME: str = "summary.json"

    # Data directory layout
    TRAIN_CSV: str = "train.csv"
    TEST_CSV: str = "test.csv"
    DATASET_SPEC_FILENAME: str = "spec.json"

    @field_validator("TARO_THREADS")
    @classmethod
    def validate_threads(cls, v):
        """Reject non-positive thread caps"""
        if v is not None and v < 1:
            raise ValueError("TARO_THREADS must be at least 1")
        return v

    @property
    def threads(self) -> int:
        """Effective worker count (all cores when TARO_THREADS is unset)"""
        return self.TARO_THREADS or os.cpu_count() or 1

    class Config:
        env_file = ".env"
        case_sensitive = True


# Global settings instance
settings = Settings()
