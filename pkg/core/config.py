"""Configuration management for bpire-lab."""

from typing import Literal, Optional, Tuple

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULT_EXACT_THRESHOLD = 2 ** 62


class LabSettings(BaseSettings):
    """Process-wide defaults for simulations and experiment runs.

    Settings can be provided via environment variables prefixed with
    ``BPIRE_LAB_`` or through a ``.env`` file. Values from an experiment
    config file and from command-line flags take precedence.
    """

    model_config = SettingsConfigDict(
        env_prefix="BPIRE_LAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Output
    out_dir: str = "results"

    # Numerics
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    criticality_tolerance: float = 1e-12

    # Execution
    workers: int = 1
    chunk_size: int = 1000
    max_path_cells: int = 50_000_000

    # Statistics
    decision_band: Tuple[float, float] = (0.2, 0.8)
    significance: float = 0.01

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    @field_validator("exact_threshold")
    @classmethod
    def _threshold_in_int64(cls, value: int) -> int:
        if not 2 <= value <= 2 ** 62:
            raise ValueError("exact_threshold must lie in [2, 2**62]")
        return value

    @field_validator("workers", "chunk_size")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    def resolve_out_dir(self, override: Optional[str] = None) -> str:
        """Pick the output directory, preferring an explicit override.

        Args:
            override: Directory given on the command line or in the config

        Returns:
            Directory path to write artifacts into
        """
        return override or self.out_dir
