"""Shared fixtures for the bpire-lab test suite."""

import math
from pathlib import Path

import pytest
import yaml

from core.config import LabSettings
from schemas.models import ConstantMLaw, FiniteMLaw
from tools.env import coin_spec, fixed_p_spec, heavy_tail_example_spec
from tools.streams import StreamFactory


@pytest.fixture
def within_sigma():
    """Whether a binomial count lies within k standard deviations of trials * p."""
    def check(successes: int, trials: int, p: float, k: float = 4.0) -> bool:
        sd = math.sqrt(trials * p * (1.0 - p))
        return abs(successes - trials * p) <= k * sd + 1e-12
    return check


@pytest.fixture
def streams():
    return StreamFactory(20240517)


@pytest.fixture
def coin():
    """mu in {1/2, 2}, no immigration."""
    return coin_spec()


@pytest.fixture
def subcritical_spec():
    """Geometric offspring with p = 1/3 (mean 1/2) and one immigrant per generation."""
    return fixed_p_spec(1.0 / 3.0, ConstantMLaw(value=1))


@pytest.fixture
def bounded_cookie_spec():
    """p fixed at 1/3, M in {0, 1}: every excursion can be coupled."""
    return fixed_p_spec(1.0 / 3.0, FiniteMLaw(values=[0, 1], weights=[0.5, 0.5]))


@pytest.fixture
def heavy_spec():
    def build(lam: float):
        return heavy_tail_example_spec(lam)
    return build


@pytest.fixture
def settings(tmp_path):
    return LabSettings(out_dir=str(tmp_path / "results"), log_level="WARNING", chunk_size=50)


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping to a YAML file and return its path."""
    def write(document: dict, name: str = "experiment.yaml") -> str:
        path = Path(tmp_path) / name
        path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
        return str(path)
    return write
