"""Shared fixtures for the MixIRT test suite."""

from __future__ import annotations

import os
from typing import Optional

import numpy as np
import pytest

from core.rng import RngStream
from engine.chain import ChainOutput, SamplerConfig
from model.state import MixtureParameters, ModelOptions, ResponseMatrix

RUN_SLOW = os.environ.get('MIXIRT_RUN_SLOW') == '1'


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="set MIXIRT_RUN_SLOW=1 to run slow statistical checks")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> RngStream:
    return RngStream(20240101)


@pytest.fixture
def tiny_responses() -> ResponseMatrix:
    """5 individuals × 3 items with one missing cell."""
    data = np.array([
        [1, 0, 1],
        [0, 0, 1],
        [1, 1, np.nan],
        [0, 1, 0],
        [1, 1, 1],
    ])
    return ResponseMatrix.from_array(data)


@pytest.fixture
def study1_mixture() -> MixtureParameters:
    return MixtureParameters(p=[0.8, 0.2], mu=[0.0, 2.5], sigma2=[1.0, 0.25])


@pytest.fixture
def config_dir(tmp_path, monkeypatch):
    path = tmp_path / 'config'
    monkeypatch.setenv('MIXIRT_CONFIG_DIR', str(path))
    return path


def make_chain(
    theta: np.ndarray,
    *,
    p: Optional[np.ndarray] = None,
    mu: Optional[np.ndarray] = None,
    sigma2: Optional[np.ndarray] = None,
    I: int = 2,
) -> ChainOutput:
    """A ``ChainOutput`` built from given θ (and optional mixture) draws."""
    theta = np.asarray(theta, dtype=float)
    R = theta.shape[0]
    p = np.ones((R, 1)) if p is None else np.asarray(p, dtype=float)
    mu = np.zeros_like(p) if mu is None else np.asarray(mu, dtype=float)
    sigma2 = np.ones_like(p) if sigma2 is None else np.asarray(sigma2, dtype=float)
    return ChainOutput(
        a=np.ones((R, I)), b=np.zeros((R, I)), c=np.full((R, I), 0.2),
        p=p, mu=mu, sigma2=sigma2, theta=theta,
        iterations=np.arange(1, R + 1),
        config=SamplerConfig(iterations=R, burn_in=0),
        options=ModelOptions(K=p.shape[1]),
    )
