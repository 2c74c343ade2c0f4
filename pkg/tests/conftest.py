'''
File: conftest.py
Project: nucpoint
File Created: Monday, 9th March 2026 10:40:12 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Tuesday, 17th March 2026 1:15:30 pm
Modified By: koko (koko231125@gmail.com>)
'''


import numpy as np
import pytest

from nucpoint.config import ClassifierConfig, DetectorConfig, EncoderConfig, JointConfig
from nucpoint.synthdata import DataSplit, SceneSpec


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec() -> SceneSpec:
    return SceneSpec(height=32, width=32, mean_count=3.0, min_separation=8.0, r_min=3.0, r_max=4.0)


@pytest.fixture
def tiny_split(tiny_spec: SceneSpec) -> DataSplit:
    return DataSplit.generate(tiny_spec, seed=7, n_train=4, n_test=2)


@pytest.fixture
def fast_detector() -> DetectorConfig:
    return DetectorConfig(epochs=2, batch_size=2, lr=0.01)


@pytest.fixture
def fast_encoder() -> EncoderConfig:
    return EncoderConfig(channels=4, width=4, stride=4, crop=16, pretrain_epochs=1, pretrain_batch=8)


@pytest.fixture
def fast_classifier() -> ClassifierConfig:
    return ClassifierConfig(epochs=2, batch_size=8, probe_epochs=2)


@pytest.fixture
def fast_joint() -> JointConfig:
    return JointConfig(epochs=2, batch_size=2, lr=0.01)
