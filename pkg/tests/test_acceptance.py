'''
File: test_acceptance.py
Project: nucpoint
File Created: Monday, 16th March 2026 8:40:27 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import csv
import json
from pathlib import Path

import pytest

import nucpoint.api as api
from nucpoint.config import RunConfig, parse_config
from nucpoint.detector import train_detector


pytestmark = pytest.mark.slow

FULL_SCALE = Path(__file__).resolve().parents[1] / 'configs' / 'full_scale.toml'


def full_scale(tmp_path: Path, *overrides: str) -> RunConfig:
    return parse_config(FULL_SCALE, [f'output={tmp_path / "run"}', 'ablate.seeds=0,1,2', *overrides])


def summary(out: Path) -> dict:
    return json.loads((out / api.RUN_MANIFEST).read_text())['summary']


def test_detector_reaches_high_detection_f1(tmp_path: Path) -> None:
    out = api.run('train-det', full_scale(tmp_path))
    assert summary(out)['detection_f1'] >= 0.95


def test_classification_converges_later_than_detection(tmp_path: Path) -> None:
    out = api.run('dynamics', full_scale(tmp_path, 'joint.probe_curve=false'))
    assert summary(out)['median_ratio'] > 1.0


def test_decoupled_linear_head_matches_joint_baseline(tmp_path: Path) -> None:
    out = api.run('ablate-strategy', full_scale(tmp_path))
    assert summary(out)['linear_minus_end_to_end'] >= 0.0


def test_detector_capacity_barely_matters(tmp_path: Path) -> None:
    out = api.run('ablate-capacity', full_scale(tmp_path))
    assert summary(out)['gap'] <= 0.02


def test_second_dataset_helps_small_dataset(tmp_path: Path) -> None:
    out = api.run('ablate-datasets', full_scale(tmp_path))
    assert summary(out)['joint_minus_separated'] >= 0.0


def test_probe_trajectory_has_no_gaps(tmp_path: Path) -> None:
    config = full_scale(tmp_path, 'joint.init=pretext', 'joint.epochs=20')
    out = api.run('train-joint', config)
    with open(out / 'probe.csv', newline='') as file:
        epochs = [int(row['epoch']) for row in csv.DictReader(file)]
    assert epochs == list(range(0, 21))


def test_rerun_is_byte_identical(tmp_path: Path) -> None:
    config = full_scale(tmp_path, 'detector.epochs=10')
    first = (api.run('train-det', config) / 'metrics.csv').read_bytes()
    second = (api.run('train-det', config.updated(output=str(tmp_path / 'again'))) / 'metrics.csv').read_bytes()
    assert first == second


def test_detector_loss_falls_every_early_epoch(tmp_path: Path) -> None:
    config = full_scale(tmp_path, 'detector.epochs=5')
    _, history = train_detector([api.load_split(config)], config.detector, config.eval.radius, config.seed)
    assert all(later < earlier for earlier, later in zip(history.losses, history.losses[1:]))
