'''
File: test_api.py
Project: nucpoint
File Created: Saturday, 17th October 2026 10:05:12 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 10:05:12 am
Modified By: koko (koko231125@gmail.com>)
'''


from pathlib import Path

import pytest

import nucpoint.api as api
from nucpoint.config import RunConfig, parse_config
from nucpoint.errors import ConfigError
from nucpoint.rtypes import EncoderKind


def small(tmp_path: Path, *overrides: str) -> RunConfig:
    return parse_config(overrides=[
        f'output={tmp_path / "run"}', 'synth.n_train=2', 'synth.n_test=1', 'detector.epochs=1',
        'encoder.channels=4', 'encoder.width=4', 'encoder.pretrain_epochs=1', 'classifier.epochs=1',
        'joint.epochs=1', *overrides,
    ])


@pytest.mark.parametrize('init', ['random', 'pretext'])
def test_end_to_end_row_starts_from_the_pretrained_backbone(monkeypatch: pytest.MonkeyPatch, tmp_path: Path,
                                                            init: str) -> None:
    seen = []
    train_joint = api.train_joint

    def record(*args, **kwargs):
        seen.append(args[6])
        return train_joint(*args, **kwargs)

    monkeypatch.setattr(api, 'train_joint', record)
    result = api.strategy_worker(small(tmp_path, f'joint.init={init}'), tmp_path)
    assert len(seen) == 1
    assert seen[0] is not None
    assert seen[0].kind == EncoderKind.PRETEXT_PRETRAINED
    assert set(result['rows']) == {'linear', 'full', 'end_to_end'}


class TestCheckOutput:

    def test_fresh_directory(self, tmp_path: Path) -> None:
        assert api.check_output(small(tmp_path)) == (tmp_path / 'run').resolve()

    def test_working_directory_is_refused(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.chdir(tmp_path)
        with pytest.raises(ConfigError):
            api.check_output(small(tmp_path, 'output=.'))

    def test_checkpoint_inside_output_is_refused(self, tmp_path: Path) -> None:
        run = tmp_path / 'run'
        run.mkdir()
        (run / 'run_manifest.json').write_text('{}')
        (run / 'detector.npz').write_bytes(b'')
        with pytest.raises(ConfigError):
            api.check_output(small(tmp_path, f'detector.checkpoint={run / "detector.npz"}'))

    def test_file_is_refused(self, tmp_path: Path) -> None:
        (tmp_path / 'run').write_text('x')
        with pytest.raises(ConfigError):
            api.check_output(small(tmp_path))

    def test_empty_directory_is_accepted(self, tmp_path: Path) -> None:
        (tmp_path / 'run').mkdir()
        assert api.check_output(small(tmp_path)).is_dir()
