'''
File: checkpoint.py
Project: nucpoint
File Created: Friday, 6th March 2026 4:05:22 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Friday, 13th March 2026 2:17:45 pm
Modified By: koko (koko231125@gmail.com>)
'''


import json
import logging
import zipfile
from pathlib import Path

import numpy as np

import nucpoint.interface as ifc
from nucpoint.errors import DataFormatError, MissingInputError, ShapeError
from nucpoint.factory import ModelFactory


logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
META_KEY = '__meta__'


def save_checkpoint(model: ifc.Model, path: str | Path) -> Path:
    """Write the weights of a model and its metadata into one `.npz` file.

    Args:
        model (Model):
            Anything with `params` and `meta`.
        path (str | Path):
            The target file. Parent directories are created.

    Returns:
        Path:
            The written file.
    """
    assert isinstance(model, ifc.Model), TypeError(f"{model!r} is not a Model")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(model.meta, version=CHECKPOINT_VERSION, **{'class': type(model).__name__})
    arrays = model.params.state_dict()
    arrays[META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, 'wb') as file:
        np.savez(file, **arrays)
    logger.debug("saved %r to %s", model, path)
    return path


def load_checkpoint(path: str | Path, factory: ModelFactory | None = None) -> ifc.Model:
    """Rebuild a model from a checkpoint written by `save_checkpoint`.

    Args:
        path (str | Path):
            The checkpoint file.
        factory (ModelFactory | None, optional):
            Resolves the stored class names. Defaults to a plain ModelFactory.

    Returns:
        Model:
            The model with its stored weights.

    Raises:
        MissingInputError:
            If the file does not exist.
        DataFormatError:
            If the file is not a checkpoint of a supported version.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"checkpoint {path} does not exist")
    factory = factory if factory is not None else ModelFactory()
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {key: data[key] for key in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise DataFormatError(path, f"unreadable checkpoint ({exc})") from exc
    if META_KEY not in arrays:
        raise DataFormatError(path, "checkpoint has no metadata")
    meta = json.loads(str(arrays.pop(META_KEY)))
    if meta.get('version') != CHECKPOINT_VERSION:
        raise DataFormatError(path, f"unsupported checkpoint version {meta.get('version')}")

    model = factory.from_meta(meta, str(path))
    try:
        model.params.load_state_dict(arrays)
    except (KeyError, ShapeError) as exc:
        raise DataFormatError(path, f"weights do not fit the stored architecture ({exc})") from exc
    return model
