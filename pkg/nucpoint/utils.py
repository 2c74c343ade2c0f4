'''
File: utils.py
Project: nucpoint
File Created: Monday, 2nd March 2026 10:12:41 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 14th March 2026 3:26:10 pm
Modified By: koko (koko231125@gmail.com>)
'''


import csv
import hashlib
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def derive_seed(*keys: int) -> int:
    """Derive an independent 32-bit seed from a tuple of integers, e.g. (run seed, image index).

    Args:
        *keys (int):
            Non-negative integers.

    Returns:
        int:
            A seed that depends only on `keys`, so serial and parallel generation agree.
    """
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def make_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))


def format_number(value: float | int | None) -> str:
    """Render a number for CSV output. Floats use `repr` so that the text round-trips exactly."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    """Write a CSV with a header line and '\\n' line endings.

    Args:
        path (str | PathLike):
            The output file. Parent directories are created.
        header (Sequence[str]):
            Column names.
        rows (Iterable[Sequence[object]]):
            Rows; numbers go through `format_number`, everything else through `str`.

    Returns:
        Path:
            The written path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                format_number(v) if v is None or isinstance(v, (int, float, np.integer, np.floating)) else str(v)
                for v in row
            ])
    return path


def append_csv_row(path: str | os.PathLike, header: Sequence[str], row: Sequence[object]) -> None:
    """Append one row, writing the header first when the file does not exist yet."""
    path = Path(path)
    new = not path.exists()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'a', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        if new:
            writer.writerow(header)
        writer.writerow([
            format_number(v) if v is None or isinstance(v, (int, float, np.integer, np.floating)) else str(v)
            for v in row
        ])


def hash_paths(paths: Iterable[str | os.PathLike]) -> str:
    """SHA-256 content hash over files, directories walked recursively in sorted order.

    Args:
        paths (Iterable[str | PathLike]):
            Files or directories. Missing paths are hashed by name only.

    Returns:
        str:
            The hex digest.
    """
    digest = hashlib.sha256()
    for root in sorted(str(p) for p in paths if p):
        root_path = Path(root)
        if root_path.is_dir():
            files = sorted(p for p in root_path.rglob('*') if p.is_file())
        else:
            files = [root_path]
        for file in files:
            digest.update(str(file.relative_to(root_path.parent)).encode())
            if file.exists():
                digest.update(file.read_bytes())
    return digest.hexdigest()


def median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))
