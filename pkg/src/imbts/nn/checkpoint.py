"""Named-tensor checkpoints stored as ``.npz`` archives.

The archive holds one array per name plus a ``__format_version__`` scalar.
Arrays are written in binary, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_VERSION_KEY = "__format_version__"


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    if _VERSION_KEY in tensors:
        raise CheckpointError(f"reserved name {_VERSION_KEY!r}")
    with open(path, "wb") as fh:
        np.savez(fh, **{_VERSION_KEY: np.array(FORMAT_VERSION)}, **tensors)
    return path


def load_tensors(path) -> dict[str, np.ndarray]:
    with np.load(Path(path), allow_pickle=False) as archive:
        if _VERSION_KEY not in archive.files:
            raise CheckpointError(f"{path}: missing format version")
        version = int(archive[_VERSION_KEY])
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
        return {k: archive[k] for k in archive.files if k != _VERSION_KEY}
