"""Checkpoint format shared by all models: named float64 arrays.

A checkpoint is a zip of .npy members (numpy's savez), so every array
carries its own shape header and dtype. The same format serves attractor
nets, recurrent models, DAEs and reified MLPs; model classes decide the
naming of their parameter groups.
"""

from __future__ import annotations

import numpy as np


def save_params(path, params):
    """Write a {name: array-or-Tensor} mapping to ``path``."""
    arrays = {}
    for name, value in params.items():
        data = getattr(value, "data", value)
        arrays[name] = np.asarray(data, dtype=np.float64)
    np.savez(path, **arrays)


def load_params(path):
    """Read a checkpoint back as a {name: ndarray} mapping."""
    with np.load(path) as archive:
        return {name: archive[name].copy() for name in archive.files}
