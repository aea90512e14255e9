"""Dense rank-3 tensor algebra: mode-k matricization and mode-k products.

Axis order is (variate, temporal, level), i.e. modes 1, 2, 3. Modes are
1-based throughout, matching the usual notation ``X ×_k M``.

Naming note: ``unfold`` maps a tensor to its mode-k matrix and ``fold`` maps
it back. Some texts use the opposite names; the operations here are fixed by
``fold(unfold(t, k), k, t.shape) == t``.

Column order of ``unfold(t, k)``: the remaining two axes in increasing mode
order, flattened row-major. For a (n1, n2, n3) tensor and k=2 the column index
of entry (i, j, l) is ``i * n3 + l``.
"""

from __future__ import annotations

import numpy as np

MODES = (1, 2, 3)


def _check_mode(mode: int) -> int:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode - 1


def as_tensor3(data, dtype=np.float64) -> np.ndarray:
    """Validate external input as a finite rank-3 array."""
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim != 3:
        raise ValueError(f"expected a rank-3 tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"all lengths must be positive, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains NaN or Inf")
    return arr


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k matricization, shape ``(n_k, prod of the other lengths)``."""
    axis = _check_mode(mode)
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"expected a rank-3 tensor, got shape {t.shape}")
    return np.moveaxis(t, axis, 0).reshape(t.shape[axis], -1)


def fold(m: np.ndarray, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    axis = _check_mode(mode)
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3:
        raise ValueError(f"shape must have three lengths, got {shape}")
    m = np.asarray(m)
    rest = [s for i, s in enumerate(shape) if i != axis]
    expected = (shape[axis], rest[0] * rest[1])
    if m.shape != expected:
        raise ValueError(f"matrix shape {m.shape} does not fit tensor {shape} on mode {mode}")
    return np.moveaxis(m.reshape(shape[axis], *rest), 0, axis)


def mode_product(t: np.ndarray, matrix: np.ndarray, mode: int) -> np.ndarray:
    """``t ×_mode matrix``: contract the mode axis with the matrix columns.

    The result has the mode's length replaced by ``matrix.shape[0]``.
    """
    axis = _check_mode(mode)
    t = np.asarray(t)
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"transform factor must be a matrix, got shape {matrix.shape}")
    if matrix.shape[1] != t.shape[axis]:
        raise ValueError(
            f"factor has {matrix.shape[1]} columns but mode {mode} has length {t.shape[axis]}"
        )
    new_shape = list(t.shape)
    new_shape[axis] = matrix.shape[0]
    return fold(matrix @ unfold(t, mode), mode, new_shape)
