"""Central finite-difference gradient checks."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / scale


def grad_check(fn, inputs, h=1e-5, max_coords=None, seed=0):
    """Compare reverse-mode gradients of scalar ``fn(*inputs)`` to central differences.

    ``inputs`` are Tensors with ``requires_grad``; their data is perturbed in
    place and restored. ``max_coords`` limits the number of coordinates
    sampled per input (all coordinates when None).

    Returns the maximum of ``|a - n| / max(1, |a|, |n|)`` over checked coordinates.
    """
    for t in inputs:
        t.grad = None
    out = fn(*inputs)
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            f_plus = float(fn(*inputs).data)
            flat[c] = orig - h
            f_minus = float(fn(*inputs).data)
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic.reshape(-1)[c]
            if not (np.isfinite(numeric) and np.isfinite(a)):
                raise FloatingPointError(f"non-finite gradient at coordinate {c} of {t}")
            worst = max(worst, float(relative_error(a, numeric)))
    return worst


def check_function(fn, *arrays, h=1e-5, max_coords=None, seed=0):
    """Convenience wrapper: wrap raw arrays as trainable float64 tensors."""
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    return grad_check(fn, tensors, h=h, max_coords=max_coords, seed=seed)
