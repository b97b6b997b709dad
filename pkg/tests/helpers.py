"""Shared test utilities: numerical-gradient oracles and small fixtures.

Every analytic gradient in the package is checked against central finite
differences computed here, with no reuse of package internals beyond the
function under test itself.
"""

from __future__ import annotations

import numpy as np

from spoofbench import RngStream


def central_diff(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        bump = np.zeros_like(xf)
        bump[i] = eps
        hi = f((xf + bump).reshape(x.shape))
        lo = f((xf - bump).reshape(x.shape))
        flat[i] = (hi - lo) / (2 * eps)
    return grad


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise relative error with an absolute floor of 1."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def stream(seed: int = 7, tag: int = 0) -> RngStream:
    return RngStream(seed).child("test", tag)


def gen(seed: int = 7) -> np.random.Generator:
    return np.random.default_rng(seed)
