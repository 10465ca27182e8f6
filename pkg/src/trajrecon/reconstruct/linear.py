"""Piecewise-linear interpolation baseline."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..simkernel import StateSample
from .base import EXTRAPOLATED, MEASURED, ReconstructionResult, check_inputs, make_sample


def interp_clamped(arr: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Interpolate an ``(n, 7)`` state array at ``times``; hold the ends outside.

    Knots are reproduced exactly and track follows the shorter arc.
    """
    t = arr[:, 0]
    n = len(t)
    idx = np.clip(np.searchsorted(t, times, side="right") - 1, 0, n - 1)
    out = arr[idx].copy()
    inner = (times > t[0]) & (idx < n - 1)
    if np.any(inner):
        i = idx[inner]
        a, b = arr[i], arr[i + 1]
        w = ((times[inner] - a[:, 0]) / (b[:, 0] - a[:, 0]))[:, None]
        seg = a + w * (b - a)
        dtrk = (b[:, 6] - a[:, 6] + 180.0) % 360.0 - 180.0
        seg[:, 6] = (a[:, 6] + w[:, 0] * dtrk) % 360.0
        out[inner] = seg
    out[:, 0] = times
    return out


def reconstruct_linear(points: Sequence[StateSample], query_times: Sequence[float]) -> ReconstructionResult:
    """Per-field linear interpolation between bracketing observations.

    Raises:
        NoObservationsError: if ``points`` is empty.
    """
    arr = check_inputs(points, query_times)
    q = np.asarray(query_times, dtype=float)
    est = interp_clamped(arr, q)
    inside = (q >= arr[0, 0]) & (q <= arr[-1, 0])
    return ReconstructionResult(
        [make_sample(*row) for row in est],
        [MEASURED if ok else EXTRAPOLATED for ok in inside],
        {"method": "linear", "n_points": len(points)},
    )
