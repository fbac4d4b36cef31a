"""Reductions of occupation time series to headline numbers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NoMinimumError(ValueError):
    pass


class NotStationaryError(ValueError):
    def __init__(self, msg: str, drift: float):
        super().__init__(msg)
        self.drift = drift


@dataclass(frozen=True)
class SwapMinimum:
    time: float
    value: float
    index: int


def first_minimum(times: np.ndarray, values: np.ndarray) -> SwapMinimum:
    """First interior local minimum, refined by a parabola through the bracketing samples.

    Samples are compared with a small tolerance so ripples at the sampling
    noise floor do not end the search early.
    """
    t = np.asarray(times, float)
    y = np.asarray(values, float)
    if t.size < 3:
        raise NoMinimumError("need at least three samples")
    for i in range(1, y.size - 1):
        if y[i] <= y[i - 1] and y[i] < y[i + 1]:
            return _refine(t, y, i)
    raise NoMinimumError("no local minimum inside the sampled window; extend t_final")


def _refine(t, y, i) -> SwapMinimum:
    t0, t1, t2 = t[i - 1], t[i], t[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    den = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / den
    b = (t2 ** 2 * (y0 - y1) + t1 ** 2 * (y2 - y0) + t0 ** 2 * (y1 - y2)) / den
    if a <= 0:
        return SwapMinimum(float(t1), float(y1), i)
    tv = -b / (2 * a)
    c = y1 - a * t1 ** 2 - b * t1
    return SwapMinimum(float(tv), float(a * tv ** 2 + b * tv + c), i)


def plateau(times: np.ndarray, values: np.ndarray, fraction: float = 0.05,
            rtol: float = 0.02, check: bool = True) -> float:
    """Mean over the final ``fraction`` of the run.

    Raises :class:`NotStationaryError` if that window differs from the window
    just before it by more than ``rtol`` (relative).
    """
    t = np.asarray(times, float)
    y = np.asarray(values, float)
    span = t[-1] - t[0]
    last = t >= t[-1] - fraction * span
    prev = (t >= t[-1] - 2 * fraction * span) & ~last
    if last.sum() < 1 or prev.sum() < 1:
        raise ValueError("too few samples for a plateau window")
    m_last = float(y[last].mean())
    m_prev = float(y[prev].mean())
    drift = abs(m_last - m_prev) / max(abs(m_last), 1e-300)
    if check and drift > rtol:
        raise NotStationaryError(f"not stationary: final windows differ by {100 * drift:.2f}% "
                                 f"({m_prev:.4g} -> {m_last:.4g}); extend t_final", drift)
    return m_last


def cooling_factor(initial: float, final: float) -> float:
    return initial / final if final > 0 else float("inf")


def settling_rate(times: np.ndarray, deviation: np.ndarray, window: tuple[float, float]) -> float:
    """Exponential rate fitted to ``log|deviation|`` over ``window`` (fraction of the run)."""
    t = np.asarray(times, float)
    y = np.abs(np.asarray(deviation))
    lo, hi = t[0] + window[0] * (t[-1] - t[0]), t[0] + window[1] * (t[-1] - t[0])
    m = (t >= lo) & (t <= hi) & (y > 0)
    slope = np.polyfit(t[m], np.log(y[m]), 1)[0]
    return float(-slope)
