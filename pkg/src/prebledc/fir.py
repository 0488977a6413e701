"""FIR tap containers shared by the equalizer and the pre-compensator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TrainingError(RuntimeError):
    """Equalizer training diverged or failed to converge."""


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    delay: int = 0
    status: str = "ok"

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=np.float64)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("FIR taps must be a non-empty vector")
        if not 0 <= self.delay < t.size:
            raise ValueError(f"delay {self.delay} outside [0, {t.size})")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "taps", t)

    def __len__(self) -> int:
        return self.taps.size

    @classmethod
    def impulse(cls, n_taps: int = 1, delay: int = 0) -> FirFilter:
        t = np.zeros(n_taps)
        t[delay] = 1.0
        return cls(t, delay)


def off_peak_energy(c: np.ndarray) -> float:
    """Energy outside the largest-magnitude sample, relative to that sample's."""
    c = np.asarray(c)
    peak = int(np.argmax(np.abs(c)))
    p = abs(c[peak]) ** 2
    return float((np.sum(np.abs(c) ** 2) - p) / p)


