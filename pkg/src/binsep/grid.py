"""Discrete azimuth grid shared by the spatializer, localizer, and decoder."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AzimuthGrid:
    """Uniform azimuth grid on the frontal plane.

    The default covers -90..+90 degrees in 5-degree steps (37 classes),
    with class index 0 at -90 and the last class at +90.
    """

    min_deg: float = -90.0
    step_deg: float = 5.0
    count: int = 37

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("grid needs at least one azimuth")
        if self.step_deg <= 0:
            raise ValueError("step_deg must be positive")

    @property
    def max_deg(self) -> float:
        return self.min_deg + self.step_deg * (self.count - 1)

    def degrees(self, index):
        """Grid index (scalar or array) to azimuth in degrees."""
        idx = np.asarray(index)
        if np.any(idx < 0) or np.any(idx >= self.count):
            raise ValueError(f"grid index out of range [0, {self.count})")
        out = self.min_deg + self.step_deg * idx
        return float(out) if np.isscalar(index) or idx.ndim == 0 else out

    def index_of(self, deg: float, tol: float = 1e-6) -> int:
        """Exact grid index of an on-grid azimuth; raises if off grid."""
        raw = (deg - self.min_deg) / self.step_deg
        idx = int(round(raw))
        if abs(raw - idx) > tol or not (0 <= idx < self.count):
            raise ValueError(f"azimuth {deg} deg is not on the grid")
        return idx

    def nearest_index(self, deg: float) -> int:
        """Grid index closest to an arbitrary azimuth, clipped to range."""
        idx = int(round((deg - self.min_deg) / self.step_deg))
        return min(max(idx, 0), self.count - 1)

    def all_degrees(self) -> np.ndarray:
        return self.min_deg + self.step_deg * np.arange(self.count)


def default_grid() -> AzimuthGrid:
    """The standard 37-class grid: -90..+90 degrees, 5-degree steps."""
    return AzimuthGrid()
