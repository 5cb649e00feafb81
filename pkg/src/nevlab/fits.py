"""Power-law fits |x_j| ~ c |j|^e on log-log axes."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class AsymptoticFit:
    exponent: float
    constant: float
    residual: float  # max relative deviation of the data from the fit
    window: tuple

    def to_json(self) -> str:
        d = asdict(self)
        d["window"] = list(self.window)
        return json.dumps(d, sort_keys=True)


def fit_power_law(values, j_min: int = 3, j_max: int | None = None) -> AsymptoticFit:
    """Least-squares line through (log|j|, log magnitude) for j_min <= |j| <= j_max."""
    pts = [(abs(int(j)), float(m)) for j, m in values]
    pts = [(j, m) for j, m in pts if j >= j_min and (j_max is None or j <= j_max)]
    if len(pts) < 6:
        raise ValueError(f"need at least 6 points in the window, got {len(pts)}")
    j = np.array([p[0] for p in pts], dtype=float)
    m = np.array([p[1] for p in pts])
    if np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise ValueError("magnitudes must be positive and finite")
    x, y = np.log(j), np.log(m)
    slope, intercept = np.polyfit(x, y, 1)
    c = float(np.exp(intercept))
    pred = c * j ** slope
    resid = float(np.max(np.abs(m / pred - 1.0)))
    window = (int(j.min()), int(j.max()))
    return AsymptoticFit(float(slope), c, resid, window)
