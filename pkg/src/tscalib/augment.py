"""Time-warping augmentation for certain-set instances.

A warp is a smooth random monotone re-timing of the series: knot speeds are
drawn from a positive distribution with mean 1 and standard deviation
``sigma``, interpolated to a dense speed profile with a shape-preserving
cubic (PCHIP, so the profile stays positive), integrated into a cumulative
time curve, and rescaled so the endpoints map to themselves. The warped
series is the original linearly resampled at the remapped times; the same
warp applies to every feature channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import backends
from .data import TimeSeriesDataset

_SPEED_FLOOR = 1e-6


@dataclass
class WarpSpec:
    n_knots: int = 4
    sigma: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.n_knots < 2:
            raise ValueError("n_knots must be >= 2")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def time_warp(x: np.ndarray, spec: WarpSpec) -> np.ndarray:
    """Warp one (T, F) series; deterministic in spec.seed, identity at sigma=0."""
    spec.validate()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a (T, F) series, got shape {x.shape}")
    length = x.shape[0]
    if length < 2:
        raise ValueError("series must have at least 2 timesteps")
    if spec.sigma == 0.0:
        return x.copy()

    rng = np.random.default_rng(spec.seed)
    # Lognormal parameterized to mean exactly 1 and std exactly sigma.
    log_var = np.log1p(spec.sigma**2)
    speeds = rng.lognormal(mean=-0.5 * log_var, sigma=np.sqrt(log_var), size=spec.n_knots)
    knots = np.linspace(0.0, length - 1.0, spec.n_knots)
    profile = PchipInterpolator(knots, speeds)(np.arange(length, dtype=np.float64))
    profile = np.maximum(profile, _SPEED_FLOOR)

    # Trapezoidal cumulative time, rescaled so t=0 and t=T-1 are fixed
    # (the last position is pinned exactly; rescaling alone can miss by 1 ulp).
    cumulative = np.concatenate(([0.0], np.cumsum(0.5 * (profile[1:] + profile[:-1]))))
    times = cumulative * ((length - 1.0) / cumulative[-1])
    times[-1] = length - 1.0
    return np.asarray(backends.backend.linear_resample(x, times))


def build_aug_set(dataset: TimeSeriesDataset, certain_ids, spec: WarpSpec, multiplier: int = 1):
    """One warped copy per certain sample per multiplier step.

    Returns a list of (warped instance, noisy label) pairs; labels are copied
    unchanged, the source dataset is never mutated. Each copy's warp seed is
    derived from (spec.seed, sample position, copy index) so the set is
    deterministic and independent of iteration order.
    """
    spec.validate()
    if multiplier < 0:
        raise ValueError("multiplier must be >= 0")
    pairs = []
    for pos in np.asarray(certain_ids, dtype=np.int64):
        for copy_idx in range(multiplier):
            child = int(
                np.random.SeedSequence([spec.seed, int(pos), copy_idx]).generate_state(1)[0]
            )
            warped = time_warp(
                dataset.instances[pos],
                WarpSpec(n_knots=spec.n_knots, sigma=spec.sigma, seed=child),
            )
            pairs.append((warped, int(dataset.noisy_labels[pos])))
    return pairs
