"""Synthetic leaf spectra with nitrogen-dependent absorption dips.

Every sample shares one smooth vegetation-like baseline. Nitrogen deepens
Gaussian dips at a few planted wavelengths, and white noise is added on top.
Tests use this in place of field data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._seeding import rng_for
from .preprocess import SampleMeta, SpectralDataset

CULTIVARS = ("Chardonnay", "Pinot Noir")
STAGES = ("bloom", "veraison")
SEASONS = ("2022", "2023")


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 200
    n_bands: int = 274
    grid_range_nm: tuple = (400.0, 1000.0)
    planted_centers_nm: tuple = (505.0, 680.0, 755.0, 910.0)
    depth_per_N: float = 0.012
    sigma_nm: float = 10.0
    noise_sd: float = 0.01
    n_range: tuple = (1.63, 3.43)
    seed: int = 42
    level: str = "leaf"

    def __post_init__(self):
        lo, hi = self.grid_range_nm
        if not lo < hi:
            raise ValueError("grid range must be increasing")
        for c in self.planted_centers_nm:
            if not lo <= c <= hi:
                raise ValueError(f"planted center {c} nm outside the grid")
        if not self.n_range[0] < self.n_range[1]:
            raise ValueError("n_range low must be below high")
        if self.n_samples < 1 or self.n_bands < 2:
            raise ValueError("need at least one sample and two bands")
        if self.noise_sd < 0 or self.sigma_nm <= 0:
            raise ValueError("noise_sd must be >= 0 and sigma_nm > 0")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(*self.grid_range_nm, self.n_bands)


def baseline(grid: np.ndarray) -> np.ndarray:
    """Green bump, red trough, red-edge sigmoid near 700 nm, NIR plateau."""
    g = np.asarray(grid, dtype=float)
    green = 0.07 * np.exp(-0.5 * ((g - 550.0) / 30.0) ** 2)
    edge = 0.42 / (1.0 + np.exp(-(g - 715.0) / 14.0))
    nir_slope = 0.00004 * np.clip(g - 780.0, 0.0, None)
    return 0.05 + green + edge - nir_slope


def absorption(grid: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    """Dip profile per unit nitrogen (reflectance lost per % DW)."""
    g = np.asarray(grid, dtype=float)
    prof = np.zeros_like(g)
    for c in cfg.planted_centers_nm:
        prof += np.exp(-0.5 * ((g - c) / cfg.sigma_nm) ** 2)
    return cfg.depth_per_N * prof


def noiseless(n_pct, cfg: SynthConfig) -> np.ndarray:
    grid = cfg.grid
    return baseline(grid)[None, :] - np.outer(np.atleast_1d(n_pct), absorption(grid, cfg))


def generate(cfg: SynthConfig = SynthConfig()) -> SpectralDataset:
    grid = cfg.grid
    base = baseline(grid)
    dip = absorption(grid, cfg)
    X = np.empty((cfg.n_samples, grid.size))
    y = np.empty(cfg.n_samples)
    meta = []
    for i in range(cfg.n_samples):
        rng = rng_for(cfg.seed, "sample", i)
        y[i] = rng.uniform(*cfg.n_range)
        X[i] = base - y[i] * dip + rng.normal(0.0, cfg.noise_sd, grid.size)
        meta.append(SampleMeta(
            sample_id=f"syn{i:04d}",
            cultivar=CULTIVARS[i % len(CULTIVARS)],
            stage=STAGES[(i // 2) % len(STAGES)],
            season=SEASONS[(i // 4) % len(SEASONS)],
            level=cfg.level,
        ))
    return SpectralDataset(grid, X, y, tuple(meta))
