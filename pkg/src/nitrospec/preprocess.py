"""Spectral containers and pre-treatment: band trimming, SNV and Savitzky-Golay.

The pipeline order is fixed: trim -> SNV -> SG smoothing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class SpectrumError(ValueError):
    pass


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise SpectrumError("band grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) <= 0):
        i = int(np.argmax(np.diff(grid) <= 0)) + 1
        raise SpectrumError(f"wavelengths not increasing at index {i}")
    return grid


@dataclass(frozen=True)
class Spectrum:
    grid: np.ndarray
    reflectance: np.ndarray

    def __post_init__(self):
        grid = _check_grid(self.grid)
        refl = np.asarray(self.reflectance, dtype=float)
        if refl.shape != grid.shape:
            raise SpectrumError(
                f"reflectance length {refl.size} does not match grid length {grid.size}"
            )
        if not np.all(np.isfinite(refl)):
            raise SpectrumError("reflectance contains non-finite values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "reflectance", refl)

    def __len__(self) -> int:
        return self.grid.size


@dataclass(frozen=True)
class SampleMeta:
    sample_id: str
    cultivar: str = ""
    stage: str = ""
    season: str = ""
    level: str = ""


@dataclass(frozen=True)
class SpectralDataset:
    """Spectra ``X`` (n samples x p bands) with nitrogen targets ``y`` in % DW.

    ``y`` may be all-NaN for unlabelled spectra (e.g. straight out of
    calibration); every operation that needs a target calls
    :meth:`require_target`.
    """

    grid: np.ndarray
    X: np.ndarray
    y: np.ndarray
    meta: tuple = field(default=())

    def __post_init__(self):
        grid = _check_grid(self.grid)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[1] != grid.size:
            raise SpectrumError(f"X has {X.shape[1]} columns but grid has {grid.size} bands")
        if X.shape[0] != y.size:
            raise SpectrumError(f"X has {X.shape[0]} rows but y has {y.size} values")
        meta = tuple(self.meta) if self.meta else tuple(
            SampleMeta(sample_id=f"s{i:04d}") for i in range(X.shape[0])
        )
        if len(meta) != X.shape[0]:
            raise SpectrumError(f"{len(meta)} metadata rows for {X.shape[0]} samples")
        labelled = y[np.isfinite(y)]
        if labelled.size and labelled.size != y.size:
            raise SpectrumError("nitrogen targets are partially missing")
        if labelled.size and np.any((labelled <= 0) | (labelled >= 10)):
            raise SpectrumError("nitrogen values must lie in (0, 10) % DW")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "meta", meta)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_bands(self) -> int:
        return self.grid.size

    @property
    def has_target(self) -> bool:
        return bool(self.y.size) and bool(np.all(np.isfinite(self.y)))

    def require_target(self) -> None:
        if not self.has_target:
            raise SpectrumError("dataset has no nitrogen targets")

    def spectrum(self, i: int) -> Spectrum:
        return Spectrum(self.grid, self.X[i])

    def select_bands(self, bands: Sequence[int]) -> "SpectralDataset":
        bands = np.asarray(bands, dtype=int)
        return dataclasses.replace(self, grid=self.grid[bands], X=self.X[:, bands])

    def with_X(self, X: np.ndarray) -> "SpectralDataset":
        return dataclasses.replace(self, X=X)


# -- trimming -----------------------------------------------------------------

def trim_bands(ds: SpectralDataset, head: int = 10, tail: int = 2) -> SpectralDataset:
    """Drop the first ``head`` and last ``tail`` bands (sensor edge distortion)."""
    if head < 0 or tail < 0:
        raise SpectrumError("trim counts must be non-negative")
    p = ds.n_bands
    if p <= head + tail:
        raise SpectrumError(f"cannot trim {head}+{tail} bands from a {p}-band grid")
    return ds.select_bands(np.arange(head, p - tail))


# -- SNV ----------------------------------------------------------------------

def snv_matrix(X: np.ndarray) -> np.ndarray:
    """Row-wise standard normal variate (sample sd, ddof=1)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] < 2:
        raise SpectrumError("SNV needs at least 2 bands")
    mu = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, ddof=1, keepdims=True)
    bad = ~(sd[:, 0] > 0)
    if np.any(bad):
        raise SpectrumError(f"degenerate spectrum (zero sd) at row {int(np.argmax(bad))}")
    return (X - mu) / sd


def snv(s: Spectrum) -> Spectrum:
    if len(s) < 2:
        raise SpectrumError("SNV needs at least 2 bands")
    if not np.std(s.reflectance, ddof=1) > 0:
        raise SpectrumError("degenerate spectrum: zero standard deviation")
    return Spectrum(s.grid, snv_matrix(s.reflectance[None, :])[0])


def snv_dataset(ds: SpectralDataset) -> SpectralDataset:
    return ds.with_X(snv_matrix(ds.X))


# -- Savitzky-Golay -----------------------------------------------------------

@dataclass(frozen=True)
class SgFilter:
    window: int
    poly_order: int
    weights: np.ndarray
    deriv: int = 0


def sg_coefficients(window: int, poly_order: int, deriv: int = 0) -> SgFilter:
    """Least-squares convolution weights for the centre point of the window.

    Fits a degree ``poly_order`` polynomial over offsets ``-h..h`` and returns
    the row of the pseudo-inverse that evaluates its ``deriv``-th derivative
    at offset zero. Derivatives are per band (unit spacing).
    """
    window, poly_order, deriv = int(window), int(poly_order), int(deriv)
    if window < 3 or window % 2 == 0:
        raise SpectrumError(f"window must be odd and >= 3, got {window}")
    if not 0 <= poly_order < window:
        raise SpectrumError(f"poly_order must be in [0, {window - 1}], got {poly_order}")
    if not 0 <= deriv <= poly_order:
        raise SpectrumError(f"deriv must be in [0, {poly_order}], got {deriv}")
    h = window // 2
    offsets = np.arange(-h, h + 1, dtype=float)
    V = offsets[:, None] ** np.arange(poly_order + 1)[None, :]
    # normal equations (V^T V) a = V^T x; the centre value/derivative is a[deriv]*deriv!
    gram = V.T @ V
    rows = np.linalg.solve(gram, V.T)
    weights = rows[deriv] * float(np.prod(np.arange(1, deriv + 1)))
    return SgFilter(window=window, poly_order=poly_order, weights=weights, deriv=deriv)


def sg_smooth_array(X: np.ndarray, f: SgFilter) -> np.ndarray:
    """Apply ``f`` along the last axis with reflect padding (edge not repeated)."""
    X = np.asarray(X, dtype=float)
    p = X.shape[-1]
    if p < f.window:
        raise SpectrumError(f"spectrum of {p} bands is shorter than window {f.window}")
    h = f.window // 2
    pad = [(0, 0)] * (X.ndim - 1) + [(h, h)]
    Xp = np.pad(X, pad, mode="reflect")
    out = np.zeros_like(X)
    for k, w in enumerate(f.weights):
        out += w * Xp[..., k:k + p]
    return out


def sg_smooth(s: Spectrum, f: SgFilter) -> Spectrum:
    return Spectrum(s.grid, sg_smooth_array(s.reflectance, f))


def sg_dataset(ds: SpectralDataset, f: SgFilter) -> SpectralDataset:
    return ds.with_X(sg_smooth_array(ds.X, f))


def _power(v: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.rfft(v - v.mean())) ** 2


def window_leakage(X: np.ndarray, candidates: Sequence[int], poly_order: int = 2,
                   power_cutoff: float = 0.01) -> tuple[int, dict[int, float]]:
    """Signal-band share of the SG residual power for each candidate window.

    Returns ``(cutoff_bin, {window: fraction})``. Spectra are averaged over
    samples first; the residual of the mean equals the mean residual since SG
    is linear. The ``max(candidates) // 2`` bands at each edge, where padding
    shapes the residual, are left out of the Fourier analysis.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mean = X.mean(axis=0)
    p = mean.size
    edge = max(candidates) // 2
    core = slice(edge, p - edge) if p - 2 * edge >= 8 else slice(0, p)

    raw_pow = _power(mean[core])
    ac = raw_pow[1:]
    if ac.size == 0 or ac.max() <= 0:
        cutoff = raw_pow.size
    else:
        # first bin after which the power stays under the threshold for good
        above = np.nonzero(ac >= power_cutoff * ac.max())[0]
        cutoff = int(above[-1]) + 2

    fractions = {}
    for w in candidates:
        resid = mean - sg_smooth_array(mean, sg_coefficients(w, poly_order))
        rp = _power(resid[core])
        total = rp[1:].sum()
        fractions[int(w)] = float(rp[1:cutoff].sum() / total) if total > 0 else 0.0
    return cutoff, fractions


def select_sg_window(ds: SpectralDataset | np.ndarray,
                     candidates: Sequence[int] = tuple(range(5, 32, 2)),
                     poly_order: int = 2, power_cutoff: float = 0.01,
                     max_leakage: float = 0.05) -> int:
    """Pick the largest SG window whose residual barely touches the signal band.

    The signal band is everything below the Fourier bin from which the mean
    spectrum's power stays under ``power_cutoff`` of its peak. A window passes
    when less than ``max_leakage`` of its residual power sits in that band.
    Falls back to the smallest candidate when none passes.
    """
    candidates = sorted(int(w) for w in candidates)
    if not candidates:
        raise SpectrumError("no candidate SG windows given")
    X = ds.X if isinstance(ds, SpectralDataset) else np.asarray(ds, dtype=float)
    if X.size == 0:
        raise SpectrumError("empty dataset")
    if len(candidates) == 1:
        return candidates[0]
    _, frac = window_leakage(X, candidates, poly_order, power_cutoff)
    passing = [w for w in candidates if frac[w] < max_leakage]
    return passing[-1] if passing else candidates[0]
