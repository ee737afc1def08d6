"""Stage-by-stage run on synthetic spectra, printing what each step decides.

Uses fewer ensemble iterations and a small model grid so it finishes in about
half a minute. `nitrospec pipeline` runs the full-size version.
"""

import numpy as np

from nitrospec import pipeline as pl
from nitrospec.config import ModelGrid, PipelineConfig
from nitrospec.ensemble import EnsembleConfig, run_ensemble_ranking, select_optimal_count
from nitrospec.plsr import plsr_backward_select
from nitrospec.synth import SynthConfig, generate

cfg = PipelineConfig()
synth = SynthConfig(n_samples=150)
ds = generate(synth)
print(f"{ds.n_samples} samples x {ds.n_bands} bands, N range "
      f"{ds.y.min():.2f}-{ds.y.max():.2f} %DW, planted dips at {synth.planted_centers_nm} nm")

prep = pl.preprocess_dataset(ds, cfg.preprocess)
print(f"after trimming, SNV and smoothing: {prep.dataset.n_bands} bands, "
      f"Savitzky-Golay window {prep.window}")

red = pl.reduce_dataset(prep.dataset, cfg.redundancy_threshold)
work = red.dataset
print(f"complete linkage at distance {cfg.redundancy_threshold} keeps {work.n_bands} bands")

ranking = run_ensemble_ranking(work, EnsembleConfig(n_iterations=8, master_seed=cfg.seed))
ens = select_optimal_count(ranking, work, cfg.ensemble.epsilon, cfg.ensemble.m_max)
print(f"ensemble ranking picks {ens.chosen_m} bands: {np.round(work.grid[ens.selected_bands], 1)}")

pls = plsr_backward_select(work, seed=cfg.seed)
print(f"PLSR elimination keeps {pls.chosen_m} bands: {np.round(work.grid[pls.selected_bands], 1)}")

common = pl.intersect_selections(ens, pls) or sorted(set(ens.selected_bands) | set(pls.selected_bands))
sub = work.select_bands(common)
print(f"{len(common)} bands in both sets: {np.round(sub.grid, 1)}")

grid = ModelGrid(n_estimators=(100, 300), max_depth=(3,), learning_rate=(0.05,), subsample=(0.7,))
for kind in pl.MODEL_KINDS:
    rep = pl.grid_search(sub.X, sub.y, kind, grid, folds=10, seed=cfg.seed)
    b = rep.best
    print(f"{kind:>8}: best {b['params']['n_estimators']} trees, "
          + pl.format_metrics(b["r2"], b["rmse"], b["mae"]))
