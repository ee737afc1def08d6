"""End-to-end orchestration: preprocessing, selection, intersection, model search."""

from __future__ import annotations

import dataclasses
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as nio
from . import preprocess as pp
from . import trees
from ._seeding import derive_seed
from .config import ModelGrid, PipelineConfig, config_dict, config_hash
from .cv import CvError, fit_line, fold_assignment, regression_metrics
from .ensemble import EnsembleConfig, SelectionResult, run_ensemble_ranking, select_optimal_count
from .plsr import plsr_backward_select
from .preprocess import SpectralDataset
from .redundancy import complete_linkage, correlation_matrix, select_representatives, to_distance
from .synth import generate

log = logging.getLogger(__name__)

MODEL_KINDS = ("newton", "gradient")
REPORT_FORMAT = "nitrospec-pipeline-report"
REPORT_VERSION = 1


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# -- intersection -------------------------------------------------------------

def intersect_selections(a: SelectionResult, b: SelectionResult) -> list[int]:
    """Bands selected by both methods, as sorted indices on their shared grid."""
    if a.grid.shape != b.grid.shape or not np.array_equal(a.grid, b.grid):
        raise ValueError("selections are on different band grids")
    common = sorted(set(int(i) for i in a.selected_bands) & set(int(i) for i in b.selected_bands))
    if not common:
        log.warning("selections %s and %s share no bands", a.method, b.method)
    return common


def bands_from_nm(grid: np.ndarray, wavelengths: Sequence[float], tol: float = 1e-6) -> list[int]:
    """Map wavelengths onto band indices of ``grid`` (nearest band within ``tol`` nm)."""
    grid = np.asarray(grid, dtype=float)
    out = []
    for w in wavelengths:
        k = int(np.argmin(np.abs(grid - w)))
        if abs(grid[k] - w) > tol:
            raise ValueError(f"{w} nm is not on the band grid (nearest {grid[k]} nm)")
        out.append(k)
    return out


def intersect_nm(*selections: Sequence[float], tol: float = 1e-6) -> list[float]:
    """Wavelengths present in every list (matched within ``tol`` nm)."""
    if not selections:
        return []
    common = [float(w) for w in selections[0]]
    for other in selections[1:]:
        other = np.asarray(other, dtype=float)
        common = [w for w in common if other.size and np.min(np.abs(other - w)) <= tol]
    return sorted(common)


# -- cross-validation and grid search -------------------------------------------

def fit_model(kind: str, X, y, params: trees.BoostParams):
    if kind == "newton":
        return trees.fit_newton_boosting(X, y, params)
    if kind == "gradient":
        return trees.fit_gradient_boosting(X, y, params)
    raise ValueError(f"unknown model kind: {kind}")


@dataclass(frozen=True)
class CvResult:
    r2: float
    rmse: float
    mae: float
    predictions: np.ndarray


def kfold_cv(X, y, kind: str, params: trees.BoostParams, folds: int = 10, seed: int = 0,
             labels: np.ndarray | None = None) -> CvResult:
    """Pooled out-of-fold metrics; fold k trains with seed derived from (params.seed, k)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < folds:
        raise CvError(f"need at least {folds} samples for {folds}-fold CV, got {n}")
    if labels is None:
        labels = fold_assignment(n, folds, seed)
    pred = np.empty(n)
    for k in range(int(labels.max()) + 1):
        test = labels == k
        p = dataclasses.replace(params, seed=derive_seed(params.seed, "fold", k))
        model = fit_model(kind, X[~test], y[~test], p)
        pred[test] = model.predict(X[test])
    m = regression_metrics(y, pred)
    return CvResult(m["r2"], m["rmse"], m["mae"], pred)


def grid_configs(grid: ModelGrid, seed: int) -> list[trees.BoostParams]:
    """Full Cartesian product in axis order (estimators, depth, rate, subsample)."""
    return [
        trees.BoostParams(n_estimators=int(ne), max_depth=int(md), learning_rate=float(lr),
                          subsample=float(ss), l2_leaf=float(grid.l2_leaf), seed=int(seed))
        for ne, md, lr, ss in itertools.product(grid.n_estimators, grid.max_depth,
                                                grid.learning_rate, grid.subsample)
    ]


@dataclass(frozen=True)
class ModelReport:
    kind: str
    configs: tuple  # dicts: params + r2/rmse/mae
    best_index: int
    predictions: np.ndarray
    y: np.ndarray
    sample_ids: tuple
    selected_bands_nm: tuple

    @property
    def best(self) -> dict:
        return self.configs[self.best_index]

    def to_dict(self) -> dict:
        best = self.best
        return {
            "model_kind": self.kind,
            "n_configurations": len(self.configs),
            "selected_bands_nm": list(self.selected_bands_nm),
            "best_index": self.best_index,
            "best": best,
            "fit_line": fit_line(self.y, self.predictions),
            "configurations": list(self.configs),
        }


def grid_search(X, y, kind: str, grid: ModelGrid | Sequence[trees.BoostParams], folds: int = 10,
                seed: int = 0, threads: int = 1, sample_ids=(), bands_nm=()) -> ModelReport:
    """Evaluate every configuration on identical folds; best = max R^2, first wins ties."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    configs = grid_configs(grid, seed) if isinstance(grid, ModelGrid) else list(grid)
    if not configs:
        raise ValueError("empty hyperparameter grid")
    labels = fold_assignment(len(y), folds, seed)

    def job(p):
        return kfold_cv(X, y, kind, p, folds=folds, labels=labels)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, configs))
    else:
        results = [job(p) for p in configs]

    rows = []
    for p, res in zip(configs, results):
        d = dataclasses.asdict(p)
        if kind == "gradient":
            d.pop("l2_leaf")
        rows.append({"params": d, "r2": res.r2, "rmse": res.rmse, "mae": res.mae})
    r2 = np.array([res.r2 for res in results])
    best = int(np.argmax(np.where(np.isfinite(r2), r2, -np.inf)))
    ids = tuple(sample_ids) if sample_ids else tuple(f"s{i:04d}" for i in range(len(y)))
    return ModelReport(kind, tuple(rows), best, results[best].predictions, y, ids,
                       tuple(float(b) for b in bands_nm))


def format_metrics(r2: float, rmse: float, mae: float) -> str:
    """Summary in the style of the prediction-plot captions."""
    return f"R² = {r2:.2f}, RMSE = {rmse:.2f}%, MAE = {mae:.2f}%"


# -- stages -------------------------------------------------------------------

@dataclass(frozen=True)
class PreprocessOutcome:
    dataset: SpectralDataset
    window: int
    cutoff_bin: int | None
    leakage: dict


def preprocess_dataset(ds: SpectralDataset, cfg) -> PreprocessOutcome:
    """trim -> SNV -> SG (window fixed or chosen from the data)."""
    out = pp.trim_bands(ds, cfg.trim_head, cfg.trim_tail)
    out = pp.snv_dataset(out)
    cutoff, leakage = None, {}
    if cfg.sg_window == "auto":
        cutoff, leakage = pp.window_leakage(out.X, cfg.sg_candidates, cfg.poly_order,
                                            cfg.power_cutoff)
        window = pp.select_sg_window(out, cfg.sg_candidates, cfg.poly_order, cfg.power_cutoff,
                                     cfg.max_leakage)
    else:
        window = int(cfg.sg_window)
    out = pp.sg_dataset(out, pp.sg_coefficients(window, cfg.poly_order))
    return PreprocessOutcome(out, window, cutoff, leakage)


@dataclass(frozen=True)
class RedundancyOutcome:
    dataset: SpectralDataset
    clusters: tuple
    representatives: list


def reduce_dataset(ds: SpectralDataset, threshold: float) -> RedundancyOutcome:
    ds.require_target()
    cs = complete_linkage(to_distance(correlation_matrix(ds.X)), threshold)
    reps = select_representatives(cs, ds.X, ds.y)
    return RedundancyOutcome(ds.select_bands(reps), cs.clusters, reps)


def cluster_report(ds: SpectralDataset, outcome: RedundancyOutcome, threshold: float) -> dict:
    rep = set(outcome.representatives)
    clusters = []
    for c in outcome.clusters:
        r = next(i for i in c if i in rep)
        clusters.append({"bands_nm": [float(ds.grid[i]) for i in c],
                         "representative_nm": float(ds.grid[r])})
    return {"threshold": threshold, "clusters": clusters}


def selection_report(sel: SelectionResult, config: dict, avg_rank=None) -> dict:
    doc = {
        "config": config,
        "band_order_nm": [float(sel.grid[i]) for i in sel.band_order],
        "avg_rank": None if avg_rank is None else [float(avg_rank[i]) for i in sel.band_order],
        "curve": [{"m": m, "rmse": rmse, "r2": r2} for m, rmse, r2 in sel.curve],
        "chosen_m": sel.chosen_m,
        "selected_bands_nm": sel.selected_nm,
    }
    return doc


def selection_from_report(doc: dict, method: str = "") -> SelectionResult:
    """Rebuild a SelectionResult from its JSON report (grid = band_order sorted)."""
    order_nm = [float(w) for w in doc["band_order_nm"]]
    grid = np.array(sorted(order_nm))
    order = np.array(bands_from_nm(grid, order_nm))
    selected = np.array(sorted(bands_from_nm(grid, doc["selected_bands_nm"])))
    curve = tuple((c["m"], c["rmse"], c["r2"]) for c in doc.get("curve", []))
    return SelectionResult(method or doc.get("config", {}).get("method", ""), grid, order,
                           selected, curve, int(doc["chosen_m"]))


def load_input(cfg: PipelineConfig) -> tuple[SpectralDataset, bytes]:
    if cfg.data_path:
        raw = Path(cfg.data_path).read_bytes()
        return nio.dataset_from_csv(raw.decode()), raw
    synth_cfg = dataclasses.replace(cfg.synth, seed=cfg.synth.seed)
    ds = generate(synth_cfg)
    return ds, nio.dataset_to_csv(ds).encode()


def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError(name, str(exc)) from exc
        return inner
    return wrap


def run_pipeline(cfg: PipelineConfig, threads: int | None = None, out_dir=None,
                 write: bool = True) -> dict:
    """Run every stage; returns the report dict and writes the output files.

    The JSON report contains no timings, paths or thread counts, so identical
    configs give byte-identical reports.
    """
    threads = threads or cfg.threads or 1
    out_dir = Path(out_dir or cfg.out)
    timings = {}

    def timed(name, fn, *a, **kw):
        t0 = time.perf_counter()
        res = _stage(name)(fn)(*a, **kw)
        timings[name] = time.perf_counter() - t0
        log.info("stage %s done in %.1fs", name, timings[name])
        return res

    ds, raw = timed("load", load_input, cfg)
    ds.require_target()
    pre = timed("preprocess", preprocess_dataset, ds, cfg.preprocess)
    red = timed("redundancy", reduce_dataset, pre.dataset, cfg.redundancy_threshold)
    rds = red.dataset

    ec = cfg.ensemble
    ens_cfg = EnsembleConfig(n_iterations=ec.n_iterations, train_fraction=ec.train_fraction,
                             master_seed=cfg.seed, rankers=ec.rankers, n_trees=ec.n_trees)
    ranking = timed("ensemble", run_ensemble_ranking, rds, ens_cfg, threads)
    ens_sel = timed("ensemble-count", select_optimal_count, ranking, rds, ec.epsilon, ec.m_max)
    pc = cfg.plsr
    pls_sel = timed("plsr", plsr_backward_select, rds, pc.folds, cfg.seed, pc.min_features,
                    pc.a_max)

    common = timed("intersect", intersect_selections, ens_sel, pls_sel)
    fallback = not common
    if fallback:
        common = sorted(set(ens_sel.selected_bands.tolist()) | set(pls_sel.selected_bands.tolist()))
        log.warning("empty intersection; falling back to the union of %d bands", len(common))
    final = rds.select_bands(common)
    bands_nm = [float(w) for w in final.grid]
    ids = tuple(m.sample_id for m in final.meta)

    model_reports = {}
    for kind in MODEL_KINDS:
        grid = getattr(cfg.models, kind)
        model_reports[kind] = timed(f"train-{kind}", grid_search, final.X, final.y, kind, grid,
                                    cfg.models.folds, cfg.seed, threads, ids, bands_nm)
    best_kind = max(MODEL_KINDS, key=lambda k: (model_reports[k].best["r2"],
                                                -MODEL_KINDS.index(k)))

    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "provenance": {
            "config_sha256": config_hash(cfg),
            "dataset_digest": nio.git_blob_digest(raw),
            "master_seed": cfg.seed,
        },
        "config": config_dict(cfg),
        "preprocess": {
            "n_bands_input": ds.n_bands,
            "n_bands_trimmed": pre.dataset.n_bands,
            "sg_window": pre.window,
            "sg_cutoff_bin": pre.cutoff_bin,
            "sg_leakage": {str(k): v for k, v in pre.leakage.items()},
        },
        "redundancy": cluster_report(pre.dataset, red, cfg.redundancy_threshold),
        "ensemble": selection_report(ens_sel, {"method": "ensemble",
                                               **dataclasses.asdict(ens_cfg),
                                               "epsilon": ec.epsilon, "m_max": ec.m_max},
                                     ranking.avg_rank),
        "plsr": selection_report(pls_sel, {"method": "plsr", **dataclasses.asdict(pc),
                                           "seed": cfg.seed}),
        "intersection": {"bands_nm": bands_nm, "fallback_to_union": fallback},
        "models": {k: r.to_dict() for k, r in model_reports.items()},
        "best_model_kind": best_kind,
    }
    if write:
        write_outputs(out_dir, report, ens_sel, pls_sel, model_reports, final, ranking)
        nio.write_json(out_dir / "timings.json", timings)
    return report


def write_outputs(out_dir: Path, report, ens_sel, pls_sel, model_reports, final, ranking) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    nio.write_json(out_dir / "pipeline_report.json", report)
    for name, sel in (("ensemble", ens_sel), ("plsr", pls_sel)):
        nio.write_rows(out_dir / f"{name}_curve.csv", ["m", "rmse", "r2"], sel.curve)
    grid_nm = [repr(float(w)) for w in ens_sel.grid]
    nio.write_rows(out_dir / "ensemble_contributions.csv", ["iteration", "ranker"] + grid_nm,
                   [[i, name] + list(v) for (i, name), v in ranking.contributions.items()])
    for kind, rep in model_reports.items():
        nio.write_rows(out_dir / f"predictions_{kind}.csv",
                       ["sample_id", "measured_N_pct", "predicted_N_pct"],
                       zip(rep.sample_ids, rep.y.tolist(), rep.predictions.tolist()))
        best = dict(rep.best["params"])
        best.setdefault("l2_leaf", 0.0)
        model = fit_model(kind, final.X, final.y, trees.BoostParams(**best))
        doc = trees.model_to_dict(model)
        doc["bands_nm"] = [float(w) for w in final.grid]
        nio.write_json(out_dir / f"model_{kind}.json", doc)
