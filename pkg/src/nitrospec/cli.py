"""Command-line entry point (``nitrospec <subcommand>``)."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import cube as cb
from . import io as nio
from . import pipeline as pl
from . import trees
from .config import PipelineConfig, config_dict, load_config
from .cv import fit_line, regression_metrics
from .ensemble import EnsembleConfig, run_ensemble_ranking, select_optimal_count
from .plsr import plsr_backward_select
from .preprocess import SampleMeta, SpectralDataset
from .synth import generate

log = logging.getLogger("nitrospec")


def _threads(text: str) -> int:
    if text == "auto":
        return os.cpu_count() or 1
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("thread count must be >= 1")
    return n


def _seed(text: str) -> int:
    n = int(text)
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return n


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML config file")
    p.add_argument("--seed", type=_seed, help="master seed (overrides config)")
    p.add_argument("--out", type=Path, help="output directory (overrides config)")
    p.add_argument("--threads", type=_threads, help="worker threads, integer or 'auto'")
    p.add_argument("-v", "--verbose", action="store_true")


def _settings(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    data = getattr(args, "data", None)
    return cfg.with_overrides(seed=args.seed, out=str(args.out) if args.out else None,
                              threads=args.threads, data_path=str(data) if data else None)


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(cfg: PipelineConfig) -> SpectralDataset:
    if not cfg.data_path:
        raise SystemExit("error: no input dataset (use --data or [data] path in the config)")
    return nio.read_dataset(cfg.data_path)


# -- subcommands ----------------------------------------------------------------

def cmd_calibrate(args, cfg):
    cube = cb.load_cube(args.header, args.payload)
    rois = cb.read_rois(args.rois)
    by_kind = {k: [r for r in rois if r.kind == k] for k in cb.ROI_KINDS}
    if len(by_kind["white_ref"]) != 1 or len(by_kind["dark_ref"]) != 1:
        raise SystemExit("error: ROI file needs exactly one white_ref and one dark_ref row")
    if not by_kind["target"]:
        raise SystemExit("error: ROI file has no target rows")
    cal = cb.correct_reflectance(cube, by_kind["white_ref"][0], by_kind["dark_ref"][0],
                                 args.white_abs)
    spectra = [cb.extract_roi_spectrum(cal, r) for r in by_kind["target"]]
    if args.level == "canopy":
        spectra = [cb.mean_of_rois(spectra)]
        ids = [args.sample_id or Path(args.header).stem]
    else:
        ids = [r.id for r in by_kind["target"]]
    meta = tuple(SampleMeta(i, args.cultivar, args.stage, args.season, args.level) for i in ids)
    ds = SpectralDataset(cal.grid, np.array([s.reflectance for s in spectra]),
                         np.full(len(ids), np.nan), meta)
    out = _out(cfg)
    nio.write_dataset(out / "spectra.csv", ds)
    if args.rgb:
        cb.write_ppm(out / "rgb.ppm", cb.render_rgb(cal))
    print(out / "spectra.csv")


def cmd_preprocess(args, cfg):
    res = pl.preprocess_dataset(_dataset(cfg), cfg.preprocess)
    out = _out(cfg)
    nio.write_dataset(out / "preprocessed.csv", res.dataset)
    nio.write_json(out / "preprocess.json", {
        "sg_window": res.window, "poly_order": cfg.preprocess.poly_order,
        "sg_cutoff_bin": res.cutoff_bin,
        "sg_leakage": {str(k): v for k, v in res.leakage.items()},
        "n_bands": res.dataset.n_bands,
    })
    print(out / "preprocessed.csv")


def cmd_cluster(args, cfg):
    ds = _dataset(cfg)
    threshold = args.threshold if args.threshold is not None else cfg.redundancy_threshold
    res = pl.reduce_dataset(ds, threshold)
    out = _out(cfg)
    nio.write_json(out / "clusters.json", pl.cluster_report(ds, res, threshold))
    nio.write_dataset(out / "reduced.csv", res.dataset)
    print(out / "clusters.json")


def cmd_select_ensemble(args, cfg):
    ds = _dataset(cfg)
    ec = cfg.ensemble
    ens = EnsembleConfig(ec.n_iterations, ec.train_fraction, cfg.seed, ec.rankers, ec.n_trees)
    ranking = run_ensemble_ranking(ds, ens, threads=cfg.threads)
    sel = select_optimal_count(ranking, ds, ec.epsilon, ec.m_max)
    doc = pl.selection_report(sel, {"method": "ensemble", **dataclasses.asdict(ens),
                                    "epsilon": ec.epsilon, "m_max": ec.m_max},
                              ranking.avg_rank)
    out = _out(cfg)
    nio.write_json(out / "selection_ensemble.json", doc)
    nio.write_rows(out / "ensemble_curve.csv", ["m", "rmse", "r2"], sel.curve)
    print(out / "selection_ensemble.json")


def cmd_select_plsr(args, cfg):
    ds = _dataset(cfg)
    pc = cfg.plsr
    sel = plsr_backward_select(ds, pc.folds, cfg.seed, pc.min_features, pc.a_max)
    doc = pl.selection_report(sel, {"method": "plsr", **dataclasses.asdict(pc),
                                    "seed": cfg.seed})
    out = _out(cfg)
    nio.write_json(out / "selection_plsr.json", doc)
    nio.write_rows(out / "plsr_curve.csv", ["m", "rmse", "r2"], sel.curve)
    print(out / "selection_plsr.json")


def cmd_intersect(args, cfg):
    docs = [nio.read_json(p) for p in args.selections]
    lists = [d["selected_bands_nm"] for d in docs]
    common = pl.intersect_nm(*lists, tol=args.tol)
    if not common:
        log.warning("selections share no bands")
    out = _out(cfg)
    nio.write_json(out / "intersection.json", {
        "inputs": [str(p) for p in args.selections],
        "tolerance_nm": args.tol,
        "bands_nm": common,
        "n_bands": len(common),
    })
    print(out / "intersection.json")


def _bands_from_args(args, ds: SpectralDataset) -> list[int]:
    if not args.bands:
        return list(range(ds.n_bands))
    doc = nio.read_json(args.bands)
    nm = doc.get("bands_nm", doc.get("selected_bands_nm"))
    if nm is None:
        raise SystemExit(f"error: {args.bands} has neither bands_nm nor selected_bands_nm")
    return pl.bands_from_nm(ds.grid, nm, tol=args.tol)


def cmd_train(args, cfg):
    ds = _dataset(cfg)
    ds.require_target()
    sub = ds.select_bands(_bands_from_args(args, ds))
    grid = getattr(cfg.models, args.kind)
    rep = pl.grid_search(sub.X, sub.y, args.kind, grid, cfg.models.folds, cfg.seed, cfg.threads,
                         tuple(m.sample_id for m in sub.meta), sub.grid.tolist())
    best = dict(rep.best["params"])
    best.setdefault("l2_leaf", 0.0)
    model = pl.fit_model(args.kind, sub.X, sub.y, trees.BoostParams(**best))
    doc = trees.model_to_dict(model)
    doc["bands_nm"] = [float(w) for w in sub.grid]
    out = _out(cfg)
    nio.write_json(out / f"model_{args.kind}.json", doc)
    report = rep.to_dict()
    report["config"] = config_dict(cfg)
    nio.write_json(out / f"train_{args.kind}.json", report)
    nio.write_rows(out / f"predictions_{args.kind}.csv",
                   ["sample_id", "measured_N_pct", "predicted_N_pct"],
                   zip(rep.sample_ids, rep.y.tolist(), rep.predictions.tolist()))
    print(pl.format_metrics(rep.best["r2"], rep.best["rmse"], rep.best["mae"]))


def cmd_evaluate(args, cfg):
    ds = _dataset(cfg)
    doc = nio.read_json(args.model)
    model = trees.model_from_dict(doc)
    bands = pl.bands_from_nm(ds.grid, doc.get("bands_nm", ds.grid.tolist()), tol=args.tol)
    pred = model.predict(ds.X[:, bands])
    out = _out(cfg)
    ids = [m.sample_id for m in ds.meta]
    nio.write_rows(out / "predictions.csv", ["sample_id", "measured_N_pct", "predicted_N_pct"],
                   zip(ids, ds.y.tolist(), pred.tolist()))
    result = {"model": str(args.model), "n_samples": ds.n_samples}
    if ds.has_target:
        m = regression_metrics(ds.y, pred)
        result.update(m)
        result["fit_line"] = fit_line(ds.y, pred)
        print(pl.format_metrics(m["r2"], m["rmse"], m["mae"]))
    nio.write_json(out / "evaluation.json", result)


def cmd_synth(args, cfg):
    synth = cfg.synth
    if args.seed is not None:
        synth = dataclasses.replace(synth, seed=args.seed)
    if args.n_samples is not None:
        synth = dataclasses.replace(synth, n_samples=args.n_samples)
    out = _out(cfg)
    nio.write_dataset(out / "dataset.csv", generate(synth))
    print(out / "dataset.csv")


def cmd_pipeline(args, cfg):
    report = pl.run_pipeline(cfg, threads=cfg.threads)
    best = report["models"][report["best_model_kind"]]["best"]
    print(f"best model: {report['best_model_kind']}; "
          + pl.format_metrics(best["r2"], best["rmse"], best["mae"]))
    print(Path(cfg.out) / "pipeline_report.json")


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nitrospec",
                                     description="Nitrogen estimation from reflectance spectra.")
    subs = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, data=True):
        p = subs.add_parser(name, help=help_text)
        _common(p)
        if data:
            p.add_argument("--data", type=Path, help="SpectralDataset CSV (overrides config)")
        p.set_defaults(func=func)
        return p

    p = add("calibrate", cmd_calibrate, "cube + ROIs -> reflectance spectra CSV", data=False)
    p.add_argument("header", type=Path, help="cube header file")
    p.add_argument("--payload", type=Path, help="raw payload (default: sibling of header)")
    p.add_argument("--rois", type=Path, required=True, help="ROI CSV")
    p.add_argument("--white-abs", type=float, default=cb.DEFAULT_WHITE_ABS)
    p.add_argument("--level", choices=("leaf", "canopy"), default="leaf",
                   help="leaf: one row per target ROI; canopy: one averaged row")
    p.add_argument("--sample-id")
    p.add_argument("--cultivar", default="")
    p.add_argument("--stage", default="")
    p.add_argument("--season", default="")
    p.add_argument("--rgb", action="store_true", help="also write an RGB composite (PPM)")

    add("preprocess", cmd_preprocess, "trim, SNV and Savitzky-Golay smoothing")
    p = add("cluster", cmd_cluster, "redundant-band removal by complete linkage")
    p.add_argument("--threshold", type=float)
    add("select-ensemble", cmd_select_ensemble, "ensemble feature ranking and count selection")
    add("select-plsr", cmd_select_plsr, "PLSR backward elimination")

    p = add("intersect", cmd_intersect, "bands common to several selection reports", data=False)
    p.add_argument("selections", type=Path, nargs="+")
    p.add_argument("--tol", type=float, default=1e-6, help="wavelength match tolerance in nm")

    p = add("train", cmd_train, "grid-searched boosted-tree training")
    p.add_argument("--kind", choices=pl.MODEL_KINDS, default="newton")
    p.add_argument("--bands", type=Path, help="selection or intersection JSON")
    p.add_argument("--tol", type=float, default=1e-6)

    p = add("evaluate", cmd_evaluate, "apply a saved model to a dataset")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--tol", type=float, default=1e-6)

    p = add("synth", cmd_synth, "generate a synthetic dataset", data=False)
    p.add_argument("--n-samples", type=int)

    add("pipeline", cmd_pipeline, "run every stage end to end")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _settings(args)
        args.func(args, cfg)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
