import json

import numpy as np
import pytest

from nitrospec import cube as cb
from nitrospec.cli import main
from nitrospec.io import read_dataset

CONFIG = """\
seed = 11
[synth]
n_samples = 50
n_bands = 120
[ensemble]
n_iterations = 2
n_trees = 10
[plsr]
a_max = 5
[models]
folds = 5
[models.newton]
n_estimators = [20]
max_depth = [2]
learning_rate = [0.1]
subsample = [0.7, 1.0]
[models.gradient]
n_estimators = [20]
max_depth = [2]
learning_rate = [0.1]
subsample = [1.0]
"""


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.toml").write_text(CONFIG)
    assert main(["synth", "--config", str(d / "cfg.toml"), "--out", str(d)]) == 0
    return d


def run(work, *args):
    return main([*args, "--config", str(work / "cfg.toml"), "--out", str(work)])


def test_synth_written(work):
    ds = read_dataset(work / "dataset.csv")
    assert ds.X.shape == (50, 120) and ds.has_target


def test_synth_seed_override(work, tmp_path):
    assert main(["synth", "--config", str(work / "cfg.toml"), "--out", str(tmp_path),
                 "--seed", "99"]) == 0
    assert (tmp_path / "dataset.csv").read_bytes() != (work / "dataset.csv").read_bytes()


def test_preprocess(work):
    assert run(work, "preprocess", "--data", str(work / "dataset.csv")) == 0
    meta = json.loads((work / "preprocess.json").read_text())
    assert meta["sg_window"] % 2 == 1 and meta["n_bands"] == 108
    assert read_dataset(work / "preprocessed.csv").n_bands == 108


def test_cluster(work):
    assert run(work, "cluster", "--data", str(work / "dataset.csv"), "--threshold", "0.08") == 0
    doc = json.loads((work / "clusters.json").read_text())
    reduced = read_dataset(work / "reduced.csv")
    assert reduced.n_bands == len(doc["clusters"]) <= 120


def test_selection_intersect_train_evaluate(work):
    data = str(work / "dataset.csv")
    assert run(work, "select-ensemble", "--data", data) == 0
    assert run(work, "select-plsr", "--data", data) == 0
    ens = json.loads((work / "selection_ensemble.json").read_text())
    pls = json.loads((work / "selection_plsr.json").read_text())
    assert ens["selected_bands_nm"] and pls["selected_bands_nm"]

    assert run(work, "intersect", str(work / "selection_ensemble.json"),
               str(work / "selection_plsr.json")) == 0
    inter = json.loads((work / "intersection.json").read_text())
    expected = sorted(set(ens["selected_bands_nm"]) & set(pls["selected_bands_nm"]))
    assert inter["bands_nm"] == expected and inter["n_bands"] == len(expected)

    bands = work / "selection_ensemble.json"
    assert run(work, "train", "--data", data, "--kind", "newton", "--bands", str(bands)) == 0
    train = json.loads((work / "train_newton.json").read_text())
    assert train["n_configurations"] == len(train["configurations"]) == 2
    model = json.loads((work / "model_newton.json").read_text())
    assert model["bands_nm"] == ens["selected_bands_nm"]

    assert run(work, "evaluate", "--data", data, "--model", str(work / "model_newton.json")) == 0
    ev = json.loads((work / "evaluation.json").read_text())
    assert ev["n_samples"] == 50 and ev["r2"] > 0


def test_pipeline_thread_determinism(work, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = str(work / "cfg.toml")
    assert main(["pipeline", "--config", cfg, "--out", str(a), "--threads", "1"]) == 0
    assert main(["pipeline", "--config", cfg, "--out", str(b), "--threads", "4"]) == 0
    for name in ("pipeline_report.json", "predictions_newton.csv", "model_gradient.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_error_exit_code(work, tmp_path, capsys):
    code = main(["preprocess", "--config", str(work / "cfg.toml"), "--out", str(tmp_path),
                 "--data", str(tmp_path / "nope.csv")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error:")


def test_bad_threads_rejected():
    with pytest.raises(SystemExit):
        main(["synth", "--threads", "zero"])


@pytest.fixture()
def cube_files(tmp_path):
    # 4 lines x 6 samples x 5 bands: white strip, dark strip, two targets
    vals = np.zeros((4, 6, 5))
    vals[0, :, :] = 1100.0
    vals[1, :, :] = 100.0
    vals[2, 0:3, :] = 100.0 + 1000.0 * 0.3
    vals[2, 3:6, :] = 100.0 + 1000.0 * 0.6
    vals[3, :, :] = 600.0
    h = cb.CubeHeader(4, 6, 5, "bil", "uint16", (500.0, 510.0, 520.0, 530.0, 540.0))
    hdr = tmp_path / "plant.hdr"
    cb.save_cube(cb.HyperCube(h, vals), hdr)
    rois = [cb.Roi("W", "white_ref", 0, 0, 6, 1), cb.Roi("D", "dark_ref", 0, 1, 6, 1),
            cb.Roi("t1", "target", 0, 2, 3, 1), cb.Roi("t2", "target", 3, 2, 3, 1)]
    (tmp_path / "rois.csv").write_text(cb.format_rois(rois))
    return hdr, tmp_path / "rois.csv"


def test_calibrate_leaf(cube_files, tmp_path):
    hdr, rois = cube_files
    out = tmp_path / "out"
    assert main(["calibrate", str(hdr), "--rois", str(rois), "--out", str(out),
                 "--white-abs", "0.9", "--rgb"]) == 0
    ds = read_dataset(out / "spectra.csv")
    assert [m.sample_id for m in ds.meta] == ["t1", "t2"]
    np.testing.assert_allclose(ds.X[0], 0.27, atol=1e-12)
    np.testing.assert_allclose(ds.X[1], 0.54, atol=1e-12)
    img = cb.read_ppm((out / "rgb.ppm").read_bytes())
    assert img.shape == (4, 6, 3)


def test_calibrate_canopy(cube_files, tmp_path):
    hdr, rois = cube_files
    out = tmp_path / "out"
    assert main(["calibrate", str(hdr), "--rois", str(rois), "--out", str(out),
                 "--level", "canopy", "--sample-id", "plot7"]) == 0
    ds = read_dataset(out / "spectra.csv")
    assert ds.n_samples == 1 and ds.meta[0].sample_id == "plot7"
    assert ds.meta[0].level == "canopy"
    np.testing.assert_allclose(ds.X[0], 0.45 * 0.99, atol=1e-12)


def test_calibrate_requires_references(cube_files, tmp_path):
    hdr, _ = cube_files
    (tmp_path / "r2.csv").write_text(cb.format_rois([cb.Roi("t", "target", 0, 2, 1, 1)]))
    with pytest.raises(SystemExit, match="white_ref"):
        main(["calibrate", str(hdr), "--rois", str(tmp_path / "r2.csv"),
              "--out", str(tmp_path / "o")])
