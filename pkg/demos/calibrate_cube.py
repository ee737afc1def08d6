"""Build a small synthetic cube on disk, then calibrate it with the CLI.

The scene has a white panel row, a dark row and two leaves whose true
reflectance is known, so the printed spectra can be checked by eye.
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from nitrospec import cube as cb
from nitrospec.io import read_dataset

work = Path(tempfile.mkdtemp(prefix="nitrospec-cube-"))
wl = tuple(np.linspace(400, 1000, 12).round(3))
rng = np.random.default_rng(0)

dark_level, white_level = 80.0, 3200.0
leaf_a = np.linspace(0.05, 0.45, 12)
leaf_b = np.linspace(0.08, 0.30, 12)
raw = np.full((6, 10, 12), dark_level)
raw[0] = white_level
raw[2:4, 0:4] = dark_level + (white_level - dark_level) * leaf_a / 0.99
raw[2:4, 5:9] = dark_level + (white_level - dark_level) * leaf_b / 0.99
raw = np.round(raw + rng.normal(0, 2, raw.shape)).clip(0, 65535)

header = cb.CubeHeader(6, 10, 12, "bil", "uint16", wl)
cb.save_cube(cb.HyperCube(header, raw), work / "vine.hdr")
rois = [cb.Roi("white", "white_ref", 0, 0, 10, 1), cb.Roi("dark", "dark_ref", 0, 5, 10, 1),
        cb.Roi("leaf_a", "target", 0, 2, 4, 2), cb.Roi("leaf_b", "target", 5, 2, 4, 2)]
(work / "rois.csv").write_text(cb.format_rois(rois))

subprocess.run([sys.executable, "-m", "nitrospec.cli", "calibrate", str(work / "vine.hdr"),
                "--rois", str(work / "rois.csv"), "--out", str(work), "--rgb",
                "--cultivar", "Chardonnay", "--stage", "bloom"], check=True)

ds = read_dataset(work / "spectra.csv")
for meta, row, truth in zip(ds.meta, ds.X, (leaf_a, leaf_b)):
    print(f"{meta.sample_id}: max abs error vs. truth {np.max(np.abs(row - truth)):.4f}")
print(f"RGB preview: {work / 'rgb.ppm'}")
