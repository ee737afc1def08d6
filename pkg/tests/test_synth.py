import numpy as np
import pytest

from nitrospec import synth
from nitrospec.synth import SynthConfig


class TestSynth:
    def test_default_shape(self):
        cfg = SynthConfig()
        ds = synth.generate(cfg)
        assert ds.X.shape == (200, 274)
        assert ds.grid[0] == 400.0 and ds.grid[-1] == 1000.0
        assert np.all((ds.y >= 1.63) & (ds.y <= 3.43))
        assert {m.level for m in ds.meta} == {"leaf"}
        assert {m.stage for m in ds.meta} == {"bloom", "veraison"}

    def test_more_nitrogen_deeper_dips(self):
        cfg = SynthConfig(n_samples=30, noise_sd=0.0, seed=5)
        ds = synth.generate(cfg)
        lo, hi = int(np.argmin(ds.y)), int(np.argmax(ds.y))
        for c in cfg.planted_centers_nm:
            k = int(np.argmin(np.abs(ds.grid - c)))
            assert ds.X[hi, k] < ds.X[lo, k]

    def test_same_seed_same_data(self):
        a = synth.generate(SynthConfig(n_samples=10, seed=9))
        b = synth.generate(SynthConfig(n_samples=10, seed=9))
        c = synth.generate(SynthConfig(n_samples=10, seed=10))
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
        assert not np.array_equal(a.y, c.y)

    def test_prefix_stable(self):
        a = synth.generate(SynthConfig(n_samples=5, seed=9))
        b = synth.generate(SynthConfig(n_samples=12, seed=9))
        np.testing.assert_array_equal(a.X, b.X[:5])

    def test_noiseless_differs_only_through_nitrogen(self):
        cfg = SynthConfig()
        diff = synth.noiseless(3.0, cfg) - synth.noiseless(2.0, cfg)
        np.testing.assert_allclose(diff[0], -synth.absorption(cfg.grid, cfg), atol=1e-15)

    def test_zero_depth_spectra_ignore_nitrogen(self):
        cfg = SynthConfig(n_samples=50, noise_sd=0.0, depth_per_N=0.0)
        ds = synth.generate(cfg)
        assert np.ptp(ds.X, axis=0).max() == 0.0

    def test_baseline_looks_like_vegetation(self):
        g = np.linspace(400, 1000, 274)
        b = synth.baseline(g)
        at = lambda w: b[int(np.argmin(np.abs(g - w)))]
        assert at(550) > at(480) and at(550) > at(670)
        assert at(850) > 3 * at(670)

    @pytest.mark.parametrize("kw", [dict(planted_centers_nm=(1200.0,)), dict(n_range=(3.0, 2.0)),
                                    dict(grid_range_nm=(1000.0, 400.0)), dict(noise_sd=-1.0)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            SynthConfig(**kw)
