import json
import os

import numpy as np
import pytest

from srrecon.grid import read_grid
from srrecon.masks import MaskSpec, center_block_mask, poisson_disk_mask
from srrecon.operators import ForwardModel, adjoint, crop_kspace, dft, forward, normal
from srrecon.phantom import (
    SENS_SMOOTHNESS_BOUND,
    PhantomSpec,
    acquire,
    build_dataset,
    downsample_sens,
    estimate_sens_lowres,
    load_manifest,
    load_record,
    make_phantom,
    make_sens,
)

from helpers import rel_err


class TestPhantom:
    def test_zero_shapes(self):
        g = make_phantom(PhantomSpec(hr_dims=(16, 16), n_shapes=0))
        assert not g.data.any()

    def test_deterministic(self):
        a = make_phantom(PhantomSpec(hr_dims=(32, 32), seed=5))
        b = make_phantom(PhantomSpec(hr_dims=(32, 32), seed=5))
        assert np.array_equal(a.data, b.data)

    def test_magnitude_bounded_over_100(self):
        peak = max(
            np.abs(make_phantom(PhantomSpec(hr_dims=(24, 24), seed=s)).data).max()
            for s in range(100)
        )
        assert peak <= 1.0


class TestSens:
    def test_single_coil_all_ones(self):
        sens = make_sens((16, 16), 1, 0)
        assert np.allclose(np.abs(sens.maps[0]), 1.0, atol=1e-12)

    def test_rss_unity_8_coils(self):
        sens = make_sens((32, 32), 8, 2)
        assert np.allclose(sens.rss(), 1.0, atol=1e-6)

    def test_smoothness(self):
        sens = make_sens((64, 64), 8, 3)
        gy = np.abs(np.diff(sens.maps, axis=1)).max()
        gx = np.abs(np.diff(sens.maps, axis=2)).max()
        assert max(gy, gx) < SENS_SMOOTHNESS_BOUND


class TestAcquire:
    def _setup(self, sigma, seed=0):
        hr, lr = (32, 32), (16, 16)
        x = make_phantom(PhantomSpec(hr_dims=hr, seed=1))
        sens = make_sens(hr, 4, 2)
        mask = poisson_disk_mask(MaskSpec(dims=lr, target_af=2, center_size=(6, 6), seed=3))
        return x, sens, mask, lr, acquire(x, sens, mask, lr, sigma, seed)

    def test_noiseless_exact(self):
        x, sens, mask, lr, y = self._setup(0.0)
        model = ForwardModel(mask.sampled, lr, x.dims, sens)
        assert np.array_equal(y.data, forward(model, x.data))

    def test_zero_image(self):
        hr, lr = (16, 16), (8, 8)
        from srrecon.grid import ComplexGrid

        x = ComplexGrid(np.zeros(hr, dtype=complex))
        sens = make_sens(hr, 2, 0)
        mask = poisson_disk_mask(MaskSpec(dims=lr, target_af=2, center_size=(4, 4)))
        assert not acquire(x, sens, mask, lr, 0.0).data.any()

    def test_noise_statistics(self):
        hr, lr = (128, 128), (128, 128)
        from srrecon.grid import ComplexGrid

        x = ComplexGrid(np.zeros(hr, dtype=complex))
        sens = make_sens(hr, 1, 0)
        mask = poisson_disk_mask(MaskSpec(dims=lr, target_af=1, center_size=(8, 8)))
        sigma = 0.05
        y = acquire(x, sens, mask, lr, sigma, 7)
        assert abs(np.std(y.data.real) - sigma) / sigma < 0.05
        assert abs(np.std(y.data.imag) - sigma) / sigma < 0.05

    def test_unsampled_exactly_zero(self):
        x, sens, mask, lr, y = self._setup(0.1)
        assert not y.data[:, ~mask.sampled].any()


class TestSensEstimate:
    def test_single_coil_ones_on_support(self):
        hr = (32, 32)
        x = make_phantom(PhantomSpec(hr_dims=hr, seed=4))
        sens = make_sens(hr, 1, 0)
        mask = center_block_mask(hr, (12, 12))
        y = acquire(x, sens, mask, hr, 0.0)
        y_center = crop_kspace(y.data, (12, 12))
        from srrecon.grid import ComplexGrid

        est = estimate_sens_lowres(ComplexGrid(y_center), hr)
        support = est.rss() > 0.5
        assert np.allclose(np.abs(est.maps[0][support]), 1.0, atol=1e-9)

    def test_recovers_smooth_maps(self):
        hr = (64, 64)
        x = make_phantom(PhantomSpec(hr_dims=hr, seed=6, n_shapes=12))
        sens = make_sens(hr, 4, 1)
        mask = center_block_mask(hr, (24, 24))
        y = acquire(x, sens, mask, hr, 0.0)
        y_center = crop_kspace(y.data, (24, 24))
        from srrecon.grid import ComplexGrid

        est = estimate_sens_lowres(ComplexGrid(y_center), hr)
        # compare where the object carries solid signal (ring nulls excluded)
        support = np.abs(x.data) > 0.3
        err = np.abs(np.abs(est.maps) - np.abs(sens.maps))[:, support]
        assert np.percentile(err, 99) < 0.1
        assert np.median(err) < 0.01

    def test_zero_calibration(self):
        from srrecon.grid import ComplexGrid

        est = estimate_sens_lowres(ComplexGrid(np.zeros((2, 8, 8), dtype=complex)), (16, 16))
        assert not est.maps.any()


class TestDownsampleSens:
    def test_rss_normalized(self):
        sens = make_sens((32, 32), 4, 5)
        lr = downsample_sens(sens, (16, 16))
        assert np.allclose(lr.rss()[lr.rss() > 0], 1.0, atol=1e-9)


class TestDataset:
    def test_empty(self, tmp_path):
        ds = build_dataset(
            0,
            PhantomSpec(hr_dims=(16, 16)),
            MaskSpec(dims=(8, 8), target_af=2, center_size=(4, 4)),
            str(tmp_path),
        )
        assert ds.records == []
        assert os.path.exists(ds.manifest_path)

    def test_rebuild_bit_identical(self, tmp_path):
        args = (
            2,
            PhantomSpec(hr_dims=(16, 16), sigma_noise=0.02),
            MaskSpec(dims=(8, 8), target_af=2, center_size=(4, 4)),
        )
        d1 = build_dataset(*args, str(tmp_path / "a"), n_coils=2, base_seed=3)
        d2 = build_dataset(*args, str(tmp_path / "b"), n_coils=2, base_seed=3)
        for r1, r2 in zip(d1.records, d2.records):
            for key in r1.files:
                b1 = open(r1.files[key] + ".dat", "rb").read()
                b2 = open(r2.files[key] + ".dat", "rb").read()
                assert b1 == b2

    def test_split_counts(self, tmp_path):
        ds = build_dataset(
            10,
            PhantomSpec(hr_dims=(16, 16)),
            MaskSpec(dims=(8, 8), target_af=2, center_size=(4, 4), af_tolerance=0.15),
            str(tmp_path),
            n_coils=2,
        )
        assert len(ds.split("train")) == 8
        assert len(ds.split("test")) == 2

    def test_manifest_roundtrip_and_consistency(self, small_dataset):
        ds = load_manifest(small_dataset.manifest_path)
        assert len(ds.records) == 6
        for rec in ds.records:
            truth, sens, y, mask = load_record(rec)
            assert sens.spatial_dims == truth.dims
            assert y.dims == (sens.n_coils,) + mask.dims

    def test_noiseless_consistency(self, tmp_path):
        # sigma 0: adjoint of acquired y equals A*A x
        ds = build_dataset(
            1,
            PhantomSpec(hr_dims=(16, 16), sigma_noise=0.0),
            MaskSpec(dims=(8, 8), target_af=2, center_size=(4, 4)),
            str(tmp_path),
            n_coils=3,
        )
        truth, sens, y, mask = load_record(ds.records[0])
        model = ForwardModel(mask.sampled, mask.dims, truth.dims, sens)
        assert rel_err(adjoint(model, y.data), normal(model, truth.data)) < 1e-12
