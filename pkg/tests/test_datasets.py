import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edlab import datasets as ds
from edlab.ndcore import RngStream

CHI2_99_24DOF = 42.97982  # 99th percentile of chi^2 with 24 dof


class TestToy2d:
    @pytest.mark.parametrize("name", ds.TOY2D_NAMES)
    def test_box_invariant_and_determinism(self, name):
        pts, logp = ds.sample_toy2d(name, 5000, RngStream(1))
        assert pts.shape == (5000, 2)
        assert np.max(np.abs(pts)) <= ds.BOX_HALF_WIDTH
        pts2, _ = ds.sample_toy2d(name, 5000, RngStream(1))
        assert np.array_equal(pts, pts2)
        if name in ("gauss25", "eightgauss"):
            assert logp is not None and logp.shape == (5000,)
        else:
            assert logp is None

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError):
            ds.sample_toy2d("spiral99", 10, RngStream(0))

    def test_gauss25_mode_occupancy_chi2(self):
        pts, _ = ds.sample_toy2d("gauss25", 100_000, RngStream(7))
        cells = np.round((pts + 4.0) / 2.0).astype(int)
        counts = np.zeros((5, 5))
        for a, b in cells:
            counts[a, b] += 1
        chi2 = float(np.sum((counts - 4000.0) ** 2 / 4000.0))
        assert chi2 < CHI2_99_24DOF

    def test_gauss25_logp_at_centre_golden(self):
        mpmath.mp.dps = 50
        centre = (0.0, 0.0)
        total = mpmath.mpf(0)
        for mx in (-4, -2, 0, 2, 4):
            for my in (-4, -2, 0, 2, 4):
                d2 = (centre[0] - mx) ** 2 + (centre[1] - my) ** 2
                total += mpmath.exp(-mpmath.mpf(d2) / (2 * mpmath.mpf("0.01")))
        expected = float(mpmath.log(total / 25 / (2 * mpmath.pi * mpmath.mpf("0.01"))))
        got = ds.exact_logp_fn("gauss25")(np.array([[0.0, 0.0]]))[0]
        assert got == pytest.approx(expected, abs=1e-12)

    def test_gauss25_density_integrates_to_one(self):
        g = np.linspace(-4.5, 4.5, 901)
        gx, gy = np.meshgrid(g, g)
        grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
        mass = np.sum(np.exp(ds.exact_logp_fn("gauss25")(grid))) * (g[1] - g[0]) ** 2
        assert abs(mass - 1.0) < 0.01

    def test_checkerboard_stays_in_active_cells(self):
        pts, _ = ds.sample_toy2d("checkerboard", 100_000, RngStream(3))
        inside = np.max(np.abs(pts), axis=1) <= 4.0
        assert np.all(inside)
        i = np.floor((pts[:, 0] + 4.0) / 2.0).astype(int)
        j = np.floor((pts[:, 1] + 4.0) / 2.0).astype(int)
        assert np.all((i + j) % 2 == 0)


class TestMixture1d:
    def test_rho_zero_concentrates_right(self):
        x = ds.sample_mixture1d(0.0, 10_000, RngStream(1))
        assert np.all(np.abs(x - 5.0) < 6.0)

    def test_left_mode_fraction(self):
        n = 100_000
        x = ds.sample_mixture1d(0.2, n, RngStream(2))
        se = math.sqrt(0.2 * 0.8 / n)
        assert abs(float(np.mean(x < 0)) - 0.2) < 3 * se

    def test_deterministic(self):
        a = ds.sample_mixture1d(0.4, 50, RngStream(9))
        b = ds.sample_mixture1d(0.4, 50, RngStream(9))
        assert np.array_equal(a, b)

    def test_rho_out_of_range(self):
        with pytest.raises(ValueError):
            ds.sample_mixture1d(1.2, 10, RngStream(0))

    def test_logp_normalised(self):
        xs = np.linspace(-12, 12, 4801)
        mass = np.sum(np.exp(ds.mixture1d_logp(0.3, xs))) * (xs[1] - xs[0])
        assert abs(mass - 1.0) < 1e-6


class TestGrayCodec:
    def test_three_bit_miniature(self):
        got = [ds._int_to_bits(np.array([k ^ (k >> 1)]), 3)[0].tolist()
               for k in range(4)]
        assert got == [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 0]]

    def test_roundtrip_to_cell_centres(self):
        codec = ds.GrayCodec()
        pts = RngStream(3).uniforms(20_000).reshape(-1, 2) * 9.0 - 4.5
        bits, clamped = ds.gray_encode(pts, codec)
        assert not np.any(clamped)
        assert bits.shape == (10_000, 32)
        centres = ds.gray_decode(bits, codec)
        assert np.max(np.abs(centres - pts)) <= 9.0 / 2**16
        bits2, _ = ds.gray_encode(centres, codec)
        assert np.array_equal(bits, bits2)

    def test_adjacent_indices_differ_in_one_bit_exhaustive(self):
        k = np.arange(2**16 - 1, dtype=np.int64)
        g = k ^ (k >> 1)
        g_next = (k + 1) ^ ((k + 1) >> 1)
        diff = g ^ g_next
        # power of two <=> exactly one bit differs
        assert np.all(diff & (diff - 1) == 0)
        assert np.all(diff != 0)

    def test_out_of_range_clamped_and_flagged(self):
        bits, clamped = ds.gray_encode(np.array([9.9, 0.0]))
        assert clamped
        centre = ds.gray_decode(bits)
        assert centre[0] == pytest.approx(4.5 - 9.0 / 2**17, abs=1e-12)

    def test_single_point_roundtrip(self):
        bits, _ = ds.gray_encode(np.array([1.25, -3.5]))
        assert bits.shape == (32,)
        pt = ds.gray_decode(bits)
        assert np.max(np.abs(pt - [1.25, -3.5])) <= 9.0 / 2**16


class TestIsingLattice:
    def test_two_by_two_edge_count(self):
        J = ds.ising_lattice_coupling(2, 2, 0.25)
        assert int(np.sum(J != 0.0) / 2) == 4

    def test_eight_by_eight_edge_count(self):
        J = ds.ising_lattice_coupling(8, 8, 0.25)
        assert int(np.sum(J != 0.0) / 2) == 2 * 8 * 7

    @given(st.integers(min_value=2, max_value=5), st.integers(min_value=2, max_value=5))
    @settings(max_examples=20)
    def test_symmetric_zero_diagonal(self, h, w):
        J = ds.ising_lattice_coupling(h, w, 0.4)
        assert np.array_equal(J, J.T)
        assert np.all(np.diag(J) == 0.0)
        assert int(np.sum(J != 0.0) / 2) == h * (w - 1) + w * (h - 1)

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            ds.ising_lattice_coupling(1, 5, 0.1)
