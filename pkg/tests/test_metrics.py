import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condvc.metrics import (BDResult, OverlapError, RDCurve, bd_rate, psnr,
                            read_rd_csv, write_rd_csv)


def _random_curve(rng, n=4, label="", psnr_lo=30.0, psnr_hi=42.0):
    psnrs = np.sort(rng.uniform(psnr_lo, psnr_hi, n))
    while np.any(np.diff(psnrs) < 0.3):
        psnrs = np.sort(rng.uniform(psnr_lo, psnr_hi, n))
    rates = np.cumsum(rng.uniform(0.2, 2.0, n)) + rng.uniform(0.1, 1.0)
    return RDCurve(list(zip(rates, psnrs)), label=label)


class TestPsnr:
    def test_identical_frames_hit_the_cap(self):
        x = np.random.default_rng(0).uniform(0, 1, (3, 8, 8))
        assert psnr(x, x) == 100.0

    def test_known_mse(self):
        a = np.zeros((3, 10, 10))
        b = np.full((3, 10, 10), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 1, (3, 6, 6))
        b = rng.uniform(0, 1, (3, 6, 6))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.full((3, 2, 2), 1.2), np.zeros((3, 2, 2)))

    def test_strictly_decreasing_with_noise_amplitude(self):
        rng = np.random.default_rng(2)
        base = rng.uniform(0.3, 0.7, (3, 16, 16))
        noise = rng.normal(size=base.shape)
        values = []
        for amp in (0.01, 0.03, 0.09):
            values.append(psnr(base, np.clip(base + amp * noise, 0, 1)))
        assert values[0] > values[1] > values[2]


class TestRDCurve:
    def test_sorts_points_by_rate(self):
        curve = RDCurve([(2.0, 35.0), (1.0, 30.0)])
        assert curve.rates.tolist() == [1.0, 2.0]

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(ValueError):
            RDCurve([(0.0, 30.0), (1.0, 31.0), (2.0, 32.0)])

    def test_duplicate_rate_rejected(self):
        with pytest.raises(ValueError):
            RDCurve([(1.0, 30.0), (1.0, 31.0), (2.0, 32.0)])


class TestBdRate:
    def test_identical_curves_give_zero(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            curve = _random_curve(rng)
            result = bd_rate(curve, curve)
            assert result.bd_rate_percent == pytest.approx(0.0, abs=1e-9)

    def test_uniform_rate_scaling(self):
        rng = np.random.default_rng(4)
        anchor = _random_curve(rng)
        test = RDCurve([(r * 1.1, p) for r, p in anchor.points])
        result = bd_rate(anchor, test)
        assert result.bd_rate_percent == pytest.approx(10.0, abs=0.01)

    def test_cubic_fit_matches_dense_numeric_oracle(self):
        """Exact polynomial integration vs 1e4-sample trapezoid on the same fits."""
        rng = np.random.default_rng(5)
        for _ in range(100):
            anchor = _random_curve(rng)
            test = _random_curve(rng)
            try:
                result = bd_rate(anchor, test)
            except OverlapError:
                continue
            lo, hi = result.overlap
            fit_a = np.polyfit(anchor.psnrs, np.log(anchor.rates), 3)
            fit_t = np.polyfit(test.psnrs, np.log(test.rates), 3)
            grid = np.linspace(lo, hi, 10_000)
            mean_diff = np.trapezoid(
                np.polyval(fit_t, grid) - np.polyval(fit_a, grid), grid
            ) / (hi - lo)
            oracle = (np.exp(mean_diff) - 1) * 100
            assert abs(result.bd_rate_percent - oracle) < 0.5

    def test_no_overlap_is_an_explicit_error(self):
        rng = np.random.default_rng(6)
        low = _random_curve(rng, psnr_lo=20, psnr_hi=25)
        high = _random_curve(rng, psnr_lo=30, psnr_hi=35)
        with pytest.raises(OverlapError):
            bd_rate(low, high)

    def test_fewer_than_three_points_rejected(self):
        a = RDCurve([(1.0, 30.0), (2.0, 33.0)])
        b = RDCurve([(1.0, 30.0), (2.0, 32.0), (3.0, 34.0)])
        with pytest.raises(ValueError):
            bd_rate(a, b)

    def test_non_monotone_quality_warns_but_proceeds(self):
        bad = RDCurve([(1.0, 31.0), (2.0, 30.0), (3.0, 33.0), (4.0, 35.0)])
        good = RDCurve([(1.0, 30.0), (2.0, 32.0), (3.0, 34.0), (4.0, 36.0)])
        with pytest.warns(UserWarning):
            result = bd_rate(good, bad)
        assert np.isfinite(result.bd_rate_percent)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_log_domain_antisymmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = _random_curve(rng)
        b = _random_curve(rng)
        try:
            ab = bd_rate(a, b).bd_rate_percent
            ba = bd_rate(b, a).bd_rate_percent
        except OverlapError:
            return
        assert (1 + ab / 100) * (1 + ba / 100) == pytest.approx(1.0, abs=1e-6)


class TestRdCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(7)
        curves = [_random_curve(rng, label="RA"), _random_curve(rng, label="LDP")]
        path = tmp_path / "rd.csv"
        write_rd_csv(path, curves)
        back = read_rd_csv(path)
        assert set(back) == {"RA", "LDP"}
        for curve in curves:
            np.testing.assert_allclose(back[curve.label].rates, curve.rates)
            np.testing.assert_allclose(back[curve.label].psnrs, curve.psnrs)

    def test_headerless_csv_accepted(self, tmp_path):
        path = tmp_path / "rd.csv"
        path.write_text("ours,1.0,30\nours,2.0,33\nours,3.0,35\n")
        curves = read_rd_csv(path)
        assert len(curves["ours"].points) == 3

    def test_malformed_row_rejected(self, tmp_path):
        path = tmp_path / "rd.csv"
        path.write_text("label,rate\nx,1\n")
        with pytest.raises(ValueError):
            read_rd_csv(path)
