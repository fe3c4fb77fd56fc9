import numpy as np
import pytest
import torch

from condvc.coder import CodingConfig, code_b_frame, code_sequence
from condvc.diagnostics import (DIAGNOSTIC_IMAGE_NAMES, ablation_synthesis,
                                diagnostics, gop_report, plot_gop_bars,
                                plot_rd_curves)
from condvc.metrics import RDCurve


@pytest.fixture
def coded_sequence(tiny_model):
    g = torch.Generator().manual_seed(21)
    frames = torch.rand(5, 3, 32, 32, generator=g)
    return frames, code_sequence(frames, CodingConfig("RA", gop_size=4),
                                 tiny_model)


class TestGopReport:
    def test_rows_and_avg(self, coded_sequence):
        _, seq = coded_sequence
        report = gop_report(seq, fps=30.0)
        labels = [r["label"] for r in report["rows"]]
        assert labels == ["I0", "B1", "B2", "B3", "P4"]
        total_bits = sum(float(r.bits_total) for r in seq.results)
        # average rate equals total bits over total duration
        assert report["avg"]["mbit_per_s"] == pytest.approx(
            total_bits * 30.0 / 5 / 1e6, rel=1e-9)
        assert report["psnr_variance"] is not None

    def test_nine_frame_gop_labels(self, tiny_model):
        g = torch.Generator().manual_seed(3)
        frames = torch.rand(9, 3, 32, 32, generator=g)
        seq = code_sequence(frames, CodingConfig("RA", gop_size=8), tiny_model)
        report = gop_report(seq, fps=24.0)
        assert [r["label"] for r in report["rows"]] == \
            ["I0", "B1", "B2", "B3", "B4", "B5", "B6", "B7", "P8"]


class TestDiagnostics:
    def test_writes_eight_named_images(self, coded_sequence, tmp_path):
        _, seq = coded_sequence
        b_frame = next(r for r in seq.results if r.kind == "B")
        paths = diagnostics(b_frame, tmp_path)
        assert set(paths) == set(DIAGNOSTIC_IMAGE_NAMES)
        for p in paths.values():
            assert p.exists() and p.stat().st_size > 0

    def test_i_frame_dump_has_empty_motion_heatmap(self, coded_sequence, tmp_path):
        _, seq = coded_sequence
        i_frame = seq.results[0]
        paths = diagnostics(i_frame, tmp_path)
        assert set(paths) == set(DIAGNOSTIC_IMAGE_NAMES)

    def test_skip_image_equals_prediction_under_forced_skip(self, tiny_model,
                                                            tmp_path):
        g = torch.Generator().manual_seed(5)
        x = torch.rand(3, 3, 32, 32, generator=g)
        r = code_b_frame(x[1:2], x[0:1], x[2:3], tiny_model,
                         force_alpha=0.0, bypass_codec=True)
        assert torch.equal(r.maps["skip_part"], r.maps["prediction"])
        paths = diagnostics(r, tmp_path)
        assert paths["skip_part"].exists()


class TestAblationSynthesis:
    def test_both_reproduces_normal_output(self, coded_sequence, tiny_model):
        _, seq = coded_sequence
        b_frame = next(r for r in seq.results if r.kind == "B")
        out = ablation_synthesis(tiny_model, b_frame, "both", "motion")
        np.testing.assert_array_equal(
            out["flow_future"], b_frame.maps["flow_future"][0].numpy())

    def test_i_frame_codec_shortcut_only_is_zero_latent_synthesis(
            self, coded_sequence, tiny_model):
        _, seq = coded_sequence
        i_frame = seq.results[0]
        out = ablation_synthesis(tiny_model, i_frame, "shortcut_only", "codec")
        zeros = torch.zeros_like(i_frame.latents["codec"].y_hat)
        want = tiny_model.codec_net.synthesis_transform(zeros, zeros)
        np.testing.assert_allclose(out["reconstruction"],
                                   want[0, :, :32, :32].detach().numpy(),
                                   atol=1e-6)

    def test_sent_only_differs_from_both(self, coded_sequence, tiny_model):
        _, seq = coded_sequence
        b_frame = next(r for r in seq.results if r.kind == "B")
        both = ablation_synthesis(tiny_model, b_frame, "both", "codec")
        sent = ablation_synthesis(tiny_model, b_frame, "sent_only", "codec")
        assert np.abs(both["reconstruction"] - sent["reconstruction"]).max() > 0

    def test_motion_ablation_missing_for_i_frames(self, coded_sequence,
                                                  tiny_model):
        _, seq = coded_sequence
        with pytest.raises(ValueError):
            ablation_synthesis(tiny_model, seq.results[0], "both", "motion")

    def test_bad_arguments_rejected(self, coded_sequence, tiny_model):
        _, seq = coded_sequence
        with pytest.raises(ValueError):
            ablation_synthesis(tiny_model, seq.results[0], "nothing", "codec")
        with pytest.raises(ValueError):
            ablation_synthesis(tiny_model, seq.results[0], "both", "warp")


class TestPlots:
    def test_rd_plot_written(self, tmp_path):
        curve = RDCurve([(1.0, 30.0), (2.0, 33.0), (3.0, 35.0)], label="ours")
        path = tmp_path / "rd.png"
        plot_rd_curves([curve], path, title="demo")
        assert path.stat().st_size > 0

    def test_gop_bars_written(self, coded_sequence, tmp_path):
        _, seq = coded_sequence
        report = gop_report(seq, fps=30.0)
        path = tmp_path / "bars.png"
        plot_gop_bars(report, path)
        assert path.stat().st_size > 0
