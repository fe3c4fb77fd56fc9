import pytest
import torch

from condvc.nets import (CodecNet, MotionNet, VideoCodec, load_checkpoint,
                         param_count, save_checkpoint, state_digest)


class TestMotionNetShapes:
    def test_analysis_64_to_4(self, tiny_model):
        f = tiny_model.f
        x = torch.rand(1, 3, 64, 64)
        y = tiny_model.motion_net.analysis_transform(x, x, x)
        assert y.shape == (1, f, 4, 4)

    def test_shortcut_64_to_16(self, tiny_model):
        f = tiny_model.f
        x = torch.rand(1, 3, 64, 64)
        y = tiny_model.motion_net.shortcut_transform(x, x)
        assert y.shape == (1, f, 16, 16)

    def test_synthesis_outputs_six_fullres_channels(self, tiny_model):
        f = tiny_model.f
        fields = tiny_model.motion_net.synthesis_transform(
            torch.randn(1, f, 4, 4), torch.randn(1, f, 16, 16))
        assert fields.flow_past.shape == (1, 2, 64, 64)
        assert fields.flow_future.shape == (1, 2, 64, 64)
        assert fields.beta.shape == (1, 1, 64, 64)
        assert fields.alpha.shape == (1, 1, 64, 64)

    def test_misaligned_grids_rejected(self, tiny_model):
        f = tiny_model.f
        with pytest.raises(ValueError):
            tiny_model.motion_net.synthesis_transform(
                torch.randn(1, f, 4, 4), torch.randn(1, f, 8, 8))

    def test_eval_determinism(self, tiny_model):
        x = torch.rand(1, 3, 64, 64)
        a = tiny_model.motion_net.analysis_transform(x, x, x)
        b = tiny_model.motion_net.analysis_transform(x, x, x)
        assert torch.equal(a, b)


class TestMotionSynthesisClamp:
    @pytest.mark.parametrize("scale", [1.0, 10.0, 1000.0])
    def test_alpha_beta_clamped_for_any_magnitude(self, tiny_model, scale):
        f = tiny_model.f
        fields = tiny_model.motion_net.synthesis_transform(
            torch.randn(1, f, 4, 4) * scale, torch.randn(1, f, 16, 16) * scale)
        for m in (fields.alpha, fields.beta):
            assert m.min() >= 0.0 and m.max() <= 1.0

    def test_synthesis_works_from_either_latent_group_alone(self, tiny_model):
        # both single-group syntheses are well-defined and differ in general
        f = tiny_model.f
        y_hat = torch.randn(1, f, 4, 4)
        y_prime = torch.randn(1, f, 16, 16)
        sent_only = tiny_model.motion_net.synthesis_transform(
            y_hat, torch.zeros_like(y_prime))
        shortcut_only = tiny_model.motion_net.synthesis_transform(
            torch.zeros_like(y_hat), y_prime)
        assert torch.isfinite(sent_only.flow_future).all()
        assert torch.isfinite(shortcut_only.flow_future).all()
        assert not torch.equal(sent_only.flow_future, shortcut_only.flow_future)


class TestCodecNetShapes:
    def test_analysis_64_to_4(self, tiny_model):
        f = tiny_model.f
        x = torch.rand(1, 3, 64, 64)
        y = tiny_model.codec_net.analysis_transform(x, x)
        assert y.shape == (1, f, 4, 4)

    def test_shortcut_shares_sent_grid(self, tiny_model):
        f = tiny_model.f
        y = tiny_model.codec_net.shortcut_transform(torch.rand(1, 3, 64, 64))
        assert y.shape == (1, f, 4, 4)

    def test_synthesis_back_to_frame(self, tiny_model):
        f = tiny_model.f
        out = tiny_model.codec_net.synthesis_transform(
            torch.randn(1, f, 4, 4), torch.randn(1, f, 4, 4))
        assert out.shape == (1, 3, 64, 64)

    def test_latent_shape_mismatch_rejected(self, tiny_model):
        f = tiny_model.f
        with pytest.raises(ValueError):
            tiny_model.codec_net.synthesis_transform(
                torch.randn(1, f, 4, 4), torch.randn(1, f, 2, 2))

    def test_zero_prediction_zero_bias_shortcut_gives_zero(self):
        net = CodecNet(4)
        for p in net.shortcut.parameters():
            torch.nn.init.zeros_(p)
        # GDN roots must stay positive for a well-defined normalizer
        for m in net.shortcut.modules():
            if hasattr(m, "beta_root"):
                torch.nn.init.ones_(m.beta_root)
        out = net.shortcut_transform(torch.zeros(1, 3, 32, 32))
        assert torch.equal(out, torch.zeros_like(out))


class TestInformationFlow:
    def test_shortcut_transforms_never_see_the_current_frame(self, tiny_model):
        """Perturbing x_t leaves both shortcut latent groups unchanged."""
        refs = torch.rand(2, 3, 64, 64)
        y_m = tiny_model.motion_net.shortcut_transform(refs[:1], refs[1:])
        pred = torch.rand(1, 3, 64, 64)
        y_c = tiny_model.codec_net.shortcut_transform(pred)
        # the current frame is not even an argument; assert stability across
        # unrelated global RNG churn to pin the property operationally
        torch.manual_seed(123)
        _ = torch.rand(1, 3, 64, 64) * 100
        assert torch.equal(
            y_m, tiny_model.motion_net.shortcut_transform(refs[:1], refs[1:]))
        assert torch.equal(y_c, tiny_model.codec_net.shortcut_transform(pred))


class TestParamCount:
    def test_full_scale_build_lands_near_twenty_million(self):
        pytest.importorskip("torch")
        model = VideoCodec(f=128)
        n = param_count(model)
        assert 15e6 <= n <= 25e6

    def test_halving_f_shrinks_count_about_four_fold(self):
        big = param_count(VideoCodec(f=32))
        small = param_count(VideoCodec(f=16))
        assert 3.0 <= big / small <= 4.5

    def test_count_independent_of_input_size(self, tiny_model):
        before = param_count(tiny_model)
        _ = tiny_model.codec_net.analysis_transform(
            torch.rand(1, 3, 32, 32), torch.rand(1, 3, 32, 32))
        assert param_count(tiny_model) == before


class TestCheckpoints:
    def test_roundtrip_preserves_parameters_and_config(self, tmp_path, tiny_model):
        path = tmp_path / "m.pt"
        digest = save_checkpoint(tiny_model, path, config={"lmbda": 0.0016})
        model, config = load_checkpoint(path)
        assert config["f"] == tiny_model.f
        assert config["lmbda"] == 0.0016
        assert config["digest"] == digest
        assert state_digest(model.state_dict()) == digest

    def test_digest_distinguishes_models(self, tmp_path):
        torch.manual_seed(0)
        a = VideoCodec(f=4)
        torch.manual_seed(1)
        b = VideoCodec(f=4)
        assert state_digest(a.state_dict()) != state_digest(b.state_dict())

    def test_unsupported_version_rejected(self, tmp_path, tiny_model):
        path = tmp_path / "m.pt"
        save_checkpoint(tiny_model, path)
        payload = torch.load(path, weights_only=True)
        payload["format_version"] = 99
        torch.save(payload, path)
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestPaddedGeometry:
    def test_odd_geometry_forward_pass(self, tiny_model):
        from condvc.coder import code_b_frame
        x = torch.rand(1, 3, 50, 70)
        r = code_b_frame(x, torch.rand_like(x), torch.rand_like(x), tiny_model)
        assert r.x_hat.shape == (1, 3, 50, 70)
        assert r.maps["alpha"].shape == (1, 1, 50, 70)
