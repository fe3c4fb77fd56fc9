import numpy as np
import pytest
import torch

from condvc.bitstream import BitstreamError, read_bitstream
from condvc.coder import (CodingConfig, _code_frame, build_schedule,
                          code_b_frame, code_i_frame, code_p_frame,
                          code_sequence, decode_sequence, encode_sequence)
from condvc.metrics import psnr


def _clip(t, n, h=32, w=32):
    g = torch.Generator().manual_seed(13)
    return torch.rand(n, 3, h, w, generator=g)


class TestBuildSchedule:
    def test_ai_codes_one_frame(self):
        (entry,) = build_schedule(CodingConfig("AI"))
        assert (entry.index, entry.kind) == (0, "I")

    def test_ldp_default_is_i_plus_eight_p(self):
        entries = build_schedule(CodingConfig("LDP"))
        assert [e.kind for e in entries] == ["I"] + ["P"] * 8
        assert all(e.ref_past == e.index - 1 for e in entries[1:])

    def test_ra_gop4_structure(self):
        entries = build_schedule(CodingConfig("RA", gop_size=4))
        want = [(0, "I", None, None), (4, "P", 0, None), (2, "B", 0, 4),
                (1, "B", 0, 2), (3, "B", 2, 4)]
        got = [(e.index, e.kind, e.ref_past, e.ref_future) for e in entries]
        assert got == want

    def test_ra_gop2_training_structure(self):
        entries = build_schedule(CodingConfig("RA", gop_size=2))
        got = [(e.index, e.kind, e.ref_past, e.ref_future) for e in entries]
        assert got == [(0, "I", None, None), (2, "P", 0, None), (1, "B", 0, 2)]

    def test_ra_gop8_display_order_kinds(self):
        entries = build_schedule(CodingConfig("RA", gop_size=8))
        kinds = [e.kind for e in sorted(entries, key=lambda e: e.index)]
        assert kinds == ["I", "B", "B", "B", "B", "B", "B", "B", "P"]

    def test_ra_gop8_coding_order(self):
        entries = build_schedule(CodingConfig("RA", gop_size=8))
        got = [(e.index, e.kind, e.ref_past, e.ref_future) for e in entries]
        assert got == [
            (0, "I", None, None), (8, "P", 0, None), (4, "B", 0, 8),
            (2, "B", 0, 4), (1, "B", 0, 2), (3, "B", 2, 4),
            (6, "B", 4, 8), (5, "B", 4, 6), (7, "B", 6, 8),
        ]

    @pytest.mark.parametrize("gop", [2, 4, 8])
    def test_reference_ordering_invariants(self, gop):
        entries = build_schedule(CodingConfig("RA", gop_size=gop),
                                 frame_count=1 + 2 * gop)
        coded = set()
        for e in entries:
            for ref in (e.ref_past, e.ref_future):
                if ref is not None:
                    assert ref in coded, "reference must precede in coding order"
            if e.kind == "B":
                assert e.ref_past < e.index < e.ref_future
            if e.kind == "P":
                assert e.ref_past < e.index and e.ref_future is None
            if e.kind == "I":
                assert e.ref_past is None and e.ref_future is None
            coded.add(e.index)

    def test_non_dyadic_gop_rejected(self):
        with pytest.raises(ValueError):
            CodingConfig("RA", gop_size=6)

    def test_ra_frame_count_must_extend_whole_gops(self):
        with pytest.raises(ValueError):
            build_schedule(CodingConfig("RA", gop_size=4), frame_count=7)


class TestIFrame:
    def test_motion_rate_exactly_zero(self, tiny_model):
        r = code_i_frame(_clip(None, 1), tiny_model)
        assert float(r.bits_motion) == 0.0
        assert r.latents["motion"] is None

    def test_deterministic_in_eval(self, tiny_model):
        x = _clip(None, 1)
        a = code_i_frame(x, tiny_model)
        b = code_i_frame(x, tiny_model)
        assert torch.equal(a.x_hat, b.x_hat)
        assert float(a.bits_codec) == float(b.bits_codec)

    def test_alpha_is_one_and_prediction_zero(self, tiny_model):
        r = code_i_frame(_clip(None, 1), tiny_model)
        assert torch.equal(r.maps["alpha"], torch.ones_like(r.maps["alpha"]))
        assert torch.equal(r.maps["prediction"],
                           torch.zeros_like(r.maps["prediction"]))
        # skip term vanishes identically under alpha = 1
        assert torch.equal(r.maps["skip_part"],
                           torch.zeros_like(r.maps["skip_part"]))


class TestPFrame:
    def test_beta_identically_one(self, tiny_model):
        x = _clip(None, 2)
        r = code_p_frame(x[1:], x[:1], tiny_model)
        assert torch.equal(r.maps["beta"], torch.ones_like(r.maps["beta"]))

    def test_future_slot_never_read(self, tiny_model):
        """Internals fed different hypothetical future refs agree bitwise."""
        x = _clip(None, 2)
        a = _code_frame(tiny_model, x[1:], "P", x[:1],
                        torch.zeros_like(x[:1]), "eval", 0)
        b = _code_frame(tiny_model, x[1:], "P", x[:1],
                        torch.rand_like(x[:1]), "eval", 0)
        assert torch.equal(a.x_hat, b.x_hat)
        assert float(a.bits_motion) == float(b.bits_motion)

    def test_motion_shortcut_latents_forced_zero(self, tiny_model):
        x = _clip(None, 2)
        r = code_p_frame(x[1:], x[:1], tiny_model)
        y_prime = r.latents["motion"].y_prime
        assert torch.equal(y_prime, torch.zeros_like(y_prime))


class TestBFrameComposition:
    def test_bypass_makes_skip_only_exact(self, tiny_model):
        x = _clip(None, 3)
        r = code_b_frame(x[1:2], x[:1], x[2:], tiny_model,
                         force_alpha=0.0, bypass_codec=True)
        assert torch.equal(r.x_hat, r.maps["prediction"])
        assert float(r.bits_codec) == 0.0

    def test_alpha_zero_still_codes_the_zero_stream(self, tiny_model):
        x = _clip(None, 3)
        r = code_b_frame(x[1:2], x[:1], x[2:], tiny_model, force_alpha=0.0)
        assert float(r.bits_codec) > 0.0

    def test_alpha_one_kills_the_skip_term(self, tiny_model):
        x = _clip(None, 3)
        r = code_b_frame(x[1:2], x[:1], x[2:], tiny_model, force_alpha=1.0)
        assert torch.equal(r.maps["skip_part"],
                           torch.zeros_like(r.maps["skip_part"]))
        assert torch.allclose(r.x_hat, r.maps["codec_part"], atol=1e-7)

    def test_composition_identity(self, tiny_model):
        x = _clip(None, 3)
        r = code_b_frame(x[1:2], x[:1], x[2:], tiny_model)
        lhs = r.x_hat - r.maps["skip_part"]
        assert torch.allclose(lhs, r.maps["codec_part"], atol=1e-6)

    def test_total_rate_is_sum_of_streams(self, tiny_model):
        x = _clip(None, 3)
        r = code_b_frame(x[1:2], x[:1], x[2:], tiny_model)
        assert float(r.bits_total) == pytest.approx(
            float(r.bits_motion) + float(r.bits_codec))
        assert r.rate_motion.total_bits == pytest.approx(float(r.bits_motion))
        assert r.rate_codec.total_bits == pytest.approx(float(r.bits_codec))

    def test_geometry_mismatch_rejected(self, tiny_model):
        with pytest.raises(ValueError):
            code_b_frame(torch.rand(1, 3, 32, 32), torch.rand(1, 3, 32, 16),
                         torch.rand(1, 3, 32, 32), tiny_model)

    def test_rate_map_sums_match_reported_bits(self, tiny_model):
        x = _clip(None, 3)
        r = code_b_frame(x[1:2], x[:1], x[2:], tiny_model)
        for stream, map_name in (("bits_motion", "rate_map_motion"),
                                 ("bits_codec", "rate_map_codec")):
            total = float(getattr(r, stream))
            map_sum = float(r.maps[map_name].sum())
            assert map_sum == pytest.approx(total, rel=1e-3)


class TestCodeSequence:
    def test_ai_codes_exactly_one_frame(self, tiny_model):
        seq = code_sequence(_clip(None, 5), CodingConfig("AI"), tiny_model)
        assert len(seq.results) == 1
        assert seq.results[0].kind == "I"

    def test_ra_gop8_produces_nine_results(self, tiny_model):
        seq = code_sequence(_clip(None, 9), CodingConfig("RA", gop_size=8),
                            tiny_model)
        assert len(seq.results) == 9
        kinds = [r.kind for r in seq.display_order]
        assert kinds == ["I"] + ["B"] * 7 + ["P"]

    def test_references_come_from_decoded_buffer(self, tiny_model):
        """Tainting originals after they are coded must change nothing."""
        frames = _clip(None, 5)
        baseline = code_sequence(frames.clone(), CodingConfig("RA", gop_size=4),
                                 tiny_model)
        tainted = frames.clone()

        def taint(index, _result):
            tainted[index] = 7.0

        seq = code_sequence(tainted, CodingConfig("RA", gop_size=4), tiny_model,
                            on_frame_coded=taint)
        for a, b in zip(baseline.results, seq.results):
            assert torch.equal(a.x_hat, b.x_hat)
            assert float(a.bits_total) == float(b.bits_total)

    def test_manual_drive_matches_sequence(self, tiny_model):
        frames = _clip(None, 3)
        config = CodingConfig("RA", gop_size=2)
        seq = code_sequence(frames, config, tiny_model)
        r0 = code_i_frame(frames[0:1], tiny_model, index=0)
        r2 = code_p_frame(frames[2:3], r0.x_hat, tiny_model, index=2)
        r1 = code_b_frame(frames[1:2], r0.x_hat, r2.x_hat, tiny_model, index=1)
        for got, want in zip(seq.results, [r0, r2, r1]):
            assert torch.equal(got.x_hat, want.x_hat)

    def test_multi_gop_ra(self, tiny_model):
        seq = code_sequence(_clip(None, 9), CodingConfig("RA", gop_size=4),
                            tiny_model)
        assert len(seq.results) == 9
        p_frames = [r for r in seq.results if r.kind == "P"]
        assert sorted(r.index for r in p_frames) == [4, 8]

    def test_insufficient_frames_rejected(self, tiny_model):
        with pytest.raises(ValueError):
            code_sequence(_clip(None, 3), CodingConfig("RA", gop_size=8),
                          tiny_model)

    def test_motion_rate_zero_exactly_for_i_frames(self, tiny_model):
        seq = code_sequence(_clip(None, 3), CodingConfig("RA", gop_size=2),
                            tiny_model)
        for r in seq.results:
            if r.kind == "I":
                assert float(r.bits_motion) == 0.0
            else:
                assert float(r.bits_motion) > 0.0

    def test_report_shape(self, tiny_model):
        seq = code_sequence(_clip(None, 3), CodingConfig("RA", gop_size=2),
                            tiny_model)
        report = seq.report(fps=30.0)
        assert {"config", "per_frame", "totals"} <= set(report)
        assert [row["index"] for row in report["per_frame"]] == [0, 1, 2]
        for row in report["per_frame"]:
            assert {"index", "kind", "bits_m", "bits_c", "psnr"} <= set(row)
        totals = report["totals"]
        assert totals["bits"] == pytest.approx(
            sum(row["bits_m"] + row["bits_c"] for row in report["per_frame"]))
        assert totals["mbit_per_s"] == pytest.approx(
            totals["bits"] * 30.0 / 3 / 1e6)


class TestClosedLoop:
    @pytest.mark.parametrize("mode,gop,frames", [("AI", 8, 1), ("LDP", 4, 5),
                                                 ("RA", 4, 5)])
    def test_encode_decode_bit_exact(self, tiny_model, mode, gop, frames):
        clip = _clip(None, frames)
        config = CodingConfig(mode, gop_size=gop)
        stream, seq = encode_sequence(tiny_model, clip, config)
        decoded = decode_sequence(tiny_model, stream)
        encoder_side = torch.cat([r.x_hat for r in seq.display_order])
        assert torch.equal(decoded.frames, encoder_side)

    def test_decoder_psnr_equals_encoder_report(self, tiny_model):
        clip = _clip(None, 3)
        config = CodingConfig("RA", gop_size=2)
        stream, seq = encode_sequence(tiny_model, clip, config)
        decoded = decode_sequence(tiny_model, stream)
        for t in range(3):
            got = psnr(decoded.frames[t].clamp(0, 1).numpy(), clip[t].numpy())
            assert got == seq.frame_psnr[t]

    def test_measured_stream_tracks_estimate(self, tiny_model):
        clip = _clip(None, 3)
        stream, seq = encode_sequence(tiny_model, clip,
                                      CodingConfig("RA", gop_size=2))
        _, chunks = read_bitstream(stream)
        for r, chunk in zip(seq.results, chunks):
            est = float(r.bits_total)
            measured = chunk.total_bytes * 8
            assert measured <= est * 1.02 + 4 * 256

    def test_truncated_stream_reports_chunk_index(self, tiny_model):
        clip = _clip(None, 3)
        stream, _ = encode_sequence(tiny_model, clip,
                                    CodingConfig("RA", gop_size=2))
        with pytest.raises(BitstreamError) as err:
            decode_sequence(tiny_model, stream[:len(stream) // 2])
        assert "chunk" in str(err.value)

    def test_wrong_checkpoint_refused(self, tiny_model):
        from condvc.nets import VideoCodec
        clip = _clip(None, 1)
        stream, _ = encode_sequence(tiny_model, clip, CodingConfig("AI"))
        torch.manual_seed(99)
        other = VideoCodec(f=tiny_model.f).eval()
        with pytest.raises(BitstreamError) as err:
            decode_sequence(other, stream)
        assert "digest" in str(err.value)

    def test_padded_geometry_closed_loop(self, tiny_model):
        g = torch.Generator().manual_seed(5)
        clip = torch.rand(3, 3, 24, 40, generator=g)
        stream, seq = encode_sequence(tiny_model, clip,
                                      CodingConfig("RA", gop_size=2))
        decoded = decode_sequence(tiny_model, stream)
        encoder_side = torch.cat([r.x_hat for r in seq.display_order])
        assert torch.equal(decoded.frames, encoder_side)
        assert decoded.frames.shape == (3, 3, 24, 40)
