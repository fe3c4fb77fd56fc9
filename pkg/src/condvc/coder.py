"""Per-frame coding, GOP scheduling, and the serialized codec loop.

Every frame kind runs through the same network pair; I and P frames simply
bypass the parts whose inputs do not exist:

* I frame: no motion branch at all (zero motion rate), alpha := 1,
  prediction := 0, codec shortcut latents := 0;
* P frame: the missing future reference slot is filled by duplicating the
  past reference, beta := 1, motion shortcut latents := 0;
* B frame: the full path.

The decoded frame is (1 - alpha) * prediction + codec_output.  References
are always previously *decoded* frames, so encoder and decoder stay in
lockstep; :func:`decode_sequence` reruns exactly the decoder-side half of
the computation from the entropy-decoded integers and reproduces the
encoder's reconstruction bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
import torch
import torch.nn.functional as F

from . import metrics
from .bitstream import (BitstreamError, FrameChunk, StreamHeader,
                        read_bitstream, write_bitstream)
from .entropy import EntropyResult, HyperpriorCodec, LatentBundle, RateReport
from .motion import blend, warp
from .nets import ANALYSIS_STRIDE, SHORTCUT_STRIDE, MotionFields, VideoCodec, state_digest
from .rangecoder import LaplaceStreamDecoder, LaplaceStreamEncoder

Mode = Literal["train", "eval"]


@dataclass
class CodingConfig:
    mode: Literal["AI", "LDP", "RA"]
    gop_size: int = 8
    lmbda: float = 0.0016

    def __post_init__(self) -> None:
        if self.mode not in ("AI", "LDP", "RA"):
            raise ValueError(f"mode must be AI, LDP or RA, got {self.mode!r}")
        if self.mode == "RA" and self.gop_size not in (2, 4, 8):
            raise ValueError(
                f"RA gop size must be dyadic in {{2,4,8}}, got {self.gop_size}"
            )
        if self.gop_size < 1:
            raise ValueError(f"gop size must be positive, got {self.gop_size}")
        if self.lmbda <= 0:
            raise ValueError(f"lambda must be positive, got {self.lmbda}")


@dataclass
class ScheduleEntry:
    index: int
    kind: Literal["I", "P", "B"]
    ref_past: Optional[int] = None
    ref_future: Optional[int] = None


def _dyadic(lo: int, hi: int, out: list[ScheduleEntry]) -> None:
    if hi - lo < 2:
        return
    mid = (lo + hi) // 2
    out.append(ScheduleEntry(mid, "B", ref_past=lo, ref_future=hi))
    _dyadic(lo, mid, out)
    _dyadic(mid, hi, out)


def build_schedule(config: CodingConfig, frame_count: Optional[int] = None) -> list[ScheduleEntry]:
    """Coding-order schedule for one sequence.

    AI codes exactly one I frame.  LDP codes I0 then P frames that each
    reference the previous frame.  RA codes I0 then, per GOP, the trailing
    P frame followed by the dyadic B hierarchy; for multi-GOP sequences the
    last decoded frame of the previous GOP plays the I0 role.
    """
    if config.mode == "AI":
        return [ScheduleEntry(0, "I")]
    if config.mode == "LDP":
        count = frame_count if frame_count is not None else config.gop_size + 1
        if count < 2:
            raise ValueError(f"LDP needs at least 2 frames, got {count}")
        entries = [ScheduleEntry(0, "I")]
        entries += [ScheduleEntry(t, "P", ref_past=t - 1) for t in range(1, count)]
        return entries
    n = config.gop_size
    count = frame_count if frame_count is not None else n + 1
    if count < n + 1:
        raise ValueError(f"RA with gop {n} needs at least {n + 1} frames, got {count}")
    if (count - 1) % n:
        raise ValueError(
            f"RA frame count must be 1 + k*{n}, got {count}"
        )
    entries = [ScheduleEntry(0, "I")]
    for base in range(0, count - 1, n):
        entries.append(ScheduleEntry(base + n, "P", ref_past=base))
        _dyadic(base, base + n, entries)
    return entries


@dataclass
class FrameResult:
    """Everything produced by coding one frame.

    ``x_hat`` is the unclipped reconstruction (clipping is applied only for
    metrics and export); rate tensors are batch-mean totals and stay
    differentiable in train mode.  Rate maps live on the (padded) latent
    grid: per-position sent-latent bits plus the hyperprior bits spread
    uniformly, so each map sums exactly to its stream's bit count.
    """

    index: int
    kind: str
    x_hat: torch.Tensor
    bits_motion: torch.Tensor
    bits_codec: torch.Tensor
    mse: torch.Tensor
    maps: dict = field(default_factory=dict)
    latents: dict = field(default_factory=dict)
    rate_motion: Optional[RateReport] = None
    rate_codec: Optional[RateReport] = None

    @property
    def bits_total(self) -> torch.Tensor:
        return self.bits_motion + self.bits_codec

    @property
    def x_hat_clipped(self) -> torch.Tensor:
        return self.x_hat.clamp(0.0, 1.0)


def _pad_to_stride(x: torch.Tensor, stride: int = ANALYSIS_STRIDE) -> tuple[torch.Tensor, tuple[int, int]]:
    h, w = x.shape[-2:]
    ph = (stride - h % stride) % stride
    pw = (stride - w % stride) % stride
    if ph == 0 and pw == 0:
        return x, (h, w)
    pad_mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(x, (0, pw, 0, ph), mode=pad_mode), (h, w)


def _crop(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    return x[..., :size[0], :size[1]]


def _rate_pieces(ent: EntropyResult) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(batch-mean bits_y, batch-mean bits_z, per-position rate map)."""
    b = ent.bit_map_y.shape[0]
    bits_y = ent.bit_map_y.sum() / b
    bits_z = ent.bit_map_z.sum() / b
    y_map = ent.bit_map_y.sum(dim=1, keepdim=True)
    z_per_item = ent.bit_map_z.sum(dim=(1, 2, 3))
    smear = z_per_item.view(-1, 1, 1, 1) / (y_map.shape[-1] * y_map.shape[-2])
    return bits_y, bits_z, y_map + smear


def _motion_side(
    model: VideoCodec,
    kind: str,
    y_m_hat: torch.Tensor,
    ref_p: torch.Tensor,
    ref_f: torch.Tensor,
) -> tuple[MotionFields, torch.Tensor, torch.Tensor]:
    """Decoder-side motion path: synthesis, overrides, warps and blending."""
    if kind == "P":
        b, _, h, w = ref_p.shape
        grid = (h // SHORTCUT_STRIDE, w // SHORTCUT_STRIDE)
        y_prime_m = torch.zeros(b, model.f, *grid, dtype=ref_p.dtype, device=ref_p.device)
    else:
        y_prime_m = model.motion_net.shortcut_transform(ref_p, ref_f)
    fields = model.motion_net.synthesis_transform(y_m_hat, y_prime_m)
    if kind == "P":
        fields = MotionFields(
            flow_past=fields.flow_past,
            flow_future=fields.flow_future,
            beta=torch.ones_like(fields.beta),
            alpha=fields.alpha,
        )
    warped_p = warp(ref_p, fields.flow_past)
    warped_f = warp(ref_f, fields.flow_future)
    x_tilde = blend(warped_p, warped_f, fields.beta)
    return fields, x_tilde, y_prime_m


def _codec_side(
    model: VideoCodec,
    kind: str,
    y_c_hat: torch.Tensor,
    alpha: torch.Tensor,
    x_tilde: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Decoder-side codec path: shortcut latents and synthesis."""
    if kind == "I":
        y_prime_c = torch.zeros_like(y_c_hat)
    else:
        y_prime_c = model.codec_net.shortcut_transform(alpha * x_tilde)
    return model.codec_net.synthesis_transform(y_c_hat, y_prime_c), y_prime_c


def _code_frame(
    model: VideoCodec,
    x_t: torch.Tensor,
    kind: str,
    ref_p: Optional[torch.Tensor],
    ref_f: Optional[torch.Tensor],
    mode: Mode,
    index: int,
    force_alpha: Optional[float] = None,
    bypass_codec: bool = False,
) -> FrameResult:
    if x_t.dim() != 4 or x_t.shape[1] != 3:
        raise ValueError(f"expected (B,3,H,W) frame, got {tuple(x_t.shape)}")
    for name, r in (("past", ref_p), ("future", ref_f)):
        if r is not None and r.shape != x_t.shape:
            raise ValueError(
                f"{name} reference shape {tuple(r.shape)} does not match "
                f"frame {tuple(x_t.shape)}"
            )
    with torch.set_grad_enabled(mode == "train" and torch.is_grad_enabled()):
        return _code_frame_inner(model, x_t, kind, ref_p, ref_f, mode, index,
                                 force_alpha, bypass_codec)


def _code_frame_inner(
    model: VideoCodec,
    x_t: torch.Tensor,
    kind: str,
    ref_p: Optional[torch.Tensor],
    ref_f: Optional[torch.Tensor],
    mode: Mode,
    index: int,
    force_alpha: Optional[float] = None,
    bypass_codec: bool = False,
) -> FrameResult:
    xp, orig = _pad_to_stride(x_t)
    zero_bits = xp.new_zeros(())

    ent_m: Optional[EntropyResult] = None
    if kind == "I":
        alpha = torch.ones_like(xp[:, :1])
        beta = torch.ones_like(alpha)
        x_tilde = torch.zeros_like(xp)
        flows = torch.zeros_like(xp[:, :2])
        fields = None
        y_prime_m = None
        bits_m_y = bits_m_z = zero_bits
        rate_map_m = None
    else:
        rp, _ = _pad_to_stride(ref_p)
        rf, _ = _pad_to_stride(ref_f if kind == "B" else ref_p)
        y_m = model.motion_net.analysis_transform(xp, rp, rf)
        ent_m = model.motion_entropy(y_m, mode)
        fields, x_tilde, y_prime_m = _motion_side(model, kind, ent_m.y_hat, rp, rf)
        if force_alpha is not None:
            fields = MotionFields(fields.flow_past, fields.flow_future, fields.beta,
                                  torch.full_like(fields.alpha, float(force_alpha)))
        alpha, beta = fields.alpha, fields.beta
        bits_m_y, bits_m_z, rate_map_m = _rate_pieces(ent_m)

    ent_c: Optional[EntropyResult] = None
    if bypass_codec:
        codec_out = torch.zeros_like(xp)
        y_prime_c = None
        bits_c_y = bits_c_z = zero_bits
        rate_map_c = None
    else:
        y_c = model.codec_net.analysis_transform(alpha * xp, alpha * x_tilde)
        ent_c = model.codec_entropy(y_c, mode)
        codec_out, y_prime_c = _codec_side(model, kind, ent_c.y_hat, alpha, x_tilde)
        bits_c_y, bits_c_z, rate_map_c = _rate_pieces(ent_c)

    x_hat = _crop((1 - alpha) * x_tilde + codec_out, orig)
    mse = torch.mean((x_hat - x_t) ** 2)

    if kind == "I":
        flow_past = flow_future = _crop(flows, orig)
    else:
        flow_past = _crop(fields.flow_past, orig)
        flow_future = _crop(fields.flow_future, orig)
    alpha_c = _crop(alpha, orig)
    beta_c = _crop(beta, orig)
    x_tilde_c = _crop(x_tilde, orig)

    maps = {
        "alpha": alpha_c,
        "beta": beta_c,
        "flow_past": flow_past,
        "flow_future": flow_future,
        "skip_part": (1 - alpha_c) * x_tilde_c,
        "codec_part": _crop(codec_out, orig),
        "prediction": x_tilde_c,
        "rate_map_motion": rate_map_m,
        "rate_map_codec": rate_map_c,
    }
    latents = {
        "motion": None if ent_m is None else LatentBundle(
            y_hat=ent_m.y_hat, y_prime=y_prime_m, z_hat=ent_m.z_hat,
            mu=ent_m.mu, b=ent_m.b,
        ),
        "codec": None if ent_c is None else LatentBundle(
            y_hat=ent_c.y_hat, y_prime=y_prime_c, z_hat=ent_c.z_hat,
            mu=ent_c.mu, b=ent_c.b,
        ),
    }
    return FrameResult(
        index=index,
        kind=kind,
        x_hat=x_hat,
        bits_motion=bits_m_y + bits_m_z,
        bits_codec=bits_c_y + bits_c_z,
        mse=mse,
        maps=maps,
        latents=latents,
        rate_motion=RateReport(float(bits_m_y.detach()), float(bits_m_z.detach())),
        rate_codec=RateReport(float(bits_c_y.detach()), float(bits_c_z.detach())),
    )


def code_i_frame(x_t: torch.Tensor, model: VideoCodec, mode: Mode = "eval",
                 index: int = 0) -> FrameResult:
    """Code a frame with no references; motion rate is exactly zero."""
    return _code_frame(model, x_t, "I", None, None, mode, index)


def code_p_frame(x_t: torch.Tensor, ref_p: torch.Tensor, model: VideoCodec,
                 mode: Mode = "eval", index: int = 0) -> FrameResult:
    """Code a frame against one past reference (beta forced to 1)."""
    return _code_frame(model, x_t, "P", ref_p, None, mode, index)


def code_b_frame(x_t: torch.Tensor, ref_p: torch.Tensor, ref_f: torch.Tensor,
                 model: VideoCodec, mode: Mode = "eval", index: int = 0,
                 force_alpha: Optional[float] = None,
                 bypass_codec: bool = False) -> FrameResult:
    """Code a frame against two bracketing references.

    ``force_alpha`` overrides the arbitration map (diagnostics);
    ``bypass_codec`` drops the codec branch entirely so that with
    force_alpha=0 the reconstruction equals the temporal prediction
    exactly.
    """
    return _code_frame(model, x_t, "B", ref_p, ref_f, mode, index,
                       force_alpha=force_alpha, bypass_codec=bypass_codec)


@dataclass
class SequenceResult:
    results: list[FrameResult]          # coding order
    config: CodingConfig
    frame_psnr: dict                    # display index -> PSNR (eval mode)

    @property
    def display_order(self) -> list[FrameResult]:
        return sorted(self.results, key=lambda r: r.index)

    def totals(self) -> dict:
        n = len(self.results)
        bits = sum(float(r.bits_total) for r in self.results)
        h, w = self.results[0].x_hat.shape[-2:]
        out = {
            "frames": n,
            "bits": bits,
            "bpp": bits / (n * 3 * h * w),
        }
        if self.frame_psnr:
            out["psnr"] = sum(self.frame_psnr.values()) / len(self.frame_psnr)
        return out

    def report(self, fps: Optional[float] = None) -> dict:
        per_frame = [
            {
                "index": r.index,
                "kind": r.kind,
                "bits_m": float(r.bits_motion),
                "bits_c": float(r.bits_codec),
                "psnr": self.frame_psnr.get(r.index),
            }
            for r in self.display_order
        ]
        totals = self.totals()
        if fps is not None:
            totals["mbit_per_s"] = totals["bits"] * fps / totals["frames"] / 1e6
        return {
            "config": {
                "mode": self.config.mode,
                "gop_size": self.config.gop_size,
                "lmbda": self.config.lmbda,
            },
            "per_frame": per_frame,
            "totals": totals,
        }


def _as_tensor(frames) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(frames), dtype=torch.float32) \
        if not isinstance(frames, torch.Tensor) else frames
    if t.dim() != 4 or t.shape[1] != 3:
        raise ValueError(f"expected (T,3,H,W) frames, got {tuple(t.shape)}")
    return t


def _coded_frame_count(config: CodingConfig, available: int) -> int:
    if config.mode == "AI":
        return 1
    if config.mode == "LDP":
        return available
    n = config.gop_size
    if available < n + 1:
        raise ValueError(
            f"RA with gop {n} needs at least {n + 1} frames, got {available}"
        )
    return 1 + (available - 1) // n * n


def code_sequence(
    frames,
    config: CodingConfig,
    model: VideoCodec,
    mode: Mode = "eval",
    on_frame_coded: Optional[Callable[[int, FrameResult], None]] = None,
) -> SequenceResult:
    """Code a clip in schedule order, referencing decoded frames only."""
    tensor = _as_tensor(frames)
    count = _coded_frame_count(config, tensor.shape[0])
    schedule = build_schedule(config, frame_count=count)
    decoded: dict[int, torch.Tensor] = {}
    results = []
    frame_psnr = {}
    for entry in schedule:
        x_t = tensor[entry.index:entry.index + 1]
        ref_p = decoded[entry.ref_past] if entry.ref_past is not None else None
        ref_f = decoded[entry.ref_future] if entry.ref_future is not None else None
        result = _code_frame(model, x_t, entry.kind, ref_p, ref_f, mode, entry.index)
        decoded[entry.index] = result.x_hat
        results.append(result)
        if mode == "eval":
            frame_psnr[entry.index] = metrics.psnr(
                result.x_hat_clipped[0].detach().numpy(),
                x_t[0].detach().numpy(),
            )
        if on_frame_coded is not None:
            on_frame_coded(entry.index, result)
    return SequenceResult(results, config, frame_psnr)


# ---------------------------------------------------------------------------
# serialized coding (range coder + container)
# ---------------------------------------------------------------------------


def _channels_last_flat(t: torch.Tensor) -> np.ndarray:
    """(1,C,h,w) -> flat numpy in (h, w, C) order, the coded symbol order."""
    return t[0].permute(1, 2, 0).contiguous().detach().cpu().numpy().reshape(-1)


def _encode_latents(entropy: HyperpriorCodec, y_hat: torch.Tensor,
                    z_hat: torch.Tensor, mu: torch.Tensor,
                    b: torch.Tensor) -> tuple[bytes, bytes]:
    mu_z, b_z = entropy.arm.params(z_hat)
    z_enc = LaplaceStreamEncoder()
    z_enc.put(_channels_last_flat(z_hat).astype(np.int64),
              _channels_last_flat(mu_z), _channels_last_flat(b_z))
    y_enc = LaplaceStreamEncoder()
    y_enc.put(_channels_last_flat(y_hat).astype(np.int64),
              _channels_last_flat(mu), _channels_last_flat(b))
    return z_enc.getvalue(), y_enc.getvalue()


def _decode_latents(entropy: HyperpriorCodec, z_bytes: bytes, y_bytes: bytes,
                    y_shape: tuple[int, int, int, int]) -> tuple[torch.Tensor, torch.Tensor]:
    _, c, hy, wy = y_shape
    hz, wz = entropy.z_shape_for((hy, wy))
    z_dec = LaplaceStreamDecoder(z_bytes)
    z_hat = entropy.decode_z_sequential(z_dec.get, (1, c, hz, wz))
    mu, b = entropy.hyper_decode(z_hat, y_hw=(hy, wy))
    y_flat = LaplaceStreamDecoder(y_bytes).get(
        _channels_last_flat(mu), _channels_last_flat(b)
    )
    y_hat = torch.as_tensor(y_flat, dtype=torch.float32).reshape(hy, wy, c)
    return y_hat.permute(2, 0, 1).unsqueeze(0), z_hat


def encode_sequence(model: VideoCodec, frames, config: CodingConfig) -> tuple[bytes, SequenceResult]:
    """Code a clip and serialize it; returns (bitstream, coding results)."""
    tensor = _as_tensor(frames)
    model.eval()
    with torch.no_grad():
        seq = code_sequence(tensor, config, model, mode="eval")
        chunks = []
        for r in seq.results:
            if r.latents["motion"] is not None:
                lb = r.latents["motion"]
                mz, my = _encode_latents(model.motion_entropy, lb.y_hat,
                                         lb.z_hat, lb.mu, lb.b)
            else:
                mz = my = b""
            lb = r.latents["codec"]
            cz, cy = _encode_latents(model.codec_entropy, lb.y_hat,
                                     lb.z_hat, lb.mu, lb.b)
            chunks.append(FrameChunk(mz, my, cz, cy))
    h, w = tensor.shape[-2:]
    header = StreamHeader(
        mode=config.mode,
        gop_size=config.gop_size,
        frame_count=len(chunks),
        width=w,
        height=h,
        f=model.f,
        digest=state_digest(model.state_dict()),
    )
    return write_bitstream(header, chunks), seq


@dataclass
class DecodedSequence:
    header: StreamHeader
    frames: torch.Tensor            # (T, 3, H, W), display order, unclipped
    results: list[FrameResult]      # coding order; bits are measured stream
                                    # bytes * 8, mse is NaN (no original here)


def decode_sequence(model: VideoCodec, data: bytes,
                    verify_digest: bool = True) -> DecodedSequence:
    """Reconstruct a clip from a serialized bitstream."""
    header, chunks = read_bitstream(data)
    if header.f != model.f:
        raise BitstreamError(
            f"bitstream was coded with f={header.f}, model has f={model.f}"
        )
    if verify_digest:
        digest = state_digest(model.state_dict())
        if digest != header.digest:
            raise BitstreamError(
                f"checkpoint mismatch: bitstream expects parameter digest "
                f"{header.digest}, model has {digest}"
            )
    config = CodingConfig(header.mode, header.gop_size)
    schedule = build_schedule(config, frame_count=header.frame_count)
    h16 = math.ceil(header.height / ANALYSIS_STRIDE) * ANALYSIS_STRIDE
    w16 = math.ceil(header.width / ANALYSIS_STRIDE) * ANALYSIS_STRIDE
    y_shape = (1, model.f, h16 // ANALYSIS_STRIDE, w16 // ANALYSIS_STRIDE)
    orig = (header.height, header.width)

    model.eval()
    decoded: dict[int, torch.Tensor] = {}
    results = []
    with torch.no_grad():
        for entry, chunk in zip(schedule, chunks):
            if entry.kind == "I":
                alpha = torch.ones(1, 1, h16, w16)
                x_tilde = torch.zeros(1, 3, h16, w16)
            else:
                ref_p, _ = _pad_to_stride(decoded[entry.ref_past])
                ref_f_src = decoded[entry.ref_future] if entry.kind == "B" \
                    else decoded[entry.ref_past]
                ref_f, _ = _pad_to_stride(ref_f_src)
                y_m_hat, _ = _decode_latents(model.motion_entropy,
                                             chunk.motion_z, chunk.motion_y, y_shape)
                fields, x_tilde, _ = _motion_side(model, entry.kind, y_m_hat, ref_p, ref_f)
                alpha = fields.alpha
            y_c_hat, _ = _decode_latents(model.codec_entropy,
                                         chunk.codec_z, chunk.codec_y, y_shape)
            codec_out, _ = _codec_side(model, entry.kind, y_c_hat, alpha, x_tilde)
            x_hat = _crop((1 - alpha) * x_tilde + codec_out, orig)
            decoded[entry.index] = x_hat
            results.append(FrameResult(
                index=entry.index, kind=entry.kind, x_hat=x_hat,
                bits_motion=torch.tensor(8.0 * (len(chunk.motion_z) + len(chunk.motion_y))),
                bits_codec=torch.tensor(8.0 * (len(chunk.codec_z) + len(chunk.codec_y))),
                mse=torch.tensor(float("nan")),
            ))
    frames = torch.cat([decoded[i] for i in sorted(decoded)], dim=0)
    return DecodedSequence(header, frames, results)
