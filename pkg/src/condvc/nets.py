"""The two conditional-coding subnetworks and the assembled codec model.

Both subnetworks follow the same three-transform pattern:

* analysis (encoder side): sees everything, produces the sent latents,
  16x downsampled, that the entropy coder transports;
* shortcut (decoder side): sees only decoder-available inputs and produces
  zero-rate latents;
* synthesis (decoder side): concatenates sent and shortcut latents and
  produces the output.

``MotionNet`` outputs two optical flows, the bidirectional blend weight
``beta`` and the skip/codec arbitration map ``alpha`` (both hard-clipped to
[0, 1]).  Its shortcut latents keep a finer grid (4x downsampled) than the
sent ones, which the synthesis upsamples internally before concatenation.
``CodecNet`` codes the alpha-selected frame content conditioned on the
temporal prediction; its shortcut latents share the sent-latent grid.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .entropy import HyperpriorCodec
from .layers import GDN, AttentionBlock, ResidualBlock, conv, deconv

ANALYSIS_STRIDE = 16
SHORTCUT_STRIDE = 4


@dataclass
class MotionFields:
    """Full-resolution outputs of the motion synthesis."""

    flow_past: torch.Tensor    # (B, 2, H, W)
    flow_future: torch.Tensor  # (B, 2, H, W)
    beta: torch.Tensor         # (B, 1, H, W) in [0, 1]
    alpha: torch.Tensor        # (B, 1, H, W) in [0, 1]


class _LeakyAnalysis(nn.Module):
    """4 stride-2 stages with leaky-ReLU, residual blocks and attention."""

    def __init__(self, in_ch: int, f: int):
        super().__init__()
        act = nn.LeakyReLU(0.2)
        self.net = nn.Sequential(
            conv(in_ch, f), act,
            conv(f, f), act,
            ResidualBlock(f),
            AttentionBlock(f),
            conv(f, f), act,
            conv(f, f), act,
            ResidualBlock(f),
            AttentionBlock(f),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class _GdnAnalysis(nn.Module):
    """4 stride-2 stages with GDN and attention (mid + end)."""

    def __init__(self, in_ch: int, f: int, attention: bool = True):
        super().__init__()
        stages: list[nn.Module] = [
            conv(in_ch, f), GDN(f),
            conv(f, f), GDN(f),
        ]
        if attention:
            stages.append(AttentionBlock(f))
        stages += [conv(f, f), GDN(f), conv(f, f), GDN(f)]
        if attention:
            stages.append(AttentionBlock(f))
        self.net = nn.Sequential(*stages)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class MotionNet(nn.Module):
    """Codes motion, blend weight and coding-mode selection."""

    def __init__(self, f: int):
        super().__init__()
        if f < 4:
            raise ValueError(f"feature width must be >= 4, got {f}")
        self.f = f
        act = nn.LeakyReLU(0.2)
        self.analysis = _LeakyAnalysis(9, f)
        self.shortcut = nn.Sequential(
            conv(6, f), act,
            conv(f, f), act,
            ResidualBlock(f),
        )
        # sent latents: stride 16 -> 4, then merge with the shortcut grid
        self.synthesis_pre = nn.Sequential(
            AttentionBlock(f),
            deconv(f, f), act,
            deconv(f, f), act,
        )
        self.synthesis_post = nn.Sequential(
            conv(2 * f, f, 3, stride=1), act,
            ResidualBlock(f),
            AttentionBlock(f),
            deconv(f, f), act,
            deconv(f, 6),
        )
        # start the clamped beta/alpha channels at the neutral point: a
        # saturated gate gets no gradient, and a beta stuck at 1 would also
        # starve the future-warp branch
        with torch.no_grad():
            self.synthesis_post[-1].bias[4:6] = 0.5

    def analysis_transform(self, x_t: torch.Tensor, ref_p: torch.Tensor,
                           ref_f: torch.Tensor) -> torch.Tensor:
        return self.analysis(torch.cat([x_t, ref_p, ref_f], dim=1))

    def shortcut_transform(self, ref_p: torch.Tensor, ref_f: torch.Tensor) -> torch.Tensor:
        return self.shortcut(torch.cat([ref_p, ref_f], dim=1))

    def synthesis_transform(self, y_hat: torch.Tensor, y_prime: torch.Tensor) -> MotionFields:
        up = self.synthesis_pre(y_hat)
        if up.shape[-2:] != y_prime.shape[-2:]:
            raise ValueError(
                f"latent grids do not align: sent {tuple(up.shape)} "
                f"vs shortcut {tuple(y_prime.shape)}"
            )
        out = self.synthesis_post(torch.cat([up, y_prime], dim=1))
        return MotionFields(
            flow_past=out[:, 0:2],
            flow_future=out[:, 2:4],
            beta=torch.clamp(out[:, 4:5], 0.0, 1.0),
            alpha=torch.clamp(out[:, 5:6], 0.0, 1.0),
        )


class CodecNet(nn.Module):
    """Conditional coder of the alpha-selected frame content."""

    def __init__(self, f: int):
        super().__init__()
        if f < 4:
            raise ValueError(f"feature width must be >= 4, got {f}")
        self.f = f
        self.analysis = _GdnAnalysis(6, f)
        self.shortcut = _GdnAnalysis(3, f, attention=False)
        self.synthesis = nn.Sequential(
            conv(2 * f, f, 3, stride=1),
            AttentionBlock(f),
            deconv(f, f), GDN(f, inverse=True),
            deconv(f, f), GDN(f, inverse=True),
            AttentionBlock(f),
            deconv(f, f), GDN(f, inverse=True),
            deconv(f, 3),
        )

    def analysis_transform(self, masked_x: torch.Tensor, masked_pred: torch.Tensor) -> torch.Tensor:
        return self.analysis(torch.cat([masked_x, masked_pred], dim=1))

    def shortcut_transform(self, masked_pred: torch.Tensor) -> torch.Tensor:
        return self.shortcut(masked_pred)

    def synthesis_transform(self, y_hat: torch.Tensor, y_prime: torch.Tensor) -> torch.Tensor:
        if y_hat.shape != y_prime.shape:
            raise ValueError(
                f"latent shape mismatch: {tuple(y_hat.shape)} vs {tuple(y_prime.shape)}"
            )
        return self.synthesis(torch.cat([y_hat, y_prime], dim=1))


class VideoCodec(nn.Module):
    """Whole model: both transforms plus their independent entropy coders."""

    def __init__(self, f: int = 128):
        super().__init__()
        self.f = f
        self.motion_net = MotionNet(f)
        self.codec_net = CodecNet(f)
        self.motion_entropy = HyperpriorCodec(f)
        self.codec_entropy = HyperpriorCodec(f)


def param_count(module: nn.Module) -> int:
    """Exact number of learnable scalars."""
    return sum(p.numel() for p in module.parameters())


CHECKPOINT_VERSION = 1


def state_digest(state_dict: dict) -> str:
    """Stable 16-hex-character digest of the parameter values."""
    h = hashlib.sha256()
    for name in sorted(state_dict):
        t = state_dict[name]
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(model: VideoCodec, path, config: Optional[dict] = None) -> str:
    """Write a versioned checkpoint; returns the parameter digest."""
    sd = model.state_dict()
    digest = state_digest(sd)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": {"f": model.f, **(config or {})},
        "digest": digest,
        "state_dict": sd,
    }
    torch.save(payload, path)
    return digest


def load_checkpoint(path) -> tuple[VideoCodec, dict]:
    """Rebuild a model from a checkpoint; returns (model, config)."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    config = dict(payload["config"])
    model = VideoCodec(f=int(config["f"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    config["digest"] = payload["digest"]
    return model, config
