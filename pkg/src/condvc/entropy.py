"""Latent quantization and rate modeling.

Each element of the transmitted latents is modeled with a Laplace
distribution whose location and scale come from a hyperprior; the
hyperprior's own elements are modeled by a causal masked-convolution stack
(raster-order autoregression).  Training relaxes quantization to additive
uniform noise; evaluation rounds, and the resulting integers are what the
range coder transports.

Two independent instances of :class:`HyperpriorCodec` are used per model,
one for the motion latents and one for the codec latents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import torch
import torch.nn.functional as F
from torch import nn

from .layers import MaskedConv2d, conv, deconv

QuantMode = Literal["train", "eval"]

# per-element probability floor, matching the range coder's 16-bit precision
PROB_FLOOR = 2.0 ** -16
SCALE_FLOOR = 1e-6


@dataclass
class LatentBundle:
    """Quantized latents plus their entropy parameters for one subnetwork."""

    y_hat: torch.Tensor            # sent latents, integer-valued at eval
    y_prime: torch.Tensor          # shortcut latents (zero rate)
    z_hat: torch.Tensor            # hyperprior latents
    mu: torch.Tensor               # Laplace location for y_hat
    b: torch.Tensor                # Laplace scale for y_hat, > 0


@dataclass
class RateReport:
    bits_y: float
    bits_z: float

    @property
    def total_bits(self) -> float:
        return self.bits_y + self.bits_z


def quantize(y: torch.Tensor, mode: QuantMode) -> torch.Tensor:
    """Additive uniform noise in [-0.5, 0.5) for training, rounding for eval."""
    if not torch.isfinite(y).all():
        raise ValueError("non-finite latents")
    if mode == "train":
        return y + (torch.rand_like(y) - 0.5)
    if mode == "eval":
        return torch.round(y)
    raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")


def laplace_cdf(x: torch.Tensor, mu: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Laplace CDF, computed through exp(-|x - mu| / b) to avoid overflow."""
    centered = x - mu
    tail = 0.5 * torch.exp(-centered.abs() / b)
    return torch.where(centered < 0, tail, 1.0 - tail)


def laplace_bit_map(y_hat: torch.Tensor, mu: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-element bits -log2( F(y+0.5) - F(y-0.5) ), probability floored.

    The floor (2^-16) keeps bits finite for arbitrary inputs and matches
    the discretization the range coder applies.
    """
    b = torch.as_tensor(b)
    if (b <= 0).any():
        raise ValueError("Laplace scale must be positive")
    p = laplace_cdf(y_hat + 0.5, mu, b) - laplace_cdf(y_hat - 0.5, mu, b)
    return -torch.log2(torch.clamp(p, min=PROB_FLOOR))


def laplace_bits(y_hat: torch.Tensor, mu: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Total bits of the floored Laplace model, summed over all elements."""
    return laplace_bit_map(y_hat, mu, b).sum()


class HyperAnalysis(nn.Module):
    """y -> z at 1/4 of the latent grid (two stride-2 stages)."""

    def __init__(self, channels: int):
        super().__init__()
        self.net = nn.Sequential(
            conv(channels, channels, 3, stride=1),
            nn.ReLU(),
            conv(channels, channels, 5, stride=2),
            nn.ReLU(),
            conv(channels, channels, 5, stride=2),
        )

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        return self.net(y)


class HyperSynthesis(nn.Module):
    """z_hat -> per-element Laplace (mu, b) on the latent grid."""

    def __init__(self, channels: int):
        super().__init__()
        self.net = nn.Sequential(
            deconv(channels, channels, 5, stride=2),
            nn.ReLU(),
            deconv(channels, channels, 5, stride=2),
            nn.ReLU(),
            conv(channels, 2 * channels, 3, stride=1),
        )

    def forward(self, z_hat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mu, raw_b = self.net(z_hat).chunk(2, dim=1)
        return mu, F.softplus(raw_b) + SCALE_FLOOR


class AutoregressiveModel(nn.Module):
    """Causal predictor of the hyperprior's own Laplace parameters.

    Three 5x5 masked convolutions; the first uses an 'A' mask, so the
    output at a raster position depends only on strictly earlier input
    positions.  The first position's parameters are the pure bias response.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.net = nn.Sequential(
            MaskedConv2d(channels, channels, 5, padding=2, mask_type="A"),
            nn.ReLU(),
            MaskedConv2d(channels, channels, 5, padding=2, mask_type="B"),
            nn.ReLU(),
            MaskedConv2d(channels, 2 * channels, 5, padding=2, mask_type="B"),
        )

    def params(self, z_hat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mu, raw_b = self.net(z_hat).chunk(2, dim=1)
        return mu, F.softplus(raw_b) + SCALE_FLOOR

    def bit_map(self, z_hat: torch.Tensor) -> torch.Tensor:
        mu, b = self.params(z_hat)
        return laplace_bit_map(z_hat, mu, b)


@dataclass
class EntropyResult:
    y_hat: torch.Tensor
    z_hat: torch.Tensor
    mu: torch.Tensor
    b: torch.Tensor
    bit_map_y: torch.Tensor   # same shape as y_hat
    bit_map_z: torch.Tensor   # same shape as z_hat

    @property
    def bits_y(self) -> torch.Tensor:
        return self.bit_map_y.sum()

    @property
    def bits_z(self) -> torch.Tensor:
        return self.bit_map_z.sum()


class HyperpriorCodec(nn.Module):
    """Rate model for one latent family: hyperprior + autoregressive side.

    ``forward`` quantizes, runs the hyper autoencoder and returns bit maps
    (differentiable in train mode).  ``compress``/``decompress`` in
    rangecoder-backed inference live on the coder module, which owns the
    bitstream layout; this class exposes the pieces they need.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.hyper_analysis = HyperAnalysis(channels)
        self.hyper_synthesis = HyperSynthesis(channels)
        self.arm = AutoregressiveModel(channels)

    def hyper_encode(self, y: torch.Tensor, mode: QuantMode) -> torch.Tensor:
        return quantize(self.hyper_analysis(y), mode)

    def hyper_decode(self, z_hat: torch.Tensor,
                     y_hw: Optional[tuple[int, int]] = None) -> tuple[torch.Tensor, torch.Tensor]:
        """Laplace parameters on the latent grid.

        The synthesis upsamples x4, which overshoots when the latent grid
        is not divisible by 4; ``y_hw`` crops back to the latent shape.
        """
        mu, b = self.hyper_synthesis(z_hat)
        if y_hw is not None:
            mu = mu[..., :y_hw[0], :y_hw[1]]
            b = b[..., :y_hw[0], :y_hw[1]]
        return mu, b

    def arm_bits(self, z_hat: torch.Tensor) -> torch.Tensor:
        return self.arm.bit_map(z_hat).sum()

    def forward(self, y: torch.Tensor, mode: QuantMode) -> EntropyResult:
        z_hat = self.hyper_encode(y, mode)
        mu, b = self.hyper_decode(z_hat, y_hw=y.shape[-2:])
        y_hat = quantize(y, mode)
        return EntropyResult(
            y_hat=y_hat,
            z_hat=z_hat,
            mu=mu,
            b=b,
            bit_map_y=laplace_bit_map(y_hat, mu, b),
            bit_map_z=self.arm.bit_map(z_hat),
        )

    @staticmethod
    def z_shape_for(y_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Spatial shape of z for a given y shape (two stride-2 stages)."""
        *lead, h, w = y_shape
        return (*lead, math.ceil(h / 2 / 2), math.ceil(w / 2 / 2))

    @torch.no_grad()
    def decode_z_sequential(
        self,
        pull_symbols,
        shape: tuple[int, int, int, int],
        device: Optional[torch.device] = None,
    ) -> torch.Tensor:
        """Reconstruct z_hat position by position in raster order.

        ``pull_symbols(mu, b)`` must return the next ``len(mu)`` integer
        symbols coded under those parameters (all channels of one spatial
        position).  Because the model is strictly causal, evaluating it on
        the partially filled tensor yields the exact parameters the encoder
        used.  Cost is one stack evaluation per position; hyperprior grids
        are small (1/64 of the frame in each dimension).
        """
        b_, c, h, w = shape
        if b_ != 1:
            raise ValueError("sequential decoding handles one stream at a time")
        z = torch.zeros(shape, device=device)
        for i in range(h):
            for j in range(w):
                mu, b = self.arm.params(z)
                sym = pull_symbols(
                    mu[0, :, i, j].cpu().numpy(), b[0, :, i, j].cpu().numpy()
                )
                z[0, :, i, j] = torch.as_tensor(sym, dtype=z.dtype, device=z.device)
        return z
