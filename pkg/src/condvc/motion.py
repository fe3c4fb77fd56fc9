"""Differentiable bilinear warping and bidirectional weighted prediction.

Flow convention: channel 0 is horizontal displacement, channel 1 vertical,
in pixels at full resolution, pointing from the current frame toward the
reference.  Sampling therefore uses +v: the warped output at (i, j) is the
bilinear sample of the reference at (j + vx, i + vy).  Out-of-bounds
coordinates clamp to the border, which keeps the operator total and
differentiable everywhere except the integer lattice.
"""

from __future__ import annotations

import numpy as np
import torch


def warp(reference: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Bilinearly sample ``reference`` at positions displaced by ``flow``.

    Args:
        reference: (B, C, H, W) tensor.
        flow: (B, 2, H, W) tensor, channel 0 horizontal, channel 1 vertical.

    Differentiable w.r.t. both inputs; border-clamped sampling.
    """
    if reference.dim() != 4 or flow.dim() != 4 or flow.shape[1] != 2:
        raise ValueError(
            f"expected (B,C,H,W) reference and (B,2,H,W) flow, "
            f"got {tuple(reference.shape)} and {tuple(flow.shape)}"
        )
    if reference.shape[2:] != flow.shape[2:] or reference.shape[0] != flow.shape[0]:
        raise ValueError(
            f"geometry mismatch: reference {tuple(reference.shape)} "
            f"vs flow {tuple(flow.shape)}"
        )
    if not torch.isfinite(flow).all():
        raise ValueError("non-finite flow values")

    b, c, h, w = reference.shape
    device, dtype = reference.device, reference.dtype
    gy, gx = torch.meshgrid(
        torch.arange(h, device=device, dtype=dtype),
        torch.arange(w, device=device, dtype=dtype),
        indexing="ij",
    )
    px = gx.unsqueeze(0) + flow[:, 0]
    py = gy.unsqueeze(0) + flow[:, 1]

    x0 = torch.floor(px)
    y0 = torch.floor(py)
    fx = (px - x0).unsqueeze(1)
    fy = (py - y0).unsqueeze(1)

    x0c = x0.long().clamp(0, w - 1)
    x1c = (x0.long() + 1).clamp(0, w - 1)
    y0c = y0.long().clamp(0, h - 1)
    y1c = (y0.long() + 1).clamp(0, h - 1)

    flat = reference.reshape(b, c, h * w)

    def gather(yi: torch.Tensor, xi: torch.Tensor) -> torch.Tensor:
        idx = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).reshape(b, c, h, w)

    v00 = gather(y0c, x0c)
    v01 = gather(y0c, x1c)
    v10 = gather(y1c, x0c)
    v11 = gather(y1c, x1c)

    top = v00 * (1 - fx) + v01 * fx
    bot = v10 * (1 - fx) + v11 * fx
    return top * (1 - fy) + bot * fy


def blend(warp_p: torch.Tensor, warp_f: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """Pixel-wise convex combination beta * warp_p + (1 - beta) * warp_f.

    ``beta`` is (B, 1, H, W) in [0, 1] and broadcasts over channels.
    """
    if warp_p.shape != warp_f.shape:
        raise ValueError(f"shape mismatch {tuple(warp_p.shape)} vs {tuple(warp_f.shape)}")
    if beta.shape[-2:] != warp_p.shape[-2:]:
        raise ValueError(f"beta geometry {tuple(beta.shape)} vs {tuple(warp_p.shape)}")
    if beta.min() < 0 or beta.max() > 1:
        raise ValueError("beta outside [0, 1]")
    return beta * warp_p + (1 - beta) * warp_f


def flow_to_color(flow: torch.Tensor | np.ndarray) -> np.ndarray:
    """Colorize a (2, H, W) flow field as an (H, W, 3) RGB image in [0, 1].

    Hue encodes direction, saturation encodes magnitude normalized by the
    per-image maximum, value is 1; zero flow renders white.  Scaling every
    vector by a common factor leaves the image unchanged.
    """
    from matplotlib.colors import hsv_to_rgb

    v = flow.detach().cpu().numpy() if isinstance(flow, torch.Tensor) else np.asarray(flow)
    if v.ndim != 3 or v.shape[0] != 2:
        raise ValueError(f"expected (2, H, W) flow, got {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("non-finite flow values")
    vx, vy = v.astype(np.float64)
    mag = np.hypot(vx, vy)
    peak = mag.max()
    hue = (np.arctan2(vy, vx) / (2 * np.pi)) % 1.0
    sat = mag / peak if peak > 0 else np.zeros_like(mag)
    hsv = np.stack([hue, sat, np.ones_like(mag)], axis=-1)
    return hsv_to_rgb(hsv)
