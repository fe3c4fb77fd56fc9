"""Per-GOP reports, coding-behavior image dumps and ablation synthesis.

The image set for one coded frame mirrors the quantities the coder
arbitrates over: the alpha and beta maps (red = 1, blue = 0), colorized
flows, the skip and codec contributions rendered from YUV (zeroed areas
come out green), and per-pixel rate heat maps.
"""

from __future__ import annotations

from pathlib import Path
import numpy as np
import torch
import torch.nn.functional as F

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import video_io  # noqa: E402
from .coder import FrameResult, SequenceResult, _crop  # noqa: E402
from .metrics import RDCurve  # noqa: E402
from .motion import flow_to_color  # noqa: E402
from .nets import VideoCodec  # noqa: E402

DIAGNOSTIC_IMAGE_NAMES = (
    "alpha", "beta", "flow_past", "flow_future",
    "skip_part", "codec_part", "rate_map_motion", "rate_map_codec",
)


def gop_report(results: SequenceResult | list[FrameResult], fps: float) -> dict:
    """Per-frame rate (Mbit/s) and PSNR rows plus the I+GOP averages."""
    if isinstance(results, SequenceResult):
        frame_psnr = results.frame_psnr
        ordered = results.display_order
    else:
        frame_psnr = {}
        ordered = sorted(results, key=lambda r: r.index)
    rows = []
    for r in ordered:
        rows.append({
            "label": f"{r.kind}{r.index}",
            "kind": r.kind,
            "index": r.index,
            "mbit_per_s": float(r.bits_total) * fps / 1e6,
            "psnr": frame_psnr.get(r.index),
        })
    rates = [row["mbit_per_s"] for row in rows]
    psnrs = [row["psnr"] for row in rows if row["psnr"] is not None]
    report = {
        "rows": rows,
        "avg": {
            "mbit_per_s": float(np.mean(rates)),
            "psnr": float(np.mean(psnrs)) if psnrs else None,
        },
        "psnr_variance": float(np.var(psnrs)) if psnrs else None,
    }
    return report


def _yuv_to_rgb(frame: np.ndarray) -> np.ndarray:
    """BT.601 render of a (3, H, W) [0,1] YUV frame; zeroed YUV shows green."""
    y, u, v = frame
    u = u - 0.5
    v = v - 0.5
    r = y + 1.402 * v
    g = y - 0.344136 * u - 0.714136 * v
    b = y + 1.772 * u
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def _red_blue(map01: np.ndarray) -> np.ndarray:
    """Red for 1, blue for 0 through the diverging bwr colormap."""
    return plt.get_cmap("bwr")(np.clip(map01, 0.0, 1.0))[..., :3]


def _heat(map_pos: np.ndarray) -> np.ndarray:
    peak = map_pos.max()
    norm = map_pos / peak if peak > 0 else np.zeros_like(map_pos)
    return plt.get_cmap("viridis")(norm)[..., :3]


def _first(t: torch.Tensor) -> np.ndarray:
    return t[0].detach().cpu().numpy()


def diagnostics(result: FrameResult, out_dir: str | Path, prefix: str = "") -> dict[str, Path]:
    """Write the 8-image dump for one coded frame; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = prefix or f"{result.kind}{result.index}"
    h, w = result.x_hat.shape[-2:]
    images: dict[str, np.ndarray] = {
        "alpha": _red_blue(_first(result.maps["alpha"])[0]),
        "beta": _red_blue(_first(result.maps["beta"])[0]),
        "flow_past": flow_to_color(_first(result.maps["flow_past"])),
        "flow_future": flow_to_color(_first(result.maps["flow_future"])),
        "skip_part": _yuv_to_rgb(_first(result.maps["skip_part"])),
        "codec_part": _yuv_to_rgb(np.clip(_first(result.maps["codec_part"]), 0, 1)),
    }
    for name in ("rate_map_motion", "rate_map_codec"):
        rate_map = result.maps[name]
        if rate_map is None:
            images[name] = np.zeros((h, w, 3))
        else:
            up = F.interpolate(rate_map, size=(h, w), mode="bilinear",
                               align_corners=False)
            images[name] = _heat(_first(up)[0])
    paths = {}
    for name, image in images.items():
        path = out / f"{prefix}_{name}.png"
        video_io.write_image(image, path)
        paths[name] = path
    return paths


def ablation_synthesis(
    model: VideoCodec,
    result: FrameResult,
    which: str,
    net: str,
) -> dict[str, np.ndarray]:
    """Re-run one synthesis with a latent group zeroed.

    ``which`` is one of both / shortcut_only / sent_only; ``net`` selects
    the motion or codec synthesis.  For the motion net the result carries
    the flow-toward-future visualization; for the codec net the partial
    reconstruction.
    """
    if which not in ("both", "shortcut_only", "sent_only"):
        raise ValueError(f"which must be both|shortcut_only|sent_only, got {which!r}")
    if net not in ("motion", "codec"):
        raise ValueError(f"net must be motion|codec, got {net!r}")
    bundle = result.latents[net]
    if bundle is None:
        raise ValueError(f"frame {result.kind}{result.index} has no {net} latents")
    y_hat = bundle.y_hat
    y_prime = bundle.y_prime
    if which == "shortcut_only":
        y_hat = torch.zeros_like(y_hat)
    elif which == "sent_only":
        y_prime = torch.zeros_like(y_prime)
    h, w = result.x_hat.shape[-2:]
    with torch.no_grad():
        if net == "motion":
            fields = model.motion_net.synthesis_transform(y_hat, y_prime)
            flow = _crop(fields.flow_future, (h, w))
            return {
                "flow_future": _first(flow),
                "flow_future_rgb": flow_to_color(_first(flow)),
                "beta": _first(_crop(fields.beta, (h, w))),
                "alpha": _first(_crop(fields.alpha, (h, w))),
            }
        out = model.codec_net.synthesis_transform(y_hat, y_prime)
        partial = _first(_crop(out, (h, w)))
        return {
            "reconstruction": partial,
            "reconstruction_rgb": _yuv_to_rgb(np.clip(partial, 0, 1)),
        }


def plot_rd_curves(curves: list[RDCurve], path: str | Path,
                   title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for curve in curves:
        ax.plot(curve.rates, curve.psnrs, marker="o", label=curve.label or None)
    ax.set_xlabel("Rate (Mbit/s)")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(True, alpha=0.4)
    if title:
        ax.set_title(title)
    if any(c.label for c in curves):
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_gop_bars(report: dict, path: str | Path) -> None:
    rows = report["rows"]
    labels = [r["label"] for r in rows] + ["Avg"]
    rates = [r["mbit_per_s"] for r in rows] + [report["avg"]["mbit_per_s"]]
    psnrs = [r["psnr"] for r in rows] + [report["avg"]["psnr"]]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    x = np.arange(len(labels))
    ax1.bar(x, rates)
    ax1.set_ylabel("Rate (Mbit/s)")
    if all(p is not None for p in psnrs):
        ax2.bar(x, psnrs)
    ax2.set_ylabel("PSNR (dB)")
    ax2.set_xticks(x, labels)
    ax2.set_xlabel("Frame index and type")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
