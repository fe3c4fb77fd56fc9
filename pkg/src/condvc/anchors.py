"""Reference-codec (x265 / x264) invocation for anchor RD curves.

The command templates are fixed strings with {W}, {H} and {QP}
placeholders; the quality sweep uses CRF values 27, 32, 37, 42.  When the
ffmpeg binary is absent the harness returns a structured "unavailable"
status instead of failing, and BD comparisons can proceed from precomputed
RD CSVs.
"""

from __future__ import annotations

import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics, video_io

HEVC_TEMPLATE = (
    'ffmpeg -video_size {W}x{H} -i in.yuv -c:v libx265 -pix_fmt yuv420p '
    '-x265-params "keyint=9:min-keyint=9" -crf {QP} -preset medium '
    '-tune psnr out.mp4'
)
AVC_TEMPLATE = (
    'ffmpeg -video_size {W}x{H} -i in.yuv -c:v libx264 -pix_fmt yuv420p '
    '-g 9 -crf {QP} -preset medium -tune psnr out.mp4'
)
DEFAULT_QPS = (27, 32, 37, 42)

CODEC_TEMPLATES = {"x265": HEVC_TEMPLATE, "x264": AVC_TEMPLATE}


def build_anchor_command(
    codec: str,
    width: int,
    height: int,
    qp: int,
    mode: str = "RA",
    in_path: str = "in.yuv",
    out_path: str = "out.mp4",
) -> str:
    """The exact encoder command line; LDP swaps the tune to zerolatency."""
    if codec not in CODEC_TEMPLATES:
        raise ValueError(f"codec must be one of {sorted(CODEC_TEMPLATES)}, got {codec!r}")
    cmd = CODEC_TEMPLATES[codec].format(W=width, H=height, QP=qp)
    if mode == "LDP":
        cmd = cmd.replace("-tune psnr", "-tune zerolatency")
    elif mode not in ("RA", "AI"):
        raise ValueError(f"mode must be RA, LDP or AI, got {mode!r}")
    if in_path != "in.yuv":
        cmd = cmd.replace("in.yuv", in_path)
    if out_path != "out.mp4":
        cmd = cmd.replace("out.mp4", out_path)
    return cmd


@dataclass
class AnchorPoint:
    qp: int
    rate_mbit_s: float
    psnr_db: float
    encoded_bytes: int


@dataclass
class AnchorResult:
    available: bool
    codec: str
    mode: str
    reason: str = ""
    points: Optional[list[AnchorPoint]] = None

    def to_curve(self, label: str = "") -> metrics.RDCurve:
        if not self.available or not self.points:
            raise RuntimeError(f"anchor unavailable: {self.reason}")
        return metrics.RDCurve(
            [(p.rate_mbit_s, p.psnr_db) for p in self.points],
            label=label or f"{self.codec}-{self.mode}",
        )


def ffmpeg_available() -> bool:
    return shutil.which("ffmpeg") is not None


def run_anchor(
    yuv_path: str | Path,
    width: int,
    height: int,
    fps: float,
    codec: str = "x265",
    mode: str = "RA",
    qps: tuple[int, ...] = DEFAULT_QPS,
) -> AnchorResult:
    """Encode + decode the clip at each QP, measuring rate and PSNR.

    Rate is container size * 8 / coded duration (Mbit/s); PSNR is computed
    on the internal YUV444 representation of source and decoded output, so
    anchor and learned-codec numbers share a domain.
    """
    if not ffmpeg_available():
        return AnchorResult(False, codec, mode,
                            reason="ffmpeg not found on PATH")
    raw = video_io.load_yuv420(yuv_path, width, height)
    src = video_io.stack_frames(video_io.to_internal(raw))
    duration_s = raw.frame_count / fps
    points = []
    with tempfile.TemporaryDirectory(prefix="condvc_anchor_") as tmp:
        tmp_path = Path(tmp)
        for qp in qps:
            out_mp4 = tmp_path / f"out_q{qp}.mp4"
            cmd = build_anchor_command(codec, width, height, qp, mode,
                                       in_path=str(yuv_path), out_path=str(out_mp4))
            proc = subprocess.run(shlex.split(cmd), capture_output=True)
            if proc.returncode != 0:
                return AnchorResult(
                    False, codec, mode,
                    reason=f"encoder failed at QP {qp}: "
                           f"{proc.stderr.decode(errors='replace')[-400:]}",
                )
            dec_yuv = tmp_path / f"dec_q{qp}.yuv"
            dec = subprocess.run(
                ["ffmpeg", "-y", "-i", str(out_mp4), "-pix_fmt", "yuv420p",
                 "-f", "rawvideo", str(dec_yuv)],
                capture_output=True,
            )
            if dec.returncode != 0:
                return AnchorResult(
                    False, codec, mode,
                    reason=f"decoder failed at QP {qp}: "
                           f"{dec.stderr.decode(errors='replace')[-400:]}",
                )
            rec_raw = video_io.load_yuv420(dec_yuv, width, height)
            rec = video_io.stack_frames(video_io.to_internal(rec_raw))
            n = min(len(src), len(rec))
            quality = float(np.mean([metrics.psnr(src[t], rec[t]) for t in range(n)]))
            size = out_mp4.stat().st_size
            points.append(AnchorPoint(
                qp=qp,
                rate_mbit_s=size * 8 / duration_s / 1e6,
                psnr_db=quality,
                encoded_bytes=size,
            ))
    return AnchorResult(True, codec, mode, points=points)
