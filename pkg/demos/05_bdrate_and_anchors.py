"""
RD curves, BD-rate and the reference-codec harness
==================================================

BD-rate summarizes the average rate gap between two rate-distortion curves
at equal quality, from cubic fits of log-rate against PSNR.  The anchor
harness generates reference curves with x265/x264 when ffmpeg is present
and degrades to a structured status when it is not; precomputed CSVs work
either way.
"""

from pathlib import Path

from condvc.anchors import (DEFAULT_QPS, build_anchor_command,
                            ffmpeg_available, run_anchor)
from condvc.diagnostics import plot_rd_curves
from condvc.metrics import RDCurve, bd_rate, write_rd_csv

out = Path("demo_out/bdrate")
out.mkdir(parents=True, exist_ok=True)

anchor = RDCurve([(0.70, 32.7), (1.08, 35.6), (1.66, 38.5), (2.59, 41.0)],
                 label="anchor")
ours = RDCurve([(0.60, 33.9), (0.85, 35.6), (1.21, 37.3), (1.64, 38.9)],
               label="ours")

result = bd_rate(anchor, ours)
print(f"BD-rate of ours vs anchor: {result.bd_rate_percent:+.1f}% over "
      f"[{result.overlap[0]:.1f}, {result.overlap[1]:.1f}] dB")

# sanity identities
print(f"curve vs itself: {bd_rate(anchor, anchor).bd_rate_percent:+.4f}%")
scaled = RDCurve([(r * 1.10, p) for r, p in anchor.points], label="+10% rate")
print(f"uniform +10% rate: {bd_rate(anchor, scaled).bd_rate_percent:+.2f}%")

write_rd_csv(out / "curves.csv", [anchor, ours])
plot_rd_curves([anchor, ours], out / "curves.png", title="demo RD curves")
print(f"wrote {out / 'curves.csv'} and {out / 'curves.png'}")

# the encoder invocation is a fixed command template
print("\nanchor command for a 832x480 clip at CRF 32:")
print(" ", build_anchor_command("x265", 832, 480, 32, "RA"))
print(f"quality sweep uses CRF values {DEFAULT_QPS}")
if not ffmpeg_available():
    status = run_anchor("does_not_matter.yuv", 832, 480, 30.0)
    print(f"ffmpeg missing -> structured status: {status.reason!r}")
