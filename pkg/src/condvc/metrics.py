"""PSNR and Bjontegaard-style rate comparison between RD curves."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PSNR_CAP_DB = 100.0


class OverlapError(ValueError):
    """The two curves share no quality interval; the comparison is undefined."""


def psnr(a, b) -> float:
    """10*log10(1 / MSE) over all three channels, capped at 100 dB.

    Inputs are [0, 1] arrays of identical shape (the internal YUV444
    representation); the cap applies whenever MSE underflows the cap's own
    threshold, including exact equality.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.min() < -1e-6 or x.max() > 1 + 1e-6 or y.min() < -1e-6 or y.max() > 1 + 1e-6:
        raise ValueError("inputs must lie in [0, 1]")
    mse = float(np.mean((x - y) ** 2))
    if mse <= 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return min(-10.0 * np.log10(mse), PSNR_CAP_DB)


@dataclass
class RDCurve:
    """Rate/quality points for one sequence and configuration.

    Points are kept sorted by rate; rates must be positive and, after
    sorting, strictly increasing.
    """

    points: list[tuple[float, float]]
    label: str = ""

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("empty RD curve")
        pts = sorted((float(r), float(p)) for r, p in self.points)
        rates = np.array([r for r, _ in pts])
        psnrs = np.array([p for _, p in pts])
        if (rates <= 0).any():
            raise ValueError("rates must be positive")
        if not np.isfinite(psnrs).all():
            raise ValueError("PSNR values must be finite")
        if (np.diff(rates) <= 0).any():
            raise ValueError("rates must be strictly increasing")
        self.points = pts

    @property
    def rates(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p for _, p in self.points])


@dataclass
class BDResult:
    bd_rate_percent: float
    overlap: tuple[float, float]


def _fit_log_rate(curve: RDCurve) -> np.ndarray:
    quality = curve.psnrs
    if (np.diff(quality) <= 0).any():
        warnings.warn(
            f"curve {curve.label!r} is not PSNR-monotone; "
            "fitting the rate-sorted points as-is",
            stacklevel=3,
        )
    deg = min(3, len(curve.points) - 1)
    return np.polyfit(quality, np.log(curve.rates), deg)


def bd_rate(anchor: RDCurve, test: RDCurve) -> BDResult:
    """Average rate difference of ``test`` vs ``anchor`` at equal quality.

    Fits log(rate) as a cubic polynomial in PSNR for each curve (degree
    n-1 for 3-point curves), integrates both polynomials exactly over the
    shared PSNR interval, and converts the mean log-rate gap back to a
    percentage.  Negative means the test coder needs less rate.
    """
    for name, c in (("anchor", anchor), ("test", test)):
        if len(c.points) < 3:
            raise ValueError(f"{name} curve needs at least 3 points, got {len(c.points)}")
    lo = max(anchor.psnrs.min(), test.psnrs.min())
    hi = min(anchor.psnrs.max(), test.psnrs.max())
    if hi <= lo:
        raise OverlapError(
            f"no PSNR overlap: anchor spans [{anchor.psnrs.min():.3f}, "
            f"{anchor.psnrs.max():.3f}] dB, test spans "
            f"[{test.psnrs.min():.3f}, {test.psnrs.max():.3f}] dB"
        )
    int_anchor = np.polyint(_fit_log_rate(anchor))
    int_test = np.polyint(_fit_log_rate(test))
    mean_diff = (
        (np.polyval(int_test, hi) - np.polyval(int_test, lo))
        - (np.polyval(int_anchor, hi) - np.polyval(int_anchor, lo))
    ) / (hi - lo)
    return BDResult(float((np.exp(mean_diff) - 1.0) * 100.0), (float(lo), float(hi)))


def write_rd_csv(path, curves: Sequence[RDCurve]) -> None:
    """One `label,rate,psnr` row per point."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "rate", "psnr"])
        for curve in curves:
            for rate, quality in curve.points:
                writer.writerow([curve.label, f"{rate:.10g}", f"{quality:.10g}"])


def read_rd_csv(path) -> dict[str, RDCurve]:
    """Parse a `label,rate,psnr` CSV into one curve per label."""
    groups: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty CSV")
        rows = [header] if header and header[0] != "label" else []
        rows.extend(reader)
    for row in rows:
        if not row:
            continue
        if len(row) != 3:
            raise ValueError(f"{path}: expected label,rate,psnr rows, got {row}")
        label, rate, quality = row
        groups.setdefault(label, []).append((float(rate), float(quality)))
    return {label: RDCurve(points, label=label) for label, points in groups.items()}
