"""Command-line entry point.

Subcommands: train, code, decode, eval, bdrate, visualize, anchors.
Configuration precedence is flags > config file > defaults; every run
writes a manifest (command, merged config, seed, version, input hashes,
outputs) next to its outputs.

Exit codes: 0 success, 2 bad input, 3 missing external dependency,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import torch

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_MISSING_DEP = 3
EXIT_NUMERICAL = 4

PACKAGE_VERSION = "0.1.0"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_BAD_INPUT):
        super().__init__(message)
        self.code = code


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()[:16]


def _write_manifest(out_dir: Path, command: str, config: dict,
                    inputs: list[Path], outputs: list[Path],
                    seed: int | None = None) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": PACKAGE_VERSION,
        "seed": seed,
        "config": config,
        "input_hashes": {str(p): _hash_file(p) for p in inputs if p.exists()},
        "outputs": [str(p) for p in outputs],
    }
    path = out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, default=str))
    return path


def _load_frames(args) -> np.ndarray:
    from . import video_io
    raw = video_io.load_yuv420(args.input, args.width, args.height)
    return video_io.stack_frames(video_io.to_internal(raw))


def _coding_config(args):
    from .coder import CodingConfig
    return CodingConfig(mode=args.mode, gop_size=args.gop)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    from .train import TrainConfig, fit

    merged: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise CliError(f"config file not found: {path}")
        merged.update(json.loads(path.read_text()))
    for key in ("lmbda", "steps", "f", "batch_size", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    for required in ("lmbda", "steps"):
        if required not in merged:
            raise CliError(f"missing config key: {required!r}")
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(merged) - known
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    config = TrainConfig(**merged)
    out_dir = Path(args.out_dir)
    try:
        model, history = fit(config, out_dir=out_dir,
                             checkpoint_every=args.checkpoint_every,
                             resume_from=args.resume)
    except RuntimeError as exc:
        raise CliError(f"training aborted: {exc}", EXIT_NUMERICAL) from exc
    outputs = [out_dir / "final.pt", out_dir / "training_curve.csv"]
    _write_manifest(out_dir, "train", dataclasses.asdict(config),
                    [Path(args.config)] if args.config else [], outputs,
                    seed=config.seed)
    print(f"trained {config.steps} steps, final loss "
          f"{history[-1]['loss']:.5f}, checkpoint {outputs[0]}")
    return EXIT_OK


def cmd_code(args) -> int:
    from .coder import encode_sequence
    from .nets import load_checkpoint

    model, _ = load_checkpoint(args.checkpoint)
    frames = _load_frames(args)
    if args.frames:
        frames = frames[:args.frames]
    config = _coding_config(args)
    stream, seq = encode_sequence(model, frames, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stream_path = out_dir / "stream.cvc"
    stream_path.write_bytes(stream)
    report = seq.report(fps=args.fps)
    report["stream_bytes"] = len(stream)
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2))
    _write_manifest(out_dir, "code",
                    {"mode": args.mode, "gop": args.gop, "fps": args.fps,
                     "checkpoint": str(args.checkpoint)},
                    [Path(args.input), Path(args.checkpoint)],
                    [stream_path, report_path])
    totals = report["totals"]
    print(f"coded {totals['frames']} frames: {totals['bits']:.0f} bit "
          f"estimate, {len(stream)} stream bytes, "
          f"PSNR {totals['psnr']:.3f} dB -> {stream_path}")
    return EXIT_OK


def cmd_decode(args) -> int:
    from . import video_io
    from .bitstream import BitstreamError
    from .coder import decode_sequence
    from .nets import load_checkpoint

    model, _ = load_checkpoint(args.checkpoint)
    data = Path(args.bitstream).read_bytes()
    try:
        decoded = decode_sequence(model, data)
    except BitstreamError as exc:
        raise CliError(str(exc)) from exc
    frames = decoded.frames.clamp(0, 1).numpy()
    raw = video_io.to_yuv420(list(frames))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_yuv = out_dir / "decoded.yuv"
    video_io.save_yuv420(raw, out_yuv)
    _write_manifest(out_dir, "decode", {"checkpoint": str(args.checkpoint)},
                    [Path(args.bitstream), Path(args.checkpoint)], [out_yuv])
    print(f"decoded {decoded.header.frame_count} frames "
          f"({decoded.header.width}x{decoded.header.height}) -> {out_yuv}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import metrics
    from .coder import code_sequence
    from .diagnostics import plot_rd_curves
    from .nets import load_checkpoint

    frames = _load_frames(args)
    if args.frames:
        frames = frames[:args.frames]
    config = _coding_config(args)
    points = []
    for ckpt in args.checkpoints:
        model, ckpt_config = load_checkpoint(ckpt)
        with torch.no_grad():
            seq = code_sequence(frames, config, model, mode="eval")
        totals = seq.totals()
        rate = totals["bits"] * args.fps / totals["frames"] / 1e6
        points.append((rate, totals["psnr"]))
        print(f"{ckpt}: {rate:.4f} Mbit/s, {totals['psnr']:.3f} dB "
              f"(lambda={ckpt_config.get('lmbda')})")
    curve = metrics.RDCurve(points, label=args.label)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "rd_curve.csv"
    metrics.write_rd_csv(csv_path, [curve])
    plot_path = out_dir / "rd_curve.png"
    plot_rd_curves([curve], plot_path)
    _write_manifest(out_dir, "eval",
                    {"mode": args.mode, "gop": args.gop, "fps": args.fps,
                     "checkpoints": [str(c) for c in args.checkpoints]},
                    [Path(args.input)], [csv_path, plot_path])
    print(f"RD curve ({len(points)} points) -> {csv_path}")
    return EXIT_OK


def cmd_bdrate(args) -> int:
    from . import metrics

    try:
        anchor_curves = metrics.read_rd_csv(args.anchor)
        test_curves = metrics.read_rd_csv(args.test)
    except (ValueError, OSError) as exc:
        raise CliError(f"cannot read RD CSV: {exc}") from exc
    shared = sorted(set(anchor_curves) & set(test_curves))
    if not shared:
        raise CliError(
            f"no shared labels between {args.anchor} and {args.test}"
        )
    rows = {}
    for label in shared:
        try:
            result = metrics.bd_rate(anchor_curves[label], test_curves[label])
        except metrics.OverlapError as exc:
            raise CliError(str(exc), EXIT_NUMERICAL) from exc
        rows[label] = {
            "bd_rate_percent": result.bd_rate_percent,
            "overlap_db": list(result.overlap),
        }
        print(f"{label}: BD-rate {result.bd_rate_percent:+.2f}% "
              f"over [{result.overlap[0]:.2f}, {result.overlap[1]:.2f}] dB")
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        out_json = out_dir / "bdrate.json"
        out_json.write_text(json.dumps(rows, indent=2))
        _write_manifest(out_dir, "bdrate", {"anchor": args.anchor, "test": args.test},
                        [Path(args.anchor), Path(args.test)], [out_json])
    return EXIT_OK


def cmd_visualize(args) -> int:
    from .coder import code_sequence
    from .diagnostics import ablation_synthesis, diagnostics, gop_report, plot_gop_bars
    from .nets import load_checkpoint

    model, _ = load_checkpoint(args.checkpoint)
    frames = _load_frames(args)
    if args.frames:
        frames = frames[:args.frames]
    config = _coding_config(args)
    with torch.no_grad():
        seq = code_sequence(frames, config, model, mode="eval")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_index = {r.index: r for r in seq.results}
    if args.frame not in by_index:
        raise CliError(
            f"frame {args.frame} was not coded (coded: {sorted(by_index)})"
        )
    result = by_index[args.frame]
    paths = diagnostics(result, out_dir)
    outputs = list(paths.values())
    if result.latents["motion"] is not None:
        from . import video_io
        for which in ("shortcut_only", "sent_only"):
            abl = ablation_synthesis(model, result, which, "motion")
            path = out_dir / f"{result.kind}{result.index}_flow_future_{which}.png"
            video_io.write_image(abl["flow_future_rgb"], path)
            outputs.append(path)
    report = gop_report(seq, fps=args.fps)
    bars = out_dir / "gop_bars.png"
    plot_gop_bars(report, bars)
    report_path = out_dir / "gop_report.json"
    report_path.write_text(json.dumps(report, indent=2))
    outputs += [bars, report_path]
    _write_manifest(out_dir, "visualize",
                    {"mode": args.mode, "gop": args.gop, "frame": args.frame},
                    [Path(args.input), Path(args.checkpoint)], outputs)
    print(f"wrote {len(outputs)} diagnostic files to {out_dir}")
    return EXIT_OK


def cmd_anchors(args) -> int:
    from . import metrics
    from .anchors import run_anchor

    result = run_anchor(args.input, args.width, args.height, args.fps,
                        codec=args.codec, mode=args.mode)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    status_path = out_dir / "anchor_status.json"
    status = {
        "available": result.available,
        "codec": result.codec,
        "mode": result.mode,
        "reason": result.reason,
    }
    outputs = [status_path]
    if result.available:
        curve = result.to_curve()
        csv_path = out_dir / "anchor_rd.csv"
        metrics.write_rd_csv(csv_path, [curve])
        status["points"] = [dataclasses.asdict(p) for p in result.points]
        outputs.append(csv_path)
        print(f"{result.codec} {result.mode}: "
              + ", ".join(f"QP{p.qp}={p.rate_mbit_s:.3f}Mbit/s/{p.psnr_db:.2f}dB"
                          for p in result.points))
    status_path.write_text(json.dumps(status, indent=2))
    _write_manifest(out_dir, "anchors",
                    {"codec": args.codec, "mode": args.mode, "fps": args.fps},
                    [Path(args.input)], outputs)
    if not result.available:
        print(f"anchor unavailable: {result.reason}")
        return EXIT_MISSING_DEP
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_io_args(p: argparse.ArgumentParser, needs_geometry: bool = True) -> None:
    p.add_argument("--input", required=True, help="raw YUV420 input file")
    if needs_geometry:
        p.add_argument("--width", type=int, required=True)
        p.add_argument("--height", type=int, required=True)
    p.add_argument("--fps", type=float, default=30.0)


def _add_coding_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("AI", "LDP", "RA"), default="RA")
    p.add_argument("--gop", type=int, default=8)
    p.add_argument("--frames", type=int, default=None,
                   help="code only the first N frames")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condvc",
        description="Conditional-coding video codec tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", help="JSON file of TrainConfig keys")
    p.add_argument("--lmbda", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--f", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("code", help="encode a clip to a bitstream + report")
    _add_io_args(p)
    _add_coding_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_code)

    p = sub.add_parser("decode", help="decode a bitstream back to YUV420")
    p.add_argument("--bitstream", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="RD sweep over several checkpoints")
    _add_io_args(p)
    _add_coding_args(p)
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--label", default="ours")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bdrate", help="BD-rate between two RD CSVs")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("visualize", help="diagnostic image dumps for one frame")
    _add_io_args(p)
    _add_coding_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frame", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("anchors", help="reference-codec QP sweep")
    _add_io_args(p)
    p.add_argument("--codec", choices=("x265", "x264"), default="x265")
    p.add_argument("--mode", choices=("RA", "LDP", "AI"), default="RA")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_anchors)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
