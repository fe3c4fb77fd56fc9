"""End-to-end training over the three-frame unit and synthetic clips.

Each step codes one batch of (frame0, frame1, frame2) triples as I0, then
P2 referencing the decoded I0, then B1 referencing both decoded neighbors,
all in train mode (noise-relaxed rates), sums the rate-distortion cost over
the three frames and applies a single gradient update to every parameter
group at once.  Nothing is pre-trained and no component has its own loss.

The synthetic dataset stands in for a large video-crop corpus at desk
scale: textured rectangles translate with integer per-clip velocities over
a textured background, producing occlusions and disocclusions; a pure
translation variant moves the whole frame and carries exact ground-truth
motion for tests.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .coder import FrameResult, code_b_frame, code_i_frame, code_p_frame
from .nets import VideoCodec, save_checkpoint

# geometric lambda grid for RD sweeps ([0,1]-range MSE, bits/(3HW) rate units)
LAMBDA_GRID = (0.0004, 0.0016, 0.0064, 0.0256)


@dataclass
class TrainConfig:
    lmbda: float
    steps: int
    f: int = 16
    batch_size: int = 4
    lr: float = 1e-4
    lr_final: float = 1e-5
    lr_drop_fraction: float = 0.9
    crop_size: int = 64
    seed: int = 0
    grad_clip: float = 1.0
    dataset_size: int = 256

    def __post_init__(self) -> None:
        if self.lmbda <= 0:
            raise ValueError(f"lambda must be positive, got {self.lmbda}")
        if self.lr_final > self.lr:
            raise ValueError("the learning rate never increases")


@dataclass
class LossBreakdown:
    total: torch.Tensor
    per_frame: list[tuple[float, float]]   # (mse, bits) per coded frame
    bpp_per_frame: list[float]             # bits / (3*H*W)

    def item(self) -> float:
        return float(self.total.detach())


def rd_loss(results: list[FrameResult], lmbda: float) -> LossBreakdown:
    """sum_t [ MSE_t + lambda * bits_t / (3*H*W) ] over the coded frames.

    Accumulated in float64 so the rate term stays exact next to a much
    larger distortion term; gradients flow back through the cast.
    """
    total = None
    per_frame = []
    bpps = []
    for r in results:
        h, w = r.x_hat.shape[-2:]
        bpp = r.bits_total.double() / (3 * h * w)
        term = r.mse.double() + lmbda * bpp
        total = term if total is None else total + term
        per_frame.append((float(r.mse.detach()), float(r.bits_total.detach())))
        bpps.append(float(bpp.detach()))
    return LossBreakdown(total, per_frame, bpps)


def lr_schedule(step: int, config: TrainConfig) -> float:
    """Piecewise constant: config.lr, dropping to lr_final near the end."""
    if step < config.lr_drop_fraction * config.steps:
        return config.lr
    return config.lr_final


def code_training_triple(model: VideoCodec, triple: torch.Tensor,
                         mode: str = "train") -> list[FrameResult]:
    """Code (x0, x1, x2) as I0, P2(ref I0), B1(refs I0, P2)."""
    if triple.dim() != 5 or triple.shape[1] != 3 or triple.shape[2] != 3:
        raise ValueError(
            f"expected (B, 3 frames, 3 channels, H, W), got {tuple(triple.shape)}"
        )
    r0 = code_i_frame(triple[:, 0], model, mode, index=0)
    r2 = code_p_frame(triple[:, 2], r0.x_hat, model, mode, index=2)
    r1 = code_b_frame(triple[:, 1], r0.x_hat, r2.x_hat, model, mode, index=1)
    return [r0, r2, r1]


class Trainer:
    """Single-writer optimization loop with one update per step."""

    def __init__(self, model: VideoCodec, config: TrainConfig,
                 start_step: int = 0):
        self.model = model
        self.config = config
        self.step_count = start_step
        self.optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)

    def step(self, batch: torch.Tensor) -> LossBreakdown:
        cfg = self.config
        lr = lr_schedule(self.step_count, cfg)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.model.train()
        try:
            results = code_training_triple(self.model, batch, mode="train")
        except ValueError as exc:
            if "non-finite" in str(exc):
                raise RuntimeError(
                    f"non-finite values while coding at step {self.step_count}: {exc}"
                ) from exc
            raise
        breakdown = rd_loss(results, cfg.lmbda)
        if not torch.isfinite(breakdown.total):
            raise RuntimeError(
                f"non-finite loss at step {self.step_count}: "
                f"per-frame (mse, bits) = {breakdown.per_frame}"
            )
        self.optimizer.zero_grad()
        breakdown.total.backward()
        torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg.grad_clip)
        self.optimizer.step()
        self.step_count += 1
        return breakdown


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def _bilinear_resize(img: np.ndarray, h: int, w: int) -> np.ndarray:
    sh, sw = img.shape
    rows = np.linspace(0, sh - 1, h)
    cols = np.linspace(0, sw - 1, w)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    r1 = np.minimum(r0 + 1, sh - 1)
    c1 = np.minimum(c0 + 1, sw - 1)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    coarse = rng.uniform(0.1, 0.9, (max(h // 8, 2), max(w // 8, 2)))
    fine = rng.uniform(-0.05, 0.05, (h, w))
    return np.clip(_bilinear_resize(coarse, h, w) + fine, 0.0, 1.0)


def _to_yuvish(rng: np.random.Generator, luma: np.ndarray) -> np.ndarray:
    """Turn one texture into a 3-channel frame with muted chroma."""
    u = 0.5 + 0.25 * (_texture(rng, *luma.shape) - 0.5) + 0.2 * (luma - 0.5)
    v = 0.5 + 0.25 * (_texture(rng, *luma.shape) - 0.5) - 0.2 * (luma - 0.5)
    return np.clip(np.stack([luma, u, v]), 0.0, 1.0).astype(np.float32)


MAX_SPEED = 3  # pixels per frame, integer


def synth_dataset(
    seed: int,
    count: int,
    size: int,
    pure_translation: bool = False,
    return_meta: bool = False,
    velocity: Optional[tuple[int, int]] = None,
):
    """Deterministic synthetic clips of shape (count, 3, 3, size, size).

    Default clips: moving textured rectangles over a static textured
    background (occlusion/disocclusion at the rectangle edges).  With
    ``pure_translation`` the whole frame translates with one integer
    velocity, so frame t equals frame 0 shifted by t * v exactly;
    ``velocity`` pins that velocity instead of drawing it per clip.
    """
    rng = np.random.default_rng(seed)
    clips = np.empty((count, 3, 3, size, size), dtype=np.float32)
    meta = []
    margin = 2 * MAX_SPEED
    for ci in range(count):
        if pure_translation:
            if velocity is not None:
                vx, vy = velocity
                if max(abs(vx), abs(vy)) > MAX_SPEED:
                    raise ValueError(f"|velocity| components must be <= {MAX_SPEED}")
            else:
                vx, vy = rng.integers(-MAX_SPEED, MAX_SPEED + 1, size=2)
            canvas = _to_yuvish(rng, _texture(rng, size + 2 * margin, size + 2 * margin))
            for t in range(3):
                y0 = margin + t * vy
                x0 = margin + t * vx
                clips[ci, t] = canvas[:, y0:y0 + size, x0:x0 + size]
            meta.append({"kind": "translation", "velocity": (int(vx), int(vy))})
        else:
            background = _to_yuvish(rng, _texture(rng, size, size))
            n_rects = int(rng.integers(1, 3))
            rects = []
            for _ in range(n_rects):
                rh = int(rng.integers(size // 4, size // 2))
                rw = int(rng.integers(size // 4, size // 2))
                ry = int(rng.integers(margin, size - rh - margin))
                rx = int(rng.integers(margin, size - rw - margin))
                vx, vy = rng.integers(-MAX_SPEED, MAX_SPEED + 1, size=2)
                if vx == 0 and vy == 0:
                    vx = int(rng.integers(1, MAX_SPEED + 1))
                tex = _to_yuvish(rng, _texture(rng, rh, rw))
                rects.append({"box": (ry, rx, rh, rw),
                              "velocity": (int(vx), int(vy)), "tex": tex})
            for t in range(3):
                frame = background.copy()
                for rect in rects:
                    ry, rx, rh, rw = rect["box"]
                    vx, vy = rect["velocity"]
                    y0 = int(np.clip(ry + t * vy, 0, size - rh))
                    x0 = int(np.clip(rx + t * vx, 0, size - rw))
                    frame[:, y0:y0 + rh, x0:x0 + rw] = rect["tex"]
                clips[ci, t] = frame
            meta.append({
                "kind": "occlusion",
                "rects": [{"box": r["box"], "velocity": r["velocity"]} for r in rects],
            })
    if return_meta:
        return clips, meta
    return clips


def fit(
    config: TrainConfig,
    out_dir: Optional[Path | str] = None,
    checkpoint_every: int = 0,
    resume_from: Optional[Path | str] = None,
    log_every: int = 1,
    data: Optional[np.ndarray] = None,
) -> tuple[VideoCodec, list[dict]]:
    """Run the full loop; returns (model, history rows).

    Deterministic for a fixed config: data generation, batch sampling and
    quantization noise all derive from config.seed.  ``data`` overrides the
    synthetic dataset with caller-provided (N, 3, 3, H, W) triples.
    """
    torch.manual_seed(config.seed)
    start_step = 0
    if resume_from is not None:
        from .nets import load_checkpoint
        model, ckpt_config = load_checkpoint(resume_from)
        if model.f != config.f:
            raise ValueError(
                f"checkpoint has f={model.f}, config asks for f={config.f}"
            )
        start_step = int(ckpt_config.get("step", 0))
    else:
        model = VideoCodec(f=config.f)
    if data is None:
        data = synth_dataset(config.seed, config.dataset_size, config.crop_size)
    tensor = torch.as_tensor(data)
    batch_rng = np.random.default_rng(config.seed + 1)
    # replay batch draws consumed before the resume point
    for _ in range(start_step):
        batch_rng.integers(0, tensor.shape[0], size=config.batch_size)

    trainer = Trainer(model, config, start_step=start_step)
    history: list[dict] = []
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    for step in range(start_step, config.steps):
        idx = batch_rng.integers(0, tensor.shape[0], size=config.batch_size)
        breakdown = trainer.step(tensor[idx])
        if step % log_every == 0 or step == config.steps - 1:
            row = {
                "step": step,
                "loss": float(breakdown.total.detach()),
                "lr": lr_schedule(step, config),
            }
            for label, (mse, _), bpp in zip(
                    ("i0", "p2", "b1"), breakdown.per_frame,
                    breakdown.bpp_per_frame):
                row[f"mse_{label}"] = mse
                row[f"bpp_{label}"] = bpp
            history.append(row)
        if out_path is not None and checkpoint_every and \
                (step + 1) % checkpoint_every == 0:
            save_checkpoint(model, out_path / f"step_{step + 1:07d}.pt",
                            config={"lmbda": config.lmbda, "step": step + 1})
    if out_path is not None:
        save_checkpoint(model, out_path / "final.pt",
                        config={"lmbda": config.lmbda, "step": trainer.step_count,
                                **asdict(config)})
        write_history_csv(out_path / "training_curve.csv", history)
    return model, history


def write_history_csv(path, history: list[dict]) -> None:
    if not history:
        return
    keys = list(history[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(history)
