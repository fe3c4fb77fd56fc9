"""
Bilinear warping and bidirectional prediction
=============================================

The temporal prediction of a B frame is built from two border-clamped
bilinear warps of the decoded references, mixed by a pixel-wise weight map.
This script walks through the pieces on a synthetic translating clip where
the true motion is known.
"""

from pathlib import Path

import torch

from condvc.motion import blend, flow_to_color, warp
from condvc.train import synth_dataset
from condvc.video_io import write_image

out = Path("demo_out/warping")
out.mkdir(parents=True, exist_ok=True)

# one clip translating with a known integer velocity
clips, meta = synth_dataset(seed=3, count=1, size=96, pure_translation=True,
                            return_meta=True, velocity=(2, -1))
clip = torch.as_tensor(clips[0])
vx, vy = meta[0]["velocity"]
print(f"sampling window pans by ({vx}, {vy}) px/frame, "
      f"so content moves by ({-vx}, {-vy})")

x_prev, x_cur, x_next = clip[0:1], clip[1:2], clip[2:3]

# flows point from the current frame toward each reference: the pixel at
# (i, j) sits at (i + vy, j + vx) in the previous frame
h, w = x_cur.shape[-2:]
flow_past = torch.zeros(1, 2, h, w)
flow_past[:, 0], flow_past[:, 1] = vx, vy
flow_future = -flow_past

pred_past = warp(x_prev, flow_past)
pred_future = warp(x_next, flow_future)

# either warp alone already explains the interior of the frame
for name, pred in (("past", pred_past), ("future", pred_future)):
    err = (pred - x_cur).abs()[..., 4:-4, 4:-4].max()
    print(f"max interior error from the {name} reference: {err:.2e}")

# a balanced blend keeps the prediction exact and averages the borders
beta = torch.full((1, 1, h, w), 0.5)
prediction = blend(pred_past, pred_future, beta)
print(f"blended interior error: "
      f"{(prediction - x_cur).abs()[..., 4:-4, 4:-4].max():.2e}")

write_image(x_cur[0].permute(1, 2, 0).numpy()[..., 0], out / "current_luma.png")
write_image(flow_to_color(flow_past[0]), out / "flow_past.png")
write_image(flow_to_color(flow_future[0]), out / "flow_future.png")
print(f"wrote visualizations to {out}/")
