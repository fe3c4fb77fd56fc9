"""
End-to-end training from a single rate-distortion loss
======================================================

Each step codes a (I0, P2, B1) triple in train mode and backpropagates one
loss: sum over the three frames of MSE + lambda * bits/(3*H*W).  No
component is pre-trained and none has a dedicated loss.  This script runs a
short optimization (a few hundred steps, a few minutes on CPU) and shows
the loss trend plus the effect on coding cost.

For the full desk-scale run used by the acceptance suite (2000 steps), see
tests/test_acceptance.py::test_criterion_06_training_smoke.
"""

import numpy as np
import torch

from condvc.coder import CodingConfig, code_sequence, code_i_frame
from condvc.train import TrainConfig, fit, rd_loss, synth_dataset

config = TrainConfig(lmbda=0.0016, steps=300, f=16, batch_size=4,
                     crop_size=64, seed=7, dataset_size=128)
model, history = fit(config)

first = np.mean([row["loss"] for row in history[:20]])
last = np.mean([row["loss"] for row in history[-20:]])
print(f"loss: first 20 steps {first:.4f} -> last 20 steps {last:.4f} "
      f"({last / first * 100:.0f}%)")

# compare inter coding against all-intra with the same trained model
model.eval()
held_out = torch.as_tensor(synth_dataset(999, 5, 64))
ra, ai = 0.0, 0.0
with torch.no_grad():
    for clip in held_out:
        seq = code_sequence(clip, CodingConfig("RA", gop_size=2), model)
        ra += float(rd_loss(seq.results, config.lmbda).total)
        intra = [code_i_frame(clip[t:t + 1], model) for t in range(3)]
        ai += float(rd_loss(intra, config.lmbda).total)
print(f"held-out RD cost: random-access {ra:.4f} vs all-intra {ai:.4f}")
print("(after the full 2000-step smoke run the gap is decisive)")
