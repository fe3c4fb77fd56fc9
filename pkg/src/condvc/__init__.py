"""condvc: a single-coder conditional video codec.

One network pair codes I, P and B frames: a motion subnetwork transmits
optical flows plus the blend/mode maps, and a codec subnetwork transmits
the frame content that the mode map selects, conditioned on the temporal
prediction through zero-rate shortcut latents.  Training minimizes one
rate-distortion cost over a three-frame unit; evaluation covers PSNR,
BD-rate, anchor codecs and diagnostic visualizations.
"""

from .coder import (CodingConfig, FrameResult, ScheduleEntry, build_schedule,
                    code_b_frame, code_i_frame, code_p_frame, code_sequence,
                    decode_sequence, encode_sequence)
from .entropy import laplace_bits, quantize
from .metrics import BDResult, RDCurve, bd_rate, psnr
from .motion import blend, flow_to_color, warp
from .nets import VideoCodec, load_checkpoint, param_count, save_checkpoint
from .rangecoder import range_decode, range_encode
from .train import TrainConfig, Trainer, fit, lr_schedule, rd_loss, synth_dataset
from .video_io import (Frame, RawSequence, extract_crops, load_yuv420,
                       save_yuv420, stack_frames, to_internal, to_yuv420,
                       write_image)

__version__ = "0.1.0"

__all__ = [
    "BDResult", "CodingConfig", "Frame", "FrameResult", "RDCurve",
    "RawSequence", "ScheduleEntry", "TrainConfig", "Trainer", "VideoCodec",
    "bd_rate", "blend", "build_schedule", "code_b_frame", "code_i_frame",
    "code_p_frame", "code_sequence", "decode_sequence", "encode_sequence",
    "extract_crops", "fit", "flow_to_color", "laplace_bits", "load_checkpoint",
    "load_yuv420", "lr_schedule", "param_count", "psnr", "quantize", "range_decode", "range_encode", "rd_loss",
    "save_checkpoint", "save_yuv420", "stack_frames", "synth_dataset",
    "to_internal", "to_yuv420", "warp", "write_image",
]
