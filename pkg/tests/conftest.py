import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture
def tiny_model():
    from condvc.nets import VideoCodec
    torch.manual_seed(7)
    return VideoCodec(f=8).eval()
