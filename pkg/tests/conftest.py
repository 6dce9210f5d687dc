import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dft_frame(frame: np.ndarray) -> np.ndarray:
    """One-sided DFT of a real frame by the textbook sum (no FFT)."""
    n = frame.size
    k = np.arange(n // 2 + 1)[:, None]
    m = np.arange(n)[None, :]
    return (np.exp(-2j * np.pi * k * m / n) * frame).sum(axis=1)
