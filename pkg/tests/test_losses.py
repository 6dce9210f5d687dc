import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ifcorrnet.losses import LossConfig, loss_terms, multires_tf_l1, time_l1, total_loss

N = 1600  # 0.1 s at 16 kHz, longer than the largest FFT


def sig(seed, n=N):
    return torch.from_numpy(np.random.default_rng(seed).standard_normal(n))


def tf_oracle(d: np.ndarray, sizes) -> float:
    """Framewise numpy FFT with reflect-centred periodic Hann frames."""
    vals = []
    for n in sizes:
        hop = n // 2
        win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
        p = np.pad(d, n // 2, mode="reflect")
        T = d.size // hop + 1
        S = np.stack([np.fft.rfft(win * p[t * hop : t * hop + n]) for t in range(T)])
        vals.append(np.mean(np.abs(S.real) + np.abs(S.imag)))
    return float(np.mean(vals))


def test_identical_is_zero():
    x = sig(0)
    assert float(total_loss(x, x)) == 0.0


def test_constant_offset():
    x = sig(1)
    assert float(time_l1(x + 0.1, x)) == pytest.approx(0.1, abs=1e-12)


def test_symmetric():
    a, b = sig(2), sig(3)
    assert float(total_loss(a, b)) == pytest.approx(float(total_loss(b, a)), rel=1e-12)


def test_tf_matches_framewise_oracle():
    a, b = sig(4), sig(5)
    cfg = LossConfig()
    assert float(multires_tf_l1(a, b, cfg)) == pytest.approx(tf_oracle((a - b).numpy(), cfg.fft_sizes), rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.floats(0.1, 10.0))
def test_tf_homogeneous(seed, k):
    x = sig(seed)
    z = torch.zeros_like(x)
    assert float(multires_tf_l1(k * x, z)) == pytest.approx(k * float(multires_tf_l1(x, z)), rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), idx=st.integers(0, N - 1))
def test_positive_for_any_difference(seed, idx):
    x = sig(seed)
    y = x.clone()
    y[idx] += 1e-3
    assert float(multires_tf_l1(x, y)) > 0 and float(total_loss(x, y)) > 0


def test_weights_select_terms():
    a, b = sig(6), sig(7)
    assert float(total_loss(a, b, LossConfig(weight_time=1, weight_tf=0))) == float(time_l1(a, b))
    terms = loss_terms(a, b)
    assert float(terms["loss_total"]) == pytest.approx(float(terms["loss_time"] + terms["loss_tf"]))


def test_errors():
    with pytest.raises(ValueError):
        time_l1(sig(0, 100), sig(0, 101))
    with pytest.raises(ValueError):
        multires_tf_l1(sig(0, 1000), sig(1, 1000))
    with pytest.raises(ValueError):
        LossConfig(fft_sizes=[255])
    with pytest.raises(ValueError):
        LossConfig(fft_sizes=[32])


def test_batched_equals_mean_of_items():
    a = torch.stack([sig(8), sig(9)])
    b = torch.stack([sig(10), sig(11)])
    batched = float(total_loss(a, b))
    single = np.mean([float(total_loss(a[i], b[i])) for i in range(2)])
    assert batched == pytest.approx(single, rel=1e-12)


def test_gradient_matches_finite_differences():
    est = sig(12).requires_grad_()
    ref = sig(13)
    grad, = torch.autograd.grad(total_loss(est, ref), est)
    h = 1e-6
    idx = np.random.default_rng(0).choice(N, 60, replace=False)
    errs = []
    with torch.no_grad():
        for i in idx:
            e = est.detach().clone()
            e[i] += h
            up = float(total_loss(e, ref))
            e[i] -= 2 * h
            down = float(total_loss(e, ref))
            fd = (up - down) / (2 * h)
            errs.append(abs(fd - grad[i].item()) / max(abs(fd), 1e-12))
    assert max(errs) <= 1e-3
