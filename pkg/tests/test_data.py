import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifcorrnet import dsp
from ifcorrnet.data import (
    FS,
    DataConfig,
    RirSpec,
    convolve,
    direct_part,
    make_dataset,
    make_mixture,
    make_noise,
    make_rir,
    manifest_hash,
    read_manifest,
    speech_like,
)


def schroeder_t60(h: np.ndarray) -> float:
    """T60 extrapolated from the -5..-25 dB span of the backward-integrated decay."""
    peak = int(np.argmax(np.abs(h)))
    tail = h[peak + 1 :]
    edc = np.cumsum(tail[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        edc_db = 10 * np.log10(edc / edc[0])
    i5 = int(np.argmax(edc_db <= -5))
    i25 = int(np.argmax(edc_db <= -25))
    t = np.arange(i5, i25) / FS
    slope = np.polyfit(t, edc_db[i5:i25], 1)[0]
    return -60.0 / slope


def clean(seed=0, n=FS):
    return speech_like(n, np.random.default_rng(seed))


@pytest.mark.parametrize("t60", [0.2, 0.4, 0.6, 0.8, 1.2])
def test_exp_decay_t60(t60):
    h = make_rir(RirSpec(t60=t60, seed=11))
    assert schroeder_t60(h) == pytest.approx(t60, rel=0.2)


def test_image_method_t60_and_peak():
    h = make_rir(RirSpec(t60=0.5, method="image-method"))
    assert int(np.argmax(np.abs(h))) == 0
    assert schroeder_t60(h) == pytest.approx(0.5, rel=0.5)


def test_rir_validation():
    for bad in (dict(t60=0.01), dict(t60=3.0), dict(method="x"), dict(direct_delay=-1)):
        with pytest.raises(ValueError):
            RirSpec(**bad)


def test_zero_gain_is_unit_impulse():
    h = make_rir(RirSpec(t60=0.3, gain=0.0))
    assert h[0] == 1.0 and np.count_nonzero(h) == 1
    x = clean()
    m = make_mixture(x, h, snr_db=math.inf)
    np.testing.assert_allclose(m.mixture, x, atol=1e-12)
    np.testing.assert_allclose(m.target, x, atol=1e-12)


def test_direct_delay_places_peak():
    h = make_rir(RirSpec(t60=0.3, direct_delay=40))
    assert int(np.argmax(np.abs(h))) == 40 and np.all(h[:40] == 0)


def test_rir_deterministic():
    a = make_rir(RirSpec(t60=0.4, seed=9))
    b = make_rir(RirSpec(t60=0.4, seed=9))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, make_rir(RirSpec(t60=0.4, seed=10)))


def test_drr_target():
    h = make_rir(RirSpec(t60=0.5, drr_db=6.0))
    assert 10 * np.log10(h[0] ** 2 / np.sum(h[1:] ** 2)) == pytest.approx(6.0, abs=1e-9)


@pytest.mark.parametrize("kind", ["white", "pink", "hum+white"])
@pytest.mark.parametrize("snr", [0.0, 5.0, 20.0])
def test_snr_calibrated(kind, snr):
    m = make_mixture(clean(1), make_rir(RirSpec(t60=0.5)), snr, kind, seed=3)
    noise = m.mixture - m.reverberant
    measured = 10 * np.log10(np.mean(m.reverberant**2) / np.mean(noise**2))
    assert measured == pytest.approx(snr, abs=0.01)


def test_infinite_snr_is_reverberant_speech():
    m = make_mixture(clean(2), make_rir(RirSpec(t60=0.5)), math.inf)
    assert np.array_equal(m.mixture, m.reverberant)


def test_mixture_errors():
    h = make_rir(RirSpec())
    with pytest.raises(ValueError):
        make_mixture(clean()[: FS // 2], h)
    with pytest.raises(ValueError):
        make_mixture(np.zeros(FS), h)
    with pytest.raises(ValueError):
        make_noise("brown", 10, np.random.default_rng(0))


def test_direct_part():
    imp = np.zeros(2000)
    imp[0] = 1.0
    np.testing.assert_array_equal(direct_part(imp), imp)
    echo = imp.copy()
    echo[int(0.05 * FS)] = 0.6
    np.testing.assert_array_equal(direct_part(echo), imp)
    h = np.zeros(200)
    h[10], h[12], h[60] = 1.0, 0.5, 0.3  # 12 is within 2.5 ms of the peak, 60 is not
    d = direct_part(h)
    assert d[10] == 1.0 and d[12] == 0.5 and d[60] == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), nx=st.integers(1, 300), nh=st.integers(1, 80))
def test_fft_convolution_matches_direct(seed, nx, nh):
    g = np.random.default_rng(seed)
    x, h = g.standard_normal(nx), g.standard_normal(nh)
    np.testing.assert_allclose(convolve(x, h), np.convolve(x, h)[:nx], atol=1e-10)


def test_speech_like_properties():
    x = speech_like(2 * FS, np.random.default_rng(0))
    assert x.shape == (2 * FS,) and np.all(np.isfinite(x))
    assert np.sqrt(np.mean(x**2)) > 0
    y = speech_like(2 * FS, np.random.default_rng(0))
    assert np.array_equal(x, y)


def test_dataset_determinism_and_files(tmp_path):
    cfg = DataConfig(duration_s=1.0)
    make_dataset(3, 5, cfg, tmp_path / "a")
    make_dataset(3, 5, cfg, tmp_path / "b")
    assert manifest_hash(tmp_path / "a" / "manifest.jsonl") == manifest_hash(tmp_path / "b" / "manifest.jsonl")
    for key in ("mixture", "target", "clean"):
        a = (tmp_path / "a" / "wav" / f"utt00001_{key}.wav").read_bytes()
        assert a == (tmp_path / "b" / "wav" / f"utt00001_{key}.wav").read_bytes()
    rows = read_manifest(tmp_path / "a" / "manifest.jsonl")
    assert [r["id"] for r in rows] == ["utt00000", "utt00001", "utt00002"]
    for r in rows:
        assert 0.2 <= r["t60"] <= 0.8
        x = dsp.read_wav(r["mixture_path"])
        assert x.shape == (FS,)
    make_dataset(3, 6, cfg, tmp_path / "c")
    assert manifest_hash(tmp_path / "a" / "manifest.jsonl") != manifest_hash(tmp_path / "c" / "manifest.jsonl")


def test_dataset_pcm16(tmp_path):
    rows = make_dataset(1, 0, DataConfig(duration_s=1.0, pcm16=True), tmp_path)
    from scipy.io import wavfile

    fs, data = wavfile.read(tmp_path / rows[0]["mixture_path"])
    assert fs == FS and data.dtype == np.int16


def test_empty_dataset(tmp_path):
    assert make_dataset(0, 0, DataConfig(), tmp_path) == []
    assert read_manifest(tmp_path / "manifest.jsonl") == []


def test_t60_grid_cycles():
    rows = make_dataset(4, 0, DataConfig(duration_s=1.0, t60_grid=[0.2, 0.6]))
    assert [r["t60"] for r in rows] == [0.2, 0.6, 0.2, 0.6]


def test_disjoint_index_ranges_differ():
    a = make_dataset(2, 0, DataConfig(duration_s=1.0))
    b = make_dataset(2, 0, DataConfig(duration_s=1.0), start_index=2)
    assert {r["id"] for r in a}.isdisjoint({r["id"] for r in b})
    assert make_dataset(1, 0, DataConfig(duration_s=1.0), start_index=1)[0] == a[1]
