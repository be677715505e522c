import math
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkl.errors import ConfigurationError, DataError, UsageError
from qkl.features import (
    LOG_FLOOR,
    FeatureConfig,
    FeatureReducer,
    MelSpectrogram,
    Waveform,
    add_white_noise,
    hz_to_mel,
    load_features,
    load_wav,
    mel_center_frequencies,
    mel_filterbank,
    mel_spectrogram,
    pad_trim_1s,
    power_frames,
    reduce_to_q,
    resample_linear,
    save_features,
    utterance_vector,
    write_wav,
)

import oracles


def _write_pcm(path, data, rate, channels=1):
    pcm = np.clip(np.round(np.asarray(data) * 32767), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


def test_waveform_validation():
    with pytest.raises(DataError):
        Waveform(np.array([0.0, np.inf]))
    with pytest.raises(DataError):
        Waveform(np.zeros(3), 0)


def test_load_silence(tmp_path):
    _write_pcm(tmp_path / "z.wav", np.zeros(16000), 16000)
    w = load_wav(tmp_path / "z.wav")
    assert w.sample_rate == 16000 and np.array_equal(w.samples, np.zeros(16000))


def test_load_8k_resamples(tmp_path):
    n = 8000
    t = np.arange(n) / 8000
    sine = 0.5 * np.sin(2 * np.pi * 300 * t)
    _write_pcm(tmp_path / "s.wav", sine, 8000)
    w = load_wav(tmp_path / "s.wav")
    assert abs(len(w.samples) - (2 * n - 1)) <= 1
    e_in = np.mean(sine ** 2)
    assert abs(np.mean(w.samples ** 2) - e_in) / e_in < 0.05
    # independent linear-interpolation oracle
    ref = np.interp(np.arange(2 * n - 1) / 2.0, np.arange(n), np.round(sine * 32767) / 32768)
    assert np.allclose(w.samples, ref, atol=1e-12)


def test_stereo_is_averaged(tmp_path):
    left, right = np.full(100, 0.5), np.full(100, -0.25)
    inter = np.stack([left, right], axis=1).ravel()
    _write_pcm(tmp_path / "st.wav", inter, 16000, channels=2)
    w = load_wav(tmp_path / "st.wav")
    assert np.allclose(w.samples, (np.round(0.5 * 32767) + np.round(-0.25 * 32767)) / 2 / 32768)


def test_truncated_and_malformed(tmp_path):
    _write_pcm(tmp_path / "ok.wav", np.zeros(1000), 16000)
    blob = (tmp_path / "ok.wav").read_bytes()
    (tmp_path / "trunc.wav").write_bytes(blob[:-500])
    with pytest.raises(DataError, match="trunc.wav"):
        load_wav(tmp_path / "trunc.wav")
    (tmp_path / "junk.wav").write_bytes(b"not a wav at all")
    with pytest.raises(DataError, match="junk.wav"):
        load_wav(tmp_path / "junk.wav")
    with pytest.raises(DataError):
        load_wav(tmp_path / "missing.wav")
    with wave.open(str(tmp_path / "8bit.wav"), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(1)
        fh.setframerate(16000)
        fh.writeframes(bytes(100))
    with pytest.raises(DataError, match="16-bit"):
        load_wav(tmp_path / "8bit.wav")


def test_write_then_load(tmp_path):
    x = np.sin(np.linspace(0, 20, 400)) * 0.7
    write_wav(tmp_path / "x.wav", Waveform(x))
    # writer scales by 32767 and reader by 32768: rounding plus a 1/32768 relative gain
    assert np.max(np.abs(load_wav(tmp_path / "x.wav").samples - x)) < 2 / 32767


def test_resample_count_formula():
    assert len(resample_linear(np.zeros(10), 8000, 16000)) == 19
    assert len(resample_linear(np.zeros(10), 16000, 16000)) == 10


def test_pad_trim_examples():
    half = pad_trim_1s(Waveform(np.ones(8000)))
    assert len(half.samples) == 16000
    assert np.all(half.samples[:4000] == 0) and np.all(half.samples[-4000:] == 0)
    assert np.all(half.samples[4000:12000] == 1)
    two = np.arange(32000, dtype=float)
    assert np.array_equal(pad_trim_1s(Waveform(two)).samples, two[8000:24000])
    one = np.random.default_rng(0).normal(size=16000)
    assert np.array_equal(pad_trim_1s(Waveform(one)).samples, one)
    odd = pad_trim_1s(Waveform(np.ones(15999)))
    assert np.flatnonzero(odd.samples == 0).tolist() == [15999]
    with pytest.raises(DataError):
        pad_trim_1s(Waveform(np.zeros(0)))


def test_noise_examples():
    w = Waveform(np.sin(np.linspace(0, 100, 16000)))
    assert add_white_noise(w, math.inf, 1) is w
    assert add_white_noise(w, None, 1) is w
    t = np.arange(16000) / 16000
    sine = math.sqrt(2) * np.sin(2 * np.pi * 440 * t)  # unit RMS
    noisy = add_white_noise(Waveform(sine), 0.0, 3)
    residual = noisy.samples - sine
    assert abs(math.sqrt(np.mean(residual ** 2)) - 1.0) < 0.01
    again = add_white_noise(Waveform(sine), 0.0, 3)
    assert np.array_equal(noisy.samples, again.samples)
    with pytest.raises(DataError):
        add_white_noise(Waveform(np.zeros(100)), 10.0, 0)


@settings(max_examples=20, deadline=None)
@given(snr=st.floats(-10, 40), seed=st.integers(0, 2**31 - 1))
def test_noise_realized_snr(snr, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, 4000)
    noisy = add_white_noise(Waveform(x), snr, seed)
    realized = 10 * math.log10(np.mean(x ** 2) / np.mean((noisy.samples - x) ** 2))
    assert abs(realized - snr) < 0.1


def test_filterbank_shape_and_peaks():
    fb = mel_filterbank()
    assert fb.shape == (60, 513)
    assert np.all(fb >= 0) and np.all(fb.max(axis=1) <= 1)
    centers = mel_center_frequencies()
    edges = oracles.mel_hz(np.linspace(0, 2595 * math.log10(1 + 8000 / 700), 62))
    assert np.allclose(centers, edges[1:-1])
    assert np.allclose(hz_to_mel(700.0), 2595 * math.log10(2))


def test_silence_is_log_floor():
    m = mel_spectrogram(Waveform(np.zeros(16000)))
    assert m.values.shape == (30, 60)
    assert np.all(m.values == math.log(LOG_FLOOR))


def test_sine_peaks_at_nearest_band():
    t = np.arange(16000) / 16000
    m = mel_spectrogram(Waveform(np.sin(2 * np.pi * 440 * t)))
    nearest = int(np.argmin(np.abs(mel_center_frequencies() - 440)))
    assert np.all(np.argmax(m.values, axis=1) == nearest)


def test_power_spectrum_matches_direct_dft_and_parseval():
    rng = np.random.default_rng(1)
    x = rng.normal(size=2048)
    P = power_frames(x)
    n = np.arange(1024)
    window = 0.5 - 0.5 * np.cos(2 * np.pi * n / 1024)  # periodic Hann
    frame = x[512:1536] * window
    k = np.arange(513)[:, None]
    direct = np.abs((frame[None, :] * np.exp(-2j * np.pi * k * n / 1024)).sum(axis=1)) ** 2
    assert np.allclose(P[1], direct, rtol=1e-9)
    # Parseval over the full two-sided spectrum rebuilt from bins 0..512
    two_sided = P[1][0] + P[1][512] + 2 * P[1][1:512].sum()
    assert abs(two_sided / 1024 - np.sum(frame ** 2)) / np.sum(frame ** 2) < 1e-6
    with pytest.raises(DataError):
        power_frames(np.zeros(1000))


def test_reduce_to_q_examples():
    rng = np.random.default_rng(2)
    m = MelSpectrogram(rng.normal(size=(30, 60)))
    avg = m.values.mean(axis=0)
    assert np.allclose(reduce_to_q(m, 60), avg)
    assert np.allclose(reduce_to_q(m, 1), [avg.mean()])
    eight = reduce_to_q(m, 8)
    sizes = [len(g) for g in np.array_split(np.arange(60), 8)]
    assert max(sizes) - min(sizes) <= 1
    assert np.allclose(eight[0], avg[: sizes[0]].mean())
    with pytest.raises(ConfigurationError):
        reduce_to_q(m, 61)
    with pytest.raises(ConfigurationError):
        reduce_to_q(m, 0)


def test_reducer_pool_matches_reduce_to_q():
    rng = np.random.default_rng(3)
    specs = [MelSpectrogram(rng.normal(size=(30, 60))) for _ in range(5)]
    V = np.array([s.values.mean(axis=0) for s in specs])
    r = FeatureReducer(8, "pool")
    pooled = r._project(V)
    assert np.allclose(pooled, [reduce_to_q(s, 8) for s in specs])


def test_reducer_bounds_and_clamping():
    rng = np.random.default_rng(4)
    train = rng.normal(size=(20, 60))
    r = FeatureReducer(8).fit(train)
    Xt = r.transform(train)
    assert np.all(np.abs(Xt) <= 1)
    assert np.allclose(Xt.min(axis=0), -1) and np.allclose(Xt.max(axis=0), 1)
    far = r.transform(100 * rng.normal(size=(5, 60)))
    assert np.all(np.abs(far) <= 1)
    with pytest.raises(UsageError):
        FeatureReducer(8).transform(train)


def test_pca_idempotent_and_train_only():
    rng = np.random.default_rng(5)
    train = rng.normal(size=(40, 60)) @ rng.normal(size=(60, 60))
    r = FeatureReducer(6, "pca").fit(train)
    P = r._project(train)
    again = r._project(r.reconstruct(P))
    assert np.max(np.abs(again - P)) < 1e-10 * max(1.0, np.abs(P).max())
    # oracle: top eigenvectors of the covariance span the same subspace
    cov = np.cov(train - train.mean(axis=0), rowvar=False, bias=True)
    w, v = np.linalg.eigh(cov)
    top = v[:, np.argsort(w)[::-1][:6]]
    assert np.allclose(np.abs(top.T @ r.components), np.eye(6), atol=1e-8)
    # test rows never influence the fitted transform
    test_a, test_b = rng.normal(size=(5, 60)), rng.normal(size=(5, 60))
    r2 = FeatureReducer(6, "pca").fit(train)
    r2.transform(test_a)
    assert np.array_equal(r2.transform(test_b), r.transform(test_b))
    with pytest.raises(ConfigurationError):
        FeatureReducer(61, "pca").fit(train)


def test_reducer_serialization():
    rng = np.random.default_rng(6)
    train = rng.normal(size=(12, 60))
    for method in ("pool", "pca"):
        r = FeatureReducer(4, method).fit(train)
        back = FeatureReducer.from_dict(r.to_dict())
        assert np.array_equal(back.transform(train), r.transform(train))
        assert back.tag == f"{method}4"


def test_config_validation():
    with pytest.raises(ConfigurationError):
        FeatureConfig(reducer="ica")
    with pytest.raises(ConfigurationError):
        FeatureConfig(fmax=9000)
    with pytest.raises(ConfigurationError):
        FeatureConfig.from_dict({"bands": 40})


def test_utterance_vector_deterministic():
    rng = np.random.default_rng(7)
    w = Waveform(rng.uniform(-0.5, 0.5, 12000))
    cfg = FeatureConfig(snr_db=10.0)
    a = utterance_vector(w, cfg, 42)
    assert np.array_equal(a, utterance_vector(w, cfg, 42))
    assert not np.array_equal(a, utterance_vector(w, cfg, 43))
    assert a.shape == (60,)


def test_feature_cache_round_trip(tmp_path):
    X = np.random.default_rng(8).normal(size=(7, 8))
    path = tmp_path / "f.qfeat"
    save_features(path, X, "pool8")
    back, tag = load_features(path)
    assert np.array_equal(back, X) and tag == "pool8"
    assert path.read_bytes()[:6] == b"QFEAT1"
    (tmp_path / "bad").write_bytes(b"XXXXXX" + path.read_bytes()[6:])
    with pytest.raises(DataError):
        load_features(tmp_path / "bad")
    (tmp_path / "short").write_bytes(path.read_bytes()[:-3])
    with pytest.raises(DataError):
        load_features(tmp_path / "short")
