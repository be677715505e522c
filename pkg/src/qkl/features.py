"""Audio front end: WAV ingestion, 1 s framing, white noise, 60-band log-mel, reduction to Q dims."""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .errors import ConfigurationError, DataError, UsageError

SAMPLE_RATE = 16000
N_MELS = 60
N_FFT = 1024
HOP = 512
LOG_FLOOR = 1e-10
FEATURE_MAGIC = b"QFEAT1"
REDUCERS = ("pool", "pca")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelSpectrogram:
    values: np.ndarray  # (frames, n_mels), natural-log power
    frame_length: int = N_FFT
    hop: int = HOP
    fmin: float = 0.0
    fmax: float = 8000.0
    sample_rate: int = SAMPLE_RATE


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = SAMPLE_RATE
    n_mels: int = N_MELS
    n_fft: int = N_FFT
    hop: int = HOP
    fmin: float = 0.0
    fmax: float = 8000.0
    reducer: str = "pool"
    num_features: Optional[int] = None
    snr_db: Optional[float] = None  # None means no added noise

    def __post_init__(self):
        if self.reducer not in REDUCERS:
            raise ConfigurationError(f"reducer must be one of {REDUCERS}")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ConfigurationError("need 0 <= fmin < fmax <= sample_rate / 2")
        if self.n_mels < 1 or self.n_fft < 2 or self.hop < 1:
            raise ConfigurationError("n_mels, n_fft and hop must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown features keys: {sorted(unknown)}")
        return cls(**data)


# waveform I/O -------------------------------------------------------------


def resample_linear(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Linear interpolation onto the output grid spanning the input's first to last sample."""
    n = len(samples)
    if n == 0 or rate_in == rate_out:
        return np.asarray(samples, dtype=float)
    count = int(math.floor((n - 1) * rate_out / rate_in)) + 1
    t = np.arange(count) * (rate_in / rate_out)
    return np.interp(t, np.arange(n), samples)


def load_wav(path, target_rate: int = SAMPLE_RATE) -> Waveform:
    """Read a 16-bit PCM RIFF/WAVE file, averaging channels and resampling to ``target_rate``."""
    try:
        with wave.open(str(path), "rb") as fh:
            channels, width, rate, frames = fh.getnchannels(), fh.getsampwidth(), fh.getframerate(), fh.getnframes()
            if fh.getcomptype() != "NONE":
                raise DataError(f"{path}: compressed WAV is not supported")
            raw = fh.readframes(frames)
    except (wave.Error, EOFError, struct.error) as exc:
        raise DataError(f"{path}: malformed WAV header ({exc})") from exc
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    if width != 2:
        raise DataError(f"{path}: only 16-bit PCM is supported (sample width {width})")
    if len(raw) != frames * channels * width:
        raise DataError(f"{path}: truncated audio data ({len(raw)} of {frames * channels * width} bytes)")
    data = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    return Waveform(resample_linear(data, rate, target_rate), target_rate)


def write_wav(path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(w.sample_rate))
        fh.writeframes(pcm.tobytes())


def pad_trim_1s(w: Waveform) -> Waveform:
    """Exactly one second: center-trim long input, zero-pad short input (odd remainder on the tail)."""
    n, target = len(w.samples), int(w.sample_rate)
    if n == 0:
        raise DataError("cannot pad an empty waveform")
    if n >= target:
        start = (n - target) // 2
        return Waveform(w.samples[start:start + target].copy(), w.sample_rate)
    lead = (target - n) // 2
    return Waveform(np.pad(w.samples, (lead, target - n - lead)), w.sample_rate)


def add_white_noise(w: Waveform, snr_db: Optional[float], seed: int) -> Waveform:
    """Add Gaussian noise whose realized power sits exactly ``snr_db`` below the signal's.

    ``None`` or ``+inf`` disables noise.
    """
    if snr_db is None or snr_db == math.inf:
        return w
    power = float(np.mean(w.samples ** 2))
    if power == 0:
        raise DataError("cannot set an SNR on a silent waveform")
    noise = np.random.default_rng(seed).standard_normal(len(w.samples))
    noise *= math.sqrt(power / 10 ** (snr_db / 10) / np.mean(noise ** 2))
    return Waveform(w.samples + noise, w.sample_rate)


# spectral features --------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, n_fft=N_FFT, sample_rate=SAMPLE_RATE, fmin=0.0, fmax=8000.0):
    """Triangular HTK-mel filters with unit peaks, shape ``(n_mels, n_fft // 2 + 1)``."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (center - lo)
    falling = (hi - freqs) / (hi - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_center_frequencies(n_mels=N_MELS, fmin=0.0, fmax=8000.0) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))[1:-1]


def power_frames(samples: np.ndarray, n_fft=N_FFT, hop=HOP) -> np.ndarray:
    """One-sided power spectra ``|DFT|^2`` (bins 0..n_fft/2) of Hann-windowed frames."""
    if len(samples) < n_fft:
        raise DataError(f"need at least {n_fft} samples, got {len(samples)}")
    frames = sliding_window_view(samples, n_fft)[::hop]
    return np.abs(np.fft.rfft(frames * get_window("hann", n_fft), axis=1)) ** 2


def mel_spectrogram(w: Waveform, cfg: Optional[FeatureConfig] = None) -> MelSpectrogram:
    cfg = cfg or FeatureConfig()
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, w.sample_rate, cfg.fmin, cfg.fmax)
    power = power_frames(w.samples, cfg.n_fft, cfg.hop)
    values = np.log(power @ fb.T + LOG_FLOOR)
    return MelSpectrogram(values, cfg.n_fft, cfg.hop, cfg.fmin, cfg.fmax, w.sample_rate)


def reduce_to_q(m: MelSpectrogram, q: int) -> np.ndarray:
    """Frame-average, then mean-pool adjacent bands into ``q`` groups (sizes differ by at most 1)."""
    bands = m.values.shape[1]
    if q < 1:
        raise ConfigurationError(f"Q must be >= 1, got {q}")
    if q > bands:
        raise ConfigurationError(f"cannot pool {bands} bands into {q} groups")
    avg = m.values.mean(axis=0)
    return np.array([g.mean() for g in np.array_split(avg, q)])


def utterance_vector(w: Waveform, cfg: FeatureConfig, noise_seed: int = 0) -> np.ndarray:
    """Frame-averaged log-mel vector of one utterance after 1 s framing and optional noise."""
    w = pad_trim_1s(w)
    w = add_white_noise(w, cfg.snr_db, noise_seed)
    return mel_spectrogram(w, cfg).values.mean(axis=0)


class FeatureReducer:
    """Maps frame-averaged mel vectors to Q features in [-1, 1].

    Pooling or PCA, followed by per-dimension min-max scaling.  Everything is
    fit on the training rows only; out-of-range test values are clamped.
    """

    def __init__(self, q: int, method: str = "pool"):
        if method not in REDUCERS:
            raise ConfigurationError(f"reducer must be one of {REDUCERS}")
        if q < 1:
            raise ConfigurationError(f"Q must be >= 1, got {q}")
        self.q = q
        self.method = method
        self.mean = None
        self.components = None
        self.lo = None
        self.hi = None

    def _project(self, V):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if self.method == "pool":
            if self.q > V.shape[1]:
                raise ConfigurationError(f"cannot pool {V.shape[1]} bands into {self.q} groups")
            return np.stack([g.mean(axis=1) for g in np.array_split(V, self.q, axis=1)], axis=1)
        return (V - self.mean) @ self.components

    def fit(self, V) -> "FeatureReducer":
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if self.method == "pca":
            if self.q > V.shape[1]:
                raise ConfigurationError(f"cannot keep {self.q} components of {V.shape[1]} dims")
            self.mean = V.mean(axis=0)
            cov = np.cov(V - self.mean, rowvar=False, bias=True)
            evals, evecs = np.linalg.eigh(np.atleast_2d(cov))
            order = np.argsort(evals)[::-1][: self.q]
            comps = evecs[:, order]
            # deterministic sign: largest-magnitude loading positive
            signs = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(comps.shape[1])])
            self.components = comps * np.where(signs == 0, 1.0, signs)
        P = self._project(V)
        self.lo, self.hi = P.min(axis=0), P.max(axis=0)
        return self

    def transform(self, V) -> np.ndarray:
        if self.lo is None:
            raise UsageError("reducer is not fitted")
        P = self._project(V)
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, 2.0 * (P - self.lo) / safe - 1.0, 0.0)
        return np.clip(out, -1.0, 1.0)

    def fit_transform(self, V) -> np.ndarray:
        return self.fit(V).transform(V)

    @property
    def tag(self) -> str:
        return f"{self.method}{self.q}"

    def reconstruct(self, P) -> np.ndarray:
        """Map PCA scores back to the band space (PCA reducer only)."""
        if self.components is None:
            raise UsageError("reconstruct needs a fitted PCA reducer")
        return np.asarray(P, dtype=float) @ self.components.T + self.mean

    def to_dict(self) -> dict:
        out = {"q": self.q, "method": self.method}
        for key in ("mean", "components", "lo", "hi"):
            value = getattr(self, key)
            out[key] = None if value is None else value.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureReducer":
        r = cls(int(data["q"]), data["method"])
        for key in ("mean", "components", "lo", "hi"):
            if data.get(key) is not None:
                setattr(r, key, np.array(data[key], dtype=float))
        return r


# feature cache ------------------------------------------------------------


def save_features(path, X, reducer_tag: str) -> None:
    """``QFEAT1`` header (count, Q, length-prefixed reducer tag) then row-major <f8 values."""
    X = np.atleast_2d(np.asarray(X, dtype="<f8"))
    tag = reducer_tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<III", X.shape[0], X.shape[1], len(tag)) + tag)
        fh.write(np.ascontiguousarray(X).tobytes())


def load_features(path):
    """Return ``(X, reducer_tag)`` from a feature cache file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:6] != FEATURE_MAGIC:
        raise DataError(f"{path}: not a feature cache (bad magic)")
    try:
        count, q, tag_len = struct.unpack_from("<III", blob, 6)
    except struct.error as exc:
        raise DataError(f"{path}: truncated header") from exc
    start = 18 + tag_len
    tag = blob[18:start].decode("utf-8")
    payload = blob[start:]
    if len(payload) != 8 * count * q:
        raise DataError(f"{path}: expected {count}x{q} values, found {len(payload)} bytes")
    return np.frombuffer(payload, dtype="<f8").reshape(count, q).astype(float), tag
