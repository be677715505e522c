"""Synthetic spoken-command stand-ins: seeded tone corpora written as 16-bit WAV plus a manifest."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .features import SAMPLE_RATE, Waveform, add_white_noise, mel_center_frequencies, write_wav
from .pipeline import Manifest, Utterance, write_manifest

# middle mel band of each pooled group when 60 bands are pooled into 8
GROUP_FREQS = (161.0, 498.0, 967.0, 1620.0, 2397.0, 3436.0, 4823.0, 6675.0)


def _tone(freqs, amps, n, rng, sample_rate=SAMPLE_RATE):
    t = np.arange(n) / sample_rate
    phases = rng.uniform(0, 2 * np.pi, len(freqs))
    x = sum(a * np.sin(2 * np.pi * f * t + p) for f, a, p in zip(freqs, amps, phases))
    fade = min(n // 2, int(0.02 * sample_rate))
    ramp = np.ones(n)
    ramp[:fade] = np.linspace(0, 1, fade)
    ramp[n - fade:] = np.linspace(1, 0, fade)
    return x * ramp


def tone_signature(label: int, n_classes: int):
    """Two group-center frequencies per class; disjoint across classes for up to 4 classes."""
    half = len(GROUP_FREQS) // 2
    if n_classes > half:
        return (GROUP_FREQS[label % len(GROUP_FREQS)], GROUP_FREQS[(label * 3 + 1) % len(GROUP_FREQS)])
    return (GROUP_FREQS[label], GROUP_FREQS[label + half])


def tone_corpus(n_classes=4, per_class=60, snr_db=10.0, seed=0, sample_rate=SAMPLE_RATE):
    """In-memory tone corpus: each class has its own two-tone chord.

    Per utterance the frequencies jitter by up to 4%, the tone amplitudes and
    durations (0.5 to 1.0 s) vary, and white noise is mixed in at ``snr_db``.
    """
    rng = np.random.default_rng(seed)
    entries = []
    for c in range(n_classes):
        base = np.array(tone_signature(c, n_classes))
        for i in range(per_class):
            n = int(rng.uniform(0.5, 1.0) * sample_rate)
            freqs = base * rng.uniform(0.96, 1.04, base.size)
            x = _tone(freqs, rng.uniform(0.2, 0.6, base.size), n, rng, sample_rate)
            w = add_white_noise(Waveform(x, sample_rate), snr_db, int(rng.integers(2**31)))
            entries.append(Utterance(id=f"c{c}_{i:03d}", label=f"cmd{c}", samples=w.samples,
                                     sample_rate=sample_rate))
    return Manifest(entries, f"tones(classes={n_classes},per_class={per_class},snr_db={snr_db},seed={seed})")


def _skewed_direction(rng, dim, cap):
    # rejection sampling: unit vectors whose largest component is at most ``cap``
    while True:
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        if u.max() <= cap:
            return u


def radial_corpus(per_class=60, radii=((0.0, 0.5), (1.5, 2.0)), cap=0.2, snr_db=None, seed=0,
                  sample_rate=SAMPLE_RATE):
    """Two classes that differ by distance from a common center, not by direction.

    Every mel band gets a tone at its center frequency; all bands of pooled
    group ``k`` share the amplitude ``exp(r * u_k)``, so the pooled log-mel
    features are ``2 r u + const``.  ``r`` comes from the class's radius
    interval and ``u`` is a random unit vector whose components never exceed
    ``cap``.  That skew places the shell center off the middle of the
    normalized feature range, where the angle encoding is locally linear, so
    the inner class sits inside the outer one in measurement space instead of
    at a corner of it.
    """
    rng = np.random.default_rng(seed)
    centers = mel_center_frequencies()
    groups = np.array_split(np.arange(len(centers)), len(GROUP_FREQS))
    entries = []
    for c, (r_lo, r_hi) in enumerate(radii):
        for i in range(per_class):
            u = _skewed_direction(rng, len(groups), cap)
            r = rng.uniform(r_lo, r_hi)
            amps = 0.01 * np.concatenate([np.full(len(g), np.exp(r * u[k])) for k, g in enumerate(groups)])
            x = _tone(centers, amps, sample_rate, rng, sample_rate)
            w = add_white_noise(Waveform(x, sample_rate), snr_db, int(rng.integers(2**31)))
            entries.append(Utterance(id=f"r{c}_{i:03d}", label=f"shell{c}", samples=w.samples,
                                     sample_rate=sample_rate))
    return Manifest(entries, f"radial(per_class={per_class},radii={list(radii)},cap={cap},snr_db={snr_db},"
                             f"seed={seed})")


def write_corpus(manifest: Manifest, out_dir) -> Manifest:
    """Write every in-memory utterance as WAV under ``out_dir`` plus ``manifest.csv``."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    # one gain for the whole corpus keeps relative levels intact
    peak = max(float(np.max(np.abs(e.samples))) for e in manifest.entries)
    gain = 0.9 / peak if peak > 0.9 else 1.0
    entries = []
    for e in manifest.entries:
        path = out / "audio" / f"{e.id}.wav"
        write_wav(path, Waveform(e.samples * gain, e.sample_rate))
        entries.append(Utterance(id=e.id, label=e.label, path=str(path.resolve()), split=e.split))
    written = Manifest(entries, manifest.source)
    write_manifest(written, out / "manifest.csv")
    return written
