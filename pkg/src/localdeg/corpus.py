"""Synthetic parallel corpus: clean speech-like signals, full-utterance
degradations, oracle frame quality scores, and an energy VAD.

Clean signals alternate voiced harmonic segments with exact-zero silences on
the 50 Hz frame grid; degradations are applied over the whole utterance at a
constant severity so that any segment of the degraded signal carries the
same distortion. Frame quality scores are derived from the severity through
a monotone map instead of a pretrained scorer; a bootstrap mode that
re-scores a corpus with a trained model lives in the CLI.
"""

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .errors import ConfigError, InputError
from .features import FRAME_SAMPLES, SAMPLE_RATE, frame_count
from .seeding import derive_seed

logger = logging.getLogger(__name__)

KINDS = (
    "additive_noise",
    "lowpass",
    "clipping",
    "gain",
    "dropout",
    "hum",
    "reverb_tail",
    "bandpass",
    "codec_quantize",
)

VAD_THETA = 2.0


@dataclass
class Waveform:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __len__(self):
        return self.samples.shape[0]

    @property
    def n_frames(self):
        return frame_count(self.samples.shape[0])


@dataclass(frozen=True)
class DegradationSpec:
    """One to three degradation kinds with a severity in (0, 1] each."""

    kinds: tuple
    severities: tuple

    def __post_init__(self):
        if not 1 <= len(self.kinds) <= 3:
            raise ConfigError(f"spec must have 1..3 kinds, got {len(self.kinds)}")
        if len(set(self.kinds)) != len(self.kinds):
            raise ConfigError("duplicate kinds in degradation spec")
        for kind in self.kinds:
            if kind not in KINDS:
                raise ConfigError(f"unknown degradation kind: {kind}")
        if len(self.severities) != len(self.kinds):
            raise ConfigError("one severity per kind required")
        for s in self.severities:
            if not 0.0 < s <= 1.0:
                raise ConfigError(f"severity must be in (0, 1], got {s}")

    @property
    def total_severity(self):
        return float(sum(self.severities))


@dataclass
class ParallelUtterance:
    """Aligned clean/degraded pair with labels and frame scores."""

    utt_id: str
    ref: Waveform
    deg: Waveform
    y_ref: float
    y_deg: float
    class_id: int
    q_ref: np.ndarray
    q_deg: np.ndarray
    speech_mask: np.ndarray
    kinds: tuple = ()
    severities: tuple = ()

    @property
    def n_frames(self):
        return self.ref.n_frames

    def validate(self):
        assert len(self.ref) == len(self.deg), "ref/deg length mismatch"
        L = self.n_frames
        assert len(self.ref) >= SAMPLE_RATE, "utterance shorter than 1 s"
        for arr in (self.q_ref, self.q_deg, self.speech_mask):
            assert arr.shape == (L,), f"frame array shape {arr.shape} != ({L},)"
        assert abs(self.q_ref.mean() - self.y_ref) <= 1e-6
        assert abs(self.q_deg.mean() - self.y_deg) <= 1e-6


# ---------------------------------------------------------------------------
# clean signal synthesis


def _fade(sig, fade):
    fade = min(fade, sig.shape[0] // 2)
    if fade > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
        sig[:fade] *= ramp
        sig[-fade:] *= ramp[::-1]
    return sig


def _voiced_part(rng, length):
    """Harmonic stack with two formant-like resonances, faded in and out."""
    f0 = rng.uniform(100.0, 250.0)
    f1 = rng.uniform(300.0, 900.0)
    f2 = rng.uniform(1100.0, 2500.0)
    amp = rng.uniform(0.25, 0.8)
    n_h = max(1, int(7000.0 / f0))
    freqs = f0 * np.arange(1, n_h + 1)
    gains = (
        1.0 / np.sqrt(1.0 + ((freqs - f1) / 200.0) ** 2)
        + 0.6 / np.sqrt(1.0 + ((freqs - f2) / 300.0) ** 2)
        + 0.05
    ) / np.sqrt(np.arange(1, n_h + 1))
    phases = rng.uniform(0.0, 2.0 * np.pi, n_h)
    t = np.arange(length) / SAMPLE_RATE
    sig = (gains * np.sin(2.0 * np.pi * t[:, None] * freqs + phases)).sum(axis=1)
    sig *= amp / np.abs(sig).max()
    return _fade(sig, 160)


def _fricative_part(rng, length):
    """Band-limited noise burst, the unvoiced consonant stand-in."""
    center = rng.uniform(2000.0, 6500.0)
    width = rng.uniform(800.0, 2500.0)
    amp = rng.uniform(0.08, 0.3)
    noise = rng.standard_normal(length)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(length, 1.0 / SAMPLE_RATE)
    spec *= np.exp(-0.5 * ((freqs - center) / width) ** 2)
    sig = np.fft.irfft(spec, length)
    sig *= amp / max(np.abs(sig).max(), 1e-12)
    return _fade(sig, 80)


def _speech_segment(rng, length):
    """Voiced stretches interleaved with short fricative-like bursts.

    The noise-like bursts keep clean speech acoustically diverse, so local
    degradation detection cannot reduce to novelty detection.
    """
    sig = np.zeros(length)
    t = 0
    while t < length:
        if t > 0 and rng.random() < 0.45:
            dur = min(int(rng.uniform(0.06, 0.18) * SAMPLE_RATE), length - t)
            if dur > 320:
                sig[t : t + dur] = _fricative_part(rng, dur)
            t += dur
        dur = min(int(rng.uniform(0.25, 0.9) * SAMPLE_RATE), length - t)
        if dur > 480:
            sig[t : t + dur] = _voiced_part(rng, dur)
        t += dur
    return sig


def _plan_schedule(rng, n):
    """Voiced intervals covering 42..46% of the samples, silences between."""
    intervals = []
    t = int(rng.uniform(0.03, 0.08) * SAMPLE_RATE)
    while t < n:
        vd = int(rng.uniform(0.5, 1.4) * SAMPLE_RATE)
        end = min(t + vd, n)
        if end - t >= 800:
            intervals.append([t, end])
        t = end + int(vd * rng.uniform(1.2, 1.4))

    lo, hi, target = 0.42, 0.46, 0.44
    voiced = sum(e - s for s, e in intervals)
    if voiced > hi * n:
        excess = voiced - int(target * n)
        for seg in reversed(intervals):
            take = min(excess, seg[1] - seg[0] - 1600)
            if take > 0:
                seg[1] -= take
                excess -= take
            if excess <= 0:
                break
    elif voiced < lo * n and intervals:
        deficit = int(target * n) - voiced
        for i in range(len(intervals) - 1, -1, -1):
            prev_end = intervals[i - 1][1] if i > 0 else 0
            room = intervals[i][0] - prev_end - 800
            take = min(deficit, max(room, 0))
            if take > 0:
                intervals[i][0] -= take
                deficit -= take
            if deficit <= 0:
                break
    return [(s, e) for s, e in intervals if e - s >= 800]


def synth_clean_with_schedule(seed: int, duration_s: float):
    """As :func:`synth_clean` but also returns the voiced sample intervals."""
    if not 2.0 <= duration_s <= 12.0:
        raise InputError(f"duration must be in [2, 12] s, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * SAMPLE_RATE))
    x = np.zeros(n)
    intervals = _plan_schedule(rng, n)
    for s, e in intervals:
        x[s:e] = _speech_segment(rng, e - s)
    peak = np.abs(x).max()
    if peak > 0.9:
        x *= 0.9 / peak
    return Waveform(x), intervals


def synth_clean(seed: int, duration_s: float) -> Waveform:
    """Deterministic speech-like signal: voiced segments between silences."""
    return synth_clean_with_schedule(seed, duration_s)[0]


# ---------------------------------------------------------------------------
# degradations


def noise_snr_db(severity: float) -> float:
    """Nominal SNR in dB for the additive_noise kind at a given severity."""
    return -20.0 * np.log10(severity)


def _fft_mask(x, gain_of_freq):
    n = x.shape[0]
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    return np.fft.irfft(spec * gain_of_freq(freqs), n)


def _cos_edge(freqs, cutoff, width, falling=True):
    # 1 inside the band, raised-cosine transition of the given width.
    d = (freqs - cutoff) / max(width, 1.0)
    edge = np.clip(d, 0.0, 1.0) if falling else np.clip(-d, 0.0, 1.0)
    return 0.5 + 0.5 * np.cos(np.pi * edge)


def _apply_kind(x, kind, severity, rng):
    n = x.shape[0]
    if kind == "additive_noise":
        sig_rms = np.sqrt(np.mean(x * x))
        noise = rng.standard_normal(n)
        noise *= severity * max(sig_rms, 1e-8) / np.sqrt(np.mean(noise * noise))
        return x + noise
    if kind == "lowpass":
        cutoff = 7600.0 - severity * 6800.0
        return _fft_mask(x, lambda f: _cos_edge(f, cutoff, 0.1 * cutoff))
    if kind == "clipping":
        peak = np.abs(x).max()
        if peak == 0.0:
            return x
        thr = (1.0 - 0.9 * severity) * peak
        return np.clip(x, -thr, thr)
    if kind == "gain":
        return x * 10.0 ** (-24.0 * severity / 20.0)
    if kind == "dropout":
        chunk = 480  # 30 ms
        n_chunks = int(round(0.4 * severity * n / chunk))
        out = x.copy()
        for start in rng.integers(0, max(n - chunk, 1), n_chunks):
            out[start : start + chunk] = 0.0
        return out
    if kind == "hum":
        t = np.arange(n) / SAMPLE_RATE
        amp = 0.12 * severity
        phase = rng.uniform(0.0, 2.0 * np.pi)
        hum = np.zeros(n)
        for h, a in ((1, 1.0), (2, 0.5), (3, 0.25)):
            hum += a * np.sin(2.0 * np.pi * 50.0 * h * t + phase * h)
        return x + amp * hum
    if kind == "reverb_tail":
        ir_len = int(0.25 * SAMPLE_RATE)
        decay = np.exp(-np.arange(ir_len) / ((0.02 + 0.08 * severity) * SAMPLE_RATE))
        tail = rng.standard_normal(ir_len) * decay
        tail *= 0.5 * severity / np.sqrt(np.sum(tail * tail))
        ir = np.zeros(ir_len)
        ir[0] = 1.0
        ir[1:] = tail[1:]
        m = n + ir_len
        out = np.fft.irfft(np.fft.rfft(x, m) * np.fft.rfft(ir, m), m)
        return out[:n]
    if kind == "bandpass":
        low = 30.0 + 270.0 * severity
        high = 7600.0 - 4600.0 * severity

        def gain(f):
            return _cos_edge(f, low, 0.5 * low, falling=False) * _cos_edge(
                f, high, 0.1 * high
            )

        return _fft_mask(x, gain)
    if kind == "codec_quantize":
        bits = 12 - int(round(9 * severity))
        step = 2.0 ** (1 - bits)
        return np.round(x / step) * step
    raise ConfigError(f"unknown degradation kind: {kind}")


def apply_degradation(x: Waveform, spec: DegradationSpec, seed: int) -> Waveform:
    """Apply every kind in the spec over the full utterance, then clip."""
    rng = np.random.default_rng(seed)
    out = x.samples.copy()
    for kind, severity in sorted(zip(spec.kinds, spec.severities)):
        out = _apply_kind(out, kind, severity, rng)
    return Waveform(np.clip(out, -1.0, 1.0), x.sample_rate)


# ---------------------------------------------------------------------------
# oracle scores and VAD

QUALITY_MAPS = {
    "clipped_sum": lambda v: min(1.0, v),
    "tanh": lambda v: float(np.tanh(1.2 * v)),
}


def oracle_scores(spec: DegradationSpec, n_frames: int, quality_map="clipped_sum"):
    """Constant per-frame quality derived from the summed severity.

    Returns (utterance score, per-frame scores) with score = 5 - 4 * g(v),
    g monotone with g(0) = 0 and g(1) = 1.
    """
    g = QUALITY_MAPS[quality_map] if isinstance(quality_map, str) else quality_map
    q = 5.0 - 4.0 * g(spec.total_severity)
    return float(q), np.full(n_frames, q)


def reference_scores(n_frames: int, rng, band=(4.2, 5.0)):
    """Constant near-ceiling frame scores for a clean utterance."""
    q = float(rng.uniform(*band))
    return q, np.full(n_frames, q)


def energy_vad(x: Waveform, theta: float = VAD_THETA) -> np.ndarray:
    """Boolean speech mask per frame from median-relative frame energy.

    A frame is speech when its RMS exceeds ``theta`` times the median frame
    RMS, capped at half the maximum frame RMS so that uniformly loud signals
    (median == max) still count as speech. Scale-invariant by construction.
    """
    L = frame_count(len(x))
    frames = x.samples[: L * FRAME_SAMPLES].reshape(L, FRAME_SAMPLES)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    thr = min(theta * np.median(rms), 0.5 * rms.max())
    return rms > thr


# ---------------------------------------------------------------------------
# corpus construction


@dataclass
class CorpusConfig:
    n_train: int = 200
    n_val: int = 40
    n_test: int = 40
    duration_range: tuple = (3.0, 6.0)
    kinds: tuple = KINDS
    pair_classes: int = 6
    triple_classes: int = 0
    severity_range: tuple = (0.35, 0.95)
    ref_score_band: tuple = (4.2, 5.0)
    quality_map: str = "clipped_sum"
    ood_holdout: tuple = ()
    vad_theta: float = VAD_THETA
    seed: int = 0


def build_class_table(cfg: CorpusConfig):
    """Ordered class table: singles, then pairs, then triples; ids from 1."""
    pairs = list(itertools.combinations(cfg.kinds, 2))
    triples = list(itertools.combinations(cfg.kinds, 3))
    if cfg.pair_classes > len(pairs):
        raise ConfigError(
            f"requested {cfg.pair_classes} pair classes, only {len(pairs)} exist"
        )
    if cfg.triple_classes > len(triples):
        raise ConfigError(
            f"requested {cfg.triple_classes} triple classes, only {len(triples)} exist"
        )
    table = [(k,) for k in cfg.kinds]
    table += pairs[: cfg.pair_classes]
    table += triples[: cfg.triple_classes]
    return {i + 1: kinds for i, kinds in enumerate(table)}


def clean_label(class_table: dict) -> int:
    return len(class_table) + 1


def _split_classes(class_table, cfg, split):
    holdout = set(cfg.ood_holdout)
    if not holdout:
        return sorted(class_table)
    if split == "test":
        ids = [c for c, kinds in class_table.items() if holdout & set(kinds)]
    else:
        ids = [c for c, kinds in class_table.items() if not holdout & set(kinds)]
    if not ids:
        raise ConfigError(f"no classes available for split {split}")
    return sorted(ids)


def _synthesize_one(cfg, class_table, split, index):
    u_seed = derive_seed(cfg.seed, f"utt/{split}/{index}")
    rng = np.random.default_rng(u_seed)
    duration = rng.uniform(*cfg.duration_range)
    clean_seed = int(rng.integers(2**62))
    deg_seed = int(rng.integers(2**62))
    classes = _split_classes(class_table, cfg, split)
    class_id = classes[index % len(classes)]
    kinds = class_table[class_id]
    severities = tuple(float(rng.uniform(*cfg.severity_range)) for _ in kinds)
    spec = DegradationSpec(kinds, severities)

    ref = synth_clean(clean_seed, duration)
    deg = apply_degradation(ref, spec, deg_seed)
    L = ref.n_frames
    y_deg, q_deg = oracle_scores(spec, L, cfg.quality_map)
    y_ref, q_ref = reference_scores(L, rng, cfg.ref_score_band)
    return ParallelUtterance(
        utt_id=f"{split}-{index:04d}",
        ref=ref,
        deg=deg,
        y_ref=y_ref,
        y_deg=y_deg,
        class_id=class_id,
        q_ref=q_ref,
        q_deg=q_deg,
        speech_mask=energy_vad(ref, cfg.vad_theta),
        kinds=kinds,
        severities=severities,
    )


def build_corpus(cfg: CorpusConfig, out_dir) -> list[dict]:
    """Write the full corpus to disk and return its manifest records."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    class_table = build_class_table(cfg)
    records = []
    for split, count in (("train", cfg.n_train), ("val", cfg.n_val), ("test", cfg.n_test)):
        for i in range(count):
            u = _synthesize_one(cfg, class_table, split, i)
            ref_path = f"audio/{u.utt_id}_ref.wav"
            deg_path = f"audio/{u.utt_id}_deg.wav"
            fileio.write_wav(out_dir / ref_path, u.ref.samples)
            fileio.write_wav(out_dir / deg_path, u.deg.samples)
            fileio.write_frame_scores(out_dir / sidecar_path(ref_path), u.q_ref)
            fileio.write_frame_scores(out_dir / sidecar_path(deg_path), u.q_deg)
            records.append(
                {
                    "id": u.utt_id,
                    "ref_path": ref_path,
                    "deg_path": deg_path,
                    "y_ref": u.y_ref,
                    "y_deg": u.y_deg,
                    "class_id": u.class_id,
                    "kinds": list(u.kinds),
                    "severities": list(u.severities),
                    "split": split,
                }
            )
    fileio.write_manifest(out_dir / "manifest.jsonl", records)
    fileio.write_report(
        out_dir / "meta.json",
        {
            "classes": {str(c): list(k) for c, k in class_table.items()},
            "clean_label": clean_label(class_table),
            "n_classes": len(class_table),
            "vad_theta": cfg.vad_theta,
            "kinds": list(cfg.kinds),
            "ood_holdout": list(cfg.ood_holdout),
        },
    )
    logger.info("corpus written to %s: %d utterances", out_dir, len(records))
    return records


def sidecar_path(wav_path: str) -> str:
    return wav_path.rsplit(".", 1)[0] + ".ldq"


def load_utterance(corpus_dir, record: dict, vad_theta: float = VAD_THETA):
    """Materialize a ParallelUtterance from manifest record and files."""
    corpus_dir = Path(corpus_dir)
    ref = Waveform(fileio.read_wav(corpus_dir / record["ref_path"]))
    deg = Waveform(fileio.read_wav(corpus_dir / record["deg_path"]))
    q_ref = fileio.read_frame_scores(corpus_dir / sidecar_path(record["ref_path"]))
    q_deg = fileio.read_frame_scores(corpus_dir / sidecar_path(record["deg_path"]))
    return ParallelUtterance(
        utt_id=record["id"],
        ref=ref,
        deg=deg,
        y_ref=record["y_ref"],
        y_deg=record["y_deg"],
        class_id=record["class_id"],
        q_ref=q_ref,
        q_deg=q_deg,
        speech_mask=energy_vad(ref, vad_theta),
        kinds=tuple(record["kinds"]),
        severities=tuple(record["severities"]),
    )


def load_split(corpus_dir, split: str, vad_theta: float = VAD_THETA):
    records = fileio.read_manifest(Path(corpus_dir) / "manifest.jsonl")
    return [
        load_utterance(corpus_dir, r, vad_theta) for r in records if r["split"] == split
    ]
