"""Corpus synthesis: clean signals, degradations, oracle scores, VAD,
manifest construction."""

import numpy as np
import pytest

from localdeg.corpus import (
    KINDS,
    CorpusConfig,
    DegradationSpec,
    Waveform,
    apply_degradation,
    build_class_table,
    build_corpus,
    clean_label,
    energy_vad,
    load_split,
    noise_snr_db,
    oracle_scores,
    reference_scores,
    synth_clean,
    synth_clean_with_schedule,
)
from localdeg.errors import ConfigError, InputError
from localdeg.features import FRAME_SAMPLES


class TestSynthClean:
    def test_same_seed_bit_identical(self):
        a = synth_clean(7, 3.0)
        b = synth_clean(7, 3.0)
        assert np.array_equal(a.samples, b.samples)

    def test_duration_in_samples(self):
        assert len(synth_clean(0, 4.0)) == 64000

    def test_peak_bounded(self):
        for seed in range(5):
            assert np.abs(synth_clean(seed, 3.0).samples).max() <= 0.9 + 1e-12

    def test_duration_bounds(self):
        with pytest.raises(InputError):
            synth_clean(0, 1.0)
        with pytest.raises(InputError):
            synth_clean(0, 20.0)

    @pytest.mark.parametrize("seed,duration", [(i, d) for i in range(8)
                                               for d in (2.0, 4.0, 8.0)])
    def test_vad_marks_at_least_40_percent_speech(self, seed, duration):
        wav = synth_clean(seed, duration)
        assert energy_vad(wav).mean() >= 0.40

    @pytest.mark.parametrize("seed", range(8))
    def test_vad_matches_schedule(self, seed):
        wav, intervals = synth_clean_with_schedule(seed, 5.0)
        L = wav.n_frames
        voiced_samples = np.zeros(len(wav), dtype=bool)
        for s, e in intervals:
            voiced_samples[s:e] = True
        schedule = voiced_samples[: L * FRAME_SAMPLES].reshape(L, -1).sum(1) * 2 >= FRAME_SAMPLES
        agreement = (energy_vad(wav) == schedule).mean()
        assert agreement >= 0.90


class TestDegradations:
    @pytest.mark.parametrize("kind", KINDS)
    def test_near_zero_severity_is_near_identity(self, kind):
        wav = synth_clean(3, 3.0)
        spec = DegradationSpec((kind,), (1e-6,))
        out = apply_degradation(wav, spec, 11)
        # within the quantization of each kind's parameterization
        assert np.abs(out.samples - wav.samples).max() < 5e-3

    def test_gain_is_constant_scale(self):
        wav = synth_clean(4, 3.0)
        out = apply_degradation(wav, DegradationSpec(("gain",), (0.5,)), 0)
        scale = 10.0 ** (-24.0 * 0.5 / 20.0)
        np.testing.assert_allclose(out.samples, wav.samples * scale, atol=1e-12)

    def test_additive_noise_hits_mapped_snr(self):
        wav = synth_clean(5, 4.0)
        severity = 0.5
        out = apply_degradation(wav, DegradationSpec(("additive_noise",), (severity,)), 9)
        noise = out.samples - wav.samples
        measured = 10.0 * np.log10(np.sum(wav.samples**2) / np.sum(noise**2))
        assert abs(measured - noise_snr_db(severity)) <= 1.0

    def test_snr_strictly_decreases_with_severity(self):
        wav = synth_clean(6, 3.0)
        snrs = []
        for severity in np.linspace(0.05, 0.95, 10):
            out = apply_degradation(
                wav, DegradationSpec(("additive_noise",), (float(severity),)), 13
            )
            noise = out.samples - wav.samples
            snrs.append(10.0 * np.log10(np.sum(wav.samples**2) / np.sum(noise**2)))
        assert all(a > b for a, b in zip(snrs, snrs[1:]))

    def test_output_clipped(self):
        wav = synth_clean(8, 3.0)
        out = apply_degradation(
            wav, DegradationSpec(("additive_noise", "hum"), (1.0, 1.0)), 3
        )
        assert out.samples.max() <= 1.0 and out.samples.min() >= -1.0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            DegradationSpec(("chorus",), (0.5,))

    def test_spec_cardinality(self):
        with pytest.raises(ConfigError):
            DegradationSpec(("gain", "hum", "lowpass", "clipping"), (0.5,) * 4)

    def test_deterministic(self):
        wav = synth_clean(9, 3.0)
        spec = DegradationSpec(("additive_noise", "dropout"), (0.5, 0.5))
        a = apply_degradation(wav, spec, 21)
        b = apply_degradation(wav, spec, 21)
        assert np.array_equal(a.samples, b.samples)


class TestOracleScores:
    def test_zero_severity_limit_is_five(self):
        y, q = oracle_scores(DegradationSpec(("gain",), (1e-12,)), 10)
        np.testing.assert_allclose(q, 5.0, atol=1e-9)

    def test_full_severity_is_one(self):
        y, q = oracle_scores(DegradationSpec(("gain",), (1.0,)), 10)
        np.testing.assert_allclose(q, 1.0)
        assert y == 1.0

    def test_two_kind_sum(self):
        spec = DegradationSpec(("gain", "hum"), (0.3, 0.4))
        y, q = oracle_scores(spec, 5)
        np.testing.assert_allclose(q, 5.0 - 4.0 * 0.7)
        assert y == pytest.approx(2.2)

    def test_reference_band(self):
        rng = np.random.default_rng(0)
        y, q = reference_scores(50, rng, band=(4.2, 5.0))
        assert 4.2 <= y <= 5.0
        assert np.all(q == y)


class TestEnergyVad:
    def test_all_zero_is_all_nonspeech(self):
        assert not energy_vad(Waveform(np.zeros(16000))).any()

    def test_constant_tone_is_all_speech(self):
        t = np.arange(32000) / 16000.0
        wav = Waveform(0.8 * np.sin(2 * np.pi * 220.0 * t))
        assert energy_vad(wav).all()

    @pytest.mark.parametrize("scale", [0.1, 0.3, 1.0])
    def test_scale_invariance(self, scale):
        wav = synth_clean(10, 4.0)
        base = energy_vad(wav)
        scaled = energy_vad(Waveform(wav.samples * scale))
        assert np.array_equal(base, scaled)


class TestBuildCorpus:
    def test_class_table_count(self):
        cfg = CorpusConfig(pair_classes=6, triple_classes=0)
        table = build_class_table(cfg)
        assert len(table) == 9 + 6
        assert clean_label(table) == 16

    def test_class_capacity_error(self):
        with pytest.raises(ConfigError):
            build_class_table(CorpusConfig(pair_classes=100))

    def test_corpus_invariants_and_determinism(self, tmp_path):
        cfg = CorpusConfig(n_train=6, n_val=3, n_test=3, duration_range=(2.0, 3.0),
                           pair_classes=2, seed=5)
        build_corpus(cfg, tmp_path / "a")
        build_corpus(cfg, tmp_path / "b")
        a = (tmp_path / "a" / "manifest.jsonl").read_bytes()
        b = (tmp_path / "b" / "manifest.jsonl").read_bytes()
        assert a == b

        train = load_split(tmp_path / "a", "train")
        assert len(train) == 6
        for u in train:
            u.validate()

    def test_every_class_in_train_and_val(self, tmp_path):
        cfg = CorpusConfig(n_train=24, n_val=12, n_test=6, duration_range=(2.0, 2.5),
                           pair_classes=3, seed=1)
        build_corpus(cfg, tmp_path / "c")
        table = build_class_table(cfg)
        for split, count in (("train", 24), ("val", 12)):
            seen = {u.class_id for u in load_split(tmp_path / "c", split)}
            assert seen == set(table)

    def test_ood_holdout_never_in_train(self, tmp_path):
        cfg = CorpusConfig(n_train=10, n_val=5, n_test=5, duration_range=(2.0, 2.5),
                           pair_classes=2, ood_holdout=("bandpass", "codec_quantize"),
                           seed=2)
        build_corpus(cfg, tmp_path / "d")
        for u in load_split(tmp_path / "d", "train"):
            assert not set(u.kinds) & {"bandpass", "codec_quantize"}
        test_kinds = set()
        for u in load_split(tmp_path / "d", "test"):
            test_kinds |= set(u.kinds)
        assert test_kinds & {"bandpass", "codec_quantize"}
