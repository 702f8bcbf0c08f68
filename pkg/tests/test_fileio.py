"""Binary sidecar formats, WAV round trips, manifests, spectra."""

import numpy as np
import pytest

from localdeg import fileio
from localdeg.errors import InputError, IoError
from localdeg.features import frame_count, log_power_spectra


class TestWav:
    def test_roundtrip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.uniform(-0.8, 0.8, 16000)
        path = tmp_path / "a.wav"
        fileio.write_wav(path, x)
        y = fileio.read_wav(path)
        assert y.shape == x.shape
        assert np.abs(x - y).max() < 1.0 / 32767.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            fileio.read_wav(tmp_path / "nope.wav")


class TestSidecars:
    def test_frame_scores_roundtrip(self, tmp_path):
        path = tmp_path / "q.ldq"
        scores = np.linspace(1, 5, 17)
        fileio.write_frame_scores(path, scores)
        assert path.read_bytes()[:4] == b"LDQ1"
        out = fileio.read_frame_scores(path)
        np.testing.assert_allclose(out, scores, atol=1e-6)

    def test_frame_labels_roundtrip(self, tmp_path):
        path = tmp_path / "l.ldl"
        labels = np.array([1, 2, 16, 16, 3])
        fileio.write_frame_labels(path, labels)
        assert path.read_bytes()[:4] == b"LDL1"
        np.testing.assert_array_equal(fileio.read_frame_labels(path), labels)

    def test_embeddings_roundtrip(self, tmp_path):
        path = tmp_path / "e.lde"
        rng = np.random.default_rng(1)
        emb = rng.standard_normal((8, 5))
        fileio.write_embeddings(path, emb)
        assert path.read_bytes()[:4] == b"LDE1"
        np.testing.assert_allclose(fileio.read_embeddings(path), emb, atol=1e-6)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ldq"
        path.write_bytes(b"XXXX\x00\x00\x00\x00")
        with pytest.raises(IoError):
            fileio.read_frame_scores(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "t.ldq"
        fileio.write_frame_scores(path, np.ones(10))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(IoError):
            fileio.read_frame_scores(path)


class TestManifest:
    def test_roundtrip_and_stable_bytes(self, tmp_path):
        records = [{"id": "a", "y": 1.25}, {"id": "b", "y": 0.5}]
        p1, p2 = tmp_path / "m1.jsonl", tmp_path / "m2.jsonl"
        fileio.write_manifest(p1, records)
        fileio.write_manifest(p2, records)
        assert p1.read_bytes() == p2.read_bytes()
        assert fileio.read_manifest(p1) == records


class TestSpectra:
    def test_shape(self):
        x = np.random.default_rng(2).uniform(-1, 1, 32000)
        spec = log_power_spectra(x)
        assert spec.shape == (frame_count(32000), 64)

    def test_finite(self):
        spec = log_power_spectra(np.zeros(3200))
        assert np.isfinite(spec).all()

    def test_too_short(self):
        with pytest.raises(InputError):
            log_power_spectra(np.zeros(100))

    def test_custom_bins(self):
        x = np.random.default_rng(3).uniform(-1, 1, 6400)
        assert log_power_spectra(x, n_bins=16).shape == (20, 16)
