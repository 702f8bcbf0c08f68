"""On-disk formats: WAV audio, binary sidecars, manifests, reports.

Sidecar formats (all little-endian):

* frame scores: magic ``LDQ1``, u32 frame count, f32 per frame
* frame labels: magic ``LDL1``, u32 frame count, u16 class per frame
* embeddings:   magic ``LDE1``, u32 rows, u32 cols, f32 row-major
* checkpoints:  magic ``LDM1``, u32 version, u32 config length, config JSON,
  u32 blob count, then per blob: u32 name length, name, u32 ndim, u32 dims,
  f64 data

Manifests are UTF-8 line-delimited JSON with sorted keys, one record per
line, so equal content yields byte-identical files.
"""

import json
import struct
import wave
from pathlib import Path

import numpy as np

from .errors import IoError

SAMPLE_RATE = 16000


def write_wav(path, samples: np.ndarray):
    """Write mono 16-bit PCM at 16 kHz."""
    q = np.rint(np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(q.tobytes())


def read_wav(path) -> np.ndarray:
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1 or w.getsampwidth() != 2:
                raise IoError(f"{path}: expected mono 16-bit PCM")
            raw = w.readframes(w.getnframes())
    except (FileNotFoundError, wave.Error, EOFError) as e:
        raise IoError(f"cannot read wav {path}: {e}") from e
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0


def _read_exact(f, n, path):
    buf = f.read(n)
    if len(buf) != n:
        raise IoError(f"{path}: truncated file")
    return buf


def write_frame_scores(path, scores: np.ndarray):
    arr = np.asarray(scores, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"LDQ1")
        f.write(struct.pack("<I", arr.shape[0]))
        f.write(arr.tobytes())


def read_frame_scores(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_exact(f, 4, path) != b"LDQ1":
            raise IoError(f"{path}: bad magic for frame scores")
        (n,) = struct.unpack("<I", _read_exact(f, 4, path))
        data = _read_exact(f, 4 * n, path)
    return np.frombuffer(data, dtype="<f4").astype(np.float64)


def write_frame_labels(path, labels: np.ndarray):
    arr = np.asarray(labels, dtype="<u2")
    with open(path, "wb") as f:
        f.write(b"LDL1")
        f.write(struct.pack("<I", arr.shape[0]))
        f.write(arr.tobytes())


def read_frame_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_exact(f, 4, path) != b"LDL1":
            raise IoError(f"{path}: bad magic for frame labels")
        (n,) = struct.unpack("<I", _read_exact(f, 4, path))
        data = _read_exact(f, 2 * n, path)
    return np.frombuffer(data, dtype="<u2").astype(np.int64)


def write_embeddings(path, emb: np.ndarray):
    arr = np.ascontiguousarray(emb, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"LDE1")
        f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def read_embeddings(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_exact(f, 4, path) != b"LDE1":
            raise IoError(f"{path}: bad magic for embeddings")
        rows, cols = struct.unpack("<II", _read_exact(f, 8, path))
        data = _read_exact(f, 4 * rows * cols, path)
    return np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(rows, cols)


CHECKPOINT_VERSION = 1


def write_checkpoint(path, config: dict, blobs: list[tuple[str, np.ndarray]]):
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(b"LDM1")
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(cfg)))
        f.write(cfg)
        f.write(struct.pack("<I", len(blobs)))
        for name, arr in blobs:
            arr = np.ascontiguousarray(arr, dtype="<f8")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_checkpoint(path):
    try:
        f = open(path, "rb")
    except FileNotFoundError as e:
        raise IoError(f"checkpoint not found: {path}") from e
    with f:
        if _read_exact(f, 4, path) != b"LDM1":
            raise IoError(f"{path}: bad magic for checkpoint")
        (version,) = struct.unpack("<I", _read_exact(f, 4, path))
        if version != CHECKPOINT_VERSION:
            raise IoError(f"{path}: unsupported checkpoint version {version}")
        (clen,) = struct.unpack("<I", _read_exact(f, 4, path))
        config = json.loads(_read_exact(f, clen, path).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(f, 4, path))
        blobs = []
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(f, 4, path))
            name = _read_exact(f, nlen, path).decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, path))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, path))
            size = int(np.prod(shape)) if ndim else 1
            data = _read_exact(f, 8 * size, path)
            blobs.append((name, np.frombuffer(data, dtype="<f8").reshape(shape).copy()))
    return config, blobs


def write_manifest(path, records: list[dict]):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True))
            f.write("\n")


def read_manifest(path) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
    except FileNotFoundError as e:
        raise IoError(f"manifest not found: {path}") from e


def write_report(path, report: dict):
    """Canonical JSON report; equal content is byte-identical."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, indent=2)
        f.write("\n")


def write_csv(path, header: list[str], rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(str(v) for v in row) + "\n")
