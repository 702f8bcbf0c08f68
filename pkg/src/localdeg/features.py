"""Frame grid and fixed spectral front-end.

All signals are mono 16 kHz. The analysis grid is 50 frames per second:
frame ``l`` owns the 320-sample span ``[l*320, (l+1)*320)``. The front-end
computes banded log-power spectra over a 25 ms window hopped by one frame;
it is a fixed transform with no trainable part, so gradients never flow
through it.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError

SAMPLE_RATE = 16000
FRAME_SAMPLES = 320  # 20 ms hop -> 50 Hz frame rate
WINDOW_SAMPLES = 400  # 25 ms analysis window


def frame_count(n_samples: int) -> int:
    return n_samples // FRAME_SAMPLES


def frame_span(l: int) -> tuple[int, int]:
    """Half-open sample span [onset, offset) owned by frame ``l``."""
    if l < 0:
        raise InputError(f"frame index must be non-negative, got {l}")
    return l * FRAME_SAMPLES, (l + 1) * FRAME_SAMPLES


def frame_of_sample(s: int) -> int:
    return s // FRAME_SAMPLES


def log_power_spectra(samples: np.ndarray, n_bins: int = 64) -> np.ndarray:
    """Banded log-power spectrogram aligned to the frame grid.

    Returns an [L, n_bins] float64 array with L = frame_count(len(samples)).
    Window l starts at the frame onset and extends 400 samples (zero padded
    at the tail), so the transform is equivariant to whole-frame shifts.
    """
    samples = np.asarray(samples, dtype=np.float64)
    L = frame_count(samples.shape[0])
    if L < 1:
        raise InputError("signal shorter than one frame")
    needed = (L - 1) * FRAME_SAMPLES + WINDOW_SAMPLES
    if samples.shape[0] < needed:
        samples = np.pad(samples, (0, needed - samples.shape[0]))
    windows = sliding_window_view(samples, WINDOW_SAMPLES)[::FRAME_SAMPLES][:L]
    windows = windows * np.hanning(WINDOW_SAMPLES)
    power = np.abs(np.fft.rfft(windows, axis=1)) ** 2  # [L, 201]
    edges = np.linspace(0, power.shape[1], n_bins + 1).astype(int)
    banded = np.add.reduceat(power, edges[:-1], axis=1)
    banded /= np.maximum(np.diff(edges), 1)
    return np.log(banded + 1e-10)
