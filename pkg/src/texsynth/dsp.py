"""Deterministic signal-processing kernels.

Real DFT and inverse, short-time transforms, weighted overlap-add inversion,
and the 20 Hz action low-pass filter.  Everything here is a pure function of
its inputs; all state lives in the caller.

Conventions (these matter for loss magnitudes downstream):

* forward DFT is unnormalized, the inverse carries the 1/N factor;
* all sample rates are fixed at 10 kHz (``SAMPLE_RATE_HZ``);
* an analysis frame is 1000 samples (100 ms), so bin k sits at k * 10 Hz and
  the band up to 1 kHz is exactly bins 0..100.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import LengthMismatchError, NonFiniteError

SAMPLE_RATE_HZ = 10_000.0
FRAME_LEN = 1000
N_BINS = 101           # bins 0..100  <->  0..1000 Hz at 10 Hz spacing
N_RDFT_BINS = FRAME_LEN // 2 + 1   # 501, full one-sided spectrum

# 20 Hz low-pass kernel: odd tap count gives an integer group delay so the
# zero-phase application is an exact index shift.
LOWPASS_TAPS = 2001
LOWPASS_CUTOFF_HZ = 20.0


@dataclass(frozen=True)
class Signal:
    """A uniformly sampled real time series.

    ``samples`` may be acceleration (m/s^2), force (N) or speed (mm/s); the
    carrier does not care, only the sample rate and finiteness do.
    """

    samples: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise LengthMismatchError("signal samples must be one-dimensional")
        if not self.sample_rate_hz > 0:
            raise NonFiniteError("sample_rate_hz must be positive")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteError("signal contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class SpectralFrame:
    """Non-negative DFT magnitudes of one 1000-sample frame, bins 0..100."""

    mags: np.ndarray
    origin_index: int = 0
    frame_len: int = FRAME_LEN

    def __post_init__(self):
        mags = np.asarray(self.mags, dtype=np.float64)
        object.__setattr__(self, "mags", mags)
        if mags.shape != (N_BINS,):
            raise LengthMismatchError(
                f"spectral frame needs exactly {N_BINS} bins, got {mags.shape}"
            )
        if not np.all(np.isfinite(mags)):
            raise NonFiniteError("spectral frame contains non-finite magnitudes")
        if np.any(mags < 0):
            raise NonFiniteError("spectral frame magnitudes must be non-negative")


@dataclass(frozen=True)
class ComplexFrame:
    """Full one-sided spectrum of a 1000-point frame (bins 0..500)."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.float64)
        im = np.asarray(self.im, dtype=np.float64)
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)
        if re.shape != (N_RDFT_BINS,) or im.shape != (N_RDFT_BINS,):
            raise LengthMismatchError(
                f"complex frame needs {N_RDFT_BINS} bins in re and im"
            )
        if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
            raise NonFiniteError("complex frame contains non-finite entries")

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im


def rdft(frame: np.ndarray) -> np.ndarray:
    """One-sided DFT of a real, even-length frame.

    Returns X[k] = sum_n x[n] exp(-i 2 pi k n / N) for k = 0..N/2.
    """
    x = np.asarray(frame, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2 or x.shape[0] % 2 != 0:
        raise LengthMismatchError("rdft needs a 1-D frame with even length >= 2")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("rdft input contains non-finite samples")
    return np.fft.rfft(x)


def irdft(spectrum: np.ndarray, n: int = FRAME_LEN) -> np.ndarray:
    """Inverse of :func:`rdft` with the 1/N normalization."""
    X = np.asarray(spectrum)
    if X.shape[0] != n // 2 + 1:
        raise LengthMismatchError(
            f"one-sided spectrum of a {n}-point frame has {n // 2 + 1} bins"
        )
    return np.fft.irfft(X, n=n)


def mag_leq_1khz(spectrum: np.ndarray, sample_rate_hz: float = SAMPLE_RATE_HZ,
                 origin_index: int = 0) -> SpectralFrame:
    """Magnitudes of bins 0..100 (0..1000 Hz) of a 1000-point frame spectrum."""
    X = np.asarray(spectrum)
    if sample_rate_hz != SAMPLE_RATE_HZ:
        raise LengthMismatchError(
            f"band extraction is defined at {SAMPLE_RATE_HZ:.0f} Hz only"
        )
    if X.shape[0] != N_RDFT_BINS:
        raise LengthMismatchError(
            f"expected the one-sided spectrum of a {FRAME_LEN}-point frame"
        )
    return SpectralFrame(np.abs(X[:N_BINS]), origin_index=origin_index)


def frame_count(n_samples: int, win: int, hop: int) -> int:
    """Number of full analysis windows: floor((len - win) / hop) + 1."""
    if n_samples < win:
        raise LengthMismatchError("signal shorter than one analysis window")
    return (n_samples - win) // hop + 1


def stft_mag(signal: Signal, win: int = FRAME_LEN, hop: int = 100) -> list[SpectralFrame]:
    """Rectangular-window magnitude STFT restricted to the 0..1 kHz band.

    Frame i covers samples [i*hop, i*hop + win).  This is the evaluation
    transform; reconstruction paths use :func:`stft_complex` with a Hann
    window instead.
    """
    if hop < 1:
        raise LengthMismatchError("hop must be >= 1")
    if win != FRAME_LEN:
        raise LengthMismatchError(f"analysis window is fixed at {FRAME_LEN} samples")
    x = signal.samples
    n = frame_count(x.shape[0], win, hop)
    starts = np.arange(n) * hop
    frames = np.stack([x[s:s + win] for s in starts])
    spectra = np.fft.rfft(frames, axis=1)
    return [
        SpectralFrame(np.abs(spectra[i, :N_BINS]), origin_index=int(starts[i]))
        for i in range(n)
    ]


def hann_periodic(win: int = FRAME_LEN) -> np.ndarray:
    """Periodic Hann window, the COLA-compliant choice for overlap-add."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)


def stft_complex(signal: Signal, win: int = FRAME_LEN, hop: int = 250,
                 window: np.ndarray | None = None) -> list[ComplexFrame]:
    """Windowed complex STFT used by the reconstruction paths."""
    if hop < 1:
        raise LengthMismatchError("hop must be >= 1")
    w = hann_periodic(win) if window is None else np.asarray(window, dtype=np.float64)
    if w.shape[0] != win:
        raise LengthMismatchError("window length must equal the frame length")
    x = signal.samples
    n = frame_count(x.shape[0], win, hop)
    frames = np.stack([x[i * hop:i * hop + win] for i in range(n)]) * w
    spectra = np.fft.rfft(frames, axis=1)
    return [ComplexFrame(spectra[i].real, spectra[i].imag) for i in range(n)]


def istft_overlap_add(frames: list[ComplexFrame], hop: int = 250,
                      win: int = FRAME_LEN,
                      window: np.ndarray | None = None) -> Signal:
    """Weighted overlap-add inversion of a complex frame sequence.

    Each inverse frame is windowed again at synthesis and the sum is divided
    by the summed squared window (per-sample COLA normalization), which makes
    stft_complex -> istft_overlap_add the identity on every sample the
    windows cover, not just the interior.
    """
    if len(frames) == 0:
        raise LengthMismatchError("istft needs at least one frame")
    if win % hop != 0:
        raise LengthMismatchError("hop must divide the frame length")
    w = hann_periodic(win) if window is None else np.asarray(window, dtype=np.float64)
    spectra = np.stack([f.to_complex() for f in frames])
    blocks = np.fft.irfft(spectra, n=win, axis=1) * w

    n_out = win + (len(frames) - 1) * hop
    acc = np.zeros(n_out)
    norm = np.zeros(n_out)
    w2 = w * w
    for i in range(len(frames)):
        s = i * hop
        acc[s:s + win] += blocks[i]
        norm[s:s + win] += w2
    # Samples never touched by a window (e.g. frame edges where Hann is 0)
    # stay 0; everywhere else divide out the window energy.
    covered = norm > 1e-12
    acc[covered] /= norm[covered]
    acc[~covered] = 0.0
    return Signal(acc)


def lowpass_kernel(taps: int = LOWPASS_TAPS,
                   cutoff_hz: float = LOWPASS_CUTOFF_HZ,
                   sample_rate_hz: float = SAMPLE_RATE_HZ) -> np.ndarray:
    """Hamming-windowed sinc low-pass FIR, normalized to unit DC gain."""
    if taps % 2 != 1:
        raise LengthMismatchError("kernel needs an odd tap count for integer group delay")
    m = np.arange(taps) - (taps - 1) / 2
    fc = cutoff_hz / sample_rate_hz
    h = 2.0 * fc * np.sinc(2.0 * fc * m)
    h *= np.hamming(taps)
    return h / h.sum()


def lowpass_20hz(signal: Signal) -> Signal:
    """Zero-phase 20 Hz low-pass for the action channels.

    The linear-phase kernel is applied once; edge-replication padding plus
    the symmetric valid convolution compensates the group delay exactly, so
    output sample t depends on inputs centered at t and the length is
    preserved.
    """
    if signal.sample_rate_hz != SAMPLE_RATE_HZ:
        raise LengthMismatchError(
            f"low-pass filter is designed for {SAMPLE_RATE_HZ:.0f} Hz input"
        )
    h = lowpass_kernel()
    pad = (LOWPASS_TAPS - 1) // 2
    padded = np.pad(signal.samples, pad, mode="edge")
    out = fftconvolve(padded, h, mode="valid")
    return Signal(out, signal.sample_rate_hz)
