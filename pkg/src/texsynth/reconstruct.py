"""Temporal reconstruction of signals from magnitude spectra.

Two routes out of the magnitude domain:

* :func:`gla_reconstruct` inverts a whole sequence of full-band magnitude
  frames offline with an accelerated Griffin-Lim iteration (alternating
  projections with momentum extrapolation).
* :func:`stitch_streaming` converts one band-limited prediction at a time
  into a hop-sized audio block, causally, for the live service.  Each bin
  is treated as a sinusoid whose running phase advances by exactly
  2*pi*f_k*hop/fs per call, so steady spectra produce continuous tones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import (
    FRAME_LEN,
    N_BINS,
    N_RDFT_BINS,
    SAMPLE_RATE_HZ,
    ComplexFrame,
    Signal,
    SpectralFrame,
    hann_periodic,
    istft_overlap_add,
    stft_complex,
)
from .errors import DomainError, LengthMismatchError, NonFiniteError

GLA_HOP = 250
STITCH_HOP = 100


@dataclass(frozen=True)
class GlaConfig:
    """Settings for the accelerated Griffin-Lim inversion.

    ``momentum`` is the extrapolation weight applied to successive
    projected spectrograms; 0 recovers the classic alternating-projection
    iteration, values near 1 converge much faster on textured spectra.
    """

    iterations: int = 100
    momentum: float = 0.99
    win: int = FRAME_LEN
    hop: int = GLA_HOP
    phase_seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise DomainError("gla needs at least one iteration")
        if not 0.0 <= self.momentum < 1.0:
            raise DomainError("momentum must lie in [0, 1)")
        # frame types pin the bin count, so the window is not negotiable
        if self.win != FRAME_LEN:
            raise LengthMismatchError(f"analysis window is fixed at {FRAME_LEN}")
        if not 1 <= self.hop <= self.win or self.win % self.hop != 0:
            raise LengthMismatchError("hop must divide the window length")


def _as_target_matrix(target_mags) -> np.ndarray:
    if isinstance(target_mags, np.ndarray) and target_mags.ndim == 2:
        mat = np.array(target_mags, dtype=np.float64)
    else:
        rows = []
        for frame in target_mags:
            rows.append(np.asarray(frame, dtype=np.float64))
        if not rows:
            raise LengthMismatchError("gla needs at least two target frames")
        mat = np.stack(rows)
    if mat.shape[0] < 2:
        raise LengthMismatchError("gla needs at least two target frames")
    if mat.shape[1] != N_RDFT_BINS:
        raise LengthMismatchError(
            f"target frames must carry {N_RDFT_BINS} magnitude bins"
        )
    if not np.all(np.isfinite(mat)):
        raise NonFiniteError("target magnitudes contain non-finite values")
    if np.any(mat < 0):
        raise DomainError("target magnitudes must be non-negative")
    return mat


def full_band_targets(frames: list[SpectralFrame]) -> np.ndarray:
    """Zero-fill band-limited prediction frames up to the full 501 bins."""
    mat = np.zeros((len(frames), N_RDFT_BINS))
    for i, frame in enumerate(frames):
        mat[i, :N_BINS] = frame.mags
    return mat


def _random_phases(rng: np.random.Generator, shape) -> np.ndarray:
    phases = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    # real signals force DC and Nyquist to stay real
    phases[..., 0] = 0.0
    phases[..., -1] = 0.0
    return phases


def _project_magnitude(spectra: np.ndarray, target: np.ndarray) -> np.ndarray:
    mags = np.abs(spectra)
    safe = np.where(mags > 0.0, mags, 1.0)
    unit = np.where(mags > 0.0, spectra / safe, 1.0 + 0.0j)
    return target * unit


def _istft_matrix(spectra: np.ndarray, hop: int, win: int) -> Signal:
    frames = [ComplexFrame(row.real, row.imag) for row in spectra]
    return istft_overlap_add(frames, hop=hop, win=win)


def _stft_matrix(signal: Signal, hop: int, win: int) -> np.ndarray:
    frames = stft_complex(signal, win=win, hop=hop)
    return np.stack([f.to_complex() for f in frames])


def gla_reconstruct(target_mags, config: GlaConfig = GlaConfig()
                    ) -> tuple[Signal, np.ndarray]:
    """Invert magnitude frames into a time signal, returning the per
    iteration consistency error.

    ``target_mags`` is an (M, 501) array (or sequence of rows) of
    non-negative magnitudes for Hann-windowed frames hopped by
    ``config.hop``.  The error reported for iteration i is
    sum((|STFT(x_i)| - target)^2) for the candidate signal x_i produced in
    that iteration, so ``errors[-1]`` describes the returned signal.
    """
    target = _as_target_matrix(target_mags)
    rng = np.random.default_rng(config.phase_seed)
    current = target * np.exp(1j * _random_phases(rng, target.shape))
    previous = None
    errors = np.empty(config.iterations)
    signal = None
    for i in range(config.iterations):
        consistent = _project_magnitude(current, target)
        signal = _istft_matrix(consistent, config.hop, config.win)
        projected = _stft_matrix(signal, config.hop, config.win)
        errors[i] = float(np.sum((np.abs(projected) - target) ** 2))
        if previous is None:
            current = projected
        else:
            current = projected + config.momentum * (projected - previous)
        previous = projected
    return signal, errors


@dataclass(frozen=True)
class StitchState:
    """Carry-over between streaming calls: per-bin phases plus the
    not-yet-emitted overlap tail of the synthesis window."""

    phases: np.ndarray
    buffer: np.ndarray
    hop: int = STITCH_HOP
    win: int = FRAME_LEN
    random_phase: bool = False
    seed: int = 0
    calls: int = 0

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=np.float64)
        buffer = np.asarray(self.buffer, dtype=np.float64)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "buffer", buffer)
        if phases.shape != (N_RDFT_BINS,):
            raise LengthMismatchError(f"state needs {N_RDFT_BINS} phases")
        if np.any(phases < 0.0) or np.any(phases >= 2.0 * np.pi):
            raise DomainError("phases must lie in [0, 2*pi)")
        if not 1 <= self.hop <= self.win or self.win % self.hop != 0:
            raise LengthMismatchError("hop must divide the window length")
        if self.win != FRAME_LEN:
            raise LengthMismatchError(f"synthesis window is fixed at {FRAME_LEN}")
        if buffer.shape != (self.win - self.hop,):
            raise LengthMismatchError("overlap buffer must hold win - hop samples")
        if not np.all(np.isfinite(buffer)):
            raise NonFiniteError("overlap buffer contains non-finite samples")


def init_stitch_state(seed: int = 0, hop: int = STITCH_HOP,
                      random_phase: bool = False) -> StitchState:
    """Fresh streaming state with seeded random starting phases."""
    rng = np.random.default_rng(seed)
    phases = _random_phases(rng, (N_RDFT_BINS,))
    return StitchState(
        phases=phases,
        buffer=np.zeros(FRAME_LEN - hop),
        hop=hop,
        random_phase=random_phase,
        seed=seed,
        calls=0,
    )


def stitch_streaming(frame: SpectralFrame, state: StitchState
                     ) -> tuple[np.ndarray, StitchState]:
    """Emit the next ``state.hop`` output samples for one predicted frame.

    The frame's band-limited magnitudes become sinusoids at the bin
    frequencies, windowed and overlap-added with the pending tail from the
    previous calls.  Output therefore depends only on frames seen so far.
    """
    win, hop = state.win, state.hop
    full = np.zeros(N_RDFT_BINS)
    full[:N_BINS] = frame.mags
    if state.random_phase:
        rng = np.random.default_rng(np.random.SeedSequence((state.seed, state.calls)))
        phases = _random_phases(rng, (N_RDFT_BINS,))
    else:
        phases = state.phases
    spectrum = full * np.exp(1j * phases)
    # predictions carry rectangular-window magnitudes, so the plain 1/N
    # inverse already lands at the right amplitude; the Hann taper is for
    # cross-fading only and its constant overlap sum is divided back out
    window = hann_periodic(win)
    cola_sum = win / (2.0 * hop)
    contribution = np.fft.irfft(spectrum, n=win) * window / cola_sum
    acc = contribution
    acc[: win - hop] += state.buffer
    block = acc[:hop].copy()
    advance = 2.0 * np.pi * np.arange(N_RDFT_BINS) * hop / win
    next_phases = np.mod(state.phases + advance, 2.0 * np.pi)
    next_state = StitchState(
        phases=next_phases,
        buffer=acc[hop:].copy(),
        hop=hop,
        win=win,
        random_phase=state.random_phase,
        seed=state.seed,
        calls=state.calls + 1,
    )
    return block, next_state


def stitch_sequence(frames: list[SpectralFrame], seed: int = 0,
                    hop: int = STITCH_HOP,
                    random_phase: bool = False) -> Signal:
    """Run the streaming stitcher over a whole frame sequence."""
    if len(frames) == 0:
        raise LengthMismatchError("stitching needs at least one frame")
    state = init_stitch_state(seed=seed, hop=hop, random_phase=random_phase)
    blocks = []
    for frame in frames:
        block, state = stitch_streaming(frame, state)
        blocks.append(block)
    return Signal(np.concatenate(blocks), SAMPLE_RATE_HZ)
