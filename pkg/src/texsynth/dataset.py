"""Recording ingestion, action preprocessing, the 25-section split protocol,
supervised example extraction, and the synthetic-texture generator.

Recording file layout (little-endian throughout), documented byte-exact:

====================  =======  ==============================================
offset                size     content
====================  =======  ==============================================
0                     12       magic ``b"TEXSYNTHREC\\x00"``
12                    4        uint32 format version (currently 1)
16                    4        uint32 channel count (always 3)
20                    8        uint64 samples per channel
28                    8        float64 sample rate in Hz
36                    8*n      force channel, float64
36 + 8n               8*n      speed channel, float64
36 + 16n              8*n      acceleration channel, float64
====================  =======  ==============================================

A UTF-8 JSON sidecar at ``<path>.json`` carries ``material_id`` and free-form
provenance.  A CSV import path (columns t, force, speed, accel) exists for
fixtures.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dsp
from .dsp import Signal, SpectralFrame
from .errors import (
    DomainError,
    FormatError,
    LengthMismatchError,
    NonFiniteError,
    VersionError,
)

RECORDING_MAGIC = b"TEXSYNTHREC\x00"
RECORDING_VERSION = 1
_HEADER = struct.Struct("<IQd")  # channel count, sample count, rate

SECTIONS = 25
VAL_SECTIONS = (2, 8, 14, 20)
TEST_SECTIONS = (5, 11, 17, 23)
ACTION_LEN = 10          # 1 ms of force/speed at 10 kHz
EXAMPLE_STRIDE = 100     # matches the evaluation hop
MIN_SECTION_LEN = 1100  # each section must fit at least one example, with slack


@dataclass(frozen=True)
class Recording:
    """Synchronized force/speed/acceleration streams for one material."""

    material_id: str
    force_n: Signal
    speed_mm_s: Signal
    accel_ms2: Signal

    def __post_init__(self):
        n = len(self.force_n)
        if len(self.speed_mm_s) != n or len(self.accel_ms2) != n:
            raise LengthMismatchError("force, speed and accel must share length")
        rates = {self.force_n.sample_rate_hz, self.speed_mm_s.sample_rate_hz,
                 self.accel_ms2.sample_rate_hz}
        if len(rates) != 1:
            raise LengthMismatchError("channels must share one sample rate")
        if np.any(self.force_n.samples < 0):
            raise DomainError("force must be non-negative")
        if np.any(self.speed_mm_s.samples < 0):
            raise DomainError("speed must be non-negative")

    def __len__(self) -> int:
        return len(self.force_n)

    @property
    def sample_rate_hz(self) -> float:
        return self.force_n.sample_rate_hz

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class SplitAssignment:
    """Deterministic train/val/test tag for each of the 25 sections."""

    labels: tuple[str, ...]
    section_len: int
    overlap_warning: bool = False

    def __post_init__(self):
        if len(self.labels) != SECTIONS:
            raise LengthMismatchError(f"expected {SECTIONS} section labels")
        counts = {tag: self.labels.count(tag) for tag in ("train", "val", "test")}
        if counts != {"train": 17, "val": 4, "test": 4}:
            raise DomainError(f"bad split counts {counts}")

    def sections(self, subset: str) -> list[tuple[int, int]]:
        """Sample ranges [start, end) of every section tagged ``subset``."""
        return [
            (i * self.section_len, (i + 1) * self.section_len)
            for i, tag in enumerate(self.labels)
            if tag == subset
        ]


@dataclass(frozen=True)
class ActionWindow:
    """1 ms of low-pass-filtered force and speed."""

    force: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        force = np.asarray(self.force, dtype=np.float64)
        speed = np.asarray(self.speed, dtype=np.float64)
        object.__setattr__(self, "force", force)
        object.__setattr__(self, "speed", speed)
        if force.shape != (ACTION_LEN,) or speed.shape != (ACTION_LEN,):
            raise LengthMismatchError(f"action window is {ACTION_LEN} samples per channel")
        if not (np.all(np.isfinite(force)) and np.all(np.isfinite(speed))):
            raise NonFiniteError("action window contains non-finite values")
        if np.any(force < 0) or np.any(speed < 0):
            raise DomainError("action values must be non-negative")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.speed])


@dataclass(frozen=True)
class TrainingExample:
    """One supervised pair: action immediately before a 100 ms target frame."""

    action: ActionWindow
    target: SpectralFrame
    material_id: str


# ---------------------------------------------------------------------------
# File I/O


def save_recording(rec: Recording, path: str | Path, provenance: str = "") -> Path:
    """Write a recording plus its JSON sidecar; returns the data path."""
    path = Path(path)
    n = len(rec)
    with open(path, "wb") as fh:
        fh.write(RECORDING_MAGIC)
        fh.write(struct.pack("<I", RECORDING_VERSION))
        fh.write(_HEADER.pack(3, n, rec.sample_rate_hz))
        fh.write(rec.force_n.samples.astype("<f8").tobytes())
        fh.write(rec.speed_mm_s.samples.astype("<f8").tobytes())
        fh.write(rec.accel_ms2.samples.astype("<f8").tobytes())
    sidecar = {"material_id": rec.material_id, "provenance": provenance}
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=1), encoding="utf-8"
    )
    return path


def load_recording(path: str | Path) -> Recording:
    """Read a recording file, validating layout, lengths and finiteness."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16 + _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    if blob[:12] != RECORDING_MAGIC:
        raise FormatError(f"{path}: bad magic, not a recording file")
    (version,) = struct.unpack_from("<I", blob, 12)
    if version != RECORDING_VERSION:
        raise VersionError(f"{path}: unsupported recording version {version}")
    channels, n, rate = _HEADER.unpack_from(blob, 16)
    if channels != 3:
        raise FormatError(f"{path}: expected 3 channels, descriptor says {channels}")
    body = blob[16 + _HEADER.size:]
    if len(body) != 3 * 8 * n:
        raise LengthMismatchError(
            f"{path}: descriptor promises {n} samples/channel, payload disagrees"
        )
    if rate != dsp.SAMPLE_RATE_HZ:
        raise FormatError(f"{path}: unsupported sample rate {rate}")
    raw = np.frombuffer(body, dtype="<f8")
    if not np.all(np.isfinite(raw)):
        raise NonFiniteError(f"{path}: non-finite samples in payload")
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise FormatError(f"{path}: missing metadata sidecar")
    meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    force, speed, accel = raw[:n], raw[n:2 * n], raw[2 * n:]
    return Recording(
        material_id=str(meta["material_id"]),
        force_n=Signal(force, rate),
        speed_mm_s=Signal(speed, rate),
        accel_ms2=Signal(accel, rate),
    )


def import_csv(path: str | Path, material_id: str) -> Recording:
    """Fixture import: CSV with header row and columns t, force, speed, accel."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    for col in ("t", "force", "speed", "accel"):
        if col not in (data.dtype.names or ()):
            raise FormatError(f"{path}: missing column {col!r}")
    dt = np.diff(data["t"])
    if dt.size == 0 or not np.allclose(dt, 1.0 / dsp.SAMPLE_RATE_HZ, rtol=1e-6):
        raise FormatError(f"{path}: time column is not uniform 10 kHz sampling")
    return Recording(
        material_id=material_id,
        force_n=Signal(np.asarray(data["force"], dtype=np.float64)),
        speed_mm_s=Signal(np.asarray(data["speed"], dtype=np.float64)),
        accel_ms2=Signal(np.asarray(data["accel"], dtype=np.float64)),
    )


# ---------------------------------------------------------------------------
# Preprocessing and splitting


def preprocess_actions(rec: Recording) -> Recording:
    """Low-pass force and speed at 20 Hz, clamped at zero; accel untouched."""
    force = np.maximum(dsp.lowpass_20hz(rec.force_n).samples, 0.0)
    speed = np.maximum(dsp.lowpass_20hz(rec.speed_mm_s).samples, 0.0)
    return replace(
        rec,
        force_n=Signal(force, rec.sample_rate_hz),
        speed_mm_s=Signal(speed, rec.sample_rate_hz),
    )


def split_sections(rec: Recording) -> SplitAssignment:
    """Fixed interleaved 17/4/4 section split with an action-overlap check.

    Sections 2/8/14/20 are validation and 5/11/17/23 are test (0-indexed);
    the remainder trains.  The warning flag is set when any val/test
    section's (mean force, mean speed) falls outside the bounding box of the
    train sections' points, i.e. when held-out actions are not covered by
    training actions.
    """
    if len(rec) < SECTIONS * MIN_SECTION_LEN:
        raise LengthMismatchError(
            f"recording too short to split: need {SECTIONS * MIN_SECTION_LEN} samples"
        )
    section_len = len(rec) // SECTIONS
    labels = tuple(
        "val" if i in VAL_SECTIONS else "test" if i in TEST_SECTIONS else "train"
        for i in range(SECTIONS)
    )

    means = np.empty((SECTIONS, 2))
    for i in range(SECTIONS):
        s = slice(i * section_len, (i + 1) * section_len)
        means[i, 0] = rec.force_n.samples[s].mean()
        means[i, 1] = rec.speed_mm_s.samples[s].mean()
    train_pts = means[[i for i in range(SECTIONS) if labels[i] == "train"]]
    lo, hi = train_pts.min(axis=0), train_pts.max(axis=0)
    held = means[[i for i in range(SECTIONS) if labels[i] != "train"]]
    warning = bool(np.any(held < lo) or np.any(held > hi))
    return SplitAssignment(labels=labels, section_len=section_len,
                           overlap_warning=warning)


def examples_per_section(section_len: int, stride: int = EXAMPLE_STRIDE) -> int:
    """Closed-form example count for one section."""
    usable = section_len - (ACTION_LEN + dsp.FRAME_LEN)
    return 0 if usable < 0 else usable // stride + 1


def extract_examples(rec: Recording, split: SplitAssignment,
                     subset: str) -> list[TrainingExample]:
    """Slide a (1 ms action, 100 ms target) template through ``subset`` sections.

    Anchors advance by ``EXAMPLE_STRIDE``; a window pair is kept only when
    both the action and the target lie entirely inside one section.
    """
    out: list[TrainingExample] = []
    force = rec.force_n.samples
    speed = rec.speed_mm_s.samples
    accel = rec.accel_ms2.samples
    for start, end in split.sections(subset):
        t = start + ACTION_LEN
        while t + dsp.FRAME_LEN <= end:
            action = ActionWindow(force[t - ACTION_LEN:t], speed[t - ACTION_LEN:t])
            target = dsp.mag_leq_1khz(
                dsp.rdft(accel[t:t + dsp.FRAME_LEN]), origin_index=t
            )
            out.append(TrainingExample(action, target, rec.material_id))
            t += EXAMPLE_STRIDE
    return out


# ---------------------------------------------------------------------------
# Synthetic-texture oracle


@dataclass(frozen=True)
class SyntheticTextureParams:
    """Ground-truth texture law for desk-scale experiments.

    Acceleration is a tone whose instantaneous frequency is
    ``spatial_freq_per_mm * speed`` (a rigid probe crossing surface ridges),
    with amplitude ``amp_gain * force**force_exponent``, an optional fixed
    resonance, and white measurement noise.
    """

    spatial_freq_per_mm: float
    amp_gain: float = 1.0
    force_exponent: float = 1.0
    noise_floor: float = 0.0
    resonance_hz: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.spatial_freq_per_mm > 0:
            raise DomainError("spatial_freq_per_mm must be positive")
        if not self.amp_gain > 0:
            raise DomainError("amp_gain must be positive")
        if self.noise_floor < 0:
            raise DomainError("noise_floor must be non-negative")
        if self.resonance_hz < 0:
            raise DomainError("resonance_hz must be non-negative")


RESONANCE_REL_AMP = 0.4  # resonance amplitude relative to the dominant tone


@dataclass(frozen=True)
class ActionScript:
    """Force and speed trajectories at 10 kHz driving a synthetic texture."""

    force: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        force = np.asarray(self.force, dtype=np.float64)
        speed = np.asarray(self.speed, dtype=np.float64)
        object.__setattr__(self, "force", force)
        object.__setattr__(self, "speed", speed)
        if force.shape != speed.shape or force.ndim != 1:
            raise LengthMismatchError("force and speed scripts must share 1-D shape")
        if np.any(force < 0) or np.any(speed < 0):
            raise DomainError("scripted force and speed must be non-negative")


def make_action_script(duration_s: float, seed: int,
                       force_range: tuple[float, float] = (0.5, 3.0),
                       speed_range: tuple[float, float] = (40.0, 260.0)) -> ActionScript:
    """Smooth seeded wandering of force and speed inside the given ranges.

    Each channel is a sum of slow sinusoids (0.05..0.6 Hz), so the action is
    already band-limited well below the 20 Hz preprocessing cutoff.
    """
    n = int(round(duration_s * dsp.SAMPLE_RATE_HZ))
    t = np.arange(n) / dsp.SAMPLE_RATE_HZ
    rng = np.random.default_rng(seed)

    def wander(lo: float, hi: float) -> np.ndarray:
        x = np.zeros(n)
        for _ in range(4):
            f = rng.uniform(0.05, 0.6)
            x += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        x = (x - x.min()) / max(x.max() - x.min(), 1e-12)
        return lo + (hi - lo) * x

    return ActionScript(force=wander(*force_range), speed=wander(*speed_range))


def generate_synthetic(params: SyntheticTextureParams, script: ActionScript,
                       material_id: str | None = None) -> Recording:
    """Render the texture law for one action script into a Recording."""
    max_speed = float(script.speed.max(initial=0.0))
    if params.spatial_freq_per_mm * max_speed > 1000.0 + 1e-9:
        raise DomainError(
            "dominant tone would leave the evaluated band: "
            f"spatial_freq * max_speed = {params.spatial_freq_per_mm * max_speed:.1f} Hz"
        )
    n = script.force.shape[0]
    dt = 1.0 / dsp.SAMPLE_RATE_HZ
    rng = np.random.default_rng(params.seed)

    amp = params.amp_gain * np.power(script.force, params.force_exponent)
    phase = 2.0 * np.pi * params.spatial_freq_per_mm * np.cumsum(script.speed) * dt
    accel = amp * np.sin(phase)
    if params.resonance_hz > 0:
        t = np.arange(n) * dt
        accel = accel + RESONANCE_REL_AMP * amp * np.sin(
            2.0 * np.pi * params.resonance_hz * t
        )
    if params.noise_floor > 0:
        accel = accel + rng.normal(0.0, params.noise_floor, n)

    if material_id is None:
        material_id = f"synthetic-{params.seed}"
    return Recording(
        material_id=material_id,
        force_n=Signal(script.force.copy()),
        speed_mm_s=Signal(script.speed.copy()),
        accel_ms2=Signal(accel),
    )
