"""Texture representations from press-image sequences.

Covers press-frame selection and dihedral augmentation, the handcrafted
128-dim image descriptor (64 gradient orientation/magnitude histogram bins +
64 radial spectrum energy bins), the per-material embedding table, and the
dispatch into the learned texture-encoder head.

Press sequences live on disk as a directory of ``frame_0000.pgm``-style
binary PGM files; frame 0 is the designated non-contact reference.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    FormatError,
    LengthMismatchError,
    NonFiniteError,
    UnknownMaterialError,
)

DESCRIPTOR_DIM = 128
CODE_DIM = 256
N_ORI_BINS = 8
N_MAG_BINS = 8
N_RADIAL_BINS = 64

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class PressSequence:
    """Ordered grayscale frames of one press; frame 0 is non-contact."""

    frames: tuple[np.ndarray, ...]
    material_id: str

    def __post_init__(self):
        if len(self.frames) < 2:
            raise LengthMismatchError("a press sequence needs >= 2 frames")
        shape = self.frames[0].shape
        for f in self.frames:
            if f.shape != shape or f.ndim != 2:
                raise LengthMismatchError("all frames must share one 2-D shape")


@dataclass(frozen=True)
class ImageDescriptor:
    """L2-normalized 128-dim handcrafted texture feature."""

    features: np.ndarray
    low_texture: bool = False

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", feats)
        if feats.shape != (DESCRIPTOR_DIM,):
            raise LengthMismatchError(f"descriptor must have {DESCRIPTOR_DIM} entries")
        if not np.all(np.isfinite(feats)):
            raise NonFiniteError("descriptor contains non-finite values")


@dataclass(frozen=True)
class TextureCode:
    """256-dim latent texture representation."""

    code: np.ndarray

    def __post_init__(self):
        code = np.asarray(self.code, dtype=np.float64)
        object.__setattr__(self, "code", code)
        if code.shape != (CODE_DIM,):
            raise LengthMismatchError(f"texture code must have {CODE_DIM} entries")
        if not np.all(np.isfinite(code)):
            raise NonFiniteError("texture code contains non-finite values")


class EmbeddingTable:
    """Read-only material-id -> code table for the known-material path."""

    def __init__(self, material_ids: list[str], codes: np.ndarray):
        codes = np.asarray(codes, dtype=np.float64)
        if codes.shape != (len(material_ids), CODE_DIM):
            raise LengthMismatchError("embedding table shape mismatch")
        if len(set(material_ids)) != len(material_ids):
            raise DomainError("duplicate material ids in embedding table")
        self.material_ids = list(material_ids)
        self.codes = codes
        self._index = {m: i for i, m in enumerate(material_ids)}

    def index_of(self, material_id: str) -> int:
        try:
            return self._index[material_id]
        except KeyError:
            raise UnknownMaterialError(f"material {material_id!r} not in table") from None

    def lookup(self, material_id: str) -> TextureCode:
        return TextureCode(self.codes[self.index_of(material_id)].copy())


# ---------------------------------------------------------------------------
# PGM I/O


def read_pgm(path: str | Path) -> np.ndarray:
    """Binary (P5) 8-bit PGM reader."""
    blob = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: only binary P5 PGM is supported")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise LengthMismatchError(f"{path}: pixel payload shorter than header promises")
    return pixels.reshape(height, width).copy()


def write_pgm(path: str | Path, image: np.ndarray) -> Path:
    path = Path(path)
    img = np.asarray(image)
    if img.ndim != 2:
        raise LengthMismatchError("PGM writer takes a 2-D grayscale image")
    img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + img.tobytes())
    return path


_FRAME_RE = re.compile(r"frame_(\d+)\.pgm$")


def load_press_sequence(directory: str | Path, material_id: str | None = None) -> PressSequence:
    """Load ``frame_NNNN.pgm`` files in numeric order; frame 0 is non-contact."""
    directory = Path(directory)
    found = []
    for p in directory.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    if not found:
        raise FormatError(f"{directory}: no frame_*.pgm files")
    found.sort()
    frames = tuple(read_pgm(p) for _, p in found)
    return PressSequence(frames=frames, material_id=material_id or directory.name)


# ---------------------------------------------------------------------------
# Frame selection and augmentation


def rgb_to_gray(image: np.ndarray) -> np.ndarray:
    """Luminance conversion for H x W x 3 inputs; grayscale passes through."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ GRAY_WEIGHTS
    if img.ndim == 2:
        return img
    raise LengthMismatchError("expected H x W or H x W x 3 image")


def select_press_index(seq: PressSequence) -> int:
    """Index of the frame with the largest L1 distance to the non-contact frame.

    The reference frame itself is never returned; ties resolve to the
    earliest candidate.
    """
    ref = seq.frames[0].astype(np.int64)
    diffs = [
        int(np.sum(np.abs(f.astype(np.int64) - ref))) for f in seq.frames[1:]
    ]
    return 1 + int(np.argmax(diffs))


def select_press_frame(seq: PressSequence) -> np.ndarray:
    return seq.frames[select_press_index(seq)]


def press_training_frames(seq: PressSequence) -> list[np.ndarray]:
    """Peak frame plus its immediate neighbours (clipped to contact frames)."""
    peak = select_press_index(seq)
    lo = max(1, peak - 1)
    hi = min(len(seq.frames) - 1, peak + 1)
    return [seq.frames[i] for i in range(lo, hi + 1)]


def center_square_crop(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    s = min(h, w)
    r0 = (h - s) // 2
    c0 = (w - s) // 2
    return image[r0:r0 + s, c0:c0 + s]


def augment(image: np.ndarray) -> list[np.ndarray]:
    """The 8 dihedral variants of the center square crop.

    Order: rotations 0/90/180/270 of the identity, then of the horizontal
    mirror.  All 8 are returned even when symmetry makes some pixel-equal.
    """
    base = center_square_crop(np.asarray(image))
    out = []
    for flipped in (base, np.fliplr(base)):
        for k in range(4):
            out.append(np.ascontiguousarray(np.rot90(flipped, k)))
    return out


# ---------------------------------------------------------------------------
# Handcrafted descriptor


def describe(image: np.ndarray) -> ImageDescriptor:
    """Deterministic 128-dim descriptor of a grayscale texture image.

    First 64 entries: 8 orientation x 8 log-magnitude gradient histogram
    (orientation-major), which is invariant to global brightness offsets and
    permutes cleanly under 90-degree rotations.  Last 64: radial spectrum
    energies, DC excluded.  Each half is normalized to unit length, the
    concatenation to unit length again; an all-constant image yields the
    zero descriptor with the low-texture flag set.
    """
    img = rgb_to_gray(image)
    if img.shape[0] < 64 or img.shape[1] < 64:
        raise LengthMismatchError("descriptor needs at least a 64 x 64 image")

    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    max_mag = mag.max()

    hist = np.zeros((N_ORI_BINS, N_MAG_BINS))
    if max_mag > 1e-12:
        mask = mag > 1e-12 * max_mag
        ang = np.arctan2(gy[mask], gx[mask]) % np.pi
        ori_bin = np.minimum((ang / (np.pi / N_ORI_BINS)).astype(np.int64),
                             N_ORI_BINS - 1)
        # log2 bands below the peak magnitude: >= max/2 in the top bin,
        # < max/128 in the bottom one
        ratio = mag[mask] / max_mag
        mag_bin = np.clip(np.floor(np.log2(ratio)) + N_MAG_BINS, 0,
                          N_MAG_BINS - 1).astype(np.int64)
        np.add.at(hist, (ori_bin, mag_bin), mag[mask])

    spectrum = np.fft.fft2(img - img.mean())
    power = np.abs(spectrum) ** 2
    fy = np.fft.fftfreq(img.shape[0])
    fx = np.fft.fftfreq(img.shape[1])
    radius = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2) / np.sqrt(0.5)
    r_bin = np.minimum((radius * N_RADIAL_BINS).astype(np.int64), N_RADIAL_BINS - 1)
    radial = np.zeros(N_RADIAL_BINS)
    nonzero = radius > 0
    np.add.at(radial, r_bin[nonzero], power[nonzero])
    radial = np.sqrt(radial)

    hist_flat = hist.reshape(-1)
    hn = np.linalg.norm(hist_flat)
    rn = np.linalg.norm(radial)
    if hn < 1e-300 and rn < 1e-300:
        return ImageDescriptor(np.zeros(DESCRIPTOR_DIM), low_texture=True)
    halves = np.concatenate([
        hist_flat / hn if hn > 0 else hist_flat,
        radial / rn if rn > 0 else radial,
    ])
    return ImageDescriptor(halves / np.linalg.norm(halves))


def encode_texture(source, mode: str, model) -> TextureCode:
    """Produce the 256-dim texture code.

    ``embedding`` mode looks ``source`` (a material id) up in the model's
    trained table; ``descriptor`` mode runs an :class:`ImageDescriptor`
    through the learned texture-encoder head (the novel-material path).
    """
    if mode == "embedding":
        if not isinstance(source, str):
            raise DomainError("embedding mode takes a material id")
        return model.embedding_table().lookup(source)
    if mode == "descriptor":
        if not isinstance(source, ImageDescriptor):
            raise DomainError("descriptor mode takes an ImageDescriptor")
        return TextureCode(model.encode_descriptor(source.features))
    raise DomainError(f"unknown texture-code mode {mode!r}")


# ---------------------------------------------------------------------------
# Synthetic press imagery (desk-scale stand-in for real sensor videos)


def synthetic_press_sequence(spatial_freq_per_mm: float, seed: int,
                             material_id: str = "synthetic", size: int = 96,
                             n_frames: int = 6) -> PressSequence:
    """Procedural press video: an oriented ridge pattern fading in.

    The ridge spatial frequency follows the texture's dominant ridge density,
    so descriptor-path models see imagery correlated with the vibration the
    texture law produces.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    theta = rng.uniform(0, np.pi)
    # map ridges/mm to image cycles assuming a 10 mm square field of view
    cycles = spatial_freq_per_mm * 10.0
    carrier = np.sin(
        2 * np.pi * cycles * (np.cos(theta) * xx + np.sin(theta) * yy) / size
        + rng.uniform(0, 2 * np.pi)
    )
    grain = rng.normal(0, 0.2, (size, size))
    frames = [np.full((size, size), 128.0)]
    for i in range(1, n_frames):
        contact = i / (n_frames - 1)
        img = 128.0 + 60.0 * contact * carrier + 25.0 * contact * grain
        frames.append(img)
    return PressSequence(
        frames=tuple(np.clip(np.round(f), 0, 255).astype(np.uint8) for f in frames),
        material_id=material_id,
    )
