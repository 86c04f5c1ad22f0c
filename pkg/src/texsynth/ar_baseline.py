"""Piecewise autoregressive baseline over the force-speed plane.

Training sections are partitioned into a force x speed grid; each cell with
enough samples gets its own Burg-fitted AR model anchored at the cell's
median action.  Synthesis walks the action stream, blends the three nearest
models in line-spectral-frequency space (inverse-distance weights), and
drives the blended all-pole filter with seeded white noise, carrying filter
state across coefficient refreshes.

Coefficient convention throughout: x[n] = sum_k a_k x[n-k] + e[n], so the
error filter is A(z) = 1 - sum_k a_k z^-k and stability means all roots of
A lie inside the unit circle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .container import read_container, write_container
from .dataset import Recording, SplitAssignment
from .dsp import SAMPLE_RATE_HZ, Signal
from .errors import DomainError, LengthMismatchError, NonFiniteError

DEFAULT_ORDER = 30
DEFAULT_GRID = (4, 4)
REFRESH_SAMPLES = 100
N_NEIGHBORS = 3

# reflection coefficients are clipped just inside the unit circle, which
# keeps every fitted filter strictly stable even on pathological segments
K_CLAMP = 1.0 - 1e-5


@dataclass(frozen=True)
class ArModel:
    """One all-pole model plus the action-space point it represents."""

    coeffs: np.ndarray            # a_1..a_p
    noise_std: float
    anchor: tuple[float, float]   # (median force N, median speed mm/s)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        object.__setattr__(self, "coeffs", coeffs)
        if coeffs.ndim != 1 or coeffs.shape[0] < 1:
            raise LengthMismatchError("AR coefficients must be a 1-D vector")
        if not np.all(np.isfinite(coeffs)) or not np.isfinite(self.noise_std):
            raise NonFiniteError("AR model contains non-finite values")
        if self.noise_std < 0:
            raise DomainError("noise_std must be non-negative")

    @property
    def order(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class ArBank:
    """All models for one material plus the ranges used for distances."""

    models: tuple[ArModel, ...]
    force_range: tuple[float, float]
    speed_range: tuple[float, float]
    material_id: str = ""

    def __post_init__(self):
        if len(self.models) < 1:
            raise DomainError("an AR bank needs at least one model")
        orders = {m.order for m in self.models}
        if len(orders) != 1:
            raise LengthMismatchError("all models in a bank must share one order")
        anchors = {m.anchor for m in self.models}
        if len(anchors) != len(self.models):
            raise DomainError("bank anchors must be distinct")

    @property
    def order(self) -> int:
        return self.models[0].order


# ---------------------------------------------------------------------------
# Burg fitting


def _burg(segments: list[np.ndarray], p: int):
    """Burg recursion pooled over independent segments.

    Reflection coefficients are estimated from forward/backward errors
    summed across segments (no products ever straddle a segment boundary),
    so scattered runs of samples from one stationary regime can be fitted
    jointly.  Returns (a_1..a_p, noise_std).
    """
    total = sum(s.shape[0] for s in segments)
    if p < 1:
        raise DomainError("AR order must be >= 1")
    if total < 10 * p:
        raise LengthMismatchError(
            f"need at least {10 * p} samples to fit order {p}, got {total}"
        )
    fs = [s.astype(np.float64).copy() for s in segments]
    bs = [s.astype(np.float64).copy() for s in segments]
    energy = sum(float(np.dot(s, s)) for s in fs) / total
    # c holds the error-filter tail: A(z) = 1 + sum c_j z^-j
    c = np.zeros(0)
    for m in range(p):
        num = 0.0
        den = 0.0
        for f, b in zip(fs, bs):
            n = f.shape[0]
            if n <= m + 1:
                continue
            num += float(np.dot(f[m + 1:], b[m:-1]))
            den += float(np.dot(f[m + 1:], f[m + 1:])
                         + np.dot(b[m:-1], b[m:-1]))
        if den < 1e-300:
            k = 0.0
        else:
            k = float(np.clip(-2.0 * num / den, -K_CLAMP, K_CLAMP))
        c = np.concatenate([c + k * c[::-1], [k]])
        for f, b in zip(fs, bs):
            n = f.shape[0]
            if n <= m + 1:
                continue
            f_prev = f[m + 1:].copy()
            b_prev = b[m:-1].copy()
            f[m + 1:] = f_prev + k * b_prev
            b[m + 1:] = b_prev + k * f_prev  # backward window shifts right
        energy *= 1.0 - k * k
    return -c, float(np.sqrt(max(energy, 0.0)))


def fit_ar(segment: np.ndarray, p: int,
           anchor: tuple[float, float] = (0.0, 0.0)) -> ArModel:
    """Burg fit of one contiguous segment."""
    segment = np.asarray(segment, dtype=np.float64)
    if segment.ndim != 1:
        raise LengthMismatchError("fit_ar takes a 1-D sample vector")
    if not np.all(np.isfinite(segment)):
        raise NonFiniteError("segment contains non-finite samples")
    coeffs, noise_std = _burg([segment], p)
    return ArModel(coeffs=coeffs, noise_std=noise_std, anchor=anchor)


def fit_ar_segments(segments: list[np.ndarray], p: int,
                    anchor: tuple[float, float] = (0.0, 0.0)) -> ArModel:
    """Burg fit pooled over several non-adjacent segments of one regime."""
    cleaned = []
    for s in segments:
        s = np.asarray(s, dtype=np.float64)
        if s.ndim != 1:
            raise LengthMismatchError("each segment must be a 1-D vector")
        if not np.all(np.isfinite(s)):
            raise NonFiniteError("segment contains non-finite samples")
        if s.shape[0] > 0:
            cleaned.append(s)
    if not cleaned:
        raise LengthMismatchError("no samples to fit")
    coeffs, noise_std = _burg(cleaned, p)
    return ArModel(coeffs=coeffs, noise_std=noise_std, anchor=anchor)


def ar_poles(coeffs: np.ndarray) -> np.ndarray:
    """Roots of A(z) = 1 - sum a_k z^-k (stable iff all inside unit circle)."""
    return np.roots(np.concatenate([[1.0], -np.asarray(coeffs)]))


# ---------------------------------------------------------------------------
# Line spectral frequencies
#
# For the error filter A(z) of even order p, form
#   P(z) = A(z) + z^-(p+1) A(1/z),   Q(z) = A(z) - z^-(p+1) A(1/z).
# P has a root at z = -1 and Q at z = +1; dividing those out leaves two
# palindromic polynomials of degree p whose unit-circle roots interlace.
# The p angles in (0, pi), sorted ascending, are the LSF vector; convexly
# combining sorted LSF vectors keeps them sorted, hence stable filters.


def _deflate(poly: np.ndarray, root_at: float) -> np.ndarray:
    """Exact synthetic division by (1 - root_at * z^-1) for root_at = +-1."""
    out = np.empty(poly.shape[0] - 1)
    acc = 0.0
    for i in range(out.shape[0]):
        acc = poly[i] + root_at * acc
        out[i] = acc
    return out


def _cos_series(pal: np.ndarray) -> np.ndarray:
    """Coefficients g_0..g_m with R(e^{iw}) = e^{-imw} * sum g_j cos(jw)."""
    m = (pal.shape[0] - 1) // 2
    g = np.empty(m + 1)
    g[0] = pal[m]
    for j in range(1, m + 1):
        g[j] = 2.0 * pal[m - j]
    return g


def _cos_roots(g: np.ndarray, m: int) -> np.ndarray:
    """The m roots in (0, pi) of sum g_j cos(j*w), by grid scan + bisection."""
    def val(w):
        return sum(gj * np.cos(j * w) for j, gj in enumerate(g))

    grid_n = 4096
    for _ in range(4):
        w = np.linspace(0.0, np.pi, grid_n)
        v = np.cos(np.outer(w, np.arange(g.shape[0]))) @ g
        sign_flips = np.nonzero(np.diff(np.signbit(v)))[0]
        if sign_flips.shape[0] >= m:
            break
        grid_n *= 4
    if sign_flips.shape[0] != m:
        raise NonFiniteError(
            f"expected {m} line spectral roots, found {sign_flips.shape[0]}"
        )
    roots = np.empty(m)
    for i, idx in enumerate(sign_flips):
        lo, hi = w[idx], w[idx + 1]
        flo = val(lo)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fmid = val(mid)
            if (flo < 0) == (fmid < 0):
                lo, flo = mid, fmid
            else:
                hi = mid
            if hi - lo < 1e-14:
                break
        roots[i] = 0.5 * (lo + hi)
    return roots


def ar_to_lsf(coeffs: np.ndarray) -> np.ndarray:
    """Sorted LSF vector (p angles in (0, pi)) of a stable AR model."""
    a = np.asarray(coeffs, dtype=np.float64)
    p = a.shape[0]
    if p % 2 != 0:
        raise DomainError("LSF conversion here requires an even AR order")
    err = np.concatenate([[1.0], -a, [0.0]])      # A(z) padded to degree p+1
    P = err + err[::-1]
    Q = err - err[::-1]
    Pd = _deflate(P, -1.0)    # divide by (1 + z^-1)
    Qd = _deflate(Q, 1.0)     # divide by (1 - z^-1)
    wp = _cos_roots(_cos_series(Pd), p // 2)
    wq = _cos_roots(_cos_series(Qd), p // 2)
    return np.sort(np.concatenate([wp, wq]))


def lsf_to_ar(lsf: np.ndarray) -> np.ndarray:
    """Inverse of :func:`ar_to_lsf`; input must be sorted inside (0, pi).

    Ascending LSFs alternate between the two deflated polynomials, the
    smallest interior root belonging to the P branch (Q already owns the
    boundary root at z = +1 that deflation removed).
    """
    lsf = np.asarray(lsf, dtype=np.float64)
    p = lsf.shape[0]
    if p % 2 != 0:
        raise DomainError("LSF vector length must be even")
    if np.any(np.diff(lsf) <= 0) or lsf[0] <= 0 or lsf[-1] >= np.pi:
        raise DomainError("LSF vector must be strictly increasing in (0, pi)")
    wp = lsf[0::2]
    wq = lsf[1::2]

    def expand(ws):
        poly = np.array([1.0])
        for w in ws:
            poly = np.convolve(poly, [1.0, -2.0 * np.cos(w), 1.0])
        return poly

    P = np.convolve(expand(wp), [1.0, 1.0])
    Q = np.convolve(expand(wq), [1.0, -1.0])
    err = 0.5 * (P + Q)       # degree p+1 with a structurally zero tail
    return -err[1:p + 1]


# ---------------------------------------------------------------------------
# Bank construction


def build_bank(rec: Recording, split: SplitAssignment, p: int = DEFAULT_ORDER,
               grid: tuple[int, int] = DEFAULT_GRID) -> ArBank:
    """Grid-partitioned Burg fits over the train+val sections.

    Cell membership is decided per sample from the preprocessed force and
    speed; each cell pools its contiguous runs into one multi-segment fit
    and cells with fewer than 10*p samples are skipped.
    """
    gf, gs = grid
    if gf < 1 or gs < 1:
        raise DomainError("grid must be at least 1 x 1")
    ranges = list(split.sections("train")) + list(split.sections("val"))
    used = np.zeros(len(rec), dtype=bool)
    for start, end in ranges:
        used[start:end] = True
    force = rec.force_n.samples
    speed = rec.speed_mm_s.samples
    accel = rec.accel_ms2.samples

    f_lo, f_hi = float(force[used].min()), float(force[used].max())
    s_lo, s_hi = float(speed[used].min()), float(speed[used].max())

    def bin_of(values, lo, hi, n):
        if hi <= lo:
            return np.zeros(values.shape[0], dtype=np.int64)
        idx = ((values - lo) / (hi - lo) * n).astype(np.int64)
        return np.clip(idx, 0, n - 1)

    cell = bin_of(force, f_lo, f_hi, gf) * gs + bin_of(speed, s_lo, s_hi, gs)
    cell[~used] = -1

    # maximal runs of identical cell labels give the fit segments
    boundaries = np.nonzero(np.diff(cell))[0] + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(rec)]])

    segments: dict[int, list[np.ndarray]] = {}
    members: dict[int, list[np.ndarray]] = {}
    for st, en in zip(starts, ends):
        label = int(cell[st])
        if label < 0:
            continue
        segments.setdefault(label, []).append(accel[st:en])
        members.setdefault(label, []).append(np.arange(st, en))

    models = []
    for label in sorted(segments):
        segs = segments[label]
        if sum(s.shape[0] for s in segs) < 10 * p:
            continue
        idx = np.concatenate(members[label])
        anchor = (float(np.median(force[idx])), float(np.median(speed[idx])))
        models.append(fit_ar_segments(segs, p, anchor=anchor))
    if not models:
        raise DomainError("no grid cell holds enough samples for the AR order")
    return ArBank(models=tuple(models), force_range=(f_lo, f_hi),
                  speed_range=(s_lo, s_hi), material_id=rec.material_id)


# ---------------------------------------------------------------------------
# Synthesis


def _blend(bank: ArBank, force: float, speed: float,
           lsfs: list[np.ndarray]):
    f_span = max(bank.force_range[1] - bank.force_range[0], 1e-12)
    s_span = max(bank.speed_range[1] - bank.speed_range[0], 1e-12)
    d = np.array([
        np.hypot((force - m.anchor[0]) / f_span, (speed - m.anchor[1]) / s_span)
        for m in bank.models
    ])
    k = min(N_NEIGHBORS, d.shape[0])
    near = np.argpartition(d, k - 1)[:k]
    if d[near].min() < 1e-12:
        chosen = bank.models[int(near[np.argmin(d[near])])]
        return chosen.coeffs.copy(), chosen.noise_std
    w = 1.0 / d[near]
    w /= w.sum()
    lsf = np.zeros(bank.order)
    noise = 0.0
    for wi, mi in zip(w, near):
        lsf += wi * lsfs[int(mi)]
        noise += wi * bank.models[int(mi)].noise_std
    return lsf_to_ar(lsf), noise


def interpolate_models(bank: ArBank, force: float, speed: float):
    """Blend the <=3 nearest models in LSF space; returns (coeffs, noise_std)."""
    return _blend(bank, force, speed,
                  [ar_to_lsf(m.coeffs) for m in bank.models])


def synthesize(bank: ArBank, force: np.ndarray, speed: np.ndarray, seed: int,
               refresh: int = REFRESH_SAMPLES) -> Signal:
    """Noise-driven piecewise-AR synthesis along an action stream.

    Model coefficients are re-interpolated every ``refresh`` samples
    (refresh=1 gives continuous interpolation); the all-pole filter state is
    carried across refreshes so the output has no block seams.
    """
    force = np.asarray(force, dtype=np.float64)
    speed = np.asarray(speed, dtype=np.float64)
    if force.shape != speed.shape or force.ndim != 1:
        raise LengthMismatchError("force and speed streams must share 1-D shape")
    if refresh < 1:
        raise DomainError("refresh interval must be >= 1")
    n = force.shape[0]
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    state = np.zeros(bank.order)
    # LSFs depend only on the bank, so hoist them out of the refresh loop
    lsfs = [ar_to_lsf(m.coeffs) for m in bank.models]
    for t0 in range(0, n, refresh):
        t1 = min(t0 + refresh, n)
        coeffs, noise_std = _blend(
            bank, float(force[t0]), float(speed[t0]), lsfs)
        drive = rng.standard_normal(t1 - t0) * noise_std
        den = np.concatenate([[1.0], -coeffs])
        out[t0:t1], state = lfilter([1.0], den, drive, zi=state)
    return Signal(out, SAMPLE_RATE_HZ)


# ---------------------------------------------------------------------------
# Persistence


def save_bank(bank: ArBank, path) -> None:
    arrays = {
        "coeffs": np.stack([m.coeffs for m in bank.models]),
        "noise_std": np.array([m.noise_std for m in bank.models]),
        "anchors": np.array([m.anchor for m in bank.models]),
    }
    meta = {
        "material_id": bank.material_id,
        "order": bank.order,
        "force_range": list(bank.force_range),
        "speed_range": list(bank.speed_range),
    }
    write_container(path, "ar_bank", meta, arrays)


def load_bank(path) -> ArBank:
    meta, arrays = read_container(path, "ar_bank")
    models = tuple(
        ArModel(coeffs=c, noise_std=float(s), anchor=(float(a[0]), float(a[1])))
        for c, s, a in zip(arrays["coeffs"], arrays["noise_std"],
                           arrays["anchors"])
    )
    return ArBank(
        models=models,
        force_range=tuple(meta["force_range"]),
        speed_range=tuple(meta["speed_range"]),
        material_id=meta["material_id"],
    )
