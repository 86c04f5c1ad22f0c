"""Quantitative comparison harness.

Measures how closely a synthesized acceleration signal tracks a recorded
one (short-time spectral distance), runs the per-material neural-vs-AR
shootout with win counts and quartiles, and exports learned texture codes
for external visualization.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dsp
from .ar_baseline import ArBank, synthesize
from .dataset import ACTION_LEN, ActionWindow, Recording
from .errors import DomainError, LengthMismatchError, UnknownMaterialError
from .neural import ModelParams, forward
from .reconstruct import GlaConfig, full_band_targets, gla_reconstruct, stitch_sequence
from .texture_repr import TextureCode, encode_texture

EVAL_WIN = dsp.FRAME_LEN
EVAL_HOP = 100
# a Hann window sums to half the rectangular one, so rectangular-convention
# predicted magnitudes shrink by this factor before phase retrieval
RECT_TO_HANN = 0.5
# WOLA edges have partial window coverage; both reconstruction routes are
# scored on the interior beyond this margin
EDGE_TRIM = 1000

CONDITIONS = ("gla", "frames", "stitch")

SUMMARY_SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "material_id",
    "runs",
    "ar_mean_distance",
    "nn_mean_distance",
    "delta",
    "ar_q25_windows",
    "ar_median_windows",
    "ar_q75_windows",
    "nn_q25_windows",
    "nn_median_windows",
    "nn_q75_windows",
    "ar_q25_runs",
    "ar_median_runs",
    "ar_q75_runs",
    "error",
]


@dataclass(frozen=True)
class SpectralDistanceReport:
    """Per-window spectral distances plus their summary statistics."""

    distances: np.ndarray
    mean: float
    median: float
    q25: float
    q75: float

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        object.__setattr__(self, "distances", d)
        if np.any(d < 0):
            raise DomainError("distances are norms and cannot be negative")
        if not self.q25 <= self.median <= self.q75:
            raise DomainError("quantiles out of order")


def _report(distances: np.ndarray) -> SpectralDistanceReport:
    d = np.asarray(distances, dtype=np.float64)
    return SpectralDistanceReport(
        distances=d,
        mean=float(np.mean(d)),
        median=float(np.median(d)),
        q25=float(np.percentile(d, 25)),
        q75=float(np.percentile(d, 75)),
    )


def spectral_distance(pred: dsp.Signal, truth: dsp.Signal) -> SpectralDistanceReport:
    """Euclidean distance between band-limited magnitude spectra of the two
    signals, over 1000-sample windows hopped by 100."""
    if len(pred) != len(truth):
        raise LengthMismatchError("signals must have equal length")
    if len(pred) < EVAL_WIN:
        raise LengthMismatchError(f"signals must span at least {EVAL_WIN} samples")
    for sig in (pred, truth):
        if sig.sample_rate_hz != dsp.SAMPLE_RATE_HZ:
            raise DomainError("distance is defined at the 10 kHz capture rate")
    a = np.stack([f.mags for f in dsp.stft_mag(pred, hop=EVAL_HOP)])
    b = np.stack([f.mags for f in dsp.stft_mag(truth, hop=EVAL_HOP)])
    return _report(np.linalg.norm(a - b, axis=1))


@dataclass(frozen=True)
class ComparisonRow:
    """One material's AR-vs-NN outcome; positive delta favors the NN."""

    material_id: str
    ar_mean_distance: float
    nn_mean_distance: float
    delta: float
    runs: int
    ar_windows_q: tuple[float, float, float] | None = None
    nn_windows_q: tuple[float, float, float] | None = None
    ar_runs_q: tuple[float, float, float] | None = None
    error: str = ""

    def __post_init__(self):
        if self.runs < 1:
            raise DomainError("comparison needs at least one run")


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    win_count: int
    condition: str
    runs: int
    seed: int


def _sub_seed(seed: int, material_index: int, run: int) -> int:
    # run 0 tags the neural route, AR runs start at 1
    seq = np.random.SeedSequence((seed, material_index, run))
    return int(seq.generate_state(1)[0])


def _resolve_code(model: ModelParams, material_id: str,
                  codes: dict[str, TextureCode] | None) -> TextureCode | None:
    if model.mode == "action_only":
        return None
    if model.mode == "embedding":
        return encode_texture(material_id, "embedding", model)
    if codes is None or material_id not in codes:
        raise UnknownMaterialError(
            f"descriptor-mode comparison needs a code for {material_id!r}"
        )
    return codes[material_id]


def _predict_frames(model: ModelParams, rec: Recording,
                    code: TextureCode | None) -> list[dsp.SpectralFrame]:
    """One predicted frame per window start t = 100, 200, ...; each uses the
    preceding 1 ms of action, matching the training pairing."""
    force = rec.force_n.samples
    speed = rec.speed_mm_s.samples
    frames = []
    t = EVAL_HOP
    while t + EVAL_WIN <= len(force):
        action = ActionWindow(force[t - ACTION_LEN:t], speed[t - ACTION_LEN:t])
        frames.append(forward(action, code, model))
        t += EVAL_HOP
    return frames


def _nn_distances(frames: list[dsp.SpectralFrame], truth: np.ndarray,
                  condition: str, seed: int,
                  gla_iterations: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Distances for the NN route plus the truth slice [lo, hi) it covered.

    ``truth`` is already trimmed to start at the first predicted window, so
    frame k lines up with truth[k*hop : k*hop + win].
    """
    if condition == "frames":
        ref = np.stack([f.mags for f in dsp.stft_mag(dsp.Signal(truth), hop=EVAL_HOP)])
        pred = np.stack([f.mags for f in frames])[: ref.shape[0]]
        return np.linalg.norm(pred - ref[: pred.shape[0]], axis=1), (0, len(truth))
    if condition == "gla":
        targets = full_band_targets(frames) * RECT_TO_HANN
        cfg = GlaConfig(iterations=gla_iterations, hop=EVAL_HOP, phase_seed=seed)
        signal, _ = gla_reconstruct(targets, cfg)
        hi = min(len(signal), len(truth)) - EDGE_TRIM
        lo = EDGE_TRIM
    elif condition == "stitch":
        signal = stitch_sequence(frames, seed=seed, hop=EVAL_HOP)
        hi = min(len(signal), len(truth))
        lo = EDGE_TRIM
    else:
        raise DomainError(f"unknown comparison condition {condition!r}")
    report = spectral_distance(dsp.Signal(signal.samples[lo:hi]),
                               dsp.Signal(truth[lo:hi]))
    return report.distances, (lo, hi)


def _compare_one(material_id: str, material_index: int, model: ModelParams,
                 bank: ArBank, rec: Recording, runs: int, seed: int,
                 condition: str, codes: dict[str, TextureCode] | None,
                 gla_iterations: int) -> ComparisonRow:
    code = _resolve_code(model, material_id, codes)
    frames = _predict_frames(model, rec, code)
    if len(frames) < 2:
        raise LengthMismatchError("recording too short to compare")
    # truth re-based so that predicted frame k starts at sample k*hop
    truth = rec.accel_ms2.samples[EVAL_HOP:]
    nn_dist, (lo, hi) = _nn_distances(frames, truth, condition,
                                      _sub_seed(seed, material_index, 0),
                                      gla_iterations)

    force = rec.force_n.samples[EVAL_HOP:]
    speed = rec.speed_mm_s.samples[EVAL_HOP:]
    ar_windows = []
    run_means = []
    for j in range(runs):
        out = synthesize(bank, force, speed,
                         seed=_sub_seed(seed, material_index, j + 1))
        rep = spectral_distance(dsp.Signal(out.samples[lo:hi]),
                                dsp.Signal(truth[lo:hi]))
        ar_windows.append(rep.distances)
        run_means.append(rep.mean)
    pooled = np.concatenate(ar_windows)
    ar_mean = float(np.mean(pooled))
    nn_mean = float(np.mean(nn_dist))

    def _q(v):
        return (float(np.percentile(v, 25)), float(np.median(v)),
                float(np.percentile(v, 75)))

    return ComparisonRow(
        material_id=material_id,
        ar_mean_distance=ar_mean,
        nn_mean_distance=nn_mean,
        delta=ar_mean - nn_mean,
        runs=runs,
        ar_windows_q=_q(pooled),
        nn_windows_q=_q(nn_dist),
        ar_runs_q=_q(np.asarray(run_means)),
    )


def compare(materials, nn_model: ModelParams | None,
            ar_banks: dict[str, ArBank], recordings: dict[str, Recording],
            runs: int = 10, seed: int = 0, condition: str = "gla",
            codes: dict[str, TextureCode] | None = None,
            gla_iterations: int = 100, max_workers: int = 4) -> ComparisonReport:
    """Per-material AR-baseline vs neural comparison.

    The AR route is synthesized ``runs`` times with distinct sub-seeds; the
    neural prediction is computed once (it is deterministic).  ``condition``
    picks how the neural frames are scored: "gla" reconstructs offline,
    "stitch" uses the streaming overlap-add, "frames" scores the raw
    magnitude predictions.  A missing model, bank or recording produces an
    error row and the remaining materials still run.
    """
    if runs < 1:
        raise DomainError("comparison needs at least one run")
    if condition not in CONDITIONS:
        raise DomainError(f"unknown comparison condition {condition!r}")
    materials = list(materials)

    def work(item):
        index, material_id = item
        try:
            if nn_model is None:
                raise UnknownMaterialError("no trained model supplied")
            if material_id not in ar_banks:
                raise UnknownMaterialError(f"no AR bank for {material_id!r}")
            if material_id not in recordings:
                raise UnknownMaterialError(f"no recording for {material_id!r}")
            return _compare_one(material_id, index, nn_model,
                                ar_banks[material_id], recordings[material_id],
                                runs, seed, condition, codes, gla_iterations)
        except (DomainError, LengthMismatchError, UnknownMaterialError) as exc:
            return ComparisonRow(
                material_id=material_id,
                ar_mean_distance=float("nan"),
                nn_mean_distance=float("nan"),
                delta=float("nan"),
                runs=runs,
                error=str(exc),
            )

    with ThreadPoolExecutor(max_workers=max(1, min(max_workers, len(materials) or 1))) as pool:
        rows = tuple(pool.map(work, enumerate(materials)))
    win_count = sum(1 for r in rows if not r.error and r.delta > 0)
    return ComparisonReport(rows=rows, win_count=win_count,
                            condition=condition, runs=runs, seed=seed)


# ------------------------------------------------------------- serialization


def _fmt(value: float) -> str:
    return repr(float(value))


def write_comparison_csv(report: ComparisonReport, path) -> None:
    """One row per material.  Quartile columns are labeled by what they pool:
    *_windows over all scored windows (runs pooled), *_runs over per-run
    mean distances."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            quartiles = []
            for q in (row.ar_windows_q, row.nn_windows_q, row.ar_runs_q):
                quartiles.extend(["", "", ""] if q is None else [_fmt(v) for v in q])
            writer.writerow([
                row.material_id,
                str(row.runs),
                "" if np.isnan(row.ar_mean_distance) else _fmt(row.ar_mean_distance),
                "" if np.isnan(row.nn_mean_distance) else _fmt(row.nn_mean_distance),
                "" if np.isnan(row.delta) else _fmt(row.delta),
                *quartiles,
                row.error,
            ])


def comparison_summary(report: ComparisonReport) -> dict:
    """JSON-ready summary with quartiles labeled by pooling axis."""
    scored = [r for r in report.rows if not r.error]
    per_material = {}
    for r in report.rows:
        if r.error:
            per_material[r.material_id] = {"error": r.error}
            continue
        per_material[r.material_id] = {
            "ar_mean_distance": r.ar_mean_distance,
            "nn_mean_distance": r.nn_mean_distance,
            "delta": r.delta,
            "quartiles_over_windows": {
                "ar": dict(zip(("q25", "median", "q75"), r.ar_windows_q)),
                "nn": dict(zip(("q25", "median", "q75"), r.nn_windows_q)),
            },
            "quartiles_over_runs": {
                "ar": dict(zip(("q25", "median", "q75"), r.ar_runs_q)),
            },
        }
    return {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "condition": report.condition,
        "runs": report.runs,
        "seed": report.seed,
        "n_materials": len(report.rows),
        "n_error_rows": len(report.rows) - len(scored),
        "win_count": report.win_count,
        "per_material": per_material,
    }


def write_comparison_summary(report: ComparisonReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(comparison_summary(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------- embedding export


def export_embeddings(model: ModelParams, materials=None,
                      descriptors=None) -> list[tuple[str, np.ndarray]]:
    """One (material_id, 256-value code) row per material.

    Embedding-mode models export their learned table; descriptor-mode models
    need ``descriptors`` (a material_id -> feature-vector mapping) and run
    them through the frozen texture head.
    """
    if not model.trained:
        raise DomainError("refusing to export codes from an untrained model")
    rows: list[tuple[str, np.ndarray]] = []
    if model.mode == "embedding":
        table = model.embedding_table()
        for material_id in (materials if materials is not None
                            else model.material_ids):
            rows.append((material_id, table.lookup(material_id).code))
    elif model.mode == "descriptor":
        if not descriptors:
            raise DomainError("descriptor-mode export needs descriptors")
    else:
        raise DomainError("action-only models carry no texture representation")
    if descriptors:
        for material_id in sorted(descriptors):
            features = np.asarray(descriptors[material_id], dtype=np.float64)
            rows.append((material_id, model.encode_descriptor(features)))
    return rows


def write_embeddings_csv(rows: list[tuple[str, np.ndarray]], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["material_id"] + [f"c{i}" for i in range(256)])
        for material_id, code in rows:
            writer.writerow([material_id] + [_fmt(v) for v in code])
