"""Command-line pipeline driver.

Subcommands cover the whole flow: data ingest and preprocessing, the
train/val/test split report, synthetic corpus generation, both training
stages, the AR baseline, offline synthesis, quantitative evaluation,
embedding export, and the live streaming service.

Exit codes: 0 success, 1 usage error, 2 data/processing error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dsp
from .ar_baseline import build_bank, load_bank, save_bank, synthesize
from .config import load_config
from .dataset import (
    ActionWindow,
    Recording,
    extract_examples,
    generate_synthetic,
    import_csv,
    load_recording,
    make_action_script,
    preprocess_actions,
    save_recording,
    split_sections,
    SyntheticTextureParams,
)
from .errors import DomainError, TexsynthError
from .evaluate import (
    compare,
    export_embeddings,
    write_comparison_csv,
    write_comparison_summary,
    write_embeddings_csv,
)
from .neural import TrainConfig, forward, init_model, load_model, \
    save_model, train_stage1, train_stage2
from .reconstruct import GlaConfig, full_band_targets, gla_reconstruct
from .texture_repr import (
    augment,
    center_square_crop,
    describe,
    encode_texture,
    load_press_sequence,
    press_training_frames,
)

RECORDING_SUFFIX = ".rec"
BANK_SUFFIX = ".arb"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage to 1
        raise UsageError(message)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", type=Path, default=None)


def _build_parser() -> _Parser:
    parser = _Parser(prog="texsynth",
                     description="action-conditional vibration texture synthesis")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="import a CSV capture into a recording file")
    _common(p)
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--material", required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("preprocess", help="low-pass the action channels")
    _common(p)
    p.add_argument("--in", dest="src", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("split", help="report the fixed train/val/test sections")
    _common(p)
    p.add_argument("--in", dest="src", type=Path, required=True)
    p.add_argument("--json", type=Path, default=None)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic corpus")
    _common(p)
    p.add_argument("--materials", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--duration", type=float, default=10.0)

    p = sub.add_parser("train-classifier",
                       help="stage 1: texture head + material classifier")
    _common(p)
    p.add_argument("--press-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)

    p = sub.add_parser("train", help="stage 2: spectrum prediction")
    _common(p)
    p.add_argument("--mode", choices=("embedding", "descriptor", "action_only"),
                   required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--stage1", type=Path, default=None,
                   help="trained stage-1 model (descriptor mode)")
    p.add_argument("--press-dir", type=Path, default=None,
                   help="press image root (descriptor mode)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)

    p = sub.add_parser("train-ar", help="fit the piecewise AR baseline banks")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--grid-force", type=int, default=None)
    p.add_argument("--grid-speed", type=int, default=None)

    p = sub.add_parser("synth", help="synthesize audio for a constant action")
    _common(p)
    p.add_argument("--bank", type=Path, default=None)
    p.add_argument("--model", type=Path, default=None)
    p.add_argument("--material", default=None)
    p.add_argument("--force", type=float, required=True)
    p.add_argument("--speed", type=float, required=True)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--refresh", type=int, default=None)
    p.add_argument("--gla-iterations", type=int, default=None)

    p = sub.add_parser("eval", help="AR-vs-NN comparison over a data directory")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--ar-bank-dir", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--summary", type=Path, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--condition", choices=("gla", "frames", "stitch"),
                   default=None)
    p.add_argument("--gla-iterations", type=int, default=None)

    p = sub.add_parser("export-embeddings", help="write learned codes as CSV")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("serve", help="run the live streaming service")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--static-dir", type=Path, default=None)

    return parser


# ------------------------------------------------------------------ helpers


def _load_recordings(data_dir: Path) -> dict[str, Recording]:
    files = sorted(data_dir.glob(f"*{RECORDING_SUFFIX}"))
    if not files:
        raise DomainError(f"no *{RECORDING_SUFFIX} files under {data_dir}")
    recordings = {}
    for path in files:
        rec = load_recording(path)
        recordings[rec.material_id] = rec
    return recordings


def _examples_by_subset(recordings: dict[str, Recording], subset: str):
    out = []
    for material_id in sorted(recordings):
        rec = recordings[material_id]
        out.extend(extract_examples(rec, split_sections(rec), subset))
    return out


def _press_descriptors(press_dir: Path):
    """Per-material augmented press descriptors.

    Returns (features list, labels list, material -> mean feature vector).
    """
    dirs = sorted(d for d in press_dir.iterdir() if d.is_dir())
    if not dirs:
        raise DomainError(f"no material directories under {press_dir}")
    features, labels, canonical = [], [], {}
    for d in dirs:
        seq = load_press_sequence(d)
        per_material = []
        for frame in press_training_frames(seq):
            crop = center_square_crop(frame)
            for view in augment(crop):
                per_material.append(describe(view).features)
        features.extend(per_material)
        labels.extend([seq.material_id] * len(per_material))
        canonical[seq.material_id] = np.mean(np.stack(per_material), axis=0)
    return np.stack(features), labels, canonical


def _synthetic_params(index: int, seed: int) -> SyntheticTextureParams:
    """Deterministic parameter schedule: pairs share the geometry
    (spatial frequency, resonance) and differ in response (gain, exponent,
    noise), so embedding structure has something to latch onto."""
    group = index // 2
    freqs = (0.5, 1.0, 1.5, 2.5, 3.5)
    resonances = (150.0, 300.0, 450.0, 600.0, 750.0)
    variant = index % 2
    return SyntheticTextureParams(
        spatial_freq_per_mm=freqs[group % 5],
        amp_gain=0.04 if variant == 0 else 0.06,
        force_exponent=0.6 if variant == 0 else 1.1,
        noise_floor=0.001 if variant == 0 else 0.003,
        resonance_hz=resonances[group % 5] + 80.0 * (group // 5),
        seed=seed * 1000 + index,
    )


def _train_config(args, cfg, seed: int) -> TrainConfig:
    def pick(name, key, cast):
        value = getattr(args, name, None)
        return cast(cfg[key]) if value is None else value

    return TrainConfig(
        epochs=pick("epochs", "train.epochs", int),
        batch_size=pick("batch_size", "train.batch_size", int),
        learning_rate=pick("learning_rate", "train.learning_rate", float),
        patience=pick("patience", "train.patience", int),
        lr_schedule=str(cfg["train.lr_schedule"]),
        max_steps=getattr(args, "max_steps", None),
        seed=seed,
    )


# ------------------------------------------------------------- subcommands


def _cmd_ingest(args, cfg) -> int:
    rec = import_csv(args.csv, args.material)
    save_recording(rec, args.out, provenance=f"csv:{args.csv.name}")
    print(f"ingested {len(rec)} samples -> {args.out}")
    return 0


def _cmd_preprocess(args, cfg) -> int:
    rec = preprocess_actions(load_recording(args.src))
    save_recording(rec, args.out, provenance="preprocessed")
    print(f"preprocessed -> {args.out}")
    return 0


def _cmd_split(args, cfg) -> int:
    rec = load_recording(args.src)
    split = split_sections(rec)
    table = []
    for subset in ("train", "val", "test"):
        for start, end in split.sections(subset):
            table.append({"subset": subset, "start": int(start), "end": int(end)})
    table.sort(key=lambda row: row["start"])
    for row in table:
        print(f"{row['start']:>9d} {row['end']:>9d} {row['subset']}")
    if split.overlap_warning:
        print("warning: held-out actions fall outside the training "
              "force/speed bounding box", file=sys.stderr)
    if args.json is not None:
        args.json.write_text(json.dumps(
            {"sections": table, "overlap_warning": split.overlap_warning},
            indent=2, sort_keys=True))
    return 0


def _cmd_gen_synthetic(args, cfg) -> int:
    if args.materials < 1:
        raise DomainError("need at least one material")
    args.out.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for i in range(args.materials):
        material_id = f"mat{i:02d}"
        params = _synthetic_params(i, args.seed)
        script = make_action_script(args.duration, seed=args.seed * 7919 + i)
        rec = generate_synthetic(params, script, material_id)
        save_recording(rec, args.out / f"{material_id}{RECORDING_SUFFIX}",
                       provenance="synthetic")
        manifest[material_id] = {
            "spatial_freq_per_mm": params.spatial_freq_per_mm,
            "amp_gain": params.amp_gain,
            "force_exponent": params.force_exponent,
            "noise_floor": params.noise_floor,
            "resonance_hz": params.resonance_hz,
            "seed": params.seed,
            "duration_s": args.duration,
        }
    (args.out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))
    print(f"wrote {args.materials} recordings -> {args.out}")
    return 0


def _cmd_train_classifier(args, cfg) -> int:
    features, labels, _ = _press_descriptors(args.press_dir)
    materials = sorted(set(labels))
    model = init_model("descriptor", materials, seed=args.seed)
    config = _train_config(args, cfg, args.seed)
    model, info = train_stage1(model, features, labels, config)
    save_model(model, args.out)
    print(f"stage-1 accuracy {info['accuracy']:.3f} over "
          f"{len(materials)} materials -> {args.out}")
    return 0


def _cmd_train(args, cfg) -> int:
    recordings = _load_recordings(args.data)
    materials = sorted(recordings)
    train_examples = _examples_by_subset(recordings, "train")
    val_examples = _examples_by_subset(recordings, "val")
    codes_source = None
    if args.mode == "descriptor":
        if args.stage1 is None or args.press_dir is None:
            raise UsageError("descriptor mode needs --stage1 and --press-dir")
        model = load_model(args.stage1, mode="descriptor")
        _, _, canonical = _press_descriptors(args.press_dir)
        missing = [m for m in materials if m not in canonical]
        if missing:
            raise DomainError(f"no press images for materials: {missing}")
        codes_source = {m: model.encode_descriptor(canonical[m])
                        for m in materials}
    else:
        model = init_model(args.mode, materials, seed=args.seed)
    config = _train_config(args, cfg, args.seed)
    model, history = train_stage2(model, train_examples, config,
                                  val_examples=val_examples,
                                  codes_source=codes_source)
    save_model(model, args.out)
    print(f"trained {args.mode} model on {len(train_examples)} examples, "
          f"best val loss {min(history['val']):.4f} -> {args.out}")
    return 0


def _cmd_train_ar(args, cfg) -> int:
    recordings = _load_recordings(args.data)
    order = args.order if args.order is not None else int(cfg["ar.order"])
    grid = (args.grid_force if args.grid_force is not None
            else int(cfg["ar.grid_force"]),
            args.grid_speed if args.grid_speed is not None
            else int(cfg["ar.grid_speed"]))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for material_id in sorted(recordings):
        rec = recordings[material_id]
        try:
            bank = build_bank(rec, split_sections(rec), p=order, grid=grid)
        except TexsynthError as exc:
            print(f"skipping {material_id}: {exc}", file=sys.stderr)
            continue
        save_bank(bank, args.out_dir / f"{material_id}{BANK_SUFFIX}")
        written += 1
    if written == 0:
        raise DomainError("no AR bank could be fitted")
    print(f"wrote {written} banks -> {args.out_dir}")
    return 0


def _cmd_synth(args, cfg) -> int:
    if (args.bank is None) == (args.model is None):
        raise UsageError("pass exactly one of --bank / --model")
    n = int(round(args.duration * dsp.SAMPLE_RATE_HZ))
    if n < dsp.FRAME_LEN:
        raise DomainError("duration must cover at least one frame")
    force = np.full(n, args.force)
    speed = np.full(n, args.speed)
    if args.bank is not None:
        bank = load_bank(args.bank)
        refresh = args.refresh if args.refresh is not None \
            else int(cfg["synth.refresh"])
        accel = synthesize(bank, force, speed, seed=args.seed, refresh=refresh)
        material_id = bank.material_id or "bank"
    else:
        model = load_model(args.model)
        if model.mode == "descriptor":
            raise DomainError(
                "descriptor-mode synthesis is not supported offline; "
                "use an embedding or action_only model")
        code = None
        if model.mode == "embedding":
            if args.material is None:
                raise UsageError("--material is required for embedding models")
            code = encode_texture(args.material, "embedding", model)
        frames = []
        t = 100
        while t + dsp.FRAME_LEN <= n:
            window = ActionWindow(force[t - 10:t], speed[t - 10:t])
            frames.append(forward(window, code, model))
            t += 100
        iters = args.gla_iterations if args.gla_iterations is not None \
            else int(cfg["gla.iterations"])
        accel, _ = gla_reconstruct(full_band_targets(frames) * 0.5,
                                   GlaConfig(iterations=iters, hop=100,
                                             momentum=float(cfg["gla.momentum"]),
                                             phase_seed=args.seed))
        material_id = args.material or "model"
    m = len(accel)
    rec = Recording(
        force_n=dsp.Signal(force[:m]),
        speed_mm_s=dsp.Signal(speed[:m]),
        accel_ms2=dsp.Signal(accel.samples[:m]),
        material_id=material_id,
    )
    save_recording(rec, args.out, provenance="synthesized")
    print(f"synthesized {m} samples -> {args.out}")
    return 0


def _cmd_eval(args, cfg) -> int:
    model = load_model(args.model)
    recordings = _load_recordings(args.data)
    materials = sorted(recordings)
    banks = {}
    for material_id in materials:
        path = args.ar_bank_dir / f"{material_id}{BANK_SUFFIX}"
        if path.exists():
            banks[material_id] = load_bank(path)
    report = compare(
        materials, model, banks, recordings,
        runs=args.runs if args.runs is not None else int(cfg["eval.runs"]),
        seed=args.seed,
        condition=args.condition or str(cfg["eval.condition"]),
        gla_iterations=args.gla_iterations if args.gla_iterations is not None
        else int(cfg["gla.iterations"]),
    )
    write_comparison_csv(report, args.report)
    if args.summary is not None:
        write_comparison_summary(report, args.summary)
    scored = [r for r in report.rows if not r.error]
    print(f"{report.win_count}/{len(scored)} materials favor the model "
          f"({len(report.rows) - len(scored)} errors) -> {args.report}")
    return 0


def _cmd_export_embeddings(args, cfg) -> int:
    model = load_model(args.model)
    rows = export_embeddings(model)
    write_embeddings_csv(rows, args.out)
    print(f"wrote {len(rows)} codes -> {args.out}")
    return 0


def _cmd_serve(args, cfg) -> int:
    from .service import run_service

    model = load_model(args.model)
    settings = dict(cfg)
    if args.host is not None:
        settings["service.host"] = args.host
    if args.port is not None:
        settings["service.port"] = args.port
    if args.static_dir is not None:
        settings["service.static_dir"] = str(args.static_dir)
    run_service(model, settings)
    return 0


_HANDLERS = {
    "ingest": _cmd_ingest,
    "preprocess": _cmd_preprocess,
    "split": _cmd_split,
    "gen-synthetic": _cmd_gen_synthetic,
    "train-classifier": _cmd_train_classifier,
    "train": _cmd_train,
    "train-ar": _cmd_train_ar,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "export-embeddings": _cmd_export_embeddings,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        return _HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (TexsynthError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
