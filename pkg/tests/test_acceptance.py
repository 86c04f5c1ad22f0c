"""Release acceptance gate.

One test per release criterion, each asserting its quality threshold and its
runtime ceiling, so a verbose run reads as a pass/fail checklist.  The
synthetic benchmark trains a unified embedding model, ten per-material
models, and ten AR banks on the same corpus, then scores all of them on
held-out test sections with the per-window spectral distance.
"""

import hashlib
import json
import time

import numpy as np
import pytest
from scipy.signal import lfilter

from oracles import brute_spectral_distance, direct_dft, finite_difference_grad
from texsynth import dsp
from texsynth.ar_baseline import build_bank, fit_ar, synthesize
from texsynth.cli import main as cli_main
from texsynth.dataset import (
    ActionScript,
    ActionWindow,
    SyntheticTextureParams,
    TrainingExample,
    extract_examples,
    generate_synthetic,
    make_action_script,
    split_sections,
)
from texsynth.evaluate import spectral_distance
from texsynth.neural import (
    Batch,
    TrainConfig,
    backward,
    evaluate_loss,
    forward,
    init_model,
    train_stage2,
)
from texsynth.reconstruct import GlaConfig, gla_reconstruct
from texsynth.texture_repr import encode_texture


def _elapsed_under(t0, limit, label):
    took = time.monotonic() - t0
    assert took < limit, f"{label} took {took:.1f}s, ceiling {limit}s"
    print(f"{label}: {took:.1f}s (< {limit}s)")


# ---------------------------------------------------------------------------
# Criterion: forward transform vs O(N^2) oracle, Parseval, STFT round-trip


def test_dft_matches_direct_transform_and_parseval():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    for n in (8, 64, 1000):
        x = rng.standard_normal(n)
        got = dsp.rdft(x)
        want = direct_dft(x)
        rel = np.max(np.abs(got - want)) / np.max(np.abs(want))
        assert rel < 1e-9, f"N={n} relative error {rel}"

    for _ in range(100):
        x = rng.standard_normal(1000)
        spec = dsp.rdft(x)
        # one-sided Parseval: interior bins count twice, DC/Nyquist once
        energy = (np.abs(spec[0]) ** 2 + np.abs(spec[-1]) ** 2
                  + 2.0 * np.sum(np.abs(spec[1:-1]) ** 2)) / 1000.0
        rel = abs(energy - np.sum(x ** 2)) / np.sum(x ** 2)
        assert rel < 1e-9, f"Parseval violated: {rel}"

    sig = dsp.Signal(rng.standard_normal(6000))
    frames = dsp.stft_complex(sig, win=1000, hop=250)
    back = dsp.istft_overlap_add(frames, hop=250, win=1000)
    interior = slice(1000, len(back) - 1000)
    err = np.max(np.abs(back.samples[interior] - sig.samples[interior]))
    assert err < 1e-9, f"interior round-trip error {err}"
    _elapsed_under(t0, 10.0, "dsp correctness")


# ---------------------------------------------------------------------------
# Criterion: 20 Hz low-pass passband/stopband response


def test_lowpass_filter_meets_passband_and_stopband_spec():
    t0 = time.monotonic()
    kernel = dsp.lowpass_kernel()
    t = np.arange(30000) / dsp.SAMPLE_RATE_HZ

    def interior_gain_db(freq):
        x = np.sin(2 * np.pi * freq * t)
        y = np.convolve(x, kernel, mode="valid")
        trim = 2000
        rms_in = np.sqrt(np.mean(x[trim:-trim] ** 2))
        rms_out = np.sqrt(np.mean(y[trim:-trim] ** 2))
        return 20.0 * np.log10(rms_out / rms_in)

    g5 = interior_gain_db(5.0)
    g100 = interior_gain_db(100.0)
    assert abs(g5) < 1.0, f"5 Hz gain {g5:.3f} dB"
    assert g100 <= -40.0, f"100 Hz attenuation only {-g100:.1f} dB"
    print(f"filter: 5 Hz {g5:+.3f} dB, 100 Hz {g100:+.1f} dB")
    _elapsed_under(t0, 5.0, "filter spec")


# ---------------------------------------------------------------------------
# Criterion: analytic gradients vs central finite differences


def test_analytic_gradients_match_finite_differences():
    t0 = time.monotonic()
    rng = np.random.default_rng(5)
    model = init_model("embedding", ["a", "b", "c"], seed=5)
    actions = np.concatenate(
        [rng.uniform(0.2, 4.0, (10, 10)), rng.uniform(20.0, 280.0, (10, 10))],
        axis=1,
    )
    batch = Batch(actions=actions,
                  targets=rng.uniform(0.0, 5.0, (10, 101)),
                  material_idx=rng.integers(0, 3, 10))
    _, grads = backward(model, batch)

    def batch_loss():
        l, _ = backward(model, batch)
        return l

    worst = 0.0
    for name in sorted(model.tensors):
        tensor = model.tensors[name]
        coords = (range(tensor.size) if tensor.size <= 60 else
                  sorted(rng.choice(tensor.size, 60, replace=False)))
        fd = finite_difference_grad(batch_loss, tensor, h=1e-5, coords=coords)
        analytic = grads[name].reshape(-1)
        for i, want in fd.items():
            rel = abs(analytic[i] - want) / max(1.0, abs(analytic[i]))
            worst = max(worst, rel)
            assert rel < 1e-4, f"{name}[{i}]: analytic {analytic[i]} fd {want}"
    print(f"gradient check worst relative error {worst:.2e}")
    _elapsed_under(t0, 60.0, "gradient check")


# ---------------------------------------------------------------------------
# Criterion: optimizer can memorize a tiny deterministic set


def test_training_overfits_a_tiny_memorization_set():
    t0 = time.monotonic()
    examples = []
    for i in range(20):
        force, speed = 0.5 + 0.19 * i, 100.0
        script = ActionScript(np.full(1010, force), np.full(1010, speed))
        params = SyntheticTextureParams(
            spatial_freq_per_mm=2.0, amp_gain=0.02, force_exponent=0.6,
            noise_floor=0.0, seed=21 + i)
        rec = generate_synthetic(params, script, material_id="syn")
        target = dsp.mag_leq_1khz(dsp.rdft(rec.accel_ms2.samples[10:1010]))
        action = ActionWindow(np.full(10, force), np.full(10, speed))
        examples.append(TrainingExample(action=action, target=target,
                                        material_id="syn"))
    model = init_model("action_only", seed=21)
    initial = evaluate_loss(model, examples)
    cfg = TrainConfig(epochs=2000, batch_size=64, learning_rate=3e-3,
                      patience=10 ** 9, seed=21, max_steps=2000)
    trained, _ = train_stage2(model, examples, cfg)
    final = evaluate_loss(trained, examples)
    assert final < 0.01 * initial, f"final {final:.4f} vs initial {initial:.4f}"
    print(f"overfit: initial {initial:.3f} -> final {final:.5f} "
          f"({100 * final / initial:.3f}%)")
    _elapsed_under(t0, 120.0, "overfit sanity")


# ---------------------------------------------------------------------------
# Criterion: Burg recovers known AR(2) coefficients


def test_burg_recovers_known_ar2_coefficients():
    t0 = time.monotonic()
    truth = np.array([1.2, -0.5])
    rng = np.random.default_rng(2)
    e = rng.standard_normal(55000)
    x = lfilter([1.0], np.concatenate([[1.0], -truth]), e)[5000:]
    m = fit_ar(x, 2)
    rel = np.abs(m.coeffs - truth) / np.abs(truth)
    assert np.all(rel < 0.05), f"coeffs {m.coeffs} vs {truth}"
    print(f"ar recovery: {m.coeffs} vs {truth} (rel {rel})")
    _elapsed_under(t0, 10.0, "ar recovery")


# ---------------------------------------------------------------------------
# Criterion: fast GLA convergence and classic monotonicity


def test_fast_gla_converges_and_classic_gla_is_monotone():
    t0 = time.monotonic()
    script = make_action_script(2.0, seed=3)
    rec = generate_synthetic(
        SyntheticTextureParams(spatial_freq_per_mm=2.0, amp_gain=0.05,
                               force_exponent=0.8, noise_floor=0.001,
                               resonance_hz=500.0, seed=3),
        script, "syn")
    window = dsp.hann_periodic(1000)
    frames = dsp.stft_complex(rec.accel_ms2, win=1000, hop=250, window=window)
    target = np.abs(np.stack([f.to_complex() for f in frames]))

    _, errors = gla_reconstruct(target, GlaConfig(iterations=100,
                                                  momentum=0.99, phase_seed=0))
    assert errors[-1] <= 0.01 * errors[0], \
        f"fast GLA: {errors[-1]:.4g} vs 1% of {errors[0]:.4g}"

    _, classic = gla_reconstruct(target, GlaConfig(iterations=100,
                                                   momentum=0.0, phase_seed=0))
    drops = np.diff(classic)
    assert np.all(drops <= classic[:-1] * 1e-12 + 1e-12), \
        "classic GLA error increased"
    print(f"gla: fast {errors[-1] / errors[0] * 100:.3f}% of init, "
          f"classic monotone over {len(classic)} iters")
    _elapsed_under(t0, 30.0, "gla quality")


# ---------------------------------------------------------------------------
# Criterion: synthetic 10-material benchmark + embedding structure


FREQ_GROUPS = (0.5, 1.0, 1.5, 2.5, 3.5)
RESONANCES = (150.0, 300.0, 450.0, 600.0, 750.0)


def _bench_params(i):
    group, variant = divmod(i, 2)
    return SyntheticTextureParams(
        spatial_freq_per_mm=FREQ_GROUPS[group],
        amp_gain=0.04 if variant == 0 else 0.06,
        force_exponent=0.6 if variant == 0 else 1.1,
        noise_floor=0.001 if variant == 0 else 0.003,
        resonance_hz=RESONANCES[group],
        seed=7000 + i,
    )


def _test_windows(rec, split):
    """(anchor, 101-bin truth magnitude) pairs over the test sections,
    aligned exactly like training examples: action [t-10, t) -> frame
    [t, t+1000)."""
    out = []
    accel = rec.accel_ms2.samples
    for start, end in split.sections("test"):
        t = start + 10
        while t + 1000 <= end:
            out.append((t, np.abs(np.fft.rfft(accel[t:t + 1000]))[:101]))
            t += 100
    return out


def _nn_mean_distance(model, code, rec, windows):
    force = rec.force_n.samples
    speed = rec.speed_mm_s.samples
    dists = [
        np.linalg.norm(
            forward(ActionWindow(force[t - 10:t], speed[t - 10:t]),
                    code, model).mags - truth)
        for t, truth in windows
    ]
    return float(np.mean(dists))


def _ar_mean_distance(bank, rec, split, windows, runs, seed):
    per_run = []
    for j in range(runs):
        dists = []
        for start, end in split.sections("test"):
            sub = int(np.random.SeedSequence((seed, start, j))
                      .generate_state(1)[0])
            sig = synthesize(bank, rec.force_n.samples[start:end],
                             rec.speed_mm_s.samples[start:end],
                             seed=sub).samples
            for t, truth in windows:
                if start <= t and t + 1000 <= end:
                    r = t - start
                    dists.append(np.linalg.norm(
                        np.abs(np.fft.rfft(sig[r:r + 1000]))[:101] - truth))
        per_run.append(np.mean(dists))
    return float(np.mean(per_run))


@pytest.fixture(scope="module")
def bench():
    t0 = time.monotonic()
    ids = [f"mat{i:02d}" for i in range(10)]
    recs, splits, trainval, windows = {}, {}, {}, {}
    for i, mid in enumerate(ids):
        rec = generate_synthetic(_bench_params(i),
                                 make_action_script(10.0, seed=1000 + i), mid)
        split = split_sections(rec)
        recs[mid], splits[mid] = rec, split
        trainval[mid] = (extract_examples(rec, split, "train")
                         + extract_examples(rec, split, "val"))
        windows[mid] = _test_windows(rec, split)

    banks = {mid: build_bank(recs[mid], splits[mid]) for mid in ids}

    def cfg(steps):
        return TrainConfig(epochs=10 ** 6, batch_size=64, learning_rate=1e-3,
                           patience=10 ** 9, lr_schedule="cosine",
                           max_steps=steps, seed=0)

    unified = init_model("embedding", ids, seed=0)
    unified, _ = train_stage2(unified, [e for m in ids for e in trainval[m]],
                              cfg(1500))

    uni_means, per_means, ar_means = [], [], []
    for i, mid in enumerate(ids):
        specialist = init_model("action_only", [mid], seed=0)
        specialist, _ = train_stage2(specialist, trainval[mid], cfg(500))
        code = encode_texture(mid, "embedding", unified)
        uni_means.append(_nn_mean_distance(unified, code, recs[mid],
                                           windows[mid]))
        per_means.append(_nn_mean_distance(specialist, None, recs[mid],
                                           windows[mid]))
        ar_means.append(_ar_mean_distance(banks[mid], recs[mid], splits[mid],
                                          windows[mid], runs=3, seed=i))
    return {
        "ids": ids,
        "model": unified,
        "uni": uni_means,
        "per": per_means,
        "ar": ar_means,
        "elapsed": time.monotonic() - t0,
    }


def test_synthetic_benchmark_unified_model_wins(bench):
    wins = sum(u < a for u, a in zip(bench["uni"], bench["ar"]))
    uni_mean = np.mean(bench["uni"])
    per_mean = np.mean(bench["per"])
    for mid, u, p, a in zip(bench["ids"], bench["uni"], bench["per"],
                            bench["ar"]):
        print(f"  {mid}: unified {u:.3f}  specialist {p:.3f}  ar {a:.3f}")
    assert wins >= 7, f"unified model beat AR on only {wins}/10 materials"
    assert uni_mean <= per_mean, \
        f"unified mean {uni_mean:.4f} > specialist mean {per_mean:.4f}"
    print(f"benchmark: {wins}/10 wins, unified {uni_mean:.3f} "
          f"<= specialists {per_mean:.3f}")
    assert bench["elapsed"] < 900.0, \
        f"benchmark took {bench['elapsed']:.0f}s, ceiling 900s"


def test_embedding_codes_cluster_by_spatial_frequency(bench):
    codes = [encode_texture(mid, "embedding", bench["model"]).code
             for mid in bench["ids"]]

    def cosine(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    within, between = [], []
    for i in range(10):
        for j in range(i + 1, 10):
            sim = cosine(codes[i], codes[j])
            (within if i // 2 == j // 2 else between).append(sim)
    gap = np.mean(within) - np.mean(between)
    assert gap >= 0.1, (
        f"within {np.mean(within):.3f} between {np.mean(between):.3f}")
    print(f"embedding structure: within {np.mean(within):.3f}, "
          f"between {np.mean(between):.3f}, gap {gap:.3f}")


# ---------------------------------------------------------------------------
# Criterion: spectral distance vs brute-force oracle


def test_spectral_distance_matches_brute_force_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(1000, 4000))
        a = rng.standard_normal(n)
        b = rng.standard_normal(n)
        got = spectral_distance(dsp.Signal(a), dsp.Signal(b)).distances
        want = brute_spectral_distance(a, b)
        assert got.shape == want.shape
        assert np.max(np.abs(got - want)) <= 1e-9 * max(1.0, want.max())
    _elapsed_under(t0, 5.0, "metric oracle")


# ---------------------------------------------------------------------------
# Criterion: bit-identical artifacts under a fixed seed


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_pipeline_commands_are_bit_deterministic(tmp_path):
    def pipeline(root):
        root.mkdir()
        data, banks = root / "data", root / "banks"
        model = root / "model.tsm"
        argv_sets = [
            ["gen-synthetic", "--materials", "2", "--out", str(data),
             "--duration", "3.0", "--seed", "11"],
            ["train-ar", "--data", str(data), "--out-dir", str(banks),
             "--order", "8", "--grid-force", "3", "--grid-speed", "3"],
            ["train", "--mode", "embedding", "--data", str(data),
             "--out", str(model), "--max-steps", "30", "--epochs", "2",
             "--seed", "3"],
            ["synth", "--bank", str(banks / "mat00.arb"), "--force", "1.5",
             "--speed", "120", "--duration", "1.2",
             "--out", str(root / "ar.rec"), "--seed", "2"],
            ["synth", "--model", str(model), "--material", "mat01",
             "--force", "1.5", "--speed", "120", "--duration", "1.2",
             "--gla-iterations", "15", "--out", str(root / "nn.rec"),
             "--seed", "2"],
            ["eval", "--model", str(model), "--ar-bank-dir", str(banks),
             "--data", str(data), "--report", str(root / "report.csv"),
             "--summary", str(root / "summary.json"), "--runs", "2",
             "--condition", "frames", "--seed", "5"],
            ["export-embeddings", "--model", str(model),
             "--out", str(root / "codes.csv")],
        ]
        for argv in argv_sets:
            assert cli_main(argv) == 0, argv
        artifacts = ["data/mat00.rec", "data/mat01.rec", "banks/mat00.arb",
                     "banks/mat01.arb", "model.tsm", "ar.rec", "nn.rec",
                     "report.csv", "summary.json", "codes.csv"]
        return {name: _sha(root / name) for name in artifacts}

    first = pipeline(tmp_path / "a")
    second = pipeline(tmp_path / "b")
    assert first == second
    print(f"determinism: {len(first)} artifacts bit-identical across reruns")
