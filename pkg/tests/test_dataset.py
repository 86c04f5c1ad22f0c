"""Recording I/O, preprocessing, split protocol, and the synthetic oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from texsynth import dataset, dsp
from texsynth.errors import (
    DomainError,
    FormatError,
    LengthMismatchError,
    NonFiniteError,
)


def flat_recording(n=100_000, force=1.0, speed=100.0, material="mat-a"):
    rng = np.random.default_rng(99)
    return dataset.Recording(
        material_id=material,
        force_n=dsp.Signal(np.full(n, force)),
        speed_mm_s=dsp.Signal(np.full(n, speed)),
        accel_ms2=dsp.Signal(rng.standard_normal(n) * 0.1),
    )


class TestRecordingIO:
    def test_round_trip_10s_fixture(self, tmp_path):
        rec = flat_recording()
        path = dataset.save_recording(rec, tmp_path / "mat-a.rec", provenance="fixture")
        back = dataset.load_recording(path)
        assert back.duration_s == pytest.approx(10.0)
        assert back.material_id == "mat-a"
        assert_allclose(back.accel_ms2.samples, rec.accel_ms2.samples, rtol=0)

    def test_truncated_channel_is_length_mismatch(self, tmp_path):
        path = dataset.save_recording(flat_recording(n=30_000), tmp_path / "x.rec")
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])  # drop one float64 sample
        with pytest.raises(LengthMismatchError):
            dataset.load_recording(path)

    def test_nan_sample_is_non_finite(self, tmp_path):
        rec = flat_recording(n=30_000)
        path = dataset.save_recording(rec, tmp_path / "x.rec")
        blob = bytearray(path.read_bytes())
        # poison one acceleration sample in place
        import struct
        offset = len(blob) - 8
        blob[offset:offset + 8] = struct.pack("<d", float("nan"))
        path.write_bytes(bytes(blob))
        with pytest.raises(NonFiniteError):
            dataset.load_recording(path)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.rec"
        p.write_bytes(b"NOTAREC0" * 10)
        with pytest.raises(FormatError):
            dataset.load_recording(p)

    def test_csv_import(self, tmp_path):
        n = 2000
        t = np.arange(n) / 10_000.0
        rows = np.column_stack([t, np.full(n, 1.5), np.full(n, 80.0), np.sin(t * 500)])
        p = tmp_path / "fix.csv"
        header = "t,force,speed,accel"
        np.savetxt(p, rows, delimiter=",", header=header, comments="")
        rec = dataset.import_csv(p, "csv-mat")
        assert len(rec) == n
        assert rec.material_id == "csv-mat"

    def test_negative_force_rejected(self):
        with pytest.raises(DomainError):
            dataset.Recording(
                material_id="bad",
                force_n=dsp.Signal(np.array([-1.0, 1.0])),
                speed_mm_s=dsp.Signal(np.zeros(2)),
                accel_ms2=dsp.Signal(np.zeros(2)),
            )


class TestPreprocess:
    def test_constant_force_preserved(self):
        rec = dataset.preprocess_actions(flat_recording(n=40_000))
        core = rec.force_n.samples[3000:-3000]
        assert np.max(np.abs(core - 1.0)) < 1e-3

    def test_ripple_attenuated(self):
        n = 50_000
        t = np.arange(n) / 10_000.0
        ripple = 0.3 * np.sin(2 * np.pi * 200.0 * t)
        rec = dataset.Recording(
            material_id="r",
            force_n=dsp.Signal(1.0 + ripple),
            speed_mm_s=dsp.Signal(np.full(n, 50.0)),
            accel_ms2=dsp.Signal(np.zeros(n)),
        )
        out = dataset.preprocess_actions(rec)
        resid = out.force_n.samples[5000:-5000] - 1.0
        atten = 20 * np.log10(
            np.sqrt(np.mean(ripple[5000:-5000] ** 2))
            / max(np.sqrt(np.mean(resid ** 2)), 1e-300)
        )
        assert atten >= 40.0

    def test_accel_untouched(self):
        rec = flat_recording(n=40_000)
        out = dataset.preprocess_actions(rec)
        assert out.accel_ms2 is rec.accel_ms2


class TestSplit:
    def test_counts_and_pattern(self):
        split = dataset.split_sections(flat_recording())
        assert len(split.labels) == 25
        assert split.labels.count("train") == 17
        assert split.labels.count("val") == 4
        assert split.labels.count("test") == 4
        assert all(split.labels[i] == "val" for i in (2, 8, 14, 20))
        assert all(split.labels[i] == "test" for i in (5, 11, 17, 23))

    def test_determinism(self):
        rec = flat_recording()
        a = dataset.split_sections(rec)
        b = dataset.split_sections(rec)
        assert a == b

    def test_spike_in_test_section_sets_warning(self):
        n = 100_000
        sec = n // 25
        speed = np.full(n, 100.0)
        speed[5 * sec:6 * sec] = 900.0  # section 5 is a test section
        rec = dataset.Recording(
            material_id="w",
            force_n=dsp.Signal(np.ones(n)),
            speed_mm_s=dsp.Signal(speed),
            accel_ms2=dsp.Signal(np.zeros(n)),
        )
        assert dataset.split_sections(rec).overlap_warning
        assert not dataset.split_sections(flat_recording()).overlap_warning

    def test_too_short_rejected(self):
        with pytest.raises(LengthMismatchError):
            dataset.split_sections(flat_recording(n=25 * 1099))


class TestExtract:
    def test_count_formula_4000_section(self):
        rec = flat_recording(n=4000 * 25)
        split = dataset.split_sections(rec)
        examples = dataset.extract_examples(rec, split, "train")
        assert split.section_len == 4000
        assert len(examples) == 17 * 30  # floor((4000-1010)/100)+1 per section

    def test_windows_inside_sections(self):
        rec = flat_recording(n=100_000)
        split = dataset.split_sections(rec)
        bounds = split.sections("val")
        for ex in dataset.extract_examples(rec, split, "val"):
            t = ex.target.origin_index
            assert any(
                s <= t - dataset.ACTION_LEN and t + dsp.FRAME_LEN <= e
                for s, e in bounds
            )

    def test_empty_subset_is_empty(self):
        rec = flat_recording()
        split = dataset.split_sections(rec)
        only_train = dataset.SplitAssignment(
            labels=split.labels, section_len=split.section_len
        )
        assert dataset.extract_examples(rec, only_train, "nosuch") == []

    def test_constant_action_stationary_targets(self):
        params = dataset.SyntheticTextureParams(
            spatial_freq_per_mm=2.0, noise_floor=0.01, seed=3
        )
        n = 100_000
        script = dataset.ActionScript(np.full(n, 1.0), np.full(n, 100.0))
        rec = dataset.generate_synthetic(params, script)
        split = dataset.split_sections(rec)
        examples = dataset.extract_examples(rec, split, "train")
        peaks = np.array([np.argmax(ex.target.mags) for ex in examples])
        assert np.all(np.abs(peaks - peaks.mean()) <= 1.0)

    @given(
        section_len=st.integers(min_value=1100, max_value=20_000),
        stride=st.integers(min_value=1, max_value=500),
    )
    @settings(max_examples=200, deadline=None)
    def test_count_formula_matches_enumeration(self, section_len, stride):
        t = dataset.ACTION_LEN
        count = 0
        while t + dsp.FRAME_LEN <= section_len:
            count += 1
            t += stride
        assert dataset.examples_per_section(section_len, stride) == count


class TestSynthetic:
    def test_dominant_bin(self):
        params = dataset.SyntheticTextureParams(spatial_freq_per_mm=2.0, seed=1)
        n = 20_000
        script = dataset.ActionScript(np.ones(n), np.full(n, 100.0))
        rec = dataset.generate_synthetic(params, script)
        frames = dsp.stft_mag(rec.accel_ms2, hop=1000)
        mean_mags = np.mean([f.mags for f in frames], axis=0)
        assert np.argmax(mean_mags) == 20  # 2/mm * 100 mm/s = 200 Hz

    def test_zero_force_zero_noise_is_silent(self):
        params = dataset.SyntheticTextureParams(spatial_freq_per_mm=1.0, seed=1)
        script = dataset.ActionScript(np.zeros(5000), np.full(5000, 50.0))
        rec = dataset.generate_synthetic(params, script)
        assert_allclose(rec.accel_ms2.samples, 0.0)

    def test_seed_determinism(self):
        params = dataset.SyntheticTextureParams(
            spatial_freq_per_mm=1.5, noise_floor=0.05, resonance_hz=300.0, seed=12
        )
        script = dataset.make_action_script(2.0, seed=4)
        a = dataset.generate_synthetic(params, script)
        b = dataset.generate_synthetic(params, script)
        assert np.array_equal(a.accel_ms2.samples, b.accel_ms2.samples)

    def test_band_invariant_enforced(self):
        params = dataset.SyntheticTextureParams(spatial_freq_per_mm=5.0, seed=0)
        script = dataset.ActionScript(np.ones(1000), np.full(1000, 300.0))
        with pytest.raises(DomainError):
            dataset.generate_synthetic(params, script)

    def test_mean_argmax_tracks_mean_speed(self):
        params = dataset.SyntheticTextureParams(
            spatial_freq_per_mm=1.0, noise_floor=0.02, seed=9
        )
        script = dataset.make_action_script(5.0, seed=5, speed_range=(120.0, 180.0))
        rec = dataset.generate_synthetic(params, script)
        split = dataset.split_sections(rec)
        examples = dataset.extract_examples(rec, split, "train")
        mean_frame = np.mean([ex.target.mags for ex in examples], axis=0)
        want = round(params.spatial_freq_per_mm * script.speed.mean() / 10.0)
        assert abs(int(np.argmax(mean_frame)) - want) <= 1
