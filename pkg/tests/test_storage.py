import json
import logging

import numpy as np
import pytest
import soundfile as sf

from evaluation.metrics import EvalReport, SourceMetrics
from separation.envelope import FrameEnvelope
from separation.trajectory import Trajectory
from simulation.acoustics import FoaSignal
from storage.arrays import load_envelope, load_trajectory, save_envelope, save_trajectory
from storage.manifest import DatasetManifest, FailedEntry, ManifestEntry, load_manifest
from storage.reports import load_report, save_report
from storage.wav_io import read_foa, read_mono, read_wav, wav_io, write_wav
from utils.errors import (ManifestError, MalformedContainerError, NonFiniteAudioError, SignalShapeError,
                          UnsupportedCodecError)

FS = 16000


def test_float_wav_is_bitwise_identical(tmp_path, rng):
    samples = rng.standard_normal((1000, 4)).astype(np.float32)
    path = write_wav(tmp_path / "foa.wav", samples, FS)
    data, fs = read_wav(path)
    assert fs == FS
    assert data.dtype == np.float32
    np.testing.assert_array_equal(data, samples)


def test_single_sample_round_trip(tmp_path):
    samples = np.array([[0.25, -0.5, 0.125, 1.0]], dtype=np.float32)
    data, _ = read_wav(write_wav(tmp_path / "one.wav", samples, FS))
    np.testing.assert_array_equal(data.reshape(1, 4), samples)


def test_pcm_files_are_rejected(tmp_path):
    path = tmp_path / "pcm.wav"
    sf.write(str(path), np.zeros((100, 4)), FS, subtype="PCM_16")
    with pytest.raises(UnsupportedCodecError, match="PCM_16"):
        read_wav(path)


def test_garbage_is_malformed(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"RIFF\x00\x00not really a wave file")
    with pytest.raises(MalformedContainerError):
        read_wav(path)


def test_refuses_non_finite_and_empty(tmp_path):
    samples = np.zeros((10, 4))
    samples[3, 1] = np.nan
    with pytest.raises(NonFiniteAudioError):
        write_wav(tmp_path / "nan.wav", samples, FS)
    assert not (tmp_path / "nan.wav").exists()
    with pytest.raises(SignalShapeError):
        write_wav(tmp_path / "empty.wav", np.zeros((0, 4)), FS)
    with pytest.raises(SignalShapeError):
        write_wav(tmp_path / "rate.wav", np.zeros(10))


def test_float64_cast_is_logged(tmp_path, caplog):
    samples = np.full((10, 4), 0.1)
    with caplog.at_level(logging.INFO, logger="storage.wav_io"):
        write_wav(tmp_path / "double.wav", samples, FS)
    assert "casting float64 samples to float32" in caplog.text
    data, _ = read_wav(tmp_path / "double.wav")
    np.testing.assert_array_equal(data, samples.astype(np.float32))

    caplog.clear()
    with caplog.at_level(logging.INFO, logger="storage.wav_io"):
        write_wav(tmp_path / "single.wav", samples.astype(np.float32), FS)
    assert "casting" not in caplog.text


def test_float32_overflow_is_rejected(tmp_path):
    samples = np.zeros((10, 4))
    samples[2, 0] = 1e300
    with pytest.raises(NonFiniteAudioError, match="overflow"):
        write_wav(tmp_path / "huge.wav", samples, FS)
    assert not (tmp_path / "huge.wav").exists()


def test_wav_io_modes(tmp_path, rng):
    foa = FoaSignal(rng.standard_normal((500, 4)).astype(np.float32), sample_rate=FS)
    path = wav_io(tmp_path / "foa.wav", "write", foa)
    loaded = wav_io(path, "read")
    assert isinstance(loaded, FoaSignal)
    np.testing.assert_array_equal(loaded.samples, foa.samples)

    mono = rng.standard_normal(500).astype(np.float32)
    wav_io(tmp_path / "mono.wav", "write", mono, FS)
    np.testing.assert_array_equal(wav_io(tmp_path / "mono.wav", "read"), mono)
    np.testing.assert_array_equal(read_mono(path), foa.samples[:, 0])
    with pytest.raises(ValueError):
        wav_io(path, "append")


def test_read_foa_checks_channels(tmp_path):
    write_wav(tmp_path / "stereo.wav", np.zeros((10, 2)), FS)
    with pytest.raises(SignalShapeError):
        read_foa(tmp_path / "stereo.wav")


def test_trajectory_and_envelope_text_files(tmp_path, rng):
    dirs = rng.standard_normal((50, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    traj = load_trajectory(save_trajectory(tmp_path / "doa.txt", Trajectory(dirs)))
    np.testing.assert_array_equal(traj.dirs, dirs)

    env = FrameEnvelope(rng.uniform(0, 1, 20), win=512, hop=256)
    loaded = load_envelope(save_envelope(tmp_path / "env.txt", env))
    np.testing.assert_array_equal(loaded.values, env.values)
    assert (loaded.win, loaded.hop) == (512, 256)


def _write_entry(root, n=100, n_traj=None):
    scene = root / "scene_0000"
    scene.mkdir(parents=True)
    (scene / "scene.json").write_text("{}")
    write_wav(scene / "mixture.wav", np.zeros((n, 4)), FS)
    write_wav(scene / "source_0_image.wav", np.zeros(n), FS)
    write_wav(scene / "source_0_foa.wav", np.zeros((n, 4)), FS)
    save_trajectory(scene / "source_0_doa.txt", Trajectory(np.tile([1.0, 0.0, 0.0], (n_traj or n, 1))))
    save_envelope(scene / "source_0_envelope.txt", FrameEnvelope(np.zeros(3)))
    return ManifestEntry(scene_file="scene_0000/scene.json", mixture_file="scene_0000/mixture.wav",
                         image_files=["scene_0000/source_0_image.wav"],
                         foa_image_files=["scene_0000/source_0_foa.wav"],
                         trajectory_files=["scene_0000/source_0_doa.txt"],
                         envelope_files=["scene_0000/source_0_envelope.txt"], seed=11)


def test_manifest_round_trip_and_validation(tmp_path):
    entry = _write_entry(tmp_path)
    manifest = DatasetManifest(entries=[entry], failed=[FailedEntry(1, 12, "GeometryError: no")], master_seed=7,
                               config_hash="abc")
    path = manifest.save(tmp_path / "manifest.json")
    assert load_manifest(path) == manifest


def test_manifest_reports_every_violation(tmp_path):
    entry = _write_entry(tmp_path, n_traj=99)
    entry.envelope_files.append("scene_0000/missing.txt")
    path = DatasetManifest(entries=[entry, entry]).save(tmp_path / "manifest.json")
    with pytest.raises(ManifestError) as err:
        load_manifest(path)
    violations = err.value.violations
    assert any("not unique" in v for v in violations)
    assert any("missing file scene_0000/missing.txt" in v for v in violations)
    assert load_manifest(path, validate=False).entries[0].seed == 11


def test_manifest_version_and_presence(tmp_path):
    with pytest.raises(ManifestError, match="not found"):
        DatasetManifest.load(tmp_path / "nothing.json")
    path = tmp_path / "old.json"
    path.write_text(json.dumps({"version": "0.1", "entries": []}))
    with pytest.raises(ManifestError, match="version"):
        DatasetManifest.load(path)


def test_trajectory_length_mismatch_is_a_violation(tmp_path):
    entry = _write_entry(tmp_path, n_traj=99)
    path = DatasetManifest(entries=[entry]).save(tmp_path / "manifest.json")
    with pytest.raises(ManifestError, match="99 rows"):
        load_manifest(path)


def test_report_files(tmp_path):
    report = EvalReport(per_source=[SourceMetrics(0, 0, 12.0, 11.5, 13.0, 4.2, ewrmsae_history_deg=[8.0, 4.2])],
                        permutation=(0,), count_verdict=(1, 1), missed_targets=[], provenance={"seed": 1})
    path = save_report(report, tmp_path / "report.json")
    assert load_report(path) == report
    assert path.with_suffix(".txt").read_text().startswith(report.render_table())
