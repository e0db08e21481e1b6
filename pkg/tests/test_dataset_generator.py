import json

import numpy as np

from configs.gen_sep_cfs import ConfigGenerator, DatasetConfig, SamplingRanges
from simulation.dataset_generator_batch import BatchDatasetGenerator, generate_dataset, scene_seed
from storage.manifest import load_manifest
from storage.wav_io import read_wav

SMALL = SamplingRanges(duration_s=0.2, anechoic=True)


def _config(out_dir, **kwargs) -> DatasetConfig:
    return DatasetConfig(out_dir=str(out_dir), master_seed=5, n_scenes=3, sampling=SMALL, **kwargs)


def _audio(root, manifest):
    files = [f for e in manifest.entries for f in [e.mixture_file, *e.image_files, *e.foa_image_files]]
    return {f: read_wav(root / f)[0] for f in files}


def test_generated_dataset_is_complete(tmp_path):
    manifest, result = BatchDatasetGenerator(_config(tmp_path / "data")).process()
    assert result.total_scenes == 3
    assert result.generated_scenes == 3
    assert result.failed_scenes == []
    assert manifest.failed == []
    assert [e.seed for e in manifest.entries] == [scene_seed(5, i) for i in range(3)]

    reloaded = load_manifest(result.manifest_path)
    assert reloaded == manifest
    for entry in manifest.entries:
        assert entry.t60 == 0.0
        assert len(entry.image_files) == 2
        assert entry.separation_deg is None or 0.0 <= entry.separation_deg <= 180.0
        scene = json.loads((tmp_path / "data" / entry.scene_file).read_text())
        assert len(scene["sources"]) == 2
        mixture, fs = read_wav(tmp_path / "data" / entry.mixture_file)
        assert fs == 16000
        assert mixture.shape == (3200, 4)


def test_same_seed_gives_bitwise_identical_datasets(tmp_path):
    first = generate_dataset(_config(tmp_path / "a"))
    second = generate_dataset(_config(tmp_path / "b"))
    assert first.entries == second.entries
    a, b = _audio(tmp_path / "a", first), _audio(tmp_path / "b", second)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])


def test_parallel_generation_matches_serial(tmp_path):
    serial = generate_dataset(_config(tmp_path / "serial"), parallelism=1)
    parallel = generate_dataset(_config(tmp_path / "parallel"), parallelism=3)
    assert serial.entries == parallel.entries
    a, b = _audio(tmp_path / "serial", serial), _audio(tmp_path / "parallel", parallel)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])


def test_reverberant_scene_records_t60(tmp_path):
    sampling = SamplingRanges(duration_s=0.1, t60_range=(0.2, 0.25), room_max=(5.0, 5.0, 3.5), n_sources=(1, 1))
    config = DatasetConfig(out_dir=str(tmp_path), master_seed=1, n_scenes=1, sampling=sampling)
    manifest = generate_dataset(config)
    assert len(manifest.entries) == 1
    assert 0.2 <= manifest.entries[0].t60 <= 0.25
    assert manifest.entries[0].separation_deg is None


def test_failed_scenes_are_recorded(tmp_path):
    sampling = SamplingRanges(duration_s=0.1, anechoic=True, min_separation_deg=181.0, max_attempts=2)
    config = DatasetConfig(out_dir=str(tmp_path), n_scenes=2, sampling=sampling)
    manifest, result = BatchDatasetGenerator(config).process()
    assert manifest.entries == []
    assert result.failed_scenes == [0, 1]
    assert all(f.error.startswith("GeometryError") for f in manifest.failed)


def test_config_file_input(tmp_path):
    generator = ConfigGenerator(str(tmp_path / "configs"))
    generator.generate_dataset_config(out_dir=str(tmp_path / "ignored"), master_seed=2, n_scenes=1, sampling=SMALL)
    manifest = generate_dataset(str(tmp_path / "configs" / "dataset_config.json"), out_dir=str(tmp_path / "data"))
    assert (tmp_path / "data" / "manifest.json").exists()
    assert manifest.entries[0].seed == scene_seed(2, 0)
    assert manifest.entries[0].t60 == 0.0
