"""File formats: XYZ, PLY, config round trips, checkpoint container."""

import numpy as np
import pytest

from pointcarve import (
    CarveModelConfig,
    CarveModelParams,
    CheckpointMeta,

    RunConfig,
    load_checkpoint,
    save_checkpoint,
)
from pointcarve.pcio import (
    read_dataset_manifest,
    read_ply,
    read_sequence_manifest,
    read_xyz,
    write_ply,
    write_xyz,
)

from conftest import random_cloud

class TestXyz:
    def test_basic_parse(self, tmp_path):
        p = tmp_path / "a.xyz"
        p.write_text("# comment\n0 0 0\n\n1 2 3\n")
        cloud = read_xyz(p)
        assert len(cloud) == 2
        np.testing.assert_array_equal(cloud.points[1], [1, 2, 3])

    def test_wrong_field_count_reports_line(self, tmp_path):
        p = tmp_path / "bad.xyz"
        p.write_text("1 2\n")
        with pytest.raises(ValueError, match=r"bad\.xyz:1"):
            read_xyz(p)

    def test_malformed_number_reports_line(self, tmp_path):
        p = tmp_path / "bad.xyz"
        p.write_text("0 0 0\n1 x 3\n")
        with pytest.raises(ValueError, match=r"bad\.xyz:2"):
            read_xyz(p)

    def test_round_trip_10k(self, rng, tmp_path):
        cloud = random_cloud(rng, 10_000, -0.5, 0.5)
        p = tmp_path / "rt.xyz"
        write_xyz(p, cloud)
        back = read_xyz(p)
        assert np.abs(back.points - cloud.points).max() < 1e-8

class TestPly:
    def test_minimal_text_ply(self, tmp_path):
        p = tmp_path / "one.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\nend_header\n"
            "0.5 -1.5 2\n"
        )
        cloud = read_ply(p)
        assert len(cloud) == 1
        np.testing.assert_allclose(cloud.points[0], [0.5, -1.5, 2.0])

    def test_binary_size_is_header_plus_12n(self, rng, tmp_path):
        cloud = random_cloud(rng, 321)
        p = tmp_path / "b.ply"
        write_ply(p, cloud, binary=True)
        raw = p.read_bytes()
        header_len = raw.index(b"end_header\n") + len(b"end_header\n")
        assert len(raw) == header_len + 12 * 321

    def test_text_binary_agree_at_float32(self, rng, tmp_path):
        cloud = random_cloud(rng, 100, -2, 2)
        pt, pb = tmp_path / "t.ply", tmp_path / "b.ply"
        write_ply(pt, cloud, binary=False)
        write_ply(pb, cloud, binary=True)
        a, b = read_ply(pt), read_ply(pb)
        np.testing.assert_allclose(a.points, b.points, atol=1e-6)
        np.testing.assert_allclose(a.points, cloud.points, atol=1e-6)

    def test_missing_coordinate_property(self, tmp_path):
        p = tmp_path / "bad.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nend_header\n0 0\n"
        )
        with pytest.raises(ValueError, match="missing z"):
            read_ply(p)

    def test_truncated_binary(self, rng, tmp_path):
        cloud = random_cloud(rng, 10)
        p = tmp_path / "trunc.ply"
        write_ply(p, cloud, binary=True)
        raw = p.read_bytes()
        p.write_bytes(raw[:-7])
        with pytest.raises(ValueError, match="truncated"):
            read_ply(p)

    def test_unknown_property_skipped_with_warning(self, tmp_path):
        p = tmp_path / "extra.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property float intensity\nend_header\n1 2 3 9\n"
        )
        with pytest.warns(UserWarning, match="intensity"):
            cloud = read_ply(p)
        np.testing.assert_allclose(cloud.points[0], [1, 2, 3])

class TestRunConfig:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig(grid_res=16, unet_stages=2, alpha=0.25, refine_widths=(32, 12),
                        data_manifest="data/manifest.txt", sensoraug=False)
        p = tmp_path / "run.cfg"
        cfg.save(p)
        assert RunConfig.load(p) == cfg

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("grid_res = 32\nbogus_key = 1\n")
        with pytest.raises(ValueError, match="unknown config key 'bogus_key'"):
            RunConfig.load(p)

    def test_invalid_value_message(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("grid_res = twelve\n")
        with pytest.raises(ValueError, match="bad value for 'grid_res'"):
            RunConfig.load(p)

    def test_validation_messages(self):
        with pytest.raises(ValueError, match="divisible"):
            RunConfig(grid_res=30)
        with pytest.raises(ValueError, match="multiple of 3"):
            RunConfig(refine_widths=(16, 8))
        with pytest.raises(ValueError, match="alpha"):
            RunConfig(alpha=-0.1)

    def test_presets(self):
        desk = RunConfig.preset("desk")
        paper = RunConfig.preset("paper")
        assert desk.grid_res == 32 and desk.coarse_m == 256 and desk.expansion == 4
        assert paper.grid_res == 64 and paper.coarse_m == 2048 and paper.expansion == 8
        assert paper.refine_widths == (1792, 2448, 112, 24)
        for cfg in (desk, paper):
            assert cfg.alpha == 0.5 and cfg.t_variants == 2 and cfg.lr == 1e-4
        with pytest.raises(ValueError, match="preset"):
            RunConfig.preset("galaxy")

    def test_comments_and_spacing(self):
        cfg = RunConfig.from_text("grid_res=16 # inline comment\nunet_stages = 2\n")
        assert cfg.grid_res == 16 and cfg.unet_stages == 2

class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = CarveModelConfig(
            resolution=(8, 8, 8), stages=2, base_width=2, feature_dim=4,
            refine_widths=(8, 6), dtype="float32",
        )
        params = CarveModelParams.initialize(cfg, seed=11)
        meta = CheckpointMeta(n_per_axis=5, coarse_m=64, threshold=0.1,
                              bounds_padding_partial=0.2)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, meta)
        loaded, meta2 = load_checkpoint(path)
        assert meta2 == meta
        assert loaded.config.resolution == (8, 8, 8)
        assert loaded.config.refine_widths == (8, 6)
        for name in params.tensors:
            np.testing.assert_array_equal(loaded.tensors[name], params.tensors[name])

    def test_truncated_rejected(self, tmp_path):
        cfg = CarveModelConfig(resolution=(8, 8, 8), stages=2, base_width=2,
                             feature_dim=4, refine_widths=(8, 6), dtype="float32")
        params = CarveModelParams.initialize(cfg, seed=0)
        meta = CheckpointMeta(4, 32, 0.0, 0.15)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, meta)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 100])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"JUNK" + b"\x00" * 200)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

class TestManifests:
    def test_dataset_manifest(self, tmp_path):
        (tmp_path / "m.txt").write_text("# header\nbox p/a.xyz g/a.xyz\nsphere p/b.xyz g/b.xyz\n")
        entries = read_dataset_manifest(tmp_path / "m.txt")
        assert len(entries) == 2
        assert entries[0][0] == "box"
        assert entries[0][1] == tmp_path / "p/a.xyz"

    def test_sequence_manifest_sorted(self, tmp_path):
        (tmp_path / "seq.txt").write_text("car0 2 f2.xyz\ncar0 1 f1.xyz\ncar1 1 g1.xyz\n")
        groups = read_sequence_manifest(tmp_path / "seq.txt")
        assert [idx for idx, _ in groups["car0"]] == [1, 2]
        assert set(groups) == {"car0", "car1"}

    def test_malformed_line(self, tmp_path):
        (tmp_path / "m.txt").write_text("box only_two.xyz\n")
        with pytest.raises(ValueError, match="m.txt:1"):
            read_dataset_manifest(tmp_path / "m.txt")
