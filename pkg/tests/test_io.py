"""File formats: raw float grids, PNG, camera/pose JSON, Gaussian PLY."""

from __future__ import annotations

import math
import struct

import numpy as np
import pytest

from pano4d import io
from pano4d.erp import PerspectiveCamera
from pano4d.gaussians import GaussianSet
from pano4d.io import PipelineInputError


class TestRawGrid:
    def test_round_trip_all_ranks(self, tmp_path):
        rng = np.random.default_rng(0)
        expected_shapes = {
            (8, 16): (1, 8, 16, 1),
            (8, 16, 3): (1, 8, 16, 3),
            (4, 8, 16): (4, 8, 16, 1),
            (2, 8, 16, 3): (2, 8, 16, 3),
        }
        for shape, full in expected_shapes.items():
            arr = rng.random(shape).astype(np.float32)
            path = tmp_path / "grid.erpf"
            io.write_raw_grid(path, arr)
            back = io.read_raw_grid(path)
            assert back.shape == full
            np.testing.assert_array_equal(back.reshape(-1), arr.reshape(-1))

    def test_header_layout(self, tmp_path):
        path = tmp_path / "grid.erpf"
        io.write_raw_grid(path, np.zeros((2, 4, 8, 3), dtype=np.float32))
        blob = path.read_bytes()
        assert blob[:4] == b"ERPF"
        h, w, c, t = struct.unpack("<IIII", blob[4:20])
        assert (h, w, c, t) == (4, 8, 3, 2)
        assert len(blob) == 20 + 4 * 2 * 4 * 8 * 3

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.erpf"
        path.write_bytes(b"NOPE" + b"\0" * 32)
        with pytest.raises(PipelineInputError):
            io.read_raw_grid(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "trunc.erpf"
        io.write_raw_grid(path, np.zeros((4, 8), dtype=np.float32))
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(PipelineInputError) as err:
            io.read_raw_grid(path)
        assert "trunc.erpf" in str(err.value)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(PipelineInputError):
            io.read_raw_grid(tmp_path / "nope.erpf")


class TestPng:
    def test_round_trip_quantized(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.random((8, 16, 3))
        path = tmp_path / "img.png"
        io.write_png(path, img)
        back = io.read_png(path)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9

    def test_grayscale(self, tmp_path):
        img = np.linspace(0, 1, 64).reshape(8, 8)
        path = tmp_path / "gray.png"
        io.write_png(path, img)
        assert io.read_png(path).shape == (8, 8)

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.random((8, 16, 3))
        io.write_png(tmp_path / "a.png", img)
        io.write_png(tmp_path / "b.png", img)
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


class TestCamerasJson:
    def test_round_trip(self, tmp_path):
        cams = [PerspectiveCamera(0.3, -0.2, math.pi / 2, 32, 32),
                PerspectiveCamera(1.1, 0.4, 1.2, 16, 16)]
        path = tmp_path / "cams.json"
        io.write_cameras_json(path, cams)
        back = io.read_cameras_json(path)
        for a, b in zip(cams, back):
            assert a.azimuth == pytest.approx(b.azimuth)
            assert a.elevation == pytest.approx(b.elevation)
            assert a.fov == pytest.approx(b.fov)
            assert (a.height, a.width) == (b.height, b.width)

    def test_invalid_entry_rejected(self, tmp_path):
        path = tmp_path / "cams.json"
        path.write_text('[{"azimuth_deg": 0}]')
        with pytest.raises(PipelineInputError):
            io.read_cameras_json(path)


class TestPosesJson:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        theta = 0.4
        rot = np.array([[math.cos(theta), -math.sin(theta), 0],
                        [math.sin(theta), math.cos(theta), 0],
                        [0, 0, 1.0]])
        poses = [{"R": rot, "t": rng.normal(size=3), "fov": math.pi / 2,
                  "h": 32, "w": 32}]
        path = tmp_path / "poses.json"
        io.write_poses_json(path, poses)
        back = io.read_poses_json(path)
        np.testing.assert_allclose(back[0]["R"], rot, atol=1e-12)
        np.testing.assert_allclose(back[0]["t"], poses[0]["t"], atol=1e-12)
        assert back[0]["fov"] == pytest.approx(math.pi / 2)

    def test_non_orthonormal_rejected(self, tmp_path):
        path = tmp_path / "poses.json"
        path.write_text('[{"R": [2,0,0,0,1,0,0,0,1], "t": [0,0,0], '
                        '"fov_deg": 90, "h": 8, "w": 8}]')
        with pytest.raises(PipelineInputError):
            io.read_poses_json(path)

    def test_reflection_rejected(self, tmp_path):
        path = tmp_path / "poses.json"
        path.write_text('[{"R": [-1,0,0,0,1,0,0,0,1], "t": [0,0,0], '
                        '"fov_deg": 90, "h": 8, "w": 8}]')
        with pytest.raises(PipelineInputError):
            io.read_poses_json(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(PipelineInputError):
            io.read_poses_json(tmp_path / "missing.json")


def random_gaussians(rng, n=17) -> GaussianSet:
    return GaussianSet(
        means=rng.normal(size=(n, 3)),
        quats=rng.normal(size=(n, 4)),
        log_scales=rng.normal(size=(n, 3)),
        opacity_raw=rng.normal(size=n),
        colors=rng.random((n, 3)))


class TestPly:
    def test_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(4)
        gs = random_gaussians(rng)
        p1 = tmp_path / "a.ply"
        p2 = tmp_path / "b.ply"
        io.write_gaussians_ply(p1, gs)
        io.write_gaussians_ply(p2, io.read_gaussians_ply(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_properties(self, tmp_path):
        rng = np.random.default_rng(5)
        path = tmp_path / "g.ply"
        io.write_gaussians_ply(path, random_gaussians(rng, 3))
        header = path.read_bytes().split(b"end_header")[0].decode()
        assert "format binary_little_endian 1.0" in header
        assert "element vertex 3" in header
        for prop in io.PLY_PROPS:
            assert f"property float {prop}" in header

    def test_values_survive_at_float32(self, tmp_path):
        rng = np.random.default_rng(6)
        gs = random_gaussians(rng)
        path = tmp_path / "g.ply"
        io.write_gaussians_ply(path, gs)
        back = io.read_gaussians_ply(path)
        np.testing.assert_array_equal(back.means,
                                      gs.means.astype(np.float32).astype(np.float64))

    def test_corrupt_rejected(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_bytes(b"not a ply at all")
        with pytest.raises(PipelineInputError):
            io.read_gaussians_ply(path)


class TestCsv:
    def test_loss_trace_format(self, tmp_path):
        rows = [{"iteration": 0, "l1": 0.5, "ssim": 0.25, "lpips": 0.0,
                 "sem": 0.0, "geo": 0.125, "total": 1.0}]
        path = tmp_path / "trace.csv"
        io.write_loss_trace_csv(path, rows)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,L1,ssim,lpips,sem,geo,total"
        assert lines[1].startswith("0,0.5,0.25,0,0,0.125,1")

    def test_calibration_format(self, tmp_path):
        from pano4d.temporal_align import TemporalCalibration

        path = tmp_path / "cal.csv"
        io.write_calibration_csv(path, [TemporalCalibration(1.0, 0.0),
                                        TemporalCalibration(0.5, -0.25)])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,alpha,beta"
        assert lines[1] == "0,1,0"
        assert lines[2] == "1,0.5,-0.25"
