import json
import os

import numpy as np
import pytest

import scenes
from embersim.cli import main


class TestRunCommand:
    def test_run_produces_artifacts(self, tmp_path):
        scene = scenes.write_box_drop_scene(tmp_path, duration=0.1, h=0.01)
        out = tmp_path / "out"
        code = main(["run", "--scene", scene, "--out", str(out)])
        assert code == 0
        assert (out / "forces.csv").exists()
        assert (out / "stats.csv").exists()
        assert (out / "config_effective.json").exists()
        assert len(list((out / "frames").iterdir())) == 10

    def test_missing_scene_exit_1(self, tmp_path, capsys):
        code = main(["run", "--scene", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
        assert code == 1
        err = capsys.readouterr().err
        assert "nope.json" in err

    def test_h_override_row_count(self, tmp_path):
        scene = scenes.write_box_drop_scene(tmp_path, duration=0.2, h=0.01)
        out = tmp_path / "out"
        code = main(["run", "--scene", scene, "--out", str(out), "--h", "0.02", "--no-frames"])
        assert code == 0
        rows = (out / "stats.csv").read_text().strip().splitlines()
        assert len(rows) - 1 == 10  # floor(0.2 / 0.02)
        cfg = json.loads((out / "config_effective.json").read_text())
        assert cfg["solver"]["h"] == 0.02

    def test_determinism_across_runs_and_threads(self, tmp_path):
        scene = scenes.write_box_drop_scene(tmp_path, duration=0.2, h=0.005)
        outs = []
        for name, threads in (("a", "1"), ("b", "8")):
            out = tmp_path / name
            code = main(
                ["run", "--scene", scene, "--out", str(out), "--no-frames", "--threads", threads]
            )
            assert code == 0
            outs.append((out / "forces.csv").read_bytes())
        assert outs[0] == outs[1]


class TestConvergenceCommand:
    def test_two_point_study(self, tmp_path, capsys):
        scene = scenes.write_box_drop_scene(tmp_path, duration=0.2, h=0.01)
        out = tmp_path / "conv"
        code = main(
            [
                "convergence",
                "--scene",
                scene,
                "--out",
                str(out),
                "--h-list",
                "0.02,0.01",
                "--h-ref",
                "0.0025",
            ]
        )
        assert code == 0
        rows = (out / "convergence.csv").read_text().strip().splitlines()
        assert rows[0] == "h,error,wall_ms"
        assert len(rows) == 3
        assert "fitted log-log slope" in capsys.readouterr().out

    def test_single_h_reports_no_slope(self, tmp_path, capsys):
        scene = scenes.write_box_drop_scene(tmp_path, duration=0.1, h=0.01)
        out = tmp_path / "conv1"
        code = main(
            ["convergence", "--scene", scene, "--out", str(out), "--h-list", "0.02", "--h-ref", "0.005"]
        )
        assert code == 0
        assert "n/a" in capsys.readouterr().out


class TestAuditCommand:
    def test_clean_frames_pass(self, tmp_path, capsys):
        scene = scenes.write_box_drop_scene(tmp_path, duration=0.05, h=0.01)
        out = tmp_path / "out"
        assert main(["run", "--scene", scene, "--out", str(out)]) == 0
        code = main(["audit", "--frames", str(out / "frames")])
        assert code == 0
        assert "0 with intersections" in capsys.readouterr().out

    def test_intersecting_frame_fails(self, tmp_path):
        from embersim.formats import save_obj

        d = tmp_path / "frames"
        d.mkdir()
        verts = np.array(
            [
                [0, 0, 0],
                [1, 0, 0],
                [0, 1, 0.0],
                [0.2, 0.2, -0.5],
                [0.3, 0.2, 0.5],
                [0.2, 0.3, 0.5],
            ]
        )
        save_obj(d / "frame_000001.obj", verts, np.array([[0, 1, 2], [3, 4, 5]]))
        assert main(["audit", "--frames", str(d)]) == 1

    def test_empty_dir_is_error(self, tmp_path):
        d = tmp_path / "frames"
        d.mkdir()
        assert main(["audit", "--frames", str(d)]) == 1


class TestVerifyCommand:
    def test_pristine_build_passes(self, capsys):
        code = main(["verify", "--seed", "0"])
        out = capsys.readouterr().out
        assert code == 0
        assert "FAIL" not in out
        # the report carries measured FD errors at or below 1e-6
        for line in out.splitlines():
            if line.startswith("fd_"):
                assert "PASS" in line

    def test_corrupted_gradient_fails(self, capsys):
        code = main(["verify", "--seed", "0", "--corrupt", "fd_elastic_corotational"])
        out = capsys.readouterr().out
        assert code == 1
        assert any("fd_elastic_corotational" in l and "FAIL" in l for l in out.splitlines())
