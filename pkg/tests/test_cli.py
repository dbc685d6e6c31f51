import json
import re
import subprocess
import sys

import numpy as np
import pytest

from hairprism import kernels
from hairprism.cli import EXIT_INVALID, EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, HIST_BINS, main
from hairprism.io import read_hair, read_mesh, write_hair, write_mesh
from hairprism.mesh import TriMesh, icosphere
from hairprism.strands import Hairstyle, synth_hairstyle

from conftest import straight_hairstyle


def call(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def call_json(capsys, *argv):
    code, out, _ = call(capsys, *argv, "--json")
    doc = json.loads(out)
    assert doc["exit_code"] == code
    return code, doc


@pytest.fixture
def wavy(tmp_path):
    p = tmp_path / "wavy.bin"
    write_hair(synth_hairstyle("wavy", 12, 20, 0), p)
    return p


@pytest.fixture
def head(tmp_path):
    p = tmp_path / "head.ply"
    write_mesh(icosphere(2), p)
    return p


class TestStats:
    def test_straight(self, capsys, tmp_path):
        p = tmp_path / "s.bin"
        write_hair(straight_hairstyle(6, 10), p)
        code, doc = call_json(capsys, "stats", p)
        assert code == EXIT_OK and doc["cs_ori"] == 1.0 and doc["c_mean"] == 0.0
        assert doc["histogram"]["counts"][0] == 6 and len(doc["histogram"]["counts"]) == 20
        assert doc["histogram"]["edges"] == HIST_BINS.tolist()

    def test_json_matches_human(self, capsys, wavy):
        _, doc = call_json(capsys, "stats", wavy)
        code, text, _ = call(capsys, "stats", wavy)
        assert code == EXIT_OK
        m = re.search(r"strands=(\d+) points=(\d+) CS_ori=(\S+) C_mean=(\S+)", text)
        assert (int(m[1]), int(m[2])) == (doc["n_strands"], doc["n_points"])
        assert float(m[3]) == pytest.approx(doc["cs_ori"], rel=1e-5)
        assert float(m[4]) == pytest.approx(doc["c_mean"], rel=1e-5)
        bins = [int(line.split()[-1]) for line in text.splitlines() if line.strip().startswith("[")]
        assert bins == doc["histogram"]["counts"]

    def test_directory_mode(self, capsys, tmp_path):
        d = tmp_path / "ds"
        d.mkdir()
        write_hair(straight_hairstyle(5, 8), d / "a.bin")
        write_hair(synth_hairstyle("curly", 8, 30, 1), d / "b.json")
        rng = np.random.default_rng(0)
        chaotic = Hairstyle.from_points(np.cumsum(rng.normal(size=(8, 10, 3)), axis=1))
        write_hair(chaotic, d / "c.bin")
        (d / "notes.txt").write_text("ignored")
        code, doc = call_json(capsys, "stats", d)
        assert code == EXIT_OK and doc["count"] == 3
        assert [r["file"] for r in doc["hairstyles"]] == ["a.bin", "b.json", "c.bin"]
        expected = sum(r["cs_ori"] > 0.9 for r in doc["hairstyles"]) / 3
        assert doc["fraction_cs_ori_above_0_9"] == expected
        assert doc["hairstyles"][2]["cs_ori"] < 0.9

    def test_missing_file(self, capsys, tmp_path):
        assert call(capsys, "stats", tmp_path / "nope.bin")[0] == EXIT_IO

    def test_corrupt_file(self, capsys, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"\x01\x00")
        code, doc = call_json(capsys, "stats", p)
        assert code == EXIT_IO and "truncated header" in doc["error"]


class TestPrismatize:
    def test_default_k4(self, capsys, wavy, tmp_path):
        out = tmp_path / "m.obj"
        code, doc = call_json(capsys, "prismatize", wavy, "--out", out)
        assert code == EXIT_OK and doc["k_edges"] == 4 and doc["watertight"]
        assert read_mesh(out).n_vertices == 4 * 12 * 20

    def test_scalp_area_radius(self, capsys, wavy, tmp_path):
        code, doc = call_json(capsys, "prismatize", wavy, "--out", tmp_path / "m.ply", "--scalp-area", "0.5",
                              "--k", "6")
        assert code == EXIT_OK and doc["radius"] == pytest.approx(np.sqrt(0.5 / (12 * np.pi)))

    def test_empty_hairstyle(self, capsys, tmp_path):
        p = tmp_path / "e.bin"
        p.write_bytes(b"\0\0\0\0")
        out = tmp_path / "e.obj"
        code, doc = call_json(capsys, "prismatize", p, "--out", out)
        assert code == EXIT_OK and doc["triangles"] == 0 and out.exists()

    def test_bad_k_and_exclusive_flags(self, capsys, wavy, tmp_path):
        assert call(capsys, "prismatize", wavy, "--out", tmp_path / "m.obj", "--k", "2")[0] == EXIT_USAGE
        assert call(capsys, "prismatize", wavy, "--out", tmp_path / "m.obj", "--radius", "0.1",
                    "--scalp-area", "1")[0] == EXIT_USAGE
        assert call(capsys, "prismatize", wavy)[0] == EXIT_USAGE
        assert not (tmp_path / "m.obj").exists()


class TestValidate:
    def test_prism_output_passes(self, capsys, wavy, tmp_path):
        out = tmp_path / "m.ply"
        call(capsys, "prismatize", wavy, "--out", out)
        code, doc = call_json(capsys, "validate", out)
        assert code == EXIT_OK and doc["passed"]

    def test_broken_mesh(self, capsys, tmp_path):
        m = icosphere(1)
        p = tmp_path / "holed.obj"
        write_mesh(TriMesh(m.vertices, m.triangles[1:]), p)
        code, doc = call_json(capsys, "validate", p)
        assert code == EXIT_INVALID and doc["boundary_edges"] == 3
        code, text, _ = call(capsys, "validate", p)
        assert "boundary=3" in text

    def test_non_mesh(self, capsys, tmp_path):
        p = tmp_path / "x.obj"
        p.write_bytes(b"\x89PNG\r\n\x1a\n\x00")
        assert call(capsys, "validate", p)[0] == EXIT_IO


class TestFit:
    def test_identical_is_immediate(self, capsys, wavy):
        code, doc = call_json(capsys, "fit", wavy, wavy)
        assert code == EXIT_OK and doc["steps"] == 0 and doc["final_loss"] == 0.0

    def test_synth_recovers(self, capsys, tmp_path):
        p = tmp_path / "t.bin"
        write_hair(synth_hairstyle("curly", 10, 50, 2), p)
        out, trace = tmp_path / "f.bin", tmp_path / "trace.csv"
        code, doc = call_json(capsys, "fit", p, "--synth", "--steps", "500", "--out", out, "--trace", trace)
        assert code == EXIT_OK and doc["final_rmse"] < 0.1 * doc["initial_rmse"]
        assert read_hair(out).points.shape == (10, 50, 3)
        lines = trace.read_text().splitlines()
        assert lines[0].startswith("step,loss") and len(lines) == 502

    def test_mismatch(self, capsys, wavy, tmp_path):
        other = tmp_path / "o.bin"
        write_hair(synth_hairstyle("wavy", 12, 21, 0), other)
        assert call(capsys, "fit", wavy, other)[0] == EXIT_USAGE

    def test_missing_init(self, capsys, wavy):
        assert call(capsys, "fit", wavy)[0] == EXIT_USAGE


class TestOptimize:
    def test_collisions_removed(self, capsys, tmp_path, head):
        h = synth_hairstyle("wavy", 10, 30, 0)
        pts = h.points.copy()
        pts[:, 1:] *= 0.9
        p = tmp_path / "in.bin"
        write_hair(h.with_points(pts), p)
        code, doc = call_json(capsys, "optimize", p, "--head", head, "--steps", "1000", "--out", tmp_path / "o.bin")
        assert code == EXIT_OK
        assert doc["before"]["collisions"] > 0 and doc["after"]["collisions"] == 0
        assert {"cs_ori", "c_mean"} <= set(doc["after"])
        assert len(doc["warnings"]) == 2

    def test_missing_head(self, capsys, wavy):
        code, doc = call_json(capsys, "optimize", wavy)
        assert code == EXIT_USAGE and "lambda_colli" in doc["error"]

    def test_head_not_needed_without_collision_weight(self, capsys, wavy, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"loss": {"lambda_colli": 0}, "schedule": {"step_count": 5}}))
        assert call(capsys, "optimize", wavy, "--config", cfg)[0] == EXIT_OK

    def test_c_target_steering(self, capsys, tmp_path):
        p = tmp_path / "s.bin"
        write_hair(synth_hairstyle("straight", 10, 40, 0), p)
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"loss": {"lambda_colli": 0}}))
        code, doc = call_json(capsys, "optimize", p, "--config", cfg, "--c-target", "wavy", "--steps", "200")
        assert code == EXIT_OK
        assert abs(doc["after"]["c_mean"] - 0.1) < abs(doc["before"]["c_mean"] - 0.1)
        assert call(capsys, "optimize", p, "--config", cfg, "--c-target", "frizzy")[0] == EXIT_USAGE

    def test_config_errors(self, capsys, wavy, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"loss": {"lambda_sds": 1}}))
        code, doc = call_json(capsys, "optimize", wavy, "--config", cfg)
        assert code == EXIT_USAGE and "lambda_sds" in doc["error"]
        cfg.write_text("{")
        assert call(capsys, "optimize", wavy, "--config", cfg)[0] == EXIT_IO

    def test_degenerate_input_is_numeric_failure(self, capsys, tmp_path, head):
        h = synth_hairstyle("wavy", 3, 6, 0)
        pts = h.points.copy()
        pts[1, 3] = pts[1, 2]
        p = tmp_path / "d.json"
        write_hair(h.with_points(pts), p)
        out = tmp_path / "o.bin"
        assert call(capsys, "optimize", p, "--head", head, "--steps", "3", "--out", out)[0] == EXIT_NUMERIC
        assert not out.exists()


class TestGradcheck:
    def test_pass(self, capsys):
        code, doc = call_json(capsys, "gradcheck", "--instances", "2", "--check", "fit", "--check", "prism_cross")
        assert code == EXIT_OK and doc["passed"] and set(doc["checks"]) == {"fit", "prism_cross"}

    def test_sign_flip_fails(self, capsys):
        code, doc = call_json(capsys, "gradcheck", "--instances", "1", "--check", "cur", "--inject-sign-flip", "cur")
        assert code == EXIT_NUMERIC and not doc["passed"]

    @pytest.mark.parametrize("argv", [["--instances", "0"], ["--check", "nope"]])
    def test_usage(self, capsys, argv):
        assert call(capsys, "gradcheck", *argv)[0] == EXIT_USAGE


class TestSynth:
    def test_writes(self, capsys, tmp_path):
        out = tmp_path / "c.json"
        code, doc = call_json(capsys, "synth", "curly", "--strands", "5", "--points", "9", "--seed", "4",
                              "--out", out)
        assert code == EXIT_OK
        h = read_hair(out)
        assert h.points.shape == (5, 9, 3)
        assert h.points.tobytes() == synth_hairstyle("curly", 5, 9, 4).points.tobytes()

    def test_bad_counts(self, capsys, tmp_path):
        assert call(capsys, "synth", "wavy", "--points", "2", "--out", tmp_path / "x.bin")[0] == EXIT_USAGE
        assert call(capsys, "synth", "frizzy", "--out", tmp_path / "x.bin")[0] == EXIT_USAGE


class TestDeterminism:
    def test_repeat_runs_identical(self, capsys, tmp_path, head):
        write_hair(synth_hairstyle("curly", 8, 20, 0), tmp_path / "in.bin")
        blobs = []
        for i in range(2):
            a = tmp_path / f"m{i}.ply"
            b = tmp_path / f"o{i}.bin"
            _, out1, _ = call(capsys, "stats", tmp_path / "in.bin", "--json")
            call(capsys, "prismatize", tmp_path / "in.bin", "--out", a)
            _, out2, _ = call(capsys, "optimize", tmp_path / "in.bin", "--head", head, "--steps", "20",
                                  "--out", b, "--json", "--seed", "3")
            blobs.append((out1, a.read_bytes(), b.read_bytes(), json.loads(out2)["final_loss"]))
        assert blobs[0] == blobs[1]

    def test_thread_counts_same_loss(self, capsys, tmp_path, head):
        write_hair(synth_hairstyle("wavy", 8, 20, 0), tmp_path / "in.bin")
        before = kernels.get_num_threads()
        try:
            losses = [call_json(capsys, "optimize", tmp_path / "in.bin", "--head", head, "--steps", "20",
                                "--threads", t)[1]["final_loss"] for t in ("1", "8")]
        finally:
            kernels.set_num_threads(before)
        assert losses[0] == losses[1]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hairprism.cli", "synth", "wavy", "--strands", "3", "--points", "5",
                        "--out", str(tmp_path / "w.bin")], capture_output=True, text=True)
    assert r.returncode == 0 and "wrote" in r.stdout
    r = subprocess.run([sys.executable, "-m", "hairprism.cli", "bogus"], capture_output=True, text=True)
    assert r.returncode == EXIT_USAGE
