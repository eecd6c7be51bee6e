import json
from pathlib import Path

import numpy as np
import pytest

from henonmix import green as G
from henonmix.cli import main
from henonmix.map_core import standard_map
from henonmix.output import read_csv, read_pgm

MAPS = Path(__file__).resolve().parents[1] / "maps"


def run(args, capsys=None):
    code = main([str(a) for a in args])
    out = capsys.readouterr() if capsys else None
    return code, out


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps({"grid": {"resolution": 12, "n": 6}, "sampler": {"period": 8},
                             "mixing": {"period": 8, "n_max": 6},
                             "render": {"resolution": 32}}))
    return p


class TestInfo:
    def test_standard(self, capsys):
        code, out = run(["info"], capsys)
        assert code == 0
        lines = dict(line.split(None, 1) for line in out.out.splitlines())
        assert lines["degree"] == "2" and lines["I_plus"] == "[1:0:0]" and lines["regular"] == "True"
        assert lines["escape_radius"] == "5.0"

    def test_two_factor(self, capsys):
        code, out = run(["info", "--map", MAPS / "two_factor.json"], capsys)
        assert code == 0 and "degree                   4" in out.out

    def test_zero_a_rejected(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text('{"factors": [{"p": [-10, 0, 1], "a": 0}]}')
        code, out = run(["info", "--map", p], capsys)
        assert code == 2 and "factors[0].a" in out.err

    def test_malformed_map(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text('{"factors": [')
        code, out = run(["info", "--map", p], capsys)
        assert code == 2 and "bad.json:1:" in out.err

    def test_missing_map(self, capsys):
        code, out = run(["info", "--map", "/no/such/map.json"], capsys)
        assert code == 2 and "not found" in out.err


class TestUsage:
    def test_no_command(self, capsys):
        assert run([], capsys)[0] == 2

    def test_unknown_flag(self, capsys):
        assert run(["green", "--bogus"], capsys)[0] == 2

    def test_bad_config(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text('{"threads": 0}')
        assert run(["--config", p, "info"], capsys)[0] == 2

    def test_dump_config(self, capsys):
        code, out = run(["--dump-config"], capsys)
        assert code == 0 and json.loads(out.out)["seed"] == 20240611


class TestGreen:
    def test_slice_rows(self, tmp_path, capsys):
        code, _ = run(["--out", tmp_path, "green"], capsys)
        assert code == 0
        comments, cols, rows = read_csv(tmp_path / "green.csv")
        assert cols == ["x_re", "x_im", "y_re", "y_im", "G_plus", "err_plus", "G_minus", "err_minus"]
        assert len(rows) == 256
        assert any(c.startswith("config-hash") for c in comments)

    def test_point_list(self, tmp_path, capsys):
        pts = tmp_path / "pts.csv"
        pts.write_text("x_re,x_im,y_re,y_im\n0,0,1e6,0\n")
        code, _ = run(["--out", tmp_path, "green", "--points", pts], capsys)
        assert code == 0
        _, _, rows = read_csv(tmp_path / "green.csv")
        assert float(rows[0][4]) == pytest.approx(np.log(1e6), abs=1e-6)

    def test_bad_point_list(self, tmp_path, capsys):
        pts = tmp_path / "pts.csv"
        pts.write_text("1,2,3\n")
        assert run(["--out", tmp_path, "green", "--points", pts], capsys)[0] == 2

    def test_thread_count_does_not_change_bytes(self, tmp_path, capsys):
        run(["--out", tmp_path / "a", "--threads", 1, "green", "--resolution", 24], capsys)
        run(["--out", tmp_path / "b", "--threads", 4, "green", "--resolution", 24], capsys)
        assert (tmp_path / "a/green.csv").read_bytes() == (tmp_path / "b/green.csv").read_bytes()


class TestRender:
    def test_pgm_contract(self, tmp_path, small_config, capsys):
        code, _ = run(["--config", small_config, "--out", tmp_path, "render"], capsys)
        assert code == 0
        path = tmp_path / "render_G_plus_real.pgm"
        comments, img = read_pgm(path)
        assert img.shape == (32, 32)
        assert any(c.startswith("range: 0 ") for c in comments)
        assert any(c.startswith("config-hash") for c in comments)
        hi = float(next(c for c in comments if c.startswith("range:")).split()[2])
        # recompute G+ on the same slice; grayscale must be monotone in it
        half = 1.2 * G.escape_radius(standard_map())
        c = -half + (2 * half / 32) * (np.arange(32) + 0.5)
        U, V = np.meshgrid(c, c, indexing="xy")
        pts = np.stack([U.ravel() + 0j, V.ravel() + 0j], axis=1)
        g = G.green_plus_batch(standard_map(), pts, G.GreenConfig(n_max=60)).values.reshape(32, 32)[::-1]
        np.testing.assert_array_equal(img, np.rint(g / hi * 65535).astype(int))
        order = np.argsort(g.ravel(), kind="stable")
        assert np.all(np.diff(img.ravel()[order].astype(int)) >= 0)


class TestMeasure:
    def test_outputs(self, tmp_path, small_config, capsys):
        code, _ = run(["--config", small_config, "--out", tmp_path, "measure"], capsys)
        assert code == 0
        from henonmix.output import read_cells

        m, header = read_cells(tmp_path / "measure.cells")
        assert m.grid.resolution == (10,) * 4 and header["n"] == 6
        _, cols, rows = read_csv(tmp_path / "measure_summary.csv")
        names = [r[0] for r in rows]
        assert names[:3] == ["raw_total_mass", "total_mass", "clamped_mass_fraction"]
        assert len(names) == 3 + 6


class TestPeriodic:
    def test_period_twelve(self, tmp_path, capsys):
        code, _ = run(["--out", tmp_path, "periodic", "--period", 12], capsys)
        assert code == 0
        comments, cols, rows = read_csv(tmp_path / "periodic_12.csv")
        assert cols == ["code", "point", "x", "y", "multiplier_max", "multiplier_min", "residual"]
        assert len(rows) == 4096
        assert "complete: true" in comments
        assert max(float(r[6]) for r in rows) <= 1e-12

    def test_uncertified_map(self, tmp_path, capsys):
        p = tmp_path / "weak.json"
        p.write_text('{"factors": [{"p": [-1, 0, 1], "a": 0.3}]}')
        code, out = run(["--out", tmp_path, "periodic", "--map", p, "--period", 3], capsys)
        assert code == 3 and "horseshoe" in out.err

    def test_incomplete_exits_numeric(self, tmp_path, capsys):
        p = tmp_path / "weak.json"
        p.write_text('{"factors": [{"p": [-1, 0, 1], "a": 0.3}]}')
        code, _ = run(["--out", tmp_path, "periodic", "--map", p, "--period", 6, "--override"], capsys)
        assert code == 3
        comments, _, _ = read_csv(tmp_path / "periodic_6.csv")
        assert "complete: false" in comments


class TestMix:
    def test_outputs(self, tmp_path, small_config, capsys):
        code, out = run(["--config", small_config, "--out", tmp_path, "mix"], capsys)
        assert code == 0
        _, cols, rows = read_csv(tmp_path / "mix.csv")
        assert cols == ["pair", "n", "C_n", "stderr", "r_n"]
        assert len(rows) == 6 * 7
        report = json.loads((tmp_path / "mix_report.json").read_text())
        assert report["measure"] == "periodic:8" and len(report["pairs"]) == 6

    def test_custom_pair(self, tmp_path, small_config, capsys):
        code, _ = run(["--config", small_config, "--out", tmp_path, "mix",
                       "--phi", "(cos x)", "--psi", "(* y y)"], capsys)
        assert code == 0
        _, _, rows = read_csv(tmp_path / "mix.csv")
        assert {r[0] for r in rows} == {"(cos x) | (* y y)"}

    def test_bad_observable(self, tmp_path, small_config, capsys):
        code, out = run(["--config", small_config, "--out", tmp_path, "mix",
                         "--phi", "(tan x)", "--psi", "y"], capsys)
        assert code == 2 and "tan" in out.err

    def test_unpaired(self, tmp_path, small_config, capsys):
        assert run(["--config", small_config, "--out", tmp_path, "mix", "--phi", "x"], capsys)[0] == 2

    def test_grid_measure_source(self, tmp_path, small_config, capsys):
        run(["--config", small_config, "--out", tmp_path, "measure"], capsys)
        code, _ = run(["--config", small_config, "--out", tmp_path, "mix",
                       "--measure", tmp_path / "measure.cells", "--n-max", 3], capsys)
        assert code == 0


class TestVerify:
    def test_tiny_horizon_fails(self, tmp_path, small_config, capsys):
        code, out = run(["--config", small_config, "--out", tmp_path, "verify", "--n-max", 2], capsys)
        assert code == 4
        assert "[FAIL] criterion  1" in out.out and "[FAIL] criterion  2" in out.out
        assert "failing criteria" in out.err

    def test_missing_map(self, capsys):
        assert run(["verify", "--map", "/no/such/map.json"], capsys)[0] == 2
