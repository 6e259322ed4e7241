import csv
import hashlib
import json
import subprocess
import sys

import pytest

from photonstat import verify
from photonstat.cli import main, parse_grid, parse_pairs


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


class TestGrids:
    def test_forms(self):
        assert parse_grid("0.5").tolist() == [0.5]
        assert parse_grid("0.1,0.5, 1").tolist() == [0.1, 0.5, 1.0]
        g = parse_grid("0.1:10:0.1")
        assert g.size == 100 and g[0] == 0.1 and g[-1] == 10.0 and g[2] == 0.3

    def test_pairs(self):
        assert parse_pairs("1,0;1,1") == [(1, 0), (1, 1)]


class TestAnalytic:
    def test_minimum_row(self, tmp_path):
        assert run(tmp_path, "analytic", "--nbar", "0.5", "--mu", "1", "--m", "1", "--n", "0") == 0
        (r,) = rows(tmp_path / "analytic.csv")
        assert list(r) == ["nbar", "mu", "m", "n", "g_value", "reference_g2"]
        assert float(r["g_value"]) == pytest.approx(0.84375, rel=1e-14)
        assert float(r["reference_g2"]) == 2.0

    def test_independent_row(self, tmp_path):
        run(tmp_path, "analytic", "--nbar", "1", "--mu", "0", "--pairs", "1,1")
        (r,) = rows(tmp_path / "analytic.csv")
        assert float(r["g_value"]) == 1.0

    def test_cut_crosses_two(self, tmp_path):
        run(tmp_path, "figure", "4b2")
        g10 = [(float(r["nbar"]), float(r["g_value"])) for r in rows(tmp_path / "figure_4b2.csv") if (r["m"], r["n"]) == ("1", "0")]
        assert min(g for _, g in g10) < 1
        assert all(g > 2 for nb, g in g10 if nb >= 6)
        assert all(g < 2 for nb, g in g10 if nb <= 5.5)

    def test_json_format(self, tmp_path):
        run(tmp_path, "analytic", "--nbar", "0,1", "--mu", "1", "--format", "json")
        data = json.loads((tmp_path / "analytic.json").read_text())
        assert data[0]["g_value"] is None  # g_10 undefined at nbar = 0
        assert data[1]["nbar"] == 1.0

    @pytest.mark.parametrize("argv", [["--nbar", "3:1:1"], ["--nbar", "a"], ["--mu", "1.5"], ["--pairs", "1"], ["--bogus"]])
    def test_usage_errors(self, tmp_path, argv):
        assert run(tmp_path, "analytic", *argv) == 2


class TestManifest:
    def test_fields_and_digest(self, tmp_path):
        run(tmp_path, "analytic", "--nbar", "0.5", "--seed", "17")
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["subcommand"] == "analytic" and man["seed"] == 17
        assert set(man) == {"subcommand", "parameters", "seed", "version", "outputs", "duration_s"}
        (out,) = man["outputs"]
        digest = hashlib.sha256((tmp_path / out["path"]).read_bytes()).hexdigest()
        assert out["sha256"] == digest

    def test_seed_before_subcommand(self, tmp_path):
        assert main(["--seed", "5", "--out-dir", str(tmp_path), "analytic"]) == 0
        assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 5

    def test_config_file(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"nbar": 1.98, "n_bins": 3000, "seed": 4, "bin-width": 3e-6}))
        assert run(tmp_path, "simulate", "--config", str(conf), "--seed", "6") == 0
        params = json.loads((tmp_path / "manifest.json").read_text())["parameters"]
        assert params["nbar"] == 1.98 and params["n_bins"] == 3000 and params["bin_width"] == 3e-6
        assert params["seed"] == 6  # explicit flag wins over the file

    def test_config_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(tmp_path, "analytic", "--config", str(bad)) == 3
        bad.write_text(json.dumps({"colour": 1}))
        assert run(tmp_path, "analytic", "--config", str(bad)) == 2


class TestSimulateCorrelate:
    def test_reproducible(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert main(["simulate", "--n-bins", "20000", "--seed", "9", "--counts-csv", "--out-dir", str(d)]) == 0
        for name in ("simulation.ptag", "counts.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        ma = json.loads((a / "manifest.json").read_text())
        mb = json.loads((b / "manifest.json").read_text())
        assert ma["outputs"] == mb["outputs"]

    def test_ptag_and_csv_agree(self, tmp_path):
        run(tmp_path, "simulate", "--n-bins", "20000", "--seed", "2", "--counts-csv")
        assert main(["correlate", str(tmp_path / "simulation.ptag"), "--max-lag", "60", "--out-dir", str(tmp_path / "p")]) == 0
        # PTAG bins span first to last tag, so trim empty edge bins from the CSV to match
        lines = (tmp_path / "counts.csv").read_text().splitlines()
        body = lines[2:]
        busy = [i for i, ln in enumerate(body) if ln.split(",")[1:] != ["0", "0"]]
        trimmed = tmp_path / "trimmed.csv"
        trimmed.write_text("\n".join(lines[:2] + body[busy[0] : busy[-1] + 1]) + "\n")
        assert main(["correlate", str(trimmed), "--max-lag", "60", "--out-dir", str(tmp_path / "c")]) == 0
        assert (tmp_path / "p" / "gmn.csv").read_bytes() == (tmp_path / "c" / "gmn.csv").read_bytes()
        head = rows(tmp_path / "p" / "gmn.csv")[0]
        assert list(head) == ["lag_or_dx", "g_value", "stderr", "coincidences"]
        summary = json.loads((tmp_path / "p" / "gmn_summary.json").read_text())
        assert summary["n_bins"] == busy[-1] - busy[0] + 1 and summary["background_lags"] == [50, 60]

    def test_format_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.ptag"
        bad.write_bytes(b"PTAG1\x01" + b"\x01" + b"\x00" * 15 + b"\x00" * 5)
        assert main(["correlate", str(bad), "--out-dir", str(tmp_path)]) == 3
        assert main(["correlate", str(tmp_path / "missing.ptag"), "--out-dir", str(tmp_path)]) == 3

    def test_usage_error_exit_code(self, tmp_path):
        assert run(tmp_path, "simulate", "--source", "sun") == 2
        assert run(tmp_path, "simulate", "--mu-peak", "2") == 2


class TestFigures:
    def test_unknown_id(self, tmp_path):
        assert run(tmp_path, "figure", "5") == 2

    def test_figure_3_minimum(self, tmp_path):
        run(tmp_path, "figure", "3")
        best = min(rows(tmp_path / "figure_3.csv"), key=lambda r: float(r["g_value"]))
        assert (float(best["nbar"]), float(best["mu"])) == (0.5, 1.0)
        assert float(best["g_value"]) == pytest.approx(0.84375, rel=1e-14)

    def test_figure_7_laser_flat(self, tmp_path):
        run(tmp_path, "figure", "7", "--n-bins", "300000")
        laser = [r for r in rows(tmp_path / "figure_7.csv") if r["source"] == "laser"]
        assert len(laser) == 10
        for r in laser:
            assert abs(float(r["g_value"]) - 1) < 3.5 * float(r["stderr"])

    def test_figure_8a_dip(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PHOTONSTAT_THREADS", "1")
        run(tmp_path, "figure", "8a", "--n-bins", "200000")
        r = [x for x in rows(tmp_path / "figure_8a.csv") if x["m"] == "1" and float(x["dx"]) == 0.0][0]
        assert float(r["g_value"]) < 1

    def test_threads_do_not_change_output(self, tmp_path, monkeypatch):
        out = {}
        for threads in ("1", "2"):
            monkeypatch.setenv("PHOTONSTAT_THREADS", threads)
            d = tmp_path / threads
            assert main(["figure", "8b", "--n-bins", "5000", "--out-dir", str(d)]) == 0
            out[threads] = (d / "figure_8b.csv").read_bytes()
        assert out["1"] == out["2"]

    def test_figure_6_reproducible(self, tmp_path):
        for d in ("a", "b"):
            main(["figure", "6", "--n-bins", "20000", "--seed", "3", "--out-dir", str(tmp_path / d)])
        assert (tmp_path / "a" / "figure_6.csv").read_bytes() == (tmp_path / "b" / "figure_6.csv").read_bytes()


class TestVerify:
    def test_passes(self, tmp_path, capsys):
        assert run(tmp_path, "verify") == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("pass") == len(verify.CHECKS)

    def test_failure_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(verify, "CHECKS", [lambda seed: ("always fails", False, "forced")])
        assert run(tmp_path, "verify") == 1

    def test_crashing_check_is_a_failure(self, tmp_path, monkeypatch):
        def boom(seed):
            raise RuntimeError("boom")

        monkeypatch.setattr(verify, "CHECKS", [boom])
        assert run(tmp_path, "verify") == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "photonstat", "analytic", "--nbar", "6", "--out-dir", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert float(rows(tmp_path / "analytic.csv")[0]["g_value"]) == pytest.approx(343 / 169)
