import json
import math
import subprocess
import sys

import numpy as np
import pytest

from leakrate.cli import emit_plot_data, main
from leakrate.core_math import DomainError
from leakrate.scenario import TargetBehavior, WernerSpec, werner_behavior

CHSH_ANGLES = ((0.0, math.pi / 2), (math.pi / 4, 3 * math.pi / 4))


def write_behavior(path, table):
    path.write_text(TargetBehavior(table).to_json())


class TestDimBound:
    def run(self, out):
        return main(["dim-bound", "--d-l", "33", "--delta", "1e-3",
                     "--n", "1000000", "--out", str(out)])

    def test_writes_payload_and_meta(self, tmp_path):
        out = tmp_path / "db.json"
        assert self.run(out) == 0
        payload = json.loads(out.read_text())
        assert payload["d_l"] == 33
        assert payload["per_round_bits"] > payload["shannon_asymptote_bits"]
        meta = json.loads((tmp_path / "db.json.meta.json").read_text())
        assert meta["command"] == "dim-bound"
        assert "wall_time_s" in meta

    def test_reruns_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert self.run(a) == 0 and self.run(b) == 0
        assert a.read_bytes() == b.read_bytes()


class TestValidate:
    def test_signalling_exit_one(self, tmp_path, capsys):
        t = werner_behavior(WernerSpec(0.1, *CHSH_ANGLES)).table.copy()
        t[0, 0, 0, 0] += 0.05
        t[0, 0, 0, 1] -= 0.05
        src = tmp_path / "bad.json"
        write_behavior(src, t)
        out = tmp_path / "report.json"
        assert main(["validate", "--behavior", str(src),
                     "--out", str(out)]) == 1
        report = json.loads(out.read_text())
        assert not report["valid"]
        assert report["violations"][0]["kind"] == "no-signalling"
        assert "no-signalling" in capsys.readouterr().err

    def test_valid_behavior_exit_zero(self, tmp_path):
        src = tmp_path / "good.json"
        write_behavior(src, werner_behavior(WernerSpec(0.1, *CHSH_ANGLES)).table)
        out = tmp_path / "report.json"
        assert main(["validate", "--behavior", str(src),
                     "--out", str(out)]) == 0
        assert json.loads(out.read_text())["valid"]

    def test_missing_file_exit_two(self, tmp_path, capsys):
        assert main(["validate", "--behavior", str(tmp_path / "none.json"),
                     "--out", str(tmp_path / "r.json")]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "config-error"


class TestChain:
    def test_chain_from_config(self, tmp_path):
        cfg = tmp_path / "chain.json"
        cfg.write_text(json.dumps({
            "eps": 1e-9, "tau": 0.1, "eps_l": 1e-10, "eps_pe": 1e-10,
            "hmin_base": 1000.0, "hmax_ae": 20.0, "hmax_be": 20.0}))
        out = tmp_path / "chain_out.json"
        assert main(["chain", "--config", str(cfg), "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert not payload["vacuous"]
        assert payload["hmin_corrected_bits"] < 1000.0 - 80.0

    def test_missing_key_exit_two(self, tmp_path, capsys):
        cfg = tmp_path / "chain.json"
        cfg.write_text(json.dumps({"eps": 1e-9}))
        assert main(["chain", "--config", str(cfg),
                     "--out", str(tmp_path / "o.json")]) == 2
        assert "config-error" in capsys.readouterr().err


class TestEnergyBound:
    def test_single_row(self, tmp_path):
        out = tmp_path / "eb.csv"
        assert main(["energy-bound", "--spacings", "1,2", "--e-max", "1e5",
                     "--delta", "1e-2", "--alpha", "0.9",
                     "--out", str(out)]) == 0
        header, row = out.read_text().splitlines()
        assert header.startswith("alpha,delta,emax,renyi_bits")
        assert float(row.split(",")[3]) > 0.0

    def test_bad_spec_exit_one(self, tmp_path, capsys):
        assert main(["energy-bound", "--spacings", "1,0", "--e-max", "1e5",
                     "--delta", "1e-2", "--alpha", "0.9",
                     "--out", str(tmp_path / "eb.csv")]) == 1
        assert "domain-error" in capsys.readouterr().err


class TestSweepAndSingleRound:
    def test_single_round_alias_payload(self, tmp_path):
        out = tmp_path / "sr.json"
        assert main(["single-round", "--preset", "fig2", "--q", "0.5",
                     "--delta", "0", "--model", "bounded-weight",
                     "--level", "1", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["entropy_bits"] == pytest.approx(0.0, abs=1e-6)
        assert payload["certified"]

    def test_sweep_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--preset", "TwoInputCHSH",
                     "--q-grid", "0.1,0.5", "--delta", "1e-3",
                     "--model", "classical-prob", "--level", "1",
                     "--jobs", "1", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == ("preset,model,encoding,level,q,delta,"
                            "entropy_bits,pguess,cert_slack,"
                            "dashed_bits,fcont_bits")
        assert len(lines) == 3
        meta = json.loads((tmp_path / "sweep.csv.meta.json").read_text())
        assert meta["rows"] == 2 and meta["certified_rows"] == 2

    def test_sweep_reruns_byte_identical(self, tmp_path):
        args = ["sweep", "--preset", "TwoInputCHSH", "--q-grid", "0.5",
                "--delta", "0", "--model", "bounded-weight", "--level", "1",
                "--jobs", "1"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_grid_colon_syntax(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--preset", "TwoInputCHSH",
                     "--q-grid", "0.3:0.5:0.1", "--delta", "0",
                     "--model", "classical-prob", "--level", "1",
                     "--encoding", "chsh-only", "--jobs", "1",
                     "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 4


class TestEmitPlotData:
    SWEEP_ROWS = [
        {"model": "bounded-weight", "delta": 0.001, "q": 0.0,
         "entropy_bits": 0.5, "dashed_bits": 0.8},
        {"model": "bounded-weight", "delta": 0.001, "q": 0.1,
         "entropy_bits": 0.2, "dashed_bits": 0.5},
        {"model": "bounded-weight", "delta": 0.0, "q": 0.0,
         "entropy_bits": 0.9, "dashed_bits": 0.9},
    ]

    def test_fig1_emits_solid_and_dashed(self, tmp_path):
        paths = emit_plot_data(self.SWEEP_ROWS, "fig1", str(tmp_path))
        names = {p.split("/")[-1] for p in paths}
        assert "fig1_bounded-weight_delta0.001.csv" in names
        assert "fig1_bounded-weight_delta0.001_dashed.csv" in names
        assert "fig1.gp" in names
        script = (tmp_path / "fig1.gp").read_text()
        assert "dashtype 2" in script

    def test_fig2_skips_dashed(self, tmp_path):
        paths = emit_plot_data(self.SWEEP_ROWS, "fig2", str(tmp_path))
        assert not any("dashed" in p.split("/")[-1] for p in paths)

    def test_fig4_grouping(self, tmp_path):
        rows = [{"n": 10**k, "per_round_bits": 1.0 / k, "delta": d,
                 "eps": e}
                for k in (4, 6) for d in (1e-3, 1e-4, 1e-5)
                for e in (1e-3, 1e-10)]
        paths = emit_plot_data(rows, "fig4", str(tmp_path))
        curves = [p for p in paths if p.endswith(".csv")]
        assert len(curves) == 6

    def test_energy_table_grouping(self, tmp_path):
        rows = [{"alpha": a, "renyi_bits": 1.0, "delta": d, "emax": e}
                for a in (0.9, 0.99) for d in (1e-2,) for e in (1e5, 1e12)]
        paths = emit_plot_data(rows, "energy-table", str(tmp_path))
        assert sum(p.endswith(".csv") for p in paths) == 2

    def test_empty_table(self, tmp_path):
        paths = emit_plot_data([], "fig1", str(tmp_path))
        assert paths == [str(tmp_path / "fig1.gp")]

    def test_kind_mismatch(self, tmp_path):
        with pytest.raises(DomainError):
            emit_plot_data(self.SWEEP_ROWS, "fig4", str(tmp_path))
        with pytest.raises(DomainError):
            emit_plot_data(self.SWEEP_ROWS, "contour", str(tmp_path))

    def test_curve_points_sorted(self, tmp_path):
        rows = list(reversed(self.SWEEP_ROWS))
        emit_plot_data(rows, "fig2", str(tmp_path))
        text = (tmp_path / "fig2_bounded-weight_delta0.001.csv").read_text()
        qs = [float(ln.split(",")[0]) for ln in text.splitlines()[1:]]
        assert qs == sorted(qs)


class TestEntryPoint:
    def test_console_script(self):
        proc = subprocess.run([sys.executable, "-m", "leakrate.cli",
                               "--version"], capture_output=True, text=True)
        assert proc.returncode == 0

    def test_bad_subcommand_exit_code(self):
        assert main(["no-such-command"]) == 2
