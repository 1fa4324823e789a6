import json
import os
import subprocess
import sys

import numpy as np
import pytest

from arhmm import io
from arhmm.cli import build_parser, main
from arhmm.decode import StateSequence
from arhmm.geometry import Track
from arhmm.simulate import paper_scenario, simulate


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--degree", "1", "--T", "400", "--seed", "3", "--out", str(d / "s.csv")]) == 0
    return d


@pytest.fixture(scope="module")
def fitted(sim):
    out = sim / "fit.json"
    assert main(["fit", str(sim / "s.csv"), "--degree", "1", "--starts", "2", "--out", str(out)]) == 0
    return out


class TestSimulate:
    def test_files_and_determinism(self, sim, tmp_path):
        assert (sim / "s_truth.csv").exists()
        main(["simulate", "--degree", "1", "--T", "400", "--seed", "3", "--out", str(tmp_path / "s.csv")])
        assert (tmp_path / "s.csv").read_bytes() == (sim / "s.csv").read_bytes()
        assert (tmp_path / "s_truth.csv").read_bytes() == (sim / "s_truth.csv").read_bytes()

    def test_matches_library(self, sim):
        s, z = simulate(paper_scenario(1, T=400, seed=3))
        (back,) = io.read_series(sim / "s.csv")
        np.testing.assert_array_equal(back.steps, s.steps)
        np.testing.assert_array_equal(io.read_states(sim / "s_truth.csv")[0].states, z.states)

    def test_bad_degree_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            main(["simulate", "--degree", "4", "--out", str(tmp_path / "x.csv")])
        assert e.value.code == 1


class TestPrep:
    def test_downsample(self, tmp_path):
        s, _ = simulate(paper_scenario(0, T=60, seed=1))
        track = io.integrate_track(s)
        io.write_tracks([track], tmp_path / "t.csv")
        assert main(["prep", str(tmp_path / "t.csv"), "--out", str(tmp_path / "a.csv")]) == 0
        (full,) = io.read_series(tmp_path / "a.csv")
        np.testing.assert_allclose(full.steps, s.steps, rtol=1e-9)
        assert main(["prep", str(tmp_path / "t.csv"), "--downsample", "3", "--out", str(tmp_path / "b.csv")]) == 0
        (thin,) = io.read_series(tmp_path / "b.csv")
        assert len(thin) == len(track.locations[::3]) - 2

    def test_missing_file(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        assert main(["prep", str(missing), "--out", str(tmp_path / "o.csv")]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_zero_step(self, tmp_path, capsys):
        io.write_tracks([Track("a", [[0, 0], [1, 0], [1, 0], [2, 1]])], tmp_path / "t.csv")
        assert main(["prep", str(tmp_path / "t.csv"), "--out", str(tmp_path / "o.csv")]) == 2
        assert main(["prep", str(tmp_path / "t.csv"), "--zero-floor", "0.01", "--out", str(tmp_path / "o.csv")]) == 0


class TestFit:
    def test_output(self, fitted):
        d = json.loads(fitted.read_text())
        assert d["lambda"] == 0.0 and d["converged"]
        assert d["params"]["mu_step"][0] < d["params"]["mu_step"][1]

    def test_inline_spec_equals_degree(self, sim, fitted, tmp_path):
        spec = '{"n_states": 2, "p_step": [1, 1], "p_turn": [1, 1]}'
        out = tmp_path / "f.json"
        assert main(["fit", str(sim / "s.csv"), "--spec", spec, "--starts", "2", "--out", str(out)]) == 0
        assert json.loads(out.read_text()) == json.loads(fitted.read_text())

    def test_spec_too_long_for_data(self, sim, tmp_path, capsys):
        s, _ = simulate(paper_scenario(0, T=5, seed=0))
        io.write_series([s], tmp_path / "short.csv")
        assert main(["fit", str(tmp_path / "short.csv"), "--degree", "6", "--out", str(tmp_path / "f.json")]) == 2
        assert "longer" in capsys.readouterr().err

    def test_path_mode(self, sim, tmp_path):
        out = tmp_path / "p.json"
        code = main(["fit", str(sim / "s.csv"), "--degree", "2", "--path", "--grid", "0", "1", "50",
                     "--starts", "1", "--out", str(out)])
        assert code == 0
        d = json.loads(out.read_text())
        assert set(d) == {"criterion", "path", "selected", "selected_degrees", "refit"}
        assert d["refit"]["lambda"] == 0.0
        assert d["refit"]["params"]["phi_step"] is not None
        assert len(d["path"]["grid"]) == 3

    def test_grid_without_path(self, sim, tmp_path):
        assert main(["fit", str(sim / "s.csv"), "--degree", "1", "--grid", "0", "1", "--out", str(tmp_path / "f.json")]) == 1

    def test_lambda_and_path_exclusive(self, sim, tmp_path):
        with pytest.raises(SystemExit) as e:
            main(["fit", str(sim / "s.csv"), "--degree", "1", "--lambda", "1", "--path", "--out", str(tmp_path / "f.json")])
        assert e.value.code == 1

    def test_numeric_failure_exit(self, sim, tmp_path):
        code = main(["fit", str(sim / "s.csv"), "--degree", "1", "--starts", "1", "--max-iters", "1",
                     "--out", str(tmp_path / "f.json")])
        assert code == 3


class TestDecodeResiduals:
    def test_decode_with_truth(self, sim, fitted, tmp_path, capsys):
        out = tmp_path / "z.csv"
        assert main(["decode", str(sim / "s.csv"), "--fit", str(fitted), "--out", str(out),
                     "--truth", str(sim / "s_truth.csv")]) == 0
        acc = float(capsys.readouterr().out.split("accuracy")[1])
        assert acc > 0.85
        assert len(io.read_states(out)[0].states) == 400

    def test_state_count_mismatch(self, sim, fitted, tmp_path):
        io.write_states([StateSequence("sim", np.tile([1, 2, 3, 1], 100))], tmp_path / "t3.csv")
        assert main(["decode", str(sim / "s.csv"), "--fit", str(fitted), "--out", str(tmp_path / "z.csv"),
                     "--truth", str(tmp_path / "t3.csv")]) == 2

    def test_mismatched_fit_spec(self, sim, tmp_path):
        io.write_json(paper_scenario(3).params, tmp_path / "p.json")
        s, _ = simulate(paper_scenario(0, T=3, seed=0))
        io.write_series([s], tmp_path / "short.csv")
        assert main(["decode", str(tmp_path / "short.csv"), "--fit", str(tmp_path / "p.json"),
                     "--out", str(tmp_path / "z.csv")]) == 2

    def test_residuals(self, sim, fitted, tmp_path, capsys):
        assert main(["residuals", str(sim / "s.csv"), "--fit", str(fitted), "--out", str(tmp_path / "r.csv")]) == 0
        out = capsys.readouterr().out
        assert "step:" in out and "turn:" in out and "skewness" in out
        assert (tmp_path / "r_step.csv").exists() and (tmp_path / "r_turn.csv").exists()

    def test_bad_fit_json(self, sim, tmp_path):
        (tmp_path / "bad.json").write_text("{")
        assert main(["residuals", str(sim / "s.csv"), "--fit", str(tmp_path / "bad.json"), "--out", str(tmp_path / "r.csv")]) == 2


class TestStudy:
    def test_smoke(self, tmp_path, capsys):
        code = main(["study", "--replicates", "1", "--T", "150", "--starts", "1", "--stability-T", "60", "120",
                     "--stability-starts", "2", "--consistency-T", "80", "160", "--out", str(tmp_path)])
        assert code == 0
        for name in ("accuracy", "accuracy_table", "stability", "stability_table", "consistency", "consistency_summary"):
            assert (tmp_path / f"{name}.csv").exists()
        lines = (tmp_path / "accuracy_table.csv").read_text().splitlines()
        assert len(lines) == 5 and lines[0].startswith("sim_degree")
        assert "mean decoding accuracy" in capsys.readouterr().out

    def test_unknown_part(self, tmp_path):
        assert main(["study", "--parts", "speed", "--out", str(tmp_path)]) == 1

    @pytest.mark.skipif(os.name != "posix" or os.geteuid() == 0, reason="permissions are not enforced for root")
    def test_unwritable_dir(self, tmp_path):
        d = tmp_path / "ro"
        d.mkdir()
        d.chmod(0o500)
        try:
            assert main(["study", "--replicates", "1", "--out", str(d)]) == 2
        finally:
            d.chmod(0o700)

    def test_output_is_a_file(self, tmp_path):
        f = tmp_path / "file"
        f.write_text("")
        assert main(["study", "--replicates", "1", "--out", str(f)]) == 2


class TestParser:
    def test_help_documents_flags(self):
        p = build_parser()
        sub = p._subparsers._group_actions[0].choices
        for name, parser in sub.items():
            text = parser.format_help()
            for action in parser._actions:
                for opt in action.option_strings:
                    assert opt in text, (name, opt)

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as e:
            main(["simulate", "--degree", "1", "--out", "x.csv", "--colour", "red"])
        assert e.value.code == 1

    def test_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "arhmm.cli", "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "simulate" in out.stdout
