import numpy as np
import pytest

import hingeflow as hf
from hingeflow.cli import build_parser, main


def last_trace_t(out_dir):
    lines = (out_dir / "trace.csv").read_text().splitlines()
    return int(lines[-1].split(",")[0])


class TestParser:
    def test_subcommands_registered(self):
        parser = build_parser()
        args = parser.parse_args(["oracle", "--dataset", "fig1"])
        assert args.command == "oracle"

    def test_common_flags(self):
        parser = build_parser()
        args = parser.parse_args(
            ["train-linear", "--dataset", "fig1", "--eta", "0.5",
             "--out", "x", "--iters", "100"])
        assert args.eta == 0.5 and args.iters == 100


class TestGen:
    def test_writes_dataset(self, tmp_path):
        out = tmp_path / "data.csv"
        rc = main(["gen", "--d", "2", "--n", "6", "--gamma", "1.5",
                   "--seed", "3", "--out", str(out)])
        assert rc == 0
        data = hf.read_dataset_csv(out)
        assert data.n == 6
        cert = hf.solve_max_margin(data)
        assert cert.gamma == pytest.approx(1.5, abs=1e-9)

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["gen", "--d", "3", "--n", "7", "--gamma", "0.5", "--seed", "9"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_out_is_config_error(self):
        assert main(["gen", "--d", "2", "--n", "5", "--gamma", "1.0"]) == 2


class TestOracle:
    def test_prints_certificate(self, capsys):
        assert main(["oracle", "--dataset", "fig1"]) == 0
        out = capsys.readouterr().out
        assert "u_bar: (0.0, 1.0)" in out
        assert "gamma: 1.0" in out
        assert "support indices: [0, 1]" in out
        assert "epsilon: 1.0" in out

    def test_csv_path_accepted(self, tmp_path, capsys):
        csv = tmp_path / "d.csv"
        main(["gen", "--d", "2", "--n", "5", "--gamma", "2.0", "--seed", "1",
              "--out", str(csv)])
        assert main(["oracle", "--dataset", str(csv)]) == 0
        assert "gamma: 2.0" in capsys.readouterr().out

    def test_unknown_dataset(self, capsys):
        assert main(["oracle", "--dataset", "fig99"]) == 2
        assert "error:" in capsys.readouterr().err


class TestTrainLinear:
    def test_end_to_end(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["train-linear", "--dataset", "fig1", "--iters", "2000",
                   "--out", str(out)])
        assert rc == 0
        assert (out / "trace.csv").exists()
        assert (out / "lemma_summary.txt").exists()
        assert last_trace_t(out) == 2000

    def test_not_separable_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0,0.0,1\n-1.0,0.0,1\n")
        rc = main(["train-linear", "--dataset", str(bad), "--iters", "2000",
                   "--out", str(tmp_path / "run")])
        assert rc == 4

    def test_divergence_exit_code(self, tmp_path):
        rc = main(["train-linear", "--dataset", "fig1", "--eta", "1e12",
                   "--iters", "50", "--out", str(tmp_path / "run")])
        assert rc == 3

    def test_env_var_supplies_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HINGEFLOW_ITERS", "1500")
        out = tmp_path / "run"
        assert main(["train-linear", "--dataset", "fig1",
                     "--out", str(out)]) == 0
        assert last_trace_t(out) == 1500

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HINGEFLOW_ITERS", "1500")
        out = tmp_path / "run"
        assert main(["train-linear", "--dataset", "fig1", "--iters", "800",
                     "--out", str(out)]) == 0
        assert last_trace_t(out) == 800

    def test_env_beats_spec_file(self, tmp_path, monkeypatch):
        spec = tmp_path / "run.spec"
        spec.write_text("iters=600\n")
        monkeypatch.setenv("HINGEFLOW_ITERS", "900")
        out = tmp_path / "run"
        assert main(["train-linear", "--dataset", "fig1", "--spec", str(spec),
                     "--out", str(out)]) == 0
        assert last_trace_t(out) == 900

    def test_spec_file_supplies_default(self, tmp_path):
        spec = tmp_path / "run.spec"
        spec.write_text("iters=700\neta=0.02\n")
        out = tmp_path / "run"
        assert main(["train-linear", "--dataset", "fig1", "--spec", str(spec),
                     "--out", str(out)]) == 0
        assert last_trace_t(out) == 700

    def test_bad_flag_value(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train-linear", "--dataset", "fig1", "--eta", "fast",
                  "--out", str(tmp_path / "run")])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_bad_env_value_is_config_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HINGEFLOW_ETA", "fast")
        rc = main(["train-linear", "--dataset", "fig1", "--iters", "100",
                   "--out", str(tmp_path / "run")])
        assert rc == 2


class TestDiagnose:
    def test_prints_lemma_summary(self, capsys):
        rc = main(["diagnose", "--dataset", "fig1", "--iters", "3000"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "lemma2" in out and "lemma7" in out
        assert "slope" in out


class TestFigures:
    def test_comparison_outputs(self, tmp_path):
        out = tmp_path / "figs"
        rc = main(["figures", "--dataset", "fig1", "--iters", "500",
                   "--out", str(out)])
        assert rc == 0
        assert (out / "comparison.dat").exists()


class TestTrainMlp:
    def test_end_to_end(self, tmp_path):
        rng = np.random.default_rng(0)
        pts = np.vstack([rng.standard_normal((12, 2)),
                         rng.standard_normal((12, 2)) + 6.0])
        csv = tmp_path / "toy.csv"
        hf.write_dataset_csv(
            hf.Dataset(pts, np.repeat([0, 1], 12), allow_duplicates=True), csv)
        out = tmp_path / "mlp"
        rc = main(["train-mlp", "--dataset", str(csv), "--iters", "60",
                   "--hidden", "6", "--batch-size", "8", "--out", str(out)])
        assert rc == 0
        assert (out / "trace.csv").exists()
        assert (out / "beta_updates.csv").exists()
