"""Tests for the command-line verbs and their exit codes"""

import pytest

from asyncopt.cli.commands import build_parser, main


class TestAdversarialAndValidation:
    def test_build_then_validate(self, tmp_path, capsys):
        path = tmp_path / "adv.csv"
        assert main(["build-adversarial", "--a", "0.5", "--b", "1", "--horizon", "100", "--output", str(path)]) == 0
        assert "T = [0, 1, 3, 7, 15, 31, 63]" in capsys.readouterr().out
        assert main(["validate-delays", str(path), "--a", "0.5", "--b", "1"]) == 0

    def test_validation_failure_exit_code(self, tmp_path, capsys):
        path = tmp_path / "adv.csv"
        main(["build-adversarial", "--a", "0.5", "--b", "1", "--horizon", "100", "--output", str(path)])
        assert main(["validate-delays", str(path), "--a", "0.1", "--b", "0"]) == 2
        assert "FAIL: tau=1 exceeds the delay bound 0.1 at k=2" in capsys.readouterr().out

    def test_invalid_delay_params(self, tmp_path):
        path = tmp_path / "adv.csv"
        assert main(["build-adversarial", "--a", "1.5", "--b", "1", "--horizon", "10", "--output", str(path)]) == 2

    def test_missing_delay_file(self, tmp_path):
        assert main(["validate-delays", str(tmp_path / "missing.csv"), "--a", "0.5", "--b", "1"]) == 2


class TestCheckAdmissibility:
    def test_generated_stochastic_delays_pass(self):
        assert main(["check-admissibility", "--a", "0.1", "--b", "0.6", "--horizon", "1000", "--n-components", "4"]) == 0

    def test_generated_adversarial_delays_pass(self):
        argv = ["check-admissibility", "--a", "0.5", "--b", "1", "--delay-kind", "adversarial", "--horizon", "1000"]
        assert main(argv) == 0

    def test_oversized_constant_step_fails(self, capsys):
        argv = ["check-admissibility", "--a", "0.1", "--b", "0.2", "--horizon", "100", "--h", "0.99", "--gamma", "0.995"]
        assert main(argv) == 3
        assert "k=0" in capsys.readouterr().out

    def test_future_reads_rejected(self, tmp_path):
        path = tmp_path / "future.csv"
        path.write_text("k,tau\n0,0\n1,5\n2,0\n3,0\n")
        argv = ["check-admissibility", "--a", "0.5", "--b", "1", "--delays", str(path), "--h", "0.9", "--gamma", "0.9"]
        assert main(argv) == 2
        assert main(["validate-delays", str(path), "--a", "0.5", "--b", "1"]) == 2


class TestRun:
    def test_run_writes_artifacts(self, tmp_path):
        out = tmp_path / "cli_run"
        argv = [
            "run", "--n-samples", "60", "--dimension", "10", "--horizon", "50",
            "--output-dir", str(out),
        ]
        assert main(argv) == 0
        assert (out / "trace.csv").is_file()
        assert (out / "summary.txt").is_file()

    def test_config_file_with_unknown_key(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text("not_a_field=1\n")
        assert main(["run", "--config", str(path)]) == 2

    def test_sweep_requires_valid_b(self, tmp_path):
        argv = ["sweep", "--b-values", "0.2", "2.0", "--horizon", "10", "--output-dir", str(tmp_path)]
        assert main(argv) == 2

    def test_unknown_verb(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["explode"])
