"""Command-line front end: flag parsing, runs, exit codes, regression mode."""

import json

import pytest

from revlab.cli import main, parse_config
from revlab.explorer import Bounds


def parse(argv):
    return parse_config(argv)


class TestParseConfig:
    def test_goal_selection(self):
        cfg = parse(["--protocol", "rtoken", "--goals", "g2", "--change"])
        assert cfg.protocol == "rtoken"
        assert cfg.goals == ("g2",)
        assert cfg.change_enabled

    def test_change_goal_without_change_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            parse(["--protocol", "plain", "--goals", "g5"])
        assert exc.value.code == 2

    def test_defaults(self):
        cfg = parse([])
        assert cfg.protocol == "plain"
        assert cfg.goals == ()  # all applicable
        assert not cfg.change_enabled
        assert cfg.bounds == Bounds()
        assert cfg.n_vehicles == 1

    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit):
            parse(["--frobnicate"])

    def test_invalid_goal_names_are_listed(self, capsys):
        with pytest.raises(SystemExit):
            parse(["--goals", "g2,g8,bogus"])
        err = capsys.readouterr().err
        assert "g8" in err and "bogus" in err

    def test_bounds_flags(self):
        cfg = parse(["--max-steps", "9", "--fresh-budget", "2"])
        assert cfg.bounds.max_steps == 9
        assert cfg.bounds.adversary_fresh_budget == 2

    def test_config_file_with_flag_override(self, tmp_path):
        cfile = tmp_path / "scenario.json"
        cfile.write_text(
            json.dumps(
                {
                    "protocol": "otoken",
                    "change_enabled": True,
                    "bounds": {"max_steps": 10},
                    "output": "json",
                }
            )
        )
        cfg = parse(["--config", str(cfile)])
        assert cfg.protocol == "otoken" and cfg.change_enabled
        assert cfg.bounds.max_steps == 10 and cfg.output == "json"
        cfg2 = parse(["--config", str(cfile), "--protocol", "plain", "--max-steps", "7"])
        assert cfg2.protocol == "plain" and cfg2.bounds.max_steps == 7


class TestMain:
    def test_json_run_reports_attack(self, capsys):
        code = main(
            ["--protocol", "rtoken", "--goals", "g2", "--change", "--output", "json",
             "--deterministic"]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        (entry,) = doc["results"]
        assert entry["goal"] == "g2"
        assert entry["outcome"] == "counterexample-found"
        assert entry["evidence"]["steps"]

    def test_expect_match_exits_zero(self, capsys):
        code = main(
            ["--protocol", "otoken", "--goals", "all", "--change",
             "--expect", "reference/otoken.json", "--output", "json", "--deterministic"]
        )
        capsys.readouterr()
        assert code == 0

    def test_expect_plain_records_no_witness(self, capsys):
        code = main(
            ["--protocol", "plain", "--goals", "g5", "--change",
             "--expect", "reference/plain.json", "--output", "json", "--deterministic"]
        )
        doc = json.loads(capsys.readouterr().out)
        assert code == 0
        (entry,) = doc["results"]
        assert entry["outcome"] == "no-witness-within-bounds"

    def test_expect_mismatch_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"verdicts": {"g2": "no-counterexample-within-bounds"}}))
        code = main(
            ["--protocol", "rtoken", "--goals", "g2", "--change",
             "--expect", str(bad), "--output", "json", "--deterministic"]
        )
        doc = json.loads(capsys.readouterr().out)
        assert code == 1
        assert doc["expect_mismatches"]

    def test_missing_expect_file_is_a_usage_error(self, capsys):
        code = main(["--protocol", "plain", "--expect", "/no/such/matrix.json"])
        capsys.readouterr()
        assert code == 2

    def test_version_flag(self, capsys):
        import pytest as _pytest

        with _pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "revlab" in capsys.readouterr().out

    def test_deterministic_runs_are_byte_identical(self, capsys):
        argv = ["--protocol", "plain", "--output", "json", "--deterministic"]
        main(argv)
        first = capsys.readouterr().out
        main(argv)
        second = capsys.readouterr().out
        assert first == second

    def test_byte_identical_across_processes_and_hash_seeds(self):
        import os
        import subprocess
        import sys

        argv = [sys.executable, "-m", "revlab", "--protocol", "rtoken",
                "--goals", "g2", "--change", "--max-steps", "8",
                "--output", "json", "--deterministic"]
        outs = []
        for seed in ("1", "99991"):
            env = dict(os.environ, PYTHONHASHSEED=seed)
            got = subprocess.run(argv, capture_output=True, env=env, check=True)
            outs.append(got.stdout)
        assert outs[0] == outs[1]

    def test_workers_env_does_not_change_output(self, capsys, monkeypatch):
        argv = ["--protocol", "rtoken", "--goals", "g2,g5", "--change",
                "--output", "json", "--deterministic"]
        monkeypatch.setenv("REVLAB_WORKERS", "1")
        main(argv)
        one = capsys.readouterr().out
        monkeypatch.setenv("REVLAB_WORKERS", "8")
        main(argv)
        eight = capsys.readouterr().out
        assert one == eight
