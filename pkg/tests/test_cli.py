"""CLI tests: subcommands, exit codes, output artifacts, diagnostics."""

from pathlib import Path

import pytest

from isacdt import __version__
from isacdt.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestRun:
    def test_preset_writes_metrics(self, tmp_path, capsys):
        code, out, err = _run(capsys, "run", "--preset", "fig5b",
                              "--trials", "2", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert (tmp_path / "metrics.csv").exists()
        assert "fig5b" in out
        assert err == ""

    def test_determinism_passthrough(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        _run(capsys, "run", "--preset", "fig5b", "--seed", "1",
             "--trials", "2", "--out", str(a))
        _run(capsys, "run", "--preset", "fig5b", "--seed", "1",
             "--trials", "2", "--out", str(b))
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    def test_coop_schema(self, tmp_path, capsys):
        code, _, _ = _run(capsys, "run", "--preset", "fig4a",
                          "--trials", "3", "--out", str(tmp_path))
        assert code == EXIT_OK
        header = next(
            line for line in (tmp_path / "metrics.csv").read_text().splitlines()
            if not line.startswith("#"))
        for col in ("rmse_single", "rmse_avg", "rmse_weighted"):
            assert col in header.split(",")

    def test_slam_writes_pgms(self, tmp_path, capsys):
        code, _, _ = _run(capsys, "run", "--preset", "factory_default",
                          "--out", str(tmp_path))
        assert code == EXIT_OK
        assert (tmp_path / "map_single.pgm").read_bytes().startswith(b"P5\n")
        assert (tmp_path / "map_dual_fused.pgm").exists()

    def test_malformed_config_exits_2_no_partial_output(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('experiment = "WRONG"\n')
        out_dir = tmp_path / "out"
        code, _, err = _run(capsys, "run", "--config", str(bad),
                            "--out", str(out_dir))
        assert code == EXIT_CONFIG
        assert "experiment" in err
        assert not out_dir.exists()

    def test_toml_config_accepted(self, tmp_path, capsys):
        cfgfile = tmp_path / "disc.toml"
        cfgfile.write_text(
            'name = "mini"\n'
            'experiment = "NEIGHBOR_DISCOVERY"\n'
            'seed = 3\n'
            'trials = 2\n'
            '[world]\npreset = "factory_default"\n'
            '[params]\nnum_nodes = 10\ncomm_range = 20.0\n')
        code, out, _ = _run(capsys, "run", "--config", str(cfgfile),
                            "--out", str(tmp_path / "out"))
        assert code == EXIT_OK
        assert "mini" in out

    def test_missing_config_file_exits_3(self, tmp_path, capsys):
        code, _, err = _run(capsys, "run", "--config",
                            str(tmp_path / "nope.toml"), "--out", str(tmp_path))
        assert code == EXIT_IO
        assert "nope.toml" in err


class TestValidate:
    def test_valid_preset_ok(self, capsys):
        code, out, err = _run(capsys, "validate", "--preset", "fig4a")
        assert code == EXIT_OK
        assert out.strip() == "OK"
        assert err == ""

    def test_trials_zero_named_on_stderr(self, capsys):
        code, _, err = _run(capsys, "validate", "--preset", "fig4a",
                            "--trials", "0")
        assert code == EXIT_CONFIG
        assert "trials" in err

    def test_every_violation_listed(self, tmp_path, capsys):
        cfgfile = tmp_path / "multi.toml"
        cfgfile.write_text(
            'experiment = "SLAM_RECON"\n'
            'trials = 0\n'
            '[params]\nagv_trajectories = [[[0.0, 4.0, 3.0], [5.0, 900.0, 3.0]]]\n')
        code, _, err = _run(capsys, "validate", "--config", str(cfgfile))
        assert code == EXIT_CONFIG
        assert "trials" in err
        assert "waypoints[1]" in err

    def test_preset_and_config_mutually_exclusive(self, tmp_path, capsys):
        cfgfile = tmp_path / "x.toml"
        cfgfile.write_text('experiment = "SLAM_RECON"\n')
        code, _, err = _run(capsys, "validate", "--preset", "fig4a",
                            "--config", str(cfgfile))
        assert code == EXIT_CONFIG
        assert "exclusive" in err


class TestMisc:
    def test_list_scenarios(self, capsys):
        code, out, _ = _run(capsys, "list-scenarios")
        assert code == EXIT_OK
        names = [line.split("\t")[0] for line in out.strip().splitlines()]
        assert {"fig4a", "fig4bcd", "fig5a", "fig5b",
                "factory_default"} <= set(names)

    def test_version(self, capsys):
        code, out, _ = _run(capsys, "version")
        assert code == EXIT_OK
        assert out.strip() == __version__
