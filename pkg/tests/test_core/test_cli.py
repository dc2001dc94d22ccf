import io

import pytest

from cadsi.ui import cli
from cadsi.utils import constants as C
from cadsi.utils.errors import CheckpointError, ConfigError


def run_cli(argv):
    stdout, stderr = io.StringIO(), io.StringIO()
    code = cli.main(argv, stdout, stderr)
    return code, stdout.getvalue(), stderr.getvalue()


def test_missing_checkpoint_exits_with_code_line(tmp_path):
    code, _, err = run_cli(["eval", "--ckpt", str(tmp_path / "missing")])
    assert code == cli.EXIT_CADSI_ERROR
    assert err.startswith("error code=checkpoint_missing command=eval message=")
    assert err.count("\n") == 1


def test_bad_ablation_axis(tmp_path):
    code, _, err = run_cli(["ablate", "--pretrain", str(tmp_path), "--out", str(tmp_path / "abl"),
                            "--ablate", "axis=depth"])
    assert code == cli.EXIT_CADSI_ERROR
    assert "code=config_invalid command=ablate" in err


def test_unknown_config_key(tmp_path):
    code, _, err = run_cli(["synth", "--out", str(tmp_path), "--set", "synth.size=3"])
    assert code == cli.EXIT_CADSI_ERROR
    assert "code=config_invalid" in err


def test_unexpected_exception_exits_with_one(monkeypatch, tmp_path):
    def explode(engine, args, renderer):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "dispatch", explode)
    code, _, err = run_cli(["synth", "--out", str(tmp_path)])
    assert code == cli.EXIT_UNEXPECTED
    assert err == ""


def test_dedicated_flags_follow_set_overrides(monkeypatch):
    monkeypatch.delenv(C.THREADS_ENV_VAR, raising=False)
    args = cli.build_parser().parse_args(["eval", "--ckpt", "x", "--set", "seed=1", "--seed", "5", "--k", "10,20"])
    assert cli.collect_overrides(args) == ["seed=1", "seed=5", "eval.ks=10,20"]


def test_intervene_flags(monkeypatch):
    monkeypatch.delenv(C.THREADS_ENV_VAR, raising=False)
    args = cli.build_parser().parse_args(["intervene", "--train", "t", "--out", "o", "--iterations", "0",
                                          "--unfreeze-aspects"])
    assert cli.collect_overrides(args) == ["intervention.iterations_n=0", "intervention.unfreeze_aspects=true"]


def test_threads_fall_back_to_environment(monkeypatch):
    monkeypatch.setenv(C.THREADS_ENV_VAR, "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.setenv(C.THREADS_ENV_VAR, "many")
    with pytest.raises(ConfigError):
        cli.resolve_threads(None)
    monkeypatch.delenv(C.THREADS_ENV_VAR)
    assert cli.resolve_threads(None) is None


def test_parse_ablate():
    assert cli.parse_ablate(["axis=L", "values=1,2"]) == ("L", [1, 2])
    assert cli.parse_ablate(["axis=K"]) == ("K", list(C.ABLATION_DEFAULTS["K"]))
    with pytest.raises(ConfigError):
        cli.parse_ablate(["values=1,2"])
    with pytest.raises(ConfigError):
        cli.parse_ablate(["axis"])


def test_error_line_escapes_message():
    line = cli._error_line(CheckpointError('bad "dir"\nsecond line'), "eval")
    assert line == 'error code=checkpoint_missing command=eval message="bad \\"dir\\" second line"'
