from argparse import ArgumentParser
from pathlib import Path

import pytest

from elevatorcodes.config import RunConfig, read_config_file, subparser_defaults
from elevatorcodes.errors import CodeFormatError


def test_read_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# defaults\nbp-iters = 12  # inline\n\nbasis=x\n")
    assert read_config_file(path) == {"bp_iters": "12", "basis": "x"}


def test_read_config_file_errors(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("basis x\n")
    with pytest.raises(CodeFormatError, match="line 1"):
        read_config_file(path)
    with pytest.raises(CodeFormatError, match="Reading config file failed"):
        read_config_file(tmp_path / "missing.cfg")


def test_subparser_defaults(caplog):
    parser = ArgumentParser()
    parser.add_argument("--shots", type=int)
    parser.add_argument("--check", action="store_true")
    values = {"shots": "100", "check": "Yes", "colour": "blue"}
    assert subparser_defaults(parser, values, "run.cfg") == {
        "shots": "100",
        "check": True,
    }
    assert "Ignoring unknown config key 'colour' from run.cfg" in caplog.text
    with pytest.raises(CodeFormatError, match="expected true or false"):
        subparser_defaults(parser, {"check": "sometimes"}, "run.cfg")


def test_run_config_from_args():
    args = {
        "command": "sample",
        "circuit": Path("a.circuit"),
        "shots": 10,
        "seed": 4,
        "output": Path("out/a.b8"),
        "format": "text",
        "verbose": "INFO",
        "timing": False,
        "threads": 8,
        "config": None,
        "noise": (0.1, 0.2),
    }
    config = RunConfig.from_args(args)
    assert config.to_dict() == {
        "command": "sample",
        "options": {"circuit": "a.circuit", "noise": [0.1, 0.2], "shots": 10},
        "seed": 4,
        "output": str(Path("out/a.b8")),
        "format": "text",
    }
