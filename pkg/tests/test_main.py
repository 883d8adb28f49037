"""
命令行入口与退出码测试
"""

import pytest
import yaml

from main import EXIT_COMPUTATION, EXIT_OK, EXIT_VALIDATION, build_parser, main
from tools.records import RecordStore
from tests.utils import print_success

ENV_KEYS = ("LINDSTEDT_CONFIG", "LINDSTEDT_OUT", "LINDSTEDT_JOBS", "LINDSTEDT_SEED", "LINDSTEDT_LOG_LEVEL")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)


def write_config(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_parser_accepts_every_command():
    parser = build_parser()
    args = parser.parse_args(["--jobs", "2", "solve"])
    assert args.command == "solve" and args.jobs == 2
    args = parser.parse_args(["export", "abc", "--format", "csv", "--format", "plot-data"])
    assert args.formats == ["csv", "plot-data"]
    with pytest.raises(SystemExit):
        parser.parse_args(["integrate"])


async def test_invalid_config_exits_with_validation_code(tmp_path):
    path = write_config(tmp_path / "bad.yaml", {"constants": {"gamma": 0.3, "gamma_bar": 0.2}})
    assert await main(["--config", path, "classify"]) == EXIT_VALIDATION
    assert await main(["--jobs", "0", "classify"]) == EXIT_VALIDATION


async def test_classify_run_writes_record(tmp_path):
    out = tmp_path / "runs"
    path = write_config(tmp_path / "run.yaml", {"shell": {"radius": 3}, "window": {"grid_points": 50}})
    assert await main(["--config", path, "--out", str(out), "classify"]) == EXIT_OK
    store = RecordStore(out)
    [content_hash] = store.list()
    record = store.load(content_hash)
    assert record.command == "classify"
    assert record.config["output"]["dir"] == str(out)
    assert await main(["--config", path, "--out", str(out), "export", content_hash, "--format", "csv"]) == EXIT_OK
    assert list(out.glob(f"{content_hash}-shell_counts.csv"))
    print_success(f"classify record {content_hash[:12]} stored and exported")


async def test_export_of_missing_record(tmp_path):
    assert await main(["--out", str(tmp_path), "export", "f" * 64]) == EXIT_COMPUTATION
