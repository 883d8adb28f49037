"""
命令注册表、运行记录、导出与输出安全测试
"""

from fractions import Fraction

import numpy as np
import pytest

from config import COMMANDS, RunConfig
from core.errors import BifurcationError, RunnerError
from core.lattice import ModeVector
from core.pool import WorkerPool
from tools.base import CommandContext, CommandResult
from tools.commands import ClassifyCommand, default_seed, register_builtin_commands
from tools.export import export, plot_series, tabular_outputs
from tools.records import RecordStore, RunRecord, import_jsonl, jsonable
from tools.registry import CommandRegistry, RegistryError
from tools.security import OutputPolicy
from tests.utils import print_info, print_success


@pytest.fixture
def registry():
    CommandRegistry.clear()
    register_builtin_commands()
    yield CommandRegistry
    CommandRegistry.clear()


@pytest.fixture
def record():
    outputs = {
        "anchor": ModeVector.of(1, 1, 1),
        "mu": Fraction(3, 10),
        "value": 1 + 2j,
        "samples": np.array([0.5, 0.25]),
        "rows": [{"eps": 0.001, "survived": True}, {"eps": 0.002}],
        "plot": {"decay": {"x": [1, 2, 3], "y": [0.5, 0.25, 0.125], "xlabel": "k", "ylabel": "u", "header": {"kappa": 0.7, "ok": True}}},
    }
    return RunRecord.create({"command": "solve"}, "solve", outputs, {"newton_converged": np.bool_(True)}, {"solve": 1.5})


# ============ 注册表 ============

def test_builtin_commands_registered(registry):
    assert set(registry.get_all_names()) == set(COMMANDS)
    assert registry.get_stats()["total_commands"] == len(COMMANDS)
    assert registry.get("solve").name == "solve"
    with pytest.raises(RegistryError):
        registry.get("integrate")
    assert registry.unregister("measure")
    assert not registry.has_command("measure")
    assert not registry.unregister("measure")


async def test_classify_command_runs_on_pool(registry):
    config = RunConfig(command="classify", shell={"radius": 3}, window={"grid_points": 50})
    pool = WorkerPool(2)
    await pool.initialize()
    try:
        result = await registry.get("classify").execute(config, CommandContext(pool, seed=0))
    finally:
        await pool.shutdown()
    assert isinstance(result, CommandResult)
    assert [row["shell"] for row in result.outputs["shell_counts"]] == [1, 2, 3]
    assert result.checks["q_set_is_kernel"]
    assert result.checks["non_resonance"]
    assert result.is_success()
    print_info(f"classify totals: {result.outputs['totals']}")


def test_command_result_failed_checks():
    result = CommandResult(command="trees", checks={"b": False, "a": True, "c": False})
    assert not result.is_success()
    assert result.failed_checks() == ["b", "c"]
    assert repr(ClassifyCommand()) == "ClassifyCommand(name=classify)"


def test_resonant_seed_follows_configured_conventions():
    config = RunConfig(equation={"dim": 1, "resonant": True})
    with pytest.raises(BifurcationError) as exc:
        default_seed(config, config.to_spec(), 6)
    assert exc.value.code == "no-profile"
    config = RunConfig(equation={"dim": 1, "resonant": True}, bifurcation={"conventions": ["displayed", "balanced"]})
    seed = default_seed(config, config.to_spec(), 6)
    assert ModeVector.of(1, 1) in seed.support()


# ============ 记录 ============

def test_jsonable_conversions():
    assert jsonable(ModeVector.of(2, -1)) == [2, -1]
    assert jsonable(Fraction(1, 3)) == "1/3"
    assert jsonable(1 - 1j) == [1.0, -1.0]
    assert jsonable({(1, 2): {3, 1}}) == {"[1, 2]": [1, 3]}
    assert jsonable(np.int64(4)) == 4


def test_record_hash_ignores_timings(record):
    assert record.verify()
    assert record.passed
    assert record.outputs["anchor"] == [1, 1, 1]
    twin = RunRecord.create({"command": "solve"}, "solve", record.outputs, record.checks, {"solve": 99.0})
    assert twin.content_hash == record.content_hash
    other = RunRecord.create({"command": "solve"}, "solve", record.outputs, {"newton_converged": False})
    assert other.content_hash != record.content_hash
    assert not other.passed


def test_record_store_round_trip(tmp_path, record):
    store = RecordStore(tmp_path / "runs")
    assert store.list() == []
    path = store.save(record)
    assert path.name == f"{record.content_hash}.jsonl"
    assert store.save(record) == path
    assert store.exists(record.content_hash)
    assert store.list() == [record.content_hash]
    loaded = store.load(record.content_hash)
    assert loaded.content_hash == record.content_hash
    assert loaded.outputs == record.outputs
    assert loaded.timings == record.timings
    with pytest.raises(RunnerError) as exc:
        store.load("0" * 64)
    assert exc.value.code == "record-not-found"


def test_tampered_record_is_corrupt(tmp_path, record):
    path = RecordStore(tmp_path).save(record)
    text = path.read_text(encoding="utf-8").replace("0.125", "0.126")
    path.write_text(text, encoding="utf-8")
    with pytest.raises(RunnerError) as exc:
        import_jsonl(path)
    assert exc.value.code == "record-corrupt"
    garbage = tmp_path / "garbage.jsonl"
    garbage.write_text("not json\n", encoding="utf-8")
    with pytest.raises(RunnerError) as exc:
        import_jsonl(garbage)
    assert exc.value.code == "record-corrupt"


# ============ 导出 ============

def test_export_formats(tmp_path, record):
    assert list(tabular_outputs(record.outputs)) == ["rows"]
    assert list(plot_series(record.outputs)) == ["decay"]

    [jsonl] = export(record, "json-lines", tmp_path)
    assert import_jsonl(jsonl).content_hash == record.content_hash

    [csv_path] = export(record, "csv", tmp_path)
    assert csv_path.name.endswith("-rows.csv")
    assert csv_path.read_text(encoding="utf-8").splitlines() == ["eps,survived", "0.001,True", "0.002,"]

    [dat] = export(record, "plot-data", tmp_path)
    lines = dat.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# k u"
    assert "# ok=true" in lines
    data = np.loadtxt(dat)
    assert data.shape == (3, 2)
    assert data[2, 1] == pytest.approx(0.125)
    print_success("json-lines / csv / plot-data exports written")


def test_export_errors(tmp_path, record):
    with pytest.raises(RunnerError) as exc:
        export(record, "xlsx", tmp_path)
    assert exc.value.code == "unknown-format"
    bad = RunRecord.create({}, "measure", {"plot": {"scan": {"x": [1, 2], "y": [1]}}}, {})
    with pytest.raises(RunnerError) as exc:
        export(bad, "plot-data", tmp_path)
    assert exc.value.code == "plot-shape"
    assert export(RunRecord.create({}, "classify", {}, {}), "csv", tmp_path) == []


# ============ 输出安全 ============

def test_output_policy(tmp_path):
    inside = OutputPolicy.resolve_safe_path(tmp_path, "sub/record.jsonl")
    assert OutputPolicy.is_inside(inside, tmp_path.resolve())
    with pytest.raises(PermissionError):
        OutputPolicy.resolve_safe_path(tmp_path, "../escape.jsonl")
    with pytest.raises(PermissionError):
        OutputPolicy.resolve_safe_path(tmp_path, "payload.py")
    with pytest.raises(PermissionError):
        OutputPolicy.resolve_safe_path(tmp_path, ".env")
    assert OutputPolicy.check_output_permissions(tmp_path / "fresh")
    assert (tmp_path / "fresh").is_dir()
