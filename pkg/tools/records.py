"""
运行记录模块
内容寻址的 RunRecord 与平铺目录存储
"""

import hashlib
import json
from dataclasses import asdict, is_dataclass
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from core.errors import RunnerError
from core.lattice import ModeVector
from .security import OutputPolicy
import logging

logger = logging.getLogger(__name__)

RECORD_VERSION = "1"


def jsonable(obj: Any) -> Any:
    """转换为 JSON 兼容对象（键为字符串，元组转列表）"""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, ModeVector):
        return list(obj.as_tuple())
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(jsonable(k)) if not isinstance(k, str) else k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj, key=repr) if isinstance(obj, (set, frozenset)) else obj
        return [jsonable(v) for v in items]
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    return repr(obj)


def canonical_json(obj: Any) -> str:
    """排序键、无空白的规范序列化"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class RunRecord(BaseModel):
    """运行记录

    Attributes:
        config: 配置快照
        command: 子命令名
        outputs: 模块输出
        checks: 验收检查结果
        timings: 阶段耗时（不参与哈希）
        created: 创建时间（不参与哈希）
        version: 记录格式版本
        content_hash: config + command + outputs + checks 的 sha256
    """
    config: Dict[str, Any]
    command: str
    outputs: Dict[str, Any] = Field(default_factory=dict)
    checks: Dict[str, bool] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)
    created: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    version: str = RECORD_VERSION
    content_hash: str = ""

    @classmethod
    def create(
        cls,
        config: Dict[str, Any],
        command: str,
        outputs: Dict[str, Any],
        checks: Dict[str, bool],
        timings: Optional[Dict[str, float]] = None,
    ) -> "RunRecord":
        record = cls(
            config=jsonable(config),
            command=command,
            outputs=jsonable(outputs),
            checks={k: bool(v) for k, v in checks.items()},
            timings={k: float(v) for k, v in (timings or {}).items()},
        )
        record.content_hash = record.compute_hash()
        return record

    def hashed_payload(self) -> Dict[str, Any]:
        return {"config": self.config, "command": self.command, "outputs": self.outputs, "checks": self.checks}

    def compute_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.hashed_payload()).encode("utf-8")).hexdigest()

    def verify(self) -> bool:
        """存储的哈希与内容一致"""
        return self.content_hash == self.compute_hash()

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# ============ JSON-lines 读写 ============

def record_lines(record: RunRecord) -> List[str]:
    """首行为头部，其后每个输出键一行"""
    header = {
        "kind": "header",
        "command": record.command,
        "config": record.config,
        "checks": record.checks,
        "timings": record.timings,
        "created": record.created,
        "version": record.version,
        "content_hash": record.content_hash,
    }
    lines = [canonical_json(header)]
    for key in sorted(record.outputs):
        lines.append(canonical_json({"kind": "output", "key": key, "value": record.outputs[key]}))
    return lines


def write_jsonl(record: RunRecord, path: Path) -> Path:
    path.write_text("\n".join(record_lines(record)) + "\n", encoding="utf-8")
    return path


def import_jsonl(path: Union[str, Path]) -> RunRecord:
    """从 JSON-lines 文件重建记录

    Raises:
        RunnerError: "record-corrupt"，格式错误或哈希不一致
    """
    path = Path(path)
    try:
        rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except (OSError, json.JSONDecodeError) as e:
        raise RunnerError("record-corrupt", f"Cannot read record {path}: {e}", witness=str(path))
    if not rows or rows[0].get("kind") != "header":
        raise RunnerError("record-corrupt", f"Missing header in {path}", witness=str(path))
    header = rows[0]
    outputs = {row["key"]: row["value"] for row in rows[1:] if row.get("kind") == "output"}
    record = RunRecord(
        config=header["config"],
        command=header["command"],
        outputs=outputs,
        checks=header.get("checks", {}),
        timings=header.get("timings", {}),
        created=header.get("created", ""),
        version=header.get("version", RECORD_VERSION),
        content_hash=header.get("content_hash", ""),
    )
    if not record.verify():
        raise RunnerError("record-corrupt", f"Hash mismatch in {path}", witness=record.content_hash)
    return record


class RecordStore:
    """平铺目录中的内容寻址存储：<hash>.jsonl"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def path_for(self, content_hash: str) -> Path:
        return OutputPolicy.resolve_safe_path(self.root, f"{content_hash}.jsonl")

    def save(self, record: RunRecord) -> Path:
        """
        保存记录（同哈希已存在时不重写）

        Returns:
            Path: 记录文件路径
        """
        OutputPolicy.check_output_permissions(self.root)
        if not record.content_hash:
            record.content_hash = record.compute_hash()
        path = self.path_for(record.content_hash)
        if path.exists():
            logger.info(f"📝 Record {record.content_hash[:12]} already stored")
            return path
        write_jsonl(record, path)
        logger.info(f"📝 Saved record {record.content_hash[:12]} to {path}")
        return path

    def exists(self, content_hash: str) -> bool:
        return self.path_for(content_hash).exists()

    def load(self, content_hash: str) -> RunRecord:
        """
        按哈希加载记录

        Raises:
            RunnerError: "record-not-found"
        """
        path = self.path_for(content_hash)
        if not path.exists():
            raise RunnerError("record-not-found", f"Record '{content_hash}' not found in {self.root}", witness=content_hash)
        return import_jsonl(path)

    def list(self) -> List[str]:
        if not self.root.exists():
            return []
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def __repr__(self) -> str:
        return f"RecordStore(root={self.root})"
