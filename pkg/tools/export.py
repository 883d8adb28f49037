"""
导出模块
json-lines / csv / plot-data 三种确定性格式
"""

import csv
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from core.errors import RunnerError
from .records import RunRecord, import_jsonl, record_lines
from .security import OutputPolicy
import logging

logger = logging.getLogger(__name__)

FORMATS = ("json-lines", "csv", "plot-data")

__all__ = ["FORMATS", "export", "import_jsonl", "plot_series", "tabular_outputs"]


def tabular_outputs(outputs: Dict[str, Any]) -> Dict[str, List[Dict[str, Any]]]:
    """值为非空字典列表的输出键"""
    return {
        key: value
        for key, value in sorted(outputs.items())
        if isinstance(value, list) and value and all(isinstance(row, dict) for row in value)
    }


def plot_series(outputs: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    """outputs["plot"] 中的 (x, y) 序列"""
    plots = outputs.get("plot", {})
    if not isinstance(plots, dict):
        return {}
    return {name: s for name, s in sorted(plots.items()) if isinstance(s, dict) and "x" in s and "y" in s}


def _cell(value: Any) -> Any:
    if isinstance(value, (dict, list)):
        return repr(value)
    return value


def _write_csv(path: Path, rows: List[Dict[str, Any]]) -> None:
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k, "")) for k in columns})


def _write_plot(path: Path, series: Dict[str, Any]) -> None:
    x = np.asarray(series["x"], dtype=float)
    y = np.asarray(series["y"], dtype=float)
    if x.shape != y.shape:
        raise RunnerError("plot-shape", f"x/y length mismatch in {path.name}: {x.shape} vs {y.shape}")
    header = [f"{series.get('xlabel', 'x')} {series.get('ylabel', 'y')}"]
    for key, value in sorted(series.get("header", {}).items()):
        if isinstance(value, bool):
            value = str(value).lower()
        header.append(f"{key}={value}")
    np.savetxt(path, np.column_stack([x, y]) if x.size else np.zeros((0, 2)), fmt="%.17g", header="\n".join(header))


def export(record: RunRecord, fmt: str, out_dir: Union[str, Path]) -> List[Path]:
    """
    导出记录

    Args:
        record: 运行记录
        fmt: json-lines / csv / plot-data
        out_dir: 输出目录

    Returns:
        List[Path]: 写出的文件

    Raises:
        RunnerError: "unknown-format"
    """
    if fmt not in FORMATS:
        raise RunnerError("unknown-format", f"Unknown export format '{fmt}'. Available: {list(FORMATS)}", witness=fmt)
    OutputPolicy.check_output_permissions(out_dir)
    stem = record.content_hash or record.compute_hash()
    written: List[Path] = []

    if fmt == "json-lines":
        path = OutputPolicy.resolve_safe_path(out_dir, f"{stem}.jsonl")
        path.write_text("\n".join(record_lines(record)) + "\n", encoding="utf-8")
        written.append(path)
    elif fmt == "csv":
        for key, rows in tabular_outputs(record.outputs).items():
            path = OutputPolicy.resolve_safe_path(out_dir, f"{stem}-{key}.csv")
            _write_csv(path, rows)
            written.append(path)
    else:
        for name, series in plot_series(record.outputs).items():
            path = OutputPolicy.resolve_safe_path(out_dir, f"{stem}-{name}.dat")
            _write_plot(path, series)
            written.append(path)

    if not written:
        logger.warning(f"⚠️ Nothing to export as {fmt} for record {stem[:12]}")
    else:
        logger.info(f"📝 Exported {len(written)} {fmt} file(s) for record {stem[:12]}")
    return written
