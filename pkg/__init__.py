"""
LindstedtLab - 重整化 Lindstedt 级数与小除数多尺度分析
"""

__version__ = "0.1.0"
__author__ = "LindstedtLab Team"

from core.errors import ComputationError
from core.lattice import EquationSpec, ModeVector
from core.pool import WorkerPool
from tools.base import BaseCommand, CommandResult
from tools.records import RecordStore, RunRecord

__all__ = [
    "ComputationError",
    "EquationSpec",
    "ModeVector",
    "WorkerPool",
    "BaseCommand",
    "CommandResult",
    "RecordStore",
    "RunRecord",
]
