"""
工具模块
子命令、注册表、运行记录与导出
"""

from .base import BaseCommand, CommandContext, CommandResult
from .registry import CommandRegistry, RegistryError

__all__ = [
    "BaseCommand",
    "CommandContext",
    "CommandResult",
    "CommandRegistry",
    "RegistryError",
]
