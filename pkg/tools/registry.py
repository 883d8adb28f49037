"""
命令注册表模块
类级别存储，CLI 子命令按名称查找
"""

from typing import Any, Dict, List
from .base import BaseCommand
import logging

logger = logging.getLogger(__name__)


class RegistryError(Exception):
    """命令注册表异常"""
    pass


class CommandRegistry:
    """
    全局命令注册表
    """

    _commands: Dict[str, BaseCommand] = {}

    @classmethod
    def register(cls, command: BaseCommand) -> None:
        """
        注册单个命令

        Args:
            command: 命令实例
        """
        if command.name in cls._commands:
            logger.warning(f"Command '{command.name}' already registered. Overwriting.")
        cls._commands[command.name] = command
        logger.debug(f"🔧 Registered command: {command.name}")

    @classmethod
    def register_multiple(cls, commands: List[BaseCommand]) -> None:
        """批量注册命令"""
        for command in commands:
            cls.register(command)
        logger.info(f"✅ Registered {len(commands)} commands")

    @classmethod
    def unregister(cls, name: str) -> bool:
        """
        注销命令

        Returns:
            bool: 是否成功注销
        """
        if name in cls._commands:
            del cls._commands[name]
            logger.debug(f"🔧 Unregistered command: {name}")
            return True
        return False

    @classmethod
    def get(cls, name: str) -> BaseCommand:
        """
        获取命令实例

        Raises:
            RegistryError: 如果命令不存在
        """
        if name not in cls._commands:
            available = list(cls._commands.keys())
            raise RegistryError(
                f"Command '{name}' not found. Available: {available}"
            )
        return cls._commands[name]

    @classmethod
    def get_all(cls) -> Dict[str, BaseCommand]:
        return cls._commands.copy()

    @classmethod
    def get_all_names(cls) -> List[str]:
        return list(cls._commands.keys())

    @classmethod
    def has_command(cls, name: str) -> bool:
        return name in cls._commands

    @classmethod
    def clear(cls) -> None:
        """
        清空所有注册的命令
        """
        cls._commands.clear()
        logger.info("🧹 CommandRegistry cleared")

    @classmethod
    def get_stats(cls) -> Dict[str, Any]:
        return {
            "total_commands": len(cls._commands),
            "command_names": list(cls._commands.keys()),
        }


# 全局快捷函数
def register_command(command: BaseCommand) -> None:
    """快捷注册命令"""
    CommandRegistry.register(command)


def get_command(name: str) -> BaseCommand:
    """快捷获取命令"""
    return CommandRegistry.get(name)


def get_all_commands() -> Dict[str, BaseCommand]:
    """快捷获取所有命令"""
    return CommandRegistry.get_all()
