"""
命令基类模块
定义所有子命令的统一接口与结果类型
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, TYPE_CHECKING
import logging

from pydantic import BaseModel, Field

if TYPE_CHECKING:
    from config import RunConfig
    from core.pool import WorkerPool

logger = logging.getLogger(__name__)


class CommandResult(BaseModel):
    """子命令执行结果

    Attributes:
        ok: 是否成功执行（不含验收判定）
        command: 子命令名
        outputs: 模块输出（JSON 兼容）
        checks: 验收检查名 → 是否通过
        timings: 阶段名 → 秒
        error: 失败时的错误描述
    """
    ok: bool = True
    command: str
    outputs: Dict[str, Any] = Field(default_factory=dict)
    checks: Dict[str, bool] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump()

    def is_success(self) -> bool:
        """执行成功且所有检查通过"""
        return self.ok and all(self.checks.values())

    def failed_checks(self):
        return sorted(name for name, passed in self.checks.items() if not passed)


class CommandContext:
    """命令执行上下文：工作池与随机种子"""

    def __init__(self, pool: "WorkerPool", seed: int = 0):
        self.pool = pool
        self.seed = seed

    def __repr__(self) -> str:
        return f"CommandContext(pool={self.pool!r}, seed={self.seed})"


class BaseCommand(ABC):
    """子命令抽象基类
    所有子命令必须继承此类并实现必要方法
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """命令名称（唯一标识）"""
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        """命令描述（用于 --help）"""
        pass

    @abstractmethod
    async def execute(self, config: "RunConfig", context: CommandContext) -> CommandResult:
        """
        执行命令

        Args:
            config: 运行配置
            context: 执行上下文

        Returns:
            CommandResult: 输出、检查与计时
        """
        pass

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name={self.name})"
