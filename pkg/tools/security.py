"""
输出安全策略模块
记录与导出文件限制在输出根目录内
"""

import os
import fnmatch
from pathlib import Path
from typing import List, Optional, Union

import logging

logger = logging.getLogger(__name__)


class OutputPolicy:
    """输出路径策略
    单根目录白名单 + 保留文件名黑名单
    """

    BLOCKED_PATTERNS = [
        "*/.git/*",
        "*/.env",
        "*.py",
        "*/config.yaml",
    ]

    @staticmethod
    def resolve_safe_path(
        root: Union[str, Path],
        relative: Union[str, Path],
        blocked_patterns: Optional[List[str]] = None,
    ) -> Path:
        """解析输出根目录下的相对路径并校验

        Args:
            root: 输出根目录
            relative: 相对路径
            blocked_patterns: 禁止的路径模式列表

        Returns:
            Path: 安全的绝对路径

        Raises:
            PermissionError: 路径越出根目录或命中黑名单
        """
        if blocked_patterns is None:
            blocked_patterns = OutputPolicy.BLOCKED_PATTERNS

        root_path = Path(root).resolve()
        try:
            target_path = (root_path / relative).resolve()
        except Exception as e:
            raise PermissionError(f"Path resolution failed: {str(e)}")

        if OutputPolicy.is_blocked(target_path, blocked_patterns):
            logger.warning(f"Security Block: {target_path} matched blocked pattern")
            raise PermissionError(f"Access Denied: Path '{target_path}' matches a reserved file pattern.")

        if not OutputPolicy.is_inside(target_path, root_path):
            logger.warning(f"Security Block: {target_path} is outside output root")
            raise PermissionError(
                f"Access Denied: Path '{target_path}' is outside output root '{root_path}'."
            )

        return target_path

    @staticmethod
    def is_inside(path: Path, root: Path) -> bool:
        """检查路径是否在根目录下"""
        path_str = str(path).replace('\\', '/')
        root_str = str(root).replace('\\', '/')
        if path_str.startswith(root_str):
            return len(path_str) == len(root_str) or path_str[len(root_str)] == '/' or root_str.endswith('/')
        return False

    @staticmethod
    def is_blocked(path: Path, blocked_patterns: List[str]) -> bool:
        """检查路径是否匹配任一黑名单模式"""
        path_str = str(path).replace('\\', '/')

        for pattern in blocked_patterns:
            pattern_std = pattern.replace('\\', '/')

            if fnmatch.fnmatch(path_str, pattern_std) or fnmatch.fnmatch(path_str, f"*{pattern_std}"):
                return True

        return False

    @staticmethod
    def check_output_permissions(out_dir: Union[str, Path] = "./runs") -> bool:
        """启动时检查输出目录权限"""
        out_path = Path(out_dir)

        if not out_path.exists():
            try:
                out_path.mkdir(parents=True, exist_ok=True)
                logger.info(f"✅ Created output directory: {out_path.resolve()}")
            except Exception as e:
                raise PermissionError(f"Cannot create output directory: {e}")

        if not os.access(out_path, os.R_OK | os.W_OK):
            raise PermissionError(f"Output directory '{out_path}' is not readable/writable.")

        logger.info(f"✅ Output permissions verified: {out_path.resolve()}")
        return True
