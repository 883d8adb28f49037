"""
工作池模块
ε / 种子扫描的有界并发执行，结果按输入顺序返回
"""

import asyncio
import logging
import time
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """
    工作池
    任务通过 asyncio.to_thread 执行，信号量限制同时运行的任务数
    """

    def __init__(self, jobs: int = 1):
        if jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {jobs}")
        self.jobs = jobs
        self._semaphore: Optional[asyncio.Semaphore] = None
        self._initialized = False
        self._submitted = 0
        self._failed = 0
        self._busy_seconds = 0.0

        logger.info(f"WorkerPool created (jobs={jobs})")

    async def initialize(self) -> None:
        """创建信号量（需在事件循环内）"""
        logger.info(f"🚀 Initializing worker pool with {self.jobs} slots...")
        self._semaphore = asyncio.Semaphore(self.jobs)
        self._initialized = True

    def is_initialized(self) -> bool:
        """检查是否已初始化"""
        return self._initialized

    async def _run(self, fn: Callable[[T], R], item: T) -> R:
        assert self._semaphore is not None
        async with self._semaphore:
            start = time.perf_counter()
            try:
                return await asyncio.to_thread(fn, item)
            except Exception:
                self._failed += 1
                raise
            finally:
                self._busy_seconds += time.perf_counter() - start

    async def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        并发执行 fn(item)

        Args:
            fn: 同步函数
            items: 输入序列

        Returns:
            List: 与输入顺序一致的结果

        Raises:
            RuntimeError: 未初始化
        """
        if not self._initialized:
            raise RuntimeError("WorkerPool not initialized")
        batch = list(items)
        self._submitted += len(batch)
        return list(await asyncio.gather(*(self._run(fn, item) for item in batch)))

    def get_stats(self) -> Dict[str, Any]:
        """获取工作池统计"""
        return {
            "jobs": self.jobs,
            "initialized": self._initialized,
            "submitted": self._submitted,
            "failed": self._failed,
            "busy_seconds": round(self._busy_seconds, 6),
        }

    async def shutdown(self) -> None:
        """关闭工作池"""
        logger.info("🧹 Shutting down worker pool...")
        self._semaphore = None
        self._initialized = False
        logger.info("Worker pool shutdown complete")

    def __repr__(self) -> str:
        return f"WorkerPool(jobs={self.jobs}, initialized={self._initialized})"
