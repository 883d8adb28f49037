"""
工作池测试
"""

import pytest

from core.pool import WorkerPool


async def test_map_preserves_order():
    pool = WorkerPool(3)
    await pool.initialize()
    results = await pool.map(lambda x: x * x, range(10))
    assert results == [x * x for x in range(10)]
    stats = pool.get_stats()
    assert stats["submitted"] == 10
    assert stats["failed"] == 0
    assert stats["initialized"]
    await pool.shutdown()
    assert not pool.is_initialized()


async def test_failures_are_counted():
    pool = WorkerPool(1)
    await pool.initialize()

    def fragile(x):
        if x == 2:
            raise ValueError("bad sample")
        return x

    with pytest.raises(ValueError):
        await pool.map(fragile, [1, 2, 3])
    assert pool.get_stats()["failed"] == 1
    await pool.shutdown()


async def test_uninitialized_pool_refuses_work():
    pool = WorkerPool()
    with pytest.raises(RuntimeError):
        await pool.map(str, [1])
    assert repr(pool) == "WorkerPool(jobs=1, initialized=False)"


def test_invalid_jobs():
    with pytest.raises(ValueError):
        WorkerPool(0)
