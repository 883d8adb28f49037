"""
Main Entry Point - LindstedtLab 主程序
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

# 添加项目根目录到路径
sys.path.insert(0, str(Path(__file__).parent))

from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from config import COMMANDS, ConfigError, ConfigManager, RunConfig
from core.errors import ComputationError
from core.pool import WorkerPool
from tools.base import CommandContext, CommandResult
from tools.export import FORMATS, export
from tools.records import RecordStore, RunRecord
from tools.registry import CommandRegistry
from tools.commands import register_builtin_commands

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_VALIDATION = 2
EXIT_CHECK_FAILED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lindstedt", description="Renormalized Lindstedt series toolkit")
    parser.add_argument("--config", help="YAML 配置文件路径")
    parser.add_argument("--out", help="记录输出目录")
    parser.add_argument("--jobs", type=int, help="扫描并发数")
    parser.add_argument("--seed", type=int, help="随机种子（u64）")
    parser.add_argument("--log-level", help="日志级别")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, help=f"run the {name} pipeline")
    exp = sub.add_parser("export", help="re-export a stored record")
    exp.add_argument("hash", help="记录哈希")
    exp.add_argument("--format", dest="formats", action="append", choices=FORMATS, help="导出格式（可重复）")
    return parser


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """YAML / 环境变量 / 默认值之上再应用命令行参数

    Raises:
        ConfigError, ValidationError
    """
    manager = ConfigManager(args.config)
    base = manager.load()
    data = base.model_dump()
    if args.command in COMMANDS:
        data["command"] = args.command
    overrides = {"dir": args.out, "jobs": args.jobs, "seed": args.seed, "log_level": args.log_level}
    data["output"].update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data)


async def run(config: RunConfig) -> Tuple[CommandResult, RunRecord]:
    """执行所选子命令并生成运行记录"""
    if not CommandRegistry.has_command(config.command):
        register_builtin_commands()
    command = CommandRegistry.get(config.command)
    pool = WorkerPool(config.output.jobs)
    await pool.initialize()
    try:
        logger.info(f"🚀 Running {command.name} (jobs={config.output.jobs}, seed={config.output.seed})")
        result = await command.execute(config, CommandContext(pool, config.output.seed))
    finally:
        await pool.shutdown()
    record = RunRecord.create(config.snapshot(), result.command, result.outputs, result.checks, result.timings)
    return result, record


def persist(record: RunRecord, config: RunConfig) -> List[Path]:
    """保存到内容寻址存储并按配置导出"""
    store = RecordStore(config.output.dir)
    paths = [store.save(record)]
    for fmt in config.output.formats:
        if fmt != "json-lines":
            paths.extend(export(record, fmt, config.output.dir))
    return paths


def summary_table(record: RunRecord) -> Table:
    table = Table(title=f"{record.command} · {record.content_hash[:12]}")
    table.add_column("Check", style="cyan")
    table.add_column("Result")
    for name, passed in sorted(record.checks.items()):
        table.add_row(name, "[green]✅ pass[/green]" if passed else "[red]❌ fail[/red]")
    for name, seconds in sorted(record.timings.items()):
        table.add_row(f"[dim]⏱ {name}[/dim]", f"[dim]{seconds:.3f}s[/dim]")
    return table


async def main(argv: Optional[Sequence[str]] = None) -> int:
    """主函数，返回退出码"""
    console = Console()
    args = build_parser().parse_args(argv)

    try:
        config = resolve_config(args)
    except (ValidationError, ConfigError) as e:
        console.print(f"[bold red]❌ Invalid configuration:[/bold red] {e}")
        return EXIT_VALIDATION
    setup_logging(config.output.log_level)

    if args.command == "export":
        try:
            record = RecordStore(config.output.dir).load(args.hash)
            for fmt in args.formats or ["json-lines"]:
                for path in export(record, fmt, config.output.dir):
                    console.print(f"📝 {path}")
        except ComputationError as e:
            console.print(f"[bold red]❌ {e}[/bold red]")
            return EXIT_COMPUTATION
        return EXIT_OK

    console.print(f"[bold]🚀 LindstedtLab · {config.command}[/bold]\n")
    try:
        result, record = await run(config)
        paths = persist(record, config)
    except ComputationError as e:
        console.print(f"[bold red]❌ {config.command} failed:[/bold red] {e}")
        logger.debug(f"Witness: {e.witness!r}")
        return EXIT_COMPUTATION
    except PermissionError as e:
        console.print(f"[bold red]❌ {e}[/bold red]")
        return EXIT_COMPUTATION

    console.print(summary_table(record))
    console.print(f"[dim]📝 Record: {paths[0]}[/dim]")
    if not result.is_success():
        console.print(f"[bold yellow]⚠️ Failed checks: {', '.join(result.failed_checks())}[/bold yellow]")
        return EXIT_CHECK_FAILED
    console.print("[green]🎉 All checks passed[/green]")
    return EXIT_OK


if __name__ == "__main__":
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        Console().print("\n👋 LindstedtLab Goodbye!")
        sys.exit(130)
