"""
LindstedtLab 配置管理
支持从 YAML、.env 和默认值加载运行配置
"""

import json
import os
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
import logging

from core.lattice import (
    Boundary,
    Coefficient,
    EquationSpec,
    Family,
    cubic_nls_coefficients,
    cubic_real_coefficients,
    parse_mu,
)
from core.series import SchemeParameters

logger = logging.getLogger(__name__)

# 加载环境变量
load_dotenv()

COMMANDS = ("classify", "clusters", "bifurcate", "solve", "trees", "measure", "verify-all")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ConfigError(Exception):
    """配置文件缺失或格式错误"""
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CoefficientConfig(_Section):
    """非线性系数 a_{r,s,m} = re + i·im"""
    r: int = Field(ge=0, description="u 的次数")
    s: int = Field(ge=0, description="ū 的次数")
    m: List[int] = Field(default_factory=list, description="空间调制 e^{i m·x}，空表示零向量")
    re: float = Field(default=1.0, description="实部")
    im: float = Field(default=0.0, description="虚部")


class EquationConfig(_Section):
    """方程规格"""
    family: Family = Field(default=Family.NLS, description="方程族 NLS / NLW / NLB")
    dim: int = Field(default=2, ge=1, description="空间维数 D")
    mu: Union[str, float] = Field(default="3/10", description="质量 μ，有理字符串 \"p/q\" 或浮点数")
    boundary: Boundary = Field(default=Boundary.DIRICHLET, description="边界条件")
    N: int = Field(default=2, ge=1, description="首项非线性阶数为 N+1")
    resonant: bool = Field(default=False, description="完全共振 NLS（ω₀=1, μ=0）")
    coefficients: List[CoefficientConfig] = Field(
        default_factory=list,
        description="非线性系数列表；为空时按方程族取三次项",
    )

    @field_validator("mu")
    @classmethod
    def validate_mu(cls, v):
        if isinstance(v, str):
            try:
                Fraction(v.strip())
            except ValueError:
                raise ValueError(f"mu must be a rational string like '3/10', got {v!r}")
        return v

    @model_validator(mode="after")
    def validate_coefficients(self):
        for c in self.coefficients:
            if c.m and len(c.m) != self.dim:
                raise ValueError(f"coefficient mode {c.m} does not match dim={self.dim}")
            if c.r + c.s < 2:
                raise ValueError(f"coefficient degree r+s={c.r + c.s} must be >= 2")
        return self

    def to_coefficients(self) -> Tuple[Coefficient, ...]:
        if not self.coefficients:
            if self.family == Family.NLS:
                return cubic_nls_coefficients(self.dim)
            return cubic_real_coefficients(self.dim)
        return tuple(
            Coefficient(c.r, c.s, tuple(c.m) if c.m else (0,) * self.dim, complex(c.re, c.im))
            for c in self.coefficients
        )


class WindowConfig(_Section):
    """ε 窗口与网格"""
    eps0: float = Field(default=1e-2, gt=0, description="窗口上界 ε₀")
    eps: float = Field(default=1e-3, ge=0, description="单点命令（solve / trees）使用的 ε")
    grid_points: int = Field(default=1000, ge=2, description="分类与聚类扫描的网格点数")

    @model_validator(mode="after")
    def validate_eps(self):
        if self.eps > self.eps0:
            raise ValueError(f"eps={self.eps} must lie in the window [0, eps0={self.eps0}]")
        return self


class ShellConfig(_Section):
    """截断壳层半径"""
    radius: int = Field(default=8, ge=1, description="分类 / 聚类壳层半径")
    Lambda: int = Field(default=16, ge=1, description="求解器截断 Λ")
    tree_radius: int = Field(default=6, ge=1, description="树展开使用的截断")


class ConstantsConfig(_Section):
    """方案常数"""
    gamma: float = Field(default=1e-3, gt=0, description="小除数常数 γ")
    gamma_bar: float = Field(default=0.2, gt=0, description="小 / 非小模式分界 γ̄")
    tau: float = Field(default=4.0, gt=0, description="x_ν ≥ γ/p^τ 的指数")
    tau1: float = Field(default=3.0, gt=0, description="||δ|−γ̄| ≥ γ/|ν|^{τ₁} 的指数")
    xi: float = Field(default=2.0, description="p_ν^ξ 指数")
    alpha: float = Field(default=0.5, gt=0, le=1, description="聚类直径指数 α")
    beta: float = Field(default=0.25, gt=0, description="聚类链指数 β")
    C1: float = Field(default=1.0, gt=0, description="分离常数 C₁")
    C2: float = Field(default=1.0, gt=0, description="链常数 C₂")
    C0: float = Field(default=0.0, ge=0, description="树界常数 C₀（0 表示拟合最小可行值）")
    Gamma: float = Field(default=3.0, gt=0, description="|χ'| ≤ Γ/γ")

    @model_validator(mode="after")
    def validate_order(self):
        if not self.gamma < self.gamma_bar:
            raise ValueError(f"constants must satisfy gamma < gamma_bar, got gamma={self.gamma} >= gamma_bar={self.gamma_bar}")
        if not self.gamma_bar < 0.25:
            raise ValueError(f"constants must satisfy gamma_bar < 1/4, got gamma_bar={self.gamma_bar}")
        if not self.beta < self.alpha:
            raise ValueError(f"constants must satisfy beta < alpha, got beta={self.beta} >= alpha={self.alpha}")
        if not self.xi > 0:
            raise ValueError(f"constants must satisfy xi > 0, got xi={self.xi}")
        return self

    def scheme(self) -> SchemeParameters:
        return SchemeParameters(
            gamma=self.gamma,
            gamma_bar=self.gamma_bar,
            tau=self.tau,
            tau1=self.tau1,
            xi=self.xi,
            beta=self.beta,
            C2=self.C2,
            Gamma=self.Gamma,
        )


class SolverConfig(_Section):
    """求解器上限与容差"""
    K_max: Optional[int] = Field(default=None, ge=1, description="递推阶上限，缺省 N+6")
    K_tree: Optional[int] = Field(default=None, ge=1, description="树枚举阶上限，缺省 N+4")
    provider: str = Field(default="vertex", description="反项提供者 vertex / trees")
    path: str = Field(default="direct", description="P 块求解路径 direct / propagator")
    fixpoint_tol: float = Field(default=1e-10, gt=0, description="反项不动点容差")
    fixpoint_max_iter: int = Field(default=50, ge=1, description="反项不动点最大迭代数")
    newton_tol: float = Field(default=1e-10, gt=0, description="Newton 残差容差")
    newton_max_iter: int = Field(default=60, ge=1, description="Newton 最大迭代数")
    kappa: float = Field(default=0.5, gt=0, description="|M|_κ 权重 κ")
    rho: float = Field(default=0.5, gt=0, le=1, description="|M|_κ 权重 ρ")
    max_trees: int = Field(default=5_000_000, ge=1, description="子树池总数上限")
    eps_sweep: List[float] = Field(default_factory=lambda: [1e-3, 5e-4, 2.5e-4], description="Cε 稳定性与经验半径的 ε 扫描")

    @field_validator("provider")
    @classmethod
    def validate_provider(cls, v):
        if v not in ("vertex", "trees"):
            raise ValueError(f"Invalid provider: {v}. Must be vertex or trees")
        return v

    @field_validator("path")
    @classmethod
    def validate_path(cls, v):
        if v not in ("direct", "propagator"):
            raise ValueError(f"Invalid path: {v}. Must be direct or propagator")
        return v


class BifurcationConfig(_Section):
    """分岔方程搜索"""
    radius: int = Field(default=3, ge=1, description="Z^D_{1,+} 支撑搜索半径")
    max_size: int = Field(default=2, ge=1, description="支撑最大元素数")
    conventions: List[str] = Field(default_factory=lambda: ["displayed"], description="振幅约定（balanced 为可选的符号翻转变体）")
    audit_radius: int = Field(default=3, ge=1, description="正交性审计半径")
    prime_cap: int = Field(default=8, ge=1, le=8, description="代数数域素数个数上限")
    determinant_cap: int = Field(default=12, ge=1, le=12, description="精确行列式维数上限")
    random_blocks: int = Field(default=100, ge=0, description="随机奇偶范式块数")

    @field_validator("conventions")
    @classmethod
    def validate_conventions(cls, v):
        if not v:
            raise ValueError("at least one amplitude convention is required")
        bad = [c for c in v if c not in ("displayed", "balanced")]
        if bad:
            raise ValueError(f"Unknown amplitude conventions: {bad}")
        return v


class MeasureConfig(_Section):
    """测度扫描"""
    gridsize: int = Field(default=2000, ge=2, description="ε 网格点数")
    windows: int = Field(default=7, ge=1, description="二进窗口个数 j = 0..windows-1")
    radius: int = Field(default=8, ge=1, description="扫描壳层半径")
    min_fraction: float = Field(default=0.9, ge=0, le=1, description="最小窗口存活比例阈值")


class OutputConfig(_Section):
    """输出与运行环境"""
    dir: str = Field(default="./runs", description="记录输出目录")
    formats: List[str] = Field(default_factory=lambda: ["json-lines"], description="导出格式")
    jobs: int = Field(default=1, ge=1, description="扫描并发数")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="随机种子（u64）")
    log_level: str = Field(default="INFO", description="日志级别")

    @field_validator("formats")
    @classmethod
    def validate_formats(cls, v):
        bad = [f for f in v if f not in ("json-lines", "csv", "plot-data")]
        if bad:
            raise ValueError(f"Unknown export formats: {bad}")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        v = v.upper()
        if v not in LOG_LEVELS:
            raise ValueError(f"Invalid log level: {v}. Must be one of {LOG_LEVELS}")
        return v


class RunConfig(_Section):
    """运行主配置"""
    command: str = Field(default="verify-all", description="子命令")
    equation: EquationConfig = Field(default_factory=EquationConfig)
    window: WindowConfig = Field(default_factory=WindowConfig)
    shell: ShellConfig = Field(default_factory=ShellConfig)
    constants: ConstantsConfig = Field(default_factory=ConstantsConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    bifurcation: BifurcationConfig = Field(default_factory=BifurcationConfig)
    measure: MeasureConfig = Field(default_factory=MeasureConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("command")
    @classmethod
    def validate_command(cls, v):
        if v not in COMMANDS:
            raise ValueError(f"Invalid command: {v}. Must be one of {COMMANDS}")
        return v

    @model_validator(mode="after")
    def validate_caps(self):
        if self.K_tree > self.K_max:
            raise ValueError(f"K_tree={self.K_tree} must not exceed K_max={self.K_max}")
        if any(e > self.window.eps0 or e <= 0 for e in self.solver.eps_sweep):
            raise ValueError(f"solver.eps_sweep must lie in (0, eps0={self.window.eps0}]")
        return self

    @property
    def K_max(self) -> int:
        return self.solver.K_max if self.solver.K_max is not None else self.equation.N + 6

    @property
    def K_tree(self) -> int:
        return self.solver.K_tree if self.solver.K_tree is not None else self.equation.N + 4

    def to_spec(self) -> EquationSpec:
        """构建 EquationSpec"""
        eq = self.equation
        return EquationSpec(
            family=eq.family,
            dim=eq.dim,
            mu=parse_mu(eq.mu),
            boundary=eq.boundary,
            N=eq.N,
            coefficients=eq.to_coefficients(),
            eps0=self.window.eps0,
            resonant=eq.resonant,
        )

    def scheme(self) -> SchemeParameters:
        return self.constants.scheme()

    def snapshot(self) -> Dict[str, Any]:
        """可哈希的配置快照（JSON 兼容）"""
        return json.loads(self.model_dump_json())


class ConfigManager:
    """配置管理器
    支持 YAML 文件、.env 环境变量覆盖和默认值
    """

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path
        self.config: Optional[RunConfig] = None

    def load_from_yaml(self, yaml_path: str) -> RunConfig:
        """从 YAML 文件加载配置

        Raises:
            ConfigError: 文件不可读或顶层不是映射
            ValidationError: 字段校验失败（loc 给出字段路径）
        """
        try:
            with open(yaml_path, "r", encoding="utf-8") as f:
                yaml_data = yaml.safe_load(f) or {}
            if not isinstance(yaml_data, dict):
                raise ConfigError(f"Top level of {yaml_path} must be a mapping, got {type(yaml_data).__name__}")
            self.config = RunConfig(**yaml_data)
            logger.info(f"📖 Loaded config from YAML: {yaml_path} (command={self.config.command})")
            return self.config
        except (OSError, yaml.YAMLError) as e:
            logger.error(f"Failed to load YAML config: {e}")
            raise ConfigError(str(e)) from e
        except (ValidationError, ConfigError) as e:
            logger.error(f"Failed to load YAML config: {e}")
            raise

    def env_overrides(self) -> Dict[str, Any]:
        """LINDSTEDT_* 环境变量覆盖的 output 字段"""
        out: Dict[str, Any] = {}
        if os.getenv("LINDSTEDT_OUT"):
            out["dir"] = os.getenv("LINDSTEDT_OUT")
        if os.getenv("LINDSTEDT_JOBS"):
            out["jobs"] = os.getenv("LINDSTEDT_JOBS")
        if os.getenv("LINDSTEDT_SEED"):
            out["seed"] = os.getenv("LINDSTEDT_SEED")
        if os.getenv("LINDSTEDT_LOG_LEVEL"):
            out["log_level"] = os.getenv("LINDSTEDT_LOG_LEVEL")
        return out

    def load_from_env(self, base: Optional[RunConfig] = None) -> RunConfig:
        """在 base（缺省为默认配置）上应用环境变量覆盖"""
        base = base or RunConfig()
        overrides = self.env_overrides()
        if not overrides:
            return base
        data = base.model_dump()
        data["output"].update(overrides)
        config = RunConfig(**data)
        logger.info(f"✅ Applied environment overrides: {sorted(overrides)}")
        return config

    def load(self) -> RunConfig:
        """加载配置（优先 YAML，其次环境变量覆盖，最后默认值）"""
        path = self.config_path or os.getenv("LINDSTEDT_CONFIG")
        if path and Path(path).exists():
            base = self.load_from_yaml(path)
        else:
            if path:
                logger.warning(f"⚠️ Config file not found: {path}, using defaults")
            else:
                logger.warning("⚠️ No config file given, using defaults")
            base = RunConfig()
        self.config = self.load_from_env(base)
        return self.config

    def get_config(self) -> RunConfig:
        """获取已加载的配置"""
        if not self.config:
            return self.load()
        return self.config


# 全局配置实例
config_manager = ConfigManager()
