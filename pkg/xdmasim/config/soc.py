"""
Design-time parameters of a simulated SoC and the cost-model constants of the
software baselines, read from and written to versioned JSON documents:

    {"schema_version": 1, "soc": {...}, "baselines": {...}}
"""

import json
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from xdmasim.errors import ConfigError
from xdmasim.utils.search import find_region

SCHEMA_VERSION = 1

MMIO_BASE = 0xF000_0000
MMIO_CLUSTER_STRIDE = 0x100

PLUGIN_NAMES = ("identity", "transpose", "memset")
WRITER_ONLY_PLUGINS = ("memset",)


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SwLoopParams(_Frozen):
    """Software control loop driving a descriptor-based DMA engine."""

    c_program: int = Field(ge=0)
    c_loop: int = Field(ge=0)
    dims: Literal[1, 2] = 2
    pipelined: bool = False

    @property
    def c_setup(self) -> int:
        return self.c_program + self.c_loop


class ReshapeAccelParams(_Frozen):
    """Contiguous DMA copy followed by a standalone layout transformation unit."""

    copy_setup: int = Field(default=40, ge=0)
    accel_setup: int = Field(default=20, ge=0)
    words_per_cycle: int = Field(default=8, ge=1)
    passes: int = Field(default=2, ge=1)


class BaselineConfig(_Frozen):
    idma: SwLoopParams = SwLoopParams(c_program=40, c_loop=160)
    gemmini: SwLoopParams = SwLoopParams(c_program=12, c_loop=0)
    reshape_accel: ReshapeAccelParams = ReshapeAccelParams()


class SocConfig(_Frozen):
    num_clusters: int = Field(default=2, ge=1)
    mem_base_addr: tuple[int, ...] = (0x1000_0000, 0x1040_0000)
    mem_size: int = Field(default=4 * 1024 * 1024, gt=0)
    num_banks: int = Field(default=32, ge=1)
    bank_word_bits: int = Field(default=64, ge=8)
    axi_width_bits: int = Field(default=512, ge=8)
    axi_latency: int = Field(default=4, ge=1)
    # cycles from a bank read grant to the word entering the reader FIFO
    read_latency: int = Field(default=2, ge=0)
    dim_src: int = Field(default=4, ge=1)
    dim_dst: int = Field(default=4, ge=1)
    dbuf_src: int = 9
    dbuf_dst: int = 9
    nchan_src: int = Field(default=8, ge=1)
    nchan_dst: int = Field(default=8, ge=1)
    ext_src: tuple[str, ...] = ("transpose",)
    ext_dst: tuple[str, ...] = ("memset",)
    task_fifo_depth: int = Field(default=8, ge=1)
    cycle_budget: int = Field(default=50_000_000, ge=1)
    stall_window: int = Field(default=10_000, ge=1)
    baselines: BaselineConfig = BaselineConfig()

    @field_validator("dbuf_src", "dbuf_dst")
    @classmethod
    def _buffer_depth(cls, value: int) -> int:
        if value < 1:
            raise ValueError("buffer depth must be ≥ 1")
        return value

    @field_validator("bank_word_bits")
    @classmethod
    def _whole_bytes(cls, value: int) -> int:
        if value % 8 != 0:
            raise ValueError("bank_word_bits must be a whole number of bytes")
        return value

    @field_validator("ext_src", "ext_dst")
    @classmethod
    def _known_plugins(cls, names: tuple[str, ...]) -> tuple[str, ...]:
        for name in names:
            if name not in PLUGIN_NAMES:
                raise ValueError(f"unknown plugin {name!r}")
        return names

    @model_validator(mode="after")
    def _invariants(self) -> "SocConfig":
        if self.axi_width_bits % self.bank_word_bits != 0:
            raise ValueError("axi_width_bits not a multiple of bank_word_bits")
        if self.mem_size % (self.num_banks * self.word_bytes) != 0:
            raise ValueError("mem_size not a multiple of num_banks × bank word size")
        if len(self.mem_base_addr) != self.num_clusters:
            raise ValueError(
                f"{len(self.mem_base_addr)} memory bases for {self.num_clusters} clusters"
            )
        for name in self.ext_src:
            if name in WRITER_ONLY_PLUGINS:
                raise ValueError(f"plugin {name!r} can only be installed pre-writer")
        bases = sorted(self.mem_base_addr)
        for lower, upper in zip(bases, bases[1:]):
            if lower + self.mem_size > upper:
                raise ValueError(
                    f"cluster memory ranges at {lower:#x} and {upper:#x} overlap"
                )
        for base in bases:
            if base < 0 or base % self.word_bytes != 0:
                raise ValueError(f"memory base {base:#x} is not word aligned")
        if bases[-1] + self.mem_size > MMIO_BASE:
            raise ValueError(f"cluster memory reaches into the MMIO window at {MMIO_BASE:#x}")
        return self

    @property
    def word_bytes(self) -> int:
        return self.bank_word_bits // 8

    @property
    def beat_bytes(self) -> int:
        return self.axi_width_bits // 8

    @property
    def words_per_beat(self) -> int:
        return self.axi_width_bits // self.bank_word_bits

    def mem_range(self, cluster: int) -> tuple[int, int]:
        base = self.mem_base_addr[cluster]
        return base, base + self.mem_size

    def cluster_of(self, address: int) -> int | None:
        """Cluster whose memory contains the address, None if there is none."""
        order = sorted(range(self.num_clusters), key=lambda c: self.mem_base_addr[c])
        index = find_region(
            [self.mem_base_addr[c] for c in order], [self.mem_size] * len(order), address
        )
        return None if index is None else order[index]

    def mmio_base(self, cluster: int) -> int:
        return MMIO_BASE + cluster * MMIO_CLUSTER_STRIDE


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"])
        message = item["msg"].removeprefix("Value error, ")
        parts.append(f"{where}: {message}" if where else message)
    return "; ".join(parts)


def soc_config(**fields) -> SocConfig:
    """Builds a validated SocConfig, reporting violations as ConfigError."""
    try:
        return SocConfig(**fields)
    except ValidationError as error:
        raise ConfigError(_describe(error)) from None


def default_config() -> SocConfig:
    return soc_config()


def with_overrides(config: SocConfig, **fields) -> SocConfig:
    """Copy of a config with some fields replaced, validated again."""
    values = {name: getattr(config, name) for name in SocConfig.model_fields}
    values.update(fields)
    return soc_config(**values)


def parse_config(text: str) -> SocConfig:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigError(f"config is not valid JSON: {error}") from None
    if not isinstance(document, dict):
        raise ConfigError("config document must be an object")
    unknown = set(document) - {"schema_version", "soc", "baselines"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    if document.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {document.get('schema_version')!r},"
            f" expected {SCHEMA_VERSION}"
        )
    soc = document.get("soc", {})
    if not isinstance(soc, dict):
        raise ConfigError("soc section must be an object")
    if "baselines" in soc:
        raise ConfigError("baselines belong at the top level, not inside soc")
    try:
        return SocConfig.model_validate(
            {**soc, "baselines": document.get("baselines", {})}
        )
    except ValidationError as error:
        raise ConfigError(_describe(error)) from None


def serialize_config(config: SocConfig) -> str:
    soc = config.model_dump(mode="json")
    baselines = soc.pop("baselines")
    return json.dumps(
        {"schema_version": SCHEMA_VERSION, "soc": soc, "baselines": baselines}, indent=2
    )
