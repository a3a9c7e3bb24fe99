"""
Schemas of the task files and sweep grids consumed by the harness.
"""

import json
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from xdmasim.config.layout import LayoutSpec
from xdmasim.errors import ConfigError, LayoutError
from xdmasim.parser.parser import parse_layout, parse_layout_pairs

SETUP_NAMES = ("sw_idma", "sw_gemmini", "dma_accel", "xdma3", "xdma5", "xdma9")


class _Schema(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class RegionSpec(_Schema):
    """A rows x cols matrix stored in one cluster at base + offset."""

    cluster: int = Field(ge=0)
    offset: int = Field(default=0, ge=0)
    layout: str = "MN"
    rows: int = Field(ge=0)
    cols: int = Field(ge=0)
    elem_bytes: int = Field(default=1, ge=1)

    @field_validator("layout")
    @classmethod
    def _descriptor(cls, value: str) -> str:
        try:
            return parse_layout(value).name
        except LayoutError as error:
            raise ValueError(str(error)) from None

    @property
    def layout_spec(self) -> LayoutSpec:
        return parse_layout(self.layout, self.elem_bytes)

    @property
    def num_bytes(self) -> int:
        return self.rows * self.cols * self.elem_bytes


def _hex_bytes(value: str) -> bytes:
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise ValueError(f"plugin control {value!r} is not a hex string") from None


class PluginCtrlSpec(_Schema):
    """Plugin name -> control bytes in hex, per frontend."""

    reader: dict[str, str] = {}
    writer: dict[str, str] = {}

    @field_validator("reader", "writer")
    @classmethod
    def _hex(cls, value: dict[str, str]) -> dict[str, str]:
        for ctrl in value.values():
            _hex_bytes(ctrl)
        return value

    def reader_bytes(self) -> dict[str, bytes]:
        return {name: _hex_bytes(ctrl) for name, ctrl in self.reader.items()}

    def writer_bytes(self) -> dict[str, bytes]:
        return {name: _hex_bytes(ctrl) for name, ctrl in self.writer.items()}


class TaskSpec(_Schema):
    """
    copy: the destination holds the source matrix in the destination layout.
    transpose: the destination holds the cols x rows transpose.
    memset: the destination is filled with fill_word; src is ignored.
    """

    controller: int = Field(default=0, ge=0)
    submit_cycle: int = Field(default=0, ge=0)
    op: Literal["copy", "transpose", "memset"] = "copy"
    src: RegionSpec | None = None
    dst: RegionSpec
    fill_word: int = Field(default=0, ge=0, lt=2**64)
    plugins: PluginCtrlSpec = PluginCtrlSpec()

    @model_validator(mode="after")
    def _shapes(self) -> "TaskSpec":
        if self.op == "memset":
            return self
        if self.src is None:
            raise ValueError(f"{self.op} task needs a src region")
        if self.src.elem_bytes != self.dst.elem_bytes:
            raise ValueError("src and dst element sizes differ")
        expected = (self.src.rows, self.src.cols)
        if self.op == "transpose":
            expected = (self.src.cols, self.src.rows)
        if (self.dst.rows, self.dst.cols) != expected:
            raise ValueError(
                f"dst shape {self.dst.rows}x{self.dst.cols} does not match"
                f" {expected[0]}x{expected[1]} for a {self.op}"
            )
        return self


class TaskFile(_Schema):
    schema_version: Literal[1]
    tasks: list[TaskSpec]


class SweepGrid(_Schema):
    """
    Layout pairs are "SRC->DST" descriptors; sizes are square matrix edges.
    Every (setup, pair, size) point yields one CSV row.
    """

    name: str = "custom"
    setups: list[str] = list(SETUP_NAMES)
    layout_pairs: list[str]
    sizes: list[int]
    src_cluster: int = Field(default=0, ge=0)
    dst_cluster: int = Field(default=1, ge=0)

    @field_validator("setups")
    @classmethod
    def _known_setups(cls, value: list[str]) -> list[str]:
        for setup in value:
            if setup not in SETUP_NAMES:
                raise ValueError(f"unknown setup {setup!r}")
        return value

    @field_validator("layout_pairs")
    @classmethod
    def _pairs(cls, value: list[str]) -> list[str]:
        try:
            return [f"{s.name}->{d.name}" for p in value for s, d in parse_layout_pairs(p)]
        except LayoutError as error:
            raise ValueError(str(error)) from None

    @field_validator("sizes")
    @classmethod
    def _sizes(cls, value: list[int]) -> list[int]:
        if any(size < 1 for size in value):
            raise ValueError("matrix sizes must be positive")
        return value

    @property
    def num_points(self) -> int:
        return len(self.setups) * len(self.layout_pairs) * len(self.sizes)


def _validate(model: type[BaseModel], text: str, what: str):
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigError(f"{what} is not valid JSON: {error}") from None
    try:
        return model.model_validate(document)
    except ValidationError as error:
        details = "; ".join(
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg'].removeprefix('Value error, ')}"
            for e in error.errors()
        )
        raise ConfigError(f"invalid {what}: {details}") from None


def parse_tasks(text: str) -> TaskFile:
    return _validate(TaskFile, text, "task file")


def parse_grid(text: str) -> SweepGrid:
    return _validate(SweepGrid, text, "sweep grid")


def serialize_tasks(tasks: list[TaskSpec]) -> str:
    return json.dumps(
        {
            "schema_version": 1,
            "tasks": [t.model_dump(mode="json", exclude_defaults=True) for t in tasks],
        },
        indent=2,
    )
