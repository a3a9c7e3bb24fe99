"""
Runs task files on a simulated SoC: turns task descriptions into CSR
instructions, seeds source regions, simulates, checks every destination
against the reference result and reports Metrics.
"""

import json
import logging
from collections import deque

import numpy as np

from xdmasim.bench.metrics import Metrics
from xdmasim.bench.oracle import reference_memset, reference_transform, verify
from xdmasim.config.layout import LayoutKind, LayoutSpec, tile_transpose_patterns, transfer_patterns
from xdmasim.config.pattern import AffinePattern
from xdmasim.config.soc import SocConfig
from xdmasim.errors import ConfigError, XdmaError
from xdmasim.hw.controller import CsrInstruction, build_instruction
from xdmasim.hw.memory import BankedMemory
from xdmasim.hw.plugins import PluginChain, Stage, chain_step, memset_ctrl, transpose_ctrl
from xdmasim.hw.soc import Soc
from xdmasim.parser.tasks import RegionSpec, TaskFile, TaskSpec

logger = logging.getLogger(__name__)

TRANSPOSE_MODES = ("auto", "plugin", "address")


def region_base(config: SocConfig, region: RegionSpec) -> int:
    if region.cluster >= config.num_clusters:
        raise ConfigError(f"region in cluster {region.cluster} of a {config.num_clusters}-cluster SoC")
    if region.offset + region.num_bytes > config.mem_size:
        raise ConfigError(
            f"region [{region.offset:#x}, +{region.num_bytes:#x}) exceeds the"
            f" {config.mem_size:#x}-byte memory of cluster {region.cluster}"
        )
    return config.mem_base_addr[region.cluster] + region.offset


def _aligned(names: tuple[str, ...], ctrls: dict[str, bytes], side: str) -> tuple[bytes, ...]:
    unknown = set(ctrls) - set(names)
    if unknown:
        raise ConfigError(f"{side} plugins {sorted(unknown)} are not installed (have {list(names)})")
    return tuple(ctrls.get(name, b"") for name in names)


def tile_transposable(layout: LayoutSpec, config: SocConfig) -> bool:
    return (
        layout.kind == LayoutKind.TILED
        and layout.tile_m == layout.tile_n
        and layout.tile_n * layout.elem_bytes == config.word_bytes
        and "transpose" in config.ext_src
    )


class PreparedTask:
    """A task spec lowered to patterns and plugin controls."""

    def __init__(
        self,
        spec: TaskSpec,
        src_pattern: AffinePattern,
        dst_pattern: AffinePattern,
        reader_ctrl: tuple[bytes, ...],
        writer_ctrl: tuple[bytes, ...],
        src_base: int | None,
        dst_base: int,
    ):
        self.spec: TaskSpec = spec
        self.src_pattern: AffinePattern = src_pattern
        self.dst_pattern: AffinePattern = dst_pattern
        self.reader_ctrl: tuple[bytes, ...] = reader_ctrl
        self.writer_ctrl: tuple[bytes, ...] = writer_ctrl
        self.src_base: int | None = src_base
        self.dst_base: int = dst_base

    def __repr__(self):
        return f"PreparedTask({self.spec.op}, {self.src_pattern!r} -> {self.dst_pattern!r})"

    @property
    def instruction(self) -> CsrInstruction:
        return build_instruction(self.src_pattern, self.dst_pattern, self.reader_ctrl, self.writer_ctrl)


def prepare_task(spec: TaskSpec, config: SocConfig, transpose_mode: str = "auto") -> PreparedTask:
    assert transpose_mode in TRANSPOSE_MODES
    wb = config.word_bytes
    dst = spec.dst
    if dst.num_bytes == 0 or (spec.src is not None and spec.op != "memset" and spec.src.num_bytes == 0):
        raise XdmaError("empty task")
    dst_base = region_base(config, dst)
    reader = spec.plugins.reader_bytes()
    writer = spec.plugins.writer_bytes()
    src_base = None
    if spec.op == "memset":
        if "memset" not in config.ext_dst:
            raise ConfigError("memset task on a SoC without a memset writer plugin")
        if dst.num_bytes % wb != 0:
            raise ConfigError(f"memset of {dst.num_bytes} bytes is not a whole number of words")
        words = dst.num_bytes // wb
        src_pattern = AffinePattern(dst_base, [0], [wb], wb)
        dst_pattern = AffinePattern(dst_base, [words], [wb], wb)
        writer.setdefault("memset", memset_ctrl(spec.fill_word, words))
    else:
        src = spec.src
        src_base = region_base(config, src)
        src_layout, dst_layout = src.layout_spec, dst.layout_spec
        if spec.op == "transpose":
            use_plugin = src_layout == dst_layout and tile_transposable(src_layout, config)
            if transpose_mode == "plugin" and not use_plugin:
                raise ConfigError(f"{src_layout.name} cannot be transposed by the tile plugin")
            if transpose_mode == "address":
                use_plugin = False
            if use_plugin:
                src_pattern, dst_pattern = tile_transpose_patterns(
                    src_layout, src.rows, src.cols, src_base, dst_base, wb
                )
                reader.setdefault("transpose", transpose_ctrl(src_layout.tile_m))
            else:
                src_pattern, dst_pattern = transfer_patterns(
                    src_layout, dst_layout, src.rows, src.cols, src_base, dst_base, wb, transpose=True
                )
        else:
            src_pattern, dst_pattern = transfer_patterns(
                src_layout, dst_layout, src.rows, src.cols, src_base, dst_base, wb
            )
    return PreparedTask(
        spec,
        src_pattern,
        dst_pattern,
        _aligned(config.ext_src, reader, "reader"),
        _aligned(config.ext_dst, writer, "writer"),
        src_base,
        dst_base,
    )


def _tasks(tasks: TaskFile | list[TaskSpec]) -> list[TaskSpec]:
    specs = tasks.tasks if isinstance(tasks, TaskFile) else list(tasks)
    if not specs:
        raise XdmaError("empty task")
    return specs


def seed_sources(memories: list[BankedMemory], prepared: list[PreparedTask], seed: int) -> None:
    rng = np.random.default_rng(seed)
    for task in prepared:
        if task.src_base is None:
            continue
        mem = memories[task.spec.src.cluster]
        data = rng.integers(0, 256, size=task.spec.src.num_bytes, dtype=np.uint8)
        mem.backdoor_write(task.src_base, data.tobytes())


def expected_destinations(memories: list[BankedMemory], prepared: list[PreparedTask], word_bytes: int):
    """Reference bytes of every destination, from the seeded sources."""
    out = []
    for task in prepared:
        spec = task.spec
        if spec.op == "memset":
            out.append(reference_memset(spec.dst.num_bytes, spec.fill_word, word_bytes))
            continue
        src = spec.src
        data = np.array(memories[src.cluster].view(task.src_base, src.num_bytes))
        out.append(
            reference_transform(
                data, src.layout_spec, spec.dst.layout_spec, src.rows, src.cols, spec.op == "transpose"
            )
        )
    return out


def check_destinations(memories: list[BankedMemory], prepared: list[PreparedTask], expected) -> None:
    for task, reference in zip(prepared, expected):
        dst = task.spec.dst
        verify(memories[dst.cluster].view(task.dst_base, dst.num_bytes), reference, task.dst_base)


class TransferRun:
    """One timed simulation of a task file."""

    def __init__(
        self,
        config: SocConfig,
        tasks: TaskFile | list[TaskSpec],
        seed: int = 0,
        trace: bool = False,
        transpose_mode: str = "auto",
    ):
        self.config: SocConfig = config
        self.prepared: list[PreparedTask] = [
            prepare_task(spec, config, transpose_mode) for spec in _tasks(tasks)
        ]
        self.soc: Soc = Soc(config, trace=trace)
        seed_sources(self.soc.memories, self.prepared, seed)
        self.expected = expected_destinations(self.soc.memories, self.prepared, config.word_bytes)
        for task in self.prepared:
            self.soc.submit(task.instruction, task.spec.controller, task.spec.submit_cycle, tag=task)

    def run(self, cycle_budget: int | None = None) -> "TransferRun":
        self.soc.run(cycle_budget)
        return self

    def check(self) -> None:
        check_destinations(self.soc.memories, self.prepared, self.expected)

    def metrics(self) -> Metrics:
        records = self.soc.records
        start = min(r.issue_cycle for r in records)
        end = max(r.last_write_cycle for r in records)
        return Metrics(
            end - start + 1,
            sum(task.spec.dst.num_bytes for task in self.prepared),
            self.config.beat_bytes,
            stalls=self.soc.stall_counters(),
            details={
                "tasks": len(records),
                "task_cycles": [r.last_write_cycle - r.issue_cycle + 1 for r in records],
            },
        )

    def trace_records(self) -> list[dict]:
        beats = [{"type": "beat", **r} for r in self.soc.link_trace()]
        banks = [{"type": "bank", **r} for r in (self.soc.frontend_trace or [])]
        return sorted(beats + banks, key=lambda r: r["cycle"])

    def write_trace(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for record in self.trace_records():
                f.write(json.dumps(record, sort_keys=True))
                f.write("\n")


def run_transfer(
    config: SocConfig,
    tasks: TaskFile | list[TaskSpec],
    seed: int = 0,
    trace_path: str | None = None,
    cycle_budget: int | None = None,
    transpose_mode: str = "auto",
) -> Metrics:
    """Simulates a task file; raises OracleMismatch if any destination is wrong."""
    run = TransferRun(config, tasks, seed, trace_path is not None, transpose_mode).run(cycle_budget)
    run.check()
    if trace_path is not None:
        run.write_trace(trace_path)
    metrics = run.metrics()
    logger.info("%d tasks, %d bytes in %d cycles", len(run.prepared), metrics.bytes, metrics.cycles)
    return metrics


def run_chain(chain: PluginChain, words: list[bytes]) -> list[bytes]:
    """Streams words through a plugin chain without timing."""
    out = []
    pending = deque(words)
    while pending or not chain.finished:
        word = pending.popleft() if pending and chain.ready() else None
        produced = chain_step(chain, word)
        if produced is not None:
            out.append(produced)
        if not pending:
            chain.end_input()
    return out


def execute_functional(config: SocConfig, memories: list[BankedMemory], task: PreparedTask) -> None:
    """Applies one task through its patterns and plugin chains, in zero time."""
    wb = config.word_bytes

    def memory_of(address: int) -> BankedMemory:
        return memories[config.cluster_of(address)]

    src_mem = memory_of(task.src_pattern.base)
    words = [src_mem.backdoor_read(int(a), wb) for a in task.src_pattern.addresses()]
    words = run_chain(PluginChain.build(Stage.POST_READER, config.ext_src, task.reader_ctrl, wb), words)
    words = run_chain(PluginChain.build(Stage.PRE_WRITER, config.ext_dst, task.writer_ctrl, wb), words)
    dst_addresses = task.dst_pattern.addresses()
    assert len(words) == len(dst_addresses)
    dst_mem = memory_of(task.dst_pattern.base)
    for address, word in zip(dst_addresses, words):
        dst_mem.backdoor_write(int(address), word)


def verify_functional(
    config: SocConfig,
    tasks: TaskFile | list[TaskSpec],
    seed: int = 0,
    transpose_mode: str = "auto",
) -> list[BankedMemory]:
    """Runs every task functionally in submission order and checks the results."""
    prepared = [prepare_task(spec, config, transpose_mode) for spec in _tasks(tasks)]
    memories = [BankedMemory.for_cluster(config, c) for c in range(config.num_clusters)]
    seed_sources(memories, prepared, seed)
    expected = expected_destinations(memories, prepared, config.word_bytes)
    for task in prepared:
        execute_functional(config, memories, task)
    check_destinations(memories, prepared, expected)
    return memories
