"""
Controller of a half-unit: turns committed CSR write sequences into XdmaCfg
tasks, routes the source and destination halves to the clusters owning the
addressed memory, and dispatches queued work in order.

CSR map (one commit = one task):

    0x00 src_base     0x01 dst_base     0x02 src_dims     0x03 dst_dims
    0x10+i src_bound  0x20+i src_stride 0x30+i dst_bound  0x40+i dst_stride
    0x50+i reader plugin i control (bytes)
    0x60+i writer plugin i control (bytes)
    0xFF commit
"""

import logging
from collections import deque
from collections.abc import Callable
from enum import Enum, auto

from xdmasim.config.cfg import XdmaCfg
from xdmasim.config.pattern import AffinePattern
from xdmasim.config.soc import SocConfig
from xdmasim.errors import DecodeError, PluginError
from xdmasim.hw.backend import FLAG_BOTH, FLAG_DST, FLAG_SRC
from xdmasim.hw.plugins import PluginChain, Stage

logger = logging.getLogger(__name__)

CSR_SRC_BASE = 0x00
CSR_DST_BASE = 0x01
CSR_SRC_DIMS = 0x02
CSR_DST_DIMS = 0x03
CSR_SRC_BOUND = 0x10
CSR_SRC_STRIDE = 0x20
CSR_DST_BOUND = 0x30
CSR_DST_STRIDE = 0x40
CSR_READER_CTRL = 0x50
CSR_WRITER_CTRL = 0x60
CSR_COMMIT = 0xFF
MAX_CSR_DIMS = 16


class CsrInstruction:
    def __init__(self, writes: list[tuple[int, int | bytes]] | None = None):
        self.writes: list[tuple[int, int | bytes]] = list(writes or [])

    def __repr__(self):
        return f"CsrInstruction({len(self.writes)} writes)"

    def write(self, index: int, value: int | bytes) -> "CsrInstruction":
        self.writes.append((index, value))
        return self

    def commit(self) -> "CsrInstruction":
        return self.write(CSR_COMMIT, 0)

    @property
    def committed(self) -> bool:
        return bool(self.writes) and self.writes[-1][0] == CSR_COMMIT


def build_instruction(
    src: AffinePattern,
    dst: AffinePattern,
    reader_ctrl: tuple[bytes, ...] = (),
    writer_ctrl: tuple[bytes, ...] = (),
) -> CsrInstruction:
    instr = CsrInstruction()
    instr.write(CSR_SRC_BASE, src.base).write(CSR_DST_BASE, dst.base)
    instr.write(CSR_SRC_DIMS, src.dims).write(CSR_DST_DIMS, dst.dims)
    for i, (bound, stride) in enumerate(zip(src.bounds, src.strides)):
        instr.write(CSR_SRC_BOUND + i, bound).write(CSR_SRC_STRIDE + i, stride)
    for i, (bound, stride) in enumerate(zip(dst.bounds, dst.strides)):
        instr.write(CSR_DST_BOUND + i, bound).write(CSR_DST_STRIDE + i, stride)
    for i, ctrl in enumerate(reader_ctrl):
        instr.write(CSR_READER_CTRL + i, ctrl)
    for i, ctrl in enumerate(writer_ctrl):
        instr.write(CSR_WRITER_CTRL + i, ctrl)
    return instr.commit()


def _field(fields: dict[int, int | bytes], index: int, name: str) -> int:
    if index not in fields:
        raise DecodeError(f"missing field {name}")
    value = fields[index]
    if not isinstance(value, int):
        raise DecodeError(f"field {name} must be an integer")
    return value


def _pattern(fields, side: str, base_csr, dims_csr, bound_csr, stride_csr, word_bytes):
    base = _field(fields, base_csr, f"{side}_base")
    dims = _field(fields, dims_csr, f"{side}_dims")
    if not 0 <= dims <= MAX_CSR_DIMS:
        raise DecodeError(f"{side}_dims={dims} out of range")
    bounds = [_field(fields, bound_csr + i, f"{side}_bound{i}") for i in range(dims)]
    strides = [_field(fields, stride_csr + i, f"{side}_stride{i}") for i in range(dims)]
    return AffinePattern(base, bounds, strides, word_bytes)


def _ctrls(fields, first: int, count: int) -> tuple[bytes, ...]:
    out = []
    for i in range(count):
        value = fields.get(first + i, b"")
        if not isinstance(value, bytes):
            raise DecodeError(f"plugin control {first + i:#x} must be bytes")
        out.append(value)
    return tuple(out)


def decode(instr: CsrInstruction, config: SocConfig, task_id: int) -> XdmaCfg:
    if not instr.committed:
        raise DecodeError("instruction not committed")
    fields: dict[int, int | bytes] = {}
    for index, value in instr.writes[:-1]:
        fields[index] = value
    wb = config.word_bytes
    src = _pattern(fields, "src", CSR_SRC_BASE, CSR_SRC_DIMS, CSR_SRC_BOUND, CSR_SRC_STRIDE, wb)
    dst = _pattern(fields, "dst", CSR_DST_BASE, CSR_DST_DIMS, CSR_DST_BOUND, CSR_DST_STRIDE, wb)
    for side, pattern, limit in (("source", src, config.dim_src), ("destination", dst, config.dim_dst)):
        if pattern.dims > limit:
            raise DecodeError(
                f"{side} pattern has {pattern.dims} dimensions, the frontend"
                f" supports {limit}"
            )
    clusters = []
    for side, pattern in (("src", src), ("dst", dst)):
        cluster = config.cluster_of(pattern.base)
        if cluster is None:
            raise DecodeError(f"{side} address {pattern.base:#x} is outside every cluster")
        pattern.check_within(*config.mem_range(cluster))
        clusters.append(cluster)
    reader_ctrl = _ctrls(fields, CSR_READER_CTRL, len(config.ext_src))
    writer_ctrl = _ctrls(fields, CSR_WRITER_CTRL, len(config.ext_dst))
    unknown = set(fields) - _known_csrs(src.dims, dst.dims, config)
    if unknown:
        raise DecodeError(f"writes to unknown CSRs {sorted(unknown)}")
    cfg = XdmaCfg(task_id, clusters[0], clusters[1], src, dst, reader_ctrl, writer_ctrl)
    try:
        produced = PluginChain.build(
            Stage.POST_READER, config.ext_src, cfg.reader_plugin_ctrl, wb
        ).output_words(cfg.src_words)
        consumed = PluginChain.build(
            Stage.PRE_WRITER, config.ext_dst, cfg.writer_plugin_ctrl, wb
        ).output_words(produced)
    except PluginError as error:
        raise DecodeError(f"task {task_id}: {error}") from None
    cfg.check_stream(produced, consumed)
    return cfg


def _known_csrs(src_dims: int, dst_dims: int, config: SocConfig) -> set[int]:
    known = {CSR_SRC_BASE, CSR_DST_BASE, CSR_SRC_DIMS, CSR_DST_DIMS}
    for i in range(src_dims):
        known |= {CSR_SRC_BOUND + i, CSR_SRC_STRIDE + i}
    for i in range(dst_dims):
        known |= {CSR_DST_BOUND + i, CSR_DST_STRIDE + i}
    known |= {CSR_READER_CTRL + i for i in range(len(config.ext_src))}
    known |= {CSR_WRITER_CTRL + i for i in range(len(config.ext_dst))}
    return known


class Route:
    """Half-cfgs of one task, each as (cluster, flags); source half first."""

    def __init__(self, controller: int, halves: list[tuple[int, int]]):
        self.controller: int = controller
        self.halves: list[tuple[int, int]] = halves

    @property
    def local(self) -> list[tuple[int, int]]:
        return [h for h in self.halves if h[0] == self.controller]

    @property
    def remote(self) -> list[tuple[int, int]]:
        return [h for h in self.halves if h[0] != self.controller]


def route(cfg: XdmaCfg, controller: int) -> Route:
    if cfg.is_local:
        return Route(controller, [(cfg.src_cluster, FLAG_BOTH)])
    return Route(controller, [(cfg.src_cluster, FLAG_SRC), (cfg.dst_cluster, FLAG_DST)])


class EntryKind(Enum):
    LOCAL = auto()
    CONSUMER = auto()


class TaskFifo:
    """
    In-order queue of the work that needs the writer: local tasks and
    destination halves. Host submissions respect the depth; halves arriving
    from remote controllers are always queued.
    """

    def __init__(self, depth: int):
        self.depth: int = depth
        self.entries: deque[tuple[EntryKind, XdmaCfg]] = deque()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.depth

    def push(self, kind: EntryKind, cfg: XdmaCfg) -> None:
        self.entries.append((kind, cfg))

    def head(self) -> tuple[EntryKind, XdmaCfg] | None:
        return self.entries[0] if self.entries else None

    def pop(self) -> tuple[EntryKind, XdmaCfg]:
        return self.entries.popleft()


def dispatch_tick(fifo: TaskFifo, unit, cfg_sent: Callable[[int], bool], cycle: int) -> list[int]:
    """
    Starts at most one source half, in grant arrival order, and the FIFO head
    once its frontends are free. A destination half is granted only after all
    cfg beats of its task have entered the interconnect.
    """
    started = []
    ep = unit.endpoint
    if ep.grants and not unit.reader.busy and ep.tx_task is None:
        task_id = ep.grants[0]
        cfg = unit.producer_halves.get(task_id)
        if cfg is not None:
            ep.grants.popleft()
            del unit.producer_halves[task_id]
            unit.start_producer(cfg, cycle)
            started.append(task_id)
    head = fifo.head()
    if head is not None:
        kind, cfg = head
        if kind == EntryKind.CONSUMER:
            ready = not unit.writer.busy and ep.rx_task is None and cfg_sent(cfg.task_id)
        else:
            ready = not unit.writer.busy and not unit.reader.busy
        if ready:
            fifo.pop()
            if kind == EntryKind.CONSUMER:
                unit.start_consumer(cfg, cycle)
            else:
                unit.start_local(cfg, cycle)
            started.append(cfg.task_id)
    for task_id in started:
        logger.info("c%d dispatched task %d at cycle %d", unit.cluster_id, task_id, cycle)
    return started
