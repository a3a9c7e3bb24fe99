"""
Backend tunnels between half-units. Everything crossing the interconnect is a
write to one of four MMIO addresses of the receiving cluster:

    base + 0x00  cfg     encoded half-task configurations
    base + 0x10  data    stream words, W_AXI/W_B per beat
    base + 0x20  grant   consumer ready, sent back to the producer
    base + 0x30  finish  end of stream, follows the last data beat

Cfg wire format (little-endian):

    header   magic u16, version u8, flags u8 (bit0 src half, bit1 dst half),
             task_id u32, total_len u16, src_cluster u8, dst_cluster u8,
             src_dims u8, dst_dims u8, n_reader_ctrl u8, n_writer_ctrl u8,
             word_bytes u16, 2 reserved, src_base u32, dst_base u32, 4 reserved
    dims     per src then dst dimension: bound u32, stride i32
    ctrls    per reader then writer control vector: length u16, bytes
"""

import logging
import struct
from collections import deque
from enum import Enum, auto

from xdmasim.config.cfg import XdmaCfg
from xdmasim.config.pattern import AffinePattern
from xdmasim.config.soc import SocConfig
from xdmasim.errors import DecodeError, ProtocolError
from xdmasim.hw.interconnect import BACKEND_MASTER, Beat, BeatKind, Link, submit
from xdmasim.hw.plugins import WordQueue

logger = logging.getLogger(__name__)

CFG_OFFSET = 0x00
DATA_OFFSET = 0x10
GRANT_OFFSET = 0x20
FINISH_OFFSET = 0x30

MMIO_OFFSETS = {
    BeatKind.CFG: CFG_OFFSET,
    BeatKind.DATA: DATA_OFFSET,
    BeatKind.GRANT: GRANT_OFFSET,
    BeatKind.FINISH: FINISH_OFFSET,
}

CFG_MAGIC = 0xD3A5
CFG_VERSION = 1
FLAG_SRC = 0x1
FLAG_DST = 0x2
FLAG_BOTH = FLAG_SRC | FLAG_DST

HEADER = struct.Struct("<HBBIHBBBBBBH2xII4x")
DIM = struct.Struct("<Ii")
CTRL_LEN = struct.Struct("<H")
CTRL_BUDGET = 256


def max_cfg_bytes(config: SocConfig) -> int:
    return HEADER.size + DIM.size * (config.dim_src + config.dim_dst) + CTRL_BUDGET


def encode_cfg(cfg: XdmaCfg, flags: int = FLAG_BOTH, limit: int | None = None) -> bytes:
    ctrls = cfg.reader_plugin_ctrl + cfg.writer_plugin_ctrl
    size = (
        HEADER.size
        + DIM.size * (cfg.src_pattern.dims + cfg.dst_pattern.dims)
        + sum(CTRL_LEN.size + len(c) for c in ctrls)
    )
    if limit is not None and size > limit:
        raise DecodeError(
            f"task {cfg.task_id}: encoded cfg of {size} bytes exceeds the {limit}-byte maximum"
        )
    for p in (cfg.src_pattern, cfg.dst_pattern):
        if not 0 <= p.base < 2**32:
            raise DecodeError(f"pattern base {p.base:#x} does not fit 32 bits")
    out = bytearray(
        HEADER.pack(
            CFG_MAGIC,
            CFG_VERSION,
            flags,
            cfg.task_id,
            size,
            cfg.src_cluster,
            cfg.dst_cluster,
            cfg.src_pattern.dims,
            cfg.dst_pattern.dims,
            len(cfg.reader_plugin_ctrl),
            len(cfg.writer_plugin_ctrl),
            cfg.word_bytes,
            cfg.src_pattern.base,
            cfg.dst_pattern.base,
        )
    )
    try:
        for p in (cfg.src_pattern, cfg.dst_pattern):
            for bound, stride in zip(p.bounds, p.strides):
                out += DIM.pack(bound, stride)
    except struct.error as error:
        raise DecodeError(f"task {cfg.task_id}: loop bound or stride out of range") from error
    for ctrl in ctrls:
        out += CTRL_LEN.pack(len(ctrl)) + ctrl
    assert len(out) == size
    return bytes(out)


def cfg_length(header: bytes) -> int:
    """Total encoded length announced by a cfg header."""
    if len(header) < HEADER.size:
        raise DecodeError("truncated cfg header")
    return HEADER.unpack_from(header)[4]


def deserialize_cfg(data: bytes) -> tuple[int, XdmaCfg]:
    """Decodes one encoded cfg; returns (flags, cfg)."""
    if len(data) < HEADER.size:
        raise DecodeError("truncated cfg header")
    (
        magic,
        version,
        flags,
        task_id,
        size,
        src_cluster,
        dst_cluster,
        src_dims,
        dst_dims,
        n_reader,
        n_writer,
        word_bytes,
        src_base,
        dst_base,
    ) = HEADER.unpack_from(data)
    if magic != CFG_MAGIC:
        raise DecodeError(f"bad cfg magic {magic:#06x}")
    if version != CFG_VERSION:
        raise DecodeError(f"unsupported cfg version {version}")
    if len(data) < size:
        raise DecodeError(f"cfg announces {size} bytes but only {len(data)} arrived")
    pos = HEADER.size
    patterns = []
    for base, dims in ((src_base, src_dims), (dst_base, dst_dims)):
        bounds, strides = [], []
        for _ in range(dims):
            bound, stride = DIM.unpack_from(data, pos)
            pos += DIM.size
            bounds.append(bound)
            strides.append(stride)
        patterns.append(AffinePattern(base, bounds, strides, word_bytes))
    ctrls = []
    for _ in range(n_reader + n_writer):
        (length,) = CTRL_LEN.unpack_from(data, pos)
        pos += CTRL_LEN.size
        ctrls.append(bytes(data[pos : pos + length]))
        pos += length
    if pos != size:
        raise DecodeError(f"cfg body ends at byte {pos}, header says {size}")
    cfg = XdmaCfg(
        task_id,
        src_cluster,
        dst_cluster,
        patterns[0],
        patterns[1],
        tuple(ctrls[:n_reader]),
        tuple(ctrls[n_reader:]),
    )
    return flags, cfg


def serialize_cfg(
    cfg: XdmaCfg, config: SocConfig, sender: int, receiver: int, flags: int = FLAG_BOTH
) -> list[Beat]:
    """Cfg beats addressed to the receiver's cfg MMIO."""
    data = encode_cfg(cfg, flags, max_cfg_bytes(config))
    step = config.beat_bytes
    mmio = config.mmio_base(receiver) + CFG_OFFSET
    return [
        Beat(BeatKind.CFG, cfg.task_id, sender, receiver, mmio, data[i : i + step])
        for i in range(0, len(data), step)
    ]


class CfgAssembler:
    """Reassembles cfg beats arriving over one link."""

    def __init__(self):
        self.data: bytearray = bytearray()

    def push(self, beat: Beat) -> tuple[int, XdmaCfg] | None:
        self.data += beat.payload
        if len(self.data) < HEADER.size or len(self.data) < cfg_length(self.data):
            return None
        size = cfg_length(self.data)
        flags, cfg = deserialize_cfg(bytes(self.data[:size]))
        if len(self.data) != size:
            raise ProtocolError(f"cfg beats of task {cfg.task_id} carry trailing bytes")
        self.data = bytearray()
        return flags, cfg


class TunnelState(Enum):
    CFG_SENT = auto()
    GRANTED = auto()
    STREAMING = auto()
    DRAINING = auto()
    FINISHED = auto()


class TunnelReport:
    def __init__(self):
        self.data_beats: int = 0
        self.control_beats: int = 0
        self.backpressured: bool = False


class TunnelEndpoint:
    """
    Backend of one cluster. As producer it packs the post-reader stream into
    data beats behind a received grant; as consumer it grants, unpacks data
    beats into the pre-writer queue and waits for finish. Both roles can be
    active at once on different tasks.
    """

    def __init__(self, cluster_id: int, config: SocConfig):
        self.cluster_id: int = cluster_id
        self.mmio_base: int = config.mmio_base(cluster_id)
        self.word_bytes: int = config.word_bytes
        self.beat_bytes: int = config.beat_bytes
        self.words_per_beat: int = config.words_per_beat
        self.producer_phase: dict[int, TunnelState] = {}
        self.consumer_phase: dict[int, TunnelState] = {}
        # grants in arrival order, including ones that beat their cfg here
        self.grants: deque[int] = deque()
        self.grant_outbox: deque[Beat] = deque()
        self.tx_task: XdmaCfg | None = None
        self.tx_words: int = 0
        self.out_q: WordQueue = WordQueue(self.words_per_beat)
        self.rx_task: XdmaCfg | None = None
        self.rx_ended: bool = False
        self.in_q: WordQueue = WordQueue(self.words_per_beat)

    def __repr__(self):
        return (
            f"TunnelEndpoint({self.cluster_id}, tx={self.tx_task and self.tx_task.task_id},"
            f" rx={self.rx_task and self.rx_task.task_id})"
        )

    def mmio(self, kind: BeatKind) -> int:
        return self.mmio_base + MMIO_OFFSETS[kind]

    def expect_producer(self, task_id: int) -> None:
        self.producer_phase[task_id] = TunnelState.CFG_SENT

    def start_producer(self, cfg: XdmaCfg) -> None:
        assert self.tx_task is None
        if self.producer_phase.get(cfg.task_id) != TunnelState.CFG_SENT:
            raise ProtocolError(f"task {cfg.task_id} started without its src cfg")
        self.tx_task = cfg
        self.tx_words = 0
        self.producer_phase[cfg.task_id] = TunnelState.GRANTED
        logger.debug("c%d producer task %d granted", self.cluster_id, cfg.task_id)

    def start_consumer(self, cfg: XdmaCfg, config: SocConfig) -> None:
        """Consumer dispatched: queue the grant back to the producer."""
        assert self.rx_task is None
        self.rx_task = cfg
        self.rx_ended = False
        self.consumer_phase[cfg.task_id] = TunnelState.GRANTED
        self.grant_outbox.append(
            Beat(
                BeatKind.GRANT,
                cfg.task_id,
                self.cluster_id,
                cfg.src_cluster,
                config.mmio_base(cfg.src_cluster) + GRANT_OFFSET,
            )
        )
        logger.debug("c%d consumer task %d granted", self.cluster_id, cfg.task_id)

    def receive(self, beat: Beat) -> bool:
        """
        Handles a beat addressed to this cluster's grant/data/finish MMIO.
        Returns False when a data beat does not fit the pre-writer queue.
        """
        assert beat.kind != BeatKind.CFG
        if beat.dest_mmio != self.mmio(beat.kind):
            raise ProtocolError(f"{beat!r} sent to MMIO {beat.dest_mmio:#x}")
        if beat.kind == BeatKind.GRANT:
            phase = self.producer_phase.get(beat.task_id)
            if beat.task_id in self.grants or phase not in (None, TunnelState.CFG_SENT):
                raise ProtocolError(f"duplicate grant for task {beat.task_id}")
            self.grants.append(beat.task_id)
            return True
        task = self.rx_task
        phase = self.consumer_phase.get(beat.task_id)
        if task is None or task.task_id != beat.task_id:
            raise ProtocolError(
                f"{beat.kind.value} beat of task {beat.task_id} while consuming"
                f" {task and task.task_id}"
            )
        if phase not in (TunnelState.GRANTED, TunnelState.STREAMING):
            raise ProtocolError(f"{beat.kind.value} beat of task {beat.task_id} in state {phase}")
        if beat.kind == BeatKind.FINISH:
            self.consumer_phase[beat.task_id] = TunnelState.DRAINING
            self.rx_ended = True
            return True
        words = beat.valid_bytes // self.word_bytes
        if len(self.in_q) + words > self.in_q.capacity:
            return False
        for i in range(words):
            self.in_q.push(beat.payload[i * self.word_bytes : (i + 1) * self.word_bytes])
        self.consumer_phase[beat.task_id] = TunnelState.STREAMING
        return True

    def finish_consumer(self) -> None:
        task_id = self.rx_task.task_id
        assert self.consumer_phase[task_id] == TunnelState.DRAINING
        self.consumer_phase[task_id] = TunnelState.FINISHED
        self.rx_task = None
        logger.debug("c%d consumer task %d finished", self.cluster_id, task_id)

    @property
    def producer_done(self) -> bool:
        return (
            self.tx_task is not None
            and self.producer_phase[self.tx_task.task_id] == TunnelState.FINISHED
        )

    def release_producer(self) -> None:
        assert self.producer_done
        self.tx_task = None

    def _pack(self, source_ended: bool) -> Beat | None:
        cfg = self.tx_task
        wpb = self.words_per_beat
        if len(self.out_q) >= wpb or (source_ended and len(self.out_q) > 0):
            words = [self.out_q.pop() for _ in range(min(wpb, len(self.out_q)))]
            payload = b"".join(words)
            beat = Beat(
                BeatKind.DATA,
                cfg.task_id,
                self.cluster_id,
                cfg.dst_cluster,
                0,
                payload.ljust(self.beat_bytes, b"\0"),
                len(payload),
            )
            self.tx_words += len(words)
            return beat
        if source_ended:
            return Beat(BeatKind.FINISH, cfg.task_id, self.cluster_id, cfg.dst_cluster, 0)
        return None


def tunnel_tick(
    ep: TunnelEndpoint,
    links: dict[tuple[int, int], Link],
    config: SocConfig,
    cycle: int,
    source_ended: bool,
) -> TunnelReport:
    """
    Submits at most one beat per outgoing link: the active stream first, then
    queued grants on links no other task holds.
    """
    report = TunnelReport()
    cfg = ep.tx_task
    busy_link = None
    if cfg is not None and not ep.producer_done:
        link = links[(ep.cluster_id, cfg.dst_cluster)]
        busy_link = link
        if link.reserved_for is None and link.slots[BACKEND_MASTER] is None:
            link.reserve(cfg.task_id)
        if link.reserved_for != cfg.task_id or link.slots[BACKEND_MASTER] is not None:
            report.backpressured = True
        else:
            beat = ep._pack(source_ended)
            if beat is not None:
                beat.dest_mmio = config.mmio_base(cfg.dst_cluster) + MMIO_OFFSETS[beat.kind]
                submitted = submit(link, BACKEND_MASTER, beat, cycle)
                assert submitted
                if beat.kind == BeatKind.FINISH:
                    ep.producer_phase[cfg.task_id] = TunnelState.FINISHED
                    report.control_beats += 1
                    logger.debug("c%d producer task %d finished", ep.cluster_id, cfg.task_id)
                else:
                    ep.producer_phase[cfg.task_id] = TunnelState.STREAMING
                    report.data_beats += 1
    if ep.grant_outbox:
        beat = ep.grant_outbox[0]
        link = links[(ep.cluster_id, beat.dst)]
        if link is not busy_link and link.reserved_for is None:
            if submit(link, BACKEND_MASTER, beat, cycle):
                ep.grant_outbox.popleft()
                report.control_beats += 1
            else:
                report.backpressured = True
    return report
