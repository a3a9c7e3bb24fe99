"""
Cycle loop of a multi-cluster SoC. Every cycle runs, in order:

    1. host submissions to the controllers
    2. link deliveries (a refused head beat blocks its link)
    3. dispatch
    4. backends, cfg routers and plugin hosts
    5. frontend bank accesses, one arbitration per memory
    6. link arbitration
"""

import logging
import math
from collections import deque

from xdmasim.config.cfg import XdmaCfg
from xdmasim.config.soc import SocConfig
from xdmasim.errors import CycleBudgetExceeded, DeadlockError, ProtocolError
from xdmasim.hw.backend import (
    FLAG_BOTH,
    FLAG_SRC,
    CfgAssembler,
    TunnelEndpoint,
    serialize_cfg,
    tunnel_tick,
)
from xdmasim.hw.controller import (
    CsrInstruction,
    EntryKind,
    TaskFifo,
    decode,
    dispatch_tick,
    route,
)
from xdmasim.hw.frontend import FrontendRole, FrontendState, issue_frontends
from xdmasim.hw.interconnect import (
    BACKEND_MASTER,
    CFG_MASTER,
    Beat,
    BeatKind,
    Link,
    link_arbitrate,
    link_deliver,
    submit,
)
from xdmasim.hw.memory import BankedMemory
from xdmasim.hw.plugins import PluginChain, PluginHost, Stage, WordQueue
from xdmasim.utils.graph import find_wait_cycle

logger = logging.getLogger(__name__)


class TaskRecord:
    """Timeline of one submitted task."""

    def __init__(self, index: int, controller: int, submit_cycle: int, instruction: CsrInstruction, tag=None):
        self.index: int = index
        self.controller: int = controller
        self.submit_cycle: int = submit_cycle
        self.instruction: CsrInstruction = instruction
        self.tag = tag
        self.task_id: int | None = None
        self.cfg: XdmaCfg | None = None
        self.cfg_beats: int = 0
        # accepted by the controller: the first cfg issue
        self.issue_cycle: int | None = None
        # source side started streaming (or the local task started)
        self.start_cycle: int | None = None
        self.last_write_cycle: int | None = None
        self.done_cycle: int | None = None

    def __repr__(self):
        return f"TaskRecord(#{self.index} task={self.task_id} done={self.done_cycle})"

    @property
    def done(self) -> bool:
        return self.done_cycle is not None


class ClusterUnit:
    """Half-unit of one cluster: controller, frontends, plugin hosts, backend."""

    def __init__(self, cluster_id: int, soc: "Soc"):
        config = soc.config
        self.cluster_id: int = cluster_id
        self.soc: "Soc" = soc
        self.config: SocConfig = config
        self.memory: BankedMemory = BankedMemory.for_cluster(config, cluster_id)
        self.reader: FrontendState = FrontendState(
            FrontendRole.READER,
            config.nchan_src,
            config.dbuf_src,
            config.word_bytes,
            f"c{cluster_id}.reader",
            read_latency=config.read_latency,
        )
        self.writer: FrontendState = FrontendState(
            FrontendRole.WRITER,
            config.nchan_dst,
            config.dbuf_dst,
            config.word_bytes,
            f"c{cluster_id}.writer",
            channel_offset=config.nchan_src,
        )
        self.endpoint: TunnelEndpoint = TunnelEndpoint(cluster_id, config)
        self.fifo: TaskFifo = TaskFifo(config.task_fifo_depth)
        self.producer_halves: dict[int, XdmaCfg] = {}
        self.reader_host: PluginHost | None = None
        self.writer_host: PluginHost | None = None
        self.local_task: XdmaCfg | None = None
        self.local_q: WordQueue = WordQueue(config.words_per_beat)
        self.host_queue: deque[TaskRecord] = deque()
        self.cfg_outbox: dict[int, deque[Beat]] = {
            c: deque() for c in range(config.num_clusters) if c != cluster_id
        }
        self.assemblers: dict[int, CfgAssembler] = {
            c: CfgAssembler() for c in range(config.num_clusters) if c != cluster_id
        }
        self.issued: int = 0

    def __repr__(self):
        return f"ClusterUnit({self.cluster_id})"

    def _host(self, stage: Stage, ctrls: tuple[bytes, ...]) -> PluginHost:
        names = self.config.ext_src if stage == Stage.POST_READER else self.config.ext_dst
        chain = PluginChain.build(stage, names, ctrls, self.config.word_bytes)
        return PluginHost(chain, self.config.words_per_beat)

    def start_producer(self, cfg: XdmaCfg, cycle: int) -> None:
        self.reader.start(cfg.task_id, cfg.src_pattern)
        self.reader_host = self._host(Stage.POST_READER, cfg.reader_plugin_ctrl)
        self.endpoint.start_producer(cfg)
        self.soc.by_id[cfg.task_id].start_cycle = cycle

    def start_consumer(self, cfg: XdmaCfg, cycle: int) -> None:
        self.writer.start(cfg.task_id, cfg.dst_pattern)
        self.writer_host = self._host(Stage.PRE_WRITER, cfg.writer_plugin_ctrl)
        self.endpoint.start_consumer(cfg, self.config)

    def start_local(self, cfg: XdmaCfg, cycle: int) -> None:
        self.local_task = cfg
        self.reader.start(cfg.task_id, cfg.src_pattern)
        self.writer.start(cfg.task_id, cfg.dst_pattern)
        self.reader_host = self._host(Stage.POST_READER, cfg.reader_plugin_ctrl)
        self.writer_host = self._host(Stage.PRE_WRITER, cfg.writer_plugin_ctrl)
        self.soc.by_id[cfg.task_id].start_cycle = cycle

    def receive_half(self, flags: int, cfg: XdmaCfg) -> None:
        if flags == FLAG_BOTH:
            self.fifo.push(EntryKind.LOCAL, cfg)
        elif flags == FLAG_SRC:
            if cfg.task_id in self.producer_halves:
                raise ProtocolError(f"second src cfg for task {cfg.task_id}")
            self.producer_halves[cfg.task_id] = cfg
            self.endpoint.expect_producer(cfg.task_id)
        else:
            self.fifo.push(EntryKind.CONSUMER, cfg)

    def accept(self, beat: Beat) -> bool:
        """Link delivery into this cluster's MMIO window."""
        if beat.kind == BeatKind.CFG:
            decoded = self.assemblers[beat.src].push(beat)
            if decoded is not None:
                self.receive_half(*decoded)
            return True
        return self.endpoint.receive(beat)

    def accept_submission(self, record: TaskRecord, cycle: int) -> None:
        soc = self.soc
        task_id = self.cluster_id + self.config.num_clusters * self.issued
        self.issued += 1
        cfg = decode(record.instruction, self.config, task_id)
        record.task_id = task_id
        record.cfg = cfg
        record.issue_cycle = cycle
        soc.by_id[task_id] = record
        soc.cfg_pending[task_id] = 0
        for cluster, flags in route(cfg, self.cluster_id).halves:
            if cluster == self.cluster_id:
                self.receive_half(flags, cfg)
                continue
            beats = serialize_cfg(cfg, self.config, self.cluster_id, cluster, flags)
            self.cfg_outbox[cluster].extend(beats)
            soc.cfg_pending[task_id] += len(beats)
            record.cfg_beats += len(beats)
        logger.info(
            "c%d accepted task %d (%d->%d, %d words) at cycle %d",
            self.cluster_id,
            task_id,
            cfg.src_cluster,
            cfg.dst_cluster,
            cfg.dst_words,
            cycle,
        )

    @property
    def producer_source_ended(self) -> bool:
        return self.reader_host.finished(self.reader.drained)

    def tick_backend(self, cycle: int) -> bool:
        """Returns whether any word or beat moved."""
        soc = self.soc
        ep = self.endpoint
        moved = 0
        report = None
        if ep.tx_task is not None:
            report = tunnel_tick(ep, soc.links, self.config, cycle, self.producer_source_ended)
            if ep.producer_done:
                ep.release_producer()
                self.reader.release()
                self.reader_host = None
            else:
                moved += self.reader_host.tick(self.reader, ep.out_q, self.reader.drained)
        elif ep.grant_outbox:
            report = tunnel_tick(ep, soc.links, self.config, cycle, False)
        if report is not None:
            soc.stalls["link_backpressure"] += report.backpressured
            moved += report.data_beats + report.control_beats
        for dst, queue in self.cfg_outbox.items():
            if queue and submit(soc.links[(self.cluster_id, dst)], CFG_MASTER, queue[0], cycle):
                queue.popleft()
        if self.local_task is not None:
            moved += self.writer_host.tick(self.local_q, self.writer, self.producer_source_ended)
            moved += self.reader_host.tick(self.reader, self.local_q, self.reader.drained)
        elif ep.rx_task is not None:
            moved += self.writer_host.tick(ep.in_q, self.writer, ep.rx_ended)
        if self.writer_host is not None:
            soc.stalls["buffer_full"] += self.writer_host.stalled
            if self.writer.buffer.push_index > self.writer.total_words:
                raise ProtocolError(
                    f"task {self.writer.task_id}: stream longer than its destination pattern"
                )
        return moved > 0

    def _writer_source_ended(self) -> bool:
        if self.local_task is not None:
            return self.producer_source_ended and not self.local_q.can_pop()
        return self.endpoint.rx_ended and not self.endpoint.in_q.can_pop()

    def check_completion(self, cycle: int) -> None:
        if not self.writer.busy:
            return
        record = self.soc.by_id[self.writer.task_id]
        if self.writer.exhausted and record.last_write_cycle is None:
            record.last_write_cycle = cycle
        if not self.writer_host.finished(self._writer_source_ended()):
            return
        if not self.writer.exhausted:
            if self.writer.buffer.occupancy == 0 and all(p is None for p in self.writer.pending):
                raise ProtocolError(
                    f"task {self.writer.task_id}: stream ended after"
                    f" {self.writer.words_moved} of {self.writer.total_words} words"
                )
            return
        if self.local_task is not None:
            self.local_task = None
            self.reader.release()
            self.reader_host = None
        else:
            self.endpoint.finish_consumer()
        self.writer.release()
        self.writer_host = None
        record.done_cycle = cycle
        logger.info("c%d finished task %d at cycle %d", self.cluster_id, record.task_id, cycle)


class Soc:
    def __init__(self, config: SocConfig, trace: bool = False):
        self.config: SocConfig = config
        self.cycle: int = 0
        self.records: list[TaskRecord] = []
        self.by_id: dict[int, TaskRecord] = {}
        self.cfg_pending: dict[int, int] = {}
        self.stalls: dict[str, int] = {
            "bank_conflict": 0,
            "buffer_full": 0,
            "link_backpressure": 0,
        }
        self.units: list[ClusterUnit] = [ClusterUnit(c, self) for c in range(config.num_clusters)]
        self.links: dict[tuple[int, int], Link] = {
            (a, b): Link(a, b, config.axi_width_bits, config.axi_latency)
            for a in range(config.num_clusters)
            for b in range(config.num_clusters)
            if a != b
        }
        self.last_progress: int = 0
        self.frontend_trace: list[dict] | None = None
        if trace:
            self.frontend_trace = []
            for unit in self.units:
                unit.reader.trace = self.frontend_trace
                unit.writer.trace = self.frontend_trace
            for link in self.links.values():
                link.trace = []

    @property
    def memories(self) -> list[BankedMemory]:
        return [unit.memory for unit in self.units]

    def memory_of(self, address: int) -> BankedMemory:
        cluster = self.config.cluster_of(address)
        assert cluster is not None, f"{address:#x} is outside every cluster"
        return self.units[cluster].memory

    def submit(
        self, instruction: CsrInstruction, controller: int = 0, at_cycle: int = 0, tag=None
    ) -> TaskRecord:
        """Queues a task for the controller of a cluster; host order is kept."""
        assert 0 <= controller < self.config.num_clusters
        record = TaskRecord(len(self.records), controller, at_cycle, instruction, tag)
        self.records.append(record)
        self.units[controller].host_queue.append(record)
        return record

    @property
    def finished(self) -> bool:
        return all(r.done for r in self.records)

    def stall_counters(self) -> dict[str, int]:
        """Stall cycles by cause; cfg_phase sums issue-to-start per task."""
        out = dict(self.stalls)
        out["cfg_phase"] = sum(
            r.start_cycle - r.issue_cycle for r in self.records if r.start_cycle is not None
        )
        return out

    def link_trace(self) -> list[dict]:
        records = [r for link in self.links.values() for r in (link.trace or [])]
        return sorted(records, key=lambda r: (r["cycle"], r["from"], r["to"]))

    def step(self) -> None:
        cycle = self.cycle
        progress = False
        for unit in self.units:
            queue = unit.host_queue
            if queue and queue[0].submit_cycle <= cycle and not unit.fifo.full:
                unit.accept_submission(queue.popleft(), cycle)
                progress = True
        for key in sorted(self.links):
            link = self.links[key]
            if link_deliver(link, cycle, self.units[link.dst].accept) is not None:
                progress = True
        for unit in self.units:
            if dispatch_tick(unit.fifo, unit, lambda t: self.cfg_pending[t] == 0, cycle):
                progress = True
        for unit in self.units:
            if unit.tick_backend(cycle):
                progress = True
        for unit in self.units:
            reports = issue_frontends(unit.memory, [unit.reader, unit.writer], cycle)
            for report in reports:
                self.stalls["bank_conflict"] += report.conflicted
                self.stalls["buffer_full"] += report.full_lanes
                progress = progress or report.granted > 0
            unit.check_completion(cycle)
        for key in sorted(self.links):
            beat = link_arbitrate(self.links[key], cycle)
            if beat is not None:
                progress = True
                if beat.kind == BeatKind.CFG:
                    self.cfg_pending[beat.task_id] -= 1
        if progress:
            self.last_progress = cycle
        self.cycle += 1

    def run(self, cycle_budget: int | None = None) -> list[TaskRecord]:
        budget = self.config.cycle_budget if cycle_budget is None else cycle_budget
        while not self.finished:
            if self.cycle >= budget:
                raise CycleBudgetExceeded(budget)
            self.step()
            if self.cycle - self.last_progress > self.config.stall_window:
                component = find_wait_cycle(self.wait_for_graph())
                raise DeadlockError(self.cycle, component or ["unknown"])
        return self.records

    def wait_for_graph(self) -> dict[str, set[str]]:
        """Edges from each held resource to the resources it waits on."""
        graph: dict[str, set[str]] = {}

        def wait(a: str, b: str) -> None:
            graph.setdefault(a, set()).add(b)

        for unit in self.units:
            c = unit.cluster_id
            ep = unit.endpoint
            reader, writer = f"c{c}.reader", f"c{c}.writer"
            if unit.local_task is not None:
                wait(reader, writer)
                wait(writer, reader)
            else:
                if ep.tx_task is not None:
                    wait(reader, f"link{c}->{ep.tx_task.dst_cluster}")
                elif ep.grants and ep.grants[0] not in unit.producer_halves:
                    for src in range(self.config.num_clusters):
                        if src != c:
                            wait(reader, f"link{src}->{c}")
                if ep.rx_task is not None:
                    producer = ep.rx_task.src_cluster
                    if any(b.task_id == ep.rx_task.task_id for b in ep.grant_outbox):
                        wait(writer, f"link{c}->{producer}")
                    elif _task_id(self.units[producer].endpoint.tx_task) == ep.rx_task.task_id:
                        wait(writer, f"link{producer}->{c}")
                    else:
                        wait(writer, f"c{producer}.reader")
            head = unit.fifo.head()
            if head is not None:
                wait(f"c{c}.fifo", writer)
                if head[0] == EntryKind.LOCAL:
                    wait(f"c{c}.fifo", reader)
        for (a, b), link in self.links.items():
            if link.head_waiting(self.cycle) is not None:
                wait(link.name, f"c{b}.writer")
            blocked = link.slots[BACKEND_MASTER] or link.slots[CFG_MASTER]
            if blocked is not None and link.reserved_for not in (None, blocked.task_id):
                wait(link.name, f"c{a}.reader")
        return graph


def _task_id(cfg: XdmaCfg | None) -> int | None:
    return None if cfg is None else cfg.task_id


def deadlock_bound(records: list[TaskRecord], config: SocConfig) -> int:
    """
    Cycles within which every task must finish: each beat may wait for a
    fully conflicted frontend (one word per cycle) plus a link round trip.
    """
    wpb = config.words_per_beat
    total = max((r.submit_cycle for r in records), default=0)
    for r in records:
        words = max(r.cfg.src_words, r.cfg.dst_words)
        data_beats = math.ceil(words / wpb)
        total += (r.cfg_beats + 2 + data_beats * wpb) * (1 + config.axi_latency + config.read_latency)
    return total + 64 * len(records) + 256
