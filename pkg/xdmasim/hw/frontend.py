"""
Streamer frontends. Word k of a stream belongs to channel lane k mod N_C;
each lane has its own D_buf-deep FIFO and may run ahead of the others, which
is how a deeper buffer absorbs bank conflicts. A read slot stays taken from
the request until the word is popped, so a lane also needs read_latency + 1
slots to stream at one word per cycle.
"""

from collections import deque
from enum import Enum, auto

from xdmasim.config.pattern import AffinePattern
from xdmasim.errors import SimulationFault
from xdmasim.hw.memory import BankedMemory, BankRequest


class AddressGenerator:
    def __init__(self, pattern: AffinePattern):
        self.pattern: AffinePattern = pattern
        self.counters: list[int] = [0] * pattern.dims
        self.emitted: int = 0
        self.total: int = pattern.num_words
        self.done: bool = self.total == 0

    def __repr__(self):
        return f"AddressGenerator({self.emitted}/{self.total}, counters={self.counters})"


def agu_next(agu: AddressGenerator) -> int:
    if agu.done:
        raise SimulationFault("address generator called after its last address")
    p = agu.pattern
    addr = p.base + sum(c * s for c, s in zip(agu.counters, p.strides))
    for dim, bound in enumerate(p.bounds):
        agu.counters[dim] += 1
        if agu.counters[dim] < bound:
            break
        agu.counters[dim] = 0
    agu.emitted += 1
    agu.done = agu.emitted == agu.total
    return addr


class StreamBuffer:
    """
    Per-lane FIFOs of capacity words each. Words are pushed and popped in
    stream order, so the lane of the next push/pop rotates.
    """

    def __init__(self, lanes: int, capacity: int):
        assert lanes >= 1 and capacity >= 1
        self.lanes: list[deque[bytes]] = [deque() for _ in range(lanes)]
        # granted reads still on their way back: [cycles left, word]
        self.inflight: list[deque[list]] = [deque() for _ in range(lanes)]
        self.capacity: int = capacity
        self.push_index: int = 0
        self.pop_index: int = 0

    @property
    def occupancy(self) -> int:
        return sum(len(lane) for lane in self.lanes) + sum(len(q) for q in self.inflight)

    def lane_held(self, lane: int) -> int:
        return len(self.lanes[lane]) + len(self.inflight[lane])

    def land(self) -> None:
        for lane, queue in zip(self.lanes, self.inflight):
            for entry in queue:
                entry[0] -= 1
            while queue and queue[0][0] <= 0:
                lane.append(queue.popleft()[1])

    def can_pop(self) -> bool:
        return bool(self.lanes[self.pop_index % len(self.lanes)])

    def pop(self) -> bytes:
        word = self.lanes[self.pop_index % len(self.lanes)].popleft()
        self.pop_index += 1
        return word

    def reset(self) -> None:
        assert self.occupancy == 0
        self.push_index = 0
        self.pop_index = 0


class FrontendRole(Enum):
    READER = auto()
    WRITER = auto()


class CycleReport:
    def __init__(self, issued: int, granted: int, conflicted: int, occupancy: int, full_lanes: int):
        self.issued: int = issued
        self.granted: int = granted
        self.conflicted: int = conflicted
        self.occupancy: int = occupancy
        self.full_lanes: int = full_lanes

    def as_record(self, cycle: int, unit: str) -> dict:
        return {
            "cycle": cycle,
            "unit": unit,
            "issued": self.issued,
            "granted": self.granted,
            "conflicted": self.conflicted,
            "occupancy": self.occupancy,
        }


class FrontendState:
    def __init__(
        self,
        role: FrontendRole,
        nchan: int,
        dbuf: int,
        word_bytes: int,
        name: str = "",
        channel_offset: int = 0,
        read_latency: int = 0,
    ):
        assert read_latency >= 0
        self.role: FrontendRole = role
        self.nchan: int = nchan
        self.word_bytes: int = word_bytes
        self.name: str = name or role.name.lower()
        # bank channel ids of this frontend are channel_offset + lane
        self.channel_offset: int = channel_offset
        # cycles between a read grant and its word entering the lane FIFO
        self.read_latency: int = read_latency
        self.buffer: StreamBuffer = StreamBuffer(nchan, dbuf)
        self.agu: AddressGenerator | None = None
        self.task_id: int | None = None
        self.pending: list[BankRequest | None] = [None] * nchan
        self.addr_queues: list[deque[int]] = [deque() for _ in range(nchan)]
        self.words_moved: int = 0
        self.total_words: int = 0
        self.trace: list[dict] | None = None

    def __repr__(self):
        return f"FrontendState({self.name}, task={self.task_id}, {self.words_moved}/{self.total_words})"

    @property
    def busy(self) -> bool:
        return self.task_id is not None

    def start(self, task_id: int, pattern: AffinePattern) -> None:
        assert not self.busy, f"{self.name} is still running task {self.task_id}"
        assert pattern.word_bytes == self.word_bytes
        self.buffer.reset()
        self.agu = AddressGenerator(pattern)
        self.task_id = task_id
        self.words_moved = 0
        self.total_words = pattern.num_words
        for queue in self.addr_queues:
            queue.clear()

    def release(self) -> None:
        self.task_id = None
        self.agu = None

    @property
    def exhausted(self) -> bool:
        """Every address of the pattern has been granted."""
        return self.words_moved == self.total_words

    @property
    def drained(self) -> bool:
        return self.exhausted and self.buffer.occupancy == 0

    def lane_occupancy(self, lane: int) -> int:
        return self.buffer.lane_held(lane) + (self.pending[lane] is not None)

    def can_pop(self) -> bool:
        """Reader output: the next stream word has arrived."""
        return self.buffer.can_pop()

    def pop(self) -> bytes:
        return self.buffer.pop()

    def can_push(self) -> bool:
        """Writer input: room in the lane of the next stream word."""
        lane = self.buffer.push_index % self.nchan
        return self.busy and self.lane_occupancy(lane) < self.buffer.capacity

    def push(self, word: bytes) -> None:
        assert len(word) == self.word_bytes
        self.buffer.lanes[self.buffer.push_index % self.nchan].append(word)
        self.buffer.push_index += 1

    def _wants_address(self, lane: int) -> bool:
        if self.pending[lane] is not None or self.addr_queues[lane]:
            return False
        if self.role == FrontendRole.READER:
            return self.buffer.lane_held(lane) < self.buffer.capacity
        return bool(self.buffer.lanes[lane])

    def _refill_addresses(self) -> None:
        agu = self.agu
        while not agu.done and any(self._wants_address(l) for l in range(self.nchan)):
            self.addr_queues[agu.emitted % self.nchan].append(agu_next(agu))

    def requests(self) -> list[BankRequest]:
        """This cycle's bank requests, retries first within each lane."""
        if not self.busy:
            return []
        self._refill_addresses()
        out = []
        reader = self.role == FrontendRole.READER
        for lane in range(self.nchan):
            req = self.pending[lane]
            if req is None and self.addr_queues[lane]:
                if reader and self.buffer.lane_held(lane) < self.buffer.capacity:
                    req = BankRequest(
                        self.addr_queues[lane].popleft(), False, self.channel_offset + lane
                    )
                elif not reader and self.buffer.lanes[lane]:
                    req = BankRequest(
                        self.addr_queues[lane].popleft(),
                        True,
                        self.channel_offset + lane,
                        self.buffer.lanes[lane].popleft(),
                    )
            if req is not None:
                self.pending[lane] = req
                out.append(req)
        return out

    def complete(self, requests: list[BankRequest], granted: set[int], cycle: int = 0) -> CycleReport:
        """Applies the grants of this cycle's requests."""
        reader = self.role == FrontendRole.READER
        if reader:
            self.buffer.land()
        hits = 0
        for req in requests:
            if req.channel not in granted:
                continue
            lane = req.channel - self.channel_offset
            self.pending[lane] = None
            if reader and self.read_latency:
                self.buffer.inflight[lane].append([self.read_latency, req.data])
            elif reader:
                self.buffer.lanes[lane].append(req.data)
            hits += 1
        self.words_moved += hits
        full = 0
        if reader and self.busy:
            full = sum(
                1
                for lane in range(self.nchan)
                if self.buffer.lane_held(lane) >= self.buffer.capacity
                and (self.addr_queues[lane] or not self.agu.done)
            )
        report = CycleReport(
            len(requests), hits, len(requests) - hits, self.buffer.occupancy, full
        )
        if self.trace is not None and requests:
            self.trace.append(report.as_record(cycle, self.name))
        return report


def issue_frontends(
    mem: BankedMemory, frontends: list[FrontendState], cycle: int = 0
) -> list[CycleReport]:
    """
    One memory cycle shared by several frontends; earlier frontends own the
    lower channel ids and win bank ties.
    """
    per_frontend = [fe.requests() for fe in frontends]
    granted, _ = mem.issue_cycle([r for reqs in per_frontend for r in reqs])
    granted_set = set(granted)
    return [fe.complete(reqs, granted_set, cycle) for fe, reqs in zip(frontends, per_frontend)]


def reader_tick(fe: FrontendState, mem: BankedMemory, cycle: int = 0) -> CycleReport:
    assert fe.role == FrontendRole.READER
    return issue_frontends(mem, [fe], cycle)[0]


def writer_tick(fe: FrontendState, mem: BankedMemory, cycle: int = 0) -> CycleReport:
    assert fe.role == FrontendRole.WRITER
    return issue_frontends(mem, [fe], cycle)[0]
