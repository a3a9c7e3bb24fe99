from collections import deque
from collections.abc import Callable
from enum import Enum

# per-cluster masters on every outgoing link, lower id wins ties
CFG_MASTER = 0
BACKEND_MASTER = 1
NUM_MASTERS = 2


class BeatKind(Enum):
    CFG = "cfg"
    DATA = "data"
    GRANT = "grant"
    FINISH = "finish"


class Beat:
    """
    One W_AXI-wide write. Data beats carry valid_words frontend words; the
    payload is zero-padded to the full beat.
    """

    def __init__(
        self,
        kind: BeatKind,
        task_id: int,
        src: int,
        dst: int,
        dest_mmio: int,
        payload: bytes = b"",
        valid_bytes: int | None = None,
    ):
        self.kind: BeatKind = kind
        self.task_id: int = task_id
        self.src: int = src
        self.dst: int = dst
        self.dest_mmio: int = dest_mmio
        self.payload: bytes = payload
        self.valid_bytes: int = len(payload) if valid_bytes is None else valid_bytes
        self.submit_cycle: int = -1

    def __repr__(self):
        return (
            f"Beat({self.kind.value} task={self.task_id} {self.src}->{self.dst}"
            f" {self.valid_bytes}B)"
        )


class Link:
    """
    One direction of a point-to-point lane. Each master owns a one-beat
    submission slot; at most one beat enters and one beat leaves per cycle.
    """

    def __init__(self, src: int, dst: int, width_bits: int, latency: int):
        assert latency >= 1
        self.src: int = src
        self.dst: int = dst
        self.width_bits: int = width_bits
        self.latency: int = latency
        self.slots: list[Beat | None] = [None] * NUM_MASTERS
        self.pipeline: deque[tuple[int, Beat]] = deque()
        # task holding the circuit, None when the link is free
        self.reserved_for: int | None = None
        self.trace: list[dict] | None = None
        self.beats: int = 0
        self.backpressure: int = 0
        self.refusals: int = 0

    def __repr__(self):
        return f"Link({self.src}->{self.dst}, in flight {len(self.pipeline)})"

    @property
    def name(self) -> str:
        return f"link{self.src}->{self.dst}"

    @property
    def idle(self) -> bool:
        return not self.pipeline and all(s is None for s in self.slots)

    def head_waiting(self, cycle: int) -> Beat | None:
        if self.pipeline and self.pipeline[0][0] <= cycle:
            return self.pipeline[0][1]
        return None

    def reserve(self, task_id: int) -> None:
        assert self.reserved_for is None, f"{self.name} already reserved"
        self.reserved_for = task_id


def submit(link: Link, master_id: int, beat: Beat, cycle: int = 0) -> bool:
    """Offers a beat to the master's slot; False means backpressure."""
    if link.slots[master_id] is not None:
        return False
    beat.submit_cycle = cycle
    link.slots[master_id] = beat
    return True


def link_arbitrate(link: Link, cycle: int) -> Beat | None:
    """
    Moves the oldest eligible slot beat into the latency pipeline. While the
    link is reserved only the reserving task's beats are eligible.
    """
    occupied = [m for m, beat in enumerate(link.slots) if beat is not None]
    if not occupied:
        return None
    if len(link.pipeline) >= link.latency:
        link.backpressure += len(occupied)
        return None
    eligible = [
        m
        for m in occupied
        if link.reserved_for is None or link.slots[m].task_id == link.reserved_for
    ]
    link.backpressure += len(occupied) - min(len(eligible), 1)
    if not eligible:
        return None
    master = min(eligible, key=lambda m: (link.slots[m].submit_cycle, m))
    beat = link.slots[master]
    link.slots[master] = None
    link.pipeline.append((cycle + link.latency, beat))
    link.beats += 1
    if link.reserved_for == beat.task_id and beat.kind == BeatKind.FINISH:
        link.reserved_for = None
    if link.trace is not None:
        link.trace.append({
            "cycle": cycle,
            "from": link.src,
            "to": link.dst,
            "kind": beat.kind.value,
            "task_id": beat.task_id,
            "valid_bytes": beat.valid_bytes,
        })
    return beat


def link_deliver(link: Link, cycle: int, accept: Callable[[Beat], bool]) -> Beat | None:
    """
    Offers the arrived head beat to the destination; a refusal keeps it at the
    head and blocks everything behind it.
    """
    beat = link.head_waiting(cycle)
    if beat is None:
        return None
    if not accept(beat):
        link.refusals += 1
        return None
    link.pipeline.popleft()
    return beat


def link_tick(link: Link, cycle: int, accept: Callable[[Beat], bool] = lambda beat: True) -> Beat | None:
    """Delivery followed by arbitration; returns the delivered beat."""
    delivered = link_deliver(link, cycle, accept)
    link_arbitrate(link, cycle)
    return delivered
