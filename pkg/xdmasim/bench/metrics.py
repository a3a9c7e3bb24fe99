from xdmasim.errors import XdmaError
from xdmasim.utils.numbers import Ratio, as_float, ratio

STALL_KINDS = ("bank_conflict", "buffer_full", "link_backpressure", "cfg_phase")


class Metrics:
    """
    Outcome of one run. cycles spans the first cfg issue to the last
    destination write; the theoretical bandwidth is one link beat per cycle.
    """

    def __init__(
        self,
        cycles: int,
        num_bytes: int,
        beat_bytes: int,
        stalls: dict[str, int] | None = None,
        details: dict | None = None,
    ):
        assert cycles >= 0 and num_bytes >= 0
        self.cycles: int = cycles
        self.bytes: int = num_bytes
        self.beat_bytes: int = beat_bytes
        self.stalls: dict[str, int] = {k: 0 for k in STALL_KINDS}
        self.stalls.update(stalls or {})
        # model-specific extras: descriptor counts, per-task cycles
        self.details: dict = dict(details or {})

    def __repr__(self):
        return f"Metrics(cycles={self.cycles}, bytes={self.bytes})"

    @property
    def effective_bw(self) -> Ratio:
        return ratio(self.bytes, self.cycles)

    @property
    def theoretical_bw(self) -> int:
        return self.beat_bytes

    @property
    def utilization(self) -> Ratio:
        return compute_utilization(self)

    def as_row(self) -> dict:
        row = {
            "cycles": self.cycles,
            "bytes": self.bytes,
            "effective_bw": as_float(self.effective_bw) if self.cycles else 0.0,
            "utilization": as_float(self.utilization) if self.cycles else 0.0,
        }
        row.update(self.stalls)
        return row


def compute_utilization(metrics: Metrics) -> Ratio:
    if metrics.cycles == 0:
        raise XdmaError("utilization of a run that took 0 cycles")
    return ratio(metrics.bytes, metrics.cycles * metrics.theoretical_bw)
