import numpy as np

from xdmasim.config.soc import SocConfig
from xdmasim.errors import SimulationFault


class BankRequest:
    """
    One word access. For granted reads issue_cycle stores the word in data.
    """

    def __init__(self, addr: int, is_write: bool, channel: int, data: bytes | None = None):
        self.addr: int = addr
        self.is_write: bool = is_write
        self.channel: int = channel
        self.data: bytes | None = data

    def __repr__(self):
        kind = "W" if self.is_write else "R"
        return f"BankRequest({kind} {self.addr:#x} ch{self.channel})"


class BankedMemory:
    """
    Word-interleaved scratchpad: word w lives in bank w mod num_banks and each
    bank serves one access per cycle.
    """

    def __init__(self, base: int, size: int, num_banks: int, word_bytes: int):
        assert size % (num_banks * word_bytes) == 0
        self.base: int = base
        self.size: int = size
        self.num_banks: int = num_banks
        self.word_bytes: int = word_bytes
        self.storage: np.ndarray = np.zeros(size, dtype=np.uint8)
        self.accesses: int = 0
        self.conflicts: int = 0

    @staticmethod
    def for_cluster(config: SocConfig, cluster: int) -> "BankedMemory":
        return BankedMemory(
            config.mem_base_addr[cluster], config.mem_size, config.num_banks, config.word_bytes
        )

    def contains(self, addr: int, length: int = 1) -> bool:
        return self.base <= addr and addr + length <= self.base + self.size

    def bank_of(self, addr: int) -> int:
        return ((addr - self.base) // self.word_bytes) % self.num_banks

    def _check(self, addr: int, length: int) -> int:
        if length < 0 or not self.contains(addr, length):
            raise SimulationFault(
                f"access [{addr:#x}, {addr + length:#x}) outside memory"
                f" [{self.base:#x}, {self.base + self.size:#x})"
            )
        return addr - self.base

    def issue_cycle(self, requests: list[BankRequest]) -> tuple[list[int], list[int]]:
        """
        Arbitrates one cycle of accesses; requests come ordered by channel id
        and the lowest channel targeting a bank wins it.
        """
        granted: list[int] = []
        conflicted: list[int] = []
        busy: set[int] = set()
        wb = self.word_bytes
        for req in requests:
            if req.addr % wb != 0:
                raise SimulationFault(f"misaligned bank access at {req.addr:#x}")
            offset = self._check(req.addr, wb)
            bank = (offset // wb) % self.num_banks
            if bank in busy:
                conflicted.append(req.channel)
                continue
            busy.add(bank)
            granted.append(req.channel)
            if req.is_write:
                assert req.data is not None and len(req.data) == wb
                self.storage[offset : offset + wb] = np.frombuffer(req.data, dtype=np.uint8)
            else:
                req.data = self.storage[offset : offset + wb].tobytes()
        self.accesses += len(granted)
        self.conflicts += len(conflicted)
        return granted, conflicted

    def backdoor_read(self, addr: int, length: int) -> bytes:
        offset = self._check(addr, length)
        return self.storage[offset : offset + length].tobytes()

    def backdoor_write(self, addr: int, data: bytes) -> None:
        offset = self._check(addr, len(data))
        self.storage[offset : offset + len(data)] = np.frombuffer(data, dtype=np.uint8)

    def view(self, addr: int, length: int) -> np.ndarray:
        """Read-only numpy view of a range, for oracles."""
        offset = self._check(addr, length)
        out = self.storage[offset : offset + length]
        out.flags.writeable = False
        return out

    def load_image(self, path: str, addr: int | None = None) -> None:
        data = np.fromfile(path, dtype=np.uint8)
        start = self.base if addr is None else addr
        offset = self._check(start, len(data))
        self.storage[offset : offset + len(data)] = data

    def dump_image(self, path: str, addr: int | None = None, length: int | None = None) -> None:
        start = self.base if addr is None else addr
        length = self.base + self.size - start if length is None else length
        offset = self._check(start, length)
        self.storage[offset : offset + length].tofile(path)
