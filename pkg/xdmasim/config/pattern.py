from collections.abc import Iterable

import numpy as np

from xdmasim.errors import PatternError


class AffinePattern:
    """
    N-D loop nest over word addresses. Dimension 0 is the innermost loop; each
    emission is one access of word_bytes bytes at
    base + sum(counter[i] * strides[i]).
    """

    def __init__(
        self,
        base: int,
        bounds: Iterable[int],
        strides: Iterable[int],
        word_bytes: int,
    ):
        self.base: int = base
        self.bounds: tuple[int, ...] = tuple(bounds)
        self.strides: tuple[int, ...] = tuple(strides)
        self.word_bytes: int = word_bytes
        if len(self.bounds) != len(self.strides):
            raise PatternError(
                f"{len(self.bounds)} bounds but {len(self.strides)} strides"
            )
        if any(b < 0 for b in self.bounds):
            raise PatternError(f"negative loop bound in {self.bounds}")
        if base % word_bytes != 0 or any(s % word_bytes != 0 for s in self.strides):
            raise PatternError(
                f"pattern base {base:#x} / strides {self.strides} not aligned to"
                f" {word_bytes}-byte words"
            )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AffinePattern)
            and self.base == other.base
            and self.bounds == other.bounds
            and self.strides == other.strides
            and self.word_bytes == other.word_bytes
        )

    def __hash__(self) -> int:
        return hash((self.base, self.bounds, self.strides, self.word_bytes))

    def __repr__(self) -> str:
        return (
            f"AffinePattern(base={self.base:#x}, bounds={list(self.bounds)},"
            f" strides={list(self.strides)}, word_bytes={self.word_bytes})"
        )

    @property
    def dims(self) -> int:
        return len(self.bounds)

    @property
    def num_words(self) -> int:
        return int(np.prod(self.bounds, dtype=np.int64)) if self.bounds else 1

    def addresses(self) -> np.ndarray:
        """
        All word addresses in emission order (dimension 0 fastest).
        """
        if self.num_words == 0:
            return np.zeros(0, dtype=np.int64)
        offsets = np.zeros(1, dtype=np.int64)
        for bound, stride in zip(self.bounds, self.strides):
            # new dimension is slower than all previous ones
            offsets = (
                np.arange(bound, dtype=np.int64)[:, None] * stride + offsets[None, :]
            ).reshape(-1)
        return offsets + self.base

    def extent(self) -> tuple[int, int]:
        """
        Lowest address and one past the last byte touched.
        """
        low = self.base
        high = self.base
        for bound, stride in zip(self.bounds, self.strides):
            if bound == 0:
                return self.base, self.base
            if stride < 0:
                low += (bound - 1) * stride
            else:
                high += (bound - 1) * stride
        return low, high + self.word_bytes

    def check_within(self, lo: int, hi: int) -> None:
        if self.num_words == 0:
            return
        low, high = self.extent()
        if low < lo or high > hi:
            raise PatternError(
                f"{self!r} touches [{low:#x}, {high:#x}) outside memory range"
                f" [{lo:#x}, {hi:#x})"
            )

    def relocated(self, base: int) -> "AffinePattern":
        return AffinePattern(base, self.bounds, self.strides, self.word_bytes)


def pattern_size(p: AffinePattern) -> int:
    return p.word_bytes * p.num_words


def _divisors_desc(n: int, limit: int) -> list[int]:
    return [d for d in range(min(n, limit), 1, -1) if n % d == 0]


def fit_pattern(addresses: np.ndarray, word_bytes: int) -> AffinePattern:
    """
    Finds a nested loop generating exactly the given word address sequence.
    Each level takes the longest constant-stride run that tiles the sequence
    evenly. Raises PatternError if the sequence is not affine.
    """
    seq = np.asarray(addresses, dtype=np.int64)
    if len(seq) == 0:
        return AffinePattern(0, [0], [word_bytes], word_bytes)
    base = int(seq[0])
    bounds: list[int] = []
    strides: list[int] = []
    while len(seq) > 1:
        stride = int(seq[1] - seq[0])
        steps = np.diff(seq)
        breaks = np.flatnonzero(steps != stride)
        run = len(seq) if len(breaks) == 0 else int(breaks[0]) + 1
        for bound in _divisors_desc(len(seq), run):
            rows = seq.reshape(-1, bound)
            expected = rows[:, :1] + np.arange(bound, dtype=np.int64) * stride
            if np.array_equal(rows, expected):
                bounds.append(bound)
                strides.append(stride)
                seq = rows[:, 0]
                break
        else:
            raise PatternError("address sequence is not an affine loop nest")
    if not bounds:
        return AffinePattern(base, [], [], word_bytes)
    return AffinePattern(base, bounds, strides, word_bytes)
