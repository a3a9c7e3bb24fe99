"""
In-stream word transducers cascaded after the reader and before the writer.

Every plugin takes part in one valid/ready handshake step at a time:
can_accept(downstream_ready) tells whether an input word may be offered, and
step(word, downstream_ready) consumes it (or a bubble) and returns at most one
output word, which flows on to the next plugin within the same step.
"""

import math
import struct
from collections import deque
from enum import Enum, auto

import numpy as np

from xdmasim.config.soc import WRITER_ONLY_PLUGINS
from xdmasim.errors import PluginError


class Stage(Enum):
    POST_READER = auto()
    PRE_WRITER = auto()


class Plugin:
    name: str = ""
    # generating plugins emit words independently of their input
    generating: bool = False

    def __init__(self, ctrl: bytes, word_bytes: int):
        self.ctrl: bytes = ctrl
        self.word_bytes: int = word_bytes
        self.input_ended: bool = False

    @property
    def latency(self) -> int:
        """Words buffered before the first output."""
        return 0

    def output_words(self, input_words: int) -> int:
        return input_words

    def can_accept(self, downstream_ready: bool) -> bool:
        raise NotImplementedError

    def step(self, word: bytes | None, downstream_ready: bool) -> bytes | None:
        raise NotImplementedError

    def end_input(self) -> None:
        self.input_ended = True

    @property
    def drained(self) -> bool:
        """No output is left to emit."""
        raise NotImplementedError


class IdentityPlugin(Plugin):
    name = "identity"

    def can_accept(self, downstream_ready: bool) -> bool:
        return downstream_ready

    def step(self, word: bytes | None, downstream_ready: bool) -> bytes | None:
        assert word is None or downstream_ready
        return word

    @property
    def drained(self) -> bool:
        return True


def transpose_ctrl(tile_dim: int) -> bytes:
    return struct.pack("<BB", 1, tile_dim)


class TransposePlugin(Plugin):
    """
    Transposes every tile_dim x tile_dim byte block of the stream. Blocks are
    gathered in groups of lcm(word_bytes, tile_dim**2) bytes; one group fills
    while the previous one drains.
    """

    name = "transpose"

    def __init__(self, ctrl: bytes, word_bytes: int):
        super().__init__(ctrl, word_bytes)
        if len(ctrl) != 2:
            raise PluginError(f"transpose control takes 2 bytes, got {len(ctrl)}")
        self.tile_dim: int = ctrl[1]
        if self.tile_dim < 1:
            raise PluginError("transpose tile_dim must be >= 1")
        self.group_bytes: int = math.lcm(word_bytes, self.tile_dim * self.tile_dim)
        self.group_words: int = self.group_bytes // word_bytes
        self.fill: list[bytes] = []
        self.drain: deque[bytes] = deque()

    @property
    def latency(self) -> int:
        return self.group_words

    def output_words(self, input_words: int) -> int:
        if (input_words * self.word_bytes) % self.group_bytes != 0:
            raise PluginError(
                f"stream of {input_words * self.word_bytes} bytes is not a multiple of"
                f" the {self.group_bytes}-byte transpose group"
            )
        return input_words

    def _transposed(self, words: list[bytes]) -> deque[bytes]:
        d = self.tile_dim
        tiles = np.frombuffer(b"".join(words), dtype=np.uint8).reshape(-1, d, d)
        flat = tiles.transpose(0, 2, 1).tobytes()
        wb = self.word_bytes
        return deque(flat[i : i + wb] for i in range(0, len(flat), wb))

    def can_accept(self, downstream_ready: bool) -> bool:
        return len(self.fill) < self.group_words

    def step(self, word: bytes | None, downstream_ready: bool) -> bytes | None:
        out = self.drain.popleft() if downstream_ready and self.drain else None
        if word is not None:
            if len(self.fill) >= self.group_words:
                raise PluginError("transpose group buffer overflow")
            self.fill.append(word)
        if len(self.fill) == self.group_words and not self.drain:
            self.drain = self._transposed(self.fill)
            self.fill = []
        return out

    def end_input(self) -> None:
        super().end_input()
        # a full group still waiting for the drain side is complete
        if 0 < len(self.fill) < self.group_words:
            raise PluginError(
                f"stream ends inside a partial transpose group ({len(self.fill)} of"
                f" {self.group_words} words)"
            )

    @property
    def drained(self) -> bool:
        return not self.drain and not self.fill


def memset_ctrl(fill_word: int, count: int) -> bytes:
    return struct.pack("<BQI", 1, fill_word, count)


class MemsetPlugin(Plugin):
    """
    Emits count copies of the fill word and discards its input. The 64-bit
    fill value is repeated or truncated to the word size.
    """

    name = "memset"
    generating = True

    def __init__(self, ctrl: bytes, word_bytes: int):
        super().__init__(ctrl, word_bytes)
        if len(ctrl) != struct.calcsize("<BQI"):
            raise PluginError(f"memset control takes 13 bytes, got {len(ctrl)}")
        _, fill, self.count = struct.unpack("<BQI", ctrl)
        if self.count == 0:
            raise PluginError("memset count must be > 0")
        pattern = struct.pack("<Q", fill)
        self.fill_word: bytes = (pattern * (word_bytes // 8 + 1))[:word_bytes]
        self.emitted: int = 0

    def output_words(self, input_words: int) -> int:
        return self.count

    def can_accept(self, downstream_ready: bool) -> bool:
        return True

    def step(self, word: bytes | None, downstream_ready: bool) -> bytes | None:
        if downstream_ready and self.emitted < self.count:
            self.emitted += 1
            return self.fill_word
        return None

    @property
    def drained(self) -> bool:
        return self.emitted == self.count


PLUGIN_REGISTRY: dict[str, type[Plugin]] = {
    cls.name: cls for cls in (IdentityPlugin, TransposePlugin, MemsetPlugin)
}


def make_plugin(name: str, ctrl: bytes, word_bytes: int) -> Plugin:
    cls = PLUGIN_REGISTRY.get(name)
    if cls is None:
        raise PluginError(f"unknown plugin {name!r}")
    return cls(ctrl, word_bytes)


class PluginChain:
    def __init__(self, stage: Stage, plugins: list[Plugin]):
        for p in plugins:
            if stage == Stage.POST_READER and p.name in WRITER_ONLY_PLUGINS:
                raise PluginError(f"plugin {p.name!r} can only be installed pre-writer")
        self.stage: Stage = stage
        self.plugins: list[Plugin] = plugins

    @staticmethod
    def build(
        stage: Stage, names: tuple[str, ...], ctrls: tuple[bytes, ...], word_bytes: int
    ) -> "PluginChain":
        """Chain of the plugins whose control vector is non-empty."""
        if len(ctrls) > len(names):
            raise PluginError(f"{len(ctrls)} control vectors for {len(names)} plugins")
        return PluginChain(
            stage,
            [make_plugin(name, ctrl, word_bytes) for name, ctrl in zip(names, ctrls) if ctrl],
        )

    @property
    def latency(self) -> int:
        return sum(p.latency for p in self.plugins)

    @property
    def generating(self) -> bool:
        return any(p.generating for p in self.plugins)

    def output_words(self, input_words: int) -> int:
        for p in self.plugins:
            input_words = p.output_words(input_words)
        return input_words

    def _readiness(self, out_ready: bool) -> list[bool]:
        ready = [out_ready]
        for p in reversed(self.plugins):
            ready.append(p.can_accept(ready[-1]))
        ready.reverse()
        return ready

    def ready(self, out_ready: bool = True) -> bool:
        return self._readiness(out_ready)[0]

    def end_input(self) -> None:
        """
        Signals that the chain input has ended. A plugin sees the end once every
        plugin upstream of it has emitted all its words, so this is repeated
        until finished holds.
        """
        for p in self.plugins:
            if not p.input_ended:
                p.end_input()
            if not p.drained:
                return

    @property
    def drained(self) -> bool:
        return all(p.drained for p in self.plugins)

    @property
    def finished(self) -> bool:
        return all(p.input_ended and p.drained for p in self.plugins)

    def settled(self, source_ended: bool) -> bool:
        """
        Like finished, but a drained plugin whose upstream has ended and
        drained counts as done in the same cycle, before end_input reaches it.
        """
        upstream_done = source_ended
        for p in self.plugins:
            upstream_done = p.drained and (p.input_ended or upstream_done)
        return upstream_done


def chain_step(chain: PluginChain, in_word: bytes | None, out_ready: bool = True) -> bytes | None:
    """
    One handshake step through the whole chain. in_word None is a bubble; the
    caller offers a word only when chain.ready(out_ready) holds.
    """
    ready = chain._readiness(out_ready)
    if in_word is not None and not ready[0]:
        raise PluginError("word offered to a chain that is not ready")
    word = in_word
    for p, downstream_ready in zip(chain.plugins, ready[1:]):
        word = p.step(word, downstream_ready)
    return word


class WordQueue:
    """Bounded word FIFO between a plugin host and the backend."""

    def __init__(self, capacity: int):
        self.words: deque[bytes] = deque()
        self.capacity: int = capacity

    def __len__(self) -> int:
        return len(self.words)

    def can_push(self) -> bool:
        return len(self.words) < self.capacity

    def push(self, word: bytes) -> None:
        assert self.can_push()
        self.words.append(word)

    def can_pop(self) -> bool:
        return bool(self.words)

    def pop(self) -> bytes:
        return self.words.popleft()


class PluginHost:
    """
    Moves words from a source through a chain into a sink, up to
    steps_per_cycle handshakes per cycle. Sources offer can_pop/pop, sinks
    can_push/push.
    """

    def __init__(self, chain: PluginChain, steps_per_cycle: int):
        self.chain: PluginChain = chain
        self.steps_per_cycle: int = steps_per_cycle
        self.words_in: int = 0
        self.words_out: int = 0
        # the sink refused a word the chain could have delivered
        self.stalled: bool = False

    def tick(self, source, sink, source_ended: bool) -> int:
        moved = 0
        self.stalled = False
        for _ in range(self.steps_per_cycle):
            out_ready = sink.can_push()
            word = None
            if source.can_pop() and self.chain.ready(out_ready):
                word = source.pop()
                self.words_in += 1
            out = chain_step(self.chain, word, out_ready)
            if out is not None:
                sink.push(out)
                moved += 1
            elif word is None:
                self.stalled = not out_ready and (source.can_pop() or not self.chain.drained)
                break
        self.words_out += moved
        if source_ended and not source.can_pop():
            self.chain.end_input()
        return moved

    def finished(self, source_ended: bool) -> bool:
        return self.chain.settled(source_ended)
