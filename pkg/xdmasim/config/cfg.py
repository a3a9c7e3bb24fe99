from xdmasim.config.pattern import AffinePattern
from xdmasim.errors import DecodeError


def _trimmed(ctrls) -> tuple[bytes, ...]:
    # trailing disabled plugins carry no control bytes on the wire
    out = [bytes(c) for c in ctrls]
    while out and not out[-1]:
        out.pop()
    return tuple(out)


class XdmaCfg:
    """
    One DMA task. Plugin controls are aligned with the frontend's plugin list
    (ext_src for the reader, ext_dst for the writer); empty bytes disable a
    plugin.
    """

    def __init__(
        self,
        task_id: int,
        src_cluster: int,
        dst_cluster: int,
        src_pattern: AffinePattern,
        dst_pattern: AffinePattern,
        reader_plugin_ctrl: tuple[bytes, ...] = (),
        writer_plugin_ctrl: tuple[bytes, ...] = (),
    ):
        if src_pattern.word_bytes != dst_pattern.word_bytes:
            raise DecodeError("source and destination word sizes differ")
        self.task_id: int = task_id
        self.src_cluster: int = src_cluster
        self.dst_cluster: int = dst_cluster
        self.src_pattern: AffinePattern = src_pattern
        self.dst_pattern: AffinePattern = dst_pattern
        self.reader_plugin_ctrl: tuple[bytes, ...] = _trimmed(reader_plugin_ctrl)
        self.writer_plugin_ctrl: tuple[bytes, ...] = _trimmed(writer_plugin_ctrl)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, XdmaCfg)
            and self.task_id == other.task_id
            and self.src_cluster == other.src_cluster
            and self.dst_cluster == other.dst_cluster
            and self.src_pattern == other.src_pattern
            and self.dst_pattern == other.dst_pattern
            and self.reader_plugin_ctrl == other.reader_plugin_ctrl
            and self.writer_plugin_ctrl == other.writer_plugin_ctrl
        )

    def __repr__(self) -> str:
        return (
            f"XdmaCfg(task={self.task_id}, {self.src_cluster}->{self.dst_cluster},"
            f" src={self.src_pattern!r}, dst={self.dst_pattern!r})"
        )

    @property
    def word_bytes(self) -> int:
        return self.src_pattern.word_bytes

    @property
    def is_local(self) -> bool:
        return self.src_cluster == self.dst_cluster

    @property
    def src_words(self) -> int:
        return self.src_pattern.num_words

    @property
    def dst_words(self) -> int:
        return self.dst_pattern.num_words

    def check_stream(self, produced_words: int, consumed_words: int) -> None:
        """
        produced_words leave the reader chain, consumed_words leave the writer
        chain; the latter must fill the destination pattern exactly.
        """
        if consumed_words != self.dst_words:
            raise DecodeError(
                f"task {self.task_id}: stream delivers {consumed_words} words but the"
                f" destination pattern takes {self.dst_words}"
            )
        if produced_words < 0:
            raise DecodeError(f"task {self.task_id}: negative stream length")
