from enum import Enum, auto

import numpy as np

from xdmasim.config.pattern import AffinePattern, fit_pattern
from xdmasim.errors import LayoutError


class LayoutKind(Enum):
    ROW_MAJOR = auto()
    TILED = auto()


class LayoutSpec:
    """
    Storage order of a rows x cols matrix. Tiled layouts store a row-major
    grid of tile_m x tile_n tiles, each tile row-major.
    """

    def __init__(
        self,
        kind: LayoutKind,
        tile_m: int = 1,
        tile_n: int = 1,
        elem_bytes: int = 1,
    ):
        if elem_bytes < 1:
            raise LayoutError(f"element size must be >= 1 byte, got {elem_bytes}")
        if kind == LayoutKind.TILED and (tile_m < 1 or tile_n < 1):
            raise LayoutError(f"tile shape {tile_m}x{tile_n} must be positive")
        self.kind: LayoutKind = kind
        self.tile_m: int = tile_m if kind == LayoutKind.TILED else 1
        self.tile_n: int = tile_n if kind == LayoutKind.TILED else 1
        self.elem_bytes: int = elem_bytes

    @staticmethod
    def row_major(elem_bytes: int = 1) -> "LayoutSpec":
        return LayoutSpec(LayoutKind.ROW_MAJOR, elem_bytes=elem_bytes)

    @staticmethod
    def tiled(tile_m: int, tile_n: int, elem_bytes: int = 1) -> "LayoutSpec":
        return LayoutSpec(LayoutKind.TILED, tile_m, tile_n, elem_bytes)

    @property
    def name(self) -> str:
        if self.kind == LayoutKind.ROW_MAJOR:
            return "MN"
        return f"MNM{self.tile_m}N{self.tile_n}"

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"LayoutSpec({self.name}, elem_bytes={self.elem_bytes})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LayoutSpec)
            and self.kind == other.kind
            and self.tile_m == other.tile_m
            and self.tile_n == other.tile_n
            and self.elem_bytes == other.elem_bytes
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.tile_m, self.tile_n, self.elem_bytes))

    def check_shape(self, rows: int, cols: int) -> None:
        if rows < 1 or cols < 1:
            raise LayoutError(f"matrix shape {rows}x{cols} must be positive")
        if self.kind == LayoutKind.TILED:
            if rows % self.tile_m != 0:
                raise LayoutError(
                    f"tile_m={self.tile_m} does not divide rows={rows} ({self.name})"
                )
            if cols % self.tile_n != 0:
                raise LayoutError(
                    f"tile_n={self.tile_n} does not divide cols={cols} ({self.name})"
                )


def layout_offsets(layout: LayoutSpec, rows: int, cols: int) -> np.ndarray:
    """
    Reference nested-loop mapping: a rows x cols array holding the byte offset
    of every element's first byte.
    """
    layout.check_shape(rows, cols)
    e = layout.elem_bytes
    r = np.arange(rows, dtype=np.int64)[:, None]
    c = np.arange(cols, dtype=np.int64)[None, :]
    if layout.kind == LayoutKind.ROW_MAJOR:
        return (r * cols + c) * e
    tm, tn = layout.tile_m, layout.tile_n
    tile_index = (r // tm) * (cols // tn) + c // tn
    return (tile_index * tm * tn + (r % tm) * tn + c % tn) * e


def layout_to_pattern(
    layout: LayoutSpec,
    rows: int,
    cols: int,
    base: int,
    word_bytes: int,
    row_granular: bool = False,
) -> AffinePattern:
    """
    Pattern visiting the region of a rows x cols matrix in the layout's own
    storage order, one word per emission.
    """
    layout.check_shape(rows, cols)
    e = layout.elem_bytes
    total = rows * cols * e
    if total % word_bytes != 0:
        raise LayoutError(
            f"{rows}x{cols}x{e} bytes is not a multiple of the {word_bytes}-byte word"
        )
    if layout.kind == LayoutKind.ROW_MAJOR:
        if not row_granular:
            return AffinePattern(base, [total // word_bytes], [word_bytes], word_bytes)
        if (cols * e) % word_bytes != 0:
            raise LayoutError(
                f"row of {cols * e} bytes is not a multiple of the {word_bytes}-byte word"
            )
        return AffinePattern(
            base, [cols * e // word_bytes, rows], [word_bytes, cols * e], word_bytes
        )
    tm, tn = layout.tile_m, layout.tile_n
    if (tn * e) % word_bytes != 0:
        raise LayoutError(
            f"tile row of {tn * e} bytes ({layout.name}) is not a multiple of the"
            f" {word_bytes}-byte word"
        )
    tile_bytes = tm * tn * e
    return AffinePattern(
        base,
        [tn * e // word_bytes, tm, cols // tn, rows // tm],
        [word_bytes, tn * e, tile_bytes, (cols // tn) * tile_bytes],
        word_bytes,
    )


def _word_starts(offsets: np.ndarray, elem_bytes: int, word_bytes: int) -> np.ndarray:
    """
    Reduces element offsets listed in stream order to the word addresses a
    frontend issues. Every word must be fully covered by consecutive elements.
    """
    flat = offsets.reshape(-1)
    per_word = word_bytes // elem_bytes if elem_bytes < word_bytes else 1
    if elem_bytes < word_bytes:
        if word_bytes % elem_bytes != 0 or len(flat) % per_word != 0:
            raise LayoutError("elements do not pack into whole words")
        groups = flat.reshape(-1, per_word)
        contiguous = groups - groups[:, :1] == np.arange(per_word) * elem_bytes
        if not contiguous.all() or (groups[:, 0] % word_bytes != 0).any():
            raise LayoutError(
                "inner contiguous run is shorter than one word; sub-word access is"
                " not supported"
            )
        return groups[:, 0]
    if elem_bytes % word_bytes != 0:
        raise LayoutError(
            f"element of {elem_bytes} bytes is not a multiple of the {word_bytes}-byte word"
        )
    sub = elem_bytes // word_bytes
    return (flat[:, None] + np.arange(sub, dtype=np.int64) * word_bytes).reshape(-1)


def transfer_patterns(
    src: LayoutSpec,
    dst: LayoutSpec,
    rows: int,
    cols: int,
    src_base: int,
    dst_base: int,
    word_bytes: int,
    transpose: bool = False,
) -> tuple[AffinePattern, AffinePattern]:
    """
    Source and destination patterns of a layout transformation. The stream
    follows destination storage order, so the destination pattern is one
    contiguous run and the source pattern carries the reordering.

    With transpose the destination holds the cols x rows transpose; element
    (i, j) of the destination is element (j, i) of the source.
    """
    if src.elem_bytes != dst.elem_bytes:
        raise LayoutError("source and destination element sizes differ")
    src_off = layout_offsets(src, rows, cols)
    if transpose:
        dst_off = layout_offsets(dst, cols, rows)
        src_in_dst_coords = src_off.T
    else:
        dst_off = layout_offsets(dst, rows, cols)
        src_in_dst_coords = src_off
    order = np.argsort(dst_off.reshape(-1), kind="stable")
    stream = src_in_dst_coords.reshape(-1)[order]
    words = _word_starts(stream, src.elem_bytes, word_bytes)
    src_pattern = fit_pattern(words + src_base, word_bytes)
    dst_pattern = AffinePattern(
        dst_base,
        [rows * cols * dst.elem_bytes // word_bytes],
        [word_bytes],
        word_bytes,
    )
    return src_pattern, dst_pattern


def tile_transpose_patterns(
    layout: LayoutSpec,
    rows: int,
    cols: int,
    src_base: int,
    dst_base: int,
    word_bytes: int,
) -> tuple[AffinePattern, AffinePattern]:
    """
    Patterns for a transpose carried out jointly by addresses and an in-stream
    tile transposer: the source is read one whole tile at a time in the order
    of the transposed tile grid, so that transposing every tile in the stream
    yields the cols x rows transpose in the same tiled layout. Tiles must be
    square and one tile row must be one word.
    """
    if layout.kind != LayoutKind.TILED or layout.tile_m != layout.tile_n:
        raise LayoutError(f"tile transpose needs square tiles, got {layout.name}")
    if layout.tile_n * layout.elem_bytes != word_bytes:
        raise LayoutError(
            f"tile row of {layout.tile_n * layout.elem_bytes} bytes must be exactly one"
            f" {word_bytes}-byte word"
        )
    layout.check_shape(rows, cols)
    layout.check_shape(cols, rows)
    t = layout.tile_m
    tile_bytes = t * t * layout.elem_bytes
    # word order: dst tile (a, b) <- src tile (b, a), rows 0..t-1
    src_pattern = AffinePattern(
        src_base,
        [t, rows // t, cols // t],
        [word_bytes, (cols // t) * tile_bytes, tile_bytes],
        word_bytes,
    )
    dst_pattern = AffinePattern(
        dst_base, [rows * cols * layout.elem_bytes // word_bytes], [word_bytes], word_bytes
    )
    return src_pattern, dst_pattern
