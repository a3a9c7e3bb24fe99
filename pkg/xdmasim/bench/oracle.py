"""
Reference results of the supported operations, computed from the layout
mappings alone and independent of any pattern or plugin.
"""

import struct

import numpy as np

from xdmasim.config.layout import LayoutSpec, layout_offsets
from xdmasim.errors import OracleMismatch


def _byte_index(offsets: np.ndarray, elem_bytes: int) -> np.ndarray:
    return (offsets.reshape(-1, 1) + np.arange(elem_bytes, dtype=np.int64)).reshape(-1)


def reference_transform(
    src: np.ndarray,
    src_layout: LayoutSpec,
    dst_layout: LayoutSpec,
    rows: int,
    cols: int,
    transpose: bool = False,
) -> np.ndarray:
    """
    Destination bytes of a rows x cols source matrix. With transpose the
    destination is the cols x rows matrix whose element (i, j) is source
    element (j, i).
    """
    e = src_layout.elem_bytes
    src_off = layout_offsets(src_layout, rows, cols)
    if transpose:
        dst_off = layout_offsets(dst_layout, cols, rows).T
    else:
        dst_off = layout_offsets(dst_layout, rows, cols)
    out = np.zeros(rows * cols * e, dtype=np.uint8)
    out[_byte_index(dst_off, e)] = src[_byte_index(src_off, e)]
    return out


def reference_memset(num_bytes: int, fill_word: int, word_bytes: int) -> np.ndarray:
    """The 64-bit fill value repeated or truncated to one word, then tiled."""
    pattern = np.resize(np.frombuffer(struct.pack("<Q", fill_word), dtype=np.uint8), word_bytes)
    return np.resize(pattern, num_bytes)


def verify(actual: np.ndarray, expected: np.ndarray, base: int) -> None:
    """Raises OracleMismatch at the first differing byte."""
    assert actual.shape == expected.shape
    diff = np.flatnonzero(actual != expected)
    if diff.size:
        i = int(diff[0])
        raise OracleMismatch(base + i, int(expected[i]), int(actual[i]))
