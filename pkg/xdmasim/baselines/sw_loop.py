"""
Software control loop around a 1D/2D descriptor DMA engine. The host walks the
layout transformation, programs one descriptor per block the engine can
express, and waits for it before programming the next one.
"""

import logging
import math

import numpy as np

from xdmasim.bench.metrics import Metrics
from xdmasim.config.layout import LayoutSpec, layout_offsets
from xdmasim.config.soc import SocConfig, SwLoopParams
from xdmasim.errors import LayoutError

logger = logging.getLogger(__name__)


class Descriptor:
    """rows runs of run_bytes each; consecutive runs step by fixed strides."""

    def __init__(
        self,
        src: int,
        dst: int,
        run_bytes: int,
        rows: int = 1,
        src_stride: int = 0,
        dst_stride: int = 0,
    ):
        self.src: int = src
        self.dst: int = dst
        self.run_bytes: int = run_bytes
        self.rows: int = rows
        self.src_stride: int = src_stride
        self.dst_stride: int = dst_stride

    def __repr__(self):
        return f"Descriptor({self.src:#x}->{self.dst:#x}, {self.rows}x{self.run_bytes}B)"

    @property
    def num_bytes(self) -> int:
        return self.rows * self.run_bytes


def _contiguous_runs(src: LayoutSpec, dst: LayoutSpec, rows: int, cols: int, transpose: bool):
    """Runs contiguous in both layouts, listed in destination order."""
    if src.elem_bytes != dst.elem_bytes:
        raise LayoutError("source and destination element sizes differ")
    e = src.elem_bytes
    src_off = layout_offsets(src, rows, cols).reshape(-1)
    if transpose:
        dst_off = layout_offsets(dst, cols, rows).T.reshape(-1)
    else:
        dst_off = layout_offsets(dst, rows, cols).reshape(-1)
    order = np.argsort(dst_off, kind="stable")
    s, d = src_off[order], dst_off[order]
    breaks = np.flatnonzero((np.diff(s) != e) | (np.diff(d) != e)) + 1
    starts = np.concatenate(([0], breaks))
    lengths = np.diff(np.concatenate((starts, [len(s)]))) * e
    return s[starts], d[starts], lengths


def decompose_descriptors(
    src: LayoutSpec,
    dst: LayoutSpec,
    rows: int,
    cols: int,
    dims: int = 2,
    transpose: bool = False,
) -> list[Descriptor]:
    """
    Greedy decomposition into the fewest descriptors of at most `dims`
    dimensions: maximal contiguous runs, merged into 2D blocks while run
    length and both strides stay constant.
    """
    assert dims in (1, 2)
    src_starts, dst_starts, lengths = _contiguous_runs(src, dst, rows, cols, transpose)
    out: list[Descriptor] = []
    for s, d, n in zip(src_starts.tolist(), dst_starts.tolist(), lengths.tolist()):
        if dims == 2 and out:
            last = out[-1]
            if last.run_bytes == n:
                src_step = s - (last.src + (last.rows - 1) * last.src_stride)
                dst_step = d - (last.dst + (last.rows - 1) * last.dst_stride)
                if last.rows == 1:
                    last.src_stride, last.dst_stride = src_step, dst_step
                    last.rows = 2
                    continue
                if (src_step, dst_step) == (last.src_stride, last.dst_stride):
                    last.rows += 1
                    continue
        out.append(Descriptor(s, d, n))
    return out


def descriptor_cycles(desc: Descriptor, beat_bytes: int) -> int:
    return desc.rows * math.ceil(desc.run_bytes / beat_bytes)


class SwLoopModel:
    def __init__(self, params: SwLoopParams, beat_bytes: int, axi_latency: int):
        self.params: SwLoopParams = params
        self.beat_bytes: int = beat_bytes
        self.axi_latency: int = axi_latency

    @staticmethod
    def from_config(config: SocConfig, which: str) -> "SwLoopModel":
        params = getattr(config.baselines, which)
        return SwLoopModel(params, config.beat_bytes, config.axi_latency)

    @property
    def c_setup(self) -> int:
        return self.params.c_setup

    def cycles(self, descriptors: list[Descriptor]) -> int:
        data = [descriptor_cycles(d, self.beat_bytes) for d in descriptors]
        if not data:
            return 0
        setup = self.c_setup
        if not self.params.pipelined:
            return sum(setup + c + self.axi_latency for c in data)
        # the next descriptor is programmed while the previous one moves data
        exposed = sum(max(0, setup - c) for c in data[:-1])
        return setup + self.axi_latency + sum(data) + exposed


def run_sw_loop(
    model: SwLoopModel,
    src: LayoutSpec,
    dst: LayoutSpec,
    rows: int,
    cols: int,
    transpose: bool = False,
) -> Metrics:
    descriptors = decompose_descriptors(src, dst, rows, cols, model.params.dims, transpose)
    num_bytes = rows * cols * src.elem_bytes
    cycles = model.cycles(descriptors)
    logger.debug(
        "%s->%s %dx%d: %d descriptors, %d cycles", src, dst, rows, cols, len(descriptors), cycles
    )
    return Metrics(
        cycles,
        num_bytes,
        model.beat_bytes,
        stalls={"cfg_phase": model.c_setup * len(descriptors)},
        details={"descriptors": len(descriptors)},
    )
