"""
Contiguous DMA copy into the destination cluster followed by a standalone
layout transformation unit that rewrites the data through an intermediate
buffer in local memory.
"""

import math

from xdmasim.bench.metrics import Metrics
from xdmasim.config.layout import LayoutSpec
from xdmasim.config.soc import ReshapeAccelParams, SocConfig


class ReshapeAccelModel:
    def __init__(self, params: ReshapeAccelParams, beat_bytes: int, word_bytes: int, axi_latency: int):
        self.params: ReshapeAccelParams = params
        self.beat_bytes: int = beat_bytes
        self.word_bytes: int = word_bytes
        self.axi_latency: int = axi_latency

    @staticmethod
    def from_config(config: SocConfig) -> "ReshapeAccelModel":
        return ReshapeAccelModel(
            config.baselines.reshape_accel, config.beat_bytes, config.word_bytes, config.axi_latency
        )

    def copy_cycles(self, num_bytes: int) -> int:
        if num_bytes == 0:
            return 0
        return self.params.copy_setup + math.ceil(num_bytes / self.beat_bytes) + self.axi_latency

    def transform_cycles(self, num_bytes: int) -> int:
        if num_bytes == 0:
            return 0
        words = math.ceil(num_bytes / self.word_bytes)
        return self.params.accel_setup + self.params.passes * math.ceil(
            words / self.params.words_per_cycle
        )


def run_accel_reshape(
    model: ReshapeAccelModel,
    src: LayoutSpec,
    dst: LayoutSpec,
    rows: int,
    cols: int,
    transpose: bool = False,
) -> Metrics:
    num_bytes = rows * cols * src.elem_bytes
    copy = model.copy_cycles(num_bytes)
    # a plain copy needs no accelerator pass
    transform = 0 if src == dst and not transpose else model.transform_cycles(num_bytes)
    return Metrics(
        copy + transform,
        num_bytes,
        model.beat_bytes,
        stalls={
            "cfg_phase": (model.params.copy_setup if copy else 0)
            + (model.params.accel_setup if transform else 0)
        },
        details={"copy_cycles": copy, "transform_cycles": transform},
    )
