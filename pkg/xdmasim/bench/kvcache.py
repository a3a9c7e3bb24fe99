"""
KV-cache movement between two accelerator clusters during LLM inference:
prefill reshapes the cache between row-major and tiled layouts, load
transposes it inside the tiled layout.
"""

import logging

from xdmasim.baselines.reshape_accel import ReshapeAccelModel, run_accel_reshape
from xdmasim.baselines.sw_loop import SwLoopModel, run_sw_loop
from xdmasim.bench.harness import run_transfer
from xdmasim.bench.metrics import Metrics
from xdmasim.config.soc import SocConfig
from xdmasim.errors import ConfigError
from xdmasim.parser.parser import parse_layout
from xdmasim.parser.tasks import RegionSpec, TaskSpec
from xdmasim.utils.numbers import as_float

logger = logging.getLogger(__name__)

STAGES = ("prefill1", "prefill2", "load")
PREFILL_LAYOUTS = {"prefill1": ("MNM8N8", "MN"), "prefill2": ("MN", "MNM8N8")}
LOAD_ROWS = (2048, 4096, 8192)
# published cycle counts of the load series at 2048/4096/8192 rows x 512
PUBLISHED_LOAD_CYCLES = {2048: 37509, 4096: 74884, 8192: 149639}
PUBLISHED_LOAD_RATIO = 2.28


class KvResult:
    def __init__(
        self, stage: str, rows: int, cols: int, metrics: Metrics, baseline: Metrics, accel: Metrics
    ):
        self.stage: str = stage
        self.rows: int = rows
        self.cols: int = cols
        self.metrics: Metrics = metrics
        self.baseline: Metrics = baseline
        self.accel: Metrics = accel

    def __repr__(self):
        return f"KvResult({self.stage} {self.rows}x{self.cols}: {self.metrics.cycles} cycles)"

    @property
    def speedup(self) -> float:
        """Cycles of the software-loop iDMA baseline over simulated cycles."""
        return as_float(self.baseline.cycles / self.metrics.cycles, 3)

    @property
    def speedup_vs_accel(self) -> float:
        return as_float(self.accel.cycles / self.metrics.cycles, 3)

    def as_row(self) -> dict:
        published = PUBLISHED_LOAD_CYCLES.get(self.rows) if self.stage == "load" else None
        return {
            "stage": self.stage,
            "rows": self.rows,
            "cols": self.cols,
            "cycles": self.metrics.cycles,
            "utilization": as_float(self.metrics.utilization),
            "idma_cycles": self.baseline.cycles,
            "speedup_vs_idma": self.speedup,
            "accel_cycles": self.accel.cycles,
            "speedup_vs_accel": self.speedup_vs_accel,
            "published_cycles": "" if published is None else published,
            "published_ratio": PUBLISHED_LOAD_RATIO if self.stage == "load" else "",
        }


def kv_task(stage: str, rows: int, cols: int, src_cluster: int = 0, dst_cluster: int = 1) -> TaskSpec:
    if stage not in STAGES:
        raise ConfigError(f"unknown kv-cache stage {stage!r} (have {', '.join(STAGES)})")
    if stage == "load":
        return TaskSpec(
            op="transpose",
            src=RegionSpec(cluster=src_cluster, layout="MNM8N8", rows=rows, cols=cols),
            dst=RegionSpec(cluster=dst_cluster, layout="MNM8N8", rows=cols, cols=rows),
        )
    src, dst = PREFILL_LAYOUTS[stage]
    return TaskSpec(
        src=RegionSpec(cluster=src_cluster, layout=src, rows=rows, cols=cols),
        dst=RegionSpec(cluster=dst_cluster, layout=dst, rows=rows, cols=cols),
    )


def kvcache_bench(config: SocConfig, stage: str, rows: int, cols: int, seed: int = 0) -> KvResult:
    task = kv_task(stage, rows, cols)
    metrics = run_transfer(config, [task], seed=seed)
    src = parse_layout(task.src.layout)
    dst = parse_layout(task.dst.layout)
    baseline = run_sw_loop(
        SwLoopModel.from_config(config, "idma"), src, dst, rows, cols, transpose=stage == "load"
    )
    accel = run_accel_reshape(
        ReshapeAccelModel.from_config(config), src, dst, rows, cols, transpose=stage == "load"
    )
    result = KvResult(stage, rows, cols, metrics, baseline, accel)
    logger.info(
        "%r, %sx faster than the iDMA loop, %sx than the reshape accelerator",
        result,
        result.speedup,
        result.speedup_vs_accel,
    )
    return result


def load_series(config: SocConfig, rows: tuple[int, ...] = LOAD_ROWS, cols: int = 512, seed: int = 0):
    """Load stage at each row count, with cycle ratios against the first."""
    results = [kvcache_bench(config, "load", r, cols, seed) for r in rows]
    first = results[0].metrics.cycles
    return results, [as_float(r.metrics.cycles / first, 4) for r in results]
