"""
Layout transformation sweep: every (setup, layout pair, size) point of a grid
becomes one CSV row. XDMA setups are simulated and oracle-checked; the other
setups are evaluated with their cost models.
"""

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from xdmasim.baselines.reshape_accel import ReshapeAccelModel, run_accel_reshape
from xdmasim.baselines.sw_loop import SwLoopModel, run_sw_loop
from xdmasim.bench.harness import run_transfer
from xdmasim.bench.metrics import STALL_KINDS, Metrics
from xdmasim.config.layout import LayoutSpec
from xdmasim.config.soc import SocConfig, with_overrides
from xdmasim.errors import OracleMismatch, XdmaError
from xdmasim.parser.parser import parse_layout_pairs
from xdmasim.parser.tasks import SETUP_NAMES, RegionSpec, SweepGrid, TaskSpec
from xdmasim.utils.numbers import as_float

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
CSV_FIELDS = (
    "schema",
    "setup",
    "layout_src",
    "layout_dst",
    "m",
    "n",
    "dbuf",
    "cycles",
    "bytes",
    "effective_bw",
    "utilization",
    *STALL_KINDS,
    "status",
)
SUMMARY_FIELDS = ("setup", "points", "mean_utilization", "std_utilization")

LAYOUTS = ("MN", "MNM8N8", "MNM8N16", "MNM8N32")
DESK_SIZES = (32, 64, 96, 128, 192, 256)
FULL_SIZES = (32, 64, 96, 128, 192, 256, 384, 512)


def desk_grid() -> SweepGrid:
    """Conversions between row-major MN and each tiled layout, both ways."""
    tiled = [layout for layout in LAYOUTS if layout != "MN"]
    pairs = [f"MN->{t}" for t in tiled] + [f"{t}->MN" for t in tiled]
    return SweepGrid(name="desk", setups=list(SETUP_NAMES), layout_pairs=pairs, sizes=list(DESK_SIZES))


def full_grid() -> SweepGrid:
    pairs = [f"{s}->{d}" for s in LAYOUTS for d in LAYOUTS]
    return SweepGrid(name="full", setups=list(SETUP_NAMES), layout_pairs=pairs, sizes=list(FULL_SIZES))


BUILTIN_GRIDS = {"desk": desk_grid, "full": full_grid}


def setup_dbuf(setup: str) -> int | None:
    if setup.startswith("xdma"):
        return int(setup.removeprefix("xdma"))
    return None


class SweepPoint:
    def __init__(self, setup: str, pair: str, size: int, src_cluster: int, dst_cluster: int, seed: int):
        self.setup: str = setup
        self.pair: str = pair
        self.size: int = size
        self.src_cluster: int = src_cluster
        self.dst_cluster: int = dst_cluster
        self.seed: int = seed

    def __repr__(self):
        return f"SweepPoint({self.setup}, {self.pair}, {self.size})"


def grid_points(grid: SweepGrid, seed: int = 0) -> list[SweepPoint]:
    """Points in output order: setup, then layout pair, then size."""
    return [
        SweepPoint(setup, pair, size, grid.src_cluster, grid.dst_cluster, seed)
        for setup in grid.setups
        for pair in grid.layout_pairs
        for size in grid.sizes
    ]


def point_metrics(config: SocConfig, point: SweepPoint, src: LayoutSpec, dst: LayoutSpec) -> Metrics:
    m = n = point.size
    if point.setup == "sw_idma":
        return run_sw_loop(SwLoopModel.from_config(config, "idma"), src, dst, m, n)
    if point.setup == "sw_gemmini":
        return run_sw_loop(SwLoopModel.from_config(config, "gemmini"), src, dst, m, n)
    if point.setup == "dma_accel":
        return run_accel_reshape(ReshapeAccelModel.from_config(config), src, dst, m, n)
    dbuf = setup_dbuf(point.setup)
    task = TaskSpec(
        src=RegionSpec(cluster=point.src_cluster, layout=src.name, rows=m, cols=n),
        dst=RegionSpec(cluster=point.dst_cluster, layout=dst.name, rows=m, cols=n),
    )
    return run_transfer(with_overrides(config, dbuf_src=dbuf, dbuf_dst=dbuf), [task], seed=point.seed)


def run_point(config: SocConfig, point: SweepPoint) -> dict:
    src, dst = parse_layout_pairs(point.pair)[0]
    dbuf = setup_dbuf(point.setup)
    row = {
        "schema": CSV_SCHEMA_VERSION,
        "setup": point.setup,
        "layout_src": src.name,
        "layout_dst": dst.name,
        "m": point.size,
        "n": point.size,
        "dbuf": "" if dbuf is None else dbuf,
    }
    try:
        metrics = point_metrics(config, point, src, dst)
    except XdmaError as error:
        logger.warning("%r failed: %s", point, error)
        row.update({field: "" for field in CSV_FIELDS if field not in row})
        kind = "mismatch" if isinstance(error, OracleMismatch) else "error"
        row["status"] = f"{kind}: {error}"
        return row
    row.update(metrics.as_row())
    row["status"] = "ok"
    logger.info("%r: %d cycles, utilization %s", point, metrics.cycles, row["utilization"])
    return row


def _run_point(args: tuple[SocConfig, SweepPoint]) -> dict:
    return run_point(*args)


def sweep_reshape(config: SocConfig, grid: SweepGrid, jobs: int = 1, seed: int = 0) -> list[dict]:
    """One row per grid point, in grid order whatever the number of workers."""
    points = grid_points(grid, seed)
    work = [(config, point) for point in points]
    if jobs <= 1:
        return [_run_point(args) for args in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_point, work, chunksize=max(1, len(work) // (4 * jobs))))


def summarize(rows: list[dict]) -> list[dict]:
    """Mean and population standard deviation of utilization per setup."""
    out = []
    setups = list(dict.fromkeys(row["setup"] for row in rows))
    for setup in setups:
        values = np.array(
            [float(r["utilization"]) for r in rows if r["setup"] == setup and r["status"] == "ok"]
        )
        out.append({
            "setup": setup,
            "points": len(values),
            "mean_utilization": as_float(values.mean()) if len(values) else "",
            "std_utilization": as_float(values.std()) if len(values) else "",
        })
    return out


def mean_utilization(summary: list[dict]) -> dict[str, float]:
    return {row["setup"]: row["mean_utilization"] for row in summary if row["points"]}


def format_csv(rows: list[dict], fields=CSV_FIELDS) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()


def write_csv(path: str, rows: list[dict], fields=CSV_FIELDS) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_csv(rows, fields))


def summary_path(csv_path: str) -> str:
    return csv_path.removesuffix(".csv") + ".summary.csv"
