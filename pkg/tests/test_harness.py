import json

import numpy as np
import pytest

from xdmasim.bench.harness import (
    TransferRun,
    prepare_task,
    region_base,
    run_transfer,
    verify_functional,
)
from xdmasim.bench.metrics import compute_utilization
from xdmasim.bench.oracle import reference_memset, reference_transform, verify
from xdmasim.bench.sweep import LAYOUTS
from xdmasim.config.layout import LayoutSpec
from xdmasim.config.soc import default_config, soc_config, with_overrides
from xdmasim.errors import ConfigError, CycleBudgetExceeded, LayoutError, OracleMismatch, XdmaError
from xdmasim.parser.tasks import RegionSpec, TaskFile, TaskSpec


@pytest.fixture
def config():
    return default_config()


def reshape(src, dst, m, n=None, src_cluster=0, dst_cluster=1, controller=0, offset=0, dst_offset=None):
    n = m if n is None else n
    dst_offset = offset if dst_offset is None else dst_offset
    return TaskSpec(
        controller=controller,
        src=RegionSpec(cluster=src_cluster, offset=offset, layout=src, rows=m, cols=n),
        dst=RegionSpec(cluster=dst_cluster, offset=dst_offset, layout=dst, rows=m, cols=n),
    )


PAIRS = [(s, d) for s in LAYOUTS for d in LAYOUTS]


@pytest.mark.parametrize("size", [32, 64])
@pytest.mark.parametrize("src,dst", PAIRS)
def test_reshape_matches_reference(config, src, dst, size):
    metrics = run_transfer(config, [reshape(src, dst, size)])
    assert metrics.bytes == size * size
    assert 0 < metrics.utilization <= 1


@pytest.mark.slow
@pytest.mark.parametrize("src,dst", PAIRS)
def test_reshape_matches_reference_128(config, src, dst):
    run_transfer(config, [reshape(src, dst, 128)])


@pytest.mark.slow
def test_large_reshape(config):
    run_transfer(config, [reshape("MN", "MNM8N8", 512)])


def test_contiguous_copy_utilization(config):
    metrics = run_transfer(config, [reshape("MN", "MN", 256)])
    assert metrics.bytes == 65536
    assert compute_utilization(metrics) >= 0.95
    assert metrics.utilization <= 1
    # one beat per cycle plus the cfg, grant and finish overhead
    overhead = metrics.cycles - 1024
    assert 0 < overhead < 64


def test_shallow_buffers_still_correct(config):
    shallow = with_overrides(config, dbuf_src=1, dbuf_dst=1)
    run_transfer(shallow, [reshape("MNM8N32", "MNM8N8", 64)])


def dbuf_cycles(config, task, dbuf):
    return run_transfer(with_overrides(config, dbuf_src=dbuf, dbuf_dst=dbuf), [task]).cycles


def test_three_slots_cover_the_read_latency(config):
    task = reshape("MN", "MN", 128)
    assert dbuf_cycles(config, task, 3) == dbuf_cycles(config, task, 9)
    assert dbuf_cycles(config, task, 2) > dbuf_cycles(config, task, 3)


def test_shallow_buffers_stall_on_tiled_gathers(config):
    # each 64-byte beat of an MN row takes one word from 8 tiles, two per bank
    task = reshape("MNM8N8", "MN", 256)
    shallow, medium, deep = (dbuf_cycles(config, task, d) for d in (3, 5, 9))
    assert shallow > medium > deep
    assert shallow > 1.5 * deep


@pytest.mark.slow
@pytest.mark.parametrize("src,dst", [("MN", "MNM8N8"), ("MNM8N32", "MN")])
def test_deeper_buffers_never_slower(config, src, dst):
    task = reshape(src, dst, 256)
    cycles = [dbuf_cycles(config, task, d) for d in range(1, 13)]
    assert cycles == sorted(cycles, reverse=True)


def test_empty_task(config):
    with pytest.raises(XdmaError, match="empty task"):
        run_transfer(config, [reshape("MN", "MN", 0)])
    with pytest.raises(XdmaError, match="empty task"):
        run_transfer(config, [])


def test_region_checks(config):
    with pytest.raises(ConfigError, match="exceeds"):
        region_base(config, RegionSpec(cluster=0, offset=config.mem_size - 16, rows=8, cols=8))
    with pytest.raises(ConfigError, match="2-cluster"):
        region_base(config, RegionSpec(cluster=2, rows=8, cols=8))


def test_local_reshape(config):
    metrics = run_transfer(config, [reshape("MN", "MNM8N16", 64, dst_cluster=0, dst_offset=65536)])
    assert metrics.details["tasks"] == 1
    assert metrics.stalls["cfg_phase"] == 0


def test_remote_read(config):
    # controller 0 pulls data out of cluster 1
    run_transfer(config, [reshape("MNM8N8", "MN", 64, src_cluster=1, dst_cluster=0, controller=0)])


def test_third_party_controller():
    config = soc_config(num_clusters=3, mem_base_addr=(0x1000_0000, 0x1040_0000, 0x1080_0000))
    run_transfer(config, [reshape("MN", "MNM8N8", 64, src_cluster=0, dst_cluster=1, controller=2)])


def test_memset(config):
    task = TaskSpec(
        op="memset",
        fill_word=0xDEADBEEF,
        dst=RegionSpec(cluster=1, layout="MNM8N8", rows=64, cols=64),
    )
    run = TransferRun(config, [task]).run()
    run.check()
    base = region_base(config, task.dst)
    view = run.soc.memories[1].view(base, 4096)
    verify(view, reference_memset(4096, 0xDEADBEEF, 8), base)
    assert bytes(view[:8]) == bytes.fromhex("efbeadde00000000")


def test_memset_requires_plugin(config):
    task = TaskSpec(op="memset", dst=RegionSpec(cluster=1, rows=8, cols=8))
    with pytest.raises(ConfigError, match="memset writer plugin"):
        run_transfer(with_overrides(config, ext_dst=()), [task])


def transpose(layout, m, n, elem_bytes=1, src_cluster=0, dst_cluster=1):
    return TaskSpec(
        op="transpose",
        src=RegionSpec(cluster=src_cluster, layout=layout, rows=m, cols=n, elem_bytes=elem_bytes),
        dst=RegionSpec(cluster=dst_cluster, layout=layout, rows=n, cols=m, elem_bytes=elem_bytes),
    )


def test_tile_transpose_uses_plugin(config):
    task = transpose("MNM8N8", 64, 128)
    prepared = prepare_task(task, config)
    assert prepared.reader_ctrl[0] != b""
    run_transfer(config, [task], transpose_mode="plugin")


def test_address_transpose_of_wide_elements(config):
    task = transpose("MN", 16, 32, elem_bytes=8)
    assert prepare_task(task, config).reader_ctrl == (b"",)
    run_transfer(config, [task], transpose_mode="address")
    with pytest.raises(ConfigError, match="cannot be transposed"):
        prepare_task(task, config, transpose_mode="plugin")


def test_plugin_and_address_transpose_agree(config):
    # one 8-byte element per tile: both transpose paths apply
    task = transpose("MNM1N1", 16, 32, elem_bytes=8)
    images = []
    for mode in ("plugin", "address"):
        run = TransferRun(config, [task], seed=11, transpose_mode=mode).run()
        run.check()
        prepared = run.prepared[0]
        assert (prepared.reader_ctrl[0] != b"") == (mode == "plugin")
        images.append(bytes(run.soc.memories[1].view(prepared.dst_base, task.dst.num_bytes)))
    assert images[0] == images[1]


def test_byte_transpose_needs_plugin(config):
    with pytest.raises(LayoutError, match="sub-word"):
        prepare_task(transpose("MNM8N8", 64, 64), config, transpose_mode="address")
    no_plugin = with_overrides(config, ext_src=())
    with pytest.raises(LayoutError):
        prepare_task(transpose("MNM8N8", 64, 64), no_plugin)


@pytest.mark.parametrize("dst_cluster", [0, 1])
@pytest.mark.parametrize("dst", ["MN", "MNM8N8"])
def test_identity_plugins_cost_no_cycles(config, dst, dst_cluster):
    config = with_overrides(config, ext_src=("identity", "transpose"), ext_dst=("identity", "memset"))
    cycles = []
    base = reshape("MN", dst, 64, dst_cluster=dst_cluster, dst_offset=65536)
    for side in (None, "reader", "writer"):
        task = base
        if side:
            task = TaskSpec(src=base.src, dst=base.dst, plugins={side: {"identity": "01"}})
        cycles.append(run_transfer(config, [task]).cycles)
    assert cycles[1] == cycles[0]
    assert cycles[2] == cycles[0]


def test_unknown_plugin_ctrl(config):
    task = TaskSpec(
        src=RegionSpec(cluster=0, rows=8, cols=8),
        dst=RegionSpec(cluster=1, rows=8, cols=8),
        plugins={"writer": {"identity": "01"}},
    )
    with pytest.raises(ConfigError, match="not installed"):
        prepare_task(task, config)


def mixed_tasks():
    return [
        reshape("MN", "MNM8N8", 64, offset=0),
        reshape("MNM8N16", "MN", 32, src_cluster=1, dst_cluster=0, controller=1, offset=65536),
        TaskSpec(
            op="transpose",
            src=RegionSpec(cluster=1, offset=131072, layout="MNM8N8", rows=32, cols=64),
            dst=RegionSpec(cluster=1, offset=196608, layout="MNM8N8", rows=64, cols=32),
        ),
        TaskSpec(op="memset", fill_word=7, dst=RegionSpec(cluster=0, offset=262144, rows=16, cols=64)),
    ]


def test_functional_matches_timed(config):
    tasks = mixed_tasks()
    memories = verify_functional(config, tasks, seed=4)
    run = TransferRun(config, tasks, seed=4).run()
    run.check()
    for task in run.prepared:
        dst = task.spec.dst
        timed = run.soc.memories[dst.cluster].view(task.dst_base, dst.num_bytes)
        functional = memories[dst.cluster].view(task.dst_base, dst.num_bytes)
        assert np.array_equal(timed, functional)


def test_oracle_detects_corruption(config):
    run = TransferRun(config, [reshape("MN", "MNM8N8", 32)]).run()
    run.check()
    task = run.prepared[0]
    memory = run.soc.memories[1]
    byte = memory.backdoor_read(task.dst_base + 100, 1)[0]
    memory.backdoor_write(task.dst_base + 100, bytes([byte ^ 1]))
    with pytest.raises(OracleMismatch) as error:
        run.check()
    assert error.value.address == task.dst_base + 100


def test_reference_transform_tiles():
    src = np.arange(256, dtype=np.uint8)
    out = reference_transform(src, LayoutSpec.row_major(), LayoutSpec.tiled(8, 8), 16, 16)
    assert out[:8].tolist() == list(range(8))
    assert out[8:16].tolist() == list(range(16, 24))
    assert out[64:72].tolist() == list(range(8, 16))


def test_cycle_budget(config):
    with pytest.raises(CycleBudgetExceeded):
        run_transfer(config, [reshape("MN", "MN", 64)], cycle_budget=10)


def test_stalls_reported(config):
    metrics = run_transfer(config, [reshape("MN", "MNM8N8", 64)])
    assert set(metrics.stalls) == {"bank_conflict", "buffer_full", "link_backpressure", "cfg_phase"}
    assert metrics.stalls["cfg_phase"] > 0


def test_trace_is_deterministic(config, tmp_path):
    tasks = TaskFile(schema_version=1, tasks=mixed_tasks())
    paths = [tmp_path / "a.jsonl", tmp_path / "b.jsonl"]
    for path in paths:
        run_transfer(config, tasks, seed=1, trace_path=str(path))
    assert paths[0].read_bytes() == paths[1].read_bytes()
    records = [json.loads(line) for line in paths[0].read_text().splitlines()]
    assert {r["type"] for r in records} == {"beat", "bank"}
    cycles = [r["cycle"] for r in records]
    assert cycles == sorted(cycles)
