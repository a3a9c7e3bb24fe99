import numpy as np
import pytest

from xdmasim.bench.harness import TransferRun
from xdmasim.bench.sweep import LAYOUTS
from xdmasim.config.pattern import AffinePattern
from xdmasim.config.soc import default_config, soc_config
from xdmasim.hw.backend import TunnelState
from xdmasim.hw.controller import build_instruction
from xdmasim.hw.soc import Soc, deadlock_bound
from xdmasim.parser.tasks import RegionSpec, TaskSpec
from xdmasim.utils.graph import find_wait_cycle, strongly_connected_components

C0 = 0x1000_0000
C1 = 0x1040_0000


@pytest.fixture
def config():
    return default_config()


def copy(src_cluster, dst_cluster, offset=0, controller=None, size=64, src="MN", dst="MN"):
    return TaskSpec(
        controller=src_cluster if controller is None else controller,
        src=RegionSpec(cluster=src_cluster, offset=offset, layout=src, rows=size, cols=size),
        dst=RegionSpec(cluster=dst_cluster, offset=offset, layout=dst, rows=size, cols=size),
    )


def traced(config, tasks):
    run = TransferRun(config, tasks, trace=True).run()
    run.check()
    return run


def kinds(run, a, b):
    return [(r["kind"], r["task_id"]) for r in run.soc.link_trace() if (r["from"], r["to"]) == (a, b)]


def test_four_kib_write_messages(config):
    run = traced(config, [copy(0, 1)])
    forward = kinds(run, 0, 1)
    assert [k for k, _ in forward] == ["cfg"] + ["data"] * 64 + ["finish"]
    assert [k for k, _ in kinds(run, 1, 0)] == ["grant"]
    payload = [r["valid_bytes"] for r in run.soc.link_trace() if r["kind"] == "data"]
    assert payload == [64] * 64


def test_remote_read_messages(config):
    # controller 0 reads cluster 1: the cfg goes out, the data comes back
    run = traced(config, [copy(1, 0, controller=0)])
    assert [k for k, _ in kinds(run, 0, 1)] == ["cfg", "grant"]
    assert [k for k, _ in kinds(run, 1, 0)] == ["data"] * 64 + ["finish"]


def test_tunnel_phases_end_finished(config):
    run = traced(config, [copy(0, 1), copy(1, 0, offset=65536, controller=0)])
    phases = [
        phase
        for unit in run.soc.units
        for phase in (*unit.endpoint.producer_phase.values(), *unit.endpoint.consumer_phase.values())
    ]
    assert len(phases) == 4
    assert set(phases) == {TunnelState.FINISHED}
    assert len(TunnelState) == 5


def test_zero_length_task(config):
    soc = Soc(config, trace=True)
    empty = AffinePattern(C0, [0], [8], 8)
    record = soc.submit(build_instruction(empty, empty.relocated(C1)))
    soc.run()
    assert record.done
    trace = [(r["from"], r["kind"]) for r in soc.link_trace()]
    assert sorted(trace) == [(0, "cfg"), (0, "finish"), (1, "grant")]


def test_phase_order_per_task(config):
    tasks = [copy(0, 1, offset=i * 16384, size=32) for i in range(3)]
    tasks += [copy(1, 0, offset=0x40000 + i * 16384, size=32) for i in range(2)]
    run = traced(config, tasks)
    for record in run.soc.records:
        sent = [r["kind"] for r in run.soc.link_trace() if r["task_id"] == record.task_id]
        assert sent[0] == "cfg"
        body = [k for k in sent if k != "cfg"]
        assert body[0] == "grant"
        assert body[-1] == "finish"
        assert set(body[1:-1]) <= {"data"}
        assert sent.count("finish") == 1


def test_circuit_switching(config):
    tasks = [copy(0, 1, offset=i * 16384, size=32, controller=i % 2) for i in range(4)]
    run = traced(config, tasks)
    for a, b in ((0, 1), (1, 0)):
        beats = kinds(run, a, b)
        for task_id in {t for k, t in beats if k == "data"}:
            first = next(i for i, (k, t) in enumerate(beats) if t == task_id and k == "data")
            last = next(i for i, (k, t) in enumerate(beats) if t == task_id and k == "finish")
            assert all(t == task_id for _, t in beats[first : last + 1])


def solo_cycles(config, task):
    run = TransferRun(config, [task]).run()
    run.check()
    return run.metrics().cycles


@pytest.mark.parametrize("size", [64, 256])
def test_full_duplex(config, size):
    forward = copy(0, 1, offset=0, size=size)
    backward = copy(1, 0, offset=0x10000, size=size)
    solo = [solo_cycles(config, forward), solo_cycles(config, backward)]
    run = TransferRun(config, [forward, backward]).run()
    run.check()
    both = run.metrics().details["task_cycles"]
    for alone, together in zip(solo, both):
        assert together <= 1.1 * alone
    assert abs(both[0] - both[1]) <= 1
    assert run.metrics().cycles <= 1.1 * max(solo)


def random_tasks(seed, num_clusters, count):
    rng = np.random.default_rng(seed)
    slot = iter(range(1, 64))
    tasks = []
    for _ in range(count):
        src_cluster, dst_cluster, controller = rng.integers(0, num_clusters, 3).tolist()
        size = int(rng.choice([32, 64]))
        kind = str(rng.choice(["copy", "copy", "transpose", "memset"]))
        dst_offset = next(slot) * 16384
        if kind == "memset":
            tasks.append(
                TaskSpec(
                    op="memset",
                    controller=controller,
                    fill_word=int(rng.integers(0, 2**32)),
                    dst=RegionSpec(cluster=dst_cluster, offset=dst_offset, rows=size, cols=size),
                )
            )
            continue
        src_offset = next(slot) * 16384
        if kind == "transpose":
            src_layout = dst_layout = "MNM8N8"
        else:
            src_layout, dst_layout = rng.choice(LAYOUTS, 2).tolist()
        tasks.append(
            TaskSpec(
                op=kind,
                controller=controller,
                submit_cycle=int(rng.integers(0, 40)),
                src=RegionSpec(cluster=src_cluster, offset=src_offset, layout=src_layout, rows=size, cols=size),
                dst=RegionSpec(cluster=dst_cluster, offset=dst_offset, layout=dst_layout, rows=size, cols=size),
            )
        )
    return tasks


def check_deadlock_free(config, tasks):
    run = TransferRun(config, tasks, seed=7)
    records = run.soc.run()
    run.check()
    assert all(r.done for r in records)
    assert run.soc.cycle <= deadlock_bound(records, config)


@pytest.mark.parametrize("seed", range(4))
def test_random_tasks_finish(config, seed):
    check_deadlock_free(config, random_tasks(seed, 2, 6))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(4, 24))
def test_random_tasks_finish_three_clusters(seed):
    config = soc_config(num_clusters=3, mem_base_addr=(C0, C1, 0x1080_0000), dbuf_src=3, dbuf_dst=3)
    check_deadlock_free(config, random_tasks(seed, 3, 10))


THREE = {"num_clusters": 3, "mem_base_addr": (C0, C1, 0x1080_0000)}


@pytest.mark.slow
@pytest.mark.parametrize("block", range(10))
def test_thousand_random_task_sets(block):
    two, three = default_config(), soc_config(**THREE)
    for seed in range(1000 + 100 * block, 1100 + 100 * block):
        if seed % 2:
            check_deadlock_free(three, random_tasks(seed, 3, 8))
        else:
            check_deadlock_free(two, random_tasks(seed, 2, 6))


def check_beat_order(config, tasks):
    """
    Per remote task: cfg beats, then one grant back, then data and a single
    finish, with the data direction held by the task from its first data beat
    to its finish.
    """
    run = TransferRun(config, tasks, seed=3, trace=True)
    records = run.soc.run()
    run.check()
    trace = run.soc.link_trace()
    for record in records:
        cfg = record.cfg
        mine = [r for r in trace if r["task_id"] == record.task_id]
        if cfg.is_local:
            assert {r["kind"] for r in mine} <= {"cfg"}
            continue
        p, q = cfg.src_cluster, cfg.dst_cluster
        grants = [r for r in mine if r["kind"] == "grant"]
        finishes = [r for r in mine if r["kind"] == "finish"]
        data = [r for r in mine if r["kind"] == "data"]
        assert len(grants) == len(finishes) == 1
        grant, finish = grants[0], finishes[0]
        assert (grant["from"], grant["to"]) == (q, p)
        assert all((r["from"], r["to"]) == (p, q) for r in data + finishes)
        assert all(r["cycle"] < grant["cycle"] for r in mine if r["kind"] == "cfg" and r["to"] == q)
        opened = (data or finishes)[0]["cycle"]
        assert grant["cycle"] + config.axi_latency <= opened
        assert all(r["cycle"] < opened for r in mine if r["kind"] == "cfg")
        assert all(r["cycle"] < finish["cycle"] for r in data)
        circuit = [
            r
            for r in trace
            if (r["from"], r["to"]) == (p, q) and opened <= r["cycle"] <= finish["cycle"]
        ]
        assert {r["task_id"] for r in circuit} == {record.task_id}


@pytest.mark.parametrize("seed", range(6))
def test_beat_order_on_random_tasks(config, seed):
    check_beat_order(config, random_tasks(seed, 2, 6))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(24, 48))
def test_beat_order_three_clusters(seed):
    check_beat_order(soc_config(**THREE), random_tasks(seed, 3, 10))


def test_wait_cycle_detection():
    assert find_wait_cycle({"a": {"b"}, "b": {"c"}}) is None
    assert sorted(find_wait_cycle({"a": {"b"}, "b": {"a"}, "c": {"a"}})) == ["a", "b"]
    assert find_wait_cycle({"x": {"x"}}) == ["x"]


def test_strongly_connected_components():
    graph = {1: [2], 2: [3], 3: [1, 4], 4: []}
    components = strongly_connected_components([1], lambda n: graph[n])
    assert sorted(sorted(c) for c in components) == [[1, 2, 3], [4]]
    assert components[0] == [4]
