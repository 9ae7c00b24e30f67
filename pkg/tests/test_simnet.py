"""Discrete-event scheduler, live scheduler, and lossy links."""

import threading
import time

import pytest

from farmlight.simnet import Handle, LiveScheduler, LossyLink, SimNet, SimScheduler


def test_events_run_in_time_order():
    net = SimNet()
    out = []
    net.at(3.0, lambda: out.append("c"))
    net.at(1.0, lambda: out.append("a"))
    net.at(2.0, lambda: out.append("b"))
    assert net.run() == 3
    assert out == ["a", "b", "c"]
    assert net.now == 3.0


def test_same_time_events_keep_insertion_order():
    net = SimNet()
    out = []
    for tag in "abcdef":
        net.at(5.0, lambda t=tag: out.append(t))
    net.run()
    assert out == list("abcdef")


def test_after_is_relative_to_now():
    net = SimNet()
    times = []
    net.at(2.0, lambda: net.after(0.5, lambda: times.append(net.now)))
    net.run()
    assert times == [2.5]


def test_scheduling_in_the_past_rejected():
    net = SimNet()
    net.at(4.0, lambda: None)
    net.run()
    with pytest.raises(ValueError):
        net.at(3.0, lambda: None)


def test_cancel_prevents_execution():
    net = SimNet()
    out = []
    handle = net.at(1.0, lambda: out.append("cancelled"))
    net.at(2.0, lambda: out.append("kept"))
    assert net.pending() == 2
    handle.cancel()
    assert net.pending() == 1
    net.run()
    assert out == ["kept"]


def test_run_until_stops_and_advances_clock():
    net = SimNet()
    out = []
    net.at(1.0, lambda: out.append(1))
    net.at(5.0, lambda: out.append(5))
    assert net.run(until=2.0) == 1
    assert out == [1]
    assert net.now == 2.0  # clock advances to the horizon even with no event there
    assert net.run() == 1
    assert out == [1, 5]


def test_run_max_events_bounds_livelock():
    net = SimNet()

    def rearm():
        net.after(0.001, rearm)

    net.after(0.0, rearm)
    assert net.run(max_events=100) == 100


def test_sim_scheduler_facade():
    net = SimNet()
    sched = SimScheduler(net)
    seen = []
    sched.call_later(1.5, lambda: seen.append(sched.now()))
    assert sched.now() == 0.0
    net.run()
    assert seen == [1.5]


# ------------------------------------------------------------ LiveScheduler

def test_live_scheduler_runs_and_orders_callbacks():
    sched = LiveScheduler()
    try:
        done = threading.Event()
        out = []
        sched.call_later(0.02, lambda: out.append("late"))
        sched.call_later(0.0, lambda: out.append("early"))
        sched.call_later(0.04, done.set)
        assert done.wait(timeout=5.0)
        assert out == ["early", "late"]
    finally:
        sched.close()


def test_live_scheduler_cancel_and_exception_isolation():
    sched = LiveScheduler()
    try:
        done = threading.Event()
        out = []
        handle = sched.call_later(0.01, lambda: out.append("no"))
        handle.cancel()
        sched.call_later(0.01, lambda: 1 / 0)  # must not kill the worker
        sched.call_later(0.03, lambda: (out.append("yes"), done.set()))
        assert done.wait(timeout=5.0)
        assert out == ["yes"]
    finally:
        sched.close()


def test_live_scheduler_close_stops_pending_work():
    sched = LiveScheduler()
    out = []
    sched.call_later(60.0, lambda: out.append("never"))
    sched.close()
    assert out == []


def test_live_scheduler_now_is_monotonic():
    sched = LiveScheduler()
    try:
        a = sched.now()
        time.sleep(0.005)
        assert sched.now() > a
    finally:
        sched.close()


# ---------------------------------------------------------------- LossyLink

def test_link_requires_receiver_and_valid_drop_rate():
    net = SimNet()
    with pytest.raises(ValueError):
        LossyLink(net, seed=1, drop_rate=1.0)
    link = LossyLink(net, seed=1)
    with pytest.raises(RuntimeError):
        link.send(b"x")


def test_reliable_link_delivers_everything_in_latency_window():
    net = SimNet()
    link = LossyLink(net, seed=3, drop_rate=0.0, latency=0.25, jitter=0.5)
    arrivals = []
    link.connect(lambda raw: arrivals.append((net.now, raw)))
    for i in range(100):
        link.send(bytes([i]))
    net.run()
    assert link.sent == 100 and link.dropped == 0 and link.delivered == 100
    # Jitter may reorder frames; every payload still arrives, inside the window.
    assert sorted(raw for _, raw in arrivals) == [bytes([i]) for i in range(100)]
    for when, _ in arrivals:
        assert 0.25 <= when <= 0.75  # latency + jitter bound


def test_zero_jitter_link_preserves_send_order():
    net = SimNet()
    link = LossyLink(net, seed=3, drop_rate=0.0, latency=0.1, jitter=0.0)
    arrivals = []
    link.connect(arrivals.append)
    for i in range(100):
        link.send(bytes([i]))
    net.run()
    assert arrivals == [bytes([i]) for i in range(100)]


def test_lossy_link_drop_rate_and_determinism():
    def run(seed):
        net = SimNet()
        link = LossyLink(net, seed=seed, drop_rate=0.2, latency=0.01)
        got = []
        link.connect(got.append)
        for i in range(2000):
            link.send(i.to_bytes(2, "big"))
        net.run()
        return link, got

    link_a, got_a = run(seed=9)
    link_b, got_b = run(seed=9)
    assert got_a == got_b  # same seed, same drops
    assert link_a.dropped == link_b.dropped
    assert 0.15 < link_a.dropped / link_a.sent < 0.25
    _, got_c = run(seed=10)
    assert got_c != got_a  # different seed, different pattern


def test_link_counters_add_up():
    net = SimNet()
    link = LossyLink(net, seed=4, drop_rate=0.5, latency=0.0)
    link.connect(lambda raw: None)
    for _ in range(500):
        link.send(b"p")
    net.run()
    assert link.sent == 500
    assert link.dropped + link.delivered == 500
