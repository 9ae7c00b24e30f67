"""Deterministic discrete-event simulator and seeded lossy links.

Everything time-dependent in the edge runtime is written against the small
``Scheduler`` interface below, so the same runtime code runs under simulated
time (bit-reproducible tests, the e2e sim) and wall-clock time (live nodes).
"""

from __future__ import annotations

import heapq
import threading
import time

from .rng import Rng


class Handle:
    """Cancelable reference to a scheduled callback."""

    __slots__ = ("cancelled",)

    def __init__(self):
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class SimNet:
    """Event heap ordered by (time, insertion sequence); single-threaded."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self.now = 0.0

    def at(self, when: float, fn) -> Handle:
        if when < self.now:
            raise ValueError(f"cannot schedule at {when} before now={self.now}")
        handle = Handle()
        heapq.heappush(self._heap, (when, self._seq, fn, handle))
        self._seq += 1
        return handle

    def after(self, delay: float, fn) -> Handle:
        return self.at(self.now + delay, fn)

    def pending(self) -> int:
        return sum(1 for (_, _, _, h) in self._heap if not h.cancelled)

    def run(self, until: float | None = None, max_events: int = 1_000_000) -> int:
        """Process events in order; returns the number executed."""
        executed = 0
        while self._heap and executed < max_events:
            when, _, fn, handle = self._heap[0]
            if until is not None and when > until:
                break
            heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self.now = when
            fn()
            executed += 1
        if until is not None and until > self.now:
            self.now = until
        return executed


class SimScheduler:
    """Scheduler facade over a SimNet instance."""

    def __init__(self, net: SimNet):
        self._net = net

    def now(self) -> float:
        return self._net.now

    def call_later(self, delay: float, fn) -> Handle:
        return self._net.after(delay, fn)


class LiveScheduler:
    """Wall-clock scheduler: one worker thread runs all callbacks in order.

    Mirrors SimNet's sequencing guarantee, so runtime code holds the same
    single-threaded view of its own state in both modes.
    """

    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self._cond = threading.Condition()
        self._closed = False
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def now(self) -> float:
        return time.monotonic()

    def call_later(self, delay: float, fn) -> Handle:
        handle = Handle()
        with self._cond:
            heapq.heappush(self._heap, (time.monotonic() + max(0.0, delay),
                                        self._seq, fn, handle))
            self._seq += 1
            self._cond.notify()
        return handle

    def _loop(self) -> None:
        while True:
            with self._cond:
                while not self._closed and (
                        not self._heap or self._heap[0][0] > time.monotonic()):
                    if self._heap:
                        self._cond.wait(max(0.0, self._heap[0][0] - time.monotonic()))
                    else:
                        self._cond.wait()
                if self._closed:
                    return
                _, _, fn, handle = heapq.heappop(self._heap)
            if not handle.cancelled:
                try:
                    fn()
                except Exception:  # callbacks must never kill the loop
                    pass

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify()
        self._thread.join(timeout=5.0)


class LossyLink:
    """Unidirectional frame pipe with seeded drops and latency jitter."""

    def __init__(self, net: SimNet, seed: int, drop_rate: float = 0.0,
                 latency: float = 0.01, jitter: float = 0.0, name: str = "link"):
        if not 0.0 <= drop_rate < 1.0:
            raise ValueError("drop_rate must be in [0, 1)")
        self._net = net
        self._rng = Rng(seed)
        self.drop_rate = drop_rate
        self.latency = latency
        self.jitter = jitter
        self.name = name
        self.receiver = None
        self.sent = 0
        self.dropped = 0
        self.delivered = 0

    def connect(self, receiver) -> None:
        self.receiver = receiver

    def send(self, raw: bytes) -> None:
        if self.receiver is None:
            raise RuntimeError(f"{self.name}: no receiver connected")
        self.sent += 1
        if self._rng.random() < self.drop_rate:
            self.dropped += 1
            return
        delay = self.latency + self.jitter * self._rng.random()

        def deliver(raw=raw):
            self.delivered += 1
            self.receiver(raw)

        self._net.after(delay, deliver)
