"""Discrete-event loop with a single monotonic microsecond clock.

Virtual mode (default) advances time only when events run, so benchmark
scenarios are deterministic and wall-clock-free. Real-time mode anchors the
same microsecond timeline to the wall clock at construction: now_us() flows
continuously, events dispatch when due, and events posted from other
threads wake the loop.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable


class Handle:
    """Cancellation token for a scheduled callback."""

    __slots__ = ("at_us", "cancelled")

    def __init__(self, at_us: int):
        self.at_us = at_us
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class EventLoop:
    def __init__(self, realtime: bool = False, start_us: int = 0, speed: float = 1.0):
        self._now_us = start_us
        self._heap: list[tuple[int, int, Handle, Callable[[], None]]] = []
        self._tie = itertools.count()
        self._stopped = False
        self.realtime = realtime
        self.speed = speed
        self._cv = threading.Condition()
        self._rt_wall0 = time.monotonic() if realtime else 0.0
        self._rt_virt0 = start_us

    def now_us(self) -> int:
        if self.realtime:
            elapsed = (time.monotonic() - self._rt_wall0) * 1e6 * self.speed
            return self._rt_virt0 + int(elapsed)
        return self._now_us

    def call_at(self, at_us: int, fn: Callable[[], None]) -> Handle:
        at_us = max(at_us, self.now_us())
        handle = Handle(at_us)
        with self._cv:
            heapq.heappush(self._heap, (at_us, next(self._tie), handle, fn))
            self._cv.notify()
        return handle

    def call_later(self, delay_us: int, fn: Callable[[], None]) -> Handle:
        return self.call_at(self.now_us() + max(0, int(delay_us)), fn)

    def post(self, fn: Callable[[], None]) -> Handle:
        """Thread-safe immediate scheduling (real-time bridging)."""
        return self.call_at(self.now_us(), fn)

    def stop(self) -> None:
        with self._cv:
            self._stopped = True
            self._cv.notify()

    def _pop_due(self) -> tuple[Handle, Callable[[], None]] | None:
        with self._cv:
            while self._heap:
                at_us, _, handle, fn = heapq.heappop(self._heap)
                if handle.cancelled:
                    continue
                self._now_us = max(self._now_us, at_us)
                return handle, fn
        return None

    # -- virtual time ---------------------------------------------------------

    def run_until_idle(self, limit_us: int | None = None) -> None:
        """Drain the queue in timestamp order (virtual time).

        With `limit_us` set, stops once the clock would pass it, leaving
        later events queued.
        """
        self._stopped = False
        while not self._stopped:
            with self._cv:
                if not self._heap:
                    return
                at_us = self._heap[0][0]
                if limit_us is not None and at_us > limit_us:
                    self._now_us = max(self._now_us, limit_us)
                    return
            item = self._pop_due()
            if item is None:
                return
            _, fn = item
            fn()

    # -- wall-clock pacing ------------------------------------------------------

    def _wait_or_pop(self) -> tuple[Handle, Callable[[], None]] | str:
        with self._cv:
            if self._stopped:
                return "stopped"
            if not self._heap:
                self._cv.wait(timeout=0.1)
                return "retry"
            at_us = self._heap[0][0]
        delay_s = (at_us - self.now_us()) / (1e6 * self.speed)
        if delay_s > 0:
            with self._cv:
                if self._stopped:
                    return "stopped"
                self._cv.wait(timeout=min(delay_s, 0.1))
            return "retry"
        item = self._pop_due()
        return item if item is not None else "retry"

    def run_realtime_until(self, limit_us: int) -> None:
        """Paced run: returns once the clock passes limit_us or queue drains."""
        self._stopped = False
        while True:
            with self._cv:
                if self._stopped or not self._heap:
                    return
                if self._heap[0][0] > limit_us:
                    return
            result = self._wait_or_pop()
            if result == "stopped":
                return
            if result == "retry":
                continue
            result[1]()

    def run_realtime(self) -> None:
        """Paced run until stop(); an empty queue waits for posted events."""
        self._stopped = False
        while True:
            result = self._wait_or_pop()
            if result == "stopped":
                return
            if result == "retry":
                continue
            result[1]()
