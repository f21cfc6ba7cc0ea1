from __future__ import annotations

import queue
import threading
from dataclasses import dataclass
from typing import Generic, Iterator, Optional, TypeVar

from Nets.Networks import ParamSet

T = TypeVar("T")


class TrajectoryQueue(Generic[T]):
    """Bounded multi-producer / single-consumer queue; producers block when full."""

    def __init__(self, maxsize: int = 64) -> None:
        self._queue: queue.Queue[T] = queue.Queue(maxsize=max(1, maxsize))

    def put(self, item: T, stop: Optional[threading.Event] = None, poll: float = 0.1) -> bool:
        """Block until there is room; give up (False) once `stop` is set."""
        while True:
            try:
                self._queue.put(item, timeout=poll)
                return True
            except queue.Full:
                if stop is not None and stop.is_set():
                    return False

    def get(self, timeout: float = 0.1) -> T | None:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self) -> Iterator[T]:
        """Items left in the queue, without blocking."""
        while True:
            try:
                yield self._queue.get_nowait()
            except queue.Empty:
                return

    def full(self) -> bool:
        return self._queue.full()


@dataclass(frozen=True)
class ParamSnapshot:
    version: int
    params: ParamSet


class ParamBroadcast:
    """Learner -> actors parameter channel: an atomically swapped immutable snapshot."""

    def __init__(self, params: ParamSet, version: int = 0) -> None:
        self._lock = threading.Lock()
        self._snapshot = ParamSnapshot(version, params.copy())

    def publish(self, params: ParamSet) -> ParamSnapshot:
        frozen = params.copy()
        with self._lock:
            self._snapshot = ParamSnapshot(self._snapshot.version + 1, frozen)
            return self._snapshot

    def restore(self, snapshot: ParamSnapshot) -> None:
        with self._lock:
            self._snapshot = snapshot

    def latest(self) -> ParamSnapshot:
        with self._lock:
            return self._snapshot
