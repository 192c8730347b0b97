"""Packet buffers with arrival timestamps.

Two representations share one set of semantics:

* :class:`PacketQueue` is a single FIFO, used by the scalar operations below.
* :class:`QueueBank` stores many FIFOs as ring-free arrays so a slot can touch
  every queue with a handful of numpy calls. The engine runs on it.

Delay convention: a packet stamped ``a`` and delivered in slot ``s`` has delay
``s - a + 1``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError


@dataclass(frozen=True)
class Packet:
    arrival_slot: int

    def __post_init__(self):
        if self.arrival_slot < 0:
            raise ParameterError("arrival_slot must be >= 0")


@dataclass(frozen=True)
class TrafficRates:
    xi_ul: float = 0.05
    xi_dl: float = 0.10

    def __post_init__(self):
        for name in ("xi_ul", "xi_dl"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class PacketQueue:
    packets: deque = field(default_factory=deque)
    total_arrivals: int = 0
    total_delivered: int = 0
    sum_delivered_delay: int = 0

    def __len__(self):
        return len(self.packets)

    def check(self):
        assert self.total_arrivals == self.total_delivered + len(self.packets)
        assert self.sum_delivered_delay >= self.total_delivered


def maybe_arrive(queue: PacketQueue, rate: float, slot: int, rng) -> PacketQueue:
    """Bernoulli(``rate``) arrival stamped with ``slot``. Mutates and returns ``queue``."""
    if not 0.0 <= rate <= 1.0:
        raise ParameterError(f"arrival rate must lie in [0, 1], got {rate}")
    if rng.random() < rate:
        queue.packets.append(Packet(slot))
        queue.total_arrivals += 1
    return queue


def complete_head(queue: PacketQueue, slot: int):
    """ACK the head packet; returns ``(queue, delay)``."""
    if not queue.packets:
        raise IndexError("complete_head on an empty queue")
    head = queue.packets.popleft()
    delay = slot - head.arrival_slot + 1
    queue.total_delivered += 1
    queue.sum_delivered_delay += delay
    return queue, delay


def queue_len(queue: PacketQueue) -> int:
    return len(queue.packets)


class QueueBank:
    """``n`` FIFO queues of arrival stamps, at most one arrival per queue per call.

    Each queue owns a row of ``capacity`` slots; ``head``/``tail`` index into it.
    Rows never wrap, so ``capacity`` must cover every arrival the queue will see
    (one per slot is enough for a fixed horizon).
    """

    def __init__(self, n: int, capacity: int):
        self.buf = np.zeros((n, capacity), dtype=np.int64)
        self.head = np.zeros(n, dtype=np.int64)
        self.tail = np.zeros(n, dtype=np.int64)
        self.total_delivered = np.zeros(n, dtype=np.int64)
        self.sum_delivered_delay = np.zeros(n, dtype=np.int64)

    def __len__(self):
        return self.head.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return self.tail - self.head

    @property
    def total_arrivals(self) -> np.ndarray:
        return self.tail.copy()

    def arrive(self, mask, slot: int):
        """Append one packet stamped ``slot`` to every queue where ``mask`` holds."""
        idx = np.flatnonzero(mask)
        if idx.size:
            if np.any(self.tail[idx] >= self.buf.shape[1]):
                raise OverflowError("QueueBank capacity exceeded")
            self.buf[idx, self.tail[idx]] = slot
            self.tail[idx] += 1
        return idx

    def complete_head(self, idx, slot: int):
        """Pop the head of each queue in ``idx``; returns ``(arrival_slots, delays)``."""
        idx = np.asarray(idx, dtype=np.int64)
        if np.any(self.head[idx] >= self.tail[idx]):
            raise IndexError("complete_head on an empty queue")
        arrivals = self.buf[idx, self.head[idx]]
        delays = slot - arrivals + 1
        self.head[idx] += 1
        # idx has no duplicates within one slot (one link per queue)
        self.total_delivered[idx] += 1
        self.sum_delivered_delay[idx] += delays
        return arrivals, delays

    def check(self):
        assert np.all(self.tail == self.total_delivered + self.lengths)
        assert np.all(self.sum_delivered_delay >= self.total_delivered)
        assert np.all(self.lengths >= 0)
