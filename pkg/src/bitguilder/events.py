"""Deterministic discrete-event substrate for the network simulation.

Time is rational (exact), and events pop in (time, insertion sequence)
order, so two runs over the same inputs dequeue identically.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any

from .meadow import Rat

__all__ = ["Event", "EventQueue"]


@dataclass(order=True)
class Event:
    time: Rat
    seq: int
    payload: Any = field(compare=False)


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0

    def push(self, time: Rat, payload: Any) -> Event:
        if isinstance(time, int):
            time = Rat(time)
        event = Event(time=time, seq=self._seq, payload=payload)
        self._seq += 1
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)
