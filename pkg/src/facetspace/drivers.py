"""The timer driver and its clock.

The driver is an ordinary actor: clients assert ``(set-timer id delay)``,
the driver asserts ``(timer-expired id)`` once the deadline passes, and the
expiry is withdrawn automatically when the request disappears. In virtual
mode, time only moves via :func:`advance_virtual_time`, which makes timer
behavior fully deterministic.
"""

from __future__ import annotations

import logging
import time

from .forms import during
from .values import Integer, cap, rec, rpat

log = logging.getLogger(__name__)


class NotQuiescent(RuntimeError):
    pass


class WallClockMode(RuntimeError):
    pass


class Clock:
    def __init__(self, mode: str = "virtual"):
        if mode not in ("virtual", "wall"):
            raise ValueError(mode)
        self.mode = mode
        self._now = 0
        self._wall_base = time.monotonic()

    @property
    def now(self) -> int:
        if self.mode == "wall":
            return int((time.monotonic() - self._wall_base) * 1000)
        return self._now


class _TimerEntry:
    __slots__ = ("tid", "deadline", "facet", "fired", "seq")

    def __init__(self, tid, deadline, facet, seq):
        self.tid = tid
        self.deadline = deadline
        self.facet = facet
        self.fired = False
        self.seq = seq


_TICK = rpat("clock-tick", cap("now"))
_REQUEST = rpat("set-timer", cap("id"), cap("delay"))


def timer_driver_boot(clock: Clock, registry: list):
    """Boot body for the timer driver; uses only the public facet API."""
    seq_counter = [0]

    def boot(f):
        def request_body(cf, b):
            delay = b["delay"]
            if not isinstance(delay, Integer) or delay.n <= 0:
                log.warning("timer request ignored: bad delay %r", delay)
                return
            entry = _TimerEntry(b["id"], clock.now + delay.n, cf, seq_counter[0])
            seq_counter[0] += 1
            registry.append(entry)
            cf.on_stop(lambda _f: registry.remove(entry))

        during(f, _REQUEST, request_body)

        def on_tick(hf, b):
            now = b["now"].n
            due = sorted(
                (e for e in registry if not e.fired and e.deadline <= now),
                key=lambda e: (e.deadline, e.seq),
            )
            for e in due:
                e.fired = True
                e.facet.react(lambda cf, e=e: cf.publish(rec("timer-expired", e.tid)))

        f.on_message(_TICK, on_tick)

    return boot


def spawn_timer_driver(ds, clock: Clock = None) -> int:
    if ds.timer_registry is not None:
        raise RuntimeError("dataspace already has a timer driver")
    clock = clock if clock is not None else Clock()
    registry: list = []
    ds.clock = clock
    ds.timer_registry = registry
    return ds.spawn(timer_driver_boot(clock, registry))


def advance_virtual_time(ds, delta_ms: int, max_turns: int = 100000):
    """Advance virtual time, firing due timers as ordinary turns in deadline
    order; returns once quiescent at the new time."""
    clock = ds.clock
    if clock is None or clock.mode != "virtual":
        raise WallClockMode("virtual-time advancement needs a virtual clock")
    if ds.pending():
        raise NotQuiescent("dataspace has undelivered events")
    target = clock._now + delta_ms
    while True:
        due = [e for e in ds.timer_registry if not e.fired and e.deadline <= target]
        if not due:
            break
        clock._now = max(clock._now, min(e.deadline for e in due))
        ds.inject_message(rec("clock-tick", clock._now))
        ds.run_until_quiescent(max_turns)
    clock._now = target


def fire_due_wall_timers(ds, max_turns: int = 100000):
    """Wall-mode pump: fire timers due at the current wall time."""
    if ds.clock is None or ds.clock.mode != "wall":
        raise WallClockMode("not in wall mode")
    ds.inject_message(rec("clock-tick", ds.clock.now))
    ds.run_until_quiescent(max_turns)
