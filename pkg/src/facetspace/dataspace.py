"""The shared medium: owner-tracked assertion bag, set-view routing,
message broadcast, actor lifecycle, and the deterministic turn scheduler.

One logical thread of control runs everything. Each turn delivers one event
to one actor, collects the actions it emits, applies them atomically, and
routes the resulting appearance/disappearance patch to interested actors.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .values import (
    MESSAGE,
    OBSERVE,
    MalformedPatternEncoding,
    Pattern,
    Record,
    Value,
    decode,
    match,
    render,
)

log = logging.getLogger(__name__)


class MaxTurnsExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Actions and events

@dataclass(frozen=True)
class Assert:
    v: Value


@dataclass(frozen=True)
class Retract:
    v: Value


@dataclass(frozen=True)
class Message:
    v: Value


@dataclass
class Spawn:
    boot: Callable
    child: Optional[int] = None  # filled in when the action is applied


@dataclass(frozen=True)
class Quit:
    pass


@dataclass(frozen=True)
class Patch:
    added: tuple
    removed: tuple

    def is_empty(self):
        return not self.added and not self.removed


@dataclass(frozen=True)
class PatchEvent:
    patch: Patch


@dataclass(frozen=True)
class MessageEvent:
    v: Value


@dataclass(frozen=True)
class BootEvent:
    pass


def render_event(ev) -> str:
    if isinstance(ev, BootEvent):
        return "(boot)"
    if isinstance(ev, MessageEvent):
        return "(message %s)" % render(ev.v)
    if isinstance(ev, PatchEvent):
        added = " ".join(render(v) for v in ev.patch.added)
        removed = " ".join(render(v) for v in ev.patch.removed)
        return "(patch (added%s) (removed%s))" % (
            " " + added if added else "",
            " " + removed if removed else "",
        )
    raise TypeError(ev)


def render_action(a) -> str:
    if isinstance(a, Assert):
        return "(assert %s)" % render(a.v)
    if isinstance(a, Retract):
        return "(retract %s)" % render(a.v)
    if isinstance(a, Message):
        return "(send %s)" % render(a.v)
    if isinstance(a, Spawn):
        return "(spawn %d)" % (a.child if a.child is not None else -1)
    if isinstance(a, Quit):
        return "(quit)"
    raise TypeError(a)


@dataclass
class TurnRecord:
    turn: int
    actor: int
    event: object
    actions: list
    crashed: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "turn": self.turn,
                "actor": self.actor,
                "event": render_event(self.event),
                "actions": [render_action(a) for a in self.actions],
                "crashed": self.crashed,
            },
            separators=(",", ":"),
        )


# ---------------------------------------------------------------------------
# Dataspace

class _Interest:
    __slots__ = ("count", "pattern")

    def __init__(self, pattern):
        self.count = 0
        self.pattern = pattern


class Dataspace:
    """A dataspace and its deterministic FIFO turn scheduler.

    Behaviors are either facet boot callables (see facets.Actor) or any
    object with a ``handle_event(event) -> list of actions`` method.
    """

    def __init__(self, seed: int = 0, trace_sink=None):
        self.seed = seed
        self.trace_sink = trace_sink  # file-like; gets one JSON line per turn
        self.bag: dict = {}  # Value -> {actor id -> count}
        self.actors: dict = {}  # actor id -> runtime or None once terminated
        self.interests: dict = {}  # actor id -> {observe Value -> _Interest}
        self.visible: dict = {}  # actor id -> set of Values notified present
        self.queue: deque = deque()
        self.trace: list = []
        self.clock = None  # installed by the timer driver, if any
        self.timer_registry = None
        self._next_actor = 0
        self._next_unique = 0
        self._turn = 0

    # -- allocation ---------------------------------------------------------

    def fresh_unique(self):
        from .values import Unique

        u = Unique(self._next_unique)
        self._next_unique += 1
        return u

    def spawn(self, boot) -> int:
        aid = self._next_actor
        self._next_actor += 1
        self.actors[aid] = self._make_runtime(aid, boot)
        self.interests[aid] = {}
        self.visible[aid] = set()
        self.queue.append((aid, BootEvent()))
        return aid

    def _make_runtime(self, aid, boot):
        if hasattr(boot, "handle_event"):
            return boot
        from .facets import Actor

        return Actor(self, aid, boot)

    # -- introspection ------------------------------------------------------

    def query(self, p: Pattern) -> list:
        """All present values matching p, in bag (insertion) order."""
        return [v for v, per in self.bag.items() if sum(per.values()) > 0 and match(p, v) is not None]

    def total_count(self, v: Value) -> int:
        return sum(self.bag.get(v, {}).values())

    def is_alive(self, aid: int) -> bool:
        return self.actors.get(aid) is not None

    def pending(self) -> bool:
        return any(self.is_alive(aid) for aid, _ in self.queue)

    # -- external inputs (serialized inbox) ---------------------------------

    def inject_message(self, v: Value):
        """External message broadcast; enters between turns."""
        for aid, ev in self._message_deliveries(v):
            self.queue.append((aid, ev))

    # -- the turn engine ----------------------------------------------------

    def run_turn(self) -> TurnRecord:
        while self.queue and not self.is_alive(self.queue[0][0]):
            self.queue.popleft()
        if not self.queue:
            raise RuntimeError("run_turn on a quiescent dataspace")
        aid, event = self.queue.popleft()
        runtime = self.actors[aid]
        crashed = False
        try:
            actions = list(runtime.handle_event(event))
        except Exception:
            log.warning("actor %d crashed handling %s", aid, render_event(event), exc_info=True)
            crashed = True
            actions = []

        deliveries = []
        if crashed:
            patch = self._terminate(aid)
            deliveries.extend(self._patch_deliveries(patch, []))
        else:
            patch, messages, boots, quit_requested, new_interests = self._apply(aid, actions)
            deliveries.extend(self._patch_deliveries(patch, new_interests))
            deliveries.extend(messages)
            deliveries.extend(boots)
            if quit_requested:
                final_patch = self._terminate(aid)
                deliveries.extend(self._patch_deliveries(final_patch, []))
        self.queue.extend(deliveries)

        record = TurnRecord(self._turn, aid, event, actions, crashed)
        self._turn += 1
        self.trace.append(record)
        if self.trace_sink is not None:
            self.trace_sink.write(record.to_json() + "\n")
        return record

    def run_until_quiescent(self, max_turns: int = 10000) -> list:
        done = []
        while self.pending():
            if len(done) >= max_turns:
                raise MaxTurnsExceeded("no quiescence after %d turns" % max_turns)
            done.append(self.run_turn())
        return done

    # -- action application -------------------------------------------------

    def _bump(self, aid, v, delta, old_totals):
        per = self.bag.setdefault(v, {})
        if v not in old_totals:
            old_totals[v] = sum(per.values())
        have = per.get(aid, 0)
        if delta < 0 and have == 0:
            log.warning("actor %d retracts unheld assertion %s", aid, render(v))
            return
        per[aid] = have + delta
        if per[aid] == 0:
            del per[aid]
        self._note_interest(aid, v, delta)

    def _note_interest(self, aid, v, delta):
        if not (isinstance(v, Record) and v.label == OBSERVE and len(v.fields) == 1):
            return
        table = self.interests[aid]
        entry = table.get(v)
        if entry is None:
            if delta < 0:
                return
            try:
                pattern = decode(v.fields[0])
            except MalformedPatternEncoding:
                log.warning("actor %d asserted malformed interest %s", aid, render(v))
                return
            entry = table[v] = _Interest(pattern)
        entry.count += delta
        if entry.count <= 0:
            del table[v]

    def _apply(self, aid, actions):
        old_totals: dict = {}
        interests_before = set(self.interests[aid])
        messages = []
        boots = []
        quit_requested = False
        for a in actions:
            if isinstance(a, Assert):
                self._bump(aid, a.v, 1, old_totals)
            elif isinstance(a, Retract):
                self._bump(aid, a.v, -1, old_totals)
            elif isinstance(a, Message):
                messages.extend(self._message_deliveries(a.v))
            elif isinstance(a, Spawn):
                a.child = self.spawn(a.boot)
                boots.append(self.queue.pop())  # re-order after patches/messages
            elif isinstance(a, Quit):
                quit_requested = True
            else:
                raise TypeError("not an action: %r" % (a,))
        added, removed = [], []
        for v, old in old_totals.items():
            new = sum(self.bag.get(v, {}).values())
            if old == 0 and new > 0:
                added.append(v)
            elif old > 0 and new == 0:
                removed.append(v)
        new_interests = [
            (aid, e.pattern)
            for k, e in self.interests[aid].items()
            if k not in interests_before
        ]
        return Patch(tuple(added), tuple(removed)), messages, boots, quit_requested, new_interests

    def _message_deliveries(self, v):
        wrapper = Record(MESSAGE, (v,))
        out = []
        for aid in sorted(self.actors):
            if not self.is_alive(aid):
                continue
            if any(match(e.pattern, wrapper) is not None for e in self.interests[aid].values()):
                out.append((aid, MessageEvent(v)))
        return out

    def _terminate(self, aid) -> Patch:
        """Remove all of an actor's bag contributions; drop its runtime."""
        old_totals: dict = {}
        for v in list(self.bag):
            per = self.bag[v]
            if per.get(aid):
                old_totals[v] = sum(per.values())
                del per[aid]
        removed = [v for v, old in old_totals.items() if old > 0 and sum(self.bag.get(v, {}).values()) == 0]
        self.actors[aid] = None
        self.interests[aid] = {}
        self.visible[aid] = set()
        self.queue = deque((a, e) for a, e in self.queue if a != aid)
        return Patch((), tuple(removed))

    # -- routing ------------------------------------------------------------

    def _patch_deliveries(self, patch: Patch, new_interests) -> list:
        """Per-actor filtered patch events for one turn's global patch.

        Each actor's visible set enforces the per-observer alternation of
        appearance/disappearance notifications; new interests trigger a
        synthetic initial patch of already-present matching values, which is
        delivered before the turn's regular patch.
        """
        fresh: dict = {}
        for aid, p in new_interests:
            fresh.setdefault(aid, []).append(p)
        out = []
        for aid in sorted(self.actors):
            if not self.is_alive(aid):
                continue
            pats = [e.pattern for e in self.interests[aid].values()]
            vis = self.visible[aid]
            vis = {v for v in vis if any(match(p, v) is not None for p in pats)}
            f_removed = tuple(v for v in patch.removed if v in vis)
            f_added = tuple(
                v
                for v in patch.added
                if v not in vis and any(match(p, v) is not None for p in pats)
            )
            init_added = tuple(
                v
                for v in self.bag
                if sum(self.bag[v].values()) > 0
                and v not in vis
                and v not in f_added
                and any(match(p, v) is not None for p in fresh.get(aid, []))
            )
            if init_added:
                out.append((aid, PatchEvent(Patch(init_added, ()))))
                vis |= set(init_added)
            if f_added or f_removed:
                out.append((aid, PatchEvent(Patch(f_added, f_removed))))
                vis = (vis - set(f_removed)) | set(f_added)
            self.visible[aid] = vis
        return out
