"""Per-actor behavior: the facet tree, endpoints, field dataflow, and
deterministic handler dispatch.

A facet owns fields, published assertions, and event handlers. Facets form a
tree that grows via ``react`` and shrinks via ``stop``. Assertions computed
from fields are withdrawn and re-deposited automatically when those fields
change. Boot bodies, handler bodies, and continuations all receive the
relevant :class:`Facet` as their first argument.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional

from .dataspace import (
    Assert,
    BootEvent,
    Message,
    MessageEvent,
    PatchEvent,
    Quit,
    Retract,
    Spawn,
)
from .values import (
    Pattern,
    check_linear,
    match,
    message_interest,
    observe,
    render,
    to_value,
)

log = logging.getLogger(__name__)


class DeadFieldAccess(RuntimeError):
    pass


class OutsideFacetContext(RuntimeError):
    pass


class Field:
    """A mutable cell owned by one facet. Call with no arguments to read,
    with one argument to write. Reads inside an assertion computation
    register a dataflow dependency."""

    __slots__ = ("actor", "owner", "_value", "dependents")

    def __init__(self, actor, owner, initial):
        self.actor = actor
        self.owner = owner
        self._value = initial
        self.dependents = set()

    def __call__(self, *args):
        if not self.owner.alive:
            raise DeadFieldAccess("field of dead facet %r" % (self.owner.id,))
        if not args:
            ep = self.actor._evaluating
            if ep is not None:
                ep.read_fields.add(self)
                self.dependents.add(ep)
            return self._value
        (new,) = args
        self._value = new
        for ep in list(self.dependents):
            self.actor._mark_dirty(ep)


class AssertEndpoint:
    __slots__ = ("facet", "compute", "current", "read_fields", "recompute_count")

    def __init__(self, facet, compute):
        self.facet = facet
        self.compute = compute  # zero-arg callable, or None for a constant
        self.current = None
        self.read_fields = set()
        self.recompute_count = 0

    def evaluate(self):
        actor = self.facet.actor
        for f in self.read_fields:
            f.dependents.discard(self)
        self.read_fields = set()
        prev = actor._evaluating
        actor._evaluating = self
        try:
            value = to_value(self.compute())
        finally:
            actor._evaluating = prev
        self.recompute_count += 1
        return value


class HandlerEndpoint:
    __slots__ = ("facet", "kind", "pattern", "fn", "interest")

    def __init__(self, facet, kind, pattern, fn):
        self.facet = facet
        self.kind = kind  # 'asserted' | 'retracted' | 'message'
        self.pattern = pattern
        self.fn = fn
        if kind == "message":
            self.interest = message_interest(pattern)
        else:
            self.interest = observe(pattern)


class Facet:
    """One node of an actor's behavior tree; also the context object handed
    to bodies and handlers."""

    def __init__(self, actor, fid, parent):
        self.actor = actor
        self.id = fid  # tuple of child indices from the root
        self.parent = parent
        self.children = []
        self.endpoints = []
        self.fields = []
        self.start_handlers = []
        self.stop_handlers = []
        self.alive = True
        self.started = False
        self._next_child = 0

    # -- endpoint installation ----------------------------------------------

    def _require_alive(self):
        if not self.alive:
            raise RuntimeError("endpoint added to dead facet %r" % (self.id,))

    def field(self, initial) -> Field:
        self._require_alive()
        f = Field(self.actor, self, initial)
        self.fields.append(f)
        return f

    def publish(self, spec) -> AssertEndpoint:
        """Add an assertion endpoint. A callable spec participates in
        field dataflow; anything else is a constant."""
        self._require_alive()
        ep = AssertEndpoint(self, spec if callable(spec) else lambda: spec)
        ep.current = ep.evaluate()
        self.endpoints.append(ep)
        self.actor._emit(Assert(ep.current))
        return ep

    def _handler(self, kind, pattern, fn):
        self._require_alive()
        check_linear(pattern)
        ep = HandlerEndpoint(self, kind, pattern, fn)
        self.endpoints.append(ep)
        self.actor._emit(Assert(ep.interest))
        return ep

    def on_asserted(self, pattern: Pattern, fn: Callable):
        return self._handler("asserted", pattern, fn)

    def on_retracted(self, pattern: Pattern, fn: Callable):
        return self._handler("retracted", pattern, fn)

    def on_message(self, pattern: Pattern, fn: Callable):
        return self._handler("message", pattern, fn)

    def on_start(self, fn: Callable):
        self._require_alive()
        if self.started:
            self.actor._run_body(self, fn)
        else:
            self.start_handlers.append(fn)

    def on_stop(self, fn: Callable):
        self._require_alive()
        self.stop_handlers.append(fn)

    # -- structure and actions ----------------------------------------------

    def react(self, body: Callable, *args) -> "Facet":
        self._require_alive()
        child = Facet(self.actor, self.id + (self._next_child,), self)
        self._next_child += 1
        self.children.append(child)
        self.actor._install(child, body, args)
        return child

    def stop(self, facet: Optional["Facet"] = None, continuation: Optional[Callable] = None):
        self.actor.stop_facet(facet if facet is not None else self, continuation)

    def send(self, v):
        self.actor._emit(Message(to_value(v)))

    def spawn(self, boot: Callable):
        self.actor._emit(Spawn(boot))

    def unique(self):
        return self.actor.ds.fresh_unique()


class Actor:
    """Facet runtime for one actor; plugs into the dataspace scheduler."""

    def __init__(self, ds, aid, boot):
        self.ds = ds
        self.aid = aid
        self.boot = boot
        self.root = None
        self.actions = []
        self._evaluating = None
        self._dirty = {}  # ordered set of AssertEndpoints
        self._stack = []
        self.stop_handlers_run = 0

    # -- scheduler interface ------------------------------------------------

    def handle_event(self, event):
        self.actions = []
        if isinstance(event, BootEvent):
            self.root = Facet(self, (), None)
            self._install(self.root, self.boot, ())
        elif isinstance(event, (PatchEvent, MessageEvent)):
            self._dispatch(event)
        else:
            raise TypeError("unknown event: %r" % (event,))
        return self.actions

    # -- context ------------------------------------------------------------

    def current_facet(self) -> Facet:
        if not self._stack:
            raise OutsideFacetContext("no facet body is executing")
        return self._stack[-1]

    def current_facet_id(self):
        return self.current_facet().id

    def _emit(self, action):
        self.actions.append(action)

    def _mark_dirty(self, ep):
        self._dirty[ep] = True

    # -- install / dispatch / teardown --------------------------------------

    def _run_body(self, facet, body, args=()):
        self._stack.append(facet)
        try:
            body(facet, *args)
        finally:
            self._stack.pop()
        self._refresh()

    def _install(self, facet, body, args):
        self._run_body(facet, body, args)
        facet.started = True
        for h in list(facet.start_handlers):
            if not facet.alive:
                break
            self._run_body(facet, h)

    def _dispatch(self, event):
        invocations = []

        def walk(f):
            for ep in f.endpoints:
                if not isinstance(ep, HandlerEndpoint):
                    continue
                if isinstance(event, PatchEvent):
                    if ep.kind == "asserted":
                        hay = event.patch.added
                    elif ep.kind == "retracted":
                        hay = event.patch.removed
                    else:
                        continue
                    for v in hay:
                        b = match(ep.pattern, v)
                        if b is not None:
                            invocations.append((ep, b))
                elif isinstance(event, MessageEvent) and ep.kind == "message":
                    b = match(ep.pattern, event.v)
                    if b is not None:
                        invocations.append((ep, b))
            for c in f.children:
                walk(c)

        walk(self.root)
        for ep, bindings in invocations:
            if not ep.facet.alive:
                continue
            self._run_body(ep.facet, ep.fn, (bindings,))

    def _refresh(self):
        """Recompute dirty assertions; emit retract/assert pairs on change."""
        while self._dirty:
            ep = next(iter(self._dirty))
            del self._dirty[ep]
            if not ep.facet.alive:
                continue
            new = ep.evaluate()
            if new != ep.current:
                self._emit(Retract(ep.current))
                self._emit(Assert(new))
                ep.current = new

    def stop_facet(self, facet: Facet, continuation: Optional[Callable] = None):
        if not facet.alive:
            log.warning("actor %d: stop of dead facet %r is a no-op", self.aid, facet.id)
            return
        parent = facet.parent

        def run_stop_handlers(f):
            for c in list(f.children):
                run_stop_handlers(c)
            for h in f.stop_handlers:
                self.stop_handlers_run += 1
                self._run_body(f, h)

        def teardown(f):
            for c in f.children:
                teardown(c)
            f.alive = False
            for ep in f.endpoints:
                if isinstance(ep, AssertEndpoint):
                    self._emit(Retract(ep.current))
                else:
                    self._emit(Retract(ep.interest))
            f.children = []
            f.endpoints = []

        run_stop_handlers(facet)
        teardown(facet)
        if parent is not None:
            parent.children.remove(facet)
        if continuation is not None:
            self._run_body(parent if parent is not None else facet, continuation)
        if facet is self.root:
            self._emit(Quit())

    def stop_actor(self):
        """Orderly shutdown: stop the root facet (stop handlers run)."""
        if self.root is not None and self.root.alive:
            self.stop_facet(self.root)


def render_tree(actor: Actor) -> str:
    """Indent-per-depth text rendering of the live facet tree."""
    lines = []

    def describe(ep):
        if isinstance(ep, AssertEndpoint):
            return "assert %s" % render(ep.current)
        return "on %s %s" % (ep.kind, render(ep.interest.fields[0]))

    def walk(f, depth):
        fid = "/".join(map(str, f.id)) or "root"
        lines.append("  " * depth + fid)
        for ep in f.endpoints:
            lines.append("  " * (depth + 1) + describe(ep))
        for c in f.children:
            walk(c, depth + 1)

    if actor.root is not None and actor.root.alive:
        walk(actor.root, 0)
    return "\n".join(lines)
