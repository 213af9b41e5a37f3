import pytest

from conftest import drive_cmd, named_puppet_boot, spawn_recorder
from facetspace import Dataspace, cap, lit, rec, rpat, sym
from facetspace.facets import DeadFieldAccess, OutsideFacetContext, render_tree
from facetspace.market import bank_account_boot


def quiesce(ds):
    ds.run_until_quiescent()


def test_publish_constant():
    ds = Dataspace()
    r = spawn_recorder(ds, rpat("price", cap("p")))
    ds.spawn(lambda f: f.publish(rec("price", 40)))
    quiesce(ds)
    assert r.events == [("+", rec("price", 40))]


def test_stop_actor_from_handler_runs_stop_handlers():
    ds = Dataspace()
    order = []

    def boot(f):
        f.publish(rec("flag"))
        f.on_stop(lambda sf: order.append("stopped"))
        f.on_message(rpat("shutdown"), lambda hf, b: hf.actor.stop_actor())

    aid = ds.spawn(boot)
    quiesce(ds)
    ds.inject_message(rec("shutdown"))
    quiesce(ds)
    assert order == ["stopped"]
    assert not ds.is_alive(aid)
    assert ds.query(lit(rec("flag"))) == []


def test_field_dataflow_retract_assert_pair():
    ds = Dataspace()
    r = spawn_recorder(ds, rpat("balance", cap("n")))
    cell = {}

    def boot(f):
        bal = f.field(100)
        cell["bal"] = bal
        cell["ep"] = f.publish(lambda: rec("balance", bal()))
        f.on_message(rpat("deposit", cap("amt")), lambda hf, b: bal(bal() + b["amt"].n))

    ds.spawn(boot)
    quiesce(ds)
    assert r.events == [("+", rec("balance", 100))]
    ds.inject_message(rec("deposit", 30))
    quiesce(ds)
    # one atomic patch carries both sides of the change
    last = r.patches[-1].patch
    assert last.added == (rec("balance", 130),)
    assert last.removed == (rec("balance", 100),)
    assert cell["ep"].recompute_count == 2


def test_field_write_without_change_still_recomputes_but_no_patch():
    ds = Dataspace()
    r = spawn_recorder(ds, rpat("balance", cap("n")))

    def boot(f):
        bal = f.field(100)
        f.publish(lambda: rec("balance", bal()))
        f.on_message(rpat("touch"), lambda hf, b: bal(100))

    ds.spawn(boot)
    quiesce(ds)
    ds.inject_message(rec("touch"))
    quiesce(ds)
    assert r.events == [("+", rec("balance", 100))]


def test_dead_field_access_raises():
    ds = Dataspace()
    cell = {}

    def boot(f):
        child = f.react(lambda cf: cell.__setitem__("fld", cf.field(1)))
        f.stop(child)

    ds.spawn(boot)
    quiesce(ds)
    with pytest.raises(DeadFieldAccess):
        cell["fld"]()


def test_current_facet_outside_context():
    ds = Dataspace()
    got = {}

    def boot(f):
        got["actor"] = f.actor

    ds.spawn(boot)
    quiesce(ds)
    with pytest.raises(OutsideFacetContext):
        got["actor"].current_facet()


def test_on_start_ordering_and_immediate_run_when_started():
    ds = Dataspace()
    order = []

    def boot(f):
        f.on_start(lambda sf: order.append("start"))
        order.append("body")

    def late(f):
        pass

    ds.spawn(boot)
    quiesce(ds)
    assert order == ["body", "start"]

    ran = []

    def boot2(f):
        f.on_message(rpat("go"), lambda hf, b: hf.on_start(lambda sf: ran.append("now")))

    ds.spawn(boot2)
    quiesce(ds)
    ds.inject_message(rec("go"))
    quiesce(ds)
    assert ran == ["now"]  # facet already started: handler runs immediately


def test_stop_handlers_post_order_and_continuation_in_parent():
    ds = Dataspace()
    order = []

    def boot(f):
        def outer_body(outer):
            outer.on_stop(lambda sf: order.append("outer"))
            inner = outer.react(lambda i: i.on_stop(lambda sf: order.append("inner")))

        outer = f.react(outer_body)
        f.on_message(
            rpat("kill"),
            lambda hf, b: hf.actor.stop_facet(outer, lambda pf: order.append(("cont", pf.id))),
        )

    ds.spawn(boot)
    quiesce(ds)
    ds.inject_message(rec("kill"))
    quiesce(ds)
    assert order == ["inner", "outer", ("cont", ())]  # children first, then parent


def test_stop_dead_facet_is_noop_with_warning(caplog):
    ds = Dataspace()

    def boot(f):
        child = f.react(lambda cf: None)
        f.stop(child)
        f.stop(child)

    ds.spawn(boot)
    quiesce(ds)
    assert "no-op" in caplog.text


def test_crash_skips_stop_handlers():
    ds = Dataspace()
    runtime = {}

    def boot(f):
        f.on_stop(lambda sf: None)
        f.publish(rec("flag"))
        f.on_message(rpat("boom"), lambda hf, b: 1 / 0)

    aid = ds.spawn(boot)
    quiesce(ds)
    runtime["actor"] = ds.actors[aid]
    ds.inject_message(rec("boom"))
    quiesce(ds)
    assert not ds.is_alive(aid)
    assert runtime["actor"].stop_handlers_run == 0
    assert ds.query(lit(rec("flag"))) == []


def test_dispatch_first_registered_wins_when_facet_dies():
    # two handlers match the same event; the first stops the facet, so the
    # second never runs
    ds = Dataspace()
    hits = []

    def boot(f):
        def body(cf):
            cf.on_message(rpat("x"), lambda hf, b: (hits.append("first"), hf.stop(cf)))
            cf.on_message(rpat("x"), lambda hf, b: hits.append("second"))

        f.react(body)

    ds.spawn(boot)
    quiesce(ds)
    ds.inject_message(rec("x"))
    quiesce(ds)
    assert hits == ["first"]


def test_handler_runs_once_per_matching_value():
    ds = Dataspace()
    hits = []

    def boot(f):
        f.on_asserted(rpat("cell", cap("k")), lambda hf, b: hits.append(b["k"].n))

    ds.spawn(boot)
    ds.spawn(named_puppet_boot("a"))
    quiesce(ds)
    ds.inject_message(
        drive_cmd(
            "a", "do-batch", [rec("do-assert", rec("cell", 1)), rec("do-assert", rec("cell", 2))]
        )
    )
    quiesce(ds)
    assert sorted(hits) == [1, 2]


def test_stop_retracts_descendant_assertions_and_interests():
    ds = Dataspace()
    r = spawn_recorder(ds, rpat("cell", cap("k")))

    def boot(f):
        def sub(cf):
            cf.publish(rec("cell", 1))
            cf.react(lambda g: g.publish(rec("cell", 2)))
            cf.on_asserted(rpat("unrelated"), lambda hf, b: None)

        child = f.react(sub)
        f.on_message(rpat("kill"), lambda hf, b: hf.stop(child))

    aid = ds.spawn(boot)
    quiesce(ds)
    assert {v for _, v in r.events} == {rec("cell", 1), rec("cell", 2)}
    ds.inject_message(rec("kill"))
    quiesce(ds)
    assert ds.query(rpat("cell", cap("k"))) == []
    assert ds.interests[aid] != {}  # the root's kill handler remains
    assert not any("unrelated" in str(k) for k in ds.interests[aid])


def test_root_stop_quits_actor():
    ds = Dataspace()

    def boot(f):
        f.publish(rec("flag"))
        f.on_message(rpat("die"), lambda hf, b: hf.stop(f))

    aid = ds.spawn(boot)
    quiesce(ds)
    ds.inject_message(rec("die"))
    quiesce(ds)
    assert not ds.is_alive(aid)
    assert ds.query(lit(rec("flag"))) == []


def test_send_and_spawn_from_facet():
    ds = Dataspace()
    got = []

    def listener(f):
        f.on_message(rpat("note", cap("n")), lambda hf, b: got.append(b["n"].n))

    def boot(f):
        f.on_message(
            rpat("go"),
            lambda hf, b: (hf.spawn(listener), hf.send(rec("note", 1))),
        )

    ds.spawn(boot)
    quiesce(ds)
    ds.inject_message(rec("go"))
    quiesce(ds)
    assert got == []  # listener boots after the send: no buffering
    ds.inject_message(rec("go"))
    quiesce(ds)
    assert got == [1]


def test_render_tree_shows_structure():
    ds = Dataspace()

    def boot(f):
        f.publish(rec("price", 40))
        f.react(lambda cf: cf.on_message(rpat("x"), lambda hf, b: None))

    aid = ds.spawn(boot)
    quiesce(ds)
    text = render_tree(ds.actors[aid])
    assert "root" in text and "assert (price 40)" in text and "on message" in text


# ---------------------------------------------------------------------------
# the standalone account-keeping example: fields driving assertions

def test_bank_account_example():
    ds = Dataspace()
    r = spawn_recorder(ds, rpat("balance", cap("acct"), cap("amt")))
    ds.spawn(bank_account_boot())
    ds.spawn(named_puppet_boot("client"))
    quiesce(ds)
    ds.inject_message(drive_cmd("client", "do-assert", rec("create-account", sym("alice"), 100)))
    quiesce(ds)
    assert ("+", rec("balance", 0, 100)) in r.events
    assert ds.query(rpat("account-for", lit(sym("alice")), cap("n"))) != []
    ds.inject_message(rec("deposit", rec("acct", 0), 30))
    quiesce(ds)
    last = r.patches[-1].patch
    assert last.added == (rec("balance", 0, 130),)
    assert last.removed == (rec("balance", 0, 100),)
