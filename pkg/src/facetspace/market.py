"""The market simulation: protocol shapes, actors, and scripted scenarios.

The cast: a clock alternating trading days, a bank holding accounts, a
wallet fronting the bank for the broker, sellers advertising prices, brokers
working orders through funding and purchase stages, scripted buyers, and
small one-shot actors for deposits and order-result caching.

The extended variant adds named sellers and brokers: brokers pick the
cheapest seller after a collection window, buyers pick the cheapest broker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .dataspace import Dataspace
from .drivers import Clock, advance_virtual_time, spawn_timer_driver
from .forms import during, on_timeout, query_map, state_machine, stop_when
from .values import (
    Boolean,
    Decimal,
    Integer,
    Record,
    Symbol,
    Value,
    cap,
    lit,
    rec,
    render,
    rpat,
    sym,
)

log = logging.getLogger(__name__)

FULFILLED = sym("fulfilled")
CANCELED = sym("canceled")
INSUFFICIENT_FUNDS = sym("insufficient-funds")
NO_PRICE_MATCH = sym("no-price-match")
ANSWERS = (CANCELED, INSUFFICIENT_FUNDS, NO_PRICE_MATCH, FULFILLED)

TRADING_DAY_OPEN = rec("trading-day-open")


def _num(v: Value):
    if isinstance(v, Integer):
        return v.n
    if isinstance(v, Decimal):
        return v.x
    raise TypeError("not a number: %r" % (v,))


# ---------------------------------------------------------------------------
# Clock actor: alternates the trading-day-open assertion.

def market_clock_boot(open_ms: int, closed_ms: int):
    def boot(f):
        if closed_ms <= 0:
            f.publish(TRADING_DAY_OPEN)  # degenerate config: always open
            return

        def open_state(sf):
            sf.publish(TRADING_DAY_OPEN)
            on_timeout(sf, open_ms, lambda hf: goto("closed"))

        def closed_state(sf):
            on_timeout(sf, closed_ms, lambda hf: goto("open"))

        goto = state_machine(f, "day-cycle", [("open", open_state), ("closed", closed_state)])

    return boot


def spawn_clock(ds, open_ms: int, closed_ms: int) -> int:
    return ds.spawn(market_clock_boot(open_ms, closed_ms))


# ---------------------------------------------------------------------------
# Bank

@dataclass
class BankHandle:
    actor_id: int = -1
    balances: dict = field(default_factory=dict)
    processed: dict = field(default_factory=dict)  # txn id Value -> ok
    log: list = field(default_factory=list)  # (kind, txn, acct, amt, ok)

    def total(self):
        return sum(self.balances.values())


def bank_boot(handle: BankHandle):
    """Responds to withdraw/deposit requests while trading is open.

    Requests are idempotent per transaction id: a request that stays
    asserted across a day boundary is answered again, not re-executed.
    """

    def withdraw(tid, acct, amt):
        if tid in handle.processed:
            return handle.processed[tid]
        ok = handle.balances.get(acct, 0) >= amt and acct in handle.balances
        if ok:
            handle.balances[acct] -= amt
        handle.processed[tid] = ok
        handle.log.append(("withdraw", tid, acct, amt, ok))
        return ok

    def deposit(tid, acct, amt):
        if tid in handle.processed:
            return handle.processed[tid]
        ok = acct in handle.balances
        if ok:
            handle.balances[acct] += amt
        handle.processed[tid] = ok
        handle.log.append(("deposit", tid, acct, amt, ok))
        return ok

    def boot(f):
        def open_body(tf, _b):
            def withdraw_body(cf, b):
                ok = withdraw(b["id"], b["acct"], _num(b["amt"]))
                cf.publish(rec("bank-response", b["id"], ok))

            def deposit_body(cf, b):
                ok = deposit(b["id"], b["acct"], _num(b["amt"]))
                cf.publish(rec("bank-response", b["id"], ok))

            during(tf, rpat("withdraw-funds", cap("id"), cap("acct"), cap("amt")), withdraw_body)
            during(tf, rpat("deposit-funds", cap("id"), cap("acct"), cap("amt")), deposit_body)

        during(f, rpat("trading-day-open"), open_body)

    return boot


def spawn_bank(ds, accounts: dict) -> BankHandle:
    handle = BankHandle()
    for acct, balance in accounts.items():
        handle.balances[sym(acct) if isinstance(acct, str) else acct] = balance
    handle.actor_id = ds.spawn(bank_boot(handle))
    return handle


# ---------------------------------------------------------------------------
# Deposit helper: a one-shot actor returning funds to an account.

def deposit_boot(acct: Value, amt):
    def boot(f):
        txn = f.unique()
        f.publish(rec("deposit-funds", txn, acct, amt))
        stop_when(f, "asserted", rpat("bank-response", lit(txn), cap("ok")))

    return boot


def deposit_back(f, acct: Value, amt):
    if amt:
        f.spawn(deposit_boot(acct, amt))


# ---------------------------------------------------------------------------
# Seller

def seller_boot(desired):
    def boot(f):
        def open_body(tf, _b):
            tf.publish(rec("price", desired))

            def respond(cf, b):
                cf.publish(rec("purchase-result", b["id"], _num(b["offered"]) >= desired))

            during(tf, rpat("purchase-request", cap("id"), cap("count"), cap("offered")), respond)

        during(f, rpat("trading-day-open"), open_body)

    return boot


def named_seller_boot(name, desired):
    name = sym(name) if isinstance(name, str) else name

    def boot(f):
        def open_body(tf, _b):
            tf.publish(rec("price", name, desired))

            def respond(cf, b):
                cf.publish(
                    rec("purchase-result", b["id"], name, _num(b["offered"]) >= desired)
                )

            during(
                tf,
                rpat("purchase-request", cap("id"), lit(name), cap("count"), cap("offered")),
                respond,
            )

        during(f, rpat("trading-day-open"), open_body)

    return boot


def spawn_seller(ds, desired) -> int:
    return ds.spawn(seller_boot(desired))


def spawn_named_seller(ds, name, desired) -> int:
    return ds.spawn(named_seller_boot(name, desired))


# ---------------------------------------------------------------------------
# Order-result caching: keeps the answer visible until nobody cares.

def result_cache_boot(the_order: Value, answer: Symbol):
    def boot(f):
        f.publish(rec("order-result", the_order, answer))
        live = f.field(0)
        seen = f.field(False)
        meta = rpat("observe", rpat("order-result", lit(the_order), cap("p")))

        def on_interest(hf, _b):
            live(live() + 1)
            seen(True)

        def on_disinterest(hf, _b):
            live(live() - 1)
            if seen() and live() == 0:
                hf.actor.stop_facet(f)

        f.on_asserted(meta, on_interest)
        f.on_retracted(meta, on_disinterest)

    return boot


def spawn_result_cache(ds, the_order: Value, answer: Symbol) -> int:
    return ds.spawn(result_cache_boot(the_order, answer))


# ---------------------------------------------------------------------------
# Wallet: fronts the bank for the broker, remembering funding across days.

def wallet_boot():
    def boot(f):
        processed = f.field(frozenset())

        def on_need(hf, b):
            the_order, acct, amt_v = b["order"], b["acct"], b["amt"]
            if the_order in processed():
                return
            processed(processed() | {the_order})

            def withdraw_body(wf):
                wf.publish(rec("withdraw-funds", the_order, acct, amt_v))

                def response_body(cf, rb):
                    ok = rb["ok"]
                    cf.publish(rec("funds-held", the_order, acct, amt_v, ok))

                    def on_result(hf2, ob):
                        ans = ob["ans"]

                        def cont(pf):
                            if ok.b and ans != FULFILLED:
                                deposit_back(pf, acct, _num(amt_v))

                        hf2.actor.stop_facet(wf, cont)

                    cf.on_asserted(rpat("order-result", lit(the_order), cap("ans")), on_result)

                during(wf, rpat("bank-response", lit(the_order), cap("ok")), response_body)

            hf.react(withdraw_body)

        f.on_asserted(rpat("funds-needed", cap("order"), cap("acct"), cap("amt")), on_need)

    return boot


def spawn_wallet(ds) -> int:
    return ds.spawn(wallet_boot())


# ---------------------------------------------------------------------------
# Broker

def _make_stop_with(order_facet, the_order: Value):
    reason = order_facet.field(None)

    def stop_with(answer: Symbol):
        if not order_facet.alive:
            return
        if reason() is None:
            reason(answer)
            order_facet.stop(
                order_facet,
                continuation=lambda pf: pf.spawn(result_cache_boot(the_order, answer)),
            )

    return stop_with


def broker_boot(name=None, fee=0, wait_period: int = 100):
    """Simple broker when name is None; named (extended) broker otherwise."""
    extended = name is not None
    broker_name = sym(name) if isinstance(name, str) else name

    def boot(f):
        def open_body(tf, _b):
            if extended:
                tf.publish(rec("broker-fee", broker_name, fee))
                order_pat = rpat(
                    "order", lit(broker_name), cap("id"), cap("acct"), cap("n"), cap("maxp")
                )
            else:
                order_pat = rpat("order", cap("id"), cap("acct"), cap("n"), cap("maxp"))

            def on_order(hf, b):
                if extended:
                    the_order = rec("order", broker_name, b["id"], b["acct"], b["n"], b["maxp"])
                else:
                    the_order = rec("order", b["id"], b["acct"], b["n"], b["maxp"])

                def order_body(of):
                    stop_with = _make_stop_with(of, the_order)
                    _work_on_one_order(of, the_order, b, stop_with, extended, fee, wait_period)

                hf.react(order_body)

            tf.on_asserted(order_pat, on_order)

        during(f, rpat("trading-day-open"), open_body)

    return boot


def _work_on_one_order(of, the_order, b, stop_with, extended, fee, wait_period):
    acct = b["acct"]
    n = b["n"].n
    maxp = _num(b["maxp"])
    potential = n * maxp

    def request_state(sf):
        sf.publish(rec("funds-needed", the_order, acct, potential))
        sf.on_asserted(
            lit(rec("funds-held", the_order, acct, potential, True)),
            lambda hf, _b: goto("funded"),
        )
        sf.on_asserted(
            lit(rec("funds-held", the_order, acct, potential, False)),
            lambda hf, _b: stop_with(INSUFFICIENT_FUNDS),
        )
        sf.on_retracted(lit(the_order), lambda hf, _b: stop_with(CANCELED))

    def funded_state(sf):
        if extended:
            _finish_funded_extended(sf, the_order, acct, n, maxp, potential, fee, wait_period, stop_with)
        else:
            _finish_funded(sf, the_order, acct, n, maxp, potential, stop_with)

    goto = state_machine(of, "acquire-funds", [("request", request_state), ("funded", funded_state)])


def _finish_funded(sf, the_order, acct, n, maxp, held, stop_with):
    def request_price(pf):
        def on_price(hf, b):
            actual = _num(b["actual"])
            if actual <= maxp:
                goto("purchase", b["actual"])
            else:
                stop_with(NO_PRICE_MATCH)

        pf.on_asserted(rpat("price", cap("actual")), on_price)
        # Cancellation while funded: the wallet returns the held funds when
        # it sees the canceled order-result.
        pf.on_retracted(lit(the_order), lambda hf, _b: stop_with(CANCELED))

    def complete_purchase(pf, actual_v):
        actual = _num(actual_v)
        pf.publish(rec("purchase-request", the_order, n, actual_v))

        def on_ok(hf, _b):
            left_over = held - n * actual
            deposit_back(hf, acct, left_over)
            stop_with(FULFILLED)

        pf.on_asserted(lit(rec("purchase-result", the_order, True)), on_ok)
        # No cancellation handler: once committed, a cancel is ignored.

    goto = state_machine(
        sf, "purchase-progress", [("request", request_price), ("purchase", complete_purchase)]
    )


def _finish_funded_extended(sf, the_order, acct, n, maxp, held, fee, wait_period, stop_with):
    def select_seller(pf):
        sellers = query_map(pf, rpat("price", cap("seller"), cap("actual")), "seller", "actual")
        pf.on_retracted(lit(the_order), lambda hf, _b: stop_with(CANCELED))

        def decide(hf):
            offers = sellers()
            if not offers:
                stop_with(NO_PRICE_MATCH)
                return
            seller, actual_v = min(offers.items(), key=lambda kv: (_num(kv[1]), render(kv[0])))
            if _num(actual_v) <= maxp:
                goto("purchase", seller, actual_v)
            else:
                stop_with(NO_PRICE_MATCH)

        on_timeout(pf, wait_period, decide)

    def complete_purchase(pf, seller, actual_v):
        actual = _num(actual_v)
        pf.publish(rec("purchase-request", the_order, seller, n, actual_v))

        def on_ok(hf, _b):
            left_over = held - n * actual - fee
            deposit_back(hf, acct, left_over)
            stop_with(FULFILLED)

        pf.on_asserted(lit(rec("purchase-result", the_order, seller, True)), on_ok)
        pf.on_retracted(rpat("price", lit(seller), cap("p")), lambda hf, _b: goto("select"))

    goto = state_machine(
        sf, "purchase-progress", [("select", select_seller), ("purchase", complete_purchase)]
    )


def spawn_broker(ds, wait_period: int = 100) -> int:
    return ds.spawn(broker_boot())


def spawn_named_broker(ds, name, fee, wait_period: int = 100) -> int:
    return ds.spawn(broker_boot(name=name, fee=fee, wait_period=wait_period))


# ---------------------------------------------------------------------------
# Scripted buyer

@dataclass
class BuyerHandle:
    name: str
    account: Value
    actor_id: int = -1
    outcomes: dict = field(default_factory=dict)  # order ref -> answer name


def scripted_buyer_boot(handle: BuyerHandle, extended: bool = False, wait_period: int = 100):
    """Places and cancels orders on message commands; confirms receipt of a
    result by dropping its interest in the order-result."""
    me = sym(handle.name)
    acct = handle.account

    def boot(f):
        order_facets = {}

        def make_order(ctx, ref, n_v, maxp_v, broker=None):
            oid = ctx.unique()
            if broker is not None:
                the_order = rec("order", broker, oid, acct, n_v, maxp_v)
            else:
                the_order = rec("order", oid, acct, n_v, maxp_v)

            def await_body(af):
                order_facets[ref] = af.react(lambda obf: obf.publish(the_order))

                def on_result(hf, rb):
                    handle.outcomes[ref] = rb["ans"].name
                    hf.actor.stop_facet(af)

                af.on_asserted(rpat("order-result", lit(the_order), cap("ans")), on_result)

            ctx.react(await_body)

        def place(hf, b):
            ref = b["ref"].name
            if extended:

                def selection_body(self_):
                    fees = query_map(self_, rpat("broker-fee", cap("b"), cap("fee")), "b", "fee")

                    def decide(hf2):
                        offers = fees()
                        if offers:
                            broker, _fee = min(
                                offers.items(), key=lambda kv: (_num(kv[1]), render(kv[0]))
                            )
                            hf2.actor.stop_facet(
                                self_,
                                lambda pf: make_order(pf, ref, b["n"], b["maxp"], broker),
                            )
                        else:
                            handle.outcomes[ref] = "no-broker"
                            hf2.actor.stop_facet(self_)

                    on_timeout(self_, wait_period, decide)

                hf.react(selection_body)
            else:
                make_order(hf, ref, b["n"], b["maxp"])

        def cancel(hf, b):
            ref = b["ref"].name
            fct = order_facets.get(ref)
            if fct is None or not fct.alive:
                log.warning("buyer %s: cancel of unknown/complete order %s", handle.name, ref)
                return
            hf.actor.stop_facet(fct)

        f.on_message(rpat("place-order", lit(me), cap("ref"), cap("n"), cap("maxp")), place)
        f.on_message(rpat("cancel-order", lit(me), cap("ref")), cancel)

    return boot


def spawn_scripted_buyer(ds, name, account, extended=False, wait_period=100) -> BuyerHandle:
    handle = BuyerHandle(name, sym(account) if isinstance(account, str) else account)
    handle.actor_id = ds.spawn(scripted_buyer_boot(handle, extended, wait_period))
    return handle


# ---------------------------------------------------------------------------
# Bank-account actor (standalone example of fields and dataflow)

def bank_account_boot():
    """Opens an account per create-account assertion; publishes the live
    balance and credits deposits sent as messages."""

    def boot(f):
        next_account = f.field(0)

        def on_create(hf, b):
            account_number = next_account()
            next_account(next_account() + 1)

            def account_body(af):
                bal = af.field(_num(b["initial"]))
                af.publish(rec("account-for", b["client"], account_number))
                af.publish(lambda: rec("balance", account_number, bal()))
                af.on_message(
                    rpat("deposit", lit(rec("acct", account_number)), cap("amt")),
                    lambda hf2, db: bal(bal() + _num(db["amt"])),
                )

            hf.react(account_body)

        f.on_asserted(rpat("create-account", cap("client"), cap("initial")), on_create)

    return boot


# ---------------------------------------------------------------------------
# Scenario harness

class ScenarioError(AssertionError):
    pass


@dataclass
class ScenarioConfig:
    scenario: str = "simple"  # simple | extended
    accounts: dict = field(default_factory=lambda: {"a1": 1000})
    buyers: list = field(default_factory=lambda: [("b1", "a1")])
    sellers: object = field(default_factory=lambda: [40])  # extended: {name: price}
    brokers: object = 1  # extended: {name: fee}
    open_ms: int = 1000
    closed_ms: int = 500
    wait_period: int = 100
    seed: int = 0


# Script steps: (advance N) | (place buyer ref n maxp) | (cancel buyer ref)
#             | (expect-quiescent) | (assert-balance acct amount)
#             | (assert-order-result ref answer)

def parse_script(values: list) -> list:
    steps = []
    for v in values:
        if not isinstance(v, Record):
            raise ScenarioError("bad script step: %s" % render(v))
        label = v.label.name
        fs = v.fields
        if label == "advance" and len(fs) == 1:
            steps.append(("advance", fs[0].n))
        elif label == "place" and len(fs) == 4:
            steps.append(("place", fs[0].name, fs[1].name, fs[2], fs[3]))
        elif label == "cancel" and len(fs) == 2:
            steps.append(("cancel", fs[0].name, fs[1].name))
        elif label == "expect-quiescent" and not fs:
            steps.append(("expect-quiescent",))
        elif label == "assert-balance" and len(fs) == 2:
            steps.append(("assert-balance", fs[0], _num(fs[1])))
        elif label == "assert-order-result" and len(fs) == 2:
            steps.append(("assert-order-result", fs[0].name, fs[1].name))
        else:
            raise ScenarioError("bad script step: %s" % render(v))
    return steps


def default_config(scenario: str = "simple", **overrides) -> ScenarioConfig:
    """Stock cast for CLI runs: one buyer b1 on account a1 (1000); simple
    gets one anonymous seller at 40 and one broker, extended gets sellers
    s1:40/s2:55 and brokers k1 (fee 0) and k2 (fee 5)."""
    if scenario == "extended":
        cfg = ScenarioConfig(
            scenario="extended",
            sellers={"s1": 40, "s2": 55},
            brokers={"k1": 0, "k2": 5},
        )
    elif scenario == "simple":
        cfg = ScenarioConfig()
    else:
        raise ValueError("unknown scenario %r" % scenario)
    for k, v in overrides.items():
        if not hasattr(cfg, k):
            raise TypeError("unknown config field %r" % k)
        setattr(cfg, k, v)
    return cfg


@dataclass
class ScenarioResult:
    final_balances: dict
    order_outcomes: dict
    trace: list
    ds: Dataspace
    bank: BankHandle
    buyers: dict


def build_scenario(config: ScenarioConfig, trace_sink=None) -> ScenarioResult:
    """Spawn the full cast; returns handles without running any script."""
    ds = Dataspace(seed=config.seed, trace_sink=trace_sink)
    spawn_timer_driver(ds, Clock("virtual"))
    spawn_clock(ds, config.open_ms, config.closed_ms)
    bank = spawn_bank(ds, config.accounts)
    spawn_wallet(ds)
    extended = config.scenario == "extended"
    if extended:
        for name, desired in config.sellers.items():
            spawn_named_seller(ds, name, desired)
        for name, fee in config.brokers.items():
            spawn_named_broker(ds, name, fee, config.wait_period)
    else:
        for desired in config.sellers:
            spawn_seller(ds, desired)
        for _ in range(config.brokers):
            spawn_broker(ds)
    buyers = {}
    for name, acct in config.buyers:
        buyers[name] = spawn_scripted_buyer(ds, name, acct, extended, config.wait_period)
    return ScenarioResult({}, {}, ds.trace, ds, bank, buyers)


def run_scenario(config: ScenarioConfig, script: list, trace_sink=None, max_turns=100000) -> ScenarioResult:
    """Run a scenario script to completion; raises ScenarioError on a failed
    script assertion, reporting the turn number."""
    result = build_scenario(config, trace_sink)
    ds, bank, buyers = result.ds, result.bank, result.buyers
    ds.run_until_quiescent(max_turns)

    def fail(msg):
        raise ScenarioError("turn %d: %s" % (len(ds.trace), msg))

    for step in script:
        kind = step[0]
        if kind == "advance":
            ds.run_until_quiescent(max_turns)
            advance_virtual_time(ds, step[1], max_turns)
        elif kind == "place":
            _, buyer, ref, n_v, maxp_v = step
            if buyer not in buyers:
                fail("unknown buyer %s" % buyer)
            ds.inject_message(rec("place-order", sym(buyer), sym(ref), n_v, maxp_v))
        elif kind == "cancel":
            _, buyer, ref = step
            ds.inject_message(rec("cancel-order", sym(buyer), sym(ref)))
        elif kind == "expect-quiescent":
            ds.run_until_quiescent(max_turns)
        elif kind == "assert-balance":
            _, acct, want = step
            got = bank.balances.get(acct)
            if got != want:
                fail("balance of %s is %r, expected %r" % (render(acct), got, want))
        elif kind == "assert-order-result":
            _, ref, want = step
            got = None
            for h in buyers.values():
                if ref in h.outcomes:
                    got = h.outcomes[ref]
            if got != want:
                fail("order %s resolved %r, expected %r" % (ref, got, want))
        else:
            fail("unknown step %r" % (step,))

    result.final_balances = {render(k): v for k, v in bank.balances.items()}
    result.order_outcomes = {
        ref: ans for h in buyers.values() for ref, ans in h.outcomes.items()
    }
    return result
