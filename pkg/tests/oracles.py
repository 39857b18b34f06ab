"""Independent reference models used by the contract and acceptance tests.

Nothing here calls into the contract's own scoring, validation or ranking
code; every expectation is recomputed from the published rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fedchain.clock import VirtualClock
from fedchain.contracts import Bid, Phase, TaskContract, TaskRequirements
from fedchain.ledger import Ledger, Revert

W_COMPUTE, W_BANDWIDTH, W_DATA, W_PRICE = 0.4, 0.2, 0.3, 0.1


def oracle_score(req: TaskRequirements, bid: Bid) -> float:
    return (W_COMPUTE * bid.offered_compute / req.min_compute
            + W_BANDWIDTH * bid.offered_bandwidth / req.min_bandwidth
            + W_DATA * bid.offered_data_size / req.min_data_size
            - W_PRICE * bid.price / req.budget)


def oracle_winners(book: list[Bid], top_x: int) -> list:
    """Each bidder's best bid (earliest among equals), then bidders ordered by
    that bid's score, descending, and its timestamp, ascending."""
    best: dict = {}
    for i, b in enumerate(book):
        key = (-b.score, b.timestamp, i)
        if b.bidder not in best or key < best[b.bidder]:
            best[b.bidder] = key
    ranked = sorted(best, key=lambda addr: best[addr])
    return ranked[:top_x]


def contract_fingerprint(c: TaskContract) -> str:
    led = c.ledger
    return repr((led.accounts, led.pending, led.blocks, led.store, c.clients, c.state, sorted(c.publishers),
                 c.events))


def random_requirements(rng: np.random.Generator, closing_time: float = 1000.0) -> TaskRequirements:
    return TaskRequirements(
        min_compute=float(rng.uniform(50, 500)),
        min_bandwidth=float(rng.uniform(20, 300)),
        data_type="image",
        min_data_size=int(rng.integers(50, 1000)),
        iterations=int(rng.integers(1, 50)),
        budget=int(rng.integers(10**8, 10**10)),
        security_deposit=int(rng.integers(10**6, 10**8)),
        closing_time=closing_time,
        top_x=int(rng.integers(1, 8)),
    )


@dataclass
class AuctionRun:
    contract: TaskContract
    publisher: object
    clients: list
    req: TaskRequirements
    attempts: int = 0
    accepted: int = 0
    guard_hits: dict = field(default_factory=dict)
    mismatches: list = field(default_factory=list)
    winners: list | None = None
    expected_winners: list | None = None


def _expected_guard(c: TaskContract, run: AuctionRun, who, bid: Bid, registered: dict, deposits: dict,
                    book: list[Bid]) -> str | None:
    """Which published rule rejects this bid, or None if it must be accepted."""
    req = run.req
    if who not in registered:
        return "unregistered"
    if c.state.phase != Phase.OPEN or c.clock.now >= req.closing_time:
        return "closed"
    if deposits[who] != req.security_deposit:
        return "deposit"
    if (bid.offered_compute < req.min_compute or bid.offered_bandwidth < req.min_bandwidth
            or bid.offered_data_size < req.min_data_size or bid.offered_data_type != req.data_type
            or (bid.offered_iterations is not None and bid.offered_iterations < req.iterations)):
        return "under_resourced"
    if bid.price > req.budget:
        return "price"
    if book and oracle_score(req, bid) <= max(oracle_score(req, b) for b in book):
        return "not_improving"
    return None


def random_auction(seed: int, max_bids: int = 100) -> AuctionRun:
    """Drive one randomized auction through the contract while an
    independent validator predicts every accept/revert; revert atomicity is
    checked on each rejected call."""
    rng = np.random.default_rng(seed)
    led = Ledger()
    clock = VirtualClock()
    c = TaskContract(led, clock)
    req = random_requirements(rng)
    pub = led.create_account(req.budget + 10**10)
    c.register_publisher(pub)
    n = int(rng.integers(2, 15))
    clients = [led.create_account(10**10) for _ in range(n)]
    strangers = [led.create_account(10**10) for _ in range(2)]
    registered, deposits = {}, {}
    for a in clients:
        dep = req.security_deposit if rng.random() < 0.85 else req.security_deposit + int(rng.integers(1, 1000))
        c.register_client(a, dep)
        registered[a] = True
        deposits[a] = dep
    run = AuctionRun(c, pub, clients, req)

    # a bid before the auction opens is a closed-phase revert
    early = Bid(clients[0], req.min_compute, req.min_bandwidth, req.min_data_size, "image", 1)
    _attempt(run, clients[0], early, registered, deposits, [])
    c.open_auction(pub, req)

    book: list[Bid] = []
    level = 1.0
    for _ in range(int(rng.integers(1, max_bids + 1))):
        clock.advance(float(rng.choice([0.0, 0.5, 1.0])))
        who = strangers[0] if rng.random() < 0.05 else clients[int(rng.integers(n))]
        level += float(rng.uniform(-0.05, 0.2))  # a step down fails to improve
        dims = [max(level, 1.0)] * 3
        kind = rng.random()
        if kind < 0.1:
            dims[int(rng.integers(3))] = float(rng.uniform(0.5, 0.99))
        price = int(rng.integers(0, req.budget // 20))
        if rng.random() < 0.03:
            price = req.budget + 1
        bid = Bid(
            who,
            req.min_compute * dims[0],
            req.min_bandwidth * dims[1],
            int(np.ceil(req.min_data_size * dims[2])),
            "text" if 0.1 <= kind < 0.13 else "image",
            price,
            offered_iterations=req.iterations - 1 if 0.13 <= kind < 0.15 else None,
        )
        if _attempt(run, who, bid, registered, deposits, book):
            book.append(c.state.bid_book[-1])
    # a bid after the window closes
    clock.advance_to(max(clock.now, req.closing_time))
    late = Bid(clients[0], req.min_compute * 99, req.min_bandwidth * 99, req.min_data_size * 99, "image", 0)
    _attempt(run, clients[0], late, registered, deposits, book)
    if book:
        run.expected_winners = oracle_winners(book, req.top_x)
        run.winners = c.select_top_x(pub)
    return run


def _attempt(run: AuctionRun, who, bid: Bid, registered, deposits, book) -> bool:
    c = run.contract
    run.attempts += 1
    expected = _expected_guard(c, run, who, bid, registered, deposits, book)
    before = contract_fingerprint(c)
    try:
        c.place_bid(who, bid)
    except Revert:
        if expected is None:
            run.mismatches.append(("unexpected revert", bid))
        if contract_fingerprint(c) != before:
            run.mismatches.append(("revert changed state", bid))
        run.guard_hits[expected] = run.guard_hits.get(expected, 0) + 1
        return False
    if expected is not None:
        run.mismatches.append((f"accepted despite {expected}", bid))
    run.accepted += 1
    return True


@dataclass
class Lifecycle:
    ledger: Ledger
    contract: TaskContract
    publisher: object
    winners: list
    dropped: list
    settlement: object
    supply_checks: int
    budget: int
    winner_deposits: int
    prices: dict


def random_lifecycle(seed: int) -> Lifecycle:
    """Register, bid, select, train with random dropouts, settle and claim
    rewards, asserting after every call that total supply is unchanged."""
    rng = np.random.default_rng(seed)
    led = Ledger()
    clock = VirtualClock()
    c = TaskContract(led, clock, gas_price=float(rng.choice([0.0, 11.27, 23.49])))
    req = random_requirements(rng, closing_time=100.0)
    pub = led.create_account(req.budget + 10**10)
    clients = [led.create_account(10**10) for _ in range(int(rng.integers(1, 12)))]
    supply = led.total_supply()
    checks = 0

    def call(fn, *args):
        nonlocal checks
        try:
            out = fn(*args)
        except Revert:
            out = None
        assert led.total_supply() == supply, "total supply changed"
        checks += 1
        return out

    call(c.register_publisher, pub)
    for a in clients:
        call(c.register_client, a, req.security_deposit)
    call(c.open_auction, pub, req)
    score = 1.0
    for _ in range(int(rng.integers(1, 30))):
        clock.advance(0.5)
        who = clients[int(rng.integers(len(clients)))]
        score += float(rng.uniform(0.01, 0.3))
        bid = Bid(who, req.min_compute * score, req.min_bandwidth * score, int(req.min_data_size * score) + 1,
                  "image", int(rng.integers(0, req.budget // max(1, req.top_x))))
        call(c.place_bid, who, bid)
    clock.advance_to(req.closing_time)
    winners = call(c.select_top_x, pub) or []
    call(c.begin_training, pub)
    dropped = [w for w in winners if rng.random() < 0.3]
    for w in dropped:
        call(c.mark_dropout, pub, w)
    rounds = int(rng.integers(1, 4))
    for r in range(rounds):
        key = led.content_put(f"model-{seed}-{r}".encode())
        call(c.add_model_hash, pub, key, r == rounds - 1)
        led.seal_block()
    settlement = call(c.settle, pub)
    for a in clients:
        call(c.get_reward, a)
    led.seal_block()
    best = {}
    for b in sorted(c.state.bid_book, key=lambda b: (-b.score, b.timestamp)):
        best.setdefault(b.bidder, b.price)
    return Lifecycle(led, c, pub, winners, dropped, settlement, checks, req.budget,
                     req.security_deposit * len(winners), {w: best[w] for w in winners})
