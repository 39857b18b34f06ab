"""Registration, forward-bidding and settlement contracts for one FL task.

The three contracts share state (a publisher's auction needs the client
registry, settlement needs the auction), so they live on one
:class:`TaskContract` object backed by a :class:`~fedchain.ledger.Ledger`.
Each public method is one metered call. Preconditions, including the caller's
ability to pay gas, are checked before anything is written, so a
:class:`~fedchain.ledger.Revert` never leaves partial state behind.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace

from .clock import VirtualClock
from .ledger import GAS_PRICE_AVG, Address, Ledger, Revert


class Phase(enum.IntEnum):
    CREATED = 0
    OPEN = 1
    CLOSED = 2
    TRAINING = 3
    SETTLED = 4


class ClientStatus(enum.Enum):
    IDLE = "idle"
    BIDDING = "bidding"
    WINNER = "winner"
    TRAINING = "training"
    DROPPED_OUT = "dropped_out"
    PAID = "paid"


@dataclass(frozen=True)
class TaskRequirements:
    min_compute: float
    min_bandwidth: float
    data_type: str
    min_data_size: int
    iterations: int
    budget: int
    security_deposit: int
    closing_time: float
    top_x: int

    def __post_init__(self):
        for name in ("min_compute", "min_bandwidth", "min_data_size", "iterations",
                     "budget", "security_deposit", "closing_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.top_x < 1:
            raise ValueError("top_x must be at least 1")
        if not self.data_type:
            raise ValueError("data_type must be non-empty")


@dataclass(frozen=True)
class ScoreWeights:
    compute: float = 0.4
    bandwidth: float = 0.2
    data_size: float = 0.3
    price: float = 0.1


def bid_score(req: TaskRequirements, weights: ScoreWeights, compute, bandwidth, data_size, price) -> float:
    """Offered resources relative to the requirement, less a budget-relative price."""
    return (
        weights.compute * compute / req.min_compute
        + weights.bandwidth * bandwidth / req.min_bandwidth
        + weights.data_size * data_size / req.min_data_size
        - weights.price * price / req.budget
    )


@dataclass(frozen=True)
class Bid:
    bidder: Address
    offered_compute: float
    offered_bandwidth: float
    offered_data_size: int
    offered_data_type: str
    price: int
    # None commits to the published iteration count
    offered_iterations: int | None = None
    timestamp: float = 0.0
    score: float = 0.0


@dataclass
class ClientRecord:
    address: Address
    registered: bool = True
    deposit_held: int = 0
    status: ClientStatus = ClientStatus.IDLE


@dataclass
class AuctionState:
    phase: Phase = Phase.CREATED
    requirements: TaskRequirements | None = None
    bid_book: list[Bid] = field(default_factory=list)
    winners: list[Address] = field(default_factory=list)
    publisher: Address | None = None
    payout_pool: int = 0
    bids_at_selection: int = 0
    model_digest: bytes | None = None
    training_complete: bool = False
    dropped: list[Address] = field(default_factory=list)


@dataclass(frozen=True)
class SettlementRecord:
    service_fees: dict[Address, int]
    deposits_refunded: int
    deposits_forfeited: int
    publisher_refund: int
    model_digest: bytes
    # registered non-winners get their deposit back too; kept apart so the
    # four fields above exhaust exactly budget + winner deposits
    other_deposits_released: int = 0

    @property
    def fees_paid(self) -> int:
        return sum(self.service_fees.values())

    def total(self) -> int:
        return self.fees_paid + self.deposits_refunded + self.deposits_forfeited + self.publisher_refund


def rank_bids(bids) -> list[Bid]:
    """Highest score first; equal scores go to the earlier timestamp."""
    return sorted(bids, key=lambda b: (-b.score, b.timestamp))


def top_bidders(bids, top_x: int) -> list[Address]:
    """Distinct bidders of the ``top_x`` best bids, one slot per bidder."""
    winners: list[Address] = []
    for bid in rank_bids(bids):
        if bid.bidder not in winners:
            winners.append(bid.bidder)
            if len(winners) == top_x:
                break
    return winners


class TaskContract:
    """One task publisher's auction lifecycle on a shared ledger."""

    def __init__(self, ledger: Ledger, clock: VirtualClock | None = None,
                 weights: ScoreWeights = ScoreWeights(), gas_price: float = GAS_PRICE_AVG):
        self.ledger = ledger
        self.clock = clock or VirtualClock()
        self.weights = weights
        self.gas_price = gas_price
        self.address = ledger.create_account(0)
        self.publishers: set[Address] = set()
        self.clients: dict[Address, ClientRecord] = {}
        self.state = AuctionState()
        self.events: list[tuple[float, str, str]] = []

    # ------------------------------------------------------------ helpers

    @property
    def now(self) -> float:
        return self.clock.now

    def _fee(self, *ops: str) -> int:
        return sum(self.ledger.fee(op, self.gas_price) for op in ops)

    def _require(self, cond: bool, msg: str) -> None:
        if not cond:
            raise Revert(msg)

    def _require_funds(self, addr: Address, amount: int, what: str) -> None:
        bal = self.ledger.balance(addr)
        self._require(bal >= amount, f"insufficient funds for {what}: {bal} < {amount}")

    def _require_publisher(self, caller: Address) -> None:
        self._require(caller == self.state.publisher, "only the task publisher may call this")

    def _emit(self, kind: str, detail: str) -> None:
        self.events.append((self.now, kind, detail))

    def _submit(self, caller: Address, op: str, payload: bytes = b""):
        return self.ledger.submit(caller, op, payload, self.gas_price)

    def client(self, addr: Address) -> ClientRecord:
        try:
            return self.clients[addr]
        except KeyError:
            raise Revert(f"{addr} is not a registered client") from None

    def score(self, bid: Bid) -> float:
        return bid_score(self.state.requirements, self.weights, bid.offered_compute,
                         bid.offered_bandwidth, bid.offered_data_size, bid.price)

    @property
    def best_score(self) -> float | None:
        book = self.state.bid_book
        return max(b.score for b in book) if book else None

    # ------------------------------------------------------------ registration

    def register_publisher(self, addr: Address):
        self._require(addr not in self.publishers, "publisher already registered")
        self._require_funds(addr, self._fee("task_publisher_registration"), "gas")
        tx = self._submit(addr, "task_publisher_registration", addr.raw)
        self.publishers.add(addr)
        return tx

    def register_client(self, addr: Address, deposit: int):
        self._require(addr not in self.clients, "client already registered")
        self._require(isinstance(deposit, int) and deposit >= 0, "deposit must be a non-negative integer")
        self._require_funds(addr, deposit + self._fee("client_registration"), "deposit and gas")
        tx = self._submit(addr, "client_registration", addr.raw + struct.pack("<Q", deposit))
        self.ledger.escrow_lock(addr, deposit)
        self.clients[addr] = ClientRecord(addr, True, deposit, ClientStatus.IDLE)
        return tx

    # ------------------------------------------------------------ forward bidding

    def open_auction(self, publisher: Address, req: TaskRequirements) -> AuctionState:
        self._require(publisher in self.publishers, "publisher is not registered")
        self._require(self.state.phase == Phase.CREATED, f"auction already {self.state.phase.name.lower()}")
        self._require(self.now < req.closing_time, "closing time already passed")
        self._require_funds(publisher, req.budget + self._fee("start_auction", "start_forward_bidding"),
                            "budget and gas")
        payload = repr(req).encode()
        self._submit(publisher, "start_auction", payload)
        self._submit(publisher, "start_forward_bidding", payload)
        self.ledger.escrow_lock(publisher, req.budget)
        self.state = replace(self.state, phase=Phase.OPEN, requirements=req, publisher=publisher)
        self._emit("auction_open", f"budget={req.budget} top_x={req.top_x} closing={req.closing_time}")
        return self.state

    def check_bid(self, client: Address, bid: Bid) -> None:
        """Run every place_bid guard without touching state."""
        st = self.state
        self._require(client in self.clients and self.clients[client].registered, "client is not registered")
        self._require(bid.bidder == client, "bid bidder does not match caller")
        self._require(st.phase == Phase.OPEN, "forward bidding is not open")
        req = st.requirements
        self._require(self.now < req.closing_time, "bidding window closed")
        rec = self.clients[client]
        self._require(rec.deposit_held == req.security_deposit,
                      f"deposit {rec.deposit_held} does not equal rate {req.security_deposit}")
        self._require(bid.offered_compute >= req.min_compute, "offered compute below requirement")
        self._require(bid.offered_bandwidth >= req.min_bandwidth, "offered bandwidth below requirement")
        self._require(bid.offered_data_size >= req.min_data_size, "offered data size below requirement")
        self._require(bid.offered_data_type == req.data_type, "data type does not match")
        self._require(bid.offered_iterations is None or bid.offered_iterations >= req.iterations,
                      "offered iterations below requirement")
        self._require(isinstance(bid.price, int) and 0 <= bid.price <= req.budget,
                      "price outside budget headroom")
        best = self.best_score
        if best is not None:
            self._require(self.score(bid) > best, "offered resources do not improve on the previous bid")
        self._require_funds(client, self._fee("place_bid"), "gas")

    def place_bid(self, client: Address, bid: Bid):
        self.check_bid(client, bid)
        stored = replace(bid, timestamp=self.now, score=self.score(bid))
        tx = self._submit(client, "place_bid", repr(stored).encode())
        self.state.bid_book.append(stored)
        rec = self.clients[client]
        if rec.status == ClientStatus.IDLE:
            rec.status = ClientStatus.BIDDING
        self._emit("bid", f"{client.hex()} score={stored.score:.6f} n={len(self.state.bid_book)}")
        return tx

    def select_top_x(self, caller: Address) -> list[Address]:
        st = self.state
        self._require_publisher(caller)
        self._require(st.phase == Phase.OPEN, "auction is not open")
        self._require(bool(st.bid_book), "no bids to select from")
        winners = top_bidders(st.bid_book, st.requirements.top_x)
        prices = self._winning_prices(winners)
        pool = sum(prices.values())
        self._require(pool <= self.ledger.escrow(caller), f"winning prices {pool} exceed budget")
        self._require_funds(caller, self._fee("select_top_x"), "gas")
        self._submit(caller, "select_top_x", b"".join(w.raw for w in winners))
        self.ledger.escrow_release(caller, pool, to=self.address)
        st.payout_pool = pool
        st.winners = winners
        st.bids_at_selection = len(st.bid_book)
        st.phase = Phase.CLOSED
        for w in winners:
            self.clients[w].status = ClientStatus.WINNER
        self._emit("auction_closed", f"winners={len(winners)} pool={pool}")
        return list(winners)

    def _winning_prices(self, winners) -> dict[Address, int]:
        best: dict[Address, Bid] = {}
        for bid in rank_bids(self.state.bid_book):
            best.setdefault(bid.bidder, bid)
        return {w: best[w].price for w in winners}

    # ------------------------------------------------------------ training

    def begin_training(self, caller: Address):
        self._require_publisher(caller)
        self._require(self.state.phase == Phase.CLOSED, "auction is not closed")
        self._require_funds(caller, self._fee("close_auction"), "gas")
        tx = self._submit(caller, "close_auction")
        self.state.phase = Phase.TRAINING
        for w in self.state.winners:
            self.clients[w].status = ClientStatus.TRAINING
        return tx

    def mark_dropout(self, caller: Address, client: Address):
        st = self.state
        self._require_publisher(caller)
        self._require(st.phase == Phase.TRAINING, "training is not in progress")
        self._require(client in st.winners, "client is not a winner")
        self._require(client not in st.dropped, "client already marked as dropped out")
        self._require_funds(caller, self._fee("mark_dropout"), "gas")
        tx = self._submit(caller, "mark_dropout", client.raw)
        st.dropped.append(client)
        self.clients[client].status = ClientStatus.DROPPED_OUT
        self._emit("dropout", client.hex())
        return tx

    def add_model_hash(self, caller: Address, model_digest: bytes, final: bool = False):
        """Record a stored model's digest; ``final`` flags training as complete."""
        st = self.state
        self._require_publisher(caller)
        self._require(st.phase == Phase.TRAINING, "training is not in progress")
        self._require(len(model_digest) == 32 and self.ledger.has_content(model_digest),
                      "digest not present in the content store")
        self._require_funds(caller, self._fee("add_model_hash"), "gas")
        tx = self._submit(caller, "add_model_hash", model_digest)
        st.model_digest = model_digest
        if final:
            st.training_complete = True
        return tx

    # ------------------------------------------------------------ settlement

    def settle(self, caller: Address) -> SettlementRecord:
        st = self.state
        self._require_publisher(caller)
        self._require(st.phase == Phase.TRAINING, "auction is not in training")
        self._require(st.training_complete and st.model_digest is not None, "training not completed")
        self._require(self.now >= st.requirements.closing_time, "closing time has not passed")
        self._require(st.bids_at_selection >= st.requirements.top_x, "insufficient bidding offers")
        self._require_funds(caller, self._fee("settle"), "gas")
        self._submit(caller, "settle", st.model_digest)

        prices = self._winning_prices(st.winners)
        fees: dict[Address, int] = {}
        for w in st.winners:
            if w not in st.dropped:
                self.ledger.transfer(self.address, w, prices[w])
                fees[w] = prices[w]
        unpaid = st.payout_pool - sum(fees.values())
        self.ledger.transfer(self.address, caller, unpaid)
        st.phase = Phase.SETTLED
        self._emit("auction_settled", f"digest={st.model_digest.hex()}")

        residual = self.ledger.escrow(caller)
        self.ledger.escrow_release(caller, residual)
        refunded = forfeited = other = 0
        for addr in sorted(self.clients):
            rec = self.clients[addr]
            amount = rec.deposit_held
            if addr in st.dropped:
                self.ledger.escrow_release(addr, amount, to=caller)
                forfeited += amount
            elif addr in st.winners:
                self.ledger.escrow_release(addr, amount)
                refunded += amount
                rec.status = ClientStatus.PAID
            else:
                self.ledger.escrow_release(addr, amount)
                other += amount
                rec.status = ClientStatus.IDLE
            rec.deposit_held = 0
        return SettlementRecord(fees, refunded, forfeited, residual + unpaid, st.model_digest, other)

    def get_reward(self, client: Address) -> bytes:
        st = self.state
        self._require(st.phase == Phase.SETTLED, "auction not settled")
        self._require(client in st.winners, "client is not a winner")
        self._require(client not in st.dropped, "dropped-out clients forfeit the reward")
        self._require_funds(client, self._fee("get_rewards"), "gas")
        self._submit(client, "get_rewards", st.model_digest)
        return st.model_digest
