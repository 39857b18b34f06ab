"""Round-by-round simulation of auction-selected federated training.

A run builds a ledger and a task contract, draws a client population from
two strata (reliable and unreliable), splits the training set IID in
proportion to each client's advertised data size, selects participants and
then runs FedAvg rounds. Every round samples dropouts, trains the survivors,
aggregates (optionally under CKKS), stores the checkpoint, records its digest
on the ledger, evaluates, and advances a virtual clock by the slowest
survivor's modeled completion time.

Selection modes:

* ``optimized``: clients bid in a forward auction; the ``k`` best bids win
  and train every round. A winner that drops out is marked on the contract
  and leaves for good, forfeiting its deposit at settlement.
* ``random``: no contracts; ``k`` clients are drawn uniformly once and train
  every round. A dropout only misses that round, since nothing on the ledger
  removes it.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import ckks
from .clock import VirtualClock
from .contracts import Bid, SettlementRecord, TaskContract, TaskRequirements
from .data import gen_synthetic, load_mnist_subset
from .flcore import (
    ClientUpdate, DatasetShard, GlobalStep, ModelWeights, TrainConfig, decrypt_model,
    encrypt_model, encrypt_update, encrypted_fedavg, evaluate, fedavg, init_model, local_train,
)
from .flcore.checkpoint import to_bytes
from .ledger import GAS_PRICE_AVG, Address, Ledger
from .seeding import derive_seed, rng_for


class RoundAborted(RuntimeError):
    """Every selected client dropped out, so there is nothing to aggregate."""


class Mode(str, enum.Enum):
    OPTIMIZED = "optimized"
    RANDOM = "random"


# (low, high) uniform ranges per stratum; rates in KB/s
RELIABLE = {"compute": (320.0, 480.0), "bandwidth": (150.0, 300.0),
            "data_kb": (3000.0, 4000.0), "dropout": (0.0, 0.02)}
UNRELIABLE = {"compute": (120.0, 200.0), "bandwidth": (20.0, 60.0),
              "data_kb": (600.0, 1500.0), "dropout": (0.1, 0.3)}

ROUND_OVERHEAD_S = 1.0
BID_INTERVAL_S = 0.5
BID_STEP = 0.05


@dataclass(frozen=True)
class ClientProfile:
    address: Address | None
    compute_rate: float
    bandwidth: float
    data_size_kb: float
    data_type: str
    dropout_prob: float
    bid_price: int
    bid_margin: float
    stratum: str = "reliable"

    def __post_init__(self):
        if not (self.compute_rate > 0 and self.bandwidth > 0):
            raise ValueError("rates must be positive")
        if not 0 <= self.dropout_prob <= 1:
            raise ValueError("dropout_prob must lie in [0, 1]")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "mnist"
    mnist_dir: str | None = None
    train_size: int = 5000
    test_size: int = 1000
    classes: int = 10
    feature_dim: int = 32
    separation: float = 3.0

    def load(self, seed: int) -> tuple[DatasetShard, DatasetShard]:
        if self.kind == "mnist":
            return load_mnist_subset(self.mnist_dir, self.train_size, self.test_size, seed)
        if self.kind == "synthetic":
            return gen_synthetic(self.classes, self.train_size, self.feature_dim, self.separation,
                                 seed, self.test_size)
        raise ValueError(f"unknown dataset kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentPlan:
    n_clients: int = 30
    rounds: int = 20
    selection_mode: Mode = Mode.OPTIMIZED
    selection_count: int | None = None
    selection_fraction: float = 0.2
    encryption: bool = False
    seed: int = 0
    train_config: TrainConfig = TrainConfig()
    eta_global: float = 1.0
    hidden: tuple[int, ...] = ()
    unreliable_fraction: float = 0.3
    dataset: DatasetSpec = DatasetSpec()
    ckks_preset: str = "full"
    gas_price: float = GAS_PRICE_AVG
    # auction terms; min_data_size 0 means half the median shard size
    min_compute: float = 300.0
    min_bandwidth: float = 120.0
    min_data_size: int = 0
    data_type: str = "image"
    budget: int = 1_000_000_000
    security_deposit: int = 10_000_000
    closing_time: float = 600.0
    early_stop: bool = False

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be at least 1")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        object.__setattr__(self, "selection_mode", Mode(self.selection_mode))
        if self.selection_count is None and not 0 < self.selection_fraction <= 1:
            raise ValueError("selection_fraction must lie in (0, 1]")
        if not 0 < self.k <= self.n_clients:
            raise ValueError(f"selection count {self.k} outside 1..{self.n_clients}")
        if not 0 <= self.unreliable_fraction <= 1:
            raise ValueError("unreliable_fraction must lie in [0, 1]")

    @property
    def k(self) -> int:
        if self.selection_count is not None:
            return int(self.selection_count)
        return max(1, round(self.selection_fraction * self.n_clients))


@dataclass(frozen=True)
class RoundTrace:
    round_index: int
    mode: str
    encrypted: bool
    selected: tuple[Address, ...]
    dropouts: tuple[Address, ...]
    completion_times: dict
    wall_time: float
    virtual_time: float
    accuracy: float
    model_digest: bytes
    gas_spent: int


# ---------------------------------------------------------------- building blocks

def partition_iid(dataset: DatasetShard, n_clients: int, sizes, seed: int) -> list[DatasetShard]:
    """Disjoint shards of the requested sizes drawn from one random permutation."""
    sizes = [int(s) for s in sizes]
    if len(sizes) != n_clients:
        raise ValueError(f"{len(sizes)} sizes for {n_clients} clients")
    if min(sizes, default=0) < 0:
        raise ValueError("shard sizes must be non-negative")
    if sum(sizes) > len(dataset):
        raise ValueError(f"requested {sum(sizes)} samples from a dataset of {len(dataset)}")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    bounds = np.cumsum([0] + sizes)
    return [dataset.subset(perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def completion_time(p: ClientProfile, model_bytes: int, overhead: float = ROUND_OVERHEAD_S) -> float:
    return p.data_size_kb / p.compute_rate + (model_bytes / 1024) / p.bandwidth + overhead


def random_selection(clients, count: int, seed: int) -> list:
    clients = list(clients)
    if not 0 <= count <= len(clients):
        raise ValueError(f"cannot choose {count} of {len(clients)} clients")
    idx = np.sort(np.random.default_rng(seed).choice(len(clients), size=count, replace=False))
    return [clients[i] for i in idx]


def draw_profile(rng: np.random.Generator, stratum: str, data_type: str = "image",
                 address: Address | None = None) -> ClientProfile:
    table = RELIABLE if stratum == "reliable" else UNRELIABLE
    u = {key: float(rng.uniform(*bounds)) for key, bounds in table.items()}
    return ClientProfile(
        address=address,
        compute_rate=u["compute"],
        bandwidth=u["bandwidth"],
        data_size_kb=u["data_kb"],
        data_type=data_type,
        dropout_prob=u["dropout"],
        bid_price=int(rng.integers(5_000_000, 20_000_000)),
        bid_margin=float(rng.uniform(0.0, 0.3)),
        stratum=stratum,
    )


def make_population(ledger: Ledger, plan: ExperimentPlan) -> list[ClientProfile]:
    rng = rng_for(plan.seed, "population")
    n_bad = round(plan.n_clients * plan.unreliable_fraction)
    strata = rng.permutation(["unreliable"] * n_bad + ["reliable"] * (plan.n_clients - n_bad))
    out = []
    for stratum in strata:
        addr = ledger.create_account(plan.security_deposit + 1_000_000_000)
        out.append(draw_profile(rng, str(stratum), plan.data_type, addr))
    return out


def shard_sizes(profiles, total: int) -> list[int]:
    kb = np.array([p.data_size_kb for p in profiles])
    return [int(s) for s in np.floor(total * kb / kb.sum())]


def meets(p: ClientProfile, n_samples: int, req: TaskRequirements) -> bool:
    return (p.compute_rate >= req.min_compute and p.bandwidth >= req.min_bandwidth
            and n_samples >= req.min_data_size and p.data_type == req.data_type)


# ---------------------------------------------------------------- experiment state

@dataclass
class ExperimentState:
    plan: ExperimentPlan
    ledger: Ledger
    clock: VirtualClock
    contract: TaskContract
    publisher: Address
    profiles: list[ClientProfile]
    shards: dict[Address, DatasetShard]
    test: DatasetShard
    requirements: TaskRequirements
    model: ModelWeights
    shape: tuple[int, ...]
    keys: ckks.KeyPair | None = None
    enc_model: list | None = None
    winners: list[Address] = field(default_factory=list)
    active: list[Address] = field(default_factory=list)
    traces: list[RoundTrace] = field(default_factory=list)
    settlement: SettlementRecord | None = None
    rewards: dict[Address, bytes] = field(default_factory=dict)
    finished: bool = False

    @property
    def profile_by_addr(self) -> dict[Address, ClientProfile]:
        return {p.address: p for p in self.profiles}


def requirements_for(plan: ExperimentPlan, sizes) -> TaskRequirements:
    min_data = plan.min_data_size or max(1, int(0.5 * float(np.median(sizes))))
    return TaskRequirements(
        min_compute=plan.min_compute,
        min_bandwidth=plan.min_bandwidth,
        data_type=plan.data_type,
        min_data_size=min_data,
        iterations=max(1, plan.rounds),
        budget=plan.budget,
        security_deposit=plan.security_deposit,
        closing_time=plan.closing_time,
        top_x=plan.k,
    )


def prepare_experiment(plan: ExperimentPlan, data: tuple[DatasetShard, DatasetShard] | None = None) -> ExperimentState:
    train, test = data if data is not None else plan.dataset.load(derive_seed(plan.seed, "dataset"))
    ledger = Ledger()
    clock = VirtualClock()
    contract = TaskContract(ledger, clock, gas_price=plan.gas_price)
    publisher = ledger.create_account(plan.budget + 100_000_000_000)
    profiles = make_population(ledger, plan)
    sizes = shard_sizes(profiles, len(train))
    parts = partition_iid(train, plan.n_clients, sizes, derive_seed(plan.seed, "partition"))
    shape = (train.features.shape[1], *plan.hidden, train.class_count)
    model = init_model(shape, derive_seed(plan.seed, "init"))
    state = ExperimentState(
        plan, ledger, clock, contract, publisher, profiles,
        {p.address: s for p, s in zip(profiles, parts)}, test,
        requirements_for(plan, sizes), model, shape,
    )
    if plan.encryption:
        params = ckks.preset(plan.ckks_preset)
        state.keys = ckks.keygen(params, derive_seed(plan.seed, "ckks", "keygen"))
        state.enc_model = encrypt_model(model, state.keys.public_key, derive_seed(plan.seed, "ckks", "w0"))
    ledger.seal_block()
    return state


# ---------------------------------------------------------------- auction

def _offer(p: ClientProfile, n_samples: int, req: TaskRequirements, lam: float) -> Bid:
    return Bid(
        p.address,
        req.min_compute + lam * (p.compute_rate - req.min_compute),
        req.min_bandwidth + lam * (p.bandwidth - req.min_bandwidth),
        int(req.min_data_size + lam * (n_samples - req.min_data_size)),
        p.data_type,
        p.bid_price,
    )


def _improving_bid(contract: TaskContract, p, n_samples, req, lam, best):
    """Smallest offer at or above ``lam`` (in BID_STEP increments past the
    break-even point) that beats ``best``; None if capacity runs out."""
    if best is not None:
        s0 = contract.score(_offer(p, n_samples, req, 0.0))
        slope = contract.score(_offer(p, n_samples, req, 1.0)) - s0
        if slope <= 0:
            return None, lam
        lam = max(lam, (best - s0) / slope + BID_STEP)
    while lam <= 1.0:
        bid = _offer(p, n_samples, req, lam)
        if best is None or contract.score(bid) > best:
            return bid, lam
        lam += BID_STEP
    return None, lam


def run_auction_phase(state: ExperimentState) -> list[Address]:
    """Register, bid and select in optimized mode; a uniform draw otherwise."""
    plan = state.plan
    addrs = [p.address for p in state.profiles]
    if plan.selection_mode is Mode.RANDOM:
        state.winners = random_selection(addrs, plan.k, derive_seed(plan.seed, "select"))
        return list(state.winners)

    c, req = state.contract, state.requirements
    c.register_publisher(state.publisher)
    for p in sorted(state.profiles, key=lambda p: p.address):
        c.register_client(p.address, plan.security_deposit)
    c.open_auction(state.publisher, req)

    bidders = sorted(
        (p for p in state.profiles if meets(p, len(state.shards[p.address]), req)),
        key=lambda p: p.address,
    )
    margin = {p.address: p.bid_margin for p in bidders}
    leader = None
    for _ in range(20 * max(1, len(bidders))):
        placed = False
        for p in bidders:
            if p.address == leader:
                continue
            bid, lam = _improving_bid(c, p, len(state.shards[p.address]), req, margin[p.address], c.best_score)
            if bid is None:
                continue
            state.clock.advance(BID_INTERVAL_S)
            c.place_bid(p.address, bid)
            margin[p.address] = lam
            leader = p.address
            placed = True
        if not placed:
            break
    state.clock.advance_to(max(state.clock.now, req.closing_time))
    state.winners = c.select_top_x(state.publisher)
    c.begin_training(state.publisher)
    state.active = list(state.winners)
    state.ledger.seal_block()
    return list(state.winners)


# ---------------------------------------------------------------- rounds

def _serialize_chunks(chunks) -> bytes:
    return b"".join(ckks.dumps(c) for c in chunks)


def _plateaued(accuracies, window: int = 3, tol: float = 1e-3) -> bool:
    if len(accuracies) <= window:
        return False
    return accuracies[-1] - accuracies[-1 - window] < tol


def run_round(state: ExperimentState) -> RoundTrace:
    plan = state.plan
    r = len(state.traces)
    t0 = time.perf_counter()
    sink_before = state.ledger.balance(state.ledger.fee_sink)
    profile = state.profile_by_addr

    selected = sorted(state.winners if plan.selection_mode is Mode.RANDOM else state.active)
    dropouts = [a for a in selected if rng_for(plan.seed, "dropout", r, a.hex()).random() < profile[a].dropout_prob]
    survivors = [a for a in selected if a not in dropouts]
    if plan.selection_mode is Mode.OPTIMIZED:
        for a in dropouts:
            state.contract.mark_dropout(state.publisher, a)
            state.active.remove(a)
    if not survivors:
        raise RoundAborted(f"round {r}: all {len(selected)} selected clients dropped out")

    # clients recover the current global model
    if plan.encryption:
        pk, sk = state.keys.public_key, state.keys.secret_key
        w_local = decrypt_model(state.enc_model, sk, state.model.values.size, state.shape)
    else:
        w_local = state.model
    updates = []
    for a in survivors:
        cfg = replace(plan.train_config, seed=derive_seed(plan.seed, "train", r, a.hex()))
        updates.append(local_train(w_local, state.shards[a], cfg))

    step = GlobalStep(plan.eta_global)
    if plan.encryption:
        enc = [encrypt_update(u, pk, derive_seed(plan.seed, "encrypt", r, a.hex())) for a, u in zip(survivors, updates)]
        upload_bytes = len(_serialize_chunks(enc[0].chunks))
        state.enc_model = encrypted_fedavg(state.enc_model, enc, step, pk)
        checkpoint = _serialize_chunks(state.enc_model)
        state.model = decrypt_model(state.enc_model, sk, state.model.values.size, state.shape)
    else:
        state.model = fedavg(state.model, updates, step)
        checkpoint = to_bytes(state.model)
        upload_bytes = 8 * state.model.values.size

    accuracy = evaluate(state.model, state.test)
    key = state.ledger.content_put(checkpoint)
    final = r == plan.rounds - 1 or (plan.early_stop and _plateaued([t.accuracy for t in state.traces] + [accuracy]))
    if plan.selection_mode is Mode.OPTIMIZED:
        state.contract.add_model_hash(state.publisher, key, final=final)

    times = {a: completion_time(profile[a], upload_bytes) for a in survivors}
    duration = max(times.values())
    state.clock.advance(duration)
    state.ledger.seal_block()
    trace = RoundTrace(
        round_index=r,
        mode=plan.selection_mode.value,
        encrypted=plan.encryption,
        selected=tuple(selected),
        dropouts=tuple(dropouts),
        completion_times=times,
        wall_time=time.perf_counter() - t0,
        virtual_time=duration,
        accuracy=accuracy,
        model_digest=key,
        gas_spent=state.ledger.balance(state.ledger.fee_sink) - sink_before,
    )
    state.traces.append(trace)
    state.finished = final
    return trace


def finish_experiment(state: ExperimentState) -> dict:
    """Settle the contract (optimized mode), pay out rewards and summarize."""
    plan = state.plan
    if plan.selection_mode is Mode.OPTIMIZED and state.traces:
        c = state.contract
        state.settlement = c.settle(state.publisher)
        for a in state.winners:
            if a not in c.state.dropped:
                state.rewards[a] = c.get_reward(a)
        state.ledger.seal_block()
    s = state.settlement
    traces = state.traces
    return {
        "mode": plan.selection_mode.value,
        "encrypted": plan.encryption,
        "seed": plan.seed,
        "n_clients": plan.n_clients,
        "selection_count": plan.k,
        "rounds_planned": plan.rounds,
        "rounds_completed": len(traces),
        "winners": len(state.winners),
        "total_dropouts": sum(len(t.dropouts) for t in traces),
        "final_accuracy": traces[-1].accuracy if traces else evaluate(state.model, state.test),
        "total_wall_time_s": sum(t.wall_time for t in traces),
        "total_virtual_time_s": state.clock.now,
        "total_gas_gwei": state.ledger.balance(state.ledger.fee_sink),
        "blocks": len(state.ledger.blocks),
        "chain_valid": state.ledger.chain_verify(),
        "final_model_digest": traces[-1].model_digest.hex() if traces else "",
        "service_fees_gwei": s.fees_paid if s else 0,
        "deposits_refunded_gwei": s.deposits_refunded if s else 0,
        "deposits_forfeited_gwei": s.deposits_forfeited if s else 0,
        "publisher_refund_gwei": s.publisher_refund if s else 0,
    }


def run_experiment(plan: ExperimentPlan, data=None) -> tuple[list[RoundTrace], dict]:
    state = prepare_experiment(plan, data)
    run_auction_phase(state)
    for _ in range(plan.rounds):
        run_round(state)
        if state.finished:
            break
    return state.traces, finish_experiment(state)


# ---------------------------------------------------------------- output

TRACE_HEADER = ("round", "mode", "encrypted", "selected", "dropouts", "accuracy",
                "wall_time_s", "virtual_time_s", "gas_gwei", "model_digest")


def trace_csv(traces, record_wall_time: bool = False) -> str:
    """Trace table; wall time is written as ``nan`` unless asked for, since it
    is the only non-reproducible column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for t in traces:
        w.writerow([
            t.round_index, t.mode, int(t.encrypted),
            ";".join(a.hex() for a in t.selected),
            ";".join(a.hex() for a in t.dropouts),
            f"{t.accuracy:.6f}",
            f"{t.wall_time:.6f}" if record_wall_time else "nan",
            f"{t.virtual_time:.6f}",
            t.gas_spent,
            t.model_digest.hex(),
        ])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def summary_text(summary: dict, record_wall_time: bool = False) -> str:
    lines = []
    for k, v in summary.items():
        if k == "total_wall_time_s" and not record_wall_time:
            v = float("nan")
        lines.append(f"{k} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def parse_summary(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if " = " not in line:
            raise ValueError(f"line {n}: expected 'key = value'")
        k, v = line.split(" = ", 1)
        out[k] = v
    return out
