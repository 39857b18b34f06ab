"""Replay contract calls from a text script.

One call per line: ``<virtual_time> <caller> <op> <args...>``. Callers are
free-form aliases bound to fresh ledger accounts by the ``account`` op.
Blank lines and ``#`` comments are ignored. Supported ops::

    account <balance>
    register_publisher
    register_client <deposit>
    open_auction key=value ...        # TaskRequirements fields
    place_bid key=value ...           # compute bandwidth data_size data_type price [iterations]
    select_top_x
    begin_training
    mark_dropout <client-alias>
    add_model_hash <content> [final]  # content is text:<utf8> or hex:<bytes>
    settle
    get_reward

A reverted call is recorded in the outcome log and replay continues; any
other malformed line raises :class:`ScriptError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .clock import VirtualClock
from .contracts import Bid, SettlementRecord, TaskContract, TaskRequirements
from .ledger import Address, Ledger, Revert


class ScriptError(ValueError):
    pass


@dataclass
class ReplayResult:
    ledger: Ledger
    contract: TaskContract
    aliases: dict[str, Address]
    outcomes: list[tuple[int, str, str]] = field(default_factory=list)
    settlement: SettlementRecord | None = None
    rewards: dict[str, bytes] = field(default_factory=dict)

    def summary_lines(self) -> list[str]:
        names = {addr: alias for alias, addr in self.aliases.items()}
        out = [f"{n} {op} {status}" for n, op, status in self.outcomes]
        acct = self.ledger.accounts
        for alias in sorted(self.aliases):
            a = acct[self.aliases[alias]]
            out.append(f"balance {alias} {a.balance} {a.escrow}")
        if self.settlement:
            s = self.settlement
            fees = " ".join(f"{names[a]}={v}" for a, v in sorted(s.service_fees.items(), key=lambda kv: names[kv[0]]))
            out.append(f"settlement fees[{fees}] refunded={s.deposits_refunded} forfeited={s.deposits_forfeited} "
                       f"publisher_refund={s.publisher_refund} other={s.other_deposits_released}")
        return out


_REQ_TYPES = {f.name: f.type for f in fields(TaskRequirements)}


def _kv(args, line_no) -> dict[str, str]:
    out = {}
    for a in args:
        if "=" not in a:
            raise ScriptError(f"line {line_no}: expected key=value, got {a!r}")
        k, v = a.split("=", 1)
        out[k] = v
    return out


def _requirements(args, line_no) -> TaskRequirements:
    kv = _kv(args, line_no)
    missing = set(_REQ_TYPES) - set(kv)
    unknown = set(kv) - set(_REQ_TYPES)
    if missing or unknown:
        raise ScriptError(f"line {line_no}: missing {sorted(missing)} unknown {sorted(unknown)}")
    conv = {"float": float, "int": int, "str": str}
    return TaskRequirements(**{k: conv[_REQ_TYPES[k]](v) for k, v in kv.items()})


def _content(token: str, line_no) -> bytes:
    kind, _, body = token.partition(":")
    if kind == "text":
        return body.encode()
    if kind == "hex":
        return bytes.fromhex(body)
    raise ScriptError(f"line {line_no}: content must be text:... or hex:...")


def replay(script: str, ledger: Ledger | None = None, gas_price: float | None = None) -> ReplayResult:
    ledger = ledger or Ledger()
    clock = VirtualClock()
    kwargs = {} if gas_price is None else {"gas_price": gas_price}
    contract = TaskContract(ledger, clock, **kwargs)
    res = ReplayResult(ledger, contract, {})

    def addr(alias, line_no):
        try:
            return res.aliases[alias]
        except KeyError:
            raise ScriptError(f"line {line_no}: unknown caller {alias!r}") from None

    for line_no, raw in enumerate(script.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ScriptError(f"line {line_no}: expected '<time> <caller> <op> ...'")
        t, caller, op, args = float(parts[0]), parts[1], parts[2], parts[3:]
        try:
            clock.advance_to(t)
        except ValueError as exc:
            raise ScriptError(f"line {line_no}: {exc}") from None
        try:
            if op == "account":
                if caller in res.aliases:
                    raise ScriptError(f"line {line_no}: alias {caller!r} already bound")
                res.aliases[caller] = ledger.create_account(int(args[0]))
            elif op == "register_publisher":
                contract.register_publisher(addr(caller, line_no))
            elif op == "register_client":
                contract.register_client(addr(caller, line_no), int(args[0]))
            elif op == "open_auction":
                contract.open_auction(addr(caller, line_no), _requirements(args, line_no))
            elif op == "place_bid":
                kv = _kv(args, line_no)
                who = addr(caller, line_no)
                contract.place_bid(who, Bid(
                    who, float(kv["compute"]), float(kv["bandwidth"]), int(kv["data_size"]),
                    kv["data_type"], int(kv["price"]),
                    int(kv["iterations"]) if "iterations" in kv else None,
                ))
            elif op == "select_top_x":
                contract.select_top_x(addr(caller, line_no))
            elif op == "begin_training":
                contract.begin_training(addr(caller, line_no))
            elif op == "mark_dropout":
                contract.mark_dropout(addr(caller, line_no), addr(args[0], line_no))
            elif op == "add_model_hash":
                key = ledger.content_put(_content(args[0], line_no))
                contract.add_model_hash(addr(caller, line_no), key, final="final" in args[1:])
            elif op == "settle":
                res.settlement = contract.settle(addr(caller, line_no))
            elif op == "get_reward":
                res.rewards[caller] = contract.get_reward(addr(caller, line_no))
            else:
                raise ScriptError(f"line {line_no}: unknown op {op!r}")
        except Revert as exc:
            res.outcomes.append((line_no, op, f"revert: {exc}"))
        except (IndexError, KeyError) as exc:
            raise ScriptError(f"line {line_no}: malformed arguments ({exc})") from None
        else:
            res.outcomes.append((line_no, op, "ok"))
    return res


def demo_script(seed: int = 0, n_clients: int = 6, top_x: int = 3, rounds: int = 3) -> str:
    """A complete lifecycle with competing bids, one dropout and a settlement.

    Clients bid in turn, each offering more of every resource than the one
    before, so the last bidder leads and is the one that drops out. Two
    extra bids (under-resourced, non-improving) exercise the revert paths.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    deposit, budget = 10_000_000, 1_000_000_000
    lines = [
        "# generated lifecycle",
        "0 pub account 100000000000",
        "0 pub register_publisher",
    ]
    for i in range(n_clients):
        lines.append(f"0 c{i} account 2000000000")
        lines.append(f"0 c{i} register_client {deposit}")
    lines.append(
        f"1 pub open_auction min_compute=300 min_bandwidth=120 data_type=image min_data_size=100 "
        f"iterations={rounds} budget={budget} security_deposit={deposit} closing_time=100 top_x={top_x}"
    )
    t, compute, bw, size = 2.0, 300.0, 120.0, 100
    for i in range(n_clients):
        compute += float(rng.uniform(5, 40))
        bw += float(rng.uniform(5, 20))
        size += int(rng.integers(10, 60))
        price = int(rng.integers(5_000_000, 20_000_000))
        lines.append(f"{t:.1f} c{i} place_bid compute={compute:.2f} bandwidth={bw:.2f} data_size={size} "
                     f"data_type=image price={price}")
        t += 1.0
    lines.append(f"{t:.1f} c0 place_bid compute=100 bandwidth=200 data_size=200 data_type=image price=1")
    lines.append(f"{t + 1:.1f} c1 place_bid compute=300 bandwidth=120 data_size=100 data_type=image price=1")
    lines += ["100 pub select_top_x", "100 pub begin_training"]
    dropped = f"c{n_clients - 1}"
    lines.append(f"101 pub mark_dropout {dropped}")
    for r in range(rounds):
        final = " final" if r == rounds - 1 else ""
        lines.append(f"{102 + r} pub add_model_hash text:round-{r}-seed-{seed}{final}")
    lines.append(f"{102 + rounds} pub settle")
    for i in range(n_clients):
        lines.append(f"{103 + rounds} c{i} get_reward")
    return "\n".join(lines) + "\n"
