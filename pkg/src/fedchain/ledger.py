"""In-process stand-in for the blockchain layer.

Accounts hold integer gwei in a spendable balance and a locked escrow. Every
contract call goes through :meth:`Ledger.submit`, which charges
``ceil(gas_used * gas_price)`` gwei into a fee-sink account and appends a
transaction to the open block. Blocks are sealed explicitly and hash-linked
with SHA-256, which is also the digest used by the content store.

Gwei is the only unit; nothing converts to ether.
"""

from __future__ import annotations

import csv
import hashlib
import io
import struct
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, Decimal

GAS_PRICE_AVG = 23.49
GAS_PRICE_MIN = 11.27

# Relative ordering: add_model_hash/get_rewards high, start_auction/close_auction
# moderate, registrations and start_forward_bidding/select_top_x low.
# place_bid, mark_dropout and settle are filled in by analogy.
# add_model_hash * 23.49 = 8,962,515.54 gwei.
DEFAULT_GAS_TABLE = {
    "task_publisher_registration": 46_218,
    "client_registration": 51_907,
    "start_auction": 142_635,
    "start_forward_bidding": 44_371,
    "place_bid": 88_412,
    "select_top_x": 58_764,
    "close_auction": 119_083,
    "mark_dropout": 67_230,
    "add_model_hash": 381_546,
    "settle": 164_925,
    "get_rewards": 352_118,
}

ZERO_DIGEST = bytes(32)


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class LedgerError(Exception):
    pass


class Revert(LedgerError):
    """The call failed and left no trace in ledger state."""


class NotFound(LedgerError, KeyError):
    pass


@dataclass(frozen=True, order=True)
class Address:
    raw: bytes

    def __post_init__(self):
        if len(self.raw) != 20:
            raise ValueError("address must be 20 bytes")

    def hex(self) -> str:
        return self.raw.hex()

    def __str__(self) -> str:
        return "0x" + self.raw.hex()

    @classmethod
    def from_hex(cls, text: str) -> Address:
        return cls(bytes.fromhex(text.removeprefix("0x")))


@dataclass
class Account:
    address: Address
    balance: int = 0
    escrow: int = 0


@dataclass(frozen=True)
class Transaction:
    caller: Address
    op_name: str
    payload_digest: bytes
    gas_used: int
    block_height: int
    fee: int = 0

    def encode(self) -> bytes:
        op = self.op_name.encode()
        return (
            self.caller.raw
            + struct.pack("<H", len(op)) + op
            + self.payload_digest
            + struct.pack("<QQQ", self.gas_used, self.block_height, self.fee)
        )


@dataclass(frozen=True)
class Block:
    height: int
    parent_digest: bytes
    transactions: tuple[Transaction, ...]
    digest: bytes

    @staticmethod
    def compute_digest(height: int, parent: bytes, txs) -> bytes:
        h = hashlib.sha256()
        h.update(struct.pack("<Q", height))
        h.update(parent)
        h.update(struct.pack("<Q", len(txs)))
        for tx in txs:
            enc = tx.encode()
            h.update(struct.pack("<I", len(enc)))
            h.update(enc)
        return h.digest()


@dataclass(frozen=True)
class Receipt:
    op: str
    amount: int = 0
    tx: Transaction | None = None


def fee_for(gas_used: int, gas_price: float) -> int:
    """Gas fee in whole gwei, rounded up."""
    cost = Decimal(gas_used) * Decimal(str(gas_price))
    return int(cost.to_integral_value(rounding=ROUND_CEILING))


@dataclass
class Ledger:
    gas_table: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_GAS_TABLE))
    allow_empty_blocks: bool = True
    accounts: dict[Address, Account] = field(default_factory=dict)
    blocks: list[Block] = field(default_factory=list)
    pending: list[Transaction] = field(default_factory=list)
    store: dict[bytes, bytes] = field(default_factory=dict)
    minted: int = 0
    _counter: int = 0

    def __post_init__(self):
        for op, gas in self.gas_table.items():
            if not isinstance(gas, int) or gas <= 0:
                raise ValueError(f"gas for {op!r} must be a positive integer")
        self.fee_sink = self._new_address(b"fee-sink")
        self.accounts[self.fee_sink] = Account(self.fee_sink)

    # ------------------------------------------------------------ accounts

    def _new_address(self, tag: bytes = b"account") -> Address:
        self._counter += 1
        return Address(digest(tag + struct.pack("<Q", self._counter))[:20])

    def create_account(self, initial_balance: int = 0) -> Address:
        if initial_balance < 0:
            raise ValueError("initial balance must be non-negative")
        addr = self._new_address()
        self.accounts[addr] = Account(addr, int(initial_balance))
        self.minted += int(initial_balance)
        return addr

    def account(self, addr: Address) -> Account:
        try:
            return self.accounts[addr]
        except KeyError:
            raise Revert(f"unknown account {addr}") from None

    def balance(self, addr: Address) -> int:
        return self.account(addr).balance

    def escrow(self, addr: Address) -> int:
        return self.account(addr).escrow

    def total_supply(self) -> int:
        """Balances plus escrows over every account, fee sink included."""
        return sum(a.balance + a.escrow for a in self.accounts.values())

    @staticmethod
    def _amount(amount) -> int:
        if isinstance(amount, bool) or not isinstance(amount, int) or amount < 0:
            raise Revert(f"amount must be a non-negative integer, got {amount!r}")
        return amount

    def transfer(self, src: Address, dst: Address, amount: int) -> Receipt:
        amount = self._amount(amount)
        a, b = self.account(src), self.account(dst)
        if a.balance < amount:
            raise Revert(f"insufficient funds: {a.balance} < {amount}")
        a.balance -= amount
        b.balance += amount
        return Receipt("transfer", amount)

    def escrow_lock(self, addr: Address, amount: int) -> Receipt:
        amount = self._amount(amount)
        acct = self.account(addr)
        if acct.balance < amount:
            raise Revert(f"insufficient funds to lock: {acct.balance} < {amount}")
        acct.balance -= amount
        acct.escrow += amount
        return Receipt("escrow_lock", amount)

    def escrow_release(self, addr: Address, amount: int, to: Address | None = None) -> Receipt:
        amount = self._amount(amount)
        acct = self.account(addr)
        dst = self.account(addr if to is None else to)
        if acct.escrow < amount:
            raise Revert(f"insufficient escrow: {acct.escrow} < {amount}")
        acct.escrow -= amount
        dst.balance += amount
        return Receipt("escrow_release", amount)

    # ------------------------------------------------------------ metering

    def gas_for(self, op_name: str) -> int:
        try:
            return self.gas_table[op_name]
        except KeyError:
            raise LedgerError(f"unknown operation {op_name!r}") from None

    def fee(self, op_name: str, gas_price: float) -> int:
        return fee_for(self.gas_for(op_name), gas_price)

    def submit(self, caller: Address, op_name: str, payload: bytes = b"", gas_price: float = GAS_PRICE_AVG) -> Transaction:
        gas = self.gas_for(op_name)
        if gas_price < 0:
            raise Revert("gas price must be non-negative")
        fee = fee_for(gas, gas_price)
        acct = self.account(caller)
        if acct.balance < fee:
            raise Revert(f"insufficient funds for gas: {acct.balance} < {fee}")
        acct.balance -= fee
        self.accounts[self.fee_sink].balance += fee
        tx = Transaction(caller, op_name, digest(payload), gas, len(self.blocks), fee)
        self.pending.append(tx)
        return tx

    def seal_block(self) -> Block:
        if not self.pending and not self.allow_empty_blocks:
            raise LedgerError("no pending transactions")
        height = len(self.blocks)
        parent = self.blocks[-1].digest if self.blocks else ZERO_DIGEST
        txs = tuple(self.pending)
        block = Block(height, parent, txs, Block.compute_digest(height, parent, txs))
        self.blocks.append(block)
        self.pending = []
        return block

    def chain_verify(self) -> bool:
        parent = ZERO_DIGEST
        for height, block in enumerate(self.blocks):
            if block.height != height or block.parent_digest != parent:
                return False
            if any(tx.block_height != height for tx in block.transactions):
                return False
            if Block.compute_digest(block.height, block.parent_digest, block.transactions) != block.digest:
                return False
            parent = block.digest
        return True

    # ------------------------------------------------------------ content store

    def content_put(self, data: bytes) -> bytes:
        key = digest(data)
        self.store.setdefault(key, bytes(data))
        return key

    def content_get(self, key: bytes) -> bytes:
        try:
            return self.store[key]
        except KeyError:
            raise NotFound(f"no content for digest {key.hex()}") from None

    def has_content(self, key: bytes) -> bool:
        return key in self.store

    # ------------------------------------------------------------ exports

    def snapshot_text(self) -> str:
        """Line-oriented dump: accounts sorted by address, then every block."""
        lines = ["[accounts]"]
        for addr in sorted(self.accounts):
            acct = self.accounts[addr]
            tag = " fee-sink" if addr == self.fee_sink else ""
            lines.append(f"{addr.hex()} {acct.balance} {acct.escrow}{tag}")
        for block in self.blocks:
            lines.append(f"[block {block.height}]")
            lines.append(f"parent {block.parent_digest.hex()}")
            lines.append(f"digest {block.digest.hex()}")
            for tx in block.transactions:
                lines.append(f"tx {tx.caller.hex()} {tx.op_name} {tx.payload_digest.hex()} {tx.gas_used} {tx.fee}")
        return "\n".join(lines) + "\n"


def parse_snapshot(text: str) -> dict:
    """Read back :meth:`Ledger.snapshot_text` into plain dicts (for checks)."""
    accounts, blocks, section = {}, [], None
    for line in text.splitlines():
        if line == "[accounts]":
            section = "accounts"
        elif line.startswith("[block "):
            section = "block"
            blocks.append({"height": int(line[7:-1]), "txs": []})
        elif section == "accounts":
            addr, bal, esc, *_ = line.split()
            accounts[addr] = (int(bal), int(esc))
        elif section == "block":
            key, rest = line.split(" ", 1)
            if key == "tx":
                blocks[-1]["txs"].append(rest.split())
            else:
                blocks[-1][key] = rest
        else:
            raise ValueError(f"unexpected line {line!r}")
    return {"accounts": accounts, "blocks": blocks}


GAS_REPORT_HEADER = ("op", "gas_used", "cost_min_gwei", "cost_avg_gwei")


def gas_cost_report(gas_table: dict[str, int], prices: dict[str, float] | None = None) -> dict[str, dict]:
    """Per-op cost in gwei at the minimum and average gas prices."""
    prices = prices or {"min": GAS_PRICE_MIN, "avg": GAS_PRICE_AVG}
    return {
        op: {
            "gas_used": gas,
            "cost_min_gwei": gas * prices["min"],
            "cost_avg_gwei": gas * prices["avg"],
        }
        for op, gas in gas_table.items()
    }


def gas_report_csv(report: dict[str, dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GAS_REPORT_HEADER)
    for op in sorted(report, key=lambda k: (-report[k]["gas_used"], k)):
        row = report[op]
        w.writerow([op, row["gas_used"], f"{row['cost_min_gwei']:.2f}", f"{row['cost_avg_gwei']:.2f}"])
    return buf.getvalue()
