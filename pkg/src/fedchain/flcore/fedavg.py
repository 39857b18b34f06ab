"""Federated averaging, in the clear and over CKKS ciphertexts.

The server step is ``w_next = w + eta * sum(n_i * delta_i) / sum(n_i)``.

Encrypted path: each client's delta is packed into ``ceil(P / slots)``
ciphertexts. The server multiplies every chunk by a plaintext constant
``eta * n_i / sum(n)``, sums, rescales once and folds in the current model.
The constants are encoded at a scale equal to the prime that the rescale
drops, so the aggregate comes back at exactly the fresh scale. That lets the
current model be folded in either as a plaintext or as a ciphertext left over
from the previous round; the server never needs the secret key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import ckks
from ..seeding import derive_seed
from .model import ModelWeights, ShapeError, TrainConfig, DatasetShard, train_sgd


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    delta: np.ndarray
    n_samples: int

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(delta)):
            raise ValueError("update delta must be finite")
        if int(self.n_samples) < 1:
            raise ValueError("n_samples must be at least 1")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "n_samples", int(self.n_samples))


@dataclass(frozen=True)
class GlobalStep:
    eta_global: float = 1.0

    def __post_init__(self):
        if not self.eta_global > 0:
            raise ValueError("eta_global must be positive")


@dataclass(frozen=True)
class EncryptedUpdate:
    chunks: tuple[ckks.Ciphertext, ...]
    n_samples: int
    param_count: int

    def __post_init__(self):
        if not self.chunks:
            raise ValueError("encrypted update has no chunks")
        first = self.chunks[0]
        if len(self.chunks) * first.params.slots < self.param_count:
            raise ValueError("chunks cannot hold param_count values")
        for c in self.chunks[1:]:
            if c.level != first.level or c.scale != first.scale or c.params != first.params:
                raise ckks.AlignmentError("chunks disagree on level, scale or parameters")


def local_train(w: ModelWeights, shard: DatasetShard, cfg: TrainConfig) -> ClientUpdate:
    """Run ``cfg.local_epochs`` of SGD with momentum and report the change."""
    trained, _ = train_sgd(w, shard, cfg)
    return ClientUpdate(trained.values - w.values, len(shard))


def fedavg(w_t: ModelWeights, updates: Sequence[ClientUpdate], step: GlobalStep = GlobalStep()) -> ModelWeights:
    if not updates:
        raise ValueError("fedavg needs at least one update")
    for u in updates:
        if u.delta.size != w_t.values.size:
            raise ShapeError(f"update has {u.delta.size} values, model has {w_t.values.size}")
    n = np.array([u.n_samples for u in updates], dtype=np.float64)
    deltas = np.stack([u.delta for u in updates])
    mean = (n @ deltas) / n.sum()
    return ModelWeights(w_t.values + step.eta_global * mean, w_t.shape)


def chunk_count(param_count: int, params: ckks.CkksParams) -> int:
    return max(1, -(-param_count // params.slots))


def encrypt_vector(values: np.ndarray, pk: ckks.PublicKey, seed: int, level: int | None = None) -> list[ckks.Ciphertext]:
    params = pk.params
    slots = params.slots
    return [
        ckks.encrypt(ckks.encode(values[j * slots:(j + 1) * slots], params, level), pk, derive_seed(seed, "chunk", j))
        for j in range(chunk_count(values.size, params))
    ]


def encrypt_update(u: ClientUpdate, pk: ckks.PublicKey, seed: int = 0) -> EncryptedUpdate:
    """Slot-pack ``u.delta`` into ciphertexts at the top level; ``n_samples``
    stays in the clear because the server needs it for the weights."""
    return EncryptedUpdate(tuple(encrypt_vector(u.delta, pk, seed)), u.n_samples, u.delta.size)


def encrypt_model(w: ModelWeights, pk: ckks.PublicKey, seed: int = 0) -> list[ckks.Ciphertext]:
    """Encrypt a global model one level below the top, where aggregates live."""
    return encrypt_vector(w.values, pk, seed, level=pk.params.max_level - 1)


def encrypted_fedavg(w_t, enc_updates: Sequence[EncryptedUpdate], step: GlobalStep, pk: ckks.PublicKey) -> list[ckks.Ciphertext]:
    """Aggregate encrypted deltas onto ``w_t``.

    ``w_t`` is either a :class:`ModelWeights` (added as plaintext) or the list
    of ciphertext chunks produced by :func:`encrypt_model` or a previous call.
    """
    if not enc_updates:
        raise ValueError("encrypted_fedavg needs at least one update")
    params = pk.params
    first = enc_updates[0]
    n_chunks = len(first.chunks)
    level = first.chunks[0].level
    scale = first.chunks[0].scale
    for u in enc_updates:
        if len(u.chunks) != n_chunks or u.param_count != first.param_count:
            raise ckks.AlignmentError("updates disagree on chunk structure")
        c = u.chunks[0]
        if c.level != level or c.scale != scale or c.params != params:
            raise ckks.AlignmentError("updates disagree on level, scale or parameters")
    if level < 1:
        raise ckks.DepthError("updates must sit above level 0 to be rescaled")

    total = sum(u.n_samples for u in enc_updates)
    dropped = params.modulus_chain[level]
    weights = [
        ckks.encode(np.full(params.slots, step.eta_global * u.n_samples / total), params, level, scale=dropped)
        for u in enc_updates
    ]
    if isinstance(w_t, ModelWeights):
        if w_t.values.size != first.param_count:
            raise ShapeError("model size does not match the updates")
        base = None
    else:
        base = list(w_t)
        if len(base) != n_chunks:
            raise ckks.AlignmentError("encrypted model has a different chunk count")

    out = []
    slots = params.slots
    for j in range(n_chunks):
        acc = None
        for u, wt in zip(enc_updates, weights):
            term = ckks.mul_plain(u.chunks[j], wt)
            acc = term if acc is None else ckks.add(acc, term)
        acc = ckks.rescale(acc)
        if base is None:
            seg = w_t.values[j * slots:(j + 1) * slots]
            acc = ckks.add_plain(acc, ckks.encode(seg, params, acc.level, scale=acc.scale))
        else:
            acc = ckks.add(acc, ckks.drop_level(base[j], acc.level))
        out.append(acc)
    return out


def decrypt_model(chunks: Sequence[ckks.Ciphertext], sk: ckks.SecretKey, param_count: int, shape) -> ModelWeights:
    if not chunks or len(chunks) * chunks[0].params.slots < param_count:
        raise ValueError(f"{len(chunks)} chunks cannot hold {param_count} parameters")
    slots = chunks[0].params.slots
    parts = []
    remaining = param_count
    for c in chunks:
        take = min(slots, remaining)
        parts.append(ckks.decode(ckks.decrypt(c, sk), take))
        remaining -= take
    return ModelWeights(np.concatenate(parts), shape)
