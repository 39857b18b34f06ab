import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedchain import ckks
from fedchain.data import gen_synthetic
from fedchain.flcore import (
    ClientUpdate, DatasetShard, DivergenceError, GlobalStep, ModelWeights, ShapeError, TrainConfig,
    decrypt_model, encrypt_model, encrypt_update, encrypted_fedavg, evaluate, fedavg, from_bytes, gradient_check,
    init_model, local_train, loss_and_grad, param_count, to_bytes, train_sgd,
)
from fedchain.flcore.checkpoint import CheckpointError


@pytest.fixture(scope="module")
def blobs():
    train, test = gen_synthetic(classes=4, samples=400, feature_dim=8, separation=4.0, seed=3, test_samples=200)
    return train, test


def test_param_count_and_layers():
    assert param_count((784, 10)) == 7850
    assert param_count((8, 5, 3)) == 9 * 5 + 6 * 3
    w = init_model((8, 5, 3), seed=0)
    (w1, b1), (w2, b2) = w.layers()
    assert w1.shape == (8, 5) and b1.shape == (5,) and w2.shape == (5, 3) and b2.shape == (3,)


def test_init_is_seeded_and_bounded():
    a, b = init_model((16, 4), 1), init_model((16, 4), 1)
    assert np.array_equal(a.values, b.values)
    assert np.all(np.abs(a.values) <= 0.25)
    assert not np.array_equal(a.values, init_model((16, 4), 2).values)


def test_model_weights_validation():
    with pytest.raises(ShapeError):
        ModelWeights(np.zeros(5), (2, 2))
    with pytest.raises(ShapeError):
        ModelWeights(np.zeros(0), (3,))
    with pytest.raises(ValueError):
        ModelWeights(np.full(6, np.nan), (2, 2))


def test_zero_epochs_gives_zero_delta(blobs):
    train, _ = blobs
    w = init_model((8, 4), 0)
    u = local_train(w, train, TrainConfig(local_epochs=0))
    assert np.all(u.delta == 0) and u.n_samples == len(train)


def test_training_lowers_loss_and_learns(blobs):
    train, test = blobs
    w = init_model((8, 4), 0)
    _, losses = train_sgd(w, train, TrainConfig(learning_rate=0.05, local_epochs=5))
    assert losses[-1] < losses[0]
    trained, _ = train_sgd(w, train, TrainConfig(learning_rate=0.05, local_epochs=5))
    assert evaluate(trained, test) > max(0.7, evaluate(w, test) + 0.3)


def test_training_is_seeded(blobs):
    train, _ = blobs
    w = init_model((8, 6, 4), 0)
    a = local_train(w, train, TrainConfig(seed=5))
    b = local_train(w, train, TrainConfig(seed=5))
    assert np.array_equal(a.delta, b.delta)


def test_divergence_is_reported(blobs):
    train, _ = blobs
    big = DatasetShard(train.features * 1e300, train.labels, 4)
    with pytest.raises(DivergenceError), np.errstate(all="ignore"):
        train_sgd(init_model((8, 4), 0), big, TrainConfig(learning_rate=0.9))


def test_dimension_mismatch(blobs):
    train, _ = blobs
    with pytest.raises(ShapeError):
        local_train(init_model((9, 4), 0), train, TrainConfig())


def test_loss_at_uniform_logits():
    x = np.ones((5, 3))
    y = np.array([0, 1, 2, 3, 0])
    loss, grad = loss_and_grad(np.zeros(param_count((3, 4))), (3, 4), x, y)
    assert loss == pytest.approx(np.log(4), rel=1e-12)
    assert grad.shape == (16,)


@pytest.mark.parametrize("shape", [(6, 3), (6, 5, 3), (4, 7, 5, 2)])
def test_gradient_matches_finite_differences(shape):
    rng = np.random.default_rng(sum(shape))
    x = rng.normal(size=(20, shape[0]))
    y = rng.integers(0, shape[-1], 20)
    shard = DatasetShard(x, y, shape[-1])
    assert gradient_check(init_model(shape, 1), shard, coords=200) < 1e-4


def test_evaluate_counts_matches():
    # identity weights: argmax of the feature row is the prediction
    w = ModelWeights(np.concatenate([np.eye(3).ravel(), np.zeros(3)]), (3, 3))
    x = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0], [5.0, 0, 0]])
    assert evaluate(w, DatasetShard(x, [0, 1, 2, 2], 3)) == 0.75
    assert evaluate(w, DatasetShard(np.zeros((0, 3)), [], 3)) == 0.0


# ------------------------------------------------------------ aggregation


def loop_fedavg(w, updates, eta):
    """Element-by-element weighted mean, written without numpy reductions."""
    total = sum(u.n_samples for u in updates)
    out = []
    for i, base in enumerate(w.values):
        acc = 0.0
        for u in updates:
            acc += u.n_samples * u.delta[i]
        out.append(base + eta * acc / total)
    return np.array(out)


def random_updates(rng, count, size):
    return [ClientUpdate(rng.normal(size=size), int(rng.integers(1, 500))) for _ in range(count)]


@pytest.mark.parametrize("eta", [1.0, 0.5])
def test_fedavg_matches_loop_oracle(eta):
    rng = np.random.default_rng(0)
    w = ModelWeights(rng.normal(size=param_count((5, 3))), (5, 3))
    ups = random_updates(rng, 4, w.values.size)
    got = fedavg(w, ups, GlobalStep(eta))
    np.testing.assert_allclose(got.values, loop_fedavg(w, ups, eta), rtol=1e-12, atol=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_fedavg_order_and_split_invariance(seed, count):
    rng = np.random.default_rng(seed)
    w = ModelWeights(rng.normal(size=param_count((4, 2))), (4, 2))
    ups = random_updates(rng, count, w.values.size)
    ref = fedavg(w, ups).values
    perm = [ups[i] for i in rng.permutation(count)]
    np.testing.assert_allclose(fedavg(w, perm).values, ref, rtol=1e-12, atol=1e-12)
    # a client reporting its delta as two halves of its samples changes nothing
    head = ups[0]
    if head.n_samples >= 2:
        k = head.n_samples // 2
        split = [ClientUpdate(head.delta, k), ClientUpdate(head.delta, head.n_samples - k), *ups[1:]]
        np.testing.assert_allclose(fedavg(w, split).values, ref, rtol=1e-12, atol=1e-12)


def test_fedavg_errors():
    w = ModelWeights(np.zeros(param_count((2, 2))), (2, 2))
    with pytest.raises(ValueError):
        fedavg(w, [])
    with pytest.raises(ShapeError):
        fedavg(w, [ClientUpdate(np.zeros(3), 1)])
    with pytest.raises(ValueError):
        ClientUpdate(np.zeros(6), 0)
    with pytest.raises(ValueError):
        GlobalStep(0.0)


def test_encrypted_fedavg_matches_plain(test_keys):
    rng = np.random.default_rng(11)
    shape = (20, 5)  # 105 values spread over several 32-slot chunks
    w = ModelWeights(rng.uniform(-1, 1, param_count(shape)), shape)
    ups = [ClientUpdate(rng.uniform(-0.1, 0.1, w.values.size), int(rng.integers(1, 300))) for _ in range(5)]
    enc = [encrypt_update(u, test_keys.public_key, seed=i) for i, u in enumerate(ups)]
    step = GlobalStep(0.8)
    got = decrypt_model(encrypted_fedavg(w, enc, step, test_keys.public_key), test_keys.secret_key,
                        w.values.size, shape)
    np.testing.assert_allclose(got.values, loop_fedavg(w, ups, 0.8), atol=1e-3)


def test_encrypted_model_chains_across_rounds(test_keys):
    rng = np.random.default_rng(12)
    shape = (10, 3)
    pk, sk = test_keys.public_key, test_keys.secret_key
    w = ModelWeights(rng.uniform(-1, 1, param_count(shape)), shape)
    enc_w = encrypt_model(w, pk, seed=1)
    plain = w
    for r in range(3):
        ups = [ClientUpdate(rng.uniform(-0.1, 0.1, w.values.size), int(rng.integers(1, 50))) for _ in range(3)]
        enc = [encrypt_update(u, pk, seed=10 * r + i) for i, u in enumerate(ups)]
        enc_w = encrypted_fedavg(enc_w, enc, GlobalStep(), pk)
        plain = fedavg(plain, ups)
        # the server never decrypts; only the clients do, here for the check
        got = decrypt_model(enc_w, sk, w.values.size, shape)
        np.testing.assert_allclose(got.values, plain.values, atol=1e-3)
        assert {c.level for c in enc_w} == {pk.params.max_level - 1}


def test_encrypted_fedavg_rejects_mixed_updates(test_keys):
    pk = test_keys.public_key
    a = encrypt_update(ClientUpdate(np.ones(40), 1), pk)
    b = encrypt_update(ClientUpdate(np.ones(80), 1), pk)
    w = ModelWeights(np.zeros(40), (3, 10))
    with pytest.raises(ckks.AlignmentError):
        encrypted_fedavg(w, [a, b], GlobalStep(), pk)
    with pytest.raises(ValueError):
        encrypted_fedavg(w, [], GlobalStep(), pk)


# ------------------------------------------------------------ checkpoints


def test_checkpoint_roundtrip_and_layout():
    w = init_model((3, 2), 0)
    blob = to_bytes(w)
    assert blob[:4] == b"FLWT" and len(blob) == 4 + 3 + 8 + 8 + 8 * 8
    back = from_bytes(blob)
    assert back.shape == (3, 2) and np.array_equal(back.values, w.values)


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + b"\x09" + b[5:],
    lambda b: b[:-1],
    lambda b: b + b"\x00",
])
def test_checkpoint_corruption(mutate):
    with pytest.raises(CheckpointError):
        from_bytes(mutate(to_bytes(init_model((3, 2), 0))))
