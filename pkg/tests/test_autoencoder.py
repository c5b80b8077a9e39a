import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from iotguard.autoencoder import (
    AutoencoderModel,
    TrainConfig,
    forward,
    gradients,
    init_model,
    load_model,
    reconstruction_errors,
    reconstruction_loss,
    save_model,
    train,
)
from iotguard.errors import NumericError


def batch_loss(model, x):
    """Independent oracle: explicit per-row loop over the layer stack."""
    total = 0.0
    for row in x:
        a = row
        for w, b in model.layers:
            a = np.array([1 / (1 + math.exp(-(w[i] @ a + b[i]))) for i in range(w.shape[0])])
        total += float(np.mean((row - a) ** 2))
    return total / len(x)


def finite_difference(model, x, eps=1e-5):
    grads = []
    for w, b in model.layers:
        out = []
        for p in (w, b):
            g = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + eps
                up = batch_loss(model, x)
                p[idx] = orig - eps
                down = batch_loss(model, x)
                p[idx] = orig
                g[idx] = (up - down) / (2 * eps)
            out.append(g)
        grads.append(tuple(out))
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def zero_model(n=3, m=2):
    model = init_model(n, [], m, seed=0)
    for w, b in model.layers:
        w[:] = 0
        b[:] = 0
    return model


def test_init_deterministic():
    a, b = init_model(6, [4], 2, seed=9), init_model(6, [4], 2, seed=9)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)


def test_init_rejects_wide_latent():
    with pytest.raises(ValueError):
        init_model(10, [], 10, seed=0)


def test_init_shapes_chain():
    model = init_model(4, [3], 2, seed=0)
    assert [w.shape for w, _ in model.encoder_layers] == [(3, 4), (2, 3)]
    assert [w.shape for w, _ in model.decoder_layers] == [(3, 2), (4, 3)]
    assert all(np.all(b == 0) for _, b in model.layers)
    assert model.latent_dim == 2 and model.input_dim == 4


def test_forward_zero_weights_gives_half():
    z, x_hat = forward(zero_model(), np.array([3.0, -1.0, 7.0]))
    assert z.tolist() == [0.5, 0.5]
    assert x_hat.tolist() == [0.5, 0.5, 0.5]


def test_forward_double_sigmoid():
    enc = [(np.array([[1.0, 0.0]]), np.zeros(1))]
    dec = [(np.array([[1.0], [1.0]]), np.zeros(2))]
    _, x_hat = forward(AutoencoderModel(enc, dec), np.zeros(2))
    expected = 1 / (1 + math.exp(-1 / (1 + math.exp(0))))
    np.testing.assert_allclose(x_hat, [expected, expected], rtol=1e-15)
    assert round(expected, 4) == 0.6225


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(zero_model(), np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-1e6, 1e6)), st.integers(0, 1000))
def test_forward_outputs_open_unit_interval(x, seed):
    model = init_model(5, [4], 2, seed=seed)
    z, x_hat = forward(model, x)
    # sigmoid saturates to exactly 0/1 in float64 only beyond |t| ~ 37
    assert np.all((z >= 0) & (z <= 1)) and np.all((x_hat >= 0) & (x_hat <= 1))
    small = forward(model, np.clip(x, -1, 1))
    assert np.all((small[0] > 0) & (small[0] < 1)) and np.all((small[1] > 0) & (small[1] < 1))


@pytest.mark.parametrize("x, x_hat, expected", [
    ([0.3, 0.7], [0.3, 0.7], 0.0),
    ([1, 0], [0, 0], 0.5),
    ([1, 1], [0.5, 0.5], 0.25),
])
def test_reconstruction_loss(x, x_hat, expected):
    assert reconstruction_loss(x, x_hat) == expected


def test_reconstruction_loss_length_mismatch():
    with pytest.raises(ValueError):
        reconstruction_loss([1, 2], [1])


def test_gradients_match_loop_oracle_loss():
    model = init_model(5, [4], 2, seed=1)
    x = np.random.default_rng(0).random((7, 5))
    np.testing.assert_allclose(batch_loss(model, x), np.mean(reconstruction_errors(model, x)), rtol=1e-12)


def test_gradients_vanish_at_perfect_reconstruction():
    model = zero_model()
    x = np.full((4, 3), 0.5)
    for gw, gb in gradients(model, x):
        assert np.all(gw == 0) and np.all(gb == 0)


def test_gradients_finite_difference():
    model = init_model(4, [3], 2, seed=5)
    x = np.random.default_rng(5).random((6, 4))
    assert max_relative_error(gradients(model, x), finite_difference(model, x)) < 1e-4


def test_batch_gradient_is_mean_of_row_gradients():
    model = init_model(5, [3], 2, seed=2)
    x = np.random.default_rng(2).random((5, 5))
    whole = gradients(model, x)
    rows = [gradients(model, x[i:i + 1]) for i in range(5)]
    for layer, (gw, gb) in enumerate(whole):
        np.testing.assert_allclose(gw, np.mean([r[layer][0] for r in rows], axis=0), atol=1e-15)
        np.testing.assert_allclose(gb, np.mean([r[layer][1] for r in rows], axis=0), atol=1e-15)


def normal_data(rows=400, n=8, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.random((rows, 2))
    return np.clip(np.hstack([base, base @ rng.random((2, n - 2)) / 2]), 0, 1)


@pytest.mark.parametrize("optimizer, lr", [("adam", 1e-2), ("sgd", 1.0)])
def test_training_reduces_loss(optimizer, lr):
    x = normal_data()
    cfg = TrainConfig(epochs=15, batch_size=32, learning_rate=lr, optimizer=optimizer, seed=1)
    model, trace = train(init_model(8, [6], 3, seed=1), x, cfg)
    assert len(trace.train_loss) == len(trace.val_loss) == 15
    assert trace.train_loss[-1] < trace.initial_train_loss


def test_training_is_deterministic():
    x = normal_data()
    cfg = TrainConfig(epochs=3, batch_size=16, seed=4)
    a, ta = train(init_model(8, [6], 3, seed=4), x, cfg)
    b, tb = train(init_model(8, [6], 3, seed=4), x, cfg)
    for p, q in zip(a.params(), b.params()):
        assert p.tobytes() == q.tobytes()
    assert ta.train_loss == tb.train_loss


def test_training_uses_only_normal_rows():
    x = normal_data(rows=100)
    labels = np.array([0] * 50 + [1] * 50)
    cfg = TrainConfig(epochs=2, batch_size=8, seed=0)
    a, _ = train(init_model(8, [6], 3, seed=0), x, cfg, labels=labels)
    b, _ = train(init_model(8, [6], 3, seed=0), x[:50], cfg)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)


def test_training_does_not_mutate_input_model():
    model = init_model(8, [6], 3, seed=0)
    before = [p.copy() for p in model.params()]
    train(model, normal_data(rows=50), TrainConfig(epochs=1, batch_size=8))
    for p, q in zip(before, model.params()):
        np.testing.assert_array_equal(p, q)


def test_nan_loss_aborts_naming_epoch():
    model = init_model(8, [6], 3, seed=0)
    model.encoder_layers[0][0][0, 0] = np.nan
    with pytest.raises(NumericError, match="epoch 1"):
        train(model, normal_data(rows=50), TrainConfig(epochs=2, batch_size=8))


@pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"batch_size": 0}, {"learning_rate": 0}, {"optimizer": "rmsprop"}])
def test_invalid_train_config(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_reconstruction_errors_permutation_equivariant():
    model = init_model(6, [4], 2, seed=3)
    x = np.random.default_rng(3).random((10, 6))
    perm = np.random.default_rng(4).permutation(10)
    np.testing.assert_array_equal(reconstruction_errors(model, x)[perm], reconstruction_errors(model, x[perm]))


def test_reconstruction_error_zero_for_perfect_fixture():
    assert reconstruction_errors(zero_model(), np.full((2, 3), 0.5)).tolist() == [0.0, 0.0]


def test_reconstruction_errors_non_negative():
    errs = reconstruction_errors(init_model(6, [4], 2, seed=3), np.random.default_rng(0).random((20, 6)))
    assert np.all(errs >= 0)


def test_model_json_round_trip(tmp_path):
    model = init_model(6, [4], 2, seed=3)
    save_model(model, tmp_path / "m.json", TrainConfig())
    again = load_model(tmp_path / "m.json")
    for p, q in zip(model.params(), again.params()):
        np.testing.assert_array_equal(p, q)
