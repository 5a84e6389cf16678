import numpy as np
import pytest

from adbn import adaptive
from adbn.dbn import (AdaptiveDbn, BadMagicError, DimensionMismatchError,
                      TrainConfig, TruncatedModelError, classify,
                      cross_entropy_and_grads, finetune, forward_hidden, load,
                      predict_proba, predict_proba_batch, pretrain, save,
                      validate_chain)
from adbn.numerics import Rng, sigmoid
from adbn.rbm import RbmLayer, hidden_probs


def build_model(layer_shapes, n_classes, rng, input_shape=None, scale=0.5):
    layers = [RbmLayer(rng.normal((i, j), std=scale), rng.normal(i, std=scale),
                       rng.normal(j, std=scale)) for i, j in layer_shapes]
    out_W = rng.normal((layer_shapes[-1][1], n_classes), std=scale)
    out_b = rng.normal(n_classes, std=scale)
    if input_shape is None:
        input_shape = (layer_shapes[0][0], 1)
    return AdaptiveDbn(layers, out_W, out_b, input_shape)


def test_chain_validation_rejects_breaks():
    rng = Rng(0)
    with pytest.raises(DimensionMismatchError):
        build_model([(4, 3), (2, 2)], 2, rng)
    with pytest.raises(DimensionMismatchError):
        AdaptiveDbn([RbmLayer(np.zeros((4, 3)), np.zeros(4), np.zeros(3))],
                    np.zeros((3, 2)), np.zeros(2), (3, 3))


def test_forward_zero_model_gives_halves():
    model = AdaptiveDbn([RbmLayer(np.zeros((4, 3)), np.zeros(4), np.zeros(3))],
                        np.zeros((3, 2)), np.zeros(2), (2, 2))
    states = forward_hidden(model, np.zeros((2, 2)))
    assert np.array_equal(states[0], [0.5] * 3)


def test_forward_single_layer_equals_rbm():
    rng = Rng(2)
    model = build_model([(6, 4)], 3, rng)
    x = rng.uniform(6)
    assert np.allclose(forward_hidden(model, x)[0],
                       hidden_probs(model.layers[0], x), atol=1e-15)


def test_forward_two_layer_matches_manual_chain():
    rng = Rng(3)
    model = build_model([(5, 4), (4, 3)], 2, rng)
    x = rng.uniform(5)
    h1 = sigmoid(x @ model.layers[0].W + model.layers[0].c)
    h2 = sigmoid(h1 @ model.layers[1].W + model.layers[1].c)
    states = forward_hidden(model, x)
    assert np.allclose(states[0], h1, atol=1e-15)
    assert np.allclose(states[1], h2, atol=1e-15)


def test_predict_uniform_for_zero_head():
    model = AdaptiveDbn([RbmLayer(np.zeros((4, 3)), np.zeros(4), np.zeros(3))],
                        np.zeros((3, 5)), np.zeros(5), (4, 1))
    p = predict_proba(model, np.zeros(4))
    assert np.allclose(p, 0.2, atol=1e-12)
    assert abs(p.sum() - 1.0) < 1e-9


def test_predict_closed_form_two_class():
    model = AdaptiveDbn([RbmLayer(np.zeros((2, 2)), np.zeros(2), np.zeros(2))],
                        np.zeros((2, 2)), np.array([0.0, np.log(3.0)]), (2, 1))
    p = predict_proba(model, np.zeros(2))
    assert abs(p[0] - 0.25) < 1e-9 and abs(p[1] - 0.75) < 1e-9
    k, score = classify(model, np.zeros(2))
    assert k == 1 and abs(score - 0.75) < 1e-9


def test_predict_sums_to_one_1000_cases():
    rng = Rng(6)
    model = build_model([(8, 5)], 4, rng, scale=2.0)
    X = rng.uniform((1000, 8))
    probs = predict_proba_batch(model, X)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_classify_tie_break_lowest_index():
    model = AdaptiveDbn([RbmLayer(np.zeros((2, 2)), np.zeros(2), np.zeros(2))],
                        np.zeros((2, 3)), np.zeros(3), (2, 1))
    k, score = classify(model, np.zeros(2))
    assert k == 0
    assert abs(score - 1 / 3) < 1e-12


def test_gradients_match_finite_differences():
    rng = Rng(13)
    model = build_model([(4, 3)], 2, rng, input_shape=(2, 2))
    X = rng.uniform((5, 4))
    y = np.array([0, 1, 1, 0, 1])
    _, grads = cross_entropy_and_grads(model, X, y)

    step = 1e-5
    params = [("W0", model.layers[0].W), ("c0", model.layers[0].c),
              ("out_W", model.out_W), ("out_b", model.out_b)]
    checked = 0
    for name, arr in params:
        flat = arr.reshape(-1)
        for pos in range(0, flat.size, max(1, flat.size // 8)):
            orig = flat[pos]
            flat[pos] = orig + step
            up, _ = cross_entropy_and_grads(model, X, y)
            flat[pos] = orig - step
            down, _ = cross_entropy_and_grads(model, X, y)
            flat[pos] = orig
            numeric = (up - down) / (2 * step)
            analytic = grads[name].reshape(-1)[pos]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-4
            checked += 1
    assert checked >= 20


def test_finetune_zero_lr_keeps_parameters():
    rng = Rng(14)
    model = build_model([(4, 3)], 2, rng)
    W0 = model.layers[0].W.copy()
    out0 = model.out_W.copy()
    cfg = TrainConfig(learning_rate=0.0, batch_size=4, epochs_per_layer=1,
                      finetune_epochs=3, initial_hidden=3)
    finetune(model, rng.uniform((8, 4)), np.zeros(8, dtype=int), cfg, Rng(0))
    assert np.array_equal(model.layers[0].W, W0)
    assert np.array_equal(model.out_W, out0)


def test_finetune_rejects_bad_labels():
    rng = Rng(15)
    model = build_model([(4, 3)], 2, rng)
    cfg = TrainConfig(learning_rate=0.1, batch_size=4, epochs_per_layer=1,
                      finetune_epochs=1, initial_hidden=3)
    with pytest.raises(ValueError):
        finetune(model, rng.uniform((4, 4)), np.array([0, 1, 2, 0]), cfg, Rng(0))


def test_finetune_learns_separable_data():
    rng = Rng(42)
    # two well-separated binary prototypes with flip noise
    proto = np.array([[1, 1, 1, 1, 0, 0, 0, 0], [0, 0, 0, 0, 1, 1, 1, 1]], float)
    X = np.zeros((60, 8))
    y = np.zeros(60, dtype=int)
    for i in range(60):
        y[i] = i % 2
        X[i] = proto[y[i]]
    X = np.clip(X + rng.normal((60, 8), std=0.05), 0, 1)
    model = build_model([(8, 6)], 2, Rng(1), scale=0.01, input_shape=(8, 1))
    cfg = TrainConfig(learning_rate=0.5, batch_size=10, epochs_per_layer=1,
                      finetune_epochs=100, initial_hidden=6, seed=42)
    loss_before, _ = cross_entropy_and_grads(model, X, y)
    finetune(model, X, y, cfg, Rng(42))
    loss_after, _ = cross_entropy_and_grads(model, X, y)
    preds = np.argmax(predict_proba_batch(model, X), axis=1)
    assert loss_after < loss_before
    assert np.mean(preds == y) >= 0.99


def test_pretrain_initial_hidden_and_shapes():
    rng = Rng(5)
    X = (rng.uniform((30, 16)) < 0.5).astype(float)
    acfg = adaptive.AdaptiveConfig(theta_g=1e9, theta_l1=1e9, theta_l2=1e9)
    cfg = TrainConfig(learning_rate=0.1, batch_size=10, epochs_per_layer=3,
                      finetune_epochs=1, initial_hidden=7, adaptive=acfg, seed=5)
    model = pretrain(X, (4, 4), 3, cfg)
    assert len(model.layers) == 1
    # theta_a may prune dead units but the layer starts at initial_hidden
    assert model.layers[0].n_visible == 16
    assert model.out_W.shape == (model.layers[0].n_hidden, 3)
    validate_chain(model)


def test_pretrain_rejects_empty():
    cfg = TrainConfig()
    with pytest.raises(ValueError):
        pretrain(np.zeros((0, 4)), (2, 2), 2, cfg)


def test_save_load_round_trip(tmp_path):
    rng = Rng(77)
    model = build_model([(6, 4), (4, 3)], 5, rng, input_shape=(3, 2))
    path = tmp_path / "model.adbn"
    save(model, path)
    again = load(path)
    assert len(again.layers) == 2
    for a, b in zip(model.layers, again.layers):
        assert np.array_equal(a.W, b.W)
        assert np.array_equal(a.b, b.b)
        assert np.array_equal(a.c, b.c)
    assert np.array_equal(model.out_W, again.out_W)
    assert np.array_equal(model.out_b, again.out_b)
    assert again.input_shape == (3, 2)
    # byte-identical when saved again
    save(again, tmp_path / "model2.adbn")
    assert (tmp_path / "model.adbn").read_bytes() == (tmp_path / "model2.adbn").read_bytes()


def test_load_bad_magic(tmp_path):
    path = tmp_path / "bad.adbn"
    path.write_bytes(b"NOPE!" + b"\x00" * 32)
    with pytest.raises(BadMagicError):
        load(path)


def test_load_truncated(tmp_path):
    rng = Rng(78)
    model = build_model([(4, 3)], 2, rng)
    path = tmp_path / "model.adbn"
    save(model, path)
    data = path.read_bytes()
    cut = tmp_path / "cut.adbn"
    cut.write_bytes(data[:len(data) // 2])
    with pytest.raises(TruncatedModelError):
        load(cut)
    extra = tmp_path / "extra.adbn"
    extra.write_bytes(data + b"\x00")
    with pytest.raises(TruncatedModelError):
        load(extra)


def test_load_dimension_inconsistency(tmp_path):
    import struct
    path = tmp_path / "zero.adbn"
    path.write_bytes(b"ADBN1" + struct.pack("<I", 0))
    with pytest.raises(DimensionMismatchError):
        load(path)


def test_pretrain_determinism_same_bytes(tmp_path):
    X = (Rng(31).uniform((24, 9)) < 0.5).astype(float)
    acfg = adaptive.AdaptiveConfig()
    cfg = TrainConfig(learning_rate=0.1, batch_size=8, epochs_per_layer=6,
                      finetune_epochs=2, initial_hidden=4, adaptive=acfg, seed=9)
    paths = []
    for tag in ("a", "b"):
        rng = Rng(cfg.seed)
        model = pretrain(X, (3, 3), 2, cfg, rng)
        finetune(model, X, (X.sum(axis=1) > 4).astype(int), cfg, rng)
        p = tmp_path / f"{tag}.adbn"
        save(model, p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
