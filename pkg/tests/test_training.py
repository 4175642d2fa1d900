import math

import numpy as np
import pytest

from fsknet import layers as L
from fsknet.data import PatchSet
from fsknet.model import build
from fsknet.tensor import CHECK_DTYPE
from fsknet.training import (SGD, Adam, LabelError, TrainConfig, cross_entropy, evaluate, fit,
                             gradcheck_layer, gradcheck_suite, iterate_batches, relative_error,
                             tiny_config)

from oracles import central_difference


def tiny_data(n=12, seed=0, cfg=None):
    cfg = cfg or tiny_config()
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, cfg.patch, cfg.patch, cfg.bands, 1)).astype(np.float32)
    y = np.arange(n) % cfg.classes + 1
    return PatchSet(x, y, np.zeros((n, 2), np.int64))


# -- loss -----------------------------------------------------------------------

def test_ce_zero_for_certain_correct():
    probs = np.array([[0.0, 1.0, 0.0]])
    loss, _ = cross_entropy(probs, [2])
    assert loss == 0.0


def test_ce_uniform_is_log_classes():
    loss, _ = cross_entropy(np.full((4, 16), 1 / 16), [1, 5, 9, 16])
    assert loss == pytest.approx(math.log(16), abs=1e-12)
    assert round(loss, 4) == 2.7726


def test_ce_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((2, 3))
    labels = np.array([3, 1])

    def loss_of():
        return cross_entropy(L.softmax(logits), labels)[0]

    _, grad = cross_entropy(L.softmax(logits), labels)
    np.testing.assert_allclose(grad, central_difference(loss_of, logits), atol=1e-6)


def test_ce_floor_keeps_loss_finite():
    loss, _ = cross_entropy(np.array([[1.0, 0.0]]), [2])
    assert math.isfinite(loss) and loss == pytest.approx(-math.log(1e-12))


@pytest.mark.parametrize("labels", [[0, 1], [1, 4], [1]])
def test_ce_label_errors(labels):
    with pytest.raises(LabelError):
        cross_entropy(np.full((2, 3), 1 / 3), labels)


# -- optimisers -----------------------------------------------------------------

def graph_with_grads(seed=0):
    g = build(tiny_config(), seed=seed)
    data = tiny_data()
    probs = g.forward(data.patches[:4], training=True)
    g.backward(cross_entropy(probs, data.labels[:4])[1])
    return g


def test_sgd_step_is_minus_lr_grad():
    g = graph_with_grads()
    before = {n: layer.params[k].copy() for n, layer, k in g.named_params(trainable=True)}
    SGD(0.05).step(g)
    for n, layer, k in g.named_params(trainable=True):
        np.testing.assert_allclose(layer.params[k], before[n] - 0.05 * layer.grads[k], atol=1e-7, rtol=0)


def test_sgd_leaves_moving_stats_alone():
    g = graph_with_grads()
    before = {n: layer.params[k].copy() for n, layer, k in g.named_params(trainable=False)}
    SGD(1.0).step(g)
    for n, layer, k in g.named_params(trainable=False):
        np.testing.assert_array_equal(layer.params[k], before[n])


def test_adam_zero_gradient_is_a_no_op():
    g = graph_with_grads()
    for _, layer, k in g.named_params(trainable=True):
        layer.grads[k][...] = 0
    before = {n: layer.params[k].copy() for n, layer, k in g.named_params(trainable=True)}
    Adam().step(g)
    for n, layer, k in g.named_params(trainable=True):
        np.testing.assert_array_equal(layer.params[k], before[n])


def test_adam_first_step_moves_by_lr():
    g = graph_with_grads()
    layer = g["dense_3"]
    w = layer.params["kernel"].copy()
    grad = layer.grads["kernel"].copy()
    Adam(lr=1e-3).step(g)
    step = w - layer.params["kernel"]
    big = np.abs(grad) > 1e-4
    np.testing.assert_allclose(step[big], 1e-3 * np.sign(grad[big]), rtol=1e-3)


def test_unknown_optimizer():
    with pytest.raises(L.ConfigError):
        TrainConfig(optimizer="rmsprop").make_optimizer()


# -- training loop ----------------------------------------------------------------

def test_batches_cover_and_skip_singleton_tail():
    rng = np.random.default_rng(0)
    seen = np.concatenate(list(iterate_batches(10, 4, rng)))
    assert sorted(seen.tolist()) == list(range(10))
    batches = list(iterate_batches(9, 4, None))
    assert [len(b) for b in batches] == [4, 4]


def test_zero_learning_rate_gives_constant_loss():
    g = build(tiny_config(), seed=1)
    data = tiny_data()
    cfg = TrainConfig(epochs=3, batch_size=4, learning_rate=0.0, optimizer="sgd", shuffle=False)
    losses = fit(g, data, None, cfg).losses
    assert losses[0] == losses[1] == losses[2]


def test_same_seed_same_first_epoch():
    data = tiny_data(16)
    runs = []
    for _ in range(2):
        g = build(tiny_config(), seed=3)
        runs.append(fit(g, data, data, TrainConfig(epochs=1, batch_size=4, seed=3)).history[0])
    assert runs[0] == runs[1]


def test_training_reduces_loss():
    data = tiny_data(24)
    g = build(tiny_config(), seed=0)
    losses = fit(g, data, None, TrainConfig(epochs=8, batch_size=8, learning_rate=1e-2)).losses
    assert losses[-1] < losses[0]


def test_evaluate_is_repeatable_and_leaves_stats():
    g = build(tiny_config(), seed=0)
    data = tiny_data()
    fit(g, data, None, TrainConfig(epochs=1, batch_size=4))
    stats = {n: layer.params[k].copy() for n, layer, k in g.named_params(trainable=False)}
    a, b = evaluate(g, data), evaluate(g, data)
    assert a["predictions"].tobytes() == b["predictions"].tobytes()
    assert a["OA"] == b["OA"]
    for n, layer, k in g.named_params(trainable=False):
        np.testing.assert_array_equal(layer.params[k], stats[n])


def test_divergence_is_reported():
    data = tiny_data()
    data.patches[0, 0, 0, 0, 0] = np.nan
    g = build(tiny_config(), seed=0)
    report = fit(g, data, None, TrainConfig(epochs=3, batch_size=4, shuffle=False))
    assert report.diverged and report.last_good_epoch == 0 and report.history == []


def test_batch_size_one_rejected():
    with pytest.raises(L.ConfigError):
        fit(build(tiny_config()), tiny_data(), None, TrainConfig(batch_size=1))


def test_log_has_no_timing():
    g = build(tiny_config(), seed=0)
    report = fit(g, tiny_data(), None, TrainConfig(epochs=2, batch_size=4))
    lines = report.log_lines().splitlines()
    assert lines[0] == "epoch\tloss\tval_oa" and len(lines) == 3


# -- gradient checker ----------------------------------------------------------------

def test_relative_error_floor():
    assert relative_error(0.0, 1e-9) == pytest.approx(1e-3)
    assert relative_error(2.0, 1.0) == 0.5


def test_gradcheck_dense_and_deformable_pass():
    rng = np.random.default_rng(0)
    dense = L.Dense("d", 3, use_bias=True)
    dense.build([(4,)], rng, CHECK_DTYPE)
    assert all(e.passed for e in gradcheck_layer(dense, [rng.standard_normal((2, 4))]))
    deform = L.DeformableConv2D("df", 2, 3)
    deform.build([(4, 4, 2)], rng, CHECK_DTYPE)
    deform.params["offset_kernel"] = rng.standard_normal(deform.params["offset_kernel"].shape) * 0.2
    entries = gradcheck_layer(deform, [rng.standard_normal((2, 4, 4, 2))])
    assert {e.group for e in entries} == {"input0", "offset_kernel", "kernel"}
    assert all(e.passed for e in entries)


class FlippedDense(L.Dense):
    def backward(self, grad):
        return -super().backward(grad)


def test_gradcheck_catches_wrong_backward():
    rng = np.random.default_rng(0)
    layer = FlippedDense("bad", 3)
    layer.build([(4,)], rng, CHECK_DTYPE)
    entries = {e.group: e for e in gradcheck_layer(layer, [rng.standard_normal((2, 4))])}
    assert not entries["input0"].passed
    assert entries["kernel"].passed


def test_gradcheck_suite_passes():
    report = gradcheck_suite(seed=0, trials=10)
    assert report.passed, report.format()
    cases = {e.case for e in report.entries}
    assert {"deformable conv 3x3", "deformable conv 5x5", "batchnorm train", "full tiny FSKNet"} <= cases
