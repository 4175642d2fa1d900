import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsknet import layers as L
from fsknet.layers import ConfigError
from fsknet.model import (CheckpointError, FsknetConfig, build, load_checkpoint, plan_spectral_stages,
                          save_checkpoint)
from fsknet.training import gradcheck_graph, randomize_offsets, tiny_config

from published import LAYER_TABLE


@pytest.fixture(scope="module")
def in_graph():
    return build(FsknetConfig(patch=19, bands=200, classes=16), seed=0)


def spectral_chain(bands, plan):
    dims = [bands]
    for k, s in plan:
        dims.append((dims[-1] - k) // s + 1)
    return dims


def test_plan_indian_pines():
    plan = plan_spectral_stages(200)
    assert plan == [(7, 7), (5, 5), (3, 3)]
    assert spectral_chain(200, plan) == [200, 28, 5, 1]


def test_plan_pavia():
    plan = plan_spectral_stages(103)
    assert plan == [(7, 7), (5, 5), (2, 1)]
    assert spectral_chain(103, plan) == [103, 14, 2, 1]


def test_plan_minimum_bands():
    plan = plan_spectral_stages(9)
    assert plan == [(3, 3), (3, 3), (1, 1)]
    assert spectral_chain(9, plan) == [9, 3, 1, 1]


def test_plan_rejects_tiny_band_count():
    with pytest.raises(ConfigError):
        plan_spectral_stages(8)


@given(st.integers(9, 400))
def test_plan_always_reaches_one(bands):
    assert spectral_chain(bands, plan_spectral_stages(bands))[-1] == 1


def test_table_rows(in_graph):
    rows = in_graph.param_report().rows
    assert [(r.name, r.output_shape, r.params) for r in rows] == LAYER_TABLE


def test_table_totals(in_graph):
    rep = in_graph.param_report()
    assert (rep.total, rep.trainable, rep.non_trainable) == (215808, 215264, 544)
    assert "215808 / 215264 / 544" in rep.format()


def test_sk_connectivity(in_graph):
    conn = {r.name: r.connected_to for r in in_graph.param_report().rows}
    assert conn["deformableconv_1"] == conn["deformableconv_2"] == ["batch_normalization_4"]
    assert conn["add_1"] == ["batch_normalization_5", "batch_normalization_6"]
    assert conn["global_average_pooling2d_1"] == ["add_1"]
    assert conn["multiply_1"] == ["batch_normalization_5", "dense_2"]
    assert conn["multiply_2"] == ["batch_normalization_6", "dense_2"]
    assert conn["add_2"] == ["multiply_1", "multiply_2"]
    softmaxes = [l for l in in_graph.layers if isinstance(l, L.Activation) and l.fn == "softmax"]
    assert len(softmaxes) == 1 and softmaxes[0].output_shape == (16,)


def test_weight_lengths_match_reported_counts(in_graph):
    for layer in in_graph.layers:
        assert layer.param_count() == sum(v.size for v in layer.params.values())


def test_patch_too_small_names_failing_layer():
    with pytest.raises(ConfigError, match="separable_conv2d_1"):
        build(FsknetConfig(patch=9, bands=200, classes=2))
    g = build(FsknetConfig(patch=13, bands=200, classes=2))
    assert g["separable_conv2d_2"].output_shape == (1, 1, 128)


def test_even_patch_rejected():
    with pytest.raises(ConfigError):
        build(FsknetConfig(patch=18))


def test_doubling_branch_width_scales_deformable_counts():
    g = build(FsknetConfig(sk_branch_channels=128))
    offset = 3 * 3 * 32 * 64
    assert g["deformableconv_1"].param_count() == 3 * 3 * 32 * 128 + offset
    assert g["deformableconv_2"].param_count() == 5 * 5 * 32 * 128 + offset


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([13, 15, 17, 19, 21, 23]), st.integers(9, 260), st.integers(2, 20), st.integers(1, 3))
def test_non_trainable_is_twice_bn_width(patch, bands, classes, blocks):
    g = build(FsknetConfig(patch=patch, bands=bands, classes=classes, sk_blocks=blocks))
    widths = sum(l.params["gamma"].size for l in g.layers if isinstance(l, L.BatchNorm))
    rep = g.param_report()
    assert rep.non_trainable == 2 * widths
    assert rep.total == rep.trainable + rep.non_trainable


def test_same_seed_same_weights():
    a, b = build(tiny_config(), seed=7), build(tiny_config(), seed=7)
    for (name, la, ka), (_, lb, kb) in zip(a.named_params(), b.named_params()):
        assert la.params[ka].tobytes() == lb.params[kb].tobytes(), name
    c = build(tiny_config(), seed=8)
    assert any(not np.array_equal(x, y) for x, y in zip(a.state_dict().values(), c.state_dict().values()))


def test_forward_rows_are_distributions():
    g = build(tiny_config(), seed=0)
    x = np.random.default_rng(0).standard_normal((4, 13, 13, 12, 1)).astype(np.float32)
    for training in (True, False):
        p = g.forward(x, training=training)
        assert p.shape == (4, 3)
        np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)


def test_infer_mode_is_per_sample():
    g = build(tiny_config(), seed=0)
    x = np.random.default_rng(1).standard_normal((3, 13, 13, 12, 1)).astype(np.float32)
    p = g.forward(x)
    p2 = g.forward(np.concatenate([x, x[1:2]]))
    assert p2[3].tobytes() == p2[1].tobytes()
    np.testing.assert_array_equal(p, p2[:3])


def test_forward_deterministic():
    x = np.random.default_rng(2).standard_normal((2, 13, 13, 12, 1)).astype(np.float32)
    outs = [build(tiny_config(), seed=3).forward(x, training=True) for _ in range(2)]
    assert outs[0].tobytes() == outs[1].tobytes()


def test_reshape_is_metadata_only():
    g = build(tiny_config(), seed=0)
    g.forward(np.zeros((2, 13, 13, 12, 1), np.float32))
    assert np.shares_memory(g.outputs["reshape_1"], g.outputs["activation_4"])


def test_train_mode_single_sample_rejected():
    g = build(tiny_config(), seed=0)
    x = np.zeros((1, 13, 13, 12, 1), np.float32)
    with pytest.raises(ConfigError):
        g.forward(x, training=True)


def test_sk_fusion_is_additive(monkeypatch):
    g = build(tiny_config(), seed=0, dtype=np.float64)
    d3, d5 = g["deformableconv_1"], g["deformableconv_2"]
    d5.params["kernel"][...] = 0
    d5.params["kernel"][1:4, 1:4] = d3.params["kernel"]
    sig = g["activation_9"]
    assert sig.fn == "sigmoid"
    monkeypatch.setattr(sig, "forward", lambda x, training=False: np.ones_like(x))
    g.forward(np.random.default_rng(4).standard_normal((3, 13, 13, 12, 1)), training=False)
    branch = g.outputs["activation_6"]
    np.testing.assert_allclose(g.outputs["activation_7"], branch, atol=1e-12)
    np.testing.assert_allclose(g.outputs["add_2"], 2 * branch, atol=1e-6)


def test_stacked_sk_blocks():
    g = build(tiny_config(sk_blocks=2), seed=0)
    names = [l.name for l in g.layers]
    assert len(names) == len(set(names))
    assert "deformableconv_4" in names and "multiply_4" in names
    p = g.forward(np.zeros((2, 13, 13, 12, 1), np.float32), training=True)
    assert p.shape == (2, 3)


def test_full_graph_gradient():
    g = build(tiny_config(), seed=5, dtype=np.float64)
    randomize_offsets(g, seed=5)
    x = np.random.default_rng(5).standard_normal((2, 13, 13, 12, 1))
    [entry] = gradcheck_graph(g, x, np.array([2, 3]), trials=20, seed=5)
    assert entry.max_rel_error < 1e-3


def test_flops_convention(in_graph):
    macs = in_graph.flops_report().per_layer()
    assert macs["conv2d_1"] == 11 * 11 * 128 * 32 == 495616
    assert macs["dense_3"] == 2048
    assert macs["conv3d_1"] == 17 * 17 * 28 * 16 * 3 * 3 * 7
    text = in_graph.flops_report().format()
    assert text.startswith("# convolution MACs")


def test_checkpoint_round_trip(tmp_path):
    g = build(tiny_config(), seed=11)
    g.forward(np.random.default_rng(0).standard_normal((4, 13, 13, 12, 1)), training=True)
    path = tmp_path / "m.fskn"
    save_checkpoint(g, path)
    h = load_checkpoint(path)
    assert h.config == g.config and h.seed == 11
    for k, v in g.state_dict().items():
        assert h.state_dict()[k].tobytes() == v.tobytes()
    x = np.random.default_rng(1).standard_normal((2, 13, 13, 12, 1)).astype(np.float32)
    assert g.forward(x).tobytes() == h.forward(x).tobytes()
    save_checkpoint(h, tmp_path / "again.fskn")
    assert (tmp_path / "again.fskn").read_bytes() == path.read_bytes()


def test_checkpoint_corruption(tmp_path):
    g = build(tiny_config(), seed=0)
    path = tmp_path / "m.fskn"
    save_checkpoint(g, path)
    raw = path.read_bytes()
    (tmp_path / "short.fskn").write_bytes(raw[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "short.fskn")
    (tmp_path / "bad.fskn").write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.fskn")
