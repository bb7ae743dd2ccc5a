"""Forward semantics and hand-checked backward values for every layer kind."""

import numpy as np
import pytest

from gknet.activations import softmax
from gknet.errors import ConfigError, ShapeError, StateError
from gknet.layers import (
    AvgPool2D,
    Conv2D,
    Dense,
    DenseNetBlock,
    Dropout,
    Flatten,
    GlobalAvgPool,
    InceptionBlock,
    MaxPool2D,
    Network,
    ResidualBlock,
    SoftmaxHead,
    he_normal,
)
from gknet.seeding import seeded_rng
from gknet.tensor import conv2d_batch, pad2d


def test_dense_identity_weights_pass_through():
    layer = Dense(3, 3, "identity", rng=seeded_rng(71))
    layer.weights[:] = np.eye(3)
    layer.bias[:] = 0.0
    x = np.array([[1.0, -2.0, 0.5]])
    np.testing.assert_array_equal(layer.forward(x), x)


def test_dense_relu_hand_value():
    # [1, 2] @ [[1], [1]].T + 0.5 = 3.5, relu keeps it
    layer = Dense(2, 1, "relu", rng=seeded_rng(72))
    layer.weights[:] = [[1.0, 1.0]]
    layer.bias[:] = [0.5]
    out = layer.forward(np.array([[1.0, 2.0]]))
    assert out.shape == (1, 1)
    assert out[0, 0] == 3.5
    # negative pre-activation clamps to zero
    layer.bias[:] = [-4.0]
    assert layer.forward(np.array([[1.0, 2.0]]))[0, 0] == 0.0


def test_dense_backward_hand_values():
    # one linear neuron: w = 2, incoming activation 3, upstream delta 1
    # -> dW = delta * a = 3, propagated delta = delta * w = 2
    layer = Dense(1, 1, "identity", rng=seeded_rng(73))
    layer.weights[:] = [[2.0]]
    layer.bias[:] = [0.0]
    layer.forward(np.array([[3.0]]))
    dx = layer.backward(np.array([[1.0]]))
    assert layer.d_weights[0, 0] == 3.0
    assert layer.d_bias[0] == 1.0
    assert dx[0, 0] == 2.0


def test_dense_shape_validation_and_state():
    layer = Dense(3, 2, rng=seeded_rng(74))
    with pytest.raises(ShapeError):
        layer.forward(np.ones((1, 4)))
    with pytest.raises(StateError):
        Dense(3, 2, rng=seeded_rng(74)).backward(np.ones((1, 2)))
    with pytest.raises(StateError):
        Dense(3, 2, rng=seeded_rng(74)).grad_items()


def test_conv_identity_activation_matches_tensor_op():
    rng = seeded_rng(75)
    layer = Conv2D(2, 3, 3, stride=1, pad=1, activation="identity", rng=rng)
    x = rng.normal(size=(2, 2, 5, 5))
    want = conv2d_batch(pad2d(x, 1), layer.weights, 1, layer.bias)
    np.testing.assert_allclose(layer.forward(x), want, rtol=0, atol=1e-12)


def test_conv_relu_clamps_negative_responses():
    rng = seeded_rng(76)
    layer = Conv2D(1, 2, 3, activation="relu", rng=rng)
    out = layer.forward(rng.normal(size=(3, 1, 6, 6)))
    assert out.shape == (3, 2, 4, 4)
    assert np.all(out >= 0.0)


def test_conv_bias_is_per_filter():
    layer = Conv2D(1, 2, 1, activation="identity", rng=seeded_rng(77))
    layer.weights[:] = 0.0
    layer.bias[:] = [1.5, -2.0]
    out = layer.forward(np.zeros((1, 1, 3, 3)))
    np.testing.assert_array_equal(out[0, 0], np.full((3, 3), 1.5))
    np.testing.assert_array_equal(out[0, 1], np.full((3, 3), -2.0))


def test_conv_output_shape_formula():
    layer = Conv2D(3, 8, 7, stride=2, pad=3, rng=seeded_rng(78))
    assert layer.output_shape((3, 64, 64)) == (8, 32, 32)
    with pytest.raises(ShapeError):
        layer.output_shape((2, 64, 64))


def test_maxpool_backward_routes_to_maximum():
    layer = MaxPool2D(2, 2)
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    out = layer.forward(x)
    assert out[0, 0, 0, 0] == 4.0
    dx = layer.backward(np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(dx[0, 0], [[0.0, 0.0], [0.0, 1.0]])


def test_maxpool_tie_goes_to_first_cell():
    layer = MaxPool2D(2, 2)
    layer.forward(np.ones((1, 1, 2, 2)))
    dx = layer.backward(np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(dx[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_avgpool_backward_spreads_uniformly():
    layer = AvgPool2D(2, 2)
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    out = layer.forward(x)
    assert out[0, 0, 0, 0] == 2.5
    dx = layer.backward(np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(dx[0, 0], np.full((2, 2), 0.25))


def test_pool_padding_counts_zeros():
    # 1x1 input padded to 3x3, averaged over the full window
    layer = AvgPool2D(3, 1, pad=1)
    out = layer.forward(np.full((1, 1, 1, 1), 9.0))
    assert out.shape == (1, 1, 1, 1)
    assert out[0, 0, 0, 0] == 1.0


def test_overlapping_maxpool_accumulates():
    layer = MaxPool2D(2, 1)
    x = np.array([[[[1.0, 2.0, 1.0], [3.0, 9.0, 2.0], [0.0, 1.0, 0.0]]]])
    layer.forward(x)
    dx = layer.backward(np.ones((1, 1, 2, 2)))
    # the 9 wins all four windows
    assert dx[0, 0, 1, 1] == 4.0
    assert dx.sum() == 4.0


def test_global_avg_pool_values_and_backward():
    layer = GlobalAvgPool()
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]], [[5.0, 5.0], [5.0, 5.0]]]])
    out = layer.forward(x)
    np.testing.assert_array_equal(out, [[2.5, 5.0]])
    dx = layer.backward(np.array([[1.0, 2.0]]))
    np.testing.assert_array_equal(dx[0, 0], np.full((2, 2), 0.25))
    np.testing.assert_array_equal(dx[0, 1], np.full((2, 2), 0.5))


def test_flatten_round_trip():
    layer = Flatten()
    x = np.arange(24.0).reshape(2, 3, 2, 2)
    out = layer.forward(x)
    assert out.shape == (2, 12)
    np.testing.assert_array_equal(layer.backward(out), x)


def test_dropout_identity_cases():
    x = np.ones((4, 5))
    noop = Dropout(0.0)
    np.testing.assert_array_equal(noop.forward(x, training=True,
                                               rng=seeded_rng(79)), x)
    half = Dropout(0.5)
    np.testing.assert_array_equal(half.forward(x, training=False), x)


def test_dropout_rate_and_rng_validation():
    with pytest.raises(ConfigError):
        Dropout(1.0)
    with pytest.raises(ConfigError):
        Dropout(-0.1)
    with pytest.raises(ConfigError):
        Dropout(0.5).forward(np.ones((2, 2)), training=True)


def test_dropout_zeroed_fraction_and_scaling():
    x = np.ones((100, 100))
    layer = Dropout(0.5)
    out = layer.forward(x, training=True, rng=seeded_rng(80))
    zeroed = float((out == 0.0).mean())
    assert 0.47 <= zeroed <= 0.53
    survivors = out[out != 0.0]
    np.testing.assert_array_equal(survivors, np.full(survivors.shape, 2.0))


def test_dropout_backward_reuses_mask():
    layer = Dropout(0.3)
    x = np.ones((10, 10))
    out = layer.forward(x, training=True, rng=seeded_rng(81))
    dx = layer.backward(np.ones((10, 10)))
    np.testing.assert_array_equal(dx == 0.0, out == 0.0)
    np.testing.assert_array_equal(dx[dx != 0.0], out[out != 0.0])


def test_softmax_head_identity_weights_reproduce_softmax():
    layer = SoftmaxHead(3, 3, rng=seeded_rng(82))
    layer.weights[:] = np.eye(3)
    layer.bias[:] = 0.0
    x = np.array([[0.2, -1.0, 3.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(layer.forward(x), softmax(x), rtol=0, atol=1e-15)


def test_softmax_head_rows_sum_to_one():
    rng = seeded_rng(83)
    layer = SoftmaxHead(6, 4, rng=rng)
    out = layer.forward(rng.normal(size=(9, 6)))
    np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_inception_concatenates_in_branch_order():
    rng = seeded_rng(84)
    block = InceptionBlock(3, 2, 2, 4, 2, 3, 2, rng=rng)
    assert block.out_channels == 2 + 4 + 3 + 2
    x = rng.normal(size=(2, 3, 8, 8))
    out = block.forward(x)
    assert out.shape == (2, 11, 8, 8)
    # reproduce each branch with the block's own children
    b1 = block.conv1.forward(x)
    b3 = block.conv3.forward(block.conv3_reduce.forward(x))
    b5 = block.conv5.forward(block.conv5_reduce.forward(x))
    pooled = MaxPool2D(3, 1, pad=1).forward(x)
    pp = block.pool_proj.forward(pooled)
    want = np.concatenate([b1, b3, b5, pp], axis=1)
    np.testing.assert_allclose(out, want, rtol=0, atol=1e-12)


def test_inception_zero_weights_give_zero_output():
    block = InceptionBlock(2, 1, 1, 1, 1, 1, 1, rng=seeded_rng(85))
    for _, p in block.param_items():
        p[:] = 0.0
    out = block.forward(np.ones((1, 2, 6, 6)))
    np.testing.assert_array_equal(out, np.zeros_like(out))


def test_residual_zero_branch_is_relu_identity():
    block = ResidualBlock(2, rng=seeded_rng(86))
    for _, p in block.param_items():
        p[:] = 0.0
    x = np.array([[[[1.0, -2.0], [0.5, -0.5]], [[2.0, 2.0], [-1.0, 3.0]]]])
    out = block.forward(x)
    np.testing.assert_array_equal(out, np.maximum(x, 0.0))


def test_residual_preserves_shape():
    rng = seeded_rng(87)
    block = ResidualBlock(4, rng=rng)
    x = rng.normal(size=(3, 4, 7, 7))
    out = block.forward(x)
    assert out.shape == x.shape
    assert np.all(out >= 0.0)


def test_denseblock_zero_reps_is_identity():
    block = DenseNetBlock(3, 0, 6, rng=seeded_rng(88))
    assert block.out_channels == 3
    x = seeded_rng(89).normal(size=(2, 3, 5, 5))
    np.testing.assert_array_equal(block.forward(x), x)
    np.testing.assert_array_equal(block.backward(x), x)


def test_denseblock_channel_growth_and_prefix():
    rng = seeded_rng(90)
    block = DenseNetBlock(3, 2, 4, rng=rng)
    assert block.out_channels == 3 + 2 * 4
    x = rng.normal(size=(2, 3, 6, 6))
    out = block.forward(x)
    assert out.shape == (2, 11, 6, 6)
    # the input rides along unchanged as the leading channels
    np.testing.assert_array_equal(out[:, :3], x)


def test_denseblock_matches_unrolled_composition():
    rng = seeded_rng(91)
    block = DenseNetBlock(2, 2, 3, rng=rng)
    x = rng.normal(size=(1, 2, 5, 5))
    out = block.forward(x)
    feats = x
    for squeeze, grow in block.reps:
        y = grow.forward(squeeze.forward(feats))
        feats = np.concatenate([feats, y], axis=1)
    np.testing.assert_allclose(out, feats, rtol=0, atol=1e-12)


def test_he_normal_scale():
    rng = seeded_rng(92)
    w = he_normal(rng, (400, 128), 128)
    want = np.sqrt(2.0 / 128)
    assert abs(w.std() - want) / want < 0.2


def test_network_requires_terminal_softmax():
    rng = seeded_rng(93)
    with pytest.raises(ConfigError):
        Network([Dense(3, 3, rng=rng)], (3,), seed=0)
    head = SoftmaxHead(3, 2, rng=rng)
    with pytest.raises(ConfigError):
        Network([head, Dense(2, 2, rng=rng)], (3,), seed=0)


def test_network_forward_backward_and_param_names():
    rng = seeded_rng(94)
    net = Network([Dense(4, 3, "relu", rng=rng), SoftmaxHead(3, 2, rng=rng)],
                  (4,), seed=0)
    x = rng.normal(size=(5, 4))
    out = net.forward(x)
    assert out.shape == (5, 2)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    names = [name for name, _ in net.param_items()]
    assert names == ["0.dense.W", "0.dense.b", "1.softmax.W", "1.softmax.b"]
    with pytest.raises(ShapeError):
        net.forward(np.ones((2, 5)))
    with pytest.raises(ConfigError):
        net.backward()
    with pytest.raises(ConfigError):
        net.backward(output_grad=np.ones((5, 2)), logits_grad=np.ones((5, 2)))


def test_network_weight_round_trip():
    rng = seeded_rng(95)
    net = Network([Dense(3, 3, rng=rng), SoftmaxHead(3, 2, rng=rng)], (3,), seed=0)
    saved = net.get_weights()
    for _, p in net.param_items():
        p += 1.0
    net.set_weights(saved)
    for (_, p), s in zip(net.param_items(), saved):
        np.testing.assert_array_equal(p, s)
    with pytest.raises(ShapeError):
        net.set_weights(saved[:-1])
    with pytest.raises(ShapeError):
        net.set_weights([np.zeros((1, 1)) for _ in saved])
