"""Multi-scale gated merge numerics."""

import math

import numpy as np
import pytest

from conftest import DATA_DIR
from oracles import naive_conv2d, naive_msgm_forward

from cs3d import (
    MsgmParams,
    conv2d_same,
    gate_weights,
    global_avg_pool,
    hidden_width,
    msgm_forward,
    read_tensors,
)


def test_conv2d_same_matches_loop_oracle():
    rng = np.random.default_rng(61)
    for k in (1, 3, 5):
        x = rng.normal(size=(3, 7, 6))
        kernel = rng.normal(size=(4, 3, k, k))
        bias = rng.normal(size=4)
        got = conv2d_same(x, kernel, bias)
        assert got.shape == (4, 7, 6)
        assert np.max(np.abs(got - naive_conv2d(x, kernel, bias))) < 1e-12


def test_conv2d_same_identity_kernel():
    rng = np.random.default_rng(62)
    x = rng.normal(size=(3, 5, 5))
    kernel = np.eye(3).reshape(3, 3, 1, 1)
    out = conv2d_same(x, kernel, np.zeros(3))
    assert np.array_equal(out, x)


def test_conv2d_same_validation():
    x = np.zeros((2, 4, 4))
    with pytest.raises(ValueError, match="odd"):
        conv2d_same(x, np.zeros((1, 2, 2, 2)), np.zeros(1))
    with pytest.raises(ValueError, match="channels"):
        conv2d_same(x, np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ValueError, match="bias"):
        conv2d_same(x, np.zeros((2, 2, 3, 3)), np.zeros(3))
    with pytest.raises(ValueError, match="finite"):
        conv2d_same(np.full((1, 2, 2), np.nan), np.zeros((1, 1, 1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        conv2d_same(np.zeros((4, 4)), np.zeros((1, 1, 1, 1)), np.zeros(1))


def test_global_avg_pool():
    rng = np.random.default_rng(63)
    x = rng.normal(size=(5, 3, 8))
    assert np.allclose(global_avg_pool(x), x.mean(axis=(1, 2)), atol=1e-15)


def test_hidden_width():
    assert hidden_width(1) == 4
    assert hidden_width(8) == 4
    assert hidden_width(9) == 5
    assert hidden_width(64) == 32
    with pytest.raises(ValueError):
        hidden_width(0)


def test_params_validation_and_roundtrip():
    params = MsgmParams.random(4, 3, seed=1)
    assert params.in_channels == 4 and params.out_channels == 3
    assert params.kernels[5].shape == (3, 4, 5, 5)
    assert params.w1.shape == (4, 4) and params.w2.shape == (3, 4)
    again = MsgmParams.from_tensors(params.to_tensors())
    for k in (1, 3, 5):
        assert np.array_equal(again.kernels[k], params.kernels[k])
    assert np.array_equal(again.w2, params.w2)
    names = set(params.to_tensors())
    assert names == {
        "conv1/kernel", "conv1/bias", "conv3/kernel", "conv3/bias",
        "conv5/kernel", "conv5/bias", "gate/w1", "gate/b1", "gate/w2", "gate/b2",
    }
    tensors = params.to_tensors()
    del tensors["gate/b2"]
    with pytest.raises(ValueError, match="gate/b2"):
        MsgmParams.from_tensors(tensors)
    bad = params.to_tensors()
    bad["conv3/kernel"] = np.zeros((3, 4, 3, 5))
    with pytest.raises(ValueError):
        MsgmParams.from_tensors(bad)
    with pytest.raises(ValueError, match="logit"):
        MsgmParams(
            kernels=params.kernels,
            biases=params.biases,
            w1=params.w1,
            b1=params.b1,
            w2=np.zeros((4, 4)),
            b2=np.zeros(4),
        )


def test_gate_weights_simplex():
    rng = np.random.default_rng(64)
    for trial in range(50):
        c = int(rng.integers(1, 7))
        params = MsgmParams.random(c, 2, seed=trial, scale=2.0)
        x = rng.normal(size=(c, 4, 5)) * 10.0
        w = gate_weights(x, params)
        assert w.shape == (3,)
        assert np.all(w >= 0.0)
        assert abs(w.sum() - 1.0) < 1e-12


def test_gate_weights_manual_oracle():
    params = MsgmParams.random(3, 2, seed=5)
    rng = np.random.default_rng(65)
    x = rng.normal(size=(3, 6, 4))
    pooled = x.mean(axis=(1, 2))
    hidden = np.maximum(params.w1 @ pooled + params.b1, 0.0)
    logits = params.w2 @ hidden + params.b2
    want = np.exp(logits - logits.max())
    want /= want.sum()
    assert np.max(np.abs(gate_weights(x, params) - want)) < 1e-15


def saturated_params(in_channels=3, out_channels=2, winner=0, seed=0):
    """Parameters whose gate is exactly one-hot for any input."""
    params = MsgmParams.random(in_channels, out_channels, seed=seed)
    b2 = np.full(3, -1e4)
    b2[winner] = 1e4
    return MsgmParams(
        kernels=params.kernels,
        biases=params.biases,
        w1=np.zeros_like(params.w1),
        b1=np.zeros_like(params.b1),
        w2=np.zeros_like(params.w2),
        b2=b2,
    )


def test_saturated_gate_is_exactly_one_hot():
    rng = np.random.default_rng(66)
    x = rng.normal(size=(3, 5, 5))
    for winner in range(3):
        w = gate_weights(x, saturated_params(winner=winner))
        expected = np.zeros(3)
        expected[winner] = 1.0
        assert np.array_equal(w, expected)


def test_saturated_forward_reproduces_branch_bitwise():
    rng = np.random.default_rng(67)
    x = rng.normal(size=(3, 6, 7))
    for winner, k in enumerate((1, 3, 5)):
        params = saturated_params(winner=winner, seed=winner)
        out = msgm_forward(x, params)
        branch = conv2d_same(x, params.kernels[k], params.biases[k])
        assert out.tobytes() == branch.tobytes()


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(68)
    for trial in range(5):
        c_in, c_out = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        params = MsgmParams.random(c_in, c_out, seed=100 + trial)
        x = rng.normal(size=(c_in, 6, 5))
        got = msgm_forward(x, params)
        want = naive_msgm_forward(x, params)
        assert got.shape == (c_out, 6, 5)
        assert np.max(np.abs(got - want)) < 1e-10


def test_forward_weights_interpolate_branches():
    params = MsgmParams.random(2, 2, seed=9)
    rng = np.random.default_rng(69)
    x = rng.normal(size=(2, 4, 4))
    w = gate_weights(x, params)
    branches = [conv2d_same(x, params.kernels[k], params.biases[k]) for k in (1, 3, 5)]
    manual = w[0] * branches[0] + w[1] * branches[1] + w[2] * branches[2]
    assert np.array_equal(msgm_forward(x, params), manual)
    lo = np.minimum(np.minimum(branches[0], branches[1]), branches[2])
    hi = np.maximum(np.maximum(branches[0], branches[1]), branches[2])
    out = msgm_forward(x, params)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_forward_rejects_bad_input():
    params = MsgmParams.random(3, 2, seed=11)
    with pytest.raises(ValueError, match="channels"):
        msgm_forward(np.zeros((2, 4, 4)), params)
    with pytest.raises(ValueError, match="finite"):
        msgm_forward(np.full((3, 4, 4), np.inf), params)


def test_golden_fixture_forward():
    features, _ = read_tensors(DATA_DIR / "msgm_features.cs3d")
    weights, _ = read_tensors(DATA_DIR / "msgm_params.cs3d")
    golden, meta = read_tensors(DATA_DIR / "msgm_golden.cs3d")
    params = MsgmParams.from_tensors(weights)
    out = msgm_forward(features["features"], params)
    assert out.shape == golden["output"].shape
    assert np.max(np.abs(out - golden["output"])) < 1e-10
    assert math.isclose(
        float(np.asarray(golden["gate"]).sum()), 1.0, abs_tol=1e-12
    )
    assert np.max(np.abs(gate_weights(features["features"], params) - golden["gate"])) < 1e-12
