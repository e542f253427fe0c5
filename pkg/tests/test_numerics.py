import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegaug.numerics import (
    Activation,
    AdamState,
    ShapeError,
    Tape,
    Tensor,
    activation,
    adam_step,
    bce_logits,
    concat,
    conv2d,
    conv2d_transpose,
    dense,
    load_checkpoint,
    maxpool2d,
    reshape,
    save_checkpoint,
    softmax_cross_entropy,
    sum_all,
)
from gradcheck import check

SEEDS = range(20)


def conv_oracle(x, w, b, stride, padding):
    """Quadruple loop over output positions, straight from the definition."""
    bsz, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    xp = np.zeros((bsz, c, h + 2 * ph, wd + 2 * pw))
    xp[:, :, ph : ph + h, pw : pw + wd] = x
    ho, wo = (h + 2 * ph - kh) // sh + 1, (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((bsz, o, ho, wo))
    for n, k, i, j in itertools.product(range(bsz), range(o), range(ho), range(wo)):
        patch = xp[n, :, i * sh : i * sh + kh, j * sw : j * sw + kw]
        out[n, k, i, j] = np.sum(patch * w[k]) + b[k]
    return out


# --- conv2d -----------------------------------------------------------------


def test_conv2d_ones():
    out = conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 2, 2)), np.zeros(1))
    assert out.shape == (1, 1, 2, 2)
    np.testing.assert_array_equal(out.data, 4.0)


def test_conv2d_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 1, 4, 5))
    out = conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(out.data, x)


def test_conv2d_bias_only():
    out = conv2d(np.random.default_rng(1).normal(size=(2, 2, 4, 4)), np.zeros((3, 2, 2, 2)), np.full(3, 0.7))
    np.testing.assert_array_equal(out.data, 0.7)


@pytest.mark.parametrize("seed", range(10))
def test_conv2d_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    stride = tuple(rng.integers(1, 3, size=2))
    padding = tuple(rng.integers(0, 2, size=2))
    x = rng.normal(size=(2, 3, 6, 7))
    w = rng.normal(size=(4, 3, 3, 2))
    b = rng.normal(size=4)
    out = conv2d(x, w, b, stride, padding)
    np.testing.assert_allclose(out.data, conv_oracle(x, w, b, stride, padding), atol=1e-12)


def test_conv2d_shape_errors():
    with pytest.raises(ShapeError, match="channel"):
        conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 2, 2)), np.zeros(1))
    with pytest.raises(ShapeError, match="does not fit"):
        conv2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)), np.zeros(1))


# --- conv2d_transpose -------------------------------------------------------


def test_conv2d_transpose_stride2_unit_kernel():
    out = conv2d_transpose(np.full((1, 1, 1, 1), 3.5), np.ones((1, 1, 2, 2)), np.zeros(1), stride=2)
    assert out.shape == (1, 1, 2, 2)
    np.testing.assert_array_equal(out.data, 3.5)


def test_conv2d_transpose_zero_input_is_bias():
    out = conv2d_transpose(np.zeros((2, 3, 2, 3)), np.ones((3, 2, 3, 3)), np.array([0.25, -1.0]), stride=(1, 2))
    np.testing.assert_array_equal(out.data[:, 0], 0.25)
    np.testing.assert_array_equal(out.data[:, 1], -1.0)


def test_conv2d_transpose_inverts_size_formula():
    x = np.zeros((1, 4, 9, 64))
    w = np.zeros((8, 4, 3, 4))
    y = conv2d(x, w, np.zeros(8), stride=(1, 2), padding=(1, 1))
    back = conv2d_transpose(y, w, np.zeros(4), stride=(1, 2), padding=(1, 1))
    assert back.shape == x.shape


@settings(max_examples=50, deadline=None)
@given(
    bsz=st.integers(1, 2),
    cin=st.integers(1, 3),
    cout=st.integers(1, 3),
    h=st.integers(3, 8),
    w=st.integers(3, 8),
    kh=st.integers(1, 3),
    kw=st.integers(1, 3),
    sh=st.integers(1, 3),
    sw=st.integers(1, 3),
    ph=st.integers(0, 1),
    pw=st.integers(0, 1),
    seed=st.integers(0, 2**31),
)
def test_adjoint_identity(bsz, cin, cout, h, w, kh, kw, sh, sw, ph, pw, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(bsz, cin, h, w))
    k = rng.normal(size=(cout, cin, kh, kw))
    y_shape = conv2d(x, k, np.zeros(cout), (sh, sw), (ph, pw)).shape
    y = rng.normal(size=y_shape)
    # the transpose must land back on x's grid; output_padding absorbs floor() in the size formula
    opad = (
        h - ((y_shape[2] - 1) * sh - 2 * ph + kh),
        w - ((y_shape[3] - 1) * sw - 2 * pw + kw),
    )
    lhs = np.sum(conv2d(x, k, np.zeros(cout), (sh, sw), (ph, pw)).data * y)
    rhs = np.sum(x * conv2d_transpose(y, k, np.zeros(cin), (sh, sw), (ph, pw), opad).data)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


# --- dense / activations ----------------------------------------------------


def test_dense_examples():
    x = np.random.default_rng(0).normal(size=(3, 4))
    np.testing.assert_array_equal(dense(x, np.eye(4), np.zeros(4)).data, x)
    np.testing.assert_array_equal(
        dense([[1.0, 2.0]], [[1.0, 1.0], [0.0, 1.0]], [0.5, 0.0]).data, [[3.5, 2.0]]
    )
    np.testing.assert_array_equal(dense(np.zeros((5, 2)), np.ones((3, 2)), [1.0, 2.0, 3.0]).data, [[1, 2, 3]] * 5)


def test_activation_examples():
    np.testing.assert_array_equal(activation([-1.0, 0.0, 2.0], Activation.RELU).data, [0, 0, 2])
    assert activation([0.0], Activation.SIGMOID).item() == 0.5
    assert activation([-5.0], Activation.LEAKY_RELU, alpha=0.2).item() == pytest.approx(-1.0)
    assert activation([0.3], Activation.TANH).item() == pytest.approx(np.tanh(0.3))


def test_sigmoid_is_finite_at_extremes():
    out = activation([-1e4, 1e4], Activation.SIGMOID).data
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out, [0.0, 1.0])


def test_maxpool_ties_go_to_first():
    x = Tensor(np.ones((1, 1, 2, 2)))
    with Tape() as tape:
        tape.watch({"x": x})
        loss = sum_all(maxpool2d(x, 2))
    g = tape.backward(loss)["x"]
    np.testing.assert_array_equal(g[0, 0], [[1, 0], [0, 0]])


# --- losses -----------------------------------------------------------------


def test_bce_examples():
    assert bce_logits([0.0], [1]).item() == pytest.approx(np.log(2), abs=1e-15)
    v = bce_logits([40.0], [1]).item()
    assert 0 <= v < 1e-15
    assert np.isfinite(bce_logits([-1e5, 1e5], [1, 0]).item())


def _bce_mp(logits, targets):
    with mpmath.workdps(50):
        total = mpmath.mpf(0)
        for l, t in zip(logits, targets):
            s = 1 / (1 + mpmath.exp(-mpmath.mpf(l)))
            total += -(t * mpmath.log(s) + (1 - t) * mpmath.log(1 - s))
        return float(total / len(logits))


def test_bce_matches_extended_precision():
    rng = np.random.default_rng(3)
    logits = rng.normal(scale=5, size=16)
    targets = rng.integers(0, 2, size=16)
    assert bce_logits(logits, targets).item() == pytest.approx(_bce_mp(logits, targets), rel=1e-12)


def _softmax_ce_mp(logits, labels):
    with mpmath.workdps(50):
        total = mpmath.mpf(0)
        for row, y in zip(logits, labels):
            lse = mpmath.log(sum(mpmath.exp(mpmath.mpf(v)) for v in row))
            total += lse - mpmath.mpf(row[y])
        return float(total / len(labels))


def test_softmax_ce_examples():
    assert softmax_cross_entropy(np.zeros((3, 2)), [0, 1, 0]).item() == pytest.approx(np.log(2))
    assert softmax_cross_entropy([[10.0, -10.0]], [0]).item() == pytest.approx(0.0, abs=1e-8)
    rng = np.random.default_rng(7)
    z = rng.normal(scale=3, size=(4, 3))
    y = [0, 2, 1, 2]
    assert softmax_cross_entropy(z, y).item() == pytest.approx(_softmax_ce_mp(z, y), abs=1e-12)
    with pytest.raises(ValueError, match="labels"):
        softmax_cross_entropy(z, [0, 1, 2, 3])


# --- backward ---------------------------------------------------------------


def test_backward_sum_gives_ones():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    with Tape() as tape:
        tape.watch({"x": x})
        loss = sum_all(x)
    np.testing.assert_array_equal(tape.backward(loss)["x"], np.ones((3, 4)))


def test_unused_parameter_has_zero_gradient():
    x, unused = Tensor(np.ones(3)), Tensor(np.ones((2, 2)))
    with Tape() as tape:
        tape.watch({"x": x, "unused": unused})
        loss = sum_all(x)
    np.testing.assert_array_equal(tape.backward(loss)["unused"], np.zeros((2, 2)))


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3))
    with Tape() as tape:
        tape.watch({"x": x})
        y = reshape(x, (3,))
    with pytest.raises(ValueError, match="scalar"):
        tape.backward(y)


def test_reused_tensor_accumulates():
    x = Tensor(np.array([1.0, 2.0]))
    with Tape() as tape:
        tape.watch({"x": x})
        loss = sum_all(concat([x, x], axis=0))
    np.testing.assert_array_equal(tape.backward(loss)["x"], [2.0, 2.0])


# --- finite differences, >= 20 random cases per primitive ------------------

TOL = 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_fd_conv2d(seed):
    rng = np.random.default_rng(seed)
    stride, pad = tuple(rng.integers(1, 3, 2)), tuple(rng.integers(0, 2, 2))
    arrays = [rng.normal(size=(2, 2, 5, 6)), rng.normal(size=(3, 2, 2, 3)), rng.normal(size=3)]
    assert check(lambda x, w, b: conv2d(x, w, b, stride, pad), arrays) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_fd_conv2d_transpose(seed):
    rng = np.random.default_rng(seed)
    stride, pad = tuple(rng.integers(1, 3, 2)), tuple(rng.integers(0, 2, 2))
    arrays = [rng.normal(size=(2, 3, 3, 4)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=2)]
    assert check(lambda x, w, b: conv2d_transpose(x, w, b, stride, pad), arrays) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_fd_dense(seed):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=(4, 5)), rng.normal(size=(3, 5)), rng.normal(size=3)]
    assert check(dense, arrays) < TOL


def _away_from_kink(rng, shape):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < 1e-2, 0.5, x)


@pytest.mark.parametrize("kind", list(Activation))
@pytest.mark.parametrize("seed", SEEDS)
def test_fd_activation(kind, seed):
    rng = np.random.default_rng(seed)
    assert check(lambda x: activation(x, kind), [_away_from_kink(rng, (3, 4))]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_fd_maxpool(seed):
    rng = np.random.default_rng(seed)
    assert check(lambda x: maxpool2d(x, (1, 2)), [rng.normal(size=(2, 2, 3, 6))]) < TOL
    assert check(lambda x: maxpool2d(x, 2), [rng.normal(size=(1, 2, 4, 5))]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_fd_bce_logits(seed):
    rng = np.random.default_rng(seed)
    targets = rng.integers(0, 2, size=8)
    assert check(lambda l: bce_logits(l, targets), [rng.normal(scale=3, size=8)]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_fd_softmax_cross_entropy(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=5)
    assert check(lambda z: softmax_cross_entropy(z, labels), [rng.normal(scale=2, size=(5, 3))]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_fd_composite_network(seed):
    rng = np.random.default_rng(seed)

    def net(x, w1, b1, w2, b2):
        h = activation(conv2d(x, w1, b1, (1, 2), (1, 1)), Activation.LEAKY_RELU)
        h = reshape(h, (2, -1))
        return bce_logits(dense(h, w2, b2), [1, 0])

    arrays = [
        rng.normal(size=(2, 2, 3, 4)),
        rng.normal(size=(2, 2, 3, 3)),
        rng.normal(size=2),
        rng.normal(size=(1, 12)),
        rng.normal(size=1),
    ]
    assert check(net, arrays) < TOL


# --- Adam -------------------------------------------------------------------


def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(p, {"w": np.zeros(2)}, AdamState(lr=0.1))
    np.testing.assert_array_equal(new["w"], p["w"])
    assert state.step == 1


def test_adam_first_step_moves_lr_against_gradient():
    new, _ = adam_step({"p": np.array([0.0])}, {"p": np.array([1.0])}, AdamState(lr=0.1))
    assert new["p"][0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_converges_on_quadratic():
    params, state = {"p": np.array([5.0])}, AdamState(lr=0.05)
    for _ in range(500):
        params, state = adam_step(params, {"p": 2 * params["p"]}, state)
    assert abs(params["p"][0]) < 0.1


def test_adam_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        adam_step({"p": np.zeros(2)}, {"p": np.zeros(3)}, AdamState())


# --- checkpoint -------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"g.dense.w": rng.normal(size=(3, 4)), "b": rng.normal(size=2), "scalar": np.array(1.5)}
    save_checkpoint(params, tmp_path / "m.ckpt")
    loaded = load_checkpoint(tmp_path / "m.ckpt")
    assert list(loaded) == list(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])
    assert (tmp_path / "m.ckpt").read_bytes()[:4] == b"CKPT"


def test_determinism_bit_identical():
    rng = np.random.default_rng(5)
    x, w, b = rng.normal(size=(2, 3, 5, 5)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
    a = conv2d(x, w, b, 2, 1).data
    c = conv2d(x, w, b, 2, 1).data
    assert a.tobytes() == c.tobytes()
