import numpy as np
import pytest

from moorient import autodiff as ad
from moorient.autodiff import AdamState, MissingGradientError, ShapeError, Tensor


def finite_difference(build, params, eps=1e-4):
    return ad.grad_check(build, params, eps)


# ---------------------------------------------------------------------------
# per-primitive gradient checks on randomized shapes


def _rand_params(rng, **shapes):
    return {name: ad.parameter(rng.normal(scale=0.6, size=shape)) for name, shape in shapes.items()}


@pytest.mark.parametrize("seed", range(4))
def test_linear_and_matmul_gradients(seed):
    rng = np.random.default_rng(seed)
    m, k, n = rng.integers(1, 6, size=3)
    params = _rand_params(rng, x=(m, k), w=(k, n), b=(n,), u=(n, 2))

    def build(p):
        return ad.sum_all(ad.matmul(ad.linear(p["x"], p["w"], p["b"]), p["u"]))

    assert finite_difference(build, params) < 1e-6


@pytest.mark.parametrize("op", [ad.tanh, ad.sigmoid, ad.relu])
@pytest.mark.parametrize("seed", range(3))
def test_pointwise_gradients(op, seed):
    rng = np.random.default_rng(100 + seed)
    params = _rand_params(rng, x=(4, 3))

    def build(p):
        return ad.mean_all(op(p["x"]))

    assert finite_difference(build, params) < 1e-5


@pytest.mark.parametrize("axis", [0, 1])
@pytest.mark.parametrize("seed", range(3))
def test_softmax_and_log_softmax_gradients(axis, seed):
    rng = np.random.default_rng(200 + seed)
    params = _rand_params(rng, x=(5, 4), w=(5, 4))

    def build(p):
        s = ad.softmax(p["x"], axis=axis)
        l = ad.log_softmax(p["x"], axis=axis)
        return ad.sum_all(ad.add(ad.mul(s, p["w"]), ad.mul(l, p["w"])))

    assert finite_difference(build, params) < 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_elementwise_concat_transpose_gradients(seed):
    rng = np.random.default_rng(300 + seed)
    params = _rand_params(rng, a=(3, 2), b=(3, 2), c=(3, 4))

    def build(p):
        joined = ad.concat([ad.mul(p["a"], p["b"]), ad.sub(p["a"], p["b"]), p["c"]], axis=1)
        return ad.sum_all(ad.matmul(ad.transpose(joined), joined))

    assert finite_difference(build, params) < 1e-5


def test_masked_fill_pick_repeat_gradients():
    rng = np.random.default_rng(17)
    params = _rand_params(rng, x=(5, 1), h=(1, 4))
    mask = np.array([[False], [True], [False], [True], [False]])

    def build(p):
        rep = ad.repeat_rows(p["h"], 5)
        scores = ad.add(p["x"], ad.matmul(rep, ad.constant(np.ones((4, 1)))))
        logp = ad.log_softmax(ad.masked_fill(scores, mask), axis=0)
        return ad.pick(logp, (2, 0))

    assert finite_difference(build, params) < 1e-6


def test_squared_error_scale_take_row_gradients():
    rng = np.random.default_rng(23)
    params = _rand_params(rng, x=(4, 3), y=(1, 3))

    def build(p):
        row = ad.take_row(p["x"], 2)
        return ad.scale(ad.squared_error(row, p["y"]), 0.7)

    assert finite_difference(build, params) < 1e-6


def test_dropout_gradient_with_fixed_mask():
    rng = np.random.default_rng(29)
    params = _rand_params(rng, x=(6, 3))

    def build(p):
        drop_rng = np.random.default_rng(1234)  # same mask on every call
        return ad.sum_all(ad.dropout(ad.tanh(p["x"]), 0.4, drop_rng))

    assert finite_difference(build, params) < 1e-6


# ---------------------------------------------------------------------------
# forward semantics


def test_softmax_of_equal_logits_is_uniform():
    x = ad.constant(np.zeros((4, 1)))
    np.testing.assert_allclose(ad.softmax(x, axis=0).data, 0.25)


def test_masked_softmax_single_survivor_is_point_mass():
    x = ad.constant(np.zeros((4, 1)))
    mask = np.array([[True], [True], [False], [True]])
    p = ad.softmax(ad.masked_fill(x, mask), axis=0)
    np.testing.assert_array_equal(p.data.ravel(), [0.0, 0.0, 1.0, 0.0])


def test_pointwise_linear_identity():
    x = ad.constant(np.random.default_rng(0).normal(size=(7, 3)))
    w = ad.constant(np.eye(3))
    out = ad.linear(x, w)
    np.testing.assert_array_equal(out.data, x.data)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        ad.add(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((4, 2))))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((4, 2))))


# ---------------------------------------------------------------------------
# backward semantics


def test_backward_sum_gives_ones():
    w = ad.parameter(np.zeros(5))
    ad.backward(ad.sum_all(w))
    np.testing.assert_array_equal(w.grad, np.ones(5))


def test_backward_square_gives_2w():
    w = ad.parameter(np.array([1.0, 2.0, 3.0]))
    ad.backward(ad.sum_all(ad.mul(w, w)))
    np.testing.assert_allclose(w.grad, [2.0, 4.0, 6.0])


def test_backward_requires_scalar():
    w = ad.parameter(np.zeros((2, 2)))
    with pytest.raises(ShapeError, match="scalar"):
        ad.backward(ad.mul(w, w))


def test_backward_accumulates_across_calls():
    w = ad.parameter(np.array([1.0, 2.0]))
    ad.backward(ad.sum_all(w))
    ad.backward(ad.sum_all(w))
    np.testing.assert_array_equal(w.grad, [2.0, 2.0])


def test_fanout_sums_both_paths():
    # f(w) = w*w + 3w -> f'(2) = 2*2 + 3 = 7, hand-derived
    w = ad.parameter(np.array([2.0]))
    square = ad.mul(w, w)
    linear_part = ad.scale(w, 3.0)
    ad.backward(ad.sum_all(ad.add(square, linear_part)))
    np.testing.assert_allclose(w.grad, [7.0])


def test_constants_never_get_gradients():
    c = ad.constant(np.ones(3))
    w = ad.parameter(np.ones(3))
    ad.backward(ad.sum_all(ad.mul(c, w)))
    assert c.grad is None
    assert w.grad is not None


def test_no_grad_skips_graph():
    w = ad.parameter(np.ones(3))
    with ad.no_grad():
        out = ad.mul(w, w)
    assert out._backward is None and not out.requires_grad


def test_deep_chain_does_not_hit_recursion_limit():
    w = ad.parameter(np.array([[1.0]]))
    x = w
    for _ in range(5000):
        x = ad.scale(x, 1.0)
    ad.backward(ad.sum_all(x))
    np.testing.assert_allclose(w.grad, [[1.0]])


# ---------------------------------------------------------------------------
# dropout statistics


def test_dropout_rate_zero_is_identity():
    x = ad.constant(np.random.default_rng(0).normal(size=(4, 4)))
    out = ad.dropout(x, 0.0, np.random.default_rng(1))
    np.testing.assert_array_equal(out.data, x.data)


def test_dropout_inverted_scaling_preserves_mean():
    rng = np.random.default_rng(8)
    x = ad.constant(np.full((100_000, 1), 2.0))
    out = ad.dropout(x, 0.3, rng)
    assert abs(out.data.mean() - 2.0) / 2.0 < 0.01


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_is_noop():
    p = ad.parameter(np.array([1.0, -2.0]))
    p.grad = np.zeros(2)
    state = AdamState(lr=0.1)
    ad.adam_step({"p": p}, state)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert p.grad is None


def test_adam_first_step_is_signed_lr():
    p = ad.parameter(np.array([0.0, 0.0]))
    p.grad = np.array([0.5, -3.0])
    state = AdamState(lr=0.01)
    ad.adam_step({"p": p}, state)
    np.testing.assert_allclose(p.data, [-0.01, 0.01], rtol=1e-6)


def test_adam_missing_grad_errors():
    p = ad.parameter(np.zeros(2))
    with pytest.raises(MissingGradientError, match="'p'"):
        ad.adam_step({"p": p}, AdamState())


def test_adam_descends_quadratic_bowl():
    rng = np.random.default_rng(3)
    w = ad.parameter(rng.normal(size=(6,)))
    target = ad.constant(rng.normal(size=(6,)))
    state = AdamState(lr=0.05)
    losses = []
    for _ in range(100):
        loss = ad.squared_error(w, target)
        losses.append(loss.item())
        ad.backward(loss)
        ad.adam_step({"w": w}, state)
    assert losses[-1] < 0.05 * losses[0]
    # strictly decreasing after warmup
    tail = losses[10:]
    assert all(b < a for a, b in zip(tail, tail[1:]))


# ---------------------------------------------------------------------------
# grad_check itself


def test_grad_check_linear_network_tight():
    rng = np.random.default_rng(41)
    params = _rand_params(rng, w=(3, 4), b=(4,))
    x = rng.normal(size=(5, 3))

    def build(p):
        return ad.sum_all(ad.linear(ad.constant(x), p["w"], p["b"]))

    assert ad.grad_check(build, params) < 1e-6


def test_grad_check_tanh_softmax_network():
    rng = np.random.default_rng(43)
    params = _rand_params(rng, w1=(2, 6), b1=(6,), w2=(6, 3))
    x = rng.normal(size=(4, 2))

    def build(p):
        h = ad.tanh(ad.linear(ad.constant(x), p["w1"], p["b1"]))
        return ad.mean_all(ad.softmax(ad.matmul(h, p["w2"]), axis=1))

    assert ad.grad_check(build, params) < 1e-3


def test_grad_check_detects_corrupted_backward():
    # negative control: a node whose recorded backward rule is wrong by 2x
    rng = np.random.default_rng(47)
    params = _rand_params(rng, w=(3, 3))

    def build(p):
        w = p["w"]
        out = Tensor(w.data * w.data, requires_grad=True)
        out._parents = (w,)

        def bad_backward(g, grads):
            ad._accum(grads, w, g * w.data)  # should be 2 * w * g

        out._backward = bad_backward
        return ad.sum_all(out)

    assert ad.grad_check(build, params) > 1e-1
