import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasediff import tensor as tc
from phasediff.tensor import ShapeError, Value, grad_check


def test_add_and_backward_through_sum():
    a = Value([1.0, 2.0], requires_grad=True)
    b = Value([3.0, 4.0], requires_grad=True)
    out = a + b
    assert out.data.tolist() == [4.0, 6.0]
    out.sum().backward()
    assert a.grad.tolist() == [1.0, 1.0]
    assert b.grad.tolist() == [1.0, 1.0]


def test_logsumexp_singleton():
    a = Value([0.0], requires_grad=True)
    out = tc.logsumexp(a, axis=0)
    assert out.item() == 0.0
    out.backward()
    assert a.grad.tolist() == [1.0]


def test_softmax_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    w = rng.normal(size=5)
    err = grad_check(lambda v: (tc.softmax(v, axis=0) * w).sum(), rng.normal(size=5), 1e-6)
    assert err < 1e-6


def test_quadratic_grad_check():
    assert grad_check(lambda v: (v * v).sum(), [1.0, 2.0, 3.0], 1e-6) < 1e-7


def test_grad_check_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        with np.errstate(over="ignore", invalid="ignore"):
            grad_check(lambda v: tc.exp(v * 1000.0).sum(), [1.0], 1e-6)


def test_grad_check_rejects_bad_step():
    with pytest.raises(ValueError):
        grad_check(lambda v: v.sum(), [1.0], 0.0)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
        Value([1.0, 2.0]) + Value([1.0, 2.0, 3.0])
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        Value(np.ones((2, 3))) @ Value(np.ones((2, 3)))


def test_log_of_nonpositive_raises():
    with pytest.raises(ValueError):
        tc.log(Value([1.0, 0.0]))
    with pytest.raises(ValueError):
        tc.log(Value([-1.0]))


def test_diamond_graph_accumulates():
    # y = x*x + 3x, x feeds both branches: dy/dx = 2x + 3
    x = Value(2.0, requires_grad=True)
    y = x * x + x * 3.0
    y.backward()
    assert x.grad == pytest.approx(7.0)


def test_shared_node_visited_once():
    x = Value([1.0, -2.0], requires_grad=True)
    h = tc.exp(x)
    y = (h * h + h).sum()
    y.backward()
    e = np.exp([1.0, -2.0])
    np.testing.assert_allclose(x.grad, 2 * e * e + e, rtol=1e-14)


def test_second_backward_is_rejected():
    x = Value([1.0], requires_grad=True)
    y = (x * x).sum()
    y.backward()
    with pytest.raises(RuntimeError):
        y.backward()
    assert x.grad.tolist() == [2.0]


def test_clamp_subgradient_pinned():
    x = Value([-1.0, 0.0, 0.5, 1.0, 2.0], requires_grad=True)
    tc.clamp(x, 0.0, 1.0).sum().backward()
    # zero outside, pass-through inside and on the boundary
    assert x.grad.tolist() == [0.0, 1.0, 1.0, 1.0, 0.0]


def test_grad_shape_matches_data_after_broadcast():
    a = Value(np.ones((3, 4)), requires_grad=True)
    b = Value(np.ones(4), requires_grad=True)
    (a * b).sum().backward()
    assert a.grad.shape == a.shape
    assert b.grad.shape == b.shape
    assert b.grad.tolist() == [3.0] * 4


def test_conv1d_locality_and_dilation():
    x = np.zeros((9, 1))
    x[4, 0] = 1.0
    w = np.ones((3, 1, 1))
    out = tc.conv1d(x, w, dilation=2).data[:, 0]
    assert out.tolist() == [0, 0, 1, 0, 1, 0, 1, 0, 0]


def test_window_logsumexp_empty_rows():
    a = Value([0.0, 1.0], requires_grad=True)
    mask = np.array([[True, True], [False, False]])
    out = tc.window_logsumexp(a, mask, empty=-5.0)
    assert out.data[1] == -5.0
    assert out.data[0] == pytest.approx(np.log(1 + np.e))
    out.sum().backward()
    np.testing.assert_allclose(a.grad, [1 / (1 + np.e), np.e / (1 + np.e)])


def test_getitem_fancy_index_accumulates():
    x = Value([1.0, 2.0, 3.0], requires_grad=True)
    x[np.array([0, 0, 2])].sum().backward()
    assert x.grad.tolist() == [2.0, 0.0, 1.0]


# Every primitive against central differences on random shapes and seeds.

def _unary(op):
    return lambda v: (op(v) * np.linspace(0.5, 1.5, v.shape[0])).sum()


PRIMITIVES = {
    "exp": (_unary(tc.exp), lambda r, n: r.normal(size=n)),
    "log": (_unary(tc.log), lambda r, n: r.uniform(0.5, 3.0, size=n)),
    "tanh": (_unary(tc.tanh), lambda r, n: r.normal(size=n)),
    "sigmoid": (_unary(tc.sigmoid), lambda r, n: r.normal(size=n)),
    "softplus": (_unary(tc.softplus), lambda r, n: r.normal(scale=3, size=n)),
    "neg": (_unary(tc.neg), lambda r, n: r.normal(size=n)),
    "mul": (lambda v: (v * v[::-1]).sum(), lambda r, n: r.normal(size=n)),
    "div": (lambda v: (v / (tc.exp(v) + 1.0)).sum(), lambda r, n: r.normal(size=n)),
    "sub": (lambda v: ((v - v[::-1]) * (v - 0.3)).sum(), lambda r, n: r.normal(size=n)),
    "maximum": (lambda v: (tc.maximum(v, 0.1) * v).sum(), lambda r, n: r.choice([-1, 1], size=n) * r.uniform(0.3, 2, size=n)),
    "clamp": (lambda v: (tc.clamp(v, -0.5, 0.5) * v).sum(), lambda r, n: r.choice([-1, 1], size=n) * r.uniform(0.7, 2, size=n) * r.choice([0.1, 1], size=n)),
    "logsumexp": (lambda v: tc.logsumexp(v.reshape(-1, 1) * v.reshape(1, -1), axis=1).sum(), lambda r, n: r.normal(size=n)),
    "softmax": (lambda v: (tc.softmax(v, axis=0) * tc.sigmoid(v)).sum(), lambda r, n: r.normal(size=n)),
    "mean": (lambda v: (v * v).mean(), lambda r, n: r.normal(size=n)),
    "concat": (lambda v: (tc.concat([v, v * v], axis=0) * tc.concat([v * v, v], axis=0)).sum(), lambda r, n: r.normal(size=n)),
    "matmul": (lambda v: (v.reshape(-1, 1) @ v.reshape(1, -1)).sum(), lambda r, n: r.normal(size=n)),
    "transpose": (lambda v: (v.reshape(1, -1).T * v.reshape(-1, 1)).sum(), lambda r, n: r.normal(size=n)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    fn, draw = PRIMITIVES[name]
    worst = 0.0
    for seed in range(100 // len(PRIMITIVES) + 6):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 7))
        worst = max(worst, grad_check(fn, draw(rng, n), 1e-6))
    assert worst < 1e-6


def test_conv1d_gradient():
    rng = np.random.default_rng(3)
    T, cin, cout = 7, 2, 3
    w_shape = (3, cin, cout)
    x0 = rng.normal(size=(T, cin))

    def f(v):
        x = v[: T * cin].reshape(T, cin)
        w = v[T * cin : T * cin + 18].reshape(*w_shape)
        b = v[T * cin + 18 :]
        return (tc.tanh(tc.conv1d(x, w, b, dilation=2))).sum()

    point = np.concatenate([x0.ravel(), rng.normal(size=18), rng.normal(size=cout)])
    assert grad_check(f, point, 1e-6) < 1e-6


def test_window_logsumexp_gradient():
    rng = np.random.default_rng(4)
    n = 6
    mask = rng.random((n, n)) < 0.5
    mask[0] = False
    assert grad_check(lambda v: tc.window_logsumexp(v, mask, empty=0.0).sum(), rng.normal(size=n), 1e-6) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_broadcast_add_mul_gradient(rows, cols, seed):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=cols)

    def f(v):
        a = v.reshape(rows, cols)
        return ((a + b) * (a * b)).sum()

    assert grad_check(f, rng.normal(size=rows * cols), 1e-6) < 1e-6
