import math

import numpy as np
import pytest

from icmvc import numkit as nk
from icmvc.errors import ConfigError, ContractError, ShapeError
from oracles import numeric_gradient, relative_error


def scalar(node):
    return float(node.value[0, 0])


# ---------------------------------------------------------------------------
# matmul


def test_matmul_identity():
    m = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    out = nk.matmul(nk.constant(np.eye(2)), nk.constant(m))
    np.testing.assert_array_equal(out.value, m)


def test_matmul_hand_example():
    out = nk.matmul(nk.constant([[1.0, 2.0], [3.0, 4.0]]), nk.constant([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.value, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        nk.matmul(nk.constant(np.ones((2, 3))), nk.constant(np.ones((2, 3))))


def test_matmul_gradient_vs_finite_differences():
    rng = np.random.default_rng(0)
    a = nk.leaf(rng.normal(size=(3, 4)))
    b = nk.leaf(rng.normal(size=(4, 2)))

    def forward():
        return scalar(nk.reduce(nk.matmul(a, b), "sum"))

    nk.backward(nk.reduce(nk.matmul(a, b), "sum"))
    for node in (a, b):
        numeric = numeric_gradient(forward, node.value)
        assert relative_error(node.grad, numeric) < 1e-6


# ---------------------------------------------------------------------------
# elementwise / unary / reduce forward values


def test_relu_sign_split():
    out = nk.unary(nk.constant([[1.0, -1.0]]), "relu")
    np.testing.assert_array_equal(out.value, [[1.0, 0.0]])


@pytest.mark.parametrize(
    "kind,a,b,expected",
    [
        ("add", [[1.0, 2.0]], [[3.0, 4.0]], [[4.0, 6.0]]),
        ("sub", [[1.0, 2.0]], [[3.0, 4.0]], [[-2.0, -2.0]]),
        ("mul", [[1.0, 2.0]], [[3.0, 4.0]], [[3.0, 8.0]]),
        ("div", [[8.0, 9.0]], [[2.0, 3.0]], [[4.0, 3.0]]),
    ],
)
def test_elementwise_values(kind, a, b, expected):
    out = nk.elementwise(nk.constant(a), nk.constant(b), kind)
    np.testing.assert_allclose(out.value, expected, rtol=0, atol=0)


def test_elementwise_broadcast_and_gradient():
    rng = np.random.default_rng(1)
    a = nk.leaf(rng.normal(size=(4, 3)))
    col = nk.leaf(rng.normal(size=(4, 1)))
    row = nk.leaf(rng.normal(size=(1, 3)))

    def forward():
        prod = nk.elementwise(nk.elementwise(a, col, "mul"), row, "add")
        return scalar(nk.reduce(nk.unary(prod, "square"), "sum"))

    root = nk.elementwise(nk.elementwise(a, col, "mul"), row, "add")
    nk.backward(nk.reduce(nk.unary(root, "square"), "sum"))
    for node in (a, col, row):
        numeric = numeric_gradient(forward, node.value)
        assert relative_error(node.grad, numeric) < 1e-6


def test_elementwise_incompatible_shapes():
    with pytest.raises(ShapeError):
        nk.elementwise(nk.constant(np.ones((2, 3))), nk.constant(np.ones((3, 2))), "add")


def test_reduce_kinds():
    m = nk.constant([[1.0, 2.0], [3.0, 4.0]])
    assert scalar(nk.reduce(m, "sum")) == 10.0
    assert scalar(nk.reduce(m, "mean")) == 2.5
    np.testing.assert_array_equal(nk.reduce(m, "row_sum").value, [[3.0], [7.0]])
    np.testing.assert_array_equal(nk.reduce(m, "col_sum").value, [[4.0, 6.0]])
    np.testing.assert_array_equal(nk.reduce(m, "row_max").value, [[2.0], [4.0]])


def test_row_softmax_symmetry():
    out = nk.row_softmax(nk.constant([[0.0, 0.0]]), 1.0)
    np.testing.assert_allclose(out.value, [[0.5, 0.5]], atol=1e-15)


def test_row_softmax_direct_value():
    out = nk.row_softmax(nk.constant([[1.0, 0.0]]), 1.0)
    e = math.e
    np.testing.assert_allclose(out.value, [[e / (e + 1), 1 / (e + 1)]], atol=1e-12)


def test_row_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    out = nk.row_softmax(nk.constant(rng.normal(size=(20, 7)) * 5), 0.7)
    np.testing.assert_allclose(out.value.sum(axis=1), np.ones(20), atol=1e-12)
    assert np.all(out.value > 0) and np.all(out.value < 1)


def test_row_softmax_bad_temperature():
    with pytest.raises(ConfigError):
        nk.row_softmax(nk.constant([[1.0, 2.0]]), 0.0)


def test_row_l2_normalize_unit_rows_and_zero_row():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(6, 4))
    data[2] = 0.0
    out = nk.row_l2_normalize(nk.constant(data))
    norms = np.linalg.norm(out.value, axis=1)
    np.testing.assert_allclose(np.delete(norms, 2), 1.0, atol=1e-12)
    np.testing.assert_array_equal(out.value[2], np.zeros(4))


def test_concat_slice_transpose_diag_gradients():
    rng = np.random.default_rng(4)
    a = nk.leaf(rng.normal(size=(3, 2)))
    b = nk.leaf(rng.normal(size=(3, 3)))

    def build():
        cat = nk.concat_cols([a, b])
        piece = nk.slice_cols(cat, 1, 4)
        sym = nk.matmul(piece, nk.transpose(piece))
        return nk.reduce(nk.unary(diag := nk.diag_col(sym), "square"), "sum")

    nk.backward(build())
    for node in (a, b):
        numeric = numeric_gradient(lambda: scalar(build()), node.value)
        assert relative_error(node.grad, numeric) < 1e-5


# ---------------------------------------------------------------------------
# backward


def test_backward_requires_scalar_root():
    with pytest.raises(ContractError):
        nk.backward(nk.constant(np.ones((2, 2))))


def test_backward_sum_gives_ones():
    w = nk.leaf(np.arange(6, dtype=float).reshape(2, 3))
    nk.backward(nk.reduce(w, "sum"))
    np.testing.assert_array_equal(w.grad, np.ones((2, 3)))


def test_backward_sum_of_squares_gives_2w():
    w = nk.leaf(np.arange(6, dtype=float).reshape(2, 3))
    nk.backward(nk.reduce(nk.unary(w, "square"), "sum"))
    np.testing.assert_allclose(w.grad, 2 * w.value, atol=0)


def test_backward_unreachable_node_has_zero_grad():
    w = nk.leaf(np.ones((2, 2)))
    other = nk.leaf(np.ones((2, 2)))
    nk.backward(nk.reduce(w, "sum"))
    np.testing.assert_array_equal(other.grad, np.zeros((2, 2)))


def test_backward_repeated_calls_idempotent():
    w = nk.leaf(np.array([[1.0, 2.0]]))
    root = nk.reduce(nk.unary(w, "square"), "sum")
    nk.backward(root)
    first = w.grad.copy()
    nk.backward(root)
    np.testing.assert_array_equal(w.grad, first)


def test_backward_additive_over_graph_reuse():
    rng = np.random.default_rng(5)
    data = rng.normal(size=(3, 3))

    shared = nk.leaf(data.copy())
    reused = nk.elementwise(nk.unary(shared, "square"), nk.unary(shared, "sigmoid"), "mul")
    nk.backward(nk.reduce(reused, "sum"))

    left = nk.leaf(data.copy())
    right = nk.leaf(data.copy())
    split = nk.elementwise(nk.unary(left, "square"), nk.unary(right, "sigmoid"), "mul")
    nk.backward(nk.reduce(split, "sum"))

    np.testing.assert_allclose(shared.grad, left.grad + right.grad, atol=1e-15)


def test_random_composition_gradients_match_finite_differences():
    # three stacked nonlinear layers exercised over 20 seeds
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = nk.constant(rng.normal(size=(4, 3)))
        w1 = nk.leaf(rng.normal(size=(3, 5)) * 0.7)
        w2 = nk.leaf(rng.normal(size=(5, 4)) * 0.7)
        w3 = nk.leaf(rng.normal(size=(4, 2)) * 0.7)

        def forward():
            h1 = nk.unary(nk.matmul(x, w1), "sigmoid")
            h2 = nk.unary(nk.matmul(h1, w2), "relu")
            h3 = nk.row_softmax(nk.matmul(h2, w3), 0.8)
            logp = nk.unary(h3, "log")
            return nk.reduce(nk.elementwise(logp, h3, "mul"), "sum")

        nk.backward(forward())
        for node in (w1, w2, w3):
            numeric = numeric_gradient(lambda: scalar(forward()), node.value)
            assert relative_error(node.grad, numeric) < 1e-4, f"seed {seed}"


def test_log_clamps_at_epsilon():
    out = nk.unary(nk.constant([[0.0]]), "log")
    assert out.value[0, 0] == math.log(nk.EPS)


def test_div_clamps_denominator():
    out = nk.elementwise(nk.constant([[1.0]]), nk.constant([[0.0]]), "div")
    assert np.isfinite(out.value[0, 0])


# ---------------------------------------------------------------------------
# Adam


def test_adam_rejects_nonpositive_lr():
    with pytest.raises(ConfigError):
        nk.AdamState([nk.leaf(np.ones((1, 1)))], lr=0.0)


def test_adam_zero_gradient_leaves_params_unchanged():
    p = nk.leaf(np.array([[1.0, -2.0]]))
    state = nk.AdamState([p], lr=0.1)
    nk.adam_step(state, grads=[np.zeros((1, 2))])
    np.testing.assert_array_equal(p.value, [[1.0, -2.0]])


def test_adam_moments_decay_under_zero_gradient():
    p = nk.leaf(np.array([[1.0, -2.0]]))
    state = nk.AdamState([p], lr=0.1)
    nk.adam_step(state, grads=[np.array([[1.0, 1.0]])])
    moment_before = state.first_moment[0].copy()
    nk.adam_step(state, grads=[np.zeros((1, 2))])
    np.testing.assert_allclose(state.first_moment[0], 0.9 * moment_before)


def test_adam_first_step_moves_by_lr():
    # w=1, loss w^2, gradient 2: the bias-corrected first step is about lr
    p = nk.leaf(np.array([[1.0]]))
    state = nk.AdamState([p], lr=0.001)
    nk.adam_step(state, grads=[np.array([[2.0]])])
    assert abs(p.value[0, 0] - 0.999) < 1e-9


def test_adam_converges_on_quadratic():
    p = nk.leaf(np.array([[0.0]]))
    state = nk.AdamState([p], lr=0.1)
    for _ in range(200):
        loss = nk.reduce(nk.unary(p - 3.0, "square"), "sum")
        nk.backward(loss)
        nk.adam_step(state)
    assert abs(p.value[0, 0] - 3.0) < 0.05


def test_adam_step_count_increments():
    p = nk.leaf(np.zeros((1, 1)))
    state = nk.AdamState([p])
    for expected in (1, 2, 3):
        nk.adam_step(state, grads=[np.ones((1, 1))])
        assert state.step_count == expected
