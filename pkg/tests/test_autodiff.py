# Copyright (c) 2025 sprowii
import numpy as np
import pytest

from app.autodiff import (
    AdamState,
    ComputationRecord,
    Tensor,
    adam_step,
    add_row,
    concat,
    evaluate_with_gradient,
    finite_difference_gradient,
    mul_rows,
)
from app.autodiff.record import _OPS
from app.config import SELU_ALPHA, SELU_LAMBDA
from app.errors import GradientError, NonFiniteError, ShapeError


# ============================================================================
# Tensor
# ============================================================================

def test_tensor_is_read_only():
    t = Tensor([[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ValueError):
        t.values[0, 0] = 5.0


def test_tensor_copies_mutable_input():
    src = np.array([1.0, 2.0])
    t = Tensor(src)
    src[0] = 9.0
    assert t.values[0] == 1.0


def test_checked_tensor_rejects_nan():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan], checked=True)


def test_unchecked_tensor_accepts_inf():
    assert Tensor([np.inf], checked=False).shape == (1,)


def test_item_requires_single_value():
    assert Tensor([[2.5]]).item() == 2.5
    with pytest.raises(ShapeError):
        Tensor([1.0, 2.0]).item()


# ============================================================================
# градиенты
# ============================================================================

def test_composite_gradient_matches_finite_differences(rng):
    rec = ComputationRecord()
    x = rec.leaf(rng.normal(size=(3, 4)), "x")
    w = rec.leaf(rng.normal(size=(4, 2)) * 0.5, "w")
    b = rec.leaf(rng.normal(size=2), "b")
    y = add_row(x @ w, b).selu().tanh()
    col = rec.leaf(rng.uniform(0.5, 1.5, size=3), "col")
    z = mul_rows(concat([y, y.exp()], axis=1), col)
    loss = z.sumsq() + z.norm(axis=1).sum() - (y.offset(3.0).log()).sum().scale(0.3)

    value, grads = evaluate_with_gradient(rec, loss)
    assert value == pytest.approx(float(loss.value))
    for leaf in (x, w, b, col):
        numeric = finite_difference_gradient(rec, leaf, output=loss)
        np.testing.assert_allclose(grads[leaf].values, numeric.values, rtol=1e-5, atol=1e-7)


def test_division_and_take_gradients(rng):
    rec = ComputationRecord()
    a = rec.leaf(rng.uniform(1.0, 2.0, size=(2, 3)), "a")
    d = rec.leaf(rng.uniform(1.0, 2.0, size=(2, 3)), "d")
    q = (a / d).take([2, 0], axis=1).clamp_min(0.0).reshape(4)
    loss = (q * q).sum()
    _, grads = evaluate_with_gradient(rec, loss)
    for leaf in (a, d):
        np.testing.assert_allclose(grads[leaf].values, finite_difference_gradient(rec, leaf, output=loss).values,
                                   rtol=1e-5, atol=1e-8)


def test_norm_at_zero_has_zero_subgradient():
    rec = ComputationRecord()
    x = rec.leaf(np.zeros((2, 3)))
    loss = x.norm(axis=1).sum()
    _, grads = evaluate_with_gradient(rec, loss)
    np.testing.assert_array_equal(grads[x].values, np.zeros((2, 3)))


def test_constants_get_no_gradient():
    rec = ComputationRecord()
    x = rec.leaf(np.array([1.0, 2.0]))
    c = rec.constant(np.array([3.0, 4.0]))
    loss = (x * c).sum()
    grads = rec.backward(loss)
    assert set(grads) == {x.index}
    np.testing.assert_array_equal(grads[x.index], [3.0, 4.0])


def test_elementwise_shape_mismatch():
    rec = ComputationRecord()
    with pytest.raises(ShapeError):
        rec.leaf(np.ones(3)) + rec.leaf(np.ones(4))


def test_matmul_shape_mismatch():
    rec = ComputationRecord()
    with pytest.raises(ShapeError):
        rec.leaf(np.ones((2, 3))) @ rec.leaf(np.ones((2, 3)))


def test_backward_needs_scalar_output():
    rec = ComputationRecord()
    y = rec.leaf(np.ones(3)).exp()
    with pytest.raises(ShapeError):
        rec.backward(y)


def test_non_finite_partial_names_operation():
    rec = ComputationRecord()
    x = rec.leaf(np.array([0.0, 1.0]))
    loss = x.log().sum()
    with pytest.raises(GradientError) as err:
        rec.backward(loss)
    assert err.value.op_kind == "log"
    assert "log" in str(err.value)


def test_replay_overrides_leaf():
    rec = ComputationRecord()
    x = rec.leaf(np.array([1.0, 2.0]))
    loss = x.sumsq()
    assert float(rec.replay({x: np.array([3.0, 4.0])}, loss)) == 25.0
    # исходная запись не меняется
    assert float(loss.value) == 5.0


def test_replay_rejects_wrong_shape():
    rec = ComputationRecord()
    x = rec.leaf(np.array([1.0, 2.0]))
    x.sumsq()
    with pytest.raises(ShapeError):
        rec.replay({x: np.ones(3)})


# ============================================================================
# примитивы по отдельности
# ============================================================================

AXES = [None, 0, 1]


def _away_from(rng, point, size):
    """Значения не ближе 0.1 к точке излома."""
    return point + rng.choice([-1.0, 1.0], size=size) * rng.uniform(0.1, 1.5, size=size)


def _binary(op):
    def build(rec, rng, i):
        a = rec.leaf(rng.normal(size=(3, 4)), "a")
        b = rec.leaf(rng.normal(size=(3, 4)), "b")
        return op(a, b), [a, b]
    return build


def _unary(op, sample=lambda rng: rng.normal(size=(3, 4))):
    def build(rec, rng, i):
        x = rec.leaf(sample(rng), "x")
        return op(x, rng, i), [x]
    return build


def _div(rec, rng, i):
    a = rec.leaf(rng.normal(size=(3, 4)), "a")
    d = rec.leaf(rng.uniform(0.5, 2.0, size=(3, 4)), "d")
    return a / d, [a, d]


def _matmul(rec, rng, i):
    a = rec.leaf(rng.normal(size=(3, 4)), "a")
    b = rec.leaf(rng.normal(size=(4, 2) if i % 2 else (4,)), "b")
    return a @ b, [a, b]


def _concat(rec, rng, i):
    if i % 2:
        parts = [rec.leaf(rng.normal(size=(3, 2))), rec.leaf(rng.normal(size=(3, 3)))]
        return concat(parts, axis=1), parts
    parts = [rec.leaf(rng.normal(size=(2, 4))), rec.leaf(rng.normal(size=(3, 4)))]
    return concat(parts, axis=0), parts


def _add_row(rec, rng, i):
    a = rec.leaf(rng.normal(size=(3, 4)), "a")
    row = rec.leaf(rng.normal(size=4), "row")
    return add_row(a, row), [a, row]


def _mul_rows(rec, rng, i):
    a = rec.leaf(rng.normal(size=(3, 4)), "a")
    col = rec.leaf(rng.normal(size=3), "col")
    return mul_rows(a, col), [a, col]


BUILDERS = {
    "add": _binary(lambda a, b: a + b),
    "sub": _binary(lambda a, b: a - b),
    "mul": _binary(lambda a, b: a * b),
    "div": _div,
    "matmul": _matmul,
    "scale": _unary(lambda x, rng, i: x.scale(rng.uniform(-2.0, 2.0))),
    "offset": _unary(lambda x, rng, i: x.offset(rng.uniform(-2.0, 2.0))),
    "selu": _unary(lambda x, rng, i: x.selu(), lambda rng: _away_from(rng, 0.0, (3, 4))),
    "tanh": _unary(lambda x, rng, i: x.tanh()),
    "exp": _unary(lambda x, rng, i: x.exp()),
    "log": _unary(lambda x, rng, i: x.log(), lambda rng: rng.uniform(0.5, 3.0, size=(3, 4))),
    "sum": _unary(lambda x, rng, i: x.sum(axis=AXES[i % 3], keepdims=i % 2 == 0)),
    "sumsq": _unary(lambda x, rng, i: x.sumsq(axis=AXES[i % 3])),
    "norm": _unary(lambda x, rng, i: x.norm(axis=AXES[i % 3])),
    "take": _unary(lambda x, rng, i: x.take(rng.integers(0, 3 + i % 2, size=5).tolist(), axis=i % 2)),
    "reshape": _unary(lambda x, rng, i: x.reshape(2, 6) if i % 2 else x.reshape(12)),
    "clamp_min": _unary(lambda x, rng, i: x.clamp_min(0.3), lambda rng: _away_from(rng, 0.3, (3, 4))),
    "concat": _concat,
    "add_row": _add_row,
    "mul_rows": _mul_rows,
}


def test_every_primitive_has_a_gradient_check():
    assert set(BUILDERS) == set(_OPS)


@pytest.mark.parametrize("kind", sorted(_OPS))
def test_primitive_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(sorted(_OPS).index(kind))
    for i in range(100):
        rec = ComputationRecord()
        out, leaves = BUILDERS[kind](rec, rng, i)
        assert rec.name_of(out) == kind
        weights = rec.constant(np.asarray(rng.normal(size=out.shape)), "w")
        loss = (out * weights).sum()
        _, grads = evaluate_with_gradient(rec, loss)
        for leaf in leaves:
            numeric = finite_difference_gradient(rec, leaf, output=loss)
            np.testing.assert_allclose(grads[leaf].values, numeric.values, rtol=1e-4, atol=1e-6,
                                       err_msg=f"{kind}, экземпляр {i}")


def test_replay_is_bit_identical(rng):
    rec = ComputationRecord()
    x = rec.leaf(rng.normal(size=(4, 3)), "x")
    w = rec.leaf(rng.normal(size=(3, 2)), "w")
    loss = (x @ w).selu().tanh().exp().sumsq()
    np.testing.assert_array_equal(rec.replay(output=loss), loss.value)
    other = rng.normal(size=(3, 2))
    np.testing.assert_array_equal(rec.replay({w: other}, loss), rec.replay({w: other}, loss))


def test_gradient_is_linear_in_output(rng):
    rec = ComputationRecord()
    x = rec.leaf(rng.normal(size=5), "x")
    f = x.tanh().sumsq()
    g = x.exp().sum()
    both = f.scale(2.5) + g.scale(-0.7)
    expected = 2.5 * rec.backward(f)[x.index] - 0.7 * rec.backward(g)[x.index]
    np.testing.assert_allclose(rec.backward(both)[x.index], expected, rtol=1e-12, atol=1e-12)


def test_selu_gradient_on_both_branches():
    rec = ComputationRecord()
    x = rec.leaf(np.array([-1.0, 2.0]))
    _, grads = evaluate_with_gradient(rec, x.selu().sum())
    np.testing.assert_allclose(grads[x].values, [SELU_LAMBDA * SELU_ALPHA * np.exp(-1.0), SELU_LAMBDA], rtol=1e-12)


def test_square_gradient_at_three():
    rec = ComputationRecord()
    x = rec.leaf(np.array([3.0]))
    loss = (x * x).sum()
    _, grads = evaluate_with_gradient(rec, loss)
    assert grads[x].values[0] == 6.0
    assert abs(finite_difference_gradient(rec, x, output=loss).values[0] - 6.0) < 1e-8


def test_finite_differences_of_constant_output_are_zero():
    rec = ComputationRecord()
    x = rec.leaf(np.array([1.0, -2.0]))
    loss = rec.constant(np.array([3.0, 4.0])).sumsq()
    np.testing.assert_array_equal(finite_difference_gradient(rec, x, output=loss).values, [0.0, 0.0])


# ============================================================================
# Adam
# ============================================================================

def test_first_adam_step_moves_by_lr():
    params = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(params, {"w": np.array([0.5, -4.0])}, AdamState.zeros_like(params), lr=0.1, t=1)
    np.testing.assert_allclose(new["w"], [0.9, -1.9], atol=1e-6)
    np.testing.assert_allclose(state.m["w"], [0.05, -0.4])
    # входы не меняются
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_adam_per_row_lr_and_mask():
    params = {"h": np.ones((3, 2))}
    grads = {"h": np.ones((3, 2))}
    new, state = adam_step(params, grads, AdamState.zeros_like(params), lr=np.array([0.1, 0.2, 0.3]),
                           t=np.array([1, 1, 1]), mask=np.array([True, True, False]))
    np.testing.assert_allclose(new["h"][:, 0], [0.9, 0.8, 1.0], atol=1e-6)
    np.testing.assert_array_equal(state.m["h"][2], [0.0, 0.0])


def test_adam_rejects_bad_step_number():
    params = {"w": np.zeros(2)}
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.zeros(2)}, AdamState.zeros_like(params), lr=0.1, t=0)


def test_adam_rejects_mismatched_names():
    params = {"w": np.zeros(2)}
    with pytest.raises(ShapeError):
        adam_step(params, {"v": np.zeros(2)}, AdamState.zeros_like(params), lr=0.1)


def test_zero_gradient_keeps_parameters():
    params = {"w": np.array([0.3, -1.2])}
    new, _ = adam_step(params, {"w": np.zeros(2)}, AdamState.zeros_like(params), lr=0.1, t=1)
    np.testing.assert_array_equal(new["w"], params["w"])


def test_adam_minimises_square():
    params = {"x": np.array([1.0])}
    state = AdamState.zeros_like(params)
    for t in range(1, 101):
        params, state = adam_step(params, {"x": 2.0 * params["x"]}, state, lr=0.1, t=t)
    assert abs(params["x"][0]) < 0.05
