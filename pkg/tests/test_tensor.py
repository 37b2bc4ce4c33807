import math

import numpy as np
import pytest

from app.application.use_cases.gradient_check_use_case import GradientCheckUseCase
from app.domain.exceptions import ContractViolationError
from app.infrastructure.tensor import (
    AdamState,
    AttentionWeights,
    Tensor,
    adam_step,
    backward,
    grad_check,
    no_grad,
)
from app.infrastructure.tensor import ops


def _attention_weights(rng, d=2, d_ctx=2, d_k=2):
    return AttentionWeights(
        query=Tensor(rng.standard_normal((d, d_k))),
        key=Tensor(rng.standard_normal((d_ctx, d_k))),
        value=Tensor(rng.standard_normal((d_ctx, d))),
        output=Tensor(rng.standard_normal((d, d))),
    )


# conv2d

def test_conv2d_identity_kernel_returns_input():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 5, 5)))
    kernel = np.zeros((3, 3, 1, 1))
    for c in range(3):
        kernel[c, c, 0, 0] = 1.0
    out = ops.conv2d(x, Tensor(kernel), Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, x.data)


def test_conv2d_all_ones_kernel_on_constant_input():
    x = Tensor(np.full((1, 1, 4, 4), 2.0))
    out = ops.conv2d(x, Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)), stride=1, pad=1).data[0, 0]
    assert out[1, 1] == pytest.approx(18.0)
    assert out[2, 2] == pytest.approx(18.0)
    assert out[0, 0] == pytest.approx(8.0)
    assert out[3, 3] == pytest.approx(8.0)
    assert out[0, 1] == pytest.approx(12.0)


def test_conv2d_stride_two_output_shape():
    out = ops.conv2d(Tensor(np.zeros((1, 3, 32, 32))), Tensor(np.zeros((8, 3, 3, 3))), stride=2, pad=1)
    assert out.shape == (1, 8, 16, 16)


def test_conv2d_channel_mismatch_rejected():
    with pytest.raises(ContractViolationError):
        ops.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


# cross-attention

def test_cross_attention_single_token_gets_full_weight():
    rng = np.random.default_rng(1)
    _, attention = ops.cross_attention(
        Tensor(rng.standard_normal((3, 2))), Tensor(rng.standard_normal((1, 2))), _attention_weights(rng),
        return_weights=True,
    )
    np.testing.assert_array_equal(attention.data, np.ones((3, 1)))


def test_cross_attention_identical_tokens_split_evenly():
    rng = np.random.default_rng(2)
    context = Tensor(np.array([[0.3, -1.2], [0.3, -1.2]]))
    _, attention = ops.cross_attention(Tensor(rng.standard_normal((4, 2))), context, _attention_weights(rng),
                                       return_weights=True)
    np.testing.assert_allclose(attention.data, 0.5, atol=1e-15)


def test_cross_attention_matches_straight_line_arithmetic():
    rng = np.random.default_rng(3)
    features = rng.standard_normal((2, 2))
    context = rng.standard_normal((2, 2))
    weights = _attention_weights(rng)
    out = ops.cross_attention(Tensor(features), Tensor(context), weights).data

    q = features @ weights.query.data
    k = context @ weights.key.data
    v = context @ weights.value.data
    scores = q @ k.T / math.sqrt(q.shape[1])
    probs = np.exp(scores - scores.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    expected = features + probs @ v @ weights.output.data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_cross_attention_rows_sum_to_one():
    rng = np.random.default_rng(4)
    weights = _attention_weights(rng, d=4, d_ctx=5, d_k=3)
    _, attention = ops.cross_attention(
        Tensor(rng.standard_normal((2, 6, 4))), Tensor(rng.standard_normal((2, 3, 5))), weights, return_weights=True
    )
    np.testing.assert_allclose(attention.data.sum(axis=-1), 1.0, atol=1e-12)


def test_cross_attention_without_context_rejected():
    rng = np.random.default_rng(5)
    with pytest.raises(ContractViolationError):
        ops.cross_attention(Tensor(rng.standard_normal((3, 2))), Tensor(np.zeros((0, 2))), _attention_weights(rng))


# FiLM

def test_film_identity_zero_and_affine_cases():
    features = Tensor(np.random.default_rng(6).standard_normal((2, 3, 2, 2)))
    identity = ops.film(features, Tensor(np.ones(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(identity.data, features.data)

    beta = np.array([0.5, -1.0, 2.0])
    constant = ops.film(features, Tensor(np.zeros(3)), Tensor(beta))
    np.testing.assert_array_equal(constant.data, np.broadcast_to(beta[None, :, None, None], features.shape))

    single = ops.film(Tensor(np.full((1, 1, 1, 1), 0.75)), Tensor(np.array([2.0])), Tensor(np.array([-1.0])))
    assert single.item() == pytest.approx(0.5)


# backward

def test_backward_of_sum_is_all_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    backward(ops.sum(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_of_sum_of_squares():
    x = Tensor(np.array([[3.0, -1.0]]), requires_grad=True)
    backward(ops.sum(ops.mul(x, x)))
    assert x.grad[0, 0] == pytest.approx(6.0)
    assert x.grad[0, 1] == pytest.approx(-2.0)


def test_backward_rejects_non_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractViolationError):
        backward(ops.mul(x, x))


def test_unreachable_leaf_gets_zero_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones(2), requires_grad=True)
    grads = backward(ops.sum(x), [x, unused])
    np.testing.assert_array_equal(grads[1], np.zeros(2))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        out = ops.mul(x, x)
    assert not out.requires_grad
    assert out.is_leaf


# grad_check

def test_grad_check_sum_of_squares():
    assert grad_check(lambda x: ops.sum(ops.mul(x, x)), [1.0, 2.0]) < 1e-9


def test_grad_check_constant_function():
    assert grad_check(lambda x: ops.sum(ops.mul(x, 0.0)), [1.0, 2.0]) == 0.0


def test_grad_check_rejects_zero_eps():
    with pytest.raises(ContractViolationError):
        grad_check(lambda x: ops.sum(x), [1.0], eps=0.0)


def test_grad_check_rejects_non_finite_values():
    with pytest.raises(ContractViolationError):
        grad_check(lambda x: ops.sum(ops.div(x, 0.0)), [1.0])


@pytest.mark.parametrize("seed", range(5))
def test_every_primitive_passes_gradient_check(seed):
    errors = GradientCheckUseCase(seed=seed).check_primitives()
    failing = {name: error for name, error in errors.items() if error >= 1e-4}
    assert not failing


# adam_step

def test_adam_zero_gradient_leaves_params_unchanged():
    params = np.array([1.0, -2.0])
    new, state = adam_step(params, np.zeros(2), AdamState.zeros_like(params, learning_rate=0.1))
    np.testing.assert_array_equal(new, params)
    assert state.step_count == 1


def test_adam_first_step_moves_by_learning_rate():
    params = np.array([0.5])
    new, _ = adam_step(params, np.ones(1), AdamState.zeros_like(params, learning_rate=0.1, epsilon=1e-12))
    np.testing.assert_allclose(new, [0.4], atol=1e-9)


def test_adam_decoupled_weight_decay():
    params = np.array([2.0, -4.0])
    state = AdamState.zeros_like(params, learning_rate=0.1, weight_decay=0.01)
    new, _ = adam_step(params, np.zeros(2), state)
    np.testing.assert_allclose(new, params * 0.999)


def test_adam_shape_mismatch_rejected():
    params = np.zeros(3)
    with pytest.raises(ContractViolationError):
        adam_step(params, np.zeros(2), AdamState.zeros_like(params))
